/**
 * C-style function table over the bcmg backend.
 *
 * Exported symbols: bcmg_open, bcmg_close, bcmg_potrs, bcmg_potri,
 * bcmg_syevd, bcmg_last_error. A session is an opaque positive integer
 * binding a coordination mode and a scratch directory; it stays valid
 * until bcmg_close. Failures throw BcmgError and also set the code
 * returned by bcmg_last_error (errors.ts is the code registry).
 *
 * Matrices are column-major host arrays (HostMatrix); every call
 * round-trips them through the backend's matrix file format, so results
 * are byte-identical to what the CLI itself writes.
 */

import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { classifyFailure, runCli } from "./cli";
import { BCMG_ERR_CONFIG, BCMG_ERR_STALE_SESSION, BCMG_OK, BcmgError } from "./errors";
import { decodeMatrix, encodeMatrix, HostMatrix } from "./matfile";

export type Mode = "spmd" | "mpmd";

interface Session {
  dir: string;
  mode?: Mode;
  calls: number;
}

const sessions = new Map<number, Session>();
let nextHandle = 1;
let lastError = BCMG_OK;

export function bcmg_last_error(): number {
  return lastError;
}

function fail(err: BcmgError): never {
  lastError = err.code;
  throw err;
}

export function bcmg_open(mode?: Mode): number {
  if (mode !== undefined && mode !== "spmd" && mode !== "mpmd") {
    fail(new BcmgError(BCMG_ERR_CONFIG, `unknown mode ${String(mode)}`));
  }
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "bcmg-"));
  const handle = nextHandle++;
  sessions.set(handle, { dir, mode, calls: 0 });
  lastError = BCMG_OK;
  return handle;
}

export function bcmg_close(handle: number): void {
  const session = sessions.get(handle);
  if (!session) {
    fail(new BcmgError(BCMG_ERR_STALE_SESSION, `no open session ${handle}`));
  }
  sessions.delete(handle);
  fs.rmSync(session.dir, { recursive: true, force: true });
  lastError = BCMG_OK;
}

function liveSession(handle: number): Session {
  const session = sessions.get(handle);
  if (!session) {
    fail(new BcmgError(BCMG_ERR_STALE_SESSION, `no open session ${handle}`));
  }
  return session;
}

function checkSquare(a: HostMatrix): void {
  if (a.rows !== a.cols || a.rows === 0) {
    fail(new BcmgError(BCMG_ERR_CONFIG, `matrix must be square, got ${a.rows}x${a.cols}`));
  }
}

function checkGrid(tileWidth: number, deviceCount: number): void {
  if (!Number.isInteger(tileWidth) || tileWidth < 1) {
    fail(new BcmgError(BCMG_ERR_CONFIG, `tile width must be a positive integer, got ${tileWidth}`));
  }
  if (!Number.isInteger(deviceCount) || deviceCount < 1) {
    fail(new BcmgError(BCMG_ERR_CONFIG, `device count must be a positive integer, got ${deviceCount}`));
  }
}

interface VerifyCall {
  routine: "potrs" | "potri" | "syevd";
  a: HostMatrix;
  b?: HostMatrix;
  tileWidth: number;
  deviceCount: number;
  wantEigenvalues?: boolean;
}

function verify(session: Session, call: VerifyCall): { result: HostMatrix; eigenvalues?: HostMatrix } {
  const stem = path.join(session.dir, `c${session.calls++}`);
  const aPath = `${stem}-a.bcmg`;
  const outPath = `${stem}-out.bcmg`;
  fs.writeFileSync(aPath, encodeMatrix(call.a));

  const args = [
    "verify",
    "--routine", call.routine,
    "--tile", String(call.tileWidth),
    "--devices", String(call.deviceCount),
    "--matrix", `file:${aPath}`,
    "--result-out", outPath,
  ];
  if (call.b) {
    const bPath = `${stem}-b.bcmg`;
    fs.writeFileSync(bPath, encodeMatrix(call.b));
    args.push("--rhs", bPath);
  }
  const wPath = `${stem}-w.bcmg`;
  if (call.wantEigenvalues) {
    args.push("--eigenvalues-out", wPath);
  }
  if (session.mode) {
    args.push("--mode", session.mode);
  }

  const res = runCli(args);
  if (res.status !== 0) {
    fail(classifyFailure(res));
  }
  lastError = BCMG_OK;
  const result = decodeMatrix(fs.readFileSync(outPath));
  if (!call.wantEigenvalues) {
    return { result };
  }
  return { result, eigenvalues: decodeMatrix(fs.readFileSync(wPath)) };
}

/** Solve A x = b for positive-definite A; x has b's shape. */
export function bcmg_potrs(
  handle: number,
  a: HostMatrix,
  b: HostMatrix,
  tileWidth: number,
  deviceCount: number,
): HostMatrix {
  const session = liveSession(handle);
  checkSquare(a);
  checkGrid(tileWidth, deviceCount);
  if (b.rows !== a.rows || b.cols < 1) {
    fail(new BcmgError(BCMG_ERR_CONFIG, `rhs shape ${b.rows}x${b.cols} does not match n=${a.rows}`));
  }
  if (b.dtype !== a.dtype) {
    fail(new BcmgError(BCMG_ERR_CONFIG, `rhs dtype ${b.dtype} does not match matrix dtype ${a.dtype}`));
  }
  return verify(session, { routine: "potrs", a, b, tileWidth, deviceCount }).result;
}

/** Inverse of a positive-definite matrix. */
export function bcmg_potri(
  handle: number,
  a: HostMatrix,
  tileWidth: number,
  deviceCount: number,
): HostMatrix {
  const session = liveSession(handle);
  checkSquare(a);
  checkGrid(tileWidth, deviceCount);
  return verify(session, { routine: "potri", a, tileWidth, deviceCount }).result;
}

/** Eigendecomposition of a symmetric/Hermitian matrix, eigenvalues ascending. */
export function bcmg_syevd(
  handle: number,
  a: HostMatrix,
  tileWidth: number,
  deviceCount: number,
): { eigenvalues: HostMatrix; eigenvectors: HostMatrix } {
  const session = liveSession(handle);
  checkSquare(a);
  checkGrid(tileWidth, deviceCount);
  const out = verify(session, {
    routine: "syevd", a, tileWidth, deviceCount, wantEigenvalues: true,
  });
  // verify() always returns eigenvalues when asked; narrow for the caller
  if (!out.eigenvalues) {
    fail(new BcmgError(BCMG_ERR_CONFIG, "backend returned no eigenvalues"));
  }
  return { eigenvalues: out.eigenvalues, eigenvectors: out.result };
}
