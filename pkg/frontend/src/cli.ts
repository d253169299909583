/**
 * Subprocess bridge to the bcmg CLI.
 *
 * The backend is consumed strictly through its public surface: the
 * `verify`/`gen` subcommands and matrix files. `BCMG_PYTHON` overrides
 * the interpreter (default `python3`; the bcmg package must be
 * importable by it).
 */

import { spawnSync } from "node:child_process";

import {
  BCMG_ERR_CHECK_FAILED,
  BCMG_ERR_CONFIG,
  BCMG_ERR_IO,
  BCMG_ERR_NO_CONVERGENCE,
  BCMG_ERR_NOT_POSITIVE_DEFINITE,
  BCMG_ERR_OUT_OF_MEMORY,
  BcmgError,
} from "./errors";

export interface CliResult {
  status: number;
  stdout: string;
  stderr: string;
}

export function runCli(args: readonly string[]): CliResult {
  const python = process.env.BCMG_PYTHON ?? "python3";
  const proc = spawnSync(python, ["-m", "bcmg", ...args], {
    encoding: "utf8",
    maxBuffer: 1 << 28,
  });
  if (proc.error) {
    throw new BcmgError(BCMG_ERR_IO, `failed to launch ${python}: ${proc.error.message}`);
  }
  return { status: proc.status ?? -1, stdout: proc.stdout, stderr: proc.stderr };
}

const PIVOT_RE = /not positive definite: pivot=(\d+)/;

/** Map a non-zero CLI exit to the error-code contract in errors.ts. */
export function classifyFailure(res: CliResult): BcmgError {
  const tail = res.stderr.trim();
  if (res.status === 2) {
    return new BcmgError(BCMG_ERR_CONFIG, tail || "configuration error");
  }
  const pivot = PIVOT_RE.exec(tail);
  if (pivot) {
    return new BcmgError(BCMG_ERR_NOT_POSITIVE_DEFINITE, tail, Number(pivot[1]));
  }
  if (tail.includes("did not converge")) {
    return new BcmgError(BCMG_ERR_NO_CONVERGENCE, tail);
  }
  if (tail.includes("out of device memory")) {
    return new BcmgError(BCMG_ERR_OUT_OF_MEMORY, tail);
  }
  if (tail.startsWith("failed:")) {
    return new BcmgError(BCMG_ERR_CHECK_FAILED, tail);
  }
  return new BcmgError(BCMG_ERR_IO, tail || `bcmg exited with status ${res.status}`);
}
