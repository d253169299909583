import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import {
  bcmg_close,
  bcmg_last_error,
  bcmg_open,
  bcmg_potri,
  bcmg_potrs,
  bcmg_syevd,
} from "../src/api";
import { runCli } from "../src/cli";
import {
  BCMG_ERR_CONFIG,
  BCMG_ERR_NOT_POSITIVE_DEFINITE,
  BCMG_ERR_STALE_SESSION,
  BCMG_OK,
  BcmgError,
} from "../src/errors";
import { Dtype, encodeMatrix, HostMatrix, makeMatrix, scalarIndex } from "../src/matfile";

function diagMatrix(values: readonly number[], dtype: Dtype = "f64"): HostMatrix {
  const n = values.length;
  const m = makeMatrix(n, n, dtype);
  for (let i = 0; i < n; i++) {
    m.data[scalarIndex(m, i, i)] = values[i]!;
  }
  return m;
}

function onesMatrix(rows: number, cols: number, dtype: Dtype = "f64"): HostMatrix {
  const m = makeMatrix(rows, cols, dtype);
  const stride = dtype === "c64" || dtype === "c128" ? 2 : 1;
  for (let i = 0; i < m.data.length; i += stride) {
    m.data[i] = 1;
  }
  return m;
}

function maxAbsDiff(a: ArrayLike<number>, b: ArrayLike<number>): number {
  let worst = 0;
  for (let i = 0; i < a.length; i++) {
    worst = Math.max(worst, Math.abs(a[i]! - b[i]!));
  }
  return worst;
}

let session: number;
const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "bcmg-api-"));

beforeAll(() => {
  session = bcmg_open();
});
afterAll(() => {
  bcmg_close(session);
  fs.rmSync(tmp, { recursive: true, force: true });
});

describe("bcmg_potrs", () => {
  // acceptance: binding result equals the CLI verify result bit-exactly
  it("matches the verify path byte-for-byte on diag(1..64)", () => {
    const refPath = path.join(tmp, "ref-x.bcmg");
    const res = runCli([
      "verify", "--routine", "potrs", "--n", "64", "--tile", "8",
      "--devices", "2", "--dtype", "f64", "--matrix", "diag",
      "--result-out", refPath,
    ]);
    expect(res.status).toBe(0);

    const values = Array.from({ length: 64 }, (_, i) => i + 1);
    const x = bcmg_potrs(session, diagMatrix(values), onesMatrix(64, 1), 8, 2);
    expect(encodeMatrix(x).equals(fs.readFileSync(refPath))).toBe(true);
    expect(bcmg_last_error()).toBe(BCMG_OK);
  });

  it("solves the reciprocal family: diag(1..8), ones -> 1/i", () => {
    const x = bcmg_potrs(session, diagMatrix([1, 2, 3, 4, 5, 6, 7, 8]), onesMatrix(8, 1), 2, 2);
    const expected = Array.from({ length: 8 }, (_, i) => 1 / (i + 1));
    expect(maxAbsDiff(x.data, expected)).toBeLessThanOrEqual(1e-15);
  });

  it("returns b unchanged for the identity matrix", () => {
    const b = makeMatrix(6, 2, "f64");
    for (let i = 0; i < b.data.length; i++) {
      b.data[i] = i * 0.75 - 3;
    }
    const x = bcmg_potrs(session, diagMatrix([1, 1, 1, 1, 1, 1]), b, 3, 2);
    expect(Array.from(x.data)).toEqual(Array.from(b.data));
  });

  // acceptance: non-positive-definite input raises with the pivot preserved
  it("raises pivot 2 for diag(1,-1)", () => {
    let caught: unknown;
    try {
      bcmg_potrs(session, diagMatrix([1, -1]), onesMatrix(2, 1), 1, 2);
    } catch (err) {
      caught = err;
    }
    expect(caught).toBeInstanceOf(BcmgError);
    const e = caught as BcmgError;
    expect(e.code).toBe(BCMG_ERR_NOT_POSITIVE_DEFINITE);
    expect(e.pivot).toBe(2);
    expect(bcmg_last_error()).toBe(BCMG_ERR_NOT_POSITIVE_DEFINITE);
  });

  it("rejects a dtype-mismatched right-hand side", () => {
    expect(() =>
      bcmg_potrs(session, diagMatrix([2, 3], "f64"), onesMatrix(2, 1, "f32"), 1, 1),
    ).toThrow(BcmgError);
    expect(bcmg_last_error()).toBe(BCMG_ERR_CONFIG);
  });

  it("maps backend configuration errors: tile wider than n", () => {
    expect(() =>
      bcmg_potrs(session, diagMatrix([2, 3]), onesMatrix(2, 1), 16, 1),
    ).toThrow(BcmgError);
    expect(bcmg_last_error()).toBe(BCMG_ERR_CONFIG);
  });
});

describe("bcmg_potri", () => {
  it("inverts diag(2,4) to diag(0.5,0.25)", () => {
    const inv = bcmg_potri(session, diagMatrix([2, 4]), 1, 2);
    const want = [0.5, 0, 0, 0.25];
    expect(maxAbsDiff(inv.data, want)).toBeLessThanOrEqual(1e-15);
  });

  it("raises pivot 2 for an indefinite input", () => {
    expect(() => bcmg_potri(session, diagMatrix([1, -1]), 1, 1)).toThrow(/pivot=2/);
    expect(bcmg_last_error()).toBe(BCMG_ERR_NOT_POSITIVE_DEFINITE);
  });
});

describe("bcmg_syevd", () => {
  it("sorts diag(3,1,2) eigenvalues to (1,2,3)", () => {
    const { eigenvalues, eigenvectors } = bcmg_syevd(session, diagMatrix([3, 1, 2]), 1, 2);
    expect([eigenvalues.rows, eigenvalues.cols]).toEqual([3, 1]);
    expect([eigenvectors.rows, eigenvectors.cols]).toEqual([3, 3]);
    expect(maxAbsDiff(eigenvalues.data, [1, 2, 3])).toBeLessThanOrEqual(1e-12);
  });

  it("finds (1,3) for the hand 2x2 [[2,1],[1,2]]", () => {
    const a = makeMatrix(2, 2, "f64");
    a.data.set([2, 1, 1, 2]);
    const { eigenvalues } = bcmg_syevd(session, a, 1, 1);
    expect(maxAbsDiff(eigenvalues.data, [1, 3])).toBeLessThanOrEqual(1e-12);
  });

  it("keeps complex eigenvectors in the matrix dtype", () => {
    const a = makeMatrix(2, 2, "c128");
    // [[2, i], [-i, 2]]: eigenvalues 1 and 3
    a.data.set([2, 0, 0, -1, 0, 1, 2, 0]);
    const { eigenvalues, eigenvectors } = bcmg_syevd(session, a, 1, 1);
    expect(eigenvalues.dtype).toBe("f64");
    expect(eigenvectors.dtype).toBe("c128");
    expect(maxAbsDiff(eigenvalues.data, [1, 3])).toBeLessThanOrEqual(1e-12);
  });
});

describe("sessions", () => {
  it("produces bit-identical results in spmd and mpmd sessions", () => {
    const a = diagMatrix([4, 9, 16, 25, 36, 49, 64, 81]);
    const spmd = bcmg_open("spmd");
    const mpmd = bcmg_open("mpmd");
    try {
      const xs = bcmg_potrs(spmd, a, onesMatrix(8, 1), 2, 2);
      const xm = bcmg_potrs(mpmd, a, onesMatrix(8, 1), 2, 2);
      expect(encodeMatrix(xs).equals(encodeMatrix(xm))).toBe(true);
      const ws = bcmg_syevd(spmd, a, 2, 2);
      const wm = bcmg_syevd(mpmd, a, 2, 2);
      expect(encodeMatrix(ws.eigenvectors).equals(encodeMatrix(wm.eigenvectors))).toBe(true);
    } finally {
      bcmg_close(spmd);
      bcmg_close(mpmd);
    }
  });

  it("fails operations on a closed handle", () => {
    const h = bcmg_open();
    bcmg_close(h);
    expect(() => bcmg_potri(h, diagMatrix([2]), 1, 1)).toThrow(BcmgError);
    expect(bcmg_last_error()).toBe(BCMG_ERR_STALE_SESSION);
    expect(() => bcmg_close(h)).toThrow(BcmgError);
  });

  it("rejects an unknown mode", () => {
    expect(() => bcmg_open("simd" as never)).toThrow(BcmgError);
    expect(bcmg_last_error()).toBe(BCMG_ERR_CONFIG);
  });
});
