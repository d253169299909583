import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterAll, describe, expect, it } from "vitest";

import { runCli } from "../src/cli";
import { BcmgError } from "../src/errors";
import {
  bytesPerElement,
  decodeMatrix,
  Dtype,
  encodeMatrix,
  makeMatrix,
  scalarIndex,
  scalarsPerElement,
} from "../src/matfile";

const ALL_DTYPES: Dtype[] = ["f32", "f64", "c64", "c128"];

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "bcmg-matfile-"));
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }));

describe("codec", () => {
  it("lays out the header as documented", () => {
    const m = makeMatrix(3, 2, "f64");
    m.data[scalarIndex(m, 2, 1)] = 1.5;
    const buf = encodeMatrix(m);
    expect(buf.toString("ascii", 0, 4)).toBe("BCMG");
    expect(buf.readUInt8(4)).toBe(1);
    expect([buf.readUInt8(5), buf.readUInt8(6), buf.readUInt8(7)]).toEqual([0, 0, 0]);
    expect(buf.readUInt32LE(8)).toBe(3);
    expect(buf.readUInt32LE(12)).toBe(2);
    expect(buf.length).toBe(16 + 3 * 2 * 8);
    // column-major: (2,1) is the last element
    expect(buf.readDoubleLE(16 + 5 * 8)).toBe(1.5);
  });

  it.each(ALL_DTYPES)("round-trips %s in memory", (dtype) => {
    const m = makeMatrix(4, 3, dtype);
    for (let i = 0; i < m.data.length; i++) {
      m.data[i] = (i - 5) / 3;
    }
    const back = decodeMatrix(encodeMatrix(m));
    expect(back.rows).toBe(4);
    expect(back.cols).toBe(3);
    expect(back.dtype).toBe(dtype);
    expect(Array.from(back.data)).toEqual(Array.from(m.data));
  });

  it("knows element widths", () => {
    expect(ALL_DTYPES.map(bytesPerElement)).toEqual([4, 8, 8, 16]);
    expect(ALL_DTYPES.map(scalarsPerElement)).toEqual([1, 1, 2, 2]);
  });

  it("rejects foreign magic", () => {
    const buf = encodeMatrix(makeMatrix(2, 2, "f32"));
    buf.write("NOPE", 0, "ascii");
    expect(() => decodeMatrix(buf)).toThrow(BcmgError);
  });

  it("rejects truncated payloads", () => {
    const buf = encodeMatrix(makeMatrix(2, 2, "f64"));
    expect(() => decodeMatrix(buf.subarray(0, buf.length - 1))).toThrow(/truncated/);
  });
});

describe("boundary round trip", () => {
  // acceptance: all four element types cross the boundary bit-exactly
  it.each(ALL_DTYPES)("gen %s file decodes and re-encodes byte-identically", (dtype) => {
    const file = path.join(tmp, `spd-${dtype}.bcmg`);
    const res = runCli([
      "gen", "--kind", "random_spd", "--n", "12", "--dtype", dtype,
      "--seed", "5", "--out", file,
    ]);
    expect(res.status).toBe(0);

    const original = fs.readFileSync(file);
    const m = decodeMatrix(original);
    expect([m.rows, m.cols, m.dtype]).toEqual([12, 12, dtype]);
    expect(encodeMatrix(m).equals(original)).toBe(true);
  });
});
