/**
 * Codec for the bcmg matrix file format.
 *
 * 16-byte little-endian header, then the raw column-major payload:
 *
 *   offset 0  4 bytes  magic "BCMG"
 *   offset 4  1 byte   dtype code (0=f32, 1=f64, 2=c64, 3=c128)
 *   offset 5  3 bytes  zero padding
 *   offset 8  4 bytes  u32 rows
 *   offset 12 4 bytes  u32 cols
 *
 * Complex elements are interleaved (re, im) pairs. Host arrays mirror
 * that: a c128 matrix is a Float64Array of length rows*cols*2.
 */

import * as os from "node:os";

import { BCMG_ERR_IO, BcmgError } from "./errors";

export type Dtype = "f32" | "f64" | "c64" | "c128";

export interface HostMatrix {
  rows: number;
  cols: number;
  dtype: Dtype;
  /** Column-major scalars; complex dtypes interleave re,im. */
  data: Float32Array | Float64Array;
}

const MAGIC = "BCMG";
const HEADER_BYTES = 16;

const DTYPE_CODE: Record<Dtype, number> = { f32: 0, f64: 1, c64: 2, c128: 3 };
const CODE_DTYPE: Dtype[] = ["f32", "f64", "c64", "c128"];

/** re,im pairs for complex, one scalar otherwise. */
export function scalarsPerElement(dtype: Dtype): number {
  return dtype === "c64" || dtype === "c128" ? 2 : 1;
}

export function bytesPerElement(dtype: Dtype): number {
  const scalar = dtype === "f32" || dtype === "c64" ? 4 : 8;
  return scalar * scalarsPerElement(dtype);
}

function arrayFor(dtype: Dtype, scalars: number): Float32Array | Float64Array {
  return dtype === "f32" || dtype === "c64"
    ? new Float32Array(scalars)
    : new Float64Array(scalars);
}

// The payload is memcpy'd, so the host byte order must match the
// little-endian file format.
if (os.endianness() !== "LE") {
  throw new Error("bcmg matrix codec requires a little-endian host");
}

export function makeMatrix(rows: number, cols: number, dtype: Dtype): HostMatrix {
  return { rows, cols, dtype, data: arrayFor(dtype, rows * cols * scalarsPerElement(dtype)) };
}

/** Column-major index of the (row, col) element's first scalar. */
export function scalarIndex(m: HostMatrix, row: number, col: number): number {
  return (col * m.rows + row) * scalarsPerElement(m.dtype);
}

export function encodeMatrix(m: HostMatrix): Buffer {
  const want = m.rows * m.cols * scalarsPerElement(m.dtype);
  if (m.data.length !== want) {
    throw new BcmgError(
      BCMG_ERR_IO,
      `matrix data has ${m.data.length} scalars, expected ${want}`,
    );
  }
  const header = Buffer.alloc(HEADER_BYTES);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt8(DTYPE_CODE[m.dtype], 4);
  header.writeUInt32LE(m.rows, 8);
  header.writeUInt32LE(m.cols, 12);
  const payload = Buffer.from(m.data.buffer, m.data.byteOffset, m.data.byteLength);
  return Buffer.concat([header, payload]);
}

export function decodeMatrix(buf: Buffer): HostMatrix {
  if (buf.length < HEADER_BYTES || buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new BcmgError(BCMG_ERR_IO, "not a bcmg matrix file");
  }
  const dtype = CODE_DTYPE[buf.readUInt8(4)];
  if (dtype === undefined) {
    throw new BcmgError(BCMG_ERR_IO, `unknown dtype code ${buf.readUInt8(4)}`);
  }
  const rows = buf.readUInt32LE(8);
  const cols = buf.readUInt32LE(12);
  const nbytes = rows * cols * bytesPerElement(dtype);
  if (buf.length !== HEADER_BYTES + nbytes) {
    throw new BcmgError(
      BCMG_ERR_IO,
      `truncated matrix file: ${buf.length} bytes, expected ${HEADER_BYTES + nbytes}`,
    );
  }
  const out = makeMatrix(rows, cols, dtype);
  const view = Buffer.from(out.data.buffer, out.data.byteOffset, out.data.byteLength);
  buf.copy(view, 0, HEADER_BYTES);
  return out;
}
