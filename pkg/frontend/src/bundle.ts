/**
 * Decoder-bundle files (.scnb): the handoff format into the reconstruction
 * pipelines. Layout: magic "SCNB1\0", little-endian header
 * <u32 H, u32 W, u32 C, u32 B, f32 avgDepth, u32 flags>, then f32 tensors
 * D0[H*W], b[H*W], Jd[H*W*B], S0[H*W*C], Js[H*W*C*B], row-major with the
 * code index fastest.
 */

import { readFileSync, writeFileSync } from "node:fs";

export const MAGIC = Buffer.from("SCNB1\0", "latin1");
export const HEADER_SIZE = MAGIC.length + 24;

export interface BundleTensors {
  height: number;
  width: number;
  classCount: number;
  codeSize: number;
  avgDepth: number;
  d0: Float32Array; // H*W
  uncertainty: Float32Array; // H*W
  jd: Float32Array; // H*W*B
  s0: Float32Array; // H*W*C
  js: Float32Array; // H*W*C*B
}

export function expectedSize(h: number, w: number, c: number, b: number): number {
  return HEADER_SIZE + 4 * h * w * (2 + b + c + c * b);
}

export function encodeBundle(t: BundleTensors): Buffer {
  const { height: h, width: w, classCount: c, codeSize: b } = t;
  const sizes = [h * w, h * w, h * w * b, h * w * c, h * w * c * b];
  const tensors = [t.d0, t.uncertainty, t.jd, t.s0, t.js];
  tensors.forEach((arr, i) => {
    if (arr.length !== sizes[i]) throw new Error(`tensor ${i} has ${arr.length} values, expected ${sizes[i]}`);
  });
  const out = Buffer.alloc(expectedSize(h, w, c, b));
  MAGIC.copy(out, 0);
  let at = MAGIC.length;
  for (const value of [h, w, c, b]) {
    out.writeUInt32LE(value, at);
    at += 4;
  }
  out.writeFloatLE(t.avgDepth, at);
  at += 4;
  out.writeUInt32LE(0, at); // flags
  at += 4;
  for (const arr of tensors) {
    for (let i = 0; i < arr.length; i++) {
      out.writeFloatLE(arr[i], at);
      at += 4;
    }
  }
  return out;
}

export function writeBundle(path: string, t: BundleTensors): void {
  writeFileSync(path, encodeBundle(t));
}

export function decodeBundle(buf: Buffer): BundleTensors {
  if (!buf.subarray(0, MAGIC.length).equals(MAGIC)) {
    throw new Error("bad magic: not an SCNB1 bundle");
  }
  let at = MAGIC.length;
  const h = buf.readUInt32LE(at);
  const w = buf.readUInt32LE(at + 4);
  const c = buf.readUInt32LE(at + 8);
  const b = buf.readUInt32LE(at + 12);
  const avgDepth = buf.readFloatLE(at + 16);
  at += 24;
  if (buf.length !== expectedSize(h, w, c, b)) {
    throw new Error(`file size ${buf.length} does not match header (expected ${expectedSize(h, w, c, b)})`);
  }
  const take = (count: number): Float32Array => {
    const arr = new Float32Array(count);
    for (let i = 0; i < count; i++) {
      arr[i] = buf.readFloatLE(at);
      at += 4;
    }
    return arr;
  };
  return {
    height: h,
    width: w,
    classCount: c,
    codeSize: b,
    avgDepth,
    d0: take(h * w),
    uncertainty: take(h * w),
    jd: take(h * w * b),
    s0: take(h * w * c),
    js: take(h * w * c * b),
  };
}

export function readBundle(path: string): BundleTensors {
  return decodeBundle(readFileSync(path));
}
