/**
 * Readers for the map formats the generator writes: grayscale little-endian
 * PFM (float32, rows bottom-to-top) and 8-bit binary PGM.
 */

import { readFileSync } from "node:fs";

export interface GrayImage {
  width: number;
  height: number;
  data: Float32Array; // row-major, top-to-bottom
}

function headerTokens(buf: Buffer, magic: string, count: number): { tokens: string[]; offset: number } {
  if (buf.subarray(0, magic.length).toString("latin1") !== magic) {
    throw new Error(`expected ${magic} file`);
  }
  const tokens: string[] = [];
  let pos = magic.length;
  while (tokens.length < count) {
    while (pos < buf.length && /\s/.test(String.fromCharCode(buf[pos]))) pos++;
    const start = pos;
    while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) pos++;
    tokens.push(buf.subarray(start, pos).toString("latin1"));
  }
  return { tokens, offset: pos + 1 }; // single whitespace after the last token
}

export function parsePfm(buf: Buffer): GrayImage {
  const { tokens, offset } = headerTokens(buf, "Pf", 3);
  const width = parseInt(tokens[0], 10);
  const height = parseInt(tokens[1], 10);
  const scale = parseFloat(tokens[2]);
  if (scale >= 0) throw new Error("only little-endian PFM supported");
  const data = new Float32Array(width * height);
  // rows are stored bottom-to-top
  for (let row = 0; row < height; row++) {
    const src = offset + (height - 1 - row) * width * 4;
    for (let col = 0; col < width; col++) {
      data[row * width + col] = buf.readFloatLE(src + col * 4);
    }
  }
  return { width, height, data };
}

export function readPfm(path: string): GrayImage {
  return parsePfm(readFileSync(path));
}

export function parsePgm(buf: Buffer): { width: number; height: number; data: Uint8Array } {
  const { tokens, offset } = headerTokens(buf, "P5", 3);
  const width = parseInt(tokens[0], 10);
  const height = parseInt(tokens[1], 10);
  if (parseInt(tokens[2], 10) !== 255) throw new Error("only 8-bit PGM supported");
  return { width, height, data: new Uint8Array(buf.subarray(offset, offset + width * height)) };
}

export function readPgm(path: string): { width: number; height: number; data: Uint8Array } {
  return parsePgm(readFileSync(path));
}
