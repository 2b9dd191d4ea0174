/** Sequence-directory loader: images, ground-truth proximity, labels. */

import { readFileSync } from "node:fs";
import { join } from "node:path";

import { readPfm, readPgm } from "./netpbm.js";

export interface Frame {
  image: Float32Array; // H*W grayscale in [0, 1]
  proximity: Float32Array; // H*W ground-truth proximity a/(a+d)
  labels: Uint8Array; // H*W class ids
}

export interface Dataset {
  width: number;
  height: number;
  classCount: number;
  avgDepth: number;
  frames: Frame[];
}

export function loadSequence(dir: string, maxFrames?: number): Dataset {
  const meta = JSON.parse(readFileSync(join(dir, "scene.json"), "utf-8"));
  const count = Math.min(meta.frames as number, maxFrames ?? Infinity);
  const avgDepth = meta.avg_depth as number;
  const frames: Frame[] = [];
  let width = 0;
  let height = 0;
  for (let i = 0; i < count; i++) {
    const id = String(i).padStart(4, "0");
    const img = readPfm(join(dir, "frames", `frame_${id}.pfm`));
    const depth = readPfm(join(dir, "gt", `depth_${id}.pfm`));
    const labels = readPgm(join(dir, "gt", `labels_${id}.pgm`));
    width = img.width;
    height = img.height;
    const proximity = new Float32Array(depth.data.length);
    for (let p = 0; p < proximity.length; p++) {
      proximity[p] = avgDepth / (avgDepth + depth.data[p]);
    }
    frames.push({ image: img.data, proximity, labels: labels.data });
  }
  return { width, height, classCount: meta.class_count as number, avgDepth, frames };
}
