/** Bundle export: the decoder's exact linear map, column by column.
 *
 * Jacobian columns are extracted as decode(e_k) - decode(0) rather than read
 * off the head tensors, so the files witness the network's actual linearity
 * (the two agree only if the decoder really is linear in the code).
 */

import { mkdirSync } from "node:fs";
import { join } from "node:path";

import * as tf from "@tensorflow/tfjs";

import { BundleTensors, writeBundle } from "./bundle.js";
import { Dataset } from "./dataset.js";
import { ToyCvae } from "./model.js";

export function bundleFromImage(model: ToyCvae, image: Float32Array, ds: Dataset): BundleTensors {
  return tf.tidy(() => {
    const { height: h, width: w, classCount: c } = ds;
    const b = model.config.codeSize;
    const images = tf.tensor4d(image, [1, h, w, 1]);
    const cond = model.conditioning(images);
    const zero = tf.zeros([1, b]) as tf.Tensor2D;
    const d0 = model.decodeDepth(cond, zero).reshape([h, w]);
    const s0 = model.decodeSemantics(cond, zero).reshape([h, w, c]);

    const jdCols: tf.Tensor[] = [];
    const jsCols: tf.Tensor[] = [];
    for (let k = 0; k < b; k++) {
      const unit = tf.oneHot(tf.tensor1d([k], "int32"), b).reshape([1, b]) as tf.Tensor2D;
      jdCols.push(model.decodeDepth(cond, unit).reshape([h, w]).sub(d0));
      jsCols.push(model.decodeSemantics(cond, unit).reshape([h, w, c]).sub(s0));
    }
    const jd = tf.stack(jdCols, 2); // (H, W, B)
    const js = tf.stack(jsCols, 3); // (H, W, C, B)

    return {
      height: h,
      width: w,
      classCount: c,
      codeSize: b,
      avgDepth: ds.avgDepth,
      d0: new Float32Array(d0.clipByValue(1e-6, 1.0).dataSync()),
      uncertainty: new Float32Array(cond.uncertainty.reshape([h, w]).dataSync()),
      jd: new Float32Array(jd.dataSync()),
      s0: new Float32Array(s0.dataSync()),
      js: new Float32Array(js.dataSync()),
    };
  });
}

export function exportBundles(model: ToyCvae, ds: Dataset, outDir: string): string[] {
  mkdirSync(outDir, { recursive: true });
  const written: string[] = [];
  ds.frames.forEach((frame, i) => {
    const path = join(outDir, `frame_${String(i).padStart(4, "0")}.scnb`);
    writeBundle(path, bundleFromImage(model, frame.image, ds));
    written.push(path);
  });
  return written;
}
