import * as tf from "@tensorflow/tfjs";
import { describe, expect, it } from "vitest";

import { ToyCvae } from "../src/model.js";

describe("decoder linearity", () => {
  it("satisfies exact superposition in the code", () => {
    const model = ToyCvae.create({ codeSize: 6, classCount: 4 }, 3);
    const img = tf.randomNormal([1, 16, 16, 1], 0.5, 0.2, "float32", 11) as tf.Tensor4D;
    const cond = model.conditioning(img);
    const c1 = tf.randomNormal([1, 6], 0, 1, "float32", 12) as tf.Tensor2D;
    const c2 = tf.randomNormal([1, 6], 0, 1, "float32", 13) as tf.Tensor2D;
    const zero = tf.zeros([1, 6]) as tf.Tensor2D;

    for (const decode of [
      (c: tf.Tensor2D) => model.decodeDepth(cond, c),
      (c: tf.Tensor2D) => model.decodeSemantics(cond, c),
    ]) {
      const lhs = decode(c1.add(c2) as tf.Tensor2D).add(decode(zero));
      const rhs = decode(c1).add(decode(c2));
      const err = lhs.sub(rhs).abs().max().dataSync()[0];
      expect(err).toBeLessThan(1e-5);
    }
  });

  it("reproduces the checkpoint round trip", () => {
    const model = ToyCvae.create({ codeSize: 4, classCount: 3 }, 5);
    const img = tf.randomNormal([1, 8, 8, 1], 0.5, 0.2, "float32", 21) as tf.Tensor4D;
    const before = model.conditioning(img).s0.dataSync();
    const restored = ToyCvae.loadJson(model.saveJson());
    const after = restored.conditioning(img).s0.dataSync();
    expect(Array.from(after)).toEqual(Array.from(before));
  });
});
