/** Training loop and held-out evaluation. Deterministic for a given seed:
 * seeded weight init, seeded reparameterization draws, fixed batch order. */

import * as tf from "@tensorflow/tfjs";

import { Dataset, Frame, loadSequence } from "./dataset.js";
import { depthLoss, klLoss, klWeight, semanticLoss } from "./losses.js";
import { Conditioning, ToyCvae } from "./model.js";

export interface TrainOptions {
  epochs: number;
  codeSize: number;
  seed: number;
  learningRate: number;
  batchSize: number;
  passesPerEpoch: number;
  holdout: number; // frames reserved for evaluation
  model: Partial<import("./model.js").ModelConfig>;
}

export const DEFAULT_TRAIN: TrainOptions = {
  epochs: 8,
  codeSize: 8,
  seed: 0,
  learningRate: 1e-2,
  batchSize: 4,
  passesPerEpoch: 8,
  holdout: 2,
  model: {},
};

// The objective is the per-pixel mean of the summed losses, so one nat of
// code information costs 1/pixels of reconstruction: codes stay informative
// at toy scale, where they must carry most of the residual detail.
export const KL_NAT_PRICE = 1.0;


export interface EpochLog {
  epoch: number;
  klWeight: number;
  depth: number;
  semantic: number;
  kl: number;
  total: number;
}

export interface HeldOutEval {
  zeroDepthL1: number;
  encodedDepthL1: number;
  zeroLabelAccuracy: number;
  encodedLabelAccuracy: number;
}

export interface TrainResult {
  model: ToyCvae;
  log: EpochLog[];
  initialLoss: number;
  finalLoss: number;
  heldOut: HeldOutEval;
}

function toTensors(ds: Dataset, frames: Frame[]) {
  const n = frames.length;
  const { height: h, width: w, classCount: c } = ds;
  const images = new Float32Array(n * h * w);
  const prox = new Float32Array(n * h * w);
  const oneHot = new Float32Array(n * h * w * c);
  frames.forEach((frame, i) => {
    images.set(frame.image, i * h * w);
    prox.set(frame.proximity, i * h * w);
    for (let p = 0; p < h * w; p++) {
      oneHot[(i * h * w + p) * c + frame.labels[p]] = 1;
    }
  });
  return {
    images: tf.tensor4d(images, [n, h, w, 1]),
    prox: tf.tensor4d(prox, [n, h, w, 1]),
    oneHot: tf.tensor4d(oneHot, [n, h, w, c]),
  };
}

function objective(
  model: ToyCvae,
  batch: { images: tf.Tensor4D; prox: tf.Tensor4D; oneHot: tf.Tensor4D },
  weight: number,
  seed: number,
) {
  const n = batch.images.shape[0];
  const b = model.config.codeSize;
  // supervise at the heads' native half resolution: the upsampling is
  // linear, so this is exact supervision against box-filtered targets
  const cond = model.conditioning(batch.images, false);
  const proxLow = tf.avgPool(batch.prox, 2, 2, "same");
  const oneHotLow = tf.avgPool(batch.oneHot, 2, 2, "same");
  const encD = model.encodeDepth(batch.prox, batch.images);
  const encS = model.encodeSemantics(batch.oneHot, batch.images);
  const epsD = tf.randomNormal([n, b], 0, 1, "float32", seed * 2 + 1) as tf.Tensor2D;
  const epsS = tf.randomNormal([n, b], 0, 1, "float32", seed * 2 + 2) as tf.Tensor2D;
  const codeD = encD.mu.add(encD.logvar.mul(0.5).exp().mul(epsD)) as tf.Tensor2D;
  const codeS = encS.mu.add(encS.logvar.mul(0.5).exp().mul(epsS)) as tf.Tensor2D;
  const dLoss = depthLoss(model.decodeDepth(cond, codeD), proxLow, cond.uncertainty);
  const sLoss = semanticLoss(model.decodeSemantics(cond, codeS), oneHotLow);
  const kl = klLoss(encD.mu, encD.logvar).add(klLoss(encS.mu, encS.logvar)) as tf.Scalar;
  // reconstruction terms are reported as per-pixel means; the underlying
  // objective sums over pixels, so the KL scale is per-pixel. The nat price
  // keeps the codes informative without letting them replace the
  // image-conditioned path.
  const pixels = proxLow.shape[1] * proxLow.shape[2];
  const total = dLoss.add(sLoss).add(kl.mul((weight * KL_NAT_PRICE) / pixels)) as tf.Scalar;
  return { total, dLoss, sLoss, kl };
}

export async function trainModel(dataDir: string, options: Partial<TrainOptions> = {}): Promise<TrainResult> {
  const opts = { ...DEFAULT_TRAIN, ...options };
  const ds = loadSequence(dataDir);
  if (ds.frames.length <= opts.holdout) {
    throw new Error(`need more than ${opts.holdout} frames, got ${ds.frames.length}`);
  }
  // interleave the held-out views through the sequence so they share the
  // appearance distribution of the training frames
  const stride = Math.floor(ds.frames.length / (opts.holdout + 1));
  const heldIdx = new Set<number>();
  for (let k = 1; k <= opts.holdout; k++) heldIdx.add(k * stride);
  const trainFrames = ds.frames.filter((_, i) => !heldIdx.has(i));
  const heldFrames = ds.frames.filter((_, i) => heldIdx.has(i));
  const model = ToyCvae.create(
    { codeSize: opts.codeSize, classCount: ds.classCount, ...opts.model }, opts.seed,
  );
  const data = toTensors(ds, trainFrames);
  const optimizer = tf.train.adam(opts.learningRate);

  const evalEpoch = (weight: number, seed: number): EpochLog => {
    return tf.tidy(() => {
      const { total, dLoss, sLoss, kl } = objective(model, data, weight, seed);
      return {
        epoch: 0,
        klWeight: weight,
        depth: dLoss.dataSync()[0],
        semantic: sLoss.dataSync()[0],
        kl: kl.dataSync()[0],
        total: total.dataSync()[0],
      };
    });
  };

  const log: EpochLog[] = [];
  const initial = evalEpoch(klWeight(1), 7000 + opts.seed);
  const initialLoss = initial.total;

  const n = data.images.shape[0];
  let step = 1000 + opts.seed;
  for (let epoch = 1; epoch <= opts.epochs; epoch++) {
    const weight = klWeight(epoch);
    for (let pass = 0; pass < opts.passesPerEpoch; pass++) {
      for (let start = 0; start < n; start += opts.batchSize) {
        const count = Math.min(opts.batchSize, n - start);
        const batch = {
          images: tf.slice(data.images, [start, 0, 0, 0], [count, -1, -1, -1]) as tf.Tensor4D,
          prox: tf.slice(data.prox, [start, 0, 0, 0], [count, -1, -1, -1]) as tf.Tensor4D,
          oneHot: tf.slice(data.oneHot, [start, 0, 0, 0], [count, -1, -1, -1]) as tf.Tensor4D,
        };
        step += 1;
        const stepSeed = step;
        optimizer.minimize(() => objective(model, batch, weight, stepSeed).total, false, model.trainables());
        tf.dispose(batch);
      }
    }
    const entry = evalEpoch(weight, 7000 + opts.seed);
    entry.epoch = epoch;
    log.push(entry);
    if (!Number.isFinite(entry.total)) {
      throw new Error(`non-finite loss at epoch ${epoch}; aborting`);
    }
    // let the event loop breathe between epochs (test-runner heartbeats)
    await new Promise((resolve) => setImmediate(resolve));
  }
  const finalLoss = log[log.length - 1].total;
  const heldOut = evaluateHeldOut(model, ds, heldFrames);
  tf.dispose(data);
  return { model, log, initialLoss, finalLoss, heldOut };
}

/** Zero-code vs posterior-mean reconstruction on held-out frames. */
export function evaluateHeldOut(model: ToyCvae, ds: Dataset, frames: Frame[]): HeldOutEval {
  return tf.tidy(() => {
    const data = toTensors(ds, frames);
    const n = frames.length;
    const b = model.config.codeSize;
    const cond = model.conditioning(data.images);
    const zeroCodes = tf.zeros([n, b]) as tf.Tensor2D;
    const encD = model.encodeDepth(data.prox, data.images);
    const encS = model.encodeSemantics(data.oneHot, data.images);

    const l1 = (codes: tf.Tensor2D) =>
      model.decodeDepth(cond, codes).sub(data.prox).abs().mean().dataSync()[0];
    const accuracy = (codes: tf.Tensor2D) => {
      const pred = model.decodeSemantics(cond, codes).argMax(3);
      const gt = data.oneHot.argMax(3);
      return pred.equal(gt).toFloat().mean().dataSync()[0];
    };
    return {
      zeroDepthL1: l1(zeroCodes),
      encodedDepthL1: l1(encD.mu),
      zeroLabelAccuracy: accuracy(zeroCodes),
      encodedLabelAccuracy: accuracy(encS.mu),
    };
  });
}

export function logToCsv(log: EpochLog[]): string {
  const header = "epoch,kl_weight,depth,semantic,kl,total";
  const rows = log.map(
    (e) => `${e.epoch},${e.klWeight.toFixed(6)},${e.depth.toFixed(6)},${e.semantic.toFixed(6)},` +
      `${e.kl.toFixed(6)},${e.total.toFixed(6)}`,
  );
  return [header, ...rows].join("\n") + "\n";
}
