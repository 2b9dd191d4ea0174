/** Training objective: uncertainty-weighted depth L1, label cross-entropy,
 * and the annealed KL pull of both code posteriors toward the unit Gaussian. */

import * as tf from "@tensorflow/tfjs";

/** Per-pixel |predicted - target| / b + log b, averaged. */
export function depthLoss(pred: tf.Tensor, target: tf.Tensor, uncertainty: tf.Tensor): tf.Scalar {
  const term = pred.sub(target).abs().div(uncertainty).add(uncertainty.log());
  return term.mean() as tf.Scalar;
}

/** Multi-class cross-entropy between one-hot labels and predicted logits. */
export function semanticLoss(logits: tf.Tensor4D, oneHot: tf.Tensor4D): tf.Scalar {
  const c = logits.shape[3];
  return tf.losses.softmaxCrossEntropy(oneHot.reshape([-1, c]), logits.reshape([-1, c])) as tf.Scalar;
}

/** KL(q || N(0, I)) for a diagonal Gaussian, averaged over the batch. */
export function klLoss(mu: tf.Tensor2D, logvar: tf.Tensor2D): tf.Scalar {
  const kl = logvar.exp().add(mu.square()).sub(1).sub(logvar).sum(1).mul(0.5);
  return kl.mean() as tf.Scalar;
}

/**
 * KL annealing weight for a 1-based epoch index: zero through epoch 2, then
 * a linear ramp reaching 1 by epoch 4.
 */
export function klWeight(epoch: number): number {
  return Math.min(1.0, Math.max(0.0, (epoch - 2) / 2.0));
}
