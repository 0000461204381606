/**
 * Masked, instance-weighted negative log likelihood.
 *
 * The per-pixel target is trilabel: POSITIVE and NEGATIVE pixels contribute
 * -log p(label); UNKNOWN pixels contribute exactly zero, to the value and to
 * every gradient. Each instance's pixel sum is scaled by its loss weight,
 * and a batch reduces by the mean over instances. Probabilities are clamped
 * to [eps, 1-eps] before the log.
 */

import * as tf from '@tensorflow/tfjs';
import { NEGATIVE, POSITIVE } from './samples';

export const CLAMP_EPS = 1e-7;

/**
 * Batch loss: probs [B, H, W, 1], targets [B, H, W] int32 labels,
 * weights [B]. Returns a scalar.
 */
export function batchMaskedWeightedLoss(
  probs: tf.Tensor4D, targets: tf.Tensor3D, weights: tf.Tensor1D,
): tf.Scalar {
  const p = tf.clipByValue(tf.reshape(probs, targets.shape), CLAMP_EPS, 1 - CLAMP_EPS);
  const pos = tf.equal(targets, POSITIVE);
  const neg = tf.equal(targets, NEGATIVE);
  const zero = tf.zerosLike(p);
  const nll = tf.where(pos, tf.neg(tf.log(p)),
    tf.where(neg, tf.neg(tf.log(tf.sub(1, p))), zero));
  const perInstance = tf.mul(tf.sum(nll, [1, 2]), weights);
  return tf.mean(perInstance);
}

/** Single-instance loss: probs and target [H, W], one weight. */
export function maskedWeightedLoss(
  probs: tf.Tensor2D, target: tf.Tensor2D, weight: number,
): tf.Scalar {
  const [h, w] = target.shape;
  return batchMaskedWeightedLoss(
    tf.reshape(probs, [1, h, w, 1]),
    tf.reshape(target, [1, h, w]),
    tf.tensor1d([weight]),
  );
}

/** Float64 reference of the single-instance loss, for oracle checks. */
export function maskedWeightedLossRef(
  probs: ArrayLike<number>, labels: ArrayLike<number>, weight: number,
): number {
  let total = 0;
  for (let i = 0; i < labels.length; i++) {
    const p = Math.min(Math.max(probs[i], CLAMP_EPS), 1 - CLAMP_EPS);
    if (labels[i] === POSITIVE) total += -Math.log(p);
    else if (labels[i] === NEGATIVE) total += -Math.log(1 - p);
  }
  return weight * total;
}

/** Float64 analytic gradient of maskedWeightedLossRef w.r.t. each prob. */
export function maskedWeightedLossGradRef(
  probs: ArrayLike<number>, labels: ArrayLike<number>, weight: number,
): Float64Array {
  const out = new Float64Array(labels.length);
  for (let i = 0; i < labels.length; i++) {
    const raw = probs[i];
    if (raw < CLAMP_EPS || raw > 1 - CLAMP_EPS) continue; // clamp zone: flat
    if (labels[i] === POSITIVE) out[i] = -weight / raw;
    else if (labels[i] === NEGATIVE) out[i] = weight / (1 - raw);
  }
  return out;
}
