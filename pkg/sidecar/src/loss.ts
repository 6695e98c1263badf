/**
 * Sparse categorical cross-entropy with per-position sample weights.
 *
 * [CLS] and [PAD] positions are exported with weight 0 and everything else
 * with weight 1; the weighted terms are multiplied before the reduction so
 * a zero-weight position contributes an exact 0.0 regardless of its label.
 */

import * as tf from "@tensorflow/tfjs";

export function maskedSparseCrossEntropy(
  logits: tf.Tensor3D,
  labelIds: tf.Tensor2D,
  weights: tf.Tensor2D
): tf.Scalar {
  const numLabels = logits.shape[2];
  const logProbs = logits.sub(logits.logSumExp(-1, true));
  const oneHot = tf.oneHot(labelIds, numLabels);
  const perPosition = oneHot.mul(logProbs).sum(-1).neg();
  const weighted = perPosition.mul(weights);
  return weighted.sum().div(weights.sum()) as tf.Scalar;
}
