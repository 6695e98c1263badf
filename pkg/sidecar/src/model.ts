/**
 * Toy transformer encoder for token classification.
 *
 * Embeddings + learned positions, a few self-attention blocks with padding
 * masks, and a single time-distributed dense layer producing softmax
 * probabilities over the label set at every window position. Small enough
 * to fine-tune on a laptop CPU; checkpoints of real pretrained encoders are
 * out of scope.
 */

import * as tf from "@tensorflow/tfjs";

export interface ModelShape {
  vocabSize: number;
  maxSeqLen: number;
  numLabels: number;
  dModel: number;
  numHeads: number;
  numLayers: number;
  ffnDim: number;
}

export const TOY_SHAPE = {
  dModel: 32,
  numHeads: 2,
  numLayers: 2,
  ffnDim: 64,
};

const LN_EPSILON = 1e-6;

export class TokenClassifier {
  private static instances = 0;

  readonly shape: ModelShape;
  readonly variables: Map<string, tf.Variable> = new Map();
  private readonly prefix: string;

  constructor(shape: ModelShape, seed: number) {
    this.shape = shape;
    // tfjs registers variables globally by name; prefix keeps models disjoint
    this.prefix = `model${TokenClassifier.instances++}/`;
    let next = seed;
    const init = (name: string, dims: number[], mode: "glorot" | "zeros" | "ones" = "glorot") => {
      next += 1;
      const value =
        mode === "zeros"
          ? tf.zeros(dims)
          : mode === "ones"
          ? tf.ones(dims)
          : (tf.initializers.glorotUniform({ seed: next }).apply(dims) as tf.Tensor);
      this.variables.set(name, tf.variable(value, true, this.prefix + name));
      value.dispose();
    };

    const { vocabSize, maxSeqLen, numLabels, dModel, numLayers, ffnDim } = shape;
    init("tok_emb", [vocabSize, dModel]);
    init("pos_emb", [maxSeqLen, dModel]);
    for (let l = 0; l < numLayers; l++) {
      for (const w of ["wq", "wk", "wv", "wo"]) {
        init(`layer${l}/${w}`, [dModel, dModel]);
        init(`layer${l}/${w}_bias`, [dModel], "zeros");
      }
      init(`layer${l}/ln1_gamma`, [dModel], "ones");
      init(`layer${l}/ln1_beta`, [dModel], "zeros");
      init(`layer${l}/ffn_w1`, [dModel, ffnDim]);
      init(`layer${l}/ffn_b1`, [ffnDim], "zeros");
      init(`layer${l}/ffn_w2`, [ffnDim, dModel]);
      init(`layer${l}/ffn_b2`, [dModel], "zeros");
      init(`layer${l}/ln2_gamma`, [dModel], "ones");
      init(`layer${l}/ln2_beta`, [dModel], "zeros");
    }
    init("head_w", [dModel, numLabels]);
    init("head_bias", [numLabels], "zeros");
  }

  private v(name: string): tf.Variable {
    const found = this.variables.get(name);
    if (!found) throw new Error(`unknown variable ${name}`);
    return found;
  }

  private layerNorm(x: tf.Tensor, gamma: tf.Tensor, beta: tf.Tensor): tf.Tensor {
    const mean = x.mean(-1, true);
    const centered = x.sub(mean);
    const variance = centered.square().mean(-1, true);
    return centered
      .div(variance.add(LN_EPSILON).sqrt())
      .mul(gamma)
      .add(beta);
  }

  /** [B,T,din] x [din,dout] + bias, flattened so gradients stay 2D. */
  private dense(x: tf.Tensor, w: tf.Tensor, bias: tf.Tensor): tf.Tensor {
    const [batch, seq, din] = x.shape as [number, number, number];
    return x
      .reshape([batch * seq, din])
      .matMul(w)
      .add(bias)
      .reshape([batch, seq, w.shape[1] as number]);
  }

  /** Logits [batch, maxSeqLen, numLabels]; attention ignores PAD positions. */
  logits(pieceIds: tf.Tensor2D, padMask: tf.Tensor2D): tf.Tensor3D {
    const { dModel, numHeads, numLayers, maxSeqLen } = this.shape;
    const headDim = dModel / numHeads;
    const batch = pieceIds.shape[0];

    let x = tf
      .gather(this.v("tok_emb"), pieceIds.flatten())
      .reshape([batch, maxSeqLen, dModel])
      .add(this.v("pos_emb"));

    // additive mask: 0 for real items, -1e9 on PAD key positions
    const attnMask = padMask
      .sub(1)
      .mul(1e9)
      .reshape([batch, 1, 1, maxSeqLen]);

    const split = (t: tf.Tensor) =>
      t
        .reshape([batch, maxSeqLen, numHeads, headDim])
        .transpose([0, 2, 1, 3]);

    for (let l = 0; l < numLayers; l++) {
      const q = split(this.dense(x, this.v(`layer${l}/wq`), this.v(`layer${l}/wq_bias`)));
      const k = split(this.dense(x, this.v(`layer${l}/wk`), this.v(`layer${l}/wk_bias`)));
      const vv = split(this.dense(x, this.v(`layer${l}/wv`), this.v(`layer${l}/wv_bias`)));
      const scores = tf
        .matMul(q, k, false, true)
        .div(Math.sqrt(headDim))
        .add(attnMask);
      const context = tf
        .matMul(tf.softmax(scores), vv)
        .transpose([0, 2, 1, 3])
        .reshape([batch, maxSeqLen, dModel]);
      const attnOut = this.dense(
        context,
        this.v(`layer${l}/wo`),
        this.v(`layer${l}/wo_bias`)
      );
      x = this.layerNorm(
        x.add(attnOut),
        this.v(`layer${l}/ln1_gamma`),
        this.v(`layer${l}/ln1_beta`)
      );
      const ffn = this.dense(
        this.dense(x, this.v(`layer${l}/ffn_w1`), this.v(`layer${l}/ffn_b1`)).relu(),
        this.v(`layer${l}/ffn_w2`),
        this.v(`layer${l}/ffn_b2`)
      );
      x = this.layerNorm(
        x.add(ffn),
        this.v(`layer${l}/ln2_gamma`),
        this.v(`layer${l}/ln2_beta`)
      );
    }
    return this.dense(x, this.v("head_w"), this.v("head_bias")) as tf.Tensor3D;
  }

  probabilities(pieceIds: tf.Tensor2D, padMask: tf.Tensor2D): tf.Tensor3D {
    return tf.softmax(this.logits(pieceIds, padMask)) as tf.Tensor3D;
  }

  trainable(): tf.Variable[] {
    return [...this.variables.values()];
  }

  /** Snapshot weights for the checkpoint registry. */
  weights(): Map<string, tf.Tensor> {
    const out = new Map<string, tf.Tensor>();
    for (const [name, variable] of this.variables) {
      out.set(name, variable.clone());
    }
    return out;
  }

  loadWeights(weights: Map<string, tf.Tensor>): void {
    for (const [name, variable] of this.variables) {
      const saved = weights.get(name);
      if (!saved) throw new Error(`checkpoint lacks variable ${name}`);
      variable.assign(saved);
    }
  }

  dispose(): void {
    for (const variable of this.variables.values()) variable.dispose();
    this.variables.clear();
  }
}

export function tensorsFromExamples(
  pieceIds: number[][],
  itemKinds: string[][]
): { ids: tf.Tensor2D; padMask: tf.Tensor2D } {
  const ids = tf.tensor2d(pieceIds, undefined, "int32");
  const mask = itemKinds.map((kinds) => kinds.map((k) => (k === "PAD" ? 0 : 1)));
  const padMask = tf.tensor2d(mask, undefined, "float32");
  return { ids, padMask };
}
