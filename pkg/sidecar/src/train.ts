/** Fine-tuning loop over window exports produced by the pipeline. */

import * as tf from "@tensorflow/tfjs";

import { maskedSparseCrossEntropy } from "./loss";
import { ModelShape, TokenClassifier, TOY_SHAPE, tensorsFromExamples } from "./model";
import {
  AdamConfig,
  AdamWithSchedule,
  DEFAULT_ADAM,
  warmupStepsForSamples,
} from "./optimizer";
import { WireExample } from "./protocol";
import { mulberry32, shuffled } from "./rng";

export interface FinetuneSettings {
  learningRate: number;
  batchSize: number;
  epochs: number;
  warmupFraction: number;
  warmupUnit: "steps" | "samples";
  adam: AdamConfig;
}

export function settingsFrom(config: {
  learning_rate: number;
  batch_size: number;
  epochs: number;
  warmup_fraction?: number;
  warmup_unit?: "steps" | "samples";
  weight_decay?: number;
  grad_norm_clip?: number;
}): FinetuneSettings {
  if (!Number.isInteger(config.epochs) || config.epochs < 1) {
    throw new Error("epochs must be >= 1");
  }
  if (!Number.isInteger(config.batch_size) || config.batch_size < 1) {
    throw new Error("batch_size must be >= 1");
  }
  if (!(config.learning_rate > 0)) {
    throw new Error("learning_rate must be positive");
  }
  const warmupFraction = config.warmup_fraction ?? 0.1;
  if (warmupFraction < 0 || warmupFraction > 1) {
    throw new Error("warmup_fraction must lie in [0, 1]");
  }
  return {
    learningRate: config.learning_rate,
    batchSize: config.batch_size,
    epochs: config.epochs,
    warmupFraction,
    warmupUnit: config.warmup_unit ?? "steps",
    adam: {
      ...DEFAULT_ADAM,
      weightDecay: config.weight_decay ?? DEFAULT_ADAM.weightDecay,
      gradNormClip: config.grad_norm_clip ?? DEFAULT_ADAM.gradNormClip,
    },
  };
}

export interface TrainResult {
  model: TokenClassifier;
  epochLosses: number[];
}

interface Batch {
  ids: tf.Tensor2D;
  padMask: tf.Tensor2D;
  labels: tf.Tensor2D;
  weights: tf.Tensor2D;
  size: number;
}

function makeBatch(examples: WireExample[]): Batch {
  const { ids, padMask } = tensorsFromExamples(
    examples.map((e) => e.piece_ids),
    examples.map((e) => e.item_kinds)
  );
  return {
    ids,
    padMask,
    labels: tf.tensor2d(examples.map((e) => e.label_ids!), undefined, "int32"),
    weights: tf.tensor2d(examples.map((e) => e.weights!), undefined, "float32"),
    size: examples.length,
  };
}

export function finetune(
  examples: WireExample[],
  shape: ModelShape,
  settings: FinetuneSettings,
  seed: number
): TrainResult {
  if (examples.length === 0) {
    throw new Error("cannot fine-tune on an empty example set");
  }
  const model = new TokenClassifier(shape, seed);
  const rand = mulberry32(seed * 2654435761 + 97);

  const stepsPerEpoch = Math.ceil(examples.length / settings.batchSize);
  const totalSteps = stepsPerEpoch * settings.epochs;
  let warmupSteps: number;
  if (settings.warmupUnit === "samples") {
    const sizes: number[] = [];
    for (let i = 0; i < examples.length; i += settings.batchSize) {
      sizes.push(Math.min(settings.batchSize, examples.length - i));
    }
    warmupSteps = warmupStepsForSamples(sizes, settings.epochs, settings.warmupFraction);
  } else {
    warmupSteps = Math.round(totalSteps * settings.warmupFraction);
  }

  const optimizer = new AdamWithSchedule(
    { peakLearningRate: settings.learningRate, totalSteps, warmupSteps },
    settings.adam
  );

  const epochLosses: number[] = [];
  try {
    for (let epoch = 0; epoch < settings.epochs; epoch++) {
      const order = shuffled(examples, rand);
      let lossSum = 0;
      let batches = 0;
      for (let i = 0; i < order.length; i += settings.batchSize) {
        const batch = makeBatch(order.slice(i, i + settings.batchSize));
        const loss = optimizer.minimize(
          () =>
            maskedSparseCrossEntropy(
              model.logits(batch.ids, batch.padMask),
              batch.labels,
              batch.weights
            ),
          model.trainable()
        );
        lossSum += loss;
        batches += 1;
        batch.ids.dispose();
        batch.padMask.dispose();
        batch.labels.dispose();
        batch.weights.dispose();
      }
      epochLosses.push(lossSum / batches);
    }
  } finally {
    optimizer.dispose();
  }
  return { model, epochLosses };
}

export function toyShape(
  vocabSize: number,
  maxSeqLen: number,
  numLabels: number,
  overrides: Partial<typeof TOY_SHAPE> = {}
): ModelShape {
  return {
    vocabSize,
    maxSeqLen,
    numLabels,
    ...TOY_SHAPE,
    ...overrides,
  };
}
