import { describe, expect, it } from "vitest";

import { finetune, settingsFrom, toyShape } from "../src/train";
import { LABELS, VOCAB_SIZE, syntheticWindows } from "./util";

const SMALL_ARCH = { dModel: 16, numHeads: 2, numLayers: 2, ffnDim: 32 };

function quickSettings(overrides: Record<string, unknown> = {}) {
  return settingsFrom({
    learning_rate: 1e-3,
    batch_size: 8,
    epochs: 2,
    ...overrides,
  } as Parameters<typeof settingsFrom>[0]);
}

describe("fine-tuning", () => {
  it("training loss decreases between epoch 1 and 2 on 50 sentences", () => {
    const examples = syntheticWindows(50, 32, 11);
    const shape = toyShape(VOCAB_SIZE, 32, LABELS.length, SMALL_ARCH);
    const { model, epochLosses } = finetune(examples, shape, quickSettings(), 5);
    expect(epochLosses).toHaveLength(2);
    expect(epochLosses[1]).toBeLessThan(epochLosses[0]);
    model.dispose();
  });

  it("rejects epochs < 1", () => {
    expect(() => quickSettings({ epochs: 0 })).toThrow("epochs must be >= 1");
  });

  it("rejects non-positive learning rate", () => {
    expect(() => quickSettings({ learning_rate: 0 })).toThrow("learning_rate");
  });

  it("is deterministic for a fixed seed", () => {
    const examples = syntheticWindows(20, 24, 3);
    const shape = toyShape(VOCAB_SIZE, 24, LABELS.length, SMALL_ARCH);
    const runA = finetune(examples, shape, quickSettings({ epochs: 1 }), 9);
    const runB = finetune(examples, shape, quickSettings({ epochs: 1 }), 9);
    expect(runA.epochLosses).toEqual(runB.epochLosses);
    runA.model.dispose();
    runB.model.dispose();
  });

  it("different seeds shuffle differently", () => {
    const examples = syntheticWindows(20, 24, 3);
    const shape = toyShape(VOCAB_SIZE, 24, LABELS.length, SMALL_ARCH);
    const runA = finetune(examples, shape, quickSettings({ epochs: 1 }), 1);
    const runB = finetune(examples, shape, quickSettings({ epochs: 1 }), 2);
    expect(runA.epochLosses[0]).not.toBe(runB.epochLosses[0]);
    runA.model.dispose();
    runB.model.dispose();
  });

  it("supports the samples interpretation of warmup", () => {
    const examples = syntheticWindows(20, 24, 3);
    const shape = toyShape(VOCAB_SIZE, 24, LABELS.length, SMALL_ARCH);
    const { model, epochLosses } = finetune(
      examples,
      shape,
      quickSettings({ warmup_unit: "samples", epochs: 1 }),
      9
    );
    expect(epochLosses[0]).toBeGreaterThan(0);
    model.dispose();
  });
});
