import * as tf from "@tensorflow/tfjs";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { tensorsFromExamples } from "../src/model";
import { PROTOCOL_VERSION } from "../src/protocol";
import { SidecarServer } from "../src/server";
import { LABELS, VOCAB_SIZE, syntheticWindows } from "./util";

const ARCH = { dModel: 16, numHeads: 2, numLayers: 1, ffnDim: 32 };
const T = 24;

let server: SidecarServer;
let base: string;
let checkpointId: string;

async function post(path: string, body: unknown) {
  const res = await fetch(base + path, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  return res.json();
}

beforeAll(async () => {
  server = new SidecarServer({ vocabSize: VOCAB_SIZE, architecture: ARCH });
  const port = await server.start(0);
  base = `http://127.0.0.1:${port}`;
  const result = await post("/finetune", {
    protocol_version: PROTOCOL_VERSION,
    label_set: LABELS,
    max_seq_len: T,
    examples: syntheticWindows(12, T, 2),
    config: { learning_rate: 1e-3, batch_size: 4, epochs: 1 },
    seed: 1,
  });
  expect(result.checkpoint_id).toBeTruthy();
  checkpointId = result.checkpoint_id;
});

afterAll(async () => {
  await server.stop();
});

describe("wire protocol", () => {
  it("handshake advertises ctxner/1", async () => {
    const res = await fetch(base + "/");
    expect(await res.json()).toEqual({ protocol: PROTOCOL_VERSION });
  });

  it("rejects a protocol version mismatch", async () => {
    const result = await post("/predict", {
      protocol_version: "ctxner/0",
      label_set: LABELS,
      max_seq_len: T,
      examples: [],
    });
    expect(result.error.code).toBe("protocol-version");
  });

  it("rejects a max_seq_len the checkpoint was not built for", async () => {
    const examples = syntheticWindows(1, 16, 3);
    const result = await post("/predict", {
      protocol_version: PROTOCOL_VERSION,
      label_set: LABELS,
      max_seq_len: 16,
      examples,
    });
    expect(result.error.code).toBe("bad-request");
    expect(result.error.message).toContain("max_seq_len");
  });

  it("rejects epochs < 1 at the wire level", async () => {
    const result = await post("/finetune", {
      protocol_version: PROTOCOL_VERSION,
      label_set: LABELS,
      max_seq_len: T,
      examples: syntheticWindows(4, T, 5),
      config: { learning_rate: 1e-3, batch_size: 4, epochs: 0 },
      seed: 1,
    });
    expect(result.error.code).toBe("bad-request");
    expect(result.error.message).toContain("epochs must be >= 1");
  });

  it("answers N examples with N x T x L rows summing to 1", async () => {
    const examples = syntheticWindows(5, T, 7).map(
      ({ piece_ids, item_kinds }) => ({ piece_ids, item_kinds })
    );
    const result = await post("/predict", {
      protocol_version: PROTOCOL_VERSION,
      label_set: LABELS,
      max_seq_len: T,
      examples,
      checkpoint_id: checkpointId,
    });
    expect(result.probabilities).toHaveLength(5);
    for (const example of result.probabilities) {
      expect(example).toHaveLength(T);
      for (const row of example) {
        expect(row).toHaveLength(LABELS.length);
        const sum = row.reduce((a: number, b: number) => a + b, 0);
        expect(Math.abs(sum - 1)).toBeLessThan(1e-5);
      }
    }
  });

  it("served predictions match in-process inference within 1e-5", async () => {
    const examples = syntheticWindows(3, T, 9).map(
      ({ piece_ids, item_kinds }) => ({ piece_ids, item_kinds })
    );
    const result = await post("/predict", {
      protocol_version: PROTOCOL_VERSION,
      label_set: LABELS,
      max_seq_len: T,
      examples,
      checkpoint_id: checkpointId,
    });
    const checkpoint = server.registry.get(checkpointId)!;
    const direct = tf.tidy(() => {
      const { ids, padMask } = tensorsFromExamples(
        examples.map((e) => e.piece_ids),
        examples.map((e) => e.item_kinds)
      );
      return checkpoint.model.probabilities(ids, padMask);
    });
    const expected = (await direct.array()) as number[][][];
    direct.dispose();
    for (let i = 0; i < examples.length; i++) {
      for (let p = 0; p < T; p++) {
        for (let l = 0; l < LABELS.length; l++) {
          expect(
            Math.abs(result.probabilities[i][p][l] - expected[i][p][l])
          ).toBeLessThan(1e-5);
        }
      }
    }
  });

  it("predict without any checkpoint reports no-checkpoint", async () => {
    const fresh = new SidecarServer({ vocabSize: VOCAB_SIZE });
    const port = await fresh.start(0);
    const result = await (
      await fetch(`http://127.0.0.1:${port}/predict`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({
          protocol_version: PROTOCOL_VERSION,
          label_set: LABELS,
          max_seq_len: T,
          examples: [],
        }),
      })
    ).json();
    expect(result.error.code).toBe("no-checkpoint");
    await fresh.stop();
  });

  it("rejects out-of-vocabulary piece ids", async () => {
    const bad = syntheticWindows(1, T, 4).map(({ piece_ids, item_kinds }) => ({
      piece_ids: piece_ids.map((id, i) => (i === 1 ? VOCAB_SIZE + 5 : id)),
      item_kinds,
    }));
    const result = await post("/predict", {
      protocol_version: PROTOCOL_VERSION,
      label_set: LABELS,
      max_seq_len: T,
      examples: bad,
      checkpoint_id: checkpointId,
    });
    expect(result.error.code).toBe("bad-request");
    expect(result.error.message).toContain("piece id");
  });
});
