/** Wire protocol "ctxner/1" types shared by the HTTP server and its tests. */

export const PROTOCOL_VERSION = "ctxner/1";

export type ItemKind = "CLS" | "SEP" | "PAD" | "PIECE";

export interface WireExample {
  piece_ids: number[];
  item_kinds: ItemKind[];
  /** present in training exports */
  label_ids?: number[];
  weights?: number[];
}

export interface PredictRequest {
  protocol_version: string;
  label_set: string[];
  max_seq_len: number;
  examples: WireExample[];
  checkpoint_id?: string;
}

export interface PredictResponse {
  protocol_version: string;
  probabilities: number[][][];
}

export interface FinetuneRequest {
  protocol_version: string;
  label_set: string[];
  max_seq_len: number;
  examples: WireExample[];
  config: {
    learning_rate: number;
    batch_size: number;
    epochs: number;
    warmup_fraction?: number;
    warmup_unit?: "steps" | "samples";
    weight_decay?: number;
    grad_norm_clip?: number;
  };
  seed: number;
}

export interface FinetuneResponse {
  protocol_version: string;
  checkpoint_id: string;
  epoch_losses: number[];
}

export interface WireError {
  error: { code: string; message: string };
}

export class ProtocolError extends Error {
  constructor(public code: string, message: string) {
    super(message);
  }
}

export function checkVersion(version: unknown): void {
  if (version !== PROTOCOL_VERSION) {
    throw new ProtocolError(
      "protocol-version",
      `server speaks ${PROTOCOL_VERSION}, request carries ${JSON.stringify(version)}`
    );
  }
}

export function checkExamples(
  examples: WireExample[] | undefined,
  maxSeqLen: number,
  needLabels: boolean
): void {
  if (!Array.isArray(examples)) {
    throw new ProtocolError("bad-request", "examples must be an array");
  }
  examples.forEach((example, i) => {
    if (
      !Array.isArray(example.piece_ids) ||
      example.piece_ids.length !== maxSeqLen ||
      !Array.isArray(example.item_kinds) ||
      example.item_kinds.length !== maxSeqLen
    ) {
      throw new ProtocolError(
        "bad-request",
        `example ${i}: piece_ids/item_kinds must have length ${maxSeqLen}`
      );
    }
    if (
      needLabels &&
      (!Array.isArray(example.label_ids) ||
        example.label_ids.length !== maxSeqLen ||
        !Array.isArray(example.weights) ||
        example.weights.length !== maxSeqLen)
    ) {
      throw new ProtocolError(
        "bad-request",
        `example ${i}: fine-tuning needs label_ids and weights of length ${maxSeqLen}`
      );
    }
  });
}
