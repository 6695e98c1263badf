/**
 * HTTP server speaking the "ctxner/1" wire protocol.
 *
 * GET  /         -> {protocol} handshake
 * POST /predict  -> {probabilities: [examples][positions][labels]}
 * POST /finetune -> {checkpoint_id, epoch_losses}
 *
 * Structured failures come back as {error: {code, message}}; /predict with
 * no checkpoint id uses the most recently fine-tuned model.
 */

import * as http from "http";

import * as tf from "@tensorflow/tfjs";

import { CheckpointRegistry } from "./checkpoints";
import { tensorsFromExamples, TOY_SHAPE } from "./model";
import {
  checkExamples,
  checkVersion,
  FinetuneRequest,
  PredictRequest,
  PROTOCOL_VERSION,
  ProtocolError,
  WireExample,
} from "./protocol";
import { finetune, settingsFrom, toyShape } from "./train";

export interface ServerOptions {
  vocabSize?: number;
  architecture?: Partial<typeof TOY_SHAPE>;
  predictBatch?: number;
}

export class SidecarServer {
  readonly registry = new CheckpointRegistry();
  private server: http.Server | null = null;

  constructor(private readonly options: ServerOptions = {}) {}

  start(port = 0): Promise<number> {
    const server = http.createServer((req, res) => this.route(req, res));
    this.server = server;
    return new Promise((resolve, reject) => {
      server.once("error", reject);
      server.listen(port, "127.0.0.1", () => {
        const address = server.address();
        resolve(typeof address === "object" && address ? address.port : port);
      });
    });
  }

  stop(): Promise<void> {
    return new Promise((resolve) => {
      if (!this.server) return resolve();
      this.server.close(() => resolve());
      this.server = null;
    });
  }

  private route(req: http.IncomingMessage, res: http.ServerResponse): void {
    if (req.method === "GET") {
      return respond(res, 200, { protocol: PROTOCOL_VERSION });
    }
    let body = "";
    req.on("data", (chunk) => (body += chunk));
    req.on("end", () => {
      let payload: unknown;
      try {
        payload = JSON.parse(body || "{}");
      } catch {
        return respond(res, 200, {
          error: { code: "bad-request", message: "body is not valid JSON" },
        });
      }
      try {
        if (req.url === "/predict") {
          respond(res, 200, this.predict(payload as PredictRequest));
        } else if (req.url === "/finetune") {
          respond(res, 200, this.finetune(payload as FinetuneRequest));
        } else {
          respond(res, 200, {
            error: { code: "not-found", message: `no route ${req.url}` },
          });
        }
      } catch (err) {
        if (err instanceof ProtocolError) {
          respond(res, 200, {
            error: { code: err.code, message: err.message },
          });
        } else {
          respond(res, 500, {
            error: { code: "internal", message: String(err) },
          });
        }
      }
    });
  }

  predict(request: PredictRequest) {
    checkVersion(request.protocol_version);
    checkExamples(request.examples, request.max_seq_len, false);
    const checkpoint = this.registry.get(request.checkpoint_id);
    if (!checkpoint) {
      throw new ProtocolError(
        "no-checkpoint",
        request.checkpoint_id
          ? `unknown checkpoint ${request.checkpoint_id}`
          : "no checkpoint has been fine-tuned yet"
      );
    }
    const shape = checkpoint.model.shape;
    if (shape.maxSeqLen !== request.max_seq_len) {
      throw new ProtocolError(
        "bad-request",
        `checkpoint expects max_seq_len ${shape.maxSeqLen}, request has ${request.max_seq_len}`
      );
    }
    if (
      request.label_set.length !== checkpoint.labelSet.length ||
      request.label_set.some((l, i) => l !== checkpoint.labelSet[i])
    ) {
      throw new ProtocolError(
        "bad-request",
        "label_set does not match the checkpoint's label set"
      );
    }
    for (const [i, example] of request.examples.entries()) {
      for (const id of example.piece_ids) {
        if (!Number.isInteger(id) || id < 0 || id >= shape.vocabSize) {
          throw new ProtocolError(
            "bad-request",
            `example ${i}: piece id ${id} outside vocabulary of ${shape.vocabSize}`
          );
        }
      }
    }
    const probabilities: number[][][] = [];
    const batchSize = this.options.predictBatch ?? 16;
    for (let i = 0; i < request.examples.length; i += batchSize) {
      const chunk = request.examples.slice(i, i + batchSize);
      const out = tf.tidy(() => {
        const { ids, padMask } = tensorsFromExamples(
          chunk.map((e) => e.piece_ids),
          chunk.map((e) => e.item_kinds)
        );
        return checkpoint.model.probabilities(ids, padMask);
      });
      const data = out.arraySync() as number[][][];
      out.dispose();
      // float32 rows drift past the protocol's 1e-6 sum tolerance after
      // JSON round-tripping; renormalize in float64
      for (const example of data) {
        for (const row of example) {
          const sum = row.reduce((a, b) => a + b, 0);
          for (let i = 0; i < row.length; i++) row[i] /= sum;
        }
      }
      probabilities.push(...data);
    }
    return { protocol_version: PROTOCOL_VERSION, probabilities };
  }

  finetune(request: FinetuneRequest) {
    checkVersion(request.protocol_version);
    checkExamples(request.examples, request.max_seq_len, true);
    if (!request.label_set || request.label_set.length < 1) {
      throw new ProtocolError("bad-request", "label_set must be non-empty");
    }
    let settings;
    try {
      settings = settingsFrom(request.config ?? ({} as FinetuneRequest["config"]));
    } catch (err) {
      throw new ProtocolError("bad-request", String((err as Error).message));
    }
    const numLabels = request.label_set.length;
    for (const [i, example] of request.examples.entries()) {
      for (const label of example.label_ids!) {
        if (!Number.isInteger(label) || label < 0 || label >= numLabels) {
          throw new ProtocolError(
            "bad-request",
            `example ${i}: label id ${label} outside label set of ${numLabels}`
          );
        }
      }
    }
    const vocabSize =
      this.options.vocabSize ?? maxPieceId(request.examples) + 1;
    const shape = toyShape(
      vocabSize,
      request.max_seq_len,
      numLabels,
      this.options.architecture
    );
    const seed = Number.isInteger(request.seed) ? request.seed : 0;
    let model, epochLosses;
    try {
      ({ model, epochLosses } = finetune(request.examples, shape, settings, seed));
    } catch (err) {
      const message = String((err as Error).message ?? err);
      if (/memory|alloc/i.test(message)) {
        throw new ProtocolError(
          "oom",
          `${message}; try a smaller batch_size than ${settings.batchSize}`
        );
      }
      throw err;
    }
    const checkpoint = this.registry.register(model, request.label_set, seed);
    return {
      protocol_version: PROTOCOL_VERSION,
      checkpoint_id: checkpoint.id,
      epoch_losses: epochLosses,
    };
  }
}

function maxPieceId(examples: WireExample[]): number {
  let max = 0;
  for (const example of examples) {
    for (const id of example.piece_ids) {
      if (id > max) max = id;
    }
  }
  return max;
}

function respond(res: http.ServerResponse, status: number, body: unknown): void {
  const data = JSON.stringify(body);
  res.writeHead(status, {
    "Content-Type": "application/json",
    "Content-Length": Buffer.byteLength(data),
  });
  res.end(data);
}
