/** Process-local registry of fine-tuned models, keyed by opaque ids. */

import { TokenClassifier } from "./model";

export interface Checkpoint {
  id: string;
  model: TokenClassifier;
  labelSet: string[];
}

export class CheckpointRegistry {
  private counter = 0;
  private readonly checkpoints = new Map<string, Checkpoint>();
  private latestId: string | null = null;

  register(model: TokenClassifier, labelSet: string[], seed: number): Checkpoint {
    this.counter += 1;
    const id = `ckpt-${this.counter}-s${seed}`;
    const checkpoint = { id, model, labelSet: [...labelSet] };
    this.checkpoints.set(id, checkpoint);
    this.latestId = id;
    return checkpoint;
  }

  get(id?: string): Checkpoint | undefined {
    if (id !== undefined) return this.checkpoints.get(id);
    if (this.latestId === null) return undefined;
    return this.checkpoints.get(this.latestId);
  }

  get size(): number {
    return this.checkpoints.size;
  }
}
