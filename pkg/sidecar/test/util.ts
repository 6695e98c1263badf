/** Synthetic window exports matching the pipeline's training format. */

import { mulberry32 } from "../src/rng";
import { WireExample } from "../src/protocol";

export const LABELS = ["O", "B-A", "I-A", "B-B", "I-B"];

export const PAD = 0;
export const UNK = 1;
export const CLS = 2;
export const SEP = 3;
export const FILLER_BASE = 4; // ids 4..19
export const TYPE_A_BASE = 20; // ids 20..29
export const TYPE_B_BASE = 30; // ids 30..39
export const VOCAB_SIZE = 40;

export function syntheticWindows(
  nSentences: number,
  maxSeqLen: number,
  seed: number
): WireExample[] {
  const rand = mulberry32(seed);
  const examples: WireExample[] = [];
  for (let s = 0; s < nSentences; s++) {
    const pieceIds: number[] = [CLS];
    const itemKinds: string[] = ["CLS"];
    const labelIds: number[] = [0];
    const weights: number[] = [0];
    const nTokens = 3 + Math.floor(rand() * (maxSeqLen - 8));
    let entityRun = 0;
    let entityBase = TYPE_A_BASE;
    for (let t = 0; t < nTokens; t++) {
      if (entityRun === 0 && rand() < 0.25) {
        entityRun = 1 + Math.floor(rand() * 2);
        entityBase = rand() < 0.5 ? TYPE_A_BASE : TYPE_B_BASE;
      }
      if (entityRun > 0) {
        const first = pieceIds.length === 1 || !isEntity(pieceIds[pieceIds.length - 1], entityBase);
        pieceIds.push(entityBase + Math.floor(rand() * 10));
        itemKinds.push("PIECE");
        labelIds.push(entityBase === TYPE_A_BASE ? (first ? 1 : 2) : first ? 3 : 4);
        weights.push(1);
        entityRun -= 1;
      } else {
        pieceIds.push(FILLER_BASE + Math.floor(rand() * 16));
        itemKinds.push("PIECE");
        labelIds.push(0);
        weights.push(1);
      }
    }
    pieceIds.push(SEP);
    itemKinds.push("SEP");
    labelIds.push(0);
    weights.push(1);
    while (pieceIds.length < maxSeqLen) {
      pieceIds.push(PAD);
      itemKinds.push("PAD");
      labelIds.push(0);
      weights.push(0);
    }
    examples.push({
      piece_ids: pieceIds.slice(0, maxSeqLen),
      item_kinds: itemKinds.slice(0, maxSeqLen) as WireExample["item_kinds"],
      label_ids: labelIds.slice(0, maxSeqLen),
      weights: weights.slice(0, maxSeqLen),
    });
  }
  return examples;
}

function isEntity(id: number, base: number): boolean {
  return id >= base && id < base + 10;
}
