"""Combine per-window predictions into final token labels.

Every window containing a token's complete sentence contributes one
prediction for that token, read at its first wordpiece. The deciders:

* decide_first     — argmax of the focus-window distribution only.
* cmv_label_vote   — argmax each window, majority vote across windows.
* cmv_softmax_sum  — argmax of the elementwise sum of distributions.

Tokens in partial sentences contribute nothing; no transition repair is
applied, so outputs may contain invalid I-after-O sequences (evaluation
handles them).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .corpus import Corpus, Document, Label, Sentence, Token, TokenKey
from .backend import LabelSet
from .windowing import PIECE, InputExample

TIE_BREAK_POLICIES = ("sum_prob", "first_occurrence")


class AggregationError(ValueError):
    pass


@dataclass(frozen=True)
class ContextPrediction:
    token_key: TokenKey
    example_id: int
    window_position: int
    is_focus: bool
    dist: np.ndarray


class PredictionStore:
    """Predictions per token, in example order."""

    def __init__(self):
        self._by_token: dict[TokenKey, list[ContextPrediction]] = {}

    def add(self, prediction: ContextPrediction) -> None:
        self._by_token.setdefault(prediction.token_key, []).append(prediction)

    def predictions(self, key: TokenKey) -> list[ContextPrediction]:
        return self._by_token[key]

    def token_keys(self) -> list[TokenKey]:
        return list(self._by_token)

    def __len__(self) -> int:
        return len(self._by_token)

    def __contains__(self, key: TokenKey) -> bool:
        return key in self._by_token


def collect(
    examples: Sequence[InputExample], responses: Sequence[np.ndarray]
) -> PredictionStore:
    """Read distributions at first wordpieces of tokens in complete sentences.

    Special positions are never read, partial sentences are skipped, and
    every focus sentence must be complete (it is by construction).
    """
    if len(examples) != len(responses):
        raise AggregationError(
            f"{len(examples)} examples but {len(responses)} responses"
        )
    store = PredictionStore()
    for example_id, (example, resp) in enumerate(zip(examples, responses)):
        focus_seen = False
        for span in example.spans:
            if not span.complete:
                continue
            is_focus = span.key == example.focus
            focus_seen = focus_seen or is_focus
            current: Optional[int] = None
            for pos in range(span.first_item, span.last_item + 1):
                item = example.items[pos]
                if item.kind != PIECE:
                    raise AggregationError(
                        f"example {example_id}: span covers non-piece item at {pos}"
                    )
                token_index = item.piece.origin.token_index
                if token_index == current:
                    continue
                current = token_index
                store.add(
                    ContextPrediction(
                        token_key=TokenKey(*span.key, token_index),
                        example_id=example_id,
                        window_position=pos,
                        is_focus=is_focus,
                        dist=resp[pos],
                    )
                )
        if not focus_seen:
            raise AggregationError(
                f"example {example_id}: focus sentence {tuple(example.focus)} "
                "has no complete span"
            )
    return store


def decide_first(store: PredictionStore, label_set: LabelSet) -> dict[TokenKey, Label]:
    """Label each token from its focus-window prediction only."""
    out = {}
    for key in store.token_keys():
        focus = [p for p in store.predictions(key) if p.is_focus]
        if not focus:
            raise AggregationError(f"token {tuple(key)} has no focus prediction")
        out[key] = label_set.label(int(np.argmax(focus[0].dist)))
    return out


def cmv_label_vote(
    store: PredictionStore, label_set: LabelSet, tie: str = "sum_prob"
) -> dict[TokenKey, Label]:
    """Majority vote over per-window argmax labels.

    Ties between equally frequent labels are resolved by the configured
    policy: sum_prob picks the tied label with the highest total probability
    mass over all of the token's predictions (then lowest label index);
    first_occurrence picks the earliest window's argmax among the tied.
    """
    if tie not in TIE_BREAK_POLICIES:
        raise AggregationError(f"unknown tie-break policy {tie!r}")
    out = {}
    for key in store.token_keys():
        preds = store.predictions(key)
        argmaxes = [int(np.argmax(p.dist)) for p in preds]
        counts = Counter(argmaxes)
        top = max(counts.values())
        tied = sorted(lab for lab, c in counts.items() if c == top)
        if len(tied) == 1:
            winner = tied[0]
        elif tie == "sum_prob":
            total = {lab: sum(float(p.dist[lab]) for p in preds) for lab in tied}
            best = max(total.values())
            winner = min(lab for lab, t in total.items() if t == best)
        else:
            winner = next(
                a for p, a in zip(preds, argmaxes) if a in tied
            )
        out[key] = label_set.label(winner)
    return out


def cmv_softmax_sum(
    store: PredictionStore, label_set: LabelSet
) -> dict[TokenKey, Label]:
    """Argmax of the summed distributions; ties go to the lowest label index."""
    out = {}
    for key in store.token_keys():
        total = np.sum([p.dist for p in store.predictions(key)], axis=0)
        out[key] = label_set.label(int(np.argmax(total)))
    return out


def finalize(labels: Mapping[TokenKey, Label], corpus: Corpus) -> Corpus:
    """Build a predicted corpus parallel to the original, re-joining splits.

    The input corpus is the (possibly split) corpus predictions were made
    on; the output merges split parts back into whole sentences, carrying
    the predicted label of every token.
    """
    docs = []
    for doc in corpus.documents:
        groups: dict[int, list[Sentence]] = {}
        for s in doc.sentences:
            groups.setdefault(s.sent_index, []).append(s)
        sentences = []
        for sent_index in sorted(groups):
            parts = sorted(groups[sent_index], key=lambda s: s.split_part or 0)
            tokens: list[Token] = []
            for part in parts:
                for i, token in enumerate(part.tokens):
                    key = TokenKey(*part.key, i)
                    if key not in labels:
                        raise AggregationError(f"no label for token {tuple(key)}")
                    tokens.append(Token(token.text, labels[key]))
            expected = sum(len(p) for p in parts)
            if len(tokens) != expected:
                raise AggregationError(
                    f"label count mismatch for sentence "
                    f"({parts[0].doc_index}, {sent_index}): "
                    f"{len(tokens)} labels for {expected} tokens"
                )
            sentences.append(
                Sentence(tuple(tokens), parts[0].doc_index, sent_index, None)
            )
        docs.append(Document(tuple(sentences)))
    return Corpus(tuple(docs), corpus.type_set, corpus.has_doc_boundaries)
