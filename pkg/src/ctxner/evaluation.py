"""Mention-level precision/recall/F1 with conlleval semantics.

Chunk extraction is total over arbitrary label sequences because predictions
are never repaired: B-X starts a chunk, I-X continues a chunk of type X, and
an I-X after O or after a different type starts a new chunk, exactly as the
reference scoring script treats malformed sequences. A predicted span counts
as correct only when sentence, type and both boundaries all match. Metrics
are kept at full precision and rounded only for presentation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from .corpus import Corpus, CorpusError, Label


class Span(NamedTuple):
    entity_type: str
    start: int
    end: int  # inclusive
    sentence_key: Optional[tuple] = None


def extract_chunks(
    labels: Sequence[Label], sentence_key: Optional[tuple] = None
) -> list[Span]:
    chunks: list[Span] = []
    open_type: Optional[str] = None
    open_start = 0
    prev: Label = Label("O")
    for i, lab in enumerate(labels):
        starts = lab.prefix == "B" or (
            lab.prefix == "I"
            and (prev.prefix == "O" or prev.entity_type != lab.entity_type)
        )
        if open_type is not None and (starts or lab.prefix == "O"):
            chunks.append(Span(open_type, open_start, i - 1, sentence_key))
            open_type = None
        if starts:
            open_type = lab.entity_type
            open_start = i
        prev = lab
    if open_type is not None:
        chunks.append(Span(open_type, open_start, len(labels) - 1, sentence_key))
    return chunks


class MetricCounts(NamedTuple):
    gold_count: int
    pred_count: int
    correct_count: int

    @property
    def precision(self) -> float:
        return 100.0 * self.correct_count / self.pred_count if self.pred_count else 0.0

    @property
    def recall(self) -> float:
        return 100.0 * self.correct_count / self.gold_count if self.gold_count else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass(frozen=True)
class EvalReport:
    overall: MetricCounts
    per_type: dict[str, MetricCounts]
    token_accuracy: float
    token_count: int

    def to_dict(self) -> dict:
        def block(counts: MetricCounts) -> dict:
            return {
                "precision": counts.precision,
                "recall": counts.recall,
                "f1": counts.f1,
                "gold_count": counts.gold_count,
                "pred_count": counts.pred_count,
                "correct_count": counts.correct_count,
            }

        return {
            "overall": block(self.overall),
            "per_type": {t: block(c) for t, c in sorted(self.per_type.items())},
            "token_accuracy": self.token_accuracy,
            "token_count": self.token_count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        """Plain-text report in the layout of the reference scoring script."""
        lines = [
            "processed %i tokens with %i phrases; found: %i phrases; correct: %i."
            % (
                self.token_count,
                self.overall.gold_count,
                self.overall.pred_count,
                self.overall.correct_count,
            ),
            "accuracy: %6.2f%%; precision: %6.2f%%; recall: %6.2f%%; FB1: %6.2f"
            % (
                self.token_accuracy,
                self.overall.precision,
                self.overall.recall,
                self.overall.f1,
            ),
        ]
        for t in sorted(self.per_type):
            counts = self.per_type[t]
            lines.append(
                "%17s: precision: %6.2f%%; recall: %6.2f%%; FB1: %6.2f  %d"
                % (t, counts.precision, counts.recall, counts.f1, counts.pred_count)
            )
        return "\n".join(lines) + "\n"


def evaluate(gold: Corpus, pred: Corpus) -> EvalReport:
    """Score a predicted corpus against token-parallel gold."""
    if len(gold.documents) != len(pred.documents):
        raise CorpusError(
            f"document count mismatch: {len(gold.documents)} vs {len(pred.documents)}"
        )
    gold_total: dict[str, int] = {}
    pred_total: dict[str, int] = {}
    correct_total: dict[str, int] = {}
    correct_tokens = 0
    tokens = 0
    for d, (gdoc, pdoc) in enumerate(zip(gold.documents, pred.documents)):
        if len(gdoc) != len(pdoc):
            raise CorpusError(
                f"sentence count mismatch in document {d}: {len(gdoc)} vs {len(pdoc)}"
            )
        for gsent, psent in zip(gdoc.sentences, pdoc.sentences):
            if len(gsent) != len(psent):
                raise CorpusError(
                    f"token count mismatch at doc {d} sent {gsent.sent_index}: "
                    f"{len(gsent)} vs {len(psent)}"
                )
            skey = (d, gsent.sent_index)
            gspans = set(extract_chunks(gsent.labels, skey))
            pspans = set(extract_chunks(psent.labels, skey))
            for span in gspans:
                gold_total[span.entity_type] = gold_total.get(span.entity_type, 0) + 1
            for span in pspans:
                pred_total[span.entity_type] = pred_total.get(span.entity_type, 0) + 1
            for span in gspans & pspans:
                correct_total[span.entity_type] = (
                    correct_total.get(span.entity_type, 0) + 1
                )
            tokens += len(gsent)
            correct_tokens += sum(
                g.gold_label == p.gold_label
                for g, p in zip(gsent.tokens, psent.tokens)
            )
    types = sorted(set(gold_total) | set(pred_total))
    per_type = {
        t: MetricCounts(
            gold_total.get(t, 0), pred_total.get(t, 0), correct_total.get(t, 0)
        )
        for t in types
    }
    overall = MetricCounts(
        sum(gold_total.values()),
        sum(pred_total.values()),
        sum(correct_total.values()),
    )
    return EvalReport(
        overall=overall,
        per_type=per_type,
        token_accuracy=100.0 * correct_tokens / tokens if tokens else 0.0,
        token_count=tokens,
    )


def summarize_runs(reports: Sequence[EvalReport]) -> dict[str, dict[str, float]]:
    """Mean and sample standard deviation (n-1) of the overall metrics."""
    if not reports:
        raise ValueError("summarize_runs requires at least one report")

    def stats(values: list[float]) -> dict[str, float]:
        n = len(values)
        mean = sum(values) / n
        if n > 1:
            var = sum((v - mean) ** 2 for v in values) / (n - 1)
            stddev = math.sqrt(var)
        else:
            stddev = 0.0
        return {"mean": mean, "stddev": stddev, "n": n}

    return {
        "precision": stats([r.overall.precision for r in reports]),
        "recall": stats([r.overall.recall for r in reports]),
        "f1": stats([r.overall.f1 for r in reports]),
        "token_accuracy": stats([r.token_accuracy for r in reports]),
    }
