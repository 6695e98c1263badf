"""Model-inference contract plus two implementations.

A backend maps a batch of input examples to per-position probability
distributions over the label set (one row per window position, including
special positions, which callers ignore via provenance). The mock backend
is a deterministic, context-sensitive stand-in that makes the full pipeline
testable without a trained model; the remote backend speaks a JSON wire
protocol to an inference sidecar.

Wire protocol ("ctxner/1"): HTTP POST /predict with body
``{protocol_version, label_set, max_seq_len, examples: [{piece_ids,
item_kinds}]}`` answered by ``{probabilities: [[[...]]]}``; errors come back
as ``{error: {code, message}}``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import requests

from .corpus import Label
from .tokenizer import CONTINUATION_PREFIX, Vocab
from .windowing import PIECE, InputExample, example_piece_ids

PROTOCOL_VERSION = "ctxner/1"

PROB_TOLERANCE = 1e-6


class BackendError(RuntimeError):
    pass


class TransportError(BackendError):
    """Endpoint unreachable, timeout, or non-JSON response."""


class ProtocolError(BackendError):
    """Version mismatch or a structured error returned by the server."""


class ShapeError(BackendError):
    """Response shape does not match the request."""


@dataclass(frozen=True)
class LabelSet:
    labels: tuple[str, ...]

    def __post_init__(self):
        if "O" not in self.labels:
            raise ValueError("label set must contain O")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("label set contains duplicates")

    @classmethod
    def from_types(cls, types: Sequence[str]) -> "LabelSet":
        labels = ["O"]
        for t in sorted(set(types)):
            labels += [f"B-{t}", f"I-{t}"]
        return cls(tuple(labels))

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: Label | str) -> int:
        return self.labels.index(str(label))

    def label(self, index: int) -> Label:
        return Label.parse(self.labels[index])

    @property
    def o_index(self) -> int:
        return self.labels.index("O")


def validate_response(
    responses: Sequence[np.ndarray], n_examples: int, max_seq_len: int, n_labels: int
) -> None:
    """Check the shape contract: one distribution per position per example."""
    if len(responses) != n_examples:
        raise ShapeError(f"expected {n_examples} responses, got {len(responses)}")
    for i, resp in enumerate(responses):
        if resp.shape != (max_seq_len, n_labels):
            raise ShapeError(
                f"example {i}: response shape {resp.shape}, "
                f"expected {(max_seq_len, n_labels)}"
            )
        sums = resp.sum(axis=1)
        bad = np.where(np.abs(sums - 1.0) > PROB_TOLERANCE)[0]
        if bad.size:
            raise ShapeError(
                f"example {i}: distribution at position {bad[0]} sums to {sums[bad[0]]!r}"
            )


class Backend:
    """Interface: predict(batch) -> one (max_seq_len, n_labels) array per example."""

    label_set: LabelSet
    max_seq_len: int

    def predict(self, batch: Sequence[InputExample]) -> list[np.ndarray]:
        raise NotImplementedError


@dataclass
class MockLexiconBackend(Backend):
    """Deterministic context-sensitive mock.

    Scores per position combine a gazetteer hit on the token itself, a bonus
    when the same token text also occurs in another complete sentence of the
    window, and seeded noise that varies with the window position. The noise
    stream is a pure function of (seed, example content), so identical
    examples always get identical distributions while the same sentence seen
    in two different windows does not.
    """

    label_set: LabelSet
    max_seq_len: int
    vocab: Vocab
    gazetteer: Mapping[str, str] = field(default_factory=dict)
    context_bonus: float = 0.5
    noise_scale: float = 0.0
    seed: int = 0
    base_weight: float = 1.0
    entity_weight: float = 1.4

    def predict(self, batch: Sequence[InputExample]) -> list[np.ndarray]:
        out = [self._predict_one(example) for example in batch]
        validate_response(out, len(batch), self.max_seq_len, len(self.label_set))
        return out

    def _predict_one(self, example: InputExample) -> np.ndarray:
        n_labels = len(self.label_set)
        scores = np.zeros((self.max_seq_len, n_labels))
        scores[:, self.label_set.o_index] = self.base_weight

        tokens = self._window_tokens(example)
        complete_texts: dict[tuple, set[str]] = {}
        for (span_key, _), (text, _) in tokens.items():
            complete = next(
                s.complete for s in example.spans if tuple(s.key) == span_key
            )
            if complete:
                complete_texts.setdefault(span_key, set()).add(text)

        prev_hit: dict[tuple, Optional[str]] = {}
        for (span_key, token_index), (text, positions) in sorted(tokens.items()):
            hit = self.gazetteer.get(text)
            prev = prev_hit.get((span_key, token_index - 1))
            prev_hit[(span_key, token_index)] = hit
            if hit is None:
                continue
            prefix = "I" if prev == hit else "B"
            recurs = any(
                text in texts
                for key, texts in complete_texts.items()
                if key != span_key
            )
            weight = self.entity_weight + (self.context_bonus if recurs else 0.0)
            first, rest = positions[0], positions[1:]
            scores[first, self.label_set.index(f"{prefix}-{hit}")] += weight
            for pos in rest:
                scores[pos, self.label_set.index(f"I-{hit}")] += weight

        if self.noise_scale:
            rng = np.random.default_rng(self._example_seed(example))
            scores = scores + rng.normal(
                0.0, self.noise_scale, size=(self.max_seq_len, n_labels)
            )
        scores = np.maximum(scores, 1e-9)
        return scores / scores.sum(axis=1, keepdims=True)

    def _window_tokens(
        self, example: InputExample
    ) -> dict[tuple, tuple[str, list[int]]]:
        """Map (sentence key, token index) -> (token text, item positions)."""
        groups: dict[tuple, tuple[list[str], list[int]]] = {}
        for pos, item in enumerate(example.items):
            if item.kind != PIECE:
                continue
            origin = item.piece.origin
            key = (tuple(origin[:3]), origin.token_index)
            text = self.vocab.piece_text(item.piece.piece_id)
            if item.piece.is_continuation and text.startswith(CONTINUATION_PREFIX):
                text = text[len(CONTINUATION_PREFIX):]
            parts, positions = groups.setdefault(key, ([], []))
            parts.append(text)
            positions.append(pos)
        return {
            key: ("".join(parts), positions)
            for key, (parts, positions) in groups.items()
        }

    def _example_seed(self, example: InputExample) -> int:
        digest = hashlib.sha256()
        digest.update(str(self.seed).encode())
        digest.update(bytes(str(example_piece_ids(example, self.vocab)), "ascii"))
        return int.from_bytes(digest.digest()[:8], "little")


@dataclass
class RemoteBackend(Backend):
    """Client for an inference sidecar speaking the ctxner/1 protocol."""

    endpoint: str
    label_set: LabelSet
    max_seq_len: int
    vocab: Vocab
    max_batch_size: int = 32
    timeout: float = 60.0
    checkpoint_id: Optional[str] = None
    _handshaken: bool = field(default=False, repr=False)

    def handshake(self) -> None:
        try:
            resp = requests.get(self.endpoint.rstrip("/") + "/", timeout=self.timeout)
            data = resp.json()
        except (requests.RequestException, ValueError) as e:
            raise TransportError(f"handshake with {self.endpoint} failed: {e}") from None
        version = data.get("protocol")
        if version != PROTOCOL_VERSION:
            raise ProtocolError(
                f"server speaks {version!r}, client requires {PROTOCOL_VERSION!r}"
            )
        self._handshaken = True

    def predict(self, batch: Sequence[InputExample]) -> list[np.ndarray]:
        if not self._handshaken:
            self.handshake()
        out: list[np.ndarray] = []
        for start in range(0, len(batch), self.max_batch_size):
            chunk = batch[start : start + self.max_batch_size]
            out.extend(self._predict_chunk(chunk, start // self.max_batch_size))
        validate_response(out, len(batch), self.max_seq_len, len(self.label_set))
        return out

    def _predict_chunk(
        self, chunk: Sequence[InputExample], batch_index: int
    ) -> list[np.ndarray]:
        body = {
            "protocol_version": PROTOCOL_VERSION,
            "label_set": list(self.label_set.labels),
            "max_seq_len": self.max_seq_len,
            "examples": [
                {
                    "piece_ids": example_piece_ids(example, self.vocab),
                    "item_kinds": [item.kind for item in example.items],
                }
                for example in chunk
            ],
        }
        if self.checkpoint_id is not None:
            body["checkpoint_id"] = self.checkpoint_id
        data = self._post("/predict", body, batch_index)
        probs = data.get("probabilities")
        if probs is None or len(probs) != len(chunk):
            raise ShapeError(
                f"batch {batch_index}: expected probabilities for {len(chunk)} examples"
            )
        return [np.asarray(p, dtype=np.float64) for p in probs]

    def finetune(
        self, export_path: str, params: Mapping, seed: int
    ) -> str:
        """Request a fine-tune run on an exported window file; returns checkpoint id."""
        with open(export_path, encoding="utf-8") as f:
            examples = [json.loads(line) for line in f if line.strip()]
        body = {
            "protocol_version": PROTOCOL_VERSION,
            "label_set": list(self.label_set.labels),
            "max_seq_len": self.max_seq_len,
            "examples": examples,
            "config": dict(params),
            "seed": seed,
        }
        data = self._post("/finetune", body, 0)
        checkpoint = data.get("checkpoint_id")
        if not checkpoint:
            raise ProtocolError("finetune response carries no checkpoint_id")
        return str(checkpoint)

    def _post(self, path: str, body: dict, batch_index: int) -> dict:
        url = self.endpoint.rstrip("/") + path
        try:
            resp = requests.post(url, json=body, timeout=self.timeout)
        except requests.Timeout as e:
            raise TransportError(f"batch {batch_index}: timeout calling {url}") from None
        except requests.RequestException as e:
            raise TransportError(f"batch {batch_index}: {e}") from None
        try:
            data = resp.json()
        except ValueError:
            raise TransportError(
                f"batch {batch_index}: non-JSON response (HTTP {resp.status_code})"
            ) from None
        if "error" in data:
            err = data["error"]
            raise ProtocolError(
                f"batch {batch_index}: server error {err.get('code')}: {err.get('message')}"
            )
        version = data.get("protocol_version", PROTOCOL_VERSION)
        if version != PROTOCOL_VERSION:
            raise ProtocolError(
                f"batch {batch_index}: server answered with protocol {version!r}"
            )
        return data
