"""Experiment configuration, manifests, and pipeline orchestration.

The CLI front-end parses arguments; everything it runs lives here so the
same entry points are usable from tests and notebooks. A run is fully
determined by (config file, seed): corpora and vocabularies are loaded from
the configured paths, windows are built, a backend produces distributions,
and the aggregation deciders turn them into labeled corpora and reports.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .aggregation import (
    cmv_label_vote,
    cmv_softmax_sum,
    collect,
    decide_first,
    finalize,
)
from .backend import Backend, LabelSet, MockLexiconBackend, RemoteBackend
from .corpus import (
    Corpus,
    ParseConfig,
    convert_corpus_iob2,
    parse_conll,
    read_text,
)
from .evaluation import EvalReport, evaluate
from .tokenizer import Vocab, load_vocab
from .windowing import (
    PIECE,
    InputExample,
    WindowConfig,
    build_examples,
    example_to_dict,
    split_long_sentences,
)

STRATEGY_NAMES = ("single", "first", "cmv-vote", "cmv-sum")

PAPER_GRID = {
    "learning_rates": [2e-5, 3e-5, 5e-5],
    "batch_sizes": [2, 4, 8, 16],
    "epochs": [1, 2, 3, 4],
}


class ConfigError(ValueError):
    pass


def _expect(obj: Mapping, key: str, kind, path: str, default=None, required=False):
    if key not in obj:
        if required:
            raise ConfigError(f"{path}.{key}: missing required field")
        return default
    value = obj[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is int:
        raise ConfigError(
            f"{path}.{key}: expected {getattr(kind, '__name__', kind)}, "
            f"got {type(value).__name__} {value!r}"
        )
    return value


@dataclass(frozen=True)
class DataConfig:
    train: Optional[str] = None
    dev: Optional[str] = None
    test: Optional[str] = None

    def path_for(self, split: str) -> str:
        value = getattr(self, split, None)
        if value is None:
            raise ConfigError(f"data.{split}: not configured")
        return value


@dataclass(frozen=True)
class BackendConfig:
    type: str = "mock"
    gazetteer: Optional[str] = None
    context_bonus: float = 0.5
    noise_scale: float = 0.2
    endpoint: Optional[str] = None
    max_batch_size: int = 32
    timeout: float = 60.0


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig
    vocab: str
    backend: BackendConfig = BackendConfig()
    window: WindowConfig = WindowConfig()
    strategies: tuple[str, ...] = ("single", "first", "cmv-vote", "cmv-sum")
    tie_break: str = "sum_prob"
    repetitions: int = 5
    grid: dict = field(default_factory=lambda: dict(PAPER_GRID))
    seed: int = 0

    def as_dict(self) -> dict:
        return {
            "data": {
                "train": self.data.train,
                "dev": self.data.dev,
                "test": self.data.test,
            },
            "vocab": self.vocab,
            "backend": {
                "type": self.backend.type,
                "gazetteer": self.backend.gazetteer,
                "context_bonus": self.backend.context_bonus,
                "noise_scale": self.backend.noise_scale,
                "endpoint": self.backend.endpoint,
                "max_batch_size": self.backend.max_batch_size,
                "timeout": self.backend.timeout,
            },
            "window": {
                "max_seq_len": self.window.max_seq_len,
                "strategy": self.window.strategy,
                "wrap_mode": self.window.wrap_mode,
                "start_pos": self.window.start_pos,
                "position_interval": self.window.position_interval,
            },
            "strategies": list(self.strategies),
            "tie_break": self.tie_break,
            "repetitions": self.repetitions,
            "grid": self.grid,
            "seed": self.seed,
        }


def config_hash(config: ExperimentConfig) -> str:
    canon = json.dumps(config.as_dict(), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def load_config(path: str) -> ExperimentConfig:
    """Load and validate a YAML experiment config.

    Relative paths are resolved against the config file's directory; all
    configured paths must exist at load time.
    """
    with open(path, encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: not valid YAML: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p: Optional[str]) -> Optional[str]:
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.join(base, p)

    data_raw = _expect(raw, "data", dict, "config", default={})
    data = DataConfig(
        train=resolve(_expect(data_raw, "train", str, "config.data")),
        dev=resolve(_expect(data_raw, "dev", str, "config.data")),
        test=resolve(_expect(data_raw, "test", str, "config.data")),
    )
    vocab = resolve(_expect(raw, "vocab", str, "config", required=True))

    backend_raw = _expect(raw, "backend", dict, "config", default={})
    backend = BackendConfig(
        type=_expect(backend_raw, "type", str, "config.backend", default="mock"),
        gazetteer=resolve(_expect(backend_raw, "gazetteer", str, "config.backend")),
        context_bonus=_expect(
            backend_raw, "context_bonus", float, "config.backend", default=0.5
        ),
        noise_scale=_expect(
            backend_raw, "noise_scale", float, "config.backend", default=0.2
        ),
        endpoint=_expect(backend_raw, "endpoint", str, "config.backend"),
        max_batch_size=_expect(
            backend_raw, "max_batch_size", int, "config.backend", default=32
        ),
        timeout=_expect(backend_raw, "timeout", float, "config.backend", default=60.0),
    )
    if backend.type not in ("mock", "remote"):
        raise ConfigError(f"config.backend.type: unknown backend {backend.type!r}")
    if backend.type == "remote" and not backend.endpoint:
        raise ConfigError("config.backend.endpoint: required for remote backend")

    window_raw = _expect(raw, "window", dict, "config", default={})
    try:
        window = WindowConfig(
            max_seq_len=_expect(
                window_raw, "max_seq_len", int, "config.window", default=512
            ),
            strategy=_expect(
                window_raw, "strategy", str, "config.window", default="first"
            ),
            wrap_mode=_expect(
                window_raw, "wrap_mode", str, "config.window", default="document"
            ),
            start_pos=_expect(window_raw, "start_pos", int, "config.window"),
            position_interval=_expect(
                window_raw, "position_interval", int, "config.window", default=32
            ),
        )
    except ValueError as e:
        raise ConfigError(f"config.window: {e}") from None

    strategies = tuple(
        _expect(raw, "strategies", list, "config", default=list(STRATEGY_NAMES))
    )
    for s in strategies:
        if s not in STRATEGY_NAMES:
            raise ConfigError(f"config.strategies: unknown strategy {s!r}")

    tie_break = _expect(raw, "tie_break", str, "config", default="sum_prob")
    if tie_break not in ("sum_prob", "first_occurrence"):
        raise ConfigError(f"config.tie_break: unknown policy {tie_break!r}")

    repetitions = _expect(raw, "repetitions", int, "config", default=5)
    if repetitions < 1:
        raise ConfigError("config.repetitions: must be >= 1")

    grid_raw = _expect(raw, "grid", dict, "config", default={})
    grid = {
        "learning_rates": [
            float(v)
            for v in _expect(
                grid_raw, "learning_rates", list, "config.grid",
                default=PAPER_GRID["learning_rates"],
            )
        ],
        "batch_sizes": _expect(
            grid_raw, "batch_sizes", list, "config.grid",
            default=PAPER_GRID["batch_sizes"],
        ),
        "epochs": _expect(
            grid_raw, "epochs", list, "config.grid", default=PAPER_GRID["epochs"]
        ),
    }

    seed = _expect(raw, "seed", int, "config", default=0)

    config = ExperimentConfig(
        data=data,
        vocab=vocab,
        backend=backend,
        window=window,
        strategies=strategies,
        tie_break=tie_break,
        repetitions=repetitions,
        grid=grid,
        seed=seed,
    )
    for label, p in [
        ("config.data.train", data.train),
        ("config.data.dev", data.dev),
        ("config.data.test", data.test),
        ("config.vocab", vocab),
        ("config.backend.gazetteer", backend.gazetteer),
    ]:
        if p is not None and not os.path.exists(p):
            raise ConfigError(f"{label}: path does not exist: {p}")
    return config


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str = __version__
    seeds: list[int] = field(default_factory=list)
    outputs: dict[str, str] = field(default_factory=dict)
    completed: dict[str, dict] = field(default_factory=dict)
    created: str = ""
    updated: str = ""

    @staticmethod
    def _now() -> str:
        return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())

    def save(self, path: str) -> None:
        self.updated = self._now()
        if not self.created:
            self.created = self.updated
        with open(path, "w", encoding="utf-8") as f:
            json.dump(
                {
                    "config_hash": self.config_hash,
                    "tool_version": self.tool_version,
                    "seeds": self.seeds,
                    "outputs": self.outputs,
                    "completed": self.completed,
                    "created": self.created,
                    "updated": self.updated,
                },
                f,
                indent=2,
                sort_keys=True,
            )
            f.write("\n")

    @classmethod
    def load(cls, path: str) -> "RunManifest":
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        return cls(
            config_hash=raw["config_hash"],
            tool_version=raw.get("tool_version", ""),
            seeds=raw.get("seeds", []),
            outputs=raw.get("outputs", {}),
            completed=raw.get("completed", {}),
            created=raw.get("created", ""),
            updated=raw.get("updated", ""),
        )


def load_split(config: ExperimentConfig, split: str, encoding: str = "utf-8") -> Corpus:
    """Parse one configured data split and normalize it to IOB2."""
    text = read_text(config.data.path_for(split), encoding)
    return convert_corpus_iob2(parse_conll(text, ParseConfig()))


def derive_label_set(config: ExperimentConfig, corpora: Sequence[Corpus]) -> LabelSet:
    """Fixed label order for a run: corpus types plus mock gazetteer types."""
    types: set[str] = set()
    for corpus in corpora:
        types |= set(corpus.type_set)
    if config.backend.type == "mock" and config.backend.gazetteer:
        with open(config.backend.gazetteer, encoding="utf-8") as f:
            types |= set(json.load(f).values())
    return LabelSet.from_types(sorted(types))


def make_backend(
    config: ExperimentConfig, label_set: LabelSet, vocab: Vocab, seed: int
) -> Backend:
    if config.backend.type == "mock":
        gazetteer: dict[str, str] = {}
        if config.backend.gazetteer:
            with open(config.backend.gazetteer, encoding="utf-8") as f:
                gazetteer = json.load(f)
        return MockLexiconBackend(
            label_set=label_set,
            max_seq_len=config.window.max_seq_len,
            vocab=vocab,
            gazetteer=gazetteer,
            context_bonus=config.backend.context_bonus,
            noise_scale=config.backend.noise_scale,
            seed=seed,
        )
    return RemoteBackend(
        endpoint=config.backend.endpoint,
        label_set=label_set,
        max_seq_len=config.window.max_seq_len,
        vocab=vocab,
        max_batch_size=config.backend.max_batch_size,
        timeout=config.backend.timeout,
    )


def window_config_for(config: ExperimentConfig, strategy: str) -> WindowConfig:
    """Map a run strategy to the window construction it needs."""
    if strategy == "single":
        return replace(config.window, strategy="single", start_pos=None)
    if strategy in ("cmv-vote", "cmv-sum") and config.window.strategy == "single":
        raise ConfigError("CMV requires multi-context windows")
    if config.window.strategy == "single":
        return replace(config.window, strategy="first", start_pos=None)
    return config.window


def decide(store, strategy: str, label_set: LabelSet, tie_break: str):
    if strategy in ("single", "first"):
        return decide_first(store, label_set)
    if strategy == "cmv-vote":
        return cmv_label_vote(store, label_set, tie_break)
    if strategy == "cmv-sum":
        return cmv_softmax_sum(store, label_set)
    raise ConfigError(f"unknown strategy {strategy!r}")


def run_strategy(
    strategy: str,
    gold: Corpus,
    split_corpus: Corpus,
    examples: Sequence[InputExample],
    responses: Sequence[np.ndarray],
    label_set: LabelSet,
    tie_break: str,
) -> tuple[Corpus, EvalReport]:
    """Aggregate responses for one strategy and score against gold."""
    store = collect(examples, responses)
    labels = decide(store, strategy, label_set, tie_break)
    pred = finalize(labels, split_corpus)
    return pred, evaluate(gold, pred)


def training_arrays(
    example: InputExample,
    sentences_by_key: Mapping[tuple, Any],
    label_set: LabelSet,
) -> tuple[list[int], list[int]]:
    """Per-position gold label ids and loss weights for a training export.

    [CLS] and [PAD] get weight 0, everything else (including [SEP]) gets 1;
    continuation pieces carry the I- form of their token's label.
    """
    o_id = label_set.o_index
    label_ids: list[int] = []
    weights: list[int] = []
    for item in example.items:
        if item.kind == PIECE:
            origin = item.piece.origin
            sentence = sentences_by_key[tuple(origin[:3])]
            gold = sentence.tokens[origin.token_index].gold_label
            if item.piece.is_continuation:
                gold = gold.as_inside()
            label_ids.append(label_set.index(gold))
            weights.append(1)
        else:
            label_ids.append(o_id)
            weights.append(1 if item.kind == "SEP" else 0)
    return label_ids, weights


def write_training_examples(
    examples: Sequence[InputExample],
    split_corpus: Corpus,
    vocab: Vocab,
    label_set: LabelSet,
    fp,
) -> None:
    """Window export extended with label_ids and weights, for fine-tuning."""
    sentences_by_key = {tuple(s.key): s for s in split_corpus.sentences()}
    for example in examples:
        obj = example_to_dict(example, vocab)
        label_ids, weights = training_arrays(example, sentences_by_key, label_set)
        obj["label_ids"] = label_ids
        obj["weights"] = weights
        fp.write(json.dumps(obj, sort_keys=True))
        fp.write("\n")


def sweep_cells(grid: Mapping) -> list[tuple[float, int, int]]:
    """Grid cells in tie-break order: lower lr, smaller batch, fewer epochs."""
    return [
        (lr, bs, ep)
        for lr in sorted(grid["learning_rates"])
        for bs in sorted(grid["batch_sizes"])
        for ep in sorted(grid["epochs"])
    ]


def cell_key(lr: float, bs: int, ep: int) -> str:
    return f"lr={lr:g},bs={bs},ep={ep}"
