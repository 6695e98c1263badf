"""Command-line interface.

Subcommands: convert, stats, windows, predict, aggregate, eval, run, sweep,
positions. Exit codes: 0 success, 1 usage error, 2 data/config error,
3 backend error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .aggregation import AggregationError, collect, finalize
from .backend import BackendError
from .corpus import (
    CorpusError,
    ParseConfig,
    convert_corpus_iob2,
    corpus_stats,
    detect_scheme,
    parse_conll,
    read_text,
    serialize_conll,
    serialize_predictions,
)
from .evaluation import evaluate, summarize_runs
from .experiment import (
    ConfigError,
    ExperimentConfig,
    RunManifest,
    cell_key,
    config_hash,
    decide,
    derive_label_set,
    load_config,
    load_split,
    make_backend,
    run_strategy,
    sweep_cells,
    window_config_for,
    write_training_examples,
)
from .tokenizer import AlignmentError, VocabError, load_vocab
from .windowing import (
    WindowError,
    build_examples,
    position_sweep,
    read_examples,
    split_long_sentences,
    write_examples,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3

DATA_ERRORS = (
    CorpusError,
    VocabError,
    WindowError,
    AggregationError,
    AlignmentError,
    ConfigError,
    OSError,
    json.JSONDecodeError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parse_file(path: str, encoding: str, parse_config: ParseConfig = ParseConfig()):
    return parse_conll(read_text(path, encoding), parse_config)


def cmd_convert(args) -> int:
    parse_config = ParseConfig(
        token_column=args.token_column,
        label_column=args.label_column,
        delimiter="\t" if args.delimiter == "tab" else None,
    )
    corpus = _parse_file(args.input, args.encoding, parse_config)
    scheme = detect_scheme(corpus)
    if args.scheme != "auto" and args.scheme != scheme:
        print(
            f"note: input declared {args.scheme} but detected {scheme}",
            file=sys.stderr,
        )
    print(f"detected scheme: {scheme}", file=sys.stderr)
    converted = convert_corpus_iob2(corpus)
    with open(args.output, "w", encoding="utf-8") as f:
        f.write(serialize_conll(converted))
    return EXIT_OK


def cmd_stats(args) -> int:
    corpus = _parse_file(args.input, args.encoding)
    stats = corpus_stats(corpus)
    out = stats.to_json() + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(out)
    else:
        sys.stdout.write(out)
    return EXIT_OK


def _windows_for(config: ExperimentConfig, split: str, strategy: str):
    corpus = load_split(config, split)
    vocab = load_vocab(config.vocab)
    wcfg = window_config_for(config, strategy)
    split_corpus = split_long_sentences(corpus, wcfg, vocab)
    examples = build_examples(split_corpus, wcfg, vocab)
    return corpus, split_corpus, vocab, wcfg, examples


def cmd_windows(args) -> int:
    config = load_config(args.config)
    corpus, split_corpus, vocab, _, examples = _windows_for(
        config, args.split, args.strategy
    )
    with open(args.out, "w", encoding="utf-8") as f:
        if args.labels:
            label_set = derive_label_set(config, [corpus])
            write_training_examples(examples, split_corpus, vocab, label_set, f)
        else:
            write_examples(examples, vocab, f)
    print(f"wrote {len(examples)} examples to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_predict(args) -> int:
    config = load_config(args.config)
    vocab = load_vocab(config.vocab)
    with open(args.windows, encoding="utf-8") as f:
        examples = read_examples(f)
    label_set = derive_label_set(config, [load_split(config, args.split)])
    backend = make_backend(config, label_set, vocab, config.seed)
    responses = backend.predict(examples)
    np.save(args.out, np.stack(responses))
    print(f"wrote probabilities for {len(examples)} examples", file=sys.stderr)
    return EXIT_OK


def cmd_aggregate(args) -> int:
    config = load_config(args.config)
    corpus, split_corpus, vocab, _, _ = _windows_for(
        config, args.split, args.decider
    )
    with open(args.windows, encoding="utf-8") as f:
        examples = read_examples(f)
    probs = np.load(args.probs)
    label_set = derive_label_set(config, [corpus])
    store = collect(examples, list(probs))
    labels = decide(store, args.decider, label_set, config.tie_break)
    pred = finalize(labels, split_corpus)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(serialize_predictions(corpus, pred))
    return EXIT_OK


def cmd_eval(args) -> int:
    text = read_text(args.pred, args.encoding)
    gold = parse_conll(text, ParseConfig(token_column=0, label_column=-2))
    pred = parse_conll(text, ParseConfig(token_column=0, label_column=-1))
    report = evaluate(gold, pred)
    sys.stdout.write(report.to_text())
    if args.json:
        with open(args.json, "w", encoding="utf-8") as f:
            f.write(report.to_json() + "\n")
    return EXIT_OK


def cmd_run(args) -> int:
    config = load_config(args.config)
    strategies = args.strategies or list(config.strategies)
    os.makedirs(args.out, exist_ok=True)
    corpus = load_split(config, args.split)
    vocab = load_vocab(config.vocab)
    label_set = derive_label_set(config, [corpus])

    manifest = RunManifest(config_hash=config_hash(config), seeds=[config.seed])
    manifest_path = os.path.join(args.out, "manifest.json")

    cache: dict[str, tuple] = {}
    for strategy in strategies:
        wcfg = window_config_for(config, strategy)
        cache_key = f"{wcfg.strategy}:{wcfg.wrap_mode}:{wcfg.start_pos}"
        if cache_key not in cache:
            split_corpus = split_long_sentences(corpus, wcfg, vocab)
            examples = build_examples(split_corpus, wcfg, vocab)
            backend = make_backend(config, label_set, vocab, config.seed)
            responses = backend.predict(examples)
            cache[cache_key] = (split_corpus, examples, responses)
        split_corpus, examples, responses = cache[cache_key]
        pred, report = run_strategy(
            strategy, corpus, split_corpus, examples, responses,
            label_set, config.tie_break,
        )
        pred_path = os.path.join(args.out, f"{strategy}.pred.conll")
        report_path = os.path.join(args.out, f"{strategy}.report.json")
        text_path = os.path.join(args.out, f"{strategy}.report.txt")
        with open(pred_path, "w", encoding="utf-8") as f:
            f.write(serialize_predictions(corpus, pred))
        with open(report_path, "w", encoding="utf-8") as f:
            f.write(report.to_json() + "\n")
        with open(text_path, "w", encoding="utf-8") as f:
            f.write(report.to_text())
        manifest.outputs[f"{strategy}.pred"] = pred_path
        manifest.outputs[f"{strategy}.report"] = report_path
        manifest.outputs[f"{strategy}.report_text"] = text_path
        print(f"{strategy}: F1 {report.overall.f1:.2f}", file=sys.stderr)
    manifest.save(manifest_path)
    return EXIT_OK


def cmd_positions(args) -> int:
    config = load_config(args.config)
    corpus = load_split(config, args.split)
    vocab = load_vocab(config.vocab)
    label_set = derive_label_set(config, [corpus])
    rows = []
    for pos in position_sweep(config.window):
        wcfg = replace(config.window, strategy="positioned", start_pos=pos)
        split_corpus = split_long_sentences(corpus, wcfg, vocab)
        examples = build_examples(split_corpus, wcfg, vocab)
        reports = []
        for rep in range(config.repetitions):
            backend = make_backend(config, label_set, vocab, config.seed + rep)
            responses = backend.predict(examples)
            _, report = run_strategy(
                "first", corpus, split_corpus, examples, responses,
                label_set, config.tie_break,
            )
            reports.append(report)
        summary = summarize_runs(reports)["f1"]
        rows.append((pos, summary["mean"], summary["stddev"], summary["n"]))
        print(f"position {pos}: mean F1 {summary['mean']:.2f}", file=sys.stderr)
    with open(args.out, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["position", "mean_f1", "stddev", "n"])
        for row in rows:
            writer.writerow(row)
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    if config.backend.type != "remote":
        raise ConfigError(
            "sweep requires a remote backend: fine-tuning lives in the sidecar"
        )
    os.makedirs(args.out, exist_ok=True)
    manifest_path = os.path.join(args.out, "manifest.json")
    chash = config_hash(config)
    if os.path.exists(manifest_path):
        manifest = RunManifest.load(manifest_path)
        if manifest.config_hash != chash:
            raise ConfigError(
                f"existing manifest in {args.out} was produced by a different config"
            )
    else:
        manifest = RunManifest(config_hash=chash)

    corpus_train = load_split(config, "train")
    corpus_dev = load_split(config, "dev")
    vocab = load_vocab(config.vocab)
    label_set = derive_label_set(config, [corpus_train, corpus_dev])

    train_path = os.path.join(args.out, "train.windows.jsonl")
    dev_path = os.path.join(args.out, "dev.windows.jsonl")
    wcfg = window_config_for(config, args.decider)
    train_split = split_long_sentences(corpus_train, wcfg, vocab)
    dev_split = split_long_sentences(corpus_dev, wcfg, vocab)
    if not os.path.exists(train_path):
        with open(train_path, "w", encoding="utf-8") as f:
            write_training_examples(
                build_examples(train_split, wcfg, vocab),
                train_split, vocab, label_set, f,
            )
    dev_examples = build_examples(dev_split, wcfg, vocab)
    if not os.path.exists(dev_path):
        with open(dev_path, "w", encoding="utf-8") as f:
            write_examples(dev_examples, vocab, f)
    manifest.outputs["train_windows"] = train_path
    manifest.outputs["dev_windows"] = dev_path

    backend = make_backend(config, label_set, vocab, config.seed)
    for lr, bs, ep in sweep_cells(config.grid):
        key = cell_key(lr, bs, ep)
        if key in manifest.completed:
            continue
        f1s = []
        checkpoints = []
        for rep in range(config.repetitions):
            seed = config.seed + rep
            checkpoint = backend.finetune(
                train_path,
                {"learning_rate": lr, "batch_size": bs, "epochs": ep},
                seed,
            )
            checkpoints.append(checkpoint)
            backend.checkpoint_id = checkpoint
            responses = backend.predict(dev_examples)
            _, report = run_strategy(
                args.decider, corpus_dev, dev_split, dev_examples, responses,
                label_set, config.tie_break,
            )
            f1s.append(report.overall.f1)
        mean = sum(f1s) / len(f1s)
        manifest.completed[key] = {
            "learning_rate": lr,
            "batch_size": bs,
            "epochs": ep,
            "mean_f1": mean,
            "f1s": f1s,
            "checkpoints": checkpoints,
        }
        manifest.seeds = [config.seed + r for r in range(config.repetitions)]
        manifest.save(manifest_path)
        print(f"{key}: mean F1 {mean:.2f}", file=sys.stderr)

    best_key = None
    best_mean = float("-inf")
    for lr, bs, ep in sweep_cells(config.grid):
        key = cell_key(lr, bs, ep)
        mean = manifest.completed[key]["mean_f1"]
        if mean > best_mean:
            best_key, best_mean = key, mean
    best = manifest.completed[best_key]
    best_path = os.path.join(args.out, "best.json")
    with open(best_path, "w", encoding="utf-8") as f:
        json.dump(best, f, indent=2, sort_keys=True)
        f.write("\n")
    csv_path = os.path.join(args.out, "sweep.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["learning_rate", "batch_size", "epochs", "mean_f1"])
        for lr, bs, ep in sweep_cells(config.grid):
            writer.writerow([lr, bs, ep, manifest.completed[cell_key(lr, bs, ep)]["mean_f1"]])
    manifest.outputs["best"] = best_path
    manifest.outputs["sweep_csv"] = csv_path
    manifest.save(manifest_path)
    print(f"best: {best_key} mean F1 {best_mean:.2f}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctxner", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="normalize a corpus to UTF-8 IOB2")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--encoding", default="utf-8", choices=["utf-8", "latin-1"])
    p.add_argument("--scheme", default="auto", choices=["auto", "iob1", "iob2"])
    p.add_argument("--token-column", type=int, default=0)
    p.add_argument("--label-column", type=int, default=-1)
    p.add_argument("--delimiter", default="whitespace", choices=["whitespace", "tab"])
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("stats", help="corpus statistics as JSON")
    p.add_argument("input")
    p.add_argument("--encoding", default="utf-8", choices=["utf-8", "latin-1"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("windows", help="build and export input windows")
    p.add_argument("--config", required=True)
    p.add_argument("--split", default="dev", choices=["train", "dev", "test"])
    p.add_argument("--strategy", default="first",
                   choices=["single", "first", "cmv-vote", "cmv-sum"])
    p.add_argument("--labels", action="store_true",
                   help="include gold label ids and loss weights (training export)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_windows)

    p = sub.add_parser("predict", help="run a backend over exported windows")
    p.add_argument("--config", required=True)
    p.add_argument("--split", default="dev", choices=["train", "dev", "test"])
    p.add_argument("--windows", required=True)
    p.add_argument("--out", required=True, help="output .npy probability array")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("aggregate", help="turn probabilities into labels")
    p.add_argument("--config", required=True)
    p.add_argument("--split", default="dev", choices=["train", "dev", "test"])
    p.add_argument("--windows", required=True)
    p.add_argument("--probs", required=True)
    p.add_argument("--decider", default="cmv-vote",
                   choices=["single", "first", "cmv-vote", "cmv-sum"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("eval", help="score a token/gold/pred column file")
    p.add_argument("pred")
    p.add_argument("--encoding", default="utf-8", choices=["utf-8", "latin-1"])
    p.add_argument("--json", help="also write a JSON report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="end-to-end windows/predict/aggregate/eval")
    p.add_argument("--config", required=True)
    p.add_argument("--split", default="dev", choices=["train", "dev", "test"])
    p.add_argument("--out", required=True)
    p.add_argument("--strategies", nargs="*",
                   choices=["single", "first", "cmv-vote", "cmv-sum"])
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("positions", help="F1 per focus start position (CSV)")
    p.add_argument("--config", required=True)
    p.add_argument("--split", default="dev", choices=["train", "dev", "test"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_positions)

    p = sub.add_parser("sweep", help="hyperparameter grid search via the sidecar")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--decider", default="cmv-vote",
                   choices=["single", "first", "cmv-vote", "cmv-sum"])
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except BackendError as e:
        print(f"backend error: {e}", file=sys.stderr)
        return EXIT_BACKEND
    except DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
