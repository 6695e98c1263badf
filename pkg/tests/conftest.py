from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from ctxner.backend import PROTOCOL_VERSION
from ctxner.corpus import Corpus, Document, Label, Sentence, Token
from ctxner.tokenizer import SPECIAL_TOKENS, Vocab


def label(text: str) -> Label:
    return Label.parse(text)


def sentence(pairs, doc_index=0, sent_index=0, split_part=None) -> Sentence:
    tokens = tuple(Token(text, label(tag)) for text, tag in pairs)
    return Sentence(tokens, doc_index, sent_index, split_part)


def corpus_of(docs, has_doc_boundaries=True, types=None) -> Corpus:
    """docs: list of documents, each a list of [(text, tag), ...] sentences."""
    documents = []
    seen_types = set()
    for d, doc in enumerate(docs):
        sentences = []
        for s, pairs in enumerate(doc):
            sent = sentence(pairs, doc_index=d, sent_index=s)
            sentences.append(sent)
            for tok in sent.tokens:
                if tok.gold_label.entity_type:
                    seen_types.add(tok.gold_label.entity_type)
        documents.append(Document(tuple(sentences)))
    return Corpus(
        tuple(documents),
        frozenset(types if types is not None else seen_types),
        has_doc_boundaries,
    )


def vocab_of(*extra: str) -> Vocab:
    return Vocab.from_pieces(list(SPECIAL_TOKENS) + list(extra))


@pytest.fixture
def letter_vocab() -> Vocab:
    return vocab_of("x", "y", "z", "w", "v")


class SidecarDouble(BaseHTTPRequestHandler):
    """Scriptable stand-in for the inference sidecar.

    behavior: uniform | tagging | bad-shape | error. finetune_fail_after,
    when set, makes /finetune answer with an error once that many finetune
    calls have been served (for resumability tests).
    """

    behavior = "uniform"
    protocol = PROTOCOL_VERSION
    finetune_fail_after = None
    calls: list = []
    finetune_count = 0

    def log_message(self, *args):
        pass

    def do_GET(self):
        self._reply({"protocol": self.protocol})

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        type(self).calls.append((self.path, len(body.get("examples", []))))
        if self.path == "/predict":
            self._predict(body)
        elif self.path == "/finetune":
            cls = type(self)
            cls.finetune_count += 1
            if (
                cls.finetune_fail_after is not None
                and cls.finetune_count > cls.finetune_fail_after
            ):
                self._reply({"error": {"code": "oom", "message": "configured failure"}})
                return
            self._reply({"checkpoint_id": f"ckpt-{cls.finetune_count}"})
        else:
            self._reply({"error": {"code": "not-found", "message": self.path}})

    def _predict(self, body):
        n_labels = len(body["label_set"])
        max_seq_len = body["max_seq_len"]
        if self.behavior == "uniform":
            probs = [
                [[1.0 / n_labels] * n_labels for _ in range(max_seq_len)]
                for _ in body["examples"]
            ]
        elif self.behavior == "tagging":
            probs = []
            for example in body["examples"]:
                hot = sum(example["piece_ids"]) % n_labels
                row = [0.0] * n_labels
                row[hot] = 1.0
                probs.append([list(row) for _ in range(max_seq_len)])
        elif self.behavior == "bad-shape":
            probs = [[[1.0 / n_labels] * n_labels] for _ in body["examples"]]
        else:
            self._reply({"error": {"code": "boom", "message": "configured failure"}})
            return
        self._reply({"probabilities": probs})

    def _reply(self, obj):
        data = json.dumps(obj).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


@pytest.fixture
def project(tmp_path):
    """Materialize a small experiment on disk: corpora, vocab, gazetteer, config."""

    def build(
        n_sentences=60,
        n_docs=6,
        seed=5,
        max_seq_len=64,
        window_strategy="first",
        wrap_mode="document",
        backend=None,
        strategies=None,
        repetitions=2,
        grid=None,
        config_seed=7,
        noise_scale=0.25,
        context_bonus=0.75,
        position_interval=32,
    ):
        import yaml

        from ctxner.corpus import serialize_conll
        from ctxner.synthetic import make_gazetteer_corpus, make_vocab_pieces

        corpus, gazetteer = make_gazetteer_corpus(
            n_sentences=n_sentences, n_docs=n_docs, seed=seed
        )
        (tmp_path / "train.conll").write_text(serialize_conll(corpus))
        (tmp_path / "dev.conll").write_text(serialize_conll(corpus))
        pieces = make_vocab_pieces(corpus, seed=seed)
        (tmp_path / "vocab.txt").write_text("\n".join(pieces) + "\n")
        (tmp_path / "gazetteer.json").write_text(json.dumps(gazetteer))
        config = {
            "data": {"train": "train.conll", "dev": "dev.conll"},
            "vocab": "vocab.txt",
            "backend": backend
            or {
                "type": "mock",
                "gazetteer": "gazetteer.json",
                "noise_scale": noise_scale,
                "context_bonus": context_bonus,
            },
            "window": {
                "max_seq_len": max_seq_len,
                "strategy": window_strategy,
                "wrap_mode": wrap_mode,
                "position_interval": position_interval,
            },
            "strategies": strategies or ["single", "first", "cmv-vote", "cmv-sum"],
            "repetitions": repetitions,
            "seed": config_seed,
        }
        if grid:
            config["grid"] = grid
        config_path = tmp_path / "config.yaml"
        config_path.write_text(yaml.safe_dump(config))
        return config_path

    return build


@pytest.fixture
def sidecar_double():
    """Factory: start a scriptable sidecar double, returns (url, handler)."""
    servers = []

    def start(behavior="uniform", protocol=PROTOCOL_VERSION, port=0):
        handler = type(
            "Handler",
            (SidecarDouble,),
            {"behavior": behavior, "protocol": protocol, "calls": [], "finetune_count": 0},
        )
        server = HTTPServer(("127.0.0.1", port), handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        servers.append(server)
        return f"http://127.0.0.1:{server.server_port}", handler

    yield start
    for server in servers:
        server.shutdown()
        server.server_close()
