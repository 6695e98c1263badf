"""CoNLL-style corpus model: documents, sentences, tokens and IOB2 labels.

The parser reads column-formatted token-per-line text where blank lines
separate sentences and lines starting with ``-DOCSTART-`` open a new
document. Document markers are metadata only: they never become tokens and
their label column is ignored. Corpora without document boundaries are
wrapped in a single synthetic document so downstream code has one code path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence

DOCSTART = "-DOCSTART-"

LABEL_PREFIXES = ("O", "B", "I")


class CorpusError(ValueError):
    """Malformed corpus input. Carries a 1-based line number when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SentenceKey(NamedTuple):
    """Identity of one (possibly split) sentence within a corpus."""

    doc_index: int
    sent_index: int
    split_part: Optional[int]


class TokenKey(NamedTuple):
    """Identity of one token occurrence: sentence key plus token position."""

    doc_index: int
    sent_index: int
    split_part: Optional[int]
    token_index: int


def token_key(sentence_key: SentenceKey, token_index: int) -> TokenKey:
    return TokenKey(*sentence_key, token_index)


@dataclass(frozen=True, order=True)
class Label:
    """An IOB2 label: O, or B-/I- plus an entity type."""

    prefix: str
    entity_type: Optional[str] = None

    def __post_init__(self):
        if self.prefix not in LABEL_PREFIXES:
            raise CorpusError(f"invalid label prefix {self.prefix!r}")
        if (self.entity_type is None) != (self.prefix == "O"):
            raise CorpusError(
                f"label {self.prefix!r} must carry an entity type iff not O"
            )

    @classmethod
    def parse(cls, text: str) -> "Label":
        if text == "O":
            return O
        prefix, sep, entity_type = text.partition("-")
        if not sep or prefix not in ("B", "I") or not entity_type:
            raise CorpusError(f"unknown label string {text!r}")
        return cls(prefix, entity_type)

    def __str__(self) -> str:
        if self.prefix == "O":
            return "O"
        return f"{self.prefix}-{self.entity_type}"

    def as_inside(self) -> "Label":
        """The I- form of this label; O stays O."""
        if self.prefix == "O":
            return self
        return Label("I", self.entity_type)

    def as_begin(self) -> "Label":
        if self.prefix == "O":
            return self
        return Label("B", self.entity_type)


O = Label("O")


@dataclass(frozen=True)
class Token:
    text: str
    gold_label: Label

    def __post_init__(self):
        if not self.text or any(c.isspace() for c in self.text):
            raise CorpusError(f"token text must be non-empty, no whitespace: {self.text!r}")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    doc_index: int
    sent_index: int
    split_part: Optional[int] = None

    def __post_init__(self):
        if not self.tokens:
            raise CorpusError("sentence must contain at least one token")

    @property
    def key(self) -> SentenceKey:
        return SentenceKey(self.doc_index, self.sent_index, self.split_part)

    @property
    def labels(self) -> list[Label]:
        return [t.gold_label for t in self.tokens]

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Document:
    sentences: tuple[Sentence, ...]

    def __post_init__(self):
        if not self.sentences:
            raise CorpusError("document must contain at least one sentence")
        # Split parts share a sent_index; sentence slots must be contiguous
        # from 0 and parts of one slot contiguous from 0, in order.
        expected_sent = 0
        prev_part: Optional[int] = None
        for s in self.sentences:
            if s.split_part is None or s.split_part == 0:
                ok = s.sent_index == expected_sent
                expected_sent += 1
                prev_part = s.split_part
            else:
                ok = (
                    prev_part is not None
                    and s.sent_index == expected_sent - 1
                    and s.split_part == prev_part + 1
                )
                prev_part = s.split_part
            if not ok:
                raise CorpusError(
                    f"sentence indices not contiguous at doc {s.doc_index}, "
                    f"sent {s.sent_index}, part {s.split_part}"
                )

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]
    type_set: frozenset[str]
    has_doc_boundaries: bool

    def sentences(self) -> Iterator[Sentence]:
        for doc in self.documents:
            yield from doc.sentences

    def sentence_count(self) -> int:
        return sum(len(d) for d in self.documents)

    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences())


@dataclass(frozen=True)
class CorpusStats:
    token_count: int
    entity_count: int
    per_type_counts: dict[str, int]
    sentence_count: int
    document_count: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "token_count": self.token_count,
                "entity_count": self.entity_count,
                "per_type_counts": dict(sorted(self.per_type_counts.items())),
                "sentence_count": self.sentence_count,
                "document_count": self.document_count,
            },
            indent=2,
        )


@dataclass(frozen=True)
class ParseConfig:
    token_column: int = 0
    label_column: int = -1
    delimiter: Optional[str] = None  # None = any whitespace, "\t" = tab


def parse_conll(text: str, config: ParseConfig = ParseConfig()) -> Corpus:
    """Parse CoNLL column text into a Corpus.

    Blank lines separate sentences; a line whose first field is -DOCSTART-
    opens a new document and is not materialized as a sentence. When no
    -DOCSTART- is present the whole input becomes one synthetic document.
    """
    documents: list[list[Sentence]] = []
    current_doc: list[Sentence] = []
    current_tokens: list[Token] = []
    has_boundaries = False
    type_set: set[str] = set()

    def flush_sentence():
        nonlocal current_tokens
        if current_tokens:
            current_doc.append(
                Sentence(
                    tokens=tuple(current_tokens),
                    doc_index=len(documents),
                    sent_index=len(current_doc),
                )
            )
            current_tokens = []

    def flush_document():
        nonlocal current_doc
        flush_sentence()
        if current_doc:
            documents.append(current_doc)
            current_doc = []

    min_columns = max(
        config.token_column + 1 if config.token_column >= 0 else -config.token_column,
        config.label_column + 1 if config.label_column >= 0 else -config.label_column,
    )

    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split(config.delimiter) if config.delimiter else line.split()
        if not fields or (len(fields) == 1 and not fields[0]):
            flush_sentence()
            continue
        if fields[0] == DOCSTART:
            has_boundaries = True
            flush_document()
            continue
        if len(fields) < min_columns:
            raise CorpusError(
                f"expected at least {min_columns} columns, got {len(fields)}", lineno
            )
        word = fields[config.token_column]
        try:
            label = Label.parse(fields[config.label_column])
        except CorpusError as e:
            raise CorpusError(str(e), lineno) from None
        if label.entity_type is not None:
            type_set.add(label.entity_type)
        try:
            current_tokens.append(Token(word, label))
        except CorpusError as e:
            raise CorpusError(str(e), lineno) from None

    flush_document()
    if not documents:
        raise CorpusError("input contains no sentences")

    # Fix doc_index stamped during accumulation (DOCSTART runs with no
    # sentences are dropped, shifting indices).
    docs = tuple(
        Document(
            tuple(
                Sentence(s.tokens, doc_index=d, sent_index=s.sent_index)
                for s in sentences
            )
        )
        for d, sentences in enumerate(documents)
    )
    return Corpus(
        documents=docs,
        type_set=frozenset(type_set),
        has_doc_boundaries=has_boundaries,
    )


def to_iob2(labels: Sequence[Label]) -> list[Label]:
    """Convert one sentence's labels from IOB1 (or IOB2) to IOB2.

    An I-X that opens a chunk under IOB1 semantics (at sequence start, after
    O, or after a different type) becomes B-X; everything else is unchanged.
    Idempotent, and chunk extraction is preserved.
    """
    out: list[Label] = []
    prev: Optional[Label] = None
    for lab in labels:
        if lab.prefix == "I" and (
            prev is None or prev.prefix == "O" or prev.entity_type != lab.entity_type
        ):
            lab = Label("B", lab.entity_type)
        out.append(lab)
        prev = lab
    return out


def validate_iob2(labels: Sequence[Label]) -> list[int]:
    """Indices where an I-X follows neither B-X nor I-X."""
    violations = []
    prev: Optional[Label] = None
    for i, lab in enumerate(labels):
        if lab.prefix == "I" and (
            prev is None or prev.prefix == "O" or prev.entity_type != lab.entity_type
        ):
            violations.append(i)
        prev = lab
    return violations


def detect_scheme(corpus: Corpus) -> str:
    """Heuristic scheme detection: 'iob1' when any chunk-opening I- exists.

    Valid IOB2 never opens a chunk with I-; IOB1 data almost always does.
    Conversion via to_iob2 is applied regardless, this only informs reporting.
    """
    for sentence in corpus.sentences():
        if validate_iob2(sentence.labels):
            return "iob1"
    return "iob2"


def convert_corpus_iob2(corpus: Corpus) -> Corpus:
    """Apply to_iob2 to every sentence, preserving structure."""
    docs = []
    for doc in corpus.documents:
        sentences = []
        for s in doc.sentences:
            labels = to_iob2(s.labels)
            tokens = tuple(
                Token(t.text, lab) for t, lab in zip(s.tokens, labels)
            )
            sentences.append(
                Sentence(tokens, s.doc_index, s.sent_index, s.split_part)
            )
        docs.append(Document(tuple(sentences)))
    return Corpus(tuple(docs), corpus.type_set, corpus.has_doc_boundaries)


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Token/entity/sentence/document counts; entities are B- labels."""
    tokens = 0
    per_type: dict[str, int] = {}
    for sentence in corpus.sentences():
        tokens += len(sentence)
        for lab in sentence.labels:
            if lab.prefix == "B":
                per_type[lab.entity_type] = per_type.get(lab.entity_type, 0) + 1
    return CorpusStats(
        token_count=tokens,
        entity_count=sum(per_type.values()),
        per_type_counts=per_type,
        sentence_count=corpus.sentence_count(),
        document_count=len(corpus.documents),
    )


def serialize_conll(corpus: Corpus, delimiter: str = " ") -> str:
    """Write token/label columns; inverse of parse_conll on its own output."""
    lines: list[str] = []
    for doc in corpus.documents:
        if corpus.has_doc_boundaries:
            lines.append(f"{DOCSTART}{delimiter}O")
            lines.append("")
        for sentence in doc.sentences:
            for tok in sentence.tokens:
                lines.append(f"{tok.text}{delimiter}{tok.gold_label}")
            lines.append("")
    return "\n".join(lines) + ("\n" if lines and lines[-1] != "" else "")


def serialize_predictions(
    gold: Corpus, pred: Corpus, delimiter: str = " "
) -> str:
    """Three-column token/gold/predicted output, conlleval's input format."""
    lines: list[str] = []
    for gdoc, pdoc in zip(gold.documents, pred.documents):
        for gsent, psent in zip(gdoc.sentences, pdoc.sentences):
            if len(gsent) != len(psent):
                raise CorpusError(
                    f"token count mismatch at doc {gsent.doc_index} "
                    f"sent {gsent.sent_index}: {len(gsent)} vs {len(psent)}"
                )
            for gt, pt in zip(gsent.tokens, psent.tokens):
                lines.append(
                    f"{gt.text}{delimiter}{gt.gold_label}{delimiter}{pt.gold_label}"
                )
            lines.append("")
    return "\n".join(lines) + "\n"


def read_text(path, encoding: str = "utf-8") -> str:
    """Read a file, transcoding to UTF-8 text (latin-1 supported for legacy data)."""
    with open(path, "rb") as f:
        raw = f.read()
    try:
        return raw.decode(encoding)
    except UnicodeDecodeError as e:
        raise CorpusError(f"cannot decode {path} as {encoding}: {e}") from None
