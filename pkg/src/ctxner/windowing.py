"""Context-window construction for sentence-level sequence labeling.

Three strategies build fixed-length examples, one per sentence:

* single     — [CLS] focus [SEP] padding; no context.
* first      — focus at the window start, following sentences fill the
               window. Corpus wrapping fills to capacity with partial
               sentences allowed; document wrapping adds only whole
               sentences from the focus document and pads the tail.
* positioned — focus starts at a requested index; preceding sentences fill
               leftwards and following sentences rightwards, partial
               sentences allowed at both edges.

Every example records provenance for each piece and a completeness flag per
contained sentence, so downstream aggregation can ignore partial sentences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Sequence

from .corpus import Corpus, Document, Sentence, SentenceKey, TokenKey
from .tokenizer import Vocab, WordPiece, tokenize_sentence, wordpiece_tokenize

CLS, SEP, PAD, PIECE = "CLS", "SEP", "PAD", "PIECE"

STRATEGIES = ("single", "first", "positioned")
WRAP_MODES = ("corpus", "document")


class WindowError(ValueError):
    pass


@dataclass(frozen=True)
class WindowConfig:
    max_seq_len: int = 512
    strategy: str = "first"
    wrap_mode: str = "document"
    start_pos: Optional[int] = None
    position_interval: int = 32

    def __post_init__(self):
        if self.max_seq_len < 3:
            raise WindowError("max_seq_len must be at least 3 ([CLS] + piece + [SEP])")
        if self.strategy not in STRATEGIES:
            raise WindowError(f"unknown strategy {self.strategy!r}")
        if self.wrap_mode not in WRAP_MODES:
            raise WindowError(f"unknown wrap_mode {self.wrap_mode!r}")
        if self.position_interval < 1:
            raise WindowError("position_interval must be >= 1")
        if self.start_pos is not None and not 1 <= self.start_pos < self.max_seq_len:
            raise WindowError(
                f"start_pos {self.start_pos} outside [1, {self.max_seq_len})"
            )


@dataclass(frozen=True)
class WindowItem:
    kind: str
    piece: Optional[WordPiece] = None

    def __post_init__(self):
        if (self.piece is not None) != (self.kind == PIECE):
            raise WindowError(f"{self.kind} item must carry a piece iff kind is PIECE")


_CLS_ITEM = WindowItem(CLS)
_SEP_ITEM = WindowItem(SEP)
_PAD_ITEM = WindowItem(PAD)


@dataclass(frozen=True)
class SentenceSpan:
    key: SentenceKey
    first_item: int
    last_item: int
    complete: bool


@dataclass(frozen=True)
class InputExample:
    items: tuple[WindowItem, ...]
    focus: SentenceKey
    focus_start: int
    spans: tuple[SentenceSpan, ...]


class _Prepared:
    """Corpus flattened to (sentence, pieces) in corpus order."""

    def __init__(self, corpus: Corpus, cfg: WindowConfig, vocab: Vocab):
        self.corpus = corpus
        self.entries: list[tuple[Sentence, list[WordPiece]]] = []
        self.doc_offsets: list[tuple[int, int]] = []  # (first, count) per document
        budget = cfg.max_seq_len - 2
        for doc in corpus.documents:
            first = len(self.entries)
            for sentence in doc.sentences:
                pieces = tokenize_sentence(sentence, vocab)
                if len(pieces) > budget:
                    raise WindowError(
                        f"sentence {tuple(sentence.key)} tokenizes to {len(pieces)} "
                        f"pieces > {budget}; run split_long_sentences first"
                    )
                self.entries.append((sentence, pieces))
            self.doc_offsets.append((first, len(doc.sentences)))
        self.piece_count = {s.key: len(p) for s, p in self.entries}

    def doc_range(self, doc_index: int) -> range:
        first, count = self.doc_offsets[doc_index]
        return range(first, first + count)


def _assemble(
    tagged: list[tuple[WindowItem, Optional[SentenceKey]]],
    focus: SentenceKey,
    focus_start: int,
    cfg: WindowConfig,
    prepared: _Prepared,
) -> InputExample:
    """Turn a tagged item list into an InputExample, deriving spans."""
    if len(tagged) != cfg.max_seq_len:
        raise WindowError(
            f"internal: assembled {len(tagged)} items, expected {cfg.max_seq_len}"
        )
    spans: list[SentenceSpan] = []
    run_key: Optional[SentenceKey] = None
    run_first = 0
    run_len = 0

    def close_run(end_index: int):
        nonlocal run_key, run_len
        if run_key is not None:
            spans.append(
                SentenceSpan(
                    key=run_key,
                    first_item=run_first,
                    last_item=end_index,
                    complete=run_len == prepared.piece_count[run_key],
                )
            )
        run_key = None
        run_len = 0

    for i, (item, key) in enumerate(tagged):
        if item.kind == PIECE:
            if key != run_key:
                close_run(i - 1)
                run_key, run_first = key, i
            run_len += 1
        else:
            close_run(i - 1)
    close_run(len(tagged) - 1)

    return InputExample(
        items=tuple(item for item, _ in tagged),
        focus=focus,
        focus_start=focus_start,
        spans=tuple(spans),
    )


def _pieces_tagged(
    pieces: Sequence[WordPiece], key: SentenceKey
) -> list[tuple[WindowItem, SentenceKey]]:
    return [(WindowItem(PIECE, p), key) for p in pieces]


def split_long_sentences(corpus: Corpus, cfg: WindowConfig, vocab: Vocab) -> Corpus:
    """Split sentences that exceed the window capacity at token boundaries.

    Parts keep the original sent_index and get split_part 0, 1, ...; no
    token is divided between parts. Sentences that fit pass through.
    """
    budget = cfg.max_seq_len - 2
    docs = []
    for doc in corpus.documents:
        out: list[Sentence] = []
        for s in doc.sentences:
            counts = [len(wordpiece_tokenize(t.text, vocab)) for t in s.tokens]
            if sum(counts) <= budget:
                out.append(s)
                continue
            if s.split_part is not None:
                raise WindowError(
                    f"sentence {tuple(s.key)} is already a split part; cannot re-split"
                )
            groups: list[list] = [[]]
            used = 0
            for tok, n in zip(s.tokens, counts):
                if n > budget:
                    raise WindowError(
                        f"token {tok.text!r} tokenizes to {n} pieces, more than "
                        f"window capacity {budget}; cannot split within a token"
                    )
                if used + n > budget:
                    groups.append([])
                    used = 0
                groups[-1].append(tok)
                used += n
            for part, toks in enumerate(groups):
                out.append(Sentence(tuple(toks), s.doc_index, s.sent_index, part))
        docs.append(Document(tuple(out)))
    return Corpus(tuple(docs), corpus.type_set, corpus.has_doc_boundaries)


def build_single(corpus: Corpus, cfg: WindowConfig, vocab: Vocab) -> list[InputExample]:
    """One example per sentence with no context: [CLS] pieces [SEP] PAD..."""
    prepared = _Prepared(corpus, cfg, vocab)
    examples = []
    for sentence, pieces in prepared.entries:
        tagged: list[tuple[WindowItem, Optional[SentenceKey]]] = [(_CLS_ITEM, None)]
        tagged += _pieces_tagged(pieces, sentence.key)
        tagged.append((_SEP_ITEM, None))
        tagged += [(_PAD_ITEM, None)] * (cfg.max_seq_len - len(tagged))
        examples.append(_assemble(tagged, sentence.key, 1, cfg, prepared))
    return examples


def _fill_following(
    tagged: list,
    order: Iterable[int],
    prepared: _Prepared,
    max_seq_len: int,
    whole_only: bool,
) -> None:
    """Append following sentences (and SEPs) until capacity or order ends.

    whole_only stops at the first sentence that does not fit completely;
    otherwise the last sentence may be cut at capacity.
    """
    for j in order:
        remaining = max_seq_len - len(tagged)
        if remaining == 0:
            break
        sentence, pieces = prepared.entries[j]
        if whole_only:
            if len(pieces) > remaining:
                break
            take = len(pieces)
        else:
            take = min(len(pieces), remaining)
        tagged += _pieces_tagged(pieces[:take], sentence.key)
        if len(tagged) < max_seq_len:
            tagged.append((_SEP_ITEM, None))
        if take < len(pieces):
            break


def build_first(corpus: Corpus, cfg: WindowConfig, vocab: Vocab) -> list[InputExample]:
    """Focus sentence first, following sentences fill the window.

    Corpus wrapping fills to capacity in pure corpus order, wrapping from
    the corpus end to its start; document wrapping adds only whole
    sentences from the focus document (wrapping within it) and pads the
    rest. Falls back to corpus wrapping when the corpus has no document
    boundaries. The focus sentence is never re-included.
    """
    prepared = _Prepared(corpus, cfg, vocab)
    document_mode = cfg.wrap_mode == "document" and corpus.has_doc_boundaries
    n = len(prepared.entries)
    examples = []
    for i, (sentence, pieces) in enumerate(prepared.entries):
        tagged: list[tuple[WindowItem, Optional[SentenceKey]]] = [(_CLS_ITEM, None)]
        tagged += _pieces_tagged(pieces, sentence.key)
        if len(tagged) < cfg.max_seq_len:
            tagged.append((_SEP_ITEM, None))
        if document_mode:
            doc_range = prepared.doc_range(sentence.doc_index)
            pos = i - doc_range.start
            count = len(doc_range)
            order = (
                doc_range.start + (pos + off) % count for off in range(1, count)
            )
            _fill_following(tagged, order, prepared, cfg.max_seq_len, whole_only=True)
        else:
            order = ((i + off) % n for off in range(1, n))
            _fill_following(tagged, order, prepared, cfg.max_seq_len, whole_only=False)
        tagged += [(_PAD_ITEM, None)] * (cfg.max_seq_len - len(tagged))
        examples.append(_assemble(tagged, sentence.key, 1, cfg, prepared))
    return examples


def build_positioned(
    corpus: Corpus, cfg: WindowConfig, vocab: Vocab
) -> list[InputExample]:
    """Place each focus sentence's first piece at a requested window index.

    When the focus (plus its separator) does not fit between start_pos and
    the window end, the start is moved backwards until it does. Preceding
    sentences fill [1, focus_start) nearest-last, cut at the left edge if
    needed; unused left space becomes padding right after [CLS]. Following
    sentences fill rightwards to capacity, the last possibly cut. Context
    stays within the focus document when wrap_mode is document and the
    corpus has boundaries; there is no wrapping in either direction.
    """
    if cfg.start_pos is None:
        raise WindowError("positioned strategy requires start_pos")
    prepared = _Prepared(corpus, cfg, vocab)
    document_mode = cfg.wrap_mode == "document" and corpus.has_doc_boundaries
    examples = []
    for i, (sentence, pieces) in enumerate(prepared.entries):
        if document_mode:
            scope = prepared.doc_range(sentence.doc_index)
        else:
            scope = range(len(prepared.entries))
        focus_start = min(cfg.start_pos, cfg.max_seq_len - len(pieces) - 1)
        left_space = focus_start - 1

        left: list[tuple[WindowItem, Optional[SentenceKey]]] = []
        total = 0
        for j in range(i - 1, scope.start - 1, -1):
            if total >= left_space:
                break
            prev_sentence, prev_pieces = prepared.entries[j]
            unit = _pieces_tagged(prev_pieces, prev_sentence.key)
            unit.append((_SEP_ITEM, None))
            left = unit + left
            total += len(unit)
        if total > left_space:
            left = left[-left_space:] if left_space else []
        tagged: list[tuple[WindowItem, Optional[SentenceKey]]] = [(_CLS_ITEM, None)]
        tagged += [(_PAD_ITEM, None)] * (left_space - min(total, left_space))
        tagged += left

        if len(tagged) != focus_start:
            raise WindowError("internal: left fill does not reach focus_start")
        tagged += _pieces_tagged(pieces, sentence.key)
        tagged.append((_SEP_ITEM, None))
        _fill_following(
            tagged,
            range(i + 1, scope.stop),
            prepared,
            cfg.max_seq_len,
            whole_only=False,
        )
        tagged += [(_PAD_ITEM, None)] * (cfg.max_seq_len - len(tagged))
        examples.append(_assemble(tagged, sentence.key, focus_start, cfg, prepared))
    return examples


def build_examples(corpus: Corpus, cfg: WindowConfig, vocab: Vocab) -> list[InputExample]:
    builder = {
        "single": build_single,
        "first": build_first,
        "positioned": build_positioned,
    }[cfg.strategy]
    return builder(corpus, cfg, vocab)


def position_sweep(cfg: WindowConfig) -> list[int]:
    """Start positions to test: 1, then interval multiples below max_seq_len."""
    positions = [1]
    pos = cfg.position_interval
    while pos < cfg.max_seq_len:
        if pos != 1:
            positions.append(pos)
        pos += cfg.position_interval
    return positions


def _item_piece_id(item: WindowItem, vocab: Vocab) -> int:
    if item.kind == PIECE:
        return item.piece.piece_id
    return {CLS: vocab.cls_id, SEP: vocab.sep_id, PAD: vocab.pad_id}[item.kind]


def example_piece_ids(example: InputExample, vocab: Vocab) -> list[int]:
    return [_item_piece_id(item, vocab) for item in example.items]


def _key_json(key: Optional[SentenceKey]) -> Optional[list]:
    return None if key is None else [key.doc_index, key.sent_index, key.split_part]


def example_to_dict(example: InputExample, vocab: Vocab) -> dict:
    origins = [
        list(item.piece.origin) if item.kind == PIECE else None
        for item in example.items
    ]
    continuations = [
        item.piece.is_continuation if item.kind == PIECE else False
        for item in example.items
    ]
    return {
        "focus": _key_json(example.focus),
        "focus_start": example.focus_start,
        "piece_ids": example_piece_ids(example, vocab),
        "item_kinds": [item.kind for item in example.items],
        "origins": origins,
        "continuations": continuations,
        "spans": [
            {
                "sentence": _key_json(span.key),
                "first_item": span.first_item,
                "last_item": span.last_item,
                "complete": span.complete,
            }
            for span in example.spans
        ],
    }


def example_from_dict(obj: dict) -> InputExample:
    items = []
    for kind, pid, origin, cont in zip(
        obj["item_kinds"], obj["piece_ids"], obj["origins"], obj["continuations"]
    ):
        if kind == PIECE:
            items.append(
                WindowItem(PIECE, WordPiece(pid, cont, TokenKey(*origin)))
            )
        else:
            items.append(WindowItem(kind))
    spans = tuple(
        SentenceSpan(
            key=SentenceKey(*span["sentence"]),
            first_item=span["first_item"],
            last_item=span["last_item"],
            complete=span["complete"],
        )
        for span in obj["spans"]
    )
    return InputExample(
        items=tuple(items),
        focus=SentenceKey(*obj["focus"]),
        focus_start=obj["focus_start"],
        spans=spans,
    )


def write_examples(examples: Sequence[InputExample], vocab: Vocab, fp: IO[str]) -> None:
    """Line-delimited JSON export, the exchange format consumed by backends."""
    for example in examples:
        fp.write(json.dumps(example_to_dict(example, vocab), sort_keys=True))
        fp.write("\n")


def read_examples(fp: IO[str]) -> list[InputExample]:
    return [example_from_dict(json.loads(line)) for line in fp if line.strip()]
