"""WordPiece tokenization with label and provenance alignment.

Greedy longest-match-first subword tokenization against a plain-text
vocabulary (one piece per line, line number = id, continuation prefix
``##``). No lowercasing and no Unicode normalization: cased models only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .corpus import Label, Sentence, SentenceKey, TokenKey, token_key

CONTINUATION_PREFIX = "##"

CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"

SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN)

DEFAULT_MAX_CHARS = 100


class VocabError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class Vocab:
    pieces: tuple[str, ...]
    piece_to_id: dict
    cls_id: int
    sep_id: int
    pad_id: int
    unk_id: int

    @classmethod
    def from_pieces(cls, pieces: Sequence[str]) -> "Vocab":
        piece_to_id: dict[str, int] = {}
        for i, piece in enumerate(pieces):
            if piece in piece_to_id:
                raise VocabError(f"duplicate piece {piece!r} (lines {piece_to_id[piece] + 1} and {i + 1})")
            piece_to_id[piece] = i
        missing = [t for t in SPECIAL_TOKENS if t not in piece_to_id]
        if missing:
            raise VocabError(
                "missing special marker" + ("s" if len(missing) > 1 else "")
                + " " + ", ".join(missing)
            )
        return cls(
            pieces=tuple(pieces),
            piece_to_id=piece_to_id,
            cls_id=piece_to_id[CLS_TOKEN],
            sep_id=piece_to_id[SEP_TOKEN],
            pad_id=piece_to_id[PAD_TOKEN],
            unk_id=piece_to_id[UNK_TOKEN],
        )

    def __len__(self) -> int:
        return len(self.pieces)

    def piece_text(self, piece_id: int) -> str:
        return self.pieces[piece_id]


def load_vocab(path) -> Vocab:
    """Load a one-piece-per-line vocabulary file; line number = piece id."""
    with open(path, encoding="utf-8") as f:
        pieces = [line.rstrip("\n") for line in f]
    while pieces and pieces[-1] == "":
        pieces.pop()
    return Vocab.from_pieces(pieces)


@dataclass(frozen=True)
class WordPiece:
    piece_id: int
    is_continuation: bool
    origin: Optional[TokenKey] = None


def wordpiece_tokenize(
    token_text: str,
    vocab: Vocab,
    max_chars: int = DEFAULT_MAX_CHARS,
    origin: Optional[TokenKey] = None,
) -> list[WordPiece]:
    """Greedy longest-match-first WordPiece split of one token.

    Falls back to a single [UNK] piece when the token exceeds max_chars or
    no vocabulary piece matches at some position.
    """
    if not token_text:
        raise ValueError("token_text must be non-empty")
    if len(token_text) > max_chars:
        return [WordPiece(vocab.unk_id, False, origin)]
    pieces: list[WordPiece] = []
    start = 0
    while start < len(token_text):
        end = len(token_text)
        match_id = None
        while start < end:
            candidate = token_text[start:end]
            if start > 0:
                candidate = CONTINUATION_PREFIX + candidate
            pid = vocab.piece_to_id.get(candidate)
            if pid is not None:
                match_id = pid
                break
            end -= 1
        if match_id is None:
            return [WordPiece(vocab.unk_id, False, origin)]
        pieces.append(WordPiece(match_id, start > 0, origin))
        start = end
    return pieces


def tokenize_sentence(
    sentence: Sentence, vocab: Vocab, max_chars: int = DEFAULT_MAX_CHARS
) -> list[WordPiece]:
    """Tokenize every token of a sentence, stamping provenance."""
    pieces: list[WordPiece] = []
    for i, token in enumerate(sentence.tokens):
        pieces.extend(
            wordpiece_tokenize(
                token.text, vocab, max_chars, origin=token_key(sentence.key, i)
            )
        )
    return pieces


def detokenize(pieces: Sequence[WordPiece], vocab: Vocab) -> str:
    """Concatenate pieces of one token, stripping continuation prefixes."""
    parts = []
    for wp in pieces:
        text = vocab.piece_text(wp.piece_id)
        if wp.is_continuation and text.startswith(CONTINUATION_PREFIX):
            text = text[len(CONTINUATION_PREFIX):]
        parts.append(text)
    return "".join(parts)


def align_labels(
    sentence: Sentence,
    pieces: Sequence[WordPiece],
    continuation_label_mode: str = "inside",
) -> tuple[list[Label], list[int]]:
    """Project token gold labels onto wordpieces.

    The first piece of each token carries the token's label; continuation
    pieces carry its I- form ("inside", default) or an exact copy ("copy").
    All real pieces get weight 1; zero weights apply only to [CLS]/[PAD]
    positions, which are added at window construction, not here.
    """
    if continuation_label_mode not in ("inside", "copy"):
        raise ValueError(f"unknown continuation_label_mode {continuation_label_mode!r}")
    labels: list[Label] = []
    weights: list[int] = []
    next_token = 0
    skey = sentence.key
    for wp in pieces:
        if wp.origin is None:
            raise AlignmentError("piece carries no provenance")
        if wp.origin[:3] != tuple(skey):
            raise AlignmentError(
                f"piece from sentence {wp.origin[:3]} aligned against {tuple(skey)}"
            )
        idx = wp.origin.token_index
        if idx >= len(sentence.tokens):
            raise AlignmentError(f"piece refers to token {idx} beyond sentence end")
        if wp.is_continuation:
            if idx != next_token - 1:
                raise AlignmentError(
                    f"continuation piece for token {idx} out of order"
                )
        else:
            if idx != next_token:
                raise AlignmentError(
                    f"token pieces out of order: saw token {idx}, expected {next_token}"
                )
            next_token = idx + 1
        gold = sentence.tokens[idx].gold_label
        if wp.is_continuation and continuation_label_mode == "inside":
            labels.append(gold.as_inside())
        else:
            labels.append(gold)
        weights.append(1)
    if next_token != len(sentence.tokens):
        raise AlignmentError(
            f"pieces cover {next_token} of {len(sentence.tokens)} tokens"
        )
    return labels, weights
