"""Synthetic gazetteer corpora for desk-scale experiments.

Generates document-structured corpora whose entities are drawn from a
gazetteer, with a configurable fraction of entity mentions recurring across
sentences of the same document. Together with the mock backend this makes
context measurably informative: recurring mentions are exactly the ones the
shared-token bonus can help with.
"""

from __future__ import annotations

import random
from typing import Optional, Sequence

from .corpus import Corpus, Document, Label, O, Sentence, Token
from .tokenizer import SPECIAL_TOKENS

FILLERS = (
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
    "india", "juliett", "kilo", "lima", "mike", "november", "oscar", "papa",
    "quebec", "romeo", "sierra", "tango", "uniform", "victor", "whiskey",
    "xray", "yankee", "zulu", "north", "south", "east", "west", "green",
    "blue", "red", "amber", "stone", "river", "cloud", "meadow", "harbor",
    "valley",
)


def make_gazetteer_corpus(
    n_sentences: int = 500,
    n_docs: int = 25,
    seed: int = 0,
    recur_fraction: float = 0.30,
    types: Sequence[str] = ("PER", "ORG", "LOC"),
    mention_rate: float = 0.6,
    min_tokens: int = 4,
    max_tokens: int = 9,
) -> tuple[Corpus, dict[str, str]]:
    """Build (corpus, gazetteer).

    Roughly mention_rate of sentences carry one entity mention of 1-2
    tokens; recur_fraction of mentions reuse one of the document's topic
    entities (so they recur across that document's sentences), the rest are
    unique to one sentence. Entity tokens are capitalized and never collide
    with filler words.
    """
    rng = random.Random(seed)
    gazetteer: dict[str, str] = {}
    fresh_counter = 0

    def new_entity(etype: str) -> tuple[str, ...]:
        nonlocal fresh_counter
        length = rng.choice((1, 2))
        parts = []
        for _ in range(length):
            name = f"{etype.capitalize()}{fresh_counter}"
            fresh_counter += 1
            gazetteer[name] = etype
            parts.append(name)
        return tuple(parts)

    per_doc = [n_sentences // n_docs] * n_docs
    for i in range(n_sentences % n_docs):
        per_doc[i] += 1

    documents = []
    for doc_index, doc_sentences in enumerate(per_doc):
        topics = [new_entity(rng.choice(types)) for _ in range(3)]
        sentences = []
        for sent_index in range(doc_sentences):
            tokens: list[Token] = []
            n_fill = rng.randint(min_tokens, max_tokens)
            mention: Optional[tuple[str, ...]] = None
            if rng.random() < mention_rate:
                if rng.random() < recur_fraction:
                    mention = rng.choice(topics)
                else:
                    mention = new_entity(rng.choice(types))
            insert_at = rng.randint(1, n_fill - 1) if mention else -1
            for i in range(n_fill):
                if i == insert_at:
                    etype = gazetteer[mention[0]]
                    for j, text in enumerate(mention):
                        tokens.append(
                            Token(text, Label("B" if j == 0 else "I", etype))
                        )
                tokens.append(Token(rng.choice(FILLERS), O))
            sentences.append(Sentence(tuple(tokens), doc_index, sent_index))
        documents.append(Document(tuple(sentences)))

    return (
        Corpus(tuple(documents), frozenset(types), has_doc_boundaries=True),
        gazetteer,
    )


def make_vocab_pieces(
    corpus: Corpus, seed: int = 0, split_fraction: float = 0.3
) -> list[str]:
    """Vocabulary covering the corpus, splitting some words into two pieces.

    Single characters (plain and continuation forms) are always included so
    greedy matching never falls back to [UNK]; a split_fraction of word
    types is deliberately left out as whole pieces to exercise subword
    alignment.
    """
    rng = random.Random(seed)
    words = sorted({t.text for s in corpus.sentences() for t in s.tokens})
    chars = sorted({c for w in words for c in w})
    pieces = list(SPECIAL_TOKENS)
    pieces += chars
    pieces += [f"##{c}" for c in chars]
    for word in words:
        if len(word) > 1 and rng.random() < split_fraction:
            cut = max(1, len(word) // 2)
            head, tail = word[:cut], "##" + word[cut:]
            for piece in (head, tail):
                if piece not in pieces:
                    pieces.append(piece)
        elif word not in pieces:
            pieces.append(word)
    return pieces
