"""Word-level vocabulary, tokenization, and the trainable prompt embedder.

Tokens are lowercased words; punctuation splits and is dropped. The first
four vocabulary ids are reserved in fixed order: PAD, BOS, EOS, UNK.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from facediff.tensor import Tensor, gather_rows

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")

_WORD_RE = re.compile(r"[a-z0-9']+")


def word_tokens(text: str) -> list[str]:
    """Lowercased word tokens; punctuation acts as a separator and is dropped."""
    return _WORD_RE.findall(text.lower())


def normalize(text: str) -> str:
    return " ".join(word_tokens(text))


@dataclass
class Vocab:
    """Token table with the four reserved specials at ids 0..3."""

    tokens: list[str]

    def __post_init__(self):
        if tuple(self.tokens[:4]) != SPECIAL_TOKENS:
            raise ValueError(f"vocab must start with {SPECIAL_TOKENS}")
        self.ids = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.ids) != len(self.tokens):
            raise ValueError("vocab contains duplicate tokens")

    @property
    def size(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self.ids.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        return self.tokens[token_id]


def build_vocab(corpus: Iterable[str], min_count: int = 1) -> Vocab:
    """Count words over the corpus and keep those seen at least min_count times.

    Kept words are ordered by descending frequency, ties lexicographic, after
    the four specials.
    """
    counts: Counter[str] = Counter()
    for text in corpus:
        counts.update(word_tokens(text))
    kept = [tok for tok, n in counts.items() if n >= min_count]
    kept.sort(key=lambda tok: (-counts[tok], tok))
    return Vocab(list(SPECIAL_TOKENS) + kept)


def tokenize(text: str, vocab: Vocab, max_len: int | None = None) -> list[int]:
    """Map normalized words to ids, out-of-vocabulary words to UNK."""
    ids = [vocab.id_of(tok) for tok in word_tokens(text)]
    if max_len is not None:
        ids = ids[:max_len]
    return ids


def detokenize(ids: Iterable[int], vocab: Vocab) -> str:
    """Join tokens with spaces, skipping the reserved specials."""
    words = []
    for i in ids:
        if i < 0 or i >= vocab.size:
            raise IndexError(f"token id {i} out of range for vocab of size {vocab.size}")
        if i >= len(SPECIAL_TOKENS):
            words.append(vocab.tokens[i])
    return " ".join(words)


def save_vocab(vocab: Vocab, path: str) -> None:
    """One token per line; the line number is the token id."""
    with open(path, "w", encoding="utf-8") as fh:
        for tok in vocab.tokens:
            fh.write(tok + "\n")


def load_vocab(path: str) -> Vocab:
    with open(path, "r", encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh if line != "\n"]
    return Vocab(tokens)


def embed_text(ids: np.ndarray, table: Tensor, pos: Tensor) -> Tensor:
    """Embed a [b, t] id batch as table rows plus learned positional rows."""
    ids = np.asarray(ids)
    if ids.ndim != 2:
        raise ValueError(f"expected a [b, t] id batch, got shape {ids.shape}")
    t = ids.shape[1]
    if ids.size and ids.max() >= table.shape[0]:
        raise IndexError(f"token id {int(ids.max())} out of range for table with "
                         f"{table.shape[0]} rows")
    if t > pos.shape[0]:
        raise IndexError(f"sequence length {t} exceeds positional table {pos.shape[0]}")
    return gather_rows(table, ids) + pos[:t]
