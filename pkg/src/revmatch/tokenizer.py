"""Lowercase word-level tokenization with BERT-style special tokens."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
RESERVED = (PAD, UNK, CLS, SEP)
PAD_ID, UNK_ID, CLS_ID, SEP_ID = range(4)

INSTRUCTION_MAX_LEN = 32
PAPER_MAX_LEN = 256

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def split_words(text: str) -> list[str]:
    """Lowercase, then split on whitespace and at punctuation boundaries."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]  # id -> token, reserved entries first
    index: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if tuple(self.tokens[:4]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        if not self.index:
            object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def save(self, path) -> None:
        """One token per line; line ``n`` holds id ``n + 4``."""
        body = "".join(t + "\n" for t in self.tokens[4:])
        Path(path).write_text(body, encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(RESERVED + tuple(lines))


def build_vocab(corpus: Iterable[str], min_freq: int = 1, max_size: int = 30000) -> Vocabulary:
    """Reserved ids first, then tokens by (frequency desc, token asc)."""
    if max_size < 4:
        raise ValueError(f"max_size must be >= 4, got {max_size}")
    counts: Counter[str] = Counter()
    for text in corpus:
        counts.update(split_words(text))
    for tok in RESERVED:
        counts.pop(tok, None)
    kept = sorted((t for t, c in counts.items() if c >= min_freq),
                  key=lambda t: (-counts[t], t))
    return Vocabulary(RESERVED + tuple(kept[: max_size - 4]))


@dataclass(frozen=True, eq=False)
class TokenSequence:
    ids: np.ndarray  # int64, padded to max_len
    attention_length: int

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def mask(self) -> np.ndarray:
        return np.arange(len(self.ids)) < self.attention_length


def encode(text: str, vocab: Vocabulary, max_len: int, pad: bool = True) -> TokenSequence:
    """``[CLS] body [SEP]`` truncated from the tail, right-padded to ``max_len``.

    With ``pad=False`` the sequence stops at ``[SEP]``.
    """
    if max_len < 2:
        raise ValueError(f"max_len must be >= 2, got {max_len}")
    body = [vocab.id_of(w) for w in split_words(text)][: max_len - 2]
    ids = [CLS_ID, *body, SEP_ID]
    n = len(ids)
    if pad:
        ids.extend([PAD_ID] * (max_len - n))
    return TokenSequence(np.asarray(ids, dtype=np.int64), n)


def decode(seq: TokenSequence, vocab: Vocabulary) -> list[str]:
    """Body tokens between ``[CLS]`` and ``[SEP]``."""
    return [vocab.tokens[i] for i in seq.ids[1: seq.attention_length - 1]]


def pad_batch(seqs: list[TokenSequence]) -> tuple[np.ndarray, np.ndarray]:
    """Stack sequences, trimming shared trailing padding. Returns (ids, mask)."""
    width = max(s.attention_length for s in seqs)
    ids = np.full((len(seqs), width), PAD_ID, dtype=np.int64)
    for row, s in enumerate(seqs):
        ids[row, : s.attention_length] = s.ids[: s.attention_length]
    lengths = np.array([s.attention_length for s in seqs])
    return ids, np.arange(width)[None, :] < lengths[:, None]
