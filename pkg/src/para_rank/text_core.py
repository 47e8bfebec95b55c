"""Tokenization, vocabulary and frozen word-embedding lookup."""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import FormatError

PAD = "<pad>"
UNK = "<unk>"
PAD_ID = 0
UNK_ID = 1

DEFAULT_EMBEDDING_DIM = 300


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in ("P", "S")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and give every punctuation/symbol char its own token.

    >>> tokenize("48-yarder")
    ['48', '-', 'yarder']
    """
    tokens: list[str] = []
    for chunk in text.lower().split():
        buf: list[str] = []
        for ch in chunk:
            if _is_punct(ch):
                if buf:
                    tokens.append("".join(buf))
                    buf = []
                tokens.append(ch)
            else:
                buf.append(ch)
        if buf:
            tokens.append("".join(buf))
    return tokens


def detokenize(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


class Vocabulary:
    """Token <-> id bijection with reserved PAD=0 and UNK=1.

    Ids are assigned in first-seen order; once frozen, lookups of unseen
    tokens fall back to UNK and ``add`` raises.
    """

    def __init__(self, tokens: Iterable[str] = ()):
        self.tokens: list[str] = [PAD, UNK]
        self.id_of: dict[str, int] = {PAD: PAD_ID, UNK: UNK_ID}
        self.frozen = False
        for tok in tokens:
            self.add(tok)

    @classmethod
    def build(cls, sequences: Iterable[Sequence[str]]) -> "Vocabulary":
        vocab = cls()
        for seq in sequences:
            for tok in seq:
                vocab.add(tok)
        vocab.freeze()
        return vocab

    def add(self, token: str) -> int:
        idx = self.id_of.get(token)
        if idx is not None:
            return idx
        if self.frozen:
            raise RuntimeError("vocabulary is frozen")
        idx = len(self.tokens)
        self.tokens.append(token)
        self.id_of[token] = idx
        return idx

    def freeze(self) -> "Vocabulary":
        self.frozen = True
        return self

    def lookup(self, token: str) -> int:
        return self.id_of.get(token, UNK_ID)

    def ids(self, tokens: Sequence[str]) -> np.ndarray:
        return np.fromiter((self.lookup(t) for t in tokens), dtype=np.int64, count=len(tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.id_of


@dataclass(frozen=True)
class EmbeddingTable:
    dim: int
    vectors: np.ndarray  # (len(vocab), dim), row PAD_ID is zero

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("embedding dim must be positive")
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.dim:
            raise ValueError(f"expected (size, {self.dim}) matrix, got {self.vectors.shape}")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding table contains non-finite entries")

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


def load_embeddings(
    source: TextIO, vocab: Vocabulary, default_dim: int = DEFAULT_EMBEDDING_DIM
) -> EmbeddingTable:
    """Read word2vec-text (GloVe) records and keep the rows the vocabulary needs.

    Tokens missing from the stream, UNK included, get zero vectors; the PAD
    row is always zero.
    """
    dim: int | None = None
    found: dict[int, np.ndarray] = {}
    for lineno, line in enumerate(source, start=1):
        parts = line.rstrip("\n").split(" ")
        if not parts or parts == [""]:
            continue
        word, values = parts[0], [p for p in parts[1:] if p != ""]
        if dim is None:
            dim = len(values)
            if dim == 0:
                raise FormatError(f"line {lineno}: no vector components")
        elif len(values) != dim:
            raise FormatError(
                f"line {lineno}: expected {dim} components, got {len(values)}"
            )
        idx = vocab.id_of.get(word)
        if idx is None or idx in found:
            continue
        try:
            vec = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError as exc:
            raise FormatError(f"line {lineno}: non-numeric component ({exc})") from None
        if not np.all(np.isfinite(vec)):
            raise FormatError(f"line {lineno}: non-finite component")
        found[idx] = vec

    if dim is None:
        dim = default_dim
    vectors = np.zeros((len(vocab), dim), dtype=np.float64)
    for idx, vec in found.items():
        vectors[idx] = vec
    vectors[PAD_ID] = 0.0
    return EmbeddingTable(dim=dim, vectors=vectors)


def embed_sequence(tokens: Sequence[str], vocab: Vocabulary, table: EmbeddingTable) -> np.ndarray:
    """Return a (len(tokens), dim) matrix; unknown tokens map to the UNK row."""
    if table.size != len(vocab):
        raise ValueError("embedding table was not built against this vocabulary")
    return table.vectors[vocab.ids(tokens)]
