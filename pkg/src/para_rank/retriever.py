"""Corpus ingestion and TF-IDF document retrieval.

Term weight is ``(1 + log tf) * log((1 + N) / (1 + df))`` over unigrams and
bigrams of the document's concatenated paragraphs; document vectors are L2
normalized and queries are scored by cosine similarity, so every score lies
in [0, 1] and can be multiplied into the paragraph and answer scores directly.

Sums go through :func:`math.fsum` so a score does not depend on summation
order; that keeps scores reproducible across index persistence and
comparable bit-for-bit with a dense reference computation.
"""

from __future__ import annotations

import io
import json
import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import IndexFormatError, IngestionError
from .text_core import tokenize

INDEX_MAGIC = b"PRIDX1"
INDEX_VERSION = 1
_PAIR = np.dtype([("term", "<u4"), ("weight", "<f8")])


@dataclass(frozen=True)
class Paragraph:
    doc_id: str
    para_index: int
    text: str
    tokens: tuple[str, ...]

    @property
    def key(self) -> tuple[str, int]:
        return (self.doc_id, self.para_index)


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    paragraphs: tuple[Paragraph, ...]


@dataclass
class Corpus:
    documents: list[Document]
    _by_id: dict[str, Document] = field(init=False, repr=False)

    def __post_init__(self):
        self._by_id = {d.doc_id: d for d in self.documents}

    def __len__(self) -> int:
        return len(self.documents)

    def document(self, doc_id: str) -> Document:
        return self._by_id[doc_id]

    def paragraph(self, doc_id: str, para_index: int) -> Paragraph:
        return self._by_id[doc_id].paragraphs[para_index]

    def paragraphs(self) -> Iterable[Paragraph]:
        for doc in self.documents:
            yield from doc.paragraphs

    @property
    def num_paragraphs(self) -> int:
        return sum(len(d.paragraphs) for d in self.documents)


def make_document(doc_id: str, title: str, texts: Sequence[str]) -> Document:
    # Blank paragraphs are dropped, and the survivors renumbered from 0.
    kept = [t for t in texts if t.strip()]
    if not kept:
        raise IngestionError(f"document {doc_id} has no non-empty paragraphs")
    paras = tuple(
        Paragraph(doc_id, i, text, tuple(tokenize(text))) for i, text in enumerate(kept)
    )
    return Document(doc_id, title, paras)


def ingest_corpus(source: Iterable[dict] | IO[str]) -> Corpus:
    """Build a corpus from JSON-lines text or already-parsed records.

    Each record is ``{"id": str, "title": str, "paragraphs": [str, ...]}``.
    """
    documents: list[Document] = []
    seen: set[str] = set()
    for n, rec in enumerate(_records(source), start=1):
        try:
            doc_id = str(rec["id"])
            title = str(rec.get("title", ""))
            texts = rec["paragraphs"]
        except (KeyError, TypeError, AttributeError):
            raise IngestionError(f"record {n}: expected keys 'id' and 'paragraphs'") from None
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            raise IngestionError(f"record {n}: 'paragraphs' must be a list of strings")
        if doc_id in seen:
            raise IngestionError(f"duplicate doc_id {doc_id}")
        seen.add(doc_id)
        documents.append(make_document(doc_id, title, texts))
    return Corpus(documents)


def _records(source):
    if isinstance(source, (io.TextIOBase, io.IOBase)) or hasattr(source, "readline"):
        for lineno, line in enumerate(source, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    else:
        yield from source


def load_corpus(path: str | Path) -> Corpus:
    with open(path, encoding="utf-8") as fh:
        return ingest_corpus(fh)


def ngrams(tokens: Sequence[str], n: int) -> list[str]:
    out = list(tokens)
    for k in range(2, n + 1):
        out.extend(" ".join(tokens[i : i + k]) for i in range(len(tokens) - k + 1))
    return out


def hash_term(term: str, bits: int) -> int:
    """Bucket id for the hashed-feature mode (32-bit murmur3, seed 0)."""
    h = _murmur3_32(term.encode("utf-8"))
    return h & ((1 << bits) - 1)


def _murmur3_32(data: bytes, seed: int = 0) -> int:
    c1, c2, mask = 0xCC9E2D51, 0x1B873593, 0xFFFFFFFF
    h = seed
    nblocks = len(data) // 4
    for i in range(nblocks):
        k = int.from_bytes(data[4 * i : 4 * i + 4], "little")
        k = (k * c1) & mask
        k = ((k << 15) | (k >> 17)) & mask
        k = (k * c2) & mask
        h ^= k
        h = ((h << 13) | (h >> 19)) & mask
        h = (h * 5 + 0xE6546B64) & mask
    tail = data[4 * nblocks :]
    k = 0
    for i, b in enumerate(tail):
        k |= b << (8 * i)
    if tail:
        k = (k * c1) & mask
        k = ((k << 15) | (k >> 17)) & mask
        k = (k * c2) & mask
        h ^= k
    h ^= len(data)
    h ^= h >> 16
    h = (h * 0x85EBCA6B) & mask
    h ^= h >> 13
    h = (h * 0xC2B2AE35) & mask
    h ^= h >> 16
    return h


def log_tf(count: int) -> float:
    return 1.0 + math.log(count)


def smoothed_idf(df: int, n_docs: int) -> float:
    return math.log((1 + n_docs) / (1 + df))


@dataclass
class TfIdfIndex:
    doc_ids: list[str]
    terms: list[str]  # term id -> term text ("a b" for bigrams, bucket number when hashed)
    df: np.ndarray  # (num_terms,) int64
    vectors: list[tuple[np.ndarray, np.ndarray]]  # per doc: (sorted term ids, unit-norm weights)
    ngram: int = 2
    hash_bits: int = 0
    term_id: dict[str, int] = field(init=False, repr=False)
    _postings: dict[int, list[tuple[int, float]]] = field(init=False, repr=False)
    _doc_rank: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.term_id = {t: i for i, t in enumerate(self.terms)}
        self._doc_rank = {d: i for i, d in enumerate(self.doc_ids)}
        postings: dict[int, list[tuple[int, float]]] = {}
        for d, (tids, weights) in enumerate(self.vectors):
            for t, w in zip(tids.tolist(), weights.tolist()):
                postings.setdefault(t, []).append((d, w))
        self._postings = postings

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def _key(self, term: str) -> str:
        return str(hash_term(term, self.hash_bits)) if self.hash_bits else term

    def features(self, tokens: Sequence[str]) -> Counter:
        return Counter(self._key(t) for t in ngrams(tokens, self.ngram))

    def idf(self, term: str) -> float:
        """Smoothed idf of a unigram; unseen terms get the df=0 value."""
        tid = self.term_id.get(self._key(term))
        df = int(self.df[tid]) if tid is not None else 0
        return smoothed_idf(df, self.n_docs)

    def query_vector(self, tokens: Sequence[str]) -> dict[int, float]:
        """Unnormalized query weights over in-vocabulary terms."""
        q = {}
        for term, count in self.features(tokens).items():
            tid = self.term_id.get(term)
            if tid is None:
                continue
            w = log_tf(count) * smoothed_idf(int(self.df[tid]), self.n_docs)
            if w != 0.0:
                q[tid] = w
        return q

    def doc_order(self, doc_id: str) -> int:
        return self._doc_rank[doc_id]


def build_index(corpus: Corpus, ngram: int = 2, hash_bits: int = 0) -> TfIdfIndex:
    if len(corpus) == 0:
        raise ValueError("cannot index an empty corpus")
    if ngram < 1:
        raise ValueError("ngram must be >= 1")
    if not 0 <= hash_bits <= 32:
        raise ValueError("hash_bits must be in [0, 32]")

    def key(term):
        return str(hash_term(term, hash_bits)) if hash_bits else term

    counts: list[Counter] = []
    terms: list[str] = []
    term_id: dict[str, int] = {}
    for doc in corpus.documents:
        tokens = [t for p in doc.paragraphs for t in p.tokens]
        c = Counter(key(t) for t in ngrams(tokens, ngram))
        for term in c:
            if term not in term_id:
                term_id[term] = len(terms)
                terms.append(term)
        counts.append(c)

    df = np.zeros(len(terms), dtype=np.int64)
    for c in counts:
        for term in c:
            df[term_id[term]] += 1

    n = len(corpus)
    vectors = []
    for c in counts:
        items = sorted((term_id[t], log_tf(k) * smoothed_idf(int(df[term_id[t]]), n)) for t, k in c.items())
        items = [(t, w) for t, w in items if w != 0.0]
        norm = math.sqrt(math.fsum(w * w for _, w in items))
        tids = np.array([t for t, _ in items], dtype=np.int64)
        weights = np.array([w / norm for _, w in items]) if norm > 0 else np.zeros(0)
        if norm == 0:
            tids = np.zeros(0, dtype=np.int64)
        vectors.append((tids, weights))

    return TfIdfIndex([d.doc_id for d in corpus.documents], terms, df, vectors, ngram, hash_bits)


def retrieve(index: TfIdfIndex, question: Sequence[str], n: int) -> list[tuple[str, float]]:
    """Top-``n`` documents by cosine similarity; zero-score documents are dropped.

    Ties go to the document ingested first.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    q = index.query_vector(question)
    if not q:
        return []
    qnorm = math.sqrt(math.fsum(w * w for w in q.values()))
    partial: dict[int, list[float]] = {}
    for tid, qw in q.items():
        for d, dw in index._postings.get(tid, ()):
            partial.setdefault(d, []).append((qw / qnorm) * dw)
    scored = []
    for d, parts in partial.items():
        s = min(1.0, math.fsum(parts))
        if s > 0.0:
            scored.append((-s, d))
    scored.sort()
    return [(index.doc_ids[d], -neg) for neg, d in scored[:n]]


def save_index(index: TfIdfIndex, path: str | Path) -> None:
    """Write the ``PRIDX1`` file: magic, u32 header length, JSON header, then
    one block per document of u32 nnz followed by (u32 term id, f64 weight)
    little-endian pairs."""
    header = {
        "version": INDEX_VERSION,
        "ngram": index.ngram,
        "hash_bits": index.hash_bits,
        "doc_ids": index.doc_ids,
        "terms": index.terms,
        "df": index.df.tolist(),
    }
    hbytes = json.dumps(header, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<I", len(hbytes)))
        fh.write(hbytes)
        for tids, weights in index.vectors:
            block = np.empty(len(tids), dtype=_PAIR)
            block["term"] = tids
            block["weight"] = weights
            fh.write(struct.pack("<I", len(tids)))
            fh.write(block.tobytes())


def load_index(path: str | Path) -> TfIdfIndex:
    data = Path(path).read_bytes()
    if not data.startswith(INDEX_MAGIC):
        raise IndexFormatError("not a para-rank index")
    pos = len(INDEX_MAGIC)
    try:
        (hlen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        header = json.loads(data[pos : pos + hlen].decode("utf-8"))
        pos += hlen
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IndexFormatError(f"corrupt index header: {exc}") from None
    if header.get("version") != INDEX_VERSION:
        raise IndexFormatError(f"unsupported index version {header.get('version')}")
    vectors = []
    try:
        for _ in header["doc_ids"]:
            (nnz,) = struct.unpack_from("<I", data, pos)
            pos += 4
            end = pos + nnz * _PAIR.itemsize
            if end > len(data):
                raise IndexFormatError("truncated index data")
            block = np.frombuffer(data[pos:end], dtype=_PAIR)
            pos = end
            vectors.append((block["term"].astype(np.int64), block["weight"].astype(np.float64)))
    except struct.error:
        raise IndexFormatError("truncated index data") from None
    return TfIdfIndex(
        list(header["doc_ids"]),
        list(header["terms"]),
        np.asarray(header["df"], dtype=np.int64),
        vectors,
        int(header["ngram"]),
        int(header["hash_bits"]),
    )
