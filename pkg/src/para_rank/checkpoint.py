"""Self-contained ranker checkpoints.

Layout: an 8-byte magic, a little-endian u32 header length, a UTF-8 JSON
header, then every tensor listed in the header in order, row-major
little-endian. Tensors whose values are all exactly representable in float32
are written as ``<f4``; anything else is written as ``<f8`` so that a round
trip is always lossless. The header records each tensor's dtype.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .encoder import BiLstmEncoder, LstmDirection, LstmLayerParams
from .errors import (
    BadMagicError,
    CorruptHeaderError,
    ShapeMismatchError,
    TruncatedDataError,
    UnknownScorerError,
    VersionMismatchError,
)
from .ranker import SCORERS, BilinearScorer, DotScorer, MlpScorer, RankerModel
from .text_core import PAD, UNK, EmbeddingTable, Vocabulary

MAGIC = b"PRCKPT\x00\x01"
FORMAT_VERSION = 1
TOKENIZER = {"lowercase": True, "split": "whitespace", "punctuation": "separate"}


def _dtype_for(a: np.ndarray) -> str:
    return "<f4" if np.array_equal(a.astype(np.float32).astype(np.float64), a) else "<f8"


def _expected_shapes(header: dict) -> dict[str, tuple[int, ...]]:
    enc, vocab_size, dim = header["encoder"], len(header["vocab"]) + 2, header["embedding_dim"]
    H, L = enc["hidden"], enc["layers"]
    shapes = {"embeddings": (vocab_size, dim)}
    for side in ("encoder_p", "encoder_q"):
        d_in = dim
        for l in range(L):
            for direction in ("fwd", "bwd"):
                base = f"{side}.layers.{l}.{direction}"
                shapes[f"{base}.W"] = (4 * H, d_in)
                shapes[f"{base}.U"] = (4 * H, H)
                shapes[f"{base}.b"] = (4 * H,)
            d_in = 2 * H
    D = 2 * H
    kind = header["scorer"]["kind"]
    if kind == "bilinear":
        shapes["scorer.W"] = (D, D)
    elif kind == "mlp":
        h = header["scorer"]["mlp_hidden"]
        shapes.update({"scorer.Wh": (h, 3 * D), "scorer.bh": (h,), "scorer.v": (h,), "scorer.b": (1,)})
    return shapes


def save_checkpoint(model: RankerModel, path: str | Path) -> None:
    if model.encoder_p.hidden_dim != model.encoder_q.hidden_dim or len(model.encoder_p.layers) != len(model.encoder_q.layers):
        raise ValueError("checkpoints require identically shaped paragraph and question encoders")
    tensors = {"embeddings": model.embeddings.vectors}
    tensors.update(model.parameters())
    scorer = {"kind": model.scorer.kind}
    if isinstance(model.scorer, MlpScorer):
        scorer["mlp_hidden"] = model.scorer.hidden
    header = {
        "format_version": FORMAT_VERSION,
        "tokenizer": TOKENIZER,
        "vocab": model.vocab.tokens[2:],
        "embedding_dim": model.embeddings.dim,
        "encoder": {
            "layers": len(model.encoder_p.layers),
            "hidden": model.encoder_p.hidden_dim,
            "per_direction": True,
            "dropout": model.encoder_p.dropout_rate,
        },
        "scorer": scorer,
        "max_paragraph_len": model.max_paragraph_len,
        "max_question_len": model.max_question_len,
        "tensors": [
            {"name": name, "shape": list(a.shape), "dtype": _dtype_for(a)} for name, a in tensors.items()
        ],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for t in header["tensors"]:
            fh.write(np.ascontiguousarray(tensors[t["name"]], dtype=t["dtype"]).tobytes())


def _read_header(data: bytes) -> tuple[dict, int]:
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagicError("not a para-rank checkpoint")
    off = len(MAGIC)
    if len(data) < off + 4:
        raise TruncatedDataError("truncated checkpoint header")
    (n,) = struct.unpack_from("<I", data, off)
    off += 4
    if len(data) < off + n:
        raise TruncatedDataError("truncated checkpoint header")
    try:
        header = json.loads(data[off : off + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptHeaderError(f"corrupt checkpoint header: {exc}") from None
    if not isinstance(header, dict):
        raise CorruptHeaderError("corrupt checkpoint header: not an object")
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"checkpoint format version {version!r}, expected {FORMAT_VERSION}")
    return header, off + n


def load_checkpoint(path: str | Path) -> RankerModel:
    data = Path(path).read_bytes()
    header, off = _read_header(data)
    try:
        kind = header["scorer"]["kind"]
        if kind not in SCORERS:
            raise UnknownScorerError(f"unknown scorer kind {kind!r}")
        expected = _expected_shapes(header)
        specs = [(t["name"], tuple(t["shape"]), t["dtype"]) for t in header["tensors"]]
        enc = header["encoder"]
        vocab_tokens = list(header["vocab"])
    except (KeyError, TypeError) as exc:
        raise CorruptHeaderError(f"corrupt checkpoint header: missing or invalid {exc}") from None

    if {name for name, _, _ in specs} != set(expected) or len(specs) != len(expected):
        raise CorruptHeaderError("checkpoint tensor list does not match its configuration")
    tensors = {}
    for name, shape, dtype in specs:
        if shape != expected[name]:
            raise ShapeMismatchError(f"tensor shape mismatch for {name}: stored {shape}, expected {expected[name]}")
        if dtype not in ("<f4", "<f8"):
            raise CorruptHeaderError(f"unsupported tensor dtype {dtype!r}")
        size = int(np.prod(shape, dtype=np.int64)) * np.dtype(dtype).itemsize
        if off + size > len(data):
            raise TruncatedDataError(f"truncated tensor data in {name}")
        tensors[name] = np.frombuffer(data, dtype=dtype, count=size // np.dtype(dtype).itemsize, offset=off).astype(np.float64).reshape(shape)
        off += size
    if off != len(data):
        raise CorruptHeaderError(f"{len(data) - off} unexpected trailing bytes")

    vocab = Vocabulary(t for t in vocab_tokens if t not in (PAD, UNK)).freeze()
    if len(vocab) != len(vocab_tokens) + 2:
        raise CorruptHeaderError("vocabulary contains duplicate tokens")

    def encoder(side):
        layers = []
        for l in range(enc["layers"]):
            dirs = [
                LstmDirection(*(tensors[f"{side}.layers.{l}.{d}.{p}"] for p in ("W", "U", "b")))
                for d in ("fwd", "bwd")
            ]
            layers.append(LstmLayerParams(*dirs))
        return BiLstmEncoder(layers, float(enc.get("dropout", 0.0)))

    D = 2 * enc["hidden"]
    if kind == "dot":
        scorer = DotScorer(D)
    elif kind == "bilinear":
        scorer = BilinearScorer(D, tensors["scorer.W"])
    else:
        scorer = MlpScorer(D, header["scorer"]["mlp_hidden"], {k: tensors[f"scorer.{k}"] for k in ("Wh", "bh", "v", "b")})
    return RankerModel(
        vocab,
        EmbeddingTable(header["embedding_dim"], tensors["embeddings"]),
        encoder("encoder_p"),
        encoder("encoder_q"),
        scorer,
        int(header.get("max_paragraph_len", 300)),
        int(header.get("max_question_len", 50)),
    )
