import json
import struct

import numpy as np
import pytest

from para_rank.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from para_rank.errors import (
    BadMagicError,
    CorruptHeaderError,
    ShapeMismatchError,
    TruncatedDataError,
    UnknownScorerError,
    VersionMismatchError,
)

from test_ranker import WORDS, tiny_model

PARAS = [["w1", "w2", "w3"], ["w4"], ["w5", "zzz", "w6", "w7", "w8"], ["zzz"]]
QUESTION = ["w2", "w9", "qqq"]


def scores(model):
    q, _ = model.encode_question(QUESTION)
    return [model.scorer.score(model.encode_paragraph(p)[0], q) for p in PARAS]


def perturbed(kind, layers=2):
    """A model whose parameters are not all on the float32 grid."""
    model = tiny_model(hidden=3, layers=layers, scorer=kind, seed=7)
    rng = np.random.default_rng(0)
    for v in model.parameters().values():
        v += rng.normal(scale=0.1, size=v.shape)
    return model


def split(path):
    data = path.read_bytes()
    (n,) = struct.unpack_from("<I", data, len(MAGIC))
    start = len(MAGIC) + 4
    return json.loads(data[start : start + n]), data[start + n :]


def rewrite(path, header, body):
    blob = json.dumps(header).encode()
    path.write_bytes(MAGIC + struct.pack("<I", len(blob)) + blob + body)


@pytest.mark.parametrize("kind", ["dot", "bilinear", "mlp"])
def test_round_trip_is_bit_identical(tmp_path, kind):
    model = perturbed(kind)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert [s.hex() for s in scores(loaded)] == [s.hex() for s in scores(model)]
    assert loaded.vocab.tokens == model.vocab.tokens
    assert loaded.scorer.kind == kind
    for name, v in model.parameters().items():
        assert loaded.parameters()[name].tobytes() == v.tobytes()


def test_float32_parameters_are_stored_as_float32(tmp_path):
    model = tiny_model()
    for v in model.parameters().values():
        v[...] = v.astype(np.float32)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    header, _ = split(path)
    dtypes = {t["name"]: t["dtype"] for t in header["tensors"]}
    assert all(d == "<f4" for n, d in dtypes.items() if n != "embeddings")
    assert header["encoder"] == {"layers": 1, "hidden": 3, "per_direction": True, "dropout": 0.0}
    assert header["vocab"] == WORDS


def test_wrong_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
    with pytest.raises(BadMagicError, match="not a para-rank checkpoint"):
        load_checkpoint(path)


@pytest.fixture
def saved(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(tiny_model(hidden=3, scorer="mlp"), path)
    return path


def test_truncated_tensor_data(saved):
    saved.write_bytes(saved.read_bytes()[:-5])
    with pytest.raises(TruncatedDataError):
        load_checkpoint(saved)


def test_truncated_header(saved):
    saved.write_bytes(saved.read_bytes()[: len(MAGIC) + 10])
    with pytest.raises(TruncatedDataError):
        load_checkpoint(saved)


def test_trailing_bytes(saved):
    saved.write_bytes(saved.read_bytes() + b"\x00")
    with pytest.raises(CorruptHeaderError):
        load_checkpoint(saved)


def test_corrupt_json(saved):
    data = bytearray(saved.read_bytes())
    data[len(MAGIC) + 4] = ord("!")
    saved.write_bytes(bytes(data))
    with pytest.raises(CorruptHeaderError):
        load_checkpoint(saved)


def test_version_mismatch(saved):
    header, body = split(saved)
    header["format_version"] = 2
    rewrite(saved, header, body)
    with pytest.raises(VersionMismatchError):
        load_checkpoint(saved)


def test_unknown_scorer(saved):
    header, body = split(saved)
    header["scorer"]["kind"] = "cosine"
    rewrite(saved, header, body)
    with pytest.raises(UnknownScorerError):
        load_checkpoint(saved)


def test_hidden_size_mismatch(saved):
    header, body = split(saved)
    header["encoder"]["hidden"] = 6
    rewrite(saved, header, body)
    with pytest.raises(ShapeMismatchError, match="tensor shape mismatch"):
        load_checkpoint(saved)


def test_missing_key(saved):
    header, body = split(saved)
    del header["encoder"]
    rewrite(saved, header, body)
    with pytest.raises(CorruptHeaderError):
        load_checkpoint(saved)


def test_errors_are_distinct():
    kinds = [BadMagicError, CorruptHeaderError, ShapeMismatchError, TruncatedDataError, UnknownScorerError, VersionMismatchError]
    assert len(set(kinds)) == len(kinds)
    for a in kinds:
        for b in kinds:
            assert a is b or not issubclass(a, b)
