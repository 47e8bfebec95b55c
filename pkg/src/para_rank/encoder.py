"""Multi-layer bidirectional LSTM encoder with exact reverse-mode gradients.

The sequence representation is the forward direction's hidden state at the
last position concatenated with the backward direction's hidden state at
position 0 (the state that has read the whole sequence right to left).

Gate blocks are stacked in the order i, f, o, g along the first axis of W, U
and b, so ``W`` is (4H, D), ``U`` is (4H, H) and ``b`` is (4H,).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import _kernels
from ._kernels.fallback import sigmoid

Mode = Literal["train", "infer"]
DIRECTIONS = ("fwd", "bwd")


def as_float32_grid(a: np.ndarray) -> np.ndarray:
    """Round to the nearest float32 value, stored as float64."""
    return np.asarray(a, dtype=np.float32).astype(np.float64)


@dataclass
class LstmDirection:
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        G, H = self.U.shape
        if G != 4 * H or self.W.shape[0] != G or self.b.shape != (G,):
            raise ValueError(
                f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}"
            )

    @property
    def hidden_dim(self) -> int:
        return self.U.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "LstmDirection":
        bound = 1.0 / np.sqrt(hidden_dim)
        W = rng.uniform(-bound, bound, size=(4 * hidden_dim, input_dim))
        U = rng.uniform(-bound, bound, size=(4 * hidden_dim, hidden_dim))
        b = np.zeros(4 * hidden_dim)
        b[hidden_dim : 2 * hidden_dim] = 1.0
        return cls(as_float32_grid(W), as_float32_grid(U), b)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmDirection":
        return cls(
            np.zeros((4 * hidden_dim, input_dim)),
            np.zeros((4 * hidden_dim, hidden_dim)),
            np.zeros(4 * hidden_dim),
        )


@dataclass
class LstmLayerParams:
    fwd: LstmDirection
    bwd: LstmDirection

    def __post_init__(self):
        if (self.fwd.W.shape, self.fwd.U.shape) != (self.bwd.W.shape, self.bwd.U.shape):
            raise ValueError("forward and backward directions must have equal shapes")

    @property
    def input_dim(self) -> int:
        return self.fwd.input_dim

    @property
    def hidden_dim(self) -> int:
        return self.fwd.hidden_dim

    def direction(self, name: str) -> LstmDirection:
        return self.fwd if name == "fwd" else self.bwd


@dataclass
class BiLstmEncoder:
    layers: list[LstmLayerParams]
    dropout_rate: float = 0.0

    def __post_init__(self):
        if not self.layers:
            raise ValueError("encoder needs at least one layer")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        for below, above in zip(self.layers, self.layers[1:]):
            if above.input_dim != 2 * below.hidden_dim:
                raise ValueError(
                    f"layer input_dim {above.input_dim} != 2 x hidden {below.hidden_dim}"
                )

    @classmethod
    def create(
        cls,
        input_dim: int,
        hidden_dim: int,
        num_layers: int = 1,
        dropout_rate: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> "BiLstmEncoder":
        rng = rng if rng is not None else np.random.default_rng()
        layers = []
        dim = input_dim
        for _ in range(num_layers):
            layers.append(
                LstmLayerParams(
                    LstmDirection.init(dim, hidden_dim, rng),
                    LstmDirection.init(dim, hidden_dim, rng),
                )
            )
            dim = 2 * hidden_dim
        return cls(layers, dropout_rate)

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def hidden_dim(self) -> int:
        return self.layers[-1].hidden_dim

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden_dim

    def parameters(self) -> dict[str, np.ndarray]:
        """Flat name -> array mapping. Arrays are the live parameters, not copies."""
        out = {}
        for l, layer in enumerate(self.layers):
            for d in DIRECTIONS:
                p = layer.direction(d)
                out[f"layers.{l}.{d}.W"] = p.W
                out[f"layers.{l}.{d}.U"] = p.U
                out[f"layers.{l}.{d}.b"] = p.b
        return out


@dataclass
class _DirectionRecord:
    gates: np.ndarray
    c: np.ndarray
    h: np.ndarray  # in the direction's own processing order


@dataclass
class _LayerRecord:
    inputs: np.ndarray  # layer input after dropout, (T, D)
    mask: np.ndarray | None
    fwd: _DirectionRecord
    bwd: _DirectionRecord


@dataclass
class GradientTape:
    """Activations recorded by :func:`bilstm_encode` for :func:`bilstm_backward`."""

    encoder: BiLstmEncoder
    embedded: np.ndarray
    layers: list[_LayerRecord] = field(default_factory=list)
    repr: np.ndarray | None = None

    @property
    def length(self) -> int:
        return self.embedded.shape[0]

    def replay(self) -> np.ndarray:
        """Re-run the forward pass with the recorded dropout masks."""
        masks = [rec.mask for rec in self.layers]
        return _forward(self.encoder, self.embedded, masks)[0]


def lstm_cell_forward(
    params: LstmDirection, x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM step for a single direction."""
    H = params.hidden_dim
    if x_t.shape != (params.input_dim,) or h_prev.shape != (H,) or c_prev.shape != (H,):
        raise ValueError(
            f"dimension mismatch: x{x_t.shape} h{h_prev.shape} c{c_prev.shape} "
            f"for input_dim={params.input_dim}, hidden_dim={H}"
        )
    z = params.W @ x_t + params.U @ h_prev + params.b
    i = sigmoid(z[:H])
    f = sigmoid(z[H : 2 * H])
    o = sigmoid(z[2 * H : 3 * H])
    g = np.tanh(z[3 * H :])
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    return h_t, c_t


def _run_direction(p: LstmDirection, X: np.ndarray) -> _DirectionRecord:
    xw = np.ascontiguousarray(X @ p.W.T + p.b)
    gates, c, h = _kernels.lstm_forward(xw, np.ascontiguousarray(p.U))
    return _DirectionRecord(gates, c, h)


def _forward(encoder: BiLstmEncoder, embedded: np.ndarray, masks: list):
    X = embedded
    records = []
    for layer, mask in zip(encoder.layers, masks):
        Xin = X * mask if mask is not None else X
        fwd = _run_direction(layer.fwd, Xin)
        bwd = _run_direction(layer.bwd, Xin[::-1])
        records.append(_LayerRecord(Xin, mask, fwd, bwd))
        X = np.concatenate([fwd.h, bwd.h[::-1]], axis=1)
    top = records[-1]
    rep = np.concatenate([top.fwd.h[-1], top.bwd.h[-1]])
    return rep, records


def bilstm_encode(
    encoder: BiLstmEncoder,
    embedded: np.ndarray,
    mode: Mode = "infer",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, GradientTape]:
    """Encode a (T, D) sequence into a 2H vector.

    In train mode inverted dropout is applied to the embeddings and to every
    inter-layer activation, with one mask per sequence shared across time
    steps. The final representation itself is never dropped.
    """
    X = np.ascontiguousarray(embedded, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("cannot encode empty sequence")
    if X.shape[1] != encoder.input_dim:
        raise ValueError(f"expected input width {encoder.input_dim}, got {X.shape[1]}")
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")

    p = encoder.dropout_rate
    masks: list[np.ndarray | None] = []
    if mode == "train" and p > 0.0:
        if rng is None:
            raise ValueError("train mode with dropout requires an rng")
        for layer in encoder.layers:
            keep = rng.random(layer.input_dim) >= p
            masks.append(keep / (1.0 - p))
    else:
        masks = [None] * len(encoder.layers)

    rep, records = _forward(encoder, X, masks)
    tape = GradientTape(encoder=encoder, embedded=X, layers=records, repr=rep)
    return rep, tape


def bilstm_backward(
    encoder: BiLstmEncoder, tape: GradientTape, d_repr: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients of ``repr . d_repr`` w.r.t. every parameter and the input sequence.

    Returns ``(param_grads, d_embedded)`` where ``param_grads`` is keyed like
    ``encoder.parameters()``.
    """
    if tape.encoder is not encoder or len(tape.layers) != len(encoder.layers):
        raise ValueError("gradient tape was recorded with a different encoder")
    for rec, layer in zip(tape.layers, encoder.layers):
        if rec.inputs.shape[1] != layer.input_dim or rec.fwd.h.shape[1] != layer.hidden_dim:
            raise ValueError("gradient tape does not match encoder shapes")
    d_repr = np.asarray(d_repr, dtype=np.float64)
    if d_repr.shape != (encoder.output_dim,):
        raise ValueError(f"d_repr must have shape ({encoder.output_dim},)")

    T = tape.length
    H = encoder.hidden_dim
    d_out = np.zeros((T, 2 * H))
    d_out[T - 1, :H] = d_repr[:H]
    d_out[0, H:] = d_repr[H:]

    grads: dict[str, np.ndarray] = {}
    for l in range(len(encoder.layers) - 1, -1, -1):
        layer = encoder.layers[l]
        rec = tape.layers[l]
        Hl = layer.hidden_dim
        Xin = rec.inputs
        d_in = np.zeros_like(Xin)

        dh = np.ascontiguousarray(d_out[:, :Hl])
        dz, dU = _kernels.lstm_backward(rec.fwd.gates, rec.fwd.c, rec.fwd.h, layer.fwd.U, dh)
        grads[f"layers.{l}.fwd.W"] = dz.T @ Xin
        grads[f"layers.{l}.fwd.U"] = dU
        grads[f"layers.{l}.fwd.b"] = dz.sum(axis=0)
        d_in += dz @ layer.fwd.W

        dh = np.ascontiguousarray(d_out[::-1, Hl:])
        dz, dU = _kernels.lstm_backward(rec.bwd.gates, rec.bwd.c, rec.bwd.h, layer.bwd.U, dh)
        grads[f"layers.{l}.bwd.W"] = dz.T @ Xin[::-1]
        grads[f"layers.{l}.bwd.U"] = dU
        grads[f"layers.{l}.bwd.b"] = dz.sum(axis=0)
        d_in += (dz @ layer.bwd.W)[::-1]

        if rec.mask is not None:
            d_in = d_in * rec.mask
        d_out = d_in

    ordered = {k: grads[k] for k in encoder.parameters()}
    return ordered, d_out
