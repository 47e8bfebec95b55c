"""Paragraph ranker: dual Bi-LSTM encoders, scoring functions, negative
sampling loss and Adamax training."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .aggregator import contains_answer, normalize_answer
from .encoder import BiLstmEncoder, GradientTape, Mode, as_float32_grid, bilstm_backward, bilstm_encode
from .errors import NumericError
from .retriever import Paragraph
from .text_core import EmbeddingTable, Vocabulary, embed_sequence

log = logging.getLogger(__name__)

MAX_PARAGRAPH_LEN = 300
MAX_QUESTION_LEN = 50
_ONE_MINUS = float(np.nextafter(1.0, 0.0))
_TINY = float(np.finfo(np.float64).tiny)


# -- scoring functions --------------------------------------------------------


class DotScorer:
    kind = "dot"

    def __init__(self, dim: int):
        self.dim = dim

    def parameters(self) -> dict[str, np.ndarray]:
        return {}

    def _check(self, p, q):
        if p.shape != (self.dim,) or q.shape != (self.dim,):
            raise ValueError(f"scorer expects width {self.dim}, got {p.shape} and {q.shape}")

    def score(self, p: np.ndarray, q: np.ndarray) -> float:
        self._check(p, q)
        return float(p @ q)

    def backward(self, p, q, ds):
        return ds * q, ds * p, {}


class BilinearScorer(DotScorer):
    kind = "bilinear"

    def __init__(self, dim: int, W: np.ndarray | None = None):
        super().__init__(dim)
        self.W = np.eye(dim) if W is None else np.asarray(W, dtype=np.float64)
        if self.W.shape != (dim, dim):
            raise ValueError(f"bilinear W must be ({dim}, {dim})")

    def parameters(self):
        return {"W": self.W}

    def score(self, p, q):
        self._check(p, q)
        return float(p @ self.W @ q)

    def backward(self, p, q, ds):
        return ds * (self.W @ q), ds * (self.W.T @ p), {"W": ds * np.outer(p, q)}


class MlpScorer(DotScorer):
    """``v . tanh(Wh [p; q; p*q] + bh) + b``."""

    kind = "mlp"

    def __init__(self, dim: int, hidden: int, params: dict | None = None, rng=None):
        super().__init__(dim)
        self.hidden = hidden
        if params is None:
            rng = rng if rng is not None else np.random.default_rng()
            bound = 1.0 / math.sqrt(3 * dim)
            params = {
                "Wh": as_float32_grid(rng.uniform(-bound, bound, (hidden, 3 * dim))),
                "bh": np.zeros(hidden),
                "v": as_float32_grid(rng.uniform(-1 / math.sqrt(hidden), 1 / math.sqrt(hidden), hidden)),
                "b": np.zeros(1),
            }
        self.Wh = params["Wh"]
        self.bh = params["bh"]
        self.v = params["v"]
        self.b = params["b"]
        if self.Wh.shape != (hidden, 3 * dim) or self.bh.shape != (hidden,) or self.v.shape != (hidden,) or self.b.shape != (1,):
            raise ValueError("inconsistent MLP scorer shapes")

    def parameters(self):
        return {"Wh": self.Wh, "bh": self.bh, "v": self.v, "b": self.b}

    def score(self, p, q):
        self._check(p, q)
        feat = np.concatenate([p, q, p * q])
        return float(self.v @ np.tanh(self.Wh @ feat + self.bh) + self.b[0])

    def backward(self, p, q, ds):
        D = self.dim
        feat = np.concatenate([p, q, p * q])
        t = np.tanh(self.Wh @ feat + self.bh)
        da = ds * self.v * (1.0 - t * t)
        dfeat = self.Wh.T @ da
        grads = {"Wh": np.outer(da, feat), "bh": da, "v": ds * t, "b": np.array([ds])}
        return dfeat[:D] + dfeat[2 * D :] * q, dfeat[D : 2 * D] + dfeat[2 * D :] * p, grads


SCORERS = ("dot", "bilinear", "mlp")


def make_scorer(kind: str, dim: int, mlp_hidden: int | None = None, rng=None):
    if kind == "dot":
        return DotScorer(dim)
    if kind == "bilinear":
        return BilinearScorer(dim)
    if kind == "mlp":
        return MlpScorer(dim, mlp_hidden or dim, rng=rng)
    raise ValueError(f"unknown scorer {kind!r}; expected one of {SCORERS}")


# -- model ----------------------------------------------------------------------


@dataclass
class RankerModel:
    vocab: Vocabulary
    embeddings: EmbeddingTable
    encoder_p: BiLstmEncoder
    encoder_q: BiLstmEncoder
    scorer: DotScorer
    max_paragraph_len: int = MAX_PARAGRAPH_LEN
    max_question_len: int = MAX_QUESTION_LEN

    def __post_init__(self):
        if self.encoder_p.output_dim != self.encoder_q.output_dim:
            raise ValueError("paragraph and question encoders must have equal output widths")
        if self.encoder_p.input_dim != self.embeddings.dim or self.encoder_q.input_dim != self.embeddings.dim:
            raise ValueError("encoder input width must equal the embedding dim")
        if self.scorer.dim != self.encoder_p.output_dim:
            raise ValueError("scorer width must equal the encoder output width")

    @classmethod
    def create(
        cls,
        vocab: Vocabulary,
        embeddings: EmbeddingTable,
        hidden: int = 128,
        layers: int = 3,
        dropout: float = 0.4,
        scorer: str = "dot",
        mlp_hidden: int | None = None,
        seed: int = 0,
    ) -> "RankerModel":
        rng = np.random.default_rng(seed)
        enc_p = BiLstmEncoder.create(embeddings.dim, hidden, layers, dropout, rng)
        enc_q = BiLstmEncoder.create(embeddings.dim, hidden, layers, dropout, rng)
        return cls(vocab, embeddings, enc_p, enc_q, make_scorer(scorer, 2 * hidden, mlp_hidden, rng))

    @property
    def repr_dim(self) -> int:
        return self.encoder_p.output_dim

    def parameters(self) -> dict[str, np.ndarray]:
        out = {f"encoder_p.{k}": v for k, v in self.encoder_p.parameters().items()}
        out.update({f"encoder_q.{k}": v for k, v in self.encoder_q.parameters().items()})
        out.update({f"scorer.{k}": v for k, v in self.scorer.parameters().items()})
        return out

    def encode_paragraph(self, tokens: Sequence[str], mode: Mode = "infer", rng=None) -> tuple[np.ndarray, GradientTape]:
        emb = embed_sequence(list(tokens)[: self.max_paragraph_len], self.vocab, self.embeddings)
        return bilstm_encode(self.encoder_p, emb, mode, rng)

    def encode_question(self, tokens: Sequence[str], mode: Mode = "infer", rng=None) -> tuple[np.ndarray, GradientTape]:
        emb = embed_sequence(list(tokens)[: self.max_question_len], self.vocab, self.embeddings)
        return bilstm_encode(self.encoder_q, emb, mode, rng)


def score(model: RankerModel, p_repr: np.ndarray, q_repr: np.ndarray) -> float:
    return model.scorer.score(p_repr, q_repr)


def sigmoid(s: float) -> float:
    if s >= 0:
        return 1.0 / (1.0 + math.exp(-s))
    e = math.exp(s)
    return e / (1.0 + e)


def log_sigmoid(s: float) -> float:
    # log(1/(1+e^-s)) = -log1p(e^-s) for s >= 0, s - log1p(e^s) otherwise
    if s >= 0:
        return -math.log1p(math.exp(-s))
    return s - math.log1p(math.exp(s))


def paragraph_probability(s: float) -> float:
    """Sigmoid of the paragraph score, kept strictly inside (0, 1).

    Beyond |s| ~ 37 (positive side) / ~ 745 (negative side) float64 cannot
    represent the exact value, so it is clamped to the nearest interior value.
    """
    if not math.isfinite(s):
        raise ValueError("paragraph score must be finite")
    return min(max(sigmoid(s), _TINY), _ONE_MINUS)


# -- ranking --------------------------------------------------------------------


@dataclass(frozen=True)
class RankedParagraph:
    paragraph: Paragraph
    score: float
    ranker_prob: float
    doc_score: float
    combined: float

    @property
    def key(self) -> tuple[str, int]:
        return self.paragraph.key


def combined_order_key(r: RankedParagraph):
    return (-r.combined, -r.doc_score, r.paragraph.doc_id, r.paragraph.para_index)


def ranker_order_key(r: RankedParagraph):
    return (-r.score, -r.doc_score, r.paragraph.doc_id, r.paragraph.para_index)


def score_candidates(
    model: RankerModel,
    question: Sequence[str],
    candidates: Iterable[tuple[Paragraph, float]],
    cache: dict | None = None,
) -> list[RankedParagraph]:
    """Score every candidate once, encoding the question once.

    ``cache`` maps paragraph key -> representation; paragraph encodings do not
    depend on the question, so one cache can be shared across questions as
    long as the model is not modified.
    """
    candidates = list(candidates)
    if not candidates:
        return []
    q, _ = model.encode_question(question)
    out = []
    for para, doc_score in candidates:
        p = cache.get(para.key) if cache is not None else None
        if p is None:
            p, _ = model.encode_paragraph(para.tokens)
            if cache is not None:
                cache[para.key] = p
        s = model.scorer.score(p, q)
        prob = paragraph_probability(s)
        out.append(RankedParagraph(para, s, prob, doc_score, prob * doc_score))
    return out


def rank_paragraphs(
    model: RankerModel,
    question: Sequence[str],
    candidates: Iterable[tuple[Paragraph, float]],
    m: int,
    cache: dict | None = None,
) -> list[RankedParagraph]:
    """Top-``m`` candidates by ``p(P|Q) * doc_score``.

    Ties go to the higher doc_score, then the lower (doc_id, para_index).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    scored = score_candidates(model, question, candidates, cache)
    scored.sort(key=combined_order_key)
    return scored[:m]


# -- negative sampling ------------------------------------------------------------


class NoiseDistribution:
    """Uniform distribution over a paragraph pool."""

    def __init__(self, pool: Sequence[Paragraph]):
        if not pool:
            raise ValueError("noise pool must be non-empty")
        self.pool = list(pool)
        self._normalized = [normalize_answer(p.text) for p in self.pool]
        self.weights = np.full(len(self.pool), 1.0 / len(self.pool))

    def __len__(self) -> int:
        return len(self.pool)

    def eligible(self, positive: Paragraph | None, answers: Sequence[str]) -> list[int]:
        pos_key = positive.key if positive is not None else None
        return [
            i
            for i, (p, text) in enumerate(zip(self.pool, self._normalized))
            if p.key != pos_key and not contains_answer(text, answers)
        ]


def sample_negatives(
    noise: NoiseDistribution,
    positive: Paragraph | None,
    answers: Sequence[str],
    k_neg: int,
    rng: np.random.Generator,
) -> list[Paragraph]:
    """Draw ``k_neg`` distinct paragraphs uniformly from those that are not the
    positive and contain none of the answers."""
    if k_neg < 1:
        raise ValueError("k_neg must be >= 1")
    eligible = noise.eligible(positive, answers)
    if len(eligible) < k_neg:
        raise ValueError(
            f"need {k_neg} negatives but only {len(eligible)} of {len(noise)} pool paragraphs are eligible"
        )
    picks = rng.choice(len(eligible), size=k_neg, replace=False)
    return [noise.pool[eligible[i]] for i in picks]


# -- loss -------------------------------------------------------------------------


def _accumulate(total: dict, grads: dict, prefix: str):
    for k, g in grads.items():
        key = prefix + k
        if key in total:
            total[key] += g
        else:
            total[key] = np.array(g, dtype=np.float64, copy=True)


def nce_loss(
    model: RankerModel,
    question: Sequence[str],
    positive: Paragraph,
    negatives: Sequence[Paragraph],
    mode: Mode = "infer",
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """``-log p(P+|Q) - mean_k log(1 - p(P_k|Q))`` and its exact gradient.

    The gradient dict has every key of ``model.parameters()``.
    """
    if not negatives:
        raise ValueError("nce_loss needs at least one negative")
    k = len(negatives)
    q, q_tape = model.encode_question(question, mode, rng)
    dq = np.zeros_like(q)
    grads: dict[str, np.ndarray] = {}
    terms = []
    for para, is_pos in [(positive, True)] + [(n, False) for n in negatives]:
        p, p_tape = model.encode_paragraph(para.tokens, mode, rng)
        s = model.scorer.score(p, q)
        if is_pos:
            terms.append(-log_sigmoid(s))
            ds = sigmoid(s) - 1.0
        else:
            terms.append(-log_sigmoid(-s) / k)
            ds = sigmoid(s) / k
        dp, dq_i, g_sc = model.scorer.backward(p, q, ds)
        dq += dq_i
        _accumulate(grads, g_sc, "scorer.")
        g_p, _ = bilstm_backward(model.encoder_p, p_tape, dp)
        _accumulate(grads, g_p, "encoder_p.")
    g_q, _ = bilstm_backward(model.encoder_q, q_tape, dq)
    _accumulate(grads, g_q, "encoder_q.")
    loss = math.fsum(terms)
    return loss, {name: grads.get(name, np.zeros_like(p)) for name, p in model.parameters().items()}


# -- optimisation -----------------------------------------------------------------


class Adamax:
    """Adamax (infinity-norm Adam). Updates parameters in place.

    With ``snap_float32`` the updated parameters are rounded to the float32
    grid so checkpoints stored as float32 round-trip exactly.
    """

    def __init__(self, params: dict[str, np.ndarray], lr=0.002, beta1=0.9, beta2=0.999, eps=1e-8, snap_float32=True):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.snap_float32 = snap_float32
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.u = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]):
        self.t += 1
        step_size = self.lr / (1.0 - self.beta1**self.t)
        for name, p in self.params.items():
            g = grads[name]
            m = self.m[name]
            u = self.u[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            np.maximum(self.beta2 * u, np.abs(g), out=u)
            if step_size == 0.0:
                continue
            p -= step_size * m / (u + self.eps)
            if self.snap_float32:
                p[...] = as_float32_grid(p)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(math.fsum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass(frozen=True)
class TrainingConfig:
    k_neg: int = 4
    learning_rate: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 10
    seed: int = 0
    clip_norm: float = 10.0
    batch_size: int = 1

    def __post_init__(self):
        if self.k_neg < 1:
            raise ValueError("k_neg must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass(frozen=True)
class TrainingExample:
    question: tuple[str, ...]
    positive: Paragraph
    answers: tuple[str, ...]


@dataclass
class TrainingLog:
    epoch_losses: list[float] = field(default_factory=list)


def train(
    model: RankerModel,
    dataset: Sequence[TrainingExample],
    noise: NoiseDistribution,
    config: TrainingConfig = TrainingConfig(),
    callback=None,
) -> TrainingLog:
    """Train ``model`` in place; returns the per-epoch mean loss.

    A single generator seeded from ``config.seed`` drives shuffling, negative
    sampling and dropout, so equal seeds give identical runs.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    opt = Adamax(params, config.learning_rate, config.beta1, config.beta2, config.eps)
    history = TrainingLog()
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            total: dict[str, np.ndarray] = {}
            for idx in batch:
                ex = dataset[int(idx)]
                negs = sample_negatives(noise, ex.positive, ex.answers, config.k_neg, rng)
                loss, grads = nce_loss(model, ex.question, ex.positive, negs, "train", rng)
                if not math.isfinite(loss):
                    raise NumericError(f"non-finite loss {loss} at example {int(idx)} (epoch {epoch})")
                losses.append(loss)
                _accumulate(total, grads, "")
            if len(batch) > 1:
                for g in total.values():
                    g /= len(batch)
            clip_global_norm(total, config.clip_norm)
            opt.step(total)
        mean = math.fsum(losses) / len(losses)
        history.epoch_losses.append(mean)
        log.info("epoch %d mean loss %.6f", epoch + 1, mean)
        if callback is not None:
            callback(epoch, mean)
    return history
