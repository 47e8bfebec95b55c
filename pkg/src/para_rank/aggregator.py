"""Answer aggregation.

Each candidate gets ``reader^alpha * ranker^beta * doc^gamma`` and candidates
whose normalized text coincides are summed (coverage), so an answer found in
several paragraphs can beat a single stronger one.
"""

from __future__ import annotations

import math
import re
import string
import unicodedata
from dataclasses import dataclass, field
from typing import Sequence

_ARTICLES = re.compile(r"\b(a|an|the)\b", re.UNICODE)
_PUNCT = set(string.punctuation)


def normalize_answer(text: str) -> str:
    """SQuAD-style normalization: lowercase, drop punctuation and articles, squash spaces."""
    text = text.lower()
    text = "".join(
        ch for ch in text if ch not in _PUNCT and not unicodedata.category(ch).startswith("P")
    )
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


@dataclass(frozen=True)
class AggregationWeights:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be a finite non-negative number, got {v}")


@dataclass(frozen=True)
class CandidateAnswer:
    answer_text: str
    reader_score: float
    ranker_prob: float
    doc_score: float
    doc_id: str
    para_index: int
    normalized_text: str = field(default="")

    def __post_init__(self):
        object.__setattr__(self, "normalized_text", normalize_answer(self.answer_text))
        for v in (self.reader_score, self.ranker_prob, self.doc_score):
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"candidate scores must be finite and non-negative, got {v}")

    @property
    def provenance(self) -> tuple[str, int]:
        return (self.doc_id, self.para_index)


def _factor(score: float, exponent: float) -> float:
    return 1.0 if exponent == 0 else score**exponent


def candidate_score(c: CandidateAnswer, w: AggregationWeights) -> float:
    """``reader^alpha * ranker^beta * doc^gamma`` with 0^0 = 1."""
    return (
        _factor(c.reader_score, w.alpha)
        * _factor(c.ranker_prob, w.beta)
        * _factor(c.doc_score, w.gamma)
    )


def candidate_log_score(c: CandidateAnswer, w: AggregationWeights) -> float:
    """Log of :func:`candidate_score`; -inf when a factor with positive exponent is 0."""
    total = 0.0
    for s, e in ((c.reader_score, w.alpha), (c.ranker_prob, w.beta), (c.doc_score, w.gamma)):
        if e == 0:
            continue
        if s == 0:
            return -math.inf
        total += e * math.log(s)
    return total


def _logsumexp(values: Sequence[float]) -> float:
    m = max(values)
    if m == -math.inf:
        return -math.inf
    return m + math.log(math.fsum(math.exp(v - m) for v in values))


@dataclass(frozen=True)
class MergedAnswer:
    normalized_text: str
    total_score: float
    best: CandidateAnswer
    log_total: float
    support: int


def coverage_merge(
    candidates: Sequence[CandidateAnswer], w: AggregationWeights = AggregationWeights()
) -> list[MergedAnswer]:
    """Group by normalized text and sum the per-candidate scores.

    Groups are ordered by total score, descending. The log-space total is the
    secondary key, which only matters when products underflow to zero; the
    earliest (doc_id, para_index) in the group breaks remaining ties.
    """
    groups: dict[str, list[tuple[CandidateAnswer, float, float]]] = {}
    for c in candidates:
        groups.setdefault(c.normalized_text, []).append(
            (c, candidate_score(c, w), candidate_log_score(c, w))
        )
    merged = []
    for text, members in groups.items():
        best = min(members, key=lambda m: (-m[1], -m[2], m[0].provenance))[0]
        merged.append(
            MergedAnswer(
                normalized_text=text,
                total_score=math.fsum(m[1] for m in members),
                best=best,
                log_total=_logsumexp([m[2] for m in members]),
                support=len(members),
            )
        )
    earliest = {g.normalized_text: min(m[0].provenance for m in groups[g.normalized_text]) for g in merged}
    merged.sort(key=lambda g: (-g.total_score, -g.log_total, earliest[g.normalized_text]))
    return merged


def select_answer(
    candidates: Sequence[CandidateAnswer], w: AggregationWeights = AggregationWeights()
) -> tuple[str, float] | None:
    merged = coverage_merge(candidates, w)
    if not merged:
        return None
    head = merged[0]
    return head.best.answer_text, head.total_score


def contains_answer(normalized_text: str, answers: Sequence[str]) -> bool:
    """Token-boundary containment of any normalized answer in already-normalized text.

    Answers that normalize to the empty string never match.
    """
    padded = f" {normalized_text} "
    for a in answers:
        na = normalize_answer(a)
        if na and f" {na} " in padded:
            return True
    return False
