"""Extractive readers: a deterministic lexical baseline and an external-score adapter.

A reader maps (paragraph, question) to its best answer span with a
non-negative, unnormalized score that is comparable across paragraphs of the
same question.
"""

from __future__ import annotations

import abc
import bisect
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import FormatError
from .retriever import Paragraph
from .text_core import _is_punct, detokenize, tokenize

CONTEXT_WINDOW = 10
LENGTH_PENALTY = 0.01
# Weight of a question token repeated inside the span: enough to let a paragraph
# made only of question words answer, far below what an adjacent match earns.
ECHO_WEIGHT = 0.1
SENTENCE_END = frozenset(".!?")

STOPWORDS = frozenset(
    """
    a an the and or but if of at by for with about against between into through
    during before after above below to from up down in out on off over under
    again further then once here there when where why how all any both each few
    more most other some such no nor not only own same so than too very can will
    just should now is are was were be been being have has had having do does
    did doing i me my we our you your he him his she her it its they them their
    what which who whom this that these those am as until while s t
    """.split()
)


def is_content_token(token: str) -> bool:
    return token not in STOPWORDS and not all(_is_punct(ch) for ch in token)


@dataclass(frozen=True)
class ReaderAnswer:
    text: str
    start: int
    end: int
    score: float

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span [{self.start}, {self.end})")
        if not math.isfinite(self.score) or self.score < 0:
            raise ValueError(f"reader score must be finite and non-negative, got {self.score}")


class Reader(abc.ABC):
    """Anything that extracts at most one answer per paragraph."""

    @abc.abstractmethod
    def read(
        self, paragraph: Paragraph, question: Sequence[str], question_id: str | None = None
    ) -> ReaderAnswer | None:
        ...


def lexical_read(
    paragraph: Sequence[str],
    question: Sequence[str],
    max_span: int = 5,
    idf: Callable[[str], float] | None = None,
) -> ReaderAnswer | None:
    """Best span by idf-weighted proximity to the question's content words.

    For every span of at most ``max_span`` tokens, each distinct question
    content token occurring within ``CONTEXT_WINDOW`` tokens of the span adds
    ``idf / (1 + distance)`` for its nearest occurrence, or ``ECHO_WEIGHT * idf``
    if it occurs inside the span. Distance is one plus the number of content
    tokens strictly between the span and the occurrence, so stopwords and
    punctuation do not push words apart; context never crosses a sentence
    terminator. The score is that sum minus
    ``LENGTH_PENALTY`` per span token. Spans made only of stopwords or
    punctuation are skipped. Ties go to the earliest start, then the shorter
    span; a best score of zero or less yields None.
    """
    if max_span < 1:
        raise ValueError("max_span must be >= 1")
    idf = idf or (lambda _t: 1.0)
    para = list(paragraph)
    n = len(para)
    q_terms = list(dict.fromkeys(t for t in question if is_content_token(t)))
    positions = {t: [] for t in q_terms}
    for i, tok in enumerate(para):
        if tok in positions:
            positions[tok].append(i)
    weights = {t: idf(t) for t in q_terms if positions[t]}
    weights = {t: w for t, w in weights.items() if w > 0}
    if not weights:
        return None
    content = [is_content_token(t) for t in para]
    before = [0]  # before[i]: content tokens in para[:i]
    for c in content:
        before.append(before[-1] + c)
    sentence = []  # a terminator belongs to the sentence it ends
    k = 0
    for tok in para:
        sentence.append(k)
        k += tok in SENTENCE_END

    # Only spans whose window reaches some occurrence can score above zero.
    starts = set()
    reach = CONTEXT_WINDOW + max_span - 1
    for t in weights:
        for o in positions[t]:
            starts.update(range(max(0, o - reach), min(n, o + CONTEXT_WINDOW + 1)))

    best: tuple[float, int, int] | None = None
    for s in sorted(starts):
        for e in range(s + 1, min(n, s + max_span) + 1):
            if not any(content[s:e]):
                continue
            parts = []
            for t, w in weights.items():
                occ = positions[t]
                k = bisect.bisect_left(occ, s)
                if k < len(occ) and occ[k] < e:
                    parts.append(ECHO_WEIGHT * w)
                    continue
                d = math.inf
                if k < len(occ) and occ[k] - (e - 1) <= CONTEXT_WINDOW and sentence[occ[k]] == sentence[e - 1]:
                    d = 1 + before[occ[k]] - before[e]
                if k > 0 and s - occ[k - 1] <= CONTEXT_WINDOW and sentence[occ[k - 1]] == sentence[s]:
                    d = min(d, 1 + before[s] - before[occ[k - 1] + 1])
                if d < math.inf:
                    parts.append(w / (1.0 + d))
            score = math.fsum(parts) - LENGTH_PENALTY * (e - s)
            if best is None or score > best[0]:
                best = (score, s, e)
    if best is None or best[0] <= 0:
        return None
    score, s, e = best
    return ReaderAnswer(detokenize(para[s:e]), s, e, score)


class LexicalReader(Reader):
    def __init__(self, idf: Callable[[str], float] | None = None, max_span: int = 5):
        if max_span < 1:
            raise ValueError("max_span must be >= 1")
        self.idf = idf
        self.max_span = max_span

    def read(self, paragraph, question, question_id=None):
        return lexical_read(paragraph.tokens, question, self.max_span, self.idf)


def _find_span(tokens: Sequence[str], answer: Sequence[str]) -> int | None:
    k = len(answer)
    for i in range(len(tokens) - k + 1):
        if list(tokens[i : i + k]) == list(answer):
            return i
    return None


class ExternalReader(Reader):
    """Serves answers precomputed by another system, keyed by question and paragraph.

    Each JSON line is ``{"question_id", "doc_id", "para_index", "answer",
    "score"}``. Answers are located in the paragraph's tokens so that the
    returned offsets are real; a paragraph without an entry yields None.
    """

    def __init__(self, entries: dict[tuple[str, str, int], tuple[str, float]]):
        self.entries = entries

    @classmethod
    def load(cls, source: str | Path | Iterable[str]) -> "ExternalReader":
        if isinstance(source, (str, Path)):
            with open(source, encoding="utf-8") as fh:
                return cls.load(list(fh))
        entries = {}
        for lineno, line in enumerate(source, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                key = (str(rec["question_id"]), str(rec["doc_id"]), int(rec["para_index"]))
                answer, score = str(rec["answer"]), float(rec["score"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"reader answers line {lineno}: {exc}") from None
            if not math.isfinite(score) or score < 0:
                raise FormatError(f"reader answers line {lineno}: score must be finite and non-negative")
            if key in entries:
                raise FormatError(f"reader answers line {lineno}: duplicate entry for {key}")
            entries[key] = (answer, score)
        return cls(entries)

    def read(self, paragraph, question, question_id=None):
        if question_id is None:
            raise ValueError("ExternalReader needs a question_id")
        hit = self.entries.get((question_id, paragraph.doc_id, paragraph.para_index))
        if hit is None:
            return None
        answer, score = hit
        toks = tokenize(answer)
        start = _find_span(paragraph.tokens, toks) if toks else None
        if start is None:
            raise FormatError(
                f"answer {answer!r} not found in paragraph {paragraph.doc_id}#{paragraph.para_index}"
            )
        return ReaderAnswer(detokenize(toks), start, start + len(toks), score)


def write_reader_answers(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            rec = {
                "question_id": r["question_id"],
                "doc_id": r["doc_id"],
                "para_index": int(r["para_index"]),
                "answer": r["answer"],
                "score": float(r["score"]),
            }
            fh.write(json.dumps(rec) + "\n")
