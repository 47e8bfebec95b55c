"""End-to-end question answering: retrieve N documents, rank their paragraphs,
read the top M and aggregate the answers; plus the evaluation harness."""

from __future__ import annotations

import itertools
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .aggregator import (
    AggregationWeights,
    CandidateAnswer,
    contains_answer,
    normalize_answer,
    select_answer,
)
from .errors import FormatError
from .ranker import (
    RankedParagraph,
    RankerModel,
    combined_order_key,
    rank_paragraphs,
    ranker_order_key,
    score_candidates,
)
from .reader import LexicalReader, Reader, ReaderAnswer
from .retriever import Corpus, TfIdfIndex, retrieve
from .text_core import tokenize

NO_DOCUMENTS = "no documents matched"
NO_SPAN = "no answer span found"
TRACE_SIZE = 5
GRID_VALUES = (0.0, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class PipelineConfig:
    n_docs: int = 20
    m_paragraphs: int = 200
    weights: AggregationWeights = AggregationWeights()
    max_span: int = 5
    corpus: str | None = None
    index: str | None = None
    model: str | None = None
    embeddings: str | None = None
    reader_answers: str | None = None

    def __post_init__(self):
        if self.n_docs < 1 or self.m_paragraphs < 1:
            raise ValueError("n_docs and m_paragraphs must be >= 1")
        if self.max_span < 1:
            raise ValueError("max_span must be >= 1")

    @classmethod
    def from_mapping(cls, data: dict) -> "PipelineConfig":
        """Build from a flat mapping; ``alpha``/``beta``/``gamma`` (or a
        ``weights`` table holding them) set the aggregation weights."""
        data = dict(data)
        w = dict(data.pop("weights", {}) or {})
        for k in ("alpha", "beta", "gamma"):
            if k in data:
                w[k] = data.pop(k)
        known = {f.name for f in fields(cls)} - {"weights"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise FormatError(f"unknown config keys: {', '.join(unknown)}")
        try:
            weights = AggregationWeights(**{k: float(v) for k, v in w.items()})
            return cls(weights=weights, **data)
        except (TypeError, ValueError) as exc:
            raise FormatError(f"invalid config: {exc}") from None

    def to_mapping(self) -> dict:
        out = asdict(self)
        out.update(out.pop("weights"))
        return out


def load_config(path: str | Path) -> PipelineConfig:
    """Read a TOML or JSON (by ``.json`` extension) configuration file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text) if path.suffix.lower() == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise FormatError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise FormatError(f"config {path} must be a mapping")
    return PipelineConfig.from_mapping(data)


@dataclass(frozen=True)
class TraceEntry:
    rank: int
    doc_id: str
    para_index: int
    score: float
    ranker_prob: float
    doc_score: float
    combined: float
    answer: str | None
    reader_score: float | None


@dataclass(frozen=True)
class QAResult:
    answer: str | None
    score: float | None
    trace: list[TraceEntry]
    reason: str | None = None
    candidates: list[CandidateAnswer] = field(default_factory=list, repr=False)
    ranked: list[RankedParagraph] = field(default_factory=list, repr=False)


class QAPipeline:
    """Bundles the immutable artifacts a question needs.

    Paragraph encodings are cached across questions; the cache is only valid
    while the model's parameters stay unchanged.
    """

    def __init__(
        self,
        config: PipelineConfig,
        corpus: Corpus,
        index: TfIdfIndex,
        model: RankerModel,
        reader: Reader | None = None,
    ):
        self.config = config
        self.corpus = corpus
        self.index = index
        self.model = model
        self.reader = reader if reader is not None else LexicalReader(index.idf, config.max_span)
        self._cache: dict = {}

    def candidates(self, question_tokens: Sequence[str], n_docs: int | None = None) -> list:
        hits = retrieve(self.index, question_tokens, n_docs or self.config.n_docs)
        return [(p, s) for doc_id, s in hits for p in self.corpus.document(doc_id).paragraphs]

    def answer(self, question: str, question_id: str | None = None) -> QAResult:
        return answer_question(self, question, question_id)


def _trace(ranked: Sequence[RankedParagraph], reads: Sequence[ReaderAnswer | None]) -> list[TraceEntry]:
    out = []
    for i, (r, a) in enumerate(zip(ranked[:TRACE_SIZE], reads)):
        out.append(
            TraceEntry(
                i + 1,
                r.paragraph.doc_id,
                r.paragraph.para_index,
                r.score,
                r.ranker_prob,
                r.doc_score,
                r.combined,
                a.text if a else None,
                a.score if a else None,
            )
        )
    return out


def answer_question(pipeline: QAPipeline, question: str, question_id: str | None = None) -> QAResult:
    cfg = pipeline.config
    q_tokens = tokenize(question)
    cands = pipeline.candidates(q_tokens)
    if not cands:
        return QAResult(None, None, [], NO_DOCUMENTS)
    ranked = rank_paragraphs(pipeline.model, q_tokens, cands, cfg.m_paragraphs, pipeline._cache)
    reads = [pipeline.reader.read(r.paragraph, q_tokens, question_id) for r in ranked]
    answers = [
        CandidateAnswer(a.text, a.score, r.ranker_prob, r.doc_score, r.paragraph.doc_id, r.paragraph.para_index)
        for r, a in zip(ranked, reads)
        if a is not None
    ]
    trace = _trace(ranked, reads)
    best = select_answer(answers, cfg.weights)
    if best is None:
        return QAResult(None, None, trace, NO_SPAN, answers, ranked)
    return QAResult(best[0], best[1], trace, None, answers, ranked)


# -- evaluation -------------------------------------------------------------------


@dataclass(frozen=True)
class QAItem:
    id: str
    question: str
    answers: tuple[str, ...]


def load_qa(source: str | Path | Iterable[str]) -> list[QAItem]:
    """Read ``{"id", "question", "answers"}`` JSON lines; extra keys are ignored."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return load_qa(list(fh))
    items, seen = [], set()
    for lineno, line in enumerate(source, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            item = QAItem(str(rec["id"]), str(rec["question"]), tuple(str(a) for a in rec["answers"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"qa line {lineno}: {exc}") from None
        if item.id in seen:
            raise FormatError(f"qa line {lineno}: duplicate id {item.id}")
        seen.add(item.id)
        items.append(item)
    return items


def as_qa_items(records: Iterable[dict]) -> list[QAItem]:
    return [QAItem(str(r["id"]), r["question"], tuple(r["answers"])) for r in records]


def first_hit_rank(ranked: Sequence[RankedParagraph], answers: Sequence[str]) -> int | None:
    """1-based rank of the first paragraph containing a gold answer."""
    for i, r in enumerate(ranked):
        if contains_answer(normalize_answer(r.paragraph.text), answers):
            return i + 1
    return None


@dataclass(frozen=True)
class RecallRecord:
    id: str
    rank_combined: int | None
    rank_ranker: int | None


@dataclass(frozen=True)
class RecallReport:
    m: int
    n_docs: int
    combined: float
    ranker_only: float
    records: list[RecallRecord]


def eval_recall_at_m(
    pipeline: QAPipeline,
    qa_set: Sequence[QAItem],
    m: int | None = None,
    n_docs: int | None = None,
) -> RecallReport:
    """Share of questions whose top-``m`` paragraphs contain a gold answer.

    Reported under the combined (ranker x document) ordering and under the
    ranker score alone, over the same retrieved candidate set.
    """
    if not qa_set:
        raise ValueError("qa_set is empty")
    m = m or pipeline.config.m_paragraphs
    n_docs = n_docs or pipeline.config.n_docs
    if m < 1 or n_docs < 1:
        raise ValueError("m and n_docs must be >= 1")
    records = []
    for item in qa_set:
        q_tokens = tokenize(item.question)
        scored = score_candidates(pipeline.model, q_tokens, pipeline.candidates(q_tokens, n_docs), pipeline._cache)
        by_combined = rank_paragraphs_from(scored, m)
        by_ranker = sorted(scored, key=ranker_order_key)[:m]
        records.append(
            RecallRecord(item.id, first_hit_rank(by_combined, item.answers), first_hit_rank(by_ranker, item.answers))
        )
    n = len(records)
    return RecallReport(
        m,
        n_docs,
        sum(r.rank_combined is not None for r in records) / n,
        sum(r.rank_ranker is not None for r in records) / n,
        records,
    )


def rank_paragraphs_from(scored: Sequence[RankedParagraph], m: int) -> list[RankedParagraph]:
    return sorted(scored, key=combined_order_key)[:m]


def eval_exact_match(predictions: dict[str, str | None], gold: dict[str, Sequence[str]]) -> float:
    """Fraction of questions whose normalized prediction equals a normalized gold answer."""
    missing = sorted(set(gold) - set(predictions))
    extra = sorted(set(predictions) - set(gold))
    if missing or extra:
        parts = []
        if missing:
            parts.append("missing predictions for ids: " + ", ".join(missing))
        if extra:
            parts.append("predictions for unknown ids: " + ", ".join(extra))
        raise FormatError("; ".join(parts))
    if not gold:
        raise ValueError("no questions to evaluate")
    hits = 0
    for qid, answers in gold.items():
        pred = predictions[qid]
        if pred is not None and normalize_answer(pred) in {normalize_answer(a) for a in answers}:
            hits += 1
    return hits / len(gold)


@dataclass(frozen=True)
class EvalRecord:
    id: str
    answers: list[str]
    predicted: str | None
    rank_combined: int | None
    rank_ranker: int | None


@dataclass(frozen=True)
class EvalReport:
    exact_match: float
    recall_at_m: float
    recall_at_m_ranker: float
    m: int
    n_docs: int
    records: list[EvalRecord]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def evaluate(pipeline: QAPipeline, qa_set: Sequence[QAItem]) -> EvalReport:
    if not qa_set:
        raise ValueError("qa_set is empty")
    recall = eval_recall_at_m(pipeline, qa_set)
    preds = {item.id: pipeline.answer(item.question, item.id).answer for item in qa_set}
    em = eval_exact_match(preds, {item.id: item.answers for item in qa_set})
    records = [
        EvalRecord(item.id, list(item.answers), preds[item.id], r.rank_combined, r.rank_ranker)
        for item, r in zip(qa_set, recall.records)
    ]
    return EvalReport(em, recall.combined, recall.ranker_only, recall.m, recall.n_docs, records)


@dataclass(frozen=True)
class GridResult:
    weights: AggregationWeights
    exact_match: float


def grid_search(
    pipeline: QAPipeline, qa_set: Sequence[QAItem], values: Sequence[float] = GRID_VALUES
) -> list[GridResult]:
    """Exact match for every (alpha, beta, gamma) in ``values``^3.

    Retrieval, ranking and reading do not depend on the weights, so they run
    once per question. Results are sorted by exact match, best first; ties keep
    grid order.
    """
    if not qa_set:
        raise ValueError("qa_set is empty")
    per_question = [(item, pipeline.answer(item.question, item.id).candidates) for item in qa_set]
    gold = {item.id: item.answers for item in qa_set}
    results = []
    for a, b, g in itertools.product(values, repeat=3):
        w = AggregationWeights(a, b, g)
        preds = {}
        for item, cands in per_question:
            sel = select_answer(cands, w)
            preds[item.id] = sel[0] if sel else None
        results.append(GridResult(w, eval_exact_match(preds, gold)))
    results.sort(key=lambda r: -r.exact_match)
    return results


def with_overrides(config: PipelineConfig, **overrides) -> PipelineConfig:
    """``replace`` that ignores None values and routes alpha/beta/gamma into the weights."""
    w = {k: overrides.pop(k) for k in ("alpha", "beta", "gamma") if overrides.get(k) is not None}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if w:
        overrides["weights"] = replace(config.weights, **w)
    return replace(config, **overrides)
