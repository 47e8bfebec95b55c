import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from para_rank.aggregator import AggregationWeights
from para_rank.errors import FormatError
from para_rank.pipeline import (
    NO_DOCUMENTS,
    PipelineConfig,
    QAItem,
    QAPipeline,
    as_qa_items,
    eval_exact_match,
    eval_recall_at_m,
    evaluate,
    grid_search,
    load_config,
    load_qa,
    with_overrides,
)
from para_rank.ranker import DotScorer, RankerModel
from para_rank.reader import LexicalReader
from para_rank.retriever import build_index, ingest_corpus
from para_rank.synthetic import make_planted_corpus
from para_rank.text_core import Vocabulary, load_embeddings, tokenize

FIXTURE = [
    {"id": "a", "title": "", "paragraphs": ["the capital of zembla ."]},
    {"id": "b", "title": "", "paragraphs": ["yarrow is the capital of zembla near old farms ."]},
    {"id": "c", "title": "", "paragraphs": ["river mountain lake .", "the lake is cold ."]},
    {"id": "d", "title": "", "paragraphs": ["lake desert ."]},
]


def build(records, seed=0, emb_text=None, config=None):
    corpus = ingest_corpus(records)
    vocab = Vocabulary.build([p.tokens for p in corpus.paragraphs()] + [["what", "is", "where"]])
    if emb_text is None:
        rng = np.random.default_rng(seed)
        emb_text = "".join(t + " " + " ".join(f"{x:.4f}" for x in rng.normal(size=4)) + "\n" for t in vocab.tokens[2:])
    emb = load_embeddings(io.StringIO(emb_text), vocab, default_dim=4)
    model = RankerModel.create(vocab, emb, 3, 1, 0.0, seed=seed)
    return QAPipeline(config or PipelineConfig(), corpus, build_index(corpus), model)


def neutral(pipe):
    """Zero every ranker parameter so each paragraph gets probability 1/2."""
    for v in pipe.model.parameters().values():
        v[...] = 0.0
    return pipe


class TestAnswerQuestion:
    def test_planted_capital(self):
        records = [
            {"id": "x", "title": "", "paragraphs": ["the capital of zembla is yarrow ."]},
            {"id": "y", "title": "", "paragraphs": ["rivers run to the sea .", "farms grow wheat ."]},
        ]
        result = build(records).answer("What is the capital of Zembla?")
        assert result.answer == "yarrow"
        assert result.reason is None and result.score > 0

    def test_oov_question(self):
        result = build(FIXTURE).answer("qwerty zxcv")
        assert result.answer is None and result.reason == NO_DOCUMENTS and result.trace == []

    def test_more_documents_recover_the_answer(self):
        # the top document restates the question without the answer; the second holds it
        q = "what is the capital of zembla"
        narrow = neutral(build(FIXTURE, config=PipelineConfig(n_docs=1))).answer(q)
        wide = neutral(build(FIXTURE, config=PipelineConfig(n_docs=20))).answer(q)
        assert narrow.answer != "yarrow"
        assert wide.answer == "yarrow"

    def test_trace(self):
        result = build(FIXTURE).answer("where is the lake river")
        assert 1 <= len(result.trace) <= 5
        assert [t.rank for t in result.trace] == list(range(1, len(result.trace) + 1))
        combined = [t.combined for t in result.trace]
        assert combined == sorted(combined, reverse=True)

    def test_deterministic(self):
        a = build(FIXTURE).answer("where is the lake river")
        b = build(FIXTURE).answer("where is the lake river")
        assert (a.answer, a.score, a.trace) == (b.answer, b.score, b.trace)

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_reads_at_most_m_paragraphs(self, m):
        calls = []

        class Counting(LexicalReader):
            def read(self, paragraph, question, question_id=None):
                calls.append(paragraph.key)
                return super().read(paragraph, question, question_id)

        pipe = build(FIXTURE, config=PipelineConfig(m_paragraphs=m))
        pipe.reader = Counting(pipe.index.idf)
        pipe.answer("where is the lake river capital")
        assert 1 <= len(calls) <= m


class OracleModel(RankerModel):
    """Scores a paragraph 1 if it contains the planted word, else 0."""

    def __init__(self, base, word):
        super().__init__(base.vocab, base.embeddings, base.encoder_p, base.encoder_q, DotScorer(base.repr_dim))
        self.word = word

    def _unit(self, on):
        v = np.zeros(self.repr_dim)
        v[0] = float(on)
        return v

    def encode_paragraph(self, tokens, mode="infer", rng=None):
        return self._unit(self.word in tokens), None

    def encode_question(self, tokens, mode="infer", rng=None):
        return self._unit(True), None


def planted_pipeline(seed=0, **cfg):
    bench = make_planted_corpus()
    pipe = build(bench.corpus_records, seed=seed, emb_text=bench.embeddings_text, config=PipelineConfig(**cfg))
    return pipe, as_qa_items(bench.test_qa)


@pytest.fixture(scope="module")
def planted():
    return planted_pipeline()


class TestRecall:
    def test_oracle_ranker_reaches_retrieval_recall(self):
        pipe, qa = planted_pipeline()
        base = pipe.model
        hits = 0
        for item in qa[:6]:
            pipe.model = OracleModel(base, item.answers[0])
            pipe._cache = {}
            report = eval_recall_at_m(pipe, [item], m=1, n_docs=5)
            in_docs = any(item.answers[0] in p.tokens for p, _ in pipe.candidates(tokenize(item.question), 5))
            assert report.ranker_only == float(in_docs)
            hits += in_docs
        assert hits > 0

    def test_no_truncation_is_ranker_independent(self):
        reports = []
        for seed in (0, 1):
            pipe, qa = planted_pipeline(seed)
            reports.append(eval_recall_at_m(pipe, qa, m=10_000, n_docs=5))
        assert reports[0].combined == reports[1].combined == reports[0].ranker_only == reports[1].ranker_only

    def test_monotone_in_m_and_n(self, planted):
        pipe, qa = planted
        by_m = [eval_recall_at_m(pipe, qa, m=m, n_docs=20) for m in (1, 5, 20, 10_000)]
        for key in ("combined", "ranker_only"):
            vals = [getattr(r, key) for r in by_m]
            assert vals == sorted(vals)
        by_n = [eval_recall_at_m(pipe, qa, m=10_000, n_docs=n).combined for n in (1, 5, 20)]
        assert by_n == sorted(by_n)

    def test_record_counts(self, planted):
        pipe, qa = planted
        r = eval_recall_at_m(pipe, qa, m=3)
        assert len(r.records) == len(qa)
        assert r.combined == sum(x.rank_combined is not None for x in r.records) / len(qa)
        assert all(x.rank_combined is None or 1 <= x.rank_combined <= 3 for x in r.records)

    def test_empty(self, planted):
        with pytest.raises(ValueError):
            eval_recall_at_m(planted[0], [])


class TestExactMatch:
    def test_normalized_hit(self):
        assert eval_exact_match({"q": "The Linebacker"}, {"q": ["linebacker"]}) == 1.0

    def test_absent_prediction(self):
        assert eval_exact_match({"q": None}, {"q": ["x"]}) == 0.0

    def test_ratio(self):
        preds = {"a": "x", "b": "y", "c": "z", "d": "no"}
        gold = {"a": ["x"], "b": ["y"], "c": ["Z"], "d": ["yes"]}
        assert eval_exact_match(preds, gold) == 0.75

    def test_id_mismatch_lists_ids(self):
        with pytest.raises(FormatError, match="q2"):
            eval_exact_match({"q1": "x"}, {"q1": ["x"], "q2": ["y"]})

    def test_evaluate_report(self, planted):
        pipe, qa = planted
        report = evaluate(pipe, qa[:5])
        data = json.loads(report.to_json())
        assert set(data) == {"exact_match", "recall_at_m", "recall_at_m_ranker", "m", "n_docs", "records"}
        assert len(data["records"]) == 5
        assert data["exact_match"] == sum(
            r["predicted"] is not None and r["predicted"] == r["answers"][0] for r in data["records"]
        ) / 5


class TestGridSearch:
    def test_grid(self, planted):
        pipe, qa = planted
        results = grid_search(pipe, qa[:4])
        assert len(results) == 64
        ems = [r.exact_match for r in results]
        assert ems == sorted(ems, reverse=True)
        assert len({(r.weights.alpha, r.weights.beta, r.weights.gamma) for r in results}) == 64


class TestConfig:
    def test_toml_and_json(self, tmp_path):
        (tmp_path / "c.toml").write_text('n_docs = 5\nm_paragraphs = 7\n[weights]\nalpha = 2.0\n')
        (tmp_path / "c.json").write_text(json.dumps({"n_docs": 5, "m_paragraphs": 7, "alpha": 2}))
        a, b = load_config(tmp_path / "c.toml"), load_config(tmp_path / "c.json")
        assert a == b
        assert a.weights == AggregationWeights(2.0, 1.0, 1.0)

    def test_round_trip(self):
        cfg = PipelineConfig(n_docs=3, weights=AggregationWeights(0.5, 0.0, 2.0), corpus="c.jsonl")
        assert PipelineConfig.from_mapping(cfg.to_mapping()) == cfg

    @pytest.mark.parametrize("data", [{"n_dox": 3}, {"n_docs": 0}, {"alpha": -1}])
    def test_invalid(self, data):
        with pytest.raises(FormatError):
            PipelineConfig.from_mapping(data)

    def test_unparseable(self, tmp_path):
        (tmp_path / "c.toml").write_text("n_docs = = 3")
        with pytest.raises(FormatError):
            load_config(tmp_path / "c.toml")

    def test_overrides(self):
        cfg = with_overrides(PipelineConfig(), n_docs=None, m_paragraphs=9, beta=0.0)
        assert (cfg.n_docs, cfg.m_paragraphs, cfg.weights.beta, cfg.weights.alpha) == (20, 9, 0.0, 1.0)

    @settings(max_examples=30)
    @given(st.integers(1, 500), st.integers(1, 500), st.sampled_from([0.0, 0.5, 1.0, 2.0]))
    def test_mapping_round_trip_property(self, n, m, a):
        cfg = PipelineConfig(n_docs=n, m_paragraphs=m, weights=AggregationWeights(alpha=a))
        assert PipelineConfig.from_mapping(cfg.to_mapping()) == cfg


class TestQaFile:
    def test_load(self):
        items = load_qa(['{"id": 1, "question": "q?", "answers": ["a", "b"]}', ""])
        assert items == [QAItem("1", "q?", ("a", "b"))]

    def test_duplicate_and_missing(self):
        with pytest.raises(FormatError, match="duplicate"):
            load_qa(['{"id": 1, "question": "q", "answers": []}'] * 2)
        with pytest.raises(FormatError, match="line 1"):
            load_qa(['{"id": 1, "answers": []}'])
