"""Seeded synthetic corpora for desk-scale experiments.

``make_marker_benchmark`` builds a ranking task in which every paragraph
carries a few marker tokens and each question names the markers of its
answer-bearing paragraph. Markers recur across many paragraphs, so a ranker
has to learn what they mean rather than memorize paragraphs; an untrained
ranker sits near chance.

``make_planted_corpus`` builds a small encyclopedia-like corpus with one
planted fact per question, for end-to-end answering.
"""

from __future__ import annotations

import io
import itertools
from dataclasses import dataclass

import numpy as np

_SYLLABLES = [
    "ka", "lo", "mi", "ren", "tu", "sa", "vor", "de", "li", "ban", "to", "gra",
    "po", "nel", "fi", "um", "zar", "che", "ro", "wen", "ga", "sil", "mo", "ter",
]


def _word(rng, n_syll=(2, 4)) -> str:
    k = int(rng.integers(n_syll[0], n_syll[1] + 1))
    return "".join(rng.choice(_SYLLABLES, size=k))


def _unique_words(rng, n, taken=None, n_syll=(2, 4)) -> list[str]:
    taken = set() if taken is None else taken
    out = []
    while len(out) < n:
        w = _word(rng, n_syll)
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def random_embeddings_text(words, dim: int, seed: int) -> str:
    """word2vec-text embeddings with i.i.d. N(0, 1) components."""
    rng = np.random.default_rng(seed)
    lines = []
    for w in sorted(set(words)):
        vec = rng.normal(size=dim)
        lines.append(w + " " + " ".join(f"{x:.6f}" for x in vec))
    return "\n".join(lines) + "\n"


@dataclass
class SyntheticBenchmark:
    corpus_records: list[dict]
    train_qa: list[dict]  # {"question", "answers", "positive": {"doc_id", "para_index"}}
    test_qa: list[dict]  # {"id", "question", "answers"} plus "positive"
    embeddings_text: str

    def embeddings_stream(self):
        return io.StringIO(self.embeddings_text)


_MARKER_TEMPLATES = [
    "{m} : the record gives {a} .",
    "{m} . its listed value is {a} .",
    "under {m} the entry reads {a} .",
]


def _arrange(words, rng, shuffle):
    return [words[j] for j in rng.permutation(len(words))] if shuffle else list(words)


def make_marker_benchmark(
    seed: int = 13,
    slot_sizes: tuple[int, ...] = (5, 5, 8),
    paras_per_doc: int = 5,
    n_train: int = 100,
    n_test: int = 50,
    emb_dim: int = 16,
    n_templates: int = 1,
    shuffle_markers: bool = False,
) -> SyntheticBenchmark:
    """One paragraph per marker combination, ``prod(slot_sizes)`` in all.

    Every paragraph carries one marker word per slot (in slot order unless
    ``shuffle_markers``) and an answer phrase with one answer word per slot.
    A question names the markers of its positive paragraph, which is the only
    paragraph matching all of them. Train and test questions use disjoint
    combinations, so a ranker has to learn what each marker means rather than
    memorize paragraphs.
    """
    rng = np.random.default_rng(seed)
    combos = list(itertools.product(*(range(k) for k in slot_sizes)))
    n_paras = len(combos)
    if n_paras % paras_per_doc:
        raise ValueError("paragraph count must be a multiple of paras_per_doc")
    if n_train + n_test > n_paras:
        raise ValueError("not enough paragraphs for the requested split")
    if not 1 <= n_templates <= len(_MARKER_TEMPLATES):
        raise ValueError(f"n_templates must be in [1, {len(_MARKER_TEMPLATES)}]")

    markers = [[f"mark{s}x{j}" for j in range(k)] for s, k in enumerate(slot_sizes)]
    values = [[f"val{s}x{j}" for j in range(k)] for s, k in enumerate(slot_sizes)]
    order = rng.permutation(n_paras)  # paragraph slot -> combination

    paragraphs, answers, names = [], [], []
    for i in range(n_paras):
        c = combos[order[i]]
        mk = [markers[s][j] for s, j in enumerate(c)]
        answers.append(" ".join(values[s][j] for s, j in enumerate(c)))
        names.append(mk)
        template = _MARKER_TEMPLATES[int(rng.integers(n_templates))]
        paragraphs.append(template.format(m=" ".join(_arrange(mk, rng, shuffle_markers)), a=answers[i]))

    n_docs = n_paras // paras_per_doc
    records = [
        {"id": f"doc{d:03d}", "title": f"document {d}", "paragraphs": paragraphs[d * paras_per_doc : (d + 1) * paras_per_doc]}
        for d in range(n_docs)
    ]

    # Train positives must cover every marker at least once.
    while True:
        perm = [int(i) for i in rng.permutation(n_paras)]
        train_idx, test_idx = perm[:n_train], perm[n_train : n_train + n_test]
        seen = {m for i in train_idx for m in names[i]}
        if len(seen) == sum(slot_sizes):
            break

    def qa(i, qid):
        mk = names[i]
        return {
            "id": qid,
            "question": "which " + " ".join(_arrange(mk, rng, shuffle_markers)) + " ?",
            "answers": [answers[i]],
            "positive": {"doc_id": f"doc{i // paras_per_doc:03d}", "para_index": i % paras_per_doc},
        }

    train_qa = [qa(i, f"train{j}") for j, i in enumerate(train_idx)]
    test_qa = [qa(i, f"test{j}") for j, i in enumerate(test_idx)]
    vocab = {w for row in markers + values for w in row} | {"which", "?"}
    for t in _MARKER_TEMPLATES[:n_templates]:
        vocab.update(t.replace("{m}", "").replace("{a}", "").split())
    return SyntheticBenchmark(records, train_qa, test_qa, random_embeddings_text(sorted(vocab), emb_dim, seed + 1))


_RELATIONS = [
    ("the capital of {e} is {a} .", "what is the capital of {e} ?"),
    ("the river {e} flows into {a} .", "the river {e} flows into which sea ?"),
    ("{e} was founded by {a} .", "who founded {e} ?"),
    ("the currency of {e} is the {a} .", "what is the currency of {e} ?"),
]


def make_planted_corpus(seed: int = 5, n_docs: int = 30, n_questions: int = 20, emb_dim: int = 16) -> SyntheticBenchmark:
    """One planted fact per question, each in its own document, among distractors.

    Each fact's document also has filler paragraphs, and a distractor paragraph
    elsewhere mentions the entity without the answer.
    """
    if n_questions > n_docs:
        raise ValueError("need at least one document per question")
    rng = np.random.default_rng(seed)
    taken: set[str] = set()
    fillers = _unique_words(rng, 120, taken)
    entities = _unique_words(rng, n_questions, taken, n_syll=(3, 4))
    answers = _unique_words(rng, n_questions, taken, n_syll=(3, 4))

    def filler_sentence(k=(6, 12)):
        return " ".join(rng.choice(fillers, size=int(rng.integers(*k)))) + " ."

    docs = [[filler_sentence() + " " + filler_sentence() for _ in range(int(rng.integers(2, 4)))] for _ in range(n_docs)]
    qa = []
    fact_docs = rng.permutation(n_docs)[:n_questions]
    for q in range(n_questions):
        stmt, ques = _RELATIONS[q % len(_RELATIONS)]
        d = int(fact_docs[q])
        para = filler_sentence() + " " + stmt.format(e=entities[q], a=answers[q]) + " " + filler_sentence()
        slot = int(rng.integers(0, len(docs[d]) + 1))
        docs[d].insert(slot, para)
        other = int(rng.choice([x for x in range(n_docs) if x != d]))
        docs[other].append(f"{entities[q]} is known for its " + filler_sentence())
        qa.append(
            {
                "id": f"q{q}",
                "question": ques.format(e=entities[q]),
                "answers": [answers[q]],
                "positive": {"doc_id": f"doc{d:03d}", "para_index": slot},
            }
        )
    records = [{"id": f"doc{d:03d}", "title": f"doc {d}", "paragraphs": paras} for d, paras in enumerate(docs)]
    vocab = set(fillers + entities + answers)
    for stmt, ques in _RELATIONS:
        vocab.update(stmt.replace("{e}", "").replace("{a}", "").split())
        vocab.update(ques.replace("{e}", "").split())
    vocab.update(["is", "known", "for", "its"])
    return SyntheticBenchmark(records, qa, qa, random_embeddings_text(sorted(vocab), emb_dim, seed + 1))
