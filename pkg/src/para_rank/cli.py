"""``para-rank`` command line: index | train | ask | eval | gridsearch.

Exit codes: 0 success, 2 usage error, 3 data or format error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import FormatError, NumericError
from .pipeline import (
    PipelineConfig,
    QAPipeline,
    evaluate,
    grid_search,
    load_config,
    load_qa,
    with_overrides,
)
from .ranker import SCORERS, NoiseDistribution, RankerModel, TrainingConfig, TrainingExample, train
from .reader import ExternalReader
from .retriever import build_index, load_corpus, load_index, save_index
from .text_core import Vocabulary, load_embeddings, tokenize

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


def _add_pipeline_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON file with pipeline settings")
    p.add_argument("--corpus", help="corpus JSON lines")
    p.add_argument("--index", help="index written by 'para-rank index'")
    p.add_argument("--model", help="checkpoint written by 'para-rank train'")
    p.add_argument("--reader-answers", help="JSON lines of externally produced answers")
    p.add_argument("--n-docs", type=int, help="documents to retrieve (N)")
    p.add_argument("--m", "--m-paragraphs", dest="m_paragraphs", type=int, help="paragraphs to read (M)")
    p.add_argument("--max-span", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="para-rank", description="Open-domain QA with a neural paragraph ranker.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build a TF-IDF index over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ngrams", type=int, default=2, choices=(1, 2))
    p.add_argument("--hash-bits", type=int, default=0)

    p = sub.add_parser("train", help="train a paragraph ranker")
    p.add_argument("--corpus", required=True)
    p.add_argument("--qa", required=True, help='JSON lines {"question", "answers", "positive": {"doc_id", "para_index"}}')
    p.add_argument("--emb", required=True, help="word2vec-text embeddings")
    p.add_argument("--out", required=True)
    p.add_argument("--scorer", choices=SCORERS, default="dot")
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--mlp-hidden", type=int)
    p.add_argument("--dropout", type=float, default=0.4)
    p.add_argument("--kneg", type=int, default=4)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.002)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("ask", help="answer one question and print the top paragraphs")
    p.add_argument("question")
    p.add_argument("--json", action="store_true", help="print the result as JSON")
    _add_pipeline_args(p)

    p = sub.add_parser("eval", help="exact match and recall@M over a QA file; JSON to stdout")
    p.add_argument("--qa", required=True)
    _add_pipeline_args(p)

    p = sub.add_parser("gridsearch", help="exact match for every aggregation weight triple in {0,0.5,1,2}^3")
    p.add_argument("--qa", required=True, help="validation QA file")
    _add_pipeline_args(p)
    return parser


def _config(args) -> PipelineConfig:
    base = load_config(args.config) if args.config else PipelineConfig()
    return with_overrides(
        base,
        corpus=args.corpus,
        index=args.index,
        model=args.model,
        reader_answers=args.reader_answers,
        n_docs=args.n_docs,
        m_paragraphs=args.m_paragraphs,
        max_span=args.max_span,
        alpha=args.alpha,
        beta=args.beta,
        gamma=args.gamma,
    )


def _pipeline(cfg: PipelineConfig) -> QAPipeline:
    missing = [k for k in ("corpus", "index", "model") if getattr(cfg, k) is None]
    if missing:
        raise UsageError("missing required setting(s): " + ", ".join("--" + m for m in missing))
    reader = ExternalReader.load(cfg.reader_answers) if cfg.reader_answers else None
    return QAPipeline(cfg, load_corpus(cfg.corpus), load_index(cfg.index), load_checkpoint(cfg.model), reader)


def cmd_index(args) -> int:
    corpus = load_corpus(args.corpus)
    index = build_index(corpus, ngram=args.ngrams, hash_bits=args.hash_bits)
    save_index(index, args.out)
    print(f"indexed {len(corpus)} documents, {corpus.num_paragraphs} paragraphs -> {args.out}", file=sys.stderr)
    return 0


def _training_examples(path, corpus):
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pos = rec["positive"]
                para = corpus.paragraph(str(pos["doc_id"]), int(pos["para_index"]))
                examples.append(
                    TrainingExample(tuple(tokenize(rec["question"])), para, tuple(str(a) for a in rec["answers"]))
                )
            except (json.JSONDecodeError, KeyError, TypeError, IndexError, ValueError) as exc:
                raise FormatError(f"training qa line {lineno}: {exc!r}") from None
    if not examples:
        raise FormatError(f"no training examples in {path}")
    return examples


def cmd_train(args) -> int:
    corpus = load_corpus(args.corpus)
    examples = _training_examples(args.qa, corpus)
    vocab = Vocabulary.build([p.tokens for p in corpus.paragraphs()] + [list(e.question) for e in examples])
    with open(args.emb, encoding="utf-8") as fh:
        embeddings = load_embeddings(fh, vocab)
    try:
        model = RankerModel.create(
            vocab, embeddings, args.hidden, args.layers, args.dropout, args.scorer, args.mlp_hidden, args.seed
        )
        config = TrainingConfig(k_neg=args.kneg, learning_rate=args.lr, epochs=args.epochs, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    noise = NoiseDistribution(list(corpus.paragraphs()))
    train(model, examples, noise, config, callback=lambda e, loss: print(f"epoch {e + 1} loss {loss:.6f}", file=sys.stderr))
    save_checkpoint(model, args.out)
    return 0


def cmd_ask(args) -> int:
    pipeline = _pipeline(_config(args))
    result = pipeline.answer(args.question)
    if args.json:
        out = {
            "answer": result.answer,
            "score": result.score,
            "reason": result.reason,
            "trace": [asdict(t) for t in result.trace],
        }
        print(json.dumps(out, indent=2))
        return 0
    print(result.answer if result.answer is not None else f"(no answer: {result.reason})")
    for t in result.trace:
        print(
            f"  #{t.rank} {t.doc_id}[{t.para_index}] combined={t.combined:.6g} ranker={t.ranker_prob:.6g} "
            f"doc={t.doc_score:.6g} answer={t.answer!r}"
        )
    return 0


def cmd_eval(args) -> int:
    pipeline = _pipeline(_config(args))
    print(evaluate(pipeline, load_qa(args.qa)).to_json())
    return 0


def cmd_gridsearch(args) -> int:
    pipeline = _pipeline(_config(args))
    results = grid_search(pipeline, load_qa(args.qa))
    out = {
        "best": asdict(results[0].weights) | {"exact_match": results[0].exact_match},
        "grid": [asdict(r.weights) | {"exact_match": r.exact_match} for r in results],
    }
    print(json.dumps(out, indent=2))
    return 0


COMMANDS = {"index": cmd_index, "train": cmd_train, "ask": cmd_ask, "eval": cmd_eval, "gridsearch": cmd_gridsearch}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (FormatError, OSError) as exc:
        print(f"para-rank: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"para-rank: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"para-rank: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
