"""Open-domain question answering with a neural paragraph ranker.

Retrieve documents by TF-IDF, rank their paragraphs with a Bi-LSTM dual
encoder, read the top paragraphs and aggregate the candidate answers.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .aggregator import AggregationWeights, CandidateAnswer, coverage_merge, normalize_answer, select_answer
from .checkpoint import load_checkpoint, save_checkpoint
from .pipeline import PipelineConfig, QAPipeline, eval_exact_match, eval_recall_at_m, evaluate, grid_search
from .ranker import RankerModel, TrainingConfig, TrainingExample, paragraph_probability, rank_paragraphs, train
from .reader import ExternalReader, LexicalReader, lexical_read
from .retriever import build_index, ingest_corpus, load_corpus, load_index, retrieve, save_index
from .text_core import Vocabulary, load_embeddings, tokenize

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "AggregationWeights",
    "CandidateAnswer",
    "ExternalReader",
    "LexicalReader",
    "PipelineConfig",
    "QAPipeline",
    "RankerModel",
    "TrainingConfig",
    "TrainingExample",
    "Vocabulary",
    "build_index",
    "coverage_merge",
    "eval_exact_match",
    "eval_recall_at_m",
    "evaluate",
    "grid_search",
    "ingest_corpus",
    "lexical_read",
    "load_checkpoint",
    "load_corpus",
    "load_embeddings",
    "load_index",
    "normalize_answer",
    "paragraph_probability",
    "rank_paragraphs",
    "retrieve",
    "save_checkpoint",
    "save_index",
    "select_answer",
    "tokenize",
    "train",
]
