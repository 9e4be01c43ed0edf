"""Binarized CP decomposition (B-CP) for knowledge graph completion."""

__version__ = "0.1.0"

from .cp import (
    DenseFactors,
    Hyperparams,
    PackedFactors,
    binarize_factors,
    quantize,
    score_dense,
    score_packed,
    unpack,
)
from .evaluate import EvalReport, classify, evaluate, evaluate_ensemble, rank_triple, tune_threshold
from .kg import KnowledgeGraph, Triple, build_graph, load_dataset, parse_triples
from .model_io import load_model, save_dense, save_packed, size_report
from .train import TrainConfig, TrainLog, train
from .vq import vq_quantize

__all__ = [
    "DenseFactors",
    "EvalReport",
    "Hyperparams",
    "KnowledgeGraph",
    "PackedFactors",
    "TrainConfig",
    "TrainLog",
    "Triple",
    "binarize_factors",
    "build_graph",
    "classify",
    "evaluate",
    "evaluate_ensemble",
    "load_dataset",
    "load_model",
    "parse_triples",
    "quantize",
    "rank_triple",
    "save_dense",
    "save_packed",
    "score_dense",
    "score_packed",
    "size_report",
    "train",
    "tune_threshold",
    "unpack",
    "vq_quantize",
]
