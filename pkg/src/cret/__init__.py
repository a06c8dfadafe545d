"""Conformal prediction sets for similarity-scored retrieval.

Wraps any retrieval run (per-query ranked candidates with similarity
scores) with conformal prediction sets that contain the relevant document
with a user-chosen probability, and shrinks those sets via monotone score
refinement (max-normalization plus an inverse-log rank discount).
"""

from .conformal import (
    Calibrator,
    ConformalRetriever,
    NonconformityRecord,
    calibrate_threshold,
    calibrate_topk,
    conformal_quantile,
    fit_calibrator,
    nonconformity_aps,
    nonconformity_raps,
    nonconformity_vanilla,
    predict,
    predict_all,
)
from .core import (
    GroundTruth,
    PredictionSet,
    QueryRun,
    RetrievalRun,
    ScoredCandidate,
    sort_and_rank,
)
from .data import (
    Qrels,
    SynthConfig,
    generate_synthetic,
    load_qrels,
    load_run,
    reduce_qrels,
    save_qrels,
    save_run,
)
from .errors import CretError
from .evaluation import (
    EvalReport,
    EvalRow,
    avg_group_size,
    empirical_coverage,
    evaluate_calibrator,
    run_benchmark,
    run_cells,
    split_queries,
)
from .refine import ScoreRefiner, TransformSpec, refine, refine_all
from .retrieval import EmbeddingMatrix, cosine_scores, load_embeddings, top_n
from .tune import LambdaGrid, tune_lambda

__version__ = "0.1.0"

__all__ = [
    "Calibrator",
    "ConformalRetriever",
    "CretError",
    "EmbeddingMatrix",
    "EvalReport",
    "EvalRow",
    "GroundTruth",
    "LambdaGrid",
    "NonconformityRecord",
    "PredictionSet",
    "Qrels",
    "QueryRun",
    "RetrievalRun",
    "ScoreRefiner",
    "ScoredCandidate",
    "SynthConfig",
    "TransformSpec",
    "avg_group_size",
    "calibrate_threshold",
    "calibrate_topk",
    "conformal_quantile",
    "cosine_scores",
    "empirical_coverage",
    "evaluate_calibrator",
    "fit_calibrator",
    "generate_synthetic",
    "load_embeddings",
    "load_qrels",
    "load_run",
    "nonconformity_aps",
    "nonconformity_raps",
    "nonconformity_vanilla",
    "predict",
    "predict_all",
    "reduce_qrels",
    "refine",
    "refine_all",
    "run_benchmark",
    "run_cells",
    "save_qrels",
    "save_run",
    "sort_and_rank",
    "split_queries",
    "top_n",
    "tune_lambda",
]
