"""Benchmark orchestration and evaluation engine for text-guided
image-editing studies: annotation campaigns, MOS processing, metric
alignment statistics, reference baselines, and model leaderboards.
"""

from .dataset import (
    ALL_TASKS,
    DIMENSIONS,
    HIGH_LEVEL_TASKS,
    LOW_LEVEL_TASKS,
    BenchmarkItem,
    PromptBundle,
    RatingRecord,
    load_manifest,
    load_ratings,
)
from .mos import MosTable, OutlierPolicy, process_ratings
from .report import OverallWeights, align_metric, build_leaderboard, overall_score
from .stats import PairedSeries, krcc, plcc, qa_accuracy, rmse, srcc

__version__ = "0.1.0"

__all__ = [
    "ALL_TASKS",
    "DIMENSIONS",
    "HIGH_LEVEL_TASKS",
    "LOW_LEVEL_TASKS",
    "BenchmarkItem",
    "PromptBundle",
    "RatingRecord",
    "MosTable",
    "OutlierPolicy",
    "OverallWeights",
    "PairedSeries",
    "align_metric",
    "build_leaderboard",
    "krcc",
    "load_manifest",
    "load_ratings",
    "overall_score",
    "plcc",
    "process_ratings",
    "qa_accuracy",
    "rmse",
    "srcc",
    "__version__",
]
