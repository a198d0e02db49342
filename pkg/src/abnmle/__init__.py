"""Frequentist structure learning for additive Bayesian networks."""

from .cache import CacheEntry, ScoreCache, build_cache, enumerate_parent_sets, node_scores
from .data import (
    ConstraintSpec,
    Dataset,
    DesignMatrix,
    DistributionKind,
    encode_design,
    load_dataset,
    validate_constraints,
)
from .glm import (
    FamilySpec,
    GlmFit,
    fit_irls,
    fit_logistic_firth,
    fit_multinomial,
    fit_node_robust,
    rank_reduce,
)
from .network import FitResult, fit_dag, network_score
from .search import Dag, brute_force_dag, is_acyclic, most_probable_dag
from .simulation import ConfusionCounts, GroundTruth, confusion, random_dag, simulate_data

__version__ = "0.1.0"

__all__ = [
    "CacheEntry",
    "ConfusionCounts",
    "ConstraintSpec",
    "Dag",
    "Dataset",
    "DesignMatrix",
    "DistributionKind",
    "FamilySpec",
    "FitResult",
    "GlmFit",
    "GroundTruth",
    "ScoreCache",
    "brute_force_dag",
    "build_cache",
    "confusion",
    "encode_design",
    "enumerate_parent_sets",
    "fit_dag",
    "fit_irls",
    "fit_logistic_firth",
    "fit_multinomial",
    "fit_node_robust",
    "is_acyclic",
    "load_dataset",
    "most_probable_dag",
    "network_score",
    "node_scores",
    "random_dag",
    "rank_reduce",
    "simulate_data",
    "validate_constraints",
]
