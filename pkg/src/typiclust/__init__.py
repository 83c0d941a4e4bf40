"""Typicality-based active learning for the low-budget regime, plus the
supporting theory simulations and evaluation tools."""

from __future__ import annotations

from .clustering import ClusterAssignment, cluster, kmeans, minibatch_kmeans
from .core import (
    Diagnostic,
    EmbeddingSet,
    PoolState,
    QueryBatch,
    StrategyConfig,
    l2_normalize,
    validate_embedding_set,
)
from .errors import NumericalError, TypiclustError, ValidationError
from .evaluation import linear_probe, one_nn_probe, run_experiment, tv_distance
from .linear_mixture import (
    LinearMixtureConfig,
    least_squares_separator,
    max_density_diverse_select,
    mixture_error_experiment,
    one_nn_loss_estimate,
)
from .strategies import ScoreMatrix, coreset_select, random_select, select, typiclust_select
from .theory import (
    ExponentialError,
    MixtureConfig,
    PowerError,
    TabulatedError,
    detect_transition,
    difference_curves,
    threshold_test,
)
from .typicality import brute_force_typicality, knn_typicality

__version__ = "0.1.0"

__all__ = [
    "ClusterAssignment", "cluster", "kmeans", "minibatch_kmeans",
    "Diagnostic", "EmbeddingSet", "PoolState", "QueryBatch", "StrategyConfig",
    "l2_normalize", "validate_embedding_set",
    "NumericalError", "TypiclustError", "ValidationError",
    "linear_probe", "one_nn_probe", "run_experiment", "tv_distance",
    "LinearMixtureConfig", "least_squares_separator", "max_density_diverse_select",
    "mixture_error_experiment", "one_nn_loss_estimate",
    "ScoreMatrix", "coreset_select", "random_select", "select", "typiclust_select",
    "ExponentialError", "MixtureConfig", "PowerError", "TabulatedError",
    "detect_transition", "difference_curves", "threshold_test",
    "brute_force_typicality", "knn_typicality",
]
