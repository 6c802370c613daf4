"""Chebyshev-scalarized multi-objective training with GrOWL sparsification.

The package solves multi-objective problems through a modified weighted
Chebyshev scalarization handled by an augmented Lagrangian, treats a GrOWL
sparsity penalty as one of the objectives when training multi-task networks,
ties correlated rows found by affinity propagation, and keeps the results in
an epsilon-nondominance Pareto archive.
"""

from . import kernels
from .checkpoint import load_checkpoint, save_checkpoint
from .cluster import ClusterAssignment, affinity_propagation, cluster_layer, tie_clusters
from .errors import DomainError, NumericError
from .growl import growl_penalty_layer, growl_spike, prox_growl, prox_owl, threshold_rows
from .moo import (
    ALState,
    MultiplierSchedule,
    ParetoArchive,
    ScalarizationConfig,
    al_loss,
    al_update,
    eps_nondominance_filter,
    pareto_filter,
    wc_constraints,
)
from .net import MTLSpec, MultiTaskNet, ParamStore
from .trainer import MetricsRecord, TrainConfig, compute_metrics, train

__version__ = "0.1.0"

__all__ = [
    "ALState",
    "ClusterAssignment",
    "DomainError",
    "MTLSpec",
    "MetricsRecord",
    "MultiTaskNet",
    "MultiplierSchedule",
    "NumericError",
    "ParamStore",
    "ParetoArchive",
    "ScalarizationConfig",
    "TrainConfig",
    "affinity_propagation",
    "al_loss",
    "al_update",
    "cluster_layer",
    "compute_metrics",
    "eps_nondominance_filter",
    "growl_penalty_layer",
    "growl_spike",
    "kernels",
    "load_checkpoint",
    "pareto_filter",
    "prox_growl",
    "prox_owl",
    "save_checkpoint",
    "threshold_rows",
    "tie_clusters",
    "train",
    "wc_constraints",
]
