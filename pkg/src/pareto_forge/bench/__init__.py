"""Analytic test problems, synthetic data, sweeps and front reports."""

from .dataset import DatasetConfig, SyntheticTwoTaskDataset, TaskSplit, make_dataset
from .problems import AnalyticMOP, analytic_problems, concave2, convex2, get_problem, sparse3
from .report import FrontReport, front_report, generational_distance, sparsity_cluster
from .solvers import SolveResult, solve_chebyshev, solve_weighted_sum
from .sweep import (
    K0_GRID,
    AnalyticJob,
    JobResult,
    ModelJob,
    SweepPlan,
    SweepResult,
    simplex_samples,
    sweep,
)

__all__ = [
    "AnalyticJob",
    "AnalyticMOP",
    "DatasetConfig",
    "FrontReport",
    "JobResult",
    "K0_GRID",
    "ModelJob",
    "SolveResult",
    "SweepPlan",
    "SweepResult",
    "SyntheticTwoTaskDataset",
    "TaskSplit",
    "analytic_problems",
    "concave2",
    "convex2",
    "front_report",
    "generational_distance",
    "get_problem",
    "make_dataset",
    "simplex_samples",
    "solve_chebyshev",
    "solve_weighted_sum",
    "sparse3",
    "sweep",
]
