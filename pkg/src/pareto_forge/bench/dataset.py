"""Synthetic two-task classification data with overlapping feature subspaces.

Each task draws its label uniformly; the label selects a class mean living on
that task's feature subspace. The two subspaces share a few coordinates, so
the tasks are correlated through the inputs, and the remaining coordinates
are pure noise.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DomainError


@dataclass(frozen=True)
class DatasetConfig:
    """Generator settings.

    Attributes:
        n_features: total input width.
        n_classes: class count per task.
        n_samples: total sample count before splitting.
        subspace_dim: coordinates each task's class means occupy.
        overlap: coordinates shared by consecutive task subspaces.
        separation: standard deviation of the class-mean coordinates.
        noise: standard deviation of the isotropic noise.
        split: train/validation/test fractions.
        seed: generator seed.
    """

    n_features: int = 20
    n_classes: tuple = (4, 4)
    n_samples: int = 6000
    subspace_dim: int = 6
    overlap: int = 3
    separation: float = 2.0
    noise: float = 1.0
    split: tuple = (0.7, 0.15, 0.15)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "n_classes", tuple(int(c) for c in self.n_classes))
        object.__setattr__(self, "split", tuple(float(f) for f in self.split))
        if any(c < 2 for c in self.n_classes):
            raise DomainError(f"every task needs at least 2 classes, got {self.n_classes}")
        if not 0 <= self.overlap < self.subspace_dim:
            raise DomainError("overlap must lie in [0, subspace_dim)")
        span = self.subspace_dim + (len(self.n_classes) - 1) * (self.subspace_dim - self.overlap)
        if span > self.n_features:
            raise DomainError(f"task subspaces need {span} features, only {self.n_features} available")
        if len(self.split) != 3 or min(self.split) <= 0 or abs(sum(self.split) - 1) > 1e-9:
            raise DomainError(f"split must be three positive fractions summing to 1, got {self.split}")
        if self.n_samples < 10 * max(self.n_classes):
            raise DomainError(f"n_samples={self.n_samples} too small for {max(self.n_classes)} classes")
        if not (self.separation > 0 and self.noise > 0):
            raise DomainError("separation and noise must be > 0")

    def subspaces(self):
        stride = self.subspace_dim - self.overlap
        return [np.arange(i * stride, i * stride + self.subspace_dim) for i in range(len(self.n_classes))]

    def to_json(self):
        d = asdict(self)
        d["n_classes"] = list(self.n_classes)
        d["split"] = list(self.split)
        return d


@dataclass
class TaskSplit:
    """Inputs and one label vector per task."""

    X: np.ndarray
    labels: tuple

    def __post_init__(self):
        if any(y.shape != (self.X.shape[0],) for y in self.labels):
            raise DomainError("every task needs one label per input row")

    def __len__(self):
        return self.X.shape[0]

    def batches(self, batch_size, rng=None):
        """Yield ``(X, labels)`` minibatches, shuffled when ``rng`` is given."""
        n = len(self)
        order = rng.permutation(n) if rng is not None else np.arange(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            yield self.X[idx], tuple(y[idx] for y in self.labels)


@dataclass
class SyntheticTwoTaskDataset:
    config: DatasetConfig
    train: TaskSplit
    val: TaskSplit
    test: TaskSplit
    means: tuple


def make_dataset(cfg: DatasetConfig = DatasetConfig()):
    """Generate the dataset and its train/validation/test splits (deterministic)."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_samples
    X = cfg.noise * rng.standard_normal((n, cfg.n_features))
    labels = []
    means = []
    for dims, c in zip(cfg.subspaces(), cfg.n_classes):
        mu = cfg.separation * rng.standard_normal((c, dims.size))
        # balanced labels: every class appears n // c or n // c + 1 times
        y = rng.permutation(np.arange(n) % c)
        X[:, dims] += mu[y]
        labels.append(y)
        means.append(mu)
    n_train = int(round(cfg.split[0] * n))
    n_val = int(round(cfg.split[1] * n))
    cuts = [(0, n_train), (n_train, n_train + n_val), (n_train + n_val, n)]
    splits = [TaskSplit(X[a:b].copy(), tuple(y[a:b].copy() for y in labels)) for a, b in cuts]
    return SyntheticTwoTaskDataset(cfg, *splits, means=tuple(means))
