"""Chebyshev scalarization, augmented Lagrangian pieces and dominance tools.

Objective vectors are stacked as ``(L_0, L_1, ..., L_m)`` where ``L_0`` is the
sparsity objective and ``L_1..L_m`` are task losses. Everything here works on
plain numpy arrays; the small dataclasses only carry configuration and
multiplier state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import kernels
from .errors import DomainError, NumericError

SIMPLEX_TOL = 1e-12


def as_objective_vector(values, name="objective vector"):
    """Return ``values`` as a finite float64 vector of length >= 2."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 2:
        raise DomainError(f"{name} must be a 1-D vector with at least 2 entries, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries: {arr}")
    return arr


def check_preference(k, name="preference"):
    """Validate an importance vector: nonnegative and summing to one."""
    k = as_objective_vector(k, name)
    bad = np.flatnonzero(k < 0)
    if bad.size:
        raise DomainError(f"{name}[{bad[0]}] = {k[bad[0]]} is negative")
    total = float(k.sum())
    if abs(total - 1.0) > SIMPLEX_TOL:
        raise DomainError(f"{name} must sum to 1 (got {total!r})")
    return k


@dataclass(frozen=True)
class ScalarizationConfig:
    """Parameters of the modified weighted Chebyshev problem.

    Attributes:
        preference: importance vector ``k`` on the probability simplex.
        reference: utopian anchor ``a``; must stay strictly below every
            objective vector it is used with.
        epsilon_disturbance: the small positive augmentation weight; with 0
            the plain weighted Chebyshev constraints are recovered.
    """

    preference: np.ndarray
    reference: np.ndarray
    epsilon_disturbance: float = 1e-4

    def __post_init__(self):
        k = check_preference(self.preference)
        a = as_objective_vector(self.reference, "reference")
        if a.shape != k.shape:
            raise DomainError(f"reference has {a.shape[0]} entries, preference has {k.shape[0]}")
        if not (self.epsilon_disturbance >= 0 and np.isfinite(self.epsilon_disturbance)):
            raise DomainError(f"epsilon_disturbance must be >= 0, got {self.epsilon_disturbance}")
        object.__setattr__(self, "preference", k)
        object.__setattr__(self, "reference", a)

    @property
    def n_objectives(self) -> int:
        return self.preference.shape[0]

    @classmethod
    def default(cls, preference, n_objectives=None):
        """Zero reference point and ``epsilon_disturbance = 1e-4``."""
        k = np.asarray(preference, dtype=np.float64)
        n = k.shape[0] if n_objectives is None else n_objectives
        return cls(preference=k, reference=np.zeros(n), epsilon_disturbance=1e-4)


def check_reference(L, reference):
    """Raise unless ``reference`` is strictly below ``L`` component-wise."""
    bad = np.flatnonzero(~(reference < L))
    if bad.size:
        i = int(bad[0])
        raise DomainError(
            f"reference point violation at objective {i}: a[{i}] = {float(reference[i])!r} "
            f"is not below L[{i}] = {float(L[i])!r}"
        )


def wc_weighted_deviations(L, cfg: ScalarizationConfig):
    """Per-objective terms ``k_i[(L_i - a_i) + eps * sum_j (L_j - a_j)]``."""
    L = as_objective_vector(L)
    if L.shape != cfg.preference.shape:
        raise DomainError(f"objective vector has {L.shape[0]} entries, config expects {cfg.n_objectives}")
    check_reference(L, cfg.reference)
    dev = L - cfg.reference
    return cfg.preference * (dev + cfg.epsilon_disturbance * dev.sum())


def wc_constraints(L, t, cfg: ScalarizationConfig):
    """Constraint residuals ``H`` of the modified weighted Chebyshev problem.

    ``H_i = k_i[(L_i - a_i) + eps * sum_j (L_j - a_j)] - t``; the problem is
    feasible at ``(x, t)`` when every ``H_i <= 0``.
    """
    return wc_weighted_deviations(L, cfg) - float(t)


def wc_jacobian(cfg: ScalarizationConfig):
    """``dH_i / dL_j = k_i (delta_ij + eps)``; ``dH_i / dt = -1`` is implicit."""
    n = cfg.n_objectives
    return cfg.preference[:, None] * (np.eye(n) + cfg.epsilon_disturbance)


def chebyshev_value(L, cfg: ScalarizationConfig):
    """Optimal ``t`` for fixed ``L``: the largest weighted deviation."""
    return float(np.max(wc_weighted_deviations(L, cfg)))


@dataclass
class ALState:
    """Augmented Lagrangian state: auxiliary ``t``, multipliers and penalty."""

    t: float
    lam: np.ndarray
    mu: float
    iteration: int = 0

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=np.float64)
        if not self.mu > 0:
            raise DomainError(f"penalty coefficient mu must be > 0, got {self.mu}")
        if np.any(self.lam < 0):
            raise DomainError("inequality multipliers must be nonnegative")

    @classmethod
    def initial(cls, n_objectives, mu0, t=0.0):
        """Zero multipliers and penalty ``mu0``."""
        return cls(t=float(t), lam=np.zeros(n_objectives), mu=float(mu0))


@dataclass(frozen=True)
class MultiplierSchedule:
    """How ``mu`` evolves between outer iterations.

    ``mu_factor`` below 1 weakens the penalty each iteration (0.5 halves it);
    above 1 grows it, the classical choice for driving feasibility.
    """

    mu_factor: float = 0.5
    mu_max: float = 1e8

    def __post_init__(self):
        if not self.mu_factor > 0:
            raise DomainError(f"mu_factor must be > 0, got {self.mu_factor}")


def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite {what}: {value}")


def al_loss(H, state: ALState, literal=False):
    """Augmented Lagrangian value for the constraints ``H <= 0``.

    The default is the inequality (Powell-Hestenes-Rockafellar) form
    ``t + sum_i [max(0, lam_i + mu H_i)^2 - lam_i^2] / (2 mu)``, which equals
    ``t`` exactly when every constraint is inactive and ``lam = 0``. With
    ``literal=True`` the equality-style ``t + lam.H + mu/2 ||H||^2`` is used.
    """
    H = np.asarray(H, dtype=np.float64)
    _check_finite(H, "constraint residual")
    lam, mu = state.lam, state.mu
    if literal:
        value = state.t + lam @ H + 0.5 * mu * (H @ H)
    else:
        shifted = np.maximum(0.0, lam + mu * H)
        value = state.t + (shifted @ shifted - lam @ lam) / (2.0 * mu)
    _check_finite(value, "augmented Lagrangian")
    return float(value)


def al_loss_grad_H(H, state: ALState, literal=False):
    """Gradient of :func:`al_loss` with respect to ``H`` (``t`` held fixed).

    The total derivative in ``t`` is ``1 - sum(al_loss_grad_H(...))`` since
    every ``H_i`` carries ``-t``.
    """
    H = np.asarray(H, dtype=np.float64)
    if literal:
        return state.lam + state.mu * H
    return np.maximum(0.0, state.lam + state.mu * H)


def al_update(H, state: ALState, schedule: MultiplierSchedule = MultiplierSchedule()):
    """One outer multiplier step: clamped ascent on ``lam``, then rescale ``mu``."""
    H = np.asarray(H, dtype=np.float64)
    _check_finite(H, "constraint residual")
    lam = np.maximum(0.0, state.lam + state.mu * H)
    mu = min(state.mu * schedule.mu_factor, schedule.mu_max)
    return ALState(t=state.t, lam=lam, mu=mu, iteration=state.iteration + 1)


# --------------------------------------------------------------------------
# dominance


def dominates(p, q):
    """True iff ``p`` is no worse than ``q`` everywhere and better somewhere."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DomainError(f"cannot compare vectors of shapes {p.shape} and {q.shape}")
    return bool(np.all(p <= q) and np.any(p < q))


def eps_dominates(p, q, eps):
    """Additive rule: ``p - eps <= q`` everywhere, strictly somewhere."""
    return dominates(np.asarray(p, dtype=np.float64) - eps, q)


def _as_point_matrix(points):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise DomainError("need a nonempty list of objective vectors")
    if not np.all(np.isfinite(pts)):
        raise DomainError("objective vectors must be finite")
    return pts


def pareto_filter(points):
    """Indices (ascending) of points that no other point dominates.

    Of several identical vectors only the first by input index is kept.
    """
    pts = _as_point_matrix(points)
    return np.flatnonzero(kernels.nondominated_mask(pts))


def canonical_order(points):
    """Lexicographic visiting order (ties by index).

    A dominating point always sorts before the point it dominates, which makes
    the archive pass below independent of input order.
    """
    pts = np.asarray(points, dtype=np.float64)
    keys = [np.arange(pts.shape[0])] + [pts[:, j] for j in range(pts.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def eps_nondominance_filter(points, epsilon=0.0):
    """Consecutive epsilon-nondominance test; returns kept indices ascending.

    Points are fed to an archive in :func:`canonical_order`. A newcomer is
    rejected when an archive member epsilon-dominates it (or equals it);
    otherwise it enters and evicts the members it epsilon-dominates. With
    ``epsilon = 0`` this is exactly :func:`pareto_filter`.
    """
    if not epsilon >= 0:
        raise DomainError(f"epsilon must be >= 0, got {epsilon}")
    pts = _as_point_matrix(points)
    kept = kernels.eps_archive(pts, canonical_order(pts), float(epsilon))
    return np.sort(kept)


def proper_pareto_certify(points, M):
    """Finite-set Geoffrion test with trade-off bound ``M``.

    Point ``x`` passes when, for every rival ``y`` and every objective ``i``
    with ``y_i < x_i``, some objective ``j`` has ``x_j < y_j`` and
    ``(x_i - y_i) / (y_j - x_j) <= M``.
    """
    if not M > 0:
        raise DomainError(f"M must be > 0, got {M}")
    pts = _as_point_matrix(points)
    n = pts.shape[0]
    out = np.ones(n, dtype=bool)
    for a in range(n):
        x = pts[a]
        for b in range(n):
            if a == b:
                continue
            y = pts[b]
            gains = x - y
            improved = gains > 0
            if not improved.any():
                continue
            worsened = gains < 0
            if not worsened.any():
                out[a] = False
                break
            # the best (smallest) ratio uses the largest worsening
            best_ratio = gains[improved] / np.max(-gains[worsened])
            if np.any(best_ratio > M):
                out[a] = False
                break
    return out


# --------------------------------------------------------------------------
# archive


@dataclass
class ArchiveEntry:
    preference: np.ndarray
    objectives: np.ndarray
    metrics: dict = field(default_factory=dict)
    checkpoint: str | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "k": [float(v) for v in self.preference],
            "objectives": [float(v) for v in self.objectives],
            "metrics": self.metrics,
            "checkpoint": self.checkpoint,
        }

    @classmethod
    def from_json(cls, record):
        return cls(
            preference=np.asarray(record["k"], dtype=np.float64),
            objectives=as_objective_vector(record["objectives"]),
            metrics=dict(record.get("metrics") or {}),
            checkpoint=record.get("checkpoint"),
        )


class ParetoArchive:
    """Collection of solved preference vectors kept epsilon-nondominated.

    Every submitted candidate is remembered; :attr:`entries` is the filtered
    view, recomputed from all candidates so the result does not depend on
    submission order. Submission is not thread-safe (single writer).
    """

    def __init__(self, epsilon=0.0):
        if not epsilon >= 0:
            raise DomainError(f"epsilon must be >= 0, got {epsilon}")
        self.epsilon = float(epsilon)
        self.candidates: list[ArchiveEntry] = []

    def add(self, preference, objectives, metrics=None, checkpoint=None):
        entry = ArchiveEntry(
            preference=np.asarray(preference, dtype=np.float64),
            objectives=as_objective_vector(objectives),
            metrics=dict(metrics or {}),
            checkpoint=checkpoint,
        )
        if self.candidates and entry.objectives.shape != self.candidates[0].objectives.shape:
            raise DomainError("all archive entries must have the same number of objectives")
        self.candidates.append(entry)
        return entry

    def kept_indices(self):
        if not self.candidates:
            return np.array([], dtype=np.intp)
        pts = np.stack([c.objectives for c in self.candidates])
        return eps_nondominance_filter(pts, self.epsilon)

    @property
    def entries(self) -> list[ArchiveEntry]:
        return [self.candidates[i] for i in self.kept_indices()]

    def __len__(self):
        return len(self.entries)

    def objectives(self):
        entries = self.entries
        if not entries:
            return np.empty((0, 0))
        return np.stack([e.objectives for e in entries])

    def to_json(self) -> dict[str, Any]:
        return {"epsilon": self.epsilon, "entries": [e.to_json() for e in self.entries]}

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, data):
        archive = cls(epsilon=float(data.get("epsilon", 0.0)))
        for record in data["entries"]:
            e = ArchiveEntry.from_json(record)
            archive.add(e.preference, e.objectives, e.metrics, e.checkpoint)
        return archive

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# --------------------------------------------------------------------------
# CSV for plain point sets


def write_points_csv(path, points: Sequence[Sequence[float]]):
    pts = _as_point_matrix(points)
    header = ",".join(f"f{j}" for j in range(pts.shape[1]))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in pts:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_points_csv(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise DomainError(f"{path}: empty file")
    header = lines[0].split(",")
    expected = [f"f{j}" for j in range(len(header))]
    if header != expected:
        raise DomainError(f"{path}: header must be {','.join(expected)}, got {lines[0]}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise DomainError(f"{path}:{lineno}: expected {len(header)} values, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise DomainError(f"{path}:{lineno}: {exc}") from None
    return _as_point_matrix(rows)
