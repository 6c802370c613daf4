"""Analytic multi-objective test problems with known Pareto fronts.

Each problem works on a decision vector ``z`` that the solvers optimize. For
smooth problems ``z`` is the point ``x`` itself. The OWL objective of
``SPARSE3`` is not differentiable, so its ``z`` also carries the variables of
the linear-programming form of the sorted l1 norm: the objective is then a
linear function of ``z`` and exact at every feasible minimizer, and the
problem exposes the linear constraints that tie the lifted variables to ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from ..errors import DomainError
from ..growl import growl_spike


@dataclass
class AnalyticMOP:
    """A multi-objective problem over a real decision vector.

    Attributes:
        name: catalogue key.
        n_vars: length of the decision vector ``z``.
        objectives: ``z -> f`` (length ``n_objectives``).
        jacobian: ``z -> df/dz`` of shape ``(n_objectives, n_vars)``.
        bounds: per-variable ``(low, high)`` pairs (``None`` for unbounded).
        convex: whether every objective is convex.
        reference: default reference point for Chebyshev scalarization.
        on_front: exact front-membership predicate on objective vectors.
        front_distance: Euclidean distance from an objective vector to the
            front, or ``None`` if the front is not known in closed form.
        decision: ``z -> x`` (the original variables).
        linear_constraints: ``(A, b)`` with ``A z >= b`` or ``None``.
        start: ``rng -> z`` feasible starting point.
    """

    name: str
    n_vars: int
    objectives: Callable
    jacobian: Callable
    bounds: list
    convex: bool
    reference: np.ndarray
    on_front: Callable | None = None
    front_distance: Callable | None = None
    decision: Callable = field(default=lambda z: np.asarray(z))
    linear_constraints: tuple | None = None
    start: Callable | None = None

    @property
    def n_objectives(self):
        return len(self.reference)

    def initial(self, rng):
        if self.start is not None:
            return self.start(rng)
        lo = np.array([-1.0 if b[0] is None else b[0] for b in self.bounds])
        hi = np.array([1.0 if b[1] is None else b[1] for b in self.bounds])
        return rng.uniform(lo, hi)


def _curve_distance(point, curve, lo, hi, grid=2001):
    """Distance from ``point`` to ``{curve(s) : s in [lo, hi]}``."""
    point = np.asarray(point, dtype=np.float64)
    s = np.linspace(lo, hi, grid)
    d = np.linalg.norm(curve(s).T - point, axis=1)
    j = int(np.argmin(d))
    a, b = s[max(j - 1, 0)], s[min(j + 1, grid - 1)]
    res = minimize_scalar(lambda u: np.linalg.norm(curve(np.array([u]))[:, 0] - point),
                          bounds=(a, b), method="bounded", options={"xatol": 1e-13})
    return float(min(res.fun, d[j]))


# ---------------------------------------------------------------- CONVEX2


def _convex2_curve(s):
    return np.vstack([(1 - s) ** 2, (1 + s) ** 2])


def convex2(d=2):
    """``f1 = ||x - e1||^2``, ``f2 = ||x + e1||^2``; the front is the image of
    the segment between ``-e1`` and ``e1``: ``sqrt(f1) + sqrt(f2) = 2``."""
    e1 = np.zeros(d)
    e1[0] = 1.0

    def objectives(x):
        return np.array([np.sum((x - e1) ** 2), np.sum((x + e1) ** 2)])

    def jacobian(x):
        return np.vstack([2 * (x - e1), 2 * (x + e1)])

    def on_front(f, tol=1e-9):
        f = np.asarray(f, dtype=np.float64)
        return bool(np.all(f >= -tol) and abs(np.sqrt(max(f[0], 0)) + np.sqrt(max(f[1], 0)) - 2) <= tol)

    return AnalyticMOP(
        name="CONVEX2", n_vars=d, objectives=objectives, jacobian=jacobian,
        bounds=[(None, None)] * d, convex=True, reference=np.zeros(2), on_front=on_front,
        front_distance=lambda f: _curve_distance(f, _convex2_curve, -1.0, 1.0),
        start=lambda rng: rng.uniform(-2, 2, d),
    )


def convex2_chebyshev_solution(k, reference=(0.0, 0.0), eps=1e-4):
    """Minimizer of the modified Chebyshev problem on CONVEX2 (``d = 2``).

    The minimizer lies on the segment ``x = (s, 0)``; for an interior
    preference both weighted deviations are equal there, which is a scalar
    root in ``s``.
    """
    k = np.asarray(k, dtype=np.float64)
    a = np.asarray(reference, dtype=np.float64)

    def dev(s):
        f = _convex2_curve(np.array([s]))[:, 0] - a
        return k * (f + eps * f.sum())

    # a single active objective: minimize f_i + eps * (f1 + f2) in closed form
    if k[0] == 0:
        return np.array([-1.0 / (1.0 + 2.0 * eps), 0.0])
    if k[1] == 0:
        return np.array([1.0 / (1.0 + 2.0 * eps), 0.0])
    # the difference of the weighted deviations is monotone on [-1, 1]
    lo, hi = -1.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (dev(mid)[0] - dev(mid)[1]) > 0:
            lo = mid
        else:
            hi = mid
    return np.array([0.5 * (lo + hi), 0.0])


# ---------------------------------------------------------------- CONCAVE2


def concave2():
    """``x in [0, 1]``, ``f1 = x``, ``f2 = 1 - x^2``; every ``x`` is Pareto
    optimal and the front ``f2 = 1 - f1^2`` is concave."""

    def objectives(x):
        return np.array([x[0], 1 - x[0] ** 2])

    def jacobian(x):
        return np.array([[1.0], [-2 * x[0]]])

    def on_front(f, tol=1e-9):
        f = np.asarray(f, dtype=np.float64)
        return bool(-tol <= f[0] <= 1 + tol and abs(f[1] - (1 - f[0] ** 2)) <= tol)

    return AnalyticMOP(
        name="CONCAVE2", n_vars=1, objectives=objectives, jacobian=jacobian,
        bounds=[(0.0, 1.0)], convex=False, start=lambda rng: np.array([rng.uniform(0.25, 0.75)]),
        # f = 0 is attainable per objective, so the anchor sits strictly below it
        reference=np.array([-0.1, -0.1]), on_front=on_front,
        front_distance=lambda f: _curve_distance(
            f, lambda s: np.vstack([s, 1 - s ** 2]), 0.0, 1.0),
    )


# ----------------------------------------------------------------- SPARSE3


def owl_norm(x, theta):
    """``sum_i theta_i |x|_[i]`` with ``|x|`` sorted decreasingly."""
    return float(np.sort(np.abs(x))[::-1] @ theta)


def sparse3(d=4, seed=0, beta1=0.2, beta2=0.1):
    """Three objectives over ``x in R^d``: an OWL norm (index 0) and two
    least-squares task losses whose minimizers only partly agree.

    The decision vector is ``z = (x, r, s)`` with ``r`` in ``R^d`` and ``s``
    in ``R^{d x d}``; ``f0(z) = sum_i delta_i (i r_i + sum_j s_ij)`` with
    ``delta_i = theta_i - theta_{i+1}`` and ``s_ij >= |x_j| - r_i``,
    ``s >= 0``. At any minimizer over ``(r, s)`` this equals ``OWL(x)``.
    """
    rng = np.random.default_rng(seed)
    theta = growl_spike(beta1, beta2, d)
    delta = theta - np.append(theta[1:], 0.0)
    mats = [rng.standard_normal((d + 2, d)) / np.sqrt(d) for _ in range(2)]
    shared = rng.standard_normal(d)
    targets = [shared + 0.5 * rng.standard_normal(d) for _ in range(2)]
    rhs = [A @ x for A, x in zip(mats, targets)]
    n = d + d + d * d
    c0 = np.concatenate([np.zeros(d), delta * np.arange(1, d + 1), np.repeat(delta, d)])

    def split(z):
        return z[:d], z[d:2 * d], z[2 * d:].reshape(d, d)

    def task(x, i):
        res = mats[i] @ x - rhs[i]
        return 0.5 * float(res @ res)

    def objectives(z):
        x = z[:d]
        return np.array([float(c0 @ z), task(x, 0), task(x, 1)])

    def jacobian(z):
        x = z[:d]
        J = np.zeros((3, n))
        J[0] = c0
        for i in range(2):
            J[i + 1, :d] = mats[i].T @ (mats[i] @ x - rhs[i])
        return J

    # s_ij + r_i - x_j >= 0 and s_ij + r_i + x_j >= 0
    rows = []
    for i in range(d):
        for j in range(d):
            for sign in (1.0, -1.0):
                a = np.zeros(n)
                a[2 * d + i * d + j] = 1.0
                a[d + i] = 1.0
                a[j] = -sign
                rows.append(a)
    A = np.array(rows)

    def start(rng_):
        x = rng_.standard_normal(d)
        r = np.full(d, np.abs(x).max())
        return np.concatenate([x, r, np.zeros(d * d)])

    def true_objectives(x):
        return np.array([owl_norm(x, theta), task(x, 0), task(x, 1)])

    prob = AnalyticMOP(
        name="SPARSE3", n_vars=n, objectives=objectives, jacobian=jacobian,
        bounds=[(None, None)] * (2 * d) + [(0.0, None)] * (d * d), convex=True,
        reference=np.array([-0.1, -0.1, -0.1]), decision=lambda z: np.asarray(z)[:d],
        linear_constraints=(A, np.zeros(A.shape[0])), start=start,
    )
    prob.theta = theta
    prob.true_objectives = true_objectives
    return prob


CATALOGUE = {"CONVEX2": convex2, "CONCAVE2": concave2, "SPARSE3": sparse3}


def analytic_problems():
    """Fresh instances of every catalogued problem, keyed by name."""
    return {name: make() for name, make in CATALOGUE.items()}


def get_problem(name, **kwargs):
    if name not in CATALOGUE:
        raise DomainError(f"unknown problem {name!r}; choose from {sorted(CATALOGUE)}")
    return CATALOGUE[name](**kwargs)
