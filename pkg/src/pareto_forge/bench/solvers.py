"""Scalarized solvers for the analytic problems.

:func:`solve_chebyshev` runs the augmented Lagrangian loop on the modified
Chebyshev problem over ``(z, t)``; :func:`solve_weighted_sum` minimizes a
weighted sum from several starts with the same number of inner solves, which
makes the two directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ..errors import NumericError
from ..moo import (
    ALState,
    MultiplierSchedule,
    ScalarizationConfig,
    al_loss,
    al_loss_grad_H,
    al_update,
    wc_constraints,
    wc_jacobian,
    wc_weighted_deviations,
)
from .problems import AnalyticMOP


@dataclass
class SolveResult:
    z: np.ndarray
    x: np.ndarray
    objectives: np.ndarray
    t: float
    H: np.ndarray
    lam: np.ndarray
    converged: bool
    outer_iterations: int
    inner_solves: int
    history: list = field(default_factory=list)


def _inner(fun, x0, bounds, constraints):
    if constraints is None:
        res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-12})
    else:
        A, b = constraints
        res = minimize(fun, x0, jac=True, method="SLSQP", bounds=bounds,
                       constraints=[{"type": "ineq", "fun": lambda z: A @ z - b,
                                     "jac": lambda z: A}],
                       options={"maxiter": 1000, "ftol": 1e-15})
    if not np.all(np.isfinite(res.x)):
        raise NumericError("inner solve produced non-finite iterate")
    return res.x


def solve_chebyshev(problem: AnalyticMOP, preference, reference=None, eps=1e-4, mu0=10.0,
                    mu_growth=2.0, max_outer=60, tol=1e-9, seed=0, z0=None):
    """Augmented Lagrangian solve of ``min t s.t. H_i(z, t) <= 0``.

    Args:
        problem: the problem.
        preference: importance vector ``k``.
        reference: reference point (defaults to the problem's).
        eps: disturbance coefficient of the modified Chebyshev constraints.
        mu0: initial penalty coefficient.
        mu_growth: per-iteration penalty factor.
        max_outer: outer iteration cap.
        tol: stop once every ``H_i <= tol`` and ``|lam_i * H_i| <= tol``.
        seed: seed of the random start (ignored with ``z0``).
        z0: explicit starting decision vector.
    """
    ref = problem.reference if reference is None else np.asarray(reference, dtype=np.float64)
    cfg = ScalarizationConfig(preference=np.asarray(preference, dtype=np.float64), reference=ref,
                              epsilon_disturbance=eps)
    J_wc = wc_jacobian(cfg)
    z = problem.initial(np.random.default_rng(seed)) if z0 is None else np.array(z0, dtype=np.float64)
    t = float(np.max(wc_weighted_deviations(problem.objectives(z), cfg)))
    state = ALState.initial(cfg.n_objectives, mu0, t)
    schedule = MultiplierSchedule(mu_growth, mu_max=1e10)
    bounds = list(problem.bounds) + [(None, None)]
    lifted = None
    if problem.linear_constraints is not None:
        A, b = problem.linear_constraints
        lifted = (np.hstack([A, np.zeros((A.shape[0], 1))]), b)
    converged = False
    H = wc_constraints(problem.objectives(z), t, cfg)
    it = 0
    history = []
    for it in range(1, max_outer + 1):
        st = state

        def fun(v):
            zz, tt = v[:-1], float(v[-1])
            Hv = wc_constraints(problem.objectives(zz), tt, cfg)
            dH = al_loss_grad_H(Hv, st)
            grad = np.empty_like(v)
            grad[:-1] = problem.jacobian(zz).T @ (J_wc.T @ dH)
            grad[-1] = 1.0 - dH.sum()
            return al_loss(Hv, replace_t(st, tt)), grad

        v = _inner(fun, np.append(z, t), bounds, lifted)
        z, t = v[:-1], float(v[-1])
        H = wc_constraints(problem.objectives(z), t, cfg)
        history.append({"iteration": it, "t": t, "max_H": float(np.max(H)), "mu": state.mu,
                        "objectives": [float(v) for v in problem.objectives(z)]})
        state = al_update(H, replace_t(state, t), schedule)
        if np.max(H) <= tol and np.max(np.abs(state.lam * H)) <= tol:
            converged = True
            break
    return SolveResult(z=z, x=problem.decision(z), objectives=problem.objectives(z), t=t, H=H,
                       lam=state.lam, converged=converged, outer_iterations=it, inner_solves=it,
                       history=history)


def replace_t(state: ALState, t):
    return ALState(t=float(t), lam=state.lam, mu=state.mu, iteration=state.iteration)


def solve_weighted_sum(problem: AnalyticMOP, weights, budget, seed=0):
    """Best of ``budget`` local minimizations of ``sum_i w_i f_i`` from random starts."""
    w = np.asarray(weights, dtype=np.float64)
    rng = np.random.default_rng(seed)
    best, best_val = None, np.inf

    def fun(z):
        return float(w @ problem.objectives(z)), problem.jacobian(z).T @ w

    for _ in range(max(int(budget), 1)):
        z = _inner(fun, problem.initial(rng), list(problem.bounds), problem.linear_constraints)
        val = float(w @ problem.objectives(z))
        if val < best_val:
            best, best_val = z, val
    return SolveResult(z=best, x=problem.decision(best), objectives=problem.objectives(best),
                       t=best_val, H=np.zeros(len(w)), lam=np.zeros(len(w)), converged=True,
                       outer_iterations=int(budget), inner_solves=int(budget))
