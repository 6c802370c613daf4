"""Group ordered weighted l1 (GrOWL) penalty and its proximal operator.

A layer matrix has one row per neuron of the previous layer. The penalty sorts
row norms in decreasing order and pairs them with a nonincreasing weight
vector ``theta``; rows pushed to zero remove the corresponding neuron.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError


def check_pattern(theta):
    """Validate a GrOWL weight vector and return it as float64."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.shape[0] == 0:
        raise DomainError("theta must be a nonempty 1-D vector")
    if not np.all(np.isfinite(theta)):
        raise DomainError("theta must be finite")
    if theta[0] <= 0:
        raise DomainError(f"theta[0] must be > 0, got {theta[0]}")
    if np.any(theta < 0):
        raise DomainError("theta entries must be >= 0")
    if np.any(np.diff(theta) > 0):
        raise DomainError("theta must be nonincreasing")
    return theta


def growl_spike(beta1, beta2, n):
    """Spike pattern ``(beta1 + beta2, beta2, ..., beta2)`` of length ``n``."""
    if not (beta1 > 0 and beta2 > 0):
        raise DomainError(f"beta1 and beta2 must be > 0, got {beta1}, {beta2}")
    if n < 1:
        raise DomainError(f"pattern length must be >= 1, got {n}")
    theta = np.full(int(n), float(beta2))
    theta[0] += float(beta1)
    return theta


def _as_layer(W):
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] < 1:
        raise DomainError(f"layer matrix must be 2-D with at least one row, got shape {W.shape}")
    return W


def row_norms(W):
    return np.sqrt(np.einsum("ij,ij->i", W, W))


def _sort_desc(values):
    # stable: equal norms keep their row order
    return np.argsort(-values, kind="stable")


def growl_penalty_layer(W, theta):
    """``sum_i theta_i * ||w_[i]||`` with rows sorted by decreasing norm."""
    W = _as_layer(W)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (W.shape[0],):
        raise DomainError(f"theta has length {theta.shape[0]}, layer has {W.shape[0]} rows")
    norms = row_norms(W)
    return float(theta @ norms[_sort_desc(norms)])


def growl_penalty_grad(W, theta):
    """Gradient of :func:`growl_penalty_layer` where it is differentiable.

    Zero rows get a zero (sub)gradient; ties between equal norms are broken by
    the same stable order the penalty uses.
    """
    W = _as_layer(W)
    norms = row_norms(W)
    order = _sort_desc(norms)
    weight = np.empty_like(norms)
    weight[order] = theta
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = weight[nz] / norms[nz]
    return W * scale[:, None]


def growl_total(layers):
    """Sum of layer-wise penalties over ``(W, theta)`` pairs."""
    return float(sum(growl_penalty_layer(W, theta) for W, theta in layers))


def reshape_conv(W4):
    """Flatten a ``(Fw, Fh, N_prev, N)`` kernel to ``N_prev x (Fw*Fh*N)``.

    Row ``i`` collects every weight that reads from input channel ``i``.
    """
    W4 = np.asarray(W4)
    if W4.ndim != 4:
        raise DomainError(f"convolution kernel must have 4 axes, got {W4.ndim}")
    return np.moveaxis(W4, 2, 0).reshape(W4.shape[2], -1)


def prox_owl(b, weights):
    """Prox of ``sum_i w_i |b|_[i]`` at a nonnegative vector ``b``.

    Sort decreasingly, subtract the weights, project onto the nonincreasing
    nonnegative cone with pool-adjacent-violators, and undo the sort.
    """
    b = np.asarray(b, dtype=np.float64)
    order = _sort_desc(b)
    projected = kernels.pava_nonincreasing_clip(b[order] - weights)
    out = np.empty_like(b)
    out[order] = projected
    return out


def prox_growl(W, theta, step):
    """Proximal map of ``step * G_theta`` at ``W``.

    Returns the minimizer of ``G_theta(V) + ||V - W||^2 / (2 step)``. The row
    norms go through the OWL prox; each row keeps its direction and is rescaled
    to its new norm. Zero rows stay zero.
    """
    if not step > 0:
        raise DomainError(f"prox step must be > 0, got {step}")
    W = _as_layer(W)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (W.shape[0],):
        raise DomainError(f"theta has length {theta.shape[0]}, layer has {W.shape[0]} rows")
    norms = row_norms(W)
    new_norms = prox_owl(norms, step * theta)
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = new_norms[nz] / norms[nz]
    return W * scale[:, None]


def threshold_rows(W, tau):
    """Zero every row whose l2 norm is below ``tau``.

    Returns the new matrix and the indices of rows zeroed by this call (rows
    that were already zero are not reported).
    """
    if not tau >= 0:
        raise DomainError(f"tau must be >= 0, got {tau}")
    W = _as_layer(W)
    norms = row_norms(W)
    zeroed = np.flatnonzero((norms < tau) & (norms > 0))
    out = W.copy()
    out[norms < tau] = 0.0
    return out, zeroed


def zero_rows(W):
    return np.flatnonzero(~np.any(_as_layer(W) != 0, axis=1))


def layer_sparsity(W):
    """Fraction of rows that are entirely zero."""
    W = _as_layer(W)
    return float(zero_rows(W).size / W.shape[0])


@dataclass(frozen=True)
class SparsityBudget:
    """Row threshold and the tolerated sparsity range ``[eta_min, eta_max]``."""

    tau: float = 1e-3
    eta_min: float = 0.2
    eta_max: float = 0.8

    def __post_init__(self):
        if not self.tau >= 0:
            raise DomainError(f"tau must be >= 0, got {self.tau}")
        if not (0 <= self.eta_min <= self.eta_max <= 1):
            raise DomainError(
                f"need 0 <= eta_min <= eta_max <= 1, got [{self.eta_min}, {self.eta_max}]"
            )
