"""Neuron clustering for parameter tying.

Rows of a layer matrix are compared with a scale-aware cosine and grouped by
affinity propagation. Tying replaces the rows of a cluster by their mean.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .growl import row_norms

PRUNED = -1

# Per-dataset similarity preferences used for clustering.
PREFERENCE_PROFILES = {"multimnist": 0.7, "cifar10mnist": 0.8}


@dataclass
class ClusterAssignment:
    """Cluster label per row of a layer matrix.

    ``labels[i]`` is the row index of the exemplar of row ``i`` or
    :data:`PRUNED` for zero rows, which belong to no cluster.
    """

    labels: np.ndarray
    exemplars: np.ndarray
    converged: bool = True
    n_iter: int = 0

    def clusters(self):
        """List of row-index arrays, one per exemplar, in exemplar order."""
        return [np.flatnonzero(self.labels == e) for e in self.exemplars]

    def to_json(self):
        return {
            "labels": [int(v) for v in self.labels],
            "exemplars": [int(v) for v in self.exemplars],
            "converged": bool(self.converged),
            "n_iter": int(self.n_iter),
        }

    @classmethod
    def from_json(cls, data):
        return cls(
            labels=np.asarray(data["labels"], dtype=np.intp),
            exemplars=np.asarray(data["exemplars"], dtype=np.intp),
            converged=bool(data.get("converged", True)),
            n_iter=int(data.get("n_iter", 0)),
        )

    @classmethod
    def singletons(cls, W):
        """Every nonzero row is its own cluster."""
        norms = row_norms(np.asarray(W, dtype=np.float64))
        labels = np.where(norms > 0, np.arange(norms.shape[0]), PRUNED)
        return cls(labels=labels, exemplars=np.flatnonzero(norms > 0))


def row_similarity(W):
    """Pairwise ``w_i . w_j / max(||w_i||^2, ||w_j||^2)`` over nonzero rows.

    Returns ``(S, rows)`` where ``rows`` are the indices of the nonzero rows of
    ``W`` that index ``S``.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise DomainError(f"layer matrix must be 2-D, got shape {W.shape}")
    sq = np.einsum("ij,ij->i", W, W)
    rows = np.flatnonzero(sq > 0)
    if rows.size == 0:
        raise DomainError("all rows are zero; similarity is undefined")
    V = W[rows]
    sq = sq[rows]
    S = (V @ V.T) / np.maximum(sq[:, None], sq[None, :])
    np.fill_diagonal(S, 1.0)
    return np.clip(S, -1.0, 1.0), rows


def affinity_propagation(S, preference, damping=0.9, max_iter=1000, convergence_iter=15,
                         tol=1e-6, seed=0):
    """Cluster items from a similarity matrix by exemplar message passing.

    Args:
        S: square similarity matrix; its diagonal is replaced by ``preference``.
        preference: self-similarity; larger values give more clusters.
        damping: message damping in ``[0.5, 1)``.
        max_iter: iteration cap.
        convergence_iter: number of consecutive iterations the exemplar set
            must stay unchanged to declare convergence.
        tol: the largest message change in the last iteration must also be
            below ``tol`` (relative to the similarity scale); with heavy
            damping the exemplar set can look stable long before messages
            have propagated.
        seed: seed of the tiny deterministic jitter that breaks exact ties.

    Returns:
        A :class:`ClusterAssignment` over the items of ``S``. If the messages
        have not settled after ``max_iter`` iterations the current labels are
        returned with ``converged=False``.
    """
    S = np.array(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] == 0:
        raise DomainError(f"similarity matrix must be square and nonempty, got {S.shape}")
    if not 0.5 <= damping < 1:
        raise DomainError(f"damping must lie in [0.5, 1), got {damping}")
    if max_iter < 1:
        raise DomainError(f"max_iter must be >= 1, got {max_iter}")
    n = S.shape[0]
    np.fill_diagonal(S, preference)
    if n == 1:
        return ClusterAssignment(labels=np.zeros(1, dtype=np.intp),
                                 exemplars=np.zeros(1, dtype=np.intp))

    rng = np.random.default_rng(seed)
    tiny = np.finfo(np.float64).eps * np.abs(S) + np.finfo(np.float64).tiny * 100
    S = S + tiny * rng.standard_normal((n, n))

    scale = max(float(np.max(np.abs(S))), 1e-300)
    R = np.zeros((n, n))
    A = np.zeros((n, n))
    idx = np.arange(n)
    history = np.zeros((n, convergence_iter), dtype=bool)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # responsibilities
        AS = A + S
        first = np.argmax(AS, axis=1)
        best = AS[idx, first]
        AS[idx, first] = -np.inf
        second = np.max(AS, axis=1)
        R_new = S - best[:, None]
        R_new[idx, first] = S[idx, first] - second
        R_old = R
        R = damping * R + (1 - damping) * R_new

        # availabilities
        Rp = np.maximum(R, 0.0)
        Rp[idx, idx] = R[idx, idx]
        col = Rp.sum(axis=0)
        A_new = col[None, :] - Rp
        diag = A_new[idx, idx].copy()
        A_new = np.minimum(A_new, 0.0)
        A_new[idx, idx] = diag
        A_old = A
        A = damping * A + (1 - damping) * A_new
        change = max(np.max(np.abs(R - R_old)), np.max(np.abs(A - A_old)))

        is_exemplar = (np.diag(A) + np.diag(R)) > 0
        history[:, (it - 1) % convergence_iter] = is_exemplar
        if it >= convergence_iter:
            stable = np.all(history == history[:, :1], axis=1)
            if np.all(stable) and is_exemplar.any() and change <= tol * scale:
                converged = True
                break

    exemplars = np.flatnonzero(np.diag(A) + np.diag(R) > 0)
    if exemplars.size == 0:
        # degenerate: no item volunteers, fall back to singletons
        return ClusterAssignment(labels=idx.copy(), exemplars=idx.copy(),
                                 converged=False, n_iter=it)
    exemplars = _polish(S, preference, exemplars)
    return ClusterAssignment(labels=_assign(S, exemplars), exemplars=exemplars,
                             converged=converged, n_iter=it)


def _batch_net_similarity(S, preference, masks, chunk=2048):
    # net similarity of every exemplar set given as a row of a boolean matrix
    out = np.empty(masks.shape[0])
    for lo in range(0, masks.shape[0], chunk):
        M = masks[lo:lo + chunk]
        best = np.where(M[:, None, :], S[None, :, :], -np.inf).max(axis=2)
        out[lo:lo + chunk] = preference * M.sum(axis=1) + np.where(M, 0.0, best).sum(axis=1)
    return out


def _moves(n, current, max_pair_moves):
    # candidate exemplar sets one move away, in a fixed order: add, drop,
    # swap, merge (two exemplars -> one item), split (one -> two items) and,
    # when the neighbourhood is small enough, double swap
    inside = sorted(current)
    outside = [k for k in range(n) if k not in current]
    moves = [current | {k} for k in outside]
    for j in inside:
        if len(current) > 1:
            moves.append(current - {j})
        moves.extend((current - {j}) | {k} for k in outside)
    for a, j in enumerate(inside):
        for j2 in inside[a + 1:]:
            rest = current - {j, j2}
            moves.extend(rest | {k} for k in range(n) if k not in rest)
    for j in inside:
        for a, k in enumerate(outside):
            moves.extend((current - {j}) | {k, k2} for k2 in outside[a + 1:])
    n_pairs = len(inside) * (len(inside) - 1) // 2 * len(outside) * (len(outside) - 1) // 2
    if n_pairs <= max_pair_moves:
        out_pairs = list(itertools.combinations(outside, 2))
        for j, j2 in itertools.combinations(inside, 2):
            rest = current - {j, j2}
            moves.extend(rest | set(pair) for pair in out_pairs)
    masks = np.zeros((len(moves), n), dtype=bool)
    for r, cand in enumerate(moves):
        masks[r, list(cand)] = True
    return masks


def _polish(S, preference, exemplars, max_pair_moves=20000):
    # Greedy first-improvement local search on the exemplar set. Message
    # passing lands near a good set; this removes the remaining small-move
    # improvements, which matter when messages oscillate.
    n = S.shape[0]
    current = set(int(e) for e in exemplars)
    best = net_similarity(S, preference, sorted(current))
    while True:
        masks = _moves(n, current, max_pair_moves)
        masks = masks[masks.any(axis=1)]
        if masks.shape[0] == 0:
            break
        values = _batch_net_similarity(S, preference, masks)
        better = np.flatnonzero(values > best + 1e-12 * max(1.0, abs(best)))
        if better.size == 0:
            break
        pick = better[0]
        current = set(np.flatnonzero(masks[pick]).tolist())
        best = net_similarity(S, preference, sorted(current))
    return np.asarray(sorted(current), dtype=np.intp)


def _assign(S, exemplars):
    labels = exemplars[np.argmax(S[:, exemplars], axis=1)]
    labels[exemplars] = exemplars
    return labels


def net_similarity(S, preference, exemplars):
    """Objective maximized by affinity propagation for a given exemplar set."""
    S = np.array(S, dtype=np.float64)
    exemplars = np.asarray(exemplars, dtype=np.intp)
    n = S.shape[0]
    others = np.setdiff1d(np.arange(n), exemplars)
    value = preference * exemplars.size
    if others.size:
        value += S[np.ix_(others, exemplars)].max(axis=1).sum()
    return float(value)


def cluster_layer(W, preference=0.7, damping=0.9, max_iter=1000, convergence_iter=15):
    """Cluster the nonzero rows of ``W``; zero rows get :data:`PRUNED`."""
    W = np.asarray(W, dtype=np.float64)
    S, rows = row_similarity(W)
    sub = affinity_propagation(S, preference, damping, max_iter, convergence_iter)
    labels = np.full(W.shape[0], PRUNED, dtype=np.intp)
    labels[rows] = rows[sub.labels]
    return ClusterAssignment(labels=labels, exemplars=rows[sub.exemplars],
                             converged=sub.converged, n_iter=sub.n_iter)


def tie_clusters(W, assignment: ClusterAssignment):
    """Replace the rows of each cluster by their mean; pruned rows stay zero.

    Clusters whose rows are already bit-identical are left untouched, which
    makes the operation idempotent.
    """
    W = np.asarray(W, dtype=np.float64)
    labels = np.asarray(assignment.labels)
    if W.ndim != 2 or labels.shape != (W.shape[0],):
        raise DomainError(f"labels of length {labels.shape} do not match {W.shape[0]} rows")
    out = W.copy()
    out[labels == PRUNED] = 0.0
    for members in assignment.clusters():
        if members.size < 2:
            continue
        block = out[members]
        if np.all(block == block[0]):
            continue
        out[members] = block.mean(axis=0)
    return out


def write_similarity_csv(path, S, rows):
    """Write ``S`` with a header and leading column of original row indices."""
    with open(path, "w") as fh:
        fh.write("row," + ",".join(f"r{int(r)}" for r in rows) + "\n")
        for r, line in zip(rows, S):
            fh.write(f"r{int(r)}," + ",".join(f"{v:.17g}" for v in line) + "\n")
