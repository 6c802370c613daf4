"""Pure-Python implementations of the hot loops.

These mirror ``_ckernels.pyx`` one-to-one and are used when the compiled
extension is unavailable (or ``PARETO_FORGE_PURE=1`` is set).
"""

import numpy as np


def pava_nonincreasing_clip(z):
    """Project ``z`` onto the cone ``{x : x[0] >= x[1] >= ... >= x[-1] >= 0}``.

    Pool-adjacent-violators on block means, followed by clipping at zero
    (clipping after the isotonic fit is exact for this cone).
    """
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[0]
    sums = [0.0] * n
    counts = [0] * n
    top = -1
    for i in range(n):
        top += 1
        sums[top] = float(z[i])
        counts[top] = 1
        # merge while the previous block mean is smaller than the current one
        while top > 0 and sums[top - 1] * counts[top] < sums[top] * counts[top - 1]:
            sums[top - 1] += sums[top]
            counts[top - 1] += counts[top]
            top -= 1
    out = np.empty(n, dtype=np.float64)
    pos = 0
    for b in range(top + 1):
        value = sums[b] / counts[b]
        if value < 0.0:
            value = 0.0
        out[pos:pos + counts[b]] = value
        pos += counts[b]
    return out


def nondominated_mask(points):
    """Boolean mask of points not dominated by any other point.

    Later exact duplicates of an earlier point are marked dominated, so the
    first occurrence by index is the one kept.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        p = pts[i]
        le = np.all(pts <= p, axis=1)
        lt = np.any(pts < p, axis=1)
        dominated_by = le & lt
        if dominated_by.any():
            keep[i] = False
            continue
        equal = le & ~lt
        equal[i] = False
        if equal[:i].any():
            keep[i] = False
    return keep


def eps_archive(points, order, eps):
    """Sequential epsilon-archive pass over ``points`` visited in ``order``.

    A newcomer is rejected if an archive member epsilon-dominates it or is an
    exact duplicate of it; otherwise it is inserted and every member it
    epsilon-dominates is evicted. Returns the surviving indices in visit order.
    """
    pts = np.asarray(points, dtype=np.float64)
    archive = np.empty(0, dtype=np.intp)
    for idx in order:
        q = pts[idx]
        members = pts[archive]
        diff = members - eps - q
        dominated = np.all(diff <= 0.0, axis=1) & np.any(diff < 0.0, axis=1)
        if dominated.any() or np.all(members == q, axis=1).any():
            continue
        diff = q - eps - members
        evicted = np.all(diff <= 0.0, axis=1) & np.any(diff < 0.0, axis=1)
        archive = np.append(archive[~evicted], np.intp(idx))
    return archive
