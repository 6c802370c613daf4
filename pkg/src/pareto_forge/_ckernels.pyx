# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def pava_nonincreasing_clip(z):
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t n = zv.shape[0]
    cdef double[::1] sums = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t[::1] counts = np.empty(n, dtype=np.intp)
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, b, j, pos
    cdef Py_ssize_t top = -1
    cdef double value
    for i in range(n):
        top += 1
        sums[top] = zv[i]
        counts[top] = 1
        while top > 0 and sums[top - 1] * counts[top] < sums[top] * counts[top - 1]:
            sums[top - 1] += sums[top]
            counts[top - 1] += counts[top]
            top -= 1
    pos = 0
    for b in range(top + 1):
        value = sums[b] / counts[b]
        if value < 0.0:
            value = 0.0
        for j in range(counts[b]):
            out[pos + j] = value
        pos += counts[b]
    return out_arr


cdef inline int _dominates(double[:, ::1] pts, Py_ssize_t p, Py_ssize_t q,
                           double eps) noexcept nogil:
    # 1 if pts[p] - eps <= pts[q] everywhere with at least one strict index
    cdef Py_ssize_t j, m = pts.shape[1]
    cdef int strict = 0
    cdef double d
    for j in range(m):
        d = pts[p, j] - eps - pts[q, j]
        if d > 0.0:
            return 0
        if d < 0.0:
            strict = 1
    return strict


cdef inline int _equal(double[:, ::1] pts, Py_ssize_t p, Py_ssize_t q) noexcept nogil:
    cdef Py_ssize_t j
    for j in range(pts.shape[1]):
        if pts[p, j] != pts[q, j]:
            return 0
    return 1


def nondominated_mask(points):
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    keep_arr = np.ones(n, dtype=np.uint8)
    cdef unsigned char[::1] keep = keep_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(n):
                if j == i:
                    continue
                if _dominates(pts, j, i, 0.0) or (j < i and _equal(pts, j, i)):
                    keep[i] = 0
                    break
    return keep_arr.astype(bool)


def eps_archive(points, order, double eps):
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t[::1] visit = np.ascontiguousarray(order, dtype=np.intp)
    cdef Py_ssize_t n = visit.shape[0]
    arch_arr = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] arch = arch_arr
    cdef Py_ssize_t size = 0, k, a, q, w
    cdef int rejected
    with nogil:
        for k in range(n):
            q = visit[k]
            rejected = 0
            for a in range(size):
                if _dominates(pts, arch[a], q, eps) or _equal(pts, arch[a], q):
                    rejected = 1
                    break
            if rejected:
                continue
            w = 0
            for a in range(size):
                if not _dominates(pts, q, arch[a], eps):
                    arch[w] = arch[a]
                    w += 1
            arch[w] = q
            size = w + 1
    return arch_arr[:size].copy()
