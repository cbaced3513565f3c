# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled clustering kernels: squared-distance matrix and DBSCAN expansion.

Behaviour must stay in lockstep with `_py.py`; the parity tests compare the
two lanes on random inputs.
"""

import numpy as np


def pairwise_sqeuclidean(double[:, ::1] x):
    """Symmetric matrix of squared Euclidean distances with a zero diagonal."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    out_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                diff = x[i, k] - x[j, k]
                acc += diff * diff
            out[i, j] = acc
            out[j, i] = acc
    return out_arr


def dbscan_from_dist(double[:, ::1] dist, double eps, long min_pts):
    """Sequential DBSCAN over a precomputed distance matrix.

    Same contract as the fallback: ascending scan, FIFO expansion, border
    points claimed by the first-discovered cluster, noise stays -1.
    Returns (labels, cluster_count).
    """
    cdef Py_ssize_t n = dist.shape[0]
    labels_arr = np.full(n, -1, dtype=np.int64)
    cdef long[::1] labels = labels_arr
    core_arr = np.zeros(n, dtype=np.int64)
    cdef long[::1] core = core_arr
    queue_arr = np.zeros(n, dtype=np.int64)
    cdef long[::1] queue = queue_arr
    cdef Py_ssize_t i, j, head, tail
    cdef long p, count
    cdef long cluster = 0

    for i in range(n):
        count = 0
        for j in range(n):
            if dist[i, j] <= eps:
                count += 1
        core[i] = 1 if count >= min_pts else 0

    for i in range(n):
        if labels[i] != -1 or core[i] == 0:
            continue
        labels[i] = cluster
        queue[0] = i
        head = 0
        tail = 1
        while head < tail:
            p = queue[head]
            head += 1
            for j in range(n):
                if labels[j] == -1 and dist[p, j] <= eps:
                    labels[j] = cluster
                    if core[j] == 1:
                        queue[tail] = j
                        tail += 1
        cluster += 1
    return labels_arr, int(cluster)
