"""Pure NumPy/Python fallback for the hot clustering kernels.

Mirrors the Cython module `_native` exactly: same signatures, same scan
order, same border tie-breaking, so either lane can back the clustering
module interchangeably.
"""

from __future__ import annotations

import numpy as np


def pairwise_sqeuclidean(x: np.ndarray) -> np.ndarray:
    """Symmetric matrix of squared Euclidean distances with a zero diagonal."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    sq = np.einsum("ij,ij->i", x, x)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    d = 0.5 * (d + d.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def dbscan_from_dist(dist: np.ndarray, eps: float, min_pts: int) -> tuple[np.ndarray, int]:
    """Sequential DBSCAN over a precomputed distance matrix.

    Core point: at least ``min_pts`` neighbors within ``eps``, self included.
    Points are scanned in ascending index order; each unclaimed core seeds a
    new cluster which is fully expanded (FIFO, ascending neighbor order)
    before the scan continues, so border points join the first-discovered
    eligible cluster. Noise keeps label -1.

    Returns (labels, cluster_count) with labels in discovery order.
    """
    dist = np.asarray(dist, dtype=np.float64)
    n = dist.shape[0]
    neigh = dist <= eps
    core = neigh.sum(axis=1) >= min_pts
    labels = np.full(n, -1, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cluster
        queue = [i]
        head = 0
        while head < len(queue):
            p = queue[head]
            head += 1
            fresh = np.nonzero(neigh[p] & (labels == -1))[0]
            labels[fresh] = cluster
            queue.extend(int(j) for j in fresh if core[j])
        cluster += 1
    return labels, cluster
