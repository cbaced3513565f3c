"""Density clustering over feature sets.

DBSCAN here backs both consistency checks of the label purifier: clustering
the new data under the current model and under the frozen previous model.
The distance matrix and the expansion loop are served by the compiled
kernels when built (see ``protostream._kernels``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from protostream import _kernels

NOISE = -1


@dataclass
class ClusterConfig:
    metric: str = "cosine"
    eps: float = 0.15
    min_pts: int = 4


@dataclass
class ClusterAssignment:
    """Per-sample cluster ids (0..cluster_count-1, gapless) or NOISE."""

    labels: np.ndarray
    cluster_count: int

    def members(self, cluster: int) -> np.ndarray:
        return np.nonzero(self.labels == cluster)[0]


def pairwise_distance(features: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """Symmetric zero-diagonal distance matrix.

    ``cosine`` is 1 - cosine similarity on L2-normalized rows; zero vectors
    are normalized with a 1e-12 guard so the distance stays well-defined.
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise ValueError("pairwise_distance: need a non-empty 2-D feature array")
    if metric == "euclidean":
        return np.sqrt(_kernels.pairwise_sqeuclidean(features))
    if metric == "cosine":
        norms = np.sqrt(np.einsum("ij,ij->i", features, features))
        unit = features / np.maximum(norms, 1e-12)[:, None]
        sim = unit @ unit.T
        d = 1.0 - 0.5 * (sim + sim.T)
        np.clip(d, 0.0, 2.0, out=d)
        np.fill_diagonal(d, 0.0)
        return d
    raise ValueError(f"pairwise_distance: unknown metric {metric!r}")


def dbscan(dist: np.ndarray, eps: float, min_pts: int) -> ClusterAssignment:
    """Standard DBSCAN on a precomputed distance matrix.

    A point is core iff it has at least ``min_pts`` neighbors within ``eps``
    (itself included). Clusters are the connected components of core points
    plus their border points; border points join the first-discovered
    eligible cluster (ascending scan order). Cluster ids are renumbered so
    id order follows each cluster's first member index.
    """
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise ValueError("dbscan: distance matrix must be square")
    if eps <= 0:
        raise ValueError("dbscan: eps must be positive")
    if min_pts < 1:
        raise ValueError("dbscan: min_pts must be >= 1")
    raw, count = _kernels.dbscan_from_dist(dist, float(eps), int(min_pts))
    return ClusterAssignment(_renumber(np.asarray(raw, dtype=np.int64)), count)


def _renumber(labels: np.ndarray) -> np.ndarray:
    """Relabel clusters in order of first member index; NOISE untouched."""
    order: dict[int, int] = {}
    out = labels.copy()
    for idx, lab in enumerate(labels):
        if lab == NOISE:
            continue
        if lab not in order:
            order[int(lab)] = len(order)
        out[idx] = order[int(lab)]
    return out


def cluster_features(features: np.ndarray, cfg: ClusterConfig) -> ClusterAssignment:
    """Distance computation + DBSCAN in one call, as the trainer uses it."""
    return dbscan(pairwise_distance(features, cfg.metric), cfg.eps, cfg.min_pts)
