"""Independent brute-force oracles the implementation is checked against.

Everything here is deliberately naive: full triple enumeration for the
triplet loss, transitive reachability closure for the density clustering,
plain set arithmetic for the Jaccard confidence. None of it shares code with
the package beyond NumPy.
"""

from __future__ import annotations

import numpy as np

DIST_EPS = 1e-12  # must match the guarded sqrt in the loss under test


def guarded_dist(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.sum((a - b) ** 2) + DIST_EPS))


def brute_force_batch_hard(feats: np.ndarray, labels: np.ndarray, margin: float) -> float:
    """Triplet loss by enumerating every (anchor, positive, negative) triple."""
    n = len(labels)
    per_anchor = []
    for a in range(n):
        pos = [guarded_dist(feats[a], feats[j]) for j in range(n) if j != a and labels[j] == labels[a]]
        neg = [guarded_dist(feats[a], feats[j]) for j in range(n) if labels[j] != labels[a]]
        if not pos or not neg:
            continue
        per_anchor.append(max(0.0, max(pos) - min(neg) + margin))
    if not per_anchor:
        raise ValueError("no valid anchor")
    return float(np.mean(per_anchor))


def closure_dbscan(dist: np.ndarray, eps: float, min_pts: int) -> list[set[int]]:
    """DBSCAN as reachability closure over the core-point graph.

    Returns the list of clusters (sets of indices) ordered and tie-broken
    exactly as the sequential algorithm discovers them: components ordered by
    their minimal core index; every border point joins the first-discovered
    cluster among those whose cores reach it. The union of the returned sets
    leaves out noise.
    """
    n = dist.shape[0]
    neighbors = [set(np.nonzero(dist[i] <= eps)[0].tolist()) for i in range(n)]
    core = [len(neighbors[i]) >= min_pts for i in range(n)]
    core_idx = [i for i in range(n) if core[i]]

    # transitive closure over core-core adjacency
    comp: dict[int, int] = {}
    comp_count = 0
    for seed in core_idx:
        if seed in comp:
            continue
        stack = [seed]
        comp[seed] = comp_count
        while stack:
            u = stack.pop()
            for v in core_idx:
                if v not in comp and v in neighbors[u]:
                    comp[v] = comp_count
                    stack.append(v)
        comp_count += 1

    # component discovery order = ascending minimal core index
    min_core = {}
    for i, c in comp.items():
        min_core[c] = min(min_core.get(c, n), i)
    order = sorted(min_core, key=lambda c: min_core[c])
    clusters = [set(i for i, c in comp.items() if c == cid) for cid in order]

    # borders join the first-discovered cluster that reaches them
    for i in range(n):
        if core[i] or any(i in cl for cl in clusters):
            continue
        for cl in clusters:
            if any(j in neighbors[i] for j in cl if core[j]):
                cl.add(i)
                break
    return clusters


def jaccard_confidence(x: int, groups: dict[int, set[int]], cluster_sets: list[set[int]], noise: set[int]) -> float:
    """Eq.-style set confidence from explicit group/cluster sets."""
    s_x = next(g for g in groups.values() if x in g)
    c_x = {x} if x in noise else next(c for c in cluster_sets if x in c)
    return len(s_x & c_x) / len(s_x | c_x)
