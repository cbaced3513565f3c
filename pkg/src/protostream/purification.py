"""Pseudo-label purification by clustering consistency.

Samples sharing a pseudo-label form a group; a label survives only when the
Jaccard overlap between its group and the sample's cluster exceeds a
threshold. Filtering runs once against the current model's clustering and
once against the frozen previous model's, and the two surviving sets are
merged (the new-model label wins counted conflicts).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from protostream.clustering import NOISE, ClusterAssignment
from protostream.objectives import UNAVAILABLE


@dataclass
class PseudoLabelSet:
    """Per-sample label assignment with an explicit unavailable state.

    ``labels`` uses UNAVAILABLE (-1) for withheld samples; ``is_artificial``
    marks ground-truth labels, which no purification step may alter.
    """

    labels: np.ndarray
    is_artificial: np.ndarray
    source: str = "npl"

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.is_artificial = np.asarray(self.is_artificial, dtype=bool)
        if self.labels.shape != self.is_artificial.shape:
            raise ValueError("pseudo labels: mask shape mismatch")
        if np.any(self.labels[self.is_artificial] == UNAVAILABLE):
            raise ValueError("pseudo labels: artificial samples must carry a label")

    @property
    def n(self) -> int:
        return len(self.labels)

    def available_mask(self) -> np.ndarray:
        return self.labels != UNAVAILABLE

    def copy(self, source: str | None = None) -> "PseudoLabelSet":
        return PseudoLabelSet(self.labels.copy(), self.is_artificial.copy(), source or self.source)


def all_unavailable(labeled_truth: np.ndarray, is_artificial: np.ndarray, source: str) -> PseudoLabelSet:
    """Assignment carrying only the artificial labels (stage-1 old-knowledge stub)."""
    labels = np.full(len(is_artificial), UNAVAILABLE, dtype=np.int64)
    labels[is_artificial] = labeled_truth[is_artificial]
    return PseudoLabelSet(labels, is_artificial, source)


@dataclass
class LabelGroups:
    """label id -> indices of the samples currently carrying that label."""

    groups: dict[int, np.ndarray]

    def group_of(self, label: int) -> np.ndarray:
        return self.groups[int(label)]

    def containing(self, x: int) -> np.ndarray:
        for members in self.groups.values():
            if x in members:
                return members
        raise ValueError(f"label group lookup: sample {x} has no available label")


def label_groups(labels: PseudoLabelSet) -> LabelGroups:
    """Partition samples with an available label by that label; empty groups omitted."""
    groups: dict[int, np.ndarray] = {}
    avail = labels.available_mask()
    for lab in np.unique(labels.labels[avail]):
        groups[int(lab)] = np.nonzero(labels.labels == lab)[0]
    return LabelGroups(groups)


def _cluster_members(x: int, clusters: ClusterAssignment) -> np.ndarray:
    c = clusters.labels[x]
    if c == NOISE:
        return np.array([x], dtype=np.int64)  # noise acts as a singleton cluster
    return clusters.members(int(c))


def label_confidence(x: int, groups: LabelGroups, clusters: ClusterAssignment) -> float:
    """Jaccard overlap |S_x & C_x| / |S_x | C_x| of x's group and x's cluster."""
    s_x = set(int(i) for i in groups.containing(x))
    c_x = set(int(i) for i in _cluster_members(x, clusters))
    return len(s_x & c_x) / len(s_x | c_x)


def _confidences(labels: PseudoLabelSet, groups: LabelGroups, clusters: ClusterAssignment) -> np.ndarray:
    """Per-sample Jaccard confidence for available-label samples (NaN elsewhere)."""
    out = np.full(labels.n, np.nan)
    clab = clusters.labels
    cluster_size = np.bincount(clab[clab != NOISE], minlength=max(clusters.cluster_count, 1))
    for members in groups.groups.values():
        s = len(members)
        member_clusters = clab[members]
        overlap_by_cluster = {}
        for c in member_clusters:
            if c != NOISE:
                overlap_by_cluster[int(c)] = overlap_by_cluster.get(int(c), 0) + 1
        for i, c in zip(members, member_clusters):
            if c == NOISE:
                out[i] = 1.0 / s  # singleton cluster: overlap 1, union s
            else:
                overlap = overlap_by_cluster[int(c)]
                out[i] = overlap / (s + int(cluster_size[c]) - overlap)
    return out


def purify(
    labels: PseudoLabelSet,
    groups: LabelGroups,
    clusters: ClusterAssignment,
    threshold: float,
    source: str = "filtered",
) -> tuple[PseudoLabelSet, np.ndarray]:
    """Withhold pseudo-labels whose confidence is not strictly above threshold.

    Artificial labels always survive; retained labels are never rewritten.
    Returns the filtered set plus the raw per-sample confidences (NaN where
    no label was available).
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("purify: threshold must lie in [0, 1]")
    conf = _confidences(labels, groups, clusters)
    out = labels.labels.copy()
    drop = (~labels.is_artificial) & labels.available_mask() & ~(conf > threshold)
    out[drop] = UNAVAILABLE
    return PseudoLabelSet(out, labels.is_artificial.copy(), source), conf


def merge_pseudo(old_filtered: PseudoLabelSet, new_filtered: PseudoLabelSet) -> tuple[PseudoLabelSet, int]:
    """Union of the two purified sets; the new-knowledge label wins conflicts.

    Returns the merged assignment and the number of disagreeing samples.
    """
    if old_filtered.n != new_filtered.n:
        raise ValueError("merge_pseudo: sample universes differ")
    merged = new_filtered.labels.copy()
    take_old = (merged == UNAVAILABLE) & old_filtered.available_mask()
    merged[take_old] = old_filtered.labels[take_old]
    both = new_filtered.available_mask() & old_filtered.available_mask()
    conflicts = int(np.sum(both & (new_filtered.labels != old_filtered.labels)))
    return PseudoLabelSet(merged, new_filtered.is_artificial.copy(), "merged"), conflicts
