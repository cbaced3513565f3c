"""Training losses and the prototype machinery.

Covers the prototype identity loss, the batch-hard triplet term, the
prototype-affinity structure vector with its KL maintenance loss, and
neighbor-prototype pseudo-labeling (top-2 softmax with a confidence
threshold). All gradients are analytic and validated against the
finite-difference oracle.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from protostream.numerics import kl_divergence, softmax

UNAVAILABLE = -1

# sqrt guard so the Euclidean distance stays differentiable at zero
_DIST_EPS = 1e-12


@dataclass
class Hyperparams:
    """Loss weights, thresholds, and training geometry with paper defaults."""

    alpha: float = 4.0
    t_p: float = 0.7
    t_c: float = 0.1
    t_o: float = 0.6
    margin: float = 0.3
    delta: float = 0.0
    lr: float = 8e-3
    epochs_first: int = 30
    epochs_later: int = 120
    batch_p: int = 8
    batch_k: int = 4
    temperature: float = 1.0
    triplet_on_pseudo: bool = True

    def validate(self) -> None:
        for name in ("t_p", "t_c", "t_o", "delta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"hyperparams: {name} must lie in [0, 1], got {v}")
        if self.margin < 0:
            raise ValueError("hyperparams: margin must be >= 0")
        if self.lr <= 0:
            raise ValueError("hyperparams: lr must be positive")
        if self.temperature <= 0:
            raise ValueError("hyperparams: temperature must be positive")
        if self.batch_p < 2 or self.batch_k < 2:
            raise ValueError("hyperparams: batch_p and batch_k must be >= 2")


class PrototypeBank:
    """One learnable d-vector per identity with a bijective id<->row map."""

    def __init__(self, prototypes: np.ndarray, labels: np.ndarray):
        prototypes = np.asarray(prototypes, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if prototypes.ndim != 2 or prototypes.shape[0] < 1:
            raise ValueError("prototype bank: need at least one prototype row")
        if labels.shape != (prototypes.shape[0],):
            raise ValueError("prototype bank: one label per row required")
        if len(set(labels.tolist())) != len(labels):
            raise ValueError("prototype bank: duplicate identity labels")
        self.prototypes = prototypes
        self.labels = labels
        self._row_of = {int(lab): i for i, lab in enumerate(labels)}

    def __len__(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]

    def row_of(self, label: int) -> int:
        try:
            return self._row_of[int(label)]
        except KeyError:
            raise ValueError(f"prototype bank: unknown identity {label}") from None

    def label_of(self, row: int) -> int:
        return int(self.labels[row])

    def copy(self) -> "PrototypeBank":
        return PrototypeBank(self.prototypes.copy(), self.labels.copy())


def init_prototypes(features: np.ndarray, labels: np.ndarray) -> PrototypeBank:
    """Class-mean initialization: one row per identity, sorted by identity id."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.shape[0] != labels.shape[0] or features.shape[0] == 0:
        raise ValueError("init_prototypes: need one label per feature")
    ids = np.unique(labels)
    rows = np.empty((len(ids), features.shape[1]))
    for i, ident in enumerate(ids):
        mask = labels == ident
        if not mask.any():
            raise ValueError(f"init_prototypes: identity {ident} has no features")
        rows[i] = features[mask].mean(axis=0)
    return PrototypeBank(rows, ids)


def prototype_loss(
    f: np.ndarray, label: int, bank: PrototypeBank, temperature: float = 1.0
) -> tuple[float, np.ndarray, np.ndarray]:
    """Negative log softmax over prototype inner products at the true row.

    Returns (loss, grad wrt f, grad wrt the full prototype matrix).
    """
    f = np.asarray(f, dtype=np.float64)
    row = bank.row_of(label)
    logits = (bank.prototypes @ f) / temperature
    probs = softmax(logits)
    loss = -float(np.log(probs[row]))
    resid = probs.copy()
    resid[row] -= 1.0
    grad_f = (bank.prototypes.T @ resid) / temperature
    grad_bank = np.outer(resid, f) / temperature
    return loss, grad_f, grad_bank


def prototype_loss_batch(
    feats: np.ndarray, rows: np.ndarray, bank: PrototypeBank, temperature: float = 1.0
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean prototype loss over a batch; rows index the bank directly."""
    feats = np.asarray(feats, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.int64)
    n = feats.shape[0]
    logits = (feats @ bank.prototypes.T) / temperature
    probs = softmax(logits, axis=1)
    picked = probs[np.arange(n), rows]
    loss = -float(np.mean(np.log(picked)))
    resid = probs
    resid[np.arange(n), rows] -= 1.0
    resid /= n * temperature
    grad_feats = resid @ bank.prototypes
    grad_bank = resid.T @ feats
    return loss, grad_feats, grad_bank


def _guarded_distances(feats: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", feats, feats)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (feats @ feats.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2 + _DIST_EPS)


def batch_hard_triplet(
    feats: np.ndarray, labels: np.ndarray, margin: float
) -> tuple[float, np.ndarray]:
    """Hardest-positive/hardest-negative hinge loss, averaged over anchors.

    An anchor is valid when it has at least one other sample of its identity
    and at least one sample of a different identity in the batch. Distances
    are Euclidean with a 1e-12 guard under the square root (smooth at zero).
    """
    feats = np.asarray(feats, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = feats.shape[0]
    dist = _guarded_distances(feats)
    same = labels[:, None] == labels[None, :]
    pos_mask = same & ~np.eye(n, dtype=bool)
    neg_mask = ~same
    valid = pos_mask.any(axis=1) & neg_mask.any(axis=1)
    if not valid.any():
        raise ValueError("batch_hard_triplet: no anchor with both a positive and a negative")

    pos_d = np.where(pos_mask, dist, -np.inf)
    neg_d = np.where(neg_mask, dist, np.inf)
    hard_pos = pos_d.argmax(axis=1)
    hard_neg = neg_d.argmin(axis=1)

    grad = np.zeros_like(feats)
    anchors = np.nonzero(valid)[0]
    n_valid = len(anchors)
    total = 0.0
    for a in anchors:
        p, q = hard_pos[a], hard_neg[a]
        hinge = dist[a, p] - dist[a, q] + margin
        if hinge <= 0.0:
            continue
        total += hinge
        up = (feats[a] - feats[p]) / dist[a, p]
        un = (feats[a] - feats[q]) / dist[a, q]
        grad[a] += (up - un) / n_valid
        grad[p] -= up / n_valid
        grad[q] += un / n_valid
    return total / n_valid, grad


def structure_vector(f: np.ndarray, bank: PrototypeBank, temperature: float = 1.0) -> np.ndarray:
    """Softmax affinity of a feature to every prototype in the bank."""
    return softmax((bank.prototypes @ np.asarray(f, dtype=np.float64)) / temperature)


def structure_loss(
    f_old: np.ndarray, f_new: np.ndarray, old_bank: PrototypeBank, temperature: float = 1.0
) -> tuple[float, np.ndarray]:
    """KL between old-model and new-model prototype affinities.

    The old side is frozen: only the gradient w.r.t. ``f_new`` is returned.
    """
    p = structure_vector(f_old, old_bank, temperature)
    q = structure_vector(f_new, old_bank, temperature)
    loss = kl_divergence(p, q)
    grad_new = (old_bank.prototypes.T @ (q - p)) / temperature
    return loss, grad_new


def structure_loss_batch(
    feats_old: np.ndarray, feats_new: np.ndarray, old_bank: PrototypeBank, temperature: float = 1.0
) -> tuple[float, np.ndarray]:
    """Mean structure loss over a batch with gradient w.r.t. the new features."""
    feats_old = np.asarray(feats_old, dtype=np.float64)
    feats_new = np.asarray(feats_new, dtype=np.float64)
    n = feats_old.shape[0]
    p = softmax((feats_old @ old_bank.prototypes.T) / temperature, axis=1)
    q = softmax((feats_new @ old_bank.prototypes.T) / temperature, axis=1)
    loss = sum(kl_divergence(p[i], q[i]) for i in range(n)) / n
    grad_new = ((q - p) @ old_bank.prototypes) / (n * temperature)
    return float(loss), grad_new


class Outcome(enum.Enum):
    ARTIFICIAL = "artificial"
    PSEUDO = "pseudo"
    UNAVAILABLE = "unavailable"


@dataclass
class NeighborDecision:
    index: int
    outcome: Outcome
    label: int | None = None
    score: float | None = None


def neighbor_label(
    f: np.ndarray,
    bank: PrototypeBank,
    t_p: float,
    is_labeled: bool = False,
    y: int | None = None,
    index: int = 0,
    temperature: float = 1.0,
) -> NeighborDecision:
    """Label one sample from its two nearest prototypes.

    Labeled samples keep their ground-truth label unconditionally. For an
    unlabeled sample the two largest inner products a >= b give the score
    s = e^a / (e^a + e^b) in [0.5, 1); the nearest prototype's label is
    assigned when s exceeds ``t_p`` strictly, otherwise the sample is left
    unavailable. Ties prefer the lower prototype row.
    """
    if is_labeled:
        if y is None:
            raise ValueError("neighbor_label: labeled sample needs its identity")
        return NeighborDecision(index, Outcome.ARTIFICIAL, label=int(y))
    if len(bank) < 2:
        raise ValueError("neighbor_label: need at least two prototypes for unlabeled samples")
    scores = (bank.prototypes @ np.asarray(f, dtype=np.float64)) / temperature
    order = np.argsort(-scores, kind="stable")
    a_row, b_row = int(order[0]), int(order[1])
    s_a = _top2_score(scores[a_row], scores[b_row])
    if s_a > t_p:
        return NeighborDecision(index, Outcome.PSEUDO, label=bank.label_of(a_row), score=s_a)
    return NeighborDecision(index, Outcome.UNAVAILABLE)


def _top2_score(a: float, b: float) -> float:
    # stable two-way softmax; a >= b so the result lives in [0.5, 1)
    return float(1.0 / (1.0 + np.exp(b - a)))


def neighbor_label_batch(
    feats: np.ndarray,
    bank: PrototypeBank,
    t_p: float,
    artificial_mask: np.ndarray,
    visible_labels: np.ndarray,
    temperature: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized labeling pass over a full dataset.

    ``visible_labels`` must carry the ground-truth id wherever
    ``artificial_mask`` is set. Returns (labels, scores) where labels use
    UNAVAILABLE for withheld samples and scores hold s_A for unlabeled rows
    (NaN on labeled ones).
    """
    feats = np.asarray(feats, dtype=np.float64)
    n = feats.shape[0]
    labels = np.full(n, UNAVAILABLE, dtype=np.int64)
    scores_out = np.full(n, np.nan)
    labels[artificial_mask] = visible_labels[artificial_mask]
    unl = np.nonzero(~artificial_mask)[0]
    if len(unl) == 0:
        return labels, scores_out
    if len(bank) < 2:
        raise ValueError("neighbor_label_batch: need at least two prototypes")
    logits = (feats[unl] @ bank.prototypes.T) / temperature
    order = np.argsort(-logits, axis=1, kind="stable")
    a_rows = order[:, 0]
    b_rows = order[:, 1]
    idx = np.arange(len(unl))
    s_a = 1.0 / (1.0 + np.exp(logits[idx, b_rows] - logits[idx, a_rows]))
    scores_out[unl] = s_a
    accept = s_a > t_p
    labels[unl[accept]] = bank.labels[a_rows[accept]]
    return labels, scores_out


def argmax_label_batch(
    feats: np.ndarray,
    bank: PrototypeBank,
    t_p: float,
    artificial_mask: np.ndarray,
    visible_labels: np.ndarray,
    temperature: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Ablation variant: plain argmax with a global-softmax threshold."""
    feats = np.asarray(feats, dtype=np.float64)
    n = feats.shape[0]
    labels = np.full(n, UNAVAILABLE, dtype=np.int64)
    scores_out = np.full(n, np.nan)
    labels[artificial_mask] = visible_labels[artificial_mask]
    unl = np.nonzero(~artificial_mask)[0]
    if len(unl) == 0:
        return labels, scores_out
    probs = softmax((feats[unl] @ bank.prototypes.T) / temperature, axis=1)
    best = probs.argmax(axis=1)
    conf = probs[np.arange(len(unl)), best]
    scores_out[unl] = conf
    accept = conf > t_p
    labels[unl[accept]] = bank.labels[best[accept]]
    return labels, scores_out
