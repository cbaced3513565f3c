"""Retrieval evaluation (mAP, Rank-1) and pseudo-label quality metrics.

Ranking is by cosine similarity on L2-normalized features. Per the standard
identity-retrieval protocol, gallery entries sharing both identity and
camera with the query are excluded, and queries left without any relevant
gallery entry are skipped (counted, not scored zero).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from protostream.purification import PseudoLabelSet


@dataclass
class RetrievalResult:
    map: float
    rank1: float
    average_precisions: list[float]
    n_queries: int
    n_skipped: int


def average_precision(relevance: np.ndarray) -> float:
    """AP of a ranked boolean relevance list: mean of precision@k over hits."""
    rel = np.asarray(relevance, dtype=bool)
    n_rel = int(rel.sum())
    if n_rel == 0:
        raise ValueError("average_precision: no relevant item in the ranking")
    hits = np.cumsum(rel)
    precision_at = hits / (np.arange(len(rel)) + 1.0)
    return float(precision_at[rel].sum() / n_rel)


def _normalize(feats: np.ndarray) -> np.ndarray:
    feats = np.asarray(feats, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", feats, feats))
    return feats / np.maximum(norms, 1e-12)[:, None]


def retrieve(
    query_feats: np.ndarray,
    query_ids: np.ndarray,
    query_cams: np.ndarray,
    gallery_feats: np.ndarray,
    gallery_ids: np.ndarray,
    gallery_cams: np.ndarray,
) -> RetrievalResult:
    """Rank the gallery for every query and aggregate mAP / Rank-1."""
    if len(gallery_ids) == 0:
        raise ValueError("retrieve: empty gallery")
    q = _normalize(query_feats)
    g = _normalize(gallery_feats)
    sim = q @ g.T
    aps: list[float] = []
    rank1_hits = 0
    skipped = 0
    for i in range(len(q)):
        keep = ~((gallery_ids == query_ids[i]) & (gallery_cams == query_cams[i]))
        if not keep.any():
            skipped += 1
            continue
        order = np.argsort(-sim[i][keep], kind="stable")
        rel = (gallery_ids[keep][order] == query_ids[i])
        if not rel.any():
            skipped += 1
            continue
        aps.append(average_precision(rel))
        rank1_hits += int(rel[0])
    if not aps:
        return RetrievalResult(0.0, 0.0, [], 0, skipped)
    return RetrievalResult(
        map=float(np.mean(aps)),
        rank1=rank1_hits / len(aps),
        average_precisions=aps,
        n_queries=len(aps),
        n_skipped=skipped,
    )


def pseudo_label_quality(assignment: PseudoLabelSet, truth: np.ndarray) -> tuple[float, float, int]:
    """Precision/recall of pseudo-labels over the unlabeled samples.

    Precision is over samples with an available pseudo-label (1.0 when none
    exists), recall over all unlabeled samples. Artificial labels are not
    scored.
    """
    truth = np.asarray(truth, dtype=np.int64)
    if truth.shape != assignment.labels.shape:
        raise ValueError("pseudo_label_quality: truth must cover all samples")
    unlabeled = ~assignment.is_artificial
    avail = unlabeled & assignment.available_mask()
    n_avail = int(avail.sum())
    n_unlabeled = int(unlabeled.sum())
    correct = int(np.sum(assignment.labels[avail] == truth[avail]))
    precision = correct / n_avail if n_avail else 1.0
    recall = correct / n_unlabeled if n_unlabeled else 0.0
    return precision, recall, n_avail


def summarize(seen_results: list[RetrievalResult], unseen_results: list[RetrievalResult]) -> dict:
    """Unweighted averages over seen and over unseen domains."""
    if not seen_results and not unseen_results:
        raise ValueError("summarize: no results to aggregate")

    def avg(results: list[RetrievalResult], attr: str) -> float:
        return float(np.mean([getattr(r, attr) for r in results])) if results else float("nan")

    return {
        "seen_avg_map": avg(seen_results, "map"),
        "seen_avg_rank1": avg(seen_results, "rank1"),
        "unseen_avg_map": avg(unseen_results, "map"),
        "unseen_avg_rank1": avg(unseen_results, "rank1"),
    }


def write_results_csv(path: str | Path, rows: list[dict]) -> None:
    """Results table with columns (stage, domain, split, mAP, rank1, n_queries)."""
    fields = ["stage", "domain", "split", "mAP", "rank1", "n_queries"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in fields})


def dump_features(path: str | Path, feats: np.ndarray, ids: np.ndarray, cams: np.ndarray) -> None:
    """Binary feature dump (magic FEAT, counts, then f64/i64 blocks)."""
    feats = np.ascontiguousarray(feats, dtype="<f8")
    ids = np.ascontiguousarray(ids, dtype="<i8")
    cams = np.ascontiguousarray(cams, dtype="<i8")
    with open(path, "wb") as fh:
        fh.write(b"FEAT")
        fh.write(struct.pack("<II", feats.shape[0], feats.shape[1]))
        fh.write(feats.tobytes())
        fh.write(ids.tobytes())
        fh.write(cams.tobytes())


def load_features(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != b"FEAT":
            raise ValueError(f"{path}: not a feature dump")
        n, d = struct.unpack("<II", fh.read(8))
        feats = np.frombuffer(fh.read(n * d * 8), dtype="<f8").reshape(n, d).copy()
        ids = np.frombuffer(fh.read(n * 8), dtype="<i8").copy()
        cams = np.frombuffer(fh.read(n * 8), dtype="<i8").copy()
    return feats, ids, cams
