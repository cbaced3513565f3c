"""Lifelong training loop.

Per stage: cluster the new data once under the frozen previous model (after
distribution alignment), then per epoch re-label the unlabeled samples from
the prototypes, cluster under the current model, purify against both
clusterings, and run prototype + triplet (+ structure KL for stages > 1)
minibatch SGD. The stage ends with old/new parameter fusion, alignment
network training, and a checkpoint.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from protostream import clustering, danet, encoder, objectives, purification
from protostream.checkpoint import save_checkpoint
from protostream.clustering import ClusterAssignment, ClusterConfig
from protostream.config import RunConfig, build_stream_config, config_hash
from protostream.datagen import SemiDataset, TestDataset, generate_stream
from protostream.evaluation import RetrievalResult, pseudo_label_quality, retrieve, summarize
from protostream.objectives import Hyperparams, PrototypeBank, UNAVAILABLE

log = logging.getLogger("protostream.trainer")


@dataclass
class AblationFlags:
    no_dkcp: bool = False
    no_npl: bool = False
    no_ls: bool = False
    no_danet: bool = False
    labeled_only: bool = False

    @classmethod
    def from_names(cls, names: list[str]) -> "AblationFlags":
        flags = cls()
        mapping = {
            "no-dkcp": "no_dkcp",
            "no-npl": "no_npl",
            "no-ls": "no_ls",
            "no-danet": "no_danet",
            "labeled-only": "labeled_only",
        }
        for name in names:
            if name not in mapping:
                raise ValueError(f"unknown ablation {name!r}; choose from {sorted(mapping)}")
            setattr(flags, mapping[name], True)
        return flags


@dataclass
class EpochRecord:
    stage: int
    epoch: int
    n_pseudo: int
    pseudo_precision: float
    pseudo_recall: float
    conflicts: int
    skipped_batches: int
    loss_proto: float
    loss_triplet: float
    loss_structure: float


@dataclass
class StageEval:
    after_stage: int
    domain: int
    split: str  # "seen" | "unseen"
    map: float
    rank1: float
    n_queries: int


@dataclass
class RunMetrics:
    epochs: list[EpochRecord] = field(default_factory=list)
    evals: list[StageEval] = field(default_factory=list)


@dataclass
class TrainState:
    """Mutable per-run state; old-stage artifacts are frozen within a stage."""

    params: encoder.EncoderParams
    bank: PrototypeBank | None = None
    old_params: encoder.EncoderParams | None = None
    old_bank: PrototypeBank | None = None
    danet_params: danet.DanetParams | None = None
    old_clusters: ClusterAssignment | None = None
    stage: int = 0


class DivergenceError(RuntimeError):
    pass


def _extract(params: encoder.EncoderParams, grids: np.ndarray) -> np.ndarray:
    return encoder.forward(params, grids)


def _pk_batches(
    rng: np.random.Generator, labels: np.ndarray, available: np.ndarray, p: int, k: int
) -> list[np.ndarray]:
    """PK sampling over available-label samples: p identities x k instances."""
    avail_idx = np.nonzero(available)[0]
    if len(avail_idx) == 0:
        return []
    by_label: dict[int, np.ndarray] = {}
    for lab in np.unique(labels[avail_idx]):
        by_label[int(lab)] = avail_idx[labels[avail_idx] == lab]
    idents = np.array(sorted(by_label), dtype=np.int64)
    n_batches = max(1, int(round(len(avail_idx) / (p * k))))
    batches = []
    for _ in range(n_batches):
        chosen = (
            rng.choice(idents, size=p, replace=False)
            if len(idents) >= p
            else idents.copy()
        )
        rows = []
        for ident in chosen:
            pool = by_label[int(ident)]
            take = rng.choice(pool, size=k, replace=len(pool) < k)
            rows.append(take)
        batches.append(np.concatenate(rows))
    return batches


def _npl_pass(
    feats: np.ndarray,
    bank: PrototypeBank,
    hp: Hyperparams,
    dataset: SemiDataset,
    use_argmax: bool,
) -> purification.PseudoLabelSet:
    artificial = dataset.artificial_mask()
    labeler = objectives.argmax_label_batch if use_argmax else objectives.neighbor_label_batch
    labels, _ = labeler(feats, bank, hp.t_p, artificial, dataset.identities, hp.temperature)
    return purification.PseudoLabelSet(labels, artificial, "npl")


def run_stage(
    state: TrainState,
    dataset: SemiDataset,
    hp: Hyperparams,
    cluster_cfg: ClusterConfig,
    danet_cfg: danet.DanetConfig,
    seed: int,
    ablate: AblationFlags | None = None,
    structure_on_labeled_only: bool = False,
    use_danet: bool = True,
    debug_records: list | None = None,
) -> tuple[TrainState, RunMetrics]:
    """Train one stage end to end and return the advanced state and metrics."""
    ablate = ablate or AblationFlags()
    if dataset.stage != state.stage + 1:
        raise ValueError(f"run_stage: dataset stage {dataset.stage} does not follow state stage {state.stage}")
    if len(dataset.labeled_indices) == 0:
        raise ValueError("run_stage: empty labeled set")
    rng = np.random.default_rng(np.random.SeedSequence([seed, dataset.stage]))
    metrics = RunMetrics()
    first_stage = state.old_params is None

    # old-knowledge clustering, computed once per stage and reused each epoch
    if not first_stage:
        grids = dataset.grids
        if use_danet and not ablate.no_danet and state.danet_params is not None:
            grids = danet.align(state.danet_params, grids)
        old_feats = _extract(state.old_params, grids)
        state.old_clusters = clustering.cluster_features(old_feats, cluster_cfg)
    else:
        state.old_clusters = None

    params = state.params.copy()
    labeled_idx = dataset.labeled_indices
    feats_labeled = _extract(params, dataset.grids[labeled_idx])
    bank = objectives.init_prototypes(feats_labeled, dataset.identities[labeled_idx])

    epochs = hp.epochs_first if first_stage else hp.epochs_later
    alpha = 0.0 if (first_stage or ablate.no_ls) else hp.alpha
    artificial = dataset.artificial_mask()

    for epoch in range(1, epochs + 1):
        feats_all = _extract(params, dataset.grids)
        npl = _npl_pass(feats_all, bank, hp, dataset, use_argmax=ablate.no_npl)
        conflicts = 0
        conf_new = conf_old = None
        if ablate.labeled_only:
            merged = purification.all_unavailable(dataset.identities, artificial, "merged")
        elif ablate.no_dkcp:
            merged = npl.copy("merged")
        else:
            groups = purification.label_groups(npl)
            new_clusters = clustering.cluster_features(feats_all, cluster_cfg)
            new_filtered, conf_new = purification.purify(npl, groups, new_clusters, hp.t_c, "new_filtered")
            if state.old_clusters is not None:
                old_filtered, conf_old = purification.purify(npl, groups, state.old_clusters, hp.t_o, "old_filtered")
            else:
                old_filtered = purification.all_unavailable(dataset.identities, artificial, "old_filtered")
            merged, conflicts = purification.merge_pseudo(old_filtered, new_filtered)

        precision, recall, n_pseudo = pseudo_label_quality(merged, dataset.identities)
        if debug_records is not None:
            debug_records.append(
                _debug_epoch(dataset, epoch, npl, merged, conf_new, conf_old)
            )

        available = merged.available_mask()
        batch_losses = {"proto": [], "tri": [], "struct": []}
        skipped = 0
        for batch in _pk_batches(rng, merged.labels, available, hp.batch_p, hp.batch_k):
            result = _train_step(params, bank, state, batch, dataset, merged, hp, alpha, structure_on_labeled_only)
            if result is None:
                skipped += 1
                continue
            params, bank, losses = result
            for key, value in losses.items():
                batch_losses[key].append(value)
        metrics.epochs.append(
            EpochRecord(
                stage=dataset.stage,
                epoch=epoch,
                n_pseudo=n_pseudo,
                pseudo_precision=precision,
                pseudo_recall=recall,
                conflicts=conflicts,
                skipped_batches=skipped,
                loss_proto=_mean(batch_losses["proto"]),
                loss_triplet=_mean(batch_losses["tri"]),
                loss_structure=_mean(batch_losses["struct"]),
            )
        )

    if not first_stage:
        params = encoder.fuse(state.old_params, params, hp.delta)

    new_danet = None
    if use_danet and not ablate.no_danet:
        new_danet, _ = danet.train_danet(dataset.grids, danet_cfg, seed=int(rng.integers(2**31)))
    state = replace(
        state,
        params=params,
        bank=bank,
        old_params=params.copy(),
        old_bank=bank.copy(),
        danet_params=new_danet,
        old_clusters=None,
        stage=dataset.stage,
    )
    return state, metrics


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else 0.0


def _train_step(
    params: encoder.EncoderParams,
    bank: PrototypeBank,
    state: TrainState,
    batch: np.ndarray,
    dataset: SemiDataset,
    merged: purification.PseudoLabelSet,
    hp: Hyperparams,
    alpha: float,
    structure_on_labeled_only: bool,
):
    """One SGD step over a PK batch; returns None when the batch is skipped."""
    grids = dataset.grids[batch]
    labels = merged.labels[batch]
    rows = np.array([bank.row_of(int(lab)) for lab in labels], dtype=np.int64)
    feats, cache = encoder.forward_with_cache(params, grids)

    loss_p, grad_f_proto, grad_bank = objectives.prototype_loss_batch(feats, rows, bank, hp.temperature)

    if hp.triplet_on_pseudo:
        tri_feats, tri_labels, tri_selector = feats, labels, slice(None)
    else:
        mask = merged.is_artificial[batch]
        tri_feats, tri_labels, tri_selector = feats[mask], labels[mask], mask
    try:
        loss_t, grad_f_tri_local = objectives.batch_hard_triplet(tri_feats, tri_labels, hp.margin)
    except ValueError:
        log.warning("skipping batch at stage %d: no valid triplet anchor", dataset.stage)
        return None
    grad_f_tri = np.zeros_like(feats)
    grad_f_tri[tri_selector] = grad_f_tri_local

    loss_s = 0.0
    grad_f_struct = np.zeros_like(feats)
    if alpha > 0.0 and state.old_params is not None and state.old_bank is not None:
        if structure_on_labeled_only:
            sel = merged.is_artificial[batch]
        else:
            sel = np.ones(len(batch), dtype=bool)
        if sel.any():
            old_feats = _extract(state.old_params, grids[sel])
            loss_s, grad_local = objectives.structure_loss_batch(
                old_feats, feats[sel], state.old_bank, hp.temperature
            )
            grad_f_struct[sel] = grad_local

    total = loss_p + loss_t + alpha * loss_s
    if not np.isfinite(total):
        raise DivergenceError(f"non-finite loss at stage {dataset.stage}: proto={loss_p} tri={loss_t} struct={loss_s}")

    grad_feats = grad_f_proto + grad_f_tri + alpha * grad_f_struct
    grads = encoder.backward(params, cache, grad_feats)
    params = encoder.sgd_update(params, grads, hp.lr)
    bank = PrototypeBank(bank.prototypes - hp.lr * grad_bank, bank.labels)
    return params, bank, {"proto": loss_p, "tri": loss_t, "struct": loss_s}


def _debug_epoch(dataset, epoch, npl, merged, conf_new, conf_old) -> dict:
    unlabeled = np.nonzero(~dataset.artificial_mask())[0]
    rows = []
    for i in unlabeled:
        rows.append(
            {
                "sample": int(i),
                "npl_label": int(npl.labels[i]),
                "lc_new": None if conf_new is None or np.isnan(conf_new[i]) else round(float(conf_new[i]), 6),
                "lc_old": None if conf_old is None or np.isnan(conf_old[i]) else round(float(conf_old[i]), 6),
                "merged_label": int(merged.labels[i]),
                "truth": int(dataset.identities[i]),
            }
        )
    return {"stage": dataset.stage, "epoch": epoch, "samples": rows}


def evaluate_model(
    params: encoder.EncoderParams,
    seen: list[SemiDataset],
    unseen: list[TestDataset],
    after_stage: int,
) -> tuple[list[StageEval], dict]:
    """Retrieval metrics on every seen test split up to ``after_stage`` plus
    all unseen domains."""
    evals: list[StageEval] = []
    seen_results: list[RetrievalResult] = []
    unseen_results: list[RetrievalResult] = []
    for ds in seen[:after_stage]:
        res = _retrieval_for(params, ds.query, ds.gallery)
        seen_results.append(res)
        evals.append(StageEval(after_stage, ds.domain_id, "seen", res.map, res.rank1, res.n_queries))
    for ds in unseen:
        res = _retrieval_for(params, ds.query, ds.gallery)
        unseen_results.append(res)
        evals.append(StageEval(after_stage, ds.domain_id, "unseen", res.map, res.rank1, res.n_queries))
    return evals, summarize(seen_results, unseen_results)


def _retrieval_for(params, query, gallery) -> RetrievalResult:
    qf = _extract(params, query.grids)
    gf = _extract(params, gallery.grids)
    return retrieve(qf, query.identities, query.cameras, gf, gallery.identities, gallery.cameras)


def run_lifelong(
    cfg: RunConfig,
    seen: list[SemiDataset] | None = None,
    unseen: list[TestDataset] | None = None,
    ablate: AblationFlags | None = None,
    checkpoint_dir: str | Path | None = None,
) -> tuple[TrainState, RunMetrics, dict]:
    """All stages in sequence with per-stage evaluation.

    Datasets are generated from the config when not supplied. Returns the
    final state, the accumulated metrics, and the final summary dict.
    """
    ablate = ablate or AblationFlags()
    if seen is None or unseen is None:
        seen, unseen = generate_stream(build_stream_config(cfg))
    channels, positions = seen[0].grids.shape[1], seen[0].grids.shape[2]
    in_dim = channels * positions
    state = TrainState(
        params=encoder.init_encoder(in_dim, cfg.trainer.encoder_hidden, cfg.trainer.encoder_dim, seed=cfg.seed)
    )
    metrics = RunMetrics()
    debug_records: list | None = [] if cfg.trainer.debug_dump else None
    summary: dict = {}
    for ds in seen:
        state, stage_metrics = run_stage(
            state,
            ds,
            cfg.hyperparams,
            cfg.clustering,
            cfg.danet,
            seed=cfg.seed,
            ablate=ablate,
            structure_on_labeled_only=cfg.trainer.structure_on_labeled_only,
            use_danet=cfg.trainer.use_danet,
            debug_records=debug_records,
        )
        metrics.epochs.extend(stage_metrics.epochs)
        evals, summary = evaluate_model(state.params, seen, unseen, after_stage=ds.stage)
        metrics.evals.extend(evals)
        log.info(
            "stage %d done: seen-avg mAP %.4f rank1 %.4f",
            ds.stage,
            summary["seen_avg_map"],
            summary["seen_avg_rank1"],
        )
        if checkpoint_dir is not None:
            path = Path(checkpoint_dir) / f"checkpoint_stage{ds.stage:02d}.spc"
            save_checkpoint(
                path,
                state.params,
                bank=state.bank,
                danet_params=state.danet_params,
                meta={"stage": ds.stage, "config_hash": config_hash(cfg), "seed": cfg.seed},
            )
    if checkpoint_dir is not None and debug_records is not None:
        dump_path = Path(checkpoint_dir) / "purification_debug.jsonl"
        with open(dump_path, "w") as fh:
            for record in debug_records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return state, metrics, summary


def metrics_to_csv_rows(metrics: RunMetrics) -> list[dict]:
    """Flatten epoch and evaluation records into one CSV-ready table."""
    rows: list[dict] = []
    for e in metrics.epochs:
        rows.append(
            {
                "record": "epoch",
                "stage": e.stage,
                "epoch": e.epoch,
                "domain": "",
                "split": "",
                "n_pseudo": e.n_pseudo,
                "pseudo_precision": f"{e.pseudo_precision:.10g}",
                "pseudo_recall": f"{e.pseudo_recall:.10g}",
                "conflicts": e.conflicts,
                "skipped_batches": e.skipped_batches,
                "loss_proto": f"{e.loss_proto:.10g}",
                "loss_triplet": f"{e.loss_triplet:.10g}",
                "loss_structure": f"{e.loss_structure:.10g}",
                "mAP": "",
                "rank1": "",
                "n_queries": "",
            }
        )
    for v in metrics.evals:
        rows.append(
            {
                "record": "eval",
                "stage": v.after_stage,
                "epoch": "",
                "domain": v.domain,
                "split": v.split,
                "n_pseudo": "",
                "pseudo_precision": "",
                "pseudo_recall": "",
                "conflicts": "",
                "skipped_batches": "",
                "loss_proto": "",
                "loss_triplet": "",
                "loss_structure": "",
                "mAP": f"{v.map:.10g}",
                "rank1": f"{v.rank1:.10g}",
                "n_queries": v.n_queries,
            }
        )
    return rows
