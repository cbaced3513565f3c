"""Synthetic sequential identity-stream benchmark at desk scale.

Each domain renders Gaussian identity signatures through a shared linear map
into a (channels x positions) grid, applies a per-domain affine channel
style, and adds isotropic noise. Identity ids are globally disjoint across
domains. Seen domains carry a partially labeled training split plus a
query/gallery test split; unseen domains are test-only.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np


class ConfigError(ValueError):
    """Invalid stream configuration; the message names the offending field."""


@dataclass
class Observation:
    """A single raw grid with its hidden identity, domain, and camera view."""

    grid: np.ndarray  # (C, S)
    identity: int
    domain: int
    camera: int


@dataclass
class DomainSpec:
    """Style and population parameters of one synthetic domain."""

    channel_means: np.ndarray
    channel_stds: np.ndarray
    identity_count: int = 40
    samples_per_identity: tuple[int, int] = (16, 24)
    noise_std: float | None = None  # None -> noise_scale x inter-identity spacing
    noise_scale: float = 0.5

    def validate(self, name: str, channels: int) -> None:
        means = np.asarray(self.channel_means, dtype=np.float64)
        stds = np.asarray(self.channel_stds, dtype=np.float64)
        if means.shape != (channels,):
            raise ConfigError(f"{name}.channel_means: expected {channels} entries")
        if stds.shape != (channels,) or np.any(stds <= 0):
            raise ConfigError(f"{name}.channel_stds: expected {channels} positive entries")
        if self.identity_count < 2:
            raise ConfigError(f"{name}.identity_count: must be >= 2")
        lo, hi = self.samples_per_identity
        if lo < 2 or hi < lo:
            raise ConfigError(f"{name}.samples_per_identity: need 2 <= lo <= hi")
        if self.noise_std is not None and self.noise_std <= 0:
            raise ConfigError(f"{name}.noise_std: must be positive when given")
        if self.noise_scale <= 0:
            raise ConfigError(f"{name}.noise_scale: must be positive")


@dataclass
class StreamConfig:
    seen_domains: list[DomainSpec]
    unseen_domains: list[DomainSpec] = field(default_factory=list)
    label_rate: float = 0.1
    seed: int = 0
    feature_grid: tuple[int, int] = (4, 16)

    def validate(self) -> None:
        c, s = self.feature_grid
        if c < 1 or s < 2:
            raise ConfigError("feature_grid: need channels >= 1 and positions >= 2")
        if not self.seen_domains:
            raise ConfigError("seen_domains: at least one domain required")
        if not 0.0 < self.label_rate <= 1.0:
            raise ConfigError("label_rate: must lie in (0, 1]")
        for i, spec in enumerate(self.seen_domains):
            spec.validate(f"seen_domains[{i}]", c)
        for i, spec in enumerate(self.unseen_domains):
            spec.validate(f"unseen_domains[{i}]", c)


@dataclass
class EvalSplit:
    grids: np.ndarray  # (n, C, S)
    identities: np.ndarray
    cameras: np.ndarray

    @property
    def n(self) -> int:
        return self.grids.shape[0]


@dataclass
class SemiDataset:
    """One seen stage: training observations with a partial-label split."""

    stage: int
    domain_id: int
    grids: np.ndarray
    identities: np.ndarray  # hidden ground truth; visible only on labeled rows
    cameras: np.ndarray
    labeled_indices: np.ndarray
    unlabeled_indices: np.ndarray
    query: EvalSplit
    gallery: EvalSplit

    @property
    def n(self) -> int:
        return self.grids.shape[0]

    @property
    def labeled_labels(self) -> np.ndarray:
        return self.identities[self.labeled_indices]

    def artificial_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.labeled_indices] = True
        return mask


@dataclass
class TestDataset:
    """A test-only domain: query/gallery splits without a training part."""

    domain_id: int
    query: EvalSplit
    gallery: EvalSplit


def apply_domain_style(obs: Observation, spec: DomainSpec) -> Observation:
    """Affine channel style: channel c is scaled by stds[c], shifted by means[c]."""
    means = np.asarray(spec.channel_means, dtype=np.float64)
    stds = np.asarray(spec.channel_stds, dtype=np.float64)
    styled = obs.grid * stds[:, None] + means[:, None]
    return replace(obs, grid=styled)


def _style_grids(grids: np.ndarray, spec: DomainSpec) -> np.ndarray:
    means = np.asarray(spec.channel_means, dtype=np.float64)
    stds = np.asarray(spec.channel_stds, dtype=np.float64)
    return grids * stds[None, :, None] + means[None, :, None]


def split_labels(dataset: SemiDataset, rate: float, seed: int) -> SemiDataset:
    """Label two samples of every identity, then random extras up to ``rate``.

    The two forced samples per identity are never unlabeled; when the forced
    minimum already exceeds the requested rate the dataset keeps the forced
    labeling and a warning is recorded.
    """
    if not 0.0 < rate <= 1.0:
        raise ValueError("split_labels: rate must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    identities = dataset.identities
    n = len(identities)
    labeled: list[int] = []
    for ident in np.unique(identities):
        members = np.nonzero(identities == ident)[0]
        if len(members) < 2:
            raise ValueError(f"split_labels: identity {ident} has fewer than 2 samples")
        picked = rng.choice(members, size=2, replace=False)
        labeled.extend(int(i) for i in picked)
    target = int(round(rate * n))
    if target < len(labeled):
        warnings.warn(
            f"label rate {rate:.3f} is below the two-per-identity minimum "
            f"({len(labeled)}/{n}); keeping the forced minimum",
            stacklevel=2,
        )
    else:
        forced = set(labeled)
        remaining = np.array([i for i in range(n) if i not in forced], dtype=np.int64)
        extra = target - len(labeled)
        if extra > 0 and len(remaining) > 0:
            extra = min(extra, len(remaining))
            labeled.extend(int(i) for i in rng.choice(remaining, size=extra, replace=False))
    labeled_idx = np.array(sorted(labeled), dtype=np.int64)
    mask = np.zeros(n, dtype=bool)
    mask[labeled_idx] = True
    unlabeled_idx = np.nonzero(~mask)[0].astype(np.int64)
    return replace(dataset, labeled_indices=labeled_idx, unlabeled_indices=unlabeled_idx)


def _render_identities(rng, count: int, render: np.ndarray, channels: int, positions: int) -> np.ndarray:
    latent = rng.standard_normal((count, render.shape[0]))
    return (latent @ render).reshape(count, channels, positions)


def _noise_std_for(styled_means: np.ndarray, spec: DomainSpec) -> float:
    """Per-coordinate noise std giving a noise vector of noise_scale x the
    mean inter-identity distance (unless the spec pins an explicit value)."""
    if spec.noise_std is not None:
        return float(spec.noise_std)
    flat = styled_means.reshape(styled_means.shape[0], -1)
    diffs = flat[:, None, :] - flat[None, :, :]
    dists = np.sqrt((diffs**2).sum(axis=2))
    iu = np.triu_indices(len(flat), k=1)
    spacing = float(dists[iu].mean())
    return spec.noise_scale * spacing / np.sqrt(flat.shape[1])


# query/gallery samples reserved per identity in each test split
_EVAL_PER_SPLIT = 4


def _generate_domain(
    spec: DomainSpec,
    domain_id: int,
    first_identity: int,
    base_render: np.ndarray,
    channels: int,
    positions: int,
    seed_seq: np.random.SeedSequence,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, EvalSplit, EvalSplit, int]:
    """Returns train grids/ids/cams, the query and gallery splits, and the
    next free identity id."""
    rng = np.random.default_rng(seed_seq)
    # every domain uses the shared base render with its own fixed coordinate
    # permutation: the same grid positions carry different latent roles per
    # domain, so later stages genuinely rewire what earlier ones rely on
    render = base_render[:, rng.permutation(base_render.shape[1])]
    base = _render_identities(rng, spec.identity_count, render, channels, positions)
    styled = _style_grids(base, spec)
    noise = _noise_std_for(styled, spec)
    lo, hi = spec.samples_per_identity

    train_g, train_id, train_cam = [], [], []
    q_g, q_id, q_cam = [], [], []
    g_g, g_id, g_cam = [], [], []
    k_eval = _EVAL_PER_SPLIT
    for k in range(spec.identity_count):
        ident = first_identity + k
        n_train = int(rng.integers(lo, hi + 1))
        total = n_train + 2 * k_eval  # query + gallery held out
        samples = styled[k][None, :, :] + rng.normal(0.0, noise, size=(total, channels, positions))
        cams = rng.integers(0, 4, size=n_train)
        train_g.append(samples[:n_train])
        train_id.extend([ident] * n_train)
        train_cam.extend(int(c) for c in cams)
        q_g.append(samples[n_train : n_train + k_eval])
        q_id.extend([ident] * k_eval)
        q_cam.extend([0] * k_eval)
        g_g.append(samples[n_train + k_eval :])
        g_id.extend([ident] * k_eval)
        g_cam.extend([1] * k_eval)

    train = (
        np.concatenate(train_g, axis=0),
        np.array(train_id, dtype=np.int64),
        np.array(train_cam, dtype=np.int64),
    )
    query = EvalSplit(np.concatenate(q_g), np.array(q_id, dtype=np.int64), np.array(q_cam, dtype=np.int64))
    gallery = EvalSplit(np.concatenate(g_g), np.array(g_id, dtype=np.int64), np.array(g_cam, dtype=np.int64))
    return *train, query, gallery, first_identity + spec.identity_count


def generate_stream(config: StreamConfig) -> tuple[list[SemiDataset], list[TestDataset]]:
    """Build the full benchmark deterministically from the config seed."""
    config.validate()
    channels, positions = config.feature_grid
    root = np.random.SeedSequence(config.seed)
    n_domains = len(config.seen_domains) + len(config.unseen_domains)
    render_seq, split_seq, *domain_seqs = root.spawn(n_domains + 2)

    latent_dim = max(1, channels * positions // 2)
    base_render = np.random.default_rng(render_seq).standard_normal((latent_dim, channels * positions))
    base_render /= np.sqrt(latent_dim)

    split_rng = np.random.default_rng(split_seq)
    next_identity = 0
    seen: list[SemiDataset] = []
    for stage, spec in enumerate(config.seen_domains, start=1):
        grids, ids, cams, query, gallery, next_identity = _generate_domain(
            spec, stage - 1, next_identity, base_render, channels, positions, domain_seqs[stage - 1]
        )
        ds = SemiDataset(
            stage=stage,
            domain_id=stage - 1,
            grids=grids,
            identities=ids,
            cameras=cams,
            labeled_indices=np.empty(0, dtype=np.int64),
            unlabeled_indices=np.empty(0, dtype=np.int64),
            query=query,
            gallery=gallery,
        )
        seen.append(split_labels(ds, config.label_rate, seed=int(split_rng.integers(2**31))))

    unseen: list[TestDataset] = []
    offset = len(config.seen_domains)
    for i, spec in enumerate(config.unseen_domains):
        _, _, _, query, gallery, next_identity = _generate_domain(
            spec, offset + i, next_identity, base_render, channels, positions, domain_seqs[offset + i]
        )
        unseen.append(TestDataset(domain_id=offset + i, query=query, gallery=gallery))
    return seen, unseen
