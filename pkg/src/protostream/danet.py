"""Distribution alignment for cross-domain feature reuse.

A tiny encoder-decoder is trained to undo channel-statistics restyling: each
training input is re-drawn to a random per-channel mean/std and the network
must reconstruct the original under an L1 loss. At the next stage the frozen
network maps new-domain observations toward the old domain's distribution so
the previous model's features cluster sensibly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from protostream import numerics

log = logging.getLogger("protostream.danet")

# channels with std below this carry no style and pass through unchanged
_FLAT_STD = 1e-8


@dataclass
class ChannelStats:
    """Per-channel mean and population standard deviation."""

    means: np.ndarray
    stds: np.ndarray


@dataclass
class DanetConfig:
    bottleneck: int = 0  # 0 -> C*S // 2
    epochs: int = 30
    lr: float = 0.05
    lr_decay: float = 1.0  # per-epoch multiplier; 1.0 keeps the rate constant
    batch_size: int = 32
    min_std_scale: float = 0.05


@dataclass
class DanetParams:
    w_enc: np.ndarray  # (in_dim, bottleneck)
    b_enc: np.ndarray
    w_dec: np.ndarray  # (bottleneck, in_dim)
    b_dec: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.w_enc.shape[0]

    def to_list(self) -> list[np.ndarray]:
        return [self.w_enc, self.b_enc, self.w_dec, self.b_dec]

    def with_arrays(self, arrays: list[np.ndarray]) -> "DanetParams":
        return DanetParams(*arrays)


def channel_stats(grid: np.ndarray) -> ChannelStats:
    """Sample mean and population std over the positions of each channel."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[1] < 1:
        raise ValueError("channel_stats: expected a (channels, positions) grid")
    return ChannelStats(means=grid.mean(axis=1), stds=grid.std(axis=1))


def sample_style(stats: ChannelStats, rng, min_std_scale: float = 0.05) -> ChannelStats:
    """Draw a new per-channel style around the observed one.

    New means follow N(mu, sigma^2) and new stds N(sigma, sigma^2); std draws
    are clamped to ``min_std_scale * sigma`` so a rescale never collapses or
    flips sign.
    """
    means = np.array([rng.normal(m, s) for m, s in zip(stats.means, stats.stds)])
    stds = np.array([rng.normal(s, s) for s in stats.stds])
    stds = np.maximum(stds, min_std_scale * stats.stds)
    return ChannelStats(means=means, stds=stds)


def restyle(grid: np.ndarray, target: ChannelStats) -> np.ndarray:
    """Re-draw a grid's channel statistics toward ``target``.

    Channel c maps x -> (x - mu_c + mu'_c) * (sigma'_c / sigma_c); flat
    channels (sigma ~ 0) are passed through unchanged.
    """
    grid = np.asarray(grid, dtype=np.float64)
    stats = channel_stats(grid)
    out = grid.copy()
    for c in range(grid.shape[0]):
        if stats.stds[c] < _FLAT_STD:
            continue
        out[c] = (grid[c] - stats.means[c] + target.means[c]) * (target.stds[c] / stats.stds[c])
    return out


def style_augment(grid: np.ndarray, rng, min_std_scale: float = 0.05) -> np.ndarray:
    """Random channel-statistics augmentation of one grid."""
    return restyle(grid, sample_style(channel_stats(grid), rng, min_std_scale))


def init_danet(in_dim: int, bottleneck: int, seed: int) -> DanetParams:
    rng = np.random.default_rng(seed)

    def layer(fan_in: int, fan_out: int) -> np.ndarray:
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=(fan_in, fan_out))

    return DanetParams(
        w_enc=layer(in_dim, bottleneck),
        b_enc=np.zeros(bottleneck),
        w_dec=layer(bottleneck, in_dim),
        b_dec=np.zeros(in_dim),
    )


def identity_danet(in_dim: int) -> DanetParams:
    """Full-width network wired to the identity map (test configuration)."""
    eye = np.eye(in_dim)
    return DanetParams(eye.copy(), np.zeros(in_dim), eye.copy(), np.zeros(in_dim))


def reconstruction_loss_and_grads(
    params: DanetParams, originals: np.ndarray, augmented: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Mean absolute reconstruction error and its parameter gradients.

    ``originals``/``augmented`` are flattened batches (n, in_dim); the
    network sees the augmented inputs and is scored against the originals.
    """
    x = np.asarray(augmented, dtype=np.float64)
    target = np.asarray(originals, dtype=np.float64)
    hidden = x @ params.w_enc + params.b_enc
    recon = hidden @ params.w_dec + params.b_dec
    resid = recon - target
    loss = float(np.mean(np.abs(resid)))
    dout = np.sign(resid) / resid.size
    gw_dec = hidden.T @ dout
    gb_dec = dout.sum(axis=0)
    dhid = dout @ params.w_dec.T
    gw_enc = x.T @ dhid
    gb_enc = dhid.sum(axis=0)
    return loss, [gw_enc, gb_enc, gw_dec, gb_dec]


def align(params: DanetParams, grids: np.ndarray) -> np.ndarray:
    """Forward the trained network over grids; shape is preserved."""
    grids = np.asarray(grids, dtype=np.float64)
    single = grids.ndim == 2
    batch = grids[None] if single else grids
    n, c, s = batch.shape
    if c * s != params.in_dim:
        raise ValueError(f"align: grid shape {batch.shape[1:]} incompatible with dim {params.in_dim}")
    flat = batch.reshape(n, c * s)
    out = (flat @ params.w_enc + params.b_enc) @ params.w_dec + params.b_dec
    out = out.reshape(n, c, s)
    return out[0] if single else out


def train_danet(
    grids: np.ndarray, cfg: DanetConfig, seed: int
) -> tuple[DanetParams, list[float]]:
    """Fit the alignment network on one stage's observations.

    Minimizes the L1 error between each grid and the reconstruction of its
    style-augmented copy via seeded minibatch SGD. Returns the trained
    parameters and the per-epoch mean loss curve (empty for zero epochs).
    """
    grids = np.asarray(grids, dtype=np.float64)
    if grids.ndim != 3 or grids.shape[0] == 0:
        raise ValueError("train_danet: expected a non-empty (n, C, S) array")
    n, c, s = grids.shape
    in_dim = c * s
    bottleneck = cfg.bottleneck if cfg.bottleneck > 0 else max(1, in_dim // 2)
    rng = np.random.default_rng(seed)
    params = init_danet(in_dim, bottleneck, seed=int(rng.integers(2**31)))
    history: list[float] = []
    flat_orig = grids.reshape(n, in_dim)
    lr = cfg.lr
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            aug = np.stack([style_augment(grids[i], rng, cfg.min_std_scale) for i in idx])
            loss, grads = reconstruction_loss_and_grads(
                params, flat_orig[idx], aug.reshape(len(idx), in_dim)
            )
            if not np.isfinite(loss):
                raise FloatingPointError(f"train_danet: non-finite loss at epoch {epoch}")
            params = params.with_arrays(numerics.sgd_step(params.to_list(), grads, lr))
            losses.append(loss)
        history.append(float(np.mean(losses)))
        lr *= cfg.lr_decay
        log.debug("danet epoch %d mean L1 %.6f", epoch, history[-1])
    return params, history
