"""Small feature extractor: flatten(grid) -> hidden tanh layer -> embedding.

Forward/backward are hand-derived (the gradient checker in ``numerics``
covers them), and parameter fusion implements the end-of-stage blend of the
previous and freshly trained model.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from protostream import numerics


@dataclass
class EncoderParams:
    """Weights of the two-layer extractor; ``linear`` drops the tanh."""

    w1: np.ndarray  # (in_dim, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, out_dim)
    b2: np.ndarray  # (out_dim,)
    linear: bool = False

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]

    def to_list(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def with_arrays(self, arrays: list[np.ndarray]) -> "EncoderParams":
        w1, b1, w2, b2 = arrays
        return replace(self, w1=w1, b1=b1, w2=w2, b2=b2)

    def copy(self) -> "EncoderParams":
        return self.with_arrays([a.copy() for a in self.to_list()])


def init_encoder(in_dim: int, hidden_dim: int, out_dim: int, seed: int, linear: bool = False) -> EncoderParams:
    """Seeded symmetric uniform init, bound sqrt(6 / (fan_in + fan_out))."""
    rng = np.random.default_rng(seed)

    def layer(fan_in: int, fan_out: int) -> np.ndarray:
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=(fan_in, fan_out))

    return EncoderParams(
        w1=layer(in_dim, hidden_dim),
        b1=np.zeros(hidden_dim),
        w2=layer(hidden_dim, out_dim),
        b2=np.zeros(out_dim),
        linear=linear,
    )


def identity_encoder(dim: int) -> EncoderParams:
    """Linear-mode network whose output equals the flattened input."""
    eye = np.eye(dim)
    return EncoderParams(eye.copy(), np.zeros(dim), eye.copy(), np.zeros(dim), linear=True)


def _flatten(grids: np.ndarray, in_dim: int) -> np.ndarray:
    x = np.asarray(grids, dtype=np.float64)
    if x.ndim == 2:
        x = x[None, :, :]
    if x.ndim != 3 or x.shape[1] * x.shape[2] != in_dim:
        raise ValueError(f"encoder: grid shape {x.shape} incompatible with input dim {in_dim}")
    return x.reshape(x.shape[0], in_dim)


def forward(params: EncoderParams, grids: np.ndarray) -> np.ndarray:
    """Features for a batch of grids (n, C, S) -> (n, d); (C, S) -> (d,)."""
    single = np.asarray(grids).ndim == 2
    feats, _ = forward_with_cache(params, grids)
    return feats[0] if single else feats


def forward_with_cache(params: EncoderParams, grids: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Batched forward pass that also returns activations for ``backward``."""
    x = _flatten(grids, params.in_dim)
    z = x @ params.w1 + params.b1
    h = z if params.linear else np.tanh(z)
    f = h @ params.w2 + params.b2
    return f, (x, h)


def backward(params: EncoderParams, cache: tuple, upstream: np.ndarray) -> list[np.ndarray]:
    """Parameter gradients given d(loss)/d(features) for the cached batch.

    Returns [gw1, gb1, gw2, gb2] matching ``EncoderParams.to_list()``.
    """
    x, h = cache
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (x.shape[0], params.out_dim):
        raise ValueError(f"encoder backward: upstream shape {upstream.shape} mismatches batch")
    gw2 = h.T @ upstream
    gb2 = upstream.sum(axis=0)
    dh = upstream @ params.w2.T
    dz = dh if params.linear else dh * (1.0 - h * h)
    gw1 = x.T @ dz
    gb1 = dz.sum(axis=0)
    return [gw1, gb1, gw2, gb2]


def sgd_update(params: EncoderParams, grads: list[np.ndarray], lr: float) -> EncoderParams:
    return params.with_arrays(numerics.sgd_step(params.to_list(), grads, lr))


def fuse(old: EncoderParams, new: EncoderParams, delta: float) -> EncoderParams:
    """Elementwise delta * old + (1 - delta) * new; delta=1 keeps the old model."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError("fuse: delta must lie in [0, 1]")
    if old.linear != new.linear or any(a.shape != b.shape for a, b in zip(old.to_list(), new.to_list())):
        raise ValueError("fuse: parameter shapes differ")
    fused = [delta * a + (1.0 - delta) * b for a, b in zip(old.to_list(), new.to_list())]
    return old.with_arrays(fused)
