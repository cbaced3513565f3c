"""Shared dense-vector math: probability transforms, the SGD step, and the
central-difference gradient checker used to validate every hand-derived
gradient in this package.

All public functions operate on float64 NumPy arrays and never let NaN/Inf
escape: invalid inputs raise ``ValueError`` instead.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

ParamList = list[np.ndarray]


def softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along ``axis``.

    The maximum is subtracted before exponentiation, so arbitrarily large
    scores do not overflow. Output rows sum to 1.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("softmax: empty score vector")
    if not np.all(np.isfinite(scores)):
        raise ValueError("softmax: scores must be finite")
    shifted = scores - np.max(scores, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def kl_divergence(p: np.ndarray, q: np.ndarray, eps: float = 1e-12) -> float:
    """Kullback-Leibler divergence sum(p * ln(p / q)).

    ``q`` entries are floored at ``eps`` before the log so the result stays
    finite when the second distribution assigns near-zero mass; 0 * ln(0)
    is taken as 0 by convention.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"kl_divergence: length mismatch {p.shape} vs {q.shape}")
    q = np.maximum(q, eps)
    terms = np.where(p > 0.0, p * np.log(np.maximum(p, eps) / q), 0.0)
    return float(np.sum(terms))


def sgd_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float) -> ParamList:
    """One plain gradient-descent step: each parameter minus lr * gradient.

    Returns new arrays; the inputs are not mutated. ``lr`` = 0 is the
    identity.
    """
    if lr < 0:
        raise ValueError("sgd_step: negative learning rate")
    if len(params) != len(grads):
        raise ValueError("sgd_step: parameter/gradient count mismatch")
    out: ParamList = []
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"sgd_step: shape mismatch {p.shape} vs {g.shape}")
        out.append(p - lr * g)
    return out


def finite_difference_check(
    fn: Callable[[ParamList], tuple[float, Sequence[np.ndarray]]],
    params: Sequence[np.ndarray],
    h: float = 1e-5,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``fn(params)`` must return ``(loss, grads)`` with one gradient array per
    parameter array. Every coordinate is perturbed by +/- h and the numeric
    slope (f(x+h) - f(x-h)) / 2h is compared against the analytic entry with
    denominator max(|analytic|, |numeric|, 1e-8).
    """
    if h <= 0:
        raise ValueError("finite_difference_check: h must be positive")
    params = [np.array(p, dtype=np.float64) for p in params]
    _, analytic = fn(params)
    analytic = [np.asarray(g, dtype=np.float64) for g in analytic]
    worst = 0.0
    for k, p in enumerate(params):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            saved = p[idx]
            p[idx] = saved + h
            up, _ = fn(params)
            p[idx] = saved - h
            down, _ = fn(params)
            p[idx] = saved
            numeric = (up - down) / (2.0 * h)
            a = analytic[k][idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
