"""Extreme-value calibration of classifier scores.

The positive lower tail of each class is modelled with a Weibull CDF, the
upper tail of the other classes' scores with a reverse Weibull. Negative-tail
parameters live on *negated* scores: the top negative scores become the bottom
of ``-z`` and get an ordinary Weibull fit, so ``rG = 1 - G`` holds exactly
and the rG factor rises towards 1 as ``z`` climbs past the negative maxima.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSamplesError, NonConvergenceError, NumericalError

MIN_TAIL_SAMPLES = 10
GRAD_TOL = 1e-8
MAX_ITER = 200


@dataclass(frozen=True)
class WeibullParams:
    scale: float
    location: float
    shape: float

    def __post_init__(self):
        for name in ("scale", "location", "shape"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"Weibull scale must be > 0, got {self.scale}")
        if not (self.shape > 0 and math.isfinite(self.shape)):
            raise ValueError(f"Weibull shape must be > 0, got {self.shape}")
        if not math.isfinite(self.location):
            raise ValueError("Weibull location must be finite")

    def as_dict(self):
        return {"scale": self.scale, "location": self.location, "shape": self.shape}


def weibull_cdf(z, params: WeibullParams):
    """``1 - exp(-((z - loc)/scale)**shape)`` for ``z > loc``, else 0."""
    z = np.asarray(z, dtype=np.float64)
    t = np.maximum(z - params.location, 0.0) / params.scale
    out = -np.expm1(-(t ** params.shape))
    return out if out.ndim else float(out)


def reverse_weibull_cdf(z, params: WeibullParams):
    """Complement of :func:`weibull_cdf`; exactly 1 for ``z <= loc``."""
    z = np.asarray(z, dtype=np.float64)
    t = np.maximum(z - params.location, 0.0) / params.scale
    out = np.exp(-(t ** params.shape))
    return out if out.ndim else float(out)


def _profile_score(k, logx):
    """Derivative of the shape profile log-likelihood (divided by n) and its slope.

    ``logx`` holds log of the shifted sample normalized so that max is 0,
    which keeps ``x**k`` in (0, 1].
    """
    w = np.exp(k * logx)
    s0 = w.sum()
    m1 = (w * logx).sum() / s0
    m2 = (w * logx * logx).sum() / s0
    g = 1.0 / k + logx.mean() - m1
    dg = -1.0 / (k * k) - (m2 - m1 * m1)
    return g, dg


def fit_weibull(sample, *, return_iterations=False):
    """Maximum-likelihood Weibull fit with the location pinned below the sample.

    The location is ``min(sample) - 1e-6 * range(sample)``; scale and shape
    then follow from the one-dimensional profile likelihood in the shape,
    solved by Newton's method inside a bisection bracket.
    """
    x = np.asarray(sample, dtype=np.float64).ravel()
    if x.size < 2:
        raise InsufficientSamplesError(f"need at least 2 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite value in Weibull sample")
    lo, hi = x.min(), x.max()
    span = hi - lo
    if not span > 0:
        raise NonConvergenceError(
            "degenerate sample with zero variance", iterations=0, last_iterate=None
        )
    location = lo - 1e-6 * span
    shifted = x - location
    logx = np.log(shifted) - math.log(shifted.max())

    # bracket the root: g is strictly decreasing in k
    k_lo, k_hi = 0.5, 2.0
    while _profile_score(k_lo, logx)[0] <= 0:
        k_lo *= 0.5
        if k_lo < 1e-12:
            raise NonConvergenceError("shape bracket collapsed", 0, k_lo)
    while _profile_score(k_hi, logx)[0] >= 0:
        k_hi *= 2.0
        if k_hi > 1e8:
            raise NonConvergenceError("shape bracket diverged", 0, k_hi)

    k = 1.0 if k_lo < 1.0 < k_hi else 0.5 * (k_lo + k_hi)
    for it in range(1, MAX_ITER + 1):
        g, dg = _profile_score(k, logx)
        if abs(g) < GRAD_TOL:
            break
        if g > 0:
            k_lo = k
        else:
            k_hi = k
        step = k - g / dg
        k = step if k_lo < step < k_hi else 0.5 * (k_lo + k_hi)
    else:
        raise NonConvergenceError(
            f"Weibull MLE did not converge in {MAX_ITER} iterations (|g|={abs(g):.3g})",
            iterations=MAX_ITER,
            last_iterate=k,
        )

    scale_unit = np.exp(k * logx).mean() ** (1.0 / k)
    params = WeibullParams(scale=scale_unit * shifted.max(), location=location, shape=k)
    return (params, it) if return_iterations else params


def _tail(values, fraction, lowest):
    if not 0 < fraction <= 1:
        raise ValueError(f"tail_fraction must be in (0, 1], got {fraction}")
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = int(math.ceil(fraction * v.size))
    return v[:n] if lowest else v[v.size - n:]


def fit_evt(scores_pos, scores_neg, tail_fraction=0.5):
    """Fit the (positive, negative) tail models for one class.

    Returns ``(pos, neg)`` WeibullParams. ``pos`` describes the lowest
    ``tail_fraction`` of the class's own scores. ``neg`` is fitted to the
    negated highest ``tail_fraction`` of the other classes' scores.
    """
    pos_tail = _tail(scores_pos, tail_fraction, lowest=True)
    neg_tail = -_tail(scores_neg, tail_fraction, lowest=False)
    for name, tail in (("positive", pos_tail), ("negative", neg_tail)):
        if tail.size < MIN_TAIL_SAMPLES:
            raise InsufficientSamplesError(
                f"{name} tail has {tail.size} samples, need >= {MIN_TAIL_SAMPLES}"
            )
    return fit_weibull(pos_tail), fit_weibull(neg_tail)


def wsvm_statistic(z, pos: WeibullParams, neg: WeibullParams):
    """Calibrated membership ``P_rG(not E2 | z) * P_G(E1 | z)``.

    ``neg`` is on the negated-score axis, so the rG factor is evaluated at
    ``-z``.
    """
    z = np.asarray(z, dtype=np.float64)
    return reverse_weibull_cdf(-z, neg) * weibull_cdf(z, pos)


@dataclass(frozen=True)
class EvtModel:
    """Per-class tail models, aligned with ``class_ids``."""

    class_ids: tuple
    positive: tuple
    negative: tuple
    tail_fraction: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "class_ids", tuple(self.class_ids))
        object.__setattr__(self, "positive", tuple(self.positive))
        object.__setattr__(self, "negative", tuple(self.negative))
        if not len(self.class_ids) == len(self.positive) == len(self.negative):
            raise ValueError("EvtModel fields have mismatched lengths")

    def statistics(self, scores) -> np.ndarray:
        """m-statistics for a (n, n_classes) raw score matrix."""
        scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
        if scores.shape[1] != len(self.class_ids):
            raise ValueError(
                f"score matrix has {scores.shape[1]} columns, model has {len(self.class_ids)} classes"
            )
        out = np.empty_like(scores)
        for j, (p, q) in enumerate(zip(self.positive, self.negative)):
            out[:, j] = wsvm_statistic(scores[:, j], p, q)
        return out

    def to_dict(self):
        return {
            "class_ids": list(self.class_ids),
            "tail_fraction": self.tail_fraction,
            "positive": [p.as_dict() for p in self.positive],
            "negative": [p.as_dict() for p in self.negative],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["class_ids"],
            [WeibullParams(**p) for p in d["positive"]],
            [WeibullParams(**p) for p in d["negative"]],
            d["tail_fraction"],
        )


def fit_evt_model(scores, labels, class_ids, tail_fraction=0.5) -> EvtModel:
    """Fit every class from a (n, n_classes) score matrix and integer labels."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos, neg = [], []
    for j, _ in enumerate(class_ids):
        p, q = fit_evt(scores[labels == j, j], scores[labels != j, j], tail_fraction)
        pos.append(p)
        neg.append(q)
    return EvtModel(class_ids, pos, neg, tail_fraction)
