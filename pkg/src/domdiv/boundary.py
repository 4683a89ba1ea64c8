"""Per-class acceptance thresholds: bootstrap initialisation and K-S shrinking."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .errors import ConfigError, EmptyInputError


@dataclass(frozen=True)
class BootstrapConfig:
    """Bootstrap settings.

    ``n_resamples`` is the size of each resample (it also fixes the quantile
    index). ``n_repeats`` is the number of resamples averaged; ``None`` means
    the same as ``n_resamples``. ``n_resamples=None`` uses the sample size.
    """

    n_resamples: int | None = None
    alpha: float = 0.05
    rng_seed: int = 0
    n_repeats: int | None = None

    def __post_init__(self):
        if self.n_resamples is not None and self.n_resamples < 1:
            raise ConfigError("n_resamples must be >= 1")
        if self.n_repeats is not None and self.n_repeats < 1:
            raise ConfigError("n_repeats must be >= 1")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class ShrinkConfig:
    step_fraction: float = 0.05
    max_steps: int = 20
    min_samples: int = 5

    def __post_init__(self):
        if not 0 < self.step_fraction < 1:
            raise ConfigError("step_fraction must be in (0, 1)")
        if self.max_steps < 0:
            raise ConfigError("max_steps must be >= 0")
        if self.min_samples < 1:
            raise ConfigError("min_samples must be >= 1")


@dataclass(frozen=True)
class KsResult:
    statistic: float
    critical_value: float
    reject: bool
    n_train: int
    n_test: int


@dataclass(frozen=True)
class ClassBoundary:
    """Outcome of the boundary estimation for one seen class.

    ``initial_delta`` is the acceptance threshold used to decide whether any
    class claims an instance at all; ``delta`` is the threshold after
    shrinking. ``ks_applied`` is False when the K-S refinement was switched
    off, in which case every accepted instance stays known.
    """

    class_id: str
    delta: float
    ks_accepted: bool
    shrink_steps: int
    final_accept_set: tuple = ()
    uncertain_set: tuple = ()
    initial_delta: float | None = None
    ks_applied: bool = True
    history: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.initial_delta is None:
            object.__setattr__(self, "initial_delta", self.delta)
        if set(self.final_accept_set) & set(self.uncertain_set):
            raise ValueError("accept and uncertain sets overlap")
        if not math.isfinite(self.delta):
            raise ValueError("delta must be finite")


def quantile_index(alpha: float, n: int) -> int:
    """1-based order statistic ``max(Round[alpha * n], 1)``, rounding half up."""
    r = (Decimal(repr(float(alpha))) * n).to_integral_value(rounding=ROUND_HALF_UP)
    return max(int(r), 1)


def bootstrap_threshold(train_scores, cfg: BootstrapConfig, *, chunk=1 << 20) -> float:
    """Mean of bootstrapped lower ``alpha`` quantiles of the training scores."""
    z = np.asarray(train_scores, dtype=np.float64).ravel()
    if z.size == 0:
        raise EmptyInputError("bootstrap needs at least one training score")
    n = cfg.n_resamples or z.size
    reps = cfg.n_repeats or n
    k = quantile_index(cfg.alpha, n) - 1
    rng = np.random.default_rng(cfg.rng_seed)
    rows_per_chunk = max(1, chunk // n)
    total = 0.0
    done = 0
    while done < reps:
        m = min(rows_per_chunk, reps - done)
        draws = z[rng.integers(0, z.size, size=(m, n))]
        total += np.partition(draws, k, axis=1)[:, k].sum()
        done += m
    delta = total / reps
    # float summation can nudge a constant sample off its value
    return float(min(max(delta, z.min()), z.max()))


def openness(n_train_classes: int, n_test_classes: int, n_target_classes: int) -> float:
    """How open a recognition problem is: ``1 - sqrt(2 T / (S + G))``."""
    if min(n_train_classes, n_test_classes, n_target_classes) < 1:
        raise ConfigError("class counts must be positive")
    return 1.0 - math.sqrt(2.0 * n_train_classes / (n_test_classes + n_target_classes))


def wsvm_delta(n_seen: int, n_unseen: int) -> float:
    """Conventional fixed W-SVM threshold, half the openness of the task."""
    n_all = n_seen + n_unseen
    return max(0.0, 0.5 * openness(n_seen, n_all, n_all))


def ecdf(sample):
    """Right-continuous empirical CDF of ``sample`` as a vectorised callable."""
    s = np.sort(np.asarray(sample, dtype=np.float64).ravel())
    if s.size == 0:
        raise EmptyInputError("ecdf of an empty sample")

    def F(z):
        out = np.searchsorted(s, np.asarray(z, dtype=np.float64), side="right") / s.size
        return out if np.ndim(out) else float(out)

    return F


def ks_critical_value(n_train: int, n_test: int, alpha: float) -> float:
    """Asymptotic two-sample rejection bound at significance ``alpha``."""
    return math.sqrt(-(n_train + n_test) / (2.0 * n_train * n_test) * math.log(alpha / 2.0))


def ks_statistic(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptyInputError("K-S test needs two non-empty samples")
    grid = np.concatenate([a, b])
    return float(np.max(np.abs(ecdf(a)(grid) - ecdf(b)(grid))))


def ks_two_sample(tr_scores, te_scores, alpha: float) -> KsResult:
    k = ks_statistic(tr_scores, te_scores)
    n_tr, n_te = np.size(tr_scores), np.size(te_scores)
    crit = ks_critical_value(n_tr, n_te, alpha)
    return KsResult(k, crit, bool(k > crit), int(n_tr), int(n_te))


def shrink_boundary(
    class_id,
    train_scores,
    accepted_test: Sequence[tuple],
    alpha: float,
    shrink_cfg: ShrinkConfig = ShrinkConfig(),
    delta: float | None = None,
) -> ClassBoundary:
    """Shrink a class's known region until train and test statistics agree.

    ``accepted_test`` holds ``(instance_id, value)`` pairs currently claimed
    by the class; ``train_scores`` is the reference sample and stays fixed
    for every test. On rejection the lowest ``step_fraction`` of the accepted
    test instances (at least one) move to the uncertain set and the threshold
    rises to the smallest survivor. If the loop runs out of steps or
    instances, every accepted instance of the class ends up uncertain.
    Samples smaller than ``min_samples`` are not tested and also go wholly
    uncertain.
    """
    train = np.sort(np.asarray(train_scores, dtype=np.float64).ravel())
    if train.size == 0:
        raise EmptyInputError("shrink_boundary needs training scores")
    items = sorted(accepted_test, key=lambda p: (p[1], str(p[0])))
    ids = [str(i) for i, _ in items]
    stats = np.array([m for _, m in items], dtype=np.float64)
    start_delta = float(delta) if delta is not None else float(train[0])

    if not ids:
        return ClassBoundary(str(class_id), start_delta, True, 0,
                             initial_delta=start_delta)

    cur_delta = start_delta
    lo = 0
    history = []
    steps = 0
    while True:
        te = stats[lo:]
        if train.size < shrink_cfg.min_samples or te.size < shrink_cfg.min_samples:
            accepted = False
            break
        res = ks_two_sample(train, te, alpha)
        history.append((cur_delta, res))
        if not res.reject:
            accepted = True
            break
        if steps >= shrink_cfg.max_steps:
            accepted = False
            break
        drop = max(1, int(math.floor(shrink_cfg.step_fraction * te.size)))
        lo += drop
        steps += 1
        if lo >= len(ids):
            accepted = False
            break
        cur_delta = max(cur_delta, float(stats[lo]))

    if accepted:
        return ClassBoundary(str(class_id), cur_delta, True, steps,
                             tuple(ids[lo:]), tuple(ids[:lo]),
                             initial_delta=start_delta, history=tuple(history))
    return ClassBoundary(str(class_id), cur_delta, False, steps,
                         (), tuple(ids), initial_delta=start_delta,
                         history=tuple(history))


def accept_all(class_id, accepted_test, delta: float) -> ClassBoundary:
    """Boundary with the K-S step disabled: every claimed instance stays known."""
    ids = tuple(str(i) for i, _ in accepted_test)
    return ClassBoundary(str(class_id), float(delta), True, 0, ids, (),
                         initial_delta=float(delta), ks_applied=False)
