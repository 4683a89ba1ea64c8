"""Recognition metrics for the open-set and generalized zero-shot tasks."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import asdict, dataclass, field

from .embedding import NOVEL
from .errors import CoverageError


def harmonic_mean(a: float, b: float) -> float:
    """``2ab / (a + b)``, and 0 when both are 0. Unit-agnostic (fractions or %)."""
    if a < 0 or b < 0:
        raise ValueError("harmonic_mean expects non-negative inputs")
    s = a + b
    return 0.0 if s == 0 else 2.0 * a * b / s


@dataclass(frozen=True)
class GzslReport:
    acc_u_to_t: float
    acc_s_to_t: float
    H: float
    domain_counts: dict = field(default_factory=dict)
    n_seen_instances: int = 0
    n_unseen_instances: int = 0
    averaging: str = "micro"

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class OslReport:
    seen_class_accuracy: float
    unseen_prediction_accuracy: float
    F1: float
    domain_counts: dict = field(default_factory=dict)
    n_seen_instances: int = 0
    n_unseen_instances: int = 0
    averaging: str = "micro"

    def to_dict(self):
        return asdict(self)


def _accuracy(hits, truths, per_class):
    """Micro: fraction of hits. Per-class: mean of per-class hit rates."""
    if not hits:
        return 0.0
    if not per_class:
        return sum(hits) / len(hits)
    by_class = {}
    for h, t in zip(hits, truths):
        by_class.setdefault(t, []).append(h)
    return sum(sum(v) / len(v) for v in by_class.values()) / len(by_class)


def _check_coverage(predictions, ground_truth):
    missing = [i for i in ground_truth if i not in predictions]
    if missing:
        raise CoverageError(f"{len(missing)} test instance(s) lack a prediction, e.g. {missing[0]!r}")


def evaluate_gzsl(predictions: Mapping, ground_truth: Mapping, split, per_class=False,
                  domain_counts=None) -> GzslReport:
    """Top-1 accuracy on unseen-class (U->T) and seen-class (S->T) test
    instances, each over the full seen + unseen candidate pool, and their
    harmonic mean."""
    _check_coverage(predictions, ground_truth)
    seen = set(split.seen)
    s_hits, s_truth, u_hits, u_truth = [], [], [], []
    for iid, truth in ground_truth.items():
        hit = predictions[iid] == truth
        if truth in seen:
            s_hits.append(hit)
            s_truth.append(truth)
        else:
            u_hits.append(hit)
            u_truth.append(truth)
    acc_s = _accuracy(s_hits, s_truth, per_class)
    acc_u = _accuracy(u_hits, u_truth, per_class)
    return GzslReport(acc_u, acc_s, harmonic_mean(acc_u, acc_s), dict(domain_counts or {}),
                      len(s_hits), len(u_hits), "per-class" if per_class else "micro")


def evaluate_osl(predictions: Mapping, ground_truth: Mapping, split, per_class=False,
                 domain_counts=None) -> OslReport:
    """Seen instances count when labelled with their exact class, unseen ones
    when labelled ``novel``; F1 is the harmonic mean of the two rates."""
    _check_coverage(predictions, ground_truth)
    seen = set(split.seen)
    s_hits, s_truth, u_hits, u_truth = [], [], [], []
    for iid, truth in ground_truth.items():
        pred = predictions[iid]
        if truth in seen:
            s_hits.append(pred == truth)
            s_truth.append(truth)
        else:
            u_hits.append(pred == NOVEL)
            u_truth.append(truth)
    acc_s = _accuracy(s_hits, s_truth, per_class)
    acc_u = _accuracy(u_hits, u_truth, per_class)
    return OslReport(acc_s, acc_u, harmonic_mean(acc_s, acc_u), dict(domain_counts or {}),
                     len(s_hits), len(u_hits), "per-class" if per_class else "micro")


def percent(x: float) -> float:
    """Presentation rounding: percent with one decimal."""
    return round(100.0 * x, 1)
