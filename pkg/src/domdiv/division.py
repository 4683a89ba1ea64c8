"""Split test instances into known, unknown and uncertain domains."""

from __future__ import annotations

import enum
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from .boundary import ClassBoundary, ShrinkConfig, accept_all, shrink_boundary
from .data import Dataset, PrototypeTable
from .errors import BudgetExhaustedError, DataError, DimensionMismatchError


class Domain(str, enum.Enum):
    KNOWN = "known"
    UNKNOWN = "unknown"
    UNCERTAIN = "uncertain"


@dataclass(frozen=True)
class DomainDecision:
    """Domain verdict for one instance.

    ``candidate_class``/``candidate_score`` come from the raw-score argmax;
    ``m_stats`` holds the calibrated statistic per seen class.
    """

    instance_id: str
    domain: Domain
    candidate_class: str
    candidate_score: float
    m_stats: tuple = ()
    m_argmax_class: str | None = None


@dataclass(frozen=True)
class GeneratedPrototypes:
    vectors: np.ndarray
    epsilon: float

    def __len__(self):
        return self.vectors.shape[0]


def min_pairwise_distance(vectors) -> float:
    V = np.asarray(vectors, dtype=np.float64)
    diff = V[:, None, :] - V[None, :, :]
    d = np.sqrt((diff * diff).sum(-1))
    return float(d[np.triu_indices(V.shape[0], 1)].min())


def generate_osl_prototypes(seen: PrototypeTable, count: int, rng_seed=0, max_attempts=None) -> GeneratedPrototypes:
    """Random stand-ins for unseen-class prototypes in the open-set task.

    Candidates are drawn uniformly from the bounding box of the seen
    prototypes grown by ``2 * eps`` on every side and kept only when they lie
    farther than ``eps`` from every seen prototype, where ``eps`` is the
    smallest distance between two seen prototypes.
    """
    if len(seen) < 2:
        raise DataError("need at least 2 seen prototypes to define the separation radius")
    if count < 0:
        raise ValueError("count must be >= 0")
    S = seen.vectors
    eps = min_pairwise_distance(S)
    if count == 0:
        return GeneratedPrototypes(np.empty((0, seen.width)), eps)
    lo, hi = S.min(axis=0) - 2 * eps, S.max(axis=0) + 2 * eps
    budget = max_attempts if max_attempts is not None else 10_000 * count
    rng = np.random.default_rng(rng_seed)
    kept = []
    attempts = 0
    while len(kept) < count:
        batch = min(max(64, 4 * (count - len(kept))), budget - attempts)
        if batch <= 0:
            raise BudgetExhaustedError(
                f"found {len(kept)} of {count} prototypes in {attempts} draws"
            )
        cand = rng.uniform(lo, hi, size=(batch, seen.width))
        attempts += batch
        d = np.sqrt(((cand[:, None, :] - S[None, :, :]) ** 2).sum(-1))
        for row in cand[(d > eps).all(axis=1)]:
            kept.append(row)
            if len(kept) == count:
                break
    return GeneratedPrototypes(np.asarray(kept), eps)


def accepted_candidates(scores, m_stats, deltas):
    """For each class j, rows whose raw argmax is j and whose m_j > delta_j."""
    cstar = np.argmax(scores, axis=1)
    deltas = np.asarray(deltas, dtype=np.float64)
    return [np.flatnonzero((cstar == j) & (m_stats[:, j] > deltas[j])) for j in range(len(deltas))]


def estimate_boundaries(
    class_ids: Sequence[str],
    instance_ids: Sequence[str],
    scores,
    m_stats,
    deltas,
    train_stats,
    alpha=0.05,
    use_ks=True,
    shrink_cfg: ShrinkConfig = ShrinkConfig(),
    train_scores=None,
):
    """Per-class boundaries for one test batch.

    ``train_stats[j]`` holds the training-side m-statistics of class j. When
    ``train_scores`` (raw scores aligned with ``train_stats``) is given, the
    K-S comparison runs on raw scores; the m-statistic is a nondecreasing
    function of the raw score, so the shrink order is the same but the test
    does not lose power where m saturates at 1. Reported deltas are always
    in m-statistic units.
    """
    scores = np.asarray(scores, dtype=np.float64)
    m_stats = np.asarray(m_stats, dtype=np.float64)
    out = []
    for j, (cid, rows) in enumerate(zip(class_ids, accepted_candidates(scores, m_stats, deltas))):
        delta = float(deltas[j])
        if not use_ks:
            pairs = [(instance_ids[i], float(m_stats[i, j])) for i in rows]
            out.append(accept_all(cid, pairs, delta))
            continue
        tr_m = np.asarray(train_stats[j], dtype=np.float64)
        if train_scores is None:
            pairs = [(instance_ids[i], float(m_stats[i, j])) for i in rows]
            out.append(shrink_boundary(cid, tr_m, pairs, alpha, shrink_cfg, delta=delta))
            continue
        tr_z = np.asarray(train_scores[j], dtype=np.float64)
        if tr_z.size == 0:
            # no training reference: untestable
            ids = tuple(str(instance_ids[i]) for i in rows)
            out.append(ClassBoundary(str(cid), delta, not ids, 0, (), ids, initial_delta=delta))
            continue
        pairs = [(instance_ids[i], float(scores[i, j])) for i in rows]
        b = shrink_boundary(cid, tr_z, pairs, alpha, shrink_cfg)
        m_of = {instance_ids[i]: float(m_stats[i, j]) for i in rows}
        kept = [m_of[i] for i in b.final_accept_set]
        m_delta = max(delta, min(kept)) if (b.shrink_steps and kept) else delta
        if b.shrink_steps and not kept and b.uncertain_set:
            m_delta = max(delta, max(m_of[i] for i in b.uncertain_set))
        out.append(replace(b, delta=m_delta, initial_delta=delta))
    return tuple(out)


def divide_scores(instance_ids, scores, m_stats, class_ids, boundaries) -> list:
    """Domain decisions from precomputed raw scores and m-statistics."""
    scores = np.asarray(scores, dtype=np.float64)
    m_stats = np.asarray(m_stats, dtype=np.float64)
    if isinstance(boundaries, dict):
        boundaries = [boundaries[c] for c in class_ids]
    if len(boundaries) != len(class_ids):
        raise DataError("one boundary per seen class is required")
    initial = np.array([b.initial_delta for b in boundaries])
    known_sets = [set(b.final_accept_set) for b in boundaries]

    decisions = []
    for i, iid in enumerate(instance_ids):
        j = int(np.argmax(scores[i]))
        if not np.any(m_stats[i] > initial):
            domain = Domain.UNKNOWN
        elif iid in known_sets[j] or not boundaries[j].ks_applied:
            domain = Domain.KNOWN
        else:
            domain = Domain.UNCERTAIN
        decisions.append(DomainDecision(
            str(iid), domain, class_ids[j], float(scores[i, j]),
            tuple(float(v) for v in m_stats[i]), class_ids[int(np.argmax(m_stats[i]))],
        ))
    return decisions


def divide(test: Dataset, scorer, evt, boundaries) -> list:
    """Assign every test instance to a domain.

    Unknown when no class's m-statistic clears its initial threshold. Known
    when the top-scoring class kept the instance after K-S shrinking (or ran
    without K-S). Everything else is uncertain.
    """
    if test.n_dims != scorer.n_dims:
        raise DimensionMismatchError(
            f"test features have width {test.n_dims}, scorer expects {scorer.n_dims}"
        )
    if tuple(evt.class_ids) != tuple(scorer.class_ids):
        raise DataError("EVT model and scorer disagree on the seen classes")
    scores = scorer.decision_matrix(test.features)
    m = evt.statistics(scores)
    return divide_scores(test.instance_ids, scores, m, scorer.class_ids, boundaries)


def decisions_to_rows(decisions):
    return [(d.instance_id, d.domain.value, d.candidate_class, repr(d.candidate_score))
            for d in decisions]


def boundary_rows(boundaries):
    """Shrink trajectories: one row per K-S evaluation (or per class when none)."""
    rows = []
    for b in boundaries:
        if not b.history:
            rows.append((b.class_id, 0, repr(b.delta), "", "", "", "", "",
                         b.ks_accepted, len(b.final_accept_set), len(b.uncertain_set)))
        for step, (delta, res) in enumerate(b.history):
            rows.append((b.class_id, step, repr(delta), repr(res.statistic), repr(res.critical_value),
                         res.reject, res.n_train, res.n_test, b.ks_accepted,
                         len(b.final_accept_set), len(b.uncertain_set)))
    return rows


BOUNDARY_HEADER = ("class_id", "step", "delta", "ks_statistic", "critical_value", "reject",
                   "n_train", "n_test", "ks_accepted", "n_known", "n_uncertain")
