"""Feature-prototype embedding and per-domain recognition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, PrototypeTable
from .errors import (
    DataError,
    EmptyInputError,
    MissingPrototypeError,
    NumericalError,
    SingularSystemError,
)

NOVEL = "novel"


@dataclass(frozen=True)
class ClassPrototypeStats:
    class_ids: tuple
    means: np.ndarray
    counts: tuple


@dataclass(frozen=True)
class EmbeddingModel:
    """Linear map ``g(x) = w.T @ x`` from features to attribute space."""

    class_ids: tuple
    weights: np.ndarray
    ridge: float

    def embed(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights

    def to_dict(self):
        return {"class_ids": list(self.class_ids), "weights": self.weights.tolist(),
                "ridge": self.ridge}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["class_ids"]), np.asarray(d["weights"], dtype=np.float64),
                   float(d["ridge"]))


def compute_feature_prototypes(train: Dataset, classes=None) -> ClassPrototypeStats:
    class_ids = tuple(classes) if classes is not None else tuple(dict.fromkeys(train.labels))
    labels = np.asarray(train.labels, dtype=object)
    means, counts = [], []
    for c in class_ids:
        rows = train.features[labels == c]
        if rows.shape[0] == 0:
            raise EmptyInputError(f"class {c!r} has no training instances")
        means.append(rows.mean(axis=0))
        counts.append(rows.shape[0])
    return ClassPrototypeStats(class_ids, np.asarray(means), tuple(counts))


def embedding_objective(w, X, Y, ridge):
    r = X @ w - Y
    return float((r * r).sum() + ridge * (w * w).sum())


def embedding_gradient(w, X, Y, ridge):
    return 2.0 * X.T @ (X @ w - Y) + 2.0 * ridge * w


def fit_embedding(prototypes: ClassPrototypeStats, semantic: PrototypeTable, ridge=1e-3) -> EmbeddingModel:
    """Ridge regression from class feature means to class attribute vectors.

    Minimises ``sum_c ||w.T x_c - y_c||^2 + ridge * ||w||_F^2`` through the
    normal equations ``(X.T X + ridge I) w = X.T Y``.
    """
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    if not prototypes.class_ids:
        raise EmptyInputError("no seen classes to fit the embedding on")
    missing = [c for c in prototypes.class_ids if c not in semantic]
    if missing:
        raise MissingPrototypeError(f"no semantic prototype for {missing}")
    X = prototypes.means
    Y = np.stack([semantic[c] for c in prototypes.class_ids])
    A = X.T @ X + ridge * np.eye(X.shape[1])
    if ridge == 0 and np.linalg.matrix_rank(A) < A.shape[0]:
        raise SingularSystemError(
            f"prototype Gram matrix is rank-deficient ({np.linalg.matrix_rank(A)} < {A.shape[0]})"
            " and ridge is 0"
        )
    B = X.T @ Y
    w = np.linalg.solve(A, B)
    # one step of iterative refinement tightens the normal-equation residual
    w = w + np.linalg.solve(A, B - A @ w)
    grad = embedding_gradient(w, X, Y, ridge)
    if np.linalg.norm(grad) > 1e-8 * max(1.0, np.linalg.norm(B)):
        raise NumericalError(f"embedding solve not stationary (|grad|={np.linalg.norm(grad):.3g})")
    return EmbeddingModel(prototypes.class_ids, w, float(ridge))


def nearest_prototype(gx, semantic: PrototypeTable, pool):
    """Class in ``pool`` whose prototype is closest to ``gx``; ties go to the
    earliest entry of ``pool``."""
    pool = list(pool)
    if not pool:
        raise MissingPrototypeError("empty candidate pool")
    missing = [c for c in pool if c not in semantic]
    if missing:
        raise MissingPrototypeError(f"no semantic prototype for {missing}")
    P = np.stack([semantic[c] for c in pool])
    d = np.sqrt(((P - np.asarray(gx, dtype=np.float64)) ** 2).sum(axis=1))
    return pool[int(np.argmin(d))]


def zero_shot_label(gx, semantic: PrototypeTable, unseen, candidate=None):
    """Nearest-prototype rule for the unknown (``candidate`` None) and
    uncertain domains (pool is the seen candidate plus the unseen classes).

    Seen classes precede unseen ones in the class index, so the candidate
    wins exact ties."""
    pool = list(unseen) if candidate is None else [candidate] + list(unseen)
    return nearest_prototype(gx, semantic, pool)


def _domain(decision):
    return getattr(decision.domain, "value", decision.domain)


def recognize(decision, x, embedding: EmbeddingModel, semantic: PrototypeTable, scorer=None):
    """Label one instance given its domain decision.

    known -> the top-scoring seen class; unknown -> nearest unseen prototype;
    uncertain -> nearest among unseen prototypes and the seen candidate.
    Unseen classes are the entries of ``semantic`` outside the embedding's
    seen classes.
    """
    domain = _domain(decision)
    if domain == "known":
        if scorer is not None:
            from .scorer import argmax_score
            return argmax_score(scorer, x)[0]
        return decision.candidate_class
    seen = set(embedding.class_ids)
    unseen = [c for c in semantic.class_ids if c not in seen]
    gx = embedding.embed(np.asarray(x)[None, :])[0]
    if domain == "unknown":
        return zero_shot_label(gx, semantic, unseen)
    if domain == "uncertain":
        return zero_shot_label(gx, semantic, unseen, decision.candidate_class)
    raise DataError(f"unknown domain tag {domain!r}")


def recognize_osl(decision, x, embedding: EmbeddingModel, seen: PrototypeTable, generated, scorer=None):
    """Open-set label: a seen class id or :data:`NOVEL`.

    ``generated`` is a GeneratedPrototypes (or a plain (k, m) array). Any match
    to a generated prototype collapses to ``novel``.
    """
    domain = _domain(decision)
    if domain == "unknown":
        return NOVEL
    if domain == "known":
        return recognize(decision, x, embedding, seen, scorer)
    vectors = np.asarray(getattr(generated, "vectors", generated), dtype=np.float64)
    gx = embedding.embed(np.asarray(x)[None, :])[0]
    c_star = decision.candidate_class
    if c_star not in seen:
        raise MissingPrototypeError(f"no semantic prototype for {c_star!r}")
    # candidate first so an exact tie keeps the seen class
    pool = np.vstack([seen[c_star][None, :], vectors.reshape(-1, seen.width)])
    d = np.sqrt(((pool - gx) ** 2).sum(axis=1))
    return c_star if int(np.argmin(d)) == 0 else NOVEL
