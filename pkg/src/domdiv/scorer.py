"""One-vs-rest binary confidence scorers over the seen classes.

Training delegates to libsvm/liblinear through scikit-learn. Scores are raw
signed margins computed from the stored support/weight representation, so
a persisted model needs nothing but numpy to evaluate.
"""

from __future__ import annotations

import warnings
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.model_selection import GridSearchCV, StratifiedKFold
from sklearn.svm import SVC, LinearSVC

from .data import Dataset
from .errors import (
    ConfigError,
    DataError,
    DegenerateClassError,
    DimensionMismatchError,
    NonConvergenceError,
)

KERNELS = ("rbf", "linear")


@dataclass(frozen=True)
class ScorerConfig:
    """Scorer hyperparameters.

    ``gamma`` is the RBF bandwidth; ``None`` resolves to ``1 / (d * var(X))``.
    With ``cv_folds >= 2`` the pair (C, gamma) is picked per class from
    ``C_grid`` x ``gamma_grid`` (the latter as multipliers of the resolved
    gamma) by stratified k-fold cross-validation.
    """

    kernel: str = "rbf"
    C: float = 1.0
    gamma: float | None = None
    cv_folds: int = 3
    C_grid: tuple = (0.1, 1.0, 10.0)
    gamma_grid: tuple = (0.25, 1.0, 4.0)
    class_weight: str | None = "balanced"
    max_iter: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ConfigError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if self.C <= 0:
            raise ConfigError("C must be > 0")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError("gamma must be > 0")
        if self.cv_folds == 1 or self.cv_folds < 0:
            raise ConfigError("cv_folds must be 0 (off) or >= 2")
        object.__setattr__(self, "C_grid", tuple(float(c) for c in self.C_grid))
        object.__setattr__(self, "gamma_grid", tuple(float(g) for g in self.gamma_grid))

    def to_dict(self):
        d = asdict(self)
        d["C_grid"] = list(self.C_grid)
        d["gamma_grid"] = list(self.gamma_grid)
        return d


@dataclass(frozen=True)
class BinaryScorer:
    """Decision function ``f(x) = sum_i coef_i K(sv_i, x) + bias``.

    For the linear kernel ``support`` is a single row holding the weight
    vector and ``coef`` is ``[1.0]``.
    """

    class_id: str
    kernel: str
    support: np.ndarray
    coef: np.ndarray
    bias: float
    gamma: float | None
    C: float

    def decision(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.kernel == "linear":
            return (X * self.support[0]).sum(axis=1) + self.bias
        out = np.empty(X.shape[0])
        # chunked so the (rows, n_sv, d) difference tensor stays small
        step = max(1, 2_000_000 // max(1, self.support.size))
        for s in range(0, X.shape[0], step):
            diff = X[s:s + step, None, :] - self.support[None, :, :]
            K = np.exp(-self.gamma * (diff * diff).sum(axis=2))
            out[s:s + step] = (K * self.coef).sum(axis=1) + self.bias
        return out

    def to_dict(self):
        return {
            "class_id": self.class_id,
            "kernel": self.kernel,
            "support": self.support.tolist(),
            "coef": self.coef.tolist(),
            "bias": self.bias,
            "gamma": self.gamma,
            "C": self.C,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["class_id"], d["kernel"], np.asarray(d["support"], dtype=np.float64),
                   np.asarray(d["coef"], dtype=np.float64), float(d["bias"]),
                   d["gamma"], float(d["C"]))


@dataclass(frozen=True)
class ScorerModel:
    class_ids: tuple
    scorers: tuple
    n_dims: int
    metadata: dict = field(default_factory=dict)

    def decision_matrix(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_dims:
            raise DimensionMismatchError(
                f"expected feature vectors of width {self.n_dims}, got shape {X.shape}"
            )
        if X.shape[0] == 0:
            return np.empty((0, len(self.class_ids)))
        return np.column_stack([s.decision(X) for s in self.scorers])

    def to_dict(self):
        return {
            "class_ids": list(self.class_ids),
            "n_dims": self.n_dims,
            "metadata": self.metadata,
            "scorers": [s.to_dict() for s in self.scorers],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["class_ids"]), tuple(BinaryScorer.from_dict(s) for s in d["scorers"]),
                   int(d["n_dims"]), d.get("metadata", {}))


def _base_gamma(X, cfg):
    if cfg.gamma is not None:
        return cfg.gamma
    var = X.var()
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


def _estimator(cfg, C, gamma):
    if cfg.kernel == "linear":
        return LinearSVC(C=C, class_weight=cfg.class_weight, max_iter=cfg.max_iter,
                         random_state=cfg.seed, dual="auto")
    return SVC(C=C, kernel="rbf", gamma=gamma, class_weight=cfg.class_weight,
               max_iter=cfg.max_iter, shrinking=True)


def _fit(est, X, y, class_id):
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        try:
            est.fit(X, y)
        except ConvergenceWarning as w:
            raise NonConvergenceError(
                f"scorer for class {class_id!r} did not converge: {w}",
                iterations=getattr(est, "max_iter", None),
            ) from None
    return est


def _select(cfg, X, y, base_gamma, class_id):
    if cfg.cv_folds < 2:
        return cfg.C, base_gamma
    n_pos = int(y.sum())
    folds = min(cfg.cv_folds, n_pos, y.size - n_pos)
    if folds < 2:
        return cfg.C, base_gamma
    grid = {"C": list(cfg.C_grid)}
    if cfg.kernel == "rbf":
        grid["gamma"] = [base_gamma * g for g in cfg.gamma_grid]
    cv = StratifiedKFold(n_splits=folds, shuffle=True, random_state=cfg.seed)
    search = GridSearchCV(_estimator(cfg, cfg.C, base_gamma), grid, cv=cv,
                          scoring="balanced_accuracy", refit=False, n_jobs=None)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        try:
            search.fit(X, y)
        except ConvergenceWarning as w:
            raise NonConvergenceError(f"cross-validation for {class_id!r}: {w}") from None
    best = search.best_params_
    return best["C"], best.get("gamma", base_gamma)


def _binary_from_estimator(est, class_id, kernel, C, gamma):
    if kernel == "linear":
        w = np.asarray(est.coef_, dtype=np.float64).reshape(1, -1)
        return BinaryScorer(class_id, kernel, w, np.ones(1), float(est.intercept_[0]), None, C)
    # sklearn orders binary classes as [0, 1]; its decision is positive for 1
    return BinaryScorer(class_id, kernel, np.asarray(est.support_vectors_, dtype=np.float64),
                        np.asarray(est.dual_coef_[0], dtype=np.float64),
                        float(est.intercept_[0]), float(gamma), C)


def _check_training(X, y_idx, class_ids):
    if len(class_ids) < 2:
        raise DegenerateClassError(f"need at least 2 seen classes, got {len(class_ids)}")
    counts = np.bincount(y_idx, minlength=len(class_ids))
    for c, n in zip(class_ids, counts):
        if n < 2:
            raise DegenerateClassError(f"class {c!r} has {n} training instance(s), need >= 2")


def _encode(labels, class_ids):
    index = {c: i for i, c in enumerate(class_ids)}
    try:
        return np.array([index[l] for l in labels], dtype=int)
    except KeyError as exc:
        raise DataError(f"training label {exc.args[0]!r} is not a seen class") from None


def fit_binary_scorers(X, y_idx, class_ids, cfg: ScorerConfig, params=None):
    """Fit one scorer per class; ``params`` fixes (C, gamma) per class and skips CV."""
    base_gamma = _base_gamma(X, cfg)
    scorers, chosen = [], []
    for j, cid in enumerate(class_ids):
        y = (y_idx == j).astype(int)
        C, gamma = params[j] if params is not None else _select(cfg, X, y, base_gamma, cid)
        est = _fit(_estimator(cfg, C, gamma), X, y, cid)
        scorers.append(_binary_from_estimator(est, cid, cfg.kernel, C, gamma))
        chosen.append((C, gamma))
    return scorers, chosen


def train_scorers(train: Dataset, config: ScorerConfig = ScorerConfig(), classes=None) -> ScorerModel:
    """Train one-vs-rest scorers on seen-class training data.

    ``classes`` fixes the class order (defaults to order of first
    appearance). Negatives for class c are the other listed classes only.
    """
    class_ids = tuple(classes) if classes is not None else tuple(dict.fromkeys(train.labels))
    X = train.features
    y_idx = _encode(train.labels, class_ids)
    _check_training(X, y_idx, class_ids)
    scorers, chosen = fit_binary_scorers(X, y_idx, class_ids, config)
    meta = {
        "config": config.to_dict(),
        "selected": {c: {"C": C, "gamma": g} for c, (C, g) in zip(class_ids, chosen)},
        "n_train": int(X.shape[0]),
    }
    return ScorerModel(class_ids, tuple(scorers), X.shape[1], meta)


def out_of_fold_scores(train: Dataset, model: ScorerModel, config: ScorerConfig, n_folds=5, seed=0):
    """Decision matrix for the training set where each row comes from a model
    that never saw it. Folds are shared across classes and stratified on the
    class label; per-class hyperparameters are reused from ``model``."""
    class_ids = model.class_ids
    X = train.features
    y_idx = _encode(train.labels, class_ids)
    folds = min(n_folds, int(np.bincount(y_idx).min()))
    if folds < 2:
        raise DegenerateClassError("too few instances per class for out-of-fold scoring")
    params = [(s.C, s.gamma) for s in model.scorers]
    out = np.empty((X.shape[0], len(class_ids)))
    cv = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    for tr, te in cv.split(X, y_idx):
        scorers, _ = fit_binary_scorers(X[tr], y_idx[tr], class_ids, config, params)
        out[te] = np.column_stack([s.decision(X[te]) for s in scorers])
    return out


def score(model: ScorerModel, x) -> dict:
    """Per-class raw scores for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatchError("score expects a single feature vector")
    row = model.decision_matrix(x[None, :])[0]
    return dict(zip(model.class_ids, row.tolist()))


def argmax_class(scores: Mapping) -> tuple:
    """``(class, score)`` of the largest entry; ties go to the earliest class."""
    best_c, best_z = None, -np.inf
    for c, z in scores.items():
        if best_c is None or z > best_z:
            best_c, best_z = c, z
    return best_c, best_z


def argmax_score(model: ScorerModel, x) -> tuple:
    return argmax_class(score(model, x))
