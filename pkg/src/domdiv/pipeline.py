"""End-to-end experiment runner: train, calibrate, divide, recognize, evaluate."""

from __future__ import annotations

import contextlib
import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .boundary import BootstrapConfig, ShrinkConfig, bootstrap_threshold, wsvm_delta
from .data import (
    ClassSplit,
    Dataset,
    PrototypeTable,
    SyntheticConfig,
    generate_synthetic,
    load_dataset,
    load_prototypes,
)
from .division import (
    BOUNDARY_HEADER,
    Domain,
    boundary_rows,
    decisions_to_rows,
    divide_scores,
    estimate_boundaries,
    generate_osl_prototypes,
)
from .embedding import (
    EmbeddingModel,
    compute_feature_prototypes,
    fit_embedding,
    recognize,
    recognize_osl,
)
from .errors import ConfigError, DataError, DomDivError, MissingPrototypeError
from .evt import EvtModel, fit_evt_model
from .metrics import evaluate_gzsl, evaluate_osl, percent
from .scorer import ScorerConfig, ScorerModel, out_of_fold_scores, train_scorers

log = logging.getLogger(__name__)

MODEL_FORMAT = "domdiv-model/1"
TASKS = ("gzsl", "osl")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines one run. Serialised verbatim into reports."""

    task: str = "gzsl"
    synthetic: SyntheticConfig | None = None
    features: str | None = None
    labels: str | None = None
    prototypes: str | None = None
    split: str | None = None
    scorer: ScorerConfig = ScorerConfig()
    tail_fraction: float = 0.5
    alpha: float = 0.05
    bootstrap_n: int | None = None
    bootstrap_repeats: int | None = None
    use_bootstrap: bool = True
    use_ks: bool = True
    fixed_delta: float | None = None
    step_fraction: float = 0.05
    max_steps: int = 20
    min_ks_samples: int = 5
    ridge: float = 1e-3
    normalize_prototypes: bool = False
    calibration: str = "oof"
    calibration_folds: int = 10
    per_class: bool = False
    osl_prototypes: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.calibration not in ("oof", "insample"):
            raise ConfigError("calibration must be 'oof' or 'insample'")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must be in (0, 1)")
        if not 0 < self.tail_fraction <= 1:
            raise ConfigError("tail_fraction must be in (0, 1]")
        if self.ridge < 0:
            raise ConfigError("ridge must be >= 0")
        if self.fixed_delta is not None and not 0 <= self.fixed_delta <= 1:
            raise ConfigError("fixed_delta must be in [0, 1]")
        if self.osl_prototypes is not None and self.osl_prototypes < 1:
            raise ConfigError("osl_prototypes must be >= 1")
        # validate eagerly so config errors surface before any training
        self.shrink_config()
        self.bootstrap_config()

    def shrink_config(self) -> ShrinkConfig:
        return ShrinkConfig(self.step_fraction, self.max_steps, self.min_ks_samples)

    def bootstrap_config(self, class_index=0) -> BootstrapConfig:
        return BootstrapConfig(self.bootstrap_n, self.alpha, [self.seed, class_index],
                               self.bootstrap_repeats)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["scorer"] = self.scorer.to_dict()
        d["synthetic"] = asdict(self.synthetic) if self.synthetic else None
        return d

    @classmethod
    def from_dict(cls, data) -> ExperimentConfig:
        if not isinstance(data, dict):
            raise ConfigError("experiment config must be a JSON object")
        data = dict(data)
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if isinstance(data.get("synthetic"), dict):
                data["synthetic"] = SyntheticConfig.from_dict(data["synthetic"])
            if isinstance(data.get("scorer"), dict):
                sc = data["scorer"]
                extra = set(sc) - {f.name for f in fields(ScorerConfig)}
                if extra:
                    raise ConfigError(f"unknown scorer keys: {sorted(extra)}")
                data["scorer"] = ScorerConfig(**sc)
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(doc)


@contextlib.contextmanager
def stage(name):
    """Tag package errors raised inside with the pipeline stage name."""
    try:
        yield
    except DomDivError as exc:
        if exc.stage is None:
            exc.stage = name
        raise


# ------------------------------------------------------------------ model

@dataclass(frozen=True)
class TrainedModel:
    """Everything fitted on training data, plus the semantic table."""

    seen: tuple
    unseen: tuple
    scorer: ScorerModel
    evt: EvtModel
    embedding: EmbeddingModel
    prototypes: PrototypeTable
    train_stats: tuple
    ks_train_stats: tuple
    ks_train_scores: tuple
    bootstrap_deltas: tuple
    config: dict = field(default_factory=dict)

    @property
    def class_index(self):
        return {c: i for i, c in enumerate(self.seen + self.unseen)}

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": __version__,
            "seen": list(self.seen),
            "unseen": list(self.unseen),
            "class_index": self.class_index,
            "scorer": self.scorer.to_dict(),
            "evt": self.evt.to_dict(),
            "embedding": self.embedding.to_dict(),
            "prototypes": {"class_ids": list(self.prototypes.class_ids),
                           "vectors": self.prototypes.vectors.tolist()},
            "boundaries": {
                "bootstrap_deltas": list(self.bootstrap_deltas),
                "train_stats": [list(map(float, s)) for s in self.train_stats],
                "ks_train_stats": [list(map(float, s)) for s in self.ks_train_stats],
                "ks_train_scores": [list(map(float, s)) for s in self.ks_train_scores],
            },
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != MODEL_FORMAT:
            raise DataError(f"unsupported model format {d.get('format')!r}")
        b = d["boundaries"]
        return cls(
            tuple(d["seen"]), tuple(d["unseen"]),
            ScorerModel.from_dict(d["scorer"]),
            EvtModel.from_dict(d["evt"]),
            EmbeddingModel.from_dict(d["embedding"]),
            PrototypeTable(d["prototypes"]["class_ids"], np.asarray(d["prototypes"]["vectors"])),
            tuple(np.asarray(s, dtype=np.float64) for s in b["train_stats"]),
            tuple(np.asarray(s, dtype=np.float64) for s in b["ks_train_stats"]),
            tuple(np.asarray(s, dtype=np.float64) for s in b["ks_train_scores"]),
            tuple(float(x) for x in b["bootstrap_deltas"]),
            d.get("config", {}),
        )


def save_model(path, model: TrainedModel) -> None:
    Path(path).write_text(json.dumps(model.to_dict()) + "\n")


def load_model(path) -> TrainedModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a model file ({exc.msg})") from None
    return TrainedModel.from_dict(doc)


def fit_model(train: Dataset, split: ClassSplit, prototypes: PrototypeTable,
              config: ExperimentConfig) -> TrainedModel:
    """Train scorers, calibrate tails, bootstrap thresholds, fit the embedding."""
    seen, unseen = split.seen, split.unseen
    if config.normalize_prototypes:
        prototypes = prototypes.normalized()
    missing = [c for c in seen if c not in prototypes]
    if config.task == "gzsl":
        missing += [c for c in unseen if c not in prototypes]
    if missing:
        raise MissingPrototypeError(f"no semantic prototype for classes {missing}")
    keep = [c for c in seen + unseen if c in prototypes]
    prototypes = prototypes.subset(keep)

    with stage("train_scorers"):
        scorer = train_scorers(train, config.scorer, classes=seen)
    with stage("calibration"):
        if config.calibration == "oof":
            cal = out_of_fold_scores(train, scorer, config.scorer,
                                     config.calibration_folds, config.seed)
        else:
            cal = scorer.decision_matrix(train.features)
    index = {c: j for j, c in enumerate(seen)}
    y = np.array([index[l] for l in train.labels])
    with stage("fit_evt"):
        evt = fit_evt_model(cal, y, seen, config.tail_fraction)
    m_train = evt.statistics(cal)
    cal_argmax = np.argmax(cal, axis=1)
    train_stats = tuple(m_train[y == j, j] for j in range(len(seen)))
    own = [(y == j) & (cal_argmax == j) for j in range(len(seen))]
    ks_stats = tuple(m_train[own[j], j] for j in range(len(seen)))
    ks_scores = tuple(cal[own[j], j] for j in range(len(seen)))
    with stage("bootstrap"):
        deltas = tuple(bootstrap_threshold(train_stats[j], config.bootstrap_config(j))
                       for j in range(len(seen)))
    with stage("fit_embedding"):
        emb = fit_embedding(compute_feature_prototypes(train, seen), prototypes, config.ridge)
    return TrainedModel(seen, unseen, scorer, evt, emb, prototypes, train_stats, ks_stats,
                        ks_scores, deltas, config.to_dict())


def thresholds(model: TrainedModel, use_bootstrap=True, fixed_delta=None):
    """Per-class initial thresholds. Without bootstrapping every class shares
    ``fixed_delta``, defaulting to the openness-based W-SVM value."""
    if use_bootstrap:
        return model.bootstrap_deltas
    if fixed_delta is None:
        fixed_delta = wsvm_delta(len(model.seen), len(model.unseen))
    return tuple(float(fixed_delta) for _ in model.seen)


def apply_division(model: TrainedModel, test: Dataset, *, use_bootstrap=True, use_ks=True,
                   fixed_delta=None, alpha=0.05, shrink_cfg=ShrinkConfig(), ks_on="score"):
    """Divide a test batch. Returns ``(decisions, boundaries, scores, m_stats)``."""
    with stage("divide"):
        scores = model.scorer.decision_matrix(test.features)
        m = model.evt.statistics(scores)
        deltas = thresholds(model, use_bootstrap, fixed_delta)
        bounds = estimate_boundaries(model.seen, test.instance_ids, scores, m, deltas,
                                     model.ks_train_stats, alpha, use_ks, shrink_cfg,
                                     model.ks_train_scores if ks_on == "score" else None)
        decisions = divide_scores(test.instance_ids, scores, m, model.seen, bounds)
    return decisions, bounds, scores, m


def predict(model: TrainedModel, test: Dataset, decisions, task="gzsl", seed=0, osl_count=None):
    """Labels per instance id for the chosen task."""
    with stage("recognize"):
        if task == "gzsl":
            return {d.instance_id: recognize(d, x, model.embedding, model.prototypes)
                    for d, x in zip(decisions, test.features)}
        seen_table = model.prototypes.subset(model.seen)
        # one generated stand-in per target class unless configured otherwise
        count = osl_count if osl_count is not None else max(1, len(model.unseen))
        generated = generate_osl_prototypes(seen_table, count, seed)
        return {d.instance_id: recognize_osl(d, x, model.embedding, seen_table, generated)
                for d, x in zip(decisions, test.features)}


def domain_counts(decisions):
    counts = {d.value: 0 for d in Domain}
    for dec in decisions:
        counts[dec.domain.value] += 1
    return counts


def evaluate(model, test, decisions, predictions, task, per_class=False):
    with stage("evaluate"):
        truth = dict(zip(test.instance_ids, test.labels))
        split = ClassSplit(model.seen, model.unseen, (), ())
        fn = evaluate_gzsl if task == "gzsl" else evaluate_osl
        return fn(predictions, truth, split, per_class, domain_counts(decisions))


def _display(report, task):
    if task == "gzsl":
        return {"U->T": percent(report.acc_u_to_t), "S->T": percent(report.acc_s_to_t),
                "H": percent(report.H)}
    return {"seen": percent(report.seen_class_accuracy),
            "unseen": percent(report.unseen_prediction_accuracy), "F1": percent(report.F1)}


def build_report(model, report, decisions, task, config_dict, seed):
    return {
        "task": task,
        "metrics": report.to_dict(),
        "display_percent": _display(report, task),
        "domain_counts": domain_counts(decisions),
        "n_test": len(decisions),
        "argmax_disagreements": sum(d.m_argmax_class != d.candidate_class for d in decisions),
        "class_index": model.class_index,
        "seed": seed,
        "config": config_dict,
    }


# ------------------------------------------------------------------ data

def load_experiment_data(config: ExperimentConfig):
    """``(dataset, split, prototypes)`` from the synthetic section or file paths."""
    with stage("load"):
        if config.synthetic is not None:
            return generate_synthetic(config.synthetic)
        if not (config.features and config.prototypes and config.split):
            raise ConfigError("config needs either 'synthetic' or features/prototypes/split paths")
        for p in (config.features, config.prototypes, config.split, config.labels):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"path does not exist: {p}")
        dataset, split = load_dataset(config.features, config.labels, config.split)
        return dataset, split, load_prototypes(config.prototypes)


def train_test(dataset: Dataset, split: ClassSplit):
    return dataset.subset(split.train_idx), dataset.subset(split.test_idx)


# ------------------------------------------------------------------ runners

def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        w.writerows(rows)


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def run_experiment(config: ExperimentConfig, out_dir=None):
    """Full pipeline for ``config.task``.

    Returns ``(report, artifacts)`` where ``report`` is a GzslReport or
    OslReport and ``artifacts`` holds the model, decisions, boundaries,
    predictions and the report document. With ``out_dir`` the model file,
    decisions CSV, boundary CSV and report JSON are written there.
    """
    dataset, split, prototypes = load_experiment_data(config)
    train, test = train_test(dataset, split)
    model = fit_model(train, split, prototypes, config)
    decisions, bounds, _, _ = apply_division(
        model, test, use_bootstrap=config.use_bootstrap, use_ks=config.use_ks,
        fixed_delta=config.fixed_delta, alpha=config.alpha, shrink_cfg=config.shrink_config())
    preds = predict(model, test, decisions, config.task, config.seed, config.osl_prototypes)
    report = evaluate(model, test, decisions, preds, config.task, config.per_class)
    doc = build_report(model, report, decisions, config.task, config.to_dict(), config.seed)
    artifacts = {"model": model, "decisions": decisions, "boundaries": bounds,
                 "predictions": preds, "report": doc}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_model(out / "model.json", model)
        _write_csv(out / "decisions.csv", None, decisions_to_rows(decisions))
        _write_csv(out / "boundaries.csv", BOUNDARY_HEADER, boundary_rows(bounds))
        _write_csv(out / "predictions.csv", None,
                   [(d.instance_id, preds[d.instance_id], d.domain.value) for d in decisions])
        write_json(out / "report.json", doc)
    return report, artifacts


# column order of the published ablation table: (K-S, bootstrap)
ABLATION_VARIANTS = ((True, True), (True, False), (False, True), (False, False))


def run_ablation_suite(config: ExperimentConfig, tasks=TASKS):
    """All four (bootstrap, K-S) combinations on identical data and models.

    Returns a list of dicts, one per variant in :data:`ABLATION_VARIANTS`
    order, carrying the OSL F1 and G-ZSL H (fractions) plus domain counts.
    """
    dataset, split, prototypes = load_experiment_data(config)
    train, test = train_test(dataset, split)
    # one fit serves every variant and task: only the boundary logic differs
    model = fit_model(train, split, prototypes,
                      replace(config, task="gzsl" if "gzsl" in tasks else "osl"))
    rows = []
    for use_ks, use_boot in ABLATION_VARIANTS:
        row = {"use_ks": use_ks, "use_bootstrap": use_boot}
        for task in tasks:
            decisions, _, _, _ = apply_division(
                model, test, use_bootstrap=use_boot, use_ks=use_ks,
                fixed_delta=config.fixed_delta, alpha=config.alpha,
                shrink_cfg=config.shrink_config())
            preds = predict(model, test, decisions, task, config.seed, config.osl_prototypes)
            rep = evaluate(model, test, decisions, preds, task, config.per_class)
            row["osl_f1" if task == "osl" else "gzsl_h"] = rep.F1 if task == "osl" else rep.H
            row[f"{task}_domains"] = domain_counts(decisions)
        rows.append(row)
    return rows


def ablation_table(rows, tasks=TASKS):
    """Rows laid out like the published ablation table (variants as columns)."""
    mark = lambda b: "yes" if b else "no"
    table = [["K-S test"] + [mark(r["use_ks"]) for r in rows],
             ["Bootstrap"] + [mark(r["use_bootstrap"]) for r in rows]]
    if "osl" in tasks:
        table.append(["OSL"] + [f"{percent(r['osl_f1']):.1f}" for r in rows])
    if "gzsl" in tasks:
        table.append(["G-ZSL"] + [f"{percent(r['gzsl_h']):.1f}" for r in rows])
    return table


def write_ablation_table(path, rows, tasks=TASKS):
    _write_csv(path, None, ablation_table(rows, tasks))
