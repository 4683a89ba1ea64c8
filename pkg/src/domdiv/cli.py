"""Command-line entry point.

Subcommands mirror the pipeline stages: ``synth`` writes a synthetic
dataset, ``train`` fits and saves a model, ``divide`` emits domain
decisions, ``eval`` scores a recognition task, ``run`` does everything from
one config file and ``ablate`` produces the four-variant comparison table.

Exit status is 0 on success, 2 for configuration errors, 3 for data errors
and 4 for numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .data import (
    generate_synthetic,
    load_dataset,
    load_prototypes,
    write_dataset,
    write_prototypes,
)
from .division import BOUNDARY_HEADER, boundary_rows, decisions_to_rows
from .errors import ConfigError, DataError, DimensionMismatchError, DomDivError
from .pipeline import (
    TASKS,
    ExperimentConfig,
    _write_csv,
    apply_division,
    build_report,
    evaluate,
    fit_model,
    load_model,
    predict,
    run_ablation_suite,
    run_experiment,
    save_model,
    write_ablation_table,
    write_json,
)
from .scorer import KERNELS

log = logging.getLogger("domdiv")

DECISION_HEADER = ("instance_id", "domain", "candidate_class", "candidate_score")


def _load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_json(path)


def _load_test(args, model=None):
    """Dataset restricted to the split's test ids when a split is given."""
    dataset, split = load_dataset(args.features, args.labels, args.split)
    if split is not None:
        dataset = dataset.subset(split.test_idx)
    if model is not None and dataset.n_dims != model.scorer.n_dims:
        raise DimensionMismatchError(
            f"{args.features}: width {dataset.n_dims}, model expects {model.scorer.n_dims}"
        )
    return dataset


def _model_config(model, **overrides) -> ExperimentConfig:
    cfg = ExperimentConfig.from_dict(model.config)
    return replace(cfg, **overrides)


def cmd_synth(args):
    cfg = _load_config(args.config)
    if cfg.synthetic is None:
        raise ConfigError(f"{args.config}: no 'synthetic' section")
    dataset, split, prototypes = generate_synthetic(cfg.synthetic)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(out / "features.csv", out / "split.json", dataset, split)
    write_prototypes(out / "prototypes.csv", prototypes)
    log.info("wrote %d instances to %s", dataset.n_instances, out)


def cmd_train(args):
    dataset, split = load_dataset(args.features, args.labels, args.split)
    if split is None:
        raise DataError("train needs a split file")
    prototypes = load_prototypes(args.prototypes)
    task = "gzsl" if all(c in prototypes for c in split.unseen) else "osl"
    base = _load_config(args.config) if args.config else ExperimentConfig()
    overrides = {"task": task, "seed": args.seed if args.seed is not None else base.seed}
    if args.alpha is not None:
        overrides["alpha"] = args.alpha
    if args.bootstrap_n is not None:
        overrides["bootstrap_n"] = args.bootstrap_n
    if args.kernel is not None:
        overrides["scorer"] = replace(base.scorer, kernel=args.kernel)
    cfg = replace(base, **overrides)
    model = fit_model(dataset.subset(split.train_idx), split, prototypes, cfg)
    save_model(args.out, model)
    log.info("saved model for %d seen classes to %s", len(model.seen), args.out)


def cmd_divide(args):
    model = load_model(args.model)
    cfg = _model_config(model)
    test = _load_test(args, model)
    decisions, bounds, _, _ = apply_division(
        model, test, use_bootstrap=cfg.use_bootstrap, use_ks=cfg.use_ks,
        fixed_delta=cfg.fixed_delta, alpha=cfg.alpha, shrink_cfg=cfg.shrink_config())
    _write_csv(args.out, DECISION_HEADER, decisions_to_rows(decisions))
    if args.dump_boundaries:
        _write_csv(args.dump_boundaries, BOUNDARY_HEADER, boundary_rows(bounds))


def cmd_eval(args):
    model = load_model(args.model)
    overrides = {"task": args.task, "per_class": args.per_class}
    if args.no_bootstrap:
        overrides["use_bootstrap"] = False
    if args.no_ks:
        overrides["use_ks"] = False
    if args.fixed_delta is not None:
        overrides["fixed_delta"] = args.fixed_delta
    cfg = _model_config(model, **overrides)
    test = _load_test(args, model)
    decisions, _, _, _ = apply_division(
        model, test, use_bootstrap=cfg.use_bootstrap, use_ks=cfg.use_ks,
        fixed_delta=cfg.fixed_delta, alpha=cfg.alpha, shrink_cfg=cfg.shrink_config())
    preds = predict(model, test, decisions, cfg.task, cfg.seed, cfg.osl_prototypes)
    report = evaluate(model, test, decisions, preds, cfg.task, cfg.per_class)
    write_json(args.out, build_report(model, report, decisions, cfg.task, cfg.to_dict(), cfg.seed))
    headline = report.H if cfg.task == "gzsl" else report.F1
    print(f"{cfg.task} {'H' if cfg.task == 'gzsl' else 'F1'} = {100 * headline:.1f}")


def cmd_run(args):
    cfg = _load_config(args.config)
    if args.task:
        cfg = replace(cfg, task=args.task)
    report, _ = run_experiment(cfg, args.out)
    headline = report.H if cfg.task == "gzsl" else report.F1
    print(f"{cfg.task} {'H' if cfg.task == 'gzsl' else 'F1'} = {100 * headline:.1f}")


def cmd_ablate(args):
    cfg = _load_config(args.config)
    rows = run_ablation_suite(cfg, tuple(args.tasks))
    write_ablation_table(args.out, rows, tuple(args.tasks))
    for r in rows:
        marks = f"K-S {'y' if r['use_ks'] else 'n'} / bootstrap {'y' if r['use_bootstrap'] else 'n'}"
        vals = "  ".join(f"{k}={100 * r[k]:.1f}" for k in ("osl_f1", "gzsl_h") if k in r)
        print(f"{marks}: {vals}")


def _add_data_args(p, features_help):
    p.add_argument("--features", required=True, help=features_help)
    p.add_argument("--labels", help="instance_id,label CSV (required for binary feature files)")
    p.add_argument("--split", help="split JSON; restricts evaluation to its test ids")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="domdiv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", required=True, help="experiment JSON with a 'synthetic' section")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit scorers, tail models, thresholds and embedding")
    _add_data_args(p, "features CSV (id,label,f1..fd) or binary matrix")
    p.add_argument("--prototypes", required=True, help="class_id,a1..am CSV")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--config", help="experiment JSON supplying the remaining settings")
    p.add_argument("--kernel", choices=KERNELS)
    p.add_argument("--alpha", type=float)
    p.add_argument("--bootstrap-n", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("divide", help="assign test instances to domains")
    p.add_argument("--model", required=True)
    _add_data_args(p, "test features")
    p.add_argument("--out", required=True, help="decisions CSV")
    p.add_argument("--dump-boundaries", metavar="CSV", help="write per-class shrink trajectories")
    p.set_defaults(func=cmd_divide)

    p = sub.add_parser("eval", help="divide, recognize and score a task")
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--model", required=True)
    _add_data_args(p, "test features with ground-truth labels")
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--no-bootstrap", action="store_true", help="use a fixed threshold instead")
    p.add_argument("--no-ks", action="store_true", help="skip K-S boundary shrinking")
    p.add_argument("--fixed-delta", type=float, help="threshold used with --no-bootstrap")
    p.add_argument("--per-class", action="store_true", help="per-class mean accuracies")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="end-to-end experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--task", choices=TASKS)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="four-variant bootstrap / K-S comparison")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="table CSV")
    p.add_argument("--tasks", nargs="+", choices=TASKS, default=list(TASKS))
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except DomDivError as exc:
        where = f" [{exc.stage}]" if getattr(exc, "stage", None) else ""
        print(f"error{where}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
