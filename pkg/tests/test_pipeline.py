import json

import numpy as np
import pytest

from domdiv.data import (
    SyntheticConfig,
    generate_synthetic,
    write_dataset,
    write_prototypes,
)
from domdiv.division import Domain
from domdiv.errors import ConfigError, DataError, MissingPrototypeError
from domdiv.pipeline import (
    ABLATION_VARIANTS,
    ExperimentConfig,
    TrainedModel,
    ablation_table,
    apply_division,
    fit_model,
    load_model,
    run_ablation_suite,
    run_experiment,
    save_model,
    thresholds,
    train_test,
)

SYN = SyntheticConfig(overlap=1.0, rng_seed=2, per_class_train=50, per_class_test=30)


def test_same_seed_gives_identical_report(tmp_path):
    cfg = ExperimentConfig(synthetic=SYN, seed=2)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    for name in ("report.json", "decisions.csv", "boundaries.csv", "predictions.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_report_contents(tmp_path):
    cfg = ExperimentConfig(synthetic=SYN, seed=2)
    report, art = run_experiment(cfg, tmp_path)
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["seed"] == 2 and doc["config"] == json.loads(json.dumps(cfg.to_dict()))
    assert sum(doc["domain_counts"].values()) == doc["n_test"] == len(art["decisions"])
    assert doc["metrics"]["H"] == pytest.approx(report.H)
    assert ExperimentConfig.from_dict(doc["config"]) == cfg


def test_osl_task_reports_f1():
    report, art = run_experiment(ExperimentConfig(task="osl", synthetic=SYN, seed=2))
    assert 0 <= report.F1 <= 1
    assert set(art["predictions"].values()) <= set(art["model"].seen) | {"novel"}


@pytest.fixture(scope="module")
def fitted():
    ds, split, protos = generate_synthetic(SYN)
    train, test = train_test(ds, split)
    return fit_model(train, split, protos, ExperimentConfig(synthetic=SYN, seed=2)), test


def test_ks_toggle_only_moves_uncertain_to_known(fitted):
    model, test = fitted
    full = apply_division(model, test, use_bootstrap=True, use_ks=True)[0]
    no_ks = apply_division(model, test, use_bootstrap=True, use_ks=False)[0]
    moved = 0
    for a, b in zip(full, no_ks):
        if a.domain != b.domain:
            assert (a.domain, b.domain) == (Domain.UNCERTAIN, Domain.KNOWN)
            moved += 1
    assert moved > 0


def test_fixed_threshold_variant_bypasses_bootstrap(fitted):
    model, test = fitted
    assert thresholds(model, use_bootstrap=False, fixed_delta=0.3) == (0.3,) * len(model.seen)
    _, bounds, _, _ = apply_division(model, test, use_bootstrap=False, fixed_delta=0.3)
    assert all(b.initial_delta == 0.3 for b in bounds)
    _, bounds, _, _ = apply_division(model, test, use_bootstrap=True)
    assert tuple(b.initial_delta for b in bounds) == model.bootstrap_deltas


def test_default_fixed_threshold_from_openness(fitted):
    model, _ = fitted
    n_s, n_u = len(model.seen), len(model.unseen)
    expected = 0.5 * (1 - np.sqrt(2 * n_s / (2 * (n_s + n_u))))
    assert thresholds(model, use_bootstrap=False) == pytest.approx((expected,) * n_s)


def test_model_roundtrip(fitted, tmp_path):
    model, test = fitted
    save_model(tmp_path / "m.bin", model)
    back = load_model(tmp_path / "m.bin")
    assert isinstance(back, TrainedModel)
    a = apply_division(model, test)[0]
    b = apply_division(back, test)[0]
    assert a == b


def test_bad_model_file(tmp_path):
    (tmp_path / "m.bin").write_text("not json")
    with pytest.raises(DataError):
        load_model(tmp_path / "m.bin")
    (tmp_path / "m.bin").write_text('{"format": "other"}')
    with pytest.raises(DataError):
        load_model(tmp_path / "m.bin")


def test_ablation_suite_shares_one_model(monkeypatch):
    import domdiv.pipeline as pl
    calls = []
    real = pl.fit_model
    monkeypatch.setattr(pl, "fit_model", lambda *a, **k: calls.append(1) or real(*a, **k))
    rows = run_ablation_suite(ExperimentConfig(synthetic=SYN, seed=2))
    assert len(calls) == 1
    assert [(r["use_ks"], r["use_bootstrap"]) for r in rows] == list(ABLATION_VARIANTS)
    table = ablation_table(rows)
    assert [r[0] for r in table] == ["K-S test", "Bootstrap", "OSL", "G-ZSL"]
    assert all(len(r) == 5 for r in table)
    for r in rows:
        if not r["use_ks"]:
            assert r["gzsl_domains"]["uncertain"] == 0


def test_scorer_training_is_variant_independent():
    ds, split, protos = generate_synthetic(SYN)
    train, test = train_test(ds, split)
    Z = []
    for use_ks, use_boot in ABLATION_VARIANTS:
        cfg = ExperimentConfig(synthetic=SYN, seed=2, use_ks=use_ks, use_bootstrap=use_boot)
        m = fit_model(train, split, protos, cfg)
        Z.append(m.scorer.decision_matrix(test.features))
    for z in Z[1:]:
        np.testing.assert_array_equal(z, Z[0])


def test_config_errors():
    with pytest.raises(ConfigError):
        ExperimentConfig(task="segmentation")
    with pytest.raises(ConfigError):
        ExperimentConfig(alpha=1.5)
    with pytest.raises(ConfigError):
        ExperimentConfig(fixed_delta=2.0)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"nope": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scorer": {"kernel": "rbf", "bogus": 1}})
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig())


def test_gzsl_needs_unseen_prototypes(tmp_path):
    ds, split, protos = generate_synthetic(SyntheticConfig(per_class_train=5, per_class_test=2))
    write_dataset(tmp_path / "f.csv", tmp_path / "s.json", ds, split)
    write_prototypes(tmp_path / "p.csv", protos.subset(split.seen))
    cfg = ExperimentConfig(features=str(tmp_path / "f.csv"), split=str(tmp_path / "s.json"),
                           prototypes=str(tmp_path / "p.csv"))
    with pytest.raises(MissingPrototypeError):
        run_experiment(cfg)


def test_errors_carry_stage_name():
    cfg = ExperimentConfig(synthetic=SyntheticConfig(per_class_train=1, per_class_test=2))
    with pytest.raises(DataError) as info:
        run_experiment(cfg)
    assert info.value.stage == "train_scorers"
