import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from domdiv.data import (
    ClassSplit,
    Dataset,
    PrototypeTable,
    SyntheticConfig,
    center_separation,
    generate_synthetic,
    load_dataset,
    load_prototypes,
    read_matrix,
    write_dataset,
    write_matrix,
    write_prototypes,
)
from domdiv.errors import (
    ConfigError,
    DataError,
    DimensionMismatchError,
    DuplicateIdError,
    ParseError,
    UnknownLabelError,
)


def _write(path, text):
    path.write_text(text)
    return path


def _split(path, seen, unseen, train, test):
    doc = {"seen_classes": seen, "unseen_classes": unseen, "train_ids": train, "test_ids": test}
    return _write(path, json.dumps(doc))


def test_load_three_row_csv(tmp_path):
    f = _write(tmp_path / "f.csv", "a,A,0.5,1.0\nb,A,1.5,2.0\nc,B,-1,3\n")
    s = _split(tmp_path / "s.json", ["A"], ["B"], ["a", "b"], ["c"])
    ds, split = load_dataset(f, split_path=s)
    assert ds.n_instances == 3 and ds.n_dims == 2
    assert split.train_idx == (0, 1) and split.test_idx == (2,)
    np.testing.assert_array_equal(ds.features[2], [-1.0, 3.0])


def test_width_mismatch_names_the_row(tmp_path):
    f = _write(tmp_path / "f.csv", "a,A,0.5,1.0\nb,A,1.5,2.0,7\nc,B,-1,3\n")
    with pytest.raises(DimensionMismatchError, match=":2"):
        load_dataset(f)


def test_parse_error_carries_line(tmp_path):
    f = _write(tmp_path / "f.csv", "a,A,0.5,1.0\nb,A,oops,2.0\n")
    with pytest.raises(ParseError) as info:
        load_dataset(f)
    assert info.value.line == 2


def test_label_missing_from_split(tmp_path):
    f = _write(tmp_path / "f.csv", "a,A,0,0\nb,A,1,1\nc,Z,2,2\n")
    s = _split(tmp_path / "s.json", ["A"], ["B"], ["a", "b"], ["c"])
    with pytest.raises(UnknownLabelError):
        load_dataset(f, split_path=s)


def test_non_finite_rejected_at_ingest(tmp_path):
    f = _write(tmp_path / "f.csv", "a,A,0,nan\n")
    with pytest.raises(DataError):
        load_dataset(f)


def test_apy_layout_split(tmp_path):
    # 32 classes, 20 used for training (5 of them validation), 12 held out
    classes = [f"c{i:02d}" for i in range(32)]
    rows = "".join(f"{c}_{k},{c},{i},{k}\n" for i, c in enumerate(classes) for k in range(2))
    f = _write(tmp_path / "f.csv", rows)
    seen, unseen = classes[:20], classes[20:]
    s = _split(tmp_path / "s.json", seen, unseen,
               [f"{c}_0" for c in seen], [f"{c}_1" for c in classes])
    _, split = load_dataset(f, split_path=s)
    assert len(split.seen) == 20 and len(split.unseen) == 12


def test_split_rejects_overlapping_classes():
    with pytest.raises(DataError):
        ClassSplit(["a", "b"], ["b"], [], [])


def test_train_instance_must_be_seen(tmp_path):
    f = _write(tmp_path / "f.csv", "a,A,0,0\nb,B,1,1\n")
    s = _split(tmp_path / "s.json", ["A"], ["B"], ["a", "b"], [])
    with pytest.raises(DataError):
        load_dataset(f, split_path=s)


def test_prototypes_two_rows(tmp_path):
    p = _write(tmp_path / "p.csv", "A,1,2,3,4\nB,5,6,7,8\n")
    table = load_prototypes(p)
    assert table.width == 4 and len(table) == 2
    np.testing.assert_array_equal(table["B"], [5, 6, 7, 8])


def test_prototypes_duplicate_id(tmp_path):
    p = _write(tmp_path / "p.csv", "A,1,2\nA,3,4\n")
    with pytest.raises(DuplicateIdError):
        load_prototypes(p)


def test_prototypes_width_mismatch(tmp_path):
    p = _write(tmp_path / "p.csv", "A,1,2\nB,3,4,5\n")
    with pytest.raises(DimensionMismatchError):
        load_prototypes(p)


def test_awa_sized_prototype_table(tmp_path):
    rng = np.random.default_rng(0)
    table = PrototypeTable([f"c{i}" for i in range(50)], rng.random((50, 85)))
    write_prototypes(tmp_path / "p.csv", table)
    back = load_prototypes(tmp_path / "p.csv")
    assert back.width == 85 and len(back) == 50


def test_binary_matrix_roundtrip(tmp_path):
    m = np.arange(12, dtype=float).reshape(4, 3) / 7
    write_matrix(tmp_path / "m.bin", m)
    np.testing.assert_array_equal(read_matrix(tmp_path / "m.bin"), m)
    raw = (tmp_path / "m.bin").read_bytes()
    assert raw[:4] == b"DDIV" and len(raw) == 12 + 8 * 12


def test_binary_matrix_with_labels(tmp_path):
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    write_matrix(tmp_path / "m.bin", m)
    _write(tmp_path / "l.csv", "x,A\ny,B\n")
    ds, _ = load_dataset(tmp_path / "m.bin", tmp_path / "l.csv")
    assert ds.labels == ("A", "B") and ds.instance_ids == ("x", "y")


def test_binary_matrix_needs_labels(tmp_path):
    write_matrix(tmp_path / "m.bin", np.zeros((2, 2)))
    with pytest.raises(DataError):
        load_dataset(tmp_path / "m.bin")


def test_binary_matrix_truncated(tmp_path):
    write_matrix(tmp_path / "m.bin", np.zeros((2, 2)))
    (tmp_path / "m.bin").write_bytes((tmp_path / "m.bin").read_bytes()[:-3])
    with pytest.raises(ParseError):
        read_matrix(tmp_path / "m.bin")


def test_dataset_is_read_only():
    ds = Dataset([[1.0, 2.0]], ["A"], ["x"])
    with pytest.raises(ValueError):
        ds.features[0, 0] = 5.0


def test_dataset_duplicate_ids():
    with pytest.raises(DuplicateIdError):
        Dataset([[1.0], [2.0]], ["A", "A"], ["x", "x"])


def test_synthetic_determinism():
    a = generate_synthetic(SyntheticConfig(rng_seed=7))
    b = generate_synthetic(SyntheticConfig(rng_seed=7))
    assert a[0].features.tobytes() == b[0].features.tobytes()
    assert a[2].vectors.tobytes() == b[2].vectors.tobytes()
    assert a[1] == b[1]


def test_synthetic_prototype_table_shape():
    _, split, protos = generate_synthetic(SyntheticConfig(n_seen=2, n_unseen=2, dim_attr=3))
    assert len(protos) == 4 and protos.width == 3
    assert set(protos.class_ids) == set(split.seen + split.unseen)


def test_synthetic_unseen_classes_have_no_training_rows():
    ds, split, _ = generate_synthetic(SyntheticConfig())
    assert {ds.labels[i] for i in split.train_idx} == set(split.seen)
    assert {ds.labels[i] for i in split.test_idx} == set(split.seen + split.unseen)


def test_overlap_shrinks_center_spacing():
    seps = [center_separation(o) for o in (0.0, 0.25, 0.5, 1.0, 1.5)]
    assert all(a > b for a, b in zip(seps, seps[1:]))


def test_synthetic_config_validation():
    with pytest.raises(ConfigError):
        SyntheticConfig(n_seen=0)
    with pytest.raises(ConfigError):
        SyntheticConfig(overlap=-0.1)
    with pytest.raises(ConfigError):
        SyntheticConfig.from_dict({"bogus": 1})


def _linearly_separable(X, y):
    """Exact LP feasibility check: exists (w, b) with y_i (w.x_i + b) >= 1."""
    s = np.where(y, 1.0, -1.0)
    A = -s[:, None] * np.hstack([X, np.ones((X.shape[0], 1))])
    res = linprog(np.zeros(X.shape[1] + 1), A_ub=A, b_ub=-np.ones(X.shape[0]),
                  bounds=[(None, None)] * (X.shape[1] + 1), method="highs")
    return res.status == 0


def test_zero_overlap_is_linearly_separable():
    cfg = SyntheticConfig(n_seen=2, n_unseen=1, per_class_train=50, per_class_test=50, overlap=0.0)
    ds, split, _ = generate_synthetic(cfg)
    train = ds.subset(split.train_idx)
    labels = np.array(train.labels)
    for c in split.seen:
        assert _linearly_separable(train.features, labels == c)


def test_lp_oracle_detects_inseparable_data():
    X = np.array([[0.0], [1.0], [2.0]])
    assert not _linearly_separable(X, np.array([True, False, True]))


def test_write_load_roundtrip(tmp_path):
    ds, split, protos = generate_synthetic(SyntheticConfig(rng_seed=2, per_class_train=5, per_class_test=3))
    write_dataset(tmp_path / "f.csv", tmp_path / "s.json", ds, split)
    write_prototypes(tmp_path / "p.csv", protos)
    ds2, split2 = load_dataset(tmp_path / "f.csv", split_path=tmp_path / "s.json")
    assert ds2.labels == ds.labels and ds2.instance_ids == ds.instance_ids
    np.testing.assert_allclose(ds2.features, ds.features, rtol=0, atol=1e-12)
    assert split2 == split
    np.testing.assert_allclose(load_prototypes(tmp_path / "p.csv").vectors, protos.vectors, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=3),
                min_size=1, max_size=8))
def test_roundtrip_property(tmp_path_factory, rows):
    d = tmp_path_factory.mktemp("rt")
    n = len(rows)
    ds = Dataset(rows, ["A"] * n, [f"x{i}" for i in range(n)])
    split = ClassSplit(["A"], ["B"], list(range(n)), [])
    write_dataset(d / "f.csv", d / "s.json", ds, split)
    ds2, split2 = load_dataset(d / "f.csv", split_path=d / "s.json")
    np.testing.assert_allclose(ds2.features, ds.features, rtol=1e-12, atol=1e-12)
    assert split2 == split


def test_normalized_prototypes():
    t = PrototypeTable(["a", "b"], [[3.0, 4.0], [0.0, 0.0]]).normalized()
    np.testing.assert_allclose(t["a"], [0.6, 0.8])
    np.testing.assert_array_equal(t["b"], [0.0, 0.0])
