import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmtkd.data import (Dataset, SplitSpec, load_csv, planted_subspace_task,
                        sample_noise_matrix, sample_spiked, save_csv, split)
from rmtkd.errors import (GenerationFailure, InvalidInput, ParseError,
                          SchemaError)


# ------------------------------------------------------------------- dataset

def test_dataset_validates_label_length():
    with pytest.raises(InvalidInput):
        Dataset(x=np.ones((2, 3)), y=np.array([0, 1]), num_classes=2)


def test_splitspec_validates_fractions():
    with pytest.raises(InvalidInput):
        SplitSpec(train_fraction=1.0)
    with pytest.raises(InvalidInput):
        SplitSpec(calibration_fraction=0.0)


# ------------------------------------------------------------------ sampling

def test_noise_matrix_shape_and_variance():
    am = sample_noise_matrix(50, 4000, 2.0, seed=0)
    assert am.entries.shape == (50, 4000)
    assert abs(am.entries.var() - 2.0) < 0.1


def test_noise_matrix_deterministic():
    a = sample_noise_matrix(10, 20, 1.0, seed=1)
    b = sample_noise_matrix(10, 20, 1.0, seed=1)
    c = sample_noise_matrix(10, 20, 1.0, seed=2)
    assert np.array_equal(a.entries, b.entries)
    assert not np.array_equal(a.entries, c.entries)


def test_spiked_directions_are_orthonormal():
    _, dirs = sample_spiked(20, 100, 1.0, [(5.0, None)] * 4, seed=3)
    assert dirs.shape == (4, 20)
    assert np.max(np.abs(dirs @ dirs.T - np.eye(4))) < 1e-10


def test_spiked_respects_supplied_direction():
    v = np.zeros(10)
    v[0] = 1.0
    am, dirs = sample_spiked(10, 50000, 1.0, [(9.0, v)], seed=4)
    assert np.array_equal(dirs[0], v)
    # coordinate 0 variance should be sigma2 + theta = 10, the rest ~1
    var0 = am.entries[0].var()
    assert abs(var0 - 10.0) < 0.5
    assert abs(am.entries[1:].var() - 1.0) < 0.05


def test_spiked_rejects_nonorthonormal_directions():
    v1 = np.zeros(5)
    v1[0] = 1.0
    v2 = np.full(5, 0.6)
    with pytest.raises(InvalidInput):
        sample_spiked(5, 20, 1.0, [(2.0, v1), (2.0, v2)], seed=5)


def test_spiked_rejects_bad_args():
    with pytest.raises(InvalidInput):
        sample_spiked(5, 20, 1.0, [(-1.0, None)], seed=6)
    with pytest.raises(InvalidInput):
        sample_spiked(3, 20, 1.0, [(1.0, None)] * 4, seed=7)
    with pytest.raises(InvalidInput):
        sample_spiked(5, 20, 0.0, [(1.0, None)], seed=8)


# -------------------------------------------------------------- planted task

def test_planted_task_shapes_and_balance():
    ds, basis = planted_subspace_task(32, 8, 10, 503, 0.3, seed=9)
    assert ds.x.shape == (32, 503) and ds.y.shape == (503,)
    assert basis.shape == (32, 8)
    assert np.max(np.abs(basis.T @ basis - np.eye(8))) < 1e-10
    counts = np.bincount(ds.y, minlength=10)
    assert counts.max() - counts.min() <= 1
    assert set(np.unique(ds.y)) <= set(range(10))


def test_planted_task_margin_holds_on_projected_latents():
    ds, basis = planted_subspace_task(16, 4, 3, 200, 0.0, seed=10)
    scorer = ds.extra["scorer"]
    z = basis.T @ ds.x  # zero ambient noise: exact latent recovery
    scores = scorer @ z
    top2 = np.sort(scores, axis=0)[-2:]
    gaps = top2[1] - top2[0]
    assert np.all(gaps >= ds.extra["margin"] - 1e-12)
    assert np.array_equal(np.argmax(scores, axis=0), ds.y)


def test_planted_task_signal_confined_to_subspace():
    ds, basis = planted_subspace_task(24, 6, 4, 300, 0.0, seed=12)
    # with zero noise, x has no component outside the planted basis
    residual = ds.x - basis @ (basis.T @ ds.x)
    assert np.max(np.abs(residual)) < 1e-10


def test_planted_task_deterministic():
    a, ba = planted_subspace_task(12, 3, 3, 60, 0.2, seed=12)
    b, bb = planted_subspace_task(12, 3, 3, 60, 0.2, seed=12)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert np.array_equal(ba, bb)


def test_planted_task_infeasible_margin():
    with pytest.raises(GenerationFailure):
        planted_subspace_task(16, 4, 3, 100, 0.1, seed=13, margin=50.0)


def test_planted_task_validates_dims():
    with pytest.raises(InvalidInput):
        planted_subspace_task(4, 8, 3, 50, 0.1, seed=14)
    with pytest.raises(InvalidInput):
        planted_subspace_task(8, 4, 1, 50, 0.1, seed=15)


# --------------------------------------------------------------------- split

def _labeled(counts, seed=0):
    rng = np.random.default_rng(seed)
    y = np.concatenate([np.full(c, i) for i, c in enumerate(counts)])
    x = rng.normal(size=(3, len(y)))
    return Dataset(x=x, y=y, num_classes=len(counts))


def test_split_partitions_and_stratifies():
    ds = _labeled([50, 30, 20])
    tr, va, cal = split(ds, SplitSpec(train_fraction=0.8,
                                      calibration_fraction=0.25, seed=1))
    assert tr.n + va.n == ds.n
    assert np.bincount(tr.y, minlength=3).tolist() == [40, 24, 16]
    assert np.bincount(va.y, minlength=3).tolist() == [10, 6, 4]
    assert np.bincount(cal.y, minlength=3).tolist() == [10, 6, 4]


def test_split_calibration_is_subset_of_train():
    ds = _labeled([40, 40], seed=2)
    tr, va, cal = split(ds, SplitSpec(seed=3))
    tr_cols = {tuple(tr.x[:, j]) for j in range(tr.n)}
    va_cols = {tuple(va.x[:, j]) for j in range(va.n)}
    cal_cols = {tuple(cal.x[:, j]) for j in range(cal.n)}
    assert cal_cols <= tr_cols
    assert not (tr_cols & va_cols)


def test_split_deterministic_per_seed():
    ds = _labeled([30, 30], seed=4)
    a = split(ds, SplitSpec(seed=5))
    b = split(ds, SplitSpec(seed=5))
    c = split(ds, SplitSpec(seed=6))
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.x, pb.x) and np.array_equal(pa.y, pb.y)
    assert not np.array_equal(a[0].x, c[0].x)


def test_split_rejects_tiny_classes():
    ds = _labeled([50, 1], seed=7)
    with pytest.raises(InvalidInput):
        split(ds, SplitSpec(seed=8))
    # a class whose train allocation would swallow every example also fails
    ds2 = _labeled([50, 2], seed=9)
    with pytest.raises(InvalidInput):
        split(ds2, SplitSpec(train_fraction=0.9, seed=10))


@settings(deadline=None, max_examples=25)
@given(st.integers(6, 60), st.integers(6, 60),
       st.floats(0.3, 0.9), st.integers(0, 10_000))
def test_split_counts_proportional(c0, c1, frac, seed):
    ds = _labeled([c0, c1], seed=seed)
    try:
        tr, va, cal = split(ds, SplitSpec(train_fraction=frac,
                                          calibration_fraction=0.5, seed=seed))
    except InvalidInput:
        return  # degenerate allocation is allowed to refuse
    for c, total in ((0, c0), (1, c1)):
        want = int(round(frac * total))
        assert np.sum(tr.y == c) == want
        assert np.sum(va.y == c) == total - want
    assert tr.n + va.n == ds.n and cal.n <= tr.n


# ----------------------------------------------------------------------- csv

def test_csv_roundtrip(tmp_path):
    ds = _labeled([5, 7], seed=11)
    p = tmp_path / "d.csv"
    save_csv(ds, p)
    back = load_csv(p)
    assert np.array_equal(back.x, ds.x)
    assert np.array_equal(back.y, ds.y)
    assert back.num_classes == 2
    header = p.read_text().split("\n")[0]
    assert header == "f0,f1,f2,label"


def test_csv_roundtrip_exact_floats(tmp_path):
    ds = Dataset(x=np.array([[0.1, 1e-17, -3.5e300]]), y=np.array([0, 1, 0]),
                 num_classes=2)
    p = tmp_path / "e.csv"
    save_csv(ds, p)
    assert np.array_equal(load_csv(p).x, ds.x)


def test_csv_label_remap_is_dense_sorted(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("f0,label\n1.0,7\n2.0,3\n3.0,7\n")
    ds = load_csv(p)
    # raw labels {3, 7} -> {0, 1} by sorted order
    assert ds.y.tolist() == [1, 0, 1]
    assert ds.num_classes == 2
    assert ds.extra["label_names"] == ["3", "7"]


def test_csv_label_column_anywhere(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("label,f0,f1\n0,1.5,2.5\n1,3.5,4.5\n")
    ds = load_csv(p)
    assert np.array_equal(ds.x, [[1.5, 3.5], [2.5, 4.5]])
    assert ds.y.tolist() == [0, 1]


def test_csv_parse_error_names_row_and_column(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("f0,f1,label\n1.0,2.0,0\n1.0,oops,1\n")
    with pytest.raises(ParseError) as ei:
        load_csv(p)
    assert "row 2" in str(ei.value) and "f1" in str(ei.value)


def test_csv_ragged_row_rejected(tmp_path):
    p = tmp_path / "rag.csv"
    p.write_text("f0,f1,label\n1.0,0\n")
    with pytest.raises(ParseError) as ei:
        load_csv(p)
    assert "row 1" in str(ei.value)


def test_csv_schema_errors(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("f0,f1\n1.0,2.0\n")
    with pytest.raises(SchemaError):
        load_csv(p)  # no label column
    p.write_text("f0,label\n")
    with pytest.raises(SchemaError):
        load_csv(p)  # no data rows
    p.write_text("f0,label\n1.0,0\n")
    with pytest.raises(SchemaError):
        load_csv(p, feature_columns=["nope"])
