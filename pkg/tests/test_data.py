import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsrae.data import (
    CsvFormatError, LabeledDataset, corrupt, corrupted_swiss_roll, gaussian_outliers, load_csv, load_scores,
    mix, outlier_count, save_csv, save_scores, swiss_roll, swiss_roll_map,
)
from rsrae.metrics import ScoreReport
from rsrae.tensor import ShapeError

seeds = st.integers(0, 2**32 - 1)


# -- Swiss roll ---------------------------------------------------------------------

@pytest.mark.parametrize("s, t, expected", [
    (0.0, 2 * math.pi, (2 * math.pi, 0.0, 0.0)),
    (10.5, 1.5 * math.pi, (0.0, 10.5, -1.5 * math.pi)),
])
def test_map_examples(s, t, expected):
    np.testing.assert_allclose(swiss_roll_map(s, t), expected, atol=1e-14)


@given(seeds, st.integers(1, 300))
def test_swiss_roll_on_manifold(seed, n):
    ds = swiss_roll(n, seed)
    t = np.hypot(ds.X[:, 0], ds.X[:, 2])
    assert np.all((t >= 1.5 * math.pi - 1e-12) & (t <= 4.5 * math.pi + 1e-12))
    # the angle recovered from (x1, x3) agrees with the radius modulo 2 pi
    ang = np.arctan2(ds.X[:, 2], ds.X[:, 0])
    assert np.allclose(np.cos(ang - t), 1.0, atol=1e-9)
    assert np.all((ds.X[:, 1] >= 0) & (ds.X[:, 1] <= 21))
    assert ds.n_outliers == 0


def test_swiss_roll_default_size_and_errors():
    assert swiss_roll().n == 1000
    with pytest.raises(ValueError):
        swiss_roll(0)


# -- outliers -----------------------------------------------------------------------

def test_outliers_tiny_sigma_near_origin():
    assert np.abs(gaussian_outliers(50, 1e-12, 0).X).max() < 1e-10


def test_outlier_variance():
    X = gaussian_outliers(100_000, 2.0, 1).X
    assert np.all((X.var(0) >= 3.9) & (X.var(0) <= 4.1))


def test_outliers_reproducible():
    assert gaussian_outliers(20, 2.0, 5).X.tobytes() == gaussian_outliers(20, 2.0, 5).X.tobytes()
    assert gaussian_outliers().n == 500


@pytest.mark.parametrize("kw", [dict(n=0), dict(sigma=0.0), dict(sigma=-1.0)])
def test_outlier_errors(kw):
    with pytest.raises(ValueError):
        gaussian_outliers(**kw)


# -- mixing -------------------------------------------------------------------------

def test_corrupted_swiss_roll_counts():
    ds = corrupted_swiss_roll(1000, 500, seed=0)
    assert ds.n == 1500 and ds.n_outliers == 500


def test_mix_without_outliers():
    inl = swiss_roll(10, 0)
    ds = mix(inl, None, 3)
    assert ds.n == 10 and ds.n_outliers == 0


def test_mix_width_mismatch():
    with pytest.raises(ShapeError):
        mix(swiss_roll(3, 0), gaussian_outliers(3, 1.0, 0, dim=2))


@given(seeds)
def test_mix_permutation_oracle(seed):
    inl, out = swiss_roll(15, seed), gaussian_outliers(7, 2.0, seed)
    ds = mix(inl, out, seed)
    stacked = np.vstack([inl.X, out.X])
    # a per-row score of the shuffled set maps back through perm
    score = lambda X: np.linalg.norm(X, axis=1) + X[:, 1]  # noqa: E731
    unshuffled = np.empty(ds.n)
    unshuffled[ds.perm] = score(ds.X)
    np.testing.assert_array_equal(unshuffled, score(stacked))
    assert sorted(map(tuple, ds.X)) == sorted(map(tuple, stacked))
    assert ds.labels.sum() == 7


@settings(max_examples=10)
@given(seeds)
def test_generation_is_pure(seed):
    a, b = corrupted_swiss_roll(50, 20, seed=seed), corrupted_swiss_roll(50, 20, seed=seed)
    assert a.X.tobytes() == b.X.tobytes() and a.labels.tobytes() == b.labels.tobytes()


@pytest.mark.parametrize("c, expected", [(0.1, 100), (0.5, 500), (0.9, 900)])
def test_outlier_count(c, expected):
    assert outlier_count(c, 1000) == expected


@pytest.mark.parametrize("c", [0.0, 1.0, -0.2])
def test_outlier_count_range(c):
    with pytest.raises(ValueError):
        outlier_count(c, 10)


def test_corrupt_keeps_inliers():
    ds = mix(swiss_roll(100, 0), gaussian_outliers(100, 2.0, 0), 0)
    c = corrupt(ds, 0.3, seed=1)
    assert c.n == 130 and c.n_outliers == 30
    assert sorted(map(tuple, c.X[c.labels == 0])) == sorted(map(tuple, ds.X[ds.labels == 0]))


def test_corrupt_needs_enough_outliers():
    ds = mix(swiss_roll(100, 0), gaussian_outliers(10, 2.0, 0), 0)
    with pytest.raises(ValueError, match="only 10"):
        corrupt(ds, 0.5)


def test_dataset_invariants():
    with pytest.raises(ValueError):
        LabeledDataset(np.array([[np.inf]]))
    with pytest.raises(ShapeError):
        LabeledDataset(np.ones((3, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        LabeledDataset(np.ones((2, 2)), np.array([0, 2]))


# -- CSV ----------------------------------------------------------------------------

def test_csv_roundtrip_full_precision(tmp_path, rng):
    ds = LabeledDataset(rng.standard_normal((20, 3)) * 1e3, rng.integers(0, 2, 20))
    save_csv(tmp_path / "d.csv", ds)
    back = load_csv(tmp_path / "d.csv", has_labels=True)
    assert back.X.tobytes() == ds.X.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_csv_three_columns_with_labels(tmp_path):
    (tmp_path / "d.csv").write_text("1,2,0\n3,4,1\n")
    ds = load_csv(tmp_path / "d.csv", has_labels=True)
    assert ds.X.shape == (2, 2) and ds.labels.tolist() == [0, 1]


def test_csv_malformed_row_names_line(tmp_path):
    lines = ["a,b"] + [f"{i},{i}" for i in range(5)] + ["1,2,3"]
    (tmp_path / "d.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(CsvFormatError, match=":7:"):
        load_csv(tmp_path / "d.csv")


@pytest.mark.parametrize("body, has_labels", [
    ("1,x\n", False),
    ("1,2\n3,nan\n", False),
    ("1,0.5\n", True),
    ("1,2\n3,4\n", True),
    ("", False),
])
def test_csv_rejects(tmp_path, body, has_labels):
    (tmp_path / "d.csv").write_text(body)
    with pytest.raises(CsvFormatError):
        load_csv(tmp_path / "d.csv", has_labels)


def test_scores_roundtrip(tmp_path):
    rep = ScoreReport.build([0.25, 1.0 / 3], [0, 1])
    save_scores(tmp_path / "s.csv", rep)
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "index,score,label"
    s, y = load_scores(tmp_path / "s.csv")
    assert s.tolist() == [0.25, 1.0 / 3] and y.tolist() == [0, 1]


def test_scores_without_labels(tmp_path):
    save_scores(tmp_path / "s.csv", ScoreReport.build([1.0, 2.0]))
    s, y = load_scores(tmp_path / "s.csv")
    assert y is None and s.tolist() == [1.0, 2.0]


def test_scores_bad_header(tmp_path):
    (tmp_path / "s.csv").write_text("score\n1\n")
    with pytest.raises(CsvFormatError):
        load_scores(tmp_path / "s.csv")
