"""Synthetic datasets, corruption mixing, CSV input/output.

Randomness comes from numpy's PCG64 bit generator seeded with the given
integer; normals use numpy's ziggurat transform of its uniforms. Same seed,
same numbers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class LabeledDataset:
    X: np.ndarray
    labels: np.ndarray | None = None  # 1 = outlier
    seed: int | None = None
    note: str = ""
    perm: np.ndarray | None = None  # row i came from pre-shuffle row perm[i]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ShapeError(f"dataset must be a matrix, got shape {self.X.shape}")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("dataset contains non-finite entries")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.X.shape[0],):
                raise ShapeError(f"{self.labels.shape[0]} labels for {self.X.shape[0]} rows")
            if not np.isin(self.labels, (0, 1)).all():
                raise ValueError("labels must be 0 (inlier) or 1 (outlier)")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def n_outliers(self) -> int:
        return 0 if self.labels is None else int(self.labels.sum())


SWISS_T_RANGE = (1.5 * math.pi, 4.5 * math.pi)
SWISS_S_RANGE = (0.0, 21.0)


def swiss_roll_map(s, t) -> np.ndarray:
    """(s, t) -> (t cos t, s, t sin t); ``t`` is the angle, ``s`` the height."""
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    return np.stack([t * np.cos(t), s, t * np.sin(t)], axis=-1)


def swiss_roll(n: int = 1000, seed: int = 0) -> LabeledDataset:
    if n < 1:
        raise ValueError("swiss_roll needs n >= 1")
    rng = make_rng(seed)
    t = rng.uniform(*SWISS_T_RANGE, size=n)
    s = rng.uniform(*SWISS_S_RANGE, size=n)
    return LabeledDataset(swiss_roll_map(s, t), np.zeros(n, dtype=np.int64), seed, f"swiss_roll(n={n})")


def gaussian_outliers(n: int = 500, sigma: float = 2.0, seed: int = 0, dim: int = 3) -> LabeledDataset:
    if n < 1:
        raise ValueError("gaussian_outliers needs n >= 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    X = sigma * make_rng(seed).standard_normal((n, dim))
    return LabeledDataset(X, np.ones(n, dtype=np.int64), seed, f"gaussian_outliers(n={n}, sigma={sigma})")


def outlier_count(ratio: float, n_inliers: int) -> int:
    """Number of outliers for outlier ratio c relative to the inlier count."""
    if not 0 < ratio < 1:
        raise ValueError(f"outlier ratio must lie in (0, 1), got {ratio}")
    return int(round(ratio * n_inliers))


def mix(inliers: LabeledDataset, outliers: LabeledDataset | None, seed: int = 0) -> LabeledDataset:
    """Concatenate and shuffle; ``perm`` on the result records the shuffle."""
    parts = [inliers] if outliers is None or outliers.n == 0 else [inliers, outliers]
    if len({p.X.shape[1] for p in parts}) != 1:
        raise ShapeError(f"column counts differ: {[p.X.shape[1] for p in parts]}")
    X = np.concatenate([p.X for p in parts])
    labels = np.concatenate([
        p.labels if p.labels is not None else np.full(p.n, k, dtype=np.int64) for k, p in enumerate(parts)
    ])
    perm = make_rng(seed).permutation(X.shape[0])
    note = " + ".join(p.note for p in parts)
    return LabeledDataset(X[perm], labels[perm], seed, note, perm)


def corrupted_swiss_roll(n_inliers: int = 1000, n_outliers: int = 500, sigma: float = 2.0,
                         seed: int = 0) -> LabeledDataset:
    """Swiss roll inliers plus isotropic Gaussian outliers, shuffled."""
    ss = np.random.SeedSequence(seed)
    s_in, s_out, s_mix = (int(c.generate_state(1)[0]) for c in ss.spawn(3))
    inl = swiss_roll(n_inliers, s_in)
    out = gaussian_outliers(n_outliers, sigma, s_out) if n_outliers > 0 else None
    ds = mix(inl, out, s_mix)
    ds.seed = seed
    return ds


# -- CSV --------------------------------------------------------------------------------

class CsvFormatError(ValueError):
    pass


def load_csv(path, has_labels: bool = False) -> LabeledDataset:
    """Numeric CSV, optional header row, optional final 0/1 label column."""
    rows, labels = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise CsvFormatError(f"{path}:{lineno}: non-numeric cell in {row!r}") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise CsvFormatError(f"{path}:{lineno}: expected {width} columns, found {len(vals)}")
            if not all(math.isfinite(v) for v in vals):
                raise CsvFormatError(f"{path}:{lineno}: non-finite value")
            if has_labels:
                lab = vals.pop()
                if lab not in (0.0, 1.0):
                    raise CsvFormatError(f"{path}:{lineno}: label {lab!r} is not 0 or 1")
                labels.append(int(lab))
            rows.append(vals)
    if not rows or (has_labels and width < 2):
        raise CsvFormatError(f"{path}: no data")
    return LabeledDataset(np.array(rows), np.array(labels) if has_labels else None, note=str(path))


def save_csv(path, ds: LabeledDataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        m = ds.X.shape[1]
        w.writerow([f"x{j}" for j in range(m)] + (["label"] if ds.labels is not None else []))
        for i, row in enumerate(ds.X):
            cells = [f"{v:.17g}" for v in row]
            if ds.labels is not None:
                cells.append(str(int(ds.labels[i])))
            w.writerow(cells)


def save_scores(path, report) -> None:
    """Write ``index,score,label``; the label cell is empty when unknown."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "score", "label"])
        labels = report.labels
        for i, s in enumerate(report.scores):
            w.writerow([i, f"{s:.17g}", "" if labels is None else int(labels[i])])


def load_scores(path) -> tuple[np.ndarray, np.ndarray | None]:
    scores, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "score", "label"]:
            raise CsvFormatError(f"{path}: expected header index,score,label, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise CsvFormatError(f"{path}:{lineno}: expected 3 columns")
            try:
                scores.append(float(row[1]))
            except ValueError:
                raise CsvFormatError(f"{path}:{lineno}: bad score {row[1]!r}") from None
            labels.append(row[2])
    if any(l == "" for l in labels):
        return np.array(scores), None
    try:
        lab = np.array([int(l) for l in labels])
    except ValueError:
        raise CsvFormatError(f"{path}: non-integer label") from None
    return np.array(scores), lab


def corrupt(ds: LabeledDataset, ratio: float, seed: int = 0) -> LabeledDataset:
    """Keep every inlier and sample round(ratio * n_inliers) of the outliers."""
    if ds.labels is None:
        raise ValueError("corrupt needs a labelled dataset")
    inl = np.flatnonzero(ds.labels == 0)
    out = np.flatnonzero(ds.labels == 1)
    k = outlier_count(ratio, inl.size)
    if k > out.size:
        raise ValueError(f"ratio {ratio} needs {k} outliers but only {out.size} are available")
    rng = make_rng(seed)
    pick = np.sort(rng.choice(out, size=k, replace=False))
    rows = np.concatenate([inl, pick])
    rows = rows[rng.permutation(rows.size)]
    return LabeledDataset(ds.X[rows], ds.labels[rows], seed, f"{ds.note} corrupted c={ratio}", rows)
