"""Experiment configuration, runs over seeds, and parameter sweeps.

Config files are flat ``key = value`` text. Keys carry a section prefix
(``dataset.``, ``model.``, ``train.``) except for the top-level ``preset``,
``mode`` and ``seeds``. Lists are comma separated; ``none`` clears an
optional field; ``#`` starts a comment::

    preset = swiss_roll
    mode = rsrae
    seeds = 0, 1, 2
    model.d = 2
    train.learning_rate = 0.01
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from .linear import DivergenceError, RankError, Subspace, coordinate_median, fms, pca_subspace, sfms
from .losses import anomaly_scores
from .metrics import ScoreReport, average_precision, roc_auc
from .net import CKPT_MAGIC, ModelSpec, init_model, model_forward, save_model
from .optim import MODES as NN_MODES
from .optim import TrainConfig, TrainingError, train, write_history_csv
from . import tensor as T

LINEAR_MODES = ("pca", "fms", "sfms")
ALL_MODES = NN_MODES + LINEAR_MODES
FULL_SCALE_EPOCHS = 10_000
SWEEP_AXES = ("d", "learning_rate", "lambda", "outlier_ratio")
LAMBDA_GRID = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0)
DEFAULT_SWEEP_VALUES = {
    "d": (1, 2, 5, 8, 10),
    "learning_rate": (0.0001, 0.00025, 0.0005, 0.001),
    "lambda": tuple((a, b) for a in LAMBDA_GRID for b in LAMBDA_GRID),
    "outlier_ratio": (0.1, 0.3, 0.5, 0.7, 0.9),
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class DatasetConfig:
    source: str = "swiss_roll"  # "swiss_roll" or "csv"
    csv_path: str | None = None
    has_labels: bool = True
    n_inliers: int = 1000
    n_outliers: int = 500
    sigma: float = 2.0
    outlier_ratio: float | None = None  # overrides n_outliers / subsamples CSV outliers


@dataclass
class ModelConfig:
    encoder_widths: tuple = (32, 64, 128)
    d: int = 10
    decoder_widths: tuple = (128, 64, 32)
    activation: str = "tanh"
    output_activation: str = "none"
    alpha: float = 0.2
    batch_norm: bool = True
    normalize_latent: bool = True
    scaled_init: bool = True


@dataclass
class TrainSection:
    epochs: int = 200
    batch_size: int | None = 128
    learning_rate: float = 0.00025
    eps_ae: float = 0.0
    eps_rsr1: float = 0.0
    eps_rsr2: float = 0.0
    lambda1: float = 0.1
    lambda2: float = 0.1
    shuffle: bool = True
    separate_rsr_moments: bool = False
    normalize_by_batch: bool = True


@dataclass
class ExperimentConfig:
    mode: str = "rsrae"
    seeds: tuple = (0,)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSection = field(default_factory=TrainSection)

    def validate(self) -> "ExperimentConfig":
        ds, m, tr = self.dataset, self.model, self.train
        if self.mode not in ALL_MODES:
            raise ConfigError(f"mode: expected one of {ALL_MODES}, got {self.mode!r}")
        if not self.seeds:
            raise ConfigError("seeds: at least one seed is required")
        if any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigError(f"seeds: expected non-negative integers, got {self.seeds}")
        if ds.source not in ("swiss_roll", "csv"):
            raise ConfigError(f"dataset.source: expected swiss_roll or csv, got {ds.source!r}")
        if (ds.source == "csv") != (ds.csv_path is not None):
            raise ConfigError("dataset.csv_path: set it exactly when dataset.source = csv")
        if ds.source == "swiss_roll":
            if ds.n_inliers < 1 or ds.n_outliers < 0:
                raise ConfigError("dataset.n_inliers must be >= 1 and dataset.n_outliers >= 0")
            if ds.sigma <= 0:
                raise ConfigError(f"dataset.sigma: must be positive, got {ds.sigma}")
        if ds.outlier_ratio is not None and not 0 < ds.outlier_ratio < 1:
            raise ConfigError(f"dataset.outlier_ratio: must lie in (0, 1), got {ds.outlier_ratio}")
        if ds.outlier_ratio is not None and ds.source == "csv" and not ds.has_labels:
            raise ConfigError("dataset.outlier_ratio: needs a labelled CSV (dataset.has_labels = true)")
        if m.d < 1:
            raise ConfigError(f"model.d: must be >= 1, got {m.d}")
        if self.mode in NN_MODES:
            if not m.encoder_widths or any(w < 1 for w in m.encoder_widths + m.decoder_widths):
                raise ConfigError("model.encoder_widths / model.decoder_widths: widths must be >= 1")
            if m.d >= m.encoder_widths[-1]:
                raise ConfigError(
                    f"model.d: must be below the encoder output width {m.encoder_widths[-1]}, got {m.d}"
                )
            for name in ("epochs", "learning_rate"):
                if getattr(tr, name) <= 0:
                    raise ConfigError(f"train.{name}: must be positive")
            if tr.batch_size is not None and tr.batch_size < 0:
                raise ConfigError("train.batch_size: must be positive (or none / 0 for full batch)")
            if self.mode == "rsrae_plus" and (tr.lambda1 < 0 or tr.lambda2 < 0):
                raise ConfigError("train.lambda1 / train.lambda2: must be non-negative")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# -- presets and parsing ---------------------------------------------------------------

def preset(name: str) -> ExperimentConfig:
    if name == "swiss_roll":
        return ExperimentConfig(
            mode="rsrae",
            seeds=(0, 1, 2, 3, 4),
            dataset=DatasetConfig(),
            model=ModelConfig(d=2, activation="leaky_relu", output_activation="leaky_relu",
                              batch_norm=False, normalize_latent=False),
            train=TrainSection(epochs=2000, batch_size=None, learning_rate=0.01),
        )
    if name == "generic":
        return ExperimentConfig()
    raise ConfigError(f"preset: unknown preset {name!r}; expected swiss_roll or generic")


def _parse_bool(key, text):
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _coerce(key: str, annotation: str, text: str):
    text = text.strip()
    optional = "None" in annotation
    if optional and text.lower() in ("none", ""):
        return None
    base = annotation.replace("| None", "").strip()
    try:
        if base == "int":
            return int(text)
        if base == "float":
            return float(text)
        if base == "bool":
            return _parse_bool(key, text)
        if base == "str":
            return text
        if base == "tuple":
            return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot read {text!r} as {base}") from None
    raise ConfigError(f"{key}: unsupported field type {annotation}")


_SECTIONS = {"dataset": DatasetConfig, "model": ModelConfig, "train": TrainSection}


def apply_setting(cfg: ExperimentConfig, key: str, text: str) -> ExperimentConfig:
    """Return a copy of ``cfg`` with one dotted key set from its text value."""
    key = key.strip()
    if key == "mode":
        return replace(cfg, mode=text.strip())
    if key == "seeds":
        return replace(cfg, seeds=_coerce(key, "tuple", text))
    section, _, name = key.partition(".")
    if section not in _SECTIONS or not name:
        raise ConfigError(f"{key}: unknown key (expected preset, mode, seeds, or dataset./model./train. fields)")
    sub = getattr(cfg, section)
    types = {f.name: f.type for f in fields(sub)}
    if name not in types:
        raise ConfigError(f"{key}: unknown field; valid: {', '.join(sorted(types))}")
    return replace(cfg, **{section: replace(sub, **{name: _coerce(key, str(types[name]), text)})})


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        pairs.append((lineno, k, v))
    cfg = base
    for lineno, k, v in pairs:
        if k == "preset":
            if lineno != pairs[0][0]:
                raise ConfigError(f"line {lineno}: preset must come first")
            cfg = preset(v)
    cfg = cfg or ExperimentConfig()
    for lineno, k, v in pairs:
        if k == "preset":
            continue
        try:
            cfg = apply_setting(cfg, k, v)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def paper_scale(cfg: ExperimentConfig) -> ExperimentConfig:
    """Full-length Swiss-roll training; other datasets keep their epochs."""
    if cfg.dataset.source != "swiss_roll":
        return cfg
    return replace(cfg, train=replace(cfg.train, epochs=FULL_SCALE_EPOCHS))


# -- runs -------------------------------------------------------------------------------

def make_dataset(cfg: ExperimentConfig, seed: int) -> data_mod.LabeledDataset:
    ds = cfg.dataset
    if ds.source == "swiss_roll":
        n_out = ds.n_outliers
        if ds.outlier_ratio is not None:
            n_out = data_mod.outlier_count(ds.outlier_ratio, ds.n_inliers)
        return data_mod.corrupted_swiss_roll(ds.n_inliers, n_out, ds.sigma, seed)
    loaded = data_mod.load_csv(ds.csv_path, ds.has_labels)
    if ds.outlier_ratio is not None:
        return data_mod.corrupt(loaded, ds.outlier_ratio, seed)
    return loaded


def model_spec(cfg: ExperimentConfig, input_dim: int) -> ModelSpec:
    m = cfg.model
    return ModelSpec(input_dim, tuple(m.encoder_widths), m.d, tuple(m.decoder_widths), m.activation,
                     m.output_activation, m.alpha, m.batch_norm, m.normalize_latent, m.scaled_init)


def train_config(cfg: ExperimentConfig, seed: int) -> TrainConfig:
    t = cfg.train
    return TrainConfig(
        epochs=t.epochs, batch_size=t.batch_size or None, learning_rate=t.learning_rate, mode=cfg.mode,
        eps_ae=t.eps_ae, eps_rsr1=t.eps_rsr1, eps_rsr2=t.eps_rsr2, lambda1=t.lambda1, lambda2=t.lambda2,
        seed=seed, shuffle=t.shuffle, separate_rsr_moments=t.separate_rsr_moments,
        normalize_by_batch=t.normalize_by_batch,
    )


def subspace_to_bytes(S: Subspace, center: np.ndarray, extra: dict | None = None) -> bytes:
    header = {"kind": "subspace", "d": S.dim, "D": S.ambient, "tensors": ["U", "center"], "extra": extra or {}}
    return (CKPT_MAGIC + json.dumps(header, sort_keys=True).encode() + b"\n"
            + T.tensor_to_bytes(S.U) + T.tensor_to_bytes(center))


def _fit_linear(mode, X, d):
    center = np.mean(X, axis=0) if mode == "pca" else coordinate_median(X)
    Y = X - center
    if mode == "pca":
        S = pca_subspace(Y, d)
        return S, center, [float(np.sum(S.residuals(Y)))]
    res = fms(Y, d) if mode == "fms" else sfms(Y, d, center=False)
    return res.subspace, center, res.energies


def _write_history_linear(path, energies):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "energy"])
        for i, e in enumerate(energies):
            w.writerow([i, f"{e:.17g}"])


def _write_histogram(path, report: ScoreReport):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["score", "label"])
        for i, s in enumerate(report.scores):
            w.writerow([f"{s:.17g}", "" if report.labels is None else int(report.labels[i])])


def run_seed(cfg: ExperimentConfig, seed: int, out: Path) -> tuple[ScoreReport, list]:
    """Fit one model and write its artifacts; returns the report and file names."""
    ds = make_dataset(cfg, seed)
    names = {k: f"{k}_seed{seed}.{ext}" for k, ext in
             (("scores", "csv"), ("loss", "csv"), ("model", "ckpt"), ("histogram", "csv"))}
    extra = {"mode": cfg.mode, "seed": seed}
    if cfg.mode in NN_MODES:
        model = init_model(model_spec(cfg, ds.X.shape[1]), seed)
        result = train(model, ds.X, train_config(cfg, seed))
        scores = anomaly_scores(ds.X, model_forward(model, ds.X)[2])
        write_history_csv(out / names["loss"], result.history)
        save_model(out / names["model"], model, extra)
    else:
        if cfg.model.d >= ds.X.shape[1]:
            raise ConfigError(f"model.d: must be below the data dimension {ds.X.shape[1]}, got {cfg.model.d}")
        S, center, energies = _fit_linear(cfg.mode, ds.X, cfg.model.d)
        scores = S.residuals(ds.X - center)
        _write_history_linear(out / names["loss"], energies)
        (out / names["model"]).write_bytes(subspace_to_bytes(S, center, extra))
    report = ScoreReport.build(scores, ds.labels, seed=seed)
    data_mod.save_scores(out / names["scores"], report)
    _write_histogram(out / names["histogram"], report)
    return report, [names[k] for k in ("scores", "loss", "model", "histogram")]


def _summary(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    return float(np.mean(vals)), float(np.std(vals))  # population sd over seeds


@dataclass
class ExperimentResult:
    metrics: dict
    reports: list
    out_dir: Path
    failed: bool = False


def run_experiment(cfg: ExperimentConfig, out_dir) -> ExperimentResult:
    """Train/fit once per seed and write scores, losses, checkpoints,
    histograms and ``metrics.json`` under ``out_dir``.

    On a numeric failure the metrics file is still written, with
    ``status = "failed"`` and the artifacts finished so far, and the error is
    re-raised.
    """
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports, artifacts, error = [], [], None
    try:
        for seed in cfg.seeds:
            rep, files = run_seed(cfg, seed, out)
            reports.append(rep)
            artifacts.extend(files)
    except (TrainingError, T.NonFiniteError, np.linalg.LinAlgError, RankError, DivergenceError) as exc:
        error = exc
    auc_mean, auc_sd = _summary([r.auc for r in reports])
    ap_mean, ap_sd = _summary([r.ap for r in reports])
    metrics = {
        "status": "failed" if error else "ok",
        "error": None if error is None else f"{type(error).__name__}: {error}",
        "mode": cfg.mode,
        "seeds": list(cfg.seeds),
        "config": cfg.to_dict(),
        "per_seed": [r.to_json() for r in reports],
        "auc_mean": auc_mean,
        "auc_sd": auc_sd,
        "ap_mean": ap_mean,
        "ap_sd": ap_sd,
        "artifacts": artifacts,
    }
    with open(out / "metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if error is not None:
        raise error
    return ExperimentResult(metrics, reports, out)


# -- sweeps -----------------------------------------------------------------------------

def _with_axis(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "d":
        return replace(cfg, model=replace(cfg.model, d=int(value)))
    if axis == "learning_rate":
        return replace(cfg, train=replace(cfg.train, learning_rate=float(value)))
    if axis == "lambda":
        l1, l2 = value
        return replace(cfg, train=replace(cfg.train, lambda1=float(l1), lambda2=float(l2)))
    if axis == "outlier_ratio":
        return replace(cfg, dataset=replace(cfg.dataset, outlier_ratio=float(value)))
    raise ConfigError(f"axis: expected one of {SWEEP_AXES}, got {axis!r}")


def check_axis(cfg: ExperimentConfig, axis: str) -> None:
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis: expected one of {SWEEP_AXES}, got {axis!r}")
    if axis == "lambda" and cfg.mode != "rsrae_plus":
        raise ConfigError(f"axis lambda: only meaningful for mode rsrae_plus, not {cfg.mode}")
    if axis == "learning_rate" and cfg.mode in LINEAR_MODES:
        raise ConfigError(f"axis learning_rate: mode {cfg.mode} has no learning rate")


def sweep(cfg: ExperimentConfig, axis: str, out_dir, values=None) -> list[dict]:
    """One run_experiment per value; writes ``sweep_<axis>.csv`` and returns its rows."""
    check_axis(cfg, axis)
    values = DEFAULT_SWEEP_VALUES[axis] if values is None else tuple(values)
    if not values:
        raise ConfigError("values: empty sweep")
    out = Path(out_dir)
    rows = []
    for v in values:
        label = f"{v[0]:g}_{v[1]:g}" if axis == "lambda" else f"{v:g}"
        res = run_experiment(_with_axis(cfg, axis, v).validate(), out / f"{axis}={label}")
        m = res.metrics
        key = {"lambda1": v[0], "lambda2": v[1]} if axis == "lambda" else {"value": v}
        rows.append({**key, "auc_mean": m["auc_mean"], "auc_sd": m["auc_sd"],
                     "ap_mean": m["ap_mean"], "ap_sd": m["ap_sd"]})
    cols = list(rows[0])
    with open(out / f"sweep_{axis}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow(["" if r[c] is None else f"{r[c]:.17g}" for c in cols])
    return rows


def recompute_metrics(score_paths) -> dict:
    """Mean/sd of AUC and AP recomputed from score CSV files."""
    aucs, aps = [], []
    for p in score_paths:
        s, y = data_mod.load_scores(p)
        if y is None:
            raise ValueError(f"{p}: scores carry no labels")
        aucs.append(roc_auc(s, y))
        aps.append(average_precision(s, y))
    (am, asd), (pm, psd) = _summary(aucs), _summary(aps)
    return {"auc_mean": am, "auc_sd": asd, "ap_mean": pm, "ap_sd": psd}
