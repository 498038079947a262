"""Command line entry point: ``rsrae {run,sweep,score,metrics}``.

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiment as ex
from .data import load_csv, load_scores, save_scores
from .linear import DivergenceError, RankError, Subspace
from .losses import anomaly_scores
from .metrics import ScoreReport
from .net import model_forward, model_from_bytes, read_checkpoint
from .optim import TrainingError
from .tensor import NonFiniteError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _config(args) -> ex.ExperimentConfig:
    cfg = ex.load_config(args.config) if args.config else ex.preset(args.preset)
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ex.ConfigError(f"--set {item!r}: expected key=value")
        cfg = ex.apply_setting(cfg, key, value)
    if args.seed:
        cfg = replace(cfg, seeds=tuple(args.seed))
    if args.paper_scale:
        cfg = ex.paper_scale(cfg)
    return cfg.validate()


def _parse_values(axis: str, text: str | None):
    if text is None:
        return None
    try:
        if axis == "lambda":
            pairs = [p.split(":") for p in text.split(",") if p.strip()]
            return [(float(a), float(b)) for a, b in pairs]
        conv = int if axis == "d" else float
        return [conv(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ex.ConfigError(f"--values {text!r}: cannot parse for axis {axis}") from None


def cmd_run(args) -> int:
    res = ex.run_experiment(_config(args), args.out)
    m = res.metrics
    for r in res.reports:
        print(f"seed {r.seed}: auc={_fmt(r.auc)} ap={_fmt(r.ap)}")
    print(f"mean auc={_fmt(m['auc_mean'])} (sd {_fmt(m['auc_sd'])}) "
          f"ap={_fmt(m['ap_mean'])} (sd {_fmt(m['ap_sd'])}) -> {Path(args.out) / 'metrics.json'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    rows = ex.sweep(cfg, args.axis, args.out, _parse_values(args.axis, args.values))
    for r in rows:
        key = f"{r['lambda1']:g}/{r['lambda2']:g}" if args.axis == "lambda" else f"{r['value']:g}"
        print(f"{args.axis}={key}: auc={_fmt(r['auc_mean'])} ap={_fmt(r['ap_mean'])}")
    return EXIT_OK


def cmd_score(args) -> int:
    raw = Path(args.checkpoint).read_bytes()
    try:
        header, arrays = read_checkpoint(raw)
    except (ValueError, KeyError) as exc:
        raise ex.ConfigError(f"{args.checkpoint}: {exc}") from None
    ds = load_csv(args.data, args.has_labels)
    if header["kind"] == "autoencoder":
        model = model_from_bytes(raw)
        if ds.X.shape[1] != model.input_dim:
            raise ex.ConfigError(f"{args.data}: {ds.X.shape[1]} columns, model expects {model.input_dim}")
        scores = anomaly_scores(ds.X, model_forward(model, ds.X)[2])
    elif header["kind"] == "subspace":
        S = Subspace(arrays["U"])
        if ds.X.shape[1] != S.ambient:
            raise ex.ConfigError(f"{args.data}: {ds.X.shape[1]} columns, subspace lives in R^{S.ambient}")
        scores = S.residuals(ds.X - arrays["center"])
    else:
        raise ex.ConfigError(f"{args.checkpoint}: unknown checkpoint kind {header['kind']!r}")
    report = ScoreReport.build(scores, ds.labels, threshold=args.threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_scores(out / "scores.csv", report)
    print(json.dumps(report.to_json(), sort_keys=True))
    return EXIT_OK


def cmd_metrics(args) -> int:
    scores, labels = load_scores(args.scores)
    if labels is None:
        raise ex.ConfigError(f"{args.scores}: no labels, cannot compute AUC/AP")
    print(json.dumps(ScoreReport.build(scores, labels).to_json(), sort_keys=True))
    return EXIT_OK


def _fmt(v):
    return "n/a" if v is None else f"{v:.4f}"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rsrae", description="Autoencoder anomaly detection with an RSR layer.")
    sub = p.add_subparsers(dest="command", required=True)

    def experiment_flags(sp):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--preset", default="swiss_roll", choices=("swiss_roll", "generic"),
                        help="starting point when --config is absent (default: swiss_roll)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        sp.add_argument("--seed", type=int, action="append", help="seed (repeatable); replaces config seeds")
        sp.add_argument("--paper-scale", action="store_true", help="10000 Swiss-roll epochs instead of 2000")
        sp.add_argument("--out", required=True, help="output directory")

    run = sub.add_parser("run", help="train/fit per seed and write artifacts")
    experiment_flags(run)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="run once per value of one parameter")
    experiment_flags(sw)
    sw.add_argument("--axis", required=True, choices=ex.SWEEP_AXES)
    sw.add_argument("--values", help="comma-separated values; lambda pairs as l1:l2 (default: built-in grid)")
    sw.set_defaults(func=cmd_sweep)

    sc = sub.add_parser("score", help="apply a saved checkpoint to a CSV")
    sc.add_argument("--checkpoint", required=True)
    sc.add_argument("--data", required=True)
    sc.add_argument("--has-labels", action="store_true", help="last CSV column is a 0/1 label")
    sc.add_argument("--threshold", type=float, help="also label rows with score > threshold")
    sc.add_argument("--out", required=True, help="output directory")
    sc.set_defaults(func=cmd_score)

    me = sub.add_parser("metrics", help="recompute AUC/AP from a score CSV")
    me.add_argument("--scores", required=True)
    me.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TrainingError, NonFiniteError, DivergenceError, RankError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:  # ConfigError, CsvFormatError, bad paths, bad ratios
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
