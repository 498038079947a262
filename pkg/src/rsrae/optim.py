"""Adam and the three training procedures for the RSR autoencoder.

``train_rsrae`` alternates three gradient steps per batch (reconstruction on
every parameter, then each RSR penalty on A alone). ``train_rsrae_plus`` takes
one step on the weighted sum. ``train_plain_ae`` ignores the RSR penalties but
keeps A in the architecture.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .losses import ae_term, rsr1_term, rsr2_term
from .net import AutoencoderModel, _dense_graph, build_graph
from .tensor import NonFiniteError, ShapeError, Tape

MODES = ("rsrae", "rsrae_plus", "ae", "ae1")


class TrainingError(RuntimeError):
    """Non-finite loss or gradient during training."""

    def __init__(self, msg, epoch=None, batch=None):
        super().__init__(msg if epoch is None else f"epoch {epoch}, batch {batch}: {msg}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")


def adam_step(state: AdamState, params: dict, grads: dict) -> dict:
    """Bias-corrected Adam update, in place on ``params[name]`` for each name in ``grads``.

    Step counters are kept per parameter, so a parameter updated several times
    per batch advances its own counter each time.
    """
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
            state.t[name] = 0
        v = state.v[name]
        state.t[name] += 1
        t = state.t[name]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        mhat = m / (1 - state.beta1 ** t)
        vhat = v / (1 - state.beta2 ** t)
        p -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return params


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int | None = 128  # None or 0: full batch
    learning_rate: float = 0.00025
    mode: str = "rsrae"
    eps_ae: float = 0.0
    eps_rsr1: float = 0.0
    eps_rsr2: float = 0.0
    lambda1: float = 0.1
    lambda2: float = 0.1
    seed: int = 0
    shuffle: bool = True
    separate_rsr_moments: bool = False
    normalize_by_batch: bool = True

    def validate(self, n: int):
        if n < 1:
            raise ValueError("empty dataset")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size and not 1 <= self.batch_size <= n:
            raise ValueError(f"batch_size must lie in [1, {n}], got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass
class TrainResult:
    model: AutoencoderModel
    history: np.ndarray  # (epochs, 3): l_ae, l_rsr1, l_rsr2 summed over batches

    def save_history(self, path) -> None:
        write_history_csv(path, self.history)


def write_history_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "l_ae", "l_rsr1", "l_rsr2"])
        for i, row in enumerate(np.asarray(history)):
            w.writerow([i + 1, *(f"{v:.17g}" for v in row)])


def batches(n: int, batch_size: int | None, rng=None, *, min_size: int = 1) -> list:
    """Index arrays covering range(n) once; a trailing batch smaller than
    ``min_size`` is folded into its predecessor."""
    order = rng.permutation(n) if rng is not None else np.arange(n)
    bs = batch_size or n
    parts = [order[i:i + bs] for i in range(0, n, bs)]
    if len(parts) > 1 and len(parts[-1]) < min_size:
        tail = parts.pop()
        parts[-1] = np.concatenate([parts[-1], tail])
    return parts


def encode(model: AutoencoderModel, X, training: bool = False) -> np.ndarray:
    """Encoder output only, no gradient tracking and no running-stat updates."""
    tape = Tape(check_finite=False)
    h = tape.constant(X)
    for layer in model.encoder:
        w, b = tape.constant(layer.weight), tape.constant(layer.bias)
        g = (tape.constant(layer.bn.gamma), tape.constant(layer.bn.beta)) if layer.bn else (None, None)
        h = _dense_graph(layer, h, w, b, *g, training, False)
    return h.value


def _grads_by_name(grads: dict, scale: float) -> dict:
    return {leaf.name: g * scale for leaf, g in grads.items()}


# -- single-batch sub-steps --------------------------------------------------------

def _checked(tape: Tape, val: float) -> float:
    # tapes below skip per-node checks; a non-finite node always reaches the loss
    if not np.isfinite(val):
        tape.raise_first_nonfinite()
        raise NonFiniteError("loss is not finite")
    return val


def _step_ae(model, Xb, opt, p, eps, normalize):
    g = build_graph(model, Xb, tape=Tape(check_finite=False), training=True, update_stats=True)
    loss = ae_term(g.X, g.X_rec, p)
    val = _checked(g.tape, float(loss.value))
    if val > eps:
        grads = g.tape.backward(loss)
        adam_step(opt, model.params(), _grads_by_name(grads, 1.0 / len(Xb) if normalize else 1.0))
    return val, g.Z.value


def step_ae(model, Xb, opt: AdamState, p: int = 1, eps: float = 0.0, normalize=True) -> float:
    """Reconstruction step on every parameter; skipped unless loss > eps."""
    return _step_ae(model, Xb, opt, p, eps, normalize)[0]


def step_rsr1(model, Xb, opt: AdamState, eps: float = 0.0, normalize=True) -> float:
    """Projection-residual step on A only, latent codes held fixed."""
    Z = encode(model, Xb, training=True)
    tape = Tape()
    A = tape.leaf(model.rsr.A, name="rsr.A")
    loss = rsr1_term(tape.constant(Z), A, 1)
    val = float(loss.value)
    if val > eps:
        grads = tape.backward(loss)
        adam_step(opt, model.params(), _grads_by_name(grads, 1.0 / len(Xb) if normalize else 1.0))
    return val


def step_rsr2(model, opt: AdamState, eps: float = 0.0, batch_rows: int = 1, normalize=True) -> float:
    """Orthogonality step on A only."""
    tape = Tape()
    A = tape.leaf(model.rsr.A, name="rsr.A")
    loss = rsr2_term(A)
    val = float(loss.value)
    if val > eps:
        grads = tape.backward(loss)
        adam_step(opt, model.params(), _grads_by_name(grads, 1.0 / batch_rows if normalize else 1.0))
    return val


def step_joint(model, Xb, opt: AdamState, lambda1: float, lambda2: float, eps: float = 0.0, normalize=True):
    """One step on L_AE^1 + lambda1 L_RSR1 + lambda2 L_RSR2 over all parameters."""
    g = build_graph(model, Xb, tape=Tape(check_finite=False), training=True, update_stats=True)
    ae = ae_term(g.X, g.X_rec, 1)
    r1 = rsr1_term(g.Z, g.leaves["rsr.A"], 1)
    r2 = rsr2_term(g.leaves["rsr.A"])
    vals = tuple(_checked(g.tape, float(v.value)) for v in (ae, r1, r2))
    if vals[0] > eps:
        total = ae + T.scale(r1, lambda1) + T.scale(r2, lambda2)
        grads = g.tape.backward(total)
        adam_step(opt, model.params(), _grads_by_name(grads, 1.0 / len(Xb) if normalize else 1.0))
    return vals


# -- epoch loops --------------------------------------------------------------------

Callback = Callable[[int, int, str, AutoencoderModel], None]


def _loop(model, X, config: TrainConfig, body, callback) -> TrainResult:
    X = T.as_tensor(X, name="X")
    if X.ndim != 2:
        raise ShapeError(f"training data must be a matrix, got shape {X.shape}")
    config.validate(X.shape[0])
    history = np.zeros((config.epochs, 3))
    min_size = 2 if model.batch_norm else 1
    for epoch in range(config.epochs):
        rng = np.random.default_rng([config.seed, epoch]) if config.shuffle else None
        for b, idx in enumerate(batches(X.shape[0], config.batch_size, rng, min_size=min_size)):
            try:
                # overflow surfaces below as TrainingError, so numpy's warnings are noise
                with np.errstate(over="ignore", invalid="ignore"):
                    vals = body(X[idx], epoch, b)
            except NonFiniteError as exc:
                raise TrainingError(str(exc), epoch, b) from exc
            if not all(np.isfinite(vals)):
                raise TrainingError("non-finite loss", epoch, b)
            history[epoch] += vals
    return TrainResult(model, history)


def train_rsrae(model: AutoencoderModel, X, config: TrainConfig, callback: Callback | None = None) -> TrainResult:
    """Alternating minimization: three conditional sub-steps per batch, in order."""
    opt = AdamState(config.learning_rate)
    # one moment set for A across sub-steps unless asked otherwise
    opt_r1 = AdamState(config.learning_rate) if config.separate_rsr_moments else opt
    opt_r2 = AdamState(config.learning_rate) if config.separate_rsr_moments else opt
    norm = config.normalize_by_batch

    def body(Xb, epoch, b):
        ae = step_ae(model, Xb, opt, 1, config.eps_ae, norm)
        if callback:
            callback(epoch, b, "ae", model)
        r1 = step_rsr1(model, Xb, opt_r1, config.eps_rsr1, norm)
        if callback:
            callback(epoch, b, "rsr1", model)
        r2 = step_rsr2(model, opt_r2, config.eps_rsr2, len(Xb), norm)
        if callback:
            callback(epoch, b, "rsr2", model)
        return ae, r1, r2

    return _loop(model, X, config, body, callback)


def train_rsrae_plus(model: AutoencoderModel, X, config: TrainConfig, callback: Callback | None = None) -> TrainResult:
    if config.lambda1 < 0 or config.lambda2 < 0:
        raise ValueError("lambda1 and lambda2 must be non-negative")
    opt = AdamState(config.learning_rate)

    def body(Xb, epoch, b):
        vals = step_joint(model, Xb, opt, config.lambda1, config.lambda2, config.eps_ae, config.normalize_by_batch)
        if callback:
            callback(epoch, b, "joint", model)
        return vals

    return _loop(model, X, config, body, callback)


def train_plain_ae(model: AutoencoderModel, X, config: TrainConfig, p: int = 2,
                   callback: Callback | None = None) -> TrainResult:
    """Reconstruction-only training (L_AE^p), A kept as an ordinary linear layer."""
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    opt = AdamState(config.learning_rate)

    def body(Xb, epoch, b):
        val, Z = _step_ae(model, Xb, opt, p, config.eps_ae, config.normalize_by_batch)
        if callback:
            callback(epoch, b, "ae", model)
        # RSR terms at the pre-step codes, for monitoring only
        tape = Tape()
        A = tape.constant(model.rsr.A)
        return val, float(rsr1_term(tape.constant(Z), A, 1).value), float(rsr2_term(A).value)

    return _loop(model, X, config, body, callback)


def train(model: AutoencoderModel, X, config: TrainConfig, callback: Callback | None = None) -> TrainResult:
    if config.mode == "rsrae":
        return train_rsrae(model, X, config, callback)
    if config.mode == "rsrae_plus":
        return train_rsrae_plus(model, X, config, callback)
    if config.mode == "ae":
        return train_plain_ae(model, X, config, 2, callback)
    if config.mode == "ae1":
        return train_plain_ae(model, X, config, 1, callback)
    raise ValueError(f"unknown mode {config.mode!r}")
