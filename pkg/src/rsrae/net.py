"""Dense encoder/decoder stacks around a linear RSR layer."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tape, Var


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.99
    eps: float = 1e-5

    @classmethod
    def fresh(cls, width: int, momentum: float = 0.99, eps: float = 1e-5) -> "BatchNormState":
        if eps <= 0:
            raise ValueError("batch norm eps must be positive")
        return cls(np.ones(width), np.zeros(width), np.zeros(width), np.ones(width), momentum, eps)


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "tanh"
    alpha: float = 0.2
    bn: BatchNormState | None = None

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(f"dense layer: weight {self.weight.shape} vs bias {self.bias.shape}")
        if self.activation not in T.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == "leaky_relu" and not 0 < self.alpha < 1:
            raise ValueError(f"leaky_relu slope must lie in (0, 1), got {self.alpha}")

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]


@dataclass
class RsrLayer:
    A: np.ndarray  # (d, D)

    def __post_init__(self):
        if self.A.ndim != 2 or self.A.shape[0] < 1 or self.A.shape[0] >= self.A.shape[1]:
            raise ShapeError(f"RSR matrix must be d x D with 1 <= d < D, got {self.A.shape}")

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def D(self) -> int:
        return self.A.shape[1]


@dataclass
class ModelSpec:
    """Layer widths of an RSR autoencoder.

    ``decoder_widths`` are the hidden decoder widths; a final layer of width
    ``input_dim`` is always appended.
    """

    input_dim: int
    encoder_widths: tuple = (32, 64, 128)
    d: int = 10
    decoder_widths: tuple = (128, 64, 32)
    activation: str = "tanh"
    output_activation: str = "none"
    alpha: float = 0.2
    batch_norm: bool = True
    normalize_latent: bool = True
    scaled_init: bool = True

    def validate(self):
        widths = [self.input_dim, *self.encoder_widths, *self.decoder_widths]
        if any(int(w) < 1 for w in widths) or not self.encoder_widths:
            raise ValueError(f"layer widths must be positive and the encoder non-empty: {widths}")
        if self.d < 1 or self.d >= self.encoder_widths[-1]:
            raise ValueError(
                f"latent dimension d={self.d} must satisfy 1 <= d < D={self.encoder_widths[-1]}"
            )
        for act in (self.activation, self.output_activation):
            if act not in T.ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")


@dataclass
class AutoencoderModel:
    encoder: list
    rsr: RsrLayer
    decoder: list
    normalize_latent: bool = False
    spec: ModelSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.encoder[-1].n_out != self.rsr.D:
            raise ShapeError(f"encoder width {self.encoder[-1].n_out} != D={self.rsr.D}")
        if self.decoder[0].n_in != self.rsr.d:
            raise ShapeError(f"decoder input {self.decoder[0].n_in} != d={self.rsr.d}")
        if self.decoder[-1].n_out != self.encoder[0].n_in:
            raise ShapeError("decoder output width must equal the input dimension")

    @property
    def input_dim(self) -> int:
        return self.encoder[0].n_in

    @property
    def batch_norm(self) -> bool:
        return any(l.bn is not None for l in self.encoder + self.decoder)

    def params(self) -> dict:
        """Trainable arrays by dotted name; the arrays are the model's own (mutable)."""
        out = {}
        for part, layers in (("encoder", self.encoder), ("decoder", self.decoder)):
            for i, layer in enumerate(layers):
                out[f"{part}.{i}.weight"] = layer.weight
                out[f"{part}.{i}.bias"] = layer.bias
                if layer.bn is not None:
                    out[f"{part}.{i}.gamma"] = layer.bn.gamma
                    out[f"{part}.{i}.beta"] = layer.bn.beta
            if part == "encoder":
                out["rsr.A"] = self.rsr.A
        return out

    def buffers(self) -> dict:
        out = {}
        for part, layers in (("encoder", self.encoder), ("decoder", self.decoder)):
            for i, layer in enumerate(layers):
                if layer.bn is not None:
                    out[f"{part}.{i}.running_mean"] = layer.bn.running_mean
                    out[f"{part}.{i}.running_var"] = layer.bn.running_var
        return out

    def copy(self) -> "AutoencoderModel":
        import copy

        return copy.deepcopy(self)


def init_model(spec: ModelSpec, seed: int) -> AutoencoderModel:
    """Standard-normal initialization, optionally scaled by 1/sqrt(fan_in)."""
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(seed))

    def draw(n_out, n_in):
        w = rng.standard_normal((n_out, n_in))
        b = rng.standard_normal(n_out)
        if spec.scaled_init:
            w /= np.sqrt(n_in)
            b /= np.sqrt(n_in)
        return w, b

    def stack(widths, n_in, reconstruct):
        layers = []
        for j, w_out in enumerate(widths):
            last = reconstruct and j == len(widths) - 1
            w, b = draw(w_out, n_in)
            # the reconstruction layer is never batch-normalized
            bn = BatchNormState.fresh(w_out) if spec.batch_norm and not last else None
            act = spec.output_activation if last else spec.activation
            layers.append(DenseLayer(w, b, act, spec.alpha, bn))
            n_in = w_out
        return layers

    encoder = stack(tuple(spec.encoder_widths), spec.input_dim, False)
    D = spec.encoder_widths[-1]
    A = rng.standard_normal((spec.d, D))
    if spec.scaled_init:
        A /= np.sqrt(D)
    dec_widths = (*spec.decoder_widths, spec.input_dim)
    decoder = stack(dec_widths, spec.d, True)
    return AutoencoderModel(encoder, RsrLayer(A), decoder, spec.normalize_latent, spec)


# -- forward passes ---------------------------------------------------------------

def batch_norm_forward(state: BatchNormState, X: np.ndarray, training: bool) -> np.ndarray:
    """Numpy batch norm; training mode uses batch statistics and updates running stats."""
    X = np.asarray(X, dtype=np.float64)
    if training:
        if X.shape[0] < 2:
            raise ValueError("batch norm in training mode needs a batch of at least 2 rows")
        mean, var = X.mean(axis=0), X.var(axis=0)
        m = state.momentum
        state.running_mean[:] = m * state.running_mean + (1 - m) * mean
        state.running_var[:] = m * state.running_var + (1 - m) * var
    else:
        mean, var = state.running_mean, state.running_var
    return state.gamma * (X - mean) / np.sqrt(var + state.eps) + state.beta


def _dense_graph(layer: DenseLayer, x: Var, w: Var, b: Var, gamma, beta, training, update_stats) -> Var:
    h = T.bias_add(T.matmul(x, T.transpose(w)), b)
    if layer.bn is not None:
        st = layer.bn
        if training:
            if h.value.shape[0] < 2:
                raise ValueError("batch norm in training mode needs a batch of at least 2 rows")
            if update_stats:
                m = st.momentum
                st.running_mean[:] = m * st.running_mean + (1 - m) * h.value.mean(axis=0)
                st.running_var[:] = m * st.running_var + (1 - m) * h.value.var(axis=0)
            h = T.batch_norm(h, gamma, beta, eps=st.eps)
        else:
            h = T.batch_norm(h, gamma, beta, st.running_mean, st.running_var, eps=st.eps)
    return T.activation(h, layer.activation, layer.alpha)


def dense_forward(layer: DenseLayer, X) -> np.ndarray:
    """Single layer in inference mode."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != layer.n_in:
        raise ShapeError(f"dense_forward: input shape {X.shape} but layer expects {layer.n_in} columns")
    tape = Tape()
    p = [tape.constant(a) for a in (layer.weight, layer.bias)]
    g = [tape.constant(layer.bn.gamma), tape.constant(layer.bn.beta)] if layer.bn else [None, None]
    return _dense_graph(layer, tape.constant(X), *p, *g, False, False).value


@dataclass
class Graph:
    """Leaves and outputs of one recorded forward pass."""

    tape: Tape
    leaves: dict
    X: Var
    Z: Var
    Z_tilde: Var
    X_rec: Var


def build_graph(
    model: AutoencoderModel,
    X,
    *,
    tape: Tape | None = None,
    training: bool = False,
    update_stats: bool = False,
    track=None,
) -> Graph:
    """Record encoder -> A -> (normalize) -> decoder on a tape.

    ``track`` names the parameters whose gradients are wanted (default: all).
    """
    tape = tape or Tape()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ShapeError(f"model input has shape {X.shape}, expected (N, {model.input_dim})")
    leaves = {}
    for name, arr in model.params().items():
        req = track is None or name in track
        leaves[name] = tape.leaf(arr, requires_grad=req, name=name)

    x = tape.constant(X, name="X")
    h = x
    for i, layer in enumerate(model.encoder):
        h = _graph_layer(model, "encoder", i, layer, h, leaves, training, update_stats)
    z = h
    zt = T.matmul(z, T.transpose(leaves["rsr.A"]))
    dec_in = T.normalize_rows(zt) if model.normalize_latent else zt
    h = dec_in
    for i, layer in enumerate(model.decoder):
        h = _graph_layer(model, "decoder", i, layer, h, leaves, training, update_stats)
    return Graph(tape, leaves, x, z, zt, h)


def _graph_layer(model, part, i, layer, h, leaves, training, update_stats):
    pre = f"{part}.{i}."
    try:
        return _dense_graph(
            layer, h, leaves[pre + "weight"], leaves[pre + "bias"],
            leaves.get(pre + "gamma"), leaves.get(pre + "beta"), training, update_stats,
        )
    except T.NonFiniteError as exc:
        raise T.NonFiniteError(f"{part} layer {i}: {exc}") from exc


def model_forward(model: AutoencoderModel, X, training: bool = False):
    """Return (Z, Z_tilde, X_rec) as arrays. Inference mode by default."""
    g = build_graph(model, X, training=training, track=())
    return g.Z.value, g.Z_tilde.value, g.X_rec.value


# -- checkpoints ---------------------------------------------------------------------

CKPT_MAGIC = b"RSRKCKPT\n"


def _layer_header(layers):
    return [
        {"in": l.n_in, "out": l.n_out, "activation": l.activation, "alpha": l.alpha,
         "bn": None if l.bn is None else {"momentum": l.bn.momentum, "eps": l.bn.eps}}
        for l in layers
    ]


def model_to_bytes(model: AutoencoderModel, extra: dict | None = None) -> bytes:
    tensors = {**model.params(), **model.buffers()}
    header = {
        "kind": "autoencoder",
        "encoder": _layer_header(model.encoder),
        "decoder": _layer_header(model.decoder),
        "d": model.rsr.d,
        "D": model.rsr.D,
        "normalize_latent": model.normalize_latent,
        "tensors": list(tensors),
        "extra": extra or {},
    }
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(json.dumps(header, sort_keys=True).encode() + b"\n")
    for arr in tensors.values():
        buf.write(T.tensor_to_bytes(arr))
    return buf.getvalue()


def read_checkpoint(raw: bytes) -> tuple[dict, dict]:
    """Split a checkpoint into (header, {name: array})."""
    if not raw.startswith(CKPT_MAGIC):
        raise ValueError("not a checkpoint file")
    nl = raw.index(b"\n", len(CKPT_MAGIC))
    header = json.loads(raw[len(CKPT_MAGIC):nl])
    pos = nl + 1
    arrays = {}
    for name in header["tensors"]:
        arrays[name], pos = T.tensor_from_bytes(raw, pos)
    return header, arrays


def model_from_bytes(raw: bytes) -> AutoencoderModel:
    header, arrays = read_checkpoint(raw)
    if header["kind"] != "autoencoder":
        raise ValueError(f"checkpoint holds a {header['kind']!r}, not an autoencoder")

    def layers(part):
        out = []
        for i, h in enumerate(header[part]):
            pre = f"{part}.{i}."
            bn = None
            if h["bn"] is not None:
                bn = BatchNormState(arrays[pre + "gamma"], arrays[pre + "beta"],
                                    arrays[pre + "running_mean"], arrays[pre + "running_var"],
                                    h["bn"]["momentum"], h["bn"]["eps"])
            out.append(DenseLayer(arrays[pre + "weight"], arrays[pre + "bias"], h["activation"], h["alpha"], bn))
        return out

    return AutoencoderModel(layers("encoder"), RsrLayer(arrays["rsr.A"]), layers("decoder"),
                            header["normalize_latent"])


def save_model(path, model: AutoencoderModel, extra: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model, extra))


def load_model(path) -> AutoencoderModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
