"""Reconstruction and RSR penalty terms, and per-sample anomaly scores.

The ``*_term`` functions build graph nodes on a tape and are what the trainers
differentiate. The plain functions evaluate the same graphs on throwaway tapes
and return floats. All losses are sums over samples, never means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tape, Var


def _check_power(p, what):
    if p not in (1, 2):
        raise ValueError(f"{what} exponent must be 1 or 2, got {p}")


def ae_term(x: Var, x_rec: Var, p: int = 1) -> Var:
    """sum_t ||x_t - x_rec_t||^p."""
    _check_power(p, "reconstruction")
    if x.shape != x_rec.shape:
        raise ShapeError(f"reconstruction shapes {x.shape} and {x_rec.shape} differ")
    r = x - x_rec
    return T.sum(T.row_norm(r)) if p == 1 else T.sum(T.square(r))


def rsr1_term(z: Var, A: Var, q: int = 1) -> Var:
    """sum_t ||z_t - A^T A z_t||^q; rows of ``z`` are the latent codes."""
    _check_power(q, "RSR")
    if z.value.ndim != 2 or A.value.ndim != 2 or z.shape[1] != A.shape[1]:
        raise ShapeError(f"latent codes {z.shape} do not match RSR matrix {A.shape}")
    # row form: z - (z A^T) A
    r = z - T.matmul(T.matmul(z, T.transpose(A)), A)
    return T.sum(T.row_norm(r)) if q == 1 else T.sum(T.square(r))


def rsr2_term(A: Var) -> Var:
    """||A A^T - I_d||_F^2."""
    if A.value.ndim != 2:
        raise ShapeError(f"RSR matrix must be 2-D, got {A.shape}")
    eye = A.tape.constant(np.eye(A.shape[0]))
    return T.sum(T.square(T.matmul(A, T.transpose(A)) - eye))


def loss_ae(X, X_rec, p: int = 1) -> float:
    tape = Tape()
    return float(ae_term(tape.constant(X), tape.constant(X_rec), p).value)


def loss_rsr1(Z, A, q: int = 1) -> float:
    tape = Tape()
    return float(rsr1_term(tape.constant(Z), tape.constant(A), q).value)


def loss_rsr2(A) -> float:
    tape = Tape()
    return float(rsr2_term(tape.constant(A)).value)


@dataclass
class LossBreakdown:
    l_ae: float
    l_rsr1: float
    l_rsr2: float
    combined: float
    lambda1: float = 1.0
    lambda2: float = 1.0


def loss_combined(X, Z, A, X_rec, lambda1: float | None = None, lambda2: float | None = None) -> LossBreakdown:
    """All three terms with p = q = 1.

    Weights default to 1 (the unweighted alternating scheme ignores them).
    """
    l1 = 1.0 if lambda1 is None else float(lambda1)
    l2 = 1.0 if lambda2 is None else float(lambda2)
    if l1 < 0 or l2 < 0:
        raise ValueError("loss weights must be non-negative")
    ae = loss_ae(X, X_rec, 1)
    r1 = loss_rsr1(Z, A, 1)
    r2 = loss_rsr2(A)
    return LossBreakdown(ae, r1, r2, ae + l1 * r1 + l2 * r2, l1, l2)


def anomaly_scores(X, X_rec) -> np.ndarray:
    """Row-wise Euclidean distance between inputs and reconstructions (high = anomalous)."""
    X = np.asarray(X, dtype=np.float64)
    X_rec = np.asarray(X_rec, dtype=np.float64)
    if X.shape != X_rec.shape:
        raise ShapeError(f"score inputs have shapes {X.shape} and {X_rec.shape}")
    tape = Tape()
    return T.row_norm(tape.constant(X) - tape.constant(X_rec)).value
