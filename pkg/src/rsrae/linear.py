"""Linear subspace baselines: PCA, least absolute deviations energy, FMS,
spherical FMS, and linear autoencoders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .losses import ae_term
from .tensor import ShapeError, Tape


class RankError(ValueError):
    def __init__(self, rank, d):
        super().__init__(f"data has rank {rank}, fewer than the requested d={d}")
        self.rank = rank


@dataclass
class Subspace:
    """d-dimensional linear subspace of R^D held as an orthonormal basis (D x d)."""

    U: np.ndarray

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=np.float64)
        if self.U.ndim != 2 or self.U.shape[1] > self.U.shape[0]:
            raise ShapeError(f"basis must be D x d with d <= D, got {self.U.shape}")
        err = np.linalg.norm(self.U.T @ self.U - np.eye(self.U.shape[1]))
        if err > 1e-10:
            raise ValueError(f"basis columns are not orthonormal (||U^T U - I|| = {err:.2e})")

    @property
    def ambient(self) -> int:
        return self.U.shape[0]

    @property
    def dim(self) -> int:
        return self.U.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.U @ self.U.T

    def residuals(self, Y) -> np.ndarray:
        """Distance of every row of Y to the subspace."""
        Y = np.asarray(Y, dtype=np.float64)
        if Y.ndim != 2 or Y.shape[1] != self.ambient:
            raise ShapeError(f"data shape {Y.shape} does not match ambient dimension {self.ambient}")
        R = Y - (Y @ self.U) @ self.U.T
        return np.sqrt(np.einsum("ij,ij->i", R, R))


def _fix_signs(U):
    # largest-magnitude entry of each column made positive
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def _top_right_singular(Y, d):
    _, s, Vt = np.linalg.svd(Y, full_matrices=False)
    tol = s[0] * max(Y.shape) * np.finfo(float).eps if s.size else 0.0
    rank = int(np.sum(s > tol))
    if rank < d:
        raise RankError(rank, d)
    return _fix_signs(Vt[:d].T)


def random_subspace(D: int, d: int, rng) -> Subspace:
    Q, _ = np.linalg.qr(rng.standard_normal((D, d)))
    return Subspace(Q)


def pca_subspace(Y, d: int) -> Subspace:
    """Top-d right singular subspace of Y; Y is taken as already centered."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or not 1 <= d <= min(Y.shape):
        raise ValueError(f"need 1 <= d <= min(N, D) for data of shape {Y.shape}, got d={d}")
    return Subspace(_top_right_singular(Y, d))


def lad_energy(S: Subspace, Y, q: int = 1) -> float:
    """Sum of q-th powers of the distances from the rows of Y to S."""
    if q not in (1, 2):
        raise ValueError(f"q must be 1 or 2, got {q}")
    return float(np.sum(S.residuals(Y) ** q))


def regularized_lad_energy(S: Subspace, Y, delta: float) -> float:
    """LAD energy with the distance replaced by a quadratic below ``delta``.

    This is the quantity the FMS reweighting majorizes, so it cannot increase
    from one iteration to the next.
    """
    r = S.residuals(Y)
    return float(np.sum(np.where(r >= delta, r, r * r / (2 * delta) + delta / 2)))


def principal_angle(S1: Subspace, S2: Subspace) -> float:
    """Largest principal angle in radians.

    Cosines come from the singular values of U1^T U2; the sine from the
    spectral norm of the part of U2 outside S1. atan2 of the pair stays
    accurate near 0 and near pi/2.
    """
    if S1.U.shape != S2.U.shape:
        raise ShapeError(f"subspace bases differ in shape: {S1.U.shape} vs {S2.U.shape}")
    cos = np.clip(np.linalg.svd(S1.U.T @ S2.U, compute_uv=False).min(), 0.0, 1.0)
    R = S2.U - S1.U @ (S1.U.T @ S2.U)
    sin = np.clip(np.linalg.norm(R, 2), 0.0, 1.0)
    return float(np.arctan2(sin, cos))


@dataclass
class FMSResult:
    subspace: Subspace
    energies: list  # regularized energy before the first and after each iteration
    n_iter: int
    converged: bool


def fms(Y, d: int, delta: float = 1e-10, max_iters: int = 100, tol: float = 1e-8,
        init: Subspace | None = None) -> FMSResult:
    """Fast-median-subspace style IRLS for the least absolute deviations subspace.

    Each iteration replaces the subspace by the top-d singular subspace of the
    rows y_t / sqrt(max(dist(y_t, S), delta)).
    """
    Y = np.asarray(Y, dtype=np.float64)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if Y.ndim != 2 or Y.shape[0] <= d:
        raise ValueError(f"need more than d={d} samples, data shape {Y.shape}")
    S = init if init is not None else pca_subspace(Y, d)
    energies = [regularized_lad_energy(S, Y, delta)]
    converged = False
    k = 0
    for k in range(1, max_iters + 1):
        w = 1.0 / np.sqrt(np.maximum(S.residuals(Y), delta))
        try:
            S_new = Subspace(_top_right_singular(Y * w[:, None], d))
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"FMS iteration {k}: {exc}") from exc
        energies.append(regularized_lad_energy(S_new, Y, delta))
        step = principal_angle(S, S_new)
        S = S_new
        if step < tol:
            converged = True
            break
    return FMSResult(S, energies, k, converged)


def coordinate_median(Y) -> np.ndarray:
    return np.median(np.asarray(Y, dtype=np.float64), axis=0)


def spherical_normalize(Y, center: bool = True) -> tuple[np.ndarray, int]:
    """Subtract the coordinate-wise median, then scale rows to unit length.

    Returns the normalized rows and the number of zero rows dropped.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if center:
        Y = Y - coordinate_median(Y)
    n = np.sqrt(np.einsum("ij,ij->i", Y, Y))
    keep = n > 0
    if not keep.any():
        raise ValueError("all rows are zero after centering")
    return Y[keep] / n[keep, None], int((~keep).sum())


def sfms(Y, d: int, center: bool = True, **kw) -> FMSResult:
    Yn, _ = spherical_normalize(Y, center)
    return fms(Yn, d, **kw)


# -- linear autoencoder -------------------------------------------------------------------

class DivergenceError(RuntimeError):
    pass


@dataclass
class LinearAE:
    E: np.ndarray  # (d, D) encoder
    D_mat: np.ndarray  # (D, d) decoder

    @property
    def product(self) -> np.ndarray:
        return self.D_mat @ self.E


@dataclass
class LinearAEConfig:
    p: int = 2
    learning_rate: float | None = None  # default: 0.1 / top eigenvalue of Y^T Y / N
    max_iters: int = 100_000
    tol: float = 1e-9
    seed: int = 0


def _linear_ae_loss_and_grad(Y, E, Dm, p):
    tape = Tape()
    e = tape.leaf(E, name="E")
    dm = tape.leaf(Dm, name="D")
    y = tape.constant(Y)
    rec = T.matmul(T.matmul(y, T.transpose(e)), T.transpose(dm))
    loss = T.scale(ae_term(y, rec, p), 1.0 / Y.shape[0])
    g = tape.backward(loss)
    return float(loss.value), g[e], g[dm]


def train_linear_ae(Y, d: int, config: LinearAEConfig | None = None) -> LinearAE:
    """Gradient descent on the mean of ||y - D E y||^p over the rows of Y.

    Stops once the gradient norm drops below ``config.tol`` (p = 2) or after
    ``max_iters``. Raises DivergenceError if the loss rises 10 times in a row
    or overflows.
    """
    config = config or LinearAEConfig()
    if config.p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    Y = T.as_tensor(Y, name="Y")
    N, D = Y.shape
    if not 1 <= d < D:
        raise ValueError(f"need 1 <= d < D={D}, got d={d}")
    rng = np.random.Generator(np.random.PCG64(config.seed))
    E = rng.standard_normal((d, D)) / np.sqrt(D)
    Dm = rng.standard_normal((D, d)) / np.sqrt(d)
    lr = config.learning_rate
    if lr is None:
        lr = 0.1 / np.linalg.eigvalsh(Y.T @ Y / N)[-1]
    prev, rises = np.inf, 0
    for it in range(config.max_iters):
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                loss, gE, gD = _linear_ae_loss_and_grad(Y, E, Dm, config.p)
            except T.NonFiniteError:
                raise DivergenceError(f"loss overflowed after {it} iterations") from None
        rises = rises + 1 if loss > prev else 0
        if rises >= 10:
            raise DivergenceError(f"loss increased 10 iterations in a row (now {loss:.3e})")
        prev = loss
        if config.p == 2 and np.sqrt(np.sum(gE ** 2) + np.sum(gD ** 2)) < config.tol:
            break
        E = E - lr * gE
        Dm = Dm - lr * gD
    return LinearAE(E, Dm)
