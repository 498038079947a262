"""2-Wasserstein geometry of Gaussians and their best low-rank approximations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linear import Subspace
from .tensor import ShapeError


@dataclass
class Gaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        D = self.mean.shape[0]
        if self.mean.ndim != 1 or self.cov.shape != (D, D):
            raise ShapeError(f"mean {self.mean.shape} and covariance {self.cov.shape} do not match")
        if np.max(np.abs(self.cov - self.cov.T), initial=0.0) > 1e-10:
            raise ValueError("covariance is not symmetric")
        if np.linalg.eigvalsh(self.cov)[0] < -1e-10:
            raise ValueError("covariance is not positive semidefinite")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    """Symmetric square root.

    Eigenvalues at roundoff level are set to zero first; otherwise a rank
    deficient input picks up sqrt(1e-16) = 1e-8 errors.
    """
    M = (M + M.T) / 2
    w, V = np.linalg.eigh(M)
    if w[0] < -1e-8 * max(1.0, abs(w[-1])):
        raise np.linalg.LinAlgError(f"matrix is indefinite (smallest eigenvalue {w[0]:.3e})")
    floor = M.shape[0] * np.finfo(float).eps * max(abs(w[-1]), 0.0)
    w = np.where(w > floor, w, 0.0)
    return (V * np.sqrt(w)) @ V.T


def gaussian_w2(g1: Gaussian, g2: Gaussian) -> float:
    """Closed-form 2-Wasserstein distance (Bures metric on covariances)."""
    if g1.dim != g2.dim:
        raise ShapeError(f"dimensions differ: {g1.dim} vs {g2.dim}")
    r1 = psd_sqrt(g1.cov)
    cross = psd_sqrt(r1 @ g2.cov @ r1)
    dm = g1.mean - g2.mean
    w2sq = dm @ dm + np.trace(g1.cov) + np.trace(g2.cov) - 2 * np.trace(cross)
    return float(np.sqrt(max(w2sq, 0.0)))


def project_gaussian(g: Gaussian, S: Subspace) -> Gaussian:
    """Law of P X for X ~ g, P the orthoprojector onto S."""
    if S.ambient != g.dim:
        raise ShapeError(f"subspace lives in R^{S.ambient}, Gaussian in R^{g.dim}")
    P = S.projector
    return Gaussian(P @ g.mean, P @ g.cov @ P)


def best_rank_d_gaussian(g: Gaussian, d: int) -> tuple[Subspace, Gaussian]:
    """Rank-d Gaussian closest to a full-rank ``g`` in W2.

    Same mean, covariance compressed onto the top-d eigenspace.
    """
    if not 1 <= d <= g.dim:
        raise ValueError(f"need 1 <= d <= {g.dim}, got {d}")
    w, V = np.linalg.eigh(g.cov)
    if w[0] <= 1e-12 * max(1.0, w[-1]):
        raise ValueError("covariance is rank deficient")
    S = Subspace(V[:, ::-1][:, :d])
    P = S.projector
    return S, Gaussian(g.mean.copy(), P @ g.cov @ P)
