"""Neighborhood smoothing and universal singular value thresholding."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

# Skip the TBB probe, which warns on older system TBB builds.
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .errors import DimensionMismatchError, TooFewNodesError


@dataclass(frozen=True)
class SmootherConfig:
    """Settings for :func:`ns_estimate`.

    Parameters
    ----------
    quantile_constant : float
        ``C0`` in ``h = min(1, C0 * sqrt(log n / n))``.
    symmetrize : bool
        Average the estimate with its transpose.
    clamp_range : tuple of float or None
        Clip the output to this interval; ``None`` leaves it unclipped.
    """

    quantile_constant: float = 1.0
    symmetrize: bool = True
    clamp_range: tuple[float, float] | None = (0.0, 1.0)

    def __post_init__(self):
        if not self.quantile_constant > 0:
            raise ValueError("quantile_constant must be positive")

    def quantile_level(self, n: int) -> float:
        return float(min(1.0, self.quantile_constant * math.sqrt(math.log(n) / n)))

    def unclamped(self) -> "SmootherConfig":
        return SmootherConfig(self.quantile_constant, self.symmetrize, None)


@dataclass(frozen=True)
class NeighborhoodStructure:
    n: int
    delta: np.ndarray
    h: float
    neighborhoods: tuple[np.ndarray, ...]


def _check_square(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {X.shape}")
    if X.shape[0] < 3:
        raise TooFewNodesError("neighborhood smoothing needs at least 3 nodes", n=X.shape[0])
    return X


@numba.njit(parallel=True, cache=True)
def _max_gap(S):
    n = S.shape[0]
    out = np.zeros((n, n))
    for i in numba.prange(n):
        for j in range(i + 1, n):
            m = 0.0
            for k in range(n):
                if k == i or k == j:
                    continue
                v = abs(S[i, k] - S[j, k])
                if v > m:
                    m = v
            out[i, j] = m
            out[j, i] = m
    return out


def ns_dissimilarity(X) -> np.ndarray:
    """Row dissimilarity used to build neighborhoods.

    ``Delta[i, j] = sqrt(max_{k not in {i, j}} |<X_i - X_j, X_k>| / n)``.

    Parameters
    ----------
    X : ndarray of shape (n, n)
        Symmetric matrix, binary or real valued.

    Returns
    -------
    ndarray of shape (n, n)
        Symmetric, nonnegative, zero on the diagonal.
    """
    X = _check_square(X)
    n = X.shape[0]
    S = np.ascontiguousarray(X @ X / n)
    return np.sqrt(_max_gap(S))


def neighborhoods(delta: np.ndarray, h: float) -> np.ndarray:
    """Boolean neighborhood membership matrix from a dissimilarity matrix.

    Row ``i`` admits every ``j != i`` with ``delta[i, j]`` at or below the
    nearest-rank ``h``-quantile of the off-diagonal row entries.
    """
    n = delta.shape[0]
    off = delta.copy()
    np.fill_diagonal(off, np.inf)
    rank = min(max(math.ceil(h * (n - 1)), 1), n - 1)
    q = np.partition(off, rank - 1, axis=1)[:, rank - 1]
    return off <= q[:, None]


def neighborhood_structure(X, cfg: SmootherConfig = SmootherConfig()) -> NeighborhoodStructure:
    delta = ns_dissimilarity(X)
    n = delta.shape[0]
    h = cfg.quantile_level(n)
    member = neighborhoods(delta, h)
    return NeighborhoodStructure(n, delta, h, tuple(np.flatnonzero(row) for row in member))


def ns_estimate(X, cfg: SmootherConfig = SmootherConfig()) -> np.ndarray:
    """Neighborhood-smoothing estimate of a symmetric matrix.

    Each row is replaced by the mean of its neighbors' rows; the result is
    then averaged with its transpose, giving the two-sided estimator.

    Parameters
    ----------
    X : ndarray of shape (n, n)
        Adjacency matrix or any symmetric real matrix, ``n >= 3``.
    cfg : SmootherConfig

    Returns
    -------
    ndarray of shape (n, n)
    """
    X = _check_square(X)
    n = X.shape[0]
    member = neighborhoods(ns_dissimilarity(X), cfg.quantile_level(n)).astype(float)
    member /= member.sum(axis=1, keepdims=True)
    Y = member @ X
    if cfg.symmetrize:
        Y = 0.5 * (Y + Y.T)
    if cfg.clamp_range is not None:
        Y = np.clip(Y, *cfg.clamp_range)
    return Y


def usvt_estimate(A, eta: float = 0.01) -> np.ndarray:
    """Universal singular value thresholding at ``(2 + eta) * sqrt(n)``."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    U, s, Vt = np.linalg.svd(A)
    keep = s > (2.0 + eta) * math.sqrt(n)
    P = (U[:, keep] * s[keep]) @ Vt[keep]
    return np.clip(0.5 * (P + P.T), 0.0, 1.0)
