"""Feature matrices and the small dense linear-algebra kernel."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SingularSystemError

__all__ = [
    "FeatureMatrix",
    "RankReport",
    "as_matrix",
    "check_rank",
    "spectral_norm",
    "weighted_operator_norm",
    "center_features",
    "projection_matrix",
    "scale_to_norm",
]

RANK_TOL = 1e-10


@dataclass(frozen=True)
class FeatureMatrix:
    """A |S||A| x K (or |S| x K) feature matrix with cached singular values."""

    X: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim != 2 or X.size == 0:
            raise InvalidInputError(f"feature matrix must be a nonempty 2-D array, got shape {X.shape}")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        sv = np.linalg.svd(X, compute_uv=False)
        object.__setattr__(self, "singular_values", sv)

    @property
    def shape(self):
        return self.X.shape

    @property
    def n_features(self):
        return self.X.shape[1]

    @property
    def sigma_max(self):
        return float(self.singular_values[0])

    @property
    def sigma_min(self):
        # a wide matrix has K - rows zero singular values that svd does not list
        if self.X.shape[1] > self.X.shape[0]:
            return 0.0
        return float(self.singular_values[-1])

    @property
    def norm(self):
        return self.sigma_max

    @property
    def full_rank(self):
        return self.sigma_min > RANK_TOL

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.X, dtype=dtype)


def as_matrix(X):
    return np.asarray(X.X if isinstance(X, FeatureMatrix) else X, dtype=float)


@dataclass(frozen=True)
class RankReport:
    sigma_min: float
    sigma_max: float
    full_rank: bool


def check_rank(X) -> RankReport:
    fm = X if isinstance(X, FeatureMatrix) else FeatureMatrix(X)
    return RankReport(fm.sigma_min, fm.sigma_max, fm.full_rank)


def spectral_norm(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def weighted_operator_norm(P, d) -> float:
    """``||P||_D = ||D^{1/2} P D^{-1/2}||`` with ``D = diag(d)``."""
    d = np.asarray(d, dtype=float)
    if (d <= 0).any():
        raise InvalidInputError("weighted norm needs a strictly positive distribution")
    root = np.sqrt(d)
    return spectral_norm(root[:, None] * np.asarray(P, dtype=float) / root[None, :])


def center_features(X, d) -> FeatureMatrix:
    """Subtract the d-weighted mean row so that ``X_c^T d = 0``."""
    X = as_matrix(X)
    d = np.asarray(d, dtype=float)
    Xc = X - (d @ X)[None, :]
    # one correction pass removes the rounding left by the first subtraction
    Xc = Xc - (d @ Xc)[None, :] / d.sum()
    return FeatureMatrix(Xc)


def projection_matrix(X, d, eta=0.0) -> np.ndarray:
    """Ridge-regularized weighted projection ``X (X^T D X + eta I)^{-1} X^T D``."""
    X = as_matrix(X)
    d = np.asarray(d, dtype=float)
    if eta < 0:
        raise InvalidInputError("ridge weight must be nonnegative")
    XtD = X.T * d[None, :]
    G = XtD @ X + eta * np.eye(X.shape[1])
    if eta == 0 and np.linalg.matrix_rank(G, tol=RANK_TOL) < X.shape[1]:
        raise SingularSystemError("X^T D X is singular; an unregularized projection needs full column rank")
    return X @ np.linalg.solve(G, XtD)


def scale_to_norm(X, c) -> FeatureMatrix:
    """Rescale so that the spectral norm equals ``c``."""
    X = as_matrix(X)
    n = spectral_norm(X)
    if n == 0:
        raise InvalidInputError("cannot rescale an all-zero feature matrix")
    return FeatureMatrix(X * (c / n))
