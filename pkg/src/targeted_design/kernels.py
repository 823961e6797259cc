"""Covariance kernels and Cholesky machinery for the Gram matrices they produce.

Two kernel families are supported:

* squared exponential: ``C(x, x') = exp(-||x - x'||^2 / (2 * omega))``
* dot product: ``C(x, x') = omega + x . x'``

Both are evaluated through symmetric expressions, so ``kernel_eval(x, x', k)``
and ``kernel_eval(x', x, k)`` return bitwise-identical floats and Gram
matrices are exactly symmetric.

Factorization works on ``K = Phi + I / s_eps`` style matrices that are
positive definite in exact arithmetic but may lose that property to rounding.
``factorize_spd`` retries along a fixed jitter ladder and records the jitter
that succeeded; ``extend_factorization`` grows an existing factor by one
row/column in O(n^2) without touching the leading block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky as _cholesky
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist

from .errors import FactorizationError, ParameterError, ShapeError, SingularExtensionError

RBF = "rbf"
DOT_PRODUCT = "dot-product"
_VARIANTS = (RBF, DOT_PRODUCT)

# Jitter ladder: 0, base, 10*base, ..., capped at 1e-4 in absolute terms.
JITTER_BASE = 1e-10
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class Kernel:
    """A kernel family plus its single hyperparameter.

    ``omega`` is the bandwidth for the squared exponential variant (must be
    positive) and the additive constant for the dot product variant (any
    float).
    """

    variant: str
    omega: float = 1.0

    def __post_init__(self) -> None:
        if self.variant not in _VARIANTS:
            raise ParameterError(
                f"unknown kernel variant {self.variant!r}; expected one of {_VARIANTS}"
            )
        if not np.isfinite(self.omega):
            raise ParameterError(f"omega must be finite, got {self.omega!r}")
        if self.variant == RBF and self.omega <= 0.0:
            raise ParameterError(f"rbf bandwidth must be positive, got {self.omega!r}")

    @classmethod
    def rbf(cls, omega: float = 1.0) -> "Kernel":
        return cls(RBF, float(omega))

    @classmethod
    def dot_product(cls, omega: float = 1.0) -> "Kernel":
        return cls(DOT_PRODUCT, float(omega))


def _as_points(X: np.ndarray, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ShapeError(f"{name} must be a vector or a 2-d array, got shape {X.shape}")
    return X


def kernel_eval(x: np.ndarray, x2: np.ndarray, kernel: Kernel) -> float:
    """Evaluate the kernel on a single pair of points."""
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.shape != x2.shape:
        raise ShapeError(f"point dimensions differ: {x.shape} vs {x2.shape}")
    if kernel.variant == RBF:
        diff = x - x2
        return float(np.exp(-diff.dot(diff) / (2.0 * kernel.omega)))
    return float(kernel.omega + x.dot(x2))


def kernel_cross(X: np.ndarray, X2: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Cross-covariance matrix between two point sets, shape (n, m).

    One-dimensional inputs are treated as a single point.
    """
    X = _as_points(X, "X")
    X2 = _as_points(X2, "X2")
    if X.shape[0] and X2.shape[0] and X.shape[1] != X2.shape[1]:
        raise ShapeError(f"point dimensions differ: {X.shape[1]} vs {X2.shape[1]}")
    if X.shape[0] == 0 or X2.shape[0] == 0:
        return np.zeros((X.shape[0], X2.shape[0]))
    if kernel.variant == RBF:
        return np.exp(-cdist(X, X2, "sqeuclidean") / (2.0 * kernel.omega))
    return kernel.omega + X @ X2.T


def gram_matrix(X: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Kernel Gram matrix of a point set, exactly symmetric."""
    X = _as_points(X, "X")
    G = kernel_cross(X, X, kernel)
    # Mirror the strict lower triangle; pairwise evaluation is already
    # symmetric for the rbf path, matmul output is not guaranteed to be.
    return np.tril(G) + np.tril(G, -1).T


def kernel_diag(X: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Vector of C(x_i, x_i) over the rows of ``X``."""
    X = _as_points(X, "X")
    if kernel.variant == RBF:
        return np.ones(X.shape[0])
    return kernel.omega + np.einsum("ij,ij->i", X, X)


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor of ``K + jitter * I`` with the jitter on record.

    ``lower @ lower.T`` reproduces the jittered matrix; ``jitter`` is 0.0
    whenever the plain matrix factorized on the first try.
    """

    lower: np.ndarray
    jitter: float

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    @classmethod
    def empty(cls) -> "CholeskyFactor":
        return cls(np.zeros((0, 0)), 0.0)


def jitter_ladder(base: float = JITTER_BASE, cap: float = JITTER_MAX) -> list[float]:
    """The retry sequence used by ``factorize_spd``: 0, base, 10*base, ... <= cap."""
    ladder = [0.0]
    j = base
    while j <= cap:
        ladder.append(j)
        j *= 10.0
    return ladder


def factorize_spd(matrix: np.ndarray, base_jitter: float = JITTER_BASE) -> CholeskyFactor:
    """Cholesky-factorize a symmetric positive definite matrix.

    If the plain factorization fails, retries with ``jitter * I`` added for
    each rung of the jitter ladder and records the rung that worked. Raises
    ``FactorizationError`` (naming the largest jitter tried) if the whole
    ladder fails.
    """
    K = np.asarray(matrix, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {K.shape}")
    n = K.shape[0]
    if n == 0:
        return CholeskyFactor.empty()
    eye = np.eye(n)
    last = 0.0
    for jitter in jitter_ladder(base=base_jitter):
        last = jitter
        try:
            L = _cholesky(K if jitter == 0.0 else K + jitter * eye, lower=True)
        except np.linalg.LinAlgError:
            continue
        return CholeskyFactor(L, jitter)
    raise FactorizationError(
        f"matrix of dim {n} is not positive definite even with jitter {last:g}"
    )


def extend_factorization(
    factor: CholeskyFactor, new_col: np.ndarray, new_diag: float
) -> CholeskyFactor:
    """Grow a factor by one row/column in O(n^2).

    ``new_col`` holds the covariances between the new point and the existing
    ones, ``new_diag`` the new diagonal entry (before jitter; the factor's own
    jitter is applied to keep the represented matrix consistent). The leading
    n x n block of the result is the old factor, bitwise. A non-positive
    pivot raises ``SingularExtensionError``; no jitter escalation happens
    here, that is the caller's call.
    """
    n = factor.n
    c = np.asarray(new_col, dtype=float).ravel()
    if c.shape[0] != n:
        raise ShapeError(f"new column has length {c.shape[0]}, factor dim is {n}")
    if n:
        w = solve_triangular(factor.lower, c, lower=True, check_finite=False)
        pivot_sq = (float(new_diag) + factor.jitter) - float(w.dot(w))
    else:
        w = c
        pivot_sq = float(new_diag) + factor.jitter
    if not pivot_sq > 0.0:
        raise SingularExtensionError(
            f"extension pivot^2 = {pivot_sq:g} at dim {n} (jitter {factor.jitter:g})"
        )
    L = np.zeros((n + 1, n + 1))
    L[:n, :n] = factor.lower
    L[n, :n] = w
    L[n, n] = np.sqrt(pivot_sq)
    return CholeskyFactor(L, factor.jitter)
