"""Exact treatment-effect posterior for a partially linear outcome model.

Model: ``y_i = theta * t_i + f(x_i) + eps_i`` with a Gaussian process prior
``f ~ GP(0, C)``, noise ``eps_i ~ N(0, 1/s_eps)`` and a Gaussian prior
``theta ~ N(mu0, 1/s0)``. Marginalizing f leaves ``y | theta ~ N(theta * t, K)``
with ``K = Phi + I / s_eps`` (``Phi`` the kernel Gram matrix), and the
posterior over theta stays Gaussian:

    s_n  = s0 + t' K^-1 t
    mu_n = (s0 * mu0 + t' K^-1 y) / s_n

``posterior_batch`` computes this from scratch; ``posterior_append`` folds in
one observation in O(n^2) by extending the Cholesky factor and updating the
cached solves ``K^-1 t`` and ``K^-1 y`` through the block-inverse identity.
``grid_bayes_oracle`` is a deliberately independent quadrature recomputation
kept for validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import ParameterError, ShapeError
from .kernels import (
    CholeskyFactor,
    Kernel,
    extend_factorization,
    factorize_spd,
    gram_matrix,
    kernel_cross,
    kernel_eval,
)


@dataclass(frozen=True)
class PriorSpec:
    """Prior and noise hyperparameters: theta ~ N(mu0, 1/s0), eps ~ N(0, 1/s_eps)."""

    mu0: float
    s0: float
    s_eps: float
    kernel: Kernel

    def __post_init__(self) -> None:
        for name in ("mu0", "s0", "s_eps"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ParameterError(f"{name} must be finite, got {v!r}")
        if self.s0 <= 0.0:
            raise ParameterError(f"prior precision s0 must be positive, got {self.s0!r}")
        if self.s_eps <= 0.0:
            raise ParameterError(f"noise precision s_eps must be positive, got {self.s_eps!r}")

    def with_s_eps(self, s_eps: float) -> "PriorSpec":
        return replace(self, s_eps=float(s_eps))


@dataclass(frozen=True)
class ObservationSet:
    """Aligned treatment / outcome / covariate arrays; append returns a copy."""

    t: np.ndarray
    y: np.ndarray
    X: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.t, dtype=float)
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if t.ndim != 1 or y.ndim != 1 or X.ndim != 2:
            raise ShapeError(
                f"expected t (n,), y (n,), X (n, d); got {t.shape}, {y.shape}, {X.shape}"
            )
        if not (t.shape[0] == y.shape[0] == X.shape[0]):
            raise ShapeError(
                f"row counts differ: t {t.shape[0]}, y {y.shape[0]}, X {X.shape[0]}"
            )
        if t.size and not np.all((t == 0.0) | (t == 1.0)):
            raise ParameterError("treatments must all be 0 or 1")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.t.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @classmethod
    def empty(cls, d: int = 0) -> "ObservationSet":
        return cls(np.zeros(0), np.zeros(0), np.zeros((0, d)))

    def append(self, x: np.ndarray, t_new: float, y_new: float) -> "ObservationSet":
        x = np.asarray(x, dtype=float).ravel()
        if self.n and x.shape[0] != self.d:
            raise ShapeError(f"covariate has dim {x.shape[0]}, existing rows have {self.d}")
        return ObservationSet(
            np.append(self.t, float(t_new)),
            np.append(self.y, float(y_new)),
            np.vstack([self.X, x[None, :]]) if self.n else x[None, :],
        )


@dataclass(frozen=True)
class PosteriorState:
    """Gaussian posterior over theta plus the reusable solver state.

    ``solve_t`` and ``solve_y`` cache ``K^-1 t`` and ``K^-1 y`` for the
    current observations; the invariants

        precision == s0 + t . solve_t
        mean * precision == s0 * mu0 + t . solve_y

    hold by construction. ``incremental`` records whether ``factor`` extends
    the previous state's factor (its leading block is bitwise identical),
    which downstream caches rely on.
    """

    mean: float
    precision: float
    obs: ObservationSet
    factor: CholeskyFactor
    solve_t: np.ndarray
    solve_y: np.ndarray
    incremental: bool = False

    @property
    def n(self) -> int:
        return self.obs.n


def posterior_init(prior: PriorSpec, d: int = 0) -> PosteriorState:
    """The n = 0 posterior: the prior itself, with empty caches."""
    return PosteriorState(
        mean=prior.mu0,
        precision=prior.s0,
        obs=ObservationSet.empty(d),
        factor=CholeskyFactor.empty(),
        solve_t=np.zeros(0),
        solve_y=np.zeros(0),
    )


def posterior_batch(prior: PriorSpec, obs: ObservationSet) -> PosteriorState:
    """Posterior from scratch: build K, factorize, solve for both right sides."""
    if obs.n == 0:
        return posterior_init(prior, obs.d)
    K = gram_matrix(obs.X, prior.kernel)
    K[np.diag_indices_from(K)] += 1.0 / prior.s_eps
    factor = factorize_spd(K)
    rhs = np.column_stack([obs.t, obs.y])
    solved = cho_solve((factor.lower, True), rhs, check_finite=False)
    solve_t, solve_y = solved[:, 0], solved[:, 1]
    s_n = prior.s0 + float(obs.t.dot(solve_t))
    mu_n = (prior.s0 * prior.mu0 + float(obs.t.dot(solve_y))) / s_n
    return PosteriorState(mu_n, s_n, obs, factor, solve_t, solve_y)


def posterior_append(
    state: PosteriorState, prior: PriorSpec, x: np.ndarray, t_new: float, y_new: float
) -> PosteriorState:
    """Fold one observation into the posterior in O(n^2).

    Extends the Cholesky factor by a bordered row, updates the cached solves
    with the block-inverse identity, then recomputes mean and precision from
    the refreshed caches so the state invariants hold exactly. A failed
    extension (non-positive pivot) propagates as ``SingularExtensionError``.
    """
    if float(t_new) not in (0.0, 1.0):
        raise ParameterError(f"treatment must be 0 or 1, got {t_new!r}")
    x = np.asarray(x, dtype=float).ravel()
    obs = state.obs.append(x, t_new, y_new)
    n = state.n
    c = kernel_cross(state.obs.X, x, prior.kernel).ravel() if n else np.zeros(0)
    d_new = 1.0 / prior.s_eps + kernel_eval(x, x, prior.kernel)
    factor = extend_factorization(state.factor, c, d_new)

    # Block inverse of [[K, c], [c', d]]: with z = K^-1 c and
    # delta = d - c . z, the solve of [r; r_new] maps to
    # (old_solve - z * beta, beta) where beta = (r_new - c . old_solve) / delta.
    w = factor.lower[n, :n]
    r = factor.lower[n, n]
    if n:
        z = solve_triangular(state.factor.lower, w, trans="T", lower=True, check_finite=False)
    else:
        z = np.zeros(0)
    delta = r * r
    beta_t = (float(t_new) - float(c.dot(state.solve_t))) / delta if n else float(t_new) / delta
    beta_y = (float(y_new) - float(c.dot(state.solve_y))) / delta if n else float(y_new) / delta
    solve_t = np.append(state.solve_t - z * beta_t, beta_t)
    solve_y = np.append(state.solve_y - z * beta_y, beta_y)

    s_n = prior.s0 + float(obs.t.dot(solve_t))
    mu_n = (prior.s0 * prior.mu0 + float(obs.t.dot(solve_y))) / s_n
    return PosteriorState(mu_n, s_n, obs, factor, solve_t, solve_y, incremental=True)


def entropy(precision: float) -> float:
    """Differential entropy of a Gaussian with the given precision."""
    if not precision > 0.0:
        raise ParameterError(f"precision must be positive, got {precision!r}")
    return 0.5 * (1.0 + math.log(2.0 * math.pi / precision))


def predictive_y(
    state: PosteriorState, prior: PriorSpec, x: np.ndarray, t_new: float
) -> tuple[float, float]:
    """Posterior predictive mean and variance of the next outcome at (x, t).

    Marginalizes both f and theta:

        y | D ~ N(c' K^-1 y + mu_n * a,  delta + a^2 / s_n)

    with ``c`` the covariance of the new point to the observed ones,
    ``a = t - c' K^-1 t`` and ``delta = 1/s_eps + C(x,x) - c' K^-1 c``.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = state.n
    if n:
        c = kernel_cross(state.obs.X, x, prior.kernel).ravel()
        w = solve_triangular(state.factor.lower, c, lower=True, check_finite=False)
        delta = 1.0 / prior.s_eps + kernel_eval(x, x, prior.kernel) + state.factor.jitter - float(
            w.dot(w)
        )
        a = float(t_new) - float(c.dot(state.solve_t))
        base = float(c.dot(state.solve_y))
    else:
        delta = 1.0 / prior.s_eps + kernel_eval(x, x, prior.kernel)
        a = float(t_new)
        base = 0.0
    return base + state.mean * a, delta + a * a / state.precision


def grid_bayes_oracle(
    prior: PriorSpec,
    obs: ObservationSet,
    grid_halfwidth_sds: float = 8.0,
    grid_points: int = 4001,
) -> tuple[float, float]:
    """Posterior mean and variance of theta by dense solve plus quadrature.

    Validation-only reference: shares no code with the factorization path.
    The likelihood is evaluated on a uniform grid spanning
    ``mu0 +- grid_halfwidth_sds / sqrt(s0)`` and integrated by the trapezoid
    rule. Returns ``(mean, variance)``.
    """
    if grid_points < 1001:
        raise ParameterError(f"grid needs at least 1001 points, got {grid_points}")
    if grid_halfwidth_sds <= 0.0:
        raise ParameterError("grid halfwidth must be positive")
    sd0 = 1.0 / math.sqrt(prior.s0)
    grid = np.linspace(
        prior.mu0 - grid_halfwidth_sds * sd0,
        prior.mu0 + grid_halfwidth_sds * sd0,
        grid_points,
    )
    if obs.n:
        K = gram_matrix(obs.X, prior.kernel)
        K[np.diag_indices_from(K)] += 1.0 / prior.s_eps
        Kinv_t = np.linalg.solve(K, obs.t)
        quad = float(obs.t.dot(Kinv_t))
        lin = float(obs.y.dot(Kinv_t))
        # theta-dependent part of the log likelihood of y ~ N(theta t, K)
        log_post = lin * grid - 0.5 * quad * grid**2
    else:
        log_post = np.zeros_like(grid)
    log_post = log_post - 0.5 * prior.s0 * (grid - prior.mu0) ** 2
    weights = np.exp(log_post - log_post.max())
    norm = np.trapezoid(weights, grid)
    mean = np.trapezoid(weights * grid, grid) / norm
    var = np.trapezoid(weights * (grid - mean) ** 2, grid) / norm
    return float(mean), float(var)
