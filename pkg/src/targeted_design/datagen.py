"""Synthetic worlds and structural-causal-model checks.

A world is one draw of (theta, pool covariates, latent function values):
theta from the treatment-effect prior, pool rows i.i.d. standard normal, and
f jointly from the zero-mean Gaussian process at the pool points. Outcomes
are then ``y = theta * t + f[id] + noise``, with noise drawn lazily at
observation time so each measurement is fresh.

The SCM utilities simulate the generative process with the treatment either
forced (``mc_ace_check``, interventional) or set by an assignment function of
the covariates (``mc_observational_difference``, observational). Comparing
the two on a confounded assignment exhibits the gap between the naive
difference of means and the causal effect theta.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import BookkeepingError, ParameterError
from .kernels import factorize_spd, gram_matrix
from .posterior import PriorSpec

# Draw order inside gen_world is frozen for reproducibility:
# theta first, then X row-major, then the latent vector behind f.


@dataclass(frozen=True)
class SyntheticWorld:
    theta: float
    X: np.ndarray
    f: np.ndarray
    prior: PriorSpec
    f_jitter: float

    @property
    def pool_size(self) -> int:
        return self.X.shape[0]


def gen_world(prior: PriorSpec, d: int, pool_size: int, seed) -> SyntheticWorld:
    """Draw one world. ``seed`` is anything ``np.random.default_rng`` accepts.

    ``f`` is ``L z`` with ``L`` the (possibly jittered) Cholesky factor of the
    pool Gram matrix and ``z`` standard normal, which gives the joint GP
    law at the pool points. A Gram matrix that defeats the whole jitter
    ladder propagates as ``FactorizationError``.
    """
    if d < 1 or pool_size < 1:
        raise ParameterError(f"need d >= 1 and pool_size >= 1, got d={d}, pool_size={pool_size}")
    rng = np.random.default_rng(seed)
    theta = float(rng.normal(prior.mu0, 1.0 / np.sqrt(prior.s0)))
    X = rng.standard_normal((pool_size, d))
    z = rng.standard_normal(pool_size)
    factor = factorize_spd(gram_matrix(X, prior.kernel))
    f = factor.lower @ z
    return SyntheticWorld(theta, X, f, prior, factor.jitter)


def observe_outcome(
    world: SyntheticWorld, candidate_id: int, t: float, rng: np.random.Generator
) -> float:
    """One noisy outcome at a pool point: theta*t + f + N(0, 1/s_eps)."""
    if not 0 <= candidate_id < world.pool_size:
        raise BookkeepingError(f"candidate {candidate_id} is outside the pool")
    if float(t) not in (0.0, 1.0):
        raise ParameterError(f"treatment must be 0 or 1, got {t!r}")
    noise = rng.normal(0.0, 1.0 / np.sqrt(world.prior.s_eps))
    return world.theta * float(t) + float(world.f[candidate_id]) + float(noise)


# An assignment function maps (covariate rows, per-row noise) to 0/1 arms,
# vectorized. None means unconfounded Bernoulli(1/2).
AssignFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ScmSpec:
    """Structural equations over a finite covariate pool.

    X is drawn uniformly from the rows, Y = theta*T + f[row] + eps_Y with
    eps_Y ~ N(0, 1/s_eps), and T is either forced (interventional) or
    ``assign(X_rows, eps_T)`` with eps_T ~ N(0,1) (observational).
    """

    theta: float
    X: np.ndarray
    f: np.ndarray
    s_eps: float
    assign: AssignFn | None = None

    def __post_init__(self) -> None:
        if self.X.shape[0] != self.f.shape[0]:
            raise ParameterError("f must have one value per covariate row")
        if self.s_eps <= 0.0:
            raise ParameterError("s_eps must be positive")

    @classmethod
    def from_world(cls, world: SyntheticWorld, assign: AssignFn | None = None) -> "ScmSpec":
        return cls(world.theta, world.X, world.f, world.prior.s_eps, assign)


def mc_ace_check(scm: ScmSpec, draws: int, seed) -> float:
    """Monte Carlo average causal effect under forced treatment.

    Simulates the structural equations under do(T=1) and do(T=0) with
    independent streams per arm and returns the difference of outcome means,
    which targets theta exactly regardless of any confounded assignment.
    """
    if draws < 10_000:
        raise ParameterError(f"need at least 10000 draws, got {draws}")
    ss = np.random.SeedSequence(seed)
    arm_seeds = ss.spawn(2)
    means = []
    sd = 1.0 / np.sqrt(scm.s_eps)
    for t, arm_seed in zip((1.0, 0.0), arm_seeds):
        rng = np.random.default_rng(arm_seed)
        rows = rng.integers(scm.X.shape[0], size=draws)
        eps = rng.normal(0.0, sd, size=draws)
        means.append(float(np.mean(scm.theta * t + scm.f[rows] + eps)))
    return means[0] - means[1]


def mc_observational_difference(scm: ScmSpec, draws: int, seed) -> tuple[float, float]:
    """Naive difference of group means under the SCM's own assignment.

    Returns (estimate, standard error). With a confounded assignment this is
    biased away from theta; with ``assign=None`` treatment is Bernoulli(1/2)
    and the estimate is consistent.
    """
    if draws < 10_000:
        raise ParameterError(f"need at least 10000 draws, got {draws}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    rows = rng.integers(scm.X.shape[0], size=draws)
    eps_t = rng.standard_normal(draws)
    if scm.assign is None:
        t = (eps_t > 0.0).astype(float)
    else:
        t = np.asarray(scm.assign(scm.X[rows], eps_t), dtype=float)
    eps_y = rng.normal(0.0, 1.0 / np.sqrt(scm.s_eps), size=draws)
    y = scm.theta * t + scm.f[rows] + eps_y
    treated = y[t == 1.0]
    control = y[t == 0.0]
    if treated.size < 2 or control.size < 2:
        raise ParameterError("assignment left a group with fewer than 2 draws")
    diff = float(treated.mean() - control.mean())
    se = float(
        np.sqrt(treated.var(ddof=1) / treated.size + control.var(ddof=1) / control.size)
    )
    return diff, se


def make_counterfactual_table(world: SyntheticWorld, seed):
    """Materialize both potential outcomes for every pool row.

    Factual arms are Bernoulli(1/2); the two arms get independent noise.
    Returns a ``CounterfactualTable`` ready for the semi-synthetic protocol.
    """
    from .benchdata import CounterfactualTable

    rng = np.random.default_rng(seed)
    m = world.pool_size
    sd = 1.0 / np.sqrt(world.prior.s_eps)
    t_factual = rng.integers(2, size=m)
    y_control = world.f + rng.normal(0.0, sd, size=m)
    y_treated = world.theta + world.f + rng.normal(0.0, sd, size=m)
    y_factual = np.where(t_factual == 1, y_treated, y_control)
    y_counterfactual = np.where(t_factual == 1, y_control, y_treated)
    return CounterfactualTable(t_factual, y_factual, y_counterfactual, world.X)


def with_theta(world: SyntheticWorld, theta: float) -> SyntheticWorld:
    """Same world, pinned treatment effect (f and the pool are unchanged)."""
    return replace(world, theta=float(theta))
