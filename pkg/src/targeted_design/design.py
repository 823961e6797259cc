"""Candidate scoring and selection for the sequential design loop.

A step scores every active pool entry under both treatment arms by the
information gain

    g(x, t) = 0.5 * ln( s_next(x, t) / s_n )

where ``s_next`` is the posterior precision after a hypothetical observation
at (x, t). The precision update has the closed form

    s_next = s_n + (t - c' K^-1 t_vec)^2 / delta,
    delta  = 1/s_eps + C(x, x) - c' K^-1 c

so no refactorization is needed per candidate. ``ScoreCache`` keeps the
whitened cross-covariance ``L^-1 C_cross`` between observations and the pool,
advancing it by one row per append; with it a full-pool scoring step costs
O(pool * n) plus one O(n^2) refresh.

Selection is deterministic: ties break toward the lower candidate id, then
toward t = 1. Candidates whose ``delta`` is not positive (numerically
degenerate) are skipped and counted, never fatal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from .errors import BookkeepingError, PoolExhaustedError, ShapeError, SingularExtensionError
from .kernels import kernel_cross, kernel_diag, kernel_eval
from .posterior import ObservationSet, PosteriorState, PriorSpec, posterior_batch


@dataclass(frozen=True)
class CandidatePool:
    """Immutable candidate set; ids index rows of ``X`` and never shift."""

    X: np.ndarray
    removed: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise ShapeError(f"pool X must be 2-d, got shape {X.shape}")
        object.__setattr__(self, "X", X)
        if self.removed and not all(0 <= i < X.shape[0] for i in self.removed):
            raise BookkeepingError("removed set contains ids outside the pool")

    @classmethod
    def from_matrix(cls, X: np.ndarray) -> "CandidatePool":
        return cls(X)

    @property
    def size(self) -> int:
        return self.X.shape[0]

    @property
    def active_count(self) -> int:
        return self.size - len(self.removed)

    def active_ids(self) -> np.ndarray:
        mask = np.ones(self.size, dtype=bool)
        if self.removed:
            mask[list(self.removed)] = False
        return np.flatnonzero(mask)

    def is_active(self, candidate_id: int) -> bool:
        return 0 <= candidate_id < self.size and candidate_id not in self.removed

    def x_for(self, candidate_id: int) -> np.ndarray:
        if not self.is_active(candidate_id):
            raise BookkeepingError(f"candidate {candidate_id} is not active in the pool")
        return self.X[candidate_id]


def pool_remove(pool: CandidatePool, candidate_id: int) -> CandidatePool:
    """Retire a candidate; selecting without replacement is the default protocol."""
    if not pool.is_active(candidate_id):
        raise BookkeepingError(f"candidate {candidate_id} is unknown or already removed")
    return replace(pool, removed=pool.removed | {int(candidate_id)})


@dataclass(frozen=True)
class DesignChoice:
    candidate_id: int
    x: np.ndarray
    t: int
    gain: float | None = None


@dataclass
class DesignStats:
    """Counters surfaced as run diagnostics."""

    invalid_candidates: int = 0
    cache_rebuilds: int = 0


def candidate_precision(
    state: PosteriorState, prior: PriorSpec, x: np.ndarray, t: float
) -> float:
    """Posterior precision after a hypothetical observation at (x, t).

    Uses the current state's cached solves and one triangular solve; never
    refactorizes. Raises ``SingularExtensionError`` when the Schur complement
    ``delta`` is not positive, which callers treat as "candidate invalid".
    """
    x = np.asarray(x, dtype=float).ravel()
    n = state.n
    if n:
        c = kernel_cross(state.obs.X, x, prior.kernel).ravel()
        w = solve_triangular(state.factor.lower, c, lower=True, check_finite=False)
        delta = (
            1.0 / prior.s_eps
            + kernel_eval(x, x, prior.kernel)
            + state.factor.jitter
            - float(w.dot(w))
        )
        a = float(t) - float(c.dot(state.solve_t))
    else:
        delta = 1.0 / prior.s_eps + kernel_eval(x, x, prior.kernel)
        a = float(t)
    if not delta > 0.0:
        raise SingularExtensionError(f"candidate Schur complement {delta:g} is not positive")
    return state.precision + a * a / delta


def information_gain(
    state: PosteriorState, prior: PriorSpec, x: np.ndarray, t: float
) -> float:
    """Entropy reduction from one hypothetical observation; exact, y-free."""
    return 0.5 * math.log(candidate_precision(state, prior, x, t) / state.precision)


def naive_candidate_precision(
    prior: PriorSpec, obs: ObservationSet, x: np.ndarray, t: float
) -> float:
    """Reference implementation: rebuild the whole posterior on augmented data.

    Kept as the benchmark baseline for the incremental scoring path; the
    observed outcome is irrelevant to the precision, so a placeholder is used.
    """
    return posterior_batch(prior, obs.append(x, t, 0.0)).precision


class ScoreCache:
    """Whitened pool covariances maintained across appends.

    Holds ``white = L^-1 C_cross`` (n x m) for the full pool plus its column
    norms and the pool's kernel diagonal. ``advance`` appends one row in
    O(m (n + d)) after an incremental posterior update and falls back to a
    full rebuild when the posterior was refactorized from scratch.
    """

    def __init__(self, state: PosteriorState, prior: PriorSpec, pool: CandidatePool) -> None:
        self.pool_X = pool.X
        self.diag = kernel_diag(pool.X, prior.kernel)
        self._rebuild(state, prior)

    def _rebuild(self, state: PosteriorState, prior: PriorSpec) -> None:
        n = state.n
        if n:
            cross = kernel_cross(state.obs.X, self.pool_X, prior.kernel)
            self.white = solve_triangular(
                state.factor.lower, cross, lower=True, check_finite=False
            )
        else:
            self.white = np.zeros((0, self.pool_X.shape[0]))
        self.white_sq = np.einsum("ij,ij->j", self.white, self.white)
        self.n = n

    def matches(self, state: PosteriorState) -> bool:
        return self.n == state.n

    def advance(
        self, new_state: PosteriorState, prior: PriorSpec, stats: DesignStats | None = None
    ) -> None:
        """Track one posterior update; O(m(n+d)) if it was incremental."""
        if not new_state.incremental or new_state.n != self.n + 1:
            self._rebuild(new_state, prior)
            if stats is not None:
                stats.cache_rebuilds += 1
            return
        n = self.n
        x_new = new_state.obs.X[-1]
        kappa = kernel_cross(x_new, self.pool_X, prior.kernel).ravel()
        w = new_state.factor.lower[n, :n]
        r = new_state.factor.lower[n, n]
        row = (kappa - w @ self.white) / r
        self.white = np.vstack([self.white, row[None, :]])
        self.white_sq += row * row
        self.n = n + 1


@dataclass(frozen=True)
class PoolScores:
    """Per-candidate gains for both arms over the full pool, with validity masks."""

    gain_treated: np.ndarray
    gain_control: np.ndarray
    valid: np.ndarray
    active: np.ndarray

    @property
    def scored_count(self) -> int:
        return 2 * int(np.count_nonzero(self.active & self.valid))


def score_pool(
    state: PosteriorState,
    prior: PriorSpec,
    pool: CandidatePool,
    cache: ScoreCache | None = None,
    stats: DesignStats | None = None,
) -> PoolScores:
    """Information gain of every pool entry under both arms, vectorized.

    ``delta`` does not depend on the arm, so a candidate is either valid for
    both arms or invalid for both. Invalid and removed candidates carry -inf
    gains.
    """
    n = state.n
    if cache is not None and cache.matches(state) and cache.pool_X is pool.X:
        white_sq = cache.white_sq
        diag = cache.diag
        if n:
            white_t = state.factor.lower.T @ state.solve_t
            ct = white_t @ cache.white
        else:
            ct = np.zeros(pool.size)
    else:
        diag = kernel_diag(pool.X, prior.kernel)
        if n:
            cross = kernel_cross(state.obs.X, pool.X, prior.kernel)
            white = solve_triangular(state.factor.lower, cross, lower=True, check_finite=False)
            white_sq = np.einsum("ij,ij->j", white, white)
            ct = state.solve_t @ cross
        else:
            white_sq = np.zeros(pool.size)
            ct = np.zeros(pool.size)
    delta = 1.0 / prior.s_eps + diag + state.factor.jitter - white_sq
    valid = delta > 0.0
    active = np.ones(pool.size, dtype=bool)
    if pool.removed:
        active[list(pool.removed)] = False
    if stats is not None:
        stats.invalid_candidates += int(np.count_nonzero(active & ~valid))
    safe_delta = np.where(valid, delta, 1.0)
    s_n = state.precision
    with np.errstate(divide="ignore"):
        gain_treated = 0.5 * np.log((s_n + (1.0 - ct) ** 2 / safe_delta) / s_n)
        gain_control = 0.5 * np.log((s_n + ct**2 / safe_delta) / s_n)
    bad = ~(valid & active)
    gain_treated = np.where(bad, -np.inf, gain_treated)
    gain_control = np.where(bad, -np.inf, gain_control)
    return PoolScores(gain_treated, gain_control, valid, active)


def select_optimal(
    state: PosteriorState,
    prior: PriorSpec,
    pool: CandidatePool,
    cache: ScoreCache | None = None,
    stats: DesignStats | None = None,
) -> DesignChoice:
    """Highest-gain (candidate, arm) pair; deterministic tie-break.

    The flat scan order is candidate id ascending with t=1 before t=0, and
    the first maximum wins, which realizes the tie-break exactly.
    """
    if pool.active_count == 0:
        raise PoolExhaustedError("no active candidates remain")
    scores = score_pool(state, prior, pool, cache=cache, stats=stats)
    flat = np.empty(2 * pool.size)
    flat[0::2] = scores.gain_treated
    flat[1::2] = scores.gain_control
    best = int(np.argmax(flat))
    if flat[best] == -np.inf:
        raise PoolExhaustedError("all active candidates are numerically invalid")
    cid, arm = divmod(best, 2)
    t = 1 - arm
    return DesignChoice(cid, pool.X[cid], t, gain=float(flat[best]))


def select_random(pool: CandidatePool, rng: np.random.Generator) -> DesignChoice:
    """Uniform draw over active candidates, then a uniform arm.

    Consumes exactly two draws from the stream, candidate first, arm second.
    """
    active = pool.active_ids()
    if active.size == 0:
        raise PoolExhaustedError("no active candidates remain")
    cid = int(active[int(rng.integers(active.size))])
    t = int(rng.integers(2))
    return DesignChoice(cid, pool.X[cid], t, gain=None)
