"""Sequential-design experiment driver: replications, aggregation, CSV export.

One replication builds a world (or samples a pool from a counterfactual
table), runs a shared random warm-up, then lets each strategy continue from
the same posterior with its own random streams. The recorded quantity is the
absolute error |posterior mean - target| after every observation, where the
target is the world's treatment effect (synthetic) or the table's true
average effect (semi-synthetic).

Randomness is split hierarchically from the master seed: every stream is
``SeedSequence([seed, replication, role(, strategy)])`` with fixed role ids,
so replications are independent, strategies share the world and warm-up but
not their later draws, and any replication can be reproduced in isolation.
That makes runs embarrassingly parallel with worker-count-independent output;
results are merged by replication index, never by arrival order.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import yaml

from .benchdata import (
    CounterfactualTable,
    estimate_noise_precision,
    load_table,
    observe_factual,
    true_ate,
)
from .datagen import gen_world, observe_outcome
from .design import (
    CandidatePool,
    DesignStats,
    ScoreCache,
    pool_remove,
    select_optimal,
    select_random,
)
from .errors import ConfigError, EstimationError, ParameterError
from .kernels import DOT_PRODUCT, RBF, Kernel
from .posterior import PriorSpec, posterior_append, posterior_batch, posterior_init

STRATEGIES = ("optimal", "random")
SYNTHETIC = "synthetic"
SEMISYNTHETIC = "semisynthetic"

# Stream roles for hierarchical seed derivation. Warm-up streams are not
# strategy-keyed (the warm-up is shared); post-warm-up streams are.
ROLE_WORLD = 0
ROLE_WARMUP_SELECT = 1
ROLE_WARMUP_NOISE = 2
ROLE_SELECT = 3
ROLE_NOISE = 4
_STRATEGY_IDS = {"optimal": 0, "random": 1}

WORKERS_ENV = "TARGETED_DESIGN_THREADS"


def _rep_key(replication: int) -> int:
    """Replication component of every derived seed; patchable in tests."""
    return int(replication)


def derive_rng(seed: int, replication: int, role: int, strategy: str | None = None) -> np.random.Generator:
    key = [int(seed), _rep_key(replication), int(role)]
    if strategy is not None:
        key.append(_STRATEGY_IDS[strategy])
    return np.random.default_rng(np.random.SeedSequence(key))


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    prior: PriorSpec
    d: int = 10
    pool_size: int = 400
    warmup_count: int = 10
    total_steps: int = 60
    replications: int = 200
    seed: int = 0
    strategies: tuple[str, ...] = STRATEGIES
    noise_precision: str = "refresh"
    data_path: str | None = None
    schema: str | Mapping = "ihdp"
    output_path: str | None = None

    def validate(self) -> None:
        if self.mode not in (SYNTHETIC, SEMISYNTHETIC):
            raise ConfigError(f"mode must be synthetic or semisynthetic, got {self.mode!r}")
        for name in ("pool_size", "warmup_count", "total_steps", "replications"):
            v = getattr(self, name)
            if not isinstance(v, int):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not 0 <= self.warmup_count <= self.total_steps <= self.pool_size:
            raise ConfigError(
                "need 0 <= warmup_count <= total_steps <= pool_size, got "
                f"{self.warmup_count} / {self.total_steps} / {self.pool_size}"
            )
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        if len(set(self.strategies)) != len(self.strategies):
            raise ConfigError("strategies must be unique")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}; known: {STRATEGIES}")
        if self.mode == SYNTHETIC and self.d < 1:
            raise ConfigError("synthetic mode needs d >= 1")
        if self.mode == SEMISYNTHETIC and not self.data_path:
            raise ConfigError("semisynthetic mode needs data_path")
        _parse_noise_policy(self.noise_precision)


def _parse_noise_policy(spec: str) -> tuple[str, float | None]:
    if spec in ("refresh", "warmup-only"):
        return spec, None
    if isinstance(spec, str) and spec.startswith("fixed:"):
        try:
            v = float(spec[len("fixed:"):])
        except ValueError:
            raise ConfigError(f"cannot parse noise precision value in {spec!r}") from None
        if not v > 0.0:
            raise ConfigError(f"fixed noise precision must be positive, got {v}")
        return "fixed", v
    raise ConfigError(
        f"noise_precision must be refresh, warmup-only or fixed:<value>, got {spec!r}"
    )


def default_config(mode: str) -> ExperimentConfig:
    """Built-in defaults: the standard configuration of each study."""
    if mode == SYNTHETIC:
        prior = PriorSpec(mu0=0.0, s0=1.0, s_eps=1.0, kernel=Kernel(RBF, 1.0))
        return ExperimentConfig(
            mode=SYNTHETIC, prior=prior, d=10, pool_size=400,
            warmup_count=10, total_steps=60, replications=200,
        )
    if mode == SEMISYNTHETIC:
        prior = PriorSpec(mu0=0.0, s0=1.0, s_eps=1.0, kernel=Kernel(DOT_PRODUCT, 1.0))
        return ExperimentConfig(
            mode=SEMISYNTHETIC, prior=prior, pool_size=400,
            warmup_count=50, total_steps=100, replications=200, schema="basic",
        )
    raise ConfigError(f"mode must be synthetic or semisynthetic, got {mode!r}")


_PRIOR_KEYS = {"mu0", "s0", "s_eps"}
_KERNEL_KEYS = {"variant", "omega"}
_TOP_KEYS = {
    "mode", "seed", "replications", "d", "pool_size", "warmup_count", "total_steps",
    "strategies", "prior", "kernel", "noise_precision", "data_path", "schema",
    "output_path",
}


def _check_keys(mapping: Mapping, allowed: set[str], where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {unknown}")


def config_from_mapping(mapping: Mapping, base_dir: str | None = None) -> ExperimentConfig:
    """Build a config from parsed structured text; unknown keys are rejected.

    ``data_path`` is resolved relative to ``base_dir`` (the config file's
    directory) when given as a relative path; ``output_path`` is left as-is,
    relative to the invoking directory.
    """
    if not isinstance(mapping, Mapping):
        raise ConfigError(f"config must be a mapping, got {type(mapping).__name__}")
    _check_keys(mapping, _TOP_KEYS, "config")
    mode = mapping.get("mode")
    if mode not in (SYNTHETIC, SEMISYNTHETIC):
        raise ConfigError(f"mode must be synthetic or semisynthetic, got {mode!r}")
    base = default_config(mode)

    prior_map = mapping.get("prior", {})
    if not isinstance(prior_map, Mapping):
        raise ConfigError("prior must be a mapping")
    _check_keys(prior_map, _PRIOR_KEYS, "prior")
    kernel_map = mapping.get("kernel", {})
    if not isinstance(kernel_map, Mapping):
        raise ConfigError("kernel must be a mapping")
    _check_keys(kernel_map, _KERNEL_KEYS, "kernel")
    try:
        kernel = Kernel(
            str(kernel_map.get("variant", base.prior.kernel.variant)),
            float(kernel_map.get("omega", base.prior.kernel.omega)),
        )
        prior = PriorSpec(
            mu0=float(prior_map.get("mu0", base.prior.mu0)),
            s0=float(prior_map.get("s0", base.prior.s0)),
            s_eps=float(prior_map.get("s_eps", base.prior.s_eps)),
            kernel=kernel,
        )
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc

    strategies = mapping.get("strategies", list(base.strategies))
    if isinstance(strategies, str):
        strategies = [strategies]
    if not isinstance(strategies, (list, tuple)):
        raise ConfigError("strategies must be a list")

    data_path = mapping.get("data_path", base.data_path)
    if data_path is not None and base_dir is not None and not os.path.isabs(data_path):
        data_path = os.path.normpath(os.path.join(base_dir, data_path))

    def _int(key: str, default: int) -> int:
        v = mapping.get(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{key} must be an integer, got {v!r}")
        return v

    cfg = ExperimentConfig(
        mode=mode,
        prior=prior,
        d=_int("d", base.d),
        pool_size=_int("pool_size", base.pool_size),
        warmup_count=_int("warmup_count", base.warmup_count),
        total_steps=_int("total_steps", base.total_steps),
        replications=_int("replications", base.replications),
        seed=_int("seed", base.seed),
        strategies=tuple(str(s) for s in strategies),
        noise_precision=str(mapping.get("noise_precision", base.noise_precision)),
        data_path=data_path,
        schema=mapping.get("schema", base.schema),
        output_path=mapping.get("output_path", base.output_path),
    )
    cfg.validate()
    return cfg


def load_config(path: str) -> ExperimentConfig:
    """Parse a YAML config file; see ``config_from_mapping`` for the rules."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if raw is None:
        raise ConfigError(f"{path}: config file is empty")
    return config_from_mapping(raw, base_dir=os.path.dirname(os.path.abspath(path)))


class _PosteriorTracker:
    """Posterior plus the noise-precision policy for one trajectory.

    Appends incrementally while the effective noise precision is unchanged
    and rebuilds from scratch when a re-estimate moves it (the factorization
    is only recomputed when the effective matrix actually changes).
    """

    def __init__(self, cfg: ExperimentConfig, d: int) -> None:
        self.cfg = cfg
        policy, fixed = _parse_noise_policy(cfg.noise_precision)
        self.policy = policy if cfg.mode == SEMISYNTHETIC else "fixed"
        prior = cfg.prior
        if cfg.mode == SEMISYNTHETIC and policy == "fixed":
            prior = prior.with_s_eps(fixed)
        self.prior = prior
        self.state = posterior_init(prior, d)
        self.jitter_events = 0

    def clone(self) -> "_PosteriorTracker":
        twin = object.__new__(_PosteriorTracker)
        twin.__dict__.update(self.__dict__)
        twin.jitter_events = 0
        return twin

    def observe(self, x: np.ndarray, t: int, y: float, in_warmup: bool) -> None:
        prior = self.prior
        if self.policy == "refresh" or (self.policy == "warmup-only" and in_warmup):
            ys = np.append(self.state.obs.y, y)
            try:
                prior = prior.with_s_eps(estimate_noise_precision(ys))
            except EstimationError:
                prior = prior.with_s_eps(self.cfg.prior.s_eps)
        prev_jitter = self.state.factor.jitter
        if prior.s_eps != self.prior.s_eps:
            self.prior = prior
            self.state = posterior_batch(prior, self.state.obs.append(x, t, y))
        else:
            self.state = posterior_append(self.state, self.prior, x, t, y)
        if self.state.factor.jitter != prev_jitter:
            self.jitter_events += 1


@dataclass
class ReplicationOutcome:
    errors: dict[str, np.ndarray]
    jitter_events: int = 0
    invalid_candidates: int = 0
    cache_rebuilds: int = 0


def _run_strategies(
    cfg: ExperimentConfig,
    replication: int,
    table: CounterfactualTable | None,
    strategies: tuple[str, ...],
) -> ReplicationOutcome:
    if cfg.mode == SYNTHETIC:
        world = gen_world(
            cfg.prior, cfg.d, cfg.pool_size, derive_rng(cfg.seed, replication, ROLE_WORLD)
        )
        pool0 = CandidatePool.from_matrix(world.X)
        target = world.theta
        world_jitter = 1 if world.f_jitter > 0 else 0

        def outcome(cid: int, t: int, rng: np.random.Generator) -> float:
            return observe_outcome(world, cid, t, rng)

    else:
        assert table is not None
        rng_world = derive_rng(cfg.seed, replication, ROLE_WORLD)
        rows = rng_world.choice(table.n, size=cfg.pool_size, replace=False)
        pool0 = CandidatePool.from_matrix(table.X[rows])
        target = true_ate(table)
        world_jitter = 0

        def outcome(cid: int, t: int, rng: np.random.Generator) -> float:
            return observe_factual(table, int(rows[cid]), t)

    tracker = _PosteriorTracker(cfg, pool0.X.shape[1])
    rng_wsel = derive_rng(cfg.seed, replication, ROLE_WARMUP_SELECT)
    rng_wnoise = derive_rng(cfg.seed, replication, ROLE_WARMUP_NOISE)
    warm_errors = np.empty(cfg.warmup_count)
    pool = pool0
    for k in range(cfg.warmup_count):
        choice = select_random(pool, rng_wsel)
        y = outcome(choice.candidate_id, choice.t, rng_wnoise)
        tracker.observe(choice.x, choice.t, y, in_warmup=True)
        pool = pool_remove(pool, choice.candidate_id)
        warm_errors[k] = abs(tracker.state.mean - target)

    stats = DesignStats()
    jitter_events = world_jitter + tracker.jitter_events
    errors: dict[str, np.ndarray] = {}
    for strategy in strategies:
        trk = tracker.clone()
        spool = pool
        rng_sel = derive_rng(cfg.seed, replication, ROLE_SELECT, strategy)
        rng_noise = derive_rng(cfg.seed, replication, ROLE_NOISE, strategy)
        errs = np.empty(cfg.total_steps)
        errs[: cfg.warmup_count] = warm_errors
        cache = None
        if strategy == "optimal" and cfg.total_steps > cfg.warmup_count:
            cache = ScoreCache(trk.state, trk.prior, spool)
        for step in range(cfg.warmup_count, cfg.total_steps):
            if strategy == "optimal":
                choice = select_optimal(trk.state, trk.prior, spool, cache=cache, stats=stats)
            else:
                choice = select_random(spool, rng_sel)
            y = outcome(choice.candidate_id, choice.t, rng_noise)
            trk.observe(choice.x, choice.t, y, in_warmup=False)
            spool = pool_remove(spool, choice.candidate_id)
            if cache is not None:
                cache.advance(trk.state, trk.prior, stats=stats)
            errs[step] = abs(trk.state.mean - target)
        jitter_events += trk.jitter_events
        errors[strategy] = errs
    return ReplicationOutcome(
        errors, jitter_events, stats.invalid_candidates, stats.cache_rebuilds
    )


def _run_guarded(
    cfg: ExperimentConfig,
    replication: int,
    table: CounterfactualTable | None,
    strategies: tuple[str, ...],
) -> ReplicationOutcome:
    try:
        return _run_strategies(cfg, replication, table, strategies)
    except Exception as exc:
        raise RuntimeError(
            f"replication {replication} failed (master seed {cfg.seed}): {exc}"
        ) from exc


def run_replication(
    cfg: ExperimentConfig,
    strategy: str,
    replication_index: int,
    table: CounterfactualTable | None = None,
) -> np.ndarray:
    """Error vector of one strategy in one replication, steps 1..total_steps.

    Warm-up errors are included (recorded from the first posterior update).
    The result is identical whether the replication is run alone or as part
    of a full experiment, because streams are keyed by role and strategy.
    """
    cfg.validate()
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}")
    if cfg.mode == SEMISYNTHETIC and table is None:
        table = load_table(cfg.data_path, cfg.schema)
    _check_pool_source(cfg, table)
    return _run_guarded(cfg, replication_index, table, (strategy,)).errors[strategy]


def _check_pool_source(cfg: ExperimentConfig, table: CounterfactualTable | None) -> None:
    if cfg.mode == SEMISYNTHETIC and table is not None and cfg.pool_size > table.n:
        raise ConfigError(
            f"pool_size {cfg.pool_size} exceeds the table's {table.n} rows"
        )


@dataclass(frozen=True)
class ErrorCurveSet:
    """Per-strategy error matrices (replications x steps) plus aggregates."""

    steps: np.ndarray
    errors: dict[str, np.ndarray]
    jitter_events: int = 0
    invalid_candidates: int = 0
    cache_rebuilds: int = 0

    @property
    def replications(self) -> int:
        first = next(iter(self.errors.values()))
        return first.shape[0]

    @property
    def strategies(self) -> tuple[str, ...]:
        return tuple(self.errors)

    @property
    def degenerate_band(self) -> bool:
        """True when the 95% band is undefined (fewer than 2 replications)."""
        return self.replications < 2

    def mean(self, strategy: str) -> np.ndarray:
        return self.errors[strategy].mean(axis=0)

    def band_halfwidth(self, strategy: str) -> np.ndarray:
        mat = self.errors[strategy]
        r = mat.shape[0]
        if r < 2:
            return np.zeros(mat.shape[1])
        return 1.96 * mat.std(axis=0, ddof=1) / np.sqrt(r)


_WORKER_CFG: ExperimentConfig | None = None
_WORKER_TABLE: CounterfactualTable | None = None


def _worker_init(cfg: ExperimentConfig, table: CounterfactualTable | None) -> None:
    global _WORKER_CFG, _WORKER_TABLE
    _WORKER_CFG = cfg
    _WORKER_TABLE = table


def _worker_entry(replication: int) -> ReplicationOutcome:
    assert _WORKER_CFG is not None
    return _run_guarded(_WORKER_CFG, replication, _WORKER_TABLE, _WORKER_CFG.strategies)


def resolve_workers(workers: int | None, replications: int) -> int:
    """Worker count: explicit argument, else the env var, else one per CPU."""
    if workers is None:
        env = os.environ.get(WORKERS_ENV, "").strip()
        if env:
            try:
                workers = int(env)
            except ValueError:
                raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        else:
            workers = 0
    if workers < 0:
        raise ConfigError(f"worker count must be >= 0, got {workers}")
    if workers == 0:
        workers = os.cpu_count() or 1
    return max(1, min(workers, replications))


def run_experiment(
    cfg: ExperimentConfig,
    table: CounterfactualTable | None = None,
    workers: int | None = None,
) -> ErrorCurveSet:
    """All replications of all configured strategies, merged by index.

    Parallel across replications when ``workers > 1``; output is identical
    for any worker count. Writes the CSV when ``cfg.output_path`` is set.
    """
    cfg.validate()
    if cfg.mode == SEMISYNTHETIC and table is None:
        table = load_table(cfg.data_path, cfg.schema)
    _check_pool_source(cfg, table)
    reps = cfg.replications
    n_workers = resolve_workers(workers, reps)
    if n_workers <= 1:
        outcomes = [_run_guarded(cfg, rep, table, cfg.strategies) for rep in range(reps)]
    else:
        with ProcessPoolExecutor(
            max_workers=n_workers, initializer=_worker_init, initargs=(cfg, table)
        ) as pool:
            outcomes = list(pool.map(_worker_entry, range(reps)))
    curves = ErrorCurveSet(
        steps=np.arange(1, cfg.total_steps + 1),
        errors={
            s: np.stack([o.errors[s] for o in outcomes]) for s in cfg.strategies
        },
        jitter_events=sum(o.jitter_events for o in outcomes),
        invalid_candidates=sum(o.invalid_candidates for o in outcomes),
        cache_rebuilds=sum(o.cache_rebuilds for o in outcomes),
    )
    if cfg.output_path:
        export_curves(curves, cfg.output_path)
    return curves


def export_curves(curves: ErrorCurveSet, path: str) -> None:
    """CSV with one row per (step, strategy); 17 significant digits.

    The fixed column layout and line terminator make equal runs produce
    byte-identical files.
    """
    means = {s: curves.mean(s) for s in curves.strategies}
    bands = {s: curves.band_halfwidth(s) for s in curves.strategies}
    reps = curves.replications
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["step", "strategy", "mean_abs_error", "ci_lower", "ci_upper", "replications"]
        )
        for i, step in enumerate(curves.steps):
            for s in curves.strategies:
                m = means[s][i]
                h = bands[s][i]
                writer.writerow(
                    [int(step), s, f"{m:.17g}", f"{m - h:.17g}", f"{m + h:.17g}", reps]
                )


def summary_lines(curves: ErrorCurveSet) -> list[str]:
    """One line per strategy (final-step mean error), plus a ratio line."""
    last = len(curves.steps) - 1
    lines = []
    for s in curves.strategies:
        m = curves.mean(s)[last]
        h = curves.band_halfwidth(s)[last]
        lines.append(
            f"{s}: mean |error| {m:.6g} (95% band +-{h:.2g}) "
            f"at step {int(curves.steps[last])} over {curves.replications} replications"
        )
    if {"optimal", "random"} <= set(curves.strategies):
        r = curves.mean("optimal")[last] / curves.mean("random")[last]
        lines.append(f"optimal/random mean-error ratio at final step: {r:.3f}")
    return lines
