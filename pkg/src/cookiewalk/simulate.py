"""Reproducible Monte Carlo for the cookie walk and its branching structure.

Every replica draws from its own counter-based stream keyed by
``(seed, replica)``; replicas may run on several threads, and results are
folded in replica order so reports do not depend on the thread count.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from . import _kernels as K
from .env import ZERO_Q, CookieEnvironment, stuck_closed_form
from .errors import ArenaLimit, InsufficientTail, OutOfRange, UndecidedReplicas
from .rng import DEFAULT_SEED, check_seed, map_replicas

DEFAULT_ARENA_CAP = 50_000_000
DEFAULT_ABSORB_HEIGHT = 200
DEFAULT_GEN_CAP = 10_000
DEFAULT_POP_CAP = 1_000_000
DEFAULT_STUCK_STEP_BUDGET = 10_000_000
UNDECIDED_FRACTION = 1e-3

REASONS = {K.DIED: "died", K.GEN_CAP: "gen_cap", K.POP_CAP: "pop_cap", K.LAMBDA_CAP: "lambda_cap"}


def _arrays(env: CookieEnvironment):
    return np.asarray(env.strengths, dtype=np.float64), float(env.q), int(env.b)


@dataclass
class SimReport:
    estimate: float
    stderr: float
    replicas: int
    steps: int
    seed: int
    wall_clock: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def ci95(self) -> tuple[float, float]:
        half = 1.96 * self.stderr
        return (self.estimate - half, self.estimate + half)

    def to_json(self, timing: bool = False) -> dict:
        out = {
            "estimate": self.estimate,
            "stderr": self.stderr,
            "ci95": list(self.ci95),
            "replicas": self.replicas,
            "steps": self.steps,
            "seed": self.seed,
        }
        if timing:
            out["wall_clock"] = self.wall_clock
        out.update(self.extras)
        return out


def _mean_stderr(values) -> tuple[float, float]:
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return math.nan, math.nan
    if x.size == 1:
        return float(x[0]), math.nan
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _proportion(k: int, n: int) -> tuple[float, float]:
    if n == 0:
        return math.nan, math.nan
    p = k / n
    return p, math.sqrt(p * (1 - p) / n)


# -- the walk -----------------------------------------------------------------


@dataclass
class WalkState:
    """Python-level walk on a lazily grown tree, one step at a time.

    Mirrors the compiled engine and exists for inspection and small tests.
    Vertex 0 is the root and is its own father.
    """

    env: CookieEnvironment
    rng: np.random.Generator
    arena_cap: int = 1_000_000
    parent: list = field(default_factory=lambda: [0])
    children: list = field(default_factory=list)
    visits: list = field(default_factory=lambda: [1])
    height_of: list = field(default_factory=lambda: [0])
    current: int = 0
    steps: int = 0
    root_returns: int = 0

    def __post_init__(self):
        if not self.children:
            self.children = [[-1] * self.env.b]

    @property
    def height(self) -> int:
        return self.height_of[self.current]

    def cookie_strength(self) -> float:
        return self.env.strength(self.visits[self.current])


def walk_step(state: WalkState) -> WalkState:
    """Advance ``state`` by one step (in place) and return it."""
    env, v = state.env, state.current
    x = K.draw_xi(state.rng.random(), state.cookie_strength(), env.b)
    state.steps += 1
    if x == 0:
        w = state.parent[v]
        if w == 0:
            state.root_returns += 1
    else:
        w = state.children[v][x - 1]
        if w < 0:
            if len(state.parent) >= state.arena_cap:
                raise ArenaLimit(f"arena cap of {state.arena_cap} vertices reached")
            w = len(state.parent)
            state.parent.append(v)
            state.children.append([-1] * env.b)
            state.visits.append(0)
            state.height_of.append(state.height_of[v] + 1)
            state.children[v][x - 1] = w
    state.current = w
    state.visits[w] += 1
    return state


def _walk(env, steps, rng, arena_cap, absorb_height, mode):
    ps, q, b = _arrays(env)
    crossings = np.zeros(b, dtype=np.int64)
    status, height, n, returns, used = K.walk_kernel(
        ps, q, b, steps, rng, arena_cap, absorb_height, mode, crossings
    )
    if status == K.ST_ARENA:
        raise ArenaLimit(f"walk needed more than {arena_cap} vertices")
    return status, int(height), int(n), int(returns), crossings


def speed_estimate(
    env: CookieEnvironment,
    steps: int,
    replicas: int,
    seed: int = DEFAULT_SEED,
    threads: Optional[int] = None,
    arena_cap: int = DEFAULT_ARENA_CAP,
    check_transient: bool = False,
) -> tuple[SimReport, SimReport]:
    """Speed ``|X_n|/n`` and the CLT scale ``sigma`` from independent walks.

    ``sigma`` is the spread across replicas of ``(|X_n| - v n)/sqrt(n)`` with
    ``v`` the pooled speed.  The second report also carries an Anderson-Darling
    normality check of those standardised heights.
    """
    if steps < 1 or replicas < 1:
        raise OutOfRange("steps and replicas must be positive")
    seed = check_seed(seed)
    if check_transient:
        from .classify import TRANSIENT, verdict

        if verdict(env).outcome != TRANSIENT:
            warnings.warn(f"{env} is not transient; the speed estimate should be near 0")
    t0 = time.perf_counter()
    heights = map_replicas(
        lambda r, rng: _walk(env, steps, rng, arena_cap, 0, K.RUN_STEPS)[1],
        replicas, seed, threads,
    )
    h = np.asarray(heights, dtype=float)
    v, v_err = _mean_stderr(h / steps)
    z = (h - v * steps) / math.sqrt(steps)
    sigma = float(z.std(ddof=1)) if replicas > 1 else math.nan
    sigma_err = sigma / math.sqrt(2 * (replicas - 1)) if replicas > 1 else math.nan
    wall = time.perf_counter() - t0
    extras = {"heights": [int(x) for x in heights]}
    if replicas >= 8 and sigma > 0:
        ad = stats.anderson((z - z.mean()) / sigma, dist="norm")
        crit = float(ad.critical_values[list(ad.significance_level).index(1.0)])
        extras_sigma = {"anderson_statistic": float(ad.statistic), "anderson_crit_1pct": crit,
                        "normal_at_1pct": bool(ad.statistic < crit)}
    else:
        extras_sigma = {}
    return (
        SimReport(v, v_err, replicas, steps, seed, wall, extras),
        SimReport(sigma, sigma_err, replicas, steps, seed, wall, extras_sigma),
    )


def stuck_probability(
    env: CookieEnvironment,
    replicas: int,
    seed: int = DEFAULT_SEED,
    absorb_height: int = DEFAULT_ABSORB_HEIGHT,
    step_budget: int = DEFAULT_STUCK_STEP_BUDGET,
    threads: Optional[int] = None,
    arena_cap: int = DEFAULT_ARENA_CAP,
) -> SimReport:
    """Fraction of ``q = 0`` walks that end up trapped at the root.

    A replica is trapped once it stands at the root with every root cookie
    eaten, and drifting once its height exceeds ``absorb_height``.  Replicas
    reaching neither within ``step_budget`` steps are undecided; more than a
    0.1% share of them raises :class:`UndecidedReplicas`.
    """
    if env.mode != ZERO_Q:
        raise OutOfRange("stuck probability needs the zero-q extension mode")
    if replicas < 1:
        raise OutOfRange("replicas must be positive")
    seed = check_seed(seed)
    t0 = time.perf_counter()
    statuses = map_replicas(
        lambda r, rng: _walk(env, step_budget, rng, arena_cap, absorb_height, K.RUN_UNTIL_STUCK)[0],
        replicas, seed, threads,
    )
    st = np.asarray(statuses)
    stuck = int((st == K.ST_STUCK).sum())
    undecided = int((st == K.ST_UNDECIDED).sum())
    est, err = _proportion(stuck, replicas)
    extras = {"stuck": stuck, "drifting": int((st == K.ST_DRIFT).sum()), "undecided": undecided,
              "absorb_height": absorb_height}
    if env.M == 2:
        extras["closed_form"] = stuck_closed_form(env.strengths[0], env.strengths[1], env.b)
    report = SimReport(est, err, replicas, step_budget, seed, time.perf_counter() - t0, extras)
    if undecided > UNDECIDED_FRACTION * replicas:
        raise UndecidedReplicas(f"{undecided} of {replicas} replicas undecided", report)
    return report


def root_crossings(
    env: CookieEnvironment,
    replicas: int,
    seed: int = DEFAULT_SEED,
    step_budget: int = 1_000_000,
    threads: Optional[int] = None,
) -> np.ndarray:
    """Root-to-child jump counts before the first root self-loop, one row per replica.

    Rows of replicas that exhaust ``step_budget`` are ``-1``.
    """
    seed = check_seed(seed)

    def one(r, rng):
        status, _, _, _, cross = _walk(env, step_budget, rng, DEFAULT_ARENA_CAP, 0,
                                       K.RUN_UNTIL_ROOT_LOOP)
        return cross if status == K.ST_DONE else np.full(env.b, -1, dtype=np.int64)

    return np.array(map_replicas(one, replicas, seed, threads))


# -- the branching chain L and the tagged chain Z -------------------------------


@dataclass(frozen=True)
class LRun:
    died_out: bool
    reason: str
    Lambda: int
    H: int
    max_population: int
    generations: int

    @property
    def censored(self) -> bool:
        return not self.died_out


def l_process_run(
    env: CookieEnvironment,
    start: int,
    rng: np.random.Generator,
    gen_cap: int = DEFAULT_GEN_CAP,
    pop_cap: int = DEFAULT_POP_CAP,
    lambda_cap: int = 0,
) -> LRun:
    """One run of the branching chain ``L`` from a single particle at ``start``.

    Runs stop at extinction or when a cap is reached (``lambda_cap = 0``
    disables the progeny cap); a capped run has ``died_out = False``.
    """
    if start < 0:
        raise OutOfRange("start must be >= 0")
    ps, q, b = _arrays(env)
    reason, lam, H, mx, gens = K.l_process_kernel(ps, q, b, start, gen_cap, pop_cap, lambda_cap, rng)
    return LRun(reason == K.DIED, REASONS[reason], int(lam), int(H), int(mx), int(gens))


def l_process_runs(env, start, replicas, seed=DEFAULT_SEED, gen_cap=DEFAULT_GEN_CAP,
                   pop_cap=DEFAULT_POP_CAP, lambda_cap=0, threads=None) -> list[LRun]:
    seed = check_seed(seed)
    return map_replicas(
        lambda r, rng: l_process_run(env, start, rng, gen_cap, pop_cap, lambda_cap),
        replicas, seed, threads,
    )


def extinction_probability(
    env: CookieEnvironment,
    start: int,
    replicas: int,
    seed: int = DEFAULT_SEED,
    gen_cap: int = DEFAULT_GEN_CAP,
    pop_cap: int = DEFAULT_POP_CAP,
    threads: Optional[int] = None,
) -> SimReport:
    """Share of replicas of ``L`` that die out; capped runs count as survivals."""
    if replicas < 1:
        raise OutOfRange("replicas must be positive")
    t0 = time.perf_counter()
    runs = l_process_runs(env, start, replicas, seed, gen_cap, pop_cap, 0, threads)
    died = sum(r.died_out for r in runs)
    est, err = _proportion(died, replicas)
    censored = {name: sum(r.reason == name for r in runs) for name in ("gen_cap", "pop_cap")}
    extras = {"died": died, "censored": censored, "start": start,
              "gen_cap": gen_cap, "pop_cap": pop_cap}
    return SimReport(est, err, replicas, max(r.generations for r in runs), seed,
                     time.perf_counter() - t0, extras)


def first_child_samples(env: CookieEnvironment, j: int, n: int, seed: int = DEFAULT_SEED) -> np.ndarray:
    """``n`` draws of the position of child 1 of a particle at ``j``."""
    ps, q, b = _arrays(env)
    return K.first_child_samples(ps, q, b, j, n, np.random.Generator(np.random.Philox(check_seed(seed))))


@dataclass
class ZChainReport:
    paths: np.ndarray  # (replicas, steps + 1)
    absorption_times: list  # T0 per replica, None when censored
    moments: dict  # alpha -> E[Z_n^alpha] along n
    seed: int

    @property
    def all_absorbed(self) -> bool:
        return all(t is not None for t in self.absorption_times)

    def to_json(self) -> dict:
        return {
            "absorption_times": self.absorption_times,
            "max_moments": {str(a): float(m.max()) for a, m in self.moments.items()},
            "final_moments": {str(a): float(m[-1]) for a, m in self.moments.items()},
            "seed": self.seed,
        }


def z_chain_run(
    env: CookieEnvironment,
    start: int,
    steps: int,
    replicas: int = 1,
    seed: int = DEFAULT_SEED,
    threads: Optional[int] = None,
) -> ZChainReport:
    """Paths of the tagged chain ``Z``, their absorption times and moments ``E[Z_n^a]``."""
    if start < 0 or steps < 0:
        raise OutOfRange("start and steps must be >= 0")
    seed = check_seed(seed)
    ps, q, b = _arrays(env)
    paths = np.array(map_replicas(
        lambda r, rng: K.z_chain_kernel(ps, q, b, start, steps, rng), replicas, seed, threads
    ))
    t0 = []
    for row in paths:
        hit = np.flatnonzero(row == 0)
        t0.append(int(hit[0]) if hit.size else None)
    zf = paths.astype(float)
    moments = {a: (zf**a).mean(axis=0) for a in (1, 2, 4)}
    return ZChainReport(paths, t0, moments, seed)


# -- tail of the total progeny ---------------------------------------------------


@dataclass(frozen=True)
class TailFit:
    slope: float
    stderr: float
    window: tuple[float, float]
    exceed_lower: int
    replicas: int
    seed: int
    power_law: bool

    def to_json(self) -> dict:
        return {"slope": self.slope, "stderr": self.stderr, "window": list(self.window),
                "exceed_lower": self.exceed_lower, "replicas": self.replicas,
                "seed": self.seed, "power_law": self.power_law}


def fit_tail_slope(samples, lo: float, hi: float, replicas: Optional[int] = None,
                   seed: int = DEFAULT_SEED, points: int = 25) -> TailFit:
    """Log-log slope of the empirical survival function on ``[lo, hi]``.

    Samples at or above ``hi`` may be censored; only their being ``>= hi`` is used.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    exceed = int((x > lo).sum())
    if exceed < 100:
        raise InsufficientTail(f"only {exceed} samples exceed the window's lower edge {lo}")
    grid = np.geomspace(lo, hi, points)
    surv = (n - np.searchsorted(x, grid, side="right")) / n
    keep = surv > 0
    if keep.sum() < 3:
        raise InsufficientTail("survival function vanishes inside the fit window")
    fit = stats.linregress(np.log(grid[keep]), np.log(surv[keep]))
    slope = float(fit.slope)
    # light tails bend below any power law with exponent above -1
    power_law = bool(slope > -1 and keep.all())
    return TailFit(slope, float(fit.stderr), (lo, hi), exceed, replicas or n, seed, power_law)


def lambda_tail_slope(
    env: CookieEnvironment,
    start: int,
    replicas: int,
    seed: int = DEFAULT_SEED,
    window: tuple[float, float] = (1e2, 1e4),
    threads: Optional[int] = None,
) -> TailFit:
    """Tail exponent of the total progeny ``Lambda`` of ``L`` started at ``start``.

    Runs are cut once ``Lambda`` reaches the top of ``window``, which is all the
    survival function on the window needs.
    """
    lo, hi = window
    if not 0 < lo < hi:
        raise OutOfRange("window must satisfy 0 < lo < hi")
    runs = l_process_runs(env, start, replicas, seed, gen_cap=10**9, pop_cap=10**9,
                          lambda_cap=int(math.floor(hi)) + 1, threads=threads)
    return fit_tail_slope([r.Lambda for r in runs], lo, hi, replicas, seed)
