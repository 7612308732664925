"""Cookie environments, the per-index step law, and closed-form spectral quantities.

A cookie environment ``(p_1, ..., p_M; q)`` on a rooted ``b``-ary tree says how
the walk leaves a vertex on its ``j``-th visit: towards the father with
probability ``1 - p_j`` and to each child with probability ``p_j / b`` while
``j <= M``, and with ``q`` in place of ``p_j`` afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import EmptyCookieList, InternalError, OutOfRange, UndefinedForZeroQ

STANDARD = "standard"
ZERO_Q = "zero-q-extension"


@dataclass(frozen=True)
class CookieEnvironment:
    b: int
    strengths: tuple[float, ...]
    q: float
    mode: str = STANDARD

    def __post_init__(self):
        _check(self.b, self.strengths, self.q, self.mode)

    @property
    def M(self) -> int:
        return len(self.strengths)

    @property
    def s(self) -> float:
        """P(xi = 1 | xi in {0, 1}) once the cookies are gone: q / (q + (1 - q) b)."""
        q = Fraction(self.q)
        return float(q / (q + (1 - q) * self.b))

    @property
    def c(self) -> float:
        """Mean of the geometric law with parameter ``s``: q / (b (1 - q))."""
        q = Fraction(self.q)
        return float(q / (self.b * (1 - q)))

    @property
    def zero_count(self) -> int:
        return sum(1 for p in self.strengths if p == 0)

    @property
    def critical_q(self) -> float:
        return self.b / (self.b + 1)

    def strength(self, i: int) -> float:
        """Strength used on the ``i``-th visit (1-based); ``q`` beyond the pile."""
        if i < 1:
            raise IndexError(f"visit index must be >= 1, got {i}")
        return self.strengths[i - 1] if i <= self.M else self.q

    def padded(self, m: int) -> CookieEnvironment:
        """The same walk written with ``m >= M`` cookies (extra cookies have strength q)."""
        if m < self.M:
            raise ValueError("cannot shorten a cookie pile")
        extra = (self.q,) * (m - self.M)
        return CookieEnvironment(self.b, self.strengths + extra, self.q, self.mode)

    def __str__(self):
        ps = ",".join(f"{p:g}" for p in self.strengths)
        return f"({ps}; {self.q:g}) b={self.b}"


def _check(b, strengths, q, mode):
    if mode not in (STANDARD, ZERO_Q):
        raise ValueError(f"unknown mode {mode!r}")
    if isinstance(b, bool) or int(b) != b or b < 2:
        raise OutOfRange(f"branching factor must be an integer >= 2, got {b}")
    if len(strengths) == 0:
        raise EmptyCookieList("a cookie environment needs at least one cookie")
    for i, p in enumerate(strengths, start=1):
        if not (0.0 <= p < 1.0):
            raise OutOfRange(f"p_{i} = {p} is outside [0, 1)")
    if mode == STANDARD:
        if not (0.0 < q < 1.0):
            raise OutOfRange(f"q = {q} is outside (0, 1); q = 0 needs the zero-q extension mode")
    elif q != 0.0:
        raise OutOfRange(f"zero-q extension mode requires q = 0, got {q}")


def validate(b, strengths: Sequence[float], q, mode: str = STANDARD) -> CookieEnvironment:
    """Check raw parameters and return a :class:`CookieEnvironment`.

    The order of ``strengths`` is kept as given; it changes the walk.
    """
    strengths = tuple(float(p) for p in strengths)
    _check(b, strengths, float(q), mode)
    return CookieEnvironment(int(b), strengths, float(q), mode)


@dataclass(frozen=True)
class XiLaw:
    index: int
    fail_prob: float
    one_prob: float
    each_other_prob: float

    def total(self, b: int) -> float:
        return self.fail_prob + self.one_prob + (b - 1) * self.each_other_prob


def xi_law(env: CookieEnvironment, i: int) -> XiLaw:
    """Law of the ``i``-th step-direction variable: 0 is a failure, 1..b a child."""
    p = env.strength(i)
    return XiLaw(i, 1.0 - p, p / env.b, p / env.b)


def lambda_sym(env: CookieEnvironment) -> float:
    """Symmetric product formula for the radius of the infinite class.

    Equal to the largest spectral radius when the first ``floor(M/2)``
    cookies have strength zero and ``q < b/(b+1)``; evaluated everywhere.
    """
    if env.q == 0:
        raise UndefinedForZeroQ("lambda_sym needs q > 0")
    b, c = env.b, env.c
    factors = [(1 - p) * c + (b - 1) * p / b + (p / b) / c for p in env.strengths]
    # sorted so the value is bit-identical under any reordering of the pile
    return c * math.prod(sorted(factors))


def lambda_once(p: float, q: float, b: int) -> float:
    """Critical parameter of the once-excited walk ``(p; q)``."""
    c = q / (b * (1 - q))
    return (1 - p) * c * c + (b - 1) * p / b * c + p / b


def lambda_dig(M: int, q: float, b: int) -> float:
    """Critical parameter of the ``M``-digging walk ``(0, ..., 0; q)``."""
    if M < 1:
        raise OutOfRange("M must be >= 1")
    return (q / (b * (1 - q))) ** (M + 1)


def nu_matrix(p1: float, p2: float, b: int) -> list[list[float]]:
    """Restriction of the cookie matrix to the class [1, 2] of ``(p1, p2, 0, 0, ...; q)``."""
    off = p1 * p2 / b**2
    return [
        [p1 / b + p1 * p2 / b - 2 * off, off],
        [(p1 + p2) / b - 2 * off, off],
    ]


def nu(p1: float, p2: float, b: int) -> float:
    """Largest eigenvalue of :func:`nu_matrix`, in closed form."""
    radicand = (
        (b * b - 6 * b + 1) * p1**2 * p2**2
        + 2 * b * (b - 1) * p1**2 * p2
        + b * b * p1**2
        + 4 * b * p1 * p2**2
    )
    if radicand < 0:
        if radicand < -1e-12:
            raise InternalError(f"negative radicand {radicand} for nu({p1}, {p2}; b={b})")
        radicand = 0.0
    return ((b - 1) * p1 * p2 + b * p1 + math.sqrt(radicand)) / (2 * b * b)


def stuck_closed_form(p1: float, p2: float, b: int) -> float:
    """Probability that the ``(p1, p2; 0)`` walk ends up stuck at the root."""
    if nu(p1, p2, b) <= 1 / b:
        return 1.0
    num = (1 - p1) * (
        b + b * p2 + p1**2 * p2**3 - b * p1 * p2**2 - p1 * p2**3 - b * p1 * p2
    )
    return num / (p1 * p2 * (b - 1))


@dataclass(frozen=True)
class GWEnvironment:
    """Cookie environment ``(beta_1..beta_M; alpha)`` for a walk on a Galton-Watson tree."""

    betas: tuple[float, ...]
    alpha: float
    offspring_mean: float

    def __post_init__(self):
        if len(self.betas) == 0:
            raise EmptyCookieList("a cookie environment needs at least one cookie")
        if any(not (beta >= 0 and math.isfinite(beta)) for beta in self.betas):
            raise OutOfRange(f"betas must be finite and >= 0, got {self.betas}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise OutOfRange(f"alpha must be > 0, got {self.alpha}")
        if not math.isfinite(self.offspring_mean):
            raise OutOfRange("offspring mean must be finite")


@dataclass(frozen=True)
class GWMapping:
    env: CookieEnvironment
    threshold: float
    alpha_shortcut: bool


def gw_map(gw: GWEnvironment, b_probe: int = 2) -> GWMapping:
    """Regular-tree environment sharing the cookie matrix of ``gw``.

    Each step consumes a cookie, including steps to the ``b_probe - 1``
    siblings of the tracked child, so the matrix is independent of
    ``b_probe`` when the strengths are zeros followed by copies of ``alpha``
    (a digging environment).  In general it depends on the probe;
    ``b_probe = 2`` is the default.
    Transience is read off as ``alpha >= 1`` or a spectral radius above
    ``threshold = 1/E[B]``.
    """
    if b_probe < 2:
        raise OutOfRange("b_probe must be >= 2")
    ps = [b_probe * beta / (b_probe * beta + 1) for beta in gw.betas]
    q = b_probe * gw.alpha / (b_probe * gw.alpha + 1)
    env = validate(b_probe, ps, q)
    return GWMapping(env, 1.0 / gw.offspring_mean, gw.alpha >= 1)
