"""Recurrence/transience verdicts, phase boundaries and the monotonicity check.

The walk is transient when ``q >= b/(b+1)`` or when the largest class radius
``lambda`` exceeds ``1/b``; it is positive recurrent when ``lambda < 1/b`` (and
``q < b/(b+1)``) and recurrent at equality.  Equality is decided with an
explicit tolerance band and flagged as critical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .env import STANDARD, ZERO_Q, CookieEnvironment, GWEnvironment, gw_map, validate
from .errors import Inconclusive, NoSignChange, NonMonotoneSamples, NotComparable, OutOfRange
from .spectral import DEFAULT_N_MAX, DEFAULT_TOL, ClassSpectrum, lambda_max

TRANSIENT = "Transient"
RECURRENT = "Recurrent"
POSITIVE_RECURRENT = "PositiveRecurrent"

DEFAULT_BAND = 1e-9
# smallest q scanned by default; below it the entries of P underflow
Q_MIN = 1e-3


@dataclass(frozen=True)
class Verdict:
    outcome: str
    critical: bool
    shortcut: bool
    lambda_used: Optional[float]
    tol: float
    threshold: float
    converged: bool = True
    spectrum: Optional[ClassSpectrum] = None

    def to_json(self) -> dict:
        return {
            "verdict": self.outcome,
            "lambda": self.lambda_used,
            "critical": self.critical,
            "shortcut": self.shortcut,
            "threshold": self.threshold,
            "tol": self.tol,
            "converged": self.converged,
        }


def _decide(lam, threshold, band, converged, spectrum):
    if lam > threshold + band:
        return Verdict(TRANSIENT, False, False, lam, band, threshold, converged, spectrum)
    if not converged:
        # truncated radii increase to the true one, so only "above" is certain
        raise Inconclusive(
            f"lambda >= {lam!r} after truncation, not converged, threshold {threshold!r}"
        )
    if lam < threshold - band:
        return Verdict(POSITIVE_RECURRENT, False, False, lam, band, threshold, converged, spectrum)
    return Verdict(RECURRENT, True, False, lam, band, threshold, converged, spectrum)


def verdict(
    env: CookieEnvironment,
    tol: float = DEFAULT_BAND,
    spectral_tol: float = DEFAULT_TOL,
    n_max: int = DEFAULT_N_MAX,
) -> Verdict:
    """Classify the walk in ``env``.

    ``tol`` is the half-width of the band around ``1/b`` treated as critical;
    it is never narrower than ``spectral_tol``.
    """
    if env.mode != STANDARD:
        raise OutOfRange("verdicts are defined for q > 0 only")
    band = max(tol, spectral_tol)
    threshold = 1.0 / env.b
    if env.q >= env.b / (env.b + 1):
        return Verdict(TRANSIENT, False, True, None, band, threshold)
    spectrum = lambda_max(env, spectral_tol, n_max)
    return _decide(spectrum.lambda_max, threshold, band, spectrum.converged, spectrum)


def verdict_gw(
    gw: GWEnvironment,
    tol: float = DEFAULT_BAND,
    spectral_tol: float = DEFAULT_TOL,
    n_max: int = DEFAULT_N_MAX,
    b_probe: int = 2,
) -> Verdict:
    """Classify the cookie walk on a Galton-Watson tree with mean offspring ``E[B] > 1``.

    The mapped matrix is computed on a ``b_probe``-ary tree; see
    :func:`cookiewalk.env.gw_map` for when the choice of probe matters.
    """
    if not gw.offspring_mean > 1:
        raise OutOfRange("the offspring mean must exceed 1")
    mapping = gw_map(gw, b_probe)
    band = max(tol, spectral_tol)
    if mapping.alpha_shortcut:
        return Verdict(TRANSIENT, False, True, None, band, mapping.threshold)
    spectrum = lambda_max(mapping.env, spectral_tol, n_max)
    return _decide(spectrum.lambda_max, mapping.threshold, band, spectrum.converged, spectrum)


# -- phase boundaries -----------------------------------------------------------


@dataclass(frozen=True)
class Family:
    """One-parameter family of environments ``param -> env`` on a fixed tree."""

    name: str
    b: int
    build: Callable[[float], CookieEnvironment]
    lo: float
    hi: float

    def env(self, x: float) -> CookieEnvironment:
        return self.build(x)


def once_excited(b: int, vary: str = "p", p: float = 0.0, q: float = 0.5) -> Family:
    """``(p; q)``: vary ``p`` in ``[0, 1)`` at fixed ``q``, or ``q`` in ``[Q_MIN, 1)`` at fixed ``p``."""
    hi = math.nextafter(1.0, 0.0)
    if vary == "p":
        return Family(f"once-excited(q={q:g})", b, lambda x: validate(b, [x], q), 0.0, hi)
    if vary == "q":
        return Family(f"once-excited(p={p:g})", b, lambda x: validate(b, [p], x), Q_MIN, hi)
    raise ValueError("vary must be 'p' or 'q'")


def digging(b: int, M: int) -> Family:
    """``(0, ..., 0; q)`` with ``M`` zeros, varying ``q``."""
    return Family(f"digging(M={M})", b, lambda x: validate(b, [0.0] * M, x),
                  Q_MIN, math.nextafter(1.0, 0.0))


def pair(b: int, q: float) -> Family:
    """``(p, p, 0, 0; q)`` varying ``p``."""
    return Family(f"pair(q={q:g})", b, lambda x: validate(b, [x, x, 0.0, 0.0], q),
                  0.0, math.nextafter(1.0, 0.0))


def pair_zero_q(b: int) -> Family:
    """``(p, p; 0)`` in the zero-q extension, varying ``p``."""
    return Family("pair-zero-q", b, lambda x: validate(b, [x, x], 0.0, ZERO_Q),
                  0.0, math.nextafter(1.0, 0.0))


FAMILIES = ("once-excited", "digging", "pair", "pair-zero-q")


def family_lambda(env: CookieEnvironment, spectral_tol: float = DEFAULT_TOL) -> float:
    """``lambda`` with the ``q >= b/(b+1)`` region mapped above any radius."""
    if env.mode == STANDARD and env.q >= env.b / (env.b + 1):
        return math.inf
    return lambda_max(env, spectral_tol).lambda_max


@dataclass(frozen=True)
class Boundary:
    param: float
    family: str
    samples: tuple[tuple[float, float], ...]


def phase_boundary(
    family: Family,
    lo: Optional[float] = None,
    hi: Optional[float] = None,
    tol: float = 1e-9,
    samples: int = 16,
    spectral_tol: float = 1e-12,
) -> Boundary:
    """Parameter where ``lambda - 1/b`` changes sign along ``family``.

    The interval is first sampled at ``samples`` interior points plus the
    endpoints; the signs must switch exactly once.  The root is then
    bracketed to width ``tol``.
    """
    lo = family.lo if lo is None else lo
    hi = family.hi if hi is None else hi
    if not lo < hi:
        raise OutOfRange("need lo < hi")
    threshold = 1.0 / family.b

    def g(x):
        lam = family_lambda(family.env(x), spectral_tol)
        return 1.0 if math.isinf(lam) else lam - threshold

    xs = np.linspace(lo, hi, samples + 2)
    vals = [g(float(x)) for x in xs]
    signs = [v > 0 for v in vals]
    flips = [k for k in range(len(signs) - 1) if signs[k] != signs[k + 1]]
    recorded = tuple((float(x), float(v)) for x, v in zip(xs, vals))
    if not flips:
        raise NoSignChange(f"{family.name}: no sign change of lambda - 1/b on [{lo}, {hi}]")
    if len(flips) > 1:
        raise NonMonotoneSamples(f"{family.name}: {len(flips)} sign changes among the samples")
    k = flips[0]
    a, c = float(xs[k]), float(xs[k + 1])
    if vals[k] == 0:
        return Boundary(a, family.name, recorded)
    if vals[k + 1] == 0:
        return Boundary(c, family.name, recorded)
    root = brentq(g, a, c, xtol=tol, rtol=4 * np.finfo(float).eps)
    return Boundary(float(root), family.name, recorded)


def once_excited_boundary_b2(q: float) -> float:
    """Closed-form critical ``p`` of the once-excited walk on the binary tree."""
    return (4 * q - 2 - q * q) / (3 * q - 2)


# -- monotonicity ---------------------------------------------------------------


@dataclass(frozen=True)
class MonotonicityReport:
    lo: CookieEnvironment
    hi: CookieEnvironment
    verdict_lo: Optional[str]
    verdict_hi: Optional[str]
    consistent: bool
    skipped: bool
    reason: str = ""


def _padded_vector(env, m):
    return list(env.strengths) + [env.q] * (m - env.M) + [env.q]


def compare(env_a: CookieEnvironment, env_b: CookieEnvironment) -> int:
    """``-1`` if ``a <= b``, ``1`` if ``b <= a``, ``0`` if equal, in the componentwise order.

    Shorter piles are padded with their ``q``.  Raises :class:`NotComparable`
    otherwise.
    """
    if env_a.b != env_b.b or env_a.mode != env_b.mode:
        raise NotComparable("environments live on different trees or modes")
    m = max(env_a.M, env_b.M)
    va, vb = _padded_vector(env_a, m), _padded_vector(env_b, m)
    le = all(x <= y for x, y in zip(va, vb))
    ge = all(x >= y for x, y in zip(va, vb))
    if le and ge:
        return 0
    if le:
        return -1
    if ge:
        return 1
    raise NotComparable(f"{env_a} and {env_b} are not ordered componentwise")


def monotonicity_probe(
    env_lo: CookieEnvironment,
    env_hi: CookieEnvironment,
    tol: float = DEFAULT_BAND,
) -> MonotonicityReport:
    """Check that raising the cookie strengths never turns a transient walk recurrent.

    The pair is reordered if given the wrong way round.  Critical or
    inconclusive verdicts make the pair skipped rather than failed.
    """
    if compare(env_lo, env_hi) > 0:
        env_lo, env_hi = env_hi, env_lo
    vs = []
    for env in (env_lo, env_hi):
        try:
            v = verdict(env, tol)
        except Inconclusive as exc:
            return MonotonicityReport(env_lo, env_hi, None, None, True, True, f"inconclusive: {exc}")
        vs.append(v)
    v_lo, v_hi = vs
    if v_lo.critical or v_hi.critical:
        return MonotonicityReport(env_lo, env_hi, v_lo.outcome, v_hi.outcome, True, True, "critical")
    ok = not (v_lo.outcome == TRANSIENT and v_hi.outcome != TRANSIENT)
    return MonotonicityReport(env_lo, env_hi, v_lo.outcome, v_hi.outcome, ok, False)
