"""Spectral radii of the irreducible classes of the cookie matrix.

Finite classes are handled by power iteration.  The infinite class
``[l_K, inf)`` is approximated by the radii of its north-west truncations,
which increase towards the radius of the infinite matrix as the window grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from .env import CookieEnvironment, lambda_sym
from .errors import BudgetExceeded, DivergentTestVector, InternalError, NonConvergence
from .pmatrix import CookieMatrix

FINITE_PF = "finite-PF"
TRUNCATED = "truncated-limit"

DEFAULT_TOL = 1e-10
DEFAULT_N_MAX = 4096
DEFAULT_N_START = 16
MONOTONE_SLACK = 1e-12
RESIDUAL_SLACK = 1e-6


@dataclass(frozen=True)
class PerronRoot:
    radius: float
    right: np.ndarray
    left: np.ndarray
    iterations: int


def _power(A, x, tol, max_iter):
    n = A.shape[0]
    x = np.ones(n) if x is None else np.array(x, dtype=float)
    x /= x.sum()
    prev = None
    prev_delta = None
    for it in range(1, max_iter + 1):
        y = A @ x
        rq = float(x @ y) / float(x @ x)
        total = y.sum()
        if not total > 0:
            raise NonConvergence("power iterate vanished; the matrix is nilpotent on the start vector")
        x = y / total
        if prev is not None:
            delta = abs(rq - prev)
            # the remaining error of a geometric sequence is delta * k / (1 - k)
            k = delta / prev_delta if prev_delta else 0.0
            err = delta * k / (1 - k) if k < 1 else math.inf
            if delta <= tol * abs(rq) and err <= tol * abs(rq):
                return rq, x, it
            prev_delta = delta
        prev = rq
    raise NonConvergence(f"power iteration did not settle within {max_iter} iterations")


def is_irreducible(dense) -> bool:
    A = np.asarray(dense)
    if A.shape[0] == 1:
        return bool(A[0, 0] > 0)
    ncomp, _ = connected_components(A > 0, directed=True, connection="strong")
    return ncomp == 1


def pf_radius_finite(
    dense,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    start: Optional[np.ndarray] = None,
    check_irreducible: bool = False,
) -> PerronRoot:
    """Perron root of a nonnegative irreducible matrix by power iteration.

    Both eigenvectors are normalised to unit 1-norm.  ``start`` seeds the
    right iteration (a shorter vector is zero-padded).  With
    ``check_irreducible`` a reducible input raises :class:`NonConvergence`
    instead of returning a radius whose eigenvectors are not positive.
    """
    A = np.asarray(dense, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    if (A < 0).any():
        raise ValueError("matrix has negative entries")
    if check_irreducible and not is_irreducible(A):
        raise NonConvergence("input matrix is reducible")
    n = A.shape[0]
    if n == 1:
        one = np.ones(1)
        return PerronRoot(float(A[0, 0]), one, one, 0)
    if start is not None:
        start = np.asarray(start, dtype=float)
        if start.shape[0] < n:
            start = np.concatenate([start, np.zeros(n - start.shape[0])])
        start = start[:n]
    radius, right, it = _power(A, start, tol, max_iter)
    _, left, _ = _power(A.T, None, tol, max_iter)
    # a settled quotient with a poor eigenpair means a degenerate (periodic or reducible) input
    scale = float(np.abs(A).sum(axis=1).max())
    if np.abs(A @ right - radius * right).sum() > RESIDUAL_SLACK * scale:
        raise NonConvergence(f"Rayleigh quotient {radius!r} settled on a vector that is not an eigenvector")
    return PerronRoot(radius, right, left, it)


@dataclass(frozen=True)
class ClassRadius:
    lo: int
    hi: Optional[int]  # None for the infinite class
    radius: float
    method: str


@dataclass
class ClassSpectrum:
    radii: list[ClassRadius]
    lambda_max: float
    trace: list[tuple[int, float]] = field(default_factory=list)
    converged: bool = True
    extrapolated: Optional[float] = None

    def to_json(self) -> dict:
        return {
            "radii": [r.radius for r in self.radii],
            "classes": [[r.lo, r.hi] for r in self.radii],
            "methods": [r.method for r in self.radii],
            "lambda": self.lambda_max,
            "trace": [[n, r] for n, r in self.trace],
            "converged": self.converged,
            "extrapolated": self.extrapolated,
        }


def _aitken(values):
    if len(values) < 3:
        return None
    x0, x1, x2 = values[-3:]
    denom = (x2 - x1) - (x1 - x0)
    if denom == 0:
        return x2
    return x2 - (x2 - x1) ** 2 / denom


def radius_infinite_class(
    matrix: CookieMatrix,
    tol: float = DEFAULT_TOL,
    n_max: int = DEFAULT_N_MAX,
    n_start: int = DEFAULT_N_START,
):
    """Radius of ``(p(i, j))_{i, j >= l_K}`` from doubling truncation windows.

    Returns ``(radius, trace, converged)``, where ``trace`` lists ``(N, radius)``
    for windows ``l_K .. l_K + N``.  Runs until two consecutive windows agree
    to ``tol`` or ``N`` would exceed ``n_max``.
    """
    lK = matrix.decomposition.infinite_class_start
    if lK is None:
        raise ValueError("this environment has no infinite class")
    trace: list[tuple[int, float]] = []
    vec = None
    N = n_start
    converged = False
    while True:
        root = pf_radius_finite(matrix.block(lK, lK + N), start=vec)
        vec = root.right
        if trace and root.radius < trace[-1][1] - MONOTONE_SLACK:
            raise InternalError(
                f"truncation radius decreased from {trace[-1][1]!r} to {root.radius!r} at N={N}"
            )
        trace.append((N, root.radius))
        if len(trace) > 1 and abs(trace[-1][1] - trace[-2][1]) < tol:
            converged = True
            break
        if 2 * N > n_max:
            break
        N *= 2
    return trace[-1][1], trace, converged


def lambda_max(
    env: CookieEnvironment,
    tol: float = DEFAULT_TOL,
    n_max: int = DEFAULT_N_MAX,
    matrix: Optional[CookieMatrix] = None,
    strict: bool = False,
) -> ClassSpectrum:
    """Radius of every irreducible class and their maximum.

    With ``strict`` an unconverged infinite-class truncation raises
    :class:`BudgetExceeded` (carrying the spectrum); otherwise the spectrum is
    returned with ``converged=False``.
    """
    matrix = matrix or CookieMatrix(env)
    dec = matrix.decomposition
    radii = []
    for lo, hi in dec.finite_classes:
        root = pf_radius_finite(matrix.block(lo, hi))
        radii.append(ClassRadius(lo, hi, root.radius, FINITE_PF))
    trace, converged, extrapolated = [], True, None
    if dec.infinite_class_start is not None:
        radius, trace, converged = radius_infinite_class(matrix, tol, n_max)
        radii.append(ClassRadius(dec.infinite_class_start, None, radius, TRUNCATED))
        extrapolated = _aitken([r for _, r in trace])
    lam = max(r.radius for r in radii) if radii else 0.0
    spectrum = ClassSpectrum(radii, lam, trace, converged, extrapolated)
    if strict and not converged:
        raise BudgetExceeded(f"infinite class not converged within N <= {n_max}", spectrum)
    return spectrum


@dataclass(frozen=True)
class EigenDefect:
    j: int
    formula: float
    residual: float
    tail_bound: float

    @property
    def agree(self) -> bool:
        return abs(self.formula - self.residual) <= self.tail_bound + 1e-12


def _ratio(env):
    s = env.s
    if s >= 0.5:
        raise DivergentTestVector(f"s = {s} >= 1/2: the exponential test vector is not summable")
    return s / (1 - s)


def defect_formula(matrix: CookieMatrix, j: int) -> float:
    """Closed double-sum expression of the defect ``A(j)`` of the exponential vector."""
    env, t = matrix.env, matrix.tables
    r = _ratio(env)
    M = env.M
    first = sum(t.e(i, j) * r ** (i - 1) for i in range(1, M - j + 1))
    second = sum(
        t.e_prime(m, n) * r ** (j + m - n)
        for n in range(j + 1, M + 1)
        for m in range(0, M - n + 1)
    )
    return first - second


def sym_defect(matrix: CookieMatrix, j: int, trunc: Optional[int] = None) -> EigenDefect:
    """Defect of ``Y = ((s/(1-s))^{i-1})_{i>=1}`` as a left eigenvector, column ``j``.

    ``sum_i p(i, j) Y_i = lambda_sym Y_j + A(j)``.  ``A(j)`` is evaluated by its
    explicit formula and, independently, as the residual of the series cut at
    ``trunc``; the neglected tail is at most ``r^trunc / (1 - r)``.
    """
    if j < 1:
        raise ValueError("column index must be >= 1")
    env = matrix.env
    r = _ratio(env)
    if trunc is None:
        # enough terms for the tail bound to sit below 1e-16
        trunc = max(j, env.M) + (int(math.log(1e-16) / math.log(r)) + 1 if r > 0 else 1)
    series = math.fsum(matrix.entry(i, j) * r ** (i - 1) for i in range(1, trunc + 1))
    residual = series - lambda_sym(env) * r ** (j - 1)
    tail = r**trunc / (1 - r)
    return EigenDefect(j, defect_formula(matrix, j), residual, tail)


def exponential_left_residual(matrix: CookieMatrix, N: int) -> float:
    """Relative 1-norm of ``Y^T P_N - lambda_sym Y^T`` on the window ``l_K .. l_K + N``."""
    env = matrix.env
    r = _ratio(env)
    lK = matrix.decomposition.infinite_class_start
    idx = np.arange(lK, lK + N + 1)
    y = r ** (idx - 1.0)
    res = y @ matrix.block(lK, lK + N) - lambda_sym(env) * y
    return float(np.abs(res).sum() / y.sum())
