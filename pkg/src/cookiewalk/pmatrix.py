"""The cookie environment matrix ``P = (p(i, j))``.

``p(i, j)`` is the probability that exactly ``j`` of the step variables
``xi_1, xi_2, ...`` equal 1 before the ``i``-th failure (``xi = 0``).  Entries
are built from two tables of prefix events over the first ``M`` variables and
a negative-binomial tail for the i.i.d. variables after the pile.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import betaln

from .env import ZERO_Q, CookieEnvironment, xi_law
from .errors import AllocationLimit, InternalError

DEFAULT_CELL_BUDGET = 10**8
# a + k - 1 at or below this uses exact integer binomials, log-space above
EXACT_BINOMIAL_LIMIT = 60
CLAMP_SLACK = 1e-14


@dataclass(frozen=True)
class PrefixEventTables:
    """Probabilities of the prefix events, indexed ``[m, n]``.

    ``e_table[m, n]``: among ``xi_1..xi_M`` there are at least ``m`` failures
    and exactly ``n`` ones before the ``m``-th.  ``e_prime_table[m, n]``:
    exactly ``m`` failures and ``n`` ones in the whole prefix.
    """

    e_table: np.ndarray
    e_prime_table: np.ndarray
    M: int

    def e(self, m: int, n: int) -> float:
        if 0 <= m <= self.M and 0 <= n <= self.M:
            return float(self.e_table[m, n])
        return 0.0

    def e_prime(self, m: int, n: int) -> float:
        if 0 <= m <= self.M and 0 <= n <= self.M:
            return float(self.e_prime_table[m, n])
        return 0.0


def build_prefix_tables(env: CookieEnvironment) -> PrefixEventTables:
    """Exact prefix tables by dynamic programming over ``(failures, ones)``."""
    M = env.M
    state = np.zeros((M + 1, M + 1))
    state[0, 0] = 1.0
    e_table = np.zeros((M + 1, M + 1))
    for k in range(1, M + 1):
        law = xi_law(env, k)
        other = (env.b - 1) * law.each_other_prob
        new = np.zeros_like(state)
        # after k-1 draws: zeros + ones <= k-1
        for z in range(k):
            for o in range(k - z):
                pr = state[z, o]
                if pr == 0.0:
                    continue
                hit = pr * law.fail_prob
                e_table[z + 1, o] += hit
                new[z + 1, o] += hit
                new[z, o + 1] += pr * law.one_prob
                new[z, o] += pr * other
        state = new
    for t in (e_table, state):
        t.setflags(write=False)
    return PrefixEventTables(e_table, state, M)


def _log_nb(a, k, s):
    """log of C(k+a-1, k) s^k (1-s)^a for a >= 1, k >= 0 (broadcasting)."""
    a = np.asarray(a, dtype=float)
    k = np.asarray(k, dtype=float)
    return k * math.log(s) + a * math.log1p(-s) - np.log(k + a) - betaln(a, k + 1)


def nb_term(a: int, k: int, s: float) -> float:
    """Probability of ``k`` successes before the ``a``-th failure, success rate ``s``."""
    if a < 1 or k < 0:
        return 0.0
    if s == 0.0:
        return 1.0 if k == 0 else 0.0
    if a + k - 1 <= EXACT_BINOMIAL_LIMIT:
        return math.comb(k + a - 1, k) * s**k * (1.0 - s) ** a
    return float(np.exp(_log_nb(a, k, s)))


def _nb_table(a_lo: int, a_hi: int, k_lo: int, k_hi: int, s: float) -> np.ndarray:
    """``table[a - a_lo, k - k_lo]`` of :func:`nb_term`; rows with ``a < 1`` are zero."""
    a = np.arange(a_lo, a_hi + 1)[:, None]
    k = np.arange(k_lo, k_hi + 1)[None, :]
    out = np.zeros((a.shape[0], k.shape[1]))
    valid_a = a[:, 0] >= 1
    if not valid_a.any():
        return out
    if s == 0.0:
        out[valid_a] = (k == 0).astype(float)
        return out
    aa = a[valid_a]
    out[valid_a] = np.exp(_log_nb(aa, k, s))
    # exact path for the small corner keeps entries consistent with nb_term
    small = (aa + k - 1) <= EXACT_BINOMIAL_LIMIT
    if small.any():
        rows, cols = np.nonzero(small)
        vals = [nb_term(int(aa[r, 0]), int(k[0, c]), s) for r, c in zip(rows, cols)]
        sub = out[valid_a]
        sub[rows, cols] = vals
        out[valid_a] = sub
    return out


@dataclass(frozen=True)
class ClassDecomposition:
    """Irreducible classes of ``P`` besides the absorbing ``{0}``."""

    finite_classes: tuple[tuple[int, int], ...]
    infinite_class_start: Optional[int]
    M0: int

    @property
    def K(self) -> int:
        return len(self.finite_classes) + (self.infinite_class_start is not None)

    def to_json(self) -> dict:
        return {
            "finite_classes": [list(c) for c in self.finite_classes],
            "infinite_class_start": self.infinite_class_start,
        }


def irreducible_classes(env: CookieEnvironment) -> ClassDecomposition:
    """Class endpoints read off the positions of zero-strength cookies.

    ``n`` is a left endpoint when exactly ``n-1`` of the first ``2n-1``
    strengths vanish and ``p_{2n-1} != 0``; a right endpoint when exactly
    ``n-1`` of the first ``2n-1`` vanish and ``p_{2n} = 0``.  Beyond the pile
    the strength is ``q``.
    """
    M = env.M

    def strength(j):
        return env.strengths[j - 1] if j <= M else env.q

    def zeros_upto(t):
        return sum(1 for j in range(1, t + 1) if strength(j) == 0)

    lefts, rights = [], []
    for n in range(1, M + 2):
        if zeros_upto(2 * n - 1) != n - 1:
            continue
        if strength(2 * n - 1) != 0:
            lefts.append(n)
        if strength(2 * n) == 0:
            rights.append(n)

    if env.mode == ZERO_Q:
        finite, infinite = lefts, None
    else:
        if not lefts:
            raise InternalError(f"no infinite class found for {env}")
        finite, infinite = lefts[:-1], lefts[-1]
    if len(rights) != len(finite):
        raise InternalError(f"unpaired class endpoints {lefts} / {rights} for {env}")
    pairs = tuple(zip(finite, rights))
    for lo, hi in pairs:
        if hi < lo:
            raise InternalError(f"empty class [{lo}, {hi}] for {env}")
    if infinite is not None and infinite > M + 1:
        raise InternalError(f"infinite class starts at {infinite} > M + 1")
    return ClassDecomposition(pairs, infinite, env.zero_count)


@dataclass
class CookieMatrix:
    """Lazily evaluated cookie environment matrix with memoised entries and blocks.

    Safe to share between threads: caches are guarded by a lock and every
    value is a deterministic function of ``(i, j)`` or ``(lo, hi)``.
    """

    env: CookieEnvironment
    cell_budget: int = DEFAULT_CELL_BUDGET
    tables: PrefixEventTables = field(init=False)
    decomposition: ClassDecomposition = field(init=False)

    def __post_init__(self):
        self.tables = build_prefix_tables(self.env)
        self.decomposition = irreducible_classes(self.env)
        self._entries: dict[tuple[int, int], float] = {}
        self._blocks: dict[tuple[int, int], np.ndarray] = {}
        self._lock = threading.Lock()
        ep = self.tables.e_prime_table
        self._prime_support = [(m, n, float(ep[m, n])) for m, n in zip(*np.nonzero(ep))]

    @property
    def s(self) -> float:
        return self.env.s

    def entry(self, i: int, j: int) -> float:
        if i < 0 or j < 0:
            raise IndexError(f"negative index ({i}, {j})")
        key = (i, j)
        with self._lock:
            hit = self._entries.get(key)
        if hit is not None:
            return hit
        value = self._compute_entry(i, j)
        with self._lock:
            self._entries[key] = value
        return value

    def _compute_entry(self, i, j):
        if i == 0:
            return 1.0 if j == 0 else 0.0
        s = self.s
        total = self.tables.e(i, j)
        for m, n, ep in self._prime_support:
            if n <= j and m <= i - 1:
                total += ep * nb_term(i - m, j - n, s)
        return _clamp(total, i, j)

    def block(self, lo: int, hi: int) -> np.ndarray:
        """Read-only dense view ``(p(i, j))_{lo <= i, j <= hi}``."""
        if lo < 0 or hi < lo:
            raise ValueError(f"need 0 <= lo <= hi, got lo={lo}, hi={hi}")
        size = hi - lo + 1
        if size * size > self.cell_budget:
            raise AllocationLimit(f"{size}x{size} block exceeds the budget of {self.cell_budget} cells")
        key = (lo, hi)
        with self._lock:
            hit = self._blocks.get(key)
        if hit is not None:
            return hit
        out = self._compute_block(lo, hi)
        out.setflags(write=False)
        with self._lock:
            self._blocks[key] = out
        return out

    def _compute_block(self, lo, hi):
        M = self.env.M
        size = hi - lo + 1
        out = np.zeros((size, size))
        if lo == 0:
            out[0, 0] = 1.0
        i_lo = max(lo, 1)
        if i_lo > hi:
            return out
        # prefix term: e(i, j) vanishes once i + j > M
        e = self.tables.e_table
        for i in range(i_lo, min(hi, M) + 1):
            for j in range(lo, min(hi, M) + 1):
                out[i - lo, j - lo] += e[i, j]
        a_lo, k_lo = i_lo - M, max(lo - M, 0)
        table = _nb_table(a_lo, hi, k_lo, hi, self.s)
        rows = slice(i_lo - lo, size)
        for m, n, ep in self._prime_support:
            # column j uses k = j - n; row i uses a = i - m (zero rows when a < 1)
            j0 = max(lo, n)
            if j0 > hi:
                continue
            sub = table[i_lo - m - a_lo : hi - m - a_lo + 1, j0 - n - k_lo : hi - n - k_lo + 1]
            out[rows, j0 - lo :] += ep * sub
        bad = (out > 1 + CLAMP_SLACK) | (out < -CLAMP_SLACK)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise InternalError(f"entry ({i + lo}, {j + lo}) = {out[i, j]} outside [0, 1]")
        np.clip(out, 0.0, 1.0, out=out)
        return out


def _clamp(value, i, j):
    if -CLAMP_SLACK <= value <= 1 + CLAMP_SLACK:
        return min(max(value, 0.0), 1.0)
    raise InternalError(f"p({i}, {j}) = {value} outside [0, 1]")


def p_entry(matrix: CookieMatrix, i: int, j: int) -> float:
    return matrix.entry(i, j)


def truncate(matrix: CookieMatrix, lo: int, hi: int) -> np.ndarray:
    return matrix.block(lo, hi)
