"""Acceptance criteria 1-10, each checked at its stated tolerance.

A summary with one PASS/FAIL line per criterion is printed at the end of the
run (see ``conftest.py``).
"""

import math
import random
import time

import numpy as np
import pytest
from scipy import stats

from cookiewalk.classify import (
    POSITIVE_RECURRENT, TRANSIENT, monotonicity_probe, once_excited, once_excited_boundary_b2,
    pair_zero_q, phase_boundary, verdict,
)
from cookiewalk.env import ZERO_Q, lambda_dig, lambda_once, lambda_sym, stuck_closed_form, validate
from cookiewalk.pmatrix import CookieMatrix
from cookiewalk.simulate import (
    extinction_probability, lambda_tail_slope, speed_estimate, stuck_probability,
)
from cookiewalk.spectral import radius_infinite_class, sym_defect
from oracles import binomial_z, enumeration_entries, mc_entries, scc_classes

pytestmark = pytest.mark.slow


def random_env(rng, max_m=8, zero_frac=0.35, zero_q=False, b_choices=(2, 3, 4, 5)):
    M = rng.randint(1, max_m)
    b = rng.choice(b_choices)
    ps = [0.0 if rng.random() < zero_frac else round(rng.uniform(0.01, 0.99), 3) for _ in range(M)]
    if zero_q:
        return validate(b, ps, 0.0, ZERO_Q)
    return validate(b, ps, round(rng.uniform(0.02, 0.97), 3))


# -- 1 -----------------------------------------------------------------------------


@pytest.mark.criterion(1, "matrix entries: enumeration oracle to 1e-12 and 1e7-trial Monte Carlo within 3 sigma")
def test_criterion_1_matrix_exactness():
    t0 = time.perf_counter()
    rng = random.Random(2024)
    envs = [random_env(rng) for _ in range(50)]
    worst, zs = 0.0, []
    for k, env in enumerate(envs):
        m = CookieMatrix(env)
        exact = m.block(0, 12)
        ref = enumeration_entries(env.b, env.strengths, env.q, 12, 12)
        worst = max(worst, float(np.abs(exact - ref).max()))
        trials = 10_000_000
        counts = mc_entries(env.b, env.strengths, env.q, 12, 12, trials, seed=1000 + k)
        z = binomial_z(counts[1:], exact[1:], trials)  # row 0 is deterministic
        zs.append(z[exact[1:] > 0])
        # impossible entries must never be observed
        assert np.all(z[exact[1:] == 0] == 0)
    z = np.concatenate(zs)
    n = z.size
    beyond = int((z > 3).sum())
    # 3-sigma per entry over n entries: the exceedance count is Binomial(n, 0.0027)
    budget = stats.binom.ppf(0.999, n, 2 * stats.norm.sf(3))
    bonferroni = stats.norm.isf(0.001 / (2 * n))
    elapsed = time.perf_counter() - t0
    print(f"\n[1] max |P - enum| = {worst:.2e}; {beyond}/{n} entries beyond 3 sigma "
          f"(budget {budget:.0f}); max z = {z.max():.2f} (limit {bonferroni:.2f}); {elapsed:.0f} s")
    assert worst < 1e-12
    assert beyond <= budget
    assert z.max() <= bonferroni
    assert elapsed < 120


# -- 2 -----------------------------------------------------------------------------


@pytest.mark.criterion(2, "class decomposition equals the SCC oracle on 200 environments")
def test_criterion_2_class_decomposition():
    t0 = time.perf_counter()
    cases = [
        (validate(2, [0.3, 0.6, 0.9], 0.4), (), 1),
        (validate(3, [0.0, 0.0, 0.0], 0.4), (), 4),
        (validate(2, [0.5, 0.8, 0.0, 0.0], 0.3), ((1, 2),), 3),
    ]
    for env, finite, start in cases:
        d = CookieMatrix(env).decomposition
        assert d.finite_classes == finite and d.infinite_class_start == start
    rng = random.Random(77)
    for k in range(200):
        env = random_env(rng, zero_frac=0.5, zero_q=(k % 10 == 0))
        m = CookieMatrix(env)
        finite, start = scc_classes(m.block(0, 2 * env.M + 4), infinite=env.mode != ZERO_Q)
        assert list(m.decomposition.finite_classes) == finite, env
        assert m.decomposition.infinite_class_start == start, env
    elapsed = time.perf_counter() - t0
    print(f"\n[2] 200 random environments and 3 fixed cases agree; {elapsed:.1f} s")
    assert elapsed < 60


# -- 3 -----------------------------------------------------------------------------


def _infinite_radius(env):
    radius, _, converged = radius_infinite_class(CookieMatrix(env))
    assert converged, env
    return radius


@pytest.mark.criterion(3, "infinite-class radius equals the closed forms to 1e-6")
def test_criterion_3_spectral_closed_forms():
    t0 = time.perf_counter()
    worst = 0.0
    for b in (2, 3):
        for q in (0.3, 0.5, 0.6):
            env = validate(b, [q], q)
            worst = max(worst, abs(_infinite_radius(env) - q / (b * (1 - q))))
    for b in (2, 3):
        for q in (0.3, 0.5):
            for M in (1, 2, 3):
                env = validate(b, [0.0] * M, q)
                c = q / (b * (1 - q))
                assert lambda_dig(M, q, b) == pytest.approx(c ** (M + 1), rel=1e-14)
                worst = max(worst, abs(_infinite_radius(env) - c ** (M + 1)))
    rng = random.Random(31)
    for _ in range(20):
        M = rng.randint(1, 6)
        b = rng.choice([2, 3])
        ps = [0.0] * (M // 2) + [rng.uniform(0, 0.99) for _ in range(M - M // 2)]
        q = rng.uniform(0.05, 0.95 * b / (b + 1))
        env = validate(b, ps, q)
        worst = max(worst, abs(_infinite_radius(env) - lambda_sym(env)))
    elapsed = time.perf_counter() - t0
    print(f"\n[3] worst |radius - closed form| = {worst:.2e}; {elapsed:.1f} s")
    assert worst < 1e-6
    assert elapsed < 300


# -- 4 -----------------------------------------------------------------------------


@pytest.mark.criterion(4, "eigen-defect vanishes beyond the pile, by formula and by residual")
def test_criterion_4_eigen_defect():
    rng = random.Random(5)
    worst_formula = worst_residual = 0.0
    checked = 0
    for k in range(20):
        M = rng.randint(2, 7)
        b = rng.choice([2, 3])
        ps = [0.0 if rng.random() < 0.4 else rng.uniform(0.01, 0.99) for _ in range(M)]
        if k % 2 == 0:
            ps[-1] = rng.uniform(0.05, 0.99)  # p_M nonzero
        env = validate(b, ps, rng.uniform(0.05, 0.9 * b / (b + 1)))
        m = CookieMatrix(env)
        m0 = sum(p == 0 for p in ps)
        first = max(1, M - m0) if ps[-1] != 0 else M
        for j in range(first, M + 6):
            d = sym_defect(m, j)
            worst_formula = max(worst_formula, abs(d.formula))
            worst_residual = max(worst_residual, abs(d.residual))
            checked += 1
    print(f"\n[4] {checked} columns: max |A(j)| by formula {worst_formula:.2e}, "
          f"by residual {worst_residual:.2e}")
    assert worst_formula < 1e-10 and worst_residual < 1e-10


# -- 5 -----------------------------------------------------------------------------


@pytest.mark.criterion(5, "phase boundaries: once-excited closed form to 1e-6, critical p = 0.702029 +- 1e-5")
def test_criterion_5_phase_boundaries():
    worst = 0.0
    for q in (0.1, 0.2, 0.3, 0.4, 0.5):
        bd = phase_boundary(once_excited(2, "p", q=q))
        worst = max(worst, abs(bd.param - (4 * q - 2 - q * q) / (3 * q - 2)))
        assert once_excited_boundary_b2(q) == pytest.approx((4 * q - 2 - q * q) / (3 * q - 2))
    # endpoints: the boundary reaches p = 0 at q = 2 - sqrt(2) and p = 1/2 at q = 1/2
    q_end = phase_boundary(once_excited(2, "q", p=0.0)).param
    assert abs(q_end - (2 - math.sqrt(2))) < 1e-6
    assert abs(lambda_once(0.0, 2 - math.sqrt(2), 2) - 0.5) < 1e-12
    assert abs(phase_boundary(once_excited(2, "p", q=0.5)).param - 0.5) < 1e-6
    p_crit = phase_boundary(pair_zero_q(2)).param
    print(f"\n[5] worst once-excited error {worst:.2e}; q endpoint {q_end:.12f}; "
          f"critical p = {p_crit:.9f}")
    assert worst < 1e-6
    assert abs(p_crit - 0.702029) < 1e-5


# -- 6 -----------------------------------------------------------------------------

REFERENCE_SPEEDS = [(0.0, 0.12374), (0.5, 0.14799), (0.91, 0.1084), (0.99, 0.33294)]


@pytest.mark.criterion(6, "speeds of (p1, 0.01; 0.95) match the reference values within 0.01")
def test_criterion_6_reference_speeds():
    t0 = time.perf_counter()
    lines = []
    for p1, ref in REFERENCE_SPEEDS:
        v, sigma = speed_estimate(validate(2, [p1, 0.01], 0.95), 1_000_000, 40, seed=42)
        lines.append((p1, ref, v.estimate, v.stderr, sigma))
    elapsed = time.perf_counter() - t0
    print()
    for p1, ref, est, err, sigma in lines:
        print(f"[6] p1 = {p1:4}: v = {est:.5f} +- {err:.5f} (reference {ref}); "
              f"sigma = {sigma.estimate:.3f}, AD normal at 1%: {sigma.extras['normal_at_1pct']}")
    print(f"[6] {elapsed:.0f} s")
    for p1, ref, est, _, sigma in lines:
        assert abs(est - ref) <= 0.01, p1
    # the CLT shape check at p1 = 0.5
    assert lines[1][4].extras["normal_at_1pct"]
    assert elapsed < 600


# -- 7 -----------------------------------------------------------------------------


@pytest.mark.criterion(7, "stuck probability at q = 0 matches 0.3794 (p = 0.8) and 1 (p = 0.5) within 2 stderr")
def test_criterion_7_stuck_probability():
    closed = stuck_closed_form(0.8, 0.8, 2)
    assert closed == pytest.approx(0.3794, abs=5e-5)
    r = stuck_probability(validate(2, [0.8, 0.8], 0.0, ZERO_Q), 100_000, seed=42)
    r5 = stuck_probability(validate(2, [0.5, 0.5], 0.0, ZERO_Q), 100_000, seed=42)
    print(f"\n[7] p = 0.8: {r.estimate:.5f} +- {r.stderr:.5f} (closed form {closed:.5f}); "
          f"p = 0.5: {r5.estimate:.5f} +- {r5.stderr:.5f}; undecided {r.extras['undecided']}, "
          f"{r5.extras['undecided']}")
    assert abs(r.estimate - closed) <= 2 * r.stderr
    assert abs(r5.estimate - 1.0) <= 2 * r5.stderr


# -- 8 -----------------------------------------------------------------------------

RECURRENT_ENVS = [
    (2, [0.5, 0.8, 0.0, 0.0], 0.3),
    (2, [0.0], 0.5),
    (2, [0.3], 0.3),
    (3, [0.2, 0.4], 0.4),
    (3, [0.0, 0.0, 0.9], 0.6),
]
TRANSIENT_ENVS = [
    (2, [0.6], 0.6),
    (2, [0.9, 0.9, 0.0, 0.0], 0.3),
    (3, [0.95, 0.95, 0.0, 0.0], 0.3),
    (2, [0.7, 0.7], 0.6),
    (3, [0.9, 0.2, 0.9], 0.55),
]


@pytest.mark.criterion(8, "positive recurrent L dies out (>= 0.999); transient L survives at 99% confidence")
def test_criterion_8_recurrence_and_extinction():
    print()
    for b, ps, q in RECURRENT_ENVS:
        env = validate(b, ps, q)
        assert verdict(env).outcome == POSITIVE_RECURRENT
        r = extinction_probability(env, env.M + 1, 5000, seed=8)
        print(f"[8] recurrent {env}: extinction {r.estimate:.4f} ({r.extras['died']}/5000)")
        assert r.estimate >= 0.999
    for b, ps, q in TRANSIENT_ENVS:
        env = validate(b, ps, q)
        v = verdict(env)
        assert v.outcome == TRANSIENT and v.lambda_used > 1 / b + 0.05
        n = 2000
        r = extinction_probability(env, env.M + 1, n, seed=8, pop_cap=10_000)
        survived = n - r.extras["died"]
        # one-sided 99% Clopper-Pearson lower bound on the survival probability
        lower = stats.beta.ppf(0.01, survived, n - survived + 1) if survived else 0.0
        print(f"[8] transient {env} (lambda {v.lambda_used:.3f}): survived {survived}/{n}, "
              f"99% lower bound {lower:.4f}")
        assert lower > 0


# -- 9 -----------------------------------------------------------------------------


@pytest.mark.criterion(9, "critical progeny tail slope -0.5 +- 0.1 at 1e6 replicas")
def test_criterion_9_critical_tail():
    t0 = time.perf_counter()
    p_crit = phase_boundary(pair_zero_q(2)).param
    env = validate(2, [p_crit, p_crit, 0.0, 0.0], 2 / 3)
    fit = lambda_tail_slope(env, 1, 1_000_000, seed=42)
    elapsed = time.perf_counter() - t0
    print(f"\n[9] p = {p_crit:.9f}: slope {fit.slope:.4f} +- {fit.stderr:.4f} on {fit.window}, "
          f"{fit.exceed_lower} samples above the window; {elapsed:.0f} s")
    assert abs(fit.slope + 0.5) <= 0.1
    assert fit.power_law
    assert elapsed < 300


# -- 10 ----------------------------------------------------------------------------


def _raised(rng, env):
    """A componentwise larger environment on the same tree."""
    ps = [min(0.99, p + rng.choice([0.0, rng.uniform(0, 0.5)])) for p in env.strengths]
    q = min(0.97, env.q + rng.choice([0.0, rng.uniform(0, 0.3)]))
    return validate(env.b, ps, q)


@pytest.mark.criterion(10, "no monotonicity violations over 200 comparable pairs outside the critical band")
def test_criterion_10_monotonicity():
    t0 = time.perf_counter()
    rng = random.Random(10)
    checked = skipped = violations = 0
    while checked < 200:
        lo = random_env(rng, max_m=5, b_choices=(2, 3))
        hi = _raised(rng, lo)
        r = monotonicity_probe(lo, hi)
        if r.skipped:
            skipped += 1
            continue
        checked += 1
        violations += not r.consistent
    elapsed = time.perf_counter() - t0
    print(f"\n[10] {checked} pairs checked, {skipped} skipped, {violations} violations; {elapsed:.0f} s")
    assert violations == 0
