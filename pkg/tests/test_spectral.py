import random

import numpy as np
import pytest

from cookiewalk.env import ZERO_Q, lambda_sym, nu, nu_matrix, validate
from cookiewalk.errors import BudgetExceeded, DivergentTestVector, NonConvergence
from cookiewalk.pmatrix import CookieMatrix
from cookiewalk.spectral import (
    FINITE_PF, TRUNCATED, exponential_left_residual, lambda_max, pf_radius_finite,
    radius_infinite_class, sym_defect,
)


def test_pf_trivial_and_two_by_two():
    assert pf_radius_finite([[0.5]]).radius == 0.5
    root = pf_radius_finite(nu_matrix(0.5, 0.8, 2))
    assert abs(root.radius - 0.4) < 1e-12
    assert (root.right > 0).all() and (root.left > 0).all()
    assert root.right.sum() == pytest.approx(1) and root.left.sum() == pytest.approx(1)


def test_pf_matches_quadratic_formula():
    rng = np.random.default_rng(1)
    for _ in range(50):
        A = rng.uniform(0.01, 1, (2, 2))
        tr, det = np.trace(A), np.linalg.det(A)
        top = (tr + np.sqrt(tr * tr - 4 * det)) / 2
        assert abs(pf_radius_finite(A).radius - top) < 1e-12 * max(1, top)


def test_pf_eigenvectors():
    rng = np.random.default_rng(2)
    A = rng.uniform(0, 1, (6, 6))
    root = pf_radius_finite(A)
    assert np.allclose(A @ root.right, root.radius * root.right, atol=1e-10)
    assert np.allclose(root.left @ A, root.radius * root.left, atol=1e-10)


def test_pf_reducible_inputs():
    with pytest.raises(NonConvergence):
        pf_radius_finite([[0.5, 0.0], [0.2, 0.3]], check_irreducible=True)
    # a periodic matrix never settles from an asymmetric start
    with pytest.raises(NonConvergence):
        pf_radius_finite([[0.0, 1.0], [1.0, 0.0]], start=np.array([1.0, 0.0]), max_iter=1000)
    with pytest.raises(ValueError):
        pf_radius_finite([[-1.0]])


@pytest.mark.parametrize(
    "ps, q, expected",
    [
        ([0.5], 0.5, 0.5),
        ([0.0], 0.5, 0.25),
        ([0.0, 0.7], 0.4, None),
    ],
)
def test_infinite_class_examples(ps, q, expected):
    env = validate(2, ps, q)
    radius, trace, converged = radius_infinite_class(CookieMatrix(env))
    expected = lambda_sym(env) if expected is None else expected
    assert converged
    assert abs(radius - expected) < 1e-9
    assert trace[0][0] == 16
    assert all(b >= a - 1e-12 for (_, a), (_, b) in zip(trace, trace[1:]))


def test_lambda_max_examples():
    spectrum = lambda_max(validate(2, [0.5, 0.8, 0, 0], 0.3))
    assert [r.method for r in spectrum.radii] == [FINITE_PF, TRUNCATED]
    assert spectrum.radii[0].radius == pytest.approx(0.4, abs=1e-12)
    assert spectrum.radii[1].radius == pytest.approx(0.034628, abs=5e-7)
    assert spectrum.lambda_max == pytest.approx(0.4, abs=1e-12)
    spectrum = lambda_max(validate(2, [0.8, 0.5, 0, 0], 0.3))
    assert spectrum.lambda_max == pytest.approx(nu(0.8, 0.5, 2), abs=1e-12)
    assert spectrum.lambda_max == pytest.approx(0.50981, abs=5e-6)
    spectrum = lambda_max(validate(2, [0.9], 0.9))
    assert spectrum.lambda_max == pytest.approx(2 / 9, abs=1e-9)


def test_lambda_max_zero_q_has_only_finite_classes():
    spectrum = lambda_max(validate(2, [0.8, 0.8], 0.0, ZERO_Q))
    assert spectrum.lambda_max == pytest.approx(nu(0.8, 0.8, 2), abs=1e-12)
    assert spectrum.trace == [] and spectrum.converged


def test_budget_exhaustion():
    env = validate(2, [0.0], 0.66)
    spectrum = lambda_max(env, tol=1e-14, n_max=32)
    assert not spectrum.converged
    assert spectrum.radii[-1].radius <= (0.66 / 0.68) ** 2
    with pytest.raises(BudgetExceeded) as info:
        lambda_max(env, tol=1e-14, n_max=32, strict=True)
    assert info.value.spectrum is not None


def test_spectrum_json_shape():
    out = lambda_max(validate(2, [0.5, 0.8, 0, 0], 0.3)).to_json()
    assert set(out) >= {"radii", "lambda", "trace", "converged"}
    assert out["lambda"] == max(out["radii"])


def test_lambda_at_most_one():
    rng = random.Random(4)
    for _ in range(20):
        M = rng.randint(1, 5)
        b = rng.choice([2, 3])
        ps = [0.0 if rng.random() < 0.4 else rng.uniform(0, 0.99) for _ in range(M)]
        env = validate(b, ps, rng.uniform(0.05, 0.95))
        spectrum = lambda_max(env, n_max=1024)
        assert 0 <= spectrum.lambda_max <= 1 + 1e-12


def test_defect_zero_beyond_pile():
    m = CookieMatrix(validate(2, [0.3, 0.6, 0.0, 0.9], 0.35))
    for j in range(4, 10):
        d = sym_defect(m, j)
        assert abs(d.formula) < 1e-10 and abs(d.residual) < 1e-10 and d.agree


def test_defect_digging_formula_vs_residual():
    d = sym_defect(CookieMatrix(validate(2, [0.0], 0.5)), 1)
    assert abs(d.formula - d.residual) < 1e-9


def test_defect_divergent_vector():
    with pytest.raises(DivergentTestVector):
        sym_defect(CookieMatrix(validate(2, [0.0], 0.7)), 1)
    with pytest.raises(ValueError):
        sym_defect(CookieMatrix(validate(2, [0.0], 0.3)), 0)


def test_exponential_left_residual_decays():
    m = CookieMatrix(validate(2, [0.0, 0.0, 0.6, 0.2], 0.45))
    res = [exponential_left_residual(m, n) for n in (16, 64, 256)]
    assert res[-1] < 1e-6
    assert res[-1] <= res[0]
