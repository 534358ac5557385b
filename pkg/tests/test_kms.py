import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fermikms.kms import (ContractionError, KmsSpec, kms_two_point, order_term_cube,
                          quasifree_npoint, recursion_residuals, simplex_cube_check,
                          t_recursive_residual, t_series, truncation_bound)
from fermikms.linop import Covariance, HermitianOperator, fermi_factor, matrix_function, op_norm

from conftest import random_hermitian


def random_spec(seed, n=6, beta=1.0, c=0.3, spread=3.0):
    rng = np.random.default_rng(seed)
    D = random_hermitian(rng, n, spread)
    K = random_hermitian(rng, n, c / beta)
    return KmsSpec(beta, D, K)


def test_spec_validation():
    with pytest.raises(ValueError):
        KmsSpec(0.0, np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        KmsSpec(1.0, np.eye(2), np.eye(3))


def test_contraction_rejected():
    spec = KmsSpec(1.0, np.diag([0.0, 1.0]), np.eye(2))
    with pytest.raises(ContractionError, match="1/beta"):
        t_series(spec)


def test_truncation_bound_value():
    assert truncation_bound(0.5, 2) == pytest.approx(0.25)


def test_two_point_examples():
    T = Covariance(0.5 * np.eye(2))
    f = np.array([1.0, 0.0])
    tp = kms_two_point(T, f, f)
    assert (tp.annihilation_first, tp.creation_first) == pytest.approx((0.5, 0.5))
    T = Covariance(np.diag([0.2, 0.9]))
    tp = kms_two_point(T, f, np.array([0.0, 1.0]))
    assert tp.annihilation_first == 0 and tp.creation_first == 0
    with pytest.raises(ValueError):
        kms_two_point(T, np.ones(3), f)


@given(st.integers(0, 10**6))
def test_two_point_car_identity(seed):
    rng = np.random.default_rng(seed)
    T = fermi_factor(random_hermitian(rng, 4), 1.0)
    f = rng.normal(size=4) + 1j * rng.normal(size=4)
    g = rng.normal(size=4) + 1j * rng.normal(size=4)
    tp = kms_two_point(T, f, g)
    assert abs(tp.annihilation_first + tp.creation_first - np.vdot(f, g)) <= 1e-12


def test_npoint_examples():
    T = Covariance(np.diag([0.3, 0.8]))
    e = np.eye(2)
    assert quasifree_npoint(T, [e[0]], []) == 0
    assert quasifree_npoint(T, [e[0], e[1]], [e[0], e[1]]) == pytest.approx(0.3 * 0.8)
    f, g = np.array([1.0, 1j]), np.array([0.5, 2.0])
    assert quasifree_npoint(T, [f], [g]) == pytest.approx(kms_two_point(T, f, g).annihilation_first)


def test_series_free_case():
    D = np.diag([-1.0, 0.5, 2.0])
    spec = KmsSpec(2.0, D, np.zeros((3, 3)))
    for ub in (0.0, 1.0, 2.0):
        r = t_series(spec, ub, N=3)
        assert np.allclose(r.value, fermi_factor(D, 2.0).entries, atol=1e-14)


def test_series_commuting_diagonal():
    d, k = np.array([-1.0, 0.3, 2.0]), np.array([0.2, -0.25, 0.1])
    spec = KmsSpec(1.0, np.diag(d), np.diag(k))
    r = t_series(spec, N=8)
    exact = 1 / (1 + np.exp(-(d + k)))
    assert np.max(np.abs(np.diag(r.value) - exact)) <= r.truncation_bound + 1e-10


@pytest.mark.parametrize("seed", range(4))
def test_series_against_closed_form(seed):
    spec = random_spec(seed)
    r = t_series(spec)
    exact = fermi_factor(spec.D + spec.K, spec.beta).entries
    assert op_norm(r.value - exact) <= r.truncation_bound + r.quadrature_estimate
    Covariance(r.value)


def test_series_monotone_in_order():
    spec = random_spec(11, c=0.4)
    exact = fermi_factor(spec.D + spec.K, spec.beta).entries
    errs = [op_norm(t_series(spec, N=N).value - exact) for N in range(0, 7)]
    assert all(b <= a + 1e-10 for a, b in zip(errs, errs[1:]))


def test_series_stable_at_large_beta():
    spec = random_spec(3, beta=40.0, c=0.3, spread=5.0)
    r = t_series(spec)
    assert np.all(np.isfinite(r.value))
    exact = fermi_factor(spec.D + spec.K, spec.beta).entries
    assert op_norm(r.value - exact) <= r.truncation_bound + r.quadrature_estimate + 1e-8


def test_kms_inverse_relation():
    spec = random_spec(5)
    H = spec.D + spec.K
    F = fermi_factor(H, spec.beta).entries
    E = matrix_function(H, lambda x: np.exp(-spec.beta * x)).entries
    assert np.linalg.norm(F @ (np.eye(6) + E) - np.eye(6), 2) <= 1e-10


def test_recursion_examples():
    spec = random_spec(2, c=0.3)
    res = recursion_residuals(spec, 5)
    assert res[0] == pytest.approx(op_norm(fermi_factor(spec.D, 1.0).entries
                                           - fermi_factor(spec.D + spec.K, 1.0).entries))
    for a, b in zip(res[:3], res[1:4]):
        assert b / a <= spec.contraction + 0.05
    for N in range(5):
        assert res[N] <= spec.contraction**N + 1e-8
    assert t_recursive_residual(spec, 5) == res[-1]
    zero = KmsSpec(1.0, spec.D, np.zeros((6, 6)))
    # interpolating the free term back to u = 0 costs ~1e-11
    assert max(recursion_residuals(zero, 3)) <= 1e-10


@pytest.mark.parametrize("n,tol", [(1, 1e-12), (2, 1e-6), (3, 1e-5)])
def test_simplex_cube(n, tol):
    spec = random_spec(8, n=5)
    assert simplex_cube_check(spec, n, quad_points=10) <= tol


def test_simplex_check_order_limit():
    with pytest.raises(ValueError):
        simplex_cube_check(random_spec(0), 4)


def test_cube_terms_match_series_terms():
    spec = random_spec(9, n=5)
    r = t_series(spec, N=2)
    for n in (1, 2):
        assert op_norm(order_term_cube(spec, n) - r.terms[n - 1]) <= 1e-8


@settings(max_examples=10)
@given(st.integers(0, 10**6), st.floats(0.0, 0.5))
def test_series_is_covariance(seed, c):
    spec = random_spec(seed, n=4, c=c)
    r = t_series(spec, N=5, quad_points=8)
    V = r.value
    assert op_norm(V - V.conj().T) <= 2 * r.quadrature_estimate + 1e-12
    Covariance((V + V.conj().T) / 2)
