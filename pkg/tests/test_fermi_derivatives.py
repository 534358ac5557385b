import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fermikms.fermi_derivatives import (FermiFamily, a_of_u, dA_dlambda, derivative_consistency,
                                        family_from_kms, finite_difference, kms_cross_check)
from fermikms.kms import KmsSpec
from fermikms.linop import fermi_factor, op_norm

from conftest import random_hermitian


def family(seed, n=5, lam=0.0):
    rng = np.random.default_rng(seed)
    return FermiFamily(random_hermitian(rng, n, 3.0), random_hermitian(rng, n, 0.5), lam)


def test_a_at_zero_is_fermi_factor():
    fam = family(0, lam=0.4)
    assert np.allclose(a_of_u(fam, 0.0).entries, fermi_factor(fam.D, 1.0).entries, atol=1e-14)


def test_a_antiperiodic():
    fam = family(1)
    for u in (0.2, 0.7):
        assert np.allclose(a_of_u(fam, u + 1).entries, -a_of_u(fam, u).entries, atol=1e-14)


def test_a_scalar_values():
    fam = FermiFamily([[0.0]], [[0.0]])
    assert a_of_u(fam, 0.0).entries[0, 0] == pytest.approx(0.5)
    fam = FermiFamily([[np.log(3)]], [[0.0]])
    assert a_of_u(fam, 0.5).entries[0, 0] == pytest.approx(3**-0.5 * 0.75)


def test_commuting_first_derivative():
    # [D, K] = 0: d/dlambda A(0) = k f(d)(1 - f(d)) per mode
    d, k = np.array([-1.0, 0.5, 2.0]), np.array([0.3, -0.2, 0.1])
    fam = FermiFamily(np.diag(d), np.diag(k))
    f = 1 / (1 + np.exp(-d))
    X = dA_dlambda(fam, 0.0, 1)
    assert np.allclose(np.diag(X).real, k * f * (1 - f), atol=1e-12)


def test_order_limit():
    with pytest.raises(ValueError):
        dA_dlambda(family(0), 0.0, 4)
    with pytest.raises(ValueError):
        derivative_consistency(family(0), 0.0, 0)


@pytest.mark.parametrize("n,tol", [(1, 1e-5), (2, 1e-5), (3, 1e-4)])
def test_formula_vs_finite_difference(n, tol):
    fam = family(3, lam=0.1)
    X = dA_dlambda(fam, 0.3, n)
    fd = finite_difference(fam, 0.3, n)
    assert op_norm(X - fd) <= tol * op_norm(fd)


def test_taylor_remainder_slope():
    rep = derivative_consistency(family(4), 0.0, 2)
    assert rep.relative_errors[1] <= 1e-5 and rep.relative_errors[2] <= 1e-5
    assert rep.slope_ok and rep.remainder_r2 >= 0.99


def test_derivatives_hermitian_at_zero():
    rep = derivative_consistency(family(5), 0.0, 2)
    assert max(rep.hermiticity.values()) <= 1e-10


def test_family_from_kms_and_cross_check():
    rng = np.random.default_rng(6)
    spec = KmsSpec(2.0, random_hermitian(rng, 4, 2.0), random_hermitian(rng, 4, 0.1))
    fam = family_from_kms(spec)
    assert np.allclose(a_of_u(fam.at(1.0), 0.0).entries,
                       fermi_factor(spec.D + spec.K, spec.beta).entries, atol=1e-13)
    gaps = kms_cross_check(spec, n_max=3)
    assert max(gaps.values()) <= 1e-8


@settings(max_examples=8)
@given(st.integers(0, 10**6), st.floats(-1.5, 1.5))
def test_first_derivative_property(seed, u):
    fam = family(seed, n=3)
    X = dA_dlambda(fam, u, 1, quad_points=10)
    fd = finite_difference(fam, u, 1)
    assert op_norm(X - fd) <= 1e-5 * max(op_norm(fd), 1e-3)
