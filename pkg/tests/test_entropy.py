import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fermikms.entropy import (BoundStateDatum, entropy_production, entropy_report, eulerian,
                              eulerian_generating_check, eulerian_mode_series,
                              eulerian_series_ratio,
                              eulerian_polynomial, mode_entropy, ness_rel_entropy_closed,
                              partition_function_entropy, rel_entropy_closed,
                              rel_entropy_integral, rel_entropy_kl, rel_entropy_series)
from fermikms.kms import KmsSpec
from fermikms.linop import Covariance

from conftest import random_hermitian

SINGLE = 0.5 + math.log((1 + math.exp(-1)) / 2)


def random_spec(seed, n=6, c=0.3, beta=1.0):
    rng = np.random.default_rng(seed)
    return KmsSpec(beta, random_hermitian(rng, n, 3.0), random_hermitian(rng, n, c / beta))


def brute_eulerian(n):
    row = [0] * n
    for p in itertools.permutations(range(n)):
        row[sum(p[i] < p[i + 1] for i in range(n - 1))] += 1
    return row


def test_single_mode_oracle_value():
    assert SINGLE == pytest.approx(0.120115, abs=1e-6)
    for k in (1.0, -1.0):
        spec = KmsSpec(1.0, [[0.0]], [[k]])
        assert rel_entropy_closed(spec) == pytest.approx(SINGLE, abs=1e-12)
        assert rel_entropy_integral(spec) == pytest.approx(SINGLE, abs=1e-9)
        assert mode_entropy(1.0, 0.0, k) == pytest.approx(SINGLE, abs=1e-12)


def test_kl_scalar_oracle():
    val = 0.5 * math.log(0.5 / 0.75) + 0.5 * math.log(0.5 / 0.25)
    assert val == pytest.approx(0.143841, abs=1e-6)
    assert rel_entropy_kl(np.diag([0.5]), np.diag([0.75])) == pytest.approx(val, abs=1e-14)
    assert rel_entropy_kl(np.diag([0.3, 0.6]), np.diag([0.3, 0.6])) == pytest.approx(0, abs=1e-15)


def test_kl_rejects_pure_states():
    with pytest.raises(ValueError, match="touching"):
        rel_entropy_kl(np.diag([1.0, 0.5]), np.diag([0.5, 0.5]))


def test_zero_K_all_routes_vanish():
    spec = KmsSpec(1.0, np.diag([-1.0, 2.0]), np.zeros((2, 2)))
    rep = entropy_report(spec)
    assert max(abs(v) for v in rep.values().values()) <= 1e-14


def test_commuting_mode_sum():
    d, k = np.array([-1.0, 0.2, 1.5]), np.array([0.2, -0.1, 0.25])
    beta = 1.3
    spec = KmsSpec(beta, np.diag(d), np.diag(k))
    want = sum(beta * kk / (1 + np.exp(beta * dd)) + np.log((1 + np.exp(-beta * (dd + kk)))
                                                          / (1 + np.exp(-beta * dd)))
               for dd, kk in zip(d, k))
    assert rel_entropy_closed(spec) == pytest.approx(want, abs=1e-13)
    s = rel_entropy_series(spec)
    assert abs(s.value - want) <= s.truncation_bound


@pytest.mark.parametrize("seed", range(3))
def test_four_way_agreement(seed):
    rep = entropy_report(random_spec(seed))
    assert abs(rep.s_kl - rep.s_closed) <= 1e-9
    assert abs(rep.s_integral - rep.s_closed) <= 1e-6
    assert abs(rep.s_series - rep.s_closed) <= rep.series_truncation_bound + 5e-3
    assert min(rep.values().values()) >= -1e-9


def test_low_temperature_kl_stable():
    spec = random_spec(4, beta=60.0, c=0.2)
    rep = entropy_report(spec)
    assert np.isfinite(rep.s_kl) and abs(rep.s_kl - rep.s_closed) <= 1e-9 * max(1, abs(rep.s_closed))


@settings(max_examples=15)
@given(st.integers(0, 10**6), st.floats(0.0, 0.4))
def test_nonnegative(seed, c):
    spec = random_spec(seed, n=4, c=c)
    assert rel_entropy_closed(spec) >= -1e-9
    assert rel_entropy_integral(spec, 16) >= -1e-9


def test_quadratic_leading_order():
    spec = random_spec(21)
    coef = [rel_entropy_closed(KmsSpec(1.0, spec.D, lam * spec.K)) / lam**2
            for lam in (0.05, 0.1, 0.2)]
    assert max(coef) / min(coef) - 1 <= 0.05


def test_eulerian_rows():
    assert eulerian(3) == [1, 4, 1]
    assert eulerian(4) == [1, 11, 11, 1]
    for n in range(1, 9):
        assert eulerian(n) == brute_eulerian(n)
    for n in range(1, 21):
        assert sum(eulerian(n)) == math.factorial(n)
        assert eulerian(n)[0] == 1


def test_eulerian_polynomial_small():
    assert eulerian_polynomial(3, 2.0) == 1 + 8 + 4


def test_generating_function_limits():
    g = eulerian_generating_check(0.0, -2.0, 5)
    assert g.lhs == 0 and abs(g.rhs) <= 1e-15
    g = eulerian_generating_check(0.4, 0.0, 20)
    assert g.rhs == pytest.approx(math.expm1(0.4), abs=1e-15)
    assert g.gap <= 1e-15


def test_generating_function_converges_with_order():
    gaps = [eulerian_generating_check(0.3, -2.0, N).gap for N in (10, 15, 20, 30)]
    assert gaps[-1] <= 1e-14 and all(b < a for a, b in zip(gaps[:-2], gaps[1:-1]))
    assert eulerian_generating_check(0.3, -2.0, 15).gap_integrated <= 1e-10


def test_generating_function_pole_rejected():
    with pytest.raises(ValueError, match="pole"):
        eulerian_generating_check(0.0, 1.0, 5)


def test_bound_state_datum_roundtrip():
    b = BoundStateDatum.from_occupation(0.2, 0.7, 2.0)
    assert b.occupation(2.0) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        BoundStateDatum.from_occupation(0.0, 1.0, 1.0)


def test_ness_entropy_forms():
    assert ness_rel_entropy_closed(1.0, [BoundStateDatum(0.3, 0.3)]) == 0
    states = [BoundStateDatum(0.0, 1.0)]
    assert ness_rel_entropy_closed(1.0, states) == pytest.approx(SINGLE, abs=1e-12)
    assert partition_function_entropy(1.0, states) == pytest.approx(SINGLE, abs=1e-7)
    assert eulerian_mode_series(1.0, 0.0, 1.0) == pytest.approx(SINGLE, abs=1e-10)


@settings(max_examples=30)
@given(st.floats(-2, 2), st.floats(-1, 1), st.floats(0.2, 3))
def test_eulerian_series_matches_closed(s, k, beta):
    if abs(beta * k / (1 + math.exp(beta * s))) > 0.5:
        return
    assert eulerian_mode_series(beta, s, k) == pytest.approx(mode_entropy(beta, s, k), abs=1e-10)


def test_eulerian_series_divergence_refused():
    assert eulerian_series_ratio(1.0, 4.0, 10.0) > 1
    with pytest.raises(ValueError, match="diverges"):
        eulerian_mode_series(1.0, 4.0, 10.0)
    # a fixed order is still honoured, convergent or not
    assert np.isfinite(eulerian_mode_series(1.0, 0.0, 1.0, order=5))


def test_production_commuting_is_zero():
    spec = KmsSpec(1.0, np.diag([-1.0, 0.5, 2.0]), np.diag([0.2, 0.1, -0.3]))
    ep = entropy_production(spec, 2.0, time_nodes=20)
    assert abs(ep.E_t) <= 1e-14 and abs(ep.S_of_t) <= 1e-14


def test_production_two_routes_and_cumulative():
    spec = random_spec(5, n=5)
    ep = entropy_production(spec, 1.5, time_nodes=60)
    assert abs(ep.E_t - ep.E_t_fd) <= 1e-5 * abs(ep.E_t)
    assert ep.cumulative_residual <= 1e-6
    assert entropy_production(spec, 0.0, time_nodes=0).S_of_t == pytest.approx(0, abs=1e-14)
