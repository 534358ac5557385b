"""Relative entropy between the free and perturbed KMS states, four ways.

    series    Tr(beta K sum_n (1/(n+1)) T_n), T_n the order-n cube term of T(beta)
    integral  Tr(beta K int_0^1 [Ft(D) - Ft(D + uK)] du),  Ft(M) = (1 + e^{beta M})^{-1}
    closed    Tr(beta K Ft(D) + log(1 + e^{-beta(D+K)}) - log(1 + e^{-beta D}))
    kl        Tr(A(log A - log B) + (1-A)(log(1-A) - log(1-B))),  A = F_-(D), B = F_-(D+K)

plus Eulerian-number resummations for commuting rank-one perturbations and
the entropy production of the evolved state.
"""

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.special import expit

from .kms import KmsSpec, SeriesResult, _chain_terms, _eigen_frame, _refined
from .linop import (Covariance, HermitianOperator, as_hermitian, expi, matrix_function,
                    matrix_function_frechet, norms)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _ftilde(beta):
    return lambda x: expit(-beta * x)


def _ftilde_prime(beta):
    def fp(x):
        e = expit(-beta * x)
        return -beta * e * (1.0 - e)
    return fp


def _trace_product(A, B):
    """Tr(A B) without forming the product."""
    return complex(np.sum(np.asarray(A) * np.asarray(B).T))


def _real(z, what):
    z = complex(z)
    if abs(z.imag) > 1e-8 * max(1.0, abs(z.real)):
        raise ArithmeticError(f"{what} has a non-negligible imaginary part {z.imag:.3e}")
    return z.real


def rel_entropy_series(spec, N=5, quad_points=12):
    """Series route. The truncation bound covers the scalar trace:

        |tail| <= beta ||K||_1 sum_{n>N} c^n / (n+1) <= beta ||K||_1 c^{N+1} / ((N+2)(1-c)).
    """
    c = spec.require_convergent()
    beta = spec.beta
    d, U, Ke = _eigen_frame(spec)

    def total(q):
        terms = _chain_terms(d, Ke, beta, beta, N, q)
        acc = np.zeros_like(Ke)
        for n, t in enumerate(terms, start=1):
            acc = acc + t / (n + 1)
        return _real(beta * _trace_product(Ke, acc), "series entropy")

    value = total(quad_points)
    est = abs(value - total(_refined(quad_points)))
    k1 = norms(spec.K).trace_norm
    bound = beta * k1 * c ** (N + 1) / ((N + 2) * (1.0 - c))
    return SeriesResult(value, N, bound, est)


def rel_entropy_integral(spec, u_quad=32):
    beta = spec.beta
    ft = _ftilde(beta)
    x, w = np.polynomial.legendre.leggauss(u_quad)
    u = 0.5 * (x + 1)
    w = 0.5 * w
    F0 = matrix_function(spec.D, ft).entries
    acc = np.zeros_like(F0)
    for ui, wi in zip(u, w):
        acc += wi * (F0 - matrix_function(spec.D + ui * spec.K, ft).entries)
    return _real(beta * _trace_product(spec.K.entries, acc), "integral entropy")


def rel_entropy_closed(spec):
    beta = spec.beta
    D, K = spec.D, spec.K
    d = D.spectral.eigenvalues
    h = (D + K).spectral.eigenvalues
    lin = beta * _trace_product(K.entries, matrix_function(D, _ftilde(beta)).entries)
    logs = float(np.sum(_softplus(-beta * h)) - np.sum(_softplus(-beta * d)))
    return _real(lin, "closed entropy") + logs


MARGIN = 1e-12


def _logs(C, name):
    """(log C, log(1 - C)) as matrices, from the generator when available."""
    if C.hamiltonian is not None:
        b = C.beta
        return (matrix_function(C.hamiltonian, lambda x: -_softplus(-b * x)).entries,
                matrix_function(C.hamiltonian, lambda x: -_softplus(b * x)).entries)
    vals = C.op.spectral.eigenvalues
    if vals[0] <= MARGIN or vals[-1] >= 1 - MARGIN:
        raise ValueError(f"covariance {name} has spectrum [{vals[0]:.3e}, {vals[-1]:.3e}] "
                         "touching 0 or 1; its logarithm is undefined")
    return (matrix_function(C.op, np.log).entries,
            matrix_function(C.op, lambda x: np.log1p(-x)).entries)


def rel_entropy_kl(A, B):
    A = A if isinstance(A, Covariance) else Covariance(A)
    B = B if isinstance(B, Covariance) else Covariance(B)
    logA, log1A = _logs(A, "A")
    logB, log1B = _logs(B, "B")
    a = A.op.entries
    one_a = np.eye(a.shape[0]) - a
    val = _trace_product(a, logA - logB) + _trace_product(one_a, log1A - log1B)
    return _real(val, "KL entropy")


@dataclass(frozen=True)
class EntropyReport:
    s_series: float
    series_truncation_bound: float
    series_quadrature_estimate: float
    s_integral: float
    s_closed: float
    s_kl: float
    agreement_matrix: dict

    def values(self):
        return {"s_series": self.s_series, "s_integral": self.s_integral,
                "s_closed": self.s_closed, "s_kl": self.s_kl}


def entropy_report(spec, N=5, quad_points=12, u_quad=32):
    ser = rel_entropy_series(spec, N, quad_points)
    vals = {
        "s_series": ser.value,
        "s_integral": rel_entropy_integral(spec, u_quad),
        "s_closed": rel_entropy_closed(spec),
        "s_kl": rel_entropy_kl(Covariance.thermal(spec.D, spec.beta),
                               Covariance.thermal(spec.D + spec.K, spec.beta)),
    }
    names = list(vals)
    agree = {f"{a}-{b}": abs(vals[a] - vals[b]) for i, a in enumerate(names) for b in names[i + 1:]}
    return EntropyReport(ser.value, ser.truncation_bound, ser.quadrature_estimate,
                         vals["s_integral"], vals["s_closed"], vals["s_kl"], agree)


def _next_eulerian_row(row):
    m = len(row) + 1
    return [(l + 1) * (row[l] if l < len(row) else 0) + (m - l) * (row[l - 1] if l else 0)
            for l in range(m)]


def eulerian(n):
    """Row A(n, 0..n-1): permutations of n elements with l ascents (exact integers)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    row = [1]
    for _ in range(n - 1):
        row = _next_eulerian_row(row)
    return row


def eulerian_polynomial(n, u):
    """A_n(u) = sum_l A(n, l) u^l."""
    acc = 0.0
    for coef in reversed(eulerian(n)):
        acc = acc * u + coef
    return acc


@dataclass(frozen=True)
class GeneratingCheck:
    lhs: float
    rhs: float
    gap: float
    lhs_integrated: float
    rhs_integrated: float
    gap_integrated: float


def eulerian_generating_check(x, u, N):
    pole = u - math.exp(x * (u - 1))
    if abs(pole) < 1e-8:
        raise ValueError(f"(x, u) = ({x}, {u}) is at a pole of the generating function")
    polys = [eulerian_polynomial(n, u) for n in range(1, N + 1)]
    lhs = sum(p * x**n / math.factorial(n) for n, p in enumerate(polys, start=1))
    lhs_i = sum(p * x ** (n + 1) / math.factorial(n + 1) for n, p in enumerate(polys, start=1))
    rhs = (u - 1) / pole - 1.0
    if u == 0:
        rhs_i = math.expm1(x) - x
    else:
        ratio = (1 - u) / (1 - u * math.exp(x * (1 - u)))
        if ratio <= 0:
            raise ValueError("integrated generating function leaves the real branch of log")
        rhs_i = -x + math.log(ratio) / u
    return GeneratingCheck(lhs, rhs, abs(lhs - rhs), lhs_i, rhs_i, abs(lhs_i - rhs_i))


@dataclass(frozen=True)
class BoundStateDatum:
    s: float
    d: float

    @property
    def k(self):
        return self.d - self.s

    def occupation(self, beta):
        return float(expit(beta * self.d))

    @classmethod
    def from_occupation(cls, s, occupation, beta):
        if not 0 < occupation < 1:
            raise ValueError(f"occupation {occupation} must lie in (0, 1)")
        return cls(float(s), float(math.log(occupation / (1 - occupation)) / beta))


def mode_entropy(beta, s, k):
    """beta k/(1 + e^{beta s}) + log((1 + e^{-beta(s+k)})/(1 + e^{-beta s}))."""
    return float(beta * k * expit(-beta * s) + _softplus(-beta * (s + k)) - _softplus(-beta * s))


def ness_rel_entropy_closed(beta, bound_states):
    return float(sum(mode_entropy(beta, b.s, b.k) for b in bound_states))


def eulerian_series_ratio(beta, s, k):
    """Geometric convergence ratio of the Eulerian mode series.

    The generating function in beta*k has its nearest singularity at
    |beta s +- i pi|, so the series converges iff the ratio is below 1.
    """
    return abs(beta * k) / math.hypot(beta * s, math.pi)


def eulerian_mode_series(beta, s, k, order=None, tol=1e-18):
    """e^{beta s} sum_{n=1}^{order} x^{n+1}/(n+1)! A_n(-e^{beta s}),  x = beta k / (1 + e^{beta s}).

    A_n(-e^{beta s}) is an alternating sum much larger than its value, so the
    terms are summed in extended precision. With ``order=None`` the series is
    truncated once the geometric tail estimate drops below ``tol``.
    """
    r = eulerian_series_ratio(beta, s, k)
    if order is None:
        if r >= 1:
            raise ValueError(f"Eulerian series diverges: |beta k| / |beta s + i pi| = {r:.3f} >= 1")
        order = 1 if r == 0 else max(1, int(math.ceil(math.log(tol * (1 - r)) / math.log(r))) + 5)
    digits = 30 + int(order * max(beta * s, 0.0) / math.log(10))
    with mpmath.workdps(digits):
        e = mpmath.exp(mpmath.mpf(beta) * s)
        x = mpmath.mpf(beta) * k / (1 + e)
        u = -e
        acc = mpmath.mpf(0)
        fact = mpmath.mpf(1)
        row = [1]
        for n in range(1, order + 1):
            if n > 1:
                row = _next_eulerian_row(row)
            fact *= n + 1
            poly = mpmath.mpf(0)
            for coef in reversed(row):
                poly = poly * u + coef
            acc += x ** (n + 1) / fact * poly
        return float(e * acc)


def partition_function_entropy(beta, bound_states, h=1e-4):
    """-d/de log Z|_0 + log Z(1) - log Z(0),  Z(e) = prod_j (1 + e^{-beta(s_j + e k_j)}).

    The derivative is a central difference in e.
    """
    def logZ(eps):
        return float(sum(_softplus(-beta * (b.s + eps * b.k)) for b in bound_states))

    dlogZ = (logZ(h) - logZ(-h)) / (2 * h)
    return -dlogZ + logZ(1.0) - logZ(0.0)


@dataclass(frozen=True)
class EntropyProduction:
    t: float
    E_t: float
    E_t_fd: float
    S_of_t: float
    cumulative_residual: float


def _evolved_L(D, K, t):
    W = expi(D + K, t)
    return HermitianOperator(K.entries - W @ K.entries @ W.conj().T)


def entropy_of_time(spec, t):
    """S(t): the closed form with K replaced by L_t = K - e^{it(D+K)} K e^{-it(D+K)}."""
    return rel_entropy_closed(KmsSpec(spec.beta, spec.D, _evolved_L(spec.D, spec.K, t)))


def production_rate(spec, t, u_quad=32):
    """E_t = Tr(beta Phi_t int_0^1 [Ft(D) - Ft(D+uL_t)] du - beta L_t int_0^1 d/dt Ft(D+uL_t) du).

    Phi_t = dL_t/dt = -i e^{it(D+K)} [D, K] e^{-it(D+K)}; the t-derivative of
    Ft(D + uL_t) is the Frechet derivative of Ft in direction u Phi_t.
    """
    beta = spec.beta
    D, K = spec.D, spec.K
    W = expi(D + K, t)
    L = HermitianOperator(K.entries - W @ K.entries @ W.conj().T)
    comm = D.entries @ K.entries - K.entries @ D.entries
    Phi = HermitianOperator(-1j * (W @ comm @ W.conj().T))
    ft, fp = _ftilde(beta), _ftilde_prime(beta)
    x, w = np.polynomial.legendre.leggauss(u_quad)
    u = 0.5 * (x + 1)
    w = 0.5 * w
    F0 = matrix_function(D, ft).entries
    acc_a = np.zeros_like(F0)
    acc_b = np.zeros_like(F0)
    for ui, wi in zip(u, w):
        M = D + ui * L
        acc_a += wi * (F0 - matrix_function(M, ft).entries)
        acc_b += wi * matrix_function_frechet(M, ft, ui * Phi.entries, fp).entries
    val = beta * (_trace_product(Phi.entries, acc_a) - _trace_product(L.entries, acc_b))
    return _real(val, "entropy production")


def entropy_production(spec, t, u_quad=32, fd_step=1e-4, time_nodes=200):
    S_t = entropy_of_time(spec, t)
    E = production_rate(spec, t, u_quad)
    E_fd = (entropy_of_time(spec, t + fd_step) - entropy_of_time(spec, t - fd_step)) / (2 * fd_step)
    resid = float("nan")
    if time_nodes:
        x, w = np.polynomial.legendre.leggauss(time_nodes)
        ts = 0.5 * t * (x + 1)
        integral = 0.5 * t * sum(wi * production_rate(spec, ti, u_quad) for ti, wi in zip(ts, w))
        resid = abs(integral - S_t)
    return EntropyProduction(float(t), E, E_fd, S_t, resid)
