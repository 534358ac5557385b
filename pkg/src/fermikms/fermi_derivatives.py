"""The family A(u) = (e^{uD} + e^{(u-1)D})^{-1}, D = D0 + lambda K, and its lambda-derivatives

    d^n/dlambda^n A(u) = (-1)^n n! int_{(0,1)^n} A(u - sum x_i) prod_i K A(x_i) dx.

Temperature is absorbed into D here; ``family_from_kms`` maps a KmsSpec to
the family whose A(0) at lambda = 1 is F_-(D + K) at inverse temperature beta.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np

from .dynamics import loglog_fit
from .linop import HermitianOperator, as_hermitian, op_norm


@dataclass(frozen=True)
class FermiFamily:
    D0: HermitianOperator
    K: HermitianOperator
    lam: float = 0.0
    beta_absorbed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "D0", as_hermitian(self.D0))
        object.__setattr__(self, "K", as_hermitian(self.K))

    @property
    def D(self):
        return self.D0 + self.lam * self.K

    def at(self, lam):
        return FermiFamily(self.D0, self.K, float(lam), self.beta_absorbed)


def family_from_kms(spec):
    """D0 = beta D, K -> beta K; then A(0) at lambda = 1 is T(beta) of the kms module."""
    return FermiFamily(spec.beta * spec.D, spec.beta * spec.K, 0.0, True)


def _a_diag(d, u):
    """Eigenvalues of A(u) for real u (any shape), shape u.shape + d.shape.

    A(u) = e^{-uD} (1 + e^{-D})^{-1} on [0, 1), extended antiperiodically.
    """
    u = np.asarray(u, dtype=float)
    n = np.floor(u)
    f = u - n
    sign = np.where(n % 2 == 0, 1.0, -1.0)
    x = -f[..., None] * d - np.logaddexp(0.0, -d)
    return sign[..., None] * np.exp(x)


def a_of_u(fam, u):
    sd = fam.D.spectral
    U = sd.eigenvectors
    return HermitianOperator((U * _a_diag(sd.eigenvalues, u)) @ U.conj().T)


def _split_nodes(q, f):
    """Gauss-Legendre nodes on [0, f] and [f, 1] (one segment if f is 0)."""
    x, w = np.polynomial.legendre.leggauss(q)
    if f <= 0.0 or f >= 1.0:
        return 0.5 * (x + 1), 0.5 * w
    a = 0.5 * f * (x + 1)
    b = f + 0.5 * (1 - f) * (x + 1)
    return np.concatenate([a, b]), np.concatenate([0.5 * f * w, 0.5 * (1 - f) * w])


def _cube(d, Ke, u, n, q):
    """int_{(0,1)^n} A(u - sum x) prod K A(x_i) in the D eigenbasis.

    Each x_j is split where u - x_1 - ... - x_j crosses an integer, which is
    where the integrand (or the inner integral) is not smooth.
    """
    dim = d.size

    def rec(level, r, P):
        xs, ws = _split_nodes(q, r - np.floor(r))
        if level == n:
            ax = _a_diag(d, xs)               # (q', dim)
            ar = _a_diag(d, r - xs)           # (q', dim)
            M = P @ Ke
            return np.einsum("k,ki,ij,kj->ij", ws, ar, M, ax)
        out = np.zeros((dim, dim), dtype=complex)
        ax = _a_diag(d, xs)
        for xk, wk, ak in zip(xs, ws, ax):
            out += wk * rec(level + 1, r - xk, (P @ Ke) * ak[None, :])
        return out

    return rec(1, float(u), np.eye(dim, dtype=complex))


def dA_dlambda(fam, u, n, quad_points=12):
    """n-th lambda-derivative of A(u) at fam.lam by the cube formula."""
    if not 1 <= n <= 3:
        raise ValueError("n must be 1, 2 or 3")
    sd = fam.D.spectral
    U = sd.eigenvectors
    Ke = U.conj().T @ fam.K.entries @ U
    X = (-1) ** n * factorial(n) * _cube(sd.eigenvalues, Ke, u, n, quad_points)
    return U @ X @ U.conj().T


def _fd_weights(offsets, order):
    """Finite-difference weights for the order-th derivative on integer offsets."""
    offsets = np.asarray(offsets, dtype=float)
    V = np.vander(offsets, increasing=True).T
    rhs = np.zeros(len(offsets))
    rhs[order] = factorial(order)
    return np.linalg.solve(V, rhs)


# stencil half-width and step per derivative order
FD_PLAN = {1: (2, 1e-3), 2: (2, 1e-2), 3: (3, 2e-2)}


def finite_difference(fam, u, n, step=None):
    half, h = FD_PLAN[n]
    h = h if step is None else step
    offs = np.arange(-half, half + 1)
    w = _fd_weights(offs, n)
    acc = 0
    for o, wo in zip(offs, w):
        if wo != 0:
            acc = acc + wo * a_of_u(fam.at(fam.lam + o * h), u).entries
    return acc / h**n


@dataclass
class ConsistencyReport:
    relative_errors: dict      # n -> ||formula - fd|| / ||fd||
    hermiticity: dict          # n -> ||X - X^H||
    lambdas: np.ndarray
    remainders: np.ndarray
    remainder_slope: float
    remainder_r2: float
    n_max: int

    @property
    def slope_ok(self):
        return abs(self.remainder_slope - (self.n_max + 1)) <= 0.1 * (self.n_max + 1)


def derivative_consistency(fam, u, n_max, quad_points=12, lambdas=(0.05, 0.1, 0.2)):
    if not 1 <= n_max <= 3:
        raise ValueError("n_max must be 1, 2 or 3")
    derivs, rel, herm = {}, {}, {}
    for n in range(1, n_max + 1):
        X = dA_dlambda(fam, u, n, quad_points)
        fd = finite_difference(fam, u, n)
        derivs[n] = X
        rel[n] = op_norm(X - fd) / max(op_norm(fd), 1e-300)
        herm[n] = op_norm(X - X.conj().T)
    A0 = a_of_u(fam, u).entries
    lambdas = np.asarray(lambdas, dtype=float)
    rem = []
    for lam in lambdas:
        taylor = A0 + sum(lam**n / factorial(n) * derivs[n] for n in derivs)
        rem.append(op_norm(a_of_u(fam.at(fam.lam + lam), u).entries - taylor))
    rem = np.array(rem)
    slope, r2 = loglog_fit(lambdas, rem)
    return ConsistencyReport(rel, herm, lambdas, rem, slope, r2, n_max)


def kms_cross_check(spec, n_max=3, quad_points=12, series_quad_points=12):
    """max_n ||T_n - (1/n!) d^n A(0)/dlambda^n|| with T_n the kms series terms at u_bar = beta."""
    from .kms import t_series
    fam = family_from_kms(spec)
    terms = t_series(spec, None, n_max, series_quad_points).terms
    gaps = {}
    for n in range(1, n_max + 1):
        X = dA_dlambda(fam, 0.0, n, quad_points) / factorial(n)
        gaps[n] = op_norm(X - terms[n - 1])
    return gaps
