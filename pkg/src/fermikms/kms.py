"""Perturbed KMS covariances as imaginary-time series.

All work happens in the eigenbasis of D, where every factor between two
insertions of K is diagonal. Each factor is evaluated in a bounded form

    F_- e^{-uD}           = exp(-u d - log(1 + e^{-beta d}))
    e^{aD} F_{sigma(a)}   = -exp(a d - log(1 + e^{beta d}))   (a > 0)
                          =  exp(a d - log(1 + e^{-beta d}))  (a < 0)
    e^{uD} F_+            = -exp(u d - log(1 + e^{beta d}))

so nothing of the size e^{beta |d|} is ever formed.

The order-n cube integral over (0, u_bar)^n is a chain in which consecutive
variables are coupled through e^{(u_j - u_{j+1})D} F_sigma, which jumps on the
diagonal u_j = u_{j+1}. The production evaluator discretizes the chain on
Chebyshev nodes and integrates each link separately on both sides of the
jump (Gauss-Legendre per side), so every quadrature sees a smooth integrand.
"""

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .linop import HermitianOperator, as_hermitian, as_matrix, fermi_factor, op_norm


class ContractionError(ValueError):
    """beta * ||K|| >= 1: the series convergence theorem does not apply."""


@dataclass(frozen=True)
class KmsSpec:
    beta: float
    D: HermitianOperator
    K: HermitianOperator

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        object.__setattr__(self, "D", as_hermitian(self.D))
        object.__setattr__(self, "K", as_hermitian(self.K))
        if self.D.dim != self.K.dim:
            raise ValueError("D and K have different dimensions")

    @property
    def contraction(self):
        return self.beta * self.K.op_norm

    def require_convergent(self):
        c = self.contraction
        if c >= 1:
            raise ContractionError(
                f"beta*||K|| = {c:.4f} >= 1: the imaginary-time series is only "
                "guaranteed to converge for ||K|| < 1/beta")
        return c


@dataclass(frozen=True)
class SeriesResult:
    value: object
    order: int
    truncation_bound: float
    quadrature_estimate: float
    terms: tuple = field(default=(), repr=False)


def truncation_bound(contraction, N):
    return contraction ** (N + 1) / (1.0 - contraction)


def _softplus(x):
    return np.logaddexp(0.0, x)


class _Factors:
    """Bounded diagonal factors in the eigenbasis of D."""

    def __init__(self, d, beta):
        self.d = np.asarray(d, dtype=float)
        self.beta = float(beta)
        self.sp_pos = _softplus(self.beta * self.d)
        self.sp_neg = _softplus(-self.beta * self.d)

    def left(self, u):
        """F_- e^{-uD}, shape u.shape + (dim,)."""
        return np.exp(-np.multiply.outer(u, self.d) - self.sp_neg)

    def right(self, u):
        """e^{uD} F_+."""
        return -np.exp(np.multiply.outer(u, self.d) - self.sp_pos)

    def link(self, a):
        """e^{aD} F_{sigma(a)} for a in (-beta, beta)."""
        a = np.asarray(a, dtype=float)
        ad = np.multiply.outer(a, self.d)
        pos = (a > 0)[..., None]
        return np.where(pos, -np.exp(np.where(pos, ad - self.sp_pos, 0.0)),
                        np.exp(np.where(pos, 0.0, ad - self.sp_neg)))


def _chebyshev(q, a, b):
    k = np.arange(q)
    theta = (2 * k + 1) * np.pi / (2 * q)
    x = np.cos(theta)[::-1]
    w = ((-1.0) ** k * np.sin(theta))[::-1]
    return 0.5 * (a + b) + 0.5 * (b - a) * x, w


def _barycentric(nodes, bw, x):
    """Interpolation matrix from values at ``nodes`` to points ``x``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    diff = x[:, None] - nodes[None, :]
    exact = diff == 0
    diff = np.where(exact, 1.0, diff)
    t = bw[None, :] / diff
    E = t / t.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    E[hit] = exact[hit].astype(float)
    return E


def _gauss(q, a, b):
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (b - a) * (x + 1) + a, 0.5 * (b - a) * w


class _Chain:
    """Nystrom form of v -> int_0^ubar M(u) link(u - v) du on Chebyshev nodes."""

    def __init__(self, fac, ubar, q):
        self.q = q
        self.nodes, bw = _chebyshev(q, 0.0, ubar)
        gx, gw = np.polynomial.legendre.leggauss(q)
        gx = 0.5 * (gx + 1)
        gw = 0.5 * gw
        v = self.nodes[:, None]
        pts = np.concatenate([v * gx[None, :], v + (ubar - v) * gx[None, :]], axis=1)
        wts = np.concatenate([v * gw[None, :], (ubar - v) * gw[None, :]], axis=1)
        self.E = _barycentric(self.nodes, bw, pts)
        self.WG = wts[..., None] * fac.link(pts - v)          # (q, 2q, dim)
        uf, wf = _gauss(q, 0.0, ubar)
        self.Ef = _barycentric(self.nodes, bw, uf)
        self.wR = wf[:, None] * fac.right(uf)
        self.E0 = _barycentric(self.nodes, bw, [0.0])
        self.fac = fac

    def convolve(self, M):
        q, dim = self.q, M.shape[-1]
        Mi = (self.E @ M.reshape(q, -1)).reshape(q, 2 * q, dim, dim)
        return np.einsum("kiab,kib->kab", Mi, self.WG)

    def close(self, M):
        q, dim = self.q, M.shape[-1]
        Mi = (self.Ef @ M.reshape(q, -1)).reshape(q, dim, dim)
        return np.einsum("iab,ib->ab", Mi, self.wR)

    def at_zero(self, M):
        q, dim = self.q, M.shape[-1]
        return (self.E0 @ M.reshape(q, -1)).reshape(dim, dim)


def _eigen_frame(spec):
    sd = spec.D.spectral
    U = sd.eigenvectors
    return sd.eigenvalues, U, U.conj().T @ spec.K.entries @ U


def _chain_terms(d, Ke, beta, ubar, N, q):
    """Order 1..N terms of the cube series in the eigenbasis of D (signs included)."""
    fac = _Factors(d, beta)
    if ubar == 0 or N == 0:
        return [np.zeros_like(Ke) for _ in range(N)]
    ch = _Chain(fac, ubar, q)
    M = fac.left(ch.nodes)[:, :, None] * Ke[None]
    terms = []
    for n in range(1, N + 1):
        terms.append((-1) ** n * ch.close(M))
        if n < N:
            M = ch.convolve(M) @ Ke
    return terms


def series_terms(spec, u_bar, N, quad_points=12):
    """Order 1..N terms of T(u_bar) in the standard basis."""
    d, U, Ke = _eigen_frame(spec)
    terms = _chain_terms(d, Ke, spec.beta, float(u_bar), N, quad_points)
    return [U @ t @ U.conj().T for t in terms]


def _refined(q):
    return q + max(4, q // 2)


def t_series(spec, u_bar=None, N=5, quad_points=12):
    """Partial sum up to order N of the imaginary-time series for T(u_bar).

    T(beta) reproduces F_-(D + K). The quadrature estimate compares against a
    run with more nodes per axis.
    """
    c = spec.require_convergent()
    beta = spec.beta
    u_bar = beta if u_bar is None else float(u_bar)
    if not 0 <= u_bar <= beta * (1 + 1e-14):
        raise ValueError(f"u_bar must lie in [0, beta], got {u_bar}")
    u_bar = min(u_bar, beta)
    d, U, Ke = _eigen_frame(spec)
    F0 = np.diag(_Factors(d, beta).left(np.array(0.0)))
    terms = _chain_terms(d, Ke, beta, u_bar, N, quad_points)
    fine = _chain_terms(d, Ke, beta, u_bar, N, _refined(quad_points))
    total = F0 + sum(terms, np.zeros_like(F0))
    total_fine = F0 + sum(fine, np.zeros_like(F0))
    est = op_norm(total - total_fine)
    back = lambda X: U @ X @ U.conj().T
    return SeriesResult(back(total), N, truncation_bound(c, N), est,
                        tuple(back(t) for t in terms))


def recursion_residuals(spec, N, quad_points=12):
    """Residuals ||X_j(0) - F_-(D+K)|| for j = 0..N of the fixed-point recursion

        X(u) = F_- e^{-uD} - int_0^beta X(u') K e^{(u'-u)D} F_{sigma(u'-u)} du',

    whose solution is X(u) = e^{-u(D+K)} (1 + e^{-beta(D+K)})^{-1}.
    """
    spec.require_convergent()
    d, U, Ke = _eigen_frame(spec)
    fac = _Factors(d, spec.beta)
    target = U.conj().T @ fermi_factor(spec.D + spec.K, spec.beta).entries @ U
    ch = _Chain(fac, spec.beta, quad_points)
    free = np.zeros((quad_points,) + Ke.shape, dtype=complex)
    idx = np.arange(Ke.shape[0])
    free[:, idx, idx] = fac.left(ch.nodes)
    X = free.copy()
    out = [op_norm(ch.at_zero(X) - target)]
    for _ in range(N):
        X = free - ch.convolve(X @ Ke)
        out.append(op_norm(ch.at_zero(X) - target))
    return out


def t_recursive_residual(spec, N, quad_points=12):
    return recursion_residuals(spec, N, quad_points)[-1]


def order_term_simplex(spec, n, quad_points=12):
    """Order-n term of T(beta) as a permutation sum over the ordered simplex."""
    d, U, Ke = _eigen_frame(spec)
    beta = spec.beta
    fac = _Factors(d, beta)
    x, w = np.polynomial.legendre.leggauss(quad_points)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    grids = np.meshgrid(*([x] * n), indexing="ij")
    wgrid = np.ones_like(grids[0])
    for g in np.meshgrid(*([w] * n), indexing="ij"):
        wgrid = wgrid * g
    y = [g.ravel() for g in grids]
    wts = wgrid.ravel()
    # collapsed coordinates: t_n = beta y_n, t_k = t_{k+1} y_k
    t = [None] * n
    t[n - 1] = beta * y[n - 1]
    for k in range(n - 2, -1, -1):
        t[k] = t[k + 1] * y[k]
    jac = beta**n * np.ones_like(wts)
    for k in range(1, n):
        jac = jac * y[k] ** k
    wts = wts * jac
    total = np.zeros_like(Ke)
    for perm in permutations(range(n)):
        u = [t[p] for p in perm]
        X = fac.left(u[0])[:, :, None] * Ke[None]
        for j in range(1, n):
            X = (X * fac.link(u[j - 1] - u[j])[:, None, :]) @ Ke
        X = X * fac.right(u[n - 1])[:, None, :]
        total += np.einsum("p,pab->ab", wts, X)
    return (-1) ** n * (U @ total @ U.conj().T)


def order_term_cube(spec, n, quad_points=12, u_bar=None):
    """Order-n term of T(u_bar) by tensor Gauss-Legendre over the cube.

    Each inner variable's interval is split at the previous variable, where
    the integrand jumps, so every one-dimensional rule integrates a smooth
    function.
    """
    d, U, Ke = _eigen_frame(spec)
    beta = spec.beta
    ubar = beta if u_bar is None else float(u_bar)
    fac = _Factors(d, beta)
    x, w = np.polynomial.legendre.leggauss(quad_points)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    u = ubar * x
    wt = ubar * w
    X = fac.left(u)[:, :, None] * Ke[None]
    for _ in range(1, n):
        prev = u
        lo_u = prev[:, None] * x[None, :]
        lo_w = wt[:, None] * prev[:, None] * w[None, :]
        hi_u = prev[:, None] + (ubar - prev)[:, None] * x[None, :]
        hi_w = wt[:, None] * (ubar - prev)[:, None] * w[None, :]
        u_new = np.concatenate([lo_u, hi_u], axis=1)
        w_new = np.concatenate([lo_w, hi_w], axis=1)
        G = fac.link(prev[:, None] - u_new)                    # (B, 2q, dim)
        X = (X[:, None, :, :] * G[:, :, None, :]) @ Ke
        X = X.reshape((-1,) + Ke.shape)
        u = u_new.ravel()
        wt = w_new.ravel()
    X = X * fac.right(u)[:, None, :]
    total = np.einsum("p,pab->ab", wt, X)
    return (-1) ** n * (U @ total @ U.conj().T)


def simplex_cube_check(spec, n, quad_points=12):
    """||simplex permutation form - cube form|| for the order-n term of T(beta)."""
    if not 1 <= n <= 3:
        raise ValueError("simplex_cube_check supports 1 <= n <= 3")
    return op_norm(order_term_simplex(spec, n, quad_points) - order_term_cube(spec, n, quad_points))


@dataclass(frozen=True)
class TwoPoint:
    annihilation_first: complex   # omega(psi(f) psi(g)^*) = <f, T g>
    creation_first: complex       # omega(psi(g)^* psi(f)) = <f, (1 - T) g>


def kms_two_point(T, f, g):
    Tm = as_matrix(getattr(T, "op", T))
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if f.shape != (Tm.shape[0],) or g.shape != (Tm.shape[0],):
        raise ValueError(f"vectors must have length {Tm.shape[0]}")
    a = np.vdot(f, Tm @ g)
    return TwoPoint(a, np.vdot(f, g) - a)


def quasifree_npoint(T, fs, gs):
    """delta_{nm} det(<f_i, T g_j>)."""
    fs = [np.asarray(f, dtype=complex) for f in fs]
    gs = [np.asarray(g, dtype=complex) for g in gs]
    if len(fs) != len(gs):
        return 0.0
    if not fs:
        return 1.0
    Tm = as_matrix(getattr(T, "op", T))
    G = np.array([[np.vdot(f, Tm @ g) for g in gs] for f in fs])
    return complex(np.linalg.det(G))
