"""Ordered exponentials, the interaction operator K, cocycles, Moller approximants.

Time-dependent potentials are separable, Aslash(t) = h(t) * A, which lets the
midpoint-exponential integrator work with two fixed eigenbases (those of D and
of A); arbitrary callables are supported through a slower generic path.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .linop import (HermitianOperator, as_hermitian, as_matrix, expi, fermi_factor,
                    op_norm)
from .model import build_potential


class IntegratorInconsistency(RuntimeError):
    """Quadrature and dual formula for K disagree beyond the integrator budget."""


@dataclass(frozen=True)
class SwitchedPotential:
    """Aslash(t) = schedule(t) * op."""

    op: HermitianOperator
    schedule: object

    def __call__(self, t):
        return HermitianOperator(float(self.schedule.h(t)) * self.op.entries)

    def derivative(self, t, order):
        return float(self.schedule.derivative(t, order)) * self.op.entries

    @property
    def support(self):
        return self.schedule.support

    @property
    def frozen(self):
        return HermitianOperator(self.schedule.frozen_value() * self.op.entries)

    def derivative_norm_integral(self, nodes=400):
        """int ||dAslash/dt||_op dt over the switch window (Gauss-Legendre)."""
        t0, t1 = self.support
        x, w = np.polynomial.legendre.leggauss(nodes)
        t = 0.5 * (t1 - t0) * (x + 1) + t0
        return 0.5 * (t1 - t0) * float(np.sum(w * np.abs(self.schedule.hdot(t)))) * self.op.op_norm


def switched_potential(model, profile):
    return SwitchedPotential(build_potential(model, profile), profile.schedule())


@dataclass(frozen=True)
class OrderedEvolution:
    V: np.ndarray
    t0: float
    t1: float
    step_count: int
    unitarity_defect: float


def unitarity_defect(U):
    U = np.asarray(U)
    return op_norm(U.conj().T @ U - np.eye(U.shape[0]))


class _EigenFrame:
    """Midpoint steps for h(t)*A expressed in the eigenbasis of D."""

    def __init__(self, D, A):
        sd = D.spectral
        self.d = sd.eigenvalues
        self.U = sd.eigenvectors
        sa = A.spectral
        self.a = sa.eigenvalues
        self.Y = self.U.conj().T @ sa.eigenvectors
        self.A_D = self.U.conj().T @ A.entries @ self.U

    def factor(self, t, phi):
        """e^{itD} e^{i phi A} e^{-itD} in the D eigenbasis."""
        ph = np.exp(1j * t * self.d)
        left = ph[:, None] * self.Y
        return (left * np.exp(1j * phi * self.a)[None, :]) @ left.conj().T

    def to_standard(self, X):
        return self.U @ X @ self.U.conj().T


def _grid(t0, t1, step):
    if not step > 0:
        raise ValueError("step must be positive")
    n = max(1, int(np.ceil((t1 - t0) / step - 1e-12)))
    return n, (t1 - t0) / n


def dyson_evolve(D, aslash_of_t, t0, t1, step):
    """V(t1) for dV/dt = i V e^{itD} Aslash(t) e^{-itD}, V(t0) = 1.

    Midpoint-exponential product; each factor is exactly unitary.
    """
    D = as_hermitian(D)
    n, h = _grid(t0, t1, step)
    if isinstance(aslash_of_t, SwitchedPotential) and not np.any(aslash_of_t.op.entries):
        V = np.eye(D.dim, dtype=complex)
    elif isinstance(aslash_of_t, SwitchedPotential):
        fr = _EigenFrame(D, aslash_of_t.op)
        sched = aslash_of_t.schedule
        V = np.eye(D.dim, dtype=complex)
        for k in range(n):
            tm = t0 + (k + 0.5) * h
            V = V @ fr.factor(tm, h * float(sched.h(tm)))
        V = fr.to_standard(V)
    else:
        V = np.eye(D.dim, dtype=complex)
        for k in range(n):
            tm = t0 + (k + 0.5) * h
            A = aslash_of_t(tm)
            if not isinstance(A, HermitianOperator):
                A = HermitianOperator(A)
            W = expi(D, tm)
            V = V @ W @ expi(A, h) @ W.conj().T
    return OrderedEvolution(V, t0, t1, n, unitarity_defect(V))


@dataclass(frozen=True)
class InteractionResult:
    K: HermitianOperator
    K_dual: HermitianOperator
    V0: np.ndarray
    dual_gap: float
    error_estimate: float
    step_count: int


def _k_quadrature(D, pot, n):
    """K by composite Simpson on the Dyson grid, plus V at the window end."""
    fr = _EigenFrame(D, pot.op)
    sched = pot.schedule
    t0, t1 = pot.support
    h = (t1 - t0) / n
    ts = t0 + h * np.arange(n + 1)
    rates = sched.hdot(ts)
    weights = np.full(n + 1, 2.0)
    weights[1::2] = 4.0
    weights[0] = weights[-1] = 1.0
    weights *= h / 3.0
    V = np.eye(D.dim, dtype=complex)
    K = np.zeros_like(V)
    for k, t in enumerate(ts):
        if rates[k] != 0.0:
            W = V * np.exp(1j * t * fr.d)[None, :]
            K += (weights[k] * rates[k]) * (W @ fr.A_D @ W.conj().T)
        if k < n:
            tm = t + 0.5 * h
            V = V @ fr.factor(tm, h * float(sched.h(tm)))
    return fr.to_standard(K), fr.to_standard(V)


def interaction_operator(D, potential, step=None):
    """K = int V_s e^{isD} dAslash/ds e^{-isD} V_s^* ds and its dual form.

    The dual form is V0 (D + A+) V0^* - D. Both are repeated at twice the step;
    for a second-order scheme |X_h - X_2h| / 3 estimates the error of X_h.
    """
    D = as_hermitian(D)
    t0, t1 = potential.support
    if step is None:
        step = 1e-3 * (t1 - t0)
    n, _ = _grid(t0, t1, step)
    n += n % 2
    Hp = D.entries + potential.frozen.entries
    K, V0 = _k_quadrature(D, potential, n)
    Kc, V0c = _k_quadrature(D, potential, max(2, n // 2 + (n // 2) % 2))
    K_dual = V0 @ Hp @ V0.conj().T - D.entries
    K_dual_c = V0c @ Hp @ V0c.conj().T - D.entries
    Kh = HermitianOperator(K, hermiticity_tol=1e-9 * max(1.0, op_norm(K)))
    Kd = HermitianOperator(K_dual, hermiticity_tol=1e-9 * max(1.0, op_norm(K_dual)))
    gap = op_norm(Kh.entries - Kd.entries)
    est = (op_norm(K - Kc) + op_norm(K_dual - K_dual_c)) / 3.0
    return InteractionResult(Kh, Kd, V0, gap, est, n)


def compute_K(D, potential, step=None, check=True):
    res = interaction_operator(D, potential, step)
    if check and res.dual_gap > 100 * res.error_estimate + 1e-12:
        raise IntegratorInconsistency(
            f"quadrature and dual formula for K differ by {res.dual_gap:.3e}, "
            f"estimated integrator error {res.error_estimate:.3e}")
    return res.K


@dataclass(frozen=True)
class Cocycle:
    D: HermitianOperator
    K: HermitianOperator
    V0: np.ndarray
    Aplus: HermitianOperator

    @cached_property
    def H_plus(self):
        return self.D + self.Aplus


def build_cocycle(D, potential, step=None):
    D = as_hermitian(D)
    res = interaction_operator(D, potential, step)
    return Cocycle(D, res.K, res.V0, potential.frozen)


def cocycle_at(c, t):
    """U_t = V0 e^{it(D+A+)} V0^* e^{-itD}; negative t via U_{-t} = e^{-itD} U_t^* e^{itD}."""
    if t < 0:
        s = -t
        W = expi(c.D, s)
        return W.conj().T @ cocycle_at(c, s).conj().T @ W
    return c.V0 @ expi(c.H_plus, t) @ c.V0.conj().T @ expi(c.D, -t)


def moller_operator(D, K, t):
    H = as_hermitian(D) + K
    return expi(H, t) @ expi(D, -t)


@dataclass(frozen=True)
class MollerRecord:
    t_grid: np.ndarray
    images: np.ndarray          # (T, P, dim): Omega(t) f
    step_changes: np.ndarray    # (T-1, P): ||(Omega(t_{i+1}) - Omega(t_i)) f||
    intertwining: np.ndarray    # (T, P): ||F(D+K) Omega f - Omega F(D) f||
    cesaro_intertwining: np.ndarray
    isometry_defect: float


def _running_mean(t, y):
    """Cesaro mean (1/(t - t_0)) int_{t_0}^t y by the trapezoid rule; first entry = y[0]."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    cum = np.concatenate([np.zeros((1,) + y.shape[1:]),
                          np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t)[:, None], axis=0)])
    span = (t - t[0])[:, None]
    out = np.where(span > 0, cum / np.where(span > 0, span, 1.0), y)
    return out


def moller(D, K, t_grid, probes, beta=1.0):
    D = as_hermitian(D)
    K = as_hermitian(K)
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0) or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be positive and increasing")
    f = np.atleast_2d(np.asarray(probes, dtype=complex))
    H = D + K
    sH, sD = H.spectral, D.spectral
    FH = fermi_factor(H, beta).entries
    FD = fermi_factor(D, beta).entries
    fD = sD.eigenvectors.conj().T @ f.T          # probes in D eigenbasis
    FfD = sD.eigenvectors.conj().T @ (FD @ f.T)
    images, inter = [], []
    UH = sH.eigenvectors
    for t in t_grid:
        e_D = np.exp(-1j * t * sD.eigenvalues)[:, None]
        g = UH @ (np.exp(1j * t * sH.eigenvalues)[:, None] * (UH.conj().T @ (sD.eigenvectors @ (e_D * fD))))
        gF = UH @ (np.exp(1j * t * sH.eigenvalues)[:, None] * (UH.conj().T @ (sD.eigenvectors @ (e_D * FfD))))
        images.append(g.T)
        inter.append(np.linalg.norm(FH @ g - gF, axis=0))
    images = np.array(images)
    inter = np.array(inter)
    changes = np.linalg.norm(np.diff(images, axis=0), axis=2)
    iso = float(np.max(np.abs(np.linalg.norm(images, axis=2) - np.linalg.norm(f, axis=1)[None, :])))
    return MollerRecord(t_grid, images, changes, inter, _running_mean(t_grid, inter), iso)


@dataclass(frozen=True)
class DecayCurve:
    t_grid: np.ndarray
    norms: np.ndarray
    slope: float
    r2: float


def loglog_fit(x, y):
    """Least-squares slope of log y against log x, with R^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan"), float("nan")
    lx, ly = np.log(x[ok]), np.log(y[ok])
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return float(slope), float(r2)


def cook_decay(H, K, f, t_grid, tail=None):
    """||K e^{itH} f|| on t_grid with a log-log slope over the tail window (t_min, t_max)."""
    H = as_hermitian(H)
    Km = as_matrix(K)
    f = np.asarray(f, dtype=complex)
    sd = H.spectral
    U = sd.eigenvectors
    fe = U.conj().T @ f
    t_grid = np.asarray(t_grid, dtype=float)
    phases = np.exp(1j * np.outer(sd.eigenvalues, t_grid))       # (dim, T)
    states = U @ (phases * fe[:, None])
    norms = np.linalg.norm(Km @ states, axis=0)
    lo, hi = (t_grid[len(t_grid) // 2], t_grid[-1]) if tail is None else tail
    sel = (t_grid >= lo) & (t_grid <= hi)
    slope, r2 = loglog_fit(t_grid[sel], norms[sel])
    return DecayCurve(t_grid, norms, slope, r2)


def wavepacket(model, center=0.0, width=2.0, k0=0.0, spinor=None, odd=False):
    """Normalized Gaussian packet in the momentum basis of ``model``.

    ``odd`` multiplies by (x - center) so the packet has no zero-momentum
    component about its center.
    """
    from .model import dft_matrix
    x = model.positions
    c = np.broadcast_to(np.asarray(center, dtype=float), (model.spatial_dim,))
    r = x - c
    g = np.exp(-np.sum(r**2, axis=1) / (2 * width**2)) * np.exp(1j * (r @ np.broadcast_to(np.atleast_1d(k0), (model.spatial_dim,))))
    if odd:
        g = g * r[:, 0]
    s = model.spinor_dim
    spin = np.eye(s)[0] if spinor is None else np.asarray(spinor, dtype=complex)
    psi = (g[:, None] * spin[None, :]).reshape(-1)
    F = np.kron(dft_matrix(model), np.eye(s))
    phi = F @ psi
    return phi / np.linalg.norm(phi)
