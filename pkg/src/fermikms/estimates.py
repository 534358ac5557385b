"""Numerical checks of the Hilbert-Schmidt and kernel bounds, adiabatic and
stationary-phase decay, and the quasi-equivalence / implementability criteria.

Lattice conventions. A multiplication operator has momentum-basis matrix
elements a[p - q] (``model.momentum_kernel``). The corresponding continuum
kernel with measure d^dk is a[m] / dk^d, so

    int |a|      ->  sum_m |a[m]|               (l1)
    sqrt(int |a|^2) -> sqrt(sum_m |a[m]|^2 / dk^d)  (l2)

with |a[m]| the spinor operator norm. The constant sqrt(int d^dp omega^-4)
(pi/sqrt(m) in three dimensions) is replaced by its lattice sum.
"""

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy

from .dynamics import (compute_K, dyson_evolve, interaction_operator, loglog_fit,
                       switched_potential)
from .linop import (Covariance, HermitianOperator, as_hermitian, as_matrix, hs_norm,
                    matrix_function, op_norm, spectral_projectors)
from .model import PulseSchedule, build_dirac, difference_index, momentum_kernel

# Budget for truncating the convolution exponential.
EXP_TAIL = 1e-12


@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    inputs_digest: str = ""

    @property
    def margin(self):
        return self.rhs - self.lhs

    @property
    def passed(self):
        return self.margin >= -1e-9 * abs(self.rhs)

    def csv_row(self, cutoff="", seed=""):
        return [self.name, f"{self.lhs:.12e}", f"{self.rhs:.12e}", f"{self.margin:.12e}",
                cutoff, seed]


CSV_COLUMNS = ["check_name", "lhs", "rhs", "margin", "cutoff", "seed"]


def digest(model, profile):
    h = hashlib.sha256()
    h.update(json.dumps([model.spatial_dim, model.n_modes_per_axis, model.box_length,
                         model.mass, model.mu, profile.epsilon, profile.T_adiabatic,
                         profile.switch_kind]).encode())
    for k in sorted(profile.components, key=int):
        h.update(str(int(k)).encode())
        h.update(np.ascontiguousarray(profile.components[k], dtype=float).tobytes())
    return h.hexdigest()[:16]


def kernel_magnitude(model, components):
    """|a|(m): spinor operator norm of the momentum kernel, shape (n_sites,)."""
    a = momentum_kernel(model, components)
    return np.linalg.norm(a, ord=2, axis=(1, 2))


def fourier_norms(model, mag):
    """(l1, l2) of a kernel magnitude in the continuum measure."""
    vol = model.dk ** model.spatial_dim
    return float(np.sum(mag)), float(np.sqrt(np.sum(mag**2) / vol))


def lattice_constant(model):
    """sqrt(sum_p dk^d omega(p)^-4): the lattice version of sqrt(int d^dp (p^2+m^2)^-2)."""
    w = model.dispersion()
    return float(np.sqrt(np.sum(model.dk ** model.spatial_dim * w ** -4.0)))


def cyclic_convolve(model, f, g):
    n, d = model.n_modes_per_axis, model.spatial_dim
    F = np.fft.fftn(np.reshape(f, (n,) * d))
    G = np.fft.fftn(np.reshape(g, (n,) * d))
    out = np.fft.ifftn(F * G).real.reshape(-1)
    return np.maximum(out, 0.0)


def conv_exp(model, c):
    """exp_*(c) = delta + c + c*c/2 + ..., truncated once the l1 tail is below EXP_TAIL."""
    c = np.asarray(c, dtype=float)
    s = float(np.sum(c))
    order, tail, term_norm = 0, np.expm1(s), 1.0
    out = np.zeros_like(c)
    out[0] = 1.0
    term = out.copy()
    while tail > EXP_TAIL:
        order += 1
        term = cyclic_convolve(model, term, c) / order
        out = out + term
        term_norm *= s / order
        tail -= term_norm
        if order > 500:
            raise ArithmeticError("convolution exponential did not converge")
    return out


def _time_integral(schedule, order=0, nodes=400):
    t0, t1 = schedule.support
    x, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (t1 - t0) * (x + 1) + t0
    return 0.5 * (t1 - t0) * float(np.sum(w * np.abs(schedule.derivative(t, order))))


def _time_sup(schedule, order=0, nodes=2001):
    t0, t1 = schedule.support
    t = np.linspace(t0, t1, nodes)
    return float(np.max(np.abs(schedule.derivative(t, order))))


@dataclass(frozen=True)
class KernelBound:
    H_grid: np.ndarray
    l1: float
    l2: float


@dataclass(frozen=True)
class KernelBoundReport:
    kernel: KernelBound
    worst_excess: float
    worst_pq: tuple
    l1_check: BoundCheck
    l2_check: BoundCheck

    @property
    def dominated(self):
        return self.worst_excess <= 1e-8

    @property
    def passed(self):
        return self.dominated and self.l1_check.passed and self.l2_check.passed


def _block_norms(model, M):
    s, N = model.spinor_dim, model.n_sites
    blocks = np.asarray(M).reshape(N, s, N, s).transpose(0, 2, 1, 3)
    return np.linalg.norm(blocks, ord=2, axis=(2, 3))


def kernel_bound_H(model, profile, K=None, step=None):
    """H = exp_*(int|A^|) * int|dA^/dt| * exp_*(int|A^|) and its comparison with K(p, q)."""
    sched = profile.schedule()
    mag = kernel_magnitude(model, profile.components)
    c = _time_integral(sched, 0) * mag
    a_dot = _time_integral(sched, 1) * mag
    E = conv_exp(model, c)
    H = cyclic_convolve(model, cyclic_convolve(model, E, a_dot), E)
    l1, l2 = fourier_norms(model, H)
    if K is None:
        D = build_dirac(model)
        K = compute_K(D, switched_potential(model, profile), step)
    kn = _block_norms(model, as_matrix(K))
    bound = H[difference_index(model)]
    excess = kn - bound
    worst = np.unravel_index(int(np.argmax(excess)), excess.shape)
    W = profile.window
    nrm = max(fourier_norms(model, mag))
    rhs = W * _time_sup(sched, 1) * nrm * np.exp(2 * W * _time_sup(sched, 0) * nrm)
    dg = digest(model, profile)
    return KernelBoundReport(KernelBound(H, l1, l2), float(excess[worst]),
                             (int(worst[0]), int(worst[1])),
                             BoundCheck("kernel_H_l1", l1, float(rhs), dg),
                             BoundCheck("kernel_H_l2", l2, float(rhs), dg))


@lru_cache(maxsize=None)
def _second_derivatives():
    lam, a, b, c, d, eps = sympy.symbols("lambda a b c d epsilon")
    u_expr = sympy.exp(a + lam * b + lam**2 * c / 2)
    k_expr = sympy.exp(2 * eps * (a + lam * b + lam**2 * c / 2)) * (b + lam * c + lam**2 * d / 2)
    du = sympy.diff(u_expr, lam, 2).subs(lam, 0)
    dk = sympy.diff(k_expr, lam, 2).subs(lam, 0)
    return (sympy.lambdify((a, b, c), du, "math"),
            sympy.lambdify((a, b, c, d, eps), dk, "math"))


def hs_bound_U(model, profile, step=None):
    """||P U(A) Q||_HS against C e^{||A||_I} (||dA||_I^2 + ||d^2A||_I).

    U(A) needs a potential of compact support in time, so the profile's
    window is used for a pulse that switches on and back off.
    """
    sched = PulseSchedule(profile.window)
    D = build_dirac(model)
    pot = switched_potential(model, profile)
    pot = type(pot)(pot.op, sched)
    t0, t1 = sched.support
    U = dyson_evolve(D, pot, t0, t1, step or 1e-3 * (t1 - t0)).V
    P, Q = spectral_projectors(D)
    # PQ = 0, so P(U - 1)Q is the same operator without the rounding of PQ
    lhs = hs_norm(P.entries @ (U - np.eye(D.dim)) @ Q.entries)
    mag = kernel_magnitude(model, profile.components)
    nrm = max(fourier_norms(model, mag))
    a, b, c = (_time_integral(sched, k) * nrm for k in range(3))
    du, _ = _second_derivatives()
    rhs = lattice_constant(model) * du(a, b, c)
    return BoundCheck("hs_bound_U", lhs, float(rhs), digest(model, profile))


def hs_bound_K(model, profile, K=None, step=None):
    """||P K Q||_HS against (C eps) d^2/dl^2 e^{2 eps (a + l b + l^2 c/2)} (b + l c + l^2 d/2) at l = 0."""
    sched = profile.schedule()
    D = build_dirac(model)
    if K is None:
        K = compute_K(D, switched_potential(model, profile), step)
    P, Q = spectral_projectors(D)
    lhs = hs_norm(P.entries @ as_matrix(K) @ Q.entries)
    nrm = max(fourier_norms(model, kernel_magnitude(model, profile.components)))
    a, b, c, d = (_time_sup(sched, k) * nrm for k in range(4))
    W = profile.window
    _, dk = _second_derivatives()
    rhs = lattice_constant(model) * W * dk(a, b, c, d, W)
    return BoundCheck("hs_bound_K", lhs, float(rhs), digest(model, profile))


@dataclass
class DecayFit:
    x: np.ndarray
    values: np.ndarray
    fitted_exponent: float
    r2: float
    verdict: str
    extras: dict = field(default_factory=dict)


def _verdict(ok, r2, r2_min=0.95):
    if not np.isfinite(r2) or r2 < r2_min:
        return "INCONCLUSIVE"
    return "PASS" if ok else "FAIL"


def adiabatic_sweep(model, base_profile, T_list, step_factor=1e-3, threshold=-1.5):
    """||P K(T) Q||_HS as the switch window is stretched by T."""
    T_list = np.asarray(sorted(T_list), dtype=float)
    if len(T_list) < 2 or T_list[-1] / T_list[0] < 8:
        raise ValueError("T_list needs at least two values spanning a factor of 8")
    D = build_dirac(model)
    P, Q = spectral_projectors(D)
    norms, herm = [], []
    for T in T_list:
        prof = base_profile.with_window(T_adiabatic=float(T))
        res = interaction_operator(D, switched_potential(model, prof), step_factor * prof.window)
        norms.append(hs_norm(P.entries @ res.K.entries @ Q.entries))
        herm.append(res.dual_gap)
    norms = np.array(norms)
    slope, r2 = loglog_fit(T_list, norms)
    return DecayFit(T_list, norms, slope, r2, _verdict(slope <= threshold, r2),
                    {"dual_gaps": herm})


def stationary_phase(f, t_grid, spatial_dim=3, mass=1.0, dp=0.01, p_max=12.0, tol=None):
    """|int e^{i omega(p) t} f(p) d^dp| by the trapezoid rule.

    In three dimensions f is a radial profile f(|p|). The uniform grid
    aliases once t |d omega/dp| dp reaches 2 pi, so t must stay below half
    of 2 pi / dp.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    recurrence = 2 * np.pi / dp
    if np.any(t_grid > 0.5 * recurrence):
        raise ValueError(f"t_grid exceeds half the recurrence time {recurrence:.1f} of the momentum grid")
    if spatial_dim == 3:
        p = np.arange(0.0, p_max + 0.5 * dp, dp)
        weight = 4 * np.pi * p**2 * f(p)
    elif spatial_dim == 1:
        p = np.arange(-p_max, p_max + 0.5 * dp, dp)
        weight = f(p)
    else:
        raise ValueError("spatial_dim must be 1 or 3")
    w = np.full(p.size, dp)
    w[0] = w[-1] = 0.5 * dp
    omega = np.sqrt(p**2 + mass**2)
    vals = np.abs(np.exp(1j * np.outer(t_grid, omega)) @ (w * weight))
    expected = -spatial_dim / 2
    tol = (0.15 if spatial_dim == 3 else 0.1) if tol is None else tol
    slope, r2 = loglog_fit(t_grid, vals)
    return DecayFit(t_grid, vals, slope, r2, _verdict(abs(slope - expected) <= tol, r2),
                    {"expected": expected, "recurrence": recurrence})


def _sqrt_fermi(beta, sign):
    from scipy.special import expit
    return lambda x: np.sqrt(expit(sign * beta * x))


def lundberg_check(D, X, beta):
    """||sqrt(A) X sqrt(1 - A)||_HS with A = F_-(D)."""
    D = as_hermitian(D)
    sa = matrix_function(D, _sqrt_fermi(beta, 1)).entries
    sb = matrix_function(D, _sqrt_fermi(beta, -1)).entries
    return hs_norm(sa @ as_matrix(X) @ sb)


def powers_stormer_norms(D, K, beta):
    """(||A^1/2 - B^1/2||_HS, ||(1-A)^1/2 - (1-B)^1/2||_HS), A = F_-(D+K), B = F_-(D)."""
    D = as_hermitian(D)
    H = D + as_hermitian(K)
    hs1 = hs_norm(matrix_function(H, _sqrt_fermi(beta, 1)).entries
                  - matrix_function(D, _sqrt_fermi(beta, 1)).entries)
    hs2 = hs_norm(matrix_function(H, _sqrt_fermi(beta, -1)).entries
                  - matrix_function(D, _sqrt_fermi(beta, -1)).entries)
    return hs1, hs2


@dataclass
class CutoffSweep:
    rows: list  # dicts: n_modes, cutoff, hs1, hs2, lundberg, pkq
    relative_growth: dict
    verdict: str


def powers_stormer(models, profile_for, beta, step=None, tol=0.05):
    """Quasi-equivalence and implementability norms across increasing momentum cutoffs.

    ``profile_for(model)`` samples the same physical potential on each grid.
    PASS if every norm changes by at most ``tol`` (relative) over the last
    pair of cutoffs.
    """
    rows = []
    for model in models:
        D = build_dirac(model)
        prof = profile_for(model)
        K = compute_K(D, switched_potential(model, prof), step)
        hs1, hs2 = powers_stormer_norms(D, K, beta)
        P, Q = spectral_projectors(D)
        rows.append({"n_modes": model.n_modes_per_axis,
                     "cutoff": float(np.max(np.abs(model.axis_momenta))),
                     "hs1": hs1, "hs2": hs2,
                     "lundberg": lundberg_check(D, K, beta),
                     "pkq": hs_norm(P.entries @ K.entries @ Q.entries)})
    growth = {}
    if len(rows) >= 2:
        a, b = rows[-2], rows[-1]
        for key in ("hs1", "hs2", "lundberg", "pkq"):
            growth[key] = abs(b[key] - a[key]) / max(abs(a[key]), 1e-300)
    ok = bool(growth) and all(g <= tol for k, g in growth.items() if k != "pkq")
    return CutoffSweep(rows, growth, "PASS" if ok else "FAIL")


@dataclass(frozen=True)
class Purification:
    E_printed: np.ndarray
    defect_printed: float
    E_standard: np.ndarray
    defect_standard: float

    @property
    def passed(self):
        return self.defect_printed <= 1e-6


def purification(A):
    """Block projection on H + conj(H) for a quasi-free state.

    ``E_printed`` has A on both diagonal blocks; ``E_standard`` carries A and
    1 - A. Only the second is idempotent for general A.
    """
    A = A if isinstance(A, Covariance) else Covariance(A)
    a = A.op.entries
    vals, U = A.op.spectral.eigenvalues, A.op.spectral.eigenvectors
    v = np.clip(vals, 0.0, 1.0)
    off = (U * np.sqrt(v * (1 - v))) @ U.conj().T
    one = np.eye(a.shape[0])
    Ep = np.block([[a, off], [off, a]])
    Es = np.block([[a, off], [off, one - a]])
    return Purification(Ep, op_norm(Ep @ Ep - Ep), Es, op_norm(Es @ Es - Es))
