"""Gap eigenstates, dephased covariances and the idealized NESS.

In finite volume there is no absolutely continuous spectrum. Eigenvalues of
D + K outside the gap (mu - m, mu + m) play its role ("quasi-continuum").
"""

from dataclasses import dataclass, field

import numpy as np

from .entropy import BoundStateDatum
from .linop import Covariance, HermitianOperator, as_hermitian, fermi_factor, fermi_values, op_norm

# Relative eigenvalue spacing below which eigenprojections are merged.
MERGE_TOL = 1e-10


@dataclass(frozen=True)
class GapSpectrum:
    m: float
    mu: float
    margin: float
    energies: np.ndarray
    vectors: np.ndarray  # columns, one per gap eigenvalue
    quasi_continuum_projector: HermitianOperator
    degenerate: tuple = ()  # index pairs of numerically equal gap eigenvalues

    @property
    def gap_eigenpairs(self):
        return [(float(s), self.vectors[:, j]) for j, s in enumerate(self.energies)]

    @property
    def count(self):
        return len(self.energies)

    @property
    def bound_projector(self):
        V = self.vectors
        return HermitianOperator(V @ V.conj().T) if V.shape[1] else \
            HermitianOperator(np.zeros_like(self.quasi_continuum_projector.entries))


def _groups(vals):
    """Split sorted eigenvalues into runs of numerically equal values."""
    spread = max(float(vals[-1] - vals[0]), 1e-300)
    cuts = np.nonzero(np.diff(vals) > MERGE_TOL * spread)[0] + 1
    return np.split(np.arange(len(vals)), cuts)


def bound_states(D, K, m, margin=1e-9, mu=0.0):
    """Eigenpairs of D + K with |s - mu| < m - margin.

    By Weyl's bound no eigenvalue leaves the free spectrum by more than ||K||,
    so a margin above ||K|| certifies that nothing is reported for weak K.
    """
    if m <= 0:
        raise ValueError(f"mass must be positive, got {m}")
    H = as_hermitian(D) + as_hermitian(K)
    sd = H.spectral
    vals, U = sd.eigenvalues, sd.eigenvectors
    inside = np.abs(vals - mu) < m - margin
    idx = np.nonzero(inside)[0]
    V = U[:, idx]
    Uq = U[:, ~inside]
    Pqc = HermitianOperator(Uq @ Uq.conj().T)
    degenerate = []
    spread = max(float(vals[-1] - vals[0]), 1e-300)
    for a, b in zip(idx[:-1], idx[1:]):
        if vals[b] - vals[a] <= MERGE_TOL * spread:
            degenerate.append((int(a), int(b)))
    return GapSpectrum(float(m), float(mu), float(margin), vals[idx].copy(), V, Pqc,
                       tuple(degenerate))


def _dephase(H, X):
    sd = as_hermitian(H).spectral
    U = sd.eigenvectors
    Xe = U.conj().T @ X @ U
    out = np.zeros_like(Xe)
    for g in _groups(sd.eigenvalues):
        out[np.ix_(g, g)] = Xe[np.ix_(g, g)]
    return U @ out @ U.conj().T


def ergodic_covariance(D, K, beta):
    """Infinite-time mean of e^{it(D+K)} F_-(D) e^{-it(D+K)}: sum_e P_e F_-(D) P_e."""
    D = as_hermitian(D)
    H = D + as_hermitian(K)
    return Covariance(_dephase(H, fermi_factor(D, beta).entries))


def cesaro_covariance(D, K, beta, T):
    """(1/T) int_0^T e^{itH} F_-(D) e^{-itH} dt, H = D + K, in closed form."""
    D = as_hermitian(D)
    H = D + as_hermitian(K)
    sd = H.spectral
    U = sd.eigenvectors
    Fe = U.conj().T @ fermi_factor(D, beta).entries @ U
    if T > 0:
        x = (sd.eigenvalues[:, None] - sd.eigenvalues[None, :]) * T
        small = np.abs(x) < 1e-8
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(small, 1.0 + 0.5j * x, np.expm1(1j * x) / (1j * np.where(small, 1.0, x)))
        Fe = Fe * w
    return HermitianOperator(U @ Fe @ U.conj().T)


def bound_state_data(g, D, beta):
    """BoundStateDatum per gap eigenstate: d_j from <phi_j, F_-(D) phi_j> = (1 + e^{-beta d_j})^{-1}."""
    F = fermi_factor(D, beta).entries
    out = []
    for s, v in g.gap_eigenpairs:
        c = float(np.real(v.conj() @ F @ v))
        out.append(BoundStateDatum.from_occupation(s, c, beta))
    return out


def bound_cross_terms(g, D, beta):
    """Matrix <phi_j, F_-(D) phi_k> over gap eigenstates; off-diagonal entries are reported, not assumed zero."""
    F = fermi_factor(D, beta).entries
    V = g.vectors
    return V.conj().T @ F @ V


def ness_ideal_covariance(g, D, K, beta):
    """P_qc F_-(D+K) P_qc + sum_j P_{s_j} F_-(D) P_{s_j}."""
    if g.degenerate:
        raise ValueError(f"gap eigenvalues {g.degenerate} are degenerate; the NESS formula "
                         "assumes every bound-state eigenspace is one-dimensional")
    D = as_hermitian(D)
    H = D + as_hermitian(K)
    P = g.quasi_continuum_projector.entries
    out = P @ fermi_factor(H, beta).entries @ P
    F0 = fermi_factor(D, beta).entries
    for _, v in g.gap_eigenpairs:
        Pj = np.outer(v, v.conj())
        out = out + Pj @ F0 @ Pj
    return Covariance(out)


def ness_vs_ergodic_gap(D, K, beta, m, margin=1e-9, mu=0.0):
    g = bound_states(D, K, m, margin, mu)
    E = ergodic_covariance(D, K, beta).op.entries
    N = ness_ideal_covariance(g, D, K, beta).op.entries
    P = g.quasi_continuum_projector.entries
    return op_norm(P @ (E - N) @ P)


@dataclass
class ReturnReport:
    T_horizon: float
    averaged: np.ndarray  # <f_i, <U_t F_-(D) U_t^*>_T f_j>
    equilibrium: np.ndarray  # <f_i, F_-(D+K) f_j>
    gaps: np.ndarray
    bound_energies: np.ndarray
    bound_occupations: np.ndarray  # conserved <phi, F_-(D) phi>
    bound_mismatch: np.ndarray  # occupation minus Fermi value at s
    extras: dict = field(default_factory=dict)

    @property
    def max_gap(self):
        return float(np.max(self.gaps)) if self.gaps.size else 0.0

    @property
    def obstructed(self):
        return bool(np.any(np.abs(self.bound_mismatch) > 1e-12))


def return_to_equilibrium_probe(D, K, beta, probes, T_horizon, m=None, margin=1e-9, mu=0.0):
    """Cesaro-averaged matrix elements of the evolved free state against the interacting equilibrium.

    Bound-state occupations of D + K are constants of motion, so a gap
    eigenstate whose free occupation differs from the Fermi value at its
    energy leaves a gap that no averaging removes.
    """
    fs = np.array([np.asarray(f, dtype=complex) for f in probes])
    nrm = np.linalg.norm(fs, axis=1)
    if np.any(np.abs(nrm - 1) > 1e-8):
        raise ValueError("probes must be normalized")
    D = as_hermitian(D)
    H = D + as_hermitian(K)
    avg = cesaro_covariance(D, K, beta, T_horizon).entries
    eq = fermi_factor(H, beta).entries
    A = fs.conj() @ avg @ fs.T
    B = fs.conj() @ eq @ fs.T
    if m is None:
        energies = occ = mism = np.zeros(0)
    else:
        g = bound_states(D, K, m, margin, mu)
        energies = g.energies
        F0 = fermi_factor(D, beta).entries
        occ = np.array([float(np.real(v.conj() @ F0 @ v)) for _, v in g.gap_eigenpairs])
        mism = occ - fermi_values(energies, beta, "-")
    return ReturnReport(float(T_horizon), A, B, np.abs(A - B), energies, occ, mism)
