"""Spectral calculus on dense self-adjoint matrices.

Everything downstream (Fermi factors, projectors, logarithms, exponentials)
goes through one cached eigendecomposition per operator.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
from scipy.special import expit

# Relative degeneracy threshold for divided differences.
FRECHET_DEGENERACY = 1e-8


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self, values=None):
        vals = self.eigenvalues if values is None else values
        U = self.eigenvectors
        return (U * vals) @ U.conj().T


def _fix_phases(U, tol=1e-10):
    # make the first non-negligible component of every column real positive
    U = U.copy()
    mags = np.abs(U)
    first = np.argmax(mags > tol * mags.max(axis=0, keepdims=True), axis=0)
    pivots = U[first, np.arange(U.shape[1])]
    U *= (np.abs(pivots) / pivots).conj()[None, :]
    return U


class HermitianOperator:
    """Dense complex self-adjoint matrix with cached spectral data.

    The stored entries are the hermitian part of the input; the input is
    rejected if its anti-hermitian part exceeds ``hermiticity_tol`` in
    operator norm. The default tolerance is relative to the matrix size.
    """

    def __init__(self, entries, hermiticity_tol=None):
        a = np.array(entries, dtype=complex)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(a))))
        tol = 1e-10 * scale * a.shape[0] if hermiticity_tol is None else float(hermiticity_tol)
        skew = a - a.conj().T
        asym = float(np.linalg.norm(skew))
        if asym > tol:
            asym = float(np.linalg.norm(skew, 2))
            if asym > tol:
                raise ValueError(f"matrix is not hermitian: ||M - M^H||_op = {asym:.3e} > {tol:.3e}")
        a = 0.5 * (a + a.conj().T)
        a.setflags(write=False)
        self.entries = a
        self.hermiticity_tol = tol

    @property
    def dim(self):
        return self.entries.shape[0]

    @cached_property
    def spectral(self):
        return spectral_decompose(self)

    @cached_property
    def op_norm(self):
        vals = self.spectral.eigenvalues
        return float(max(abs(vals[0]), abs(vals[-1])))

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __add__(self, other):
        return HermitianOperator(self.entries + as_matrix(other))

    __radd__ = __add__

    def __sub__(self, other):
        return HermitianOperator(self.entries - as_matrix(other))

    def __neg__(self):
        return HermitianOperator(-self.entries)

    def __mul__(self, c):
        if np.iscomplexobj(c) and np.imag(c) != 0:
            raise ValueError("hermitian operators scale by real numbers only")
        return HermitianOperator(self.entries * float(np.real(c)))

    __rmul__ = __mul__

    def __repr__(self):
        return f"HermitianOperator(dim={self.dim})"


def as_matrix(M):
    if isinstance(M, HermitianOperator):
        return M.entries
    return np.asarray(M, dtype=complex)


def as_hermitian(M, hermiticity_tol=None):
    if isinstance(M, HermitianOperator):
        return M
    return HermitianOperator(M, hermiticity_tol)


def identity(dim):
    return HermitianOperator(np.eye(dim))


def spectral_decompose(M):
    """Ascending eigenvalues and phase-fixed orthonormal eigenvectors."""
    M = as_hermitian(M)
    vals, vecs = scipy.linalg.eigh(M.entries)
    return SpectralDecomposition(vals, _fix_phases(vecs))


def _checked_values(vals, f, name="f"):
    with np.errstate(all="ignore"):  # reported below with the offending eigenvalue
        out = np.asarray(f(vals))
    if out.shape != vals.shape:
        out = np.broadcast_to(out, vals.shape)
    bad = ~np.isfinite(out)
    if np.any(bad):
        lam = vals[np.argmax(bad)]
        raise ValueError(f"{name} is undefined or overflows at eigenvalue {lam!r}")
    return out


def matrix_function(M, f):
    """f(M) = U f(Λ) U^† for a real scalar map ``f`` (vectorized)."""
    M = as_hermitian(M)
    sd = M.spectral
    vals = _checked_values(sd.eigenvalues, f)
    if np.iscomplexobj(vals):
        if np.max(np.abs(vals.imag), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(vals))):
            raise ValueError("matrix_function expects a real-valued map; use spectral_apply")
        vals = vals.real
    return HermitianOperator(sd.reconstruct(vals.astype(float)))


def spectral_apply(M, f):
    """Like matrix_function but returns a plain (possibly non-hermitian) array."""
    M = as_hermitian(M)
    sd = M.spectral
    return sd.reconstruct(_checked_values(sd.eigenvalues, f))


def expi(M, t):
    """The unitary e^{itM} as an array."""
    return spectral_apply(M, lambda x: np.exp(1j * t * x))


def divided_differences(vals, f, fprime=None):
    """Matrix of first divided differences (Loewner matrix) of f on ``vals``."""
    vals = np.asarray(vals, dtype=float)
    fv = _checked_values(vals, f)
    if fprime is None:
        h = 1e-6 * max(1.0, float(np.max(np.abs(vals))))
        fp = (_checked_values(vals + h, f) - _checked_values(vals - h, f)) / (2 * h)
    else:
        fp = _checked_values(vals, fprime, "f'")
    spread = float(vals[-1] - vals[0]) if vals.size > 1 else 0.0
    thresh = FRECHET_DEGENERACY * max(spread, 1e-300)
    diff = vals[:, None] - vals[None, :]
    near = np.abs(diff) <= thresh
    with np.errstate(divide="ignore", invalid="ignore"):
        L = (fv[:, None] - fv[None, :]) / np.where(near, 1.0, diff)
    return np.where(near, 0.5 * (fp[:, None] + fp[None, :]), L)


def matrix_function_frechet(M, f, direction, fprime=None):
    """Daleckii-Krein derivative d/dh f(M + h X) at h = 0.

    ``fprime`` is used on near-degenerate eigenvalue pairs; if omitted it is
    replaced by a central difference of f.
    """
    M = as_hermitian(M)
    X = as_matrix(direction)
    sd = M.spectral
    U = sd.eigenvectors
    L = divided_differences(sd.eigenvalues, f, fprime)
    Xe = U.conj().T @ X @ U
    return HermitianOperator(U @ (L * Xe) @ U.conj().T)


def fermi_values(x, beta, sign):
    """Scalar Fermi factors F_-(x) = 1/(1+e^{-beta x}), F_+ = F_- - 1."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if sign == "-":
        return expit(beta * np.asarray(x))
    if sign == "+":
        return -expit(-beta * np.asarray(x))
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


def fermi_factor(M, beta, sign="-"):
    """F_± = ∓(1 + e^{±βM})^{-1}."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return matrix_function(M, lambda x: fermi_values(x, beta, sign))


def spectral_projectors(M):
    """(P, Q): P onto eigenvalues > 0, Q = 1 - P (zero modes go to Q)."""
    M = as_hermitian(M)
    sd = M.spectral
    pos = (sd.eigenvalues > 0).astype(float)
    P = sd.reconstruct(pos)
    Q = sd.reconstruct(1.0 - pos)
    return HermitianOperator(P), HermitianOperator(Q)


@dataclass(frozen=True)
class Norms:
    op_norm: float
    hs_norm: float
    trace_norm: float
    trace: complex


def norms(M):
    a = as_matrix(M)
    s = np.linalg.svd(a, compute_uv=False)
    tr = np.trace(a)
    if abs(tr.imag) <= 1e-14 * max(1.0, abs(tr.real)):
        tr = float(tr.real)
    return Norms(float(s[0]) if s.size else 0.0, float(np.sqrt(np.sum(s**2))),
                 float(np.sum(s)), tr)


def op_norm(M):
    a = as_matrix(M)
    return float(np.linalg.norm(a, 2))


def hs_norm(M):
    return float(np.linalg.norm(as_matrix(M)))


def commutator(A, B):
    a, b = as_matrix(A), as_matrix(B)
    return a @ b - b @ a


class Covariance:
    """One-particle operator T of a gauge-invariant quasi-free state, 0 <= T <= 1.

    ``hamiltonian``/``beta`` may be attached when T = F_-(H) so that log T and
    log(1 - T) can be formed from the generator instead of from T's rounded
    spectrum.
    """

    TOL = 1e-10

    def __init__(self, op, hamiltonian=None, beta=None):
        op = as_hermitian(op)
        vals = op.spectral.eigenvalues
        if vals[0] < -self.TOL or vals[-1] > 1 + self.TOL:
            raise ValueError(
                f"covariance spectrum [{vals[0]:.3e}, {vals[-1]:.3e}] is outside [0, 1]")
        self.op = op
        self.hamiltonian = None if hamiltonian is None else as_hermitian(hamiltonian)
        self.beta = beta

    @classmethod
    def thermal(cls, H, beta):
        H = as_hermitian(H)
        return cls(fermi_factor(H, beta, "-"), hamiltonian=H, beta=beta)

    @property
    def dim(self):
        return self.op.dim

    def __array__(self, dtype=None, copy=None):
        return self.op.__array__(dtype)

    def __repr__(self):
        return f"Covariance(dim={self.dim}, thermal={self.hamiltonian is not None})"
