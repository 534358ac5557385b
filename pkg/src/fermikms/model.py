"""Periodic momentum lattice for the Dirac field, external potentials, switching.

Basis ordering: index = site * spinor_dim + spinor, sites flattened in C
order over the spatial axes. The same ordering is used for positions and
momenta, related by the unitary DFT ``dft_matrix``.
"""

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.integrate import quad

from .linop import HermitianOperator

SIGMA = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def dirac_matrices(spatial_dim):
    """(alphas, beta). 1D: alpha = sigma_1, beta = sigma_3; 3D: Dirac representation."""
    if spatial_dim == 1:
        return [SIGMA[0]], SIGMA[2]
    if spatial_dim == 3:
        z = np.zeros((2, 2), dtype=complex)
        alphas = [np.block([[z, s], [s, z]]) for s in SIGMA]
        beta = np.diag([1.0, 1.0, -1.0, -1.0]).astype(complex)
        return alphas, beta
    raise ValueError(f"spatial_dim must be 1 or 3, got {spatial_dim}")


@dataclass(frozen=True)
class LatticeModel:
    spatial_dim: int = 1
    n_modes_per_axis: int = 21
    box_length: float = 20.0
    mass: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        if self.spatial_dim not in (1, 3):
            raise ValueError(f"spatial_dim must be 1 or 3, got {self.spatial_dim}")
        if self.n_modes_per_axis < 1 or self.n_modes_per_axis % 2 == 0:
            raise ValueError(f"n_modes_per_axis must be a positive odd integer, got {self.n_modes_per_axis}")
        if self.box_length <= 0:
            raise ValueError("box_length must be positive")
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")

    @property
    def spinor_dim(self):
        return 2 if self.spatial_dim == 1 else 4

    @property
    def n_sites(self):
        return self.n_modes_per_axis ** self.spatial_dim

    @property
    def dim(self):
        return self.spinor_dim * self.n_sites

    @property
    def dk(self):
        return 2 * np.pi / self.box_length

    @property
    def dx(self):
        return self.box_length / self.n_modes_per_axis

    @property
    def axis_momenta(self):
        n = self.n_modes_per_axis
        return self.dk * (np.arange(n) - (n - 1) // 2)

    @property
    def axis_positions(self):
        n = self.n_modes_per_axis
        return -0.5 * self.box_length + self.dx * np.arange(n)

    def _grid(self, axis_values):
        mesh = np.meshgrid(*([axis_values] * self.spatial_dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def momenta(self):
        """(n_sites, spatial_dim) array of grid momenta."""
        return self._grid(self.axis_momenta)

    @property
    def positions(self):
        return self._grid(self.axis_positions)

    def dispersion(self):
        """omega(k) = sqrt(k^2 + m^2) per site."""
        k = self.momenta
        return np.sqrt(np.sum(k**2, axis=1) + self.mass**2)

    def boundary_mask(self):
        """Sites in the outermost layer of the box (next to the periodic seam)."""
        n = self.n_modes_per_axis
        idx = np.stack(np.meshgrid(*([np.arange(n)] * self.spatial_dim), indexing="ij"), -1)
        idx = idx.reshape(-1, self.spatial_dim)
        return np.any((idx == 0) | (idx == n - 1), axis=1)


def dft_matrix(model):
    """Unitary map from position samples to momentum amplitudes (per site).

    Phases are measured from the box corner, so the momentum kernel of any
    multiplication operator is exactly cyclic in p - q.
    """
    n = model.n_modes_per_axis
    k = model.axis_momenta
    xi = model.dx * np.arange(n)
    F1 = np.exp(-1j * np.outer(k, xi)) / np.sqrt(n)
    F = F1
    for _ in range(model.spatial_dim - 1):
        F = np.kron(F, F1)
    return F


def build_dirac(model):
    """Free Dirac operator alpha.k + beta m - mu, block diagonal in momentum."""
    alphas, beta = dirac_matrices(model.spatial_dim)
    s = model.spinor_dim
    k = model.momenta
    blocks = np.einsum("ni,iab->nab", k, np.array(alphas)) + model.mass * beta[None]
    blocks -= model.mu * np.eye(s)[None]
    D = np.zeros((model.dim, model.dim), dtype=complex)
    for i, b in enumerate(blocks):
        D[i * s:(i + 1) * s, i * s:(i + 1) * s] = b
    return HermitianOperator(D)


def aslash_field(model, components):
    """Pointwise spinor matrices A^0 + alpha.A on the position grid, shape (n_sites, s, s)."""
    alphas, _ = dirac_matrices(model.spatial_dim)
    s = model.spinor_dim
    out = np.zeros((model.n_sites, s, s), dtype=complex)
    for mu, values in components.items():
        mu = int(mu)
        v = np.asarray(values, dtype=float).reshape(-1)
        if v.size != model.n_sites:
            raise ValueError(f"component {mu} has {v.size} samples, expected {model.n_sites}")
        if mu == 0:
            out += v[:, None, None] * np.eye(s)[None]
        elif 1 <= mu <= model.spatial_dim:
            out += v[:, None, None] * alphas[mu - 1][None]
        else:
            raise ValueError(f"component index {mu} out of range for spatial_dim {model.spatial_dim}")
    return out


def momentum_kernel(model, components):
    """Kernel a(Delta) of the potential on the cyclic momentum-difference grid.

    Returns (n_sites, s, s); entry m (C-ordered multi-index over axes) is the
    spinor matrix at difference m * dk modulo the grid. The operator matrix
    element between momenta p and q is a[difference_index(p, q)].
    """
    field_ = aslash_field(model, components)
    n, d = model.n_modes_per_axis, model.spatial_dim
    a = field_.reshape((n,) * d + field_.shape[1:])
    a = np.fft.fftn(a, axes=tuple(range(d))) / model.n_sites
    return a.reshape(field_.shape)


def difference_index(model):
    """(n_sites, n_sites) table of the cyclic momentum-difference index of (p, q)."""
    n, d = model.n_modes_per_axis, model.spatial_dim
    idx = np.stack(np.meshgrid(*([np.arange(n)] * d), indexing="ij"), -1).reshape(-1, d)
    diff = (idx[:, None, :] - idx[None, :, :]) % n
    return np.ravel_multi_index(tuple(diff[..., i] for i in range(d)), (n,) * d)


SWITCH_KINDS = ("bump_integral", "smoothstep5", "pulse")


def _smoothstep5(x, order):
    # 10x^3 - 15x^4 + 6x^5: C^2 with vanishing first and second derivative at 0, 1
    x = np.asarray(x, dtype=float)
    xi = np.clip(x, 0.0, 1.0)
    inside = (x > 0) & (x < 1)
    if order == 0:
        return xi**3 * (10 - 15 * xi + 6 * xi**2)
    val = {1: 30 * xi**2 * (1 - xi) ** 2,
           2: 60 * xi * (1 - xi) * (1 - 2 * xi),
           3: 60 * (1 - 6 * xi + 6 * xi**2)}[order]
    return np.where(inside, val, 0.0)


@dataclass(frozen=True)
class SwitchSchedule:
    """h(t) = H(t / window + 1) rising from 0 at -window to 1 at 0.

    kind "bump_integral": H is the normalized running integral of the bump
    exp(-1/(x(1-x))) (C-infinity). kind "smoothstep5": the quintic
    10x^3 - 15x^4 + 6x^5 (C^2, third derivative jumps at the window ends).
    """

    window: float
    kind: str = "bump_integral"

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError("switch window must be positive")
        if self.kind not in ("bump_integral", "smoothstep5"):
            raise ValueError(f"unknown switch kind {self.kind!r}")

    @property
    def support(self):
        return (-self.window, 0.0)

    def _x(self, t):
        return np.asarray(t, dtype=float) / self.window + 1.0

    def derivative(self, t, order):
        x = self._x(t)
        if self.kind == "smoothstep5":
            return _smoothstep5(x, order) / self.window**order
        if order == 0:
            return _switch_base(x)
        return bump_derivative(x, order - 1) / self.window**order

    def h(self, t):
        return self.derivative(t, 0)

    def hdot(self, t):
        return self.derivative(t, 1)

    def hddot(self, t):
        return self.derivative(t, 2)

    def hdddot(self, t):
        return self.derivative(t, 3)

    def frozen_value(self):
        return 1.0


@dataclass(frozen=True)
class PulseSchedule:
    """Compactly supported pulse p(t) = bump((t + window)/window) / bump(1/2) on [-window, 0].

    Used where a potential must vanish before and after the window.
    """

    window: float

    @property
    def support(self):
        return (-self.window, 0.0)

    def derivative(self, t, order):
        x = np.asarray(t, dtype=float) / self.window + 1.0
        peak = _bump(np.array(0.5))
        if order == 0:
            return _bump(x) / peak
        return _bump_raw_derivative(x, order) / peak / self.window**order

    def h(self, t):
        return self.derivative(t, 0)

    def hdot(self, t):
        return self.derivative(t, 1)

    def hddot(self, t):
        return self.derivative(t, 2)

    def hdddot(self, t):
        return self.derivative(t, 3)

    def frozen_value(self):
        return 0.0


def _bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > 0) & (x < 1)
    xi = x[inside]
    out[inside] = np.exp(-1.0 / (xi * (1.0 - xi)))
    return out


def _bump_raw_derivative(x, order):
    """order-th derivative of exp(g), g = -1/(x - x^2), order <= 3."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > 0) & (x < 1)
    xi = x[inside]
    q = xi - xi**2
    dq = 1 - 2 * xi
    g1 = dq / q**2
    g2 = -2 / q**2 - 2 * dq**2 / q**3
    g3 = 12 * dq / q**3 + 6 * dq**3 / q**4
    b = np.exp(-1.0 / q)
    if order == 1:
        out[inside] = g1 * b
    elif order == 2:
        out[inside] = (g2 + g1**2) * b
    elif order == 3:
        out[inside] = (g3 + 3 * g1 * g2 + g1**3) * b
    else:
        raise ValueError("order must be 1, 2 or 3")
    return out


@lru_cache(maxsize=None)
def _bump_mass():
    val, _ = quad(lambda y: np.exp(-1.0 / (y * (1.0 - y))), 0.0, 1.0, epsabs=1e-15, epsrel=1e-13)
    return val


_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


def _switch_base(x):
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    flat = x.reshape(-1)
    # running integral on [0, x] by Gauss-Legendre; fold to the shorter side
    upper = flat > 0.5
    a = np.where(upper, 1.0 - flat, flat)
    nodes = 0.5 * a[:, None] * (_GL_X[None, :] + 1.0)
    part = 0.5 * a * (_bump(nodes) @ _GL_W) / _bump_mass()
    return np.where(upper, 1.0 - part, part).reshape(x.shape)


def bump_derivative(x, order):
    """order-th derivative of the bump normalized to unit mass (order 0 = bump itself)."""
    if order == 0:
        return _bump(x) / _bump_mass()
    return _bump_raw_derivative(x, order) / _bump_mass()


@dataclass(frozen=True)
class PotentialProfile:
    """Spatial potential A_mu(x) sampled on the position grid plus switching data.

    ``components`` maps the index mu (0 = electric, 1..d = vector) to real
    samples of length n_sites. The switch window has duration
    epsilon * T_adiabatic.
    """

    components: dict = field(default_factory=dict)
    epsilon: float = 1.0
    T_adiabatic: float = 1.0
    switch_kind: str = "bump_integral"
    allow_boundary: bool = False

    def __post_init__(self):
        if not (self.epsilon > 0 and self.T_adiabatic > 0):
            raise ValueError("epsilon and T_adiabatic must be positive")
        if self.switch_kind not in SWITCH_KINDS:
            raise ValueError(f"unknown switch_kind {self.switch_kind!r}")

    @property
    def window(self):
        return self.epsilon * self.T_adiabatic

    def schedule(self):
        if self.switch_kind == "pulse":
            return PulseSchedule(self.window)
        return SwitchSchedule(self.window, self.switch_kind)

    def scaled(self, lam):
        comps = {k: lam * np.asarray(v, dtype=float) for k, v in self.components.items()}
        return PotentialProfile(comps, self.epsilon, self.T_adiabatic, self.switch_kind,
                                self.allow_boundary)

    def with_window(self, epsilon=None, T_adiabatic=None, switch_kind=None):
        return PotentialProfile(
            self.components,
            self.epsilon if epsilon is None else epsilon,
            self.T_adiabatic if T_adiabatic is None else T_adiabatic,
            self.switch_kind if switch_kind is None else switch_kind,
            self.allow_boundary,
        )


def switching(profile, t):
    sched = profile.schedule()
    return {"h": sched.h(t), "hdot": sched.hdot(t), "hddot": sched.hddot(t)}


def check_support(model, profile, rel_tol=1e-12):
    if profile.allow_boundary:
        return
    mask = model.boundary_mask()
    for mu, values in profile.components.items():
        v = np.asarray(values, dtype=float).reshape(-1)
        peak = float(np.max(np.abs(v))) if v.size else 0.0
        edge = float(np.max(np.abs(v[mask]))) if v.size else 0.0
        if edge > rel_tol * peak + 1e-300 and edge > 0:
            raise ValueError(
                f"profile component {mu} does not vanish on the boundary band "
                f"(max |A| there = {edge:.3e}); compact support inside the box is required")


def build_potential(model, profile):
    """Aslash = A^0 + alpha.A as a multiplication operator, in the momentum basis."""
    check_support(model, profile)
    field_ = aslash_field(model, profile.components)
    s = model.spinor_dim
    F = np.kron(dft_matrix(model), np.eye(s))
    M = np.zeros((model.dim, model.dim), dtype=complex)
    for i, b in enumerate(field_):
        M[i * s:(i + 1) * s, i * s:(i + 1) * s] = b
    return HermitianOperator(F @ M @ F.conj().T)


def bump_field(model, center, radius, amplitude=1.0):
    """Smooth compactly supported bump amplitude*exp(1 - 1/(1 - r^2/R^2)) on the grid."""
    x = model.positions
    c = np.broadcast_to(np.asarray(center, dtype=float), (model.spatial_dim,))
    r2 = np.sum((x - c) ** 2, axis=1) / radius**2
    out = np.zeros(model.n_sites)
    inside = r2 < 1
    out[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return out


def bump_profile(model, center=0.0, radius=3.0, amplitude=0.2, component=0, **kw):
    return PotentialProfile({component: bump_field(model, center, radius, amplitude)}, **kw)


def constant_profile(model, c, **kw):
    """Test-only: A^0 = c on the whole box (commuting override)."""
    return PotentialProfile({0: np.full(model.n_sites, float(c))}, allow_boundary=True, **kw)


def random_profile(model, rng, max_amplitude=0.2, n_bumps=2, components=None, **kw):
    """Random sum of small bumps kept inside the box."""
    L = model.box_length
    comps = {}
    allowed = list(range(model.spatial_dim + 1)) if components is None else list(components)
    for _ in range(n_bumps):
        mu = int(rng.choice(allowed))
        room = 0.5 * L - 2 * model.dx
        if room <= 0.12 * L:
            raise ValueError(f"box of {model.n_modes_per_axis} sites per axis is too coarse for bumps")
        radius = min(rng.uniform(0.12, 0.25) * L, 0.9 * room)
        lim = room - radius
        center = rng.uniform(-lim, lim, size=model.spatial_dim)
        amp = rng.uniform(-max_amplitude, max_amplitude)
        comps[mu] = comps.get(mu, 0.0) + bump_field(model, center, radius, amp)
    return PotentialProfile(comps, **kw)
