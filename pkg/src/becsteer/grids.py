"""Spatial grids, physical parameters, and spectral single-particle operators.

Grids are uniform and periodic with power-of-two point counts per axis so
that FFTs stay fast and momentum grids follow the standard DFT layout
(``2*pi*fftfreq``).  Position axes are centred on zero: ``x_i = (i - n/2) dx``,
which places the trap minimum exactly on a grid point.

All quantities are SI.  Interaction strengths derive from s-wave scattering
lengths as g_jk = 4 pi hbar^2 a_jk / m; simulating fewer than three axes
rescales g and the loss-rate constants by the transverse harmonic
ground-state overlap integrals (see ``dimension_reduction``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import atomic_mass, hbar, physical_constants

from .errors import ConfigError

BOHR_RADIUS = physical_constants["Bohr radius"][0]

# Literature values used as defaults for the Rb-87 |F=1,m=-1> / |F=2,m=+1>
# clock pair: a11 = 100.40 a0, a12 = 98.006 a0, a22 = 95.44 a0, with the
# dominant inelastic channels 2<->2, 1<->2 (two-body) and 1-1-1 (three-body).
RB87_MASS = 86.909180527 * atomic_mass
RB87_A11 = 100.40 * BOHR_RADIUS
RB87_A12 = 98.006 * BOHR_RADIUS
RB87_A22 = 95.44 * BOHR_RADIUS
RB87_K22 = 8.1e-20  # m^3/s
RB87_K12 = 1.51e-20  # m^3/s
RB87_K111 = 5.8e-42  # m^6/s


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid over 1-3 spatial axes."""

    dims: int
    points: tuple
    extents: tuple  # box lengths, metres

    def __post_init__(self):
        if self.dims not in (1, 2, 3):
            raise ConfigError("grid.dims", f"must be 1, 2 or 3, got {self.dims}")
        pts = tuple(int(p) for p in self.points)
        ext = tuple(float(e) for e in self.extents)
        if len(pts) != self.dims or len(ext) != self.dims:
            raise ConfigError(
                "grid.points", f"need {self.dims} entries, got {len(pts)}/{len(ext)}"
            )
        for p in pts:
            if not _is_power_of_two(p):
                raise ConfigError("grid.points", f"{p} is not a power of two")
        for e in ext:
            if not (e > 0):
                raise ConfigError("grid.extents", f"extent {e} must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "extents", ext)

    @property
    def spacing(self) -> tuple:
        return tuple(e / p for e, p in zip(self.extents, self.points))

    @property
    def shape(self) -> tuple:
        return self.points

    @property
    def mode_count(self) -> int:
        return int(np.prod(self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, i: int) -> np.ndarray:
        n = self.points[i]
        dx = self.spacing[i]
        if n == 1:
            return np.zeros(1)
        return (np.arange(n) - n // 2) * dx

    def k_axis(self, i: int) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.points[i], d=self.spacing[i])

    def position_mesh(self) -> list:
        axes = [self.axis(i) for i in range(self.dims)]
        return np.meshgrid(*axes, indexing="ij")

    def ksquared(self) -> np.ndarray:
        axes = [self.k_axis(i) for i in range(self.dims)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return sum(k**2 for k in mesh)


def make_grid(dims: int, points, extents) -> Grid:
    """Validated grid constructor; scalars are broadcast to all axes."""
    if np.isscalar(points):
        points = (points,) * dims
    if np.isscalar(extents):
        extents = (extents,) * dims
    return Grid(dims, tuple(points), tuple(extents))


@dataclass(frozen=True)
class PhysicalParams:
    """Masses, interactions, trap and loss-rate constants (SI, 3-D values)."""

    mass: float = RB87_MASS
    a11: float = RB87_A11
    a12: float = RB87_A12
    a22: float = RB87_A22
    trap_omegas: tuple = (0.0, 0.0, 0.0)  # rad/s, all three axes
    gamma1: tuple = (0.0, 0.0)  # one-body loss, 1/s, per component
    k22: float = 0.0  # two-body 2+2, m^3/s
    k12: float = 0.0  # two-body 1+2, m^3/s
    k111: float = 0.0  # three-body 1+1+1, m^6/s

    def __post_init__(self):
        if not (self.mass > 0):
            raise ConfigError("physics.mass", "must be positive")
        om = tuple(float(w) for w in self.trap_omegas)
        if len(om) != 3 or any(w <= 0 for w in om):
            raise ConfigError(
                "physics.trap_freqs", f"need three positive frequencies, got {om}"
            )
        g1 = tuple(float(g) for g in self.gamma1)
        if len(g1) != 2 or any(g < 0 for g in g1):
            raise ConfigError("physics.loss_gamma1", "need two non-negative rates")
        for name, val in (("k22", self.k22), ("k12", self.k12), ("k111", self.k111)):
            if val < 0:
                raise ConfigError(f"physics.loss_{name}", "must be non-negative")
        object.__setattr__(self, "trap_omegas", om)
        object.__setattr__(self, "gamma1", g1)

    def g3d(self, a: float) -> float:
        return 4.0 * np.pi * hbar**2 * a / self.mass

    @property
    def g_matrix_3d(self) -> np.ndarray:
        return np.array(
            [
                [self.g3d(self.a11), self.g3d(self.a12)],
                [self.g3d(self.a12), self.g3d(self.a22)],
            ]
        )

    def oscillator_length(self, axis: int) -> float:
        return float(np.sqrt(hbar / (self.mass * self.trap_omegas[axis])))

    @property
    def mean_omega(self) -> float:
        return float(np.prod(self.trap_omegas) ** (1.0 / 3.0))


def rb87_defaults(trap_freqs_hz=(97.0, 97.6, 11.96), with_losses=False) -> PhysicalParams:
    """Default Rb-87 clock-pair parameter set (scattering lengths and loss
    constants are literature values; the trap is an atom-chip style trap)."""
    om = tuple(2.0 * np.pi * f for f in trap_freqs_hz)
    if with_losses:
        return PhysicalParams(
            trap_omegas=om, k22=RB87_K22, k12=RB87_K12, k111=RB87_K111
        )
    return PhysicalParams(trap_omegas=om)


def dimension_reduction(params: PhysicalParams, grid: Grid) -> dict:
    """Coupling/loss rescaling factors for reduced-dimensional grids.

    The first ``grid.dims`` trap axes are simulated; each remaining axis is
    assumed frozen into its harmonic ground state of length l, contributing
    1/(l sqrt(2 pi)) per axis to two-body terms (integral of |chi|^4) and
    1/(l^2 pi sqrt(3)) per axis to three-body terms (integral of |chi|^6).
    """
    two_body = 1.0
    three_body = 1.0
    for axis in range(grid.dims, 3):
        l = params.oscillator_length(axis)
        two_body /= l * np.sqrt(2.0 * np.pi)
        three_body /= l**2 * np.pi * np.sqrt(3.0)
    return {"two_body": two_body, "three_body": three_body}


def effective_couplings(params: PhysicalParams, grid: Grid) -> np.ndarray:
    """2x2 coupling matrix rescaled for the simulated dimensionality."""
    return params.g_matrix_3d * dimension_reduction(params, grid)["two_body"]


def trap_potential(grid: Grid, params: PhysicalParams) -> np.ndarray:
    """V(x) = (m/2) sum_j omega_j^2 x_j^2 over the simulated axes."""
    mesh = grid.position_mesh()
    v = np.zeros(grid.shape)
    for j in range(grid.dims):
        v = v + 0.5 * params.mass * params.trap_omegas[j] ** 2 * mesh[j] ** 2
    return v


def kinetic_phase(grid: Grid, params: PhysicalParams, dt: float) -> np.ndarray:
    """Momentum-space phase factor exp(-i hbar k^2 dt / 2m) for one step."""
    return np.exp(-1j * hbar * grid.ksquared() * dt / (2.0 * params.mass))


def to_momentum(field: np.ndarray, grid: Grid) -> np.ndarray:
    """FFT over the trailing grid axes (leading axes are batch axes)."""
    axes = tuple(range(field.ndim - grid.dims, field.ndim))
    return np.fft.fftn(field, axes=axes)


def from_momentum(field: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(field.ndim - grid.dims, field.ndim))
    return np.fft.ifftn(field, axes=axes)


def check_mode_guard(grid: Grid, n_atoms: float) -> bool:
    """Truncated-Wigner validity guard: warn when modes outnumber atoms."""
    ok = grid.mode_count < n_atoms
    if not ok:
        warnings.warn(
            f"grid has {grid.mode_count} modes for {n_atoms:.0f} atoms; "
            "half-quantum noise may dominate (truncated-Wigner guard)",
            stacklevel=2,
        )
    return ok


def _hermite_functions(x: np.ndarray, l: float, count: int) -> np.ndarray:
    """First ``count`` normalised harmonic-oscillator eigenfunctions on x."""
    xi = x / l
    out = np.empty((count, x.size))
    out[0] = np.pi**-0.25 / np.sqrt(l) * np.exp(-0.5 * xi**2)
    if count > 1:
        out[1] = np.sqrt(2.0) * xi * out[0]
    for n in range(1, count - 1):
        out[n + 1] = np.sqrt(2.0 / (n + 1.0)) * xi * out[n] - np.sqrt(
            n / (n + 1.0)
        ) * out[n - 1]
    return out


def harmonic_modes(grid: Grid, params: PhysicalParams, count: int):
    """Lowest ``count`` eigenmodes of the bare trap, energy-ordered.

    Returns (modes, energies) with ``modes`` of shape (count, *grid.shape),
    orthonormalised on the grid (sum |mode|^2 dV = 1).  Tensor products of
    1-D Hermite functions are re-orthonormalised by QR to absorb the small
    non-orthogonality introduced by sampling on a finite box.
    """
    if count > grid.mode_count:
        raise ConfigError(
            "basis_size", f"{count} modes requested on a {grid.mode_count}-point grid"
        )
    per_axis = []
    for j in range(grid.dims):
        l = params.oscillator_length(j)
        per_axis.append(_hermite_functions(grid.axis(j), l, min(count, grid.points[j])))
    # enumerate index tuples, lowest total energy first (ties: lexicographic)
    ranges = [np.arange(p.shape[0]) for p in per_axis]
    mesh = np.meshgrid(*ranges, indexing="ij")
    idx = np.stack([m.ravel() for m in mesh], axis=1)
    energy = np.zeros(idx.shape[0])
    for j in range(grid.dims):
        energy += hbar * params.trap_omegas[j] * (idx[:, j] + 0.5)
    order = np.lexsort(tuple(idx[:, j] for j in reversed(range(grid.dims))) + (energy,))
    chosen = order[:count]
    modes = np.empty((count,) + grid.shape)
    for row, sel in enumerate(chosen):
        m = per_axis[0][idx[sel, 0]]
        for j in range(1, grid.dims):
            m = np.multiply.outer(m, per_axis[j][idx[sel, j]])
        modes[row] = m
    dv = grid.cell_volume
    flat = modes.reshape(count, -1).T * np.sqrt(dv)  # unit-norm columns
    q, r = np.linalg.qr(flat)
    # keep the sign convention of the raw modes
    q = q * np.sign(np.diag(r))
    modes = (q / np.sqrt(dv)).T.reshape((count,) + grid.shape)
    return modes, energy[chosen]
