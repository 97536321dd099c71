"""Finite-temperature initial states: condensate plus semiclassical thermal cloud.

The condensate orbital comes from imaginary-time propagation of the
Gross-Pitaevskii equation; the thermal component is the semiclassical
Hartree-Fock density

    n_T(x) = lambda_dB^-3  g_{3/2}( exp[(mu - V_eff(x)) / kB T] ),
    V_eff  = V + 2 g (n_c + n_T),

made self-consistent with the condensate and closed by fixing the total atom
number.  On reduced-dimensional grids the frozen transverse axes are
integrated out analytically, which raises the polylog index by 1/2 per axis
(g_2 in 2-D, g_{5/2} in 1-D) and multiplies the prefactor by
sqrt(2 pi kB T / m)/omega_perp per axis.

Only component 1 is populated before the first interferometer pulse, so all
mean fields here use g11.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import hbar, k as k_B
from scipy.special import factorial, gamma as gamma_fn, spence, zetac

from .errors import ConfigError, ConvergenceError
from .grids import (
    Grid,
    PhysicalParams,
    effective_couplings,
    from_momentum,
    harmonic_modes,
    to_momentum,
    trap_potential,
)

ZETA_3 = zetac(3.0) + 1.0

# fugacity is clamped strictly below 1: the saturated value stands in for the
# condensed part, which is carried by the explicit condensate orbital
FUGACITY_CLAMP = 1.0 - 1e-12

_ROBINSON_TERMS = 26
_SERIES_TERMS = 64
_SWITCH_ALPHA = 0.6  # use the small-alpha expansion for z > exp(-0.6)

# zeta(s - k) tables for the Robinson small-alpha expansions
_ZETA_TABLE = {
    s: np.array([zetac(s - k) + 1.0 for k in range(_ROBINSON_TERMS)])
    for s in (1.5, 2.5)
}
_INV_FACT = 1.0 / factorial(np.arange(_ROBINSON_TERMS))


def bose_g(s: float, z) -> np.ndarray:
    """Bose-Einstein integral g_s(z) = sum z^l / l^s for z in [0, 1).

    s = 2 uses the exact dilogarithm; s = 3/2 and 5/2 combine the direct
    series (small z) with Robinson's expansion around z -> 1, accurate to
    ~1e-12 relative over the whole clamped range.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z < 0) or np.any(z >= 1.0):
        raise ValueError("fugacity must lie in [0, 1)")
    if s != 2.0 and s not in _ZETA_TABLE:
        raise ValueError(f"unsupported polylog index {s}")
    out = np.zeros_like(z)
    with np.errstate(divide="ignore"):
        alpha = -np.log(z)
    small = (alpha < _SWITCH_ALPHA) & (z > 0)
    big = ~small & (z > 0)
    if np.any(big):
        zb = z[big]
        acc = np.zeros_like(zb)
        term = np.ones_like(zb)
        for l in range(1, _SERIES_TERMS + 1):
            term = term * zb
            acc += term / l**s
        out[big] = acc
    if s == 2.0:
        # the dilogarithm is exact near saturation, where the direct series
        # converges slowly; the series covers small z, where spence(1 - z)
        # suffers cancellation
        out[small] = spence(1.0 - z[small])
        return out
    if np.any(small):
        a = alpha[small]
        acc = gamma_fn(1.0 - s) * a ** (s - 1.0)
        sign = 1.0
        apow = np.ones_like(a)
        for k in range(_ROBINSON_TERMS):
            acc = acc + _ZETA_TABLE[s][k] * sign * apow * _INV_FACT[k]
            sign = -sign
            apow = apow * a
        out[small] = acc
    return out


def critical_temperature(n_total: float, params: PhysicalParams) -> float:
    """Ideal-gas condensation temperature of a 3-D harmonic trap (kelvin)."""
    if n_total <= 0:
        raise ConfigError("thermal.n_total", "must be positive")
    return hbar * params.mean_omega / k_B * (n_total / ZETA_3) ** (1.0 / 3.0)


def thermal_density(
    grid: Grid, params: PhysicalParams, v_eff: np.ndarray, mu: float, temperature: float
) -> np.ndarray:
    """Semiclassical thermal density on the simulated axes (transverse axes
    of a reduced grid are integrated out against the bare trap)."""
    kT = k_B * temperature
    lam = np.sqrt(2.0 * np.pi * hbar**2 / (params.mass * kT))
    pref = lam**-3
    for axis in range(grid.dims, 3):
        pref *= np.sqrt(2.0 * np.pi * kT / params.mass) / params.trap_omegas[axis]
    s = 1.5 + 0.5 * (3 - grid.dims)
    expo = np.clip((mu - v_eff) / kT, -700.0, np.log(FUGACITY_CLAMP))
    return pref * bose_g(s, np.exp(expo))


@dataclass
class GroundState:
    """Imaginary-time GPE solution normalised to the condensate number."""

    phi: np.ndarray
    mu: float
    energy: float
    steps: int
    residual: float


def _thomas_fermi_mu(v: np.ndarray, g_eff: float, n_c: float, dv: float) -> float:
    """Chemical potential of the zero-kinetic-energy profile (mu - V)/g."""

    def count(mu):
        return np.sum(np.clip(mu - v, 0.0, None)) * dv / g_eff

    lo = float(v.min())
    hi = lo + max(g_eff * n_c / dv, 1e-32)
    while count(hi) < n_c:
        hi = lo + 2.0 * (hi - lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if count(mid) < n_c:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gpe_ground_state(
    grid: Grid,
    params: PhysicalParams,
    n_condensate: float,
    extra_potential=None,
    dt: float = None,
    tol: float = 1e-10,
    max_steps: int = 200_000,
    initial=None,
) -> GroundState:
    """Imaginary-time split-step relaxation of the single-component GPE.

    The field is renormalised to ``n_condensate`` after every step; the run
    stops once the relative energy change per step drops below ``tol``, and
    raises ConvergenceError (with the final residual) if ``max_steps`` is
    exhausted first.  The default step is 1e-2 of the fastest simulated trap
    period, which converges orders of magnitude faster than a very
    conservative step while the renormalised iteration remains stable.
    """
    if n_condensate <= 0:
        raise ConfigError("thermal.n_condensate", "imaginary time needs atoms")
    g_eff = effective_couplings(params, grid)[0, 0]
    v = trap_potential(grid, params)
    if extra_potential is not None:
        v = v + extra_potential
    dv = grid.cell_volume
    # the split steps stay contractive while dt * max(V + g n)/hbar stays
    # small on the field's support; the Thomas-Fermi mu sets that scale
    mu_tf = _thomas_fermi_mu(v, g_eff, n_condensate, dv) if g_eff > 0 else 0.0
    if dt is None:
        dt = 0.02 * 2.0 * np.pi / max(params.trap_omegas[: grid.dims])
        if mu_tf > 0:
            dt = min(dt, 0.2 * hbar / mu_tf)
    if initial is None:
        if g_eff > 0:
            phi = np.sqrt(np.clip(mu_tf - v, 0.0, None) / g_eff).astype(complex)
        else:
            mesh = grid.position_mesh()
            widths = [
                np.sqrt(hbar / (params.mass * params.trap_omegas[j]))
                for j in range(grid.dims)
            ]
            phi = np.exp(
                -sum((mesh[j] / (2.0 * widths[j])) ** 2 for j in range(grid.dims))
            ).astype(complex)
    else:
        phi = initial.astype(complex).copy()
    norm = np.sqrt(np.sum(np.abs(phi) ** 2) * dv)
    phi *= np.sqrt(n_condensate) / norm

    kin = hbar * grid.ksquared() / (2.0 * params.mass)  # energy units
    decay_half = np.exp(-0.5 * kin * dt)

    def energy_and_mu(f):
        fk = to_momentum(f, grid)
        e_kin = np.sum(hbar * kin * np.abs(fk) ** 2) * dv / f.size
        dens = np.abs(f) ** 2
        e_pot = np.sum(v * dens) * dv
        e_int = 0.5 * g_eff * np.sum(dens**2) * dv
        mu = (e_kin + e_pot + 2.0 * e_int) / n_condensate
        return e_kin + e_pot + e_int, mu

    energy, _ = energy_and_mu(phi)
    check_every = 5
    residual = np.inf
    for step in range(1, max_steps + 1):
        phi = from_momentum(decay_half * to_momentum(phi, grid), grid)
        dens = np.abs(phi) ** 2
        phi = phi * np.exp(-dt / hbar * (v + g_eff * dens))
        phi = from_momentum(decay_half * to_momentum(phi, grid), grid)
        phi *= np.sqrt(n_condensate / (np.sum(np.abs(phi) ** 2) * dv))
        if step % check_every == 0:
            new_energy, _ = energy_and_mu(phi)
            residual = abs(new_energy - energy) / (abs(new_energy) * check_every)
            energy = new_energy
            if residual < tol:
                _, mu = energy_and_mu(phi)
                return GroundState(phi, float(mu), float(energy), step, float(residual))
    raise ConvergenceError("imaginary-time relaxation did not settle", residual)


@dataclass
class ThermalEnsembleSpec:
    """Self-consistent finite-temperature initial state for component 1."""

    condensate: np.ndarray  # complex orbital, integrates to n_condensate
    thermal_density: np.ndarray  # >= 0, integrates to n_thermal
    mu: float
    temperature: float
    n_condensate: float
    n_thermal: float
    no_condensate: bool = False
    thermal_modes: np.ndarray = None  # (B, *grid.shape), orthonormal, _|_ condensate
    thermal_occupations: np.ndarray = None
    report: dict = field(default_factory=dict)

    @property
    def n_total(self) -> float:
        return self.n_condensate + self.n_thermal


def _saturated_count(grid, params, v_eff, mu, temperature):
    dv = grid.cell_volume
    return float(np.sum(thermal_density(grid, params, v_eff, mu, temperature)) * dv)


def _bisect_mu(grid, params, v_eff, temperature, n_target):
    """Chemical potential of a fully thermal cloud holding n_target atoms.

    Returns None when even the saturated cloud (mu at the potential minimum)
    cannot hold that many atoms, i.e. a condensate must be present.
    """
    v_min = float(v_eff.min())
    kT = k_B * temperature
    hi = v_min
    if _saturated_count(grid, params, v_eff, hi, temperature) < n_target:
        return None
    lo = v_min - 60.0 * kT
    while _saturated_count(grid, params, v_eff, lo, temperature) > n_target:
        lo -= 60.0 * kT
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _saturated_count(grid, params, v_eff, mid, temperature) > n_target:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def shf_self_consistent(
    grid: Grid,
    params: PhysicalParams,
    n_total: float,
    temperature: float,
    basis_size: int = 0,
    mixing: float = 0.5,
    rel_tol: float = 1e-3,
    max_iter: int = 60,
    gpe_tol: float = 1e-10,
) -> ThermalEnsembleSpec:
    """Condensate + thermal cloud fixed point at fixed total atom number.

    Alternates (i) condensate orbital from the GPE in V + 2 g n_T, (ii)
    semiclassical thermal density in V + 2 g (n_c + n_T) at the condensate
    chemical potential, (iii) n_c <- n_total - integral(n_T), with linear
    mixing, until the thermal count changes by less than ``rel_tol``.  Above
    the transition the condensate branch empties and mu comes from bisecting
    the atom-number constraint instead.
    """
    if temperature <= 0:
        raise ConfigError("thermal.temperature", "must be positive")
    if n_total <= 0:
        raise ConfigError("thermal.n_total", "must be positive")
    t_c = critical_temperature(n_total, params)
    g_eff = effective_couplings(params, grid)[0, 0]
    v_bare = trap_potential(grid, params)
    dv = grid.cell_volume

    ideal_frac = max(1.0 - (temperature / t_c) ** 3, 0.0)
    n_c = ideal_frac * n_total
    n_t_field = np.zeros(grid.shape)
    n_t_total = n_total - n_c
    phi = None
    mu = 0.0
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if n_c >= 1.0:
            gs = gpe_ground_state(
                grid,
                params,
                n_c,
                extra_potential=2.0 * g_eff * n_t_field,
                initial=phi,
                tol=gpe_tol,
            )
            phi, mu = gs.phi, gs.mu
            cond_density = np.abs(phi) ** 2
        else:
            phi = None
            cond_density = 0.0
        v_eff = v_bare + 2.0 * g_eff * (cond_density + n_t_field)
        if n_c >= 1.0:
            n_t_new_field = thermal_density(grid, params, v_eff, mu, temperature)
            n_t_new = float(np.sum(n_t_new_field) * dv)
            n_c_target = max(n_total - n_t_new, 0.0)
        else:
            mu_th = _bisect_mu(grid, params, v_eff, temperature, n_total)
            if mu_th is None:  # cloud saturates: a condensate re-forms
                mu_th = float(v_eff.min())
                n_t_new_field = thermal_density(grid, params, v_eff, mu_th, temperature)
                n_t_new = float(np.sum(n_t_new_field) * dv)
                n_c_target = max(n_total - n_t_new, 0.0)
            else:
                n_t_new_field = thermal_density(grid, params, v_eff, mu_th, temperature)
                n_t_new = float(np.sum(n_t_new_field) * dv)
                n_c_target = 0.0
            mu = mu_th
        delta = abs(n_t_new - n_t_total) / max(n_t_new, 1e-3 * n_total)
        n_t_total = n_t_new
        if delta < rel_tol:
            # keep the unmixed update: the returned field must integrate to
            # n_thermal, not to a relaxation-damped average
            n_t_field = n_t_new_field
            n_c = n_c_target
            break
        n_t_field = (1.0 - mixing) * n_t_field + mixing * n_t_new_field
        n_c = (1.0 - mixing) * n_c + mixing * n_c_target
    else:
        raise ConvergenceError("thermal fixed point did not settle", delta)

    # close the atom budget exactly and refresh the orbital one last time
    no_condensate = n_t_total >= n_total - 1.0
    if no_condensate:
        n_c = 0.0
        condensate = np.zeros(grid.shape, dtype=complex)
        n_t_field = thermal_density(
            grid, params, v_bare + 2.0 * g_eff * n_t_field, mu, temperature
        )
        n_thermal = float(np.sum(n_t_field) * dv)
        if abs(n_thermal - n_total) / n_total > 1e-3:
            # rescale the last profile onto the budget (sub-0.1% adjustments)
            n_t_field *= n_total / n_thermal
            n_thermal = n_total
    else:
        n_c = n_total - n_t_total
        gs = gpe_ground_state(
            grid,
            params,
            n_c,
            extra_potential=2.0 * g_eff * n_t_field,
            initial=phi,
            tol=gpe_tol,
        )
        condensate = gs.phi
        mu = gs.mu
        n_thermal = n_t_total

    spec = ThermalEnsembleSpec(
        condensate=condensate,
        thermal_density=n_t_field,
        mu=float(mu),
        temperature=float(temperature),
        n_condensate=float(n_c),
        n_thermal=float(n_thermal),
        no_condensate=bool(no_condensate),
        report={
            "critical_temperature_k": float(t_c),
            "t_over_tc": float(temperature / t_c),
            "iterations": iterations,
            "condensate_fraction": float(n_c / n_total),
            "mu_j": float(mu),
        },
    )
    if basis_size:
        attach_thermal_modes(spec, grid, params, basis_size)
    return spec


def attach_thermal_modes(
    spec: ThermalEnsembleSpec, grid: Grid, params: PhysicalParams, basis_size: int
) -> None:
    """Attach an orthonormal thermal mode basis and its occupations in place.

    Modes are bare-trap oscillator states orthogonalised against the
    condensate orbital; energies are Hartree-Fock expectation values
    <chi| K + V + 2g(n_c + n_T) |chi>, and Bose-Einstein occupations at
    (mu, T) are rescaled so their sum matches the semiclassical n_thermal.
    """
    modes, _ = harmonic_modes(grid, params, basis_size + 1)
    dv = grid.cell_volume
    flat = modes.reshape(modes.shape[0], -1).T.astype(complex) * np.sqrt(dv)
    if spec.n_condensate > 0:
        cond = spec.condensate.ravel() * np.sqrt(dv)
        cond = cond / np.linalg.norm(cond)
        stack = np.column_stack([cond, flat])
        q, _ = np.linalg.qr(stack)
        basis = q[:, 1 : basis_size + 1]
    else:
        basis = flat[:, :basis_size]
    basis = basis / np.sqrt(dv)  # back to density normalisation
    modes = basis.T.reshape((basis_size,) + grid.shape)

    g_eff = effective_couplings(params, grid)[0, 0]
    v_eff = (
        trap_potential(grid, params)
        + 2.0 * g_eff * (np.abs(spec.condensate) ** 2 + spec.thermal_density)
    )
    kin = hbar * grid.ksquared() / (2.0 * params.mass)
    energies = np.empty(basis_size)
    for i in range(basis_size):
        m = modes[i]
        mk = to_momentum(m, grid)
        e_kin = np.sum(hbar * kin * np.abs(mk) ** 2) * dv / m.size
        e_pot = np.sum(v_eff * np.abs(m) ** 2) * dv
        energies[i] = e_kin + e_pot
    kT = k_B * spec.temperature
    x = np.clip((energies - spec.mu) / kT, 1e-6, 700.0)
    occ = 1.0 / np.expm1(x)
    if spec.n_thermal > 0 and occ.sum() > 0:
        occ *= spec.n_thermal / occ.sum()
    else:
        occ[:] = 0.0
    spec.thermal_modes = modes
    spec.thermal_occupations = occ
    spec.report["thermal_mode_count"] = int(basis_size)
    spec.report["thermal_mode_energy_range_j"] = [
        float(energies.min()),
        float(energies.max()),
    ]


def coherent_spec(grid: Grid, params: PhysicalParams, n_atoms: float,
                  gpe_tol: float = 1e-10) -> ThermalEnsembleSpec:
    """Zero-temperature stand-in: pure GPE condensate, empty thermal cloud."""
    gs = gpe_ground_state(grid, params, n_atoms, tol=gpe_tol)
    return ThermalEnsembleSpec(
        condensate=gs.phi,
        thermal_density=np.zeros(grid.shape),
        mu=gs.mu,
        temperature=0.0,
        n_condensate=float(n_atoms),
        n_thermal=0.0,
        report={"mu_j": float(gs.mu)},
    )
