"""Truncated-Wigner trajectory engine for the two-component interferometer.

An ensemble of complex field pairs (psi_1, psi_2) samples the Wigner
function of the initial state: the condensate orbital carries a classical
amplitude (optionally with Poissonian number scatter), thermal modes carry
complex Gaussian amplitudes of variance n_k, and every grid mode of both
components receives the symmetric-ordering half quantum.  Rabi pulses act as
instantaneous pointwise SU(2) rotations with the same matrix convention as
the two-mode oracle, and the hold dynamics is a Strang-split spectral
integrator for the coupled Gross-Pitaevskii drift

    i hbar d(psi_j)/dt = [K + V + sum_k g_jk |psi_k|^2 - g_jj/dV] psi_j

with loss damping (one-body, 2<->2, 1<->2 and 1+1+1 channels, rate-equation
conventions dn/dt = -K2 n^2, -K3 n^3) and optional Gaussian loss noise.
Damping rates use raw |psi|^2, so the half-quantum background contributes a
small spurious loss; at the densities simulated here it is far below the
rate-equation test tolerances.

Determinism: every random draw comes from a generator keyed by
(master_seed, index, epoch) where epoch 0 is initial sampling (index =
trajectory) and epochs >= 1 are evolution segments (index = fixed-size
trajectory chunk).  FFTs and noise are always applied to the same
fixed-boundary chunks regardless of worker count, so worker parallelism
cannot change a single bit of the result.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.constants import hbar

from .errors import ConfigError, SimulationError
from .grids import (
    Grid,
    PhysicalParams,
    dimension_reduction,
    effective_couplings,
    trap_potential,
)
from .thermal import ThermalEnsembleSpec

INIT_MODES = ("grand-canonical", "coherent")

#: trajectories per FFT/noise batch; chunk boundaries are global (independent
#: of worker count) so batched libraries see identical call shapes
FFT_CHUNK = 16

#: evolve() aborts when more than this fraction of trajectories go non-finite
MAX_FLAGGED_FRACTION = 0.01


def _rng_for(master_seed: int, index: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((master_seed, index, epoch)))


@dataclass
class SequenceSchedule:
    """Ramsey sequence: pulse 1, a hold with snapshots, analysis pulse spec.

    The second pulse is never applied to the evolving state; analysis code
    applies (pulse2_theta, phase) to snapshot copies, one phase per fringe
    point.
    """

    hold: float
    observation_times: tuple
    analysis_phases: tuple = (0.0, np.pi / 2, np.pi, 3 * np.pi / 2)
    pulse1_theta: float = np.pi / 2
    pulse1_phase: float = 0.0
    pulse2_theta: float = np.pi / 2

    def __post_init__(self):
        if self.hold < 0:
            raise ConfigError("sequence.hold", "must be non-negative")
        times = tuple(float(t) for t in np.atleast_1d(self.observation_times))
        if any(t < 0 for t in times):
            raise ConfigError("sequence.observation_times", "negative time")
        if any(b < a for a, b in zip(times, times[1:])):
            raise ConfigError("sequence.observation_times", "must be sorted")
        if times and times[-1] > self.hold + 1e-15:
            raise ConfigError(
                "sequence.observation_times", "cannot exceed the hold duration"
            )
        object.__setattr__(self, "observation_times", times)
        phases = tuple(float(p) for p in np.atleast_1d(self.analysis_phases))
        if len(phases) < 1:
            raise ConfigError("sequence.analysis_phases", "need at least one phase")
        object.__setattr__(self, "analysis_phases", phases)


@dataclass
class TrajectoryEnsemble:
    """Stochastic Wigner fields: shape (n_traj, 2, *grid.shape), complex."""

    fields: np.ndarray
    grid: Grid
    time: float
    master_seed: int
    seeds: np.ndarray  # per-trajectory 64-bit identifiers, (master_seed, i)-derived
    flags: np.ndarray  # True where a trajectory went non-finite and was zeroed
    noise_epoch: int = 1  # next evolution-noise epoch (0 was initial sampling)

    @property
    def n_traj(self) -> int:
        return self.fields.shape[0]

    @property
    def n_active(self) -> int:
        return int(self.n_traj - self.flags.sum())

    def active_fields(self) -> np.ndarray:
        return self.fields[~self.flags]

    def copy(self) -> "TrajectoryEnsemble":
        return replace(self, fields=self.fields.copy(), flags=self.flags.copy())


def sample_initial(
    spec: ThermalEnsembleSpec,
    grid: Grid,
    n_traj: int,
    master_seed: int,
    mode: str = "grand-canonical",
) -> TrajectoryEnsemble:
    """Draw the initial Wigner ensemble around a thermal-ensemble spec.

    Component 1 holds the condensate amplitude plus thermal-mode noise;
    component 2 starts in vacuum.  Every grid mode of both components gets
    half a quantum of white noise, so thermal modes end up at n_k + 1/2 and
    everything else at 1/2.
    """
    if n_traj < 2:
        raise ConfigError("sampling.n_traj", "need at least 2 trajectories")
    if mode not in INIT_MODES:
        raise ConfigError("sampling.init_mode", f"unknown mode {mode!r}")
    if spec.condensate.shape != grid.shape:
        raise ConfigError("grid", "thermal spec was built on a different grid")
    dv = grid.cell_volume
    shape = grid.shape
    n_c = spec.n_condensate
    orbital = np.zeros(shape, dtype=complex)
    if n_c > 0:
        orbital = spec.condensate / np.sqrt(n_c)
    modes = spec.thermal_modes
    occupations = spec.thermal_occupations
    has_thermal = modes is not None and occupations is not None and len(occupations)
    if spec.n_thermal > 0 and not has_thermal:
        raise ConfigError(
            "sampling",
            "thermal cloud present but no mode basis attached (basis_size=0?)",
        )

    fields = np.empty((n_traj, 2) + shape, dtype=complex)
    seeds = np.empty(n_traj, dtype=np.uint64)
    noise_scale = 0.5 / np.sqrt(dv)
    for i in range(n_traj):
        ss = np.random.SeedSequence((master_seed, i, 0))
        seeds[i] = ss.generate_state(1, np.uint64)[0]
        rng = np.random.default_rng(ss)
        # fixed draw order: white noise, condensate amplitude, thermal modes
        white = rng.standard_normal((2, 2) + shape)
        psi1 = (white[0, 0] + 1j * white[0, 1]) * noise_scale
        psi2 = (white[1, 0] + 1j * white[1, 1]) * noise_scale
        if n_c > 0:
            if mode == "grand-canonical":
                amp = np.sqrt(rng.poisson(n_c))
            else:
                amp = np.sqrt(n_c)
            psi1 = psi1 + amp * orbital
        if has_thermal:
            draws = rng.standard_normal((2, len(occupations)))
            beta = (draws[0] + 1j * draws[1]) * np.sqrt(occupations / 2.0)
            psi1 = psi1 + np.tensordot(beta, modes, axes=(0, 0))
        fields[i, 0] = psi1
        fields[i, 1] = psi2
    return TrajectoryEnsemble(
        fields=fields,
        grid=grid,
        time=0.0,
        master_seed=int(master_seed),
        seeds=seeds,
        flags=np.zeros(n_traj, dtype=bool),
    )


def wigner_number(ensemble: TrajectoryEnsemble) -> np.ndarray:
    """Per-trajectory total Wigner atom number across both components."""
    dv = ensemble.grid.cell_volume
    flat = ensemble.fields.reshape(ensemble.n_traj, -1)
    return np.sum(np.abs(flat) ** 2, axis=1) * dv


def apply_pulse(
    ensemble: TrajectoryEnsemble, theta: float, phase: float = 0.0
) -> TrajectoryEnsemble:
    """Instantaneous Rabi rotation; same SU(2) matrix as the two-mode
    beam splitter: psi1 -> c psi1 - e^{+i phase} s psi2,
    psi2 -> e^{-i phase} s psi1 + c psi2, with c=cos(theta/2), s=sin(theta/2).
    """
    c = np.cos(theta / 2.0)
    s = np.sin(theta / 2.0)
    e = np.exp(1j * phase)
    f1 = ensemble.fields[:, 0]
    f2 = ensemble.fields[:, 1]
    out = np.empty_like(ensemble.fields)
    out[:, 0] = c * f1 - e * s * f2
    out[:, 1] = np.conj(e) * s * f1 + c * f2
    return replace(ensemble, fields=out, flags=ensemble.flags.copy())


def default_timestep(
    ensemble: TrajectoryEnsemble, params: PhysicalParams, potential=None
) -> float:
    """Step bound: 0.1 of the fastest phase among potential+mean-field and
    the grid's maximum kinetic frequency."""
    grid = ensemble.grid
    v = trap_potential(grid, params) if potential is None else potential
    g = effective_couplings(params, grid)
    dens = np.abs(ensemble.active_fields()) ** 2
    # corrupt samples are flagged during evolution; keep them out of the bound
    dens = np.where(np.isfinite(dens), dens, 0.0)
    n1 = dens[:, 0].max() if dens.size else 0.0
    n2 = dens[:, 1].max() if dens.size else 0.0
    v_span = np.abs(v).max()
    e_pot = max(
        v_span + g[0, 0] * n1 + g[0, 1] * n2,
        v_span + g[0, 1] * n1 + g[1, 1] * n2,
    )
    candidates = []
    if e_pot > 0:
        candidates.append(0.1 * hbar / e_pot)
    k2max = grid.ksquared().max()
    if k2max > 0:
        candidates.append(0.1 * 2.0 * params.mass / (hbar * k2max))
    if not candidates:
        raise SimulationError("evolve", "no energy scale to set a timestep")
    return min(candidates)


def _chunk_ranges(n_traj: int):
    return [(a, min(a + FFT_CHUNK, n_traj)) for a in range(0, n_traj, FFT_CHUNK)]


def _evolve_chunks(
    fields, flags, chunk_ids, grid, params, v, dt, n_steps, loss_noise,
    master_seed, epoch,
):
    """Advance the given whole chunks in place; returns (fields, flags).

    fields: (m, 2, *shape) covering len(chunk_ids) consecutive global chunks.
    """
    axes = tuple(range(2, 2 + grid.dims))
    k2 = grid.ksquared()
    kin_half = np.exp(-1j * hbar * k2 * dt / (4.0 * params.mass))
    g = effective_couplings(params, grid)
    g11, g12, g22 = g[0, 0], g[0, 1], g[1, 1]
    dv = grid.cell_volume
    gamma1 = params.gamma1
    # loss-rate constants acquire the same frozen-axis integrals as g
    reduction = dimension_reduction(params, grid)
    k22 = params.k22 * reduction["two_body"]
    k12 = params.k12 * reduction["two_body"]
    k111 = params.k111 * reduction["three_body"]
    lossy = any((gamma1[0], gamma1[1], k22, k12, k111))
    shape = grid.shape

    offset = 0
    for cid in chunk_ids:
        take = min(FFT_CHUNK, fields.shape[0] - offset)
        block = fields[offset : offset + take]
        rng = _rng_for(master_seed, cid, epoch) if (lossy and loss_noise) else None
        # non-finite samples are caught explicitly; silence their propagation
        with np.errstate(invalid="ignore", over="ignore"):
            fk = np.fft.fftn(block, axes=axes)
            fk *= kin_half
            block = np.fft.ifftn(fk, axes=axes)
            block, flagged = _advance_block(
                block, take, n_steps, axes, kin_half, v, g11, g12, g22, dv,
                dt, gamma1, k12, k22, k111, lossy, loss_noise, rng, shape,
            )
        if flagged is not None:
            flags[offset : offset + take][flagged] = True
        fields[offset : offset + take] = block
        offset += take
    return fields, flags


def _advance_block(
    block, take, n_steps, axes, kin_half, v, g11, g12, g22, dv, dt, gamma1,
    k12, k22, k111, lossy, loss_noise, rng, shape,
):
    for step in range(n_steps):
        n1 = np.abs(block[:, 0]) ** 2
        n2 = np.abs(block[:, 1]) ** 2
        arg1 = (-dt / hbar) * (v + g11 * n1 + g12 * n2 - g11 / dv)
        arg2 = (-dt / hbar) * (v + g12 * n1 + g22 * n2 - g22 / dv)
        if lossy:
            loss1 = gamma1[0] + k12 * n2 + k111 * n1**2
            loss2 = gamma1[1] + k12 * n1 + k22 * n2
            block[:, 0] *= np.exp(1j * arg1 - 0.5 * dt * loss1)
            block[:, 1] *= np.exp(1j * arg2 - 0.5 * dt * loss2)
            if loss_noise:
                w = rng.standard_normal((2, 2, take) + shape)
                block[:, 0] += (w[0, 0] + 1j * w[0, 1]) * np.sqrt(
                    dt * loss1 / (4.0 * dv)
                )
                block[:, 1] += (w[1, 0] + 1j * w[1, 1]) * np.sqrt(
                    dt * loss2 / (4.0 * dv)
                )
        else:
            block[:, 0] *= np.exp(1j * arg1)
            block[:, 1] *= np.exp(1j * arg2)
        fk = np.fft.fftn(block, axes=axes)
        fk *= kin_half
        if step != n_steps - 1:
            # merge this step's closing half-kick with the next one's
            fk *= kin_half
        block = np.fft.ifftn(fk, axes=axes)
    bad = ~np.isfinite(block.reshape(take, -1)).all(axis=1)
    if bad.any():
        block[bad] = 0.0
        return block, bad
    return block, None


def _slab_worker(args):
    (fields, flags, chunk_ids, grid, params, v, dt, n_steps, loss_noise,
     master_seed, epoch) = args
    return _evolve_chunks(
        fields, flags, chunk_ids, grid, params, v, dt, n_steps, loss_noise,
        master_seed, epoch,
    )


def worker_count(workers=None) -> int:
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get("BECSTEER_WORKERS", "1")))


def evolve(
    ensemble: TrajectoryEnsemble,
    params: PhysicalParams,
    duration: float,
    dt: float = None,
    potential=None,
    loss_noise: bool = False,
    workers: int = None,
) -> TrajectoryEnsemble:
    """Propagate every trajectory through the hold Hamiltonian for
    ``duration`` seconds.  Pure function: returns a new ensemble at
    time + duration with the noise epoch advanced."""
    if duration < 0:
        raise ConfigError("sequence.hold", "negative duration")
    if duration == 0:
        return ensemble.copy()
    grid = ensemble.grid
    v = trap_potential(grid, params) if potential is None else np.asarray(potential)
    if v.shape != grid.shape:
        raise ConfigError("potential", "shape does not match the grid")
    if dt is None:
        dt = default_timestep(ensemble, params, v)
    n_steps = max(1, int(np.ceil(duration / dt - 1e-12)))
    dt_actual = duration / n_steps

    n_workers = worker_count(workers)
    chunks = _chunk_ranges(ensemble.n_traj)
    fields = ensemble.fields.copy()
    flags = ensemble.flags.copy()
    epoch = ensemble.noise_epoch
    if n_workers == 1 or len(chunks) == 1:
        fields, flags = _evolve_chunks(
            fields, flags, list(range(len(chunks))), grid, params, v,
            dt_actual, n_steps, loss_noise, ensemble.master_seed, epoch,
        )
    else:
        per = int(np.ceil(len(chunks) / n_workers))
        jobs = []
        for w in range(0, len(chunks), per):
            ids = list(range(w, min(w + per, len(chunks))))
            lo = chunks[ids[0]][0]
            hi = chunks[ids[-1]][1]
            jobs.append((
                fields[lo:hi], flags[lo:hi], ids, grid, params, v,
                dt_actual, n_steps, loss_noise, ensemble.master_seed, epoch,
            ))
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_slab_worker, jobs))
        fields = np.concatenate([r[0] for r in results], axis=0)
        flags = np.concatenate([r[1] for r in results], axis=0)

    flagged = int(flags.sum())
    if flagged > MAX_FLAGGED_FRACTION * ensemble.n_traj:
        raise SimulationError(
            "evolve",
            f"{flagged}/{ensemble.n_traj} trajectories went non-finite",
        )
    return replace(
        ensemble,
        fields=fields,
        flags=flags,
        time=ensemble.time + duration,
        noise_epoch=epoch + 1,
    )


def step_doubling_residual(
    ensemble: TrajectoryEnsemble,
    params: PhysicalParams,
    duration: float,
    dt: float = None,
    potential=None,
    sample: int = 8,
) -> float:
    """Convergence probe: evolve a few trajectories at dt and dt/2 (pure
    damping, no loss noise, so the paths are comparable) and return the
    maximum relative change of the mean density."""
    take = min(sample, ensemble.n_traj)
    probe = replace(
        ensemble,
        fields=ensemble.fields[:take].copy(),
        flags=ensemble.flags[:take].copy(),
    )
    if dt is None:
        dt = default_timestep(probe, params, potential)
    coarse = evolve(probe, params, duration, dt=dt, potential=potential)
    fine = evolve(probe, params, duration, dt=dt / 2.0, potential=potential)
    d_coarse = np.mean(np.abs(coarse.active_fields()) ** 2, axis=0)
    d_fine = np.mean(np.abs(fine.active_fields()) ** 2, axis=0)
    return float(np.max(np.abs(d_coarse - d_fine)) / max(d_fine.max(), 1e-300))


def run_ramsey(
    spec: ThermalEnsembleSpec,
    schedule: SequenceSchedule,
    grid: Grid,
    params: PhysicalParams,
    n_traj: int,
    master_seed: int,
    mode: str = "grand-canonical",
    dt: float = None,
    loss_noise: bool = False,
    workers: int = None,
):
    """First pulse, then the hold with snapshot copies at the observation
    times.  The analysis pulse is left to the observables layer, which
    rotates snapshot copies once per fringe phase.  Returns a list of
    (time, TrajectoryEnsemble)."""
    ensemble = sample_initial(spec, grid, n_traj, master_seed, mode)
    ensemble = apply_pulse(ensemble, schedule.pulse1_theta, schedule.pulse1_phase)
    snapshots = []
    previous = 0.0
    for t_obs in schedule.observation_times:
        ensemble = evolve(
            ensemble, params, t_obs - previous, dt=dt,
            loss_noise=loss_noise, workers=workers,
        )
        snapshots.append((t_obs, ensemble.copy()))
        previous = t_obs
    return snapshots
