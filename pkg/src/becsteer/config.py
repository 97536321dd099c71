"""Run configuration: TOML files with unit-suffixed keys, parsed strictly.

Every key carries its unit in the name (``extent_um``, ``hold_ms``,
``temperature_nk``) so a value can never be interpreted in the wrong unit.
Unknown keys are rejected — a misspelled optional key must fail loudly, not
silently fall back to a default.  All violations raise ``ConfigError`` with
the dotted path of the offending field.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import physical_constants

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .grids import Grid, PhysicalParams, make_grid, rb87_defaults
from .twa import INIT_MODES, SequenceSchedule

BOHR_RADIUS = physical_constants["Bohr radius"][0]
ATOMIC_MASS = physical_constants["atomic mass constant"][0]

SNAPSHOT_POLICIES = ("none", "fields")

_BLOCKS = {
    "grid": {"dims", "points", "extent_um"},
    "physics": {
        "trap_hz", "mass_amu", "a11_a0", "a12_a0", "a22_a0", "losses",
        "gamma1_per_s", "k22_m3_per_s", "k12_m3_per_s", "k111_m6_per_s",
    },
    "thermal": {"n_total", "t_over_tc", "temperature_nk", "basis_size"},
    "sequence": {
        "hold_ms", "observation_times_ms", "analysis_phases",
        "pulse1_theta", "pulse1_phase", "pulse2_theta",
    },
    "sampling": {
        "n_traj", "master_seed", "mode", "dt_us", "loss_noise", "workers",
    },
    "output": {"directory", "snapshots", "analysis_basis"},
}

_REQUIRED_BLOCKS = ("grid", "thermal", "sequence", "sampling", "output")


@dataclass(frozen=True)
class RunConfig:
    """Fully validated run description, ready for the pipeline."""

    source: dict  # parsed TOML, echoed into the manifest
    grid: Grid
    params: PhysicalParams
    n_total: float
    t_over_tc: float | None
    temperature_k: float | None
    basis_size: int
    analysis_basis: int
    schedule: SequenceSchedule
    n_traj: int
    master_seed: int
    mode: str
    dt: float | None
    loss_noise: bool
    workers: int | None
    out_dir: str
    snapshots: str


def _block(data, name):
    if name not in data:
        raise ConfigError(name, "required block is missing")
    block = data[name]
    if not isinstance(block, dict):
        raise ConfigError(name, "must be a table")
    unknown = set(block) - _BLOCKS[name]
    if unknown:
        raise ConfigError(
            f"{name}.{sorted(unknown)[0]}", "unknown key (check spelling/unit suffix)"
        )
    return block


def _get(block, path, key, kinds, required=False, default=None):
    if key not in block:
        if required:
            raise ConfigError(f"{path}.{key}", "required key is missing")
        return default
    value = block[key]
    if kinds is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}.{key}", "must be true or false")
        return value
    if kinds is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}.{key}", "must be an integer")
        return value
    if kinds is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}.{key}", "must be a number")
        if not math.isfinite(float(value)):
            raise ConfigError(f"{path}.{key}", "must be finite")
        return float(value)
    if kinds is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}.{key}", "must be a string")
        return value
    if kinds is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}.{key}", "must be a list")
        return value
    raise AssertionError(f"unhandled kind {kinds}")


def _float_list(block, path, key, length=None, default=None):
    raw = _get(block, path, key, list, default=None)
    if raw is None:
        return default
    out = []
    for i, v in enumerate(raw):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}.{key}[{i}]", "must be a number")
        out.append(float(v))
    if length is not None and len(out) != length:
        raise ConfigError(f"{path}.{key}", f"expected {length} entries")
    return tuple(out)


def _positive(value, path):
    if not (value > 0):
        raise ConfigError(path, "must be positive")
    return value


def parse(data: dict) -> RunConfig:
    """Validate a parsed TOML document and build the run description."""
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a table")
    for name in data:
        if name not in _BLOCKS:
            raise ConfigError(name, "unknown block")
    for name in _REQUIRED_BLOCKS:
        if name not in data:
            raise ConfigError(name, "required block is missing")

    # --- grid
    g = _block(data, "grid")
    dims = _get(g, "grid", "dims", int, required=True)
    if dims not in (1, 2, 3):
        raise ConfigError("grid.dims", "must be 1, 2 or 3")
    points = g.get("points")
    if isinstance(points, list):
        points = tuple(_get({"p": v}, "grid", "p", int) for v in points)
        if len(points) != dims:
            raise ConfigError("grid.points", f"expected {dims} entries")
    else:
        points = _get(g, "grid", "points", int, required=True)
    extent = g.get("extent_um")
    if isinstance(extent, list):
        extent = tuple(
            _positive(v, "grid.extent_um") * 1e-6
            for v in _float_list(g, "grid", "extent_um")
        )
        if len(extent) != dims:
            raise ConfigError("grid.extent_um", f"expected {dims} entries")
    else:
        extent = _positive(_get(g, "grid", "extent_um", float, required=True),
                           "grid.extent_um") * 1e-6
    grid = make_grid(dims, points, extent)

    # --- physics
    p = data.get("physics", {})
    if p:
        p = _block(data, "physics")
    trap_hz = _float_list(p, "physics", "trap_hz", length=3,
                          default=(97.0, 97.6, 11.96))
    for f in trap_hz:
        if f < 0:
            raise ConfigError("physics.trap_hz", "frequencies must be >= 0")
    losses = _get(p, "physics", "losses", bool, default=False)
    params = rb87_defaults(trap_freqs_hz=trap_hz, with_losses=losses)
    overrides = {}
    mass_amu = _get(p, "physics", "mass_amu", float)
    if mass_amu is not None:
        overrides["mass"] = _positive(mass_amu, "physics.mass_amu") * ATOMIC_MASS
    for key, attr in (("a11_a0", "a11"), ("a12_a0", "a12"), ("a22_a0", "a22")):
        val = _get(p, "physics", key, float)
        if val is not None:
            overrides[attr] = val * BOHR_RADIUS
    gamma1 = _float_list(p, "physics", "gamma1_per_s", length=2)
    if gamma1 is not None:
        if min(gamma1) < 0:
            raise ConfigError("physics.gamma1_per_s", "rates must be >= 0")
        overrides["gamma1"] = gamma1
    for key, attr in (
        ("k22_m3_per_s", "k22"), ("k12_m3_per_s", "k12"),
        ("k111_m6_per_s", "k111"),
    ):
        val = _get(p, "physics", key, float)
        if val is not None:
            if val < 0:
                raise ConfigError(f"physics.{key}", "must be >= 0")
            overrides[attr] = val
    if overrides:
        params = dataclasses.replace(params, **overrides)

    # --- thermal
    t = _block(data, "thermal")
    n_total = _positive(_get(t, "thermal", "n_total", float, required=True),
                        "thermal.n_total")
    t_over_tc = _get(t, "thermal", "t_over_tc", float)
    temperature_nk = _get(t, "thermal", "temperature_nk", float)
    if t_over_tc is not None and temperature_nk is not None:
        raise ConfigError(
            "thermal.t_over_tc", "give either t_over_tc or temperature_nk, not both"
        )
    if t_over_tc is None and temperature_nk is None:
        raise ConfigError("thermal.t_over_tc", "either t_over_tc or temperature_nk required")
    if t_over_tc is not None and t_over_tc < 0:
        raise ConfigError("thermal.t_over_tc", "must be >= 0")
    if temperature_nk is not None and temperature_nk < 0:
        raise ConfigError("thermal.temperature_nk", "must be >= 0")
    temperature_k = None if temperature_nk is None else temperature_nk * 1e-9
    basis_size = _get(t, "thermal", "basis_size", int, default=32)
    if basis_size < 0:
        raise ConfigError("thermal.basis_size", "must be >= 0")
    cold = (t_over_tc or 0.0) == 0.0 and (temperature_k or 0.0) == 0.0
    if not cold and basis_size == 0:
        raise ConfigError(
            "thermal.basis_size", "finite temperature requires a sampling basis"
        )

    # --- sequence
    s = _block(data, "sequence")
    hold = _positive(_get(s, "sequence", "hold_ms", float, required=True),
                     "sequence.hold_ms") * 1e-3
    obs_ms = _float_list(s, "sequence", "observation_times_ms",
                         default=(0.0, hold * 1e3))
    phases_raw = s.get("analysis_phases", 8)
    if isinstance(phases_raw, bool):
        raise ConfigError("sequence.analysis_phases", "must be a count or list")
    if isinstance(phases_raw, int):
        if phases_raw < 4:
            raise ConfigError("sequence.analysis_phases", "need at least 4 phases")
        phases = tuple(np.linspace(0.0, 2 * np.pi, phases_raw, endpoint=False))
    elif isinstance(phases_raw, list):
        phases = _float_list(s, "sequence", "analysis_phases")
        if len(phases) < 4:
            raise ConfigError("sequence.analysis_phases", "need at least 4 phases")
    else:
        raise ConfigError("sequence.analysis_phases", "must be a count or list")
    schedule = SequenceSchedule(
        hold=hold,
        observation_times=tuple(v * 1e-3 for v in obs_ms),
        analysis_phases=phases,
        pulse1_theta=_get(s, "sequence", "pulse1_theta", float, default=np.pi / 2),
        pulse1_phase=_get(s, "sequence", "pulse1_phase", float, default=0.0),
        pulse2_theta=_get(s, "sequence", "pulse2_theta", float, default=np.pi / 2),
    )

    # --- sampling
    sm = _block(data, "sampling")
    n_traj = _get(sm, "sampling", "n_traj", int, required=True)
    if n_traj < 2:
        raise ConfigError("sampling.n_traj", "need at least 2 trajectories")
    master_seed = _get(sm, "sampling", "master_seed", int, required=True)
    if master_seed < 0:
        raise ConfigError("sampling.master_seed", "must be >= 0")
    mode = _get(sm, "sampling", "mode", str, default="grand-canonical")
    if mode not in INIT_MODES:
        raise ConfigError("sampling.mode", f"must be one of {INIT_MODES}")
    dt_us = _get(sm, "sampling", "dt_us", float)
    dt = None if dt_us is None else _positive(dt_us, "sampling.dt_us") * 1e-6
    loss_noise = _get(sm, "sampling", "loss_noise", bool, default=False)
    workers = _get(sm, "sampling", "workers", int)
    if workers is not None and workers < 1:
        raise ConfigError("sampling.workers", "must be >= 1")

    # --- output
    o = _block(data, "output")
    out_dir = _get(o, "output", "directory", str, required=True)
    snapshots = _get(o, "output", "snapshots", str, default="none")
    if snapshots not in SNAPSHOT_POLICIES:
        raise ConfigError("output.snapshots", f"must be one of {SNAPSHOT_POLICIES}")
    analysis_basis = _get(o, "output", "analysis_basis", int, default=basis_size or 32)
    if analysis_basis < 1:
        raise ConfigError("output.analysis_basis", "must be >= 1")
    if analysis_basis > grid.mode_count:
        raise ConfigError(
            "output.analysis_basis", "cannot exceed the number of grid points"
        )

    return RunConfig(
        source=data,
        grid=grid,
        params=params,
        n_total=n_total,
        t_over_tc=t_over_tc,
        temperature_k=temperature_k,
        basis_size=basis_size,
        analysis_basis=analysis_basis,
        schedule=schedule,
        n_traj=n_traj,
        master_seed=master_seed,
        mode=mode,
        dt=dt,
        loss_noise=loss_noise,
        workers=workers,
        out_dir=out_dir,
        snapshots=snapshots,
    )


def load(path) -> RunConfig:
    """Parse and validate a TOML run configuration file."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"invalid TOML: {exc}") from None
    return parse(data)
