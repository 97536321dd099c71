"""End-to-end pipeline: thermal initial state, trajectory sequence, analysis,
and artifact emission (manifest, results table, plot data, SVG figures).

Every number written to a plot-data file also appears in (or is a direct
projection of) the results table; plotting never computes anything new.
Floats are serialized with ``repr`` so re-running an identical configuration
reproduces the output files byte-for-byte.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import __version__, observables, thermal, twa
from .config import RunConfig
from .errors import ConfigError
from .grids import dimension_reduction, effective_couplings

RESULT_COLUMNS = (
    "time_s", "n1", "n2", "n1_stderr", "n2_stderr",
    "re_ab", "im_ab", "abs_ab", "stderr",
    "visibility", "visibility_stderr",
    "full_re_ab", "full_im_ab", "full_abs_ab", "full_stderr",
    "fringe_amplitude", "fringe_amplitude_stderr", "fringe_phase",
    "cond_pop_1", "cond_pop_2", "depth_bound", "verdict", "n_active",
)


@dataclass(frozen=True)
class RunResult:
    out_dir: str
    rows: list  # one dict per observation time, keys RESULT_COLUMNS
    manifest: dict


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _prepare_state(cfg: RunConfig):
    """Resolve the temperature and build the initial-cloud description."""
    params, grid = cfg.params, cfg.grid
    if cfg.t_over_tc is not None or cfg.temperature_k:
        if min(params.trap_omegas) <= 0:
            raise ConfigError(
                "physics.trap_hz",
                "finite temperature requires all three trap frequencies",
            )
    tc = (
        thermal.critical_temperature(cfg.n_total, params)
        if min(params.trap_omegas) > 0
        else None
    )
    if cfg.t_over_tc is not None:
        temperature = cfg.t_over_tc * tc
    else:
        temperature = cfg.temperature_k or 0.0
    if temperature == 0.0:
        spec = thermal.coherent_spec(grid, params, cfg.n_total)
    else:
        spec = thermal.shf_self_consistent(
            grid, params, cfg.n_total, temperature, basis_size=cfg.basis_size
        )
    return spec, tc, temperature


def _analyze(snapshots, cfg: RunConfig):
    rows = []
    fringe_rows = []
    for t_obs, ens in snapshots:
        point = observables.visibility_point(ens, cfg.params, cfg.analysis_basis)
        fit = observables.fringe_scan(
            ens, cfg.schedule.analysis_phases, theta=cfg.schedule.pulse2_theta
        )
        cert = observables.steering_certificate(point)
        rows.append({
            "time_s": t_obs,
            "n1": point.n1,
            "n2": point.n2,
            "n1_stderr": point.n1_stderr,
            "n2_stderr": point.n2_stderr,
            "re_ab": point.cross_moment.real,
            "im_ab": point.cross_moment.imag,
            "abs_ab": abs(point.cross_moment),
            "stderr": point.moment_stderr,
            "visibility": point.visibility,
            "visibility_stderr": point.stderr,
            "full_re_ab": point.full_field_moment.real,
            "full_im_ab": point.full_field_moment.imag,
            "full_abs_ab": abs(point.full_field_moment),
            "full_stderr": point.full_field_stderr,
            "fringe_amplitude": fit.amplitude,
            "fringe_amplitude_stderr": fit.amplitude_stderr,
            "fringe_phase": fit.phase_offset,
            "cond_pop_1": point.condensate_populations[0],
            "cond_pop_2": point.condensate_populations[1],
            "depth_bound": cert.steering_depth_bound,
            "verdict": cert.verdict.value,
            "n_active": ens.n_active,
        })
        for phase, value in zip(fit.phases, fit.values):
            fringe_rows.append({
                "time_s": t_obs, "phase_rad": float(phase), "p_z": float(value),
            })
    return rows, fringe_rows


def _plot_artifacts(out_dir, rows, fringe_rows):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    times = [r["time_s"] for r in rows]

    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.errorbar(times, [r["visibility"] for r in rows],
                yerr=[r["visibility_stderr"] for r in rows],
                marker="o", label="condensate-mode")
    ax.plot(times, [r["fringe_amplitude"] for r in rows],
            marker="s", ls="--", label="fringe fit")
    ax.set_xlabel("hold time (s)")
    ax.set_ylabel("visibility")
    ax.set_ylim(bottom=0)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "plots", "visibility.svg"))
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(times, [r["n1"] for r in rows], marker="o", label="n1")
    ax.plot(times, [r["n2"] for r in rows], marker="s", label="n2")
    ax.plot(times, [r["abs_ab"] for r in rows], marker="^", label="|<a+b>|")
    ax.set_xlabel("hold time (s)")
    ax.set_ylabel("atoms")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "plots", "populations.svg"))
    plt.close(fig)

    final_t = times[-1]
    last = [fr for fr in fringe_rows if fr["time_s"] == final_t]
    final_row = rows[-1]
    fig, ax = plt.subplots(figsize=(5, 3.4))
    phis = np.array([fr["phase_rad"] for fr in last])
    ax.plot(phis, [fr["p_z"] for fr in last], "o", label="ensemble")
    dense = np.linspace(0, 2 * np.pi, 200)
    ax.plot(dense, final_row["fringe_amplitude"]
            * np.cos(dense + final_row["fringe_phase"]), "-", label="fit")
    ax.set_xlabel("analysis phase (rad)")
    ax.set_ylabel("P_z")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "plots", "fringe.svg"))
    plt.close(fig)


def run(cfg: RunConfig) -> RunResult:
    """Execute the configured sequence and write all artifacts."""
    timings = {}
    clock = time.perf_counter

    t0 = clock()
    spec, tc, temperature = _prepare_state(cfg)
    timings["thermal"] = clock() - t0

    t0 = clock()
    snapshots = twa.run_ramsey(
        spec, cfg.schedule, cfg.grid, cfg.params, cfg.n_traj,
        cfg.master_seed, mode=cfg.mode, dt=cfg.dt,
        loss_noise=cfg.loss_noise, workers=cfg.workers,
    )
    timings["sequence"] = clock() - t0

    t0 = clock()
    rows, fringe_rows = _analyze(snapshots, cfg)
    # accuracy diagnostic for the manifest: step-halving change over a short
    # re-integration of a few trajectories
    residual = twa.step_doubling_residual(
        snapshots[0][1], cfg.params, duration=min(2e-3, cfg.schedule.hold),
        dt=cfg.dt,
    )
    timings["analysis"] = clock() - t0

    t0 = clock()
    out_dir = cfg.out_dir
    os.makedirs(os.path.join(out_dir, "plots"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "plotdata"), exist_ok=True)

    _write_csv(os.path.join(out_dir, "results.csv"), RESULT_COLUMNS, rows)
    _write_csv(
        os.path.join(out_dir, "fringes.csv"),
        ("time_s", "phase_rad", "p_z"), fringe_rows,
    )
    # plot-data files are projections of the results table
    _write_csv(
        os.path.join(out_dir, "plotdata", "visibility_vs_time.csv"),
        ("time_s", "visibility", "visibility_stderr", "fringe_amplitude"),
        rows,
    )
    _write_csv(
        os.path.join(out_dir, "plotdata", "populations_vs_time.csv"),
        ("time_s", "n1", "n2", "abs_ab"), rows,
    )
    _write_csv(
        os.path.join(out_dir, "plotdata", "fringe_final.csv"),
        ("time_s", "phase_rad", "p_z"),
        [fr for fr in fringe_rows if fr["time_s"] == rows[-1]["time_s"]],
    )

    if cfg.snapshots == "fields":
        snap_dir = os.path.join(out_dir, "snapshots")
        os.makedirs(snap_dir, exist_ok=True)
        for idx, (t_obs, ens) in enumerate(snapshots):
            np.savez_compressed(
                os.path.join(snap_dir, f"fields_{idx:03d}.npz"),
                time_s=t_obs, fields=ens.fields, flags=ens.flags,
                seeds=ens.seeds,
            )

    reduction = dimension_reduction(cfg.params, cfg.grid)
    g_eff = effective_couplings(cfg.params, cfg.grid)
    dt_used = cfg.dt if cfg.dt is not None else twa.default_timestep(
        snapshots[0][1], cfg.params
    )
    atoms_per_mode = cfg.n_total / cfg.grid.mode_count
    manifest = {
        "package_version": __version__,
        "config": cfg.source,
        "derived": {
            "critical_temperature_k": tc,
            "temperature_k": temperature,
            "condensate_atoms": spec.n_condensate,
            "thermal_atoms": spec.n_thermal,
            "dt_s": dt_used,
            "grid_points": list(cfg.grid.points),
            "mode_count": cfg.grid.mode_count,
            "dimension_reduction": reduction,
            "effective_couplings_si": [[g_eff[0, 0], g_eff[0, 1]],
                                       [g_eff[1, 0], g_eff[1, 1]]],
            "twa_guard": {
                "atoms_per_mode": atoms_per_mode,
                "ok": bool(atoms_per_mode >= 1.0),
            },
            "step_doubling_residual": residual,
        },
        "assumptions": {
            "scattering_lengths": "literature clock-pair values unless "
                                  "overridden in [physics]",
            "loss_rates": "literature values when physics.losses = true; "
                          "reduced-dimension rates share the frozen-axis "
                          "integrals of the couplings",
            "loss_damping": "deterministic damping uses the raw Wigner "
                            "density (no ordering correction)",
        },
        "determinism": {
            "master_seed": cfg.master_seed,
            "trajectory_chunk": twa.FFT_CHUNK,
            "workers": twa.worker_count(cfg.workers),
        },
        "flagged_trajectories": {
            f"{t_obs:.6f}": int(ens.flags.sum()) for t_obs, ens in snapshots
        },
        "timings_s": timings,
    }

    _plot_artifacts(out_dir, rows, fringe_rows)
    timings["artifacts"] = clock() - t0
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)

    return RunResult(out_dir=out_dir, rows=rows, manifest=manifest)
