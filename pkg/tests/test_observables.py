"""Estimator tests: populations, density-matrix mode extraction, cross
moments, fringe fits, jackknife errors, and the steering certificate."""

import dataclasses

import numpy as np
import pytest

from becsteer import observables as obs
from becsteer import twa
from becsteer.errors import AmbiguousCondensateError, ConfigError
from becsteer.grids import harmonic_modes, make_grid, rb87_defaults
from becsteer.thermal import ThermalEnsembleSpec
from becsteer.twomode import Verdict

AXIAL_FIRST = (11.96, 97.0, 97.6)


@pytest.fixture(scope="module")
def setup():
    params = rb87_defaults(trap_freqs_hz=AXIAL_FIRST)
    params = dataclasses.replace(
        params, gamma1=(0.0, 0.0), k22=0.0, k12=0.0, k111=0.0
    )
    grid = make_grid(1, 128, 100e-6)
    orbital = harmonic_modes(grid, params, 1)[0][0].astype(complex)
    return grid, params, orbital


def coherent_ensemble(grid, orbital, n_atoms, n_traj, seed, mode="coherent"):
    spec = ThermalEnsembleSpec(
        condensate=orbital * np.sqrt(n_atoms),
        thermal_density=np.zeros(grid.shape),
        mu=0.0,
        temperature=0.0,
        n_condensate=float(n_atoms),
        n_thermal=0.0,
    )
    return twa.sample_initial(spec, grid, n_traj, seed, mode=mode)


def manual_ensemble(grid, fields):
    n = fields.shape[0]
    return twa.TrajectoryEnsemble(
        fields=fields,
        grid=grid,
        time=0.0,
        master_seed=0,
        seeds=np.zeros(n, dtype=np.uint64),
        flags=np.zeros(n, dtype=bool),
    )


# ---------------------------------------------------------------------------
# populations


def test_vacuum_populations_vanish(setup):
    grid, params, orbital = setup
    ens = coherent_ensemble(grid, orbital, 0.0, 2000, 7)
    pops = obs.populations(ens)
    assert abs(pops.n1) < 5 * pops.n1_stderr
    assert abs(pops.n2) < 5 * pops.n2_stderr


def test_post_pulse_populations_split(setup):
    grid, params, orbital = setup
    ens = twa.apply_pulse(coherent_ensemble(grid, orbital, 8000.0, 1500, 9), np.pi / 2)
    pops = obs.populations(ens)
    assert abs(pops.n1 - 4000.0) < 5 * pops.n1_stderr
    assert abs(pops.n2 - 4000.0) < 5 * pops.n2_stderr


def test_populations_need_two_trajectories(setup):
    grid, params, orbital = setup
    ens = coherent_ensemble(grid, orbital, 10.0, 2, 3)
    ens.flags[0] = True
    with pytest.raises(ConfigError):
        obs.populations(ens)


# ---------------------------------------------------------------------------
# one-body density matrix


def test_obdm_recovers_coherent_occupation(setup):
    grid, params, orbital = setup
    ens = coherent_ensemble(grid, orbital, 1000.0, 3000, 17)
    summary = obs.obdm(ens, params, 1, 16)
    stderr = 1000.0 / np.sqrt(3000)  # Poissonian-scale bound on the estimate
    assert abs(summary.leading_eigenvalue - 1000.0) < 5 * stderr
    overlap = abs(np.vdot(summary.leading_mode, orbital)) * grid.cell_volume
    assert overlap > 0.999
    assert summary.captured_fraction > 0.999
    assert not summary.degenerate
    # Hermiticity and realness of the spectrum
    assert np.allclose(summary.matrix, summary.matrix.conj().T, atol=1e-10)
    # eigenvalue sum matches the component population when the basis captures
    # essentially all density
    pops = obs.populations(ens)
    assert abs(summary.eigenvalues.sum() - pops.n1) < 5 * pops.n1_stderr
    assert summary.leading_eigenvalue <= pops.n1 + 5 * pops.n1_stderr


def test_obdm_vacuum_spectrum_is_noise(setup):
    grid, params, orbital = setup
    ens = coherent_ensemble(grid, orbital, 0.0, 3000, 18)
    summary = obs.obdm(ens, params, 1, 16)
    assert np.abs(summary.eigenvalues).max() < 0.2
    assert not summary.degenerate


def test_obdm_flags_two_equal_modes(setup):
    grid, params, orbital = setup
    modes, _ = harmonic_modes(grid, params, 2)
    rng = np.random.default_rng(3)
    n_traj = 2000
    fields = np.zeros((n_traj, 2) + grid.shape, dtype=complex)
    w = rng.standard_normal((n_traj, 2, 2, grid.mode_count))
    noise = (w[:, :, 0] + 1j * w[:, :, 1]) * 0.5 / np.sqrt(grid.cell_volume)
    # equal incoherent occupation of two orthogonal modes: alternate the
    # relative sign so the cross coherence cancels pairwise
    sign = np.where(np.arange(n_traj) % 2 == 0, 1.0, -1.0)
    fields[:, 0] = (
        noise[:, 0]
        + np.sqrt(500.0) * modes[0]
        + np.sqrt(500.0) * sign[:, None] * modes[1]
    )
    fields[:, 1] = noise[:, 1]
    ens = manual_ensemble(grid, fields)
    summary = obs.obdm(ens, params, 1, 8)
    assert summary.degenerate
    assert summary.gap_ratio > 0.95
    assert summary.eigenvalues[0] == pytest.approx(summary.eigenvalues[1], rel=0.05)
    with pytest.raises(AmbiguousCondensateError):
        obs.condensate_cross_moment(ens, params, 8)


def test_obdm_warns_when_underdetermined(setup):
    grid, params, orbital = setup
    ens = coherent_ensemble(grid, orbital, 100.0, 8, 5)
    with pytest.warns(UserWarning):
        obs.obdm(ens, params, 1, 16)


def test_obdm_validates_component(setup):
    grid, params, orbital = setup
    ens = coherent_ensemble(grid, orbital, 100.0, 16, 5)
    with pytest.raises(ConfigError):
        obs.obdm(ens, params, 3, 8)


# ---------------------------------------------------------------------------
# cross moments


def test_cross_moment_after_half_pi_pulse(setup):
    grid, params, orbital = setup
    n_atoms = 10000.0
    ens = twa.apply_pulse(
        coherent_ensemble(grid, orbital, n_atoms, 2000, 23, "grand-canonical"),
        np.pi / 2,
    )
    moment, stderr, summaries, per_mode = obs.condensate_cross_moment(
        ens, params, 16
    )
    assert abs(moment - n_atoms / 2) < 5 * stderr
    assert per_mode[0] == pytest.approx(n_atoms / 2, rel=0.02)
    assert per_mode[1] == pytest.approx(n_atoms / 2, rel=0.02)
    raw, raw_err = obs.full_field_cross_moment(ens)
    assert abs(raw - n_atoms / 2) < 5 * raw_err


def test_cross_moment_vanishes_before_pulse(setup):
    grid, params, orbital = setup
    ens = coherent_ensemble(grid, orbital, 10000.0, 1000, 29)
    moment, stderr, _, _ = obs.condensate_cross_moment(ens, params, 8)
    assert abs(moment) < 5 * stderr


def test_jackknife_error_shrinks_as_root_n(setup):
    grid, params, orbital = setup
    sizes = (100, 1000, 10000)
    errs = []
    for n in sizes:
        ens = twa.apply_pulse(
            coherent_ensemble(grid, orbital, 10000.0, n, 31, "grand-canonical"),
            np.pi / 2,
        )
        _, err, _, _ = obs.condensate_cross_moment(ens, params, 8)
        errs.append(err)
    slope = np.polyfit(np.log10(sizes), np.log10(errs), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


def test_jackknife_matches_direct_stderr_for_means(setup):
    grid, params, orbital = setup
    ens = coherent_ensemble(grid, orbital, 500.0, 64, 2)
    moment, stderr = obs.full_field_cross_moment(ens)
    flat = ens.active_fields().reshape(64, 2, -1)
    overlaps = (np.conj(flat[:, 0]) * flat[:, 1]).sum(axis=1) * grid.cell_volume
    direct = np.sqrt(
        (np.abs(overlaps - overlaps.mean()) ** 2).sum() / (64 * 63)
    )
    assert stderr == pytest.approx(direct, rel=1e-10)
    assert moment == pytest.approx(complex(overlaps.mean()), rel=1e-12)


# ---------------------------------------------------------------------------
# fringes and visibility


def test_fringe_full_contrast_after_pulse(setup):
    grid, params, orbital = setup
    ens = twa.apply_pulse(coherent_ensemble(grid, orbital, 9000.0, 1200, 23), np.pi / 2)
    fit = obs.fringe_scan(ens, np.linspace(0, 2 * np.pi, 8, endpoint=False))
    assert abs(fit.amplitude - 1.0) < 5 * max(fit.amplitude_stderr, 1e-4)
    assert abs(fit.phase_offset) < 0.01
    assert abs(fit.mean_offset) < 1e-12


def test_fringe_amplitude_equals_full_field_estimator(setup):
    # the fringe fit and the raw overlap integral measure the same moment;
    # with equally spaced phases the identity is exact
    grid, params, orbital = setup
    ens = twa.apply_pulse(coherent_ensemble(grid, orbital, 5000.0, 300, 37), np.pi / 2)
    ens = twa.evolve(ens, params, 3e-3)
    fit = obs.fringe_scan(ens, np.linspace(0, 2 * np.pi, 8, endpoint=False))
    moment, _ = obs.full_field_cross_moment(ens)
    pops = obs.populations(ens)
    assert fit.amplitude == pytest.approx(2 * abs(moment) / pops.total, rel=1e-10)
    assert fit.phase_offset == pytest.approx(np.angle(moment), abs=1e-10)


def test_fringe_flat_without_first_pulse(setup):
    grid, params, orbital = setup
    ens = coherent_ensemble(grid, orbital, 5000.0, 1000, 41)
    fit = obs.fringe_scan(ens, np.linspace(0, 2 * np.pi, 8, endpoint=False))
    assert fit.amplitude < 5 * fit.amplitude_stderr


def test_fringe_input_validation(setup):
    grid, params, orbital = setup
    ens = coherent_ensemble(grid, orbital, 100.0, 32, 1)
    with pytest.raises(ConfigError):
        obs.fringe_scan(ens, [0.0, 1.0, 2.0])
    degenerate = obs.fringe_scan(ens, [0.3, 0.3, 0.3, 0.3])
    assert degenerate.amplitude == 0.0


def test_visibility_point_fields(setup):
    grid, params, orbital = setup
    ens = twa.apply_pulse(
        coherent_ensemble(grid, orbital, 10000.0, 1500, 23, "grand-canonical"),
        np.pi / 2,
    )
    point = obs.visibility_point(ens, params, 16)
    assert point.visibility == pytest.approx(
        2 * abs(point.cross_moment) / point.n_plus, rel=1e-12
    )
    assert point.stderr == pytest.approx(
        2 * point.moment_stderr / point.n_plus, rel=1e-12
    )
    assert point.n_plus == pytest.approx(point.n1 + point.n2, rel=1e-12)
    assert abs(point.visibility - 1.0) < 5 * max(point.stderr, 1e-4)
    assert point.time == ens.time


# ---------------------------------------------------------------------------
# steering certificate


def synthetic_point(moment, stderr, n_plus):
    return obs.VisibilityPoint(
        time=0.0,
        cross_moment=complex(moment),
        moment_stderr=stderr,
        n_plus=n_plus,
        visibility=2 * abs(moment) / n_plus,
        stderr=2 * stderr / n_plus,
        full_field_moment=complex(moment),
        full_field_stderr=stderr,
        n1=n_plus / 2,
        n2=n_plus / 2,
        n1_stderr=0.0,
        n2_stderr=0.0,
        condensate_populations=(n_plus / 2, n_plus / 2),
    )


def test_certificate_depth_doubles_moment():
    report = obs.steering_certificate(synthetic_point(20000.0, 1.0, 48000.0))
    assert report.steering_depth_bound == 40000.0
    assert report.verdict is Verdict.TWO_WAY_STEERABLE
    assert report.visibility == pytest.approx(2 * 20000 / 48000)


def test_certificate_not_significant_cases():
    zero = obs.steering_certificate(synthetic_point(0.0, 1.0, 100.0))
    assert zero.verdict is Verdict.NOT_SIGNIFICANT
    weak = obs.steering_certificate(synthetic_point(100.0, 50.0, 1000.0))
    assert weak.steering_depth_bound == 200.0
    assert weak.verdict is Verdict.NOT_SIGNIFICANT
