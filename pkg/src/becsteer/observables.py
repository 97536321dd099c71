"""Ensemble estimators: populations, condensate-mode extraction from the
one-body density matrix, two-mode cross moments, fringe fits, and the
steering certificate.

All estimators consume a trajectory ensemble at a fixed time, use only the
unflagged trajectories, and apply the symmetric-ordering correction (half a
quantum per mode) wherever a number-like quantity is formed.  Statistical
errors are trajectory-wise jackknife estimates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import AmbiguousCondensateError, ConfigError, SimulationError
from .grids import harmonic_modes
from .twomode import DEFAULT_SIGNIFICANCE, SteeringReport, steering_depth

HERMITICITY_TOL = 1e-10
# second/first eigenvalue ratio above which the condensate mode is ambiguous
DEGENERACY_RATIO = 0.95
# a "competing" eigenvalue below one atom is sampling noise, not a condensate
DEGENERACY_FLOOR = 1.0


@dataclass(frozen=True)
class Populations:
    """Component atom numbers with jackknife standard errors."""

    n1: float
    n2: float
    n1_stderr: float
    n2_stderr: float

    @property
    def total(self) -> float:
        return self.n1 + self.n2


@dataclass(frozen=True)
class ObdmSummary:
    """One-body density matrix of a component in a reduced mode basis."""

    component: int
    basis: str
    basis_size: int
    matrix: np.ndarray  # (K, K) Hermitian, atoms
    eigenvalues: np.ndarray  # descending, atoms
    leading_eigenvalue: float
    leading_mode: np.ndarray  # grid-shaped complex field, unit norm
    captured_fraction: float
    gap_ratio: float
    degenerate: bool


@dataclass(frozen=True)
class VisibilityPoint:
    """Cross-moment and contrast estimates at one observation time."""

    time: float
    cross_moment: complex  # condensate-mode projected, atoms
    moment_stderr: float
    n_plus: float
    visibility: float
    stderr: float  # of the visibility
    full_field_moment: complex  # raw overlap integral, atoms
    full_field_stderr: float
    n1: float
    n2: float
    n1_stderr: float
    n2_stderr: float
    condensate_populations: tuple  # atoms in each component's leading mode


@dataclass(frozen=True)
class FringeFit:
    """Least-squares fit of the analysis fringe P_z(phi) = A cos(phi+delta)."""

    amplitude: float
    amplitude_stderr: float
    phase_offset: float
    mean_offset: float  # fitted constant term; zero for a half-pi pulse
    phases: np.ndarray
    values: np.ndarray


def _active(ensemble):
    fields = ensemble.active_fields()
    if fields.shape[0] < 2:
        raise ConfigError("n_traj", "at least 2 unflagged trajectories required")
    return fields


def _jackknife_mean(samples):
    """Mean of complex samples and jackknife stderr of that mean."""
    n = samples.size
    total = samples.sum()
    mean = total / n
    loo = (total - samples) / (n - 1)
    err = np.sqrt((n - 1) / n * (np.abs(loo - mean) ** 2).sum())
    return mean, float(err)


def populations(ensemble) -> Populations:
    """Ensemble-mean atom number per component, correcting the half quantum
    per mode carried by the sampling noise."""
    fields = _active(ensemble)
    grid = ensemble.grid
    raw = (np.abs(fields) ** 2).reshape(fields.shape[0], 2, -1).sum(axis=2)
    nums = raw * grid.cell_volume - grid.mode_count / 2.0
    n1, e1 = _jackknife_mean(nums[:, 0].astype(complex))
    n2, e2 = _jackknife_mean(nums[:, 1].astype(complex))
    return Populations(float(n1.real), float(n2.real), e1, e2)


def mode_projections(ensemble, modes):
    """Project every trajectory onto the given orthonormal modes.

    Returns complex amplitudes of shape (n_active, 2, len(modes)).
    """
    fields = _active(ensemble)
    flat_f = fields.reshape(fields.shape[0], 2, -1)
    flat_m = modes.reshape(modes.shape[0], -1)
    return flat_f @ np.conj(flat_m.T) * ensemble.grid.cell_volume


def _obdm_from_amplitudes(amps, modes, raw_density, grid, component, basis_size):
    n_traj, k = amps.shape
    g_mat = (amps.conj().T @ amps) / n_traj - 0.5 * np.eye(k)
    dev = np.abs(g_mat - g_mat.conj().T).max()
    if dev > HERMITICITY_TOL * max(1.0, np.abs(g_mat).max()):
        raise SimulationError(
            "obdm", f"density matrix non-Hermitian (deviation {dev:.3e})"
        )
    g_mat = 0.5 * (g_mat + g_mat.conj().T)
    eigvals, eigvecs = np.linalg.eigh(g_mat)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order].real
    eigvecs = eigvecs[:, order]
    leading = float(eigvals[0])
    mode = np.tensordot(eigvecs[:, 0], modes, axes=([0], [0]))
    # gauge: make the mode real-positive at the grid centre (fall back to the
    # largest basis coefficient for modes that vanish there)
    centre = tuple(s // 2 for s in grid.shape)
    anchor = mode[centre]
    if abs(anchor) < 1e-9 * np.abs(mode).max():
        anchor = eigvecs[np.argmax(np.abs(eigvecs[:, 0])), 0]
    mode = mode * (np.conj(anchor) / abs(anchor))

    captured_num = max(((np.abs(amps) ** 2).mean(axis=0) - 0.5).sum(), 0.0)
    captured_den = raw_density - grid.mode_count / 2.0
    captured = min(captured_num / captured_den, 1.0) if captured_den > 1.0 else 1.0

    gap = float(eigvals[1] / leading) if (k > 1 and leading > 0) else 0.0
    degenerate = bool(
        k > 1 and leading > 0 and eigvals[1] > DEGENERACY_FLOOR
        and gap > DEGENERACY_RATIO
    )
    return ObdmSummary(
        component=component,
        basis=f"lowest-{basis_size} trap eigenmodes",
        basis_size=basis_size,
        matrix=g_mat,
        eigenvalues=eigvals,
        leading_eigenvalue=leading,
        leading_mode=mode,
        captured_fraction=float(captured),
        gap_ratio=gap,
        degenerate=degenerate,
    )


def obdm(ensemble, params, component, basis_size) -> ObdmSummary:
    """Reduced one-body density matrix of one component and its leading
    (condensate) eigenpair.

    The basis is the lowest ``basis_size`` eigenmodes of the bare trap;
    completeness is reported as the captured fraction of the physical
    density.  A near-degenerate leading eigenvalue is flagged, not raised.
    """
    if component not in (1, 2):
        raise ConfigError("component", "must be 1 or 2")
    fields = _active(ensemble)
    if fields.shape[0] < basis_size:
        warnings.warn(
            f"{fields.shape[0]} trajectories for a {basis_size}-mode density "
            "matrix; estimates will be poorly conditioned",
            stacklevel=2,
        )
    modes, _ = harmonic_modes(ensemble.grid, params, basis_size)
    amps = mode_projections(ensemble, modes)[:, component - 1]
    raw = (np.abs(fields[:, component - 1]) ** 2).reshape(
        fields.shape[0], -1
    ).sum(axis=1).mean() * ensemble.grid.cell_volume
    return _obdm_from_amplitudes(
        amps, modes, raw, ensemble.grid, component, basis_size
    )


def condensate_cross_moment(ensemble, params, basis_size):
    """Two-mode moment between the condensate modes of the two components.

    Each trajectory is projected onto the leading density-matrix eigenmode of
    its component; the moment is mean(conj(alpha_1) alpha_2) with no ordering
    correction (the modes are distinct).  Returns
    (moment, stderr, (summary1, summary2), per_mode_populations).
    """
    fields = _active(ensemble)
    grid = ensemble.grid
    modes, _ = harmonic_modes(grid, params, basis_size)
    all_amps = mode_projections(ensemble, modes)
    raw = (np.abs(fields) ** 2).reshape(fields.shape[0], 2, -1).sum(
        axis=2
    ).mean(axis=0) * grid.cell_volume
    summaries = []
    mode_amps = []
    for component in (1, 2):
        summary = _obdm_from_amplitudes(
            all_amps[:, component - 1], modes, raw[component - 1], grid,
            component, basis_size,
        )
        if summary.degenerate:
            raise AmbiguousCondensateError(summary.gap_ratio)
        summaries.append(summary)
        flat = fields[:, component - 1].reshape(fields.shape[0], -1)
        mode_flat = summary.leading_mode.reshape(-1)
        mode_amps.append(flat @ np.conj(mode_flat) * grid.cell_volume)
    moment, stderr = _jackknife_mean(np.conj(mode_amps[0]) * mode_amps[1])
    per_mode = tuple(
        float((np.abs(a) ** 2).mean() - 0.5) for a in mode_amps
    )
    return complex(moment), stderr, tuple(summaries), per_mode


def full_field_cross_moment(ensemble):
    """Raw overlap integral mean of conj(psi1) psi2 over the whole grid.

    No ordering correction applies: the components are independent modes, so
    the sampling-noise contribution averages to zero.
    """
    fields = _active(ensemble)
    flat = fields.reshape(fields.shape[0], 2, -1)
    overlaps = (np.conj(flat[:, 0]) * flat[:, 1]).sum(axis=1)
    overlaps = overlaps * ensemble.grid.cell_volume
    moment, stderr = _jackknife_mean(overlaps)
    return complex(moment), stderr


def visibility_point(ensemble, params, basis_size) -> VisibilityPoint:
    """Assemble the full set of single-time estimates used in the results
    table: populations, both cross-moment estimators, and the visibility
    2|<a+ b>| / (n1+n2) built from the condensate-projected moment."""
    pops = populations(ensemble)
    moment, moment_err, _, per_mode = condensate_cross_moment(
        ensemble, params, basis_size
    )
    raw_moment, raw_err = full_field_cross_moment(ensemble)
    n_plus = pops.total
    if n_plus <= 0:
        raise SimulationError("analysis", "non-positive total population")
    visibility = 2.0 * abs(moment) / n_plus
    return VisibilityPoint(
        time=ensemble.time,
        cross_moment=moment,
        moment_stderr=moment_err,
        n_plus=n_plus,
        visibility=visibility,
        stderr=2.0 * moment_err / n_plus,
        full_field_moment=raw_moment,
        full_field_stderr=raw_err,
        n1=pops.n1,
        n2=pops.n2,
        n1_stderr=pops.n1_stderr,
        n2_stderr=pops.n2_stderr,
        condensate_populations=per_mode,
    )


def fringe_scan(ensemble, phases, theta=np.pi / 2) -> FringeFit:
    """Analysis-pulse fringe: for each phase apply the closing pulse to a
    virtual copy and record P_z = (n2 - n1) / (n1 + n2) of the ensemble
    means, then fit A cos(phi + delta) by linear least squares on
    (cos phi, sin phi) regressors plus a constant.

    The rotation only mixes three per-trajectory reductions (the two raw
    populations and the overlap integral), so no field copies are made.
    """
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    if phases.size < 4:
        raise ConfigError("analysis_phases", "need at least 4 phase points")
    fields = _active(ensemble)
    grid = ensemble.grid
    dv = grid.cell_volume
    flat = fields.reshape(fields.shape[0], 2, -1)
    p11 = (np.abs(flat[:, 0]) ** 2).sum(axis=1) * dv
    p22 = (np.abs(flat[:, 1]) ** 2).sum(axis=1) * dv
    cross = (np.conj(flat[:, 0]) * flat[:, 1]).sum(axis=1) * dv
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    rot = np.exp(1j * phases)[:, None] * cross[None, :]
    # per-trajectory numbers after the closing pulse, ordering-corrected
    half = grid.mode_count / 2.0
    n1 = c**2 * p11[None, :] + s**2 * p22[None, :] - 2 * c * s * rot.real - half
    n2 = s**2 * p11[None, :] + c**2 * p22[None, :] + 2 * c * s * rot.real - half

    design = np.column_stack(
        [np.cos(phases), np.sin(phases), np.ones_like(phases)]
    )
    rank = np.linalg.matrix_rank(design)
    values = (n2.mean(axis=1) - n1.mean(axis=1)) / (
        n1.mean(axis=1) + n2.mean(axis=1)
    )
    if rank < 2:
        return FringeFit(0.0, 0.0, 0.0, float(values.mean()), phases, values)
    pinv = np.linalg.pinv(design)
    coef = pinv @ values
    amplitude = float(np.hypot(coef[0], coef[1]))
    offset = float(np.arctan2(-coef[1], coef[0]))

    # jackknife over trajectories: leave-one-out fringes, refit, spread of A
    n_traj = flat.shape[0]
    s1, s2 = n1.sum(axis=1), n2.sum(axis=1)
    loo_diff = (s2[:, None] - n2) - (s1[:, None] - n1)
    loo_total = (s1[:, None] - n1) + (s2[:, None] - n2)
    loo_values = loo_diff / loo_total  # (n_phi, n_traj)
    loo_coef = pinv @ loo_values
    loo_amp = np.hypot(loo_coef[0], loo_coef[1])
    amp_err = float(
        np.sqrt((n_traj - 1) / n_traj * ((loo_amp - loo_amp.mean()) ** 2).sum())
    )
    return FringeFit(amplitude, amp_err, offset, float(coef[2]), phases, values)


def steering_certificate(
    point: VisibilityPoint, significance: float = DEFAULT_SIGNIFICANCE
) -> SteeringReport:
    """Depth-of-steering certificate from a measured visibility point.

    The bound 2|<a+ b>| lower-bounds the number of atoms participating in
    steerable correlations in both directions; the verdict requires the
    moment to clear ``significance`` standard errors.
    """
    report = steering_depth(point.cross_moment, point.moment_stderr, significance)
    return replace(report, visibility=point.visibility)
