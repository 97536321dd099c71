"""Grid construction, spectral operators, and oscillator-basis tests."""

import numpy as np
import pytest
from scipy.constants import hbar

from becsteer import grids as gr
from becsteer.errors import ConfigError


def test_spacing_frozen_example():
    g = gr.make_grid(1, 256, 100e-6)
    assert g.spacing == (100e-6 / 256,)
    assert abs(g.spacing[0] - 0.390625e-6) < 1e-20


def test_mode_count_3d():
    g = gr.make_grid(3, (64, 64, 256), (1e-4, 1e-4, 4e-4))
    assert g.mode_count == 2**20


def test_power_of_two_enforced():
    with pytest.raises(ConfigError):
        gr.make_grid(1, 100, 1e-4)
    with pytest.raises(ConfigError):
        gr.make_grid(2, (64, 48), (1e-4, 1e-4))


def test_bad_dims_and_extent():
    with pytest.raises(ConfigError):
        gr.make_grid(4, (8,) * 4, (1e-4,) * 4)
    with pytest.raises(ConfigError):
        gr.make_grid(1, 64, -1e-4)


def test_momentum_grid_is_dft_conjugate():
    g = gr.make_grid(1, 128, 50e-6)
    k = g.k_axis(0)
    assert abs(k[1] - 2 * np.pi / 50e-6) < 1e-6
    assert abs(k.min() + np.pi / g.spacing[0]) < 1e-6
    assert k[0] == 0.0


def test_spectral_round_trip():
    rng = np.random.default_rng(3)
    g = gr.make_grid(2, (32, 16), (2e-5, 1e-5))
    f = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
    back = gr.from_momentum(gr.to_momentum(f, g), g)
    assert np.max(np.abs(back - f)) < 1e-12


def test_trap_minimum_and_symmetry():
    params = gr.rb87_defaults()
    g = gr.make_grid(1, 256, 100e-6)
    v = gr.trap_potential(g, params)
    centre = 128  # x = 0 lives at index n/2
    assert v[centre] == 0.0
    assert v.min() == 0.0
    # V(x) = V(-x) wherever both points exist (the leftmost point is unpaired)
    assert np.array_equal(v[centre + 1 :], v[1:centre][::-1])


def test_kinetic_phase_is_pure_phase():
    params = gr.rb87_defaults()
    g = gr.make_grid(2, (16, 32), (2e-5, 4e-5))
    ph = gr.kinetic_phase(g, params, 1e-5)
    assert np.max(np.abs(np.abs(ph) - 1.0)) < 1e-14
    assert ph.shape == g.shape


def test_free_gaussian_dispersion():
    # rms width of a free Gaussian packet: s(t)^2 = s0^2 (1 + (hbar t / 2 m s0^2)^2)
    params = gr.rb87_defaults()
    g = gr.make_grid(1, 1024, 80e-6)
    x = g.axis(0)
    s0 = 2e-6
    psi = np.exp(-(x**2) / (4 * s0**2)).astype(complex)
    t = 10e-3
    psi_t = gr.from_momentum(gr.to_momentum(psi, g) * gr.kinetic_phase(g, params, t), g)
    dens = np.abs(psi_t) ** 2
    s_num = np.sqrt(np.sum(x**2 * dens) / np.sum(dens))
    s_ref = s0 * np.sqrt(1.0 + (hbar * t / (2 * params.mass * s0**2)) ** 2)
    assert abs(s_num / s_ref - 1.0) < 1e-6


def test_mode_guard_warns():
    import warnings

    g = gr.make_grid(1, 1024, 1e-4)
    with pytest.warns(UserWarning):
        assert not gr.check_mode_guard(g, 100)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        assert gr.check_mode_guard(g, 1e6)
    assert len(rec) == 0


def test_coupling_matrix_formula():
    params = gr.rb87_defaults()
    g11 = 4 * np.pi * hbar**2 * params.a11 / params.mass
    mat = params.g_matrix_3d
    assert abs(mat[0, 0] - g11) < 1e-60
    assert mat[0, 1] == mat[1, 0]


def test_dimension_reduction_factors():
    params = gr.rb87_defaults()
    g1 = gr.make_grid(1, 64, 1e-4)
    fac = gr.dimension_reduction(params, g1)
    ly = params.oscillator_length(1)
    lz = params.oscillator_length(2)
    ref2 = 1.0 / (ly * np.sqrt(2 * np.pi)) / (lz * np.sqrt(2 * np.pi))
    ref3 = 1.0 / (ly**2 * np.pi * np.sqrt(3)) / (lz**2 * np.pi * np.sqrt(3))
    assert abs(fac["two_body"] / ref2 - 1) < 1e-12
    assert abs(fac["three_body"] / ref3 - 1) < 1e-12
    g3 = gr.make_grid(3, (8, 8, 8), (1e-5,) * 3)
    fac3 = gr.dimension_reduction(params, g3)
    assert fac3["two_body"] == 1.0 and fac3["three_body"] == 1.0


def test_params_validation():
    with pytest.raises(ConfigError):
        gr.PhysicalParams(trap_omegas=(100.0, 0.0, 50.0))
    with pytest.raises(ConfigError):
        gr.PhysicalParams(trap_omegas=(100.0, 100.0, 50.0), k22=-1.0)


def test_harmonic_modes_orthonormal_and_energies():
    params = gr.rb87_defaults()
    g = gr.make_grid(1, 256, 40e-6)
    modes, energies = gr.harmonic_modes(g, params, 12)
    dv = g.cell_volume
    gram = (modes.reshape(12, -1) @ modes.reshape(12, -1).T) * dv
    assert np.max(np.abs(gram - np.eye(12))) < 1e-10
    w = params.trap_omegas[0]
    np.testing.assert_allclose(energies, hbar * w * (np.arange(12) + 0.5), rtol=1e-12)
    # ground state is the oscillator Gaussian
    l = params.oscillator_length(0)
    x = g.axis(0)
    ref = np.pi**-0.25 / np.sqrt(l) * np.exp(-0.5 * (x / l) ** 2)
    overlap = abs(np.sum(modes[0] * ref) * dv)
    assert overlap > 1.0 - 1e-10


def test_harmonic_modes_2d_energy_order():
    params = gr.rb87_defaults(trap_freqs_hz=(100.0, 250.0, 400.0))
    g = gr.make_grid(2, (64, 64), (3e-5, 3e-5))
    modes, energies = gr.harmonic_modes(g, params, 10)
    assert np.all(np.diff(energies) > -1e-40)
    dv = g.cell_volume
    gram = (modes.reshape(10, -1) @ modes.reshape(10, -1).T) * dv
    assert np.max(np.abs(gram - np.eye(10))) < 1e-8
