import math

import numpy as np
import pytest

from sphere_trace.exceptions import ConfigError, DegenerateGrid
from sphere_trace.field_synth import (
    GridSpec,
    InitialKind,
    InitialSpec,
    evaluate_on_grid,
    expected_initial_quantity,
    initial_moments,
    normalized_legendre,
    quadrature_weights,
    sample_initial,
    write_snapshot,
)
from sphere_trace.integrators import Equation, MaxwellState, SchrodingerState, WaveState
from sphere_trace.quantities import QuantityId, evaluate
from sphere_trace.sphere_modes import ModeLattice


@pytest.fixture
def decaying_wave():
    return InitialSpec(kind=InitialKind.PAPER_WAVE)


def test_expected_initial_wave_energy(decaying_wave):
    assert expected_initial_quantity(decaying_wave, ModeLattice(0), QuantityId.WAVE_ENERGY) == pytest.approx(0.5)
    assert expected_initial_quantity(decaying_wave, ModeLattice(1), QuantityId.WAVE_ENERGY) == pytest.approx(5.0)


def test_expected_initial_wave_energy_closed_form(decaying_wave):
    kappa, gamma = 12, decaying_wave.gamma
    expected = 0.5 + 0.5 * math.fsum(
        (2 * ell + 1) * (ell ** (2 - 2 * gamma) + ell * (ell + 1) * ell ** (-2 * gamma))
        for ell in range(1, kappa + 1)
    )
    assert expected_initial_quantity(decaying_wave, ModeLattice(kappa), QuantityId.WAVE_ENERGY) == pytest.approx(
        expected, rel=1e-13
    )


def test_initial_moments_zero_kind():
    moments = initial_moments(InitialSpec(kind=InitialKind.ZERO), ModeLattice(3), QuantityId.SCHRODINGER_MASS)
    assert moments.mean is None
    assert np.all(moments.q == 0.0)


def test_sample_initial_shapes():
    lattice = ModeLattice(3)
    wave = sample_initial(InitialSpec(kind=InitialKind.PAPER_WAVE), lattice, Equation.WAVE, 1, [0, 1])
    assert isinstance(wave, WaveState) and wave.u1.shape == (2, lattice.size)

    schrodinger = sample_initial(
        InitialSpec(kind=InitialKind.PAPER_SCHRODINGER), lattice, Equation.SCHRODINGER, 1, [0, 1, 2]
    )
    assert isinstance(schrodinger, SchrodingerState)
    assert schrodinger.u.shape == (3, lattice.size) and schrodinger.u.dtype == np.complex128

    maxwell = sample_initial(InitialSpec(kind=InitialKind.PAPER_MAXWELL), lattice, Equation.MAXWELL, 1, [4])
    assert isinstance(maxwell, MaxwellState)
    assert maxwell.e.shape == (1, lattice.size - 1) and maxwell.e0.shape == (1,)


def test_sample_initial_is_keyed_by_sample_index(decaying_wave):
    lattice = ModeLattice(4)
    batch = sample_initial(decaying_wave, lattice, Equation.WAVE, 9, [0, 1, 2, 3])
    single = sample_initial(decaying_wave, lattice, Equation.WAVE, 9, [2])
    np.testing.assert_array_equal(batch.u1[2], single.u1[0])
    np.testing.assert_array_equal(batch.u2[2], single.u2[0])
    other_seed = sample_initial(decaying_wave, lattice, Equation.WAVE, 10, [2])
    assert not np.array_equal(single.u1, other_seed.u1)


def test_sample_initial_mean_energy(decaying_wave):
    lattice = ModeLattice(4)
    state = sample_initial(decaying_wave, lattice, Equation.WAVE, 5, range(4000))
    energies = evaluate(QuantityId.WAVE_ENERGY, state)
    stderr = np.std(energies, ddof=1) / math.sqrt(len(energies))
    expected = expected_initial_quantity(decaying_wave, lattice, QuantityId.WAVE_ENERGY)
    assert abs(np.mean(energies) - expected) < 5 * stderr


def test_sample_initial_zero_and_custom():
    lattice = ModeLattice(2)
    zero = sample_initial(InitialSpec(kind=InitialKind.ZERO), lattice, Equation.SCHRODINGER, 0, [0, 1])
    assert np.all(zero.u == 0)

    state = WaveState(u1=np.arange(lattice.size, dtype=float), u2=np.ones(lattice.size))
    custom = sample_initial(InitialSpec(kind=InitialKind.CUSTOM, state=state), lattice, Equation.WAVE, 0, [0, 1, 2])
    assert custom.u1.shape == (3, lattice.size)
    np.testing.assert_array_equal(custom.u1[1], state.u1)


def test_initial_kind_must_match_equation():
    with pytest.raises(ConfigError) as e:
        sample_initial(InitialSpec(kind=InitialKind.PAPER_WAVE), ModeLattice(1), Equation.MAXWELL, 0, [0])
    assert e.value.key == "initial.kind"
    with pytest.raises(ConfigError):
        InitialSpec(kind=InitialKind.CUSTOM)


def test_small_gamma_warns(caplog):
    with caplog.at_level("WARNING", logger="sphere_trace.field_synth"):
        InitialSpec(kind=InitialKind.PAPER_WAVE, gamma=0.5)
    assert "initial.gamma" in caplog.text


@pytest.mark.parametrize("n_theta,n_phi", [(1, 8), (2, 3), (0, 0)])
def test_degenerate_grid(n_theta, n_phi):
    with pytest.raises(DegenerateGrid):
        GridSpec(n_theta, n_phi)


def test_grid_nodes():
    grid = GridSpec(5, 8)
    assert grid.thetas[0] == 0.0 and grid.thetas[-1] == pytest.approx(math.pi)
    assert grid.phis[2] == pytest.approx(math.pi / 2)


def test_normalized_legendre_low_degrees():
    x = np.array([-0.3, 0.2, 0.9])
    u = np.sqrt(1 - x**2)
    table = normalized_legendre(2, x)
    np.testing.assert_allclose(table[0, 0], 1.0)
    np.testing.assert_allclose(table[1, 0], math.sqrt(3) * x)
    np.testing.assert_allclose(table[1, 1], math.sqrt(3) * u)
    np.testing.assert_allclose(table[2, 0], math.sqrt(5) * 0.5 * (3 * x**2 - 1))
    np.testing.assert_allclose(table[2, 1], math.sqrt(15) * x * u)
    np.testing.assert_allclose(table[2, 2], math.sqrt(15) / 2 * u**2)


def test_synthesis_of_single_modes():
    grid = GridSpec(7, 8)
    lattice = ModeLattice(2)
    e00 = np.zeros(lattice.size)
    e00[0] = 1.0
    np.testing.assert_allclose(evaluate_on_grid(e00, grid), 1 / math.sqrt(4 * math.pi))

    e10 = np.zeros(lattice.size)
    e10[2] = 1.0
    field = evaluate_on_grid(e10, grid)
    assert field[0, 0] == pytest.approx(math.sqrt(3 / (4 * math.pi)))
    assert field[-1, 3] == pytest.approx(-math.sqrt(3 / (4 * math.pi)))


def test_complex_coefficients_give_complex_grid():
    coeffs = np.zeros(4, dtype=complex)
    coeffs[0] = 1 + 2j
    field = evaluate_on_grid(coeffs, GridSpec(3, 4))
    assert np.iscomplexobj(field)
    np.testing.assert_allclose(field.imag, 2 / math.sqrt(4 * math.pi))


def test_quadrature_integrates_the_sphere():
    weights = quadrature_weights(GridSpec(9, 12))
    assert weights.shape == (9, 12)
    assert weights.sum() == pytest.approx(4 * math.pi)


def test_real_harmonics_are_orthonormal():
    kappa = 4
    lattice = ModeLattice(kappa)
    grid = GridSpec(17, 16)
    weights = quadrature_weights(grid)
    fields = [evaluate_on_grid(np.eye(lattice.size)[rank], grid) for rank in range(lattice.size)]
    gram = np.array([[np.sum(weights * a * b) for b in fields] for a in fields])
    np.testing.assert_allclose(gram, np.eye(lattice.size), atol=1e-10)


def test_parseval_on_grid():
    lattice = ModeLattice(6)
    grid = GridSpec(21, 20)
    coeffs = np.random.default_rng(2).standard_normal(lattice.size)
    field = evaluate_on_grid(coeffs, grid)
    assert np.sum(quadrature_weights(grid) * field**2) == pytest.approx(np.sum(coeffs**2), rel=1e-4)


def test_write_snapshot(tmp_path):
    grid = GridSpec(3, 4)
    field = np.arange(12, dtype=float).reshape(3, 4) / 3
    path = write_snapshot(tmp_path / "snap.txt", field, grid, kappa=2, time=0.5)
    lines = path.read_text().splitlines()
    assert lines[0] == "# 3 4 2 0.5"
    assert len(lines) == 4
    np.testing.assert_array_equal(np.loadtxt(path), field)
