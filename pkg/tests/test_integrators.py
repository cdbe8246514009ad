import math
from dataclasses import fields

import numpy as np
import pytest

from sphere_trace.exceptions import UnsupportedScheme
from sphere_trace.integrators import (
    Equation,
    MaxwellState,
    SchemeId,
    SchrodingerState,
    WaveState,
    check_scheme,
    maxwell_propagator,
    maxwell_step,
    schrodinger_step,
    step,
    wave_propagator,
    wave_step,
    zero_state,
)
from sphere_trace.quantities import QuantityId, evaluate_per_mode
from sphere_trace.sphere_modes import ModeLattice

BASIC_SCHEMES = [SchemeId.FORWARD_EM, SchemeId.BACKWARD_EM, SchemeId.EXP_EULER]


def _expected_multiplier(scheme: SchemeId, gain: float) -> float:
    if scheme is SchemeId.FORWARD_EM:
        return gain
    if scheme is SchemeId.BACKWARD_EM:
        return 1.0 / gain
    return 1.0


@pytest.fixture
def triples():
    rng = np.random.default_rng(7)
    ells = rng.integers(0, 40, size=100)
    return [
        (float(ell * (ell + 1)), float(tau), rng.standard_normal(2))
        for ell, tau in zip(ells, rng.uniform(1e-3, 0.5, size=100))
    ]


@pytest.mark.parametrize("scheme", BASIC_SCHEMES)
def test_wave_energy_multiplier(scheme, triples):
    for lam, tau, (u1, u2) in triples:
        propagator = wave_propagator(lam, tau, scheme)
        v1, v2 = propagator.apply(u1, u2)
        before = 0.5 * (u2**2 + lam * u1**2)
        after = 0.5 * (v2**2 + lam * v1**2)
        expected = _expected_multiplier(scheme, 1.0 + tau**2 * lam)
        assert after == pytest.approx(expected * before, rel=1e-12)


@pytest.mark.parametrize("scheme", BASIC_SCHEMES)
def test_maxwell_energy_multiplier(scheme, triples):
    for lam, tau, (e, h) in triples:
        propagator = maxwell_propagator(lam, tau, scheme)
        e1, h1 = propagator.apply(e, h)
        expected = _expected_multiplier(scheme, 1.0 + tau**2 * lam)
        assert 0.5 * (e1**2 + h1**2) == pytest.approx(expected * 0.5 * (e**2 + h**2), rel=1e-12)


@pytest.mark.parametrize("scheme", BASIC_SCHEMES)
def test_schrodinger_mass_multiplier(scheme):
    rng = np.random.default_rng(3)
    lattice = ModeLattice(9)
    lam = lattice.eigenvalues
    for tau in rng.uniform(1e-3, 0.2, size=100):
        u = rng.standard_normal(lattice.size) + 1j * rng.standard_normal(lattice.size)
        new = schrodinger_step(SchrodingerState(u=u), scheme, float(tau), np.zeros(lattice.size))
        expected = _expected_multiplier(scheme, 1.0 + tau**2 * lam**2)
        np.testing.assert_allclose(np.abs(new.u) ** 2, expected * np.abs(u) ** 2, rtol=1e-12)


@pytest.mark.parametrize("scheme", BASIC_SCHEMES)
def test_batched_wave_step_multiplier(scheme):
    rng = np.random.default_rng(5)
    lattice = ModeLattice(6)
    tau = 0.1
    state = WaveState(
        u1=rng.standard_normal((4, lattice.size)), u2=rng.standard_normal((4, lattice.size))
    )
    new = wave_step(state, scheme, tau, np.zeros((4, lattice.size)))
    expected = _expected_multiplier(scheme, 1.0 + tau**2 * lattice.eigenvalues)
    before = evaluate_per_mode(QuantityId.WAVE_ENERGY, state)
    after = evaluate_per_mode(QuantityId.WAVE_ENERGY, new)
    np.testing.assert_allclose(after, expected * before, rtol=1e-12)


def test_propagator_determinants():
    lam, tau = 6.0, 0.3
    assert wave_propagator(lam, tau, SchemeId.EXP_EULER).determinant() == pytest.approx(1.0)
    assert maxwell_propagator(lam, tau, SchemeId.EXP_EULER).determinant() == pytest.approx(1.0)
    assert wave_propagator(lam, tau, SchemeId.BACKWARD_EM).determinant() == pytest.approx(
        1.0 / (1.0 + tau**2 * lam)
    )
    assert wave_propagator(lam, tau, SchemeId.FORWARD_EM).determinant() == pytest.approx(
        1.0 + tau**2 * lam
    )


def test_exponential_propagator_at_zero_eigenvalue():
    propagator = wave_propagator(0.0, 0.25, SchemeId.EXP_EULER)
    np.testing.assert_allclose(propagator.as_matrix(), [[1.0, 0.25], [0.0, 1.0]])


def test_exponential_propagator_is_rotation():
    lam, tau = 12.0, 0.2
    omega = math.sqrt(lam)
    matrix = wave_propagator(lam, tau, SchemeId.EXP_EULER).as_matrix()
    expected = [
        [math.cos(omega * tau), math.sin(omega * tau) / omega],
        [-omega * math.sin(omega * tau), math.cos(omega * tau)],
    ]
    np.testing.assert_allclose(matrix, expected, rtol=1e-14)


def test_adapted_scheme_only_for_wave():
    check_scheme(Equation.WAVE, SchemeId.ADAPTED_EXP_EULER)
    with pytest.raises(UnsupportedScheme):
        check_scheme(Equation.SCHRODINGER, SchemeId.ADAPTED_EXP_EULER)
    with pytest.raises(UnsupportedScheme):
        maxwell_propagator(2.0, 0.1, SchemeId.ADAPTED_EXP_EULER)
    with pytest.raises(UnsupportedScheme):
        schrodinger_step(
            SchrodingerState.zeros(ModeLattice(1)), SchemeId.ADAPTED_EXP_EULER, 0.1, np.zeros(4)
        )


def test_adapted_without_drift_is_exponential_euler():
    rng = np.random.default_rng(1)
    lattice = ModeLattice(4)
    state = WaveState(u1=rng.standard_normal(lattice.size), u2=rng.standard_normal(lattice.size))
    noise = rng.standard_normal(lattice.size)
    plain = wave_step(state, SchemeId.EXP_EULER, 0.1, noise)
    adapted = wave_step(state, SchemeId.ADAPTED_EXP_EULER, 0.1, noise, np.zeros(lattice.size))
    np.testing.assert_allclose(adapted.u1, plain.u1, rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(adapted.u2, plain.u2, rtol=1e-14, atol=1e-15)


def test_adapted_scheme_solves_constant_forcing_exactly():
    # u'' = -lam u + m from (u1, u2), driven by the mean increment m tau only
    lattice = ModeLattice(3)
    lam = lattice.eigenvalues
    omega = np.sqrt(lam)
    tau = 0.3
    m = np.linspace(0.5, 1.5, lattice.size)
    state = WaveState(u1=np.full(lattice.size, 0.2), u2=np.full(lattice.size, -0.4))

    new = wave_step(state, SchemeId.ADAPTED_EXP_EULER, tau, m * tau, m)

    positive = lam > 0
    cos, sin = np.cos(omega * tau), np.sin(omega * tau)
    u1 = np.empty(lattice.size)
    u2 = np.empty(lattice.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        u1[positive] = (cos * 0.2 + sin / omega * -0.4 + (1 - cos) / lam * m)[positive]
        u2[positive] = (-omega * sin * 0.2 + cos * -0.4 + sin / omega * m)[positive]
    u1[~positive] = 0.2 - 0.4 * tau + 0.5 * tau**2 * m[~positive]
    u2[~positive] = -0.4 + tau * m[~positive]
    np.testing.assert_allclose(new.u1, u1, rtol=1e-12)
    np.testing.assert_allclose(new.u2, u2, rtol=1e-12)


def test_maxwell_monopole_switch():
    lattice = ModeLattice(2)
    state = MaxwellState.zeros(lattice)
    noise = np.ones(lattice.size)
    on = maxwell_step(state, SchemeId.EXP_EULER, 0.1, noise, 2 * noise, monopole=True)
    off = maxwell_step(state, SchemeId.EXP_EULER, 0.1, noise, 2 * noise, monopole=False)
    assert float(on.e0) == 1.0 and float(on.h0) == 2.0
    assert float(off.e0) == 0.0 and float(off.h0) == 0.0
    np.testing.assert_array_equal(on.e, off.e)
    assert on.e.shape == (lattice.size - 1,)


def test_step_dispatch():
    lattice = ModeLattice(2)
    noise = [np.ones(lattice.size), np.ones(lattice.size)]
    for equation in Equation:
        state = zero_state(equation, lattice, (3,))
        new = step(state, SchemeId.BACKWARD_EM, 0.1, noise)
        assert type(new) is type(state)
        assert new.n_modes == lattice.size


def test_step_leaves_input_untouched():
    lattice = ModeLattice(2)
    state = WaveState(u1=np.ones(lattice.size), u2=np.ones(lattice.size))
    snapshot = state.copy()
    wave_step(state, SchemeId.FORWARD_EM, 0.1, np.ones(lattice.size))
    np.testing.assert_array_equal(state.u1, snapshot.u1)
    np.testing.assert_array_equal(state.u2, snapshot.u2)


def _random_state(equation: Equation, lattice: ModeLattice, rng: np.random.Generator):
    state = zero_state(equation, lattice)
    for f in fields(state):
        value = getattr(state, f.name)
        draw = rng.standard_normal(value.shape)
        if np.iscomplexobj(value):
            draw = draw + 1j * rng.standard_normal(value.shape)
        setattr(state, f.name, draw)
    return state


def _combine(alpha: float, x, beta: float, y):
    return type(x)(**{f.name: alpha * getattr(x, f.name) + beta * getattr(y, f.name) for f in fields(x)})


@pytest.mark.parametrize("equation", list(Equation))
@pytest.mark.parametrize("scheme", BASIC_SCHEMES)
def test_step_is_linear(equation, scheme):
    rng = np.random.default_rng(11)
    lattice = ModeLattice(5)
    alpha, beta = 0.7, -1.3
    for _ in range(10):
        x, y = _random_state(equation, lattice, rng), _random_state(equation, lattice, rng)
        n1 = [rng.standard_normal(lattice.size) for _ in range(2)]
        n2 = [rng.standard_normal(lattice.size) for _ in range(2)]
        combined_noise = [alpha * a + beta * b for a, b in zip(n1, n2)]

        left = step(_combine(alpha, x, beta, y), scheme, 0.05, combined_noise)
        right = _combine(alpha, step(x, scheme, 0.05, n1), beta, step(y, scheme, 0.05, n2))
        for f in fields(left):
            np.testing.assert_allclose(getattr(left, f.name), getattr(right, f.name), rtol=1e-12, atol=1e-12)


def test_exponential_propagators_preserve_their_quadratic_form(triples):
    for lam, tau, _ in triples:
        wave = wave_propagator(lam, tau, SchemeId.EXP_EULER).as_matrix()
        weight = np.diag([lam, 1.0])
        np.testing.assert_allclose(wave.T @ weight @ wave, weight, rtol=0, atol=1e-12 * max(lam, 1.0))

        maxwell = maxwell_propagator(lam, tau, SchemeId.EXP_EULER).as_matrix()
        np.testing.assert_allclose(maxwell.T @ maxwell, np.eye(2), rtol=0, atol=1e-12)


def test_exponential_euler_returns_after_full_period():
    lam, n = 2.0, 100
    tau = 2 * math.pi / (math.sqrt(lam) * n)
    propagator = wave_propagator(lam, tau, SchemeId.EXP_EULER)
    u1, u2 = 1.0, 0.0
    for _ in range(n):
        u1, u2 = propagator.apply(u1, u2)
    assert abs(u1 - 1.0) < 1e-10 and abs(u2) < 1e-10


def test_maxwell_quarter_rotation():
    lam = 2.0
    tau = math.pi / (2 * math.sqrt(lam))
    e, h = maxwell_propagator(lam, tau, SchemeId.EXP_EULER).apply(1.0, 0.0)
    assert e == pytest.approx(0.0, abs=1e-15)
    assert h == pytest.approx(1.0, rel=1e-15)
