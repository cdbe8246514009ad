from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import ClassVar, Optional, Sequence, Union

import numpy as np

from .exceptions import UnsupportedScheme
from .sphere_modes import ModeLattice

__all__ = [
    "Equation",
    "SchemeId",
    "WaveState",
    "SchrodingerState",
    "MaxwellState",
    "EquationState",
    "zero_state",
    "Propagator2x2",
    "check_scheme",
    "wave_propagator",
    "maxwell_propagator",
    "wave_step",
    "schrodinger_step",
    "maxwell_step",
    "step",
]

# below this phase sin(wt)/w and (1 - cos wt)/w**2 switch to their series
_SERIES_PHASE = 1e-4


class Equation(Enum):
    WAVE = "wave"
    SCHRODINGER = "schrodinger"
    MAXWELL = "maxwell"


class SchemeId(Enum):
    FORWARD_EM = "fem"
    BACKWARD_EM = "bem"
    EXP_EULER = "exp"
    ADAPTED_EXP_EULER = "aexp"


def _batch_zeros(lattice_size: int, batch: tuple, dtype=np.float64) -> np.ndarray:
    return np.zeros(tuple(batch) + (lattice_size,), dtype=dtype)


@dataclass
class WaveState:
    """displacement u1 and velocity u2 coefficients, last axis over mode ranks"""

    u1: np.ndarray
    u2: np.ndarray
    equation: ClassVar[Equation] = Equation.WAVE

    @classmethod
    def zeros(cls, lattice: ModeLattice, batch: tuple = ()) -> "WaveState":
        return cls(
            u1=_batch_zeros(lattice.size, batch), u2=_batch_zeros(lattice.size, batch)
        )

    @property
    def n_modes(self) -> int:
        return self.u1.shape[-1]

    def copy(self) -> "WaveState":
        return WaveState(u1=np.array(self.u1, copy=True), u2=np.array(self.u2, copy=True))


@dataclass
class SchrodingerState:
    u: np.ndarray
    equation: ClassVar[Equation] = Equation.SCHRODINGER

    @classmethod
    def zeros(cls, lattice: ModeLattice, batch: tuple = ()) -> "SchrodingerState":
        return cls(u=_batch_zeros(lattice.size, batch, dtype=np.complex128))

    @property
    def n_modes(self) -> int:
        return self.u.shape[-1]

    def copy(self) -> "SchrodingerState":
        return SchrodingerState(u=np.array(self.u, copy=True))


@dataclass
class MaxwellState:
    """
    TE-mode coefficients: e (divergence-free tangential E) and h (radial H) over the
    ranks with ell >= 1, plus the monopole channels e0 and h0.
    """

    e: np.ndarray
    h: np.ndarray
    e0: np.ndarray = field(default_factory=lambda: np.zeros(()))
    h0: np.ndarray = field(default_factory=lambda: np.zeros(()))
    equation: ClassVar[Equation] = Equation.MAXWELL

    @classmethod
    def zeros(cls, lattice: ModeLattice, batch: tuple = ()) -> "MaxwellState":
        return cls(
            e=_batch_zeros(lattice.size - 1, batch),
            h=_batch_zeros(lattice.size - 1, batch),
            e0=np.zeros(tuple(batch)),
            h0=np.zeros(tuple(batch)),
        )

    @property
    def n_modes(self) -> int:
        return self.e.shape[-1] + 1

    def copy(self) -> "MaxwellState":
        return MaxwellState(
            e=np.array(self.e, copy=True),
            h=np.array(self.h, copy=True),
            e0=np.array(self.e0, copy=True),
            h0=np.array(self.h0, copy=True),
        )


EquationState = Union[WaveState, SchrodingerState, MaxwellState]

_STATE_TYPES = {
    Equation.WAVE: WaveState,
    Equation.SCHRODINGER: SchrodingerState,
    Equation.MAXWELL: MaxwellState,
}


def zero_state(
    equation: Equation, lattice: ModeLattice, batch: tuple = ()
) -> EquationState:
    return _STATE_TYPES[equation].zeros(lattice, batch)


@dataclass(frozen=True)
class Propagator2x2:
    """Per-mode 2x2 matrix [[r11, r12], [r21, r22]]; entries are scalars or arrays over modes."""

    r11: Union[float, np.ndarray]
    r12: Union[float, np.ndarray]
    r21: Union[float, np.ndarray]
    r22: Union[float, np.ndarray]

    def apply(self, x1: np.ndarray, x2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.r11 * x1 + self.r12 * x2, self.r21 * x1 + self.r22 * x2

    def determinant(self) -> Union[float, np.ndarray]:
        return self.r11 * self.r22 - self.r12 * self.r21

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.r11, self.r12], [self.r21, self.r22]], dtype=np.float64)


def _entries(*values: np.ndarray) -> tuple:
    if all(np.ndim(v) == 0 for v in values):
        return tuple(float(v) for v in values)
    return tuple(np.broadcast_arrays(*values))


def _rotation_factors(
    lam: np.ndarray, tau: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    cos(w tau), sin(w tau), sin(w tau) / w and (1 - cos(w tau)) / w**2 for w = sqrt(lam),
    with the analytic limits tau and tau**2 / 2 where w tau is tiny.
    """
    lam = np.asarray(lam, dtype=np.float64)
    omega = np.sqrt(lam)
    phase = omega * tau
    small = phase < _SERIES_PHASE
    cos = np.cos(phase)
    sin = np.sin(phase)
    with np.errstate(divide="ignore", invalid="ignore"):
        sin_over_omega = np.where(small, tau * (1.0 - phase**2 / 6.0), sin / omega)
        one_minus_cos_over_lam = np.where(
            small, 0.5 * tau**2 * (1.0 - phase**2 / 12.0), (1.0 - cos) / lam
        )
    return cos, sin, sin_over_omega, one_minus_cos_over_lam


def check_scheme(equation: Equation, scheme: SchemeId) -> None:
    """
    Raises:
    - sphere_trace.exceptions.UnsupportedScheme: for the adapted scheme outside the wave equation
    """
    if scheme is SchemeId.ADAPTED_EXP_EULER and equation is not Equation.WAVE:
        raise UnsupportedScheme(scheme=scheme.value, equation=equation.value)


def wave_propagator(
    lam: Union[float, np.ndarray], tau: float, scheme: SchemeId
) -> Propagator2x2:
    """
    Homogeneous one-step matrix acting on (u1, u2) of a mode with eigenvalue lam.

    The adapted scheme shares the exponential Euler matrix.
    """
    lam = np.asarray(lam, dtype=np.float64)
    one = np.ones_like(lam)
    if scheme is SchemeId.FORWARD_EM:
        return Propagator2x2(*_entries(one, tau * one, -tau * lam, one))
    if scheme is SchemeId.BACKWARD_EM:
        scale = 1.0 / (1.0 + tau**2 * lam)
        return Propagator2x2(*_entries(scale, tau * scale, -tau * lam * scale, scale))

    cos, sin, sin_over_omega, _ = _rotation_factors(lam, tau)
    return Propagator2x2(
        *_entries(cos, sin_over_omega, -np.sqrt(lam) * sin, cos)
    )


def maxwell_propagator(
    lam: Union[float, np.ndarray], tau: float, scheme: SchemeId
) -> Propagator2x2:
    """Homogeneous one-step matrix for the rotation generator [[0, -w], [w, 0]], w = sqrt(lam)."""
    check_scheme(Equation.MAXWELL, scheme)
    lam = np.asarray(lam, dtype=np.float64)
    omega = np.sqrt(lam)
    one = np.ones_like(lam)
    if scheme is SchemeId.FORWARD_EM:
        return Propagator2x2(*_entries(one, -tau * omega, tau * omega, one))
    if scheme is SchemeId.BACKWARD_EM:
        scale = 1.0 / (1.0 + tau**2 * lam)
        return Propagator2x2(
            *_entries(scale, -tau * omega * scale, tau * omega * scale, scale)
        )

    cos, sin, _, _ = _rotation_factors(lam, tau)
    return Propagator2x2(*_entries(cos, -sin, sin, cos))


def _lattice_eigenvalues(n_modes: int) -> np.ndarray:
    return ModeLattice.for_size(n_modes).eigenvalues


@lru_cache(maxsize=64)
def _cached_wave_propagator(n_modes: int, tau: float, scheme: SchemeId) -> Propagator2x2:
    return wave_propagator(_lattice_eigenvalues(n_modes), tau, scheme)


@lru_cache(maxsize=64)
def _cached_maxwell_propagator(
    n_modes: int, tau: float, scheme: SchemeId
) -> Propagator2x2:
    return maxwell_propagator(_lattice_eigenvalues(n_modes)[1:], tau, scheme)


@lru_cache(maxsize=64)
def _cached_drift_factors(n_modes: int, tau: float) -> tuple[np.ndarray, np.ndarray]:
    _, _, sin_over_omega, one_minus_cos_over_lam = _rotation_factors(
        _lattice_eigenvalues(n_modes), tau
    )
    return one_minus_cos_over_lam, sin_over_omega


def wave_step(
    state: WaveState,
    scheme: SchemeId,
    tau: float,
    noise: np.ndarray,
    mean_rate: Optional[np.ndarray] = None,
) -> WaveState:
    """
    Advances every mode of a (possibly batched) wave state by one step.

    @params:
        - state: coefficients, last axis over all (kappa + 1)**2 mode ranks
        - scheme: time integrator
        - tau: time step
        - noise: increments Delta L, same shape as state.u1
        - mean_rate: per-mode drift m, only used by the adapted scheme

    @returns:
        - WaveState: the new state (the input is left untouched)
    """
    n_modes = state.n_modes
    propagator = _cached_wave_propagator(n_modes, tau, scheme)

    if scheme is SchemeId.FORWARD_EM:
        u1, u2 = propagator.apply(state.u1, state.u2)
        return WaveState(u1=u1, u2=u2 + noise)

    if scheme is SchemeId.ADAPTED_EXP_EULER:
        drift = np.zeros(n_modes) if mean_rate is None else np.asarray(mean_rate)
        u1, u2 = propagator.apply(state.u1, state.u2 + (noise - drift * tau))
        one_minus_cos_over_lam, sin_over_omega = _cached_drift_factors(n_modes, tau)
        return WaveState(
            u1=u1 + one_minus_cos_over_lam * drift, u2=u2 + sin_over_omega * drift
        )

    u1, u2 = propagator.apply(state.u1, state.u2 + noise)
    return WaveState(u1=u1, u2=u2)


def schrodinger_step(
    state: SchrodingerState, scheme: SchemeId, tau: float, noise: np.ndarray
) -> SchrodingerState:
    check_scheme(Equation.SCHRODINGER, scheme)
    multiplier = _schrodinger_multiplier(state.n_modes, tau, scheme)
    if scheme is SchemeId.FORWARD_EM:
        return SchrodingerState(u=multiplier * state.u - 1j * noise)
    return SchrodingerState(u=multiplier * (state.u - 1j * noise))


@lru_cache(maxsize=64)
def _schrodinger_multiplier(n_modes: int, tau: float, scheme: SchemeId) -> np.ndarray:
    # exp(-i tau Laplacian) acts on Y_{ell,m} as exp(i tau lambda_ell)
    lam = _lattice_eigenvalues(n_modes)
    if scheme is SchemeId.FORWARD_EM:
        return 1.0 + 1j * tau * lam
    if scheme is SchemeId.BACKWARD_EM:
        return 1.0 / (1.0 - 1j * tau * lam)
    return np.exp(1j * tau * lam)


def maxwell_step(
    state: MaxwellState,
    scheme: SchemeId,
    tau: float,
    noise_e: np.ndarray,
    noise_h: np.ndarray,
    monopole: bool = True,
) -> MaxwellState:
    """
    Advances a TE-mode state by one step. The noise arrays cover all mode ranks; rank 0
    drives the monopole channels, which are frozen when monopole is False.
    """
    check_scheme(Equation.MAXWELL, scheme)
    noise_e = np.asarray(noise_e)
    noise_h = np.asarray(noise_h)
    propagator = _cached_maxwell_propagator(state.n_modes, tau, scheme)

    if scheme is SchemeId.FORWARD_EM:
        e, h = propagator.apply(state.e, state.h)
        e, h = e + noise_e[..., 1:], h + noise_h[..., 1:]
    else:
        e, h = propagator.apply(state.e + noise_e[..., 1:], state.h + noise_h[..., 1:])

    if monopole:
        e0, h0 = state.e0 + noise_e[..., 0], state.h0 + noise_h[..., 0]
    else:
        e0, h0 = state.e0, state.h0
    return MaxwellState(e=e, h=h, e0=e0, h0=h0)


def step(
    state: EquationState,
    scheme: SchemeId,
    tau: float,
    noise: Sequence[np.ndarray],
    mean_rate: Optional[np.ndarray] = None,
    monopole: bool = True,
) -> EquationState:
    """
    One step of whichever equation the state belongs to. noise holds one increment
    array per independent noise component (two for Maxwell: E then H).
    """
    if isinstance(state, WaveState):
        return wave_step(state, scheme, tau, noise[0], mean_rate)
    if isinstance(state, SchrodingerState):
        return schrodinger_step(state, scheme, tau, noise[0])
    return maxwell_step(state, scheme, tau, noise[0], noise[1], monopole)
