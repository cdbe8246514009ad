import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from scipy import special, stats

from .exceptions import ConfigError
from .sphere_modes import AngularSpectrum, ModeIndex, ModeLattice

__all__ = [
    "LevyKind",
    "LevyConfig",
    "RngStream",
    "INITIAL_CHANNEL",
    "increment_mean",
    "increment_variance",
    "sample_increment",
    "sample_increments",
    "mean_rates",
    "variance_rates",
    "keyed_uniforms",
    "keyed_normals",
]

SQRT2 = math.sqrt(2.0)

# Philox4x64 emits four 64-bit words per counter value
_PHILOX_LANES = 4
_UNIFORM_SCALE = 2.0**-53

_GAUSS_DRAW = 0
_JUMP_DRAW = 1

# channel of the random initial data; noise channels are 2 * component + part
INITIAL_CHANNEL = 64


class LevyKind(Enum):
    GAUSSIAN_ONLY = "gaussian"
    COMPENSATED_MIX = "compensated"
    NON_COMPENSATED_MIX = "noncompensated"


@dataclass(frozen=True)
class LevyConfig:
    """
    Noise of the form L = sum a_ell L_hat_{ell,m} Y_{ell,m} with independent scalar
    Levy processes per mode.

    - GAUSSIAN_ONLY: L_hat = W
    - COMPENSATED_MIX: L_hat = (W + P - t) / sqrt(2), mean zero
    - NON_COMPENSATED_MIX: L_hat = (W + P) / sqrt(2), mean t / sqrt(2)

    With complex_noise the real and imaginary parts are independent copies, each
    carrying half of the variance.
    """

    kind: LevyKind
    spectrum: AngularSpectrum
    master_seed: int = 0
    complex_noise: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError(
                key="seed", reason=f"must be in [0, 2**64), got {self.master_seed}"
            )

    @property
    def has_mean(self) -> bool:
        return self.kind is LevyKind.NON_COMPENSATED_MIX and any(
            a > 0 for a in self.spectrum.a
        )

    def with_seed(self, master_seed: int) -> "LevyConfig":
        return LevyConfig(
            kind=self.kind,
            spectrum=self.spectrum,
            master_seed=master_seed,
            complex_noise=self.complex_noise,
        )


@dataclass(frozen=True)
class RngStream:
    """
    Address of one keyed draw. Together with the mode rank this is the key
    (master_seed, sample_index, mode_rank, step_index, channel); the same key always
    produces the same increment.
    """

    master_seed: int
    sample_index: int
    step_index: int = 0
    channel: int = 0


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise ConfigError(key="tau", reason=f"time step must be positive, got {tau}")


def _philox_key(master_seed: int, sample_index: int, channel: int, draw: int) -> int:
    words = np.random.SeedSequence(
        entropy=master_seed, spawn_key=(sample_index, channel, draw)
    ).generate_state(2, dtype=np.uint64)
    return int(words[0]) | (int(words[1]) << 64)


def keyed_uniforms(
    master_seed: int,
    sample_index: int,
    channel: int,
    draw: int,
    first: int,
    count: int,
) -> np.ndarray:
    """
    Uniforms in (0, 1) at counter positions first, ..., first + count - 1 of the Philox
    stream keyed by (master_seed, sample_index, channel, draw).

    @params:
        - first: position of the first value
        - count: number of values

    @returns:
        - np.ndarray: float64 array of length count
    """
    if count <= 0:
        return np.empty(0, dtype=np.float64)
    block, offset = divmod(first, _PHILOX_LANES)
    bit_generator = np.random.Philox(
        counter=block, key=_philox_key(master_seed, sample_index, channel, draw)
    )
    raw = bit_generator.random_raw(offset + count)[offset:]
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _UNIFORM_SCALE


def keyed_normals(
    master_seed: int, sample_index: int, channel: int, draw: int, count: int
) -> np.ndarray:
    return special.ndtri(
        keyed_uniforms(master_seed, sample_index, channel, draw, 0, count)
    )


@lru_cache(maxsize=64)
def _poisson_cdf(rate: float) -> np.ndarray:
    # the tail beyond the table is far below double precision
    upper = int(math.ceil(rate + 12.0 * math.sqrt(rate) + 20.0))
    return stats.poisson.cdf(np.arange(upper + 1), rate)


def _poisson_by_inversion(uniforms: np.ndarray, rate: float) -> np.ndarray:
    cdf = _poisson_cdf(rate)
    counts = np.searchsorted(cdf, uniforms, side="left")
    return np.minimum(counts, len(cdf) - 1).astype(np.float64)


def _unit_increments(
    kind: LevyKind,
    tau: float,
    master_seed: int,
    sample_index: int,
    channel: int,
    first: int,
    count: int,
) -> np.ndarray:
    """increments of L_hat (unit amplitude) at consecutive counter positions"""
    gauss = math.sqrt(tau) * special.ndtri(
        keyed_uniforms(master_seed, sample_index, channel, _GAUSS_DRAW, first, count)
    )
    if kind is LevyKind.GAUSSIAN_ONLY:
        return gauss

    jumps = _poisson_by_inversion(
        keyed_uniforms(master_seed, sample_index, channel, _JUMP_DRAW, first, count),
        tau,
    )
    if kind is LevyKind.COMPENSATED_MIX:
        return (gauss + (jumps - tau)) / SQRT2
    return (gauss + jumps) / SQRT2


def increment_mean(
    mode: ModeIndex, tau: float, config: LevyConfig
) -> Union[float, complex]:
    """
    Expected increment of mode over a step of length tau.

    Raises:
    - sphere_trace.exceptions.SpectrumTooShort: if mode.ell has no amplitude
    - sphere_trace.exceptions.ConfigError: if tau <= 0
    """
    _check_tau(tau)
    amplitude = config.spectrum.amplitude(mode.ell)
    if config.kind is not LevyKind.NON_COMPENSATED_MIX:
        return 0j if config.complex_noise else 0.0
    if config.complex_noise:
        return complex(1.0, 1.0) * amplitude * tau / 2.0
    return amplitude * tau / SQRT2


def increment_variance(mode: ModeIndex, tau: float, config: LevyConfig) -> float:
    """Variance a_ell**2 tau of the increment; the same for every LevyKind."""
    _check_tau(tau)
    return config.spectrum.amplitude(mode.ell) ** 2 * tau


def mean_rates(config: LevyConfig, lattice: ModeLattice) -> np.ndarray:
    """per-mode drift m_{ell,m} (mean per unit time)"""
    amplitudes = config.spectrum.per_mode(lattice)
    if config.kind is not LevyKind.NON_COMPENSATED_MIX:
        return np.zeros(lattice.size, dtype=complex if config.complex_noise else float)
    if config.complex_noise:
        return complex(1.0, 1.0) * amplitudes / 2.0
    return amplitudes / SQRT2


def variance_rates(config: LevyConfig, lattice: ModeLattice) -> np.ndarray:
    """per-mode total variance per unit time, a_ell**2"""
    return config.spectrum.per_mode(lattice) ** 2


def sample_increment(
    mode: ModeIndex,
    tau: float,
    config: LevyConfig,
    stream: RngStream,
    lattice: Optional[ModeLattice] = None,
) -> Union[float, complex]:
    """
    Draws the single increment addressed by (stream, mode).

    The counter layout is row-major over the lattice of the run, so the lattice must
    match the one passed to sample_increments for the two to agree. It defaults to
    the lattice the spectrum covers.
    """
    _check_tau(tau)
    lattice = lattice or ModeLattice(len(config.spectrum) - 1)
    amplitude = config.spectrum.amplitude(mode.ell)
    position = stream.step_index * lattice.size + lattice.rank(mode)

    def _part(part: int) -> float:
        return float(
            _unit_increments(
                config.kind,
                tau,
                stream.master_seed,
                stream.sample_index,
                2 * stream.channel + part,
                position,
                1,
            )[0]
        )

    if config.complex_noise:
        return amplitude * complex(_part(0), _part(1)) / SQRT2
    return amplitude * _part(0)


def sample_increments(
    config: LevyConfig,
    lattice: ModeLattice,
    tau: float,
    sample_index: int,
    first_step: int,
    n_steps: int,
    component: int = 0,
) -> np.ndarray:
    """
    Increments of every mode over n_steps consecutive steps of one sample.

    @params:
        - config: noise configuration (kind, spectrum, seed)
        - lattice: spectral truncation of the run
        - tau: time step
        - sample_index: Monte Carlo sample
        - first_step: index of the first step in the block
        - n_steps: number of steps in the block
        - component: independent noise copy (0: scalar / E field, 1: H field)

    @returns:
        - np.ndarray: (n_steps, lattice.size) array, complex when config.complex_noise
    """
    _check_tau(tau)
    amplitudes = config.spectrum.per_mode(lattice)
    first = first_step * lattice.size
    count = n_steps * lattice.size

    def _part(part: int) -> np.ndarray:
        return _unit_increments(
            config.kind,
            tau,
            config.master_seed,
            sample_index,
            2 * component + part,
            first,
            count,
        ).reshape(n_steps, lattice.size)

    if config.complex_noise:
        return amplitudes * (_part(0) + 1j * _part(1)) / SQRT2
    return amplitudes * _part(0)
