import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
import numpy as np

from .exceptions import InvalidModeIndex, SpectrumTooShort, ConfigError
from .utils import degree_power

__all__ = [
    "ModeIndex",
    "ModeLattice",
    "AngularSpectrum",
    "eigenvalue",
    "enumerate_modes",
    "trace_q",
    "weighted_trace_laplacian",
]


@dataclass(frozen=True)
class ModeIndex:
    ell: int
    m: int

    def __post_init__(self) -> None:
        if self.ell < 0 or abs(self.m) > self.ell:
            raise InvalidModeIndex(ell=self.ell, m=self.m)

    @property
    def rank(self) -> int:
        """position of the mode in the (ell ascending, m ascending) enumeration"""
        return self.ell * self.ell + self.ell + self.m


@dataclass(frozen=True)
class ModeLattice:
    """
    The index set {(ell, m) : 0 <= ell <= kappa, |m| <= ell} of a spectral truncation.
    """

    kappa: int

    def __post_init__(self) -> None:
        if self.kappa < 0:
            raise ConfigError(key="kappa", reason=f"must be >= 0, got {self.kappa}")

    @property
    def size(self) -> int:
        return (self.kappa + 1) ** 2

    def rank(self, mode: ModeIndex) -> int:
        assert mode.ell <= self.kappa, f"mode {mode} outside lattice kappa={self.kappa}"
        return mode.rank

    @cached_property
    def degrees(self) -> np.ndarray:
        """degree ell of every mode rank"""
        return np.repeat(
            np.arange(self.kappa + 1), 2 * np.arange(self.kappa + 1) + 1
        )

    @cached_property
    def orders(self) -> np.ndarray:
        """order m of every mode rank"""
        return np.concatenate(
            [np.arange(-ell, ell + 1) for ell in range(self.kappa + 1)]
        )

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """lambda_ell = ell (ell + 1) of every mode rank, formed in integer arithmetic"""
        ells = self.degrees.astype(np.int64)
        return (ells * (ells + 1)).astype(np.float64)

    @classmethod
    def for_size(cls, n_modes: int) -> "ModeLattice":
        """the lattice with (kappa + 1)**2 == n_modes"""
        return _lattice_for_size(n_modes)


@dataclass(frozen=True)
class AngularSpectrum:
    """
    Per-degree amplitudes a_ell; mode (ell, m) carries variance a_ell**2 per unit time.
    """

    a: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        if any(v < 0 or not math.isfinite(v) for v in self.a):
            raise ConfigError(
                key="levy.gamma_spectrum",
                reason="amplitudes must be finite and nonnegative",
            )

    @classmethod
    def power_law(
        cls, kappa: int, a0: float = 1.0, exponent: float = 4.0, scale: float = 1.0
    ) -> "AngularSpectrum":
        """a_0 = a0 and a_ell = scale * ell**(-exponent) for ell >= 1"""
        amplitudes = scale * degree_power(np.arange(kappa + 1), -exponent)
        amplitudes[0] = a0
        return cls(tuple(amplitudes))

    @classmethod
    def constant(cls, kappa: int, value: float) -> "AngularSpectrum":
        return cls((value,) * (kappa + 1))

    def __len__(self) -> int:
        return len(self.a)

    def amplitude(self, ell: int) -> float:
        if ell >= len(self.a):
            raise SpectrumTooShort(kappa=ell, length=len(self.a))
        return self.a[ell]

    def check_covers(self, lattice: ModeLattice) -> None:
        if len(self.a) < lattice.kappa + 1:
            raise SpectrumTooShort(kappa=lattice.kappa, length=len(self.a))

    def per_mode(self, lattice: ModeLattice) -> np.ndarray:
        """amplitudes expanded to every mode rank of the lattice"""
        self.check_covers(lattice)
        return np.asarray(self.a[: lattice.kappa + 1])[lattice.degrees]


def eigenvalue(ell: int) -> float:
    """Laplace-Beltrami eigenvalue magnitude ell (ell + 1) of degree ell."""
    assert ell >= 0, "degree must be nonnegative"
    return float(ell * (ell + 1))


def enumerate_modes(lattice: ModeLattice) -> list[ModeIndex]:
    return [
        ModeIndex(ell=ell, m=m)
        for ell in range(lattice.kappa + 1)
        for m in range(-ell, ell + 1)
    ]


def trace_q(spectrum: AngularSpectrum, lattice: ModeLattice) -> float:
    """
    Trace of the truncated noise covariance, sum over ell of (2 ell + 1) a_ell**2.

    Raises:
    - sphere_trace.exceptions.SpectrumTooShort: if the spectrum has fewer than kappa + 1 amplitudes
    """
    spectrum.check_covers(lattice)
    return math.fsum(
        (2 * ell + 1) * spectrum.a[ell] ** 2 for ell in range(lattice.kappa + 1)
    )


def weighted_trace_laplacian(spectrum: AngularSpectrum, lattice: ModeLattice) -> float:
    """
    Trace of the covariance weighted by the (negative) Laplacian,
    sum over ell of (2 ell + 1) a_ell**2 ell (ell + 1).
    """
    spectrum.check_covers(lattice)
    return math.fsum(
        (2 * ell + 1) * spectrum.a[ell] ** 2 * eigenvalue(ell)
        for ell in range(lattice.kappa + 1)
    )


@lru_cache(maxsize=32)
def _lattice_for_size(n_modes: int) -> ModeLattice:
    kappa = math.isqrt(n_modes) - 1
    assert kappa >= 0 and (kappa + 1) ** 2 == n_modes, f"{n_modes} is not a lattice size"
    return ModeLattice(kappa)
