import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .exceptions import ConfigError, DegenerateGrid
from .integrators import (
    Equation,
    EquationState,
    MaxwellState,
    SchrodingerState,
    WaveState,
    zero_state,
)
from .levy_noise import INITIAL_CHANNEL, keyed_normals
from .quantities import MomentState, QuantityId, evaluate_per_mode
from .sphere_modes import ModeLattice
from .utils import DEFAULT_GAMMA, degree_power

__all__ = [
    "InitialKind",
    "InitialSpec",
    "GridSpec",
    "sample_initial",
    "initial_moments",
    "expected_initial_quantity",
    "normalized_legendre",
    "evaluate_on_grid",
    "quadrature_weights",
    "write_snapshot",
]

logger = logging.getLogger(__name__)


class InitialKind(Enum):
    PAPER_WAVE = "paper-wave"
    PAPER_SCHRODINGER = "paper-schrodinger"
    PAPER_MAXWELL = "paper-maxwell"
    ZERO = "zero"
    CUSTOM = "custom"


_RANDOM_KINDS = {
    InitialKind.PAPER_WAVE: Equation.WAVE,
    InitialKind.PAPER_SCHRODINGER: Equation.SCHRODINGER,
    InitialKind.PAPER_MAXWELL: Equation.MAXWELL,
}


@dataclass(frozen=True)
class InitialSpec:
    """
    Initial data of an experiment. The random kinds draw independent standard
    Gaussians u, z per mode and use

        first field  = sum ell**(-gamma) u Y      (u1, real part, E)
        second field = sum ell**(-gamma + 1) z Y  (u2, imaginary part, H)

    with 0**(-x) = 1. Custom carries a fixed, unbatched state.
    """

    kind: InitialKind
    gamma: float = DEFAULT_GAMMA
    state: Optional[EquationState] = None

    def __post_init__(self) -> None:
        if self.kind is InitialKind.CUSTOM and self.state is None:
            raise ConfigError(key="initial.kind", reason="custom initial data needs a state")
        if self.kind in _RANDOM_KINDS and self.gamma <= 1:
            logger.warning(
                "initial.gamma=%s <= 1: expected energy diverges as kappa grows",
                self.gamma,
            )

    def check_equation(self, equation: Equation) -> None:
        if (expected := _RANDOM_KINDS.get(self.kind)) is not None and expected is not equation:
            raise ConfigError(
                key="initial.kind",
                reason=f"'{self.kind.value}' initial data belongs to the {expected.value} equation, not {equation.value}",
            )
        if self.kind is InitialKind.CUSTOM and self.state.equation is not equation:
            raise ConfigError(
                key="initial.kind",
                reason=f"custom state is a {self.state.equation.value} state, not {equation.value}",
            )


@dataclass(frozen=True)
class GridSpec:
    """Equispaced colatitudes from pole to pole and equispaced longitudes."""

    n_theta: int
    n_phi: int

    def __post_init__(self) -> None:
        if self.n_theta < 2 or self.n_phi < 4:
            raise DegenerateGrid(n_theta=self.n_theta, n_phi=self.n_phi)

    @property
    def thetas(self) -> np.ndarray:
        return np.linspace(0.0, math.pi, self.n_theta)

    @property
    def phis(self) -> np.ndarray:
        return 2.0 * math.pi * np.arange(self.n_phi) / self.n_phi


def _standard_deviations(lattice: ModeLattice, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    degrees = lattice.degrees
    return degree_power(degrees, -gamma), degree_power(degrees, 1.0 - gamma)


def sample_initial(
    spec: InitialSpec,
    lattice: ModeLattice,
    equation: Equation,
    master_seed: int,
    sample_indices: Sequence[int],
) -> EquationState:
    """
    Draws the initial states of a batch of samples.

    @params:
        - spec: initial data recipe
        - lattice: spectral truncation
        - equation: equation family of the state
        - master_seed: seed of the run
        - sample_indices: samples to draw, one batch row each

    @returns:
        - EquationState: batched state with leading axis len(sample_indices)

    Raises:
    - sphere_trace.exceptions.ConfigError: if the recipe belongs to another equation
    """
    spec.check_equation(equation)
    batch = (len(sample_indices),)

    if spec.kind is InitialKind.ZERO:
        return zero_state(equation, lattice, batch)
    if spec.kind is InitialKind.CUSTOM:
        return _broadcast_state(spec.state, batch)

    first = np.stack(
        [keyed_normals(master_seed, i, INITIAL_CHANNEL, 0, lattice.size) for i in sample_indices]
    )
    second = np.stack(
        [keyed_normals(master_seed, i, INITIAL_CHANNEL, 1, lattice.size) for i in sample_indices]
    )
    sd_first, sd_second = _standard_deviations(lattice, spec.gamma)
    first, second = sd_first * first, sd_second * second

    if equation is Equation.WAVE:
        return WaveState(u1=first, u2=second)
    if equation is Equation.SCHRODINGER:
        return SchrodingerState(u=first + 1j * second)
    # the scalar E coefficients feed the divergence-free (Psi) channel
    return MaxwellState(e=first[:, 1:], h=second[:, 1:], e0=first[:, 0], h0=second[:, 0])


def _broadcast_state(state: EquationState, batch: tuple) -> EquationState:
    def _tile(values) -> np.ndarray:
        values = np.asarray(values)
        return np.array(np.broadcast_to(values, batch + values.shape), copy=True)

    if isinstance(state, WaveState):
        return WaveState(u1=_tile(state.u1), u2=_tile(state.u2))
    if isinstance(state, SchrodingerState):
        return SchrodingerState(u=_tile(state.u))
    return MaxwellState(e=_tile(state.e), h=_tile(state.h), e0=_tile(state.e0), h0=_tile(state.h0))


def initial_moments(
    spec: InitialSpec, lattice: ModeLattice, quantity: QuantityId
) -> MomentState:
    """
    Exact per-mode expectation of the quantity at time zero, and the mean state (None
    for the random and zero kinds, whose coefficients are centred).
    """
    spec.check_equation(quantity.equation)
    if spec.kind is InitialKind.ZERO:
        return MomentState(q=np.zeros(lattice.size))
    if spec.kind is InitialKind.CUSTOM:
        return MomentState(q=evaluate_per_mode(quantity, spec.state), mean=spec.state.copy())

    sd_first, sd_second = _standard_deviations(lattice, spec.gamma)
    var_first, var_second = sd_first**2, sd_second**2
    lam = lattice.eigenvalues
    if quantity is QuantityId.WAVE_ENERGY:
        q = 0.5 * (var_second + lam * var_first)
    elif quantity is QuantityId.SCHRODINGER_MASS:
        q = var_first + var_second
    elif quantity is QuantityId.SCHRODINGER_ENERGY:
        q = lam * (var_first + var_second)
    else:
        q = 0.5 * (var_first + var_second)
    return MomentState(q=q)


def expected_initial_quantity(
    spec: InitialSpec, lattice: ModeLattice, quantity: QuantityId
) -> float:
    """e.g. wave energy 1/2 sum (2 ell + 1)(ell**(2 - 2 gamma) + lambda ell**(-2 gamma))"""
    return math.fsum(initial_moments(spec, lattice, quantity).q)


def normalized_legendre(kappa: int, x: np.ndarray) -> np.ndarray:
    """
    Fully normalized associated Legendre functions P_nm(x), 0 <= m <= n <= kappa,
    without the Condon-Shortley phase, such that the mean of P_nm**2 cos**2 / sin**2
    over the sphere is one.

    Sectoral values are seeded from P_00 = 1, then a three-term recurrence in n runs at
    fixed m.

    @params:
        - kappa: maximum degree
        - x: cos(theta) values

    @returns:
        - np.ndarray: array of shape (kappa + 1, kappa + 1, len(x)) indexed [n, m, i]
    """
    x = np.asarray(x, dtype=np.float64)
    u = np.sqrt(np.clip(1.0 - x**2, 0.0, None))
    table = np.zeros((kappa + 1, kappa + 1) + x.shape)
    table[0, 0] = 1.0
    if kappa == 0:
        return table

    table[1, 1] = math.sqrt(3.0) * u
    for n in range(2, kappa + 1):
        table[n, n] = u * math.sqrt((2 * n + 1) / (2 * n)) * table[n - 1, n - 1]
    for m in range(kappa):
        table[m + 1, m] = math.sqrt(2 * m + 3) * x * table[m, m]

    for m in range(kappa + 1):
        for n in range(m + 2, kappa + 1):
            a_nm = math.sqrt((2 * n - 1) * (2 * n + 1) / ((n - m) * (n + m)))
            b_nm = math.sqrt(
                (2 * n + 1) * (n + m - 1) * (n - m - 1) / ((n - m) * (n + m) * (2 * n - 3))
            )
            table[n, m] = a_nm * x * table[n - 1, m] - b_nm * table[n - 2, m]
    return table


def evaluate_on_grid(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    """
    Synthesizes sum c_{ell,m} Y_{ell,m}(theta_i, phi_j) with the real harmonics

        Y_{ell,0}  = P_{ell,0}(cos theta) / sqrt(4 pi)
        Y_{ell,m}  = (-1)**m P_{ell,m}(cos theta) cos(m phi) / sqrt(4 pi),     m > 0
        Y_{ell,m}  = (-1)**m P_{ell,|m|}(cos theta) sin(|m| phi) / sqrt(4 pi),  m < 0

    where P are the fully normalized functions of normalized_legendre.

    @returns:
        - np.ndarray: (n_theta, n_phi) values, complex when coeffs are complex
    """
    coeffs = np.asarray(coeffs)
    lattice = ModeLattice.for_size(coeffs.shape[-1])
    kappa = lattice.kappa
    table = normalized_legendre(kappa, np.cos(grid.thetas))
    phis = grid.phis
    dtype = np.complex128 if np.iscomplexobj(coeffs) else np.float64
    field = np.zeros((grid.n_theta, grid.n_phi), dtype=dtype)
    norm = 1.0 / math.sqrt(4.0 * math.pi)

    for m in range(kappa + 1):
        ells = np.arange(m, kappa + 1)
        ranks = ells * ells + ells
        factor = norm * (-1.0) ** m
        field += factor * np.outer(coeffs[ranks + m] @ table[ells, m], np.cos(m * phis))
        if m > 0:
            field += factor * np.outer(coeffs[ranks - m] @ table[ells, m], np.sin(m * phis))
    return field


def _clenshaw_curtis(n_nodes: int) -> np.ndarray:
    """weights of int_{-1}^{1} f(x) dx at x_k = cos(k pi / N), k = 0..N"""
    order = n_nodes - 1
    angles = math.pi * np.arange(n_nodes) / order
    weights = np.zeros(n_nodes)
    interior = np.arange(1, order)
    v = np.ones(order - 1)
    if order % 2 == 0:
        weights[0] = weights[order] = 1.0 / (order**2 - 1)
        for k in range(1, order // 2):
            v -= 2.0 * np.cos(2 * k * angles[interior]) / (4 * k * k - 1)
        v -= np.cos(order * angles[interior]) / (order**2 - 1)
    else:
        weights[0] = weights[order] = 1.0 / order**2
        for k in range(1, (order - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * angles[interior]) / (4 * k * k - 1)
    weights[interior] = 2.0 * v / order
    return weights


def quadrature_weights(grid: GridSpec) -> np.ndarray:
    """
    Area weights of the grid nodes: Clenshaw-Curtis in cos(theta), which carries the
    sin(theta) Jacobian, times the uniform longitude spacing. Exact for band-limited
    integrands of degree below n_theta in cos(theta) and n_phi in phi.
    """
    return np.outer(_clenshaw_curtis(grid.n_theta), np.full(grid.n_phi, 2.0 * math.pi / grid.n_phi))


def write_snapshot(
    path: Union[str, Path], field: np.ndarray, grid: GridSpec, kappa: int, time: float
) -> Path:
    """
    Writes a real grid as text: header `# n_theta n_phi kappa time`, then one grid row
    per line with space-separated values.
    """
    path = Path(path)
    np.savetxt(
        path,
        np.asarray(field, dtype=np.float64),
        fmt="%.17g",
        delimiter=" ",
        header=f"{grid.n_theta} {grid.n_phi} {kappa} {time:.17g}",
        comments="# ",
    )
    return path
