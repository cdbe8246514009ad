import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from .exceptions import OracleUnavailable, QuantityMismatch
from .integrators import (
    Equation,
    EquationState,
    SchemeId,
    _rotation_factors,
    check_scheme,
    step,
    zero_state,
)
from .levy_noise import LevyConfig, mean_rates, variance_rates
from .sphere_modes import ModeLattice, trace_q, weighted_trace_laplacian

__all__ = [
    "QuantityId",
    "MomentState",
    "OracleParams",
    "evaluate",
    "evaluate_per_mode",
    "trace_slope",
    "trace_formula",
    "moment_recursion",
    "asymptotic_slope",
    "forward_em_lower_bound",
    "backward_em_upper_bound",
]

logger = logging.getLogger(__name__)


class QuantityId(Enum):
    WAVE_ENERGY = "wave-energy"
    SCHRODINGER_MASS = "schrodinger-mass"
    SCHRODINGER_ENERGY = "schrodinger-energy"
    MAXWELL_ENERGY = "maxwell-energy"

    @property
    def equation(self) -> Equation:
        return _QUANTITY_EQUATION[self]


_QUANTITY_EQUATION = {
    QuantityId.WAVE_ENERGY: Equation.WAVE,
    QuantityId.SCHRODINGER_MASS: Equation.SCHRODINGER,
    QuantityId.SCHRODINGER_ENERGY: Equation.SCHRODINGER,
    QuantityId.MAXWELL_ENERGY: Equation.MAXWELL,
}


@dataclass
class MomentState:
    """
    Per-mode expected quantity q (Maxwell: rank 0 is the monopole) and the expected
    state, None when every coefficient has mean zero.
    """

    q: np.ndarray
    mean: Optional[EquationState] = None


@dataclass(frozen=True)
class OracleParams:
    lattice: ModeLattice
    levy: LevyConfig
    tau: float
    initial: MomentState
    monopole: bool = True

    @property
    def initial_expected(self) -> float:
        return float(np.sum(self.initial.q))


def evaluate_per_mode(quantity: QuantityId, state: EquationState) -> np.ndarray:
    """
    Per-mode terms of the Parseval sum; the last axis runs over mode ranks.

    Raises:
    - sphere_trace.exceptions.QuantityMismatch: if the state belongs to another equation
    """
    if state.equation is not quantity.equation:
        raise QuantityMismatch(quantity=quantity.value, equation=state.equation.value)

    if quantity is QuantityId.WAVE_ENERGY:
        lam = ModeLattice.for_size(state.n_modes).eigenvalues
        return 0.5 * (state.u2**2 + lam * state.u1**2)
    if quantity is QuantityId.SCHRODINGER_MASS:
        return np.abs(state.u) ** 2
    if quantity is QuantityId.SCHRODINGER_ENERGY:
        lam = ModeLattice.for_size(state.n_modes).eigenvalues
        return lam * np.abs(state.u) ** 2

    monopole = 0.5 * (np.asarray(state.e0) ** 2 + np.asarray(state.h0) ** 2)
    return np.concatenate(
        [monopole[..., np.newaxis], 0.5 * (state.e**2 + state.h**2)], axis=-1
    )


def evaluate(quantity: QuantityId, state: EquationState) -> Union[float, np.ndarray]:
    """
    Energy or mass of a state computed in coefficient space.

    Returns a float for a single state and one value per sample for a batched state.
    """
    total = np.sum(evaluate_per_mode(quantity, state), axis=-1)
    return float(total) if np.ndim(total) == 0 else total


def _quantity_weights(quantity: QuantityId, lattice: ModeLattice) -> np.ndarray:
    """factor of E|Delta L|**2 entering the expected quantity of each mode"""
    if quantity is QuantityId.SCHRODINGER_MASS:
        return np.ones(lattice.size)
    if quantity is QuantityId.SCHRODINGER_ENERGY:
        return lattice.eigenvalues
    return np.full(lattice.size, 0.5)


def _noise_variances(quantity: QuantityId, params: OracleParams) -> np.ndarray:
    """per-mode variance per unit time of all noise entering the mode"""
    v = variance_rates(params.levy, params.lattice)
    if quantity is QuantityId.MAXWELL_ENERGY:
        # E and H are independent copies of the same noise
        v = 2.0 * v
        if not params.monopole:
            v[0] = 0.0
    return v


def _homogeneous_gain(quantity: QuantityId, lattice: ModeLattice, tau: float) -> np.ndarray:
    """factor 1 + tau**2 lambda (or lambda**2) of the forward Euler quantity per step"""
    lam = lattice.eigenvalues
    if quantity.equation is Equation.SCHRODINGER:
        return 1.0 + tau**2 * lam**2
    return 1.0 + tau**2 * lam


def trace_slope(quantity: QuantityId, params: OracleParams) -> float:
    spectrum, lattice = params.levy.spectrum, params.lattice
    if quantity is QuantityId.WAVE_ENERGY:
        return 0.5 * trace_q(spectrum, lattice)
    if quantity is QuantityId.SCHRODINGER_MASS:
        return trace_q(spectrum, lattice)
    if quantity is QuantityId.SCHRODINGER_ENERGY:
        return weighted_trace_laplacian(spectrum, lattice)

    trace_e = trace_h = trace_q(spectrum, lattice)
    if not params.monopole:
        trace_e -= spectrum.a[0] ** 2
        trace_h -= spectrum.a[0] ** 2
    return 0.5 * (trace_e + trace_h)


def trace_formula(
    quantity: QuantityId,
    scheme: Optional[SchemeId],
    initial_expected: float,
    params: OracleParams,
    t: Union[float, np.ndarray],
) -> Union[float, np.ndarray]:
    """
    Closed-form expected quantity initial_expected + slope * t of the exact solution
    (scheme None) and of the exponential Euler scheme.

    Raises:
    - sphere_trace.exceptions.OracleUnavailable: for the Euler-Maruyama schemes or noise with nonzero mean
    """
    label = "exact" if scheme is None else scheme.value
    if scheme not in (None, SchemeId.EXP_EULER):
        raise OracleUnavailable(
            quantity=quantity.value, scheme=label, reason="use moment_recursion"
        )
    if params.levy.has_mean:
        raise OracleUnavailable(
            quantity=quantity.value, scheme=label, reason="noise has nonzero mean"
        )
    return initial_expected + trace_slope(quantity, params) * t


def _mean_increments(quantity: QuantityId, params: OracleParams) -> list[np.ndarray]:
    increment = mean_rates(params.levy, params.lattice) * params.tau
    components = 2 if quantity is QuantityId.MAXWELL_ENERGY else 1
    return [increment] * components


def _centered_recursion(
    quantity: QuantityId, scheme: SchemeId, params: OracleParams, q0: np.ndarray, steps: int
) -> np.ndarray:
    """
    Expected quantity of the mean-zero part per step, summed over modes:
    forward q' = g q + w v tau, backward q' = (q + w v tau) / g, exponential q + w v tau.
    """
    tau = params.tau
    kick = _quantity_weights(quantity, params.lattice) * _noise_variances(quantity, params) * tau
    gain = _homogeneous_gain(quantity, params.lattice, tau)

    q = np.array(q0, dtype=np.float64, copy=True)
    totals = np.empty(steps + 1)
    totals[0] = np.sum(q)
    for n in range(1, steps + 1):
        if scheme is SchemeId.FORWARD_EM:
            q = gain * q + kick
        elif scheme is SchemeId.BACKWARD_EM:
            q = (q + kick) / gain
        else:
            q = q + kick
        totals[n] = np.sum(q)
    return totals


def _decomposed_recursion(
    quantity: QuantityId, scheme: SchemeId, params: OracleParams, steps: int
) -> np.ndarray:
    """
    Expected quantity as quantity(mean) + expected quantity of the centred part. The
    mean follows the deterministic part of the scheme driven by the mean increment.
    """
    initial = params.initial
    if initial.mean is None and not params.levy.has_mean:
        return _centered_recursion(quantity, scheme, params, initial.q, steps)

    mean = initial.mean
    if mean is None:
        mean = zero_state(quantity.equation, params.lattice)

    centered_q0 = initial.q - evaluate_per_mode(quantity, mean)
    totals = _centered_recursion(quantity, scheme, params, centered_q0, steps)

    increments = _mean_increments(quantity, params)
    drift = mean_rates(params.levy, params.lattice)
    totals[0] += evaluate(quantity, mean)
    for n in range(1, steps + 1):
        mean = step(mean, scheme, params.tau, increments, drift, params.monopole)
        totals[n] += evaluate(quantity, mean)
    return totals


def _adapted_recursion(params: OracleParams, steps: int) -> np.ndarray:
    """
    Expected wave energy of the adapted exponential scheme, per mode

        q' = q + v tau / 2 + m**2 (1 - cos) / lam + m ((cos - 1) mu1 + sin / w mu2)

    with the means propagated as mu' = S mu + ((1 - cos) / lam m, sin / w m).
    """
    lattice, tau = params.lattice, params.tau
    lam = lattice.eigenvalues
    cos, sin, sin_over_omega, one_minus_cos_over_lam = _rotation_factors(lam, tau)
    omega_sin = np.sqrt(lam) * sin
    m = mean_rates(params.levy, lattice)
    v = variance_rates(params.levy, lattice)

    q = np.array(params.initial.q, dtype=np.float64, copy=True)
    if params.initial.mean is None:
        mu1, mu2 = np.zeros(lattice.size), np.zeros(lattice.size)
    else:
        mu1, mu2 = params.initial.mean.u1, params.initial.mean.u2

    constant = 0.5 * v * tau + m**2 * one_minus_cos_over_lam
    totals = np.empty(steps + 1)
    totals[0] = np.sum(q)
    for n in range(1, steps + 1):
        q = q + constant + m * ((cos - 1.0) * mu1 + sin_over_omega * mu2)
        mu1, mu2 = (
            cos * mu1 + sin_over_omega * mu2 + one_minus_cos_over_lam * m,
            -omega_sin * mu1 + cos * mu2 + sin_over_omega * m,
        )
        totals[n] = np.sum(q)
    return totals


def moment_recursion(
    quantity: QuantityId, scheme: SchemeId, params: OracleParams, steps: int
) -> np.ndarray:
    """
    Exact expected quantity q_0, ..., q_steps of a scheme, from the per-mode second
    moment recursions.

    @params:
        - quantity: functional to follow
        - scheme: time integrator
        - params: lattice, noise, time step, monopole flag and initial moments
        - steps: number of time steps

    @returns:
        - np.ndarray: steps + 1 expected values, summed over modes
    """
    check_scheme(quantity.equation, scheme)
    assert steps >= 0, "number of steps must be nonnegative"
    logger.debug(
        "moment recursion %s/%s over %d steps", quantity.value, scheme.value, steps
    )
    if scheme is SchemeId.ADAPTED_EXP_EULER:
        return _adapted_recursion(params, steps)
    return _decomposed_recursion(quantity, scheme, params, steps)


def asymptotic_slope(
    quantity: QuantityId, scheme: Optional[SchemeId], params: OracleParams
) -> float:
    """
    Long-run slope lim q_n / t_n. The exact solution and the exponential schemes keep
    the trace slope; backward Euler keeps only the monopole's share; forward Euler
    blows up.
    """
    label = "exact" if scheme is None else scheme.value
    if params.levy.has_mean:
        raise OracleUnavailable(
            quantity=quantity.value, scheme=label, reason="noise has nonzero mean"
        )
    if scheme is SchemeId.FORWARD_EM:
        return math.inf
    if scheme is not SchemeId.BACKWARD_EM:
        return trace_slope(quantity, params)

    # only lambda = 0 survives the (1 + tau**2 lambda)**-1 damping
    weights = _quantity_weights(quantity, params.lattice)
    return float(weights[0] * _noise_variances(quantity, params)[0])


def forward_em_lower_bound(
    initial_expected: float,
    initial_monopole: float,
    tau: float,
    t: Union[float, np.ndarray],
) -> Union[float, np.ndarray]:
    """exp(tau t / 2) (q_0 - q_0^{0,0}), valid for tau < 1"""
    return np.exp(0.5 * tau * t) * (initial_expected - initial_monopole)


def backward_em_upper_bound(
    quantity: QuantityId,
    initial_expected: float,
    params: OracleParams,
    t: Union[float, np.ndarray],
) -> Union[float, np.ndarray]:
    tau, spectrum, lattice = params.tau, params.levy.spectrum, params.lattice
    v00 = spectrum.a[0] ** 2
    if quantity is QuantityId.WAVE_ENERGY:
        return initial_expected + trace_q(spectrum, lattice) / (2 * tau) + 0.5 * t * v00
    if quantity is QuantityId.SCHRODINGER_MASS:
        return initial_expected + trace_q(spectrum, lattice) / tau + t * v00
    if quantity is QuantityId.SCHRODINGER_ENERGY:
        bound = initial_expected + weighted_trace_laplacian(spectrum, lattice) / tau
        return np.full_like(t, bound, dtype=float)

    traces = 2 * trace_q(spectrum, lattice)
    monopole_v = 2 * v00
    if not params.monopole:
        traces -= monopole_v
        monopole_v = 0.0
    return initial_expected + traces / (2 * tau) + 0.5 * t * monopole_v
