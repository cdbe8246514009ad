import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import polars as pl
from tqdm import tqdm

from .exceptions import ConfigError, GridMismatch, OracleUnavailable
from .field_synth import InitialSpec, initial_moments, sample_initial
from .integrators import Equation, EquationState, SchemeId, check_scheme, step
from .levy_noise import LevyConfig, mean_rates, sample_increments
from .quantities import (
    OracleParams,
    QuantityId,
    evaluate,
    moment_recursion,
    trace_formula,
)
from .sphere_modes import ModeLattice
from .utils import SERIES_COLUMNS, SHARD_SIZE, STEP_CHUNK, threads_from_env

__all__ = [
    "ExperimentConfig",
    "QuantitySeries",
    "Accumulator",
    "merge",
    "run_experiment",
    "simulate_sample",
    "oracle_params",
    "resolve_threads",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    equation: Equation
    scheme: SchemeId
    quantity: QuantityId
    kappa: int
    T: float
    N: int
    M: int
    levy: LevyConfig
    initial: InitialSpec
    monopole: bool = True
    record_every: int = 1

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def lattice(self) -> ModeLattice:
        return ModeLattice.for_size((self.kappa + 1) ** 2)

    @property
    def record_steps(self) -> np.ndarray:
        return np.arange(0, self.N + 1, self.record_every)

    @property
    def times(self) -> np.ndarray:
        return self.record_steps * self.tau

    @property
    def noise_components(self) -> int:
        return 2 if self.equation is Equation.MAXWELL else 1

    def validate(self) -> None:
        """
        Raises:
        - sphere_trace.exceptions.ConfigError: naming the first inconsistent key
        - sphere_trace.exceptions.UnsupportedScheme: for the adapted scheme outside the wave equation
        """
        if self.kappa < 0:
            raise ConfigError(key="kappa", reason=f"must be >= 0, got {self.kappa}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigError(key="T", reason=f"must be positive and finite, got {self.T}")
        if self.N < 1:
            raise ConfigError(key="N", reason=f"must be >= 1, got {self.N}")
        if self.M < 1:
            raise ConfigError(key="M", reason=f"must be >= 1, got {self.M}")
        if self.record_every < 1 or (self.record_every != 1 and self.N % self.record_every):
            raise ConfigError(
                key="record_every",
                reason=f"must divide N={self.N}, got {self.record_every}",
            )
        if self.quantity.equation is not self.equation:
            raise ConfigError(
                key="quantity",
                reason=f"'{self.quantity.value}' does not belong to the {self.equation.value} equation",
            )
        if self.levy.complex_noise and self.equation is not Equation.SCHRODINGER:
            raise ConfigError(
                key="levy.complex_noise", reason="only the Schrodinger equation takes complex noise"
            )
        check_scheme(self.equation, self.scheme)
        self.levy.spectrum.check_covers(self.lattice)
        self.initial.check_equation(self.equation)


@dataclass
class QuantitySeries:
    times: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    oracle_trace: Optional[np.ndarray]
    oracle_moment: np.ndarray
    notes: list[str] = field(default_factory=list)

    def to_frame(self) -> pl.DataFrame:
        n = len(self.times)
        oracle_trace = (
            pl.Series("oracle_trace", [None] * n, dtype=pl.Float64)
            if self.oracle_trace is None
            else pl.Series("oracle_trace", self.oracle_trace, dtype=pl.Float64)
        )
        return pl.DataFrame(
            [
                pl.Series("t", self.times, dtype=pl.Float64),
                pl.Series("estimate", self.estimate, dtype=pl.Float64),
                pl.Series("stderr", self.stderr, dtype=pl.Float64),
                oracle_trace,
                pl.Series("oracle_moment", self.oracle_moment, dtype=pl.Float64),
            ]
        ).select(SERIES_COLUMNS)


@dataclass
class Accumulator:
    """
    Streaming per-time statistics: sample count, mean and centred sum of squares m2.

    Samples are folded in one at a time (Welford) and partial accumulators combine
    pairwise (Chan et al.), so identical samples leave m2 at exactly zero.
    """

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def empty(cls, n_points: int) -> "Accumulator":
        return cls(count=0, mean=np.zeros(n_points), m2=np.zeros(n_points))

    @property
    def n_points(self) -> int:
        return len(self.mean)

    def add(self, values: np.ndarray) -> None:
        """Folds in one sample path evaluated on the time grid."""
        if len(values) != self.n_points:
            raise GridMismatch(left=self.n_points, right=len(values))
        self.count += 1
        delta = values - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (values - self.mean)

    def add_batch(self, rows: np.ndarray) -> None:
        for values in rows:
            self.add(values)

    @property
    def estimate(self) -> np.ndarray:
        return self.mean

    @property
    def stderr(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros(self.n_points)
        variance = np.maximum(self.m2, 0.0) / (self.count - 1)
        return np.sqrt(variance / self.count)


def merge(a: Accumulator, b: Accumulator) -> Accumulator:
    """
    Combines two accumulators over the same time grid.

    Raises:
    - sphere_trace.exceptions.GridMismatch: if the grids differ in length
    """
    if a.n_points != b.n_points:
        raise GridMismatch(left=a.n_points, right=b.n_points)
    if b.count == 0:
        return Accumulator(count=a.count, mean=a.mean.copy(), m2=a.m2.copy())
    if a.count == 0:
        return Accumulator(count=b.count, mean=b.mean.copy(), m2=b.m2.copy())

    count = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / count)
    m2 = a.m2 + b.m2 + delta**2 * (a.count * b.count / count)
    return Accumulator(count=count, mean=mean, m2=m2)


def _merge_in_order(parts: Sequence[Accumulator]) -> Accumulator:
    """pairwise tree reduction in a fixed order"""
    parts = list(parts)
    while len(parts) > 1:
        paired = [merge(parts[i], parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            paired.append(parts[-1])
        parts = paired
    return parts[0]


def resolve_threads(threads: Optional[int] = None) -> Optional[int]:
    """explicit thread count, else SPHERE_TRACE_THREADS, else None (executor default)"""
    if threads is not None:
        if threads < 1:
            raise ConfigError(key="threads", reason=f"must be >= 1, got {threads}")
        return threads
    return threads_from_env()


def _noise_block(
    config: ExperimentConfig, sample_indices: Sequence[int], first_step: int, n_steps: int
) -> list[np.ndarray]:
    """increments shaped (n_steps, batch, modes), one array per noise component"""
    lattice, tau = config.lattice, config.tau
    return [
        np.stack(
            [
                sample_increments(config.levy, lattice, tau, i, first_step, n_steps, component)
                for i in sample_indices
            ],
            axis=1,
        )
        for component in range(config.noise_components)
    ]


def _run_paths(config: ExperimentConfig, sample_indices: Sequence[int], visit) -> None:
    """
    Steps the samples as one batch and calls visit(step_index, state) at every recorded
    step. The draws of a sample depend only on its index.
    """
    state: EquationState = sample_initial(
        config.initial, config.lattice, config.equation, config.levy.master_seed, sample_indices
    )
    drift = mean_rates(config.levy, config.lattice)
    visit(0, state)
    for first in range(0, config.N, STEP_CHUNK):
        n_steps = min(STEP_CHUNK, config.N - first)
        noise = _noise_block(config, sample_indices, first, n_steps)
        for offset in range(n_steps):
            state = step(
                state,
                config.scheme,
                config.tau,
                [component[offset] for component in noise],
                drift,
                config.monopole,
            )
            if (n := first + offset + 1) % config.record_every == 0:
                visit(n, state)


def _shard_accumulator(config: ExperimentConfig, sample_indices: Sequence[int]) -> Accumulator:
    values = np.empty((len(sample_indices), len(config.record_steps)))

    def _record(n: int, state: EquationState) -> None:
        values[:, n // config.record_every] = evaluate(config.quantity, state)

    _run_paths(config, sample_indices, _record)
    accumulator = Accumulator.empty(len(config.record_steps))
    accumulator.add_batch(values)
    return accumulator


def simulate_sample(config: ExperimentConfig, sample_index: int = 0) -> list[EquationState]:
    """
    Replays one sample path and returns its (unbatched) states at the recorded steps;
    the path is the same one run_experiment averages over.
    """
    config.validate()
    states: list[EquationState] = []

    def _keep(n: int, state: EquationState) -> None:
        states.append(_unbatch(state))

    _run_paths(config, [sample_index], _keep)
    return states


def _unbatch(state: EquationState) -> EquationState:
    return type(state)(**{name: np.asarray(value)[0] for name, value in vars(state).items()})


def oracle_params(config: ExperimentConfig) -> OracleParams:
    return OracleParams(
        lattice=config.lattice,
        levy=config.levy,
        tau=config.tau,
        initial=initial_moments(config.initial, config.lattice, config.quantity),
        monopole=config.monopole,
    )


def _oracles(config: ExperimentConfig, notes: list[str]) -> tuple[Optional[np.ndarray], np.ndarray]:
    params = oracle_params(config)
    moment = moment_recursion(config.quantity, config.scheme, params, config.N)
    try:
        trace = trace_formula(
            config.quantity, config.scheme, params.initial_expected, params, config.times
        )
    except OracleUnavailable as e:
        notes.append(str(e))
        trace = None
    return trace, moment[config.record_steps]


def run_experiment(
    config: ExperimentConfig, threads: Optional[int] = None, progress: bool = False
) -> QuantitySeries:
    """
    Monte Carlo estimate of the expected quantity on the recorded time grid, with its
    standard error and both oracle curves.

    @params:
        - config: experiment description; validated before any sampling
        - threads: worker threads (default: SPHERE_TRACE_THREADS or the executor default)
        - progress: show a progress bar over sample shards

    @returns:
        - QuantitySeries: estimate, stderr, oracle_trace (None when unavailable), oracle_moment
    """
    config.validate()
    workers = resolve_threads(threads)
    started = time.perf_counter()
    logger.info(
        "running %s/%s/%s kappa=%d T=%s N=%d M=%d",
        config.equation.value,
        config.scheme.value,
        config.quantity.value,
        config.kappa,
        config.T,
        config.N,
        config.M,
    )

    shards = [range(first, min(first + SHARD_SIZE, config.M)) for first in range(0, config.M, SHARD_SIZE)]
    results: dict[int, Accumulator] = {}
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {
            executor.submit(_shard_accumulator, config, shard): k for k, shard in enumerate(shards)
        }
        for future in tqdm(
            as_completed(futures), total=len(futures), disable=not progress, desc="shards"
        ):
            k = futures[future]
            try:
                results[k] = future.result()
            except Exception as e:
                logger.error("shard %d (samples %s) failed: %s", k, shards[k], e)
                raise
            logger.debug("shard %d done", k)

    accumulator = _merge_in_order([results[k] for k in range(len(shards))])
    notes: list[str] = []
    oracle_trace, oracle_moment = _oracles(config, notes)
    logger.info("finished %d samples in %.2fs", accumulator.count, time.perf_counter() - started)

    return QuantitySeries(
        times=config.times,
        estimate=accumulator.estimate,
        stderr=accumulator.stderr,
        oracle_trace=oracle_trace,
        oracle_moment=oracle_moment,
        notes=notes,
    )
