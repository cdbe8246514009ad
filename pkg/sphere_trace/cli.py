import argparse
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import polars as pl

from .exceptions import ConfigError, DegenerateGrid, OracleUnavailable, UnsupportedScheme
from .field_synth import GridSpec, InitialKind, InitialSpec, evaluate_on_grid, write_snapshot
from .integrators import Equation, EquationState, MaxwellState, SchemeId, SchrodingerState
from .levy_noise import LevyConfig, LevyKind
from .montecarlo import ExperimentConfig, QuantitySeries, oracle_params, run_experiment, simulate_sample
from .quantities import QuantityId, asymptotic_slope
from .sphere_modes import AngularSpectrum
from .utils import (
    DEFAULT_PRESET_SAMPLES,
    DEFAULT_GAMMA,
    FULL_SCALE_SAMPLES,
    SERIES_COLUMNS,
    format_float,
)

__all__ = [
    "Preset",
    "PRESETS",
    "RunManifest",
    "CheckReport",
    "parse_config_text",
    "resolve_values",
    "build_experiment",
    "canonical_config",
    "content_hash",
    "series_frame",
    "check_series",
    "run",
    "check",
    "list_presets",
    "main",
]

logger = logging.getLogger(__name__)

CONFIG_KEYS = [
    "equation",
    "scheme",
    "quantity",
    "kappa",
    "T",
    "N",
    "M",
    "seed",
    "levy.kind",
    "levy.gamma_spectrum",
    "levy.complex_noise",
    "initial.kind",
    "initial.gamma",
    "monopole",
    "record_every",
    "out_dir",
]

# command line flag of every config key
FLAG_NAMES = {
    "equation": "--equation",
    "scheme": "--scheme",
    "quantity": "--quantity",
    "kappa": "--kappa",
    "T": "--T",
    "N": "--N",
    "M": "--M",
    "seed": "--seed",
    "levy.kind": "--levy-kind",
    "levy.gamma_spectrum": "--gamma-spectrum",
    "levy.complex_noise": "--complex-noise",
    "initial.kind": "--initial-kind",
    "initial.gamma": "--initial-gamma",
    "monopole": "--monopole",
    "record_every": "--record-every",
    "out_dir": "--out-dir",
}

BASE_VALUES = {
    "equation": "wave",
    "scheme": "exp",
    "kappa": "16",
    "T": "3",
    "N": "200",
    "M": str(DEFAULT_PRESET_SAMPLES),
    "seed": "0",
    "levy.kind": "compensated",
    "levy.gamma_spectrum": "1,4",
    "levy.complex_noise": "false",
    "initial.gamma": format_float(DEFAULT_GAMMA),
    "monopole": "true",
    "record_every": "1",
}

DEFAULT_QUANTITY = {
    Equation.WAVE: QuantityId.WAVE_ENERGY,
    Equation.SCHRODINGER: QuantityId.SCHRODINGER_MASS,
    Equation.MAXWELL: QuantityId.MAXWELL_ENERGY,
}

DEFAULT_INITIAL = {
    Equation.WAVE: InitialKind.PAPER_WAVE,
    Equation.SCHRODINGER: InitialKind.PAPER_SCHRODINGER,
    Equation.MAXWELL: InitialKind.PAPER_MAXWELL,
}

# --check passes only when every recorded point does, unless a preset or --coverage relaxes it
STRICT_COVERAGE = 1.0
PRESET_COVERAGE = 0.95

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    values: dict[str, str]


def _preset(name: str, description: str, **values: str) -> Preset:
    return Preset(name=name, description=description, values={k.replace("__", "."): v for k, v in values.items()})


PRESETS = {
    p.name: p
    for p in [
        _preset(
            "wave-fig1",
            "wave energy, exponential Euler, compensated noise",
            equation="wave", scheme="exp", quantity="wave-energy", kappa="64", N="500", T="3",
            levy__kind="compensated", levy__gamma_spectrum="1,4",
        ),
        _preset(
            "wave-fig1-long",
            "wave energy over a long horizon",
            equation="wave", scheme="exp", quantity="wave-energy", kappa="64", N="500", T="100",
            levy__kind="compensated", levy__gamma_spectrum="1,4",
        ),
        _preset(
            "wave-nonzero-mean",
            "wave energy, adapted exponential Euler, noncompensated noise",
            equation="wave", scheme="aexp", quantity="wave-energy", kappa="64", N="500", T="3",
            levy__kind="noncompensated", levy__gamma_spectrum="1,4",
        ),
        _preset(
            "wave-nonzero-mean-long",
            "adapted exponential Euler over a long horizon",
            equation="wave", scheme="aexp", quantity="wave-energy", kappa="64", N="500", T="100",
            levy__kind="noncompensated", levy__gamma_spectrum="1,4",
        ),
        _preset(
            "schrodinger-fig",
            "Schrodinger mass, exponential Euler",
            equation="schrodinger", scheme="exp", quantity="schrodinger-mass", kappa="8", N="300", T="3",
            levy__kind="compensated", levy__gamma_spectrum="1,4",
        ),
        _preset(
            "schrodinger-mass-long",
            "Schrodinger mass over a long horizon",
            equation="schrodinger", scheme="exp", quantity="schrodinger-mass", kappa="8", N="300", T="100",
            levy__kind="compensated", levy__gamma_spectrum="1,4",
        ),
        _preset(
            "schrodinger-energy",
            "Schrodinger energy, exponential Euler",
            equation="schrodinger", scheme="exp", quantity="schrodinger-energy", kappa="8", N="300", T="3",
            levy__kind="compensated", levy__gamma_spectrum="1,4",
        ),
        _preset(
            "schrodinger-energy-long",
            "Schrodinger energy over a long horizon",
            equation="schrodinger", scheme="exp", quantity="schrodinger-energy", kappa="8", N="300", T="100",
            levy__kind="compensated", levy__gamma_spectrum="1,4",
        ),
        _preset(
            "schrodinger-mass-bem",
            "Schrodinger mass, backward Euler-Maruyama",
            equation="schrodinger", scheme="bem", quantity="schrodinger-mass", kappa="8", N="300", T="3",
            levy__kind="compensated", levy__gamma_spectrum="1,4",
        ),
        _preset(
            "maxwell-fig",
            "Maxwell TE energy, exponential Euler",
            equation="maxwell", scheme="exp", quantity="maxwell-energy", kappa="32", N="300", T="3",
            levy__kind="compensated", levy__gamma_spectrum="1,4",
        ),
        _preset(
            "maxwell-fig-long",
            "Maxwell TE energy over a long horizon",
            equation="maxwell", scheme="exp", quantity="maxwell-energy", kappa="32", N="300", T="100",
            levy__kind="compensated", levy__gamma_spectrum="1,4",
        ),
        _preset(
            "zero-noise",
            "Schrodinger mass without noise; the estimate stays constant",
            equation="schrodinger", scheme="exp", quantity="schrodinger-mass", kappa="8", N="300", T="3",
            levy__kind="compensated", levy__gamma_spectrum="0,4,0",
        ),
    ]
}


@dataclass
class RunManifest:
    config: str
    config_hash: str
    started: str
    finished: str
    elapsed_seconds: float
    outputs: dict[str, str] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


@dataclass
class CheckReport:
    passed: bool
    fraction: float
    n_points: int
    coverage: float
    slope_estimate: float
    slope_oracle: float
    slope_asymptotic: Optional[float]

    def summary(self, label: str) -> str:
        asymptotic = "n/a" if self.slope_asymptotic is None else f"{self.slope_asymptotic:.6g}"
        return (
            f"{'PASS' if self.passed else 'FAIL'} {label}: "
            f"{100 * self.fraction:.1f}% of {self.n_points} points within 3 stderr "
            f"(need {100 * self.coverage:.1f}%); terminal slope estimate={self.slope_estimate:.6g} "
            f"oracle={self.slope_oracle:.6g} asymptotic={asymptotic}"
        )


def parse_config_text(text: str) -> dict[str, str]:
    """
    Parses flat `key = value` lines; `#` starts a comment.

    Raises:
    - sphere_trace.exceptions.ConfigError: on a malformed line or an unknown key
    """
    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(key=line, reason=f"line {number} is not of the form key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(key=key, reason="unknown key")
        values[key] = value
    return values


def _load_config_file(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(key="config", reason=f"cannot read {path}: {e.strerror}")
    return parse_config_text(text)


def resolve_values(
    preset: Optional[str] = None,
    file_values: Optional[dict[str, str]] = None,
    flag_values: Optional[dict[str, str]] = None,
    paper_scale: bool = False,
) -> dict[str, str]:
    """
    Layers the built-in defaults, a preset, a config file and command line flags (later
    layers win) and fills the equation-dependent defaults, so every key has a value.
    """
    values = dict(BASE_VALUES)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(key="preset", reason=f"unknown preset '{preset}'")
        values.update(PRESETS[preset].values)
        values["M"] = str(FULL_SCALE_SAMPLES if paper_scale else DEFAULT_PRESET_SAMPLES)
    elif paper_scale:
        values["M"] = str(FULL_SCALE_SAMPLES)
    values.update(file_values or {})
    values.update({k: v for k, v in (flag_values or {}).items() if v is not None})

    equation = _parse_enum(values, "equation", Equation)
    values.setdefault("quantity", DEFAULT_QUANTITY[equation].value)
    values.setdefault("initial.kind", DEFAULT_INITIAL[equation].value)
    values.setdefault("out_dir", str(Path("runs") / (preset or "custom")))
    return {key: values[key] for key in CONFIG_KEYS}


def _parse_enum(values: dict[str, str], key: str, enum_cls):
    try:
        return enum_cls(values[key].strip().lower())
    except ValueError:
        choices = "|".join(e.value for e in enum_cls)
        raise ConfigError(key=key, reason=f"'{values[key]}' is not one of {choices}")


def _parse_int(values: dict[str, str], key: str) -> int:
    try:
        return int(values[key])
    except ValueError:
        raise ConfigError(key=key, reason=f"'{values[key]}' is not an integer")


def _parse_float(values: dict[str, str], key: str) -> float:
    try:
        return float(values[key])
    except ValueError:
        raise ConfigError(key=key, reason=f"'{values[key]}' is not a number")


def _parse_bool(values: dict[str, str], key: str) -> bool:
    raw = values[key].strip().lower()
    if raw in _TRUE:
        return True
    if raw in _FALSE:
        return False
    raise ConfigError(key=key, reason=f"'{values[key]}' is not a boolean")


def _parse_spectrum(values: dict[str, str], kappa: int) -> AngularSpectrum:
    key = "levy.gamma_spectrum"
    parts = [p.strip() for p in values[key].split(",")]
    if len(parts) not in (2, 3):
        raise ConfigError(key=key, reason="expected a0,exponent[,scale]")
    try:
        numbers = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(key=key, reason=f"'{values[key]}' is not a list of numbers")
    return AngularSpectrum.power_law(kappa, *numbers)


def build_experiment(values: dict[str, str]) -> ExperimentConfig:
    """
    Turns resolved string values into a validated ExperimentConfig.

    Raises:
    - sphere_trace.exceptions.ConfigError: naming the offending key
    - sphere_trace.exceptions.UnsupportedScheme: for the adapted scheme outside the wave equation
    """
    kappa = _parse_int(values, "kappa")
    if kappa < 0:
        raise ConfigError(key="kappa", reason=f"must be >= 0, got {kappa}")

    initial_kind = _parse_enum(values, "initial.kind", InitialKind)
    if initial_kind is InitialKind.CUSTOM:
        raise ConfigError(key="initial.kind", reason="custom initial data is only available from Python")

    seed = _parse_int(values, "seed")
    config = ExperimentConfig(
        equation=_parse_enum(values, "equation", Equation),
        scheme=_parse_enum(values, "scheme", SchemeId),
        quantity=_parse_enum(values, "quantity", QuantityId),
        kappa=kappa,
        T=_parse_float(values, "T"),
        N=_parse_int(values, "N"),
        M=_parse_int(values, "M"),
        levy=LevyConfig(
            kind=_parse_enum(values, "levy.kind", LevyKind),
            spectrum=_parse_spectrum(values, kappa),
            master_seed=seed,
            complex_noise=_parse_bool(values, "levy.complex_noise"),
        ),
        initial=InitialSpec(kind=initial_kind, gamma=_parse_float(values, "initial.gamma")),
        monopole=_parse_bool(values, "monopole"),
        record_every=_parse_int(values, "record_every"),
    )
    config.validate()
    return config


def canonical_config(values: dict[str, str]) -> str:
    lines = ["# sphere-trace run configuration"]
    lines += [f"{key}={values[key]}" for key in CONFIG_KEYS]
    return "\n".join(lines) + "\n"


def content_hash(text: str) -> str:
    """sha1 of the text stored the way git stores a blob"""
    data = text.encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def series_frame(series: QuantitySeries) -> pl.DataFrame:
    """the series as text columns with 17 significant digits; null where no oracle exists"""

    def _column(values: Optional[np.ndarray]) -> list[Optional[str]]:
        if values is None:
            return [None] * len(series.times)
        return [format_float(float(v)) for v in values]

    columns = {
        "t": series.times,
        "estimate": series.estimate,
        "stderr": series.stderr,
        "oracle_trace": series.oracle_trace,
        "oracle_moment": series.oracle_moment,
    }
    return pl.DataFrame(
        {name: _column(columns[name]) for name in SERIES_COLUMNS},
        schema={name: pl.String for name in SERIES_COLUMNS},
    )


def _terminal_slope(times: np.ndarray, values: np.ndarray) -> float:
    if len(times) < 2:
        return math.nan
    return float((values[-1] - values[-2]) / (times[-1] - times[-2]))


def check_series(
    series: QuantitySeries, config: ExperimentConfig, coverage: float = STRICT_COVERAGE
) -> CheckReport:
    """
    A recorded point passes when |estimate - oracle_moment| <= 3 stderr (plus a 1e-9
    relative slack); the run passes when the passing fraction reaches coverage.
    """
    deviation = np.abs(series.estimate - series.oracle_moment)
    slack = 1e-9 * np.maximum(np.abs(series.oracle_moment), np.abs(series.estimate))
    within = deviation <= 3.0 * series.stderr + slack
    fraction = float(np.mean(within))

    try:
        slope_asymptotic = asymptotic_slope(config.quantity, config.scheme, oracle_params(config))
    except OracleUnavailable as e:
        logger.debug("no asymptotic slope: %s", e)
        slope_asymptotic = None

    return CheckReport(
        passed=fraction >= coverage,
        fraction=fraction,
        n_points=len(within),
        coverage=coverage,
        slope_estimate=_terminal_slope(series.times, series.estimate),
        slope_oracle=_terminal_slope(series.times, series.oracle_moment),
        slope_asymptotic=slope_asymptotic,
    )


def _parse_grid(raw: str) -> GridSpec:
    try:
        n_theta, n_phi = (int(p) for p in raw.lower().split("x"))
    except ValueError:
        raise ConfigError(key="snapshot", reason=f"'{raw}' is not of the form NTxNP")
    return GridSpec(n_theta=n_theta, n_phi=n_phi)


def _snapshot_fields(state: EquationState) -> dict[str, np.ndarray]:
    """coefficient vectors drawn on snapshots: u1 (wave), real and imaginary part, or H"""
    if isinstance(state, SchrodingerState):
        return {"re": state.u.real, "im": state.u.imag}
    if isinstance(state, MaxwellState):
        return {"h": np.concatenate([np.atleast_1d(state.h0), state.h])}
    return {"u1": state.u1}


def _write_snapshots(config: ExperimentConfig, grid: GridSpec, out_dir: Path) -> dict[str, str]:
    states = simulate_sample(config, sample_index=0)
    written = {}
    for label, state, t in (("t0", states[0], 0.0), ("tT", states[-1], config.T)):
        for name, coeffs in _snapshot_fields(state).items():
            path = out_dir / f"snapshot_{name}_{label}.txt"
            write_snapshot(path, evaluate_on_grid(coeffs, grid), grid, config.kappa, t)
            written[f"snapshot_{name}_{label}"] = str(path)
    return written


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")

    run_args = argparse.ArgumentParser(add_help=False)
    run_args.add_argument("--preset", choices=sorted(PRESETS), help="start from a built-in experiment")
    run_args.add_argument("--config", help="flat key=value configuration file")
    run_args.add_argument("--paper-scale", action="store_true", help=f"M={FULL_SCALE_SAMPLES} for presets")
    for key, flag in FLAG_NAMES.items():
        run_args.add_argument(flag, dest=key, default=None, metavar="VALUE", help=f"overrides '{key}'")
    run_args.add_argument(
        "--no-monopole", dest="monopole", action="store_const", const="false", help="no noise on the ell = 0 channels"
    )
    run_args.add_argument("--check", action="store_true", help="compare the estimate against the moment oracle")
    run_args.add_argument(
        "--coverage",
        type=float,
        default=None,
        help=f"fraction of points that must pass ({STRICT_COVERAGE:g} by default, {PRESET_COVERAGE:g} with --preset)",
    )
    run_args.add_argument("--snapshot", metavar="NTxNP", help="write sample 0 on an NTxNP grid at t=0 and t=T")
    run_args.add_argument("--threads", type=int, default=None, help="worker threads")
    run_args.add_argument("--progress", action="store_true", help="show a progress bar")

    parser = argparse.ArgumentParser(
        prog="sphere-trace",
        description="Monte Carlo energy and mass of stochastic wave, Schrodinger and Maxwell equations on the sphere",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("run", parents=[common, run_args], help="run an experiment")
    commands.add_parser("check", parents=[common, run_args], help="run an experiment with --check")
    presets = commands.add_parser("list-presets", parents=[common], help="list built-in experiments")
    presets.add_argument("--paper-scale", action="store_true")
    return parser


def _configure_logging(verbose: int) -> None:
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _execute(args: argparse.Namespace, force_check: bool = False) -> int:
    file_values = _load_config_file(args.config) if args.config else None
    flag_values = {key: getattr(args, key) for key in FLAG_NAMES}
    values = resolve_values(args.preset, file_values, flag_values, args.paper_scale)
    config = build_experiment(values)
    grid = _parse_grid(args.snapshot) if args.snapshot else None
    coverage = args.coverage
    if coverage is None:
        coverage = PRESET_COVERAGE if args.preset else STRICT_COVERAGE
    if not 0.0 <= coverage <= 1.0:
        raise ConfigError(key="coverage", reason=f"must lie in [0, 1], got {coverage}")

    out_dir = Path(values["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    config_text = canonical_config(values)

    started, clock = _timestamp(), time.perf_counter()
    series = run_experiment(config, threads=args.threads, progress=args.progress)

    outputs = {"series": str(out_dir / "series.csv"), "config": str(out_dir / "config.txt")}
    series_frame(series).write_csv(outputs["series"])
    Path(outputs["config"]).write_text(config_text)
    if grid is not None:
        outputs.update(_write_snapshots(config, grid, out_dir))

    manifest = RunManifest(
        config=config_text,
        config_hash=content_hash(config_text),
        started=started,
        finished=_timestamp(),
        elapsed_seconds=round(time.perf_counter() - clock, 3),
        outputs=outputs,
        notes=list(series.notes),
    )
    (out_dir / "manifest.json").write_text(manifest.to_json() + "\n")
    print(f"wrote {outputs['series']}")

    if not (args.check or force_check):
        return 0
    label = f"{config.quantity.value}/{config.scheme.value}"
    report = check_series(series, config, coverage)
    print(report.summary(label))
    return 0 if report.passed else 1


def run(argv: Optional[Sequence[str]] = None) -> int:
    return main(["run", *(argv or [])])


def check(argv: Optional[Sequence[str]] = None) -> int:
    return main(["check", *(argv or [])])


def list_presets(paper_scale: bool = False) -> None:
    samples = FULL_SCALE_SAMPLES if paper_scale else DEFAULT_PRESET_SAMPLES
    for preset in PRESETS.values():
        print(f"{preset.name}: {preset.description}")
        settings = " ".join(f"{k}={v}" for k, v in preset.values.items())
        print(f"    {settings} M={samples}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    _configure_logging(args.verbose)

    if args.command == "list-presets":
        list_presets(args.paper_scale)
        return 0
    try:
        return _execute(args, force_check=args.command == "check")
    except (ConfigError, UnsupportedScheme, DegenerateGrid) as e:
        print(f"sphere-trace: {e}", file=sys.stderr)
        return 2
