__all__ = [
    "InvalidModeIndex",
    "ConfigError",
    "SpectrumTooShort",
    "UnsupportedScheme",
    "QuantityMismatch",
    "OracleUnavailable",
    "GridMismatch",
    "DegenerateGrid",
]


class InvalidModeIndex(Exception):
    MSG = "invalid mode index (ell={ell}, m={m}): need ell >= 0 and |m| <= ell"

    def __init__(self, ell: int, m: int) -> None:
        super().__init__(self.MSG.format(ell=ell, m=m))


class ConfigError(Exception):
    MSG = "invalid configuration value for '{key}': {reason}"

    def __init__(self, key: str, reason: str) -> None:
        self.key = key
        super().__init__(self.MSG.format(key=key, reason=reason))


class SpectrumTooShort(ConfigError):
    MSG_REASON = "spectrum has {length} amplitudes but degree {kappa} needs {needed}"

    def __init__(self, kappa: int, length: int) -> None:
        super().__init__(
            key="levy.gamma_spectrum",
            reason=self.MSG_REASON.format(
                length=length, kappa=kappa, needed=kappa + 1
            ),
        )


class UnsupportedScheme(Exception):
    MSG = "scheme '{scheme}' is not available for the {equation} equation"

    def __init__(self, scheme: str, equation: str) -> None:
        super().__init__(self.MSG.format(scheme=scheme, equation=equation))


class QuantityMismatch(Exception):
    MSG = "quantity '{quantity}' cannot be evaluated on a {equation} state"

    def __init__(self, quantity: str, equation: str) -> None:
        super().__init__(self.MSG.format(quantity=quantity, equation=equation))


class OracleUnavailable(Exception):
    MSG = "no closed-form trace formula for '{quantity}' under '{scheme}': {reason}"

    def __init__(self, quantity: str, scheme: str, reason: str) -> None:
        super().__init__(
            self.MSG.format(quantity=quantity, scheme=scheme, reason=reason)
        )


class GridMismatch(Exception):
    MSG = "cannot merge accumulators over different time grids ({left} vs {right} points)"

    def __init__(self, left: int, right: int) -> None:
        super().__init__(self.MSG.format(left=left, right=right))


class DegenerateGrid(Exception):
    MSG = "grid {n_theta}x{n_phi} is degenerate: need n_theta >= 2 and n_phi >= 4"

    def __init__(self, n_theta: int, n_phi: int) -> None:
        super().__init__(self.MSG.format(n_theta=n_theta, n_phi=n_phi))
