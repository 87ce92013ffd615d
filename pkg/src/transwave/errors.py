"""Exception hierarchy shared by all transwave modules.

The CLI maps these onto distinct exit codes, so keep the classes stable.
"""

from __future__ import annotations


class TranswaveError(Exception):
    """Base class for all errors raised by this package."""


class TopologyError(TranswaveError):
    """Network shape is unusable (too few buses, not a ring, ...)."""


class ConfigError(TranswaveError):
    """Invalid engine or scenario configuration (bad dt, missing fields, ...)."""


class ParseError(TranswaveError):
    """Input file could not be parsed or violates the file schema."""

    def __init__(self, message: str, path: str | None = None,
                 line: int | None = None, column: int | None = None):
        self.path = path
        self.line = line
        self.column = column
        where = ""
        if path is not None:
            where = f"{path}: "
            if line is not None:
                where = f"{path}:{line}:{column or 0}: "
        super().__init__(where + message)


class SingularLineError(TranswaveError):
    """A line has zero series reactance and cannot carry the sine flow law."""


class DivergenceError(TranswaveError):
    """A simulation produced a non-finite state."""

    def __init__(self, engine: str, bus: int, t: float):
        self.engine = engine
        self.bus = bus
        self.t = t
        super().__init__(f"{engine}: non-finite state at bus {bus}, t={t:.6g} s")


class InsufficientArrivalsError(TranswaveError):
    """Fewer than two wave arrivals were detected, no speed fit possible."""

    def __init__(self, count: int):
        self.count = count
        super().__init__(f"only {count} arrival(s) detected, need at least 2")


class UnderdeterminedError(TranswaveError):
    """Too few sensors for the requested location fit."""
