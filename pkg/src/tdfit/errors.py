"""Exception hierarchy for tdfit."""

from pathlib import Path
from typing import Optional, Union


class TdfitError(Exception):
    """Base class for every error raised by tdfit."""


class ArgumentError(TdfitError, ValueError):
    """Invalid argument, shape or dimension."""


class DelayRangeError(ArgumentError):
    """A delay lies outside the unambiguous range [0, N*T_s)."""

    def __init__(self, index: int, delay: float, max_delay: float):
        self.index = index
        self.delay = delay
        self.max_delay = max_delay
        super().__init__(
            f"delay[{index}] = {delay:.6e} s is outside the unambiguous range "
            f"[0, {max_delay:.6e}) s"
        )


class IllConditionedProbeError(ArgumentError):
    """Pilot or RF-chain response too close to zero to deconvolve."""


class ConfigError(TdfitError, ValueError):
    """Invalid scenario or configuration file."""

    def __init__(
        self,
        message: str,
        path: Optional[Union[str, Path]] = None,
        line: Optional[int] = None,
    ):
        self.message = message
        self.path = str(path) if path is not None else None
        self.line = line
        super().__init__(self._format())

    def _format(self) -> str:
        if self.path and self.line:
            return f"{self.path}:{self.line}: {self.message}"
        if self.path:
            return f"{self.path}: {self.message}"
        return self.message


class EstimationError(TdfitError, RuntimeError):
    """Base class for runtime estimation failures."""


class DegenerateDataError(EstimationError):
    """Data matrix has rank below the requested number of paths."""


class SingularManifoldError(EstimationError):
    """Manifold matrix is rank deficient (coinciding delays)."""


class InitializerFailedError(EstimationError):
    """ESPRIT-type initializer could not produce delays."""


class PeakDeficitError(EstimationError):
    """MUSIC pseudospectrum has fewer usable peaks than paths."""


class SingularInformationError(EstimationError):
    """Fisher information matrix is singular."""
