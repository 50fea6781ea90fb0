"""Exception hierarchy shared by the simulator modules."""

from dataclasses import dataclass
from typing import List, Optional


class UwbSimError(Exception):
    """Base class for every error raised by the simulator."""


class ChannelError(UwbSimError):
    """Invalid channel parameters or a degenerate channel realization."""


class SignalError(UwbSimError):
    """Inconsistent codes, prefilters or effective channels."""


class EstimationError(UwbSimError):
    """Training or channel-estimation failure."""


class GridError(UwbSimError):
    """Numerical grid unsuitable for a characteristic-function inversion."""


@dataclass
class Diagnostic:
    level: str  # "fatal" or "warning"
    key: str
    message: str
    line: Optional[int] = None

    @property
    def is_fatal(self) -> bool:
        return self.level == "fatal"

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{self.level}: {where}{self.key}: {self.message}"


class ConfigError(UwbSimError):
    """Invalid run or system configuration; carries every diagnostic found."""

    def __init__(self, message: str, diagnostics: Optional[List[Diagnostic]] = None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = "\n".join(f"  {d}" for d in self.diagnostics)
        return f"{base}\n{details}"
