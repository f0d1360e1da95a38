# MIT License
# Copyright (c) 2026 ambicuity
"""Error hierarchy shared by every dualexit module.

Each error can render itself as a machine-readable record, the same
``{"status": "error", "message": ...}`` shape the CLI prints and stores in
``summary.json``.
"""

from __future__ import annotations

from typing import Any, Dict, List, Optional, Sequence


class DualExitError(Exception):
    """Base class for every error raised by the library."""

    def to_record(self) -> Dict[str, Any]:
        return {
            "status": "error",
            "error": type(self).__name__,
            "message": str(self),
        }


class InvalidArgumentError(DualExitError, ValueError):
    """An argument is outside the domain an operation is defined on."""


class ConfigError(DualExitError, ValueError):
    """The experiment configuration cannot be parsed or validated."""


class TraceParseError(DualExitError, ValueError):
    """A trace file could not be parsed."""

    def __init__(self, message: str, path: str, line: Optional[int] = None):
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line

    def to_record(self) -> Dict[str, Any]:
        record = super().to_record()
        record.update({"path": self.path, "line": self.line})
        return record


class MalformedRowError(TraceParseError):
    """A row has the wrong shape, an unknown label or an out-of-range score."""


class InconsistentBlocksError(TraceParseError):
    """A row carries a different number of exit blocks than the header."""


class EmptyTraceFileError(TraceParseError):
    """The file has no header or no event rows."""


class DegeneratePopulationError(DualExitError):
    """A tail-class metric was requested on a population without tail events."""


class InfeasibleChannelError(DualExitError):
    """The channel cannot carry an offload (zero rate or SNR below the floor)."""


class InfeasibleBudgetError(DualExitError):
    """Even block-1 local processing of every event exceeds the energy budget."""


class LambdaTooSmallError(DualExitError):
    """The proximal weight leaves the penalised subproblem without strong convexity."""

    def __init__(self, lam: float, min_lambda: float):
        super().__init__(
            f"proximal weight {lam:.6g} gives eta <= 0; need lambda > {min_lambda:.6g}"
        )
        self.lam = lam
        self.min_lambda = min_lambda

    def to_record(self) -> Dict[str, Any]:
        record = super().to_record()
        record["min_lambda"] = self.min_lambda
        return record


class NumericalFailureError(DualExitError):
    """The accelerated inner loop diverged."""

    def __init__(self, message: str, history: Sequence[Sequence[float]]):
        super().__init__(message)
        self.history: List[List[float]] = [list(point) for point in history]

    def to_record(self) -> Dict[str, Any]:
        record = super().to_record()
        record["iterations"] = len(self.history)
        return record
