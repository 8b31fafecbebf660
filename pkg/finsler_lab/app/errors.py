from typing import Optional

import numpy as np


class FinslerLabError(Exception):
    """Base error. `exit_code` is what the CLI returns when it escapes a command."""
    exit_code = 3

    def to_dict(self) -> dict:
        return {"type": type(self).__name__, "message": str(self)}


class DomainError(FinslerLabError, ValueError):
    """An input outside the domain of an operation (zero vector, bad dimension, ...)."""


class ConfigError(FinslerLabError):
    """Malformed experiment configuration; maps to a usage error."""
    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field

    def to_dict(self) -> dict:
        return {**super().to_dict(), "field": self.field}


class StrongConvexityError(FinslerLabError):
    """The fundamental tensor is not positive definite at (x, y)."""

    def __init__(self, x, y, min_eigenvalue: float):
        self.x = np.asarray(x, dtype=float).tolist()
        self.y = np.asarray(y, dtype=float).tolist()
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            f"fundamental tensor not positive definite at x={self.x}, y={self.y} "
            f"(min eigenvalue {self.min_eigenvalue:.3e})"
        )

    def to_dict(self) -> dict:
        return {**super().to_dict(), "x": self.x, "y": self.y, "min_eigenvalue": self.min_eigenvalue}


class MetricValidityError(FinslerLabError):
    """F is not positive where a volume density needs it."""


class IntegrationError(FinslerLabError):
    """The geodesic integrator gave up; carries the last accepted state."""

    def __init__(self, message: str, t: float, state):
        self.t = float(t)
        self.state = np.asarray(state, dtype=float).tolist()
        super().__init__(f"{message} (last good state at t={self.t:.6g})")

    def to_dict(self) -> dict:
        return {**super().to_dict(), "t": self.t, "state": self.state}


class HorizonError(FinslerLabError):
    """A target is not reachable inside the truncated computational domain."""


class DistanceAccuracyError(FinslerLabError):
    """Busemann approximants decreased by more than the distance error allows."""
