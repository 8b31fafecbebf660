"""
Chart geometry of the test manifolds: an unbounded chart, a rectangular torus,
and the warped surface ds^2 = dx1^2 + profile(x1)^2 dx2^2 with x2 periodic.
"""
import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import jax
import jax.numpy as jnp
import numpy as np

from .coefficients import build_coefficient
from .errors import ConfigError, DomainError
from .metric_core import MetricSpec, riemannian
from .models import CoefficientConfig, ModelConfig, ModelKind


@dataclass(frozen=True, eq=False)
class ManifoldModel:
    kind: ModelKind
    dim: int
    periods: Tuple[Optional[float], ...]
    profile: Optional[Callable] = None
    bound: float = 6.0
    window: float = 4.0
    name: str = ""
    config: Optional[ModelConfig] = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.periods) != self.dim:
            raise DomainError("one period entry per coordinate is required")
        if any(p is not None and p <= 0 for p in self.periods):
            raise DomainError("periods must be positive")

    @property
    def label(self) -> str:
        return self.name or self.kind.value

    @cached_property
    def periodic(self) -> np.ndarray:
        return np.array([p is not None for p in self.periods])

    @cached_property
    def period_vector(self) -> np.ndarray:
        return np.array([p if p is not None else np.inf for p in self.periods])

    @property
    def is_compact(self) -> bool:
        return bool(np.all(self.periodic))

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Reduce periodic coordinates into [0, period)."""
        x = np.array(x, dtype=float, copy=True)
        if not np.any(self.periodic):
            return x
        p = self.period_vector[self.periodic]
        x[..., self.periodic] = np.mod(x[..., self.periodic], p)
        return x

    def minimal_image(self, dx: np.ndarray) -> np.ndarray:
        """Shortest representative of a coordinate difference."""
        dx = np.array(dx, dtype=float, copy=True)
        if not np.any(self.periodic):
            return dx
        p = self.period_vector[self.periodic]
        dx[..., self.periodic] -= p * np.round(dx[..., self.periodic] / p)
        return dx

    def period_shifts(self) -> List[np.ndarray]:
        shifts = []
        for k, p in enumerate(self.periods):
            if p is not None:
                shift = np.zeros(self.dim)
                shift[k] = p
                shifts.append(shift)
        return shifts

    def box(self, bound: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Integration domain: a fundamental domain in periodic directions, a truncation elsewhere."""
        half = {ModelKind.UNBOUNDED: self.window, ModelKind.WARPED: self.bound}.get(self.kind, 0.0)
        half = half if bound is None else bound
        lower = np.where(self.periodic, 0.0, -half)
        upper = np.where(self.periodic, self.period_vector, half)
        return lower, upper

    def sample_points(self, rng: np.random.Generator, n: int, bound: Optional[float] = None) -> np.ndarray:
        lower, upper = self.box(bound)
        return rng.uniform(lower, upper, size=(n, self.dim))

    def escaped(self, x: np.ndarray) -> bool:
        """Whether a point left the truncation window of a non-compact fixture."""
        if self.kind != ModelKind.WARPED:
            return False
        return bool(abs(x[0]) > self.bound)

    @cached_property
    def surface_metric(self) -> MetricSpec:
        """The Riemannian metric a warped surface carries."""
        if self.kind != ModelKind.WARPED:
            raise DomainError(f"a {self.kind.value} model does not carry its own metric")
        profile = self.profile
        return riemannian(
            lambda x: jnp.diag(jnp.stack([jnp.ones_like(x[0]), profile(x) ** 2])),
            2, name=f"{self.label}-metric", x_independent=False,
        )

    def profile_values(self, x1: np.ndarray) -> np.ndarray:
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        points = jnp.asarray(np.stack([x1, np.zeros_like(x1)], axis=-1))
        return np.asarray(jax.vmap(self.profile)(points))

    def describe(self) -> dict:
        if self.config is not None:
            return self.config.model_dump(mode="json")
        return {"kind": self.kind.value, "dim": self.dim, "periods": list(self.periods)}


def unbounded(dim: int = 2, window: float = 4.0, name: str = "plane") -> ManifoldModel:
    return ManifoldModel(ModelKind.UNBOUNDED, dim, (None,) * dim, window=window, name=name)


def torus(periods, name: str = "torus") -> ManifoldModel:
    periods = tuple(float(p) for p in periods)
    return ManifoldModel(ModelKind.TORUS, len(periods), periods, name=name)


def warped_surface(profile: Union[CoefficientConfig, Callable, None] = None, period: float = 1.0,
                   bound: float = 6.0, name: str = "warped") -> ManifoldModel:
    """Default profile exp(-x1^2): complete, finite area sqrt(pi) * period, not compact."""
    if profile is None:
        profile = CoefficientConfig(kind="gaussian", var=0, amplitude=1.0, width=1.0)
    if isinstance(profile, CoefficientConfig):
        profile = build_coefficient(profile, 2)
    return ManifoldModel(ModelKind.WARPED, 2, (None, float(period)), profile=profile, bound=bound, name=name)


def model_from_config(config: ModelConfig, name: str = "") -> ManifoldModel:
    if config.kind == ModelKind.UNBOUNDED:
        model = unbounded(config.dim, window=config.window, name=name or "plane")
    elif config.kind == ModelKind.TORUS:
        model = torus(config.periods, name=name or "torus")
    else:
        if config.profile.var != 0:
            raise ConfigError("the warped profile depends on x1 only", field="profile.var")
        model = warped_surface(config.profile, period=config.period, bound=config.bound, name=name or "warped")
    return replace(model, config=config)


def load_model(path: Union[str, Path]) -> ManifoldModel:
    path = Path(path)
    try:
        config = ModelConfig.model_validate(json.loads(path.read_text()))
    except FileNotFoundError:
        raise ConfigError(f"model file not found: {path}", field="--model")
    except ValueError as e:
        raise ConfigError(str(e), field="--model")
    return model_from_config(config, name=path.stem)
