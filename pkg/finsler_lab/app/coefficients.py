"""
Named coefficient profiles for metrics read from JSON.

Every builder returns a function of the chart point `x` written with
`jax.numpy`, so the metric built on top of it can be differentiated exactly.
"""
from typing import Callable, List, Sequence

import jax.numpy as jnp

from .errors import ConfigError
from .models import CoefficientConfig, PhiConfig, Scalar

ScalarField = Callable[[jnp.ndarray], jnp.ndarray]


def build_coefficient(profile: Scalar, dim: int) -> ScalarField:
    if isinstance(profile, (int, float)):
        value = float(profile)
        return lambda x: jnp.asarray(value, dtype=x.dtype)
    if profile.var >= dim:
        raise ConfigError(f"coefficient depends on x{profile.var + 1} but dim is {dim}", field="var")

    i = profile.var
    if profile.kind == "constant":
        return lambda x: jnp.asarray(profile.value, dtype=x.dtype)
    if profile.kind == "polynomial":
        coeffs = jnp.asarray(profile.coeffs[::-1] or [0.0])
        return lambda x: jnp.polyval(coeffs, x[i])
    if profile.kind == "gaussian":
        return lambda x: profile.offset + profile.amplitude * jnp.exp(-((x[i] - profile.center) / profile.width) ** 2)
    if profile.kind == "sine":
        return lambda x: profile.offset + profile.amplitude * jnp.sin(profile.frequency * x[i] + profile.phase)
    if profile.kind == "stereographic":
        return lambda x: profile.scale * 4.0 / (1.0 + jnp.dot(x, x)) ** 2
    raise ConfigError(f"unknown coefficient kind '{profile.kind}'", field="kind")


def is_constant(profile: Scalar) -> bool:
    return isinstance(profile, (int, float)) or profile.kind == "constant"


def build_matrix_field(rows: List[List[Scalar]], dim: int) -> Callable[[jnp.ndarray], jnp.ndarray]:
    entries = [[build_coefficient(entry, dim) for entry in row] for row in rows]

    def field(x):
        a = jnp.stack([jnp.stack([entry(x) for entry in row]) for row in entries])
        return 0.5 * (a + a.T)

    return field


def build_vector_field(values: Sequence[Scalar], dim: int) -> Callable[[jnp.ndarray], jnp.ndarray]:
    entries = [build_coefficient(entry, dim) for entry in values]
    return lambda x: jnp.stack([entry(x) for entry in entries])


def build_phi(profile: PhiConfig) -> Callable[[jnp.ndarray], jnp.ndarray]:
    """phi(s) for the named (alpha, beta) profiles."""
    if profile.kind == "riemannian":
        return lambda s: jnp.ones_like(s)
    if profile.kind == "randers":
        return lambda s: 1.0 + s
    if profile.kind == "quadratic":
        return lambda s: 1.0 + s ** 2
    if profile.kind in ("matsumoto", "slope"):
        # F = alpha^2 / (alpha - beta), admissible on the cone alpha > beta
        return lambda s: 1.0 / (1.0 - s)
    if profile.kind == "polynomial":
        if not profile.coeffs:
            raise ConfigError("polynomial phi needs coefficients", field="phi.coeffs")
        coeffs = jnp.asarray(profile.coeffs[::-1])
        return lambda s: jnp.polyval(coeffs, s)
    raise ConfigError(f"unknown phi kind '{profile.kind}'", field="phi.kind")
