"""
Finsler metric families, the fundamental tensor and numerical validation of
the Finsler axioms.

A `MetricSpec` wraps a fundamental function F(x, y) written with
`jax.numpy`. Second derivatives of F^2 come from forward-mode automatic
differentiation (`jax.jacfwd`), which is exact up to rounding; callables that
cannot be traced by jax fall back to central differences.
"""
import json
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import jax
import jax.numpy as jnp
import numpy as np

from .coefficients import build_matrix_field, build_phi, build_vector_field, is_constant
from .errors import ConfigError, DomainError, StrongConvexityError
from .models import (
    MetricConfig,
    MetricFamily,
    NormConfig,
    PhiConfig,
    ValidationCheck,
    ValidationReport,
)

logger = logging.getLogger(__name__)

RANDERS_MARGIN = 1e-12
EPS = np.finfo(float).eps


@dataclass(frozen=True)
class TangentVector:
    base: np.ndarray
    dir: np.ndarray

    @classmethod
    def of(cls, base, direction) -> "TangentVector":
        return cls(np.asarray(base, dtype=float), np.asarray(direction, dtype=float))


@dataclass(frozen=True)
class FundamentalTensor:
    g: np.ndarray
    det_g: float
    g_inv: np.ndarray


@dataclass(frozen=True, eq=False)
class MetricSpec:
    """
    Immutable Finsler fundamental function F(x, y) on a chart of dimension `dim`.

    `alpha` and `beta` are the Riemannian field x -> a(x) and the one-form
    field x -> b(x) when the family has them; `phi` is the (alpha, beta)
    profile. All callables are jax-traceable unless `traceable` is False.
    """
    family: MetricFamily
    dim: int
    fn: Callable[[Any, Any], Any]
    name: str = ""
    alpha: Optional[Callable] = None
    beta: Optional[Callable] = None
    phi: Optional[Callable] = None
    phi_kind: Optional[str] = None
    x_independent: bool = False
    traceable: bool = True
    config: Optional[MetricConfig] = field(default=None, repr=False)

    def __post_init__(self):
        if self.dim < 2:
            raise DomainError(f"dimension must be at least 2, got {self.dim}")

    # --- compiled kernels --------------------------------------------------------

    @cached_property
    def _kernels(self) -> Dict[str, Callable]:
        fn = self.fn

        def f2(x, y):
            return fn(x, y) ** 2

        def tensor(x, y):
            return 0.5 * jax.jacfwd(jax.jacfwd(f2, argnums=1), argnums=1)(x, y)

        def spray(x, y):
            if self.x_independent:
                return jnp.zeros_like(y)
            dy = jax.jacfwd(f2, argnums=1)
            mixed = jax.jacfwd(dy, argnums=0)(x, y)
            dx = jax.jacfwd(f2, argnums=0)(x, y)
            return 0.25 * jnp.linalg.solve(tensor(x, y), mixed @ y - dx)

        grad_y = jax.jacfwd(fn, argnums=1)
        kernels = {"F": fn, "g": tensor, "spray": spray, "grad_y": grad_y}
        compiled = {key: jax.jit(kernel) for key, kernel in kernels.items()}
        compiled.update({f"{key}_batch": jax.jit(jax.vmap(kernel)) for key, kernel in kernels.items()})
        return compiled

    def _call(self, key: str, x, y) -> np.ndarray:
        if self.traceable:
            return np.asarray(self._kernels[key](jnp.asarray(x, dtype=float), jnp.asarray(y, dtype=float)))
        return _FD_KERNELS[key](self, np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    def _call_batch(self, key: str, xs, ys) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        xs, ys = np.broadcast_arrays(xs, ys)
        if self.traceable:
            return np.asarray(self._kernels[f"{key}_batch"](jnp.asarray(xs), jnp.asarray(ys)))
        return np.stack([_FD_KERNELS[key](self, x, y) for x, y in zip(xs, ys)])

    # --- evaluation --------------------------------------------------------------

    def F(self, x, y) -> float:
        return float(self._call("F", x, y))

    def F_batch(self, xs, ys) -> np.ndarray:
        return self._call_batch("F", xs, ys)

    def tensor(self, x, y) -> np.ndarray:
        g = self._call("g", x, y)
        return 0.5 * (g + g.T)

    def tensor_batch(self, xs, ys) -> np.ndarray:
        g = self._call_batch("g", xs, ys)
        return 0.5 * (g + np.swapaxes(g, -1, -2))

    def det_g_batch(self, xs, ys) -> np.ndarray:
        return np.linalg.det(self.tensor_batch(xs, ys))

    def spray(self, x, y) -> np.ndarray:
        return self._call("spray", x, y)

    def spray_batch(self, xs, ys) -> np.ndarray:
        return self._call_batch("spray", xs, ys)

    def grad_y(self, x, y) -> np.ndarray:
        return self._call("grad_y", x, y)

    def grad_y_batch(self, xs, ys) -> np.ndarray:
        return self._call_batch("grad_y", xs, ys)

    def a_matrix(self, x) -> np.ndarray:
        if self.alpha is None:
            raise DomainError(f"metric '{self.label}' has no Riemannian part alpha")
        return np.asarray(self.alpha(jnp.asarray(x, dtype=float)))

    def b_vector(self, x) -> np.ndarray:
        if self.beta is None:
            raise DomainError(f"metric '{self.label}' has no one-form beta")
        return np.asarray(self.beta(jnp.asarray(x, dtype=float)))

    def b_squared(self, x) -> float:
        """b^2(x) = a^{ij} b_i b_j."""
        a, b = self.a_matrix(x), self.b_vector(x)
        return float(b @ np.linalg.solve(a, b))

    @property
    def label(self) -> str:
        return self.name or self.family.value

    @cached_property
    def absolutely_homogeneous(self) -> bool:
        """F(x, -y) = F(x, y) on a fixed sample of points and directions."""
        rng = np.random.default_rng(0)
        xs = rng.uniform(-1.0, 1.0, size=(64, self.dim))
        ys = rng.normal(size=(64, self.dim))
        forward, backward = self.F_batch(xs, ys), self.F_batch(xs, -ys)
        return bool(np.max(np.abs(forward - backward) / forward) <= 1e-10)


# --- finite-difference fallback ------------------------------------------------------

def _step(scale: float, power: float) -> float:
    return EPS ** power * max(1.0, scale)


def _fd_value(metric: MetricSpec, x, y):
    return float(metric.fn(x, y))


def _fd_grad(fun: Callable[[np.ndarray], float], z: np.ndarray) -> np.ndarray:
    h = _step(float(np.max(np.abs(z))), 1.0 / 3.0)
    basis = np.eye(z.size) * h
    return np.array([(fun(z + e) - fun(z - e)) / (2 * h) for e in basis])


def central_hessian(fun: Callable[[np.ndarray], float], z: np.ndarray, h: Optional[float] = None) -> np.ndarray:
    """Second-order central differences of a scalar function."""
    z = np.asarray(z, dtype=float)
    if h is None:
        h = _step(float(np.max(np.abs(z))), 0.25)
    n = z.size
    hess = np.empty((n, n))
    f0 = fun(z)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        hess[i, i] = (fun(z + ei) - 2 * f0 + fun(z - ei)) / h ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            hess[i, j] = hess[j, i] = (
                fun(z + ei + ej) - fun(z + ei - ej) - fun(z - ei + ej) + fun(z - ei - ej)
            ) / (4 * h ** 2)
    return hess


def _fd_tensor(metric: MetricSpec, x, y):
    return 0.5 * central_hessian(lambda v: metric.fn(x, v) ** 2, y)


def _fd_spray(metric: MetricSpec, x, y):
    if metric.x_independent:
        return np.zeros_like(y)
    n = metric.dim
    f2 = lambda xx, yy: metric.fn(xx, yy) ** 2
    dx = _fd_grad(lambda xx: f2(xx, y), x)
    h = _step(float(np.max(np.abs(x))), 1.0 / 3.0)
    mixed = np.empty((n, n))
    for k in range(n):
        ek = np.zeros(n)
        ek[k] = h
        plus = _fd_grad(lambda yy: f2(x + ek, yy), y)
        minus = _fd_grad(lambda yy: f2(x - ek, yy), y)
        mixed[:, k] = (plus - minus) / (2 * h)
    return 0.25 * np.linalg.solve(_fd_tensor(metric, x, y), mixed @ y - dx)


def _fd_grad_y(metric: MetricSpec, x, y):
    return _fd_grad(lambda yy: metric.fn(x, yy), y)


_FD_KERNELS = {"F": _fd_value, "g": _fd_tensor, "spray": _fd_spray, "grad_y": _fd_grad_y}


# --- constructors --------------------------------------------------------------------

def _as_field(value, dim: int, shape: tuple) -> Callable:
    if callable(value):
        return value
    arr = jnp.asarray(np.asarray(value, dtype=float).reshape(shape))
    return lambda x: arr


def _alpha_norm(a_field):
    def alpha(x, y):
        return jnp.sqrt(y @ a_field(x) @ y)
    return alpha


def euclidean(dim: int = 2, name: str = "euclidean") -> MetricSpec:
    eye = jnp.eye(dim)
    return MetricSpec(
        MetricFamily.EUCLIDEAN, dim, lambda x, y: jnp.sqrt(y @ y), name=name,
        alpha=lambda x: eye, x_independent=True,
    )


def riemannian(a, dim: int, name: str = "riemannian", x_independent: Optional[bool] = None) -> MetricSpec:
    a_field = _as_field(a, dim, (dim, dim))
    return MetricSpec(
        MetricFamily.RIEMANNIAN, dim, _alpha_norm(a_field), name=name, alpha=a_field,
        x_independent=not callable(a) if x_independent is None else x_independent,
    )


def randers(a, b, dim: int, name: str = "randers", x_independent: Optional[bool] = None) -> MetricSpec:
    a_field = _as_field(a, dim, (dim, dim))
    b_field = _as_field(b, dim, (dim,))
    alpha = _alpha_norm(a_field)
    return MetricSpec(
        MetricFamily.RANDERS, dim, lambda x, y: alpha(x, y) + b_field(x) @ y, name=name,
        alpha=a_field, beta=b_field,
        x_independent=not (callable(a) or callable(b)) if x_independent is None else x_independent,
    )


def alpha_beta(a, b, phi: Callable, dim: int, name: str = "alpha_beta",
               x_independent: Optional[bool] = None, phi_kind: Optional[str] = None) -> MetricSpec:
    """F = alpha * phi(beta / alpha)."""
    a_field = _as_field(a, dim, (dim, dim))
    b_field = _as_field(b, dim, (dim,))
    alpha = _alpha_norm(a_field)

    def fn(x, y):
        al = alpha(x, y)
        return al * phi((b_field(x) @ y) / al)

    return MetricSpec(
        MetricFamily.ALPHA_BETA, dim, fn, name=name, alpha=a_field, beta=b_field, phi=phi, phi_kind=phi_kind,
        x_independent=not (callable(a) or callable(b)) if x_independent is None else x_independent,
    )


def slope(a, b, dim: int, name: str = "slope", x_independent: Optional[bool] = None) -> MetricSpec:
    """F = alpha^2 / (alpha - beta) on the cone alpha > beta."""
    return alpha_beta(a, b, build_phi(PhiConfig(kind="slope")), dim, name=name,
                      x_independent=x_independent, phi_kind="slope")


def minkowski(norm: NormConfig, dim: int, name: str = "minkowski") -> MetricSpec:
    if norm.kind == "lp":
        p = norm.p
        if float(p).is_integer() and int(p) % 2 == 0:
            fn = lambda x, y: jnp.sum(y ** int(p)) ** (1.0 / p)
        else:
            fn = lambda x, y: jnp.sum(jnp.abs(y) ** p) ** (1.0 / p)
    else:
        c = norm.c

        def fn(x, y):
            sq = y ** 2
            return (jnp.sum(sq ** 2) + 0.5 * c * (jnp.sum(sq) ** 2 - jnp.sum(sq ** 2))) ** 0.25
    return MetricSpec(MetricFamily.MINKOWSKI, dim, fn, name=name, x_independent=True)


def custom(fn: Callable, dim: int, name: str = "custom", traceable: Optional[bool] = None,
           x_independent: bool = False) -> MetricSpec:
    """Wrap an arbitrary F(x, y); differentiation falls back to finite differences if jax cannot trace it."""
    if traceable is None:
        try:
            jax.jit(fn)(jnp.zeros(dim), jnp.ones(dim))
            traceable = True
        except TypeError as e:
            logger.info("metric '%s' is not jax-traceable (%s); using central differences", name, e)
            traceable = False
    return MetricSpec(MetricFamily.CUSTOM, dim, fn, name=name, traceable=traceable, x_independent=x_independent)


def metric_from_config(config: MetricConfig) -> MetricSpec:
    dim = config.dim
    name = config.name or config.family.value
    constant = all(is_constant(e) for row in (config.a or []) for e in row) and all(
        is_constant(e) for e in (config.b or [])
    )
    if config.family == MetricFamily.EUCLIDEAN:
        metric = euclidean(dim, name=name)
    elif config.family == MetricFamily.RIEMANNIAN:
        metric = riemannian(build_matrix_field(config.a, dim), dim, name=name, x_independent=constant)
    elif config.family == MetricFamily.RANDERS:
        metric = randers(build_matrix_field(config.a, dim), build_vector_field(config.b, dim), dim,
                         name=name, x_independent=constant)
    elif config.family == MetricFamily.ALPHA_BETA:
        metric = alpha_beta(build_matrix_field(config.a, dim), build_vector_field(config.b, dim),
                            build_phi(config.phi), dim, name=name, x_independent=constant,
                            phi_kind=config.phi.kind)
    else:
        metric = minkowski(config.norm, dim, name=name)
    return replace(metric, config=config)


# --- operations ----------------------------------------------------------------------

def _check_vector(metric: MetricSpec, v: TangentVector) -> None:
    if v.base.shape != (metric.dim,) or v.dir.shape != (metric.dim,):
        raise DomainError(f"expected vectors of length {metric.dim}")
    if not (np.all(np.isfinite(v.base)) and np.all(np.isfinite(v.dir))):
        raise DomainError("non-finite chart point or direction")
    if not np.any(v.dir):
        raise DomainError("F is evaluated on nonzero directions only")


def eval_F(metric: MetricSpec, v: TangentVector) -> float:
    _check_vector(metric, v)
    return metric.F(v.base, v.dir)


def fundamental_tensor(metric: MetricSpec, v: TangentVector) -> FundamentalTensor:
    """g_ij = 1/2 d^2(F^2)/dy^i dy^j, with determinant and inverse."""
    _check_vector(metric, v)
    g = metric.tensor(v.base, v.dir)
    eigenvalues = np.linalg.eigvalsh(g)
    if not np.all(np.isfinite(eigenvalues)) or eigenvalues[0] <= 0:
        raise StrongConvexityError(v.base, v.dir, eigenvalues[0])
    return FundamentalTensor(g=g, det_g=float(np.prod(eigenvalues)), g_inv=np.linalg.inv(g))


def randers_fundamental_tensor(a: np.ndarray, b: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Closed form g_ij = (F/alpha)(a_ij - alpha_i alpha_j) + (alpha_i + b_i)(alpha_j + b_j)."""
    a, b, y = (np.asarray(v, dtype=float) for v in (a, b, y))
    alpha = np.sqrt(y @ a @ y)
    alpha_i = a @ y / alpha
    F = alpha + b @ y
    return (F / alpha) * (a - np.outer(alpha_i, alpha_i)) + np.outer(alpha_i + b, alpha_i + b)


def alpha_beta_det_formula(metric: MetricSpec, x, y) -> float:
    """det g = phi^{n+1} (phi - s phi')^{n-2} [(phi - s phi') + (b^2 - s^2) phi''] det a."""
    if metric.phi is None:
        raise DomainError("closed-form determinant needs an (alpha, beta) metric")
    n = metric.dim
    a, b = metric.a_matrix(x), metric.b_vector(x)
    y = np.asarray(y, dtype=float)
    s = float((b @ y) / np.sqrt(y @ a @ y))
    phi = metric.phi
    d1, d2 = jax.grad(phi), jax.grad(jax.grad(phi))
    p, p1, p2 = float(phi(s)), float(d1(s)), float(d2(s))
    b2 = metric.b_squared(x)
    return p ** (n + 1) * (p - s * p1) ** (n - 2) * ((p - s * p1) + (b2 - s * s) * p2) * float(np.linalg.det(a))


def validate_metric(metric: MetricSpec, model, n_samples: int = 200, seed: int = 0) -> ValidationReport:
    """Check the standing Finsler assumptions on sampled (x, y); failures are reported, never raised."""
    if n_samples < 1:
        raise DomainError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    xs = model.sample_points(rng, n_samples)
    ys = rng.normal(size=(n_samples, metric.dim))
    ys /= np.linalg.norm(ys, axis=1, keepdims=True)
    checks = []

    F = metric.F_batch(xs, ys)
    checks.append(ValidationCheck(
        name="positivity", passed=bool(np.all(F > 0)), margin=float(np.min(F)),
        detail="min F over Euclidean unit directions",
    ))
    safe = np.where(F > 0, F, 1.0)

    worst = 0.0
    for lam in (0.5, 2.0, 3.7):
        worst = max(worst, float(np.max(np.abs(metric.F_batch(xs, lam * ys) - lam * F) / (lam * safe))))
    checks.append(ValidationCheck(name="homogeneity", passed=worst <= 1e-10, margin=1e-10 - worst,
                                  detail="max |F(x, ly) - l F(x, y)| / (l F)"))

    grads = metric.grad_y_batch(xs, ys)
    euler = float(np.max(np.abs(np.einsum("ij,ij->i", grads, ys) - F) / safe))
    checks.append(ValidationCheck(name="euler_identity", passed=euler <= 1e-8, margin=1e-8 - euler,
                                  detail="max |y^i dF/dy^i - F| / F"))

    g = metric.tensor_batch(xs, ys)
    g2 = metric.tensor_batch(xs, 2.0 * ys)
    scale = 1.0 + float(np.max(np.abs(g)))
    zero_hom = float(np.max(np.abs(g2 - g))) / scale
    checks.append(ValidationCheck(name="tensor_homogeneity", passed=zero_hom <= 1e-8, margin=1e-8 - zero_hom,
                                  detail="max |g(x, 2y) - g(x, y)| / (1 + max |g|)"))

    quad = np.einsum("ki,kij,kj->k", ys, g, ys)
    identity = float(np.max(np.abs(quad - F ** 2) / safe ** 2))
    checks.append(ValidationCheck(name="tensor_identity", passed=identity <= 1e-8, margin=1e-8 - identity,
                                  detail="max |g_ij y^i y^j - F^2| / F^2"))

    min_eig = float(np.min(np.linalg.eigvalsh(g)))
    checks.append(ValidationCheck(name="strong_convexity", passed=min_eig > 0, margin=min_eig,
                                  detail="min eigenvalue of g over samples"))

    if metric.family == MetricFamily.RANDERS:
        b2 = max(metric.b_squared(x) for x in xs)
        margin = (1.0 - RANDERS_MARGIN) - b2
        checks.append(ValidationCheck(name="randers_condition", passed=margin > 0, margin=margin,
                                      detail=f"max b^2 = {b2:.12g}"))

    shifts = model.period_shifts()
    if shifts:
        worst = 0.0
        for shift in shifts:
            worst = max(worst, float(np.max(np.abs(metric.F_batch(xs + shift, ys) - F) / safe)))
        checks.append(ValidationCheck(name="periodicity", passed=worst <= 1e-10, margin=1e-10 - worst,
                                      detail="max |F(x + period, y) - F(x, y)| / F"))

    report = ValidationReport(
        metric=metric.label, n_samples=n_samples, checks=checks, min_eigenvalue=min_eig,
        absolutely_homogeneous=metric.absolutely_homogeneous,
    )
    logger.info("validated %s: %s", metric.label, "pass" if report.passed else "FAIL")
    return report


def load_metric(path) -> MetricSpec:
    """Read a metric JSON document (see README for the schema)."""
    path = Path(path)
    try:
        config = MetricConfig.model_validate(json.loads(path.read_text()))
    except FileNotFoundError:
        raise ConfigError(f"metric file not found: {path}", field="--metric")
    except ValueError as e:
        raise ConfigError(str(e), field="--metric")
    if config.name is None:
        config = config.model_copy(update={"name": path.stem})
    return metric_from_config(config)
