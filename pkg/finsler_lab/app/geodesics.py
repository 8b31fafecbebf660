"""
Geodesic spray, the geodesic flow on TM and its conservation laws.

The flow is the first-order system x' = y, y' = -2 G(x, y) integrated with
scipy's adaptive RK45 and dense output. Velocities are never renormalized;
the drift of F along the trace decides whether the trace is accepted.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp, trapezoid

from .errors import DomainError, IntegrationError
from .manifold import ManifoldModel
from .metric_core import MetricSpec, TangentVector, fundamental_tensor
from .models import IntegrationOptions, LiouvilleReport

logger = logging.getLogger(__name__)

# scipy warns below 100 * machine epsilon
MIN_RTOL = 3e-14


@dataclass(frozen=True)
class PhaseState:
    x: np.ndarray
    y: np.ndarray

    @classmethod
    def of(cls, x, y) -> "PhaseState":
        state = cls(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        if state.x.shape != state.y.shape or state.x.ndim != 1:
            raise DomainError("x and y must be vectors of the same length")
        if not np.any(state.y):
            raise DomainError("phase states need a nonzero velocity")
        return state

    @classmethod
    def unit(cls, metric: MetricSpec, x, y) -> "PhaseState":
        """Rescale y so that F(x, y) = 1."""
        state = cls.of(x, y)
        return cls(state.x, state.y / metric.F(state.x, state.y))

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])

    def is_unit(self, metric: MetricSpec, tol: float = 1e-9) -> bool:
        return abs(metric.F(self.x, self.y) - 1.0) <= tol


@dataclass(frozen=True)
class SprayCoefficients:
    G: np.ndarray


@dataclass(frozen=True, eq=False)
class GeodesicTrace:
    """
    Sampled geodesic. `xs` are wrapped by the model's periodicity and
    `xs_unwrapped` keep the lift used for length accounting. `dense(t)`
    evaluates the unwrapped state (x, y) anywhere in the time span.
    """
    times: np.ndarray
    xs: np.ndarray
    xs_unwrapped: np.ndarray
    ys: np.ndarray
    F_values: np.ndarray
    F_drift: float
    metric: MetricSpec = field(repr=False)
    model: ManifoldModel = field(repr=False)
    dense: Optional[Callable[[float], np.ndarray]] = field(default=None, repr=False)
    terminated: bool = False

    def __len__(self) -> int:
        return len(self.times)

    @property
    def states(self) -> List[PhaseState]:
        return [PhaseState(x, y) for x, y in zip(self.xs, self.ys)]

    @property
    def final(self) -> PhaseState:
        return PhaseState(self.xs[-1], self.ys[-1])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def length(self) -> float:
        return float(trapezoid(self.F_values, self.times))

    def at(self, t: float) -> PhaseState:
        z = self._dense_z(np.atleast_1d(float(t)))[:, 0]
        n = self.metric.dim
        return PhaseState(self.model.wrap(z[:n]), z[n:])

    def _dense_z(self, t: np.ndarray) -> np.ndarray:
        if self.dense is None:
            raise DomainError("trace has no dense output")
        return np.asarray(self.dense(t))

    def resample(self, n_samples: int) -> "GeodesicTrace":
        """Uniform parameter grid over the same time span."""
        if n_samples < 2:
            raise DomainError("resampling needs at least two samples")
        times = np.linspace(self.times[0], self.times[-1], n_samples)
        return _trace_from_dense(self.metric, self.model, times, self.dense, self.terminated)

    def is_uniform(self, rtol: float = 1e-9) -> bool:
        steps = np.diff(self.times)
        return bool(np.all(np.abs(steps - steps[0]) <= rtol * abs(steps[0])))

    def rows(self) -> np.ndarray:
        """CSV matrix: t, x_1..x_n, y_1..y_n, F."""
        return np.column_stack([self.times, self.xs, self.ys, self.F_values])


def _trace_from_dense(metric, model, times, dense, terminated=False) -> GeodesicTrace:
    z = np.asarray(dense(times)).T
    n = metric.dim
    xs_unwrapped, ys = z[:, :n], z[:, n:]
    xs = model.wrap(xs_unwrapped)
    F = metric.F_batch(xs, ys)
    return GeodesicTrace(
        times=times, xs=xs, xs_unwrapped=xs_unwrapped, ys=ys, F_values=F,
        F_drift=float(np.max(np.abs(F - F[0]))), metric=metric, model=model,
        dense=dense, terminated=terminated,
    )


def spray(metric: MetricSpec, s: PhaseState) -> SprayCoefficients:
    """G^i = 1/4 g^{il} (d^2 F^2/dy^l dx^k y^k - dF^2/dx^l)."""
    fundamental_tensor(metric, TangentVector.of(s.x, s.y))
    if metric.x_independent:
        return SprayCoefficients(np.zeros(metric.dim))
    return SprayCoefficients(metric.spray(s.x, s.y))


def _straight_line(metric, model, s0: PhaseState, t_span, options) -> GeodesicTrace:
    x0, y0 = s0.x.copy(), s0.y.copy()

    def dense(t):
        t = np.atleast_1d(t)
        return np.concatenate([x0[:, None] + y0[:, None] * t, np.repeat(y0[:, None], len(t), axis=1)])

    count = int(min(max(abs(t_span[1] - t_span[0]) / options.max_step, 1.0), 1e5)) + 1
    times = np.linspace(min(t_span), max(t_span), count)
    return _trace_from_dense(metric, model, times, dense)


def integrate_flow(metric: MetricSpec, model: ManifoldModel, s0: PhaseState, t_end: float,
                   tol: Optional[float] = None, options: Optional[IntegrationOptions] = None,
                   events: Optional[Sequence[Callable]] = None) -> GeodesicTrace:
    """
    Integrate the geodesic flow from `s0` for parameter time `t_end`.

    Metrics without x-dependence have straight geodesics and skip the ODE
    solver. The trace is rejected when its F drift exceeds `tol`; one rerun
    with tolerances tightened 100x is attempted first.
    """
    options = options or IntegrationOptions()
    tol = options.tol if tol is None else tol
    if not t_end > 0:
        raise DomainError(f"t_end must be positive, got {t_end}")
    if tol <= 0:
        raise DomainError("tol must be positive")
    if s0.x.shape != (metric.dim,):
        raise DomainError(f"expected a state of dimension {metric.dim}")
    if not np.any(s0.y):
        raise DomainError("geodesics start from a nonzero velocity")
    t_span = (0.0, -t_end) if options.backward else (0.0, t_end)

    if metric.x_independent and not events:
        return _straight_line(metric, model, s0, t_span, options)

    n = metric.dim

    def rhs(t, z):
        x, y = model.wrap(z[:n]), z[n:]
        return np.concatenate([y, -2.0 * metric.spray(x, y)])

    rtol, atol = options.rtol, options.atol
    for attempt in range(options.retries + 1):
        sol = solve_ivp(rhs, t_span, s0.z, method="RK45", rtol=rtol, atol=atol,
                        max_step=options.max_step, dense_output=True, events=events)
        if sol.status == -1:
            raise IntegrationError(f"integrator failed: {sol.message}", sol.t[-1], sol.y[:, -1])
        times = sol.t if not options.backward else sol.t[::-1]
        trace = _trace_from_dense(metric, model, times, sol.sol, terminated=sol.status == 1)
        if trace.F_drift <= tol:
            return trace
        logger.debug("F drift %.3e above %.1e at rtol=%.1e; tightening", trace.F_drift, tol, rtol)
        rtol, atol = max(rtol / 100.0, MIN_RTOL), atol / 100.0

    bad = int(np.argmax(np.abs(trace.F_values - trace.F_values[0]) > tol))
    good = max(bad - 1, 0)
    raise IntegrationError(
        f"F drift {trace.F_drift:.3e} exceeds tolerance {tol:.1e}",
        trace.times[good], np.concatenate([trace.xs_unwrapped[good], trace.ys[good]]),
    )


def _flow_map(metric, model, z: np.ndarray, t: float, options: IntegrationOptions) -> np.ndarray:
    n = metric.dim
    trace = integrate_flow(metric, model, PhaseState(z[:n], z[n:]), t, options=options)
    return np.concatenate([trace.xs_unwrapped[-1], trace.ys[-1]])


def liouville_check(metric: MetricSpec, model: ManifoldModel, cell: List[PhaseState], t: float,
                    options: Optional[IntegrationOptions] = None) -> LiouvilleReport:
    """
    Ratio of the dV_omega mass (density det g(x, y) dx dy) of a small cell after
    and before the flow. The flow Jacobian is estimated by central differences
    along the cell's edge vectors around its centroid.
    """
    options = options or IntegrationOptions(tol=1e-8, rtol=1e-12, atol=1e-14)
    n = metric.dim
    if len(cell) < 2 * n + 1:
        raise DomainError(f"a phase cell in dimension {2 * n} needs at least {2 * n + 1} points")
    points = np.array([s.z for s in cell[: 2 * n + 1]])
    edges = points[1:] - points[0]
    scale = np.max(np.linalg.norm(edges, axis=1))
    det_edges = abs(np.linalg.det(edges))
    if scale == 0 or det_edges <= 1e-10 * scale ** (2 * n):
        raise DomainError("phase cell is degenerate")

    center = points.mean(axis=0)
    moved = np.array([
        _flow_map(metric, model, center + 0.5 * e, t, options) - _flow_map(metric, model, center - 0.5 * e, t, options)
        for e in edges
    ])
    jacobian_det = abs(np.linalg.det(moved)) / det_edges
    end = _flow_map(metric, model, center, t, options)
    density_start = fundamental_tensor(metric, TangentVector.of(model.wrap(center[:n]), center[n:])).det_g
    density_end = fundamental_tensor(metric, TangentVector.of(model.wrap(end[:n]), end[n:])).det_g
    ratio = density_end * jacobian_det / density_start
    logger.info("liouville ratio %.12f at t=%g", ratio, t)
    return LiouvilleReport(t=t, ratio=ratio, deviation=abs(ratio - 1.0), density_start=density_start,
                           density_end=density_end, jacobian_det=jacobian_det)


def _quadratic_basis(ys: np.ndarray) -> np.ndarray:
    n = ys.shape[1]
    return np.column_stack([ys[:, i] * ys[:, j] for i in range(n) for j in range(i, n)])


def berwald_deviation(metric: MetricSpec, x, n_dirs: int = 32, seed: int = 0) -> float:
    """
    Largest deviation of G(x, .) from its least-squares quadratic fit over
    random Euclidean unit directions, relative to the fit's magnitude.
    Zero for sprays that are quadratic in y.
    """
    n = metric.dim
    basis_size = n * (n + 1) // 2
    if n_dirs < 4 or n_dirs <= basis_size:
        raise DomainError(f"need more than {max(basis_size, 3)} directions in dimension {n}")
    rng = np.random.default_rng(seed)
    ys = rng.normal(size=(n_dirs, n))
    ys /= np.linalg.norm(ys, axis=1, keepdims=True)
    xs = np.broadcast_to(np.asarray(x, dtype=float), ys.shape)
    G = np.zeros_like(ys) if metric.x_independent else metric.spray_batch(xs, ys)
    basis = _quadratic_basis(ys)
    coeffs, *_ = np.linalg.lstsq(basis, G, rcond=None)
    fit = basis @ coeffs
    magnitude = float(np.max(np.abs(fit)))
    if magnitude == 0.0:
        return 0.0 if not np.any(G) else float("inf")
    return float(np.max(np.abs(fit - G)) / magnitude)
