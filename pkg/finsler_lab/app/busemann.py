"""
Finsler distances, rays and Busemann functions.

Distances come from shortest paths on a directed grid graph whose edge
from node p to node p + k h weighs F(p + k h / 2, k h); the stencil holds
the primitive offsets k with max |k_i| <= radius (16 neighbours in 2D for
radius 2, 26 in 3D for radius 1). Graph values are polished by shooting a
geodesic at the target. Metrics without x-dependence have straight
geodesics and are measured exactly.
"""
import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import least_squares
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .cache import FieldCache, field_key
from .dynamics import convexity_profile, sample_unit_states
from .errors import DistanceAccuracyError, DomainError, HorizonError, IntegrationError, MetricValidityError
from .geodesics import GeodesicTrace, PhaseState, integrate_flow
from .manifold import ManifoldModel
from .metric_core import MetricSpec
from .models import (
    BusemannConvexityReport,
    BusemannValue,
    Classification,
    DistanceOptions,
    DistanceValue,
    IntegrationOptions,
    ModelKind,
    RayCertificate,
)

logger = logging.getLogger(__name__)

EDGE_CHUNK = 1 << 18
SHOOTING = IntegrationOptions(tol=1e-7, rtol=1e-11, atol=1e-13)
INCONCLUSIVE = "inconclusive"


def stencil(n: int, radius: int) -> np.ndarray:
    """Primitive integer offsets with max-norm at most `radius`."""
    offsets = [
        o for o in itertools.product(range(-radius, radius + 1), repeat=n)
        if any(o) and np.gcd.reduce(np.abs(o)) == 1
    ]
    return np.array(offsets, dtype=int)


def _F_many(metric: MetricSpec, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """F on (m, n) batches; zero on zero displacements."""
    out = np.zeros(len(xs))
    nonzero = np.any(ys != 0, axis=1)
    idx = np.flatnonzero(nonzero)
    for i in range(0, len(idx), EDGE_CHUNK):
        part = idx[i:i + EDGE_CHUNK]
        out[part] = metric.F_batch(xs[part], ys[part])
    return out


@dataclass(frozen=True, eq=False)
class DistanceField:
    """
    Graph distances between `anchor` and every node of a regular grid:
    d(anchor, node) when `forward`, d(node, anchor) otherwise. Periodic
    axes span a full period.
    """
    anchor: np.ndarray
    lower: np.ndarray
    spacing: np.ndarray
    shape: Tuple[int, ...]
    values: np.ndarray
    predecessors: np.ndarray
    forward: bool
    metric: MetricSpec = field(repr=False)
    model: ManifoldModel = field(repr=False)

    @cached_property
    def nodes(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(len(self.shape), -1).T
        return self.lower + idx * self.spacing

    def grid(self) -> np.ndarray:
        return self.values.reshape(self.shape)

    def _corners(self, xs: np.ndarray):
        """Flat indices and chart positions of the 2^n grid nodes around each point."""
        n = len(self.shape)
        shape = np.array(self.shape)
        periodic = self.model.periodic
        xw = self.model.wrap(xs)
        base = np.floor((xw - self.lower) / self.spacing + 1e-12).astype(int)
        base = np.where(periodic, base, np.minimum(base, shape - 2))
        outside = np.any(~periodic & ((base < 0) | (base > shape - 2)), axis=1)
        if np.any(outside):
            raise HorizonError(f"point {xs[np.argmax(outside)].tolist()} lies outside the distance grid")
        corners = np.array(list(itertools.product((0, 1), repeat=n)))
        cells = base[:, None, :] + corners[None, :, :]
        positions = self.lower + cells * self.spacing
        wrapped = np.where(periodic, cells % shape, cells)
        flat = np.ravel_multi_index(tuple(wrapped.reshape(-1, n).T), self.shape).reshape(cells.shape[:2])
        return xw, flat, positions

    def values_at(self, xs) -> np.ndarray:
        """Field value at arbitrary points: best grid corner plus the straight last leg."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        n = xs.shape[1]
        xw, flat, positions = self._corners(xs)
        points = np.broadcast_to(xw[:, None, :], positions.shape)
        legs = points - positions if self.forward else positions - points
        mids = self.model.wrap(0.5 * (points + positions))
        cost = _F_many(self.metric, mids.reshape(-1, n), legs.reshape(-1, n)).reshape(flat.shape)
        total = self.values[flat] + cost
        best = np.min(total, axis=1)
        if not np.all(np.isfinite(best)):
            raise HorizonError("target not reachable inside the truncated domain")
        return best

    def value_at(self, x) -> float:
        return float(self.values_at(x)[0])

    def path_to(self, x) -> np.ndarray:
        """Node path from the anchor towards x in unwrapped chart coordinates, ending at x."""
        if not self.forward:
            raise DomainError("paths are reconstructed from forward fields")
        x = np.asarray(x, dtype=float)
        xw, flat, positions = self._corners(x[None, :])
        legs = xw[0] - positions[0]
        mids = self.model.wrap(xw[0] - 0.5 * legs)
        total = self.values[flat[0]] + _F_many(self.metric, mids, legs)
        node = int(flat[0][np.argmin(total)])
        chain = [node]
        while self.predecessors[chain[-1]] >= 0:
            chain.append(int(self.predecessors[chain[-1]]))
        chain.reverse()
        steps = self.model.minimal_image(np.diff(self.nodes[chain], axis=0))
        path = self.anchor + np.concatenate([np.zeros((1, len(self.shape))), np.cumsum(steps, axis=0)])
        last = path[-1] + self.model.minimal_image(xw[0] - self.model.wrap(path[-1]))
        return np.vstack([path, last])


def _grid_layout(model: ManifoldModel, anchor, lower, upper, resolution: int, radius: int):
    n = model.dim
    spacing, start, shape = np.empty(n), np.empty(n), []
    wrapped = model.wrap(anchor)
    for k in range(n):
        if model.periodic[k]:
            period = model.periods[k]
            m = max(int(round(period * resolution)), 2 * radius + 2)
            spacing[k] = period / m
            start[k] = wrapped[k] - spacing[k] * np.floor(wrapped[k] / spacing[k])
        else:
            spacing[k] = 1.0 / resolution
            start[k] = anchor[k] - spacing[k] * np.ceil((anchor[k] - lower[k]) / spacing[k] - 1e-9)
            m = int(np.ceil((upper[k] - start[k]) / spacing[k] - 1e-9)) + 1
        shape.append(max(m, 2))
    return start, spacing, tuple(shape)


def distance_field(metric: MetricSpec, model: ManifoldModel, anchor, lower, upper, resolution: int = 64,
                   radius: int = 2, forward: bool = True, cache: Optional[FieldCache] = None) -> DistanceField:
    """Dijkstra on the directed stencil graph over the box [lower, upper] (full periods on periodic axes)."""
    n = metric.dim
    anchor = np.asarray(anchor, dtype=float)
    start, spacing, shape = _grid_layout(model, anchor, np.asarray(lower, float), np.asarray(upper, float),
                                         resolution, radius)
    shape_arr = np.array(shape)
    anchor_idx = np.rint((model.wrap(anchor) - start) / spacing).astype(int)
    anchor_idx = np.where(model.periodic, anchor_idx % shape_arr, anchor_idx)
    anchor_flat = int(np.ravel_multi_index(tuple(anchor_idx), shape))

    key = None
    if cache is not None and metric.config is not None:
        key = field_key(metric=metric.config.model_dump(mode="json"), model=model.describe(),
                        anchor=np.round(anchor, 12), start=np.round(start, 12), spacing=spacing,
                        shape=shape, radius=radius, forward=forward)
        hit = cache.get(key)
        if hit is not None:
            logger.debug("distance field %s served from cache", key[:12])
            return DistanceField(anchor, start, spacing, shape, np.array(hit["values"], dtype=float),
                                 np.array(hit["predecessors"], dtype=int), forward, metric, model)

    idx = np.indices(shape).reshape(n, -1).T
    coords = start + idx * spacing
    rows, cols, weights = [], [], []
    for offset in stencil(n, radius if n == 2 else 1):
        target = idx + offset
        valid = np.ones(len(idx), dtype=bool)
        for k in range(n):
            if model.periodic[k]:
                target[:, k] %= shape[k]
            else:
                valid &= (target[:, k] >= 0) & (target[:, k] < shape[k])
        step = offset * spacing
        if metric.x_independent:
            w = np.full(int(valid.sum()), metric.F(anchor, step))
        else:
            mids = model.wrap(coords[valid] + 0.5 * step)
            w = _F_many(metric, mids, np.broadcast_to(step, mids.shape).copy())
        rows.append(np.ravel_multi_index(tuple(idx[valid].T), shape))
        cols.append(np.ravel_multi_index(tuple(target[valid].T), shape))
        weights.append(w)
    weights = np.concatenate(weights)
    if not np.all(np.isfinite(weights) & (weights > 0)):
        raise MetricValidityError("non-positive edge length in the distance graph")
    size = int(np.prod(shape))
    graph = csr_matrix((weights, (np.concatenate(rows), np.concatenate(cols))), shape=(size, size))
    if not forward:
        graph = graph.T.tocsr()
    values, predecessors = dijkstra(graph, directed=True, indices=anchor_flat, return_predecessors=True)
    logger.debug("distance field on %s nodes (%s edges)", shape, graph.nnz)
    result = DistanceField(anchor, start, spacing, shape, values, predecessors, forward, metric, model)
    if key is not None:
        cache.set(key, {"values": values.tolist(), "predecessors": predecessors.tolist()},
                  label=f"{metric.label}@{model.label} {'from' if forward else 'to'} {anchor.tolist()}")
    return result


# --- two-point distance ---------------------------------------------------------------

def _use_exact(metric: MetricSpec, options: DistanceOptions) -> bool:
    if options.method == "exact" and not metric.x_independent:
        raise DomainError("exact distances need a metric without x-dependence")
    return options.method == "exact" or (options.method == "auto" and metric.x_independent)


def _exact_distance(metric: MetricSpec, model: ManifoldModel, x0, x1) -> float:
    """Straight segment to the nearest lift; exact for x-independent metrics."""
    d = model.minimal_image(np.asarray(x1, float) - np.asarray(x0, float))
    if not np.any(d):
        return 0.0
    shifts = [np.zeros(model.dim)]
    periodic = np.flatnonzero(model.periodic)
    if len(periodic):
        shifts = []
        for combo in itertools.product((-1, 0, 1), repeat=len(periodic)):
            shift = np.zeros(model.dim)
            shift[periodic] = np.array(combo) * model.period_vector[periodic]
            shifts.append(shift)
    candidates = np.array([d + s for s in shifts])
    return float(np.min(_F_many(metric, np.broadcast_to(np.asarray(x0, float), candidates.shape).copy(), candidates)))


def _check_domain(model: ManifoldModel, points) -> None:
    if model.kind == ModelKind.WARPED:
        x1 = np.abs(np.atleast_2d(points)[:, 0])
        if np.any(x1 > model.bound):
            raise HorizonError(f"|x1| = {np.max(x1):.3g} beyond the truncation bound {model.bound}")


def _box(model: ManifoldModel, points, margin: float):
    points = np.atleast_2d(points)
    lower, upper = points.min(axis=0) - margin, points.max(axis=0) + margin
    if model.kind == ModelKind.WARPED:
        lower[0], upper[0] = max(lower[0], -model.bound), min(upper[0], model.bound)
    return lower, upper


def _effective_resolution(model: ManifoldModel, lower, upper, options: DistanceOptions) -> int:
    extent = np.where(model.periodic, model.period_vector, upper - lower)
    nodes = float(np.prod(extent * options.resolution + 1))
    if nodes <= options.max_nodes:
        return options.resolution
    resolution = max(int(options.resolution * (options.max_nodes / nodes) ** (1.0 / model.dim)), 8)
    logger.info("distance grid coarsened to %d nodes per unit for a box of extent %s", resolution, extent.tolist())
    return resolution


def field_for(metric: MetricSpec, model: ManifoldModel, anchor, points, options: Optional[DistanceOptions] = None,
              forward: bool = True, coarsen: int = 1, cache: Optional[FieldCache] = None) -> DistanceField:
    """Distance field anchored at `anchor` on a box covering it and `points` with the configured margin."""
    options = options or DistanceOptions()
    anchor = np.asarray(anchor, dtype=float)
    lower, upper = _box(model, np.vstack([np.atleast_2d(points), anchor]), options.margin)
    resolution = max(_effective_resolution(model, lower, upper, options) // coarsen, 4)
    return distance_field(metric, model, anchor, lower, upper, resolution, options.stencil_radius,
                          forward=forward, cache=cache)


def field_pair(metric, model, anchor, points, options: DistanceOptions, forward: bool,
               cache: Optional[FieldCache] = None) -> Tuple[DistanceField, DistanceField]:
    """Fields at spacing h and 2h; their difference is the grid error estimate."""
    return (field_for(metric, model, anchor, points, options, forward, 1, cache),
            field_for(metric, model, anchor, points, options, forward, 2, cache))


def _shoot(metric, model, x0: np.ndarray, target: np.ndarray, guess: np.ndarray):
    """Initial velocity v with gamma_v(1) = target (unwrapped); None when shooting fails."""
    def residual(v):
        if not np.any(v):
            return x0 - target
        trace = integrate_flow(metric, model, PhaseState(x0, v), 1.0, options=SHOOTING)
        return trace.xs_unwrapped[-1] - target

    try:
        fit = least_squares(residual, guess, xtol=1e-13, ftol=1e-13, gtol=1e-13)
    except IntegrationError as e:
        logger.debug("shooting from %s failed: %s", x0.tolist(), e)
        return None
    if np.linalg.norm(fit.fun) > 1e-8 * (1.0 + np.linalg.norm(target - x0)):
        return None
    return fit.x


def finsler_distance(metric: MetricSpec, model: ManifoldModel, x0, x1, options: Optional[DistanceOptions] = None,
                     cache: Optional[FieldCache] = None) -> DistanceValue:
    """
    d(x0, x1) (forward; F need not be reversible). Graph values carry the
    change between resolution h and 2h as their error estimate; a shot
    geodesic replaces the graph value when it is no longer than it.
    """
    options = options or DistanceOptions()
    x0, x1 = np.asarray(x0, dtype=float), np.asarray(x1, dtype=float)
    if x0.shape != (metric.dim,) or x1.shape != (metric.dim,):
        raise DomainError(f"expected points of dimension {metric.dim}")
    _check_domain(model, np.array([x0, x1]))
    if _use_exact(metric, options):
        value = _exact_distance(metric, model, x0, x1)
        return DistanceValue(value=value, error_estimate=0.0, graph_value=value, grid_error=0.0, polished=False)

    fine, coarse = field_pair(metric, model, x0, x1[None, :], options, forward=True, cache=cache)
    graph_value = fine.value_at(x1)
    grid_error = abs(graph_value - coarse.value_at(x1))
    value, error, polished = graph_value, max(grid_error, 1e-12), False
    if options.polish and graph_value > 0:
        target = fine.path_to(x1)[-1]
        v = _shoot(metric, model, x0, target, target - x0)
        if v is not None:
            length = metric.F(x0, v)
            if length <= graph_value + options.slack:
                value, error, polished = length, max(1e-7 * (1.0 + length), graph_value - length), True
            else:
                logger.debug("shot geodesic of length %.6g longer than graph value %.6g", length, graph_value)
    return DistanceValue(value=value, error_estimate=error, graph_value=graph_value, grid_error=grid_error,
                         polished=polished)


def distances_to(metric: MetricSpec, model: ManifoldModel, xs, target, options: Optional[DistanceOptions] = None,
                 cache: Optional[FieldCache] = None) -> Tuple[np.ndarray, np.ndarray]:
    """d(x, target) for every row of xs, from one backward field, with per-point error estimates."""
    options = options or DistanceOptions()
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    target = np.asarray(target, dtype=float)
    _check_domain(model, np.vstack([xs, target]))
    if _use_exact(metric, options):
        return np.array([_exact_distance(metric, model, x, target) for x in xs]), np.zeros(len(xs))
    fine, coarse = field_pair(metric, model, target, xs, options, forward=False, cache=cache)
    values = fine.values_at(xs)
    return values, np.maximum(np.abs(values - coarse.values_at(xs)), 1e-12)


# --- rays and Busemann functions ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Ray:
    origin: PhaseState
    trace: GeodesicTrace
    certificate: RayCertificate

    @property
    def horizon(self) -> float:
        return self.trace.t_end

    def point(self, t: float) -> np.ndarray:
        """gamma(t) in unwrapped chart coordinates."""
        if not 0.0 <= t <= self.horizon + 1e-12:
            raise DomainError(f"t = {t} outside the ray horizon [0, {self.horizon}]")
        return np.asarray(self.trace.dense(np.atleast_1d(t)))[: self.origin.x.size, 0]


def build_ray(metric: MetricSpec, model: ManifoldModel, origin: PhaseState, horizon: float,
              checkpoints: Union[int, Sequence[float]] = 4, options: Optional[DistanceOptions] = None,
              tol: float = 1e-6, cache: Optional[FieldCache] = None) -> Ray:
    """
    Integrate a unit-speed geodesic to `horizon` and certify forward
    minimality d(gamma(0), gamma(s)) = s at the checkpoints. Failed
    checkpoints are flagged, not raised. The reversed curve is checked the
    same way and recorded as the reversible flag.
    """
    if model.is_compact:
        raise DomainError("rays need a model that is not compact")
    if not origin.is_unit(metric):
        raise DomainError("a ray starts from a unit state")
    if isinstance(checkpoints, int):
        checkpoints = np.linspace(horizon / checkpoints, horizon, checkpoints)
    checkpoints = [float(s) for s in checkpoints]
    if any(s <= 0 or s > horizon for s in checkpoints):
        raise DomainError("checkpoints must lie in (0, horizon]")
    trace = integrate_flow(metric, model, origin, horizon)

    distances, errors, certified, rev_lengths, rev_distances, reversible = [], [], [], [], [], True
    for s in checkpoints:
        end = np.asarray(trace.dense(np.atleast_1d(s)))[:, 0]
        point = end[: metric.dim]
        d = finsler_distance(metric, model, origin.x, point, options, cache)
        distances.append(d.value)
        errors.append(d.error_estimate)
        certified.append(bool(abs(d.value - s) <= tol * (1.0 + s) + 2.0 * d.error_estimate))

        times = np.linspace(0.0, s, max(int(64 * s) + 1, 65))
        z = np.asarray(trace.dense(times)).T
        xs, ys = model.wrap(z[:, : metric.dim]), z[:, metric.dim:]
        rev_len = float(trapezoid(metric.F_batch(xs, -ys), times))
        back = finsler_distance(metric, model, point, origin.x, options, cache)
        rev_lengths.append(rev_len)
        rev_distances.append(back.value)
        reversible &= abs(rev_len - back.value) <= tol * (1.0 + rev_len) + 2.0 * back.error_estimate + 1e-6 * s

    certificate = RayCertificate(checkpoints=checkpoints, distances=distances, errors=errors, certified=certified,
                                 reverse_lengths=rev_lengths, reverse_distances=rev_distances,
                                 reversible=bool(reversible))
    if not certificate.all_certified:
        logger.warning("ray from %s not certified at %s", origin.x.tolist(),
                       [s for s, ok in zip(checkpoints, certified) if not ok])
    return Ray(origin=origin, trace=trace, certificate=certificate)


def busemann_approximants(metric: MetricSpec, model: ManifoldModel, ray: Ray, xs, t_list: Sequence[float],
                          options: Optional[DistanceOptions] = None, cache: Optional[FieldCache] = None):
    """b_t(x) = t - d(x, gamma(t)) for every x and t, with the distance errors; shapes (len(t_list), len(xs))."""
    t_list = np.asarray(t_list, dtype=float)
    if len(t_list) == 0 or np.any(np.diff(t_list) <= 0):
        raise DomainError("t_list must be a nonempty increasing sequence")
    values, errors = [], []
    for t in t_list:
        d, err = distances_to(metric, model, xs, ray.point(t), options, cache)
        values.append(t - d)
        errors.append(err)
    return np.array(values), np.array(errors)


def busemann_value(metric: MetricSpec, model: ManifoldModel, ray: Ray, x, t_list: Sequence[float],
                   options: Optional[DistanceOptions] = None, cache: Optional[FieldCache] = None) -> BusemannValue:
    """
    Approximants of b_gamma(x) = lim t - d(x, gamma(t)). The sequence must be
    nondecreasing up to twice the distance error; the limit estimate is the
    last value with the trailing difference as its error bar.
    """
    values, errors = busemann_approximants(metric, model, ray, np.asarray(x, float)[None, :], t_list, options, cache)
    b, err = values[:, 0], errors[:, 0]
    steps = np.diff(b)
    allowed = 2.0 * np.maximum(err[1:], err[:-1]) + 1e-12
    if np.any(steps < -allowed):
        k = int(np.argmax(allowed + steps < 0))
        raise DistanceAccuracyError(
            f"b_t decreased by {-steps[k]:.3e} between t={t_list[k]} and t={t_list[k + 1]} "
            f"(allowed {allowed[k]:.3e})"
        )
    error_bar = float(abs(steps[-1]) + err[-1]) if len(b) > 1 else float(err[-1])
    return BusemannValue(t_list=[float(t) for t in t_list], approximants=b.tolist(), limit=float(b[-1]),
                         error_bar=error_bar, monotone=bool(np.all(steps >= 0)))


def busemann_convexity_report(metric: MetricSpec, model: ManifoldModel, ray: Ray, ensemble: int = 200,
                              seed: int = 0, tol: float = 1e-8, horizon: float = 2.0, samples: int = 41,
                              bound: float = 1.0, options: Optional[DistanceOptions] = None,
                              cache: Optional[FieldCache] = None) -> BusemannConvexityReport:
    """
    Profile b_gamma, approximated at the ray horizon T, along an ensemble of
    geodesics starting in [-bound, bound]^n. Profiles are classified with the
    distance error as tolerance; a non-convex profile whose defect stays
    within four times the approximation error of b_T (estimated from
    b_T - b_{T/2}) is counted as inconclusive instead.
    """
    T = ray.horizon
    states = sample_unit_states(metric, model, ensemble, seed, bound=bound)
    traces = [integrate_flow(metric, model, s, horizon).resample(samples) for s in states]
    points = np.vstack([trace.xs_unwrapped for trace in traces])
    values, errors = busemann_approximants(metric, model, ray, points, [T / 2, T], options, cache)
    approx_error = float(np.max(np.abs(values[1] - values[0])) + np.max(errors))
    tolerance = tol + float(np.max(errors))

    profiles = []
    histogram = {**{c.value: 0 for c in Classification}, INCONCLUSIVE: 0}
    b_T = values[1].reshape(len(traces), samples)
    for trace, row in zip(traces, b_T):
        profile = convexity_profile(lambda _, values=row: values, trace, tolerance)
        profiles.append(profile)
        if profile.classification == Classification.NON_CONVEX and profile.max_defect <= tolerance + 4.0 * approx_error:
            histogram[INCONCLUSIVE] += 1
        else:
            histogram[profile.classification.value] += 1
    logger.info("busemann convexity at T=%g: %s (approximation error %.2e)", T, histogram, approx_error)
    return BusemannConvexityReport(horizon=T, ensemble=ensemble, max_defect=max(p.max_defect for p in profiles),
                                   tolerance=tolerance, approximation_error=approx_error, histogram=histogram,
                                   profiles=profiles)
