"""
Recurrence of the geodesic flow and convexity of functions along geodesics.

Phase distance on SM is |minimal image of x - x0| + |y - y0| in chart
coordinates. A trace is scanned on a grid fine enough that no excursion
below eps can be missed, and each local minimum is refined with a bounded
scalar minimization.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar
from tqdm import tqdm

from .errors import DomainError, IntegrationError
from .geodesics import GeodesicTrace, PhaseState, integrate_flow
from .manifold import ManifoldModel
from .metric_core import MetricSpec
from .models import (
    CandidateOutcome,
    Classification,
    ConvexityProfile,
    IntegrationOptions,
    KeyLemmaResult,
    LemmaVerdict,
    ModelKind,
    RecurrenceCensus,
    RecurrenceEvent,
    ScreenOptions,
    TheoremReport,
    VolumeKind,
    VolumeVerdict,
)
from .volumes import manifold_volume

logger = logging.getLogger(__name__)

ScalarFunction = Callable[[np.ndarray], np.ndarray]

SCAN_CHUNK = 1 << 17
TIME_TOL = 1e-6


# --- convexity ------------------------------------------------------------------------

def convexity_profile(f: ScalarFunction, trace: GeodesicTrace, tol: float = 1e-8) -> ConvexityProfile:
    """
    Midpoint convexity of f along a uniformly sampled trace. `f` maps chart
    points of shape (m, n) to values of shape (m,).
    """
    if len(trace) < 3:
        raise DomainError("a convexity profile needs at least three samples")
    if not trace.is_uniform():
        raise DomainError("trace spacing is not uniform; resample it first")
    values = np.asarray(f(trace.xs), dtype=float)
    second = values[:-2] - 2.0 * values[1:-1] + values[2:]
    max_defect = float(np.max(-0.5 * second))
    residual = float(np.max(np.abs(second)))
    if max_defect > tol:
        classification = Classification.NON_CONVEX
    elif residual <= tol:
        classification = Classification.LINEAR
    elif np.all(second > tol):
        classification = Classification.STRICTLY_CONVEX
    else:
        classification = Classification.CONVEX
    return ConvexityProfile(values=values.tolist(), max_defect=max_defect, linearity_residual=residual,
                            classification=classification)


# --- sampling -------------------------------------------------------------------------

def sample_unit_states(metric: MetricSpec, model: ManifoldModel, n_states: int, seed: int = 0,
                       bound: Optional[float] = None) -> List[PhaseState]:
    """
    Unit states drawn from the normalized Liouville measure on SM over the
    model's integration box: x uniform, u uniform on the Euclidean sphere,
    accepted with weight det g(x, u) F(x, u)^{-n}, then y = u / F(x, u).
    """
    if n_states < 1:
        raise DomainError("n_states must be at least 1")
    rng = np.random.default_rng(seed)
    n = metric.dim

    def propose(m):
        xs = model.sample_points(rng, m, bound)
        us = rng.normal(size=(m, n))
        us /= np.linalg.norm(us, axis=1, keepdims=True)
        F = metric.F_batch(xs, us)
        return xs, us, F, metric.det_g_batch(xs, us) * F ** -n

    batch = propose(max(4 * n_states, 256))
    w_max = 1.2 * float(np.max(batch[3]))
    accepted: List[PhaseState] = []
    while len(accepted) < n_states:
        xs, us, F, w = batch
        if np.any(w > w_max):
            logger.debug("Liouville weight %.3e above the pilot bound %.3e", np.max(w), w_max)
        keep = rng.uniform(size=len(w)) * w_max < w
        accepted.extend(PhaseState(x, u / f) for x, u, f in zip(xs[keep], us[keep], F[keep]))
        batch = propose(max(2 * (n_states - len(accepted)), 256))
    return accepted[:n_states]


# --- recurrence -----------------------------------------------------------------------

def phase_distance(model: ManifoldModel, a: PhaseState, b: PhaseState) -> float:
    return float(np.linalg.norm(model.minimal_image(a.x - b.x)) + np.linalg.norm(a.y - b.y))


def _escape_event(model: ManifoldModel):
    def escape(t, z):
        return model.bound - abs(z[0])
    escape.terminal = True
    escape.direction = -1
    return escape


def _scan(metric, model, u: PhaseState, t_max: float, eps: float, t_min: float,
          options: Optional[IntegrationOptions], stop_at_first: bool):
    if not (model.is_compact or model.kind == ModelKind.WARPED):
        raise DomainError("recurrence needs a compact or finite-volume model")
    if eps <= 0:
        raise DomainError("eps must be positive")
    if not u.is_unit(metric, tol=1e-8):
        raise DomainError("recurrence queries start from a unit state")
    events_fn = [_escape_event(model)] if model.kind == ModelKind.WARPED else None
    trace = integrate_flow(metric, model, u, t_max, options=options, events=events_fn)

    n = metric.dim
    rate = np.linalg.norm(trace.ys, axis=1)
    if not metric.x_independent:
        rate = rate + 2.0 * np.linalg.norm(metric.spray_batch(trace.xs, trace.ys), axis=1)
    lipschitz = 1.5 * float(np.max(rate)) + 1e-12
    h = eps / (4.0 * lipschitz)
    start, end = max(t_min - TIME_TOL, float(trace.times[0])), trace.t_end

    def distances(t):
        z = np.asarray(trace.dense(np.atleast_1d(t)))
        dx = model.minimal_image(z[:n].T - u.x)
        return np.linalg.norm(dx, axis=1) + np.linalg.norm(z[n:].T - u.y, axis=1)

    events: List[RecurrenceEvent] = []
    if end <= start:
        return events, trace
    count = int(np.ceil((end - start) / h)) + 1
    for i0 in range(0, count, SCAN_CHUNK):
        lo, hi = max(i0 - 1, 0), min(i0 + SCAN_CHUNK + 1, count)
        ts = np.minimum(start + h * np.arange(lo, hi), end)
        d = distances(ts)
        interior = np.arange(1, len(ts) - 1)
        minima = interior[(d[interior] <= d[interior - 1]) & (d[interior] <= d[interior + 1])
                          & (d[interior] < eps + lipschitz * h)]
        for i in minima:
            res = minimize_scalar(lambda t: float(distances(t)[0]), bounds=(ts[i - 1], ts[i + 1]),
                                  method="bounded", options={"xatol": 1e-12})
            t_hit, d_hit = float(res.x), float(res.fun)
            if d[i] < d_hit:
                t_hit, d_hit = float(ts[i]), float(d[i])
            if d_hit >= eps or t_hit < t_min - TIME_TOL or t_hit <= 0:
                continue
            if events and t_hit - events[-1].t < 2 * h:
                if d_hit < events[-1].phase_distance:
                    events[-1] = RecurrenceEvent(t=t_hit, phase_distance=d_hit)
                continue
            events.append(RecurrenceEvent(t=t_hit, phase_distance=d_hit))
            if stop_at_first:
                return events, trace
    return events, trace


def find_recurrences(metric: MetricSpec, model: ManifoldModel, u: PhaseState, t_max: float, eps: float,
                     t_min: float = 1.0, options: Optional[IntegrationOptions] = None) -> List[RecurrenceEvent]:
    """Times t >= t_min at which the orbit of u passes within eps of u, at local minima of the distance."""
    events, _ = _scan(metric, model, u, t_max, eps, t_min, options, stop_at_first=False)
    return events


def recurrence_census(metric: MetricSpec, model: ManifoldModel, n_states: int, seed: int, t_max: float,
                      eps: float, t_min: float = 1.0, options: Optional[IntegrationOptions] = None,
                      workers: int = 1, progress: bool = False) -> RecurrenceCensus:
    """
    Fraction of Liouville-sampled unit states with at least one recurrence.
    Orbits leaving the truncation window of a warped surface count as
    non-recurrent and are reported as escaped.
    """
    states = sample_unit_states(metric, model, n_states, seed)

    def first_return(u: PhaseState) -> Tuple[Optional[float], bool]:
        try:
            events, trace = _scan(metric, model, u, t_max, eps, t_min, options, stop_at_first=True)
        except IntegrationError as e:
            logger.warning("orbit from x=%s dropped: %s", u.x.tolist(), e)
            return None, False
        if trace.terminated:
            return None, True
        return (events[0].t if events else None), False

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        results = list(tqdm(pool.map(first_return, states), total=n_states, disable=not progress,
                            desc="census", unit="orbit"))
    times = [t for t, _ in results]
    recurrent = sum(t is not None for t in times)
    escaped = sum(esc for _, esc in results)
    logger.info("census on %s: %d/%d recurrent, %d escaped", model.label, recurrent, n_states, escaped)
    return RecurrenceCensus(n_states=n_states, recurrent=recurrent, escaped=escaped,
                            fraction=recurrent / n_states, truncation_rate=escaped / n_states,
                            first_return_times=times)


# --- candidate functions --------------------------------------------------------------

def _periodic_coordinate(model: ManifoldModel, k: int) -> Callable[[np.ndarray], np.ndarray]:
    """x_k scaled to a 2 pi periodic angle on periodic coordinates, x_k itself otherwise."""
    period = model.periods[k]
    if period is None:
        return lambda x: x[..., k]
    return lambda x: 2.0 * np.pi * x[..., k] / period


def noisy_constant(model: ManifoldModel, value: float = 1.0, delta: float = 1e-3) -> ScalarFunction:
    """A constant plus smooth non-convex noise of amplitude delta."""
    a, b = _periodic_coordinate(model, 0), _periodic_coordinate(model, 1)
    return lambda x: value + delta * np.sin(7.0 * a(x)) * np.cos(5.0 * b(x))


def _neg_log_profile(model: ManifoldModel) -> ScalarFunction:
    if model.kind != ModelKind.WARPED:
        raise DomainError("-log(profile) is defined on warped surfaces")
    return lambda x: -np.log(model.profile_values(np.atleast_2d(x)[:, 0]))


CANDIDATES: Dict[str, Callable[[ManifoldModel], ScalarFunction]] = {
    "constant": lambda model: (lambda x: np.full(np.shape(x)[:-1], 1.0)),
    "x1": lambda model: (lambda x: model.wrap(x)[..., 0]),
    "x1_squared": lambda model: (lambda x: model.wrap(x)[..., 0] ** 2),
    "norm_squared": lambda model: (lambda x: np.sum(model.wrap(x) ** 2, axis=-1)),
    "sin_x1": lambda model: (lambda x: np.sin(_periodic_coordinate(model, 0)(x))),
    "neg_log_profile": _neg_log_profile,
    "noisy_constant": noisy_constant,
}

DEFAULT_CANDIDATES = {
    ModelKind.TORUS: ("constant", "x1", "sin_x1", "noisy_constant"),
    ModelKind.WARPED: ("constant", "x1", "x1_squared", "neg_log_profile"),
    ModelKind.UNBOUNDED: ("constant", "x1", "norm_squared"),
}

Candidate = Union[str, Tuple[str, ScalarFunction]]


def _resolve(model: ManifoldModel, candidate: Candidate) -> Tuple[str, ScalarFunction]:
    if isinstance(candidate, str):
        if candidate not in CANDIDATES:
            raise DomainError(f"unknown candidate '{candidate}'; choose from {sorted(CANDIDATES)}")
        return candidate, CANDIDATES[candidate](model)
    return candidate


def convexity_screen(metric: MetricSpec, model: ManifoldModel, f: ScalarFunction, name: str = "f",
                     options: Optional[ScreenOptions] = None, integration: Optional[IntegrationOptions] = None,
                     progress: bool = False) -> CandidateOutcome:
    """Midpoint convexity of f along an ensemble of Liouville-sampled geodesics, plus its spread."""
    options = options or ScreenOptions()
    states = sample_unit_states(metric, model, options.ensemble, options.seed)
    traces = [
        integrate_flow(metric, model, state, options.horizon, options=integration).resample(options.samples)
        for state in tqdm(states, disable=not progress, desc=name, unit="geodesic")
    ]
    values = np.concatenate([np.asarray(f(trace.xs), dtype=float) for trace in traces])
    scale = max(1.0, float(np.max(np.abs(values))))
    tol = options.tol * scale

    max_defect, witness = -np.inf, None
    for index, trace in enumerate(traces):
        profile = convexity_profile(f, trace, tol)
        if profile.max_defect > max_defect:
            max_defect = profile.max_defect
            if profile.classification == Classification.NON_CONVEX:
                i = int(np.argmax(-np.diff(profile.values, 2))) + 1
                witness = {"geodesic": float(index), "t": float(trace.times[i]), "defect": profile.max_defect}
    spread = float(np.max(values) - np.min(values))
    return CandidateOutcome(
        name=name, convex_along_ensemble=bool(max_defect <= tol), nonconstant=spread > options.constancy_tol * scale,
        max_defect=float(max_defect), spread=spread, witness=witness,
    )


def key_lemma_check(metric: MetricSpec, model: ManifoldModel, f: ScalarFunction, u: PhaseState, t_max: float,
                    eps: float, tol: float, screen: Optional[ScreenOptions] = None,
                    options: Optional[IntegrationOptions] = None) -> KeyLemmaResult:
    """
    A function convex along geodesics is constant along recurrent orbits:
    PASS when max f - min f along the orbit of u is at most tol (1 + |f(u)|).
    """
    outcome = convexity_screen(metric, model, f, options=screen, integration=options)
    events, trace = _scan(metric, model, u, t_max, eps, 1.0, options, stop_at_first=False)
    samples = min(max(len(trace), int(10 * trace.t_end) + 1), 200_001)
    dense = trace.resample(samples)
    values = np.asarray(f(dense.xs), dtype=float)
    variation = float(np.max(values) - np.min(values))
    threshold = tol * (1.0 + abs(float(values[0])))
    if not events:
        verdict = LemmaVerdict.INCONCLUSIVE
    else:
        verdict = LemmaVerdict.PASS if variation <= threshold else LemmaVerdict.FAIL
    witness = None
    if verdict == LemmaVerdict.FAIL:
        lo, hi = int(np.argmin(values)), int(np.argmax(values))
        witness = {"t_min": float(dense.times[lo]), "f_min": float(values[lo]),
                   "t_max": float(dense.times[hi]), "f_max": float(values[hi])}
    return KeyLemmaResult(verdict=verdict, variation=variation, threshold=threshold,
                          convex_along_ensemble=outcome.convex_along_ensemble, recurrent=bool(events),
                          events=events, witness=witness)


def theorem_demo(metric: MetricSpec, model: ManifoldModel, candidates: Optional[Sequence[Candidate]] = None,
                 screen: Optional[ScreenOptions] = None, grid: int = 16, progress: bool = False) -> TheoremReport:
    """
    Screen candidates for convexity and constancy and set the outcome beside
    the model's Holmes-Thompson volume: with finite volume no candidate may
    be convex along the ensemble and nonconstant.
    """
    volume = manifold_volume(metric, model, VolumeKind.HT, grid=grid)
    finite = volume.verdict in (VolumeVerdict.FINITE, VolumeVerdict.CONVERGED)
    outcomes = []
    for candidate in candidates or DEFAULT_CANDIDATES[model.kind]:
        name, f = _resolve(model, candidate)
        outcome = convexity_screen(metric, model, f, name=name, options=screen, progress=progress)
        logger.info("candidate %s: convex=%s nonconstant=%s", name, outcome.convex_along_ensemble,
                    outcome.nonconstant)
        outcomes.append(outcome)
    consistent = not (finite and any(o.convex_and_nonconstant for o in outcomes))
    return TheoremReport(model=model.label, volume=volume, finite_volume=finite, candidates=outcomes,
                         consistent=consistent)
