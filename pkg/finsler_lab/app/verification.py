"""
Invariant suite behind `verify`.

Each check builds its fixtures, runs one property and returns a CheckResult;
a check never raises. `fast` runs reduced budgets, `full` the acceptance
budgets.
"""
import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel
from tqdm import tqdm

from .busemann import build_ray, busemann_approximants, busemann_value, finsler_distance
from .dynamics import (
    CANDIDATES,
    convexity_profile,
    find_recurrences,
    key_lemma_check,
    noisy_constant,
    recurrence_census,
    theorem_demo,
)
from .errors import ConfigError, FinslerLabError
from .geodesics import PhaseState, integrate_flow, liouville_check
from .manifold import ManifoldModel, load_model
from .metric_core import MetricSpec, load_metric, metric_from_config, validate_metric
from .models import (
    CheckResult,
    DistanceOptions,
    IntegrationOptions,
    LemmaVerdict,
    MetricConfig,
    PhiConfig,
    ScreenOptions,
    VolumeKind,
)
from .quadrature import sphere_quadrature
from .reporting import (
    SLOPE_ORDER_FINDING,
    RunReport,
    default_conventions,
    jsonable,
    report_json,
    timed,
    validate_report,
)
from .volumes import (
    AlphaBetaProfile,
    alphabeta_densities,
    density,
    euclidean_ball_volume,
    euclidean_ball_volume_closed,
    fit_bh_exponent,
    flat_alpha_beta_metric,
    manifold_volume,
    sigma_BH,
    sigma_HT,
    sm_symplectic_volume,
    volume_comparison_report,
)

logger = logging.getLogger(__name__)

FIXTURES_DIR = Path(__file__).resolve().parents[2] / "fixtures"

Suite = Literal["fast", "full"]


class SuiteBudget(BaseModel):
    points: int
    flow_t: float
    census_states: int
    census_t_max: float
    ensemble: int
    exact_triples: int
    graph_triples: int
    volume_grid: int


BUDGETS: Dict[str, SuiteBudget] = {
    "fast": SuiteBudget(points=20, flow_t=20.0, census_states=24, census_t_max=2000.0, ensemble=16,
                        exact_triples=200, graph_triples=2, volume_grid=8),
    "full": SuiteBudget(points=100, flow_t=100.0, census_states=500, census_t_max=1e4, ensemble=200,
                        exact_triples=1000, graph_triples=10, volume_grid=32),
}


class Fixtures:
    """Metric and model documents from the fixture directory, loaded once."""

    def __init__(self, directory: Optional[Path] = None):
        self.directory = Path(directory or FIXTURES_DIR)
        self._metrics: Dict[str, MetricSpec] = {}
        self._models: Dict[str, ManifoldModel] = {}

    def metric(self, name: str) -> MetricSpec:
        if name not in self._metrics:
            self._metrics[name] = load_metric(self.directory / f"{name}.json")
        return self._metrics[name]

    def model(self, name: str) -> ManifoldModel:
        if name not in self._models:
            self._models[name] = load_model(self.directory / f"{name}.json")
        return self._models[name]


class InvariantCheck:
    """A named property evaluated under a budget."""
    name = "invariant"

    def __init__(self, fixtures: Fixtures, budget: SuiteBudget, seed: int = 0):
        self.fixtures = fixtures
        self.budget = budget
        self.seed = seed

    def score(self) -> CheckResult:
        raise NotImplementedError

    def run(self) -> CheckResult:
        try:
            return self.score()
        except Exception as e:
            logger.exception("check %s raised", self.name)
            detail = e.to_dict() if isinstance(e, FinslerLabError) else {"type": type(e).__name__, "message": str(e)}
            return CheckResult(name=self.name, passed=False, reason=f"{detail['type']}: {detail['message']}")

    def result(self, value: float, tolerance: float, reason: str = "", passed: Optional[bool] = None) -> CheckResult:
        passed = bool(value <= tolerance) if passed is None else passed
        return CheckResult(name=self.name, passed=passed, value=float(value), tolerance=tolerance, reason=reason)


class BallRecursionCheck(InvariantCheck):
    name = "euclidean_ball_recursion"

    def score(self) -> CheckResult:
        errors = [abs(euclidean_ball_volume(n) / euclidean_ball_volume_closed(n) - 1.0) for n in range(2, 7)]
        return self.result(max(errors), 1e-12, "n = 2..6 against pi^{n/2} / Gamma(n/2 + 1)")


class MetricValidationCheck(InvariantCheck):
    name = "metric_validation"
    pairs = [("euclid", "torus_1x1"), ("randers_b05", "torus_1x1"), ("randers_curved", "torus_1x1"),
             ("riemannian_warp", "plane"), ("slope_b03", "plane"), ("quadratic_b03", "plane"),
             ("sphere_stereo", "plane")]

    def score(self) -> CheckResult:
        failed = []
        for metric, model in self.pairs:
            report = validate_metric(self.fixtures.metric(metric), self.fixtures.model(model),
                                     n_samples=self.budget.points * 5, seed=self.seed)
            failed += [f"{metric}:{c.name}" for c in report.checks if not c.passed]
        return CheckResult(name=self.name, passed=not failed, value=float(len(failed)), tolerance=0.0,
                           reason=", ".join(failed) or f"{len(self.pairs)} fixtures pass")


class RiemannianReductionCheck(InvariantCheck):
    name = "riemannian_reduction"

    def score(self) -> CheckResult:
        rng = np.random.default_rng(self.seed)
        worst = 0.0
        for name in ("riemannian_diag", "riemannian_warp"):
            metric = self.fixtures.metric(name)
            for x in rng.uniform(-2.0, 2.0, size=(self.budget.points, 2)):
                ref = np.sqrt(np.linalg.det(metric.a_matrix(x)))
                worst = max(worst, abs(sigma_BH(metric, x) / ref - 1.0), abs(sigma_HT(metric, x) / ref - 1.0))
        return self.result(worst, 1e-8, "sigma_BH = sigma_HT = sqrt(det a)")


class RandersHTCheck(InvariantCheck):
    name = "randers_ht_identity"

    def score(self) -> CheckResult:
        g_err = max(
            abs(alphabeta_densities(AlphaBetaProfile.from_config(PhiConfig(kind="randers"), b, 2)).g_value - 1.0)
            for b in np.round(np.arange(0.0, 1.0, 0.1), 1)
        )
        metric = self.fixtures.metric("randers_b05")
        rng = np.random.default_rng(self.seed)
        direct = max(abs(sigma_HT(metric, x) - 1.0) for x in rng.uniform(0.0, 1.0, size=(self.budget.points, 2)))
        passed = g_err <= 1e-10 and direct <= 1e-8
        return self.result(max(g_err, direct), 1e-8, f"g(b) error {g_err:.2e}, direct sigma_HT error {direct:.2e}",
                           passed=passed)


class AlphaBetaCrossCheck(InvariantCheck):
    name = "alpha_beta_cross_validation"
    profiles = ("randers", "quadratic", "slope")

    def score(self) -> CheckResult:
        worst = 0.0
        origin = np.zeros(2)
        for kind in self.profiles:
            profile = AlphaBetaProfile.from_config(PhiConfig(kind=kind), 0.3, 2)
            closed = alphabeta_densities(profile)
            metric = flat_alpha_beta_metric(profile)
            worst = max(worst, abs(sigma_BH(metric, origin) / closed.f_value - 1.0),
                        abs(sigma_HT(metric, origin) / closed.g_value - 1.0))
        return self.result(worst, 1e-6, "f(b), g(b) against indicatrix quadrature at b = 0.3")


class AlphaBetaRandersCheck(InvariantCheck):
    """The (alpha, beta) family with phi(s) = 1 + s reproduces the Randers family pointwise."""
    name = "alpha_beta_randers_agreement"

    def score(self) -> CheckResult:
        randers = self.fixtures.metric("randers_curved")
        document = randers.config.model_dump(mode="json", exclude_none=True)
        as_alpha_beta = metric_from_config(
            MetricConfig.model_validate({**document, "family": "alpha_beta", "phi": {"kind": "randers"}})
        )
        rng = np.random.default_rng(self.seed)
        worst = 0.0
        for x, y in zip(rng.uniform(0.0, 1.0, size=(self.budget.points, 2)), rng.normal(size=(self.budget.points, 2))):
            g_randers, g_alpha_beta = randers.tensor(x, y), as_alpha_beta.tensor(x, y)
            worst = max(worst, abs(randers.F(x, y) - as_alpha_beta.F(x, y)),
                        float(np.max(np.abs(g_randers - g_alpha_beta))),
                        abs(np.linalg.det(g_randers) - np.linalg.det(g_alpha_beta)))
        return self.result(worst, 1e-10, "F, g and det g of randers_curved rebuilt with phi = 1 + s")


class BHExponentCheck(InvariantCheck):
    name = "bh_exponent"

    def score(self) -> CheckResult:
        fits = [fit_bh_exponent(n) for n in (2, 3)]
        residual = max(fit.residual for fit in fits)
        offset = max(abs(fit.exponent - (fit.n + 1) / 2) for fit in fits)
        reason = "; ".join(f"n={fit.n}: exponent {fit.exponent:.10f}" for fit in fits)
        return self.result(max(residual, offset), 1e-6, reason)


class HilbertFormCheck(InvariantCheck):
    name = "ht_two_paths"
    fixtures_used = ("euclid", "randers_b05", "randers_curved")

    def score(self) -> CheckResult:
        model = self.fixtures.model("torus_1x1")
        results = [sm_symplectic_volume(self.fixtures.metric(name), model, grid=self.budget.volume_grid)
                   for name in self.fixtures_used]
        gap = max(r.relative_gap for r in results)
        ratios = ", ".join(f"{name}: {r.convention_ratio:.6f}" for name, r in zip(self.fixtures_used, results))
        return self.result(gap, 1e-8, f"surface/radial convention ratio {ratios}")


class RandersTorusVolumeCheck(InvariantCheck):
    name = "randers_torus_volume"

    def score(self) -> CheckResult:
        result = manifold_volume(self.fixtures.metric("randers_b05"), self.fixtures.model("torus_1x1"),
                                 VolumeKind.HT, grid=self.budget.volume_grid)
        return self.result(abs(result.value - 1.0), 1e-8, "vol_HT of the b = 0.5 Randers torus")


class SlopeVolumeCheck(InvariantCheck):
    """
    Slope metric on the unit torus: computed volumes against the closed forms.
    The observed order vol_BH < vol_alpha < vol_HT departs from the chain
    vol_BH < vol_HT < vol_alpha and is reported as a documented deviation.
    """
    name = "slope_volumes"
    expected_order = "vol_BH < vol_HT < vol_alpha"

    def score(self) -> CheckResult:
        report = volume_comparison_report(self.fixtures.metric("slope_b03"), self.fixtures.model("torus_1x1"),
                                          grid=self.budget.volume_grid)
        b = 0.3
        f_closed = 1.0 / (1.0 + b * b / 2.0)
        g_closed = (2.0 - 3.0 * b * b) / (2.0 * (1.0 - b * b) ** 2.5)
        err = max(abs(report.vol_bh / f_closed - 1.0), abs(report.vol_ht / g_closed - 1.0))
        result = self.result(err, 1e-6, f"closed forms f(b), g(b); observed order {report.observed_order}")
        if report.observed_order != self.expected_order:
            result.deviation = SLOPE_ORDER_FINDING
        return result


class QuadratureConvergenceCheck(InvariantCheck):
    """Doubling the sphere resolution moves sigma_BH and sigma_HT by less than their error estimates."""
    name = "quadrature_convergence"
    resolution = 32
    cases = (("randers_b05", (0.0, 0.0)), ("slope_b03", (0.0, 0.0)), ("randers_curved", (0.2, 0.4)),
             ("riemannian_warp", (0.7, 0.0)))

    def score(self) -> CheckResult:
        q, fine = sphere_quadrature(2, self.resolution), sphere_quadrature(2, 2 * self.resolution)
        worst = 0.0
        for name, x in self.cases:
            metric = self.fixtures.metric(name)
            for kind in (VolumeKind.BH, VolumeKind.HT):
                estimate = density(metric, x, kind, q)
                change = abs(density(metric, x, kind, fine).value - estimate.value)
                worst = max(worst, change / estimate.error_estimate)
        return self.result(worst, 1.0, f"|sigma({2 * self.resolution}) - sigma({self.resolution})| / error estimate")


def _unit(metric: MetricSpec, x, y) -> PhaseState:
    return PhaseState.unit(metric, x, y)


def _flow_cases(fixtures: Fixtures):
    """Curved test metrics with a base state each: (label, metric, model, x, y)."""
    warped = fixtures.model("warped")
    return [
        ("riemannian_warp", fixtures.metric("riemannian_warp"), fixtures.model("plane"), (0.3, 0.2), (1.0, 0.5)),
        ("randers_curved", fixtures.metric("randers_curved"), fixtures.model("torus_1x1"), (0.1, 0.7), (0.6, 0.8)),
        ("sphere_stereo", fixtures.metric("sphere_stereo"), fixtures.model("plane"), (1.0, 0.0), (0.0, 1.0)),
        ("warped", warped.surface_metric, warped, (0.2, 0.0), (0.3, 1.0)),
    ]


class FlowConservationCheck(InvariantCheck):
    name = "flow_conservation"

    def score(self) -> CheckResult:
        drifts = []
        for _, metric, model, x, y in _flow_cases(self.fixtures):
            trace = integrate_flow(metric, model, _unit(metric, x, y), self.budget.flow_t)
            drifts.append(trace.F_drift)
        return self.result(max(drifts), 1e-8, f"max F drift over t = {self.budget.flow_t:g}")


class FlowSemigroupCheck(InvariantCheck):
    """phi_{t2} o phi_{t1} = phi_{t1 + t2} within twice the integrator tolerance."""
    name = "flow_semigroup"
    t1, t2 = 3.0, 4.0

    def score(self) -> CheckResult:
        tol = IntegrationOptions().tol
        worst, labels = 0.0, []
        for label, metric, model, x, y in _flow_cases(self.fixtures):
            start = _unit(metric, x, y)
            first = integrate_flow(metric, model, start, self.t1)
            middle = PhaseState(first.xs_unwrapped[-1], first.ys[-1])
            second = integrate_flow(metric, model, middle, self.t2)
            direct = integrate_flow(metric, model, start, self.t1 + self.t2)
            gap = float(np.linalg.norm(second.xs_unwrapped[-1] - direct.xs_unwrapped[-1])
                        + np.linalg.norm(second.ys[-1] - direct.ys[-1]))
            worst = max(worst, gap)
            labels.append(f"{label}: {gap:.1e}")
        return self.result(worst, 2.0 * tol, f"t1 = {self.t1:g}, t2 = {self.t2:g}; " + ", ".join(labels))


class SprayHomogeneityCheck(InvariantCheck):
    name = "spray_homogeneity"
    metrics = ("randers_curved", "riemannian_warp", "sphere_stereo", "slope_b03")

    def score(self) -> CheckResult:
        rng = np.random.default_rng(self.seed)
        worst = 0.0
        for name in self.metrics:
            metric = self.fixtures.metric(name)
            for x, y in zip(rng.uniform(-1.0, 1.0, size=(self.budget.points, 2)),
                            rng.normal(size=(self.budget.points, 2))):
                G1, G2 = metric.spray(x, y), metric.spray(x, 2.0 * y)
                excess = np.linalg.norm(G2 - 4.0 * G1) - 1e-8 * np.linalg.norm(G2) - 1e-12
                worst = max(worst, float(excess))
        return self.result(worst, 0.0, "|G(x, 2y) - 4 G(x, y)| <= 1e-8 |G| + 1e-12")


class LiouvilleCheck(InvariantCheck):
    name = "liouville_invariance"
    t = 10.0
    h = 5e-4

    def cases(self):
        euclid = ("euclid", self.fixtures.metric("euclid"), self.fixtures.model("torus_1x1"), (0.2, 0.4), (0.8, 0.6))
        return _flow_cases(self.fixtures) + [euclid]

    def score(self) -> CheckResult:
        worst, labels = 0.0, []
        for label, metric, model, x, y in self.cases():
            base = _unit(metric, x, y)
            cell = [base] + [PhaseState(base.x + self.h * e[:2], base.y + self.h * e[2:]) for e in np.eye(4)]
            report = liouville_check(metric, model, cell, self.t)
            worst = max(worst, report.deviation)
            labels.append(f"{label}: {report.deviation:.1e}")
        reason = f"|rho - 1| at t = {self.t:g}, cell diameter {self.h * np.sqrt(2.0):.1e}; " + ", ".join(labels)
        return self.result(worst, 1e-4, reason)


class RecurrenceCheck(InvariantCheck):
    name = "recurrence_census"

    def score(self) -> CheckResult:
        model = self.fixtures.model("torus_1x1")
        fractions = {}
        for name in ("euclid", "randers_b05"):
            census = recurrence_census(self.fixtures.metric(name), model, self.budget.census_states, self.seed,
                                       self.budget.census_t_max, 5e-2)
            fractions[name] = census.fraction
        worst = min(fractions.values())
        return self.result(1.0 - worst, 0.0, ", ".join(f"{k}: {v:.3f}" for k, v in fractions.items()))


class CensusMonotoneCheck(InvariantCheck):
    """For one seed the recurrent count never drops as the horizon or the radius grows."""
    name = "census_monotone"

    def score(self) -> CheckResult:
        metric, model = self.fixtures.metric("randers_b05"), self.fixtures.model("torus_1x1")
        states = max(self.budget.census_states // 3, 4)
        horizon = self.budget.census_t_max / 10.0

        def count(t_max: float, eps: float) -> int:
            return recurrence_census(metric, model, states, self.seed, t_max, eps).recurrent

        by_horizon = [count(t_max, 5e-2) for t_max in (horizon / 100.0, horizon / 10.0, horizon)]
        by_radius = [count(horizon / 10.0, eps) for eps in (1e-2, 5e-2, 2e-1)]
        drops = sum(later < earlier for seq in (by_horizon, by_radius) for earlier, later in zip(seq, seq[1:]))
        return self.result(float(drops), 0.0, f"{states} states; by horizon {by_horizon}, by radius {by_radius}")


class RationalTorusReturnsCheck(InvariantCheck):
    """Rational directions on flat tori return at the multiples of F(closing vector)."""
    name = "rational_torus_returns"
    cases = (("euclid", (1.0, 0.5), (2.0, 1.0)), ("euclid", (1.0, 1.0 / 3.0), (3.0, 1.0)),
             ("randers_b05", (1.0, 0.5), (2.0, 1.0)))

    def score(self) -> CheckResult:
        model = self.fixtures.model("torus_1x1")
        worst, labels = 0.0, []
        for name, direction, closing in self.cases:
            metric = self.fixtures.metric(name)
            period = metric.F(np.zeros(2), np.asarray(closing))
            events = find_recurrences(metric, model, _unit(metric, (0.0, 0.0), direction), 3.5 * period, 1e-3)
            offsets = [abs(e.t - period * round(e.t / period)) for e in events]
            worst = max([worst] + offsets + ([np.inf] if len(events) < 3 else []))
            labels.append(f"{name} {closing}: {len(events)} returns, period {period:.6f}")
        return self.result(worst, 1e-6, "; ".join(labels))


class KeyLemmaOrbitCheck(InvariantCheck):
    """A constant stays constant along a recurrent orbit; a noisy constant of amplitude delta is caught."""
    name = "key_lemma_orbit"
    delta = 1e-3

    def score(self) -> CheckResult:
        metric, model = self.fixtures.metric("euclid"), self.fixtures.model("torus_1x1")
        state = _unit(metric, (0.0, 0.0), (1.0, 0.5))
        screen = ScreenOptions(ensemble=4, horizon=2.0, samples=21, seed=self.seed)
        constant = key_lemma_check(metric, model, CANDIDATES["constant"](model), state, 10.0, 1e-3, 1e-9,
                                   screen=screen)
        noisy = key_lemma_check(metric, model, noisy_constant(model, delta=self.delta), state, 10.0, 1e-3, 1e-6,
                                screen=screen)
        passed = (constant.verdict == LemmaVerdict.PASS and noisy.verdict == LemmaVerdict.FAIL
                  and 0.5 * self.delta < noisy.variation <= 2.0 * self.delta)
        reason = (f"constant: {constant.verdict.value}, variation {constant.variation:.1e}; "
                  f"noisy constant: {noisy.verdict.value}, variation {noisy.variation:.2e} for delta {self.delta:g}")
        return self.result(constant.variation, constant.threshold, reason, passed=passed)


class TheoremMechanismCheck(InvariantCheck):
    name = "finite_volume_convexity"

    def score(self) -> CheckResult:
        screen = ScreenOptions(ensemble=self.budget.ensemble, seed=self.seed)
        warped = self.fixtures.model("warped")
        reports = [
            theorem_demo(warped.surface_metric, warped, screen=screen),
            theorem_demo(self.fixtures.metric("euclid"), self.fixtures.model("torus_1x1"), screen=screen),
        ]
        control = theorem_demo(self.fixtures.metric("euclid"), self.fixtures.model("plane"),
                               candidates=["norm_squared"], screen=screen)
        finite_ok = all(r.finite_volume and r.consistent for r in reports)
        control_ok = control.candidates[0].convex_and_nonconstant
        violations = [c.name for r in reports for c in r.candidates if c.convex_and_nonconstant]
        reason = f"violations {violations or 'none'}; plane control |x|^2 convex and nonconstant: {control_ok}"
        return CheckResult(name=self.name, passed=finite_ok and control_ok, value=float(len(violations)),
                           tolerance=0.0, reason=reason)


class AffineMidpointCheck(InvariantCheck):
    """Affine functions have no midpoint defect along the straight geodesics of flat metrics."""
    name = "affine_midpoint"
    metrics = ("euclid", "randers_b05", "slope_b03", "quartic")

    def score(self) -> CheckResult:
        rng = np.random.default_rng(self.seed)
        plane = self.fixtures.model("plane")
        worst = 0.0
        for name in self.metrics:
            metric = self.fixtures.metric(name)
            for x, y, c in zip(rng.uniform(-1.0, 1.0, size=(self.budget.points, 2)),
                               rng.normal(size=(self.budget.points, 2)), rng.normal(size=(self.budget.points, 2))):
                trace = integrate_flow(metric, plane, _unit(metric, x, y), 4.0).resample(41)
                profile = convexity_profile(lambda p: p @ c + 1.0, trace, tol=1e-12)
                worst = max(worst, profile.linearity_residual)
        return self.result(worst, 1e-12, "max |f(x_{i-1}) - 2 f(x_i) + f(x_{i+1})| for affine f")


class DistanceAsymmetryCheck(InvariantCheck):
    name = "randers_distance_asymmetry"

    def score(self) -> CheckResult:
        metric, model = self.fixtures.metric("randers_b03"), self.fixtures.model("plane")
        forward = finsler_distance(metric, model, (0.0, 0.0), (1.0, 0.0)).value
        backward = finsler_distance(metric, model, (1.0, 0.0), (0.0, 0.0)).value
        err = max(abs(forward - 1.3), abs(backward - 0.7))
        return self.result(err, 1e-12, f"d(0, e1) = {forward:.12f}, d(e1, 0) = {backward:.12f}")


def _random_triples(rng, count: int, half: float = 2.0):
    return rng.uniform(-half, half, size=(count, 3, 2))


class TriangleInequalityCheck(InvariantCheck):
    name = "triangle_inequality"

    def score(self) -> CheckResult:
        rng = np.random.default_rng(self.seed)
        plane = self.fixtures.model("plane")
        worst = -np.inf
        for name in ("euclid", "randers_b05", "quartic"):
            metric = self.fixtures.metric(name)
            for a, b, c in _random_triples(rng, self.budget.exact_triples):
                d = [finsler_distance(metric, plane, p, q).value for p, q in ((a, c), (a, b), (b, c))]
                worst = max(worst, d[0] - d[1] - d[2])

        metric = self.fixtures.metric("riemannian_warp")
        options = DistanceOptions(resolution=24, margin=1.0, polish=False)
        for a, b, c in _random_triples(rng, self.budget.graph_triples, half=1.0):
            d = [finsler_distance(metric, plane, p, q, options) for p, q in ((a, c), (a, b), (b, c))]
            allowed = 2.0 * sum(v.error_estimate for v in d)
            worst = max(worst, d[0].value - d[1].value - d[2].value - allowed)
        return self.result(max(worst, 0.0), 1e-12, "d(a,c) - d(a,b) - d(b,c) - 2 err, worst case")


class BusemannEuclidCheck(InvariantCheck):
    name = "busemann_euclidean_closed_form"

    def score(self) -> CheckResult:
        metric, model = self.fixtures.metric("euclid"), self.fixtures.model("plane")
        ray = build_ray(metric, model, PhaseState.of((0.0, 0.0), (1.0, 0.0)), 100.0)
        axis = np.linspace(-0.4, 0.4, 10)
        grid = np.array([(u, v) for u in axis for v in axis])
        values, _ = busemann_approximants(metric, model, ray, grid, [100.0])
        err = float(np.max(np.abs(values[0] - grid[:, 0])))
        return self.result(err, 1e-3, "sup |b_100(x) - x1| over a 10 x 10 grid on [-0.4, 0.4]^2",
                           passed=err <= 1e-3 and ray.certificate.all_certified)


class BusemannMonotoneCheck(InvariantCheck):
    name = "busemann_monotone"

    def score(self) -> CheckResult:
        rng = np.random.default_rng(self.seed)
        model = self.fixtures.model("plane")
        t_list = [10.0, 20.0, 40.0, 80.0]
        worst = 0.0
        for name in ("euclid", "randers_b05", "quartic"):
            metric = self.fixtures.metric(name)
            ray = build_ray(metric, model, _unit(metric, (0.0, 0.0), (1.0, 0.0)), 80.0, checkpoints=[10.0, 40.0])
            for x in rng.uniform(-2.0, 2.0, size=(self.budget.points, 2)):
                busemann_value(metric, model, ray, x, t_list)
            for s in ray.certificate.checkpoints:
                on_ray = busemann_value(metric, model, ray, ray.point(s), [s, 80.0])
                worst = max(worst, abs(on_ray.limit - s))
        return self.result(worst, 1e-9, "approximants nondecreasing; b(gamma(s)) = s on the ray")


class ReportDeterminismCheck(InvariantCheck):
    """Same configuration and seed give the same report bytes without timing; reports parse back unchanged."""
    name = "report_determinism_schema"

    def _report(self) -> RunReport:
        model = self.fixtures.model("torus_1x1")
        report = RunReport(command="verify", config={"check": self.name, "seed": self.seed},
                           conventions=default_conventions())
        with timed(report):
            census = recurrence_census(self.fixtures.metric("randers_b05"), model, 4, self.seed, 50.0, 5e-2, workers=2)
            comparison = volume_comparison_report(self.fixtures.metric("slope_b03"), model, grid=4)
            report.results = jsonable({"census": census, "comparison": comparison})
        return report

    def score(self) -> CheckResult:
        first, second = self._report(), self._report()
        identical = report_json(first, include_timing=False) == report_json(second, include_timing=False)
        text = report_json(first)
        round_trip = report_json(validate_report(text)) == text
        return CheckResult(name=self.name, passed=identical and round_trip,
                           value=float((not identical) + (not round_trip)), tolerance=0.0,
                           reason=f"byte-identical without timing: {identical}; schema round-trip: {round_trip}")


CHECKS = [
    BallRecursionCheck, MetricValidationCheck, RiemannianReductionCheck, RandersHTCheck, AlphaBetaCrossCheck,
    AlphaBetaRandersCheck, BHExponentCheck, HilbertFormCheck, RandersTorusVolumeCheck, SlopeVolumeCheck,
    QuadratureConvergenceCheck, FlowConservationCheck, FlowSemigroupCheck, SprayHomogeneityCheck, LiouvilleCheck,
    RecurrenceCheck, CensusMonotoneCheck, RationalTorusReturnsCheck, KeyLemmaOrbitCheck, TheoremMechanismCheck,
    AffineMidpointCheck, DistanceAsymmetryCheck, TriangleInequalityCheck, BusemannEuclidCheck, BusemannMonotoneCheck,
    ReportDeterminismCheck,
]


def run_suite(suite: Suite = "fast", fixtures_dir: Optional[Path] = None, seed: int = 0,
              only: Optional[Sequence[str]] = None, progress: bool = False) -> List[CheckResult]:
    """Run every check (or those named in `only`) in a fixed order."""
    fixtures = Fixtures(fixtures_dir)
    budget = BUDGETS[suite]
    selected = [c for c in CHECKS if only is None or c.name in only]
    if only is not None and len(selected) != len(set(only)):
        unknown = sorted(set(only) - {c.name for c in CHECKS})
        raise ConfigError(f"unknown checks: {unknown}", field="--only")
    results = []
    for check in tqdm(selected, disable=not progress, desc=f"verify {suite}", unit="check"):
        result = check(fixtures, budget, seed).run()
        logger.info("%s: %s", result.name, "pass" if result.passed else "FAIL")
        results.append(result)
    return results
