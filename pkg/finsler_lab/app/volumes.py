"""
Busemann-Hausdorff and Holmes-Thompson densities, total volumes, the
Hilbert-form volume of SM and the closed forms for (alpha, beta) metrics.

Ball integrals over B_xM are reduced to the Euclidean sphere along rays,
taken in coordinates y = L z with L = a(x)^{-1/2}, so that alpha is the
Euclidean norm in z. B_xM is star-shaped with radius r(u) = 1/F(x, L u),
so Vol(B_xM) = det L / n sum_k w_k r(u_k)^n and, det g being 0-homogeneous
in y, int_{B_xM} det g dy = det L / n sum_k w_k det g(x, L u_k) r(u_k)^n.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import jax
import jax.numpy as jnp
import numpy as np
from scipy.integrate import quad
from scipy.special import gamma, roots_legendre

from .coefficients import build_phi
from .errors import DomainError, FinslerLabError, MetricValidityError
from .manifold import ManifoldModel
from .metric_core import MetricSpec, alpha_beta, randers
from .models import (
    AlphaBetaDensities,
    ExponentFit,
    FiberConvention,
    InequalityCheck,
    MetricFamily,
    ModelKind,
    PhiConfig,
    SMFinitenessReport,
    SymplecticVolumeResult,
    Truncation,
    VolumeComparison,
    VolumeKind,
    VolumeResult,
    VolumeVerdict,
)
from .quadrature import SphereQuadrature, sphere_quadrature

logger = logging.getLogger(__name__)

CHUNK = 1 << 16
CONVENTIONS = {
    "fiber_measure": f"{FiberConvention.RADIAL.value}: int_{{S_xM}} dV_omega := (2n-1) int_{{B_xM}} det g dy",
    "fiber_measure_alternative": f"{FiberConvention.SURFACE.value}: area of S_xM in the metric g_x restricted to it",
    "orientation": "sign of dV_omega chosen positive",
}


@dataclass(frozen=True)
class VolumeDensity:
    kind: VolumeKind
    value: float
    error_estimate: float = 0.0


@dataclass(frozen=True)
class AlphaBetaProfile:
    """phi(s) with the norm of the constant one-form and the dimension."""
    phi: Callable
    b: float
    n: int

    def __post_init__(self):
        if not 0.0 <= self.b < 1.0:
            raise DomainError(f"b must lie in [0, 1), got {self.b}")
        if self.n < 2:
            raise DomainError(f"dimension must be at least 2, got {self.n}")

    @classmethod
    def from_config(cls, config: PhiConfig, b: float, n: int) -> "AlphaBetaProfile":
        return cls(build_phi(config), b, n)


# --- Euclidean ball -------------------------------------------------------------------

def _sine_power_integral(k: int) -> float:
    value, _ = quad(lambda t: np.sin(t) ** k, 0.0, np.pi, epsabs=1e-15, epsrel=1e-14)
    return value


def euclidean_ball_volume_closed(n: int) -> float:
    return float(np.pi ** (n / 2) / gamma(n / 2 + 1))


@lru_cache(maxsize=None)
def euclidean_ball_volume(n: int) -> float:
    """
    Vol(B^n(1)) = Vol(S^{n-1}) / n with Vol(S^{k}) = Vol(S^{k-1}) int_0^pi sin^{k-1} t dt,
    checked against pi^{n/2} / Gamma(n/2 + 1).
    """
    if n < 2:
        raise DomainError(f"ball volume needs n >= 2, got {n}")
    area = 2.0 * np.pi
    for k in range(3, n + 1):
        area *= _sine_power_integral(k - 2)
    value = area / n
    closed = euclidean_ball_volume_closed(n)
    if abs(value - closed) > 1e-12 * closed:
        raise FinslerLabError(f"ball volume recursion {value!r} disagrees with closed form {closed!r}")
    return value


# --- fiber integrals ------------------------------------------------------------------

def default_quadrature(n: int) -> SphereQuadrature:
    return sphere_quadrature(n, 128 if n == 2 else 48)


def _evaluate(fn, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return np.concatenate([fn(X[i:i + CHUNK], Y[i:i + CHUNK]) for i in range(0, len(X), CHUNK)])


def _whitening(metric: MetricSpec, xs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """L = a(x)^{-1/2} per point and det L; identity for metrics without alpha."""
    P, n = xs.shape
    if metric.alpha is None:
        return np.broadcast_to(np.eye(n), (P, n, n)), np.ones(P)
    a = np.broadcast_to(np.asarray(jax.vmap(metric.alpha)(jnp.asarray(xs))), (P, n, n))
    lam, V = np.linalg.eigh(a)
    if np.any(lam <= 0):
        raise MetricValidityError("alpha is not positive definite on the integration grid")
    L = (V * lam[:, None, :] ** -0.5) @ np.swapaxes(V, -1, -2)
    return L, np.prod(lam, axis=1) ** -0.5


class _Fibers:
    """
    The tangent balls over a block of points in whitened coordinates
    y = L z, where alpha(x, L z) = |z|; the quadrature sphere then fits
    B_xM up to the anisotropy that beta adds.
    """

    def __init__(self, metric: MetricSpec, xs: np.ndarray, q: SphereQuadrature):
        self.metric, self.q = metric, q
        self.xs = np.atleast_2d(xs)
        P, Q = len(self.xs), len(q)
        self.L, self.jac = _whitening(metric, self.xs)
        self.Y = np.einsum("pij,qj->pqi", self.L, q.nodes)
        self.X = np.repeat(self.xs, Q, axis=0)
        F = _evaluate(metric.F_batch, self.X, self.Y.reshape(P * Q, -1)).reshape(P, Q)
        bad = ~(np.isfinite(F) & (F > 0))
        if np.any(bad):
            p, k = np.argwhere(bad)[0]
            raise MetricValidityError(f"F = {F[p, k]:.3e} at x={self.xs[p].tolist()}, y={self.Y[p, k].tolist()}")
        self.F = F
        self.r = 1.0 / F

    def pairs(self, fn, scale: Optional[np.ndarray] = None) -> np.ndarray:
        """fn(x, L u) for every point and node, optionally with L u scaled per pair."""
        P, Q = self.r.shape
        Y = self.Y if scale is None else self.Y * scale[..., None]
        out = _evaluate(fn, self.X, Y.reshape(P * Q, -1))
        return out.reshape(P, Q, *out.shape[1:])


def _ball_volumes(metric, xs, q) -> np.ndarray:
    fib = _Fibers(metric, xs, q)
    return fib.jac * (fib.r ** metric.dim) @ q.weights / metric.dim


def _ht_integrals(metric, xs, q) -> np.ndarray:
    fib = _Fibers(metric, xs, q)
    det = fib.pairs(metric.det_g_batch)
    return fib.jac * (det * fib.r ** metric.dim) @ q.weights / metric.dim


def _interior_integrals(metric, xs, q, n_radial: int = 4) -> np.ndarray:
    """int_{B_xM} det g dy with det g sampled inside the ball on Gauss-Legendre radii."""
    n = metric.dim
    fib = _Fibers(metric, xs, q)
    t, c = roots_legendre(n_radial)
    rho, c = 0.5 * (t + 1.0), 0.5 * c
    radial = np.zeros_like(fib.r)
    for rho_j, c_j in zip(rho, c):
        radial += c_j * rho_j ** (n - 1) * fib.pairs(metric.det_g_batch, rho_j * fib.r)
    return fib.jac * (radial * fib.r ** n) @ q.weights


@lru_cache(maxsize=16)
def _tangent_frames(dim: int, resolution: int) -> np.ndarray:
    """Orthonormal bases of u-perp for every node u, shaped (Q, n, n-1)."""
    q = sphere_quadrature(dim, resolution)
    extra = np.random.default_rng(0).normal(size=(dim, dim - 1))
    stacked = np.concatenate([q.nodes[:, :, None], np.broadcast_to(extra, (len(q), dim, dim - 1))], axis=2)
    frames, _ = np.linalg.qr(stacked)
    return frames[:, :, 1:]


def _surface_areas(metric, xs, q) -> np.ndarray:
    """Area of S_xM in the metric g_x, parametrized by u -> L u / F(x, L u) over the Euclidean sphere."""
    n = metric.dim
    fib = _Fibers(metric, xs, q)
    frames = _tangent_frames(n, q.resolution)
    grad = fib.pairs(metric.grad_y_batch)
    g = fib.pairs(metric.tensor_batch)
    L = fib.L[:, None]
    grad_u = np.einsum("pji,pqj->pqi", fib.L, grad)
    F = fib.F[..., None, None]
    dpsi = L / F - fib.Y[..., :, None] * grad_u[..., None, :] / F ** 2
    A = dpsi @ frames[None]
    pulled = np.swapaxes(A, -1, -2) @ g @ A
    return np.sqrt(np.linalg.det(pulled)) @ q.weights


def _per_point(fn, metric: MetricSpec, xs, q: SphereQuadrature) -> np.ndarray:
    """fn(metric, xs, q) over blocks of points; evaluated once when F does not depend on x."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if metric.x_independent and len(xs) > 1:
        return np.full(len(xs), fn(metric, xs[:1], q)[0])
    block = max(CHUNK // len(q), 1)
    return np.concatenate([fn(metric, xs[i:i + block], q) for i in range(0, len(xs), block)])


_DENSITIES = {
    VolumeKind.BH: lambda metric, xs, q: euclidean_ball_volume(metric.dim) / _ball_volumes(metric, xs, q),
    VolumeKind.HT: lambda metric, xs, q: _ht_integrals(metric, xs, q) / euclidean_ball_volume(metric.dim),
    VolumeKind.OMEGA: lambda metric, xs, q: _interior_integrals(metric, xs, q) / euclidean_ball_volume(metric.dim),
}


def _density_values(metric: MetricSpec, xs, kind: VolumeKind, q: SphereQuadrature) -> np.ndarray:
    return _per_point(_DENSITIES[kind], metric, xs, q)


def density(metric: MetricSpec, x, kind: VolumeKind, q: Optional[SphereQuadrature] = None) -> VolumeDensity:
    """A density with the change under halving the sphere resolution as its error estimate."""
    q = q or default_quadrature(metric.dim)
    value = float(_density_values(metric, x, kind, q)[0])
    coarse = float(_density_values(metric, x, kind, q.halved())[0])
    return VolumeDensity(kind=kind, value=value, error_estimate=max(abs(value - coarse), 1e-13 * abs(value)))


def sigma_BH(metric: MetricSpec, x, q: Optional[SphereQuadrature] = None) -> float:
    """sigma_BH(x) = Vol(B^n(1)) / Vol(B_xM)."""
    return float(_density_values(metric, x, VolumeKind.BH, q or default_quadrature(metric.dim))[0])


def sigma_HT(metric: MetricSpec, x, q: Optional[SphereQuadrature] = None) -> float:
    """sigma_HT(x) = (1 / Vol(B^n(1))) int_{B_xM} det g(x, y) dy."""
    return float(_density_values(metric, x, VolumeKind.HT, q or default_quadrature(metric.dim))[0])


# --- integration over the manifold ----------------------------------------------------

def _midpoints(lower: np.ndarray, upper: np.ndarray, counts: Sequence[int]) -> Tuple[np.ndarray, float]:
    axes = [lo + (np.arange(m) + 0.5) * (hi - lo) / m for lo, hi, m in zip(lower, upper, counts)]
    points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    cell = float(np.prod([(hi - lo) / m for lo, hi, m in zip(lower, upper, counts)]))
    return points, cell


def _integrate(model, values_fn, grid: int) -> float:
    lower, upper = model.box()
    points, cell = _midpoints(lower, upper, [grid] * model.dim)
    return float(np.sum(values_fn(points)) * cell)


def _windows(model: ManifoldModel, levels: int):
    if model.kind == ModelKind.WARPED:
        return [model.bound / 2 ** (levels - 1 - k) for k in range(levels)]
    return [model.window * 2 ** k for k in range(levels)]


def _truncation_sequence(model, values_fn, grid: int, levels: int):
    """Integrals over nested windows sharing one midpoint grid of fixed spacing."""
    windows = _windows(model, levels)
    counts = [grid if p else grid * 2 ** (levels - 1) for p in model.periodic]
    lower, upper = model.box(windows[-1])
    points, cell = _midpoints(lower, upper, counts)
    values = values_fn(points)
    free = ~model.periodic
    sums = []
    for w in windows:
        inside = np.all(np.abs(points[:, free]) < w, axis=1)
        sums.append(float(np.sum(values[inside]) * cell))
    return windows, sums


def _verdict(sums, rel_tol: float):
    value = sums[-1]
    last, prev = sums[-1] - sums[-2], sums[-2] - sums[-3]
    ratio = last / prev if prev > 0 else (0.0 if last <= 0 else np.inf)
    if ratio >= 1.0 and last > rel_tol * abs(value):
        return VolumeVerdict.DIVERGENT, abs(last)
    if last <= rel_tol * abs(value) and ratio < 1.0:
        return VolumeVerdict.CONVERGED, abs(last)
    if ratio < 1.0:
        tail = last * ratio / (1.0 - ratio)
        if tail <= rel_tol * abs(value):
            return VolumeVerdict.CONVERGED, tail
    return VolumeVerdict.INCONCLUSIVE, abs(last)


def _volume(metric, model, kind: VolumeKind, values_fn, coarse_fn, grid: int, levels: int, rel_tol: float) -> VolumeResult:
    if model.is_compact:
        value = _integrate(model, values_fn, grid)
        error = abs(value - _integrate(model, coarse_fn, grid))
        if not metric.x_independent:
            error += abs(value - _integrate(model, values_fn, max(grid // 2, 2)))
        return VolumeResult(kind=kind, value=value, error_estimate=max(error, 1e-13 * value),
                            verdict=VolumeVerdict.FINITE)
    if levels < 3:
        raise DomainError("a truncation verdict needs at least three windows")
    windows, sums = _truncation_sequence(model, values_fn, grid, levels)
    verdict, error = _verdict(sums, rel_tol)
    logger.info("%s volume of %s on %s: %s after windows %s", kind.value, metric.label, model.label,
                verdict.value, windows)
    return VolumeResult(
        kind=kind, value=sums[-1] if verdict == VolumeVerdict.CONVERGED else None, error_estimate=error,
        infinite=verdict == VolumeVerdict.DIVERGENT, verdict=verdict,
        truncations=[Truncation(bound=w, value=v) for w, v in zip(windows, sums)],
    )


def manifold_volume(metric: MetricSpec, model: ManifoldModel, kind: VolumeKind = VolumeKind.HT, grid: int = 32,
                    q: Optional[SphereQuadrature] = None, levels: int = 4, rel_tol: float = 1e-6) -> VolumeResult:
    """
    Total BH, HT or Hilbert-form volume. Tori are integrated on a periodic
    midpoint grid; other models give a sequence of truncated values and a
    verdict from the decay of the shell increments. No value is returned
    unless the sequence converged.
    """
    if metric.dim != model.dim:
        raise DomainError(f"metric dimension {metric.dim} does not match model dimension {model.dim}")
    q = q or default_quadrature(metric.dim)
    coarse = q.halved()
    return _volume(
        metric, model, kind,
        lambda xs: _density_values(metric, xs, kind, q),
        lambda xs: _density_values(metric, xs, kind, coarse),
        grid, levels, rel_tol,
    )


def omega_ball_volume(metric: MetricSpec, model: ManifoldModel, q: Optional[SphereQuadrature] = None,
                      grid: int = 32, levels: int = 4) -> VolumeResult:
    """(1 / Vol(B^n(1))) int_{BM} dV_omega, with det g sampled inside each tangent ball."""
    return manifold_volume(metric, model, VolumeKind.OMEGA, grid=grid, q=q, levels=levels)


# --- (alpha, beta) closed forms -------------------------------------------------------

def _profile_terms(profile: AlphaBetaProfile):
    phi = profile.phi
    d1, d2 = jax.grad(phi), jax.grad(jax.grad(phi))
    return (lambda s: float(phi(s))), (lambda s: float(d1(s))), (lambda s: float(d2(s)))


def alphabeta_densities(profile: AlphaBetaProfile) -> AlphaBetaDensities:
    """
    f(b) = int sin^{n-2} / int sin^{n-2} phi(b cos t)^{-n} and
    g(b) = int sin^{n-2} T(b cos t) / int sin^{n-2} over [0, pi], with
    T(s) = phi (phi - s phi')^{n-2} [(phi - s phi') + (b^2 - s^2) phi''].
    dV_BH = f(b) dV_alpha and dV_HT = g(b) dV_alpha.
    """
    n, b = profile.n, profile.b
    phi, d1, d2 = _profile_terms(profile)
    for s in np.linspace(-b, b, 41):
        p = phi(s)
        q = p - s * d1(s)
        if not p > 0:
            raise DomainError(f"phi({s:.3f}) = {p:.3e} is not positive")
        if not (q > 0 and q + (b * b - s * s) * d2(s) > 0):
            raise DomainError(f"phi does not give a strongly convex metric at s={s:.3f}, b={b}")

    def T(s):
        p = phi(s)
        q = p - s * d1(s)
        return p * q ** (n - 2) * (q + (b * b - s * s) * d2(s))

    def weighted(fun):
        value, _ = quad(lambda t: np.sin(t) ** (n - 2) * fun(b * np.cos(t)), 0.0, np.pi, epsabs=1e-12, epsrel=1e-12)
        return value

    base = weighted(lambda s: 1.0)
    return AlphaBetaDensities(
        f_value=base / weighted(lambda s: phi(s) ** -n), g_value=weighted(T) / base, b=b, n=n,
    )


def flat_alpha_beta_metric(profile: AlphaBetaProfile) -> MetricSpec:
    """The Minkowski (alpha, beta) norm with alpha Euclidean and b = (b, 0, ..., 0)."""
    b = np.zeros(profile.n)
    b[0] = profile.b
    return alpha_beta(np.eye(profile.n), b, profile.phi, profile.n, name="flat-alpha-beta")


def fit_bh_exponent(n: int, bs: Sequence[float] = tuple(np.round(np.arange(0.1, 1.0, 0.1), 1)),
                    q: Optional[SphereQuadrature] = None) -> ExponentFit:
    """Least-squares exponent k in sigma_BH = (1 - b^2)^k for flat Randers metrics."""
    q = q or default_quadrature(n)
    samples = []
    for b in bs:
        vec = np.zeros(n)
        vec[0] = b
        samples.append((float(b), sigma_BH(randers(np.eye(n), vec, n), np.zeros(n), q)))
    arr = np.array(samples)
    log_base, log_sigma = np.log(1.0 - arr[:, 0] ** 2), np.log(arr[:, 1])
    exponent = float(log_base @ log_sigma / (log_base @ log_base))
    residual = float(np.max(np.abs(log_sigma - exponent * log_base)))
    logger.info("BH exponent for flat Randers, n=%d: %.10f", n, exponent)
    return ExponentFit(n=n, exponent=exponent, residual=residual, samples=[list(s) for s in samples])


# --- Hilbert form and comparisons -----------------------------------------------------

def sm_symplectic_volume(metric: MetricSpec, model: ManifoldModel, q: Optional[SphereQuadrature] = None,
                         grid: int = 32) -> SymplecticVolumeResult:
    """
    int_{SM} dV_omega on a torus, or on the truncation box of another model,
    under both fiber conventions, with the two vol_HT paths compared.
    """
    n = metric.dim
    q = q or default_quadrature(n)
    unit_ball = euclidean_ball_volume(n)

    radial = (2 * n - 1) * _integrate(model, lambda xs: _per_point(_interior_integrals, metric, xs, q), grid)
    surface = _integrate(model, lambda xs: _per_point(_surface_areas, metric, xs, q), grid)
    from_density = _integrate(model, lambda xs: _density_values(metric, xs, VolumeKind.HT, q), grid)
    from_lemma = radial / ((2 * n - 1) * unit_ball)
    return SymplecticVolumeResult(
        value=radial, surface_value=surface, convention_ratio=surface / radial,
        ht_from_lemma=from_lemma, ht_from_density=from_density,
        relative_gap=abs(from_lemma - from_density) / from_density, conventions=CONVENTIONS,
    )


def sm_finiteness(metric: MetricSpec, model: ManifoldModel, q: Optional[SphereQuadrature] = None,
                  grid: int = 16, levels: int = 4) -> SMFinitenessReport:
    """Finite vol_HT and finite symplectic volume of SM decided on the same truncations."""
    n = metric.dim
    q = q or default_quadrature(n)
    ht = manifold_volume(metric, model, VolumeKind.HT, grid=grid, q=q, levels=levels)
    factor = 2 * n - 1
    coarse = q.halved()
    sm = _volume(
        metric, model, VolumeKind.OMEGA,
        lambda xs: factor * _per_point(_interior_integrals, metric, xs, q),
        lambda xs: factor * _per_point(_interior_integrals, metric, xs, coarse),
        grid, levels, 1e-6,
    )
    finite = {VolumeVerdict.FINITE, VolumeVerdict.CONVERGED}
    return SMFinitenessReport(ht=ht, sm=sm, consistent=(ht.verdict in finite) == (sm.verdict in finite))


def _order(named) -> str:
    ordered = sorted(named, key=lambda item: item[1])
    text = ordered[0][0]
    for (_, prev), (name, value) in zip(ordered, ordered[1:]):
        text += (" = " if abs(value - prev) <= 1e-10 * max(abs(value), 1e-300) else " < ") + name
    return text


def volume_comparison_report(metric: MetricSpec, model: ManifoldModel, grid: int = 32,
                             q: Optional[SphereQuadrature] = None) -> VolumeComparison:
    """
    vol_BH, vol_HT and vol(M, alpha) on one grid (the truncation box for
    non-compact models) with the inequalities that apply to the metric.
    Violations are reported, never raised.
    """
    q = q or default_quadrature(metric.dim)
    lower, upper = model.box()
    points, cell = _midpoints(lower, upper, [grid] * model.dim)
    bh = _density_values(metric, points, VolumeKind.BH, q)
    ht = _density_values(metric, points, VolumeKind.HT, q)
    vol_bh, vol_ht = float(np.sum(bh) * cell), float(np.sum(ht) * cell)
    vol_alpha = None
    if metric.alpha is not None:
        dets = np.array([np.linalg.det(metric.a_matrix(x)) for x in (points[:1] if metric.x_independent else points)])
        vol_alpha = float(np.sum(np.broadcast_to(np.sqrt(dets), len(points))) * cell)

    checks = []
    ratio_bounds = None
    if metric.absolutely_homogeneous:
        margin = vol_bh - vol_ht
        checks.append(InequalityCheck(statement="vol_HT <= vol_BH", holds=margin >= -1e-12 * vol_bh,
                                      margins=[margin]))
        ratio = ht / bh
        ratio_bounds = [float(np.min(ratio)), float(np.max(ratio))]
    if metric.phi_kind in ("slope", "matsumoto") and vol_alpha is not None:
        margins = [vol_ht - vol_bh, vol_alpha - vol_ht]
        checks.append(InequalityCheck(statement="vol_BH < vol_HT < vol_alpha", holds=min(margins) > 0,
                                      margins=margins))
    if metric.family == MetricFamily.RANDERS:
        gap = abs(vol_ht - vol_alpha)
        checks.append(InequalityCheck(statement="vol_HT = vol_alpha", holds=gap <= 1e-8 * vol_alpha,
                                      margins=[1e-8 * vol_alpha - gap]))
        checks.append(InequalityCheck(statement="vol_BH <= vol_alpha", holds=vol_bh <= vol_alpha * (1 + 1e-12),
                                      margins=[vol_alpha - vol_bh]))
    if metric.family in (MetricFamily.EUCLIDEAN, MetricFamily.RIEMANNIAN):
        gaps = [abs(vol_bh - vol_alpha), abs(vol_ht - vol_alpha)]
        checks.append(InequalityCheck(statement="vol_BH = vol_HT = vol_alpha",
                                      holds=max(gaps) <= 1e-8 * vol_alpha,
                                      margins=[1e-8 * vol_alpha - g for g in gaps]))

    named = [("vol_BH", vol_bh), ("vol_HT", vol_ht)] + ([("vol_alpha", vol_alpha)] if vol_alpha is not None else [])
    return VolumeComparison(
        metric=metric.label, vol_bh=vol_bh, vol_ht=vol_ht, vol_alpha=vol_alpha,
        absolutely_homogeneous=metric.absolutely_homogeneous, checks=checks, observed_order=_order(named),
        density_ratio_bounds=ratio_bounds,
    )
