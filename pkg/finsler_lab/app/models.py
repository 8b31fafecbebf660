from enum import Enum
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

SCHEMA_VERSION = "1.0"


class MetricFamily(str, Enum):
    EUCLIDEAN = "euclidean"
    RIEMANNIAN = "riemannian"
    RANDERS = "randers"
    ALPHA_BETA = "alpha_beta"
    MINKOWSKI = "minkowski"
    CUSTOM = "custom"


class ModelKind(str, Enum):
    UNBOUNDED = "unbounded"
    TORUS = "torus"
    WARPED = "warped"


class VolumeKind(str, Enum):
    BH = "bh"
    HT = "ht"
    OMEGA = "omega"


class VolumeVerdict(str, Enum):
    """How a total volume was decided."""
    FINITE = "finite"
    CONVERGED = "converged"
    DIVERGENT = "divergent"
    INCONCLUSIVE = "inconclusive"


class FiberConvention(str, Enum):
    RADIAL = "radial"
    SURFACE = "surface"


class Classification(str, Enum):
    STRICTLY_CONVEX = "strictly-convex"
    CONVEX = "convex"
    LINEAR = "linear"
    NON_CONVEX = "non-convex"


class LemmaVerdict(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"


# --- metric and model descriptors -------------------------------------------------

class CoefficientConfig(BaseModel):
    """A named built-in coefficient function of the chart point x."""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["constant", "polynomial", "gaussian", "sine", "stereographic"]
    var: int = Field(0, ge=0, description="Index of the coordinate the profile depends on")
    value: float = Field(0.0, description="constant: the value")
    coeffs: List[float] = Field(default_factory=list, description="polynomial: c0 + c1 x + c2 x^2 + ...")
    amplitude: float = Field(1.0, description="gaussian/sine: amplitude")
    center: float = Field(0.0, description="gaussian: center")
    width: float = Field(1.0, gt=0, description="gaussian: width w in exp(-((x-c)/w)^2)")
    offset: float = Field(0.0, description="gaussian/sine: additive offset")
    frequency: float = Field(1.0, description="sine: angular frequency")
    phase: float = Field(0.0, description="sine: phase")
    scale: float = Field(1.0, gt=0, description="stereographic: factor multiplying 4/(1+|x|^2)^2")


Scalar = Union[float, CoefficientConfig]


class PhiConfig(BaseModel):
    """Profile phi(s) of an (alpha, beta) metric F = alpha * phi(beta/alpha)."""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["riemannian", "randers", "quadratic", "matsumoto", "slope", "polynomial"]
    coeffs: List[float] = Field(default_factory=list, description="polynomial: c0 + c1 s + c2 s^2 + ...")


class NormConfig(BaseModel):
    """An x-independent Minkowski norm."""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["lp", "quartic"]
    p: float = Field(4.0, ge=2.0, description="lp: exponent")
    c: float = Field(0.0, ge=0.0, description="quartic: mixing in F^4 = sum y_i^4 + c sum_{i<j} y_i^2 y_j^2")


class MetricConfig(BaseModel):
    """JSON document describing a Finsler metric."""
    model_config = ConfigDict(extra="forbid")

    family: MetricFamily
    dim: int = Field(..., ge=2, description="Dimension n of the chart")
    name: Optional[str] = Field(None, description="Label echoed in reports")
    a: Optional[List[List[Scalar]]] = Field(None, description="Riemannian field a_ij")
    b: Optional[List[Scalar]] = Field(None, description="One-form field b_i")
    phi: Optional[PhiConfig] = None
    norm: Optional[NormConfig] = None

    @model_validator(mode="after")
    def check_family_fields(self):
        required = {
            MetricFamily.EUCLIDEAN: (),
            MetricFamily.RIEMANNIAN: ("a",),
            MetricFamily.RANDERS: ("a", "b"),
            MetricFamily.ALPHA_BETA: ("a", "b", "phi"),
            MetricFamily.MINKOWSKI: ("norm",),
        }
        if self.family == MetricFamily.CUSTOM:
            raise ValueError("custom metrics are built from Python callables, not JSON")
        for field in required[self.family]:
            if getattr(self, field) is None:
                raise ValueError(f"family '{self.family.value}' requires field '{field}'")
        if self.a is not None and (len(self.a) != self.dim or any(len(row) != self.dim for row in self.a)):
            raise ValueError(f"'a' must be a {self.dim}x{self.dim} matrix")
        if self.b is not None and len(self.b) != self.dim:
            raise ValueError(f"'b' must have length {self.dim}")
        return self


class ModelConfig(BaseModel):
    """JSON document describing the chart geometry."""
    model_config = ConfigDict(extra="forbid")

    kind: ModelKind
    dim: int = Field(2, ge=2)
    periods: Optional[List[float]] = Field(None, description="torus: period of each coordinate")
    profile: Optional[CoefficientConfig] = Field(None, description="warped: profile of x1")
    period: float = Field(1.0, gt=0, description="warped: period of x2")
    bound: float = Field(6.0, gt=0, description="warped: truncation bound on |x1|")
    window: float = Field(4.0, gt=0, description="unbounded: initial truncation half-width")

    @model_validator(mode="after")
    def check_kind_fields(self):
        if self.kind == ModelKind.TORUS:
            if not self.periods or len(self.periods) != self.dim:
                raise ValueError(f"torus requires {self.dim} periods")
            if any(p <= 0 for p in self.periods):
                raise ValueError("torus periods must be positive")
        if self.kind == ModelKind.WARPED:
            if self.profile is None:
                raise ValueError("warped surface requires a profile")
            if self.dim != 2:
                raise ValueError("warped surfaces are two-dimensional")
        return self


# --- numerical options ------------------------------------------------------------

class IntegrationOptions(BaseModel):
    """Geodesic integrator settings; `tol` bounds the accepted F drift."""
    model_config = ConfigDict(frozen=True)

    tol: float = Field(1e-8, gt=0, description="Largest accepted |F(state) - F(state0)|")
    rtol: float = Field(1e-10, gt=0)
    atol: float = Field(1e-12, gt=0)
    max_step: float = Field(0.5, gt=0, description="Cap on the RK45 step; keeps the dense output resolved")
    retries: int = Field(1, ge=0, description="Reruns with 100x tighter tolerances before giving up")
    backward: bool = Field(False, description="Integrate on [-t_end, 0] instead of [0, t_end]")


class ValidationOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_samples: int = Field(200, ge=1)
    seed: int = 0


class ScreenOptions(BaseModel):
    """Empirical convexity screen over a geodesic ensemble."""
    model_config = ConfigDict(frozen=True)

    ensemble: int = Field(200, ge=1, description="Number of geodesics")
    horizon: float = Field(8.0, gt=0, description="Parameter length of each geodesic")
    samples: int = Field(81, ge=3, description="Uniform samples per geodesic")
    tol: float = Field(1e-8, gt=0, description="Relative tolerance; scaled by the candidate's magnitude")
    constancy_tol: float = Field(1e-6, gt=0, description="Relative spread below which a candidate counts as constant")
    seed: int = 0


class DistanceOptions(BaseModel):
    """Grid shortest-path solver with shooting polish."""
    model_config = ConfigDict(frozen=True)

    resolution: int = Field(64, ge=8, description="Grid nodes per unit length")
    margin: float = Field(2.0, ge=0, description="Extra chart length around the two points")
    stencil_radius: int = Field(2, ge=1, description="Radius 2 gives the 16-neighbour stencil in 2D")
    max_nodes: int = Field(400_000, ge=1000, description="Resolution is lowered for boxes that would exceed this many nodes")
    polish: bool = True
    slack: float = Field(1e-6, ge=0, description="Polished value accepted if below graph value + slack")
    method: Literal["auto", "graph", "exact"] = "auto"


# --- reports ----------------------------------------------------------------------

class ValidationCheck(BaseModel):
    name: str
    passed: bool
    margin: float = Field(..., description="Worst-case margin; negative when the check fails")
    detail: str = ""


class ValidationReport(BaseModel):
    metric: str
    n_samples: int
    checks: List[ValidationCheck]
    min_eigenvalue: float
    absolutely_homogeneous: bool

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def check(self, name: str) -> ValidationCheck:
        return next(check for check in self.checks if check.name == name)


class Truncation(BaseModel):
    bound: float
    value: float


class VolumeResult(BaseModel):
    kind: VolumeKind
    value: Optional[float] = Field(None, description="Total volume; None when divergent or inconclusive")
    error_estimate: float = 0.0
    infinite: bool = False
    verdict: VolumeVerdict
    truncations: List[Truncation] = Field(default_factory=list)


class SymplecticVolumeResult(BaseModel):
    value: float = Field(..., description="Integral of dV_omega over SM, radial convention")
    surface_value: float = Field(..., description="Same integral with the induced surface measure on each S_xM")
    convention_ratio: float = Field(..., description="surface_value / value")
    ht_from_lemma: float = Field(..., description="value / ((2n-1) Vol(B^n(1)))")
    ht_from_density: float
    relative_gap: float
    conventions: Dict[str, str]


class SMFinitenessReport(BaseModel):
    """Truncation verdicts of vol_HT and of the symplectic volume of SM, side by side."""
    ht: VolumeResult
    sm: VolumeResult
    consistent: bool


class InequalityCheck(BaseModel):
    statement: str
    holds: bool
    margins: List[float]


class VolumeComparison(BaseModel):
    metric: str
    vol_bh: float
    vol_ht: float
    vol_alpha: Optional[float] = None
    absolutely_homogeneous: bool
    checks: List[InequalityCheck]
    observed_order: str
    density_ratio_bounds: Optional[List[float]] = Field(
        None, description="min and max of sigma_HT/sigma_BH over the grid (absolutely homogeneous case)"
    )


class AlphaBetaDensities(BaseModel):
    f_value: float
    g_value: float
    b: float
    n: int


class ExponentFit(BaseModel):
    n: int
    exponent: float
    residual: float
    samples: List[List[float]] = Field(..., description="(b, sigma_BH) pairs")
    printed_exponent: float = Field(1.0, description="Exponent of (1-b^2) in the textbook-remark formula")


class LiouvilleReport(BaseModel):
    t: float
    ratio: float
    deviation: float
    density_start: float
    density_end: float
    jacobian_det: float


class RecurrenceEvent(BaseModel):
    t: float = Field(..., gt=0)
    phase_distance: float = Field(..., ge=0)


class RecurrenceCensus(BaseModel):
    n_states: int
    recurrent: int
    escaped: int
    fraction: float
    truncation_rate: float
    first_return_times: List[Optional[float]]


class ConvexityProfile(BaseModel):
    values: List[float]
    max_defect: float
    linearity_residual: float
    classification: Classification


class KeyLemmaResult(BaseModel):
    verdict: LemmaVerdict
    variation: float
    threshold: float
    convex_along_ensemble: bool
    recurrent: bool
    events: List[RecurrenceEvent]
    witness: Optional[Dict[str, float]] = None

    @property
    def contradicts_lemma(self) -> bool:
        """Convex along the ensemble, recurrent and nonconstant: never observed."""
        return self.convex_along_ensemble and self.recurrent and self.verdict == LemmaVerdict.FAIL


class CandidateOutcome(BaseModel):
    name: str
    convex_along_ensemble: bool
    nonconstant: bool
    max_defect: float
    spread: float
    witness: Optional[Dict[str, float]] = None

    @property
    def convex_and_nonconstant(self) -> bool:
        return self.convex_along_ensemble and self.nonconstant


class TheoremReport(BaseModel):
    model: str
    volume: VolumeResult
    finite_volume: bool
    candidates: List[CandidateOutcome]
    consistent: bool = Field(..., description="Finite volume implies no convex nonconstant candidate")


class DistanceValue(BaseModel):
    value: float
    error_estimate: float
    graph_value: float
    grid_error: float
    polished: bool


class RayCertificate(BaseModel):
    """Forward minimality of a ray at its checkpoints, and of the reversed curve."""
    checkpoints: List[float]
    distances: List[float] = Field(..., description="d(gamma(0), gamma(s)) at each checkpoint s")
    errors: List[float]
    certified: List[bool]
    reverse_lengths: List[float] = Field(..., description="Length of the reversed curve from gamma(s) to gamma(0)")
    reverse_distances: List[float] = Field(..., description="d(gamma(s), gamma(0))")
    reversible: bool

    @property
    def all_certified(self) -> bool:
        return all(self.certified)


class BusemannValue(BaseModel):
    t_list: List[float]
    approximants: List[float]
    limit: float
    error_bar: float
    monotone: bool


class BusemannConvexityReport(BaseModel):
    horizon: float
    ensemble: int
    max_defect: float
    tolerance: float = Field(..., description="Convexity tolerance: requested tol plus the largest distance error")
    approximation_error: float = Field(..., description="max |b_T - b_{T/2}| plus the distance error")
    histogram: Dict[str, int] = Field(
        ..., description="Profiles per classification; 'inconclusive' counts defects within 4x the approximation error"
    )
    profiles: List[ConvexityProfile]


class CheckResult(BaseModel):
    """Outcome of one invariant check in the verification suite."""
    name: str
    passed: bool
    value: Optional[float] = None
    tolerance: Optional[float] = None
    reason: str = ""
    deviation: Optional[str] = Field(None, description="Documented departure from the expected outcome")
