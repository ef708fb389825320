import math
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..config import get_settings
from ..geometry.spaceform import AmbientPoint, SpaceForm

SurfaceFamily = Literal[
    "geodesic_sphere",
    "tangent_sphere_pair",
    "torus_of_revolution_H3",
    "clifford_torus_S3",
    "perturbed_sphere",
    "geodesic_cap",
]


class QuadratureSpec(BaseModel):
    """
    Schema for the quadrature resolution of a surface. Cells straddling a cut radius are
    refined until their clipped-area error is below cut_tolerance times the cell area.
    """

    model_config = ConfigDict(frozen=True)

    base_cells_per_axis: int = Field(8, description="Cells per parameter axis before refinement", ge=4)
    gauss_points_per_cell_axis: int = Field(4, description="Gauss-Legendre points per cell axis", ge=2, le=6)
    max_refine_depth: int = Field(10, description="Maximum number of quadrisections of a cell", ge=0, le=12)
    cut_tolerance: float = Field(1e-9, description="Relative area tolerance for cut cells", gt=0, le=1e-2)

    @classmethod
    def from_settings(cls) -> "QuadratureSpec":
        settings = get_settings()
        return cls(
            base_cells_per_axis=settings.BASE_CELLS,
            gauss_points_per_cell_axis=settings.GAUSS_POINTS,
            max_refine_depth=settings.MAX_REFINE_DEPTH,
            cut_tolerance=settings.CUT_TOLERANCE,
        )


class SurfaceSpec(BaseModel):
    """
    Schema for an analytic test surface. Every family keeps a designated point at the model
    origin e_0 (a pole of the sphere-type charts, the (0, 0) corner of the tori), which is
    the default base point of the monotonicity operations.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    family: SurfaceFamily = Field(..., description="Surface family name")
    curvature_sign: Literal[-1, 1] = Field(-1, description="-1 for hyperbolic space, +1 for the sphere")
    ambient_dim: int = Field(3, description="Dimension n of the ambient model", ge=3)
    radius: float = Field(1.0, description="Geodesic radius t of sphere-type families", gt=0)
    second_radius: Optional[float] = Field(
        None, description="Radius of the second sphere of a tangent pair (defaults to radius)", gt=0
    )
    core_distance: float = Field(2.0, description="Distance R of the torus tube centre from its axis", gt=0)
    tube_radius: float = Field(0.5, description="Geodesic tube radius a of the hyperbolic torus", gt=0)
    clifford_angle: float = Field(math.pi / 4, description="Angle a of the product torus in the sphere")
    cap_angle: float = Field(math.pi / 2, description="Polar opening angle of a geodesic cap")
    amplitude: float = Field(0.1, description="Relative radial perturbation amplitude")
    frequency: int = Field(2, description="Angular frequency of the radial perturbation", ge=1)
    embed_subspace: bool = Field(
        False, description="Place the 3-dimensional family in a tilted totally geodesic 3-subspace"
    )

    @field_validator("curvature_sign", mode="before")
    @classmethod
    def _parse_sign(cls, value: Any) -> Any:
        # INI values arrive as strings
        if isinstance(value, str):
            return int(value.strip().replace("+", ""))
        return value

    @model_validator(mode="after")
    def _check_family(self) -> "SurfaceSpec":
        sphere = self.curvature_sign > 0
        if self.ambient_dim > 3 and not self.embed_subspace:
            raise ValueError("families are 3-dimensional; set embed_subspace for ambient_dim > 3")
        radii = [self.radius] + ([self.second_radius] if self.second_radius else [])
        if sphere and any(t >= math.pi for t in radii):
            raise ValueError("sphere radii must lie in (0, pi)")
        if self.family == "torus_of_revolution_H3":
            if sphere:
                raise ValueError("torus_of_revolution_H3 lives in hyperbolic space")
            if not self.core_distance > self.tube_radius:
                raise ValueError("core_distance must exceed tube_radius")
        if self.family == "clifford_torus_S3":
            if not sphere:
                raise ValueError("clifford_torus_S3 lives in the sphere")
            if not 0 < self.clifford_angle < math.pi / 2:
                raise ValueError("clifford_angle must lie in (0, pi/2)")
        if self.family == "geodesic_cap" and not 0 < self.cap_angle < math.pi:
            raise ValueError("cap_angle must lie in (0, pi)")
        if self.family == "perturbed_sphere":
            if not abs(self.amplitude) < 1:
                raise ValueError("amplitude must satisfy |amplitude| < 1")
            if sphere and self.radius * (1 + abs(self.amplitude)) >= math.pi:
                raise ValueError("perturbed radius must stay below pi")
        return self

    @property
    def form(self) -> SpaceForm:
        return SpaceForm(curvature_sign=self.curvature_sign, ambient_dim=self.ambient_dim)


class ReferenceValues(BaseModel):
    """
    Schema for closed-form reference values of a surface family.
    """

    area: Optional[float] = Field(None, description="Area |Sigma|")
    willmore_quarter: Optional[float] = Field(None, description="One quarter of the Willmore energy")
    mean_curvature: Optional[float] = Field(None, description="Length of the mean curvature vector")
    boundary_length: Optional[float] = Field(None, description="Length of the boundary curve")

    @property
    def empty(self) -> bool:
        return all(value is None for value in self.model_dump().values())


class BalanceReport(BaseModel):
    """
    Schema for one evaluated identity or inequality. The residual is lhs - rhs and the margin
    rhs - lhs, both exactly as computed; terms holds every named integral that entered them.
    """

    name: str = Field(..., description="Operation that produced the report")
    kind: Literal["identity", "inequality"] = Field(..., description="How the report is judged")
    lhs: float = Field(..., description="Left-hand side")
    rhs: float = Field(..., description="Right-hand side")
    residual: float = Field(..., description="lhs - rhs")
    margin: float = Field(..., description="rhs - lhs")
    terms: Dict[str, float] = Field(default_factory=dict, description="Named integral terms")
    refinement_history: List[Tuple[int, float]] = Field(
        default_factory=list, description="(base cells per axis, residual) per refinement level"
    )
    warnings: List[str] = Field(default_factory=list, description="Numerical warnings")
    tolerance: float = Field(..., description="Relative tolerance used to judge the report", ge=0)

    @classmethod
    def build(
        cls,
        name: str,
        kind: str,
        lhs: float,
        rhs: float,
        terms: Dict[str, float],
        tolerance: float,
        warnings: Optional[List[str]] = None,
    ) -> "BalanceReport":
        return cls(
            name=name,
            kind=kind,
            lhs=float(lhs),
            rhs=float(rhs),
            residual=float(lhs - rhs),
            margin=float(rhs - lhs),
            terms={key: float(value) for key, value in terms.items()},
            warnings=list(warnings or []),
            tolerance=tolerance,
        )

    @property
    def scale(self) -> float:
        return max(1.0, abs(self.lhs) + abs(self.rhs))

    @property
    def passed(self) -> bool:
        if self.kind == "identity":
            return abs(self.residual) <= self.tolerance * self.scale
        return self.margin >= -self.tolerance * self.scale


class MonotonicityInputs(BaseModel):
    """
    Schema for the base point and radii of the monotonicity balances.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    o: AmbientPoint = Field(..., description="Base point")
    sigma: float = Field(..., description="Inner radius", gt=0)
    rho: float = Field(..., description="Outer radius", gt=0)
    k: Optional[int] = Field(None, description="Multiplicity at o; computed when omitted", ge=1)

    @model_validator(mode="after")
    def _check_radii(self) -> "MonotonicityInputs":
        if not self.sigma < self.rho:
            raise ValueError("radii must satisfy 0 < sigma < rho")
        if self.o.form.K > 0 and self.rho >= math.pi:
            raise ValueError("rho must be below pi on the sphere (conjugate points)")
        return self


class EqualityCaseResult(BaseModel):
    """
    Schema for the two-point equality-case test of geodesic spheres.
    """

    max_residual: float = Field(..., description="Largest pair residual", ge=0)
    min_mean_curvature: float = Field(..., description="Smallest scalar mean curvature over the samples")
    pairs_evaluated: int = Field(..., description="Pairs entering the maximum", ge=0)
    pairs_skipped: int = Field(..., description="Pairs closer than the coincidence cut-off", ge=0)

    @property
    def mean_curvature_positive(self) -> bool:
        return self.min_mean_curvature > 0


class DensityEstimate(BaseModel):
    """
    Schema for density-ratio estimates of the multiplicity at a point.
    """

    sigmas: List[float] = Field(..., description="Radii, decreasing")
    area_ratios: List[float] = Field(..., description="|Sigma_sigma| / (pi sigma^2)")
    weighted_ratios: List[float] = Field(..., description="phi(sigma) int_{Sigma_sigma} V / (2 pi)")
    k_extrapolated: float = Field(..., description="Richardson limit of the area ratios in sigma^2")
    k_weighted: float = Field(..., description="Richardson limit of the weighted ratios in sigma^2")


class BasePointSection(BaseModel):
    """
    Schema for the [base_point] section: the chart and parameter pair of o.
    """

    model_config = ConfigDict(extra="forbid")

    chart: int = Field(0, description="Chart index", ge=0)
    u: float = Field(0.0, description="First chart parameter")
    v: float = Field(0.0, description="Second chart parameter")


OperationName = Literal[
    "willmore_energy",
    "crude_balance",
    "mono_identity",
    "sphere_crude_balance",
    "finer_inequality",
    "sphere_finer_inequality",
    "boundary_mono",
    "chen_inequality",
    "embeddedness_criterion",
    "density_ratio",
    "first_variation_balance",
    "divergence_equality",
    "equality_case_residual",
]

SweepVariable = Literal["rho", "sigma", "t", "resolution"]


class OperationSection(BaseModel):
    """
    Schema for the [operation] section.
    """

    model_config = ConfigDict(extra="forbid")

    name: OperationName = Field(..., description="Functional to evaluate")
    sigma: Optional[float] = Field(None, description="Inner radius", gt=0)
    rho: Optional[float] = Field(None, description="Outer radius", gt=0)
    k: Optional[int] = Field(None, description="Multiplicity override", ge=1)
    interior: bool = Field(True, description="Interior (4 pi) or boundary-point (2 pi) constant")
    field: Literal["radial", "height"] = Field("radial", description="Test field of first_variation_balance")
    sigmas: Optional[List[float]] = Field(None, description="Radii of density_ratio")
    sample_pairs: int = Field(2000, description="Random pairs of equality_case_residual", ge=1)
    nodes: int = Field(1000, description="Random nodes of the pointwise checks", ge=1)
    sweep_variable: Optional[SweepVariable] = Field(None, description="Variable swept by the sweep command")
    sweep_start: Optional[float] = Field(None, description="First sweep value")
    sweep_stop: Optional[float] = Field(None, description="Last sweep value")
    sweep_count: int = Field(5, description="Number of sweep values", ge=0)

    @field_validator("sigmas", mode="before")
    @classmethod
    def _split_list(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [float(item) for item in value.replace(",", " ").split()]
        return value


class QuadratureSection(BaseModel):
    """
    Schema for the [quadrature] section; unset keys keep the settings defaults.
    """

    model_config = ConfigDict(extra="forbid")

    base_cells_per_axis: Optional[int] = None
    gauss_points_per_cell_axis: Optional[int] = None
    max_refine_depth: Optional[int] = None
    cut_tolerance: Optional[float] = None

    def overrides(self) -> Dict[str, Any]:
        return {key: value for key, value in self.model_dump().items() if value is not None}


class OutputSection(BaseModel):
    """
    Schema for the [output] section.
    """

    model_config = ConfigDict(extra="forbid")

    path: Optional[str] = Field(None, description="CSV destination; stdout when unset")


class RunConfig(BaseModel):
    """
    Schema for a complete run configuration file.
    """

    model_config = ConfigDict(extra="forbid")

    surface: SurfaceSpec
    base_point: BasePointSection = Field(default_factory=BasePointSection)
    operation: OperationSection
    quadrature: QuadratureSection = Field(default_factory=QuadratureSection)
    output: OutputSection = Field(default_factory=OutputSection)
