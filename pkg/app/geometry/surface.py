"""Parametric immersed surfaces in the model spaces.

A surface is a multiset of rectangle charts, each carrying a jet evaluator that returns the
position and its first and second parameter derivatives at arrays of parameter points.
Overlapping charts are integrated with multiplicity.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, FrozenSet, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from ..config import get_settings
from ..exceptions import (
    AmbientDimensionError,
    DegenerateError,
    DomainError,
    ModelConstraintError,
    NotOnSurfaceError,
    OrientationError,
)
from ..models.schemas import QuadratureSpec
from .spaceform import (
    AmbientPoint,
    RadialWeights,
    SpaceForm,
    _distance,
    _radial_field,
    radial_weights,
)

logger = logging.getLogger(__name__)

EDGES = ("u0", "u1", "v0", "v1")
MIN_METRIC_DET = 1e-14


@dataclass(frozen=True)
class JetData:
    """Position and parameter derivatives up to order two, leading axis = nodes."""

    F: np.ndarray
    F_u: np.ndarray
    F_v: np.ndarray
    F_uu: np.ndarray
    F_uv: np.ndarray
    F_vv: np.ndarray

    def take(self, mask: np.ndarray) -> "JetData":
        return JetData(*(getattr(self, name)[mask] for name in self.__dataclass_fields__))


JetFn = Callable[[np.ndarray, np.ndarray], JetData]


@dataclass(frozen=True)
class Chart:
    """A rectangle [u0, u1] x [v0, v1] with a jet evaluator.

    `collapsed_edges` map to a single point (polar charts); such an edge is one preimage in
    multiplicity counts. `orientation` is +1 when the normal built from (F_u, F_v) points out
    of the enclosed region, -1 when it points in, and None when there is no outward side.
    """

    domain: Tuple[float, float, float, float]
    jet: JetFn
    periodic: Tuple[bool, bool] = (False, False)
    boundary_edges: FrozenSet[str] = frozenset()
    collapsed_edges: FrozenSet[str] = frozenset()
    orientation: Optional[int] = None
    scale: float = 1.0
    label: str = ""

    def __post_init__(self):
        u0, u1, v0, v1 = self.domain
        if not (u1 > u0 and v1 > v0):
            raise DomainError(f"empty chart domain {self.domain}")
        unknown = (set(self.boundary_edges) | set(self.collapsed_edges)) - set(EDGES)
        if unknown:
            raise DomainError(f"unknown chart edges {sorted(unknown)}")

    def contains(self, u: float, v: float, slack: float = 0.0) -> bool:
        u0, u1, v0, v1 = self.domain
        return (u0 - slack <= u <= u1 + slack) and (v0 - slack <= v <= v1 + slack)

    def param_distance(self, a: Tuple[float, float], b: Tuple[float, float]) -> float:
        """Parameter distance with periodic wrap on the periodic axes."""
        u0, u1, v0, v1 = self.domain
        du, dv = abs(a[0] - b[0]), abs(a[1] - b[1])
        if self.periodic[0]:
            du = min(du, (u1 - u0) - du)
        if self.periodic[1]:
            dv = min(dv, (v1 - v0) - dv)
        return float(np.hypot(du, dv))

    def edge_of(self, u: float, v: float, tol: float = 1e-7) -> Optional[str]:
        """The collapsed edge (u, v) lies on, if any."""
        u0, u1, v0, v1 = self.domain
        for edge, hit in (
            ("u0", abs(u - u0) <= tol),
            ("u1", abs(u - u1) <= tol),
            ("v0", abs(v - v0) <= tol),
            ("v1", abs(v - v1) <= tol),
        ):
            if hit and edge in self.collapsed_edges:
                return edge
        return None


@dataclass(frozen=True)
class ImmersedSurface:
    form: SpaceForm
    charts: Tuple[Chart, ...]
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec.from_settings)
    closed: bool = True
    label: str = ""

    def __post_init__(self):
        self.form.require_curved()
        if not self.charts:
            raise DomainError("a surface needs at least one chart")
        if self.closed and any(chart.boundary_edges for chart in self.charts):
            raise DomainError("a closed surface cannot have boundary edges")

    @property
    def has_boundary(self) -> bool:
        return any(chart.boundary_edges for chart in self.charts)

    def with_quadrature(self, **overrides) -> "ImmersedSurface":
        spec = self.quadrature.model_copy(update=overrides)
        return replace(self, quadrature=QuadratureSpec.model_validate(spec.model_dump()))

    def union(self, other: "ImmersedSurface", label: str = "") -> "ImmersedSurface":
        if other.form != self.form:
            raise DomainError("cannot join surfaces living in different ambients")
        return replace(
            self,
            charts=self.charts + other.charts,
            closed=self.closed and other.closed,
            label=label or f"{self.label}+{other.label}",
        )


@dataclass(frozen=True)
class GeometrySample:
    """Pointwise geometry at a batch of nodes (leading axis) or at a single node.

    The base-point dependent fields (r, grad_r_tangential, X, X_perp, weights) are None when
    no base point was given.
    """

    F: np.ndarray
    F_u: np.ndarray
    F_v: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    area_element: np.ndarray
    H_vec: np.ndarray
    r: Optional[np.ndarray] = None
    grad_r_tangential: Optional[np.ndarray] = None
    X: Optional[np.ndarray] = None
    X_perp: Optional[np.ndarray] = None
    weights: Optional[RadialWeights] = None

    def node(self, index: int) -> "GeometrySample":
        def pick(value):
            return None if value is None else value[index]

        weights = None
        if self.weights is not None:
            weights = RadialWeights(**{k: pick(getattr(self.weights, k)) for k in self.weights.__dataclass_fields__})
        return GeometrySample(
            F=pick(self.F),
            F_u=pick(self.F_u),
            F_v=pick(self.F_v),
            e1=pick(self.e1),
            e2=pick(self.e2),
            area_element=pick(self.area_element),
            H_vec=pick(self.H_vec),
            r=pick(self.r),
            grad_r_tangential=pick(self.grad_r_tangential),
            X=pick(self.X),
            X_perp=pick(self.X_perp),
            weights=weights,
        )


def _frame(form: SpaceForm, F_u: np.ndarray, F_v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # Gram-Schmidt under the model form, first vector along F_u
    e1 = F_u / np.sqrt(form.inner(F_u, F_u))[..., None]
    e2 = F_v - form.inner(F_v, e1)[..., None] * e1
    e2 = e2 / np.sqrt(form.inner(e2, e2))[..., None]
    return e1, e2


def _strip_tangential(form: SpaceForm, vec: np.ndarray, e1: np.ndarray, e2: np.ndarray) -> np.ndarray:
    return vec - form.inner(vec, e1)[..., None] * e1 - form.inner(vec, e2)[..., None] * e2


def sample_batch(
    surface: ImmersedSurface,
    chart_index: int,
    u: np.ndarray,
    v: np.ndarray,
    base_point: Optional[AmbientPoint] = None,
) -> GeometrySample:
    chart = surface.charts[chart_index]
    jet = chart.jet(np.atleast_1d(np.asarray(u, dtype=float)), np.atleast_1d(np.asarray(v, dtype=float)))
    try:
        return sample_jet(surface.form, jet, base_point)
    except DegenerateError as exc:
        raise DegenerateError(f"chart {chart_index}: {exc}") from exc


def sample_jet(form: SpaceForm, jet: JetData, base_point: Optional[AmbientPoint] = None) -> GeometrySample:
    """Pointwise geometry from evaluated jets."""
    F = jet.F
    g_uu = form.inner(jet.F_u, jet.F_u)
    g_uv = form.inner(jet.F_u, jet.F_v)
    g_vv = form.inner(jet.F_v, jet.F_v)
    det = g_uu * g_vv - g_uv**2
    if np.any(det <= MIN_METRIC_DET):
        raise DegenerateError(f"degenerate induced metric (det g = {det.min():.3e})")

    # trace of the Hessian, then strip the position and tangent components
    trace = (g_vv[:, None] * jet.F_uu - 2.0 * g_uv[:, None] * jet.F_uv + g_uu[:, None] * jet.F_vv) / det[:, None]
    trace = trace - form.K * form.inner(trace, F)[:, None] * F
    e1, e2 = _frame(form, jet.F_u, jet.F_v)
    H_vec = _strip_tangential(form, trace, e1, e2)

    sample = GeometrySample(
        F=F, F_u=jet.F_u, F_v=jet.F_v, e1=e1, e2=e2, area_element=np.sqrt(det), H_vec=H_vec
    )
    if base_point is None:
        return sample

    o = base_point.coords
    r = _distance(form, o, F)
    weights = radial_weights(form, r)
    X = _radial_field(form, o, F)
    X_perp = _strip_tangential(form, X, e1, e2)
    grad_tan = (X - X_perp) / weights.sn[:, None]
    return replace(sample, r=r, grad_r_tangential=grad_tan, X=X, X_perp=X_perp, weights=weights)


def sample_geometry(
    surface: ImmersedSurface, chart_index: int, u: float, v: float, base_point: AmbientPoint
) -> GeometrySample:
    """Geometry at one parameter point, relative to the base point o."""
    chart = surface.charts[chart_index]
    if not chart.contains(u, v, slack=1e-12):
        raise DomainError(f"({u}, {v}) is outside the domain of chart {chart_index}")
    return sample_batch(surface, chart_index, np.array([u]), np.array([v]), base_point).node(0)


def fd_jet(position: Callable[[np.ndarray, np.ndarray], np.ndarray], scale: float = 1.0) -> JetFn:
    """Jet evaluator from a position map by centred differences, h = eps^(1/3) * scale."""
    h = np.finfo(float).eps ** (1.0 / 3.0) * scale

    def jet(u: np.ndarray, v: np.ndarray) -> JetData:
        P = position(u, v)
        P_up, P_um = position(u + h, v), position(u - h, v)
        P_vp, P_vm = position(u, v + h), position(u, v - h)
        P_pp, P_pm = position(u + h, v + h), position(u + h, v - h)
        P_mp, P_mm = position(u - h, v + h), position(u - h, v - h)
        return JetData(
            F=P,
            F_u=(P_up - P_um) / (2 * h),
            F_v=(P_vp - P_vm) / (2 * h),
            F_uu=(P_up - 2 * P + P_um) / h**2,
            F_uv=(P_pp - P_pm - P_mp + P_mm) / (4 * h**2),
            F_vv=(P_vp - 2 * P + P_vm) / h**2,
        )

    return jet


def _geodesic_step(form: SpaceForm, x: np.ndarray, z: np.ndarray, h: float) -> np.ndarray:
    if form.K < 0:
        return x * np.cosh(h) + z * np.sinh(h)
    return x * np.cos(h) + z * np.sin(h)


VectorField = Callable[[np.ndarray], np.ndarray]


def divergence_batch(
    surface: ImmersedSurface,
    chart_index: int,
    u: np.ndarray,
    v: np.ndarray,
    Y: VectorField,
    step: Optional[float] = None,
) -> np.ndarray:
    """Surface divergence sum_i <nabla_{e_i} Y, e_i> by centred differences along geodesics."""
    chart = surface.charts[chart_index]
    h = step if step is not None else get_settings().FD_STEP * chart.scale
    return divergence_from_sample(surface.form, sample_batch(surface, chart_index, u, v), Y, h)


def divergence_from_sample(form: SpaceForm, sample: GeometrySample, Y: VectorField, step: float) -> np.ndarray:
    if step < 1e-7:
        raise DegenerateError(f"finite-difference step {step:.1e} underflows the local feature scale")
    total = np.zeros(np.shape(sample.F)[0])
    for e in (sample.e1, sample.e2):
        forward = Y(_geodesic_step(form, sample.F, e, step))
        backward = Y(_geodesic_step(form, sample.F, e, -step))
        # the model-normal part of the flat derivative is orthogonal to e
        total += form.inner((forward - backward) / (2 * step), e)
    return total


def surface_divergence(
    surface: ImmersedSurface, chart_index: int, u: float, v: float, Y: VectorField, step: Optional[float] = None
) -> float:
    return float(divergence_batch(surface, chart_index, np.array([u]), np.array([v]), Y, step)[0])


def outward_normal(surface: ImmersedSurface, chart_index: int, sample: GeometrySample) -> np.ndarray:
    """Unit normal of a surface in a 3-dimensional model, oriented by the chart."""
    form = surface.form
    if form.ambient_dim != 3:
        raise AmbientDimensionError("a unit normal of a surface needs a 3-dimensional ambient")
    orientation = surface.charts[chart_index].orientation
    if orientation not in (1, -1):
        raise OrientationError(f"chart {chart_index} carries no outward orientation")
    F = np.atleast_2d(sample.F)
    rows = np.stack([F, np.atleast_2d(sample.F_u), np.atleast_2d(sample.F_v)], axis=1)
    basis = np.eye(4)
    cofactors = np.stack(
        [np.linalg.det(np.concatenate([np.broadcast_to(basis[j], (F.shape[0], 1, 4)), rows], axis=1)) for j in range(4)],
        axis=-1,
    )
    # raise the index so that <nu, .> annihilates F, F_u, F_v
    nu = cofactors * form.metric
    nu = nu / np.sqrt(form.inner(nu, nu))[:, None]
    return orientation * nu.reshape(np.shape(sample.F))


def _preimage_objective(surface: ImmersedSurface, chart_index: int, o: np.ndarray):
    form = surface.form
    chart = surface.charts[chart_index]

    def evaluate(x):
        jet = chart.jet(np.array([x[0]]), np.array([x[1]]))
        diff = jet.F[0] - o
        value = 0.5 * float(form.inner(diff, diff))
        grad = np.array([form.inner(jet.F_u[0], diff), form.inner(jet.F_v[0], diff)], dtype=float)
        hess = np.array(
            [
                [form.inner(jet.F_uu[0], diff) + form.inner(jet.F_u[0], jet.F_u[0]),
                 form.inner(jet.F_uv[0], diff) + form.inner(jet.F_u[0], jet.F_v[0])],
                [form.inner(jet.F_uv[0], diff) + form.inner(jet.F_u[0], jet.F_v[0]),
                 form.inner(jet.F_vv[0], diff) + form.inner(jet.F_v[0], jet.F_v[0])],
            ],
            dtype=float,
        )
        return value, grad, hess

    return evaluate


def _wrap_into(chart: Chart, u: float, v: float) -> Tuple[float, float]:
    u0, u1, v0, v1 = chart.domain
    if chart.periodic[0]:
        u = u0 + (u - u0) % (u1 - u0)
    if chart.periodic[1]:
        v = v0 + (v - v0) % (v1 - v0)
    return float(np.clip(u, u0, u1)), float(np.clip(v, v0, v1))


def find_preimages(
    surface: ImmersedSurface, o: AmbientPoint, grid: int = 48, tol: float = 1e-8
) -> List[Tuple[int, float, float]]:
    """Parameter points (chart, u, v) mapped to o, one per geometric preimage.

    Coarse grid scan for local minima of the chord distance, then Newton-type local
    refinement with the analytic jets. Preimages closer than 1e-6 in parameter space on the
    same chart, or on the same collapsed edge, are merged.
    """
    form = surface.form
    found: List[Tuple[int, float, float]] = []
    for index, chart in enumerate(surface.charts):
        u0, u1, v0, v1 = chart.domain
        uu, vv = np.meshgrid(np.linspace(u0, u1, grid + 1), np.linspace(v0, v1, grid + 1), indexing="ij")
        F = chart.jet(uu.ravel(), vv.ravel()).F
        diff = F - o.coords
        d2 = form.inner(diff, diff).reshape(uu.shape)

        padded = np.pad(d2, 1, mode="wrap" if all(chart.periodic) else "edge")
        if chart.periodic[0] != chart.periodic[1]:
            padded = np.pad(d2, 1, mode="edge")
            if chart.periodic[0]:
                padded[0, 1:-1], padded[-1, 1:-1] = d2[-2], d2[1]
            else:
                padded[1:-1, 0], padded[1:-1, -1] = d2[:, -2], d2[:, 1]
        neighbours = np.stack(
            [padded[1 + di : padded.shape[0] - 1 + di, 1 + dj : padded.shape[1] - 1 + dj]
             for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
        )
        spacing = max((u1 - u0), (v1 - v0)) / grid
        candidates = np.argwhere((d2 <= neighbours.min(axis=0)) & (d2 < (4.0 * spacing * chart.scale) ** 2 + 1.0))

        objective = _preimage_objective(surface, index, o.coords)
        cache = {}

        def fun(x):
            key = (float(x[0]), float(x[1]))
            if key not in cache:
                cache.clear()
                cache[key] = objective(x)
            return cache[key]

        for i, j in candidates:
            start = np.array([uu[i, j], vv[i, j]])
            if d2[i, j] <= tol**2:
                point = start
            else:
                result = minimize(
                    lambda x: fun(x)[0], start, jac=lambda x: fun(x)[1], hess=lambda x: fun(x)[2],
                    method="trust-exact", options={"gtol": 1e-15, "maxiter": 100},
                )
                point = result.x
            pu, pv = _wrap_into(chart, point[0], point[1])
            chord = float(np.sqrt(max(2.0 * objective(np.array([pu, pv]))[0], 0.0)))
            if chord > tol:
                continue
            duplicate = False
            edge = chart.edge_of(pu, pv)
            for other_index, qu, qv in found:
                if other_index != index:
                    continue
                same_edge = edge is not None and edge == chart.edge_of(qu, qv)
                if same_edge or chart.param_distance((pu, pv), (qu, qv)) < 1e-6:
                    duplicate = True
                    break
            if not duplicate:
                found.append((index, pu, pv))
    logger.debug("found %d preimage(s) of the base point", len(found))
    return found


def multiplicity_at(surface: ImmersedSurface, o: AmbientPoint, grid: int = 48) -> int:
    preimages = find_preimages(surface, o, grid=grid)
    if not preimages:
        raise NotOnSurfaceError("base point is not on the surface (no preimage within 1e-8)")
    return len(preimages)


def point_on_chart(surface: ImmersedSurface, chart_index: int, u: float, v: float) -> AmbientPoint:
    """Image point of a parameter pair, re-validated as a model point."""
    chart = surface.charts[chart_index]
    if not chart.contains(u, v, slack=1e-12):
        raise DomainError(f"({u}, {v}) is outside the domain of chart {chart_index}")
    F = chart.jet(np.array([u]), np.array([v])).F[0]
    try:
        return AmbientPoint(surface.form, F)
    except ModelConstraintError:
        logger.warning("chart %d drifts off the model at (%g, %g)", chart_index, u, v)
        raise
