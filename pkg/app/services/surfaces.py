"""Analytic test surfaces with exact jets and their closed-form reference values.

Every family is built in a 3-dimensional model first and then moved by an isometry so that
the chart point (0, 0) of chart 0 lands on the model origin e_0. For sphere-type charts that
point is the pole s = 0 of the polar parametrisation

    (s, phi) -> (a(T), b(T) theta(s, phi)),  theta = (sin s cos phi, sin s sin phi, -cos s)

with (a, b) = (cosh, sinh) in hyperbolic space and (cos, sin) in the sphere.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from ..exceptions import DomainError
from ..geometry.spaceform import AmbientPoint, SpaceForm, isometry_matrix, spatial_rotation
from ..geometry.surface import (
    Chart,
    ImmersedSurface,
    JetData,
    outward_normal,
    point_on_chart,
    sample_batch,
)
from ..models.schemas import QuadratureSpec, ReferenceValues, SurfaceSpec

logger = logging.getLogger(__name__)

TILT_ANGLE = 0.4


@dataclass(frozen=True)
class _RadiusJet:
    T: np.ndarray
    T_s: np.ndarray
    T_p: np.ndarray
    T_ss: np.ndarray
    T_sp: np.ndarray
    T_pp: np.ndarray


RadiusFn = Callable[[np.ndarray, np.ndarray], _RadiusJet]


def _constant_radius(t: float) -> RadiusFn:
    def radius(s, phi):
        zero = np.zeros_like(s)
        return _RadiusJet(np.full_like(s, t), zero, zero, zero, zero, zero)

    return radius


def _perturbed_radius(t: float, amplitude: float, frequency: int) -> RadiusFn:
    """T = t (1 + amplitude sin^m s cos m phi), smooth across both poles."""
    m = frequency

    def radius(s, phi):
        sin_s, cos_s = np.sin(s), np.cos(s)
        g = sin_s**m
        g_s = m * sin_s ** (m - 1) * cos_s
        g_ss = m * (m - 1) * sin_s ** max(m - 2, 0) * cos_s**2 - m * g
        c, d = np.cos(m * phi), np.sin(m * phi)
        k = t * amplitude
        return _RadiusJet(
            T=t + k * g * c,
            T_s=k * g_s * c,
            T_p=-k * m * g * d,
            T_ss=k * g_ss * c,
            T_sp=-k * m * g_s * d,
            T_pp=-k * m * m * g * c,
        )

    return radius


def _theta_jets(s: np.ndarray, phi: np.ndarray):
    ss, cs, sp, cp = np.sin(s), np.cos(s), np.sin(phi), np.cos(phi)
    zero = np.zeros_like(s)
    theta = np.stack([ss * cp, ss * sp, -cs], axis=-1)
    theta_s = np.stack([cs * cp, cs * sp, ss], axis=-1)
    theta_p = np.stack([-ss * sp, ss * cp, zero], axis=-1)
    theta_sp = np.stack([-cs * sp, cs * cp, zero], axis=-1)
    theta_pp = np.stack([-ss * cp, -ss * sp, zero], axis=-1)
    return theta, theta_s, theta_p, -theta, theta_sp, theta_pp


def _radial_graph_jet(K: int, radius: RadiusFn) -> Callable[[np.ndarray, np.ndarray], JetData]:
    """Jets of (s, phi) -> (a(T), b(T) theta) for a radius function T(s, phi)."""

    def jet(s, phi):
        R = radius(s, phi)
        if K < 0:
            a, b, da, db = np.cosh(R.T), np.sinh(R.T), np.sinh(R.T), np.cosh(R.T)
        else:
            a, b, da, db = np.cos(R.T), np.sin(R.T), -np.sin(R.T), np.cos(R.T)
        th, th_s, th_p, th_ss, th_sp, th_pp = _theta_jets(s, phi)

        def lift(head, tail):
            return np.concatenate([head[:, None], tail], axis=1)

        zero = np.zeros_like(s)
        P = lift(a, b[:, None] * th)
        Q = lift(da, db[:, None] * th)  # d/dT, and d^2/dT^2 = -K P

        def tangential(coef, vec):
            return lift(zero, coef[:, None] * vec)

        P_s = R.T_s[:, None] * Q + tangential(b, th_s)
        P_p = R.T_p[:, None] * Q + tangential(b, th_p)

        def second(T_ij, T_i, T_j, th_i, th_j, th_ij):
            return (
                T_ij[:, None] * Q
                - K * (T_i * T_j)[:, None] * P
                + tangential(db * T_i, th_j)
                + tangential(db * T_j, th_i)
                + tangential(b, th_ij)
            )

        return JetData(
            F=P,
            F_u=P_s,
            F_v=P_p,
            F_uu=second(R.T_ss, R.T_s, R.T_s, th_s, th_s, th_ss),
            F_uv=second(R.T_sp, R.T_s, R.T_p, th_s, th_p, th_sp),
            F_vv=second(R.T_pp, R.T_p, R.T_p, th_p, th_p, th_pp),
        )

    return jet


def _hyperbolic_torus_jet(core_distance: float, tube_radius: float):
    """Geodesic circle of radius a at distance R from the x_3 axis, rotated about that axis."""
    R, a = core_distance, tube_radius
    cR, sR, ca, sa = math.cosh(R), math.sinh(R), math.cosh(a), math.sinh(a)

    def jet(alpha, psi):
        cal, sal, cps, sps = np.cos(alpha), np.sin(alpha), np.cos(psi), np.sin(psi)
        zero = np.zeros_like(alpha)
        p0, p1, p3 = cR * ca + sa * sR * cal, sR * ca + sa * cR * cal, sa * sal
        d0, d1, d3 = -sa * sR * sal, -sa * cR * sal, sa * cal
        dd0, dd1, dd3 = -sa * sR * cal, -sa * cR * cal, -sa * sal
        return JetData(
            F=np.stack([p0, p1 * cps, p1 * sps, p3], axis=-1),
            F_u=np.stack([d0, d1 * cps, d1 * sps, d3], axis=-1),
            F_v=np.stack([zero, -p1 * sps, p1 * cps, zero], axis=-1),
            F_uu=np.stack([dd0, dd1 * cps, dd1 * sps, dd3], axis=-1),
            F_uv=np.stack([zero, -d1 * sps, d1 * cps, zero], axis=-1),
            F_vv=np.stack([zero, -p1 * cps, -p1 * sps, zero], axis=-1),
        )

    return jet


def _clifford_jet(angle: float):
    ca, sa = math.cos(angle), math.sin(angle)

    def jet(u, v):
        cu, su, cv, sv = np.cos(u), np.sin(u), np.cos(v), np.sin(v)
        zero = np.zeros_like(u)
        return JetData(
            F=np.stack([ca * cu, ca * su, sa * cv, sa * sv], axis=-1),
            F_u=np.stack([-ca * su, ca * cu, zero, zero], axis=-1),
            F_v=np.stack([zero, zero, -sa * sv, sa * cv], axis=-1),
            F_uu=np.stack([-ca * cu, -ca * su, zero, zero], axis=-1),
            F_uv=np.stack([zero, zero, zero, zero], axis=-1),
            F_vv=np.stack([zero, zero, -sa * cv, -sa * sv], axis=-1),
        )

    return jet


def _embedding(form: SpaceForm) -> np.ndarray:
    """(n + 1) x 4 linear map placing the 3-dimensional model in the ambient."""
    lift = np.zeros((form.coord_dim, 4))
    lift[:4, :4] = np.eye(4)
    if form.ambient_dim > 3:
        lift = spatial_rotation(form, 2, form.ambient_dim, TILT_ANGLE) @ lift
    return lift


def _transformed(jet, matrix: np.ndarray):
    def moved(u, v):
        raw = jet(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        return JetData(*(getattr(raw, name) @ matrix.T for name in raw.__dataclass_fields__))

    return moved


def _sphere_chart(
    form: SpaceForm, radius: RadiusFn, matrix: np.ndarray, s_max: float = math.pi, label: str = ""
) -> Chart:
    closed = s_max >= math.pi
    return Chart(
        domain=(0.0, s_max, 0.0, 2 * math.pi),
        jet=_transformed(_radial_graph_jet(form.K, radius), matrix),
        periodic=(False, True),
        boundary_edges=frozenset() if closed else frozenset({"u1"}),
        collapsed_edges=frozenset({"u0", "u1"}) if closed else frozenset({"u0"}),
        label=label,
    )


def _orient(surface: ImmersedSurface, outward: Callable[[np.ndarray], np.ndarray]) -> ImmersedSurface:
    """Fix chart orientations so the normal agrees with a reference outward vector."""
    if surface.form.ambient_dim != 3:
        return surface
    charts = []
    for chart in surface.charts:
        oriented_chart = replace(chart, orientation=1)
        trial = replace(surface, charts=(oriented_chart,))
        u0, u1, v0, v1 = chart.domain
        u, v = u0 + 0.37 * (u1 - u0), v0 + 0.21 * (v1 - v0)
        sample = sample_batch(trial, 0, np.array([u]), np.array([v]))
        nu = outward_normal(trial, 0, sample)[0]
        sign = 1 if float(surface.form.inner(nu, outward(np.array([u, v])))) > 0 else -1
        charts.append(replace(chart, orientation=sign))
    return replace(surface, charts=tuple(charts))


def _sphere_transform(form: SpaceForm, t: float, mirrored: bool = False) -> np.ndarray:
    """Move the pole (a(t), 0, 0, -b(t)) of a centred sphere onto e_0."""
    if mirrored:
        flip = np.diag([1.0, 1.0, 1.0, -1.0])
        return _embedding(form) @ isometry_matrix(SpaceForm(form.K, 3), 3, -t) @ flip
    return _embedding(form) @ isometry_matrix(SpaceForm(form.K, 3), 3, t)


def family_center(spec: SurfaceSpec) -> AmbientPoint:
    """Centre of a sphere-type family (the unperturbed sphere for perturbed_sphere)."""
    if spec.family not in ("geodesic_sphere", "geodesic_cap", "perturbed_sphere", "tangent_sphere_pair"):
        raise DomainError(f"{spec.family} has no centre")
    form = spec.form
    return AmbientPoint(form, _sphere_transform(form, spec.radius) @ np.eye(4)[0])


def build_surface(spec: SurfaceSpec, quadrature: Optional[QuadratureSpec] = None) -> ImmersedSurface:
    form = spec.form
    quadrature = quadrature or QuadratureSpec.from_settings()
    family = spec.family
    logger.debug("building %s in %s", family, form.name)

    if family in ("geodesic_sphere", "perturbed_sphere", "geodesic_cap"):
        matrix = _sphere_transform(form, spec.radius)
        if family == "perturbed_sphere":
            radius = _perturbed_radius(spec.radius, spec.amplitude, spec.frequency)
        else:
            radius = _constant_radius(spec.radius)
        s_max = spec.cap_angle if family == "geodesic_cap" else math.pi
        chart = _sphere_chart(form, radius, matrix, s_max, label=family)
        surface = ImmersedSurface(
            form=form, charts=(chart,), quadrature=quadrature, closed=family != "geodesic_cap", label=family
        )
        center = family_center(spec).coords
        return _orient(surface, _away_from(form, center, chart))

    if family == "tangent_sphere_pair":
        second = spec.second_radius or spec.radius
        first_matrix = _sphere_transform(form, spec.radius)
        second_matrix = _sphere_transform(form, second, mirrored=True)
        charts = (
            _sphere_chart(form, _constant_radius(spec.radius), first_matrix, label="upper"),
            _sphere_chart(form, _constant_radius(second), second_matrix, label="lower"),
        )
        surface = ImmersedSurface(form=form, charts=charts, quadrature=quadrature, closed=True, label=family)
        centers = (first_matrix @ np.eye(4)[0], second_matrix @ np.eye(4)[0])
        oriented = []
        for chart, center in zip(charts, centers):
            single = replace(surface, charts=(chart,))
            oriented.append(_orient(single, _away_from(form, center, chart)).charts[0])
        return replace(surface, charts=tuple(oriented))

    if family == "torus_of_revolution_H3":
        R, a = spec.core_distance, spec.tube_radius
        matrix = _embedding(form) @ isometry_matrix(SpaceForm(-1, 3), 1, -(R + a))
        chart = Chart(
            domain=(0.0, 2 * math.pi, 0.0, 2 * math.pi),
            jet=_transformed(_hyperbolic_torus_jet(R, a), matrix),
            periodic=(True, True),
            scale=a,
            label=family,
        )
        surface = ImmersedSurface(form=form, charts=(chart,), quadrature=quadrature, closed=True, label=family)

        def tube_outward(param):
            alpha, psi = param
            core = np.array([math.cosh(R), math.sinh(R), 0.0, 0.0])
            e = np.array([math.sinh(R), math.cosh(R), 0.0, 0.0])
            f = np.array([0.0, 0.0, 0.0, 1.0])
            d = core * math.sinh(a) + math.cosh(a) * (math.cos(alpha) * e + math.sin(alpha) * f)
            rot = np.array([d[0], d[1] * math.cos(psi), d[1] * math.sin(psi), d[3]])
            return matrix @ rot

        return _orient(surface, tube_outward)

    # clifford_torus_S3
    angle = spec.clifford_angle
    matrix = _embedding(form) @ isometry_matrix(SpaceForm(1, 3), 2, -angle)
    chart = Chart(
        domain=(0.0, 2 * math.pi, 0.0, 2 * math.pi),
        jet=_transformed(_clifford_jet(angle), matrix),
        periodic=(True, True),
        scale=min(math.sin(angle), math.cos(angle)),
        label=family,
    )
    surface = ImmersedSurface(form=form, charts=(chart,), quadrature=quadrature, closed=True, label=family)

    def towards_second_circle(param):
        u, v = param
        d = np.array(
            [-math.sin(angle) * math.cos(u), -math.sin(angle) * math.sin(u), math.cos(angle) * math.cos(v), math.cos(angle) * math.sin(v)]
        )
        return matrix @ d

    return _orient(surface, towards_second_circle)


def _away_from(form: SpaceForm, center: np.ndarray, chart: Chart) -> Callable[[np.ndarray], np.ndarray]:
    """Outward reference at a parameter point: the radial field of the centre."""

    def outward(param):
        F = chart.jet(np.array([param[0]]), np.array([param[1]])).F[0]
        diff = F - center
        w = 0.5 * float(form.inner(diff, diff))
        return diff - form.K * w * F

    return outward


def reference_values(spec: SurfaceSpec) -> ReferenceValues:
    """Closed forms for spheres, caps, tangent pairs and the product torus; empty otherwise."""
    t = spec.radius
    hyperbolic = spec.curvature_sign < 0

    def sphere_values(radius: float) -> Tuple[float, float, float]:
        if hyperbolic:
            sn, cs = math.sinh(radius), math.cosh(radius)
        else:
            sn, cs = math.sin(radius), math.cos(radius)
        return 4 * math.pi * sn**2, 4 * math.pi * cs**2, abs(2 * cs / sn)

    if spec.family == "geodesic_sphere":
        area, quarter, mean = sphere_values(t)
        return ReferenceValues(area=area, willmore_quarter=quarter, mean_curvature=mean)
    if spec.family == "tangent_sphere_pair":
        second = spec.second_radius or t
        first, other = sphere_values(t), sphere_values(second)
        mean: Optional[float] = first[2] if math.isclose(t, second) else None
        return ReferenceValues(area=first[0] + other[0], willmore_quarter=first[1] + other[1], mean_curvature=mean)
    if spec.family == "geodesic_cap":
        area, quarter, mean = sphere_values(t)
        fraction = 0.5 * (1 - math.cos(spec.cap_angle))
        sn = math.sinh(t) if hyperbolic else math.sin(t)
        return ReferenceValues(
            area=area * fraction,
            willmore_quarter=quarter * fraction,
            mean_curvature=mean,
            boundary_length=2 * math.pi * abs(sn) * math.sin(spec.cap_angle),
        )
    if spec.family == "clifford_torus_S3":
        a = spec.clifford_angle
        return ReferenceValues(
            area=2 * math.pi**2 * math.sin(2 * a),
            willmore_quarter=2 * math.pi**2 * math.cos(2 * a) ** 2 / math.sin(2 * a),
            mean_curvature=abs(1 / math.tan(a) - math.tan(a)),
        )
    return ReferenceValues()


def base_point_of(surface: ImmersedSurface, chart_index: int = 0, u: float = 0.0, v: float = 0.0) -> AmbientPoint:
    """The image of a chart parameter pair as a model point."""
    return point_on_chart(surface, chart_index, u, v)


FAMILY_KEYS: Dict[str, Tuple[str, ...]] = {
    "geodesic_sphere": ("radius",),
    "tangent_sphere_pair": ("radius", "second_radius"),
    "torus_of_revolution_H3": ("core_distance", "tube_radius"),
    "clifford_torus_S3": ("clifford_angle",),
    "perturbed_sphere": ("radius", "amplitude", "frequency"),
    "geodesic_cap": ("radius", "cap_angle"),
}
