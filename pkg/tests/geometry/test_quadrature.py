import json
import math
from pathlib import Path

import numpy as np
import pytest

from app.exceptions import DomainError, EmptyBoundaryError
from app.geometry.quadrature import IntegralEstimate, Region, boundary_integral, gauss_rule, integrate
from app.geometry.spaceform import AmbientPoint
from app.models.schemas import QuadratureSpec, SurfaceSpec
from app.services.surfaces import base_point_of, build_surface

FIXTURE = Path(__file__).resolve().parents[1] / "fixtures" / "reference_values.json"


@pytest.fixture
def reference():
    return json.loads(FIXTURE.read_text())


@pytest.fixture
def quadrature():
    return QuadratureSpec(base_cells_per_axis=8, gauss_points_per_cell_axis=4)


@pytest.fixture
def hyperbolic_sphere(quadrature):
    return build_surface(SurfaceSpec(family="geodesic_sphere", curvature_sign=-1, radius=1.0), quadrature)


@pytest.fixture
def round_sphere(quadrature):
    return build_surface(SurfaceSpec(family="geodesic_sphere", curvature_sign=1, radius=math.pi / 4), quadrature)


def _one(sample):
    return np.ones_like(sample.area_element)


def round_sphere_form():
    return SurfaceSpec(family="geodesic_sphere", curvature_sign=1, radius=1.0).form


def test_gauss_rule_integrates_polynomials():
    x, w = gauss_rule(4)
    assert float(np.sum(w)) == pytest.approx(2.0)
    assert float(np.sum(w * x**6)) == pytest.approx(2.0 / 7.0)


def test_region_validation(hyperbolic_sphere):
    o = AmbientPoint.origin(hyperbolic_sphere.form)
    with pytest.raises(DomainError):
        Region(kind="ring")
    with pytest.raises(DomainError):
        Region(kind="ball", rho=1.0)
    with pytest.raises(DomainError):
        Region.annulus(o, 1.0, 0.5)
    with pytest.raises(DomainError):
        Region.ball(AmbientPoint.origin(round_sphere_form()), math.pi)
    assert Region.annulus(o, 0.1, 0.5).thresholds == (0.1, 0.5)
    assert Region.all().thresholds == ()
    np.testing.assert_array_equal(Region.annulus(o, 0.1, 0.5).contains(np.array([0.05, 0.1, 0.3, 0.5])), [False, True, True, False])


def test_closed_form_area_and_energy(hyperbolic_sphere, reference):
    expected = reference["hyperbolic_spheres"][1]
    form = hyperbolic_sphere.form
    area = integrate(hyperbolic_sphere, _one)
    quarter = integrate(hyperbolic_sphere, lambda s: 0.25 * form.inner(s.H_vec, s.H_vec))
    assert float(area) == pytest.approx(expected["area"], rel=1e-8)
    assert float(quarter) == pytest.approx(expected["willmore_quarter"], rel=1e-8)
    assert area.warning is None and area.nodes == 8 * 8 * 16


def test_geodesic_ball_through_a_sphere(hyperbolic_sphere, round_sphere):
    # a geodesic ball of radius rho around a point of a sphere cuts out a cap of area
    # 2 pi (cosh rho - 1) in hyperbolic space and 2 pi (1 - cos rho) in the sphere
    o = AmbientPoint.origin(hyperbolic_sphere.form)
    ball = integrate(hyperbolic_sphere, _one, region=Region.ball(o, 1.0))
    assert float(ball) == pytest.approx(2 * math.pi * (math.cosh(1.0) - 1), rel=1e-6)

    o = AmbientPoint.origin(round_sphere.form)
    ball = integrate(round_sphere, _one, region=Region.ball(o, 0.7))
    assert float(ball) == pytest.approx(2 * math.pi * (1 - math.cos(0.7)), rel=1e-6)


@pytest.mark.parametrize("depth, rel, cap", [(3, 1e-3, 50_000), (10, 1e-7, 500_000)])
def test_off_centre_ball_stays_bounded(hyperbolic_sphere, round_sphere, depth, rel, cap):
    # the ball boundary crosses cells obliquely, so cut cells are clipped and split
    surface = hyperbolic_sphere.with_quadrature(max_refine_depth=depth)
    o = base_point_of(surface, 0, 1.0, 0.5)
    ball = integrate(surface, _one, region=Region.ball(o, 0.6))
    assert float(ball) == pytest.approx(2 * math.pi * (math.cosh(0.6) - 1), rel=rel)
    assert 0 < ball.nodes < cap

    surface = round_sphere.with_quadrature(max_refine_depth=depth)
    o = base_point_of(surface, 0, 1.0, 0.5)
    ball = integrate(surface, _one, region=Region.ball(o, 0.5))
    assert float(ball) == pytest.approx(2 * math.pi * (1 - math.cos(0.5)), rel=rel)
    assert 0 < ball.nodes < cap


def test_annulus_and_balls_add_up(hyperbolic_sphere):
    o = AmbientPoint.origin(hyperbolic_sphere.form)
    inner = float(integrate(hyperbolic_sphere, _one, region=Region.ball(o, 0.4)))
    shell = float(integrate(hyperbolic_sphere, _one, region=Region.annulus(o, 0.4, 1.2)))
    outer = float(integrate(hyperbolic_sphere, _one, region=Region.ball(o, 1.2)))
    assert inner + shell == pytest.approx(outer, rel=1e-7)


def test_column_integrands(hyperbolic_sphere, reference):
    expected = reference["hyperbolic_spheres"][1]
    form = hyperbolic_sphere.form
    estimate = integrate(
        hyperbolic_sphere, lambda s: np.stack([_one(s), form.inner(s.H_vec, s.H_vec)], axis=-1)
    )
    assert isinstance(estimate, IntegralEstimate)
    assert estimate.column(0) == pytest.approx(expected["area"], rel=1e-8)
    assert estimate.column(1) == pytest.approx(4 * expected["willmore_quarter"], rel=1e-8)


def test_thread_count_does_not_change_the_sum():
    surface = build_surface(
        SurfaceSpec(family="torus_of_revolution_H3"),
        QuadratureSpec(base_cells_per_axis=24, gauss_points_per_cell_axis=4),
    )
    form = surface.form
    integrand = lambda s: form.inner(s.H_vec, s.H_vec)  # noqa: E731
    serial = integrate(surface, integrand, threads=1)
    threaded = integrate(surface, integrand, threads=4)
    assert float(serial) == float(threaded)


def test_boundary_length_of_cap(reference, quadrature):
    expected = reference["caps"][0]
    cap = build_surface(
        SurfaceSpec(family="geodesic_cap", curvature_sign=-1, radius=1.0, cap_angle=expected["cap_angle"]),
        quadrature,
    )
    length = boundary_integral(cap, lambda sample, eta: np.ones(sample.F.shape[0]))
    assert float(length) == pytest.approx(expected["boundary_length"], rel=1e-10)
    assert float(integrate(cap, _one)) == pytest.approx(expected["area"], rel=1e-8)


def test_outward_conormal_of_cap(quadrature):
    cap = build_surface(SurfaceSpec(family="geodesic_cap", curvature_sign=-1, radius=1.0, cap_angle=1.0), quadrature)
    form = cap.form
    o = AmbientPoint.origin(form)
    # the pole lies inside the cap, so the radial field leaves through the boundary
    flux = boundary_integral(cap, lambda sample, eta: form.inner(sample.X, eta), base_point=o)
    assert float(flux) > 0


def test_boundary_integral_needs_a_boundary(hyperbolic_sphere):
    with pytest.raises(EmptyBoundaryError):
        boundary_integral(hyperbolic_sphere, lambda sample, eta: np.ones(sample.F.shape[0]))
