import json
import math
from pathlib import Path

import numpy as np
import pytest

from app.exceptions import DomainError
from app.geometry.quadrature import integrate
from app.models.schemas import QuadratureSpec, SurfaceSpec
from app.services.surfaces import FAMILY_KEYS, base_point_of, build_surface, family_center, reference_values

FIXTURE = Path(__file__).resolve().parents[1] / "fixtures" / "reference_values.json"

FAMILIES = [
    SurfaceSpec(family="geodesic_sphere", curvature_sign=-1, radius=1.0),
    SurfaceSpec(family="geodesic_sphere", curvature_sign=1, radius=math.pi / 3),
    SurfaceSpec(family="tangent_sphere_pair", curvature_sign=-1, radius=1.0),
    SurfaceSpec(family="tangent_sphere_pair", curvature_sign=1, radius=0.6, second_radius=0.4),
    SurfaceSpec(family="torus_of_revolution_H3"),
    SurfaceSpec(family="clifford_torus_S3", curvature_sign=1, clifford_angle=math.pi / 6),
    SurfaceSpec(family="perturbed_sphere", curvature_sign=-1, radius=1.0, amplitude=0.1),
    SurfaceSpec(family="geodesic_cap", curvature_sign=1, radius=math.pi / 4, cap_angle=2.0),
    SurfaceSpec(family="geodesic_sphere", curvature_sign=-1, ambient_dim=5, embed_subspace=True),
]


@pytest.fixture
def reference():
    return json.loads(FIXTURE.read_text())


@pytest.fixture
def quadrature():
    return QuadratureSpec(base_cells_per_axis=8, gauss_points_per_cell_axis=4)


def _area_and_quarter(surface):
    form = surface.form
    estimate = integrate(
        surface,
        lambda s: np.stack([np.ones_like(s.area_element), 0.25 * form.inner(s.H_vec, s.H_vec)], axis=-1),
    )
    return estimate.column(0), estimate.column(1)


@pytest.mark.parametrize("spec", FAMILIES, ids=lambda spec: f"{spec.family}-{spec.form.name}")
def test_designated_point_is_the_origin(spec, quadrature):
    surface = build_surface(spec, quadrature)
    o = base_point_of(surface)
    np.testing.assert_allclose(o.coords, surface.form.origin(), atol=1e-12)


@pytest.mark.parametrize("spec", FAMILIES[:-1], ids=lambda spec: f"{spec.family}-{spec.form.name}")
def test_three_dimensional_families_are_oriented(spec, quadrature):
    surface = build_surface(spec, quadrature)
    assert all(chart.orientation in (1, -1) for chart in surface.charts)


def test_spheres_match_closed_forms(reference, quadrature):
    for entry in reference["hyperbolic_spheres"]:
        surface = build_surface(SurfaceSpec(family="geodesic_sphere", radius=entry["radius"]), quadrature)
        area, quarter = _area_and_quarter(surface)
        assert area == pytest.approx(entry["area"], rel=1e-8)
        assert quarter == pytest.approx(entry["willmore_quarter"], rel=1e-8)
    for entry in reference["round_spheres"][:3]:
        spec = SurfaceSpec(family="geodesic_sphere", curvature_sign=1, radius=entry["radius"])
        area, quarter = _area_and_quarter(build_surface(spec, quadrature))
        assert area == pytest.approx(entry["area"], rel=1e-8)
        assert quarter == pytest.approx(entry["willmore_quarter"], rel=1e-8)


def test_reference_values_match_fixture(reference):
    for entry in reference["hyperbolic_spheres"]:
        values = reference_values(SurfaceSpec(family="geodesic_sphere", radius=entry["radius"]))
        assert values.area == pytest.approx(entry["area"], rel=1e-12)
        assert values.willmore_quarter == pytest.approx(entry["willmore_quarter"], rel=1e-12)
        assert values.mean_curvature == pytest.approx(entry["mean_curvature"], rel=1e-12)
    for entry in reference["caps"]:
        values = reference_values(
            SurfaceSpec(
                family="geodesic_cap",
                curvature_sign=entry["curvature_sign"],
                radius=entry["radius"],
                cap_angle=entry["cap_angle"],
            )
        )
        assert values.area == pytest.approx(entry["area"], rel=1e-12)
        assert values.boundary_length == pytest.approx(entry["boundary_length"], rel=1e-12)
    for entry in reference["clifford_tori"]:
        values = reference_values(
            SurfaceSpec(family="clifford_torus_S3", curvature_sign=1, clifford_angle=entry["clifford_angle"])
        )
        assert values.area == pytest.approx(entry["area"], rel=1e-12)
        assert values.willmore_quarter == pytest.approx(entry["willmore_quarter"], abs=1e-12)
    assert reference_values(SurfaceSpec(family="torus_of_revolution_H3")).empty


def test_clifford_and_pair_quadrature(reference, quadrature):
    entry = reference["clifford_tori"][1]
    torus = build_surface(
        SurfaceSpec(family="clifford_torus_S3", curvature_sign=1, clifford_angle=entry["clifford_angle"]), quadrature
    )
    area, quarter = _area_and_quarter(torus)
    assert area == pytest.approx(entry["area"], rel=1e-10)
    assert quarter == pytest.approx(entry["willmore_quarter"], rel=1e-10)

    entry = reference["tangent_pairs"][0]
    pair = build_surface(SurfaceSpec(family="tangent_sphere_pair", radius=entry["radius"]), quadrature)
    area, quarter = _area_and_quarter(pair)
    assert area == pytest.approx(entry["area"], rel=1e-8)
    assert quarter == pytest.approx(entry["willmore_quarter"], rel=1e-8)


def test_tilted_embedding_keeps_the_area(reference, quadrature):
    entry = reference["hyperbolic_spheres"][1]
    surface = build_surface(FAMILIES[-1], quadrature)
    area, _ = _area_and_quarter(surface)
    assert area == pytest.approx(entry["area"], rel=1e-8)


def test_cap_has_a_boundary(quadrature):
    cap = build_surface(SurfaceSpec(family="geodesic_cap", radius=1.0, cap_angle=2.0), quadrature)
    assert cap.has_boundary and not cap.closed
    assert cap.charts[0].boundary_edges == frozenset({"u1"})


def test_family_center(quadrature):
    spec = SurfaceSpec(family="geodesic_sphere", radius=1.0)
    centre = family_center(spec)
    assert centre.coords[0] == pytest.approx(math.cosh(1.0))
    with pytest.raises(DomainError):
        family_center(SurfaceSpec(family="torus_of_revolution_H3"))


def test_family_keys_cover_every_family():
    assert set(FAMILY_KEYS) == {spec.family for spec in FAMILIES}
