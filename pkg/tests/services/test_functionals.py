import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from app.exceptions import AmbientDimensionError, DomainError, EmptyBoundaryError, OrientationError
from app.geometry.spaceform import AmbientPoint, radial_weights
from app.models.schemas import BalanceReport, MonotonicityInputs, QuadratureSpec, SurfaceSpec
from app.services import functionals
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
    return build_surface(SurfaceSpec(family="geodesic_sphere", radius=1.0), quadrature)


@pytest.fixture
def round_sphere(quadrature):
    return build_surface(SurfaceSpec(family="geodesic_sphere", curvature_sign=1, radius=math.pi / 4), quadrature)


@pytest.fixture
def pair(quadrature):
    return build_surface(SurfaceSpec(family="tangent_sphere_pair", radius=1.0), quadrature)


@pytest.fixture
def torus(quadrature):
    return build_surface(SurfaceSpec(family="torus_of_revolution_H3"), quadrature)


@pytest.fixture
def clifford(quadrature):
    return build_surface(SurfaceSpec(family="clifford_torus_S3", curvature_sign=1), quadrature)


@pytest.fixture
def cap(quadrature):
    return build_surface(SurfaceSpec(family="geodesic_cap", radius=1.0, cap_angle=2.0), quadrature)


def _origin(surface):
    return AmbientPoint.origin(surface.form)


def test_willmore_energy_of_sphere(hyperbolic_sphere, reference):
    expected = reference["hyperbolic_spheres"][1]
    assert float(functionals.willmore_energy(hyperbolic_sphere)) == pytest.approx(
        4 * expected["willmore_quarter"], rel=1e-8
    )
    assert float(functionals.area(hyperbolic_sphere)) == pytest.approx(expected["area"], rel=1e-8)


def test_crude_balance_on_sphere(hyperbolic_sphere):
    inputs = MonotonicityInputs(o=_origin(hyperbolic_sphere), sigma=0.05, rho=1.5)
    report = functionals.crude_balance(hyperbolic_sphere, inputs)
    assert report.kind == "identity"
    assert report.passed, report
    # geodesic spheres realise the equality case pointwise
    assert abs(report.terms["annulus_square"]) < 1e-8
    assert report.terms["boundary_flux"] == 0.0


def test_crude_balance_rejects_wrong_ambient(round_sphere, hyperbolic_sphere):
    inputs = MonotonicityInputs(o=_origin(round_sphere), sigma=0.05, rho=1.0)
    with pytest.raises(DomainError):
        functionals.crude_balance(round_sphere, inputs)
    with pytest.raises(DomainError):
        functionals.sphere_crude_balance(
            hyperbolic_sphere, MonotonicityInputs(o=_origin(hyperbolic_sphere), sigma=0.05, rho=1.0)
        )


def test_sphere_crude_balance_limit_and_finite(round_sphere):
    o = _origin(round_sphere)
    inputs = MonotonicityInputs(o=o, sigma=0.05, rho=1.2)
    limit = functionals.sphere_crude_balance(round_sphere, inputs)
    finite = functionals.sphere_crude_balance(round_sphere, inputs, limit=False)
    assert limit.passed, limit
    assert finite.passed, finite
    assert limit.terms["density_constant"] == pytest.approx(4 * math.pi)


def test_mono_identity_on_sphere_and_pair(hyperbolic_sphere, pair):
    report = functionals.mono_identity(hyperbolic_sphere, _origin(hyperbolic_sphere))
    assert report.passed, report
    assert report.terms["multiplicity"] == 1.0
    assert report.terms["square"] < 1e-8
    assert report.terms["r_max"] == pytest.approx(2.0, rel=1e-3)

    report = functionals.mono_identity(pair, _origin(pair))
    assert report.terms["multiplicity"] == 2.0
    assert report.passed, report


def test_mono_identity_needs_closed_surface(cap):
    with pytest.raises(DomainError):
        functionals.mono_identity(cap, _origin(cap))


def test_extrapolate_tail_recovers_limit():
    rhos = np.array([3.0, 4.0, 5.0, 6.0])
    limit, _, _ = functionals.extrapolate_tail(rhos, 5.0 + 2.0 * np.exp(-rhos))
    assert limit == pytest.approx(5.0, abs=1e-10)
    assert functionals.extrapolate_tail(rhos, np.zeros(4)) == (0.0, None, None)


def test_finer_inequality_and_claim(hyperbolic_sphere, torus):
    report = functionals.finer_inequality(hyperbolic_sphere, _origin(hyperbolic_sphere), rho=5.0)
    assert report.kind == "inequality"
    assert report.passed, report
    assert report.terms["claim_excess_max"] <= functionals.CLAIM_SLACK

    report = functionals.finer_inequality(torus, _origin(torus), rho=3.0)
    assert report.passed, report
    assert report.terms["claim_excess_max"] <= functionals.CLAIM_SLACK


def test_sphere_finer_inequality(round_sphere, hyperbolic_sphere):
    report = functionals.sphere_finer_inequality(round_sphere, _origin(round_sphere), rho=3.0)
    assert report.passed, report
    with pytest.raises(DomainError):
        functionals.sphere_finer_inequality(round_sphere, _origin(round_sphere), rho=math.pi)
    with pytest.raises(DomainError):
        functionals.sphere_finer_inequality(hyperbolic_sphere, _origin(hyperbolic_sphere), rho=1.0)


def test_finer_claim_excess_is_never_positive(torus):
    o = _origin(torus)
    phi_sigma = float(radial_weights(torus.form, 0.05).phi)
    phi_rho = float(radial_weights(torus.form, 3.0).phi)
    for _, sample in functionals.random_samples(torus, o, 2000, seed=5):
        excess = functionals.finer_claim_excess(torus.form, sample, phi_sigma, phi_rho)
        assert np.max(excess) <= 1e-12


def test_boundary_mono_on_cap(cap, hyperbolic_sphere):
    report = functionals.boundary_mono(cap, _origin(cap), interior=True)
    assert report.passed, report
    assert report.terms["boundary_flux"] > 0

    edge = base_point_of(cap, 0, 2.0, 0.0)
    report = functionals.boundary_mono(cap, edge, interior=False)
    assert report.terms["density_constant"] == pytest.approx(2 * math.pi)
    assert report.passed, report

    with pytest.raises(EmptyBoundaryError):
        functionals.boundary_mono(hyperbolic_sphere, _origin(hyperbolic_sphere))


def test_chen_inequality(hyperbolic_sphere, pair, clifford):
    sphere_report = functionals.chen_inequality(hyperbolic_sphere)
    assert sphere_report.residual == pytest.approx(0.0, abs=1e-6 * sphere_report.scale)
    assert sphere_report.passed

    pair_report = functionals.chen_inequality(pair)
    assert pair_report.margin == pytest.approx(4 * math.pi, rel=1e-6)

    clifford_report = functionals.chen_inequality(clifford)
    assert clifford_report.margin > 1.0


def test_embeddedness_criterion(hyperbolic_sphere, pair):
    certified, report = functionals.embeddedness_criterion(hyperbolic_sphere)
    assert certified
    assert report.margin == pytest.approx(4 * math.pi, rel=1e-6)

    certified, report = functionals.embeddedness_criterion(pair)
    assert not certified
    assert report.margin == pytest.approx(0.0, abs=1e-6)


def test_density_ratio_of_sphere(hyperbolic_sphere):
    sigmas = [0.08, 0.04, 0.02]
    estimate = functionals.density_ratio(hyperbolic_sphere, _origin(hyperbolic_sphere), sigmas)
    for sigma, area_ratio, weighted in zip(sigmas, estimate.area_ratios, estimate.weighted_ratios):
        assert area_ratio == pytest.approx(2 * (math.cosh(sigma) - 1) / sigma**2, abs=1e-3)
        assert weighted == pytest.approx((math.cosh(sigma) + 1) / 2, abs=1e-3)
    assert estimate.k_extrapolated == pytest.approx(1.0, abs=0.02)
    assert estimate.k_weighted == pytest.approx(1.0, abs=0.02)


def test_density_ratio_validation(hyperbolic_sphere):
    o = _origin(hyperbolic_sphere)
    with pytest.raises(DomainError):
        functionals.density_ratio(hyperbolic_sphere, o, [])
    with pytest.raises(DomainError):
        functionals.density_ratio(hyperbolic_sphere, o, [0.01, 0.02])
    with pytest.raises(DomainError):
        functionals.density_ratio(hyperbolic_sphere, o, [0.01, 0.0005])


def test_richardson_limit():
    sigmas = [0.4, 0.2, 0.1]
    values = [2.0 + 3.0 * s**2 - s**4 for s in sigmas]
    assert functionals.richardson_limit(sigmas, values) == pytest.approx(2.0, abs=1e-12)
    assert functionals.richardson_limit([0.1], [1.5]) == 1.5


def test_pointwise_square_decomposition(torus, hyperbolic_sphere, pair, clifford):
    for surface in (torus, hyperbolic_sphere, pair, clifford):
        for _, sample in functionals.random_samples(surface, _origin(surface), 1000, seed=9):
            residual = functionals.pointwise_square_decomposition(surface.form, sample)
            assert np.max(np.abs(residual)) <= 1e-12


def test_divergence_equality(torus, clifford):
    for surface in (torus, clifford):
        report = functionals.divergence_equality_residual(surface, _origin(surface), nodes=300, seed=1)
        assert report.lhs < 1e-6
        assert report.passed


def test_first_variation_balance(clifford, cap):
    direction = np.array([0.0, 0.3, -0.5, 0.8])
    report = functionals.first_variation_balance(clifford, functionals.height_field(clifford, direction))
    assert report.passed, report
    assert report.terms["boundary_flux"] == 0.0

    o = _origin(cap)
    report = functionals.first_variation_balance(cap, functionals.radial_test_field(cap, o), o)
    assert report.passed, report
    assert report.terms["boundary_flux"] != 0.0


def test_height_field_is_tangent_to_the_model(clifford):
    form = clifford.form
    field = functionals.height_field(clifford, np.array([0.2, 0.3, -0.5, 0.8]))
    points = np.stack([AmbientPoint.origin(form).coords, np.array([0.0, 1.0, 0.0, 0.0])])
    np.testing.assert_allclose(form.inner(points, field(points)), 0.0, atol=1e-14)


def test_equality_case_residual(hyperbolic_sphere, torus, reference):
    result = functionals.equality_case_residual(hyperbolic_sphere, sample_pairs=500, seed=3)
    assert result.max_residual < 1e-8
    assert result.mean_curvature_positive
    assert result.pairs_evaluated + result.pairs_skipped == 500

    result = functionals.equality_case_residual(torus, sample_pairs=500, seed=3)
    assert result.max_residual > reference["equality_case"]["torus_threshold"]


def test_equality_case_preconditions(round_sphere, quadrature):
    with pytest.raises(DomainError):
        functionals.equality_case_residual(round_sphere, 10)
    tilted = build_surface(SurfaceSpec(family="geodesic_sphere", ambient_dim=4, embed_subspace=True), quadrature)
    with pytest.raises(AmbientDimensionError):
        functionals.equality_case_residual(tilted, 10)


def test_equality_case_needs_orientation(hyperbolic_sphere):
    chart = replace(hyperbolic_sphere.charts[0], orientation=None)
    with pytest.raises(OrientationError):
        functionals.equality_case_residual(replace(hyperbolic_sphere, charts=(chart,)), 10)


def test_refinement_study_records_history(hyperbolic_sphere):
    def evaluate(surface):
        cells = surface.quadrature.base_cells_per_axis
        return BalanceReport.build("stub", "identity", 1.0 / cells**2, 0.0, {}, 1e-5)

    report = functionals.refinement_study(evaluate, hyperbolic_sphere, levels=3)
    assert [cells for cells, _ in report.refinement_history] == [8, 16, 32]
    assert functionals.convergence_order(report.refinement_history) == pytest.approx(2.0)


def test_convergence_order_edge_cases():
    assert functionals.convergence_order([(8, 1e-3)]) is None
    assert functionals.convergence_order([(8, 1e-3), (16, 0.0)]) is None
    assert functionals.convergence_order([(8, 1e-4), (16, 1e-5)]) == pytest.approx(math.log2(10))
    assert functionals.convergence_order([(8, 1e-4), (16, 1e-11)], noise=1e-10) is None


def test_crude_balance_converges_at_high_order(hyperbolic_sphere):
    o = base_point_of(hyperbolic_sphere)
    coarse = hyperbolic_sphere.with_quadrature(base_cells_per_axis=4, gauss_points_per_cell_axis=3)

    def evaluate(surface):
        return functionals.crude_balance(surface, MonotonicityInputs(o=o, sigma=0.05, rho=1.5))

    report = functionals.refinement_study(evaluate, coarse, levels=2)
    order = functionals.convergence_order(report.refinement_history, noise=1e-12 * report.scale)
    assert order is None or order >= 4.0, report.refinement_history


def test_mono_tail_decays_like_exp_minus_rho(hyperbolic_sphere):
    report = functionals.mono_identity(hyperbolic_sphere, base_point_of(hyperbolic_sphere), 1)
    assert abs(report.terms["tail_decay_rate"] + 1.0) <= 0.1
    assert not [w for w in report.warnings if "decay rate" in w]


def test_random_parameters_stay_inside_domain(torus):
    draws = functionals.random_parameters(torus, 500, np.random.default_rng(0))
    index, u, v = draws[0]
    assert index == 0 and u.size == 500
    assert np.all((u > 0) & (u < 2 * math.pi) & (v > 0) & (v < 2 * math.pi))
