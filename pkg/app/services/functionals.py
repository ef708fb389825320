"""Willmore-type energies and the monotonicity balances built on them.

All balances come from testing the first variation formula with the field psi(r) X, where
X = sn(r) grad r is the radial field of a base point o and psi a cut-off of phi = 1/w. In
hyperbolic space 2 phi V + phi' sinh r = 1, on the sphere 2 phi V + phi' sin r = -1, and the
normal part regroups as

    -(1/w) X_perp . H - |X_perp|^2 / w^2 = -|X_perp / w + H / 2|^2 + |H|^2 / 4.

Inner limits sigma -> 0 are substituted analytically (2 phi(sigma) int V -> 4 pi per interior
preimage of o, 2 pi per boundary preimage); outer limits rho -> infinity are extrapolated.
"""

import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import curve_fit

from ..config import get_settings
from ..exceptions import (
    AmbientDimensionError,
    DomainError,
    EmptyBoundaryError,
    NotOnSurfaceError,
    OrientationError,
)
from ..geometry.quadrature import IntegralEstimate, Region, boundary_integral, integrate
from ..geometry.spaceform import AmbientPoint, SpaceForm, _distance, _radial_field, _tangent_projection, radial_weights
from ..geometry.surface import (
    GeometrySample,
    ImmersedSurface,
    VectorField,
    divergence_from_sample,
    find_preimages,
    outward_normal,
    sample_batch,
)
from ..models.schemas import BalanceReport, DensityEstimate, EqualityCaseResult, MonotonicityInputs

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
TAIL_OFFSETS = (1.0, 2.0, 3.0, 4.0)
CLAIM_SLACK = 1e-12
MIN_PAIR_DISTANCE = 1e-4


def _require_hyperbolic(surface: ImmersedSurface, operation: str) -> None:
    if surface.form.K >= 0:
        raise DomainError(f"{operation} is stated for hyperbolic space")


def _require_sphere(surface: ImmersedSurface, operation: str) -> None:
    if surface.form.K <= 0:
        raise DomainError(f"{operation} is stated for the sphere")


def _check_rho(surface: ImmersedSurface, rho: float) -> None:
    if not rho > 0:
        raise DomainError("rho must be positive")
    if surface.form.K > 0 and rho >= math.pi:
        raise DomainError("rho must be below pi on the sphere (conjugate points)")


def _warnings(*estimates: IntegralEstimate) -> List[str]:
    return [estimate.warning for estimate in estimates if estimate.warning]


def _columns(surface: ImmersedSurface, names: Sequence[str]) -> Callable[[GeometrySample], np.ndarray]:
    """Integrand returning the named pointwise quantities as columns."""
    inner = surface.form.inner

    def kernel(sample: GeometrySample) -> np.ndarray:
        cols = []
        for name in names:
            if name == "one":
                cols.append(np.ones_like(sample.area_element))
            elif name == "V":
                cols.append(sample.weights.V)
            elif name == "XH":
                cols.append(inner(sample.X_perp, sample.H_vec))
            elif name == "square":
                combo = sample.X_perp / sample.weights.w[:, None] + 0.5 * sample.H_vec
                cols.append(inner(combo, combo))
            elif name == "H2":
                cols.append(inner(sample.H_vec, sample.H_vec))
            else:
                raise KeyError(name)
        return np.stack(cols, axis=-1)

    return kernel


def _integrate_columns(
    surface: ImmersedSurface,
    names: Sequence[str],
    region: Region,
    base_point: Optional[AmbientPoint],
    focus,
) -> Tuple[Dict[str, float], IntegralEstimate]:
    estimate = integrate(surface, _columns(surface, names), region=region, base_point=base_point, focus=focus)
    values = np.atleast_1d(np.asarray(estimate.value, dtype=float))
    return {name: float(values[i]) for i, name in enumerate(names)}, estimate


def willmore_energy(surface: ImmersedSurface) -> IntegralEstimate:
    """Integral of |H|^2 over the surface."""
    estimate = integrate(surface, lambda sample: surface.form.inner(sample.H_vec, sample.H_vec))
    logger.debug("willmore energy %.12g over %d nodes", float(estimate), estimate.nodes)
    return estimate


def area(surface: ImmersedSurface) -> IntegralEstimate:
    return integrate(surface, lambda sample: np.ones_like(sample.area_element))


def _density_constant(surface: ImmersedSurface, preimages, k: Optional[int]) -> float:
    """Limit of 2 phi(sigma) int_{Sigma_sigma} V: 4 pi per interior, 2 pi per boundary preimage."""
    if k is not None:
        return FOUR_PI * k
    total = 0.0
    for index, u, v in preimages:
        chart = surface.charts[index]
        u0, u1, v0, v1 = chart.domain
        on_edge = {
            "u0": abs(u - u0) <= 1e-7,
            "u1": abs(u - u1) <= 1e-7,
            "v0": abs(v - v0) <= 1e-7,
            "v1": abs(v - v1) <= 1e-7,
        }
        on_boundary = any(on_edge[edge] for edge in chart.boundary_edges)
        total += 2.0 * math.pi if on_boundary else FOUR_PI
    return total


def _boundary_flux(
    surface: ImmersedSurface, o: AmbientPoint, sigma: float, rho: float
) -> Tuple[float, Optional[IntegralEstimate]]:
    """Boundary term of the cut-off field: int (phi(max(r, sigma)) - phi(rho))_+ <X, eta>."""
    if not surface.has_boundary:
        return 0.0, None
    form = surface.form
    phi_rho = 0.0 if math.isinf(rho) else float(radial_weights(form, rho).phi)
    phi_sigma = math.inf if sigma <= 0 else float(radial_weights(form, sigma).phi)

    def kernel(sample: GeometrySample, eta: np.ndarray) -> np.ndarray:
        cut = np.minimum(sample.weights.phi, phi_sigma) - phi_rho
        return np.maximum(cut, 0.0) * form.inner(sample.X, eta)

    estimate = boundary_integral(surface, kernel, base_point=o)
    return float(estimate), estimate


def _finite_balance(
    surface: ImmersedSurface, inputs: MonotonicityInputs, name: str
) -> BalanceReport:
    form = surface.form
    o, sigma, rho = inputs.o, inputs.sigma, inputs.rho
    _check_rho(surface, rho)
    preimages = find_preimages(surface, o)
    phi_rho = float(radial_weights(form, rho).phi)
    phi_sigma = float(radial_weights(form, sigma).phi)

    outer, outer_est = _integrate_columns(surface, ("V", "XH"), Region.ball(o, rho), o, preimages)
    inner, inner_est = _integrate_columns(surface, ("V", "XH"), Region.ball(o, sigma), o, preimages)
    shell, shell_est = _integrate_columns(
        surface, ("one", "square", "H2"), Region.annulus(o, sigma, rho), o, preimages
    )
    flux, flux_est = _boundary_flux(surface, o, sigma, rho)

    # hyperbolic: +|annulus|, sphere: -|annulus|
    lhs = -2 * phi_rho * outer["V"] + 2 * phi_sigma * inner["V"] - form.K * shell["one"]
    rhs = phi_rho * outer["XH"] - phi_sigma * inner["XH"] - shell["square"] + 0.25 * shell["H2"] + flux
    terms = {
        "phi_rho": phi_rho,
        "phi_sigma": phi_sigma,
        "int_V_rho": outer["V"],
        "int_V_sigma": inner["V"],
        "int_XH_rho": outer["XH"],
        "int_XH_sigma": inner["XH"],
        "annulus_area": shell["one"],
        "annulus_square": shell["square"],
        "annulus_quarter_willmore": 0.25 * shell["H2"],
        "boundary_flux": flux,
    }
    estimates = [outer_est, inner_est, shell_est] + ([flux_est] if flux_est else [])
    return BalanceReport.build(
        name, "identity", lhs, rhs, terms, get_settings().IDENTITY_TOLERANCE, _warnings(*estimates)
    )


def crude_balance(surface: ImmersedSurface, inputs: MonotonicityInputs) -> BalanceReport:
    """Finite-radius monotonicity identity between sigma and rho in hyperbolic space."""
    _require_hyperbolic(surface, "crude_balance")
    return _finite_balance(surface, inputs, "crude_balance")


def sphere_crude_balance(
    surface: ImmersedSurface, inputs: MonotonicityInputs, limit: bool = True
) -> BalanceReport:
    """Monotonicity identity on the sphere, 0 < sigma < rho < pi.

    With limit=True the inner radius is sent to zero analytically: 2 phi(sigma) int V becomes
    the density constant of o and the inner flux vanishes; otherwise the finite-sigma form is
    evaluated.
    """
    _require_sphere(surface, "sphere_crude_balance")
    if not limit:
        return _finite_balance(surface, inputs, "sphere_crude_balance")

    form = surface.form
    o, rho = inputs.o, inputs.rho
    _check_rho(surface, rho)
    preimages = find_preimages(surface, o)
    density = _density_constant(surface, preimages, inputs.k)
    phi_rho = float(radial_weights(form, rho).phi)

    ball, ball_est = _integrate_columns(surface, ("one", "V", "XH", "square", "H2"), Region.ball(o, rho), o, preimages)
    flux, flux_est = _boundary_flux(surface, o, 0.0, rho)

    lhs = -2 * phi_rho * ball["V"] + density - ball["one"]
    rhs = phi_rho * ball["XH"] - ball["square"] + 0.25 * ball["H2"] + flux
    terms = {
        "phi_rho": phi_rho,
        "density_constant": density,
        "int_V_rho": ball["V"],
        "int_XH_rho": ball["XH"],
        "area_rho": ball["one"],
        "square_rho": ball["square"],
        "quarter_willmore_rho": 0.25 * ball["H2"],
        "boundary_flux": flux,
    }
    estimates = [ball_est] + ([flux_est] if flux_est else [])
    return BalanceReport.build(
        "sphere_crude_balance", "identity", lhs, rhs, terms, get_settings().IDENTITY_TOLERANCE, _warnings(*estimates)
    )


def max_distance(surface: ImmersedSurface, o: AmbientPoint, grid: int = 64) -> float:
    """Largest distance from o over a parameter grid of every chart."""
    largest = 0.0
    for chart in surface.charts:
        u0, u1, v0, v1 = chart.domain
        uu, vv = np.meshgrid(np.linspace(u0, u1, grid + 1), np.linspace(v0, v1, grid + 1), indexing="ij")
        F = chart.jet(uu.ravel(), vv.ravel()).F
        largest = max(largest, float(np.max(_distance(surface.form, o.coords, F))))
    return largest


def _exponential(rho, limit, amplitude, rate):
    return limit + amplitude * np.exp(rate * rho)


def extrapolate_tail(rhos: np.ndarray, values: np.ndarray) -> Tuple[float, Optional[float], Optional[str]]:
    """Limit rho -> infinity of values sampled at rhos.

    The limit is the constant term of the interpolating cubic in exp(-rho); the decay rate
    is fitted separately as a consistency check and should be close to -1.
    """
    rhos = np.asarray(rhos, dtype=float)
    values = np.asarray(values, dtype=float)
    x = np.exp(-rhos)
    coefficients = np.polyfit(x, values, deg=len(rhos) - 1)
    limit = float(coefficients[-1])
    scale = float(np.max(np.abs(values)))
    if scale < 1e-12:
        return limit, None, None
    try:
        params, _ = curve_fit(
            _exponential, rhos, values, p0=(0.0, values[0] * math.exp(rhos[0]), -1.0), maxfev=5000
        )
    except (RuntimeError, ValueError) as exc:
        return limit, None, f"extrapolation unstable: exponential fit failed ({exc})"
    rate = float(params[2])
    warning = None
    if abs(rate + 1.0) > 0.1:
        warning = f"extrapolation unstable: fitted decay rate {rate:.3f} is not close to -1"
    return limit, rate, warning


def mono_identity(surface: ImmersedSurface, o: AmbientPoint, k: Optional[int] = None) -> BalanceReport:
    """Limit identity |Sigma| + 4 k pi = -int |X_perp/w + H/2|^2 + int |H|^2 / 4 in hyperbolic space."""
    _require_hyperbolic(surface, "mono_identity")
    if not surface.closed:
        raise DomainError("mono_identity needs a closed surface; use boundary_mono")
    preimages = find_preimages(surface, o)
    if not preimages:
        raise NotOnSurfaceError("base point is not on the surface")
    k = k if k is not None else len(preimages)
    form = surface.form

    whole, estimate = _integrate_columns(surface, ("one", "V", "XH", "square", "H2"), Region.all(), o, preimages)
    r_max = max_distance(surface, o)
    rhos = np.array([r_max + offset for offset in TAIL_OFFSETS])
    phis = np.array([float(radial_weights(form, rho).phi) for rho in rhos])
    lhs_tail, lhs_rate, lhs_warning = extrapolate_tail(rhos, -2.0 * phis * whole["V"])
    rhs_tail, rhs_rate, rhs_warning = extrapolate_tail(rhos, phis * whole["XH"])

    warnings = _warnings(estimate) + [w for w in (lhs_warning, rhs_warning) if w]
    for message in (lhs_warning, rhs_warning):
        if message:
            logger.warning(message)

    lhs = whole["one"] + FOUR_PI * k + lhs_tail
    rhs = -whole["square"] + 0.25 * whole["H2"] + rhs_tail
    terms = {
        "area": whole["one"],
        "density_constant": FOUR_PI * k,
        "multiplicity": float(k),
        "square": whole["square"],
        "quarter_willmore": 0.25 * whole["H2"],
        "lhs_tail_limit": lhs_tail,
        "rhs_tail_limit": rhs_tail,
        "tail_decay_rate": lhs_rate if lhs_rate is not None else float("nan"),
        "r_max": r_max,
    }
    for offset, rho, phi in zip(TAIL_OFFSETS, rhos, phis):
        terms[f"tail_rho_{int(offset)}"] = float(-2.0 * phi * whole["V"] - phi * whole["XH"])
    return BalanceReport.build(
        "mono_identity", "identity", lhs, rhs, terms, get_settings().IDENTITY_TOLERANCE, warnings
    )


def finer_claim_excess(form: SpaceForm, sample: GeometrySample, phi_sigma: float, phi_rho: float) -> np.ndarray:
    """-(phi_sigma - phi(rho))_+ X.H - |X_perp|^2 / w^2 - |H|^2 / 4 at each node; never positive."""
    cut = np.maximum(np.minimum(sample.weights.phi, phi_sigma) - phi_rho, 0.0)
    xh = form.inner(sample.X, sample.H_vec)
    xp = form.inner(sample.X_perp, sample.X_perp)
    h2 = form.inner(sample.H_vec, sample.H_vec)
    return -cut * xh - xp / sample.weights.w**2 - 0.25 * h2


def _finer_common(surface: ImmersedSurface, o: AmbientPoint, rho: float, sigma: float, name: str) -> BalanceReport:
    form = surface.form
    _check_rho(surface, rho)
    if not 0 < sigma < rho:
        raise DomainError("finer inequalities need 0 < sigma < rho")
    preimages = find_preimages(surface, o)
    if not preimages:
        raise NotOnSurfaceError("base point is not on the surface")
    phi_rho = float(radial_weights(form, rho).phi)
    phi_sigma = float(radial_weights(form, sigma).phi)
    w_rho = float(radial_weights(form, rho).w)

    peaks: List[float] = []

    def claim(sample: GeometrySample) -> np.ndarray:
        excess = finer_claim_excess(form, sample, phi_sigma, phi_rho)
        if excess.size:
            peaks.append(float(np.max(excess)))
        return np.ones_like(sample.area_element)

    ball, ball_est = _integrate_columns(surface, ("one", "V"), Region.ball(o, rho), o, preimages)
    whole, whole_est = _integrate_columns(surface, ("H2",), Region.all(), None, None)
    shell_est = integrate(surface, claim, region=Region.annulus(o, sigma, rho), focus=preimages)
    claim_max = max(peaks) if peaks else -math.inf

    warnings = _warnings(ball_est, whole_est, shell_est)
    if claim_max > CLAIM_SLACK:
        message = f"pointwise claim violated: max excess {claim_max:.3e}"
        logger.warning(message)
        warnings.append(message)

    # hyperbolic: 4 pi + |Sigma_rho|, sphere: 4 pi - |Sigma_rho|
    lhs = FOUR_PI - form.K * ball["one"]
    rhs = ball["V"] / w_rho + 0.25 * whole["H2"]
    terms = {
        "area_rho": ball["one"],
        "weighted_volume": ball["V"] / w_rho,
        "quarter_willmore": 0.25 * whole["H2"],
        "claim_excess_max": claim_max,
        "claim_nodes": float(shell_est.nodes),
    }
    return BalanceReport.build(name, "inequality", lhs, rhs, terms, get_settings().INEQUALITY_SLACK, warnings)


def finer_inequality(surface: ImmersedSurface, o: AmbientPoint, rho: float, sigma: float = 0.05) -> BalanceReport:
    """4 pi + |Sigma_rho| <= (1/w(rho)) int_{Sigma_rho} cosh r + int |H|^2 / 4, with the pointwise claim."""
    _require_hyperbolic(surface, "finer_inequality")
    return _finer_common(surface, o, rho, min(sigma, 0.5 * rho), "finer_inequality")


def sphere_finer_inequality(
    surface: ImmersedSurface, o: AmbientPoint, rho: float, sigma: float = 0.05
) -> BalanceReport:
    """4 pi - |Sigma_rho| <= (1/w(rho)) int_{Sigma_rho} cos r + int |H|^2 / 4, 0 < rho < pi."""
    _require_sphere(surface, "sphere_finer_inequality")
    return _finer_common(surface, o, rho, min(sigma, 0.5 * rho), "sphere_finer_inequality")


def boundary_mono(surface: ImmersedSurface, o: AmbientPoint, interior: bool = True) -> BalanceReport:
    """Monotonicity for a surface with boundary in hyperbolic space, o interior or on the boundary."""
    _require_hyperbolic(surface, "boundary_mono")
    if surface.closed or not surface.has_boundary:
        raise EmptyBoundaryError("boundary_mono needs a surface with boundary")
    preimages = find_preimages(surface, o)
    if not preimages:
        raise NotOnSurfaceError("base point is not on the surface")
    constant = FOUR_PI if interior else 2.0 * math.pi

    whole, estimate = _integrate_columns(surface, ("one", "square", "H2"), Region.all(), o, preimages)
    form = surface.form

    def flux_kernel(sample: GeometrySample, eta: np.ndarray) -> np.ndarray:
        return form.inner(sample.X, eta) / sample.weights.w

    flux_est = boundary_integral(surface, flux_kernel, base_point=o)
    flux = float(flux_est)

    lhs = whole["one"] + constant
    rhs = flux - whole["square"] + 0.25 * whole["H2"]
    terms = {
        "area": whole["one"],
        "density_constant": constant,
        "boundary_flux": flux,
        "square": whole["square"],
        "quarter_willmore": 0.25 * whole["H2"],
    }
    return BalanceReport.build(
        "boundary_mono", "inequality", lhs, rhs, terms, get_settings().INEQUALITY_SLACK, _warnings(estimate, flux_est)
    )


def chen_inequality(surface: ImmersedSurface) -> BalanceReport:
    """int |H|^2 / 4 >= 4 pi + |Sigma| (hyperbolic) or 4 pi - |Sigma| (sphere)."""
    whole, estimate = _integrate_columns(surface, ("one", "H2"), Region.all(), None, None)
    lhs = FOUR_PI - surface.form.K * whole["one"]
    rhs = 0.25 * whole["H2"]
    terms = {"area": whole["one"], "quarter_willmore": rhs}
    return BalanceReport.build(
        "chen_inequality", "inequality", lhs, rhs, terms, get_settings().INEQUALITY_SLACK, _warnings(estimate)
    )


def embeddedness_criterion(surface: ImmersedSurface) -> Tuple[bool, BalanceReport]:
    """True when int |H|^2 / 4 < |Sigma| + 8 pi beyond tolerance, which certifies embeddedness.

    False only means no certificate; it does not assert a self-intersection.
    """
    _require_hyperbolic(surface, "embeddedness_criterion")
    whole, estimate = _integrate_columns(surface, ("one", "H2"), Region.all(), None, None)
    lhs = 0.25 * whole["H2"]
    rhs = whole["one"] + 2 * FOUR_PI
    report = BalanceReport.build(
        "embeddedness_criterion",
        "inequality",
        lhs,
        rhs,
        {"area": whole["one"], "quarter_willmore": lhs},
        get_settings().INEQUALITY_SLACK,
        _warnings(estimate),
    )
    certified = report.margin > report.tolerance * report.scale
    return certified, report


def richardson_limit(sigmas: Sequence[float], values: Sequence[float]) -> float:
    """Constant term of the interpolating polynomial in sigma^2 (at most quadratic)."""
    s2 = np.asarray(sigmas, dtype=float) ** 2
    degree = min(len(s2) - 1, 2)
    if degree == 0:
        return float(values[0])
    return float(np.polyfit(s2, np.asarray(values, dtype=float), deg=degree)[-1])


def density_ratio(surface: ImmersedSurface, o: AmbientPoint, sigmas: Sequence[float]) -> DensityEstimate:
    """Area and weighted-volume density ratios of small balls around o, extrapolated to sigma = 0."""
    sigmas = [float(s) for s in sigmas]
    if not sigmas:
        raise DomainError("density_ratio needs at least one radius")
    if any(b >= a for a, b in zip(sigmas, sigmas[1:])):
        raise DomainError("radii must be strictly decreasing")
    if min(sigmas) < 1e-3:
        raise DomainError("radii below 1e-3 are dominated by quadrature noise")
    preimages = find_preimages(surface, o)
    if not preimages:
        raise NotOnSurfaceError("base point is not on the surface")

    area_ratios, weighted_ratios = [], []
    for sigma in sigmas:
        ball, _ = _integrate_columns(surface, ("one", "V"), Region.ball(o, sigma), o, preimages)
        phi = float(radial_weights(surface.form, sigma).phi)
        area_ratios.append(ball["one"] / (math.pi * sigma**2))
        weighted_ratios.append(phi * ball["V"] / (2 * math.pi))
    return DensityEstimate(
        sigmas=sigmas,
        area_ratios=area_ratios,
        weighted_ratios=weighted_ratios,
        k_extrapolated=richardson_limit(sigmas, area_ratios),
        k_weighted=richardson_limit(sigmas, weighted_ratios),
    )


def pointwise_square_decomposition(form: SpaceForm, sample: GeometrySample) -> np.ndarray:
    """[-phi sn grad_perp r . H + phi' sn |grad_perp r|^2] - [-|X_perp/w + H/2|^2 + |H|^2/4]."""
    weights = sample.weights
    # both sides from the same three normal products; X_perp = sn grad_perp r
    xh = form.inner(sample.X_perp, sample.H_vec)
    xx = form.inner(sample.X_perp, sample.X_perp)
    hh = form.inner(sample.H_vec, sample.H_vec)
    w = np.asarray(weights.w)
    left = -weights.phi * xh + (weights.phi_prime / weights.sn) * xx
    right = -(xx / w**2 + xh / w + 0.25 * hh) + 0.25 * hh
    return left - right


def random_parameters(
    surface: ImmersedSurface, count: int, rng: np.random.Generator, margin: float = 1e-3
) -> List[Tuple[int, np.ndarray, np.ndarray]]:
    """Uniform parameter points per chart, kept away from the domain edges."""
    per_chart = np.bincount(rng.integers(0, len(surface.charts), size=count), minlength=len(surface.charts))
    draws = []
    for index, (chart, n) in enumerate(zip(surface.charts, per_chart)):
        u0, u1, v0, v1 = chart.domain
        du, dv = margin * (u1 - u0), margin * (v1 - v0)
        u = rng.uniform(u0 + du, u1 - du, size=n)
        v = rng.uniform(v0 + dv, v1 - dv, size=n)
        draws.append((index, u, v))
    return draws


def random_samples(
    surface: ImmersedSurface, o: Optional[AmbientPoint], count: int, seed: int
) -> List[Tuple[int, GeometrySample]]:
    rng = np.random.default_rng(seed)
    samples = []
    for index, u, v in random_parameters(surface, count, rng):
        if u.size:
            samples.append((index, sample_batch(surface, index, u, v, o)))
    return samples


def divergence_equality_residual(
    surface: ImmersedSurface, o: AmbientPoint, nodes: Optional[int] = None, seed: Optional[int] = None
) -> BalanceReport:
    """Largest |div_Sigma X - 2 sn'(r)| at random nodes; zero up to differencing error in a space form."""
    settings = get_settings()
    nodes = nodes or settings.SAMPLE_NODES
    seed = settings.SEED if seed is None else seed
    form = surface.form
    step = settings.FD_STEP * min(chart.scale for chart in surface.charts)

    field = radial_test_field(surface, o)
    worst = 0.0
    for _, sample in random_samples(surface, o, nodes, seed):
        divergence = divergence_from_sample(form, sample, field, step)
        worst = max(worst, float(np.max(np.abs(divergence - 2.0 * sample.weights.sn_prime))))
    return BalanceReport.build(
        "divergence_equality", "identity", worst, 0.0, {"max_residual": worst, "nodes": float(nodes)}, 1e-6
    )


def radial_test_field(surface: ImmersedSurface, o: AmbientPoint) -> VectorField:
    """The radial field X = sn(r) grad r of o."""
    form = surface.form

    def field(points: np.ndarray) -> np.ndarray:
        return _radial_field(form, o.coords, points)

    return field


def height_field(surface: ImmersedSurface, direction: np.ndarray) -> VectorField:
    """Gradient field of the linear height x -> <a, x> restricted to the model."""
    form = surface.form
    a = np.asarray(direction, dtype=float)

    def field(points: np.ndarray) -> np.ndarray:
        return _tangent_projection(form, points, np.broadcast_to(a, points.shape))

    return field


def first_variation_balance(
    surface: ImmersedSurface, Y: VectorField, base_point: Optional[AmbientPoint] = None
) -> BalanceReport:
    """int div_Sigma Y = -int <Y, H> + int_{boundary} <Y, eta>."""
    form = surface.form
    step = get_settings().FD_STEP * min(chart.scale for chart in surface.charts)

    def kernel(sample: GeometrySample) -> np.ndarray:
        Y_here = Y(sample.F)
        return np.stack(
            [
                divergence_from_sample(form, sample, Y, step),
                form.inner(Y_here, sample.H_vec),
                np.sqrt(np.maximum(form.inner(Y_here, Y_here), 0.0)),
            ],
            axis=-1,
        )

    estimate = integrate(surface, kernel, focus=[])
    divergence, flux_h, size = (estimate.column(i) for i in range(3))
    boundary = 0.0
    estimates = [estimate]
    if surface.has_boundary:
        boundary_est = boundary_integral(surface, lambda sample, eta: form.inner(Y(sample.F), eta))
        boundary = float(boundary_est)
        estimates.append(boundary_est)
    terms = {"int_div": divergence, "int_Y_H": flux_h, "boundary_flux": boundary, "int_abs_Y": size}
    report = BalanceReport.build(
        "first_variation_balance",
        "identity",
        divergence,
        -flux_h + boundary,
        terms,
        get_settings().IDENTITY_TOLERANCE,
        _warnings(*estimates),
    )
    # judged against int |Y| rather than |lhs| + |rhs|, which vanish for divergence-free balances
    return report.model_copy(update={"tolerance": report.tolerance * max(size, 1.0) / report.scale})


def equality_case_residual(
    surface: ImmersedSurface, sample_pairs: int, seed: Optional[int] = None
) -> EqualityCaseResult:
    """max |H(y)/2 - <x, nu(y)> / (1 + <x, y>)| over random pairs; zero exactly on geodesic spheres."""
    form = surface.form
    if form.ambient_dim != 3:
        raise AmbientDimensionError("the two-point equality test needs a 3-dimensional ambient")
    if form.K >= 0:
        raise DomainError("the two-point equality test is stated for hyperbolic space")
    if any(chart.orientation not in (1, -1) for chart in surface.charts):
        raise OrientationError("every chart needs a consistent outward orientation")
    seed = get_settings().SEED if seed is None else seed

    points, normals, means = [], [], []
    for index, sample in random_samples(surface, None, 2 * sample_pairs, seed):
        nu = outward_normal(surface, index, sample)
        points.append(sample.F)
        normals.append(nu)
        means.append(-form.inner(sample.H_vec, nu))
    F = np.concatenate(points)
    nu = np.concatenate(normals)
    H = np.concatenate(means)
    rng = np.random.default_rng(seed + 1)
    order = rng.permutation(F.shape[0])
    x_idx, y_idx = order[:sample_pairs], order[sample_pairs : 2 * sample_pairs]
    x, y = F[x_idx], F[y_idx]

    diff = x - y
    chord = form.inner(diff, diff)
    keep = _distance(form, x, y) >= MIN_PAIR_DISTANCE
    # 1 + <x, y> = -<x - y, x - y> / 2 and <x, nu(y)> = <x - y, nu(y)>, both free of cancellation
    ratio = form.inner(diff, nu[y_idx])[keep] / (-0.5 * chord[keep])
    residual = np.abs(0.5 * H[y_idx][keep] - ratio)
    result = EqualityCaseResult(
        max_residual=float(np.max(residual)) if residual.size else 0.0,
        min_mean_curvature=float(np.min(H)),
        pairs_evaluated=int(keep.sum()),
        pairs_skipped=int((~keep).sum()),
    )
    logger.debug("equality case: %s", result)
    return result


def refinement_study(
    evaluate: Callable[[ImmersedSurface], BalanceReport], surface: ImmersedSurface, levels: int = 2
) -> BalanceReport:
    """Re-evaluate on successively doubled base grids and record (cells, residual) per level."""
    history = []
    report = None
    cells = surface.quadrature.base_cells_per_axis
    for level in range(levels):
        refined = surface.with_quadrature(base_cells_per_axis=cells * 2**level)
        report = evaluate(refined)
        history.append((cells * 2**level, report.residual))
    return report.model_copy(update={"refinement_history": history})


def convergence_order(history: Sequence[Tuple[int, float]], noise: float = 1e-14) -> Optional[float]:
    """Observed order from the last two refinement levels, None when a residual is below noise."""
    if len(history) < 2:
        return None
    (n0, r0), (n1, r1) = history[-2], history[-1]
    if abs(r1) < noise or abs(r0) < noise:
        return None
    return math.log(abs(r0) / abs(r1)) / math.log(n1 / n0)
