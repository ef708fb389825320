"""Closed-form geometry of the two constant-curvature model spaces.

Hyperbolic space is the upper sheet of the hyperboloid {<x, x> = -1, x_0 > 0} in Minkowski
space with <x, y> = -x_0 y_0 + sum x_i y_i. The round sphere is the unit sphere of Euclidean
space. Both satisfy <x, x> = K, which lets most formulas be written once:

    tangent projection   P_x(v) = v - K <v, x> x
    radial field         X(x)   = (x - o) - K w(r) x,   w(r) = <x - o, x - o> / 2

Kernels prefixed with an underscore work on arrays with a trailing coordinate axis and are
shared with the surface sampler; the public operations wrap them with model validation.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple, Union

import numpy as np

from ..config import get_settings
from ..exceptions import DegenerateError, DomainError, ModelConstraintError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class SpaceForm:
    """Ambient model descriptor: curvature sign K and dimension n."""

    curvature_sign: int
    ambient_dim: int

    def __post_init__(self):
        if self.curvature_sign not in (-1, 0, 1):
            raise DomainError(f"curvature_sign must be -1, 0 or +1, got {self.curvature_sign}")
        if self.ambient_dim < 3:
            raise DomainError(f"ambient_dim must be >= 3, got {self.ambient_dim}")

    @property
    def K(self) -> int:
        return self.curvature_sign

    @property
    def coord_dim(self) -> int:
        return self.ambient_dim + 1

    @cached_property
    def metric(self) -> np.ndarray:
        diag = np.ones(self.coord_dim)
        if self.curvature_sign < 0:
            diag[0] = -1.0
        return diag

    @property
    def name(self) -> str:
        return {-1: f"H{self.ambient_dim}", 0: f"R{self.ambient_dim}", 1: f"S{self.ambient_dim}"}[
            self.curvature_sign
        ]

    def require_curved(self) -> None:
        if self.curvature_sign == 0:
            raise DomainError("Euclidean space (K = 0) is not a supported ambient")

    def inner(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Model bilinear form along the trailing axis."""
        return np.einsum("...i,...i->...", a * self.metric, b)

    def origin(self) -> np.ndarray:
        e0 = np.zeros(self.coord_dim)
        e0[0] = 1.0
        return e0


def hyperbolic(n: int = 3) -> SpaceForm:
    return SpaceForm(curvature_sign=-1, ambient_dim=n)


def sphere(n: int = 3) -> SpaceForm:
    return SpaceForm(curvature_sign=1, ambient_dim=n)


def _membership_defect(form: SpaceForm, x: np.ndarray) -> np.ndarray:
    # relative to the Euclidean size of x so that far-out hyperboloid points validate
    scale = np.maximum(1.0, np.einsum("...i,...i->...", x, x))
    return np.abs(form.inner(x, x) - form.K) / scale


@dataclass(frozen=True)
class AmbientPoint:
    """A point of the model, given by its (n + 1) linear coordinates."""

    form: SpaceForm
    coords: np.ndarray

    def __post_init__(self):
        self.form.require_curved()
        coords = np.asarray(self.coords, dtype=float)
        if coords.shape != (self.form.coord_dim,):
            raise ModelConstraintError(
                f"expected {self.form.coord_dim} coordinates, got shape {coords.shape}"
            )
        tol = get_settings().VALIDATION_TOLERANCE
        defect = float(_membership_defect(self.form, coords))
        if defect > tol:
            raise ModelConstraintError(f"point is off the {self.form.name} model by {defect:.3e}")
        if self.form.K < 0 and coords[0] <= 0:
            raise ModelConstraintError("hyperboloid points must have x_0 > 0")
        object.__setattr__(self, "coords", coords)

    @classmethod
    def origin(cls, form: SpaceForm) -> "AmbientPoint":
        return cls(form, form.origin())


@dataclass(frozen=True)
class AmbientVector:
    """A tangent vector of the model at `base`."""

    base: AmbientPoint
    components: np.ndarray

    def __post_init__(self):
        components = np.asarray(self.components, dtype=float)
        form = self.base.form
        if components.shape != (form.coord_dim,):
            raise ModelConstraintError(f"expected {form.coord_dim} components, got {components.shape}")
        tol = get_settings().VALIDATION_TOLERANCE
        scale = max(1.0, float(np.linalg.norm(components)) * float(np.linalg.norm(self.base.coords)))
        defect = abs(float(form.inner(self.base.coords, components))) / scale
        if defect > tol:
            raise ModelConstraintError(f"vector is not tangent at its base point (defect {defect:.3e})")
        object.__setattr__(self, "components", components)

    @property
    def form(self) -> SpaceForm:
        return self.base.form

    def norm(self) -> float:
        return float(np.sqrt(max(float(self.form.inner(self.components, self.components)), 0.0)))


@dataclass(frozen=True)
class RadialWeights:
    """Weights of the monotonicity argument at geodesic distance r (scalars or arrays)."""

    r: ArrayLike
    sn: ArrayLike
    sn_prime: ArrayLike
    V: ArrayLike
    w: ArrayLike
    phi: ArrayLike
    phi_prime: ArrayLike


def sn_pair(form: SpaceForm, r: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    """Generalised sine sn_K and its derivative."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise DomainError("sn_pair requires r >= 0")
    if form.K < 0:
        return np.sinh(r), np.cosh(r)
    if form.K > 0:
        if np.any(r_arr >= np.pi):
            raise DomainError("sn_K on the sphere is only valid for r < pi")
        return np.sin(r), np.cos(r)
    return r, np.ones_like(r_arr) if r_arr.ndim else 1.0


def _w_of_r(form: SpaceForm, r: ArrayLike) -> ArrayLike:
    # cosh r - 1 and 1 - cos r without cancellation
    half = 0.5 * np.asarray(r, dtype=float)
    if form.K < 0:
        return 2.0 * np.sinh(half) ** 2
    return 2.0 * np.sin(half) ** 2


def radial_weights(form: SpaceForm, r: ArrayLike) -> RadialWeights:
    form.require_curved()
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise DomainError("radial weights are singular at r = 0")
    sn, sn_prime = sn_pair(form, r)
    w = _w_of_r(form, r)
    phi = 1.0 / w
    return RadialWeights(
        r=r, sn=sn, sn_prime=sn_prime, V=sn_prime, w=w, phi=phi, phi_prime=-sn / w**2
    )


def weight_identity_residual(form: SpaceForm, radii: np.ndarray) -> float:
    """Largest relative defect of 2 phi V + phi' sn = -K over `radii`."""
    weights = radial_weights(form, np.asarray(radii, dtype=float))
    two_phi_v = 2.0 * weights.phi * weights.V
    combined = two_phi_v + weights.phi_prime * weights.sn
    scale = np.maximum(1.0, np.abs(two_phi_v))
    return float(np.max(np.abs(combined + form.K) / scale))


def _chord_sq(form: SpaceForm, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """<a - b, a - b>, clamped at 0 within the clamp tolerance."""
    diff = a - b
    d2 = form.inner(diff, diff)
    clamp = get_settings().CLAMP_TOLERANCE
    if np.any(d2 < -2.0 * clamp):
        raise ModelConstraintError("negative chord length: inputs are off the model")
    return np.maximum(d2, 0.0)


def _distance(form: SpaceForm, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = _chord_sq(form, a, b)
    if form.K < 0:
        return 2.0 * np.arcsinh(0.5 * np.sqrt(d2))
    s2 = np.maximum(np.einsum("...i,...i->...", a + b, a + b), 0.0)
    return 2.0 * np.arctan2(np.sqrt(d2), np.sqrt(s2))


def _tangent_projection(form: SpaceForm, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    return v - form.K * form.inner(v, x)[..., None] * x


def _radial_field(form: SpaceForm, o: np.ndarray, x: np.ndarray) -> np.ndarray:
    w = 0.5 * _chord_sq(form, x, o)
    return (x - o) - form.K * w[..., None] * x


def tangent_projection(form: SpaceForm, x: AmbientPoint, v: np.ndarray) -> AmbientVector:
    return AmbientVector(x, _tangent_projection(form, x.coords, np.asarray(v, dtype=float)))


def distance(form: SpaceForm, o: AmbientPoint, x: AmbientPoint) -> float:
    form.require_curved()
    return float(_distance(form, o.coords, x.coords))


def geodesic_point(form: SpaceForm, x: AmbientPoint, z: AmbientVector, rho: float) -> AmbientPoint:
    form.require_curved()
    tol = get_settings().VALIDATION_TOLERANCE
    if z.form != form or np.max(np.abs(z.base.coords - x.coords)) > tol * max(1.0, float(np.linalg.norm(x.coords))):
        raise DomainError("geodesic velocity is not based at the start point")
    speed = z.norm()
    if abs(speed - 1.0) > get_settings().CLAMP_TOLERANCE:
        raise ModelConstraintError(f"geodesic velocity must be unit, got length {speed:.12g}")
    if form.K < 0:
        coords = x.coords * np.cosh(rho) + z.components * np.sinh(rho)
    else:
        coords = x.coords * np.cos(rho) + z.components * np.sin(rho)
    return AmbientPoint(form, coords)


def initial_velocity(form: SpaceForm, x: AmbientPoint, y: AmbientPoint) -> Tuple[float, AmbientVector]:
    """Length and unit initial velocity of the geodesic segment from x to y."""
    form.require_curved()
    rho = float(_distance(form, x.coords, y.coords))
    if rho < 1e-15:
        raise DegenerateError("initial velocity is undefined for coincident points")
    if form.K > 0 and np.pi - rho < 1e-12:
        raise DegenerateError("initial velocity is undefined for antipodal points")
    sn, _ = sn_pair(form, rho)
    w = _w_of_r(form, rho)
    z = ((y.coords - x.coords) + form.K * w * x.coords) / sn
    return rho, AmbientVector(x, z)


def grad_r(form: SpaceForm, o: AmbientPoint, x: AmbientPoint) -> AmbientVector:
    """Unit gradient at x of the distance from o."""
    _, z = initial_velocity(form, x, o)
    return AmbientVector(x, -z.components)


def X_field(form: SpaceForm, o: AmbientPoint, x: AmbientPoint) -> AmbientVector:
    """X = sn(r) grad r, extended by zero at x = o."""
    form.require_curved()
    return AmbientVector(x, _radial_field(form, o.coords, x.coords))


def isometry_matrix(form: SpaceForm, axis: int, amount: float) -> np.ndarray:
    """Boost (H^n) or rotation (S^n) mixing coordinate 0 with coordinate `axis`.

    Sends the origin e_0 to the point at distance `amount` along the x_axis direction.
    """
    form.require_curved()
    m = np.eye(form.coord_dim)
    if form.K < 0:
        c, s, s_back = np.cosh(amount), np.sinh(amount), np.sinh(amount)
    else:
        c, s, s_back = np.cos(amount), np.sin(amount), -np.sin(amount)
    m[0, 0] = c
    m[axis, axis] = c
    m[axis, 0] = s
    m[0, axis] = s_back
    return m


def spatial_rotation(form: SpaceForm, i: int, j: int, angle: float) -> np.ndarray:
    """Rotation in the (x_i, x_j) plane, i, j >= 1; an isometry of both models."""
    m = np.eye(form.coord_dim)
    c, s = np.cos(angle), np.sin(angle)
    m[i, i] = c
    m[j, j] = c
    m[i, j] = -s
    m[j, i] = s
    return m


def random_point(form: SpaceForm, rng: np.random.Generator, spread: float = 1.0) -> AmbientPoint:
    form.require_curved()
    direction = rng.normal(size=form.ambient_dim)
    direction /= np.linalg.norm(direction)
    if form.K < 0:
        t = rng.uniform(0.0, spread)
        coords = np.concatenate([[np.cosh(t)], np.sinh(t) * direction])
    else:
        t = rng.uniform(0.0, np.pi)
        coords = np.concatenate([[np.cos(t)], np.sin(t) * direction])
    return AmbientPoint(form, coords)


def random_unit_tangent(form: SpaceForm, x: AmbientPoint, rng: np.random.Generator) -> AmbientVector:
    v = _tangent_projection(form, x.coords, rng.normal(size=form.coord_dim))
    v = v / np.sqrt(form.inner(v, v))
    return AmbientVector(x, v)
