"""Adaptive Gauss-Legendre quadrature over a surface, its sublevel sets and its boundary.

Cells are tensor-product Gauss-Legendre rules on a regular grid of each chart. A cell whose
image may straddle a cut radius r = sigma or r = rho (decided with the 1-Lipschitz bound of
r) is quadrisected until it is small against the cut radius and the difference of its clipped
area at orders p and p - 1 is below cut_tolerance times the surface area. Leaf cells on a cut
use a clipped rule: along p Gauss lines the roots of r - t are bracketed on four segments,
located by bisection, and every inside piece gets its own Gauss rule.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import DomainError, EmptyBoundaryError
from ..utils.reduction import map_blocks, pairwise_sum
from .spaceform import AmbientPoint, _distance
from .surface import Chart, GeometrySample, ImmersedSurface, find_preimages, sample_jet

logger = logging.getLogger(__name__)

MIN_NODE_RADIUS = 1e-12
BISECTION_STEPS = 52
SEGMENTS_PER_LINE = 4

Integrand = Callable[[GeometrySample], np.ndarray]
BoundaryIntegrand = Callable[[GeometrySample, np.ndarray], np.ndarray]
Focus = Tuple[int, float, float]


@lru_cache(maxsize=None)
def gauss_rule(points: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    return np.polynomial.legendre.leggauss(points)


@dataclass(frozen=True)
class Region:
    """All of the surface, a ball {r < rho} or an annulus {sigma <= r < rho} around o."""

    kind: str = "all"
    o: Optional[AmbientPoint] = None
    sigma: float = 0.0
    rho: float = math.inf

    def __post_init__(self):
        if self.kind not in ("all", "ball", "annulus"):
            raise DomainError(f"unknown region kind {self.kind!r}")
        if self.kind == "all":
            return
        if self.o is None:
            raise DomainError(f"a {self.kind} needs a base point")
        if not self.rho > 0:
            raise DomainError("region radius must be positive")
        if self.kind == "annulus" and not 0 <= self.sigma < self.rho:
            raise DomainError("annulus radii must satisfy 0 <= sigma < rho")
        if self.o.form.K > 0 and math.isfinite(self.rho) and self.rho >= math.pi:
            raise DomainError("radii on the sphere must stay below pi (conjugate points)")

    @classmethod
    def all(cls) -> "Region":
        return cls()

    @classmethod
    def ball(cls, o: AmbientPoint, rho: float) -> "Region":
        return cls(kind="ball", o=o, rho=rho)

    @classmethod
    def annulus(cls, o: AmbientPoint, sigma: float, rho: float) -> "Region":
        return cls(kind="annulus", o=o, sigma=sigma, rho=rho)

    @property
    def thresholds(self) -> Tuple[float, ...]:
        cuts = []
        if self.kind == "annulus" and self.sigma > 0:
            cuts.append(self.sigma)
        if self.kind != "all" and math.isfinite(self.rho):
            cuts.append(self.rho)
        return tuple(cuts)

    def contains(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        inside = np.ones(r.shape, dtype=bool)
        if self.kind == "all":
            return inside
        if self.kind == "annulus":
            inside &= r >= self.sigma
        return inside & (r < self.rho)


@dataclass(frozen=True)
class IntegralEstimate:
    """Quadrature value (scalar or one entry per integrand column) with an error estimate."""

    value: Union[float, np.ndarray]
    error_bound: float
    warning: Optional[str] = None
    nodes: int = 0

    def __float__(self) -> float:
        return float(np.asarray(self.value).reshape(-1)[0])

    def column(self, index: int) -> float:
        return float(np.asarray(self.value).reshape(-1)[index])


@dataclass
class _Nodes:
    u: List[np.ndarray]
    v: List[np.ndarray]
    w: List[np.ndarray]

    def add(self, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> None:
        keep = w > 0
        self.u.append(u[keep])
        self.v.append(v[keep])
        self.w.append(w[keep])

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self.u:
            return np.empty(0), np.empty(0), np.empty(0)
        return np.concatenate(self.u), np.concatenate(self.v), np.concatenate(self.w)


def _base_cells(chart: Chart, n: int) -> np.ndarray:
    u0, u1, v0, v1 = chart.domain
    ue = np.linspace(u0, u1, n + 1)
    ve = np.linspace(v0, v1, n + 1)
    iu, iv = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    iu, iv = iu.ravel(), iv.ravel()
    return np.stack([ue[iu], ue[iu + 1], ve[iv], ve[iv + 1]], axis=1)


def _quadrisect(cells: np.ndarray) -> np.ndarray:
    u0, u1, v0, v1 = cells.T
    um, vm = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
    children = np.stack(
        [
            np.stack([u0, um, v0, vm], axis=1),
            np.stack([u0, um, vm, v1], axis=1),
            np.stack([um, u1, v0, vm], axis=1),
            np.stack([um, u1, vm, v1], axis=1),
        ],
        axis=1,
    )
    return children.reshape(-1, 4)


def _tensor_nodes(cells: np.ndarray, points: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, wx = gauss_rule(points)
    u0, u1, v0, v1 = (c[:, None, None] for c in cells.T)
    hu, hv = 0.5 * (u1 - u0), 0.5 * (v1 - v0)
    u = 0.5 * (u0 + u1) + hu * x[None, :, None]
    v = 0.5 * (v0 + v1) + hv * x[None, None, :]
    w = hu * hv * wx[None, :, None] * wx[None, None, :]
    shape = (cells.shape[0], points, points)
    return np.broadcast_to(u, shape).ravel(), np.broadcast_to(v, shape).ravel(), np.broadcast_to(w, shape).ravel()


class _ChartIntegrator:
    """Cell refinement and node generation for one chart."""

    def __init__(
        self,
        surface: ImmersedSurface,
        chart_index: int,
        region: Region,
        base_point: Optional[AmbientPoint],
        focus: Sequence[Tuple[float, float]],
        area_scale: float,
    ):
        self.form = surface.form
        self.chart = surface.charts[chart_index]
        self.chart_index = chart_index
        self.spec = surface.quadrature
        self.region = region
        self.base = base_point
        self.focus = self._focus_images(focus)
        self.area_scale = area_scale
        self.unresolved = 0
        self.area_error = 0.0

    def _focus_images(self, focus: Sequence[Tuple[float, float]]) -> np.ndarray:
        u0, u1, v0, v1 = self.chart.domain
        images = []
        for fu, fv in focus:
            us = [fu - (u1 - u0), fu, fu + (u1 - u0)] if self.chart.periodic[0] else [fu]
            vs = [fv - (v1 - v0), fv, fv + (v1 - v0)] if self.chart.periodic[1] else [fv]
            images.extend((a, b) for a in us for b in vs)
        return np.array(images, dtype=float).reshape(-1, 2)

    def _radius(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        F = self.chart.jet(u, v).F
        return _distance(self.form, self.base.coords, F)

    def _radius_spread(self, cells: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Radius at each cell centre and a bound on its variation over the cell."""
        u0, u1, v0, v1 = cells.T
        um, vm = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
        us = np.stack([um, u0, um, u1, u0, u1, u0, um, u1], axis=1)
        vs = np.stack([vm, v0, v0, v0, vm, vm, v1, v1, v1], axis=1)
        F = self.chart.jet(us.ravel(), vs.ravel()).F.reshape(cells.shape[0], 9, -1)
        r_c = _distance(self.form, self.base.coords, F[:, 0])
        reach = _distance(self.form, F[:, :1], F[:, 1:]).max(axis=1)
        return r_c, 1.25 * reach

    def _focus_hit(self, cells: np.ndarray) -> np.ndarray:
        if self.focus.size == 0:
            return np.zeros(cells.shape[0], dtype=bool)
        fu, fv = self.focus[:, 0][None, :], self.focus[:, 1][None, :]
        slack = 1e-12
        hit = (
            (cells[:, 0:1] - slack <= fu)
            & (fu <= cells[:, 1:2] + slack)
            & (cells[:, 2:3] - slack <= fv)
            & (fv <= cells[:, 3:4] + slack)
        )
        return hit.any(axis=1)

    def _bisect(self, lo, hi, b, along_u, t, g_lo):
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            u = np.where(along_u, mid, b)
            v = np.where(along_u, b, mid)
            g_mid = self._radius(u, v) - t
            same = np.sign(g_mid) == np.sign(g_lo)
            lo = np.where(same, mid, lo)
            g_lo = np.where(same, g_mid, g_lo)
            hi = np.where(same, hi, mid)
        return 0.5 * (lo + hi)

    def _clipped_nodes(self, cells: np.ndarray, points: int):
        """Nodes of the clipped rule; returns (u, v, w, cell id)."""
        m = cells.shape[0]
        cuts = np.array(self.region.thresholds)
        n_cut = cuts.size
        u0, u1, v0, v1 = cells.T
        um, vm = 0.5 * (u0 + u1), 0.5 * (v0 + v1)

        # integrate along the direction in which r varies most
        r_ends = self._radius(np.concatenate([u0, u1, um, um]), np.concatenate([vm, vm, v0, v1])).reshape(4, m)
        along_u = np.abs(r_ends[1] - r_ends[0]) >= np.abs(r_ends[3] - r_ends[2])
        a0, a1 = np.where(along_u, u0, v0), np.where(along_u, u1, v1)
        b0, b1 = np.where(along_u, v0, u0), np.where(along_u, v1, u1)

        x, wx = gauss_rule(points)
        hb = 0.5 * (b1 - b0)
        lines_b = (0.5 * (b0 + b1))[:, None] + hb[:, None] * x[None, :]
        lines_w = hb[:, None] * wx[None, :]

        S = SEGMENTS_PER_LINE
        edges = a0[:, None, None] + (a1 - a0)[:, None, None] * (np.arange(S + 1) / S)[None, None, :]
        edges = np.broadcast_to(edges, (m, points, S + 1))
        b_full = np.broadcast_to(lines_b[:, :, None], edges.shape)
        au = np.broadcast_to(along_u[:, None, None], edges.shape)
        r_edges = self._radius(np.where(au, edges, b_full).ravel(), np.where(au, b_full, edges).ravel())
        r_edges = r_edges.reshape(edges.shape)

        roots = np.full((m, points, S, n_cut), np.nan)
        for j, t in enumerate(cuts):
            g = r_edges - t
            g_lo, g_hi = g[..., :-1], g[..., 1:]
            change = (g_lo * g_hi) < 0
            if not change.any():
                continue
            idx = np.nonzero(change)
            lo = edges[..., :-1][idx]
            hi = edges[..., 1:][idx]
            b = b_full[..., :-1][idx]
            flag = au[..., :-1][idx]
            roots[idx + (j,)] = self._bisect(lo, hi, b, flag, t, g_lo[idx])

        ends = np.stack([np.broadcast_to(a0[:, None], (m, points)), np.broadcast_to(a1[:, None], (m, points))], axis=-1)
        breaks = np.sort(np.concatenate([ends, roots.reshape(m, points, S * n_cut)], axis=-1), axis=-1)
        left, right = breaks[..., :-1], breaks[..., 1:]
        valid = np.isfinite(left) & np.isfinite(right) & (right > left)
        left = np.where(valid, left, 0.0)
        right = np.where(valid, right, 0.0)

        mid = 0.5 * (left + right)
        b_piece = np.broadcast_to(lines_b[:, :, None], mid.shape)
        au_piece = np.broadcast_to(along_u[:, None, None], mid.shape)
        mid_eval = np.where(valid, mid, np.broadcast_to(a0[:, None, None], mid.shape))
        r_mid = self._radius(
            np.where(au_piece, mid_eval, b_piece).ravel(), np.where(au_piece, b_piece, mid_eval).ravel()
        ).reshape(mid.shape)
        keep = valid & self.region.contains(r_mid)

        half = 0.5 * (right - left)
        a_nodes = mid[..., None] + half[..., None] * x
        weights = (half * keep * lines_w[:, :, None])[..., None] * wx
        shape = a_nodes.shape
        b_nodes = np.broadcast_to(lines_b[:, :, None, None], shape)
        au_nodes = np.broadcast_to(along_u[:, None, None, None], shape)
        cell_id = np.broadcast_to(np.arange(m)[:, None, None, None], shape)
        u = np.where(au_nodes, a_nodes, b_nodes).ravel()
        v = np.where(au_nodes, b_nodes, a_nodes).ravel()
        w = weights.ravel()
        keep_nodes = w > 0
        return u[keep_nodes], v[keep_nodes], w[keep_nodes], cell_id.ravel()[keep_nodes]

    def _area_by_cell(self, u, v, w, cell_id, m) -> np.ndarray:
        if u.size == 0:
            return np.zeros(m)
        sample = sample_jet(self.form, self.chart.jet(u, v))
        return np.bincount(cell_id, weights=w * sample.area_element, minlength=m)

    def nodes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        spec = self.spec
        p = spec.gauss_points_per_cell_axis
        out = _Nodes([], [], [])
        cells = _base_cells(self.chart, spec.base_cells_per_axis)
        cuts = self.region.thresholds

        if self.base is None or (not cuts and self.focus.size == 0):
            out.add(*_tensor_nodes(cells, p))
            return out.arrays()

        for depth in range(spec.max_refine_depth + 1):
            if cells.shape[0] == 0:
                break
            last = depth == spec.max_refine_depth
            refine = np.bool_(not last)
            r_c, delta = self._radius_spread(cells)
            focus = self._focus_hit(cells)
            if cuts:
                gaps = np.stack([np.abs(r_c - t) - delta for t in cuts], axis=1)
                straddle = (gaps <= 0).any(axis=1)
                nearest = np.array(cuts)[np.argmin(gaps, axis=1)]
            else:
                straddle = np.zeros(cells.shape[0], dtype=bool)
                nearest = np.full(cells.shape[0], np.inf)
            inside = self.region.contains(r_c)

            full = np.logical_and.reduce([~straddle, inside, ~focus | np.bool_(last)])
            focus_split = np.logical_and.reduce([~straddle, inside, focus]) & refine
            coarse_split = straddle & (focus | (delta > 0.25 * nearest)) & refine
            candidates = straddle & ~coarse_split

            out.add(*_tensor_nodes(cells[full], p))

            fine_split = np.zeros_like(straddle)
            if candidates.any():
                sub = cells[candidates]
                m = sub.shape[0]
                hi = self._clipped_nodes(sub, p)
                lo = self._clipped_nodes(sub, p - 1)
                error = np.abs(self._area_by_cell(*hi, m) - self._area_by_cell(*lo, m))
                too_coarse = error > spec.cut_tolerance * self.area_scale
                if last:
                    self.unresolved += int(too_coarse.sum())
                    self.area_error += float(error[too_coarse].sum())
                    too_coarse = np.zeros_like(too_coarse)
                accept = ~too_coarse[hi[3]]
                out.add(hi[0][accept], hi[1][accept], hi[2][accept])
                fine_split[np.flatnonzero(candidates)[too_coarse]] = True

            split = focus_split | coarse_split | fine_split
            cells = _quadrisect(cells[split])

        return out.arrays()


def _surface_area(surface: ImmersedSurface) -> float:
    total = []
    for index, chart in enumerate(surface.charts):
        u, v, w = _tensor_nodes(_base_cells(chart, surface.quadrature.base_cells_per_axis), surface.quadrature.gauss_points_per_cell_axis)
        sample = sample_jet(surface.form, chart.jet(u, v))
        total.append(w * sample.area_element)
    return float(pairwise_sum(np.concatenate(total)))


def _evaluate(
    surface: ImmersedSurface,
    chart_index: int,
    u: np.ndarray,
    v: np.ndarray,
    w: np.ndarray,
    integrand: Integrand,
    region: Region,
    base_point: Optional[AmbientPoint],
    threads: Optional[int],
) -> Tuple[List[np.ndarray], float]:
    chart = surface.charts[chart_index]
    form = surface.form

    def block(part: slice) -> Tuple[np.ndarray, float]:
        jet = chart.jet(u[part], v[part])
        keep = np.ones(jet.F.shape[0], dtype=bool)
        if base_point is not None:
            r = _distance(form, base_point.coords, jet.F)
            keep = (r >= MIN_NODE_RADIUS) & region.contains(r)
        sample = sample_jet(form, jet.take(keep), base_point)
        values = np.asarray(integrand(sample), dtype=float)
        weights = sample.area_element * w[part][keep]
        contribution = values * (weights if values.ndim == 1 else weights[:, None])
        out = np.zeros((keep.size,) + values.shape[1:])
        out[keep] = contribution
        peak = float(np.max(np.abs(values))) if values.size else 0.0
        return out, peak

    blocks = [block(slice(0, 0))] if u.size == 0 else map_blocks(block, u.size, threads=threads)
    return [part for part, _ in blocks], max(peak for _, peak in blocks)


def integrate(
    surface: ImmersedSurface,
    integrand: Integrand,
    region: Optional[Region] = None,
    base_point: Optional[AmbientPoint] = None,
    focus: Optional[Sequence[Focus]] = None,
    threads: Optional[int] = None,
) -> IntegralEstimate:
    """Integrate a pointwise integrand over a region of the surface.

    The integrand receives a GeometrySample with a leading node axis and returns one value per
    node, or a (nodes, columns) array. The base point defaults to the region centre; when it
    is set, nodes closer than 1e-12 to it are dropped and cells around each of its preimages
    are refined to the maximum depth, except preimages on collapsed (polar) edges.
    """
    region = region or Region.all()
    base = region.o if region.o is not None else base_point
    if focus is None:
        focus = find_preimages(surface, base) if base is not None else []
    by_chart: Dict[int, List[Tuple[float, float]]] = {}
    for index, fu, fv in focus:
        if surface.charts[index].edge_of(fu, fv) is None:
            by_chart.setdefault(index, []).append((fu, fv))

    area_scale = _surface_area(surface) if base is not None else 1.0
    parts: List[np.ndarray] = []
    unresolved, area_error, count, peak = 0, 0.0, 0, 0.0
    for index in range(len(surface.charts)):
        chart_integrator = _ChartIntegrator(surface, index, region, base, by_chart.get(index, []), area_scale)
        u, v, w = chart_integrator.nodes()
        count += u.size
        chart_parts, chart_peak = _evaluate(surface, index, u, v, w, integrand, region, base, threads)
        parts.extend(chart_parts)
        peak = max(peak, chart_peak)
        unresolved += chart_integrator.unresolved
        area_error += chart_integrator.area_error

    stacked = np.concatenate(parts, axis=0)
    value = pairwise_sum(stacked)
    logger.debug("integrated %s over %d nodes (%d charts)", region.kind, count, len(surface.charts))

    warning = None
    error_bound = 0.0
    if unresolved:
        error_bound = area_error * peak
        warning = (
            f"refinement budget exceeded: {unresolved} cut cell(s) unresolved at depth "
            f"{surface.quadrature.max_refine_depth}, clipped-area error {area_error:.3e}"
        )
        logger.warning(warning)
    if np.ndim(value) == 0:
        value = float(value)
    return IntegralEstimate(value=value, error_bound=error_bound, warning=warning, nodes=count)


def _edge_nodes(chart: Chart, edge: str, cells: int, points: int):
    u0, u1, v0, v1 = chart.domain
    x, wx = gauss_rule(points)
    if edge in ("u0", "u1"):
        lo, hi, fixed = v0, v1, (u0 if edge == "u0" else u1)
    else:
        lo, hi, fixed = u0, u1, (v0 if edge == "v0" else v1)
    breaks = np.linspace(lo, hi, cells + 1)
    half = 0.5 * np.diff(breaks)
    t = (0.5 * (breaks[:-1] + breaks[1:]))[:, None] + half[:, None] * x
    w = (half[:, None] * wx).ravel()
    t = t.ravel()
    const = np.full_like(t, fixed)
    if edge in ("u0", "u1"):
        return const, t, w
    return t, const, w


def _boundary_pass(
    surface: ImmersedSurface,
    integrand: BoundaryIntegrand,
    base_point: Optional[AmbientPoint],
    points: int,
) -> np.ndarray:
    form = surface.form
    cells = surface.quadrature.base_cells_per_axis * 4
    parts = []
    for chart in surface.charts:
        for edge in sorted(chart.boundary_edges):
            u, v, w = _edge_nodes(chart, edge, cells, points)
            jet = chart.jet(u, v)
            keep = np.ones(u.size, dtype=bool)
            if base_point is not None:
                keep = _distance(form, base_point.coords, jet.F) >= MIN_NODE_RADIUS
            sample = sample_jet(form, jet.take(keep), base_point)
            along, across, sign = (
                (sample.F_v, sample.F_u, 1.0 if edge == "u1" else -1.0)
                if edge in ("u0", "u1")
                else (sample.F_u, sample.F_v, 1.0 if edge == "v1" else -1.0)
            )
            speed = np.sqrt(form.inner(along, along))
            tangent = along / speed[:, None]
            eta = across - form.inner(across, tangent)[:, None] * tangent
            eta = sign * eta / np.sqrt(form.inner(eta, eta))[:, None]
            values = np.asarray(integrand(sample, eta), dtype=float)
            line = speed * w[keep]
            parts.append(values * (line if values.ndim == 1 else line[:, None]))
    return pairwise_sum(np.concatenate(parts, axis=0))


def boundary_integral(
    surface: ImmersedSurface, integrand: BoundaryIntegrand, base_point: Optional[AmbientPoint] = None
) -> IntegralEstimate:
    """Integrate integrand(sample, eta) along the boundary edges, eta the outward conormal."""
    if not surface.has_boundary:
        raise EmptyBoundaryError("the surface has no boundary")
    p = surface.quadrature.gauss_points_per_cell_axis
    value = _boundary_pass(surface, integrand, base_point, p)
    coarse = _boundary_pass(surface, integrand, base_point, p - 1)
    error_bound = float(np.max(np.abs(np.asarray(value) - np.asarray(coarse))))
    if np.ndim(value) == 0:
        value = float(value)
    return IntegralEstimate(value=value, error_bound=error_bound, nodes=0)
