"""Whitney decompositions on the dyadic mesh, box-dimension estimation,
level-set dimension scans, and the Whitney-cube integral of scale families
over regions with rough boundary.

Cube bookkeeping is exact integer dyadic arithmetic: a cube of generation k
with corner l in Z^n is 2^-k (l + (0,1)^n).  A cube is accepted when a
conservative lower bound on dist(Q, boundary) reaches diam Q; children of
undecided cubes recurse, so every accepted cube has a rejected parent and the
classical two-sided comparability diam Q <= dist(Q, dU) <= 4 diam Q holds by
construction.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.spatial import cKDTree

from .chart_core import FormField, exterior_derivative, interpolate_nodal

__all__ = [
    "Region",
    "BoxRegion",
    "DiskRegion",
    "AnnulusRegion",
    "PolygonRegion",
    "SignedDistanceRegion",
    "koch_polygon",
    "koch_snowflake",
    "DyadicCube",
    "WhitneyDecomposition",
    "whitney_decompose",
    "whitney_census_slope",
    "BoxDimensionResult",
    "box_dimension",
    "level_set_boxdim",
    "ScaleFamily",
    "FractalIntegralResult",
    "fractal_integral",
    "write_whitney_report",
]


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------

class Region:
    """Open region given by a membership predicate, boundary distances, and a
    bounding box.  Subclasses provide exact or conservatively-bounded cube
    distances; the generic fallback errs toward rejection."""

    bounding_box: tuple

    def inside(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def point_boundary_distance(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def cube_boundary_distance(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Lower bound on dist(Q, boundary) for closed cubes [lo, hi].

        Default: Lipschitz bound from the center distance; exact in
        subclasses where the geometry allows it.
        """
        lo = np.atleast_2d(lo)
        hi = np.atleast_2d(hi)
        center = 0.5 * (lo + hi)
        half_diam = 0.5 * np.linalg.norm(hi - lo, axis=1)
        return np.maximum(self.point_boundary_distance(center) - half_diam, 0.0)

    def boundary_points(self, resolution: float) -> np.ndarray:
        """Point cloud on the boundary with covering resolution <= resolution."""
        raise NotImplementedError


class BoxRegion(Region):
    """Open axis-aligned box."""

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if np.any(self.hi <= self.lo):
            raise ValueError("box must have positive extent")
        self.bounding_box = (self.lo.copy(), self.hi.copy())

    def inside(self, points):
        p = np.atleast_2d(points)
        return np.all((p > self.lo) & (p < self.hi), axis=1)

    def point_boundary_distance(self, points):
        p = np.atleast_2d(points)
        inside_gap = np.minimum(p - self.lo, self.hi - p)
        d_in = inside_gap.min(axis=1)
        outside = np.maximum(np.maximum(self.lo - p, p - self.hi), 0.0)
        d_out = np.linalg.norm(outside, axis=1)
        return np.where(d_out > 0, d_out, np.abs(d_in))

    def cube_boundary_distance(self, lo, hi):
        lo = np.atleast_2d(lo)
        hi = np.atleast_2d(hi)
        contained = np.all(lo >= self.lo, axis=1) & np.all(hi <= self.hi, axis=1)
        gap = np.minimum(lo - self.lo, self.hi - hi).min(axis=1)
        # cubes not fully inside touch or cross the boundary unless fully outside
        out_gap = np.maximum(np.maximum(self.lo - hi, lo - self.hi), 0.0)
        d_out = np.linalg.norm(out_gap, axis=1)
        return np.where(contained, np.maximum(gap, 0.0), d_out)

    def boundary_points(self, resolution):
        pts = []
        n = self.lo.size
        for axis in range(n):
            for val in (self.lo[axis], self.hi[axis]):
                others = [np.arange(self.lo[a], self.hi[a] + resolution / 2, resolution)
                          for a in range(n) if a != axis]
                mesh = np.meshgrid(*others, indexing="ij") if others else []
                face = np.empty((mesh[0].size if mesh else 1, n))
                face[:, axis] = val
                t = 0
                for a in range(n):
                    if a == axis:
                        continue
                    face[:, a] = mesh[t].ravel()
                    t += 1
                pts.append(face)
        return np.concatenate(pts)


class DiskRegion(Region):
    """Open disk (n = 2)."""

    def __init__(self, center=(0.0, 0.0), radius=1.0):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        r = self.radius
        self.bounding_box = (self.center - r, self.center + r)

    def inside(self, points):
        p = np.atleast_2d(points) - self.center
        return np.einsum("ij,ij->i", p, p) < self.radius**2

    def point_boundary_distance(self, points):
        p = np.atleast_2d(points) - self.center
        return np.abs(np.linalg.norm(p, axis=1) - self.radius)

    def cube_boundary_distance(self, lo, hi):
        lo = np.atleast_2d(lo) - self.center
        hi = np.atleast_2d(hi) - self.center
        nearest = np.clip(0.0, lo, hi)
        rmin = np.linalg.norm(nearest, axis=1)
        farthest = np.where(np.abs(lo) > np.abs(hi), lo, hi)
        rmax = np.linalg.norm(farthest, axis=1)
        out = np.empty(lo.shape[0])
        inside_cube = rmax < self.radius
        outside_cube = rmin > self.radius
        out[inside_cube] = self.radius - rmax[inside_cube]
        out[outside_cube] = rmin[outside_cube] - self.radius
        out[~inside_cube & ~outside_cube] = 0.0
        return out

    def boundary_points(self, resolution):
        count = max(8, int(math.ceil(2 * math.pi * self.radius / resolution)))
        t = np.linspace(0.0, 2 * math.pi, count, endpoint=False)
        return self.center + self.radius * np.stack([np.cos(t), np.sin(t)], axis=1)


class AnnulusRegion(Region):
    """Open annulus (n = 2)."""

    def __init__(self, center=(0.0, 0.0), inner=0.4, outer=1.0):
        if not 0 < inner < outer:
            raise ValueError("need 0 < inner < outer")
        self.inner = DiskRegion(center, inner)
        self.outer = DiskRegion(center, outer)
        self.center = self.outer.center
        self.bounding_box = self.outer.bounding_box

    def inside(self, points):
        return self.outer.inside(points) & ~self.inner.inside(points) \
            & (self.inner.point_boundary_distance(points) > 0)

    def point_boundary_distance(self, points):
        return np.minimum(self.inner.point_boundary_distance(points),
                          self.outer.point_boundary_distance(points))

    def cube_boundary_distance(self, lo, hi):
        return np.minimum(self.inner.cube_boundary_distance(lo, hi),
                          self.outer.cube_boundary_distance(lo, hi))

    def boundary_points(self, resolution):
        return np.concatenate([self.inner.boundary_points(resolution),
                               self.outer.boundary_points(resolution)])


class PolygonRegion(Region):
    """Open simple-polygon interior; exact segment distances via shapely."""

    def __init__(self, vertices):
        self.vertices = np.asarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("polygon vertices must be (V, 2)")
        self.geom = shapely.Polygon(self.vertices)
        if not self.geom.is_valid:
            raise ValueError("polygon is not simple")
        self.boundary_geom = self.geom.boundary
        shapely.prepare(self.geom)
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        self.bounding_box = (lo, hi)

    def inside(self, points):
        p = np.atleast_2d(points)
        return shapely.contains_xy(self.geom, p[:, 0], p[:, 1])

    def point_boundary_distance(self, points):
        p = np.atleast_2d(points)
        return shapely.distance(shapely.points(p), self.boundary_geom)

    def cube_boundary_distance(self, lo, hi):
        lo = np.atleast_2d(lo)
        hi = np.atleast_2d(hi)
        boxes = shapely.box(lo[:, 0], lo[:, 1], hi[:, 0], hi[:, 1])
        return shapely.distance(boxes, self.boundary_geom)

    def boundary_points(self, resolution):
        pts = []
        V = self.vertices
        for a, b in zip(V, np.roll(V, -1, axis=0)):
            length = float(np.linalg.norm(b - a))
            m = max(1, int(math.ceil(length / resolution)))
            t = np.arange(m) / m
            pts.append(a + t[:, None] * (b - a))
        return np.concatenate(pts)


class SignedDistanceRegion(Region):
    """Region from a signed-distance sample on a fine grid (positive inside).

    Distances are conservative Lipschitz bounds from bilinear interpolation,
    so Whitney acceptance errs toward rejection.
    """

    def __init__(self, lo, hi, values: np.ndarray):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.bounding_box = (self.lo.copy(), self.hi.copy())
        shape = np.asarray(self.values.shape)
        self.spacing = (self.hi - self.lo) / (shape - 1)

    def _sample(self, points):
        p = np.atleast_2d(points)
        t = (p - self.lo) / self.spacing
        upper = np.asarray(self.values.shape) - 1
        t = np.clip(t, 0, upper)
        base = np.minimum(t.astype(int), upper - 1)
        frac = t - base
        out = np.zeros(p.shape[0])
        n = p.shape[1]
        strides = np.cumprod((self.values.shape + (1,))[::-1])[::-1][1:]
        flat = self.values.ravel()
        for off in itertools.product((0, 1), repeat=n):
            w = np.ones(p.shape[0])
            for a in range(n):
                w *= frac[:, a] if off[a] else 1.0 - frac[:, a]
            out += w * flat[(base + off) @ strides]
        return out

    def inside(self, points):
        return self._sample(points) > 0

    def point_boundary_distance(self, points):
        slack = float(np.linalg.norm(self.spacing))
        return np.maximum(np.abs(self._sample(points)) - slack, 0.0)


def koch_polygon(generation: int = 5, side: float = 1.0, center=(0.0, 0.0)) -> np.ndarray:
    """Koch snowflake boundary polygon (counterclockwise), built by exact
    self-similar refinement from an equilateral triangle."""
    if generation < 0:
        raise ValueError("generation must be >= 0")
    c = np.asarray(center, dtype=float)
    r = side / math.sqrt(3.0)
    angles = np.array([math.pi / 2, math.pi / 2 + 2 * math.pi / 3, math.pi / 2 + 4 * math.pi / 3])
    pts = c + r * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    for _ in range(generation):
        a = pts
        b = np.roll(pts, -1, axis=0)
        d = b - a
        perp_right = np.stack([d[:, 1], -d[:, 0]], axis=1)
        p1 = a + d / 3.0
        apex = a + d / 2.0 + perp_right * (math.sqrt(3.0) / 6.0)
        p2 = a + 2.0 * d / 3.0
        pts = np.stack([a, p1, apex, p2], axis=1).reshape(-1, 2)
    return pts


def koch_snowflake(generation: int = 5, side: float = 1.0, center=(0.0, 0.0)) -> PolygonRegion:
    return PolygonRegion(koch_polygon(generation, side, center))


# ---------------------------------------------------------------------------
# Whitney decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DyadicCube:
    """2^-k (l + (0,1)^n) with integer generation k and corner l."""

    k: int
    corner: tuple

    @property
    def side(self) -> float:
        return 2.0 ** (-self.k)

    @property
    def diam(self) -> float:
        return self.side * math.sqrt(len(self.corner))

    def bounds(self):
        lo = np.asarray(self.corner, dtype=float) * self.side
        return lo, lo + self.side

    def children(self):
        base = tuple(2 * c for c in self.corner)
        n = len(self.corner)
        for off in itertools.product((0, 1), repeat=n):
            yield DyadicCube(self.k + 1, tuple(b + o for b, o in zip(base, off)))

    def ancestor(self, k: int) -> "DyadicCube":
        if k > self.k:
            raise ValueError("ancestor generation must be coarser")
        shift = self.k - k
        return DyadicCube(k, tuple(c >> shift for c in self.corner))


@dataclass
class WhitneyDecomposition:
    """Accepted Whitney cubes grouped by generation, plus the undecided
    boundary-straddling leaves at the truncation generation."""

    region: Region
    cubes: list
    leftover: list
    k_max: int

    def __post_init__(self):
        self.generations = {}
        for c in self.cubes:
            self.generations[c.k] = self.generations.get(c.k, 0) + 1

    def census(self) -> dict:
        return dict(sorted(self.generations.items()))

    def total_volume(self) -> float:
        n = len(self.cubes[0].corner) if self.cubes else 0
        return float(sum(c.side**n for c in self.cubes))

    def verify_disjoint(self) -> bool:
        """Exact combinatorial disjointness: no cube is a dyadic ancestor of
        another and same-generation corners are distinct."""
        seen = set()
        for c in self.cubes:
            key = (c.k, c.corner)
            if key in seen:
                return False
            seen.add(key)
        k_min = min(c.k for c in self.cubes)
        for c in self.cubes:
            for k in range(k_min, c.k):
                a = c.ancestor(k)
                if (a.k, a.corner) in seen:
                    return False
        return True

    def verify_whitney_property(self, probe_resolution: float | None = None,
                                rel_tol: float = 1e-9):
        """Re-check diam <= dist <= 4 diam cube-by-cube against an
        independent boundary point cloud; returns the fraction satisfied."""
        if not self.cubes:
            return 1.0
        if probe_resolution is None:
            probe_resolution = 2.0 ** (-self.k_max - 3)
        cloud = self.region.boundary_points(probe_resolution)
        tree = cKDTree(cloud)
        ok = 0
        for c in self.cubes:
            lo, hi = c.bounds()
            d = _box_cloud_distance(lo, hi, cloud, tree)
            lower_ok = c.diam <= d + rel_tol * c.diam
            upper_ok = d - probe_resolution <= 4.0 * c.diam + rel_tol * c.diam
            ok += bool(lower_ok and upper_ok)
        return ok / len(self.cubes)


def _box_cloud_distance(lo, hi, cloud, tree: cKDTree) -> float:
    """Exact distance from the box [lo, hi] to the nearest cloud point."""
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    r0 = float(np.linalg.norm(half))
    d_center, _ = tree.query(center)
    cand = tree.query_ball_point(center, d_center + 2.0 * r0 + 1e-12)
    pts = cloud[cand]
    gap = np.maximum(np.abs(pts - center) - half, 0.0)
    return float(np.linalg.norm(gap, axis=1).min())


def whitney_decompose(region: Region, k_max: int) -> WhitneyDecomposition:
    """Standard Whitney algorithm on the dyadic mesh.

    Cubes with a conservative dist(Q, boundary) >= diam Q and centers inside
    the region are accepted; undecided cubes recurse to k_max, where the
    remaining boundary-straddling leaves are returned separately.
    """
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    lo, hi = region.bounding_box
    n = lo.size
    size = float((hi - lo).max())
    k_root = 0
    while 2.0 ** (-k_root) > size:
        k_root += 1
    while 2.0 ** (-k_root) < size / 64.0:
        # keep the root layer within a factor of the region size
        k_root -= 1
    side = 2.0 ** (-k_root)
    lo_idx = np.floor(lo / side).astype(int)
    hi_idx = np.ceil(hi / side).astype(int)
    frontier = [DyadicCube(k_root, tuple(c))
                for c in itertools.product(*[range(lo_idx[a], hi_idx[a]) for a in range(n)])]

    accepted = []
    leftover = []
    for k in range(k_root, k_max + 1):
        if not frontier:
            break
        los = np.stack([c.bounds()[0] for c in frontier])
        his = np.stack([c.bounds()[1] for c in frontier])
        centers = 0.5 * (los + his)
        dist = region.cube_boundary_distance(los, his)
        member = region.inside(centers)
        diam = frontier[0].diam
        next_frontier = []
        for idx, cube in enumerate(frontier):
            if dist[idx] >= diam and k > k_root:
                if member[idx]:
                    accepted.append(cube)
                # else: cube lies wholly outside; drop it
            elif dist[idx] >= diam and k == k_root:
                # a root cube this deep inside has no rejected parent; split it
                next_frontier.extend(cube.children()) if member[idx] else None
            else:
                if k == k_max:
                    leftover.append(cube)
                else:
                    next_frontier.extend(cube.children())
        frontier = next_frontier
    if not accepted:
        raise ValueError("region thinner than resolution: no cube accepted")
    accepted.sort(key=lambda c: (c.k, c.corner))
    leftover.sort(key=lambda c: (c.k, c.corner))
    return WhitneyDecomposition(region=region, cubes=accepted,
                                leftover=leftover, k_max=k_max)


def whitney_census_slope(w: WhitneyDecomposition, k_range) -> float:
    """Least-squares slope of log2 |W_k| against k over the given range."""
    census = w.census()
    ks = [k for k in range(k_range[0], k_range[1] + 1) if census.get(k, 0) > 0]
    if len(ks) < 3:
        raise ValueError("need at least 3 populated generations in the range")
    x = np.asarray(ks, dtype=float)
    ylog = np.log2([census[k] for k in ks])
    slope = float(np.polyfit(x, ylog, 1)[0])
    return slope


# ---------------------------------------------------------------------------
# box dimension
# ---------------------------------------------------------------------------

@dataclass
class BoxDimensionResult:
    dimension: float
    stable: bool
    window: tuple
    epsilons: np.ndarray
    counts: np.ndarray

    def __float__(self):
        return self.dimension


def box_dimension(sample, eps_range, stability_tol: float = 0.05,
                  boundary_resolution: float | None = None) -> BoxDimensionResult:
    """Box-counting dimension estimate of a point sample or a region boundary.

    Counts eps-mesh boxes hit for each eps, then fits log N against log(1/eps)
    over the largest contiguous window whose local slopes vary by less than
    ``stability_tol``; if no such window exists the global fit is returned
    with ``stable=False``.
    """
    eps = np.sort(np.asarray(list(eps_range), dtype=float))[::-1]
    if eps.size < 4:
        raise ValueError("need at least 4 scales")
    if eps[-1] <= 0:
        raise ValueError("scales must be positive")
    span = eps[0] / eps[-1]
    if span < 99.0:
        raise ValueError("scale range must span at least two decades")

    if isinstance(sample, Region):
        if boundary_resolution is None:
            boundary_resolution = eps[-1] / 4.0
        pts = sample.boundary_points(boundary_resolution)
    else:
        pts = np.atleast_2d(np.asarray(sample, dtype=float))
    lo = pts.min(axis=0)

    counts = np.empty(eps.size, dtype=np.int64)
    for i, e in enumerate(eps):
        keys = np.floor((pts - lo) / e).astype(np.int64)
        counts[i] = np.unique(keys, axis=0).shape[0]

    x = np.log(1.0 / eps)
    y = np.log(counts.astype(float))
    local = np.diff(y) / np.diff(x)

    best = None
    for i in range(local.size):
        for j in range(i + 1, local.size):
            seg = local[i : j + 1]
            if seg.max() - seg.min() < stability_tol:
                if best is None or (j - i) > (best[1] - best[0]):
                    best = (i, j)
    if best is None:
        slope = float(np.polyfit(x, y, 1)[0])
        return BoxDimensionResult(slope, False, (0, eps.size - 1), eps, counts)
    i, j = best
    sl = slice(i, j + 2)  # local slopes i..j involve points i..j+1
    slope = float(np.polyfit(x[sl], y[sl], 1)[0])
    return BoxDimensionResult(slope, True, (i, j + 1), eps, counts)


def level_set_boxdim(f, levels, eps_range=None, alpha: float | None = None,
                     min_cells: int = 10):
    """Box dimensions of level sets of a sampled scalar field.

    The level set f = r is extracted as the centers of grid cells where f - r
    changes sign; each extracted sample runs through ``box_dimension``.
    Returns a dict with per-level results and, when ``alpha`` is given, the
    fraction of nonempty levels whose estimate is within n - alpha + 0.1.
    """
    from .chart_core import MapField

    if isinstance(f, MapField):
        if f.target_dim != 1:
            raise ValueError("level sets need a scalar field")
        grid = f.grid
        vals = f.values[0]
    else:
        raise ValueError("f must be a scalar MapField")
    n = grid.dim
    if eps_range is None:
        h = grid.spacing
        top = h * min(grid.shape) / 4.0
        eps_range = np.geomspace(top, max(2.0 * h, top / 128.0), 12)
        if eps_range[0] / eps_range[-1] < 99.0:
            eps_range = np.geomspace(200.0 * h, 2.0 * h, 12)

    corner_min = vals.copy()
    corner_max = vals.copy()
    for off in itertools.product((0, 1), repeat=n):
        sl = tuple(slice(o, o + s - 1) for o, s in zip(off, grid.shape))
        sub = vals[sl]
        if off == (0,) * n:
            corner_min = sub.copy()
            corner_max = sub.copy()
        else:
            corner_min = np.minimum(corner_min, sub)
            corner_max = np.maximum(corner_max, sub)
    axes = [grid.axis_coordinates(a)[:-1] + 0.5 * grid.spacing for a in range(n)]
    centers = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)

    rows = []
    for r in levels:
        hit = ((corner_min < r) & (corner_max > r)).ravel()
        if hit.sum() < min_cells:
            rows.append({"level": float(r), "dimension": float("nan"),
                         "stable": False, "flag": "degenerate"})
            continue
        res = box_dimension(centers[hit], eps_range)
        rows.append({"level": float(r), "dimension": res.dimension,
                     "stable": res.stable, "flag": "ok"})
    report = {"levels": rows}
    if alpha is not None:
        bound = n - alpha + 0.1
        usable = [r for r in rows if r["flag"] == "ok"]
        if usable:
            report["bound"] = bound
            report["fraction_within_bound"] = sum(
                1 for r in usable if r["dimension"] <= bound) / len(usable)
    return report


# ---------------------------------------------------------------------------
# fractal integral of scale families
# ---------------------------------------------------------------------------

@dataclass
class ScaleFamily:
    """Family t -> (n-1)-form field on a fixed grid covering the region,
    standing in for a trace representative; ``description`` records
    provenance (e.g. which mollifier produced it)."""

    evaluator: object
    description: str = ""
    t_min: float = 0.0

    def __call__(self, t: float) -> FormField:
        if t < self.t_min:
            raise ValueError(f"scale family not defined below t = {self.t_min}")
        return self.evaluator(t)

    @classmethod
    def constant(cls, form: FormField, description: str = "constant family") -> "ScaleFamily":
        return cls(evaluator=lambda t: form, description=description)


@dataclass
class FractalIntegralResult:
    value: float
    volume_sum: float
    boundary_sum: float
    remainder: float
    tail_bound: float
    census_slope: float
    t0: float
    t0_sensitivity: float

    def __float__(self):
        return self.value


def _gl_nodes(q: int):
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (x + 1.0), 0.5 * w  # on [0, 1]


def _cube_volume_integral(dm: FormField, lo, hi, q: int = 4) -> float:
    """Tensor Gauss-Legendre integral of a top form over the cube [lo, hi]."""
    n = lo.size
    x, w = _gl_nodes(q)
    axes = [lo[a] + (hi[a] - lo[a]) * x for a in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    vals = interpolate_nodal(dm.coeffs, dm.grid, pts)[:, 0]
    wmesh = np.meshgrid(*([w] * n), indexing="ij")
    wts = np.ones(pts.shape[0])
    for a in range(n):
        wts *= wmesh[a].ravel()
    vol = float(np.prod(hi - lo))
    return float(np.sum(vals * wts) * vol)


def _cube_boundary_integral(form: FormField, lo, hi, q: int = 4) -> float:
    """Integral of an (n-1)-form over the oriented boundary of [lo, hi]."""
    n = lo.size
    x, w = _gl_nodes(q)
    total = 0.0
    for axis in range(n):
        comp = tuple(a for a in range(n) if a != axis)
        # component of the form paired with dx_{comp}; orientation sign
        sign_axis = -1.0 if axis % 2 else 1.0
        others = comp
        axes = [lo[a] + (hi[a] - lo[a]) * x for a in others]
        mesh = np.meshgrid(*axes, indexing="ij") if others else []
        npts = mesh[0].size if others else 1
        pts = np.empty((npts, n))
        t = 0
        for a in others:
            pts[:, a] = mesh[t].ravel()
            t += 1
        wts = np.ones(npts)
        if others:
            wmesh = np.meshgrid(*([w] * len(others)), indexing="ij")
            for t in range(len(others)):
                wts *= wmesh[t].ravel()
        face_area = float(np.prod([hi[a] - lo[a] for a in others])) if others else 1.0
        for side, xval in ((1.0, hi[axis]), (-1.0, lo[axis])):
            pts[:, axis] = xval
            vals = interpolate_nodal(form.coeffs, form.grid, pts)
            comp_idx = list(itertools.combinations(range(n), n - 1)).index(comp)
            total += sign_axis * side * float(np.sum(vals[:, comp_idx] * wts)) * face_area
    return total


def fractal_integral(family: ScaleFamily, w: WhitneyDecomposition,
                     t0: float | None = None, theta_est: float = 0.5,
                     quad_order: int = 4, remainder_subdiv: int = 8,
                     census_fit_range: tuple | None = None) -> FractalIntegralResult:
    """Whitney-cube integral of a scale family: per cube, the volume integral
    of d M(diam Q) plus the boundary correction with the finest representative
    M(t0), plus the finest-scale integral over the uncovered remainder.

    Certification: the census slope d must satisfy d < n - 1 + theta_est or
    the geometric tail diverges and the integral is refused.
    """
    if not w.cubes:
        raise ValueError("empty decomposition")
    n = len(w.cubes[0].corner)
    census = w.census()
    ks = sorted(census)
    if census_fit_range is None:
        census_fit_range = (ks[len(ks) // 2], ks[-1]) if len(ks) >= 6 else (ks[0], ks[-1])
    slope = whitney_census_slope(w, census_fit_range)
    if slope >= n - 1 + theta_est:
        raise ValueError(
            f"integral not certified: census slope {slope:.3f} >= n-1+theta ({n - 1 + theta_est:.3f})")

    diams = sorted({c.diam for c in w.cubes}, reverse=True)
    if t0 is None:
        t0 = max(0.5 * min(diams), family.t_min)
    m_t0 = family(t0)
    glo, ghi = m_t0.grid.bounding_box()

    def check_bounds(lo, hi):
        if np.any(lo < glo - 1e-12) or np.any(hi > ghi + 1e-12):
            raise ValueError("cube outside evaluator grid")

    m_cache = {}
    volume_sum = 0.0
    boundary_sum = 0.0
    boundary_sum_half = 0.0
    per_gen_boundary = {}
    m_t0_half = family(max(0.5 * t0, family.t_min))
    for cube in w.cubes:
        lo, hi = cube.bounds()
        check_bounds(lo, hi)
        t = max(cube.diam, family.t_min)
        if t not in m_cache:
            mt = family(t)
            m_cache[t] = (mt, exterior_derivative(mt))
        mt, dmt = m_cache[t]
        volume_sum += _cube_volume_integral(dmt, lo, hi, quad_order)
        diff = m_t0 - mt
        b = _cube_boundary_integral(diff, lo, hi, quad_order)
        boundary_sum += b
        per_gen_boundary[cube.k] = per_gen_boundary.get(cube.k, 0.0) + abs(b)
        boundary_sum_half += _cube_boundary_integral(m_t0_half - mt, lo, hi, quad_order)

    # finest-scale integral over the uncovered remainder
    remainder = 0.0
    if w.leftover:
        dm0 = exterior_derivative(m_t0)
        sub = remainder_subdiv
        offsets = np.stack([g.ravel() for g in np.meshgrid(
            *([np.arange(sub) + 0.5] * n), indexing="ij")], axis=-1) / sub
        for cube in w.leftover:
            lo, hi = cube.bounds()
            check_bounds(lo, hi)
            pts = lo + offsets * (hi - lo)
            member = w.region.inside(pts)
            if not member.any():
                continue
            vals = interpolate_nodal(dm0.coeffs, dm0.grid, pts)[:, 0]
            cell_vol = float(np.prod((hi - lo) / sub))
            remainder += float(np.sum(vals[member]) * cell_vol)

    # geometric tail bound below the truncation generation, from the census fit
    k_last = ks[-1]
    count_hat = census[k_last]
    rho = 2.0 ** (slope - (n - 1) - theta_est)
    per_cube_scale = per_gen_boundary.get(k_last, 0.0) / max(census[k_last], 1)
    tail = 0.0
    if rho < 1.0:
        tail = per_cube_scale * count_hat * rho / (1.0 - rho)

    value = volume_sum + boundary_sum + remainder
    value_half = volume_sum + boundary_sum_half + remainder
    return FractalIntegralResult(
        value=value,
        volume_sum=volume_sum,
        boundary_sum=boundary_sum,
        remainder=remainder,
        tail_bound=tail,
        census_slope=slope,
        t0=t0,
        t0_sensitivity=abs(value - value_half),
    )


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def write_whitney_report(base_path, w: WhitneyDecomposition, slopes: dict | None = None):
    """Cubes as CSV (generation, corner indices) and census/slopes as JSON."""
    csv_path = f"{base_path}.csv"
    json_path = f"{base_path}.json"
    n = len(w.cubes[0].corner) if w.cubes else 0
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k"] + [f"l{a + 1}" for a in range(n)])
        for c in w.cubes:
            writer.writerow([c.k] + list(c.corner))
    payload = {
        "census": {str(k): v for k, v in w.census().items()},
        "k_max": w.k_max,
        "cube_count": len(w.cubes),
        "leftover_count": len(w.leftover),
    }
    if slopes:
        payload["slopes"] = {str(k): float(v) for k, v in slopes.items()}
    with open(json_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return payload
