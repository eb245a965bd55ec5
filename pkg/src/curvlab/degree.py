"""Brouwer degrees of sampled maps into the unit sphere, sphere-cell grids,
image-measure upper estimates, and the weak-convergence experiment.

The degree of a map sampled on a chart region is computed combinatorially:
region cells are cut into simplices (Kuhn triangulation), image simplices are
projected to the gnomonic chart at the target, and the signed count of
simplices covering the chart origin is the degree of the piecewise-geodesic
interpolant.  Counts are integer sums; no curvature data enters.

Targets too close to the image of the region boundary are inadmissible (the
degree is undefined there); the default clearance is deliberately
conservative and can be tightened per scenario when the target set must
exhaust the sphere.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .chart_core import ChartGrid, MapField
from .geometry import gauss_map, permutation_sign

__all__ = [
    "SphereCellGrid",
    "DegreeReport",
    "region_cell_mask",
    "brouwer_degree",
    "degree_field",
    "spherical_image_measure",
    "extrinsic_curvature_bound",
    "weak_convergence_experiment",
    "write_degree_report",
]


def sphere_volume(n: int) -> float:
    """Hausdorff measure of the unit n-sphere."""
    return float(2.0 * math.pi ** ((n + 1) / 2.0) / math.gamma((n + 1) / 2.0))


# ---------------------------------------------------------------------------
# sphere cell grid
# ---------------------------------------------------------------------------

class SphereCellGrid:
    """Quasi-uniform partition of S^n from the 2(n+1) faces of the
    circumscribed cube, each face gridded k x ... x k and projected radially.

    Faces are ordered (axis 0, +), (axis 0, -), (axis 1, +), ...; ties in
    point location go to the lowest face index.  For n = 2 the cell areas are
    exact spherical-quadrilateral solid angles; other n use tensor
    Gauss-Legendre quadrature of the projection Jacobian |x|^-(n+1).
    """

    def __init__(self, n: int, k: int, quad_order: int = 16):
        if n < 1 or k < 1:
            raise ValueError("need sphere dimension >= 1 and k >= 1")
        self.n = n
        self.k = k
        self.cell_count = 2 * (n + 1) * k**n
        self._build(quad_order)

    # face f: axis a = f // 2, sign s = +1 if f even else -1
    def _face_axis_sign(self, f: int):
        return f // 2, (1.0 if f % 2 == 0 else -1.0)

    def _embed(self, f: int, uv: np.ndarray) -> np.ndarray:
        """Map face-plane coordinates (..., n) to ambient (..., n+1)."""
        a, s = self._face_axis_sign(f)
        out = np.empty(uv.shape[:-1] + (self.n + 1,))
        other = [ax for ax in range(self.n + 1) if ax != a]
        out[..., a] = s
        for t, ax in enumerate(other):
            out[..., ax] = uv[..., t]
        return out

    def _build(self, quad_order: int):
        n, k = self.n, self.k
        edges = np.linspace(-1.0, 1.0, k + 1)
        centers_1d = 0.5 * (edges[:-1] + edges[1:])
        grids = np.meshgrid(*([centers_1d] * n), indexing="ij")
        uv_centers = np.stack([g.ravel() for g in grids], axis=-1)  # (k^n, n)

        all_centers = []
        all_areas = []
        all_radii = []
        for f in range(2 * (n + 1)):
            pts = self._embed(f, uv_centers)
            pts /= np.linalg.norm(pts, axis=-1, keepdims=True)
            all_centers.append(pts)
            lo = np.stack([g.ravel() for g in np.meshgrid(*([edges[:-1]] * n), indexing="ij")], axis=-1)
            hi = lo + (edges[1] - edges[0])
            if n == 2:
                areas = self._exact_quad_areas(f, lo, hi)
            else:
                areas = self._quadrature_areas(f, lo, hi, quad_order)
            all_areas.append(areas)
            # max chord from center to any cell corner
            corners = []
            for off in itertools.product((0, 1), repeat=n):
                uv = np.where(np.asarray(off, bool), hi, lo)
                cp = self._embed(f, uv)
                cp /= np.linalg.norm(cp, axis=-1, keepdims=True)
                corners.append(cp)
            chords = [np.linalg.norm(c - p, axis=-1) for c, p in zip(corners, [pts] * 2**n)]
            all_radii.append(np.max(np.stack(chords), axis=0))

        self.centers = np.concatenate(all_centers)          # (C, n+1)
        self.cell_area = np.concatenate(all_areas)          # (C,)
        self.center_corner_chord = np.concatenate(all_radii)
        self.total_area = float(np.sum(self.cell_area))

    def _exact_quad_areas(self, f: int, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        def unit(uv):
            p = self._embed(f, uv)
            return p / np.linalg.norm(p, axis=-1, keepdims=True)

        c00 = unit(lo)
        c10 = unit(np.stack([hi[:, 0], lo[:, 1]], axis=-1))
        c11 = unit(hi)
        c01 = unit(np.stack([lo[:, 0], hi[:, 1]], axis=-1))

        def tri(a, b, c):
            num = np.einsum("ij,ij->i", a, np.cross(b, c))
            den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) \
                + np.einsum("ij,ij->i", c, a)
            return 2.0 * np.arctan2(num, den)

        return np.abs(tri(c00, c10, c11) + tri(c00, c11, c01))

    def _quadrature_areas(self, f, lo, hi, order):
        nodes, weights = np.polynomial.legendre.leggauss(order)
        n = self.n
        areas = np.zeros(lo.shape[0])
        for combo in itertools.product(range(order), repeat=n):
            uv = np.empty_like(lo)
            w = np.ones(lo.shape[0])
            for t in range(n):
                half = 0.5 * (hi[:, t] - lo[:, t])
                uv[:, t] = lo[:, t] + half * (nodes[combo[t]] + 1.0)
                w *= weights[combo[t]] * half
            pts = self._embed(f, uv)
            r = np.linalg.norm(pts, axis=-1)
            areas += w * r ** (-(n + 1))
        return areas

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Cell index of each unit vector; face-edge ties go to the lowest face."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n, k = self.n, self.k
        face_vals = np.empty((pts.shape[0], 2 * (n + 1)))
        for f in range(2 * (n + 1)):
            a, s = self._face_axis_sign(f)
            face_vals[:, f] = s * pts[:, a]
        face = np.argmax(face_vals, axis=1)
        idx = np.empty(pts.shape[0], dtype=np.int64)
        for f in range(2 * (n + 1)):
            sel = face == f
            if not sel.any():
                continue
            a, s = self._face_axis_sign(f)
            denom = s * pts[sel, a]
            other = [ax for ax in range(n + 1) if ax != a]
            local = np.zeros(sel.sum(), dtype=np.int64)
            for t, ax in enumerate(other):
                u = pts[sel, ax] / denom
                cell = np.clip(((u + 1.0) * 0.5 * k).astype(np.int64), 0, k - 1)
                local = local * k + cell
            idx[sel] = f * k**n + local
        return idx

    def center_tree(self) -> cKDTree:
        if not hasattr(self, "_tree"):
            self._tree = cKDTree(self.centers)
        return self._tree


# ---------------------------------------------------------------------------
# region helpers
# ---------------------------------------------------------------------------

def region_cell_mask(grid: ChartGrid, node_mask: np.ndarray | None) -> np.ndarray:
    """Cells of the grid whose 2^n corners all lie in the node mask."""
    if node_mask is None:
        node_mask = np.ones(grid.shape, dtype=bool)
    cell = np.ones(tuple(s - 1 for s in grid.shape), dtype=bool)
    for off in itertools.product((0, 1), repeat=grid.dim):
        sl = tuple(slice(o, o + s - 1) for o, s in zip(off, grid.shape))
        cell &= node_mask[sl]
    return cell


def _boundary_structure(grid: ChartGrid, cell_mask: np.ndarray):
    """Boundary nodes of the cell union and, for n = 2, boundary edges.

    A node is on the boundary when it touches at least one region cell but is
    not surrounded by region cells on all 2^n sides.
    """
    n = grid.dim
    padded = np.pad(cell_mask, 1, constant_values=False)
    touch = np.zeros(grid.shape, dtype=bool)
    surround = np.ones(grid.shape, dtype=bool)
    for off in itertools.product((0, 1), repeat=n):
        sl = tuple(slice(1 - o, 1 - o + s) for o, s in zip(off, grid.shape))
        incident = padded[sl]
        touch |= incident
        surround &= incident
    boundary_nodes = touch & ~surround

    edges = None
    if n == 2:
        edges = []
        pc = np.pad(cell_mask, 1, constant_values=False)
        # vertical faces (normal along axis 0) between cells (i-1, j) and (i, j)
        diff0 = pc[1:, 1:-1] != pc[:-1, 1:-1]
        ii, jj = np.nonzero(diff0)
        for i, j in zip(ii, jj):
            edges.append(((i, j), (i, j + 1)))
        diff1 = pc[1:-1, 1:] != pc[1:-1, :-1]
        ii, jj = np.nonzero(diff1)
        for i, j in zip(ii, jj):
            edges.append(((i, j), (i + 1, j)))
    return boundary_nodes, edges


# ---------------------------------------------------------------------------
# degree engine
# ---------------------------------------------------------------------------

_HEMI_CHORD = math.sqrt(2.0)  # chord length of a quarter turn


def _chord_to_angle(c):
    return 2.0 * np.arcsin(np.clip(np.asarray(c) * 0.5, 0.0, 1.0))


def _tangent_basis(z: np.ndarray) -> np.ndarray:
    """Positively oriented orthonormal basis of the hyperplane z^perp.

    Built from the Householder reflection mapping the last coordinate axis
    onto z; the reflection has determinant -1, so one column is flipped to
    make det[t_1, ..., t_n, z] = +1 (sphere oriented by the outward normal).
    """
    m = z.shape[0]
    e = np.zeros(m)
    e[m - 1] = 1.0
    v = e - z
    nv = np.linalg.norm(v)
    if nv < 1e-12:
        return np.eye(m)[:, : m - 1]
    v /= nv
    H = np.eye(m) - 2.0 * np.outer(v, v)
    T = H[:, : m - 1]
    T[:, 0] = -T[:, 0]
    return T


class _DegreeEngine:
    """Signed simplicial counting for one sampled sphere map on one region."""

    def __init__(self, u: MapField, region_mask, max_subdivisions: int = 12,
                 unit_tol: float = 1e-6):
        grid = u.grid
        n = grid.dim
        if u.target_dim != n + 1:
            raise ValueError("degree needs a map into S^n embedded in R^(n+1)")
        norms = np.sqrt(np.sum(u.values**2, axis=0))
        if float(np.abs(norms - 1.0).max()) > unit_tol:
            raise ValueError("map is not unit-length at some node")
        self.grid = grid
        self.n = n
        self.max_subdivisions = max_subdivisions
        cell_mask = region_cell_mask(grid, region_mask)
        if not cell_mask.any():
            raise ValueError("region contains no full grid cell")
        self.cell_mask = cell_mask

        flat_vals = u.values.reshape(u.target_dim, -1).T  # (N, n+1)
        origins = np.stack(np.nonzero(cell_mask), axis=-1)  # (Cc, n)
        strides = np.cumprod((grid.shape + (1,))[::-1])[::-1][1:]

        vert_ids = []
        orients = []
        for perm in itertools.permutations(range(n)):
            sgn = permutation_sign(perm)
            verts = [origins]
            acc = origins
            for axis in perm:
                step = np.zeros(n, dtype=np.int64)
                step[axis] = 1
                acc = acc + step
                verts.append(acc)
            ids = np.stack([v @ strides for v in verts], axis=1)  # (Cc, n+1)
            vert_ids.append(ids)
            orients.append(np.full(ids.shape[0], sgn, dtype=np.int64))
        self.vert_ids = np.concatenate(vert_ids)      # (S, n+1)
        self.orient = np.concatenate(orients)          # (S,)
        self.verts = flat_vals[self.vert_ids]          # (S, n+1, n+1)

        centro = self.verts.mean(axis=1)
        centro /= np.linalg.norm(centro, axis=-1, keepdims=True)
        self.centroids = centro
        edge_chords = []
        for a in range(n + 1):
            for b in range(a + 1, n + 1):
                edge_chords.append(np.linalg.norm(self.verts[:, a] - self.verts[:, b], axis=-1))
        self.diam_chord = np.max(np.stack(edge_chords), axis=0)  # (S,)
        self.max_diam_chord = float(self.diam_chord.max())
        # chord radius covering the whole simplex from its centroid
        vert_spread = np.linalg.norm(self.verts - centro[:, None, :], axis=-1).max(axis=1)
        self.reach_chord = vert_spread + 1e-12

        bnodes, bedges = _boundary_structure(grid, cell_mask)
        bidx = np.nonzero(bnodes.ravel())[0]
        self.boundary_pts = flat_vals[bidx]
        self._bedge_segments = None
        if bedges is not None:
            seg_a = flat_vals[[np.ravel_multi_index(e[0], grid.shape) for e in bedges]]
            seg_b = flat_vals[[np.ravel_multi_index(e[1], grid.shape) for e in bedges]]
            self._bedge_segments = (seg_a, seg_b)
        self.max_boundary_edge_chord = 0.0
        if self._bedge_segments is not None and len(self._bedge_segments[0]):
            self.max_boundary_edge_chord = float(
                np.linalg.norm(self._bedge_segments[0] - self._bedge_segments[1], axis=-1).max())

        self._centroid_tree = None
        self._boundary_tree = None

    # -- clearance ---------------------------------------------------------

    def boundary_clearance(self, targets: np.ndarray) -> np.ndarray:
        """Chord distance from each target to the piecewise-linear image of
        the region boundary (exact segment distance for n = 2, vertex
        distance minus the longest boundary edge otherwise)."""
        if self.boundary_pts.shape[0] == 0:
            return np.full(targets.shape[0], 2.0)
        if self._boundary_tree is None:
            self._boundary_tree = cKDTree(self.boundary_pts)
        dv, _ = self._boundary_tree.query(targets)
        if self._bedge_segments is None:
            return np.maximum(dv - self.max_boundary_edge_chord, 0.0)
        # exact point-segment distance for targets whose vertex distance is
        # small enough to matter
        a, b = self._bedge_segments
        out = dv.copy()
        near = dv <= 4.0 * self.max_boundary_edge_chord + 1e-12
        if near.any():
            seg_mid = 0.5 * (a + b)
            seg_tree = cKDTree(seg_mid)
            half = 0.5 * float(np.linalg.norm(a - b, axis=-1).max())
            for t in np.nonzero(near)[0]:
                z = targets[t]
                cand = seg_tree.query_ball_point(z, dv[t] + half + 1e-12)
                if not cand:
                    continue
                ca, cb = a[cand], b[cand]
                ab = cb - ca
                denom = np.einsum("ij,ij->i", ab, ab)
                tpar = np.clip(np.einsum("ij,ij->i", z - ca, ab) / np.maximum(denom, 1e-300), 0.0, 1.0)
                proj = ca + tpar[:, None] * ab
                out[t] = min(out[t], float(np.linalg.norm(z - proj, axis=-1).min()))
        return out

    # -- counting ----------------------------------------------------------

    def _count_candidates(self, z: np.ndarray, cand: np.ndarray, bary_tol: float):
        """Signed count over candidate simplices; returns (count, regular)."""
        n = self.n
        count = 0
        regular = True
        if cand.size == 0:
            return 0, True
        verts = self.verts[cand]                        # (C, n+1, m)
        dots = verts @ z                                # (C, n+1)
        good = np.all(dots > 0.0, axis=1)

        if good.any():
            T = _tangent_basis(z)                       # (m, n)
            vg = verts[good]
            dg = dots[good]
            p = (vg @ T) / dg[..., None]                # (C', n+1, n)
            M = np.swapaxes(p[:, 1:, :] - p[:, :1, :], 1, 2)   # (C', n, n) columns
            rhs = -p[:, 0, :]
            det = np.linalg.det(M)
            ok = np.abs(det) > 1e-300
            lam_rest = np.full(rhs.shape, -1.0)
            if ok.any():
                lam_rest[ok] = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
            lam0 = 1.0 - lam_rest.sum(axis=1)
            lam = np.concatenate([lam0[:, None], lam_rest], axis=1)
            lam_min = lam.min(axis=1)
            inside = lam_min > bary_tol
            grazing = np.abs(lam_min) <= bary_tol
            if grazing.any():
                regular = False
            signs = np.where(det > 0, 1, -1)
            count += int(np.sum(signs[inside] * self.orient[cand][good][inside]))

        bad = np.nonzero(~good)[0]
        if bad.size:
            queue = [(verts[b], int(self.orient[cand[b]]), 0) for b in bad]
            while queue:
                w, orient, depth = queue.pop()
                d = w @ z
                if np.all(d > 0.0):
                    T = _tangent_basis(z)
                    p = (w @ T) / d[:, None]
                    M = (p[1:] - p[0]).T
                    det = float(np.linalg.det(M))
                    if abs(det) < 1e-300:
                        regular = False
                        continue
                    lam_rest = np.linalg.solve(M, -p[0])
                    lam = np.concatenate([[1.0 - lam_rest.sum()], lam_rest])
                    if np.abs(lam).min() <= bary_tol:
                        regular = False
                    if lam.min() > bary_tol:
                        count += orient * (1 if det > 0 else -1)
                    continue
                chords = [np.linalg.norm(w[a] - w[b]) for a in range(n + 1) for b in range(a + 1, n + 1)]
                if max(chords) < _HEMI_CHORD:
                    continue  # provably cannot cover z
                if depth >= self.max_subdivisions:
                    regular = False
                    continue
                # split the longest image edge at the normalized midpoint
                pairs = [(a, b) for a in range(n + 1) for b in range(a + 1, n + 1)]
                a, b = pairs[int(np.argmax(chords))]
                mid = w[a] + w[b]
                nm = np.linalg.norm(mid)
                if nm < 1e-12:
                    regular = False
                    continue
                mid /= nm
                for repl in (a, b):
                    child = w.copy()
                    child[repl] = mid
                    queue.append((child, orient, depth + 1))
        return count, regular

    def evaluate(self, targets: np.ndarray, clearance_floor: float | None = None,
                 bary_tol: float = 1e-9, use_tree: bool | None = None):
        """Degrees at targets.

        Returns (degrees, regular, clearance_chord, admissible).  The floor
        is interpreted as a geodesic angle; None means twice the largest
        image-simplex diameter.
        """
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        targets = targets / np.linalg.norm(targets, axis=1, keepdims=True)
        T = targets.shape[0]
        if clearance_floor is None:
            clearance_floor = 2.0 * float(_chord_to_angle(self.max_diam_chord))
        clearance = self.boundary_clearance(targets)
        admissible = _chord_to_angle(clearance) >= clearance_floor

        degrees = np.zeros(T, dtype=np.int64)
        regular = np.ones(T, dtype=bool)

        big = np.nonzero(self.diam_chord >= _HEMI_CHORD)[0]
        if use_tree is None:
            use_tree = T * self.vert_ids.shape[0] > 4_000_000
        if use_tree:
            if self._centroid_tree is None:
                self._centroid_tree = cKDTree(self.centroids)
            radius = float(self.reach_chord.max()) + 1e-9
            neighbor_lists = self._centroid_tree.query_ball_point(targets, radius)
        else:
            neighbor_lists = None

        for t in range(T):
            if not admissible[t]:
                continue
            if neighbor_lists is None:
                cand = np.arange(self.vert_ids.shape[0])
            else:
                cand = np.asarray(sorted(neighbor_lists[t]), dtype=np.int64)
                if big.size:
                    cand = np.unique(np.concatenate([cand, big]))
            deg, reg = self._count_candidates(targets[t], cand, bary_tol)
            degrees[t] = deg
            regular[t] = reg and admissible[t]
        regular &= admissible
        return degrees, regular, clearance, admissible


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def brouwer_degree(u: MapField, region, z, clearance_floor: float | None = None,
                   max_subdivisions: int = 12):
    """Brouwer degree of the sampled map at one target.

    Returns ``(degree, regular_flag)``; raises if the target is within the
    clearance floor of the image of the region boundary.
    """
    engine = _DegreeEngine(u, region, max_subdivisions=max_subdivisions)
    z = np.asarray(z, dtype=float)
    degrees, regular, clearance, admissible = engine.evaluate(
        z[None], clearance_floor=clearance_floor)
    if not admissible[0]:
        raise ValueError("target not admissible: too close to the image of the region boundary")
    return int(degrees[0]), bool(regular[0])


@dataclass
class DegreeReport:
    """Degrees over a target set with regularity diagnostics and integrals."""

    targets: np.ndarray            # (T, n+1) unit vectors
    degrees: np.ndarray            # (T,) ints
    regular_flags: np.ndarray      # (T,) bool
    boundary_clearance: np.ndarray  # (T,) geodesic angles
    admissible: np.ndarray         # (T,) bool
    cell_area: np.ndarray          # (T,)
    integral: float                # sum deg * area over admissible cells
    excluded_area: float           # total area of inadmissible cells
    clearance_floor: float

    def integral_over(self, weights: np.ndarray, mask: np.ndarray | None = None) -> float:
        sel = self.admissible if mask is None else (self.admissible & mask)
        return float(np.sum(weights[sel] * self.degrees[sel] * self.cell_area[sel]))


def degree_field(u: MapField, region, cells: SphereCellGrid,
                 clearance_floor: float | None = None,
                 max_subdivisions: int = 12) -> DegreeReport:
    """Brouwer degree at every sphere-cell center, plus the degree integral
    over admissible cells and the total area of excluded cells."""
    engine = _DegreeEngine(u, region, max_subdivisions=max_subdivisions)
    if clearance_floor is None:
        clearance_floor = 2.0 * float(_chord_to_angle(engine.max_diam_chord))
    degrees, regular, clearance, admissible = engine.evaluate(
        cells.centers, clearance_floor=clearance_floor)
    integral = float(np.sum(degrees[admissible] * cells.cell_area[admissible]))
    excluded = float(np.sum(cells.cell_area[~admissible]))
    return DegreeReport(
        targets=cells.centers,
        degrees=degrees,
        regular_flags=regular,
        boundary_clearance=_chord_to_angle(clearance),
        admissible=admissible,
        cell_area=cells.cell_area,
        integral=integral,
        excluded_area=excluded,
        clearance_floor=float(clearance_floor),
    )


def spherical_image_measure(u: MapField, part, cells: SphereCellGrid) -> float:
    """Upper estimate of H^n(u(E)) for a closed node subset E: total area of
    sphere cells conservatively rasterized by the image simplices of E.

    A cell is counted when its center lies within one cell radius plus one
    simplex reach of some image-simplex centroid, which covers every cell the
    image actually intersects.  Monotone in E and subadditive over unions by
    construction.
    """
    engine = _DegreeEngine(u, part)
    tree = cells.center_tree()
    pad = float(cells.center_corner_chord.max())
    radius = engine.reach_chord + pad + 1e-12
    hits = set()
    lists = tree.query_ball_point(engine.centroids, float(radius.max()))
    for s, lst in enumerate(lists):
        if not lst:
            continue
        d = np.linalg.norm(cells.centers[lst] - engine.centroids[s], axis=-1)
        hits.update(np.asarray(lst)[d <= radius[s]].tolist())
    return float(np.sum(cells.cell_area[sorted(hits)]))


def extrinsic_curvature_bound(u: MapField, parts, cells: SphereCellGrid) -> float:
    """Sum of spherical image measures over pairwise disjoint closed parts."""
    masks = [np.asarray(p, dtype=bool) for p in parts]
    for a in range(len(masks)):
        for b in range(a + 1, len(masks)):
            if np.any(masks[a] & masks[b]):
                raise ValueError("parts must be pairwise disjoint")
    return float(sum(spherical_image_measure(u, m, cells) for m in masks))


# ---------------------------------------------------------------------------
# weak convergence experiment
# ---------------------------------------------------------------------------

def weak_convergence_experiment(y: MapField, scales, phi, cells: SphereCellGrid,
                                kernel=None, region=None,
                                clearance_floor: float | None = None):
    """Pairings integral(phi * deg(nu_eps)) across a mollification schedule.

    Returns a list of rows {scale, pairing, difference}; the difference is
    against the previous (coarser) scale.  Pairings are evaluated over the
    cells admissible at every scale so the sequence is comparable.
    """
    from .mollify import MollifierKernel, mollify_field

    if kernel is None:
        kernel = MollifierKernel.polynomial()
    scales = sorted((float(s) for s in scales), reverse=True)
    grid = y.grid
    margin = int(math.ceil(max(scales) / grid.spacing)) + 2

    sl = tuple(slice(margin, s - margin) for s in grid.shape)
    if any(s.stop - s.start < 8 for s in sl):
        raise ValueError("chart too small for the largest mollification scale")
    sub_origin = [grid.origin[a] + margin * grid.spacing for a in range(grid.dim)]
    sub_shape = [s.stop - s.start for s in sl]
    subgrid = ChartGrid(tuple(sub_origin), grid.spacing, tuple(sub_shape))

    if region is None:
        region_sub = None
    else:
        region_sub = np.asarray(region, dtype=bool)[sl]

    phi_vals = phi(cells.centers) if callable(phi) else np.asarray(phi, dtype=float)

    reports = []
    for eps in scales:
        smoothed = mollify_field(y, kernel, eps)
        sub_vals = smoothed.field.values[(slice(None),) + sl]
        y_eps = MapField(subgrid, y.target_dim, sub_vals)
        nu_eps = gauss_map(y_eps)
        reports.append(degree_field(nu_eps, region_sub, cells,
                                    clearance_floor=clearance_floor))

    common = np.logical_and.reduce([r.admissible for r in reports])
    rows = []
    prev = None
    for eps, rep in zip(scales, reports):
        pairing = float(np.sum(phi_vals[common] * rep.degrees[common] * rep.cell_area[common]))
        rows.append({
            "scale": eps,
            "pairing": pairing,
            "difference": float("nan") if prev is None else abs(pairing - prev),
        })
        prev = pairing
    return rows


# ---------------------------------------------------------------------------
# report output
# ---------------------------------------------------------------------------

def write_degree_report(base_path, report: DegreeReport):
    """CSV of per-target rows plus a JSON summary; returns the summary."""
    csv_path = f"{base_path}.csv"
    json_path = f"{base_path}.json"
    m = report.targets.shape[1]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"z{i + 1}" for i in range(m)]
                        + ["degree", "regular", "clearance"])
        for t in range(report.targets.shape[0]):
            writer.writerow(
                [f"{v:.17g}" for v in report.targets[t]]
                + [int(report.degrees[t]), int(report.regular_flags[t]),
                   f"{report.boundary_clearance[t]:.17g}"])
    summary = {
        "integral": report.integral,
        "excluded_area": report.excluded_area,
        "clearance_floor": report.clearance_floor,
        "admissible_cells": int(report.admissible.sum()),
        "total_cells": int(report.admissible.size),
    }
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
