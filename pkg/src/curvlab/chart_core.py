"""Uniform chart grids, sampled differential forms, and finite-difference
exterior calculus.

Everything downstream computes on these objects: a ``ChartGrid`` is a uniform
tensor lattice over a rectangular chart, a ``FormField`` stores one coefficient
array per increasing multi-index, and a ``MapField`` stores a vector-valued
sample.  Derivatives use centered 4th-order stencils where the full stencil
fits and 2nd-order fallbacks near the chart edge, so accuracy claims are made
on interior nodes only.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "ChartGrid",
    "FormField",
    "MapField",
    "increasing_multi_indices",
    "multi_index_position",
    "partial_derivative",
    "exterior_derivative",
    "wedge",
    "integrate_top_form",
    "interpolate",
    "interpolate_nodal",
    "EmptyRegionWarning",
]


class EmptyRegionWarning(UserWarning):
    """Raised (as a warning) when an integration region contains no full cell."""


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChartGrid:
    """Uniform rectangular node lattice over a chart in R^n.

    Parameters
    ----------
    origin : (n,) array-like
        Chart coordinates of node (0, ..., 0).
    spacing : float
        Node spacing h, identical along every axis.
    shape : (n,) ints
        Node count per axis; every entry must be >= 5 so that centered
        4th-order stencils fit somewhere.
    """

    origin: tuple
    spacing: float
    shape: tuple

    def __init__(self, origin, spacing, shape):
        origin = tuple(float(v) for v in np.atleast_1d(origin))
        shape = tuple(int(v) for v in np.atleast_1d(shape))
        if len(origin) != len(shape):
            raise ValueError("origin and shape must have the same length")
        if not shape:
            raise ValueError("grid must have dimension >= 1")
        if any(s < 5 for s in shape):
            raise ValueError("every axis needs >= 5 nodes for the stencils")
        if not spacing > 0:
            raise ValueError("spacing must be positive")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", float(spacing))
        object.__setattr__(self, "shape", shape)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    def axis_coordinates(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing * np.arange(self.shape[axis])

    def coordinate_arrays(self):
        """Meshgrid ('ij') of node coordinates, one array per axis."""
        axes = [self.axis_coordinates(a) for a in range(self.dim)]
        return np.meshgrid(*axes, indexing="ij")

    @property
    def interior_mask(self) -> np.ndarray:
        """True on nodes at least two layers away from every chart edge."""
        return self.eroded_mask(2)

    def eroded_mask(self, layers: int) -> np.ndarray:
        """True on nodes at least ``layers`` nodes away from every edge."""
        mask = np.ones(self.shape, dtype=bool)
        for a in range(self.dim):
            idx = np.arange(self.shape[a])
            ok = (idx >= layers) & (idx < self.shape[a] - layers)
            mask &= ok.reshape([-1 if i == a else 1 for i in range(self.dim)])
        return mask

    def bounding_box(self):
        lo = np.asarray(self.origin)
        hi = lo + self.spacing * (np.asarray(self.shape) - 1)
        return lo, hi

    def subbox_slices(self, lo, hi, tol: float = 1e-9):
        """Node-index slices of the sub-box [lo, hi]; endpoints must sit on nodes."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        slices = []
        for a in range(self.dim):
            t0 = (lo[a] - self.origin[a]) / self.spacing
            t1 = (hi[a] - self.origin[a]) / self.spacing
            i0, i1 = int(round(t0)), int(round(t1))
            if abs(t0 - i0) > tol or abs(t1 - i1) > tol:
                raise ValueError("sub-box endpoints must coincide with grid nodes")
            if not (0 <= i0 <= i1 < self.shape[a]):
                raise ValueError("sub-box exceeds the chart")
            slices.append(slice(i0, i1 + 1))
        return tuple(slices)


# ---------------------------------------------------------------------------
# multi-index bookkeeping
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def increasing_multi_indices(n: int, k: int):
    """All increasing multi-indices (i1 < ... < ik) in lexicographic order."""
    return tuple(itertools.combinations(range(n), k))


@lru_cache(maxsize=None)
def multi_index_position(n: int, k: int):
    return {idx: pos for pos, idx in enumerate(increasing_multi_indices(n, k))}


@lru_cache(maxsize=None)
def _wedge_table(n: int, p: int, q: int):
    """(ia, ib, iout, sign) quadruples realizing the shuffle product."""
    table = []
    pos_out = multi_index_position(n, p + q)
    for ia, I in enumerate(increasing_multi_indices(n, p)):
        set_i = set(I)
        for ib, J in enumerate(increasing_multi_indices(n, q)):
            if set_i & set(J):
                continue
            merged = tuple(sorted(I + J))
            # parity of the shuffle: inversions between the two sorted blocks
            inversions = sum(1 for i in I for j in J if j < i)
            sign = -1.0 if inversions % 2 else 1.0
            table.append((ia, ib, pos_out[merged], sign))
    return tuple(table)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

@dataclass
class FormField:
    """Sampled differential k-form: one coefficient array per increasing
    multi-index, laid out as ``coeffs[comp, *grid.shape]``."""

    grid: ChartGrid
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        n = self.grid.dim
        if not 0 <= self.degree <= n:
            raise ValueError("form degree must lie in [0, n]")
        expected = math.comb(n, self.degree)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (expected,) + self.grid.shape:
            raise ValueError(
                f"coefficients must have shape {(expected,) + self.grid.shape}, "
                f"got {self.coeffs.shape}"
            )

    @classmethod
    def zeros(cls, grid: ChartGrid, degree: int) -> "FormField":
        n_comp = math.comb(grid.dim, degree)
        return cls(grid, degree, np.zeros((n_comp,) + grid.shape))

    @classmethod
    def from_components(cls, grid: ChartGrid, degree: int, components: dict) -> "FormField":
        """Build a form from a {multi-index tuple: nodal array} mapping."""
        out = cls.zeros(grid, degree)
        pos = multi_index_position(grid.dim, degree)
        for idx, arr in components.items():
            out.coeffs[pos[tuple(idx)]] = arr
        return out

    def component(self, idx) -> np.ndarray:
        return self.coeffs[multi_index_position(self.grid.dim, self.degree)[tuple(idx)]]

    def copy(self) -> "FormField":
        return FormField(self.grid, self.degree, self.coeffs.copy())

    def scaled(self, factor: float) -> "FormField":
        return FormField(self.grid, self.degree, factor * self.coeffs)

    def __add__(self, other: "FormField") -> "FormField":
        self._check_compatible(other)
        return FormField(self.grid, self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other: "FormField") -> "FormField":
        self._check_compatible(other)
        return FormField(self.grid, self.degree, self.coeffs - other.coeffs)

    def _check_compatible(self, other: "FormField"):
        if other.grid is not self.grid and other.grid != self.grid:
            raise ValueError("fields live on different grids")
        if other.degree != self.degree:
            raise ValueError("fields have different degrees")

    def max_abs(self, mask: np.ndarray | None = None) -> float:
        if mask is None:
            return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0
        sub = np.abs(self.coeffs[:, mask])
        return float(sub.max()) if sub.size else 0.0


@dataclass
class MapField:
    """Sampled map into R^m, laid out as ``values[comp, *grid.shape]``."""

    grid: ChartGrid
    target_dim: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.target_dim,) + self.grid.shape:
            raise ValueError(
                f"values must have shape {(self.target_dim,) + self.grid.shape}, "
                f"got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("map values must be finite at every node")

    @classmethod
    def from_function(cls, grid: ChartGrid, target_dim: int, func) -> "MapField":
        """Sample ``func(*coords) -> (target_dim, ...) array`` on the grid."""
        coords = grid.coordinate_arrays()
        vals = np.asarray(func(*coords), dtype=float)
        if vals.shape != (target_dim,) + grid.shape:
            raise ValueError("fixture function returned wrong shape")
        return cls(grid, target_dim, vals)

    def copy(self) -> "MapField":
        return MapField(self.grid, self.target_dim, self.values.copy())


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def _diff_axis(arr: np.ndarray, axis: int, h: float) -> np.ndarray:
    a = np.moveaxis(arr, axis, 0)
    n = a.shape[0]
    if n < 5:
        raise ValueError("axis too short for the stencil set")
    out = np.empty_like(a)
    out[2:n - 2] = (-a[4:n] + 8.0 * a[3:n - 1] - 8.0 * a[1:n - 3] + a[0:n - 4]) / (12.0 * h)
    out[1] = (a[2] - a[0]) / (2.0 * h)
    out[n - 2] = (a[n - 1] - a[n - 3]) / (2.0 * h)
    out[0] = (-3.0 * a[0] + 4.0 * a[1] - a[2]) / (2.0 * h)
    out[n - 1] = (3.0 * a[n - 1] - 4.0 * a[n - 2] + a[n - 3]) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def _grid_axis_derivative(values: np.ndarray, grid: ChartGrid, grid_axis: int) -> np.ndarray:
    """Derivative along grid axis ``grid_axis`` of an array whose trailing
    axes are the grid axes (leading axes are components)."""
    offset = values.ndim - grid.dim
    return _diff_axis(values, offset + grid_axis, grid.spacing)


def partial_derivative(values, grid_or_spacing, axis: int) -> np.ndarray:
    """Differentiate nodal data along a grid axis.

    Centered 4th-order stencils where the radius-2 stencil fits, centered
    2nd-order one layer from the edge, one-sided 2nd-order on the edge.
    ``grid_or_spacing`` may be a ChartGrid (trailing axes of ``values`` are
    the grid axes) or a plain spacing for arrays shaped exactly like the grid.
    """
    if isinstance(grid_or_spacing, ChartGrid):
        return _grid_axis_derivative(values, grid_or_spacing, axis)
    return _diff_axis(np.asarray(values, dtype=float), axis, float(grid_or_spacing))


def map_jacobian(y: MapField) -> np.ndarray:
    """Nodal Jacobian D y with layout ``jac[comp, axis, *shape]``."""
    n = y.grid.dim
    jac = np.empty((y.target_dim, n) + y.grid.shape)
    for a in range(n):
        jac[:, a] = _grid_axis_derivative(y.values, y.grid, a)
    return jac


# ---------------------------------------------------------------------------
# exterior calculus
# ---------------------------------------------------------------------------

def exterior_derivative(f: FormField) -> FormField:
    """Discrete exterior derivative d f of a k-form (k < n)."""
    n = f.grid.dim
    k = f.degree
    if k >= n:
        raise ValueError("top-degree form has no exterior derivative")
    out = FormField.zeros(f.grid, k + 1)
    pos_out = multi_index_position(n, k + 1)
    for ci, I in enumerate(increasing_multi_indices(n, k)):
        set_i = set(I)
        for j in range(n):
            if j in set_i:
                continue
            insert_at = sum(1 for i in I if i < j)
            sign = -1.0 if insert_at % 2 else 1.0
            target = pos_out[tuple(sorted(I + (j,)))]
            out.coeffs[target] += sign * _grid_axis_derivative(f.coeffs[ci], f.grid, j)
    return out


def wedge(a: FormField, b: FormField) -> FormField:
    """Pointwise wedge product with shuffle signs; graded-commutative."""
    if a.grid is not b.grid and a.grid != b.grid:
        raise ValueError("wedge factors live on different grids")
    n = a.grid.dim
    if a.degree + b.degree > n:
        raise ValueError("wedge degree exceeds the chart dimension")
    out = FormField.zeros(a.grid, a.degree + b.degree)
    for ia, ib, iout, sign in _wedge_table(n, a.degree, b.degree):
        out.coeffs[iout] += sign * (a.coeffs[ia] * b.coeffs[ib])
    return out


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def _gregory_weights(n_nodes: int) -> np.ndarray:
    """Endpoint-corrected trapezoid weights (4th order for >= 8 nodes)."""
    w = np.ones(n_nodes)
    if n_nodes >= 8:
        w[[0, -1]] = 3.0 / 8.0
        w[[1, -2]] = 7.0 / 6.0
        w[[2, -3]] = 23.0 / 24.0
    else:
        w[[0, -1]] = 0.5
    return w


def integrate_top_form(f: FormField, region=None) -> float:
    """Integrate a top-degree form over the chart, a node sub-box, or a node mask.

    Full boxes and sub-boxes use endpoint-corrected trapezoid weights per
    axis; a boolean node mask is integrated with the cell-mean rule over
    cells whose 2^n corners all lie in the mask.  Exact for constants on
    full boxes.  An empty region integrates to 0 with a warning.
    """
    grid = f.grid
    n = grid.dim
    if f.degree != n:
        raise ValueError("only top-degree forms can be integrated")
    vals = f.coeffs[0]
    h = grid.spacing

    if region is None:
        region = tuple(slice(0, s) for s in grid.shape)

    if isinstance(region, tuple) and all(isinstance(s, slice) for s in region):
        sub = vals[region]
        if any(s < 2 for s in sub.shape):
            warnings.warn("integration region has no full cell", EmptyRegionWarning)
            return 0.0
        acc = sub
        for a in range(n):
            w = _gregory_weights(sub.shape[a]).reshape(
                [-1 if i == a else 1 for i in range(n)]
            )
            acc = acc * w
        return float(np.sum(acc) * h**n)

    mask = np.asarray(region)
    if mask.dtype != bool or mask.shape != grid.shape:
        raise ValueError("region must be slices or a boolean node mask")
    cell_mask = np.ones(tuple(s - 1 for s in grid.shape), dtype=bool)
    corner_sum = np.zeros_like(cell_mask, dtype=float)
    for offsets in itertools.product((0, 1), repeat=n):
        sl = tuple(slice(o, o + s - 1) for o, s in zip(offsets, grid.shape))
        cell_mask &= mask[sl]
        corner_sum = corner_sum + vals[sl]
    if not cell_mask.any():
        warnings.warn("integration region has no full cell", EmptyRegionWarning)
        return 0.0
    return float(np.sum(corner_sum[cell_mask]) * h**n / 2**n)


# ---------------------------------------------------------------------------
# interpolation
# ---------------------------------------------------------------------------

def interpolate_nodal(arr: np.ndarray, grid: ChartGrid, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of ``arr[comp, *grid.shape]`` at chart points.

    ``points`` has shape (q, n); the result has shape (q, comp).  Queries
    outside the grid bounding box raise.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = grid.dim
    if pts.shape[1] != n:
        raise ValueError("query points have wrong dimension")
    t = (pts - np.asarray(grid.origin)) / grid.spacing
    upper = np.asarray(grid.shape) - 1
    tol = 1e-9
    if np.any(t < -tol) or np.any(t > upper + tol):
        raise ValueError("query outside chart")
    t = np.clip(t, 0.0, upper)
    base = np.minimum(t.astype(int), upper - 1)
    frac = t - base

    n_comp = arr.shape[0]
    out = np.zeros((pts.shape[0], n_comp))
    flat = arr.reshape(n_comp, -1)
    strides = np.cumprod((grid.shape + (1,))[::-1])[::-1][1:]
    for offsets in itertools.product((0, 1), repeat=n):
        idx = base + np.asarray(offsets)
        w = np.ones(pts.shape[0])
        for a in range(n):
            w = w * (frac[:, a] if offsets[a] else 1.0 - frac[:, a])
        lin = idx @ strides
        out += w[:, None] * flat[:, lin].T
    return out


def interpolate(f: MapField, x) -> np.ndarray:
    """Multilinear interpolation of a map field; reproduces node values."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    res = interpolate_nodal(f.values, f.grid, x)
    return res[0] if single else res
