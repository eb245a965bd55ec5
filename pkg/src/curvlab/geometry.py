"""Moving-frame geometry on a chart: induced metrics, orthonormal frames,
connection and curvature forms, the Pfaffian top form, and Gauss-map
pullbacks of the sphere volume.

Conventions (fixed once, used everywhere):

* frames come from Gram-Schmidt on (e_1, ..., e_n) in that order, which for a
  positive-definite metric equals the inverse transpose of its Cholesky
  factor -- deterministic and continuous in the metric;
* ``omega[i][j] = theta^i(nabla X_j)``, stored antisymmetrically, so the first
  structural equation reads ``d theta^i = sum_j theta^j ^ omega^i_j``;
* ``Omega^i_j = d omega^i_j + sum_k omega^i_k ^ omega^k_j``;
* the Pfaffian carries the prefactor 1/(n (n/2)!) and the permutation sign,
  which for n in {2, 4} agrees with the classical normalization and makes the
  surface Pfaffian equal Gauss curvature times the area form.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .chart_core import (
    ChartGrid,
    FormField,
    MapField,
    exterior_derivative,
    map_jacobian,
    partial_derivative,
    wedge,
)

__all__ = [
    "MetricField",
    "FrameBundle",
    "AntisymmetricFormMatrix",
    "metric_from_immersion",
    "gram_schmidt_frame",
    "connection_forms",
    "structural_residual",
    "curvature_forms",
    "pfaffian",
    "gauss_map",
    "sphere_pullback",
    "frame_pipeline",
    "permutation_sign",
]

DEFINITENESS_FLOOR = 1e-10


def permutation_sign(perm) -> int:
    """Sign of a permutation given as a tuple of distinct integers."""
    inv = 0
    p = tuple(perm)
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                inv += 1
    return -1 if inv % 2 else 1


# ---------------------------------------------------------------------------
# metric
# ---------------------------------------------------------------------------

def _triu_pairs(n: int):
    return [(i, j) for i in range(n) for j in range(i, n)]


@dataclass
class MetricField:
    """Symmetric positive-definite metric sample; upper triangle stored."""

    grid: ChartGrid
    tri: np.ndarray  # (n(n+1)/2, *shape), row-major upper triangle
    definiteness_floor: float = DEFINITENESS_FLOOR

    def __post_init__(self):
        n = self.grid.dim
        self.tri = np.asarray(self.tri, dtype=float)
        expected = (n * (n + 1) // 2,) + self.grid.shape
        if self.tri.shape != expected:
            raise ValueError(f"metric storage must have shape {expected}")

    @classmethod
    def from_matrices(cls, grid: ChartGrid, mats: np.ndarray,
                      definiteness_floor: float = DEFINITENESS_FLOOR,
                      validate: bool = True) -> "MetricField":
        """Build from ``mats[*shape, n, n]``; off-diagonal parts are averaged."""
        n = grid.dim
        sym = 0.5 * (mats + np.swapaxes(mats, -1, -2))
        tri = np.stack([sym[..., i, j] for i, j in _triu_pairs(n)])
        out = cls(grid, tri, definiteness_floor)
        if validate:
            out.validate_definiteness()
        return out

    def matrices(self) -> np.ndarray:
        """Full symmetric matrices, shape (*shape, n, n)."""
        n = self.grid.dim
        out = np.empty(self.grid.shape + (n, n))
        for k, (i, j) in enumerate(_triu_pairs(n)):
            out[..., i, j] = self.tri[k]
            out[..., j, i] = self.tri[k]
        return out

    def component(self, i: int, j: int) -> np.ndarray:
        n = self.grid.dim
        if i > j:
            i, j = j, i
        return self.tri[_triu_pairs(n).index((i, j))]

    def validate_definiteness(self):
        eigs = np.linalg.eigvalsh(self.matrices())
        smallest = float(eigs[..., 0].min())
        if smallest <= self.definiteness_floor:
            raise ValueError(
                f"metric is not positive definite: smallest eigenvalue {smallest:g}"
            )

    def smallest_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrices())[..., 0].min())


def metric_from_immersion(y: MapField, definiteness_floor: float = DEFINITENESS_FLOOR) -> MetricField:
    """Induced metric Dy^T Dy of an immersion into R^(n+1)."""
    grid = y.grid
    n = grid.dim
    if y.target_dim != n + 1:
        raise ValueError("immersion must map into R^(n+1)")
    jac = map_jacobian(y)  # (n+1, n, *shape)
    gram = np.einsum("ca...,cb...->...ab", jac, jac)
    # immersion check on interior nodes: smallest singular value of Dy
    interior = grid.interior_mask
    sigma_min_sq = np.linalg.eigvalsh(gram[interior])[..., 0]
    if sigma_min_sq.size and float(sigma_min_sq.min()) < definiteness_floor**2:
        raise ValueError("not an immersion at node: Jacobian is rank deficient")
    return MetricField.from_matrices(grid, gram, definiteness_floor, validate=False)


# ---------------------------------------------------------------------------
# frame bundle
# ---------------------------------------------------------------------------

class AntisymmetricFormMatrix:
    """Antisymmetric matrix of forms; only i < j entries are stored."""

    def __init__(self, grid: ChartGrid, degree: int, upper: dict):
        self.grid = grid
        self.degree = degree
        self._upper = dict(upper)

    @classmethod
    def zeros(cls, grid: ChartGrid, n: int, degree: int) -> "AntisymmetricFormMatrix":
        upper = {(i, j): FormField.zeros(grid, degree)
                 for i in range(n) for j in range(i + 1, n)}
        return cls(grid, degree, upper)

    def entry(self, i: int, j: int) -> FormField:
        if i == j:
            return FormField.zeros(self.grid, self.degree)
        if i < j:
            return self._upper[(i, j)]
        return self._upper[(j, i)].scaled(-1.0)

    def set_entry(self, i: int, j: int, value: FormField):
        if i >= j:
            raise ValueError("only upper-triangle entries are stored")
        self._upper[(i, j)] = value

    def upper_items(self):
        return sorted(self._upper.items())

    def max_abs(self, mask=None) -> float:
        vals = [f.max_abs(mask) for _, f in self.upper_items()]
        return max(vals) if vals else 0.0


@dataclass
class FrameBundle:
    """Orthonormal frame data, populated in stages frame -> connection -> curvature."""

    grid: ChartGrid
    frame: np.ndarray               # frame[i] = components of X_i, (n, n, *shape)
    coframe: list                   # n one-form FormFields theta^i
    frame_tol: float = 1e-10
    connection: AntisymmetricFormMatrix | None = None
    curvature: AntisymmetricFormMatrix | None = None
    metric: MetricField | None = None
    frame_order: tuple | None = None

    @property
    def dim(self) -> int:
        return self.grid.dim

    def coframe_matrix(self) -> np.ndarray:
        """theta[i, a] = theta^i(e_a), shape (n, n, *shape)."""
        n = self.dim
        out = np.empty((n, n) + self.grid.shape)
        for i in range(n):
            out[i] = self.coframe[i].coeffs
        return out

    def orthonormality_defect(self, g: MetricField) -> float:
        """max over nodes of |g(X_i, X_j) - delta_ij|."""
        mats = g.matrices()
        X = np.moveaxis(self.frame, (0, 1), (-1, -2))  # (*shape, comp, frame)
        gram = np.einsum("...ai,...ab,...bj->...ij", X, mats, X)
        gram -= np.eye(self.dim)
        return float(np.abs(gram).max())

    def duality_defect(self) -> float:
        """max over nodes of |theta^i(X_j) - delta^i_j|."""
        theta = self.coframe_matrix()
        pairing = np.einsum("ia...,ja...->...ij", theta, self.frame)
        pairing -= np.eye(self.dim)
        return float(np.abs(pairing).max())


def gram_schmidt_frame(g: MetricField, order=None, frame_tol: float = 1e-10) -> FrameBundle:
    """Orthonormalize (e_1, ..., e_n) against g; returns frame and coframe.

    ``order`` optionally permutes the orthonormalization order of the
    coordinate axes (used to probe frame independence); the frame is labeled
    in orthonormalization order either way.
    """
    n = g.grid.dim
    if order is None:
        order = tuple(range(n))
    order = tuple(order)
    if sorted(order) != list(range(n)):
        raise ValueError("order must be a permutation of the axes")
    mats = g.matrices()
    perm = np.asarray(order)
    sub = mats[..., perm[:, None], perm[None, :]]
    try:
        chol = np.linalg.cholesky(sub)
    except np.linalg.LinAlgError as exc:
        raise ValueError("metric is not positive definite") from exc
    # Gram-Schmidt in the given order == inverse transpose of the Cholesky factor
    frame_perm = np.linalg.inv(np.swapaxes(chol, -1, -2))  # columns X_i, permuted coords
    theta_perm = np.swapaxes(chol, -1, -2)                 # rows theta^i, permuted coords

    frame = np.zeros((n, n) + g.grid.shape)
    theta = np.zeros((n, n) + g.grid.shape)
    for i in range(n):
        for a_perm in range(n):
            a = order[a_perm]
            frame[i, a] = frame_perm[..., a_perm, i]
            theta[i, a] = theta_perm[..., i, a_perm]
    coframe = [FormField(g.grid, 1, theta[i]) for i in range(n)]
    return FrameBundle(grid=g.grid, frame=frame, coframe=coframe,
                       frame_tol=frame_tol, metric=g, frame_order=order)


def connection_forms(g: MetricField, fb: FrameBundle) -> FrameBundle:
    """Levi-Civita connection one-forms omega^i_j = theta^i(nabla X_j).

    Christoffel symbols come from finite-differenced metric entries; the
    result is antisymmetrized by projection so omega^i_j = -omega^j_i holds
    exactly in storage.
    """
    grid = g.grid
    n = grid.dim
    mats = np.moveaxis(g.matrices(), (-2, -1), (0, 1))  # (n, n, *shape)
    dg = np.empty((n, n, n) + grid.shape)               # dg[l, r, m] = d_l g_rm
    for l in range(n):
        dg[l] = partial_derivative(mats, grid, l)
    ginv = np.moveaxis(np.linalg.inv(g.matrices()), (-2, -1), (0, 1))

    # Gamma^k_{lm} = 1/2 g^{kr} (d_l g_rm + d_m g_rl - d_r g_lm)
    bracket = np.einsum("lrm...->lrm...", dg) + np.einsum("mrl...->lrm...", dg) \
        - np.einsum("rlm...->lrm...", dg)
    gamma = 0.5 * np.einsum("kr...,lrm...->klm...", ginv, bracket)

    dX = np.empty((n, n, n) + grid.shape)               # dX[k, j, a] = d_k X_j^a
    for k in range(n):
        dX[k] = partial_derivative(fb.frame, grid, k)
    # (nabla_k X_j)^a = d_k X_j^a + Gamma^a_{k b} X_j^b
    covd = dX + np.einsum("akb...,jb...->kja...", gamma, fb.frame)

    theta = fb.coframe_matrix()
    omega_raw = np.einsum("ia...,kja...->ijk...", theta, covd)  # omega^i_j(e_k)

    connection = AntisymmetricFormMatrix.zeros(grid, n, 1)
    for i in range(n):
        for j in range(i + 1, n):
            coeffs = 0.5 * (omega_raw[i, j] - omega_raw[j, i])
            connection.set_entry(i, j, FormField(grid, 1, coeffs))
    return FrameBundle(grid=grid, frame=fb.frame, coframe=fb.coframe,
                       frame_tol=fb.frame_tol, connection=connection,
                       metric=fb.metric, frame_order=fb.frame_order)


def structural_residual(fb: FrameBundle) -> float:
    """Max interior defect of the first structural equation.

    Reports ``max_i || d theta^i - sum_j theta^j ^ omega^i_j ||_inf`` over the
    interior mask; the certified error bar for downstream curvature claims.
    """
    if fb.connection is None:
        raise ValueError("connection not populated")
    n = fb.dim
    interior = fb.grid.interior_mask
    worst = 0.0
    for i in range(n):
        res = exterior_derivative(fb.coframe[i])
        for j in range(n):
            res = res - wedge(fb.coframe[j], fb.connection.entry(i, j))
        worst = max(worst, res.max_abs(interior))
    return worst


def curvature_forms(fb: FrameBundle) -> FrameBundle:
    """Curvature two-forms Omega^i_j = d omega^i_j + sum_k omega^i_k ^ omega^k_j."""
    if fb.connection is None:
        raise ValueError("connection not populated")
    grid = fb.grid
    n = fb.dim
    raw = {}
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            om = exterior_derivative(fb.connection.entry(i, j))
            for k in range(n):
                if k == i or k == j:
                    continue  # omega^i_i and omega^j_j vanish
                om = om + wedge(fb.connection.entry(i, k), fb.connection.entry(k, j))
            raw[(i, j)] = om
    curvature = AntisymmetricFormMatrix.zeros(grid, n, 2)
    for i in range(n):
        for j in range(i + 1, n):
            coeffs = 0.5 * (raw[(i, j)].coeffs - raw[(j, i)].coeffs)
            curvature.set_entry(i, j, FormField(grid, 2, coeffs))
    return FrameBundle(grid=grid, frame=fb.frame, coframe=fb.coframe,
                       frame_tol=fb.frame_tol, connection=fb.connection,
                       curvature=curvature, metric=fb.metric,
                       frame_order=fb.frame_order)


def pfaffian(fb: FrameBundle) -> FormField:
    """Pfaffian top form (1/(n (n/2)!)) sum_zeta sgn(zeta)
    Omega^{zeta(1)}_{zeta(2)} ^ ... ^ Omega^{zeta(n-1)}_{zeta(n)}.

    For surfaces this is Gauss curvature times the area form.  Only n in
    {2, 4} has a numerically validated normalization; larger even n warns.
    """
    if fb.curvature is None:
        raise ValueError("curvature not populated")
    n = fb.dim
    if n % 2:
        raise ValueError("Pfaffian requires even dimension")
    if n >= 6:
        warnings.warn("Pfaffian normalization is unvalidated for n >= 6")
    out = FormField.zeros(fb.grid, n)
    zero_flags = {}
    for i in range(n):
        for j in range(i + 1, n):
            zero_flags[(i, j)] = not fb.curvature.entry(i, j).coeffs.any()
    for zeta in itertools.permutations(range(n)):
        pairs = [(zeta[2 * s], zeta[2 * s + 1]) for s in range(n // 2)]
        if any(zero_flags[(min(i, j), max(i, j))] for i, j in pairs):
            continue
        term = fb.curvature.entry(*pairs[0])
        for i, j in pairs[1:]:
            term = wedge(term, fb.curvature.entry(i, j))
        out.coeffs += permutation_sign(zeta) * term.coeffs
    out.coeffs /= n * math.factorial(n // 2)
    return out


def frame_pipeline(g: MetricField, order=None) -> FrameBundle:
    """Convenience: frame -> connection -> curvature in one call."""
    return curvature_forms(connection_forms(g, gram_schmidt_frame(g, order=order)))


# ---------------------------------------------------------------------------
# Gauss map and sphere pullback
# ---------------------------------------------------------------------------

def _generalized_cross(jac: np.ndarray) -> np.ndarray:
    """Vector w with w . v = det([Dy | v]); shape (n+1, *shape)."""
    m, n = jac.shape[0], jac.shape[1]
    if m != n + 1:
        raise ValueError("cross product needs an (n+1) x n Jacobian")
    if n == 2:
        cols = np.moveaxis(jac, (0, 1), (-2, -1))  # (*shape, 3, 2)
        w = np.cross(cols[..., 0], cols[..., 1])
        return np.moveaxis(w, -1, 0)
    shape = jac.shape[2:]
    w = np.empty((m,) + shape)
    mat = np.empty(shape + (m, m))
    mat[..., :, :n] = np.moveaxis(jac, (0, 1), (-2, -1))
    for a in range(m):
        mat[..., :, n] = 0.0
        mat[..., a, n] = 1.0
        w[a] = np.linalg.det(mat)
    return w


def gauss_map(y: MapField, rank_floor: float = DEFINITENESS_FLOOR) -> MapField:
    """Unit normal of a codimension-one immersion, oriented so det(Dy | nu) > 0."""
    n = y.grid.dim
    if y.target_dim != n + 1:
        raise ValueError("Gauss map needs an immersion into R^(n+1)")
    w = _generalized_cross(map_jacobian(y))
    norm = np.sqrt(np.sum(w * w, axis=0))
    if float(norm.min()) < rank_floor:
        raise ValueError("not an immersion at node: Jacobian is rank deficient")
    return MapField(y.grid, n + 1, w / norm)


def sphere_pullback(nu: MapField, unit_tol: float = 1e-6) -> FormField:
    """Pullback of the sphere volume form: det(d_1 nu, ..., d_n nu, nu)."""
    n = nu.grid.dim
    if nu.target_dim != n + 1:
        raise ValueError("sphere pullback needs values in R^(n+1)")
    norms = np.sqrt(np.sum(nu.values**2, axis=0))
    if float(np.abs(norms - 1.0).max()) > unit_tol:
        raise ValueError("map is not unit-length at some node")
    jac = map_jacobian(nu)  # (n+1, n, *shape)
    mat = np.empty(nu.grid.shape + (n + 1, n + 1))
    mat[..., :, :n] = np.moveaxis(jac, (0, 1), (-2, -1))
    mat[..., :, n] = np.moveaxis(nu.values, 0, -1)
    return FormField(nu.grid, n, np.linalg.det(mat)[None])
