"""Transgression of the Pfaffian: the (n-1)-forms Phi_i built from connection
and curvature factors, their weighted combination Pi, and the numerical
calibration that pins the overall scale against the Pfaffian.

The raw coefficient table for Pi is

    c_i = (-1)^i / (1*3*...*(2n-2i-1) * i! * 2^(n+i)) / pi^n,   i = 0..n/2-1,

summed over Chern's index range.  Because the published normalizations of
this family disagree with each other beyond a global factor, the default
pipeline estimates a single scale c* by least squares against the Pfaffian
("calibrated" convention); the raw coefficients stay available for audit.
Only n in {2, 4} is accepted.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .chart_core import FormField, exterior_derivative, wedge
from .geometry import FrameBundle, permutation_sign, pfaffian

__all__ = [
    "TransgressionSet",
    "CalibrationResult",
    "phi_form",
    "phi_form_bruteforce",
    "paper_coefficients",
    "gbc_primitive",
    "calibrate_transgression",
    "write_transgression_report",
]

MAX_DIMENSION = 4


def _check_dim(n: int):
    if n % 2:
        raise ValueError("transgression requires even dimension")
    if n > MAX_DIMENSION:
        raise ValueError(f"dimension {n} not supported (max {MAX_DIMENSION})")


@dataclass
class TransgressionSet:
    """Phi_i forms, their combination Pi, and the coefficients used."""

    phis: list
    pi_form: FormField
    coefficients: list
    convention: str
    scale: float = 1.0  # calibrated overall factor (1 for the raw convention)

    def d_pi(self) -> FormField:
        return exterior_derivative(self.pi_form)


def _phi_permutations(n: int):
    """Permutations of (0, ..., n-1) fixing the first slot, with signs."""
    for rest in itertools.permutations(range(1, n)):
        zeta = (0,) + rest
        yield zeta, permutation_sign(zeta)


def phi_form(fb: FrameBundle, i: int) -> FormField:
    """Degree-(n-1) transgression summand with n-2i-1 connection factors and
    i curvature factors, summed with signs over permutations fixing slot 1.

    Terms containing an identically-zero factor are skipped.
    """
    if fb.connection is None or fb.curvature is None:
        raise ValueError("connection and curvature must be populated")
    n = fb.dim
    _check_dim(n)
    if not 0 <= i <= n // 2 - 1:
        raise ValueError(f"phi index must lie in [0, {n // 2 - 1}]")

    omega_zero = {}
    curv_zero = {}
    for a in range(n):
        for b in range(n):
            if a != b:
                omega_zero[(a, b)] = not fb.connection.entry(a, b).coeffs.any()
                curv_zero[(a, b)] = not fb.curvature.entry(a, b).coeffs.any()

    n_conn = n - 2 * i - 1
    out = FormField.zeros(fb.grid, n - 1)
    for zeta, sign in _phi_permutations(n):
        conn_slots = [(0, zeta[t]) for t in range(1, 1 + n_conn)]
        curv_slots = [(zeta[n_conn + 1 + 2 * s], zeta[n_conn + 2 + 2 * s])
                      for s in range(i)]
        if any(omega_zero[s] for s in conn_slots) or any(curv_zero[s] for s in curv_slots):
            continue
        factors = [fb.connection.entry(a, b) for a, b in conn_slots] + \
                  [fb.curvature.entry(a, b) for a, b in curv_slots]
        term = factors[0]
        for f in factors[1:]:
            term = wedge(term, f)
        out.coeffs += sign * term.coeffs
    return out


def phi_form_bruteforce(fb: FrameBundle, i: int) -> FormField:
    """Independent enumerator: explicit permutation list, independent sign
    computation (inversion count), no zero-term skipping.  Test oracle."""
    n = fb.dim
    _check_dim(n)
    n_conn = n - 2 * i - 1
    out = FormField.zeros(fb.grid, n - 1)
    for rest in itertools.permutations(range(2, n + 1)):  # 1-based labels
        zeta = (1,) + rest
        inant = sum(1 for a in range(n) for b in range(a + 1, n) if zeta[a] > zeta[b])
        sign = -1 if inant % 2 else 1
        term = None
        for t in range(1, 1 + n_conn):
            f = fb.connection.entry(0, zeta[t] - 1)
            term = f if term is None else wedge(term, f)
        for s in range(i):
            f = fb.curvature.entry(zeta[n_conn + 1 + 2 * s] - 1, zeta[n_conn + 2 + 2 * s] - 1)
            term = f if term is None else wedge(term, f)
        out.coeffs += sign * term.coeffs
    return out


def paper_coefficients(n: int) -> list:
    """Raw coefficient table c_0, ..., c_{n/2-1} of the Pi combination."""
    _check_dim(n)
    coeffs = []
    for i in range(n // 2):
        odd_product = math.prod(range(1, 2 * n - 2 * i, 2))  # 1*3*...*(2n-2i-1)
        c = (-1) ** i / (odd_product * math.factorial(i) * 2 ** (n + i))
        coeffs.append(c / math.pi**n)
    return coeffs


@dataclass
class CalibrationResult:
    scale: float
    relative_residual: float


def calibrate_transgression(fb: FrameBundle, zero_tol: float = 1e-12) -> CalibrationResult:
    """Least-squares scalar c* minimizing ||c * d Pi_raw - Pf||_2 on interior
    nodes, together with the relative residual after scaling."""
    pf = pfaffian(fb)
    interior = fb.grid.interior_mask
    pf_vec = pf.coeffs[0][interior]
    pf_norm = float(np.linalg.norm(pf_vec))
    if pf_norm < zero_tol * max(1, pf_vec.size) ** 0.5 or not pf_vec.any():
        raise ValueError("degenerate calibration fixture: Pfaffian vanishes")
    raw = gbc_primitive(fb, convention="paper")
    dpi_vec = raw.d_pi().coeffs[0][interior]
    denom = float(dpi_vec @ dpi_vec)
    if denom == 0.0:
        raise ValueError("degenerate calibration fixture: d Pi vanishes")
    scale = float(dpi_vec @ pf_vec) / denom
    residual = float(np.linalg.norm(scale * dpi_vec - pf_vec)) / pf_norm
    return CalibrationResult(scale=scale, relative_residual=residual)


def gbc_primitive(fb: FrameBundle, convention: str = "calibrated") -> TransgressionSet:
    """Assemble Pi = sum_i c_i Phi_i.

    ``convention="paper"`` uses the raw coefficient table; ``"calibrated"``
    rescales the whole combination by the least-squares factor c* so that
    d Pi tracks the Pfaffian.
    """
    n = fb.dim
    _check_dim(n)
    if convention not in ("paper", "calibrated"):
        raise ValueError("convention must be 'paper' or 'calibrated'")
    coeffs = paper_coefficients(n)
    phis = [phi_form(fb, i) for i in range(n // 2)]
    pi_form = FormField.zeros(fb.grid, n - 1)
    for c, phi in zip(coeffs, phis):
        pi_form.coeffs += c * phi.coeffs
    scale = 1.0
    if convention == "calibrated":
        scale = calibrate_transgression(fb).scale
        pi_form = pi_form.scaled(scale)
    return TransgressionSet(phis=phis, pi_form=pi_form, coefficients=coeffs,
                            convention=convention, scale=scale)


def write_transgression_report(path, coefficients, scale, levels):
    """JSON report: raw coefficients, calibrated scale, per-level residuals.

    ``levels`` is a list of dicts with at least ``spacing`` and ``residual``.
    """
    payload = {
        "coefficients": list(map(float, coefficients)),
        "calibrated_scale": float(scale),
        "levels": [
            {str(k): (float(v) if isinstance(v, (int, float, np.floating)) else v)
             for k, v in lev.items()}
            for lev in levels
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return payload
