"""Exit probabilities and expected exit times from a band, mean-reverting case.

With the standardized variable z = sqrt(2 rho) (x - m) / sigma, the scale
density of the uncontrolled process is e^{z^2/2}, so the side-exit
probabilities are ratios of int e^{w^2/2} dw and the expected exit time is

    q(x) = A1 + B1 int_{z_a}^{z_x} e^{w^2/2} dw
           - (1/rho) int_{z_x}^{z_b} e^{w^2/2} int_w^{z_b} e^{-u^2/2} du dw,

    A1 = (1/rho) int_{z_a}^{z_b} e^{w^2/2} int_w^{z_b} e^{-u^2/2} du dw,
    B1 = -A1 / int_{z_a}^{z_b} e^{w^2/2} dw,

in years.  The growing exponentials are never evaluated raw: e^{w^2/2}
integrals go through the Dawson function with a common scaling exponent,
and the nested integrand collapses to scaled complementary error functions,

    e^{w^2/2} int_w^{z_b} e^{-u^2/2} du
        = sqrt(pi/2) (erfcx(w/sqrt2) - erfcx(z_b/sqrt2) e^{(w^2-z_b^2)/2}),

so only non-positive exponents are exponentiated.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import dawsn, erfcx

from .ou import OuSpec
from .quadrature import adaptive_quad

__all__ = ["ExitProfile", "exit_probabilities", "expected_exit_time",
           "exit_profile", "esq_integral"]

_SQRT2 = math.sqrt(2.0)
_SQRT_HALF_PI = math.sqrt(0.5 * math.pi)


def _esq_scaled(z1: float, z2: float, zref: float) -> float:
    """e^{-zref^2/2} * int_{z1}^{z2} e^{w^2/2} dw via the Dawson function."""
    def term(z):
        return _SQRT2 * dawsn(z / _SQRT2) * math.exp(0.5 * (z * z - zref * zref))
    return term(z2) - term(z1)


def esq_integral(z1: float, z2: float) -> float:
    """int_{z1}^{z2} e^{w^2/2} dw (raw scale; overflows only if e^{z^2/2} does)."""
    return _esq_scaled(z1, z2, 0.0)


def _band_coords(spec: OuSpec, band: tuple[float, float]):
    a, b = band
    if not a < b:
        raise ValueError(f"band must satisfy a < b, got {band}")
    k = spec.kappa
    return a, b, k * (a - spec.m), k * (b - spec.m)


def exit_probabilities(spec: OuSpec, band: tuple[float, float],
                       x: float) -> tuple[float, float]:
    """(P{exit at a}, P{exit at b}) for the uncontrolled process from x."""
    a, b, za, zb = _band_coords(spec, band)
    if not a <= x <= b:
        raise ValueError(f"x={x} outside the band {band}")
    zx = spec.kappa * (x - spec.m)
    zref = max(abs(za), abs(zb))
    total = _esq_scaled(za, zb, zref)
    p_lower = _esq_scaled(zx, zb, zref) / total
    p_lower = min(max(p_lower, 0.0), 1.0)
    return p_lower, 1.0 - p_lower


def _outer_integral(zlo: float, zhi: float, zb: float) -> float:
    """int_{zlo}^{zhi} e^{w^2/2} int_w^{zb} e^{-u^2/2} du dw, stable form."""
    if zhi <= zlo:
        return 0.0
    tail = erfcx(zb / _SQRT2)

    def f(w):
        return _SQRT_HALF_PI * (erfcx(w / _SQRT2)
                                - tail * np.exp(0.5 * (w * w - zb * zb)))

    return adaptive_quad(f, zlo, zhi, abs_tol=1e-13, rel_tol=1e-10).value


def expected_exit_time(spec: OuSpec, band: tuple[float, float],
                       x: float) -> float:
    """E_x[first exit time from (a, b)] in years for the uncontrolled process."""
    a, b, za, zb = _band_coords(spec, band)
    if not a <= x <= b:
        raise ValueError(f"x={x} outside the band {band}")
    zx = spec.kappa * (x - spec.m)
    zref = max(abs(za), abs(zb))
    a1 = _outer_integral(za, zb, zb) / spec.rho
    ratio = _esq_scaled(za, zx, zref) / _esq_scaled(za, zb, zref)
    return a1 * (1.0 - ratio) - _outer_integral(zx, zb, zb) / spec.rho


@dataclass(frozen=True)
class ExitProfile:
    """Gridded exit diagnostics over a band; times in years."""

    band: tuple[float, float]
    grid: np.ndarray
    p_lower: np.ndarray
    p_upper: np.ndarray
    expected_time: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "p_lower", "p_upper", "q_years"])
            for row in zip(self.grid, self.p_lower, self.p_upper,
                           self.expected_time):
                writer.writerow([f"{v:.9g}" for v in row])


def exit_profile(spec: OuSpec, band: tuple[float, float],
                 n_points: int) -> ExitProfile:
    """Evaluate exit probabilities and expected time on a uniform grid."""
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    a, b, _, _ = _band_coords(spec, band)
    grid = np.linspace(a, b, int(n_points))
    pl = np.empty_like(grid)
    pu = np.empty_like(grid)
    q = np.empty_like(grid)
    for i, x in enumerate(grid):
        pl[i], pu[i] = exit_probabilities(spec, band, x)
        q[i] = expected_exit_time(spec, band, x)
    return ExitProfile((a, b), grid, pl, pu, q)
