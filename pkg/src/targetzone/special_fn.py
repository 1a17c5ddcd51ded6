"""Special functions for the mean-reverting closed forms.

The work horse is ``pcf_d``, the parabolic cylinder function D_alpha for
strictly negative order, evaluated from its real integral representation

    D_alpha(x) = e^{-x^2/4} / Gamma(-alpha) * int_0^inf t^{-alpha-1}
                 e^{-t^2/2 - x t} dt,        alpha < 0.

The integral is rescaled by the maximum of its log-integrand before
quadrature, so arguments far into the growing tail (x << 0) do not overflow
intermediate results.
"""

from __future__ import annotations

import math

import numpy as np

from .quadrature import QuadratureError, adaptive_quad

__all__ = ["gamma", "erfc", "pcf_d", "pcf_d_log", "pcf_d_prime"]


def gamma(z: float) -> float:
    """Euler Gamma for z > 0."""
    if not z > 0:
        raise ValueError(f"gamma requires a positive argument, got {z}")
    return math.gamma(z)


def erfc(x: float) -> float:
    """Complementary error function."""
    return math.erfc(x)


def _check_order(alpha: float) -> float:
    beta = -float(alpha)
    if not beta > 0:
        raise ValueError(f"cylinder order must be negative, got alpha={alpha}")
    return beta


def _log_tail_integral(beta: float, x: float) -> float:
    """log of int_0^inf t^{beta-1} e^{-t^2/2 - x t} dt, by scaled quadrature."""
    # stationary point of (beta-1) log t - t^2/2 - x t
    if beta > 1.0:
        t_mode = 0.5 * (-x + math.sqrt(x * x + 4.0 * (beta - 1.0)))
    else:
        t_mode = max(-x, 0.0)  # integrand decreasing in t; mass near max(-x, 0)
    t_ref = max(t_mode, 1e-3)
    log_m = (beta - 1.0) * math.log(t_ref) - 0.5 * t_ref * t_ref - x * t_ref

    def log_f(t):
        return (beta - 1.0) * np.log(t) - 0.5 * t * t - x * t - log_m

    # upper cutoff: walk right until the scaled integrand is negligible
    t_hi = t_ref + 1.0
    while (beta - 1.0) * math.log(t_hi) - 0.5 * t_hi * t_hi - x * t_hi - log_m > -46.0:
        t_hi = 2.0 * t_hi + 1.0

    total = 0.0
    if beta < 3.0:
        # substitute t = u^p with p = 3/beta so t^{beta-1} dt = p u^2 du,
        # killing the endpoint singularity for small beta
        p = 3.0 / beta
        u_split = min(t_ref, t_hi) ** (1.0 / p)

        def head(u):
            t = u ** p
            return p * u * u * np.exp(-0.5 * t * t - x * t - log_m)

        total += adaptive_quad(head, 0.0, u_split, abs_tol=1e-14, rel_tol=1e-12).value
        t_lo = u_split ** p
    else:
        t_lo = 0.0

    if t_hi > t_lo:
        def body(t):
            return np.exp(log_f(t))

        total += adaptive_quad(body, t_lo, min(t_ref, t_hi), abs_tol=1e-14,
                               rel_tol=1e-12).value if t_ref > t_lo else 0.0
        total += adaptive_quad(body, max(t_ref, t_lo), t_hi, abs_tol=1e-14,
                               rel_tol=1e-12).value
    if not total > 0.0:
        raise QuadratureError(f"cylinder integral vanished (beta={beta}, x={x})")
    return math.log(total) + log_m


def pcf_d_log(alpha: float, x: float) -> float:
    """log D_alpha(x) for alpha < 0 (D_alpha is strictly positive)."""
    beta = _check_order(alpha)
    return -0.25 * x * x - math.lgamma(beta) + _log_tail_integral(beta, float(x))


def pcf_d(alpha: float, x: float) -> float:
    """Parabolic cylinder function D_alpha(x), alpha < 0."""
    return math.exp(pcf_d_log(alpha, x))


def pcf_d_prime(alpha: float, x: float) -> float:
    """d/dx D_alpha(x) via D_alpha'(x) = -(x/2) D_alpha(x) + alpha D_{alpha-1}(x).

    The recurrence only involves the order alpha-1 < alpha < 0, so it stays
    inside the negative-order domain for every admissible alpha.
    """
    _check_order(alpha)
    return -0.5 * x * pcf_d(alpha, x) + alpha * pcf_d(alpha - 1.0, x)
