"""Two-sided free-boundary solver for the optimal intervention band.

The band (a*, b*) solves a coupled pair of integral equations in which the
unknown boundaries enter through weighted integrals of the hat-diffusion
speed density against the hat fundamental solutions.  ``solve_band`` finds
the outer root of the scalar reduction Theta(b) by bracketed Brent search,
recovers a* from the inner root map, pins the middle-region coefficients by
first-derivative smooth fit, and assembles the value function with its flat
extensions.  ``hjb_residual`` audits the resulting function against the
variational inequality it is supposed to solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .diffusion import DiffusionModel, FundamentalPair, resolvent, speed_density

__all__ = [
    "CostModel", "BandSolution", "SolverError", "QuadratureKernels",
    "k1", "k2", "x_star", "y_star", "solve_band", "hjb_residual",
    "HjbReport",
]

BRENT_XTOL = 1e-12
BRENT_MAXITER = 200


class SolverError(RuntimeError):
    """Bracketing or root finding failed; usually an inadmissible cost model."""


def _num_deriv(f: Callable[[float], float], x: float, h: float = 1e-5) -> float:
    h = h * (1.0 + abs(x))
    return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)


@dataclass(frozen=True)
class CostModel:
    """Holding cost h plus state-dependent marginal intervention costs.

    ``c1_hat``/``c2_hat`` are the transforms (L_hat - (r - mu')) c_i; for
    constant costs they reduce to -(r - mu') * c_i.  The sign structure
    (h >= 0, c1 + c2 > 0, c1_hat + c2_hat < 0, single sign changes of
    -c1_hat + h' and c2_hat + h') is what makes the band well posed; it is
    spot-checked on a sample grid at construction.
    """

    h: Callable[[float], float]
    h_prime: Callable[[float], float]
    c1: Callable[[float], float]
    c2: Callable[[float], float]
    c1_hat: Callable[[float], float]
    c2_hat: Callable[[float], float]
    x_tilde_1: float | None = None
    x_tilde_2: float | None = None
    c1_prime: Callable[[float], float] | None = None
    c2_prime: Callable[[float], float] | None = None

    def d_c1(self, x: float) -> float:
        if self.c1_prime is not None:
            return self.c1_prime(x)
        return _num_deriv(self.c1, x)

    def d_c2(self, x: float) -> float:
        if self.c2_prime is not None:
            return self.c2_prime(x)
        return _num_deriv(self.c2, x)

    def validate(self, grid) -> None:
        for x in np.asarray(grid, dtype=float):
            if self.h(x) < 0:
                raise ValueError(f"holding cost must be nonnegative, h({x}) < 0")
            if not self.c1(x) + self.c2(x) > 0:
                raise ValueError(f"c1 + c2 must be positive at x={x}")
            if not self.c1_hat(x) + self.c2_hat(x) < 0:
                raise ValueError(f"c1_hat + c2_hat must be negative at x={x}")


def locate_sign_changes(cost: CostModel, model: DiffusionModel) -> tuple[float, float]:
    """Find x_tilde_1 (root of -c1_hat + h') and x_tilde_2 (root of c2_hat + h')."""

    def find(f) -> float:
        scale = _scale(model)
        lo, hi = model.anchor - scale, model.anchor + scale
        for _ in range(80):
            if f(lo) < 0 < f(hi):
                return brentq(f, lo, hi, xtol=BRENT_XTOL, maxiter=BRENT_MAXITER)
            if f(lo) >= 0:
                lo -= scale
            if f(hi) <= 0:
                hi += scale
            scale *= 1.5
        raise SolverError("could not bracket the cost sign-change point")

    x1 = cost.x_tilde_1
    x2 = cost.x_tilde_2
    if x1 is None:
        x1 = find(lambda x: -cost.c1_hat(x) + cost.h_prime(x))
    if x2 is None:
        x2 = find(lambda x: cost.c2_hat(x) + cost.h_prime(x))
    if not x1 < x2:
        raise ValueError(f"expected x_tilde_1 < x_tilde_2, got {x1} >= {x2}")
    return float(x1), float(x2)


def _scale(model: DiffusionModel) -> float:
    s = model.sigma(model.anchor)
    return max(s / np.sqrt(2.0 * model.r), 1e-8)


class QuadratureKernels:
    """Weighted-integral primitives evaluated by adaptive quadrature.

    Closed-form replacements (see the mean-reverting specialization) may be
    passed to ``solve_band`` in place of this class; both expose the same
    four methods.
    """

    def __init__(self, model: DiffusionModel, cost: CostModel,
                 hat_pair: FundamentalPair, rel_tol: float = 1e-11):
        if hat_pair.which != "hat":
            raise ValueError("band kernels need the hat-tagged pair")
        self.model = model
        self.cost = cost
        self.pair = hat_pair
        self.rel_tol = rel_tol

    def _w_phi(self, z: float) -> float:
        return speed_density(self.model, z, "hat") * self.pair.phi(z)

    def _w_psi(self, z: float) -> float:
        return speed_density(self.model, z, "hat") * self.pair.psi(z)

    def _quad(self, f, a, b):
        val, _ = quad(f, a, b, epsabs=1e-12, epsrel=self.rel_tol, limit=400)
        return val

    def k1(self, a: float, b: float) -> float:
        c = self.cost
        return self._quad(
            lambda z: (c.h_prime(z) - c.c1_hat(z)) * self._w_phi(z), a, b)

    def k2(self, a: float, b: float) -> float:
        c = self.cost
        return self._quad(
            lambda z: (c.h_prime(z) + c.c2_hat(z)) * self._w_psi(z), a, b)

    def tail_upper(self, b: float) -> float:
        c = self.cost
        f = lambda z: (c.c1_hat(z) + c.c2_hat(z)) * self._w_phi(z)
        return self._improper(f, b, +1)

    def tail_lower(self, a: float) -> float:
        c = self.cost
        f = lambda z: (c.c1_hat(z) + c.c2_hat(z)) * self._w_psi(z)
        return -self._improper(f, a, -1)

    def _improper(self, f, edge: float, side: int) -> float:
        bound = self.model.upper if side > 0 else self.model.lower
        if np.isfinite(bound):
            lo, hi = (edge, bound) if side > 0 else (bound, edge)
            return self._quad(f, lo, hi)
        total = 0.0
        a, width = edge, 4.0 * _scale(self.model)
        while True:
            b = a + side * width
            piece = self._quad(f, *((a, b) if side > 0 else (b, a)))
            total += piece
            if abs(piece) < max(1e-14, self.rel_tol * abs(total)):
                return total
            a, width = b, 2.0 * width
            if width > 1e7 * _scale(self.model):
                raise SolverError("improper band integral did not converge")


def k1(a: float, b: float, model: DiffusionModel, cost: CostModel,
       hat_pair: FundamentalPair) -> float:
    """int_a^b (h' - c1_hat) mhat' phihat dz."""
    if a > b:
        raise ValueError("k1 requires a <= b")
    return QuadratureKernels(model, cost, hat_pair).k1(a, b)


def k2(b: float, a: float, model: DiffusionModel, cost: CostModel,
       hat_pair: FundamentalPair) -> float:
    """int_a^b (h' + c2_hat) mhat' psihat dz."""
    if a > b:
        raise ValueError("k2 requires a <= b")
    return QuadratureKernels(model, cost, hat_pair).k2(a, b)


def x_star(b: float, model: DiffusionModel, cost: CostModel, kernels,
           x_tilde_1: float | None = None) -> float:
    """Inner root a = x*(b) of K1(a; b) = tail_upper(b), below x_tilde_1 ^ b."""
    if x_tilde_1 is None:
        x_tilde_1, _ = locate_sign_changes(cost, model)
    rhs = kernels.tail_upper(b)
    f = lambda a: kernels.k1(a, b) - rhs
    hi = min(x_tilde_1, b) - 1e-13 * (1.0 + abs(b))
    if f(hi) < 0:
        raise SolverError(f"x_star: no sign change below x_tilde_1 (b={b})")
    step = 0.5 * _scale(model)
    lo = hi - step
    while f(lo) > 0:
        step *= 2.0
        lo -= step
        if not np.isfinite(lo) or lo < model.lower:
            raise SolverError(f"x_star: bracket expansion hit the lower "
                              f"boundary (b={b})")
    return brentq(f, lo, hi, xtol=BRENT_XTOL, maxiter=BRENT_MAXITER)


def y_star(a: float, model: DiffusionModel, cost: CostModel, kernels,
           x_tilde_2: float | None = None) -> float:
    """Inner root b = y*(a) of K2(b; a) = tail_lower(a), above a v x_tilde_2."""
    if x_tilde_2 is None:
        _, x_tilde_2 = locate_sign_changes(cost, model)
    rhs = kernels.tail_lower(a)
    f = lambda b: kernels.k2(a, b) - rhs
    lo = max(x_tilde_2, a) + 1e-13 * (1.0 + abs(a))
    if f(lo) > 0:
        raise SolverError(f"y_star: no sign change above x_tilde_2 (a={a})")
    step = 0.5 * _scale(model)
    hi = lo + step
    while f(hi) < 0:
        step *= 2.0
        hi += step
        if not np.isfinite(hi) or hi > model.upper:
            raise SolverError(f"y_star: bracket expansion hit the upper "
                              f"boundary (a={a})")
    return brentq(f, lo, hi, xtol=BRENT_XTOL, maxiter=BRENT_MAXITER)


@dataclass(frozen=True)
class HjbReport:
    """Maximum violations of the variational inequality, by region."""

    equality_inside: float
    inequality_below: float
    inequality_above: float
    gradient_low: float
    gradient_high: float
    min_identity: float

    def worst(self) -> float:
        return max(self.equality_inside, self.inequality_below,
                   self.inequality_above, self.gradient_low,
                   self.gradient_high, self.min_identity)


@dataclass(frozen=True)
class BandSolution:
    """Solved band with evaluable value function.

    ``u`` and ``u_prime`` accept scalars or arrays; ``u_second`` is the
    piecewise-analytic second derivative (middle region via the pricing ODE,
    flat regions via the marginal-cost derivatives).
    """

    a_star: float
    b_star: float
    coeff_A: float
    coeff_B: float
    u: Callable
    u_prime: Callable
    u_second: Callable
    x_tilde_1: float
    x_tilde_2: float
    residual_report: HjbReport


def solve_band(model: DiffusionModel, cost: CostModel,
               hat_pair: FundamentalPair, base_pair: FundamentalPair,
               kernels=None, rh=None, *, residual_grid_n: int = 201,
               c2_tol: float = 1e-4) -> BandSolution:
    """Solve the band equations and assemble the value function.

    ``kernels`` defaults to quadrature over the supplied hat pair; ``rh``
    must provide ``value``/``deriv`` callables for the middle-region
    resolvent of the holding cost and defaults to Green-kernel quadrature
    (with the derivative taken through the hat resolvent of h').
    """
    cost.validate(model._sample_grid())
    xt1, xt2 = locate_sign_changes(cost, model)
    if kernels is None:
        kernels = QuadratureKernels(model, cost, hat_pair)
    if rh is None:
        rh = _QuadratureRh(model, cost, base_pair, hat_pair)

    # outer root of Theta on (x_tilde_2, upper); Theta < 0 near x_tilde_2
    def theta(b: float) -> float:
        a = x_star(b, model, cost, kernels, xt1)
        return kernels.k2(a, b) - kernels.tail_lower(a)

    eps = 1e-6 * (xt2 - xt1)
    lo = xt2 + eps
    if theta(lo) >= 0:
        raise SolverError("Theta is not negative just above x_tilde_2")
    step = eps
    hi = lo
    while True:
        step *= 2.0
        hi = hi + step
        if hi >= model.upper:
            raise SolverError("Theta bracket expansion hit the upper boundary")
        if theta(hi) > 0:
            break
    b_star = brentq(theta, lo, hi, xtol=BRENT_XTOL, maxiter=BRENT_MAXITER)
    a_star = x_star(b_star, model, cost, kernels, xt1)
    if not (model.lower < a_star < xt1 < xt2 < b_star < model.upper):
        raise SolverError(
            f"solved band ({a_star}, {b_star}) violates the location "
            f"constraints around ({xt1}, {xt2})")

    # coefficients from first-derivative smooth fit at both boundaries
    mat = np.array([[base_pair.psi_prime(a_star), base_pair.phi_prime(a_star)],
                    [base_pair.psi_prime(b_star), base_pair.phi_prime(b_star)]],
                   dtype=float)
    vec = np.array([-cost.c1(a_star) - rh.deriv(a_star),
                    cost.c2(b_star) - rh.deriv(b_star)], dtype=float)
    coeff_A, coeff_B = np.linalg.solve(mat, vec)

    mid_val = (lambda x: coeff_A * base_pair.psi(x) + coeff_B * base_pair.phi(x)
               + rh.value(x))
    # flat-region constants: value of the middle branch continued to the
    # boundary, written through the model primitives
    u_a = (cost.h(a_star) - model.mu(a_star) * cost.c1(a_star)
           - 0.5 * model.sigma(a_star) ** 2 * cost.d_c1(a_star)) / model.r
    u_b = (cost.h(b_star) + model.mu(b_star) * cost.c2(b_star)
           + 0.5 * model.sigma(b_star) ** 2 * cost.d_c2(b_star)) / model.r
    gap = max(abs(mid_val(a_star) - u_a), abs(mid_val(b_star) - u_b))
    if gap > c2_tol:
        raise SolverError(
            f"value-function assembly mismatch {gap:.3e} at the boundaries; "
            f"inputs are inconsistent")

    def _c_int(c, lo_, hi_):
        val, _ = quad(c, lo_, hi_, epsabs=1e-13, epsrel=1e-11, limit=200)
        return val

    def u(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for i, xi in enumerate(np.atleast_1d(x)):
            if xi <= a_star:
                out.flat[i] = u_a + _c_int(cost.c1, xi, a_star)
            elif xi >= b_star:
                out.flat[i] = u_b + _c_int(cost.c2, b_star, xi)
            else:
                out.flat[i] = mid_val(xi)
        return out if x.shape else float(out)

    def u_prime(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for i, xi in enumerate(np.atleast_1d(x)):
            if xi <= a_star:
                out.flat[i] = -cost.c1(xi)
            elif xi >= b_star:
                out.flat[i] = cost.c2(xi)
            else:
                out.flat[i] = (coeff_A * base_pair.psi_prime(xi)
                               + coeff_B * base_pair.phi_prime(xi)
                               + rh.deriv(xi))
        return out if x.shape else float(out)

    def u_second(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for i, xi in enumerate(np.atleast_1d(x)):
            if xi <= a_star:
                out.flat[i] = -cost.d_c1(xi)
            elif xi >= b_star:
                out.flat[i] = cost.d_c2(xi)
            else:
                s2 = model.sigma(xi) ** 2
                ui = mid_val(xi)
                dui = (coeff_A * base_pair.psi_prime(xi)
                       + coeff_B * base_pair.phi_prime(xi) + rh.deriv(xi))
                out.flat[i] = 2.0 * (model.r * ui - model.mu(xi) * dui
                                     - cost.h(xi)) / s2
        return out if x.shape else float(out)

    scale = _scale(model)
    grid = np.linspace(max(a_star - 3 * scale, model.anchor - 10 * scale),
                       min(b_star + 3 * scale, model.anchor + 10 * scale),
                       residual_grid_n)
    grid = grid[(grid > model.lower) & (grid < model.upper)]
    partial = BandSolution(float(a_star), float(b_star), float(coeff_A),
                           float(coeff_B), u, u_prime, u_second,
                           xt1, xt2, None)
    report = hjb_residual(partial, model, cost, grid)
    return BandSolution(float(a_star), float(b_star), float(coeff_A),
                        float(coeff_B), u, u_prime, u_second, xt1, xt2, report)


class _QuadratureRh:
    """Resolvent of the holding cost by Green-kernel quadrature.

    The x-derivative is taken through the hat resolvent of h', which equals
    (R h)' for smooth h and avoids differencing a quadrature.
    """

    def __init__(self, model, cost, base_pair, hat_pair):
        self.model, self.cost = model, cost
        self.base_pair, self.hat_pair = base_pair, hat_pair

    def value(self, x: float) -> float:
        return resolvent(self.model, self.base_pair, self.cost.h, x,
                         "base").value

    def deriv(self, x: float) -> float:
        return resolvent(self.model, self.hat_pair, self.cost.h_prime, x,
                         "hat").value


def hjb_residual(solution: BandSolution, model: DiffusionModel,
                 cost: CostModel, grid) -> HjbReport:
    """Evaluate the variational-inequality residuals on a grid.

    Inside the band the generator is applied with a finite-difference second
    derivative of the assembled function (an independent check of the
    assembly); outside, the flat-region formulas are analytic.
    """
    grid = np.asarray(grid, dtype=float)
    a, b = solution.a_star, solution.b_star
    fd_h = 1e-4 * max(b - a, 1e-8)

    eq_in = 0.0
    ineq_lo = 0.0
    ineq_hi = 0.0
    grad_lo = 0.0
    grad_hi = 0.0
    min_id = 0.0
    for x in grid:
        hx = cost.h(x)
        norm = 1.0 + abs(hx)
        du = solution.u_prime(x)
        if a + 3 * fd_h < x < b - 3 * fd_h:
            stencil = x + fd_h * np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
            uv = solution.u(stencil)
            d2 = (-uv[0] + 16 * uv[1] - 30 * uv[2] + 16 * uv[3] - uv[4]) \
                / (12 * fd_h * fd_h)
            lres = (0.5 * model.sigma(x) ** 2 * d2 + model.mu(x) * du
                    - model.r * uv[2] + hx)
            eq_in = max(eq_in, abs(lres) / norm)
            gen_term = lres
        else:
            d2 = solution.u_second(x)
            gen_term = (0.5 * model.sigma(x) ** 2 * d2 + model.mu(x) * du
                        - model.r * solution.u(x) + hx)
            if x <= a:
                ineq_lo = max(ineq_lo, -gen_term)
            elif x >= b:
                ineq_hi = max(ineq_hi, -gen_term)
        grad_lo = max(grad_lo, -cost.c1(x) - du)
        grad_hi = max(grad_hi, du - cost.c2(x))
        min_id = max(min_id, abs(min(gen_term, cost.c2(x) - du,
                                     du + cost.c1(x))) / norm)
    return HjbReport(eq_in, ineq_lo, ineq_hi, grad_lo, grad_hi, min_id)
