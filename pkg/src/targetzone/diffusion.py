"""One-dimensional diffusion machinery.

Covers the killed characteristic ODEs of a regular diffusion and of its
"hat" transform (drift mu + sigma*sigma', killing rate r - mu'): scale and
speed densities, fundamental solution pairs, Wronskians, Green kernels and
resolvents.  Fundamental pairs either come from model-specific closed forms
or from ``fundamental_numeric``, which integrates the ODE outward from the
anchor point.

All densities are normalized at ``model.anchor``; every downstream formula
is invariant under that choice (it rescales S' and the speed density
reciprocally) and under positive rescaling of psi and phi.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.integrate import quad, solve_ivp

__all__ = [
    "DiffusionModel", "FundamentalPair", "ConstructionError",
    "scale_density", "speed_density", "green", "resolvent",
    "fundamental_numeric",
]

_TAGS = ("base", "hat")


class ConstructionError(RuntimeError):
    """A numeric fundamental solution lost positivity or monotonicity."""


@dataclass(frozen=True)
class DiffusionModel:
    """Uncontrolled diffusion dX = mu(X) dt + sigma(X) dB on (lower, upper).

    ``r`` is the discount rate; Assumption-style preconditions (sigma > 0 and
    r - mu'(x) > 0 on the interval, natural boundaries) are the caller's
    obligation and are spot-checked on a sample grid at construction.
    """

    mu: Callable[[float], float]
    mu_prime: Callable[[float], float]
    sigma: Callable[[float], float]
    sigma_prime: Callable[[float], float]
    r: float
    lower: float = -np.inf
    upper: float = np.inf
    anchor: float = 0.0
    # optional closed-form scale-density overrides (anchored at ``anchor``)
    scale_base: Callable[[float], float] | None = None
    scale_hat: Callable[[float], float] | None = None

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("discount rate r must be positive")
        if not self.lower < self.anchor < self.upper:
            raise ValueError("anchor must lie inside (lower, upper)")
        for x in self._sample_grid():
            if not self.sigma(x) > 0:
                raise ValueError(f"sigma must be positive, sigma({x}) <= 0")
            if not self.r - self.mu_prime(x) > 0:
                raise ValueError(f"killing rate r - mu'({x}) must be positive")

    def _sample_grid(self, n: int = 25) -> np.ndarray:
        lo = self.lower if np.isfinite(self.lower) else self.anchor - 5.0
        hi = self.upper if np.isfinite(self.upper) else self.anchor + 5.0
        pad = 1e-9 * (hi - lo)
        return np.linspace(lo + pad, hi - pad, n)

    def effective_drift(self, x: float, which: str) -> float:
        if which == "base":
            return self.mu(x)
        return self.mu(x) + self.sigma(x) * self.sigma_prime(x)

    def killing_rate(self, x: float, which: str) -> float:
        if which == "base":
            return self.r
        return self.r - self.mu_prime(x)

    def _require_interior(self, x: float) -> None:
        if not self.lower < x < self.upper:
            raise ValueError(f"x={x} outside the state interval "
                             f"({self.lower}, {self.upper})")


class FundamentalPair(NamedTuple):
    """Increasing/decreasing positive solutions of the killed ODE.

    ``which`` tags the equation: "base" for rate r, "hat" for the transformed
    diffusion killed at r - mu'.  ``wronskian`` is (psi' phi - phi' psi) / S'
    evaluated at the model anchor (constant in x).
    """

    psi: Callable
    psi_prime: Callable
    phi: Callable
    phi_prime: Callable
    which: str
    wronskian: float


def _check_tag(which: str) -> None:
    if which not in _TAGS:
        raise ValueError(f"tag must be one of {_TAGS}, got {which!r}")


def scale_density(model: DiffusionModel, x: float, which: str = "base") -> float:
    """S'(x) = exp(-int_anchor^x 2*mu_eff / sigma^2), normalized at the anchor."""
    _check_tag(which)
    model._require_interior(x)
    override = model.scale_base if which == "base" else model.scale_hat
    if override is not None:
        return override(x)
    integrand = (lambda z: 2.0 * model.effective_drift(z, which)
                 / model.sigma(z) ** 2)
    val, _ = quad(integrand, model.anchor, x, epsabs=1e-12, epsrel=1e-12,
                  limit=200)
    return float(np.exp(-val))


def speed_density(model: DiffusionModel, x: float, which: str = "hat") -> float:
    """m'(x) = 2 / (sigma^2(x) S'(x)) for the tagged diffusion."""
    return 2.0 / (model.sigma(x) ** 2 * scale_density(model, x, which))


def green(model: DiffusionModel, pair: FundamentalPair, x: float, y: float) -> float:
    """Green kernel G(x, y) = W^{-1} psi(x minor) phi(x major)."""
    model._require_interior(x)
    model._require_interior(y)
    w = pair.wronskian
    if not np.isfinite(w) or abs(w) < 1e-300:
        raise ArithmeticError(f"degenerate Wronskian {w!r}")
    lo, hi = (x, y) if x <= y else (y, x)
    return float(pair.psi(lo) * pair.phi(hi)) / w


class ResolventValue(NamedTuple):
    value: float
    error: float

    def __float__(self) -> float:  # pragma: no cover - convenience
        return self.value


def resolvent(model: DiffusionModel, pair: FundamentalPair, f: Callable,
              x: float, which: str = "base", rel_tol: float = 1e-10,
              points=()) -> ResolventValue:
    """(R f)(x) = int f(y) G(x, y) m'(y) dy over the state interval.

    Improper limits are truncated with doubling expansion until the last
    shell contributes less than the tolerance; raises ArithmeticError if the
    tails fail to settle.  ``points`` are breakpoints of f (kinks, edges of
    a narrow support) that the quadrature must not skip over.
    """
    _check_tag(which)
    model._require_interior(x)
    if pair.which != which:
        raise ValueError(f"pair has tag {pair.which!r}, expected {which!r}")
    points = sorted(float(p) for p in points)

    def integrand(y):
        y = np.asarray(y, dtype=float)
        out = np.empty_like(y)
        for i, yi in enumerate(np.atleast_1d(y)):
            out.flat[i] = (f(yi) * green(model, pair, x, yi)
                           * speed_density(model, yi, which))
        return out if y.shape else float(out)

    def piece(lo, hi):
        inner = [p for p in points if lo < p < hi]
        v, e = quad(integrand, lo, hi, epsabs=1e-13, epsrel=rel_tol,
                    limit=400, points=inner or None)
        return v, abs(e)

    scale = _state_scale(model)
    total, err = 0.0, 0.0
    for side in (-1, 1):
        bound = model.lower if side < 0 else model.upper
        if np.isfinite(bound):
            v, e = piece(*((bound, x) if side < 0 else (x, bound)))
            total, err = total + v, err + e
            continue
        a = x
        width = scale
        while True:
            b = a + side * width
            v, e = piece(*((b, a) if side < 0 else (a, b)))
            total, err = total + v, err + e
            if abs(v) < max(1e-14, rel_tol * abs(total)):
                break
            a, width = b, 2.0 * width
            if width > 1e6 * scale:
                raise ArithmeticError("resolvent tail did not converge")
    return ResolventValue(total, err)


def _state_scale(model: DiffusionModel) -> float:
    x0 = model.anchor
    s = model.sigma(x0)
    k = model.killing_rate(x0, "base")
    return max(s / np.sqrt(2.0 * k), 1e-6)


def _char_roots(model: DiffusionModel, x: float, which: str) -> tuple[float, float]:
    """Roots of (sigma^2/2) g^2 + mu_eff g - k = 0 (local growth rates)."""
    s2 = model.sigma(x) ** 2
    mu = model.effective_drift(x, which)
    k = model.killing_rate(x, which)
    disc = np.sqrt(mu * mu + 2.0 * s2 * k)
    return (-mu + disc) / s2, (-mu - disc) / s2


def fundamental_numeric(model: DiffusionModel, which: str,
                        grid) -> FundamentalPair:
    """Build (psi, phi) numerically on a grid inside the state interval.

    Integrates the killed ODE from beyond each end of the grid toward the
    other end; the wanted solution dominates in the direction of travel, so
    any admissible initial slope converges to it.  Both solutions are
    normalized to 1 at the model anchor.
    """
    _check_tag(which)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with >= 2 points")
    if not (model.lower < grid[0] and grid[-1] < model.upper):
        raise ValueError("grid must lie inside the state interval")

    span = grid[-1] - grid[0]
    buffer = 0.35 * span + _state_scale(model)
    x_left = max(grid[0] - buffer,
                 model.lower + 1e-9 * span if np.isfinite(model.lower) else -np.inf)
    x_right = min(grid[-1] + buffer,
                  model.upper - 1e-9 * span if np.isfinite(model.upper) else np.inf)

    def rhs(x, y):
        u, du = y
        s2 = model.sigma(x) ** 2
        ddu = 2.0 * (model.killing_rate(x, which) * u
                     - model.effective_drift(x, which) * du) / s2
        return (du, ddu)

    def shoot(x_from, x_to, slope):
        sol = solve_ivp(rhs, (x_from, x_to), (1.0, slope), method="DOP853",
                        rtol=1e-11, atol=1e-300, dense_output=True)
        if not sol.success:
            raise ConstructionError(f"ODE integration failed: {sol.message}")
        return sol

    gp, _ = _char_roots(model, x_left, which)
    _, gm = _char_roots(model, x_right, which)
    sol_psi = shoot(x_left, x_right, gp)
    sol_phi = shoot(x_right, x_left, gm)

    x0 = model.anchor
    psi_scale = sol_psi.sol(x0)[0]
    phi_scale = sol_phi.sol(x0)[0]
    if not (psi_scale > 0 and phi_scale > 0):
        raise ConstructionError("fundamental solution not positive at anchor")

    def make(sol, norm, idx):
        def f(x):
            return np.asarray(sol.sol(x))[idx] / norm
        return f

    psi = make(sol_psi, psi_scale, 0)
    dpsi = make(sol_psi, psi_scale, 1)
    phi = make(sol_phi, phi_scale, 0)
    dphi = make(sol_phi, phi_scale, 1)

    vals_psi, vals_phi = psi(grid), phi(grid)
    if np.any(vals_psi <= 0) or np.any(vals_phi <= 0):
        raise ConstructionError("fundamental solution changes sign on the grid")
    if np.any(np.diff(vals_psi) <= 0) or np.any(np.diff(vals_phi) >= 0):
        raise ConstructionError("fundamental pair lost monotonicity on the grid")

    w = float((dpsi(x0) * phi(x0) - dphi(x0) * psi(x0))
              / scale_density(model, x0, which))
    return FundamentalPair(psi, dpsi, phi, dphi, which, w)


def pair_from_closed_form(psi, psi_prime, phi, phi_prime, which: str,
                          model: DiffusionModel) -> FundamentalPair:
    """Wrap closed-form solutions, computing the Wronskian at the anchor."""
    _check_tag(which)
    x0 = model.anchor
    w = float((psi_prime(x0) * phi(x0) - phi_prime(x0) * psi(x0))
              / scale_density(model, x0, which))
    return FundamentalPair(psi, psi_prime, phi, phi_prime, which, w)
