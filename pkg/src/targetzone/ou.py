"""Mean-reverting (log-)exchange-rate case study.

For dX = rho (m - X) dt + sigma dB the hat diffusion coincides with X and
its killed fundamental solutions have closed forms in parabolic cylinder
functions of negative order:

    psi_hat(x) = e^{y^2/4} D_alpha(-y),   phi_hat(x) = e^{y^2/4} D_alpha(y),

with y = kappa (x - m), kappa = sqrt(2 rho) / sigma and
alpha = -(r + rho) / rho.  The base-rate pair is identical with order
nu = -r / rho.  With a quadratic holding cost h(x) = (x - theta)^2 / 2 and
constant marginal intervention costs, every integral in the band equations
reduces to endpoint evaluations of E(v, y) = e^{-y^2/4} D_v(y) through the
antiderivative identities

    d/dy [-E(v-1, y)]           = E(v, y),
    d/dy [-E(v, y) - v E(v-2, y)] = y E(v, y),

which is what ``OuClosedFormKernels`` uses.  The slower quadrature kernels
and numerically integrated pairs remain available as cross-checks.

Time is measured in years throughout; ``m`` and ``theta`` are logarithms of
the exchange rate (``theta`` is the log central parity).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import special_fn
from .diffusion import DiffusionModel, FundamentalPair, fundamental_numeric
from .free_boundary import (BandSolution, CostModel, QuadratureKernels,
                            SolverError, solve_band)
from .quadrature import adaptive_quad

__all__ = [
    "OuSpec", "default_spec", "ou_hat_pair", "ou_base_pair",
    "OuClosedFormKernels", "OuHoldingResolvent", "resolvent_h_time_integral",
    "solve_ou_band", "calibrate_costs", "CalibrationError",
    "sweep", "SweepResult", "fit_ou_mle", "OuFit",
    "read_rate_series", "write_sweep_csv",
]

CENTRAL_PARITY = 7.46038  # DKK per EUR, fixed since 1987
LOG_PARITY = math.log(CENTRAL_PARITY)


@dataclass(frozen=True)
class OuSpec:
    """Mean-reverting model plus intervention-cost parameters.

    rho: mean-reversion speed (1/years); m: long-run mean of the log rate;
    sigma: volatility (1/sqrt years); r: discount rate (1/years);
    c1/c2: buy/sell marginal intervention costs; theta: log central parity.
    """

    rho: float
    m: float
    sigma: float
    r: float
    c1: float
    c2: float
    theta: float

    def __post_init__(self):
        for name in ("rho", "sigma", "r"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.c1 + self.c2 > 0:
            raise ValueError("c1 + c2 must be positive")

    @property
    def kappa(self) -> float:
        """Scale map to the standardized variable y = kappa (x - m)."""
        return math.sqrt(2.0 * self.rho) / self.sigma

    @property
    def alpha(self) -> float:
        """Order of the hat-pair cylinder functions, -(r + rho)/rho < 0."""
        return -(self.r + self.rho) / self.rho

    @property
    def nu(self) -> float:
        """Order of the base-pair cylinder functions, -r/rho < 0."""
        return -self.r / self.rho

    @property
    def x_tilde_1(self) -> float:
        return self.theta - (self.r + self.rho) * self.c1

    @property
    def x_tilde_2(self) -> float:
        return self.theta + (self.r + self.rho) * self.c2

    def stationary_scale(self) -> float:
        return self.sigma / math.sqrt(2.0 * self.rho)

    def to_model(self) -> DiffusionModel:
        rho, m, sig = self.rho, self.m, self.sigma
        scale = lambda x: math.exp(rho * (x - m) ** 2 / sig ** 2)
        return DiffusionModel(
            mu=lambda x: rho * (m - x), mu_prime=lambda x: -rho,
            sigma=lambda x: sig, sigma_prime=lambda x: 0.0,
            r=self.r, anchor=m, scale_base=scale, scale_hat=scale)

    def to_cost(self) -> CostModel:
        th, k = self.theta, self.r + self.rho
        c1, c2 = self.c1, self.c2
        return CostModel(
            h=lambda x: 0.5 * (x - th) ** 2, h_prime=lambda x: x - th,
            c1=lambda x: c1, c2=lambda x: c2,
            c1_hat=lambda x: -k * c1, c2_hat=lambda x: -k * c2,
            x_tilde_1=self.x_tilde_1, x_tilde_2=self.x_tilde_2,
            c1_prime=lambda x: 0.0, c2_prime=lambda x: 0.0)


def default_spec() -> OuSpec:
    """Danish krone/euro peg configuration: central parity 7.46038 DKK/EUR.

    The c = 0.0335 common cost reproduces the historical +-2.25 percent
    fluctuation band around the log parity.
    """
    return OuSpec(rho=0.001, m=LOG_PARITY, sigma=0.015, r=0.005,
                  c1=0.0335, c2=0.0335, theta=LOG_PARITY)


class _CylinderCache:
    """Memoized E(v, y) = e^{-y^2/4} D_v(y) evaluations for a fixed order set."""

    def __init__(self):
        self._memo: dict[tuple[float, float], float] = {}

    def e(self, order: float, y: float) -> float:
        key = (order, y)
        val = self._memo.get(key)
        if val is None:
            val = math.exp(special_fn.pcf_d_log(order, y) - 0.25 * y * y)
            self._memo[key] = val
        return val


def _make_pair(spec: OuSpec, order: float, which: str) -> FundamentalPair:
    kappa, m = spec.kappa, spec.m
    cache = _CylinderCache()

    def _eval(x, sgn_arg, ordr, coef):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for i, xi in enumerate(np.atleast_1d(x)):
            y = kappa * (xi - m)
            out.flat[i] = coef * math.exp(0.5 * y * y) * cache.e(ordr, sgn_arg * y)
        return out if x.shape else float(out)

    psi = lambda x: _eval(x, -1.0, order, 1.0)
    phi = lambda x: _eval(x, +1.0, order, 1.0)
    # d/dx e^{y^2/4} D_v(+-y) = -+ v kappa e^{y^2/4} D_{v-1}(+-y)
    dpsi = lambda x: _eval(x, -1.0, order - 1.0, -order * kappa)
    dphi = lambda x: _eval(x, +1.0, order - 1.0, order * kappa)

    x0 = spec.m
    w = float((dpsi(x0) * phi(x0) - dphi(x0) * psi(x0)))  # S'(m) = 1
    return FundamentalPair(psi, dpsi, phi, dphi, which, w)


def ou_hat_pair(spec: OuSpec) -> FundamentalPair:
    """Closed-form killed fundamental pair of the hat diffusion."""
    return _make_pair(spec, spec.alpha, "hat")


def ou_base_pair(spec: OuSpec) -> FundamentalPair:
    """Closed-form fundamental pair at the base discount rate."""
    return _make_pair(spec, spec.nu, "base")


class OuClosedFormKernels:
    """Band-equation integrals reduced to cylinder-function endpoint values."""

    def __init__(self, spec: OuSpec):
        self.spec = spec
        self._cache = _CylinderCache()
        self.pref = 2.0 / (spec.sigma ** 2 * spec.kappa)

    def _anti_const(self, y: float) -> float:
        return -self._cache.e(self.spec.alpha - 1.0, y)

    def _anti_lin(self, y: float) -> float:
        a = self.spec.alpha
        return -self._cache.e(a, y) - a * self._cache.e(a - 2.0, y)

    def _y(self, x: float) -> float:
        return self.spec.kappa * (x - self.spec.m)

    def k1(self, a: float, b: float) -> float:
        s = self.spec
        ya, yb = self._y(a), self._y(b)
        lin = (self._anti_lin(yb) - self._anti_lin(ya)) / s.kappa
        const = ((s.m - s.theta + (s.r + s.rho) * s.c1)
                 * (self._anti_const(yb) - self._anti_const(ya)))
        return self.pref * (lin + const)

    def k2(self, a: float, b: float) -> float:
        s = self.spec
        s1, s2 = -self._y(b), -self._y(a)
        lin = -(self._anti_lin(s2) - self._anti_lin(s1)) / s.kappa
        const = ((s.m - s.theta - (s.r + s.rho) * s.c2)
                 * (self._anti_const(s2) - self._anti_const(s1)))
        return self.pref * (lin + const)

    def tail_upper(self, b: float) -> float:
        s = self.spec
        return (-(s.r + s.rho) * (s.c1 + s.c2) * self.pref
                * self._cache.e(s.alpha - 1.0, self._y(b)))

    def tail_lower(self, a: float) -> float:
        s = self.spec
        return ((s.r + s.rho) * (s.c1 + s.c2) * self.pref
                * self._cache.e(s.alpha - 1.0, -self._y(a)))


class OuHoldingResolvent:
    """Expected discounted quadratic holding cost of the free diffusion.

    Integrating e^{-rt} E_x h(X_t) over t >= 0 in closed form gives a
    quadratic in (x - m); ``resolvent_h_time_integral`` evaluates the same
    time integral by quadrature for cross-checking.
    """

    def __init__(self, spec: OuSpec):
        self.spec = spec

    def value(self, x: float) -> float:
        s = self.spec
        d, y = s.m - s.theta, x - s.m
        return 0.5 * (d * d / s.r + 2.0 * d * y / (s.r + s.rho)
                      + y * y / (s.r + 2.0 * s.rho)
                      + s.sigma ** 2 / (s.r * (s.r + 2.0 * s.rho)))

    def deriv(self, x: float) -> float:
        s = self.spec
        return (s.m - s.theta) / (s.r + s.rho) + (x - s.m) / (s.r + 2.0 * s.rho)


def resolvent_h_time_integral(spec: OuSpec, x: float,
                              tiny: float = 1e-16) -> float:
    """Quadrature of int_0^T e^{-rt} E_x h(X_t) dt with e^{-rT} < tiny."""
    s = spec
    horizon = -math.log(tiny) / s.r

    def integrand(t):
        mean = s.m + (x - s.m) * np.exp(-s.rho * t) - s.theta
        var = s.sigma ** 2 * (1.0 - np.exp(-2.0 * s.rho * t)) / (2.0 * s.rho)
        return np.exp(-s.r * t) * 0.5 * (mean * mean + var)

    return adaptive_quad(integrand, 0.0, horizon, abs_tol=1e-13,
                         rel_tol=1e-11).value


def solve_ou_band(spec: OuSpec, *, pairs: str = "closed",
                  kernels: str = "closed", rh: str = "closed") -> BandSolution:
    """Solve the intervention band for a mean-reverting specification.

    The default configuration uses closed forms end to end.  ``pairs``,
    ``kernels`` and ``rh`` may be set to "numeric"/"quadrature" to route the
    computation through the generic machinery instead (slow; used by the
    cross-check tests).
    """
    model = spec.to_model()
    cost = spec.to_cost()
    if pairs == "closed":
        hat_pair = ou_hat_pair(spec)
        base_pair = ou_base_pair(spec)
    elif pairs == "numeric":
        grid = np.linspace(spec.m - 8.0 * spec.stationary_scale(),
                           spec.m + 8.0 * spec.stationary_scale(), 41)
        hat_pair = fundamental_numeric(model, "hat", grid)
        base_pair = fundamental_numeric(model, "base", grid)
    else:
        raise ValueError(f"unknown pairs option {pairs!r}")

    if kernels == "closed":
        if pairs != "closed":
            raise ValueError("closed-form kernels require closed-form pairs")
        kern = OuClosedFormKernels(spec)
    elif kernels == "quadrature":
        kern = QuadratureKernels(model, cost, hat_pair)
    else:
        raise ValueError(f"unknown kernels option {kernels!r}")

    rh_provider = OuHoldingResolvent(spec) if rh == "closed" else None
    return solve_band(model, cost, hat_pair, base_pair, kernels=kern,
                      rh=rh_provider)


class CalibrationError(RuntimeError):
    """The target band width is not attainable by a common cost."""


def calibrate_costs(spec: OuSpec, target_a: float, target_b: float,
                    tol: float = 1e-4) -> float:
    """Common cost c = c1 = c2 whose solved band matches the target width.

    Band width is strictly increasing in the common cost, so a bracketed
    Brent search on c suffices.  The costs carried by ``spec`` are ignored.
    """
    if not target_a < target_b:
        raise ValueError("need target_a < target_b")
    target_w = target_b - target_a

    def width_gap(c: float) -> float:
        sol = solve_ou_band(replace(spec, c1=c, c2=c))
        return (sol.b_star - sol.a_star) - target_w

    lo, hi = 1e-8, 0.05
    try:
        g_lo = width_gap(lo)
    except SolverError as exc:
        raise CalibrationError(f"cannot solve at the lower cost bracket: {exc}")
    if g_lo > 0:
        raise CalibrationError(
            f"target width {target_w:.6g} is below the minimal attainable "
            f"width {target_w + g_lo:.6g}")
    while width_gap(hi) < 0:
        hi *= 4.0
        if hi > 1e4:
            raise CalibrationError("cost bracket expansion failed")
    c = brentq(width_gap, lo, hi, xtol=1e-12, maxiter=200)
    sol = solve_ou_band(replace(spec, c1=c, c2=c))
    if abs((sol.b_star - sol.a_star) - target_w) > tol:
        raise CalibrationError("calibrated band misses the target width")
    return float(c)


# boundary monotonicity directions per swept parameter: +1 increasing,
# -1 decreasing in the parameter
_SWEEP_DIRECTIONS = {
    "m": (-1, -1),
    "sigma": (-1, +1),
    "c1": (-1, +1),
    "c2": (-1, +1),
    "theta": (+1, +1),
}


@dataclass(frozen=True)
class SweepResult:
    parameter: str
    values: tuple[float, ...]
    a_star: tuple[float, ...]
    b_star: tuple[float, ...]
    expected_a_direction: int
    expected_b_direction: int
    a_monotone: bool
    b_monotone: bool
    errors: tuple[str | None, ...]

    def rows(self) -> list[tuple[float, float, float]]:
        return list(zip(self.values, self.a_star, self.b_star))


def sweep(spec: OuSpec, parameter: str, values: Sequence[float],
          slack: float = 1e-9) -> SweepResult:
    """Solve the band along a parameter sweep and check monotonicity.

    The boundary directions asserted are: decreasing in m (both), widening
    in sigma and in either cost, increasing in theta (both).
    """
    if parameter not in _SWEEP_DIRECTIONS:
        raise ValueError(f"cannot sweep {parameter!r}; one of "
                         f"{sorted(_SWEEP_DIRECTIONS)}")
    vals = [float(v) for v in values]
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ValueError("sweep values must be strictly increasing")
    da, db = _SWEEP_DIRECTIONS[parameter]
    a_out, b_out, errors = [], [], []
    for v in vals:
        try:
            sol = solve_ou_band(replace(spec, **{parameter: v}))
            a_out.append(sol.a_star)
            b_out.append(sol.b_star)
            errors.append(None)
        except (SolverError, ValueError) as exc:
            a_out.append(math.nan)
            b_out.append(math.nan)
            errors.append(str(exc))

    def monotone(seq, direction):
        pairs = [(u, v) for u, v in zip(seq, seq[1:])
                 if not (math.isnan(u) or math.isnan(v))]
        return all(direction * (v - u) > -slack for u, v in pairs)

    return SweepResult(parameter, tuple(vals), tuple(a_out), tuple(b_out),
                       da, db, monotone(a_out, da), monotone(b_out, db),
                       tuple(errors))


@dataclass(frozen=True)
class OuFit:
    """Continuous-time parameter estimates from an evenly sampled series."""

    rho: float
    m: float
    sigma: float
    rho_se: float
    m_se: float
    sigma_se: float
    ar_coefficient: float
    dt: float
    n_observations: int
    degenerate: bool = False
    warning: str | None = None


def fit_ou_mle(series) -> OuFit:
    """Gaussian AR(1) fit on the exact discrete transitions, mapped to
    continuous-time (rho, m, sigma).

    ``series`` is a sequence of (time, rate) pairs with uniform spacing;
    rates must be positive (the log is taken internally).  The likelihood is
    profiled through the stationary sample autocovariances, which keeps the
    AR coefficient inside [-1, 1] and makes every estimate invariant under
    time reversal (the stationary process is reversible).  Standard errors
    are the usual AR(1) asymptotics, which are honest about the weak
    identification of rho and m when mean reversion is slow.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("series must be a sequence of (time, rate) pairs")
    t, rate = arr[:, 0], arr[:, 1]
    if len(t) < 30:
        raise ValueError("need at least 30 observations")
    if np.any(rate <= 0):
        raise ValueError("rates must be positive")
    steps = np.diff(t)
    dt = steps.mean()
    if dt <= 0 or np.any(np.abs(steps - dt) > 1e-9 * max(abs(dt), 1.0)):
        raise ValueError("series must be evenly spaced in time")

    y = np.log(rate)
    n_obs = len(y)
    n = n_obs - 1
    m_hat = float(y.mean())
    dev = y - m_hat
    gamma0 = float(np.mean(dev * dev))
    rounding_floor = (8.0 * np.finfo(float).eps * max(1.0, abs(m_hat))) ** 2
    if gamma0 <= rounding_floor:
        return OuFit(math.nan, m_hat, 0.0, math.nan, 0.0, 0.0,
                     math.nan, dt, n_obs, degenerate=True,
                     warning="constant series; volatility is degenerate")
    gamma1 = float(np.sum(dev[:-1] * dev[1:]) / n_obs)
    phi = gamma1 / gamma0
    v = gamma0 * (1.0 - phi * phi)  # innovation variance

    warning = None
    if not 0.0 < phi < 1.0:
        warning = ("AR(1) coefficient outside (0, 1); mean reversion is "
                   "not identified")
        rho_hat = math.nan
        sigma_hat = math.sqrt(v / dt)
        rho_se = math.nan
        m_se = math.sqrt(gamma0 / n_obs)
    else:
        rho_hat = -math.log(phi) / dt
        sigma_hat = math.sqrt(2.0 * rho_hat * gamma0)
        phi_se = math.sqrt(max(1.0 - phi * phi, 0.0) / n)
        rho_se = phi_se / (phi * dt)
        m_se = math.sqrt(v / n) / (1.0 - phi)
    sigma_se = sigma_hat / math.sqrt(2.0 * n)
    return OuFit(rho_hat, m_hat, sigma_hat, rho_se, m_se, sigma_se, phi,
                 dt, n_obs, degenerate=False, warning=warning)


def read_rate_series(path) -> np.ndarray:
    """Read a CSV with header ``time,rate`` into an (n, 2) array."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["time", "rate"]:
            raise ValueError(f"{path}: expected a 'time,rate' header")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def write_sweep_csv(path, result: SweepResult, verdicts: bool = False) -> None:
    """Emit sweep rows as ``value,a_star,b_star`` (optionally with verdicts)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if verdicts:
            writer.writerow(["value", "a_star", "b_star",
                             "a_monotone", "b_monotone"])
            for v, a, b in result.rows():
                writer.writerow([f"{v:.9g}", f"{a:.9g}", f"{b:.9g}",
                                 result.a_monotone, result.b_monotone])
        else:
            writer.writerow(["value", "a_star", "b_star"])
            for v, a, b in result.rows():
                writer.writerow([f"{v:.9g}", f"{a:.9g}", f"{b:.9g}"])
