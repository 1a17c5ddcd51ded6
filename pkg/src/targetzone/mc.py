"""Monte Carlo engine for the band-reflection policy.

Simulates the two-sided Skorokhod-reflected rate by Euler stepping with
projection onto the band, accumulating the clamped amounts into the
nondecreasing push processes xi (at the lower edge) and eta (at the upper
edge).  The discounted cost of a path is

    int e^{-rs} h(X_s) ds + c1 * int e^{-rs} dxi_s + c2 * int e^{-rs} deta_s,

with the holding integral done by trapezoid and the push integrals credited
at the post-projection time stamp.  An initial state outside the band jumps
in at time zero.

Every path owns a counter-based random stream derived from (seed, path
index), so results are bitwise reproducible and independent of chunking.
Antithetic pairing mirrors the driving noise of each even path; standard
errors then use pair averages as the independent samples.

``policy_gap`` prices several bands against common random numbers in one
pass.  ``dynkin_game_value`` estimates the derivative of the value function
from the stopping-game representation: run the uncontrolled process from x,
stop at the first exit of the band, collect the discounted running cost
h'(X) at rate r + rho and a boundary payoff -c1 / +c2 by exit side.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .free_boundary import BandSolution
from .ou import OuSpec

__all__ = [
    "SimConfig", "SimReport", "PathStats", "ExitStatsReport", "GapRow",
    "PolicyGapTable", "simulate_reflected", "estimate_cost", "policy_gap",
    "dynkin_game_value", "estimate_exit_stats", "worker_count",
]

_CHUNK_DRAWS = 128       # driving paths per kernel chunk
_BLOCK_STEPS = 8192      # time steps per kernel call
_COUNTER_STRIDE = 1 << 128


def worker_count() -> int:
    """Worker cap: BAND_SOLVE_THREADS if set, else the CPU count."""
    env = os.environ.get("BAND_SOLVE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


@dataclass(frozen=True)
class SimConfig:
    """Discretization and sampling plan; times in years.

    A horizon with e^{-r * horizon} <= 1e-6 makes truncation negligible;
    shorter horizons are fine as long as the reported truncation bound is
    respected by the consumer.
    """

    dt: float = 1e-3
    horizon: float = 2764.0
    n_paths: int = 10_000
    seed: int = 0
    antithetic: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.dt > self.horizon:
            raise ValueError("dt must not exceed the horizon")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic sampling needs an even path count")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.horizon / self.dt)))


@dataclass(frozen=True)
class SimReport:
    """Cost estimate with a three-sigma confidence convention."""

    cost_mean: float
    cost_stderr: float
    truncation_bound: float
    xi_total_mean: float
    eta_total_mean: float
    n_paths: int
    band: tuple[float, float]
    x0: float
    exit_stats: dict | None = None

    @property
    def ci_low(self) -> float:
        return self.cost_mean - 3.0 * self.cost_stderr

    @property
    def ci_high(self) -> float:
        return self.cost_mean + 3.0 * self.cost_stderr

    def to_json(self, path=None) -> str:
        payload = asdict(self)
        payload["band"] = list(self.band)
        payload["ci_low"] = self.ci_low
        payload["ci_high"] = self.ci_high
        text = json.dumps(payload, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, text: str) -> "SimReport":
        data = json.loads(text)
        data.pop("ci_low", None)
        data.pop("ci_high", None)
        data["band"] = tuple(data["band"])
        return cls(**data)


@dataclass(frozen=True)
class PathStats:
    """Per-path summaries of a reflected simulation."""

    final_x: np.ndarray
    xi_total: np.ndarray
    eta_total: np.ndarray
    xi_discounted: np.ndarray
    eta_discounted: np.ndarray
    holding_discounted: np.ndarray
    initial_jump_xi: float
    initial_jump_eta: float


def _path_generators(seed: int, first: int, count: int):
    return [np.random.Generator(
        np.random.Philox(key=seed, counter=(first + i) * _COUNTER_STRIDE))
        for i in range(count)]


def _reflected_chunk(spec: OuSpec, bands: np.ndarray, x0: float,
                     config: SimConfig, lo: int, hi: int):
    from . import _kernels

    n_bands = bands.shape[0]
    reps = 2 if config.antithetic else 1
    steps = config.n_steps
    sqdt = spec.sigma * math.sqrt(config.dt)
    drift_a = spec.rho * spec.m * config.dt
    drift_b = spec.rho * config.dt
    start = np.clip(x0, bands[:, 0], bands[:, 1])
    h_start = 0.5 * (start - spec.theta) ** 2

    count = hi - lo
    n_local = reps * count
    x = np.tile(start, (n_local, 1))
    h_prev = np.tile(h_start, (n_local, 1))
    shape = (n_local, n_bands)
    acc_h = np.zeros(shape)
    acc_xi = np.zeros(shape)
    acc_eta = np.zeros(shape)
    tot_xi = np.zeros(shape)
    tot_eta = np.zeros(shape)
    gens = _path_generators(config.seed, lo, count)
    done = 0
    while done < steps:
        block = min(_BLOCK_STEPS, steps - done)
        z = np.empty((count, block))
        for i, g in enumerate(gens):
            z[i, :] = g.standard_normal(block)
        disc = np.exp(-spec.r * config.dt
                      * (done + np.arange(block + 1, dtype=float)))
        _kernels.reflected_block(
            z, config.antithetic, x, h_prev, acc_h, acc_xi, acc_eta,
            tot_xi, tot_eta, bands, spec.theta, drift_a, drift_b, sqdt,
            disc, 0.5 * config.dt)
        done += block
    return x, acc_h, acc_xi, acc_eta, tot_xi, tot_eta


def _run_reflected_chunks(spec: OuSpec, bands: np.ndarray, x0: float,
                          config: SimConfig, workers: int = 1):
    """March all paths; returns per-path accumulators shaped (n_paths, n_bands)."""
    reps = 2 if config.antithetic else 1
    n_draws = config.n_paths // reps
    chunk_ranges = [(lo, min(lo + _CHUNK_DRAWS, n_draws))
                    for lo in range(0, n_draws, _CHUNK_DRAWS)]
    if workers > 1 and len(chunk_ranges) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_star,
                                  [(spec, bands, x0, config, lo, hi)
                                   for lo, hi in chunk_ranges]))
    else:
        parts = [_reflected_chunk(spec, bands, x0, config, lo, hi)
                 for lo, hi in chunk_ranges]
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(6))


def _chunk_star(args):
    return _reflected_chunk(*args)


def simulate_reflected(spec: OuSpec, band: tuple[float, float], x0: float,
                       config: SimConfig, workers: int | None = None) -> PathStats:
    """Simulate the reflected rate on one band; per-path summaries only."""
    a, b = band
    if not a < b:
        raise ValueError(f"band must satisfy a < b, got {band}")
    bands = np.array([[a, b]], dtype=float)
    x, acc_h, acc_xi, acc_eta, tot_xi, tot_eta = _run_reflected_chunks(
        spec, bands, x0, config, workers or 1)
    jump_xi = max(a - x0, 0.0)
    jump_eta = max(x0 - b, 0.0)
    if not np.all(np.isfinite(x)):
        raise ArithmeticError("simulation produced non-finite states")
    return PathStats(
        final_x=x[:, 0],
        xi_total=tot_xi[:, 0] + jump_xi,
        eta_total=tot_eta[:, 0] + jump_eta,
        xi_discounted=acc_xi[:, 0] + jump_xi,
        eta_discounted=acc_eta[:, 0] + jump_eta,
        holding_discounted=acc_h[:, 0],
        initial_jump_xi=jump_xi,
        initial_jump_eta=jump_eta,
    )


def _mean_stderr(values: np.ndarray, antithetic: bool) -> tuple[float, float]:
    if antithetic:
        pairs = 0.5 * (values[0::2] + values[1::2])
        n = len(pairs)
        if n < 2:
            return float(values.mean()), float("nan")
        return float(pairs.mean()), float(pairs.std(ddof=1) / math.sqrt(n))
    n = len(values)
    if n < 2:
        return float(values.mean()), float("nan")
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))


def _truncation_bound(spec: OuSpec, band: tuple[float, float],
                      horizon: float) -> float:
    h_sup = max(0.5 * (band[0] - spec.theta) ** 2,
                0.5 * (band[1] - spec.theta) ** 2)
    return math.exp(-spec.r * horizon) * h_sup / spec.r


def estimate_cost(spec: OuSpec, band: tuple[float, float], x0: float,
                  config: SimConfig, workers: int | None = None,
                  exit_stats: bool = False) -> SimReport:
    """Estimate the discounted cost of the band-reflection policy from x0."""
    stats = simulate_reflected(spec, band, x0, config, workers=workers)
    costs = (stats.holding_discounted + spec.c1 * stats.xi_discounted
             + spec.c2 * stats.eta_discounted)
    mean, stderr = _mean_stderr(costs, config.antithetic)
    extra = None
    if exit_stats:
        extra = asdict(estimate_exit_stats(spec, band, x0, config))
    return SimReport(
        cost_mean=mean, cost_stderr=stderr,
        truncation_bound=_truncation_bound(spec, band, config.horizon),
        xi_total_mean=float(stats.xi_total.mean()),
        eta_total_mean=float(stats.eta_total.mean()),
        n_paths=config.n_paths, band=(float(band[0]), float(band[1])),
        x0=float(x0), exit_stats=extra)


@dataclass(frozen=True)
class GapRow:
    label: str
    band: tuple[float, float]
    cost_mean: float
    cost_stderr: float
    truncation_bound: float
    gap: float
    within_noise: bool


@dataclass(frozen=True)
class PolicyGapTable:
    x0: float
    analytic_value: float
    rows: tuple[GapRow, ...]

    def to_json(self, path=None) -> str:
        payload = {"x0": self.x0, "analytic_value": self.analytic_value,
                   "rows": [dict(asdict(r), band=list(r.band))
                            for r in self.rows]}
        text = json.dumps(payload, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def policy_gap(spec: OuSpec, x0: float,
               perturbations: Sequence[tuple[float, float]],
               config: SimConfig, solution: BandSolution | None = None,
               workers: int | None = None) -> PolicyGapTable:
    """Cost gaps of perturbed bands against the analytic optimal value.

    ``perturbations`` are (da, db) offsets added to the solved boundaries;
    all bands are simulated against common random numbers in one pass.  The
    gap of a row is its cost estimate minus u(x0); the optimal row should be
    indistinguishable from zero within three standard errors plus the
    truncation bound, every perturbation at least noise-nonnegative.
    """
    from .ou import solve_ou_band

    if solution is None:
        solution = solve_ou_band(spec)
    a0, b0 = solution.a_star, solution.b_star
    bands = [(a0, b0)]
    labels = ["optimal"]
    for da, db in perturbations:
        a, b = a0 + da, b0 + db
        if not a < b:
            raise ValueError(f"perturbation ({da}, {db}) collapses the band")
        bands.append((a, b))
        labels.append(f"da={da:+.6g},db={db:+.6g}")
    arr = np.asarray(bands, dtype=float)

    x, acc_h, acc_xi, acc_eta, tot_xi, tot_eta = _run_reflected_chunks(
        spec, arr, x0, config, workers or 1)
    value = float(solution.u(x0))
    rows = []
    for j, (label, band) in enumerate(zip(labels, bands)):
        jump_xi = max(band[0] - x0, 0.0)
        jump_eta = max(x0 - band[1], 0.0)
        costs = (acc_h[:, j] + spec.c1 * (acc_xi[:, j] + jump_xi)
                 + spec.c2 * (acc_eta[:, j] + jump_eta))
        mean, stderr = _mean_stderr(costs, config.antithetic)
        bound = _truncation_bound(spec, band, config.horizon)
        gap = mean - value
        if j == 0:
            ok = abs(gap) <= 3.0 * stderr + bound
        else:
            ok = gap >= -3.0 * stderr
        rows.append(GapRow(label, (float(band[0]), float(band[1])), mean,
                           stderr, bound, gap, ok))
    return PolicyGapTable(float(x0), value, tuple(rows))


def _run_first_exit(spec: OuSpec, band: tuple[float, float], x0: float,
                    config: SimConfig, discount_rate: float):
    from . import _kernels

    a, b = band
    reps = 2 if config.antithetic else 1
    n_draws = config.n_paths // reps
    steps = config.n_steps
    sqdt = spec.sigma * math.sqrt(config.dt)
    drift_a = spec.rho * spec.m * config.dt
    drift_b = spec.rho * config.dt

    n = config.n_paths
    acc = np.zeros(n)
    alive = np.ones(n, dtype=np.bool_)
    side = np.zeros(n, dtype=np.int8)
    exit_step = np.zeros(n, dtype=np.int64)
    exit_disc = np.ones(n)

    for lo in range(0, n_draws, _CHUNK_DRAWS):
        hi = min(lo + _CHUNK_DRAWS, n_draws)
        count = hi - lo
        sl = slice(reps * lo, reps * hi)
        x = np.full(reps * count, float(x0))
        g_prev = x - spec.theta
        acc_l = np.zeros(reps * count)
        alive_l = np.ones(reps * count, dtype=np.bool_)
        side_l = np.zeros(reps * count, dtype=np.int8)
        step_l = np.zeros(reps * count, dtype=np.int64)
        disc_l = np.ones(reps * count)
        gens = _path_generators(config.seed, lo, count)
        done = 0
        while done < steps and alive_l.any():
            block = min(_BLOCK_STEPS, steps - done)
            z = np.empty((count, block))
            for i, g in enumerate(gens):
                z[i, :] = g.standard_normal(block)
            disc = np.exp(-discount_rate * config.dt
                          * (done + np.arange(block + 1, dtype=float)))
            _kernels.first_exit_block(
                z, config.antithetic, x, g_prev, acc_l, alive_l, side_l,
                step_l, disc_l, a, b, spec.theta, drift_a, drift_b, sqdt,
                disc, 0.5 * config.dt, done)
            done += block
        acc[sl] = acc_l
        alive[sl] = alive_l
        side[sl] = side_l
        exit_step[sl] = step_l
        exit_disc[sl] = disc_l
    return acc, alive, side, exit_step, exit_disc


def dynkin_game_value(spec: OuSpec, band: tuple[float, float], x: float,
                      config: SimConfig) -> tuple[float, float]:
    """Stopping-game estimate of u'(x); returns (estimate, stderr).

    Payoff per path: discounted running h'(X) at rate r + rho until the
    first exit of (a, b), minus c1 at a lower exit, plus c2 at an upper
    exit, both discounted at the crossing stamp.  Paths still inside at the
    horizon contribute their running integral only.
    """
    a, b = band
    if not a < x < b:
        raise ValueError(f"x={x} must lie strictly inside the band {band}")
    acc, alive, side, _, exit_disc = _run_first_exit(
        spec, band, x, config, spec.r + spec.rho)
    payoff = acc.copy()
    payoff[side < 0] -= spec.c1 * exit_disc[side < 0]
    payoff[side > 0] += spec.c2 * exit_disc[side > 0]
    return _mean_stderr(payoff, config.antithetic)


@dataclass(frozen=True)
class ExitStatsReport:
    p_lower: float
    p_lower_stderr: float
    mean_exit_time: float
    exit_time_stderr: float
    n_exited: int
    n_paths: int


def estimate_exit_stats(spec: OuSpec, band: tuple[float, float], x0: float,
                        config: SimConfig) -> ExitStatsReport:
    """Absorbing-boundary statistics of the uncontrolled process from x0."""
    a, b = band
    if not a <= x0 <= b:
        raise ValueError(f"x0={x0} outside the band {band}")
    _, alive, side, exit_step, _ = _run_first_exit(spec, band, x0, config, 0.0)
    exited = ~alive
    n_exit = int(exited.sum())
    if n_exit == 0:
        return ExitStatsReport(math.nan, math.nan, math.nan, math.nan, 0,
                               config.n_paths)
    p = float((side[exited] < 0).mean())
    p_se = math.sqrt(max(p * (1.0 - p), 0.0) / n_exit)
    times = exit_step[exited] * config.dt
    t_mean = float(times.mean())
    t_se = float(times.std(ddof=1) / math.sqrt(n_exit)) if n_exit > 1 else math.nan
    return ExitStatsReport(p, p_se, t_mean, t_se, n_exit, config.n_paths)


def reference_reflected_paths(spec: OuSpec, band: tuple[float, float],
                              x0: float, config: SimConfig,
                              n_paths: int = 10):
    """Plain-numpy reflected simulation retaining full traces.

    Independent re-implementation of the compiled kernel (same streams, same
    stepping) used for trace emission and as a cross-check in the tests.
    Intended for small path counts; memory grows with n_steps.
    """
    a, b = band
    reps = 2 if config.antithetic else 1
    n_paths = min(n_paths, config.n_paths)
    n_draws = max(1, (n_paths + reps - 1) // reps)
    steps = config.n_steps
    gens = _path_generators(config.seed, 0, n_draws)
    z = np.stack([g.standard_normal(steps) for g in gens])
    if reps == 2:
        z = np.repeat(z, 2, axis=0)
        z[1::2] *= -1.0
    z = z[:n_paths]

    sqdt = spec.sigma * math.sqrt(config.dt)
    t = np.arange(steps + 1) * config.dt
    x = np.full(n_paths, float(np.clip(x0, a, b)))
    xs = np.empty((n_paths, steps + 1))
    xi = np.zeros((n_paths, steps + 1))
    eta = np.zeros((n_paths, steps + 1))
    xs[:, 0] = x
    xi[:, 0] = max(a - x0, 0.0)
    eta[:, 0] = max(x0 - b, 0.0)
    for k in range(steps):
        x = x + spec.rho * (spec.m - x) * config.dt + sqdt * z[:, k]
        low = x < a
        high = x > b
        xi[:, k + 1] = xi[:, k] + np.where(low, a - x, 0.0)
        eta[:, k + 1] = eta[:, k] + np.where(high, x - b, 0.0)
        x = np.clip(x, a, b)
        xs[:, k + 1] = x
    return t, xs, xi, eta


def write_trace_csv(path, t, xs, xi, eta, max_paths: int = 10) -> None:
    """Per-path trace CSV ``t,X,xi,eta`` (debugging aid, first paths only)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "t", "X", "xi", "eta"])
        for p in range(min(max_paths, xs.shape[0])):
            for k in range(xs.shape[1]):
                writer.writerow([p, f"{t[k]:.9g}", f"{xs[p, k]:.9g}",
                                 f"{xi[p, k]:.9g}", f"{eta[p, k]:.9g}"])
