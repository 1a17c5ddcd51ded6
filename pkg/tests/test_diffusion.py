import math

import numpy as np
import pytest

from targetzone.diffusion import (DiffusionModel, fundamental_numeric,
                                  green, resolvent, scale_density,
                                  speed_density)
from targetzone.ou import OuSpec, ou_base_pair, ou_hat_pair

RHO, M, SIG, R = 0.001, 2.01, 0.015, 0.005
SPEC = OuSpec(rho=RHO, m=M, sigma=SIG, r=R, c1=0.0335, c2=0.0335, theta=M)


@pytest.fixture(scope="module")
def ou_model():
    return SPEC.to_model()


@pytest.fixture(scope="module")
def ou_model_quad():
    """Same dynamics but without closed-form scale overrides."""
    return DiffusionModel(mu=lambda x: RHO * (M - x), mu_prime=lambda x: -RHO,
                          sigma=lambda x: SIG, sigma_prime=lambda x: 0.0,
                          r=R, anchor=M)


@pytest.fixture(scope="module")
def hat_pair():
    return ou_hat_pair(SPEC)


@pytest.fixture(scope="module")
def base_pair():
    return ou_base_pair(SPEC)


def test_model_validation():
    with pytest.raises(ValueError):
        DiffusionModel(mu=lambda x: 0.0, mu_prime=lambda x: 0.0,
                       sigma=lambda x: -1.0, sigma_prime=lambda x: 0.0, r=R)
    with pytest.raises(ValueError):
        # mu' = 2 r violates the killing-rate condition
        DiffusionModel(mu=lambda x: 2 * R * x, mu_prime=lambda x: 2 * R,
                       sigma=lambda x: 1.0, sigma_prime=lambda x: 0.0, r=R)
    with pytest.raises(ValueError):
        DiffusionModel(mu=lambda x: 0.0, mu_prime=lambda x: 0.0,
                       sigma=lambda x: 1.0, sigma_prime=lambda x: 0.0, r=R,
                       lower=0.0, upper=1.0, anchor=2.0)


def test_scale_density_hat_anchor_and_symmetry(ou_model_quad):
    assert scale_density(ou_model_quad, M, "hat") == pytest.approx(1.0, abs=1e-14)
    d = 0.04
    left = scale_density(ou_model_quad, M - d, "hat")
    right = scale_density(ou_model_quad, M + d, "hat")
    assert left == pytest.approx(right, rel=1e-11)


def test_scale_density_quadrature_matches_closed_form(ou_model, ou_model_quad):
    # closed form exp(rho (x-m)^2 / sigma^2) against the quadrature path
    for x in (2.03, 1.98, 2.2):
        expected = math.exp(RHO * (x - M) ** 2 / SIG ** 2)
        assert scale_density(ou_model_quad, x, "hat") == pytest.approx(
            expected, rel=1e-11)
        assert scale_density(ou_model, x, "hat") == pytest.approx(
            expected, rel=1e-14)


def test_scale_density_domain_error():
    model = DiffusionModel(mu=lambda x: 0.0, mu_prime=lambda x: 0.0,
                           sigma=lambda x: 1.0, sigma_prime=lambda x: 0.0,
                           r=R, lower=0.0, upper=1.0, anchor=0.5)
    with pytest.raises(ValueError):
        scale_density(model, 1.5)


def test_speed_density_values(ou_model):
    assert speed_density(ou_model, M) == pytest.approx(2.0 / SIG ** 2, rel=1e-12)
    d = 0.03
    assert speed_density(ou_model, M + d) == pytest.approx(
        speed_density(ou_model, M - d), rel=1e-12)
    x = 2.05
    expected = (2.0 / SIG ** 2) * math.exp(-RHO * (x - M) ** 2 / SIG ** 2)
    assert speed_density(ou_model, x) == pytest.approx(expected, rel=1e-12)


def test_green_symmetry_and_diagonal(ou_model, hat_pair):
    x, y = 2.00, 2.02
    assert green(ou_model, hat_pair, x, y) == pytest.approx(
        green(ou_model, hat_pair, y, x), rel=1e-14)
    # the two branches agree on the diagonal
    eps = 1e-9
    assert green(ou_model, hat_pair, x, x + eps) == pytest.approx(
        green(ou_model, hat_pair, x + eps, x), rel=1e-9)


def test_green_degenerate_wronskian(ou_model, hat_pair):
    bad = hat_pair._replace(wronskian=0.0)
    with pytest.raises(ArithmeticError):
        green(ou_model, bad, 2.0, 2.01)


def test_green_matches_monte_carlo_occupation(ou_model, hat_pair):
    # hat-kernel value against a discounted occupation estimate of the hat
    # diffusion (same mean-reverting dynamics, killing rate r + rho), using
    # a narrow bump test function around y0
    x0, y0, half_w = 2.00, 2.02, 0.002

    def bump(y):
        t = (y - y0) / half_w
        return np.where(np.abs(t) < 1.0, (1.0 - t * t) ** 2, 0.0)

    analytic = resolvent(ou_model, hat_pair, lambda y: float(bump(y)),
                         x0, "hat", points=(y0 - half_w, y0, y0 + half_w)).value

    rng = np.random.default_rng(42)
    n_paths, dt, horizon = 4000, 0.1, 1200.0
    steps = int(horizon / dt)
    decay = math.exp(-RHO * dt)
    innov = SIG * math.sqrt((1.0 - decay * decay) / (2.0 * RHO))
    q = R + RHO
    x = np.full(n_paths, x0)
    acc = np.full(n_paths, 0.5 * dt * bump(x0))
    for k in range(1, steps + 1):
        x = M + (x - M) * decay + innov * rng.standard_normal(n_paths)
        w = math.exp(-q * k * dt)
        acc += dt * w * bump(x)
    mean, se = acc.mean(), acc.std(ddof=1) / math.sqrt(n_paths)
    assert abs(mean - analytic) <= 3.0 * se


def test_resolvent_constant_is_inverse_rate(ou_model, base_pair):
    val = resolvent(ou_model, base_pair, lambda y: 1.0, 2.0, "base")
    assert val.value == pytest.approx(1.0 / R, rel=1e-8)
    zero = resolvent(ou_model, base_pair, lambda y: 0.0, 2.0, "base")
    assert zero.value == 0.0


def test_resolvent_divergent_tail_raises(ou_model, base_pair):
    grow = lambda y: math.exp(min(4.6 * (y - M) ** 2, 700.0))
    with pytest.raises(ArithmeticError):
        with np.errstate(over="ignore"):
            resolvent(ou_model, base_pair, grow, M, "base")


def test_resolvent_derivative_identity(ou_model, base_pair, hat_pair):
    # (R h)'(x) = (Rhat h')(x) for smooth h, checked by central differences
    theta = M
    h = lambda y: 0.5 * (y - theta) ** 2
    hp = lambda y: y - theta
    step = 1e-4
    for x in np.linspace(M - 0.4, M + 0.4, 5):
        left = resolvent(ou_model, base_pair, h, x - step, "base").value
        right = resolvent(ou_model, base_pair, h, x + step, "base").value
        fd = (right - left) / (2.0 * step)
        hat = resolvent(ou_model, hat_pair, hp, x, "hat").value
        assert abs(fd - hat) <= 1e-6 * (1.0 + abs(fd))


def test_resolvent_ode_residual_for_bump(ou_model, base_pair):
    # (L_X - r)(R f) + f = 0; finite differences on the quadrature resolvent
    y0, half_w = 2.01, 0.05

    def f(y):
        t = (y - y0) / half_w
        return (1.0 - t * t) ** 2 if abs(t) < 1.0 else 0.0

    step = 5e-4
    for x in (1.99, 2.01, 2.03):
        vals = [resolvent(ou_model, base_pair, f, x + k * step, "base").value
                for k in (-1, 0, 1)]
        d1 = (vals[2] - vals[0]) / (2 * step)
        d2 = (vals[2] - 2 * vals[1] + vals[0]) / (step * step)
        res = 0.5 * SIG ** 2 * d2 + RHO * (M - x) * d1 - R * vals[1] + f(x)
        assert abs(res) <= 1e-4  # relative to sup|f| = 1


def test_fundamental_numeric_matches_ou_closed_form(ou_model, hat_pair):
    scale = SIG / math.sqrt(2 * RHO)
    grid = np.linspace(M - 4 * scale, M + 4 * scale, 41)
    pair = fundamental_numeric(ou_model, "hat", grid)
    ratio_psi = pair.psi(grid) / hat_pair.psi(grid)
    ratio_phi = pair.phi(grid) / hat_pair.phi(grid)
    assert np.ptp(ratio_psi) / ratio_psi.mean() < 1e-5
    assert np.ptp(ratio_phi) / ratio_phi.mean() < 1e-5


def test_fundamental_numeric_drifted_brownian():
    mu, sig, r = 0.02, 0.3, 0.04
    model = DiffusionModel(mu=lambda x: mu, mu_prime=lambda x: 0.0,
                           sigma=lambda x: sig, sigma_prime=lambda x: 0.0,
                           r=r, anchor=0.0)
    grid = np.linspace(-2.0, 2.0, 21)
    pair = fundamental_numeric(model, "base", grid)
    gampos = (-mu + math.sqrt(mu * mu + 2 * sig * sig * r)) / sig ** 2
    gamneg = (-mu - math.sqrt(mu * mu + 2 * sig * sig * r)) / sig ** 2
    np.testing.assert_allclose(pair.psi(grid), np.exp(gampos * grid),
                               rtol=1e-7)
    np.testing.assert_allclose(pair.phi(grid), np.exp(gamneg * grid),
                               rtol=1e-7)


def test_fundamental_numeric_wronskian_constancy(ou_model):
    scale = SIG / math.sqrt(2 * RHO)
    grid = np.linspace(M - 3 * scale, M + 3 * scale, 31)
    pair = fundamental_numeric(ou_model, "hat", grid)
    w = np.array([(pair.psi_prime(x) * pair.phi(x)
                   - pair.phi_prime(x) * pair.psi(x))
                  / scale_density(ou_model, x, "hat") for x in grid])
    assert np.ptp(w) / abs(w.mean()) < 1e-6


def test_fundamental_numeric_rejects_bad_grid(ou_model):
    with pytest.raises(ValueError):
        fundamental_numeric(ou_model, "hat", [2.0, 1.9])
    with pytest.raises(ValueError):
        fundamental_numeric(ou_model, "bogus", [1.9, 2.0])


def test_base_derivative_proportional_to_hat_pair(base_pair, hat_pair):
    # the x-derivative of the increasing base solution is itself the
    # increasing hat solution, up to one positive constant (and likewise
    # for the decreasing one, with a sign flip)
    scale = SIG / math.sqrt(2 * RHO)
    xs = np.linspace(M - 5 * scale, M + 5 * scale, 25)
    h = 1e-6
    fd_psi = (base_pair.psi(xs + h) - base_pair.psi(xs - h)) / (2 * h)
    fd_phi = (base_pair.phi(xs + h) - base_pair.phi(xs - h)) / (2 * h)
    r_psi = fd_psi / hat_pair.psi(xs)
    r_phi = -fd_phi / hat_pair.phi(xs)
    assert np.ptp(r_psi) / r_psi.mean() < 1e-5
    assert np.ptp(r_phi) / r_phi.mean() < 1e-5
    assert np.all(r_psi > 0) and np.all(r_phi > 0)


def test_hat_pair_derivative_ratio_identities(ou_model, hat_pair):
    # psi_hat'(b)/S'(b) - psi_hat'(a)/S'(a)
    #     = int_a^b psi_hat (r - mu') mhat' dy, same for phi_hat
    from scipy.integrate import quad

    rng = np.random.default_rng(7)
    scale = SIG / math.sqrt(2 * RHO)
    for _ in range(5):
        a, b = np.sort(M + scale * rng.uniform(-3, 3, size=2))
        if b - a < 1e-3:
            b = a + 1e-3
        for fn, dfn in ((hat_pair.psi, hat_pair.psi_prime),
                        (hat_pair.phi, hat_pair.phi_prime)):
            lhs = (dfn(b) / scale_density(ou_model, b, "hat")
                   - dfn(a) / scale_density(ou_model, a, "hat"))
            rhs, _ = quad(lambda y: fn(y) * (R + RHO)
                          * speed_density(ou_model, y, "hat"), a, b,
                          epsabs=1e-13, epsrel=1e-11, limit=300)
            assert abs(lhs - rhs) <= 1e-6 * max(abs(lhs), abs(rhs))
