from dataclasses import replace

import numpy as np
import pytest

from targetzone.free_boundary import (QuadratureKernels, SolverError,
                                      hjb_residual, k1, k2, solve_band,
                                      x_star, y_star)
from targetzone.ou import (OuClosedFormKernels, OuHoldingResolvent,
                           default_spec, ou_base_pair, ou_hat_pair,
                           solve_ou_band)

SPEC = default_spec()  # c1 = c2 = 0.0335, m = theta = log 7.46038


@pytest.fixture(scope="module")
def env():
    model = SPEC.to_model()
    cost = SPEC.to_cost()
    return model, cost, ou_hat_pair(SPEC), ou_base_pair(SPEC)


@pytest.fixture(scope="module")
def solution():
    return solve_ou_band(SPEC)


def test_k_functionals_vanish_on_empty_interval(env):
    model, cost, hat_pair, _ = env
    a = SPEC.m - 0.01
    assert k1(a, a, model, cost, hat_pair) == 0.0
    assert k2(a, a, model, cost, hat_pair) == 0.0
    with pytest.raises(ValueError):
        k1(a, a - 1e-3, model, cost, hat_pair)


def test_k2_increasing_beyond_upper_sign_change(env):
    model, cost, hat_pair, _ = env
    a = SPEC.m - 0.03
    bs = SPEC.x_tilde_2 + np.array([0.005, 0.01, 0.02, 0.04])
    vals = [k2(b, a, model, cost, hat_pair) for b in bs]
    assert np.all(np.diff(vals) > 0)


@pytest.mark.parametrize("spec", [
    SPEC,
    replace(SPEC, c1=0.02, c2=0.06, theta=SPEC.m + 0.011),
])
def test_quadrature_kernels_match_closed_forms(spec):
    model = spec.to_model()
    cost = spec.to_cost()
    quad_k = QuadratureKernels(model, cost, ou_hat_pair(spec))
    closed = OuClosedFormKernels(spec)
    a, b = 1.99, 2.035
    assert quad_k.k1(a, b) == pytest.approx(closed.k1(a, b), rel=1e-9)
    assert quad_k.k2(a, b) == pytest.approx(closed.k2(a, b), rel=1e-9)
    assert quad_k.tail_upper(b) == pytest.approx(closed.tail_upper(b), rel=1e-8)
    assert quad_k.tail_lower(a) == pytest.approx(closed.tail_lower(a), rel=1e-8)


def test_band_equation_consistency_at_published_boundaries(env, solution):
    # at the solved boundaries (which round to the published 1.98707 /
    # 2.03214) the first band equation holds to quadrature accuracy
    model, cost, hat_pair, _ = env
    a, b = solution.a_star, solution.b_star
    assert round(a, 5) == 1.98707 and round(b, 5) == 2.03214
    lhs = k1(a, b, model, cost, hat_pair)
    rhs = QuadratureKernels(model, cost, hat_pair).tail_upper(b)
    assert abs(lhs - rhs) <= 1e-6 * abs(rhs)


def test_inner_root_at_published_upper_boundary(env):
    model, cost, _, _ = env
    kern = OuClosedFormKernels(SPEC)
    a = x_star(2.03214, model, cost, kern, SPEC.x_tilde_1)
    assert a == pytest.approx(1.98707, abs=1e-4)


def test_inner_root_locations(env):
    model, cost, _, _ = env
    kern = OuClosedFormKernels(SPEC)
    for b in SPEC.x_tilde_2 + np.array([0.004, 0.01, 0.03, 0.08]):
        assert x_star(b, model, cost, kern, SPEC.x_tilde_1) < SPEC.x_tilde_1
    for a in SPEC.x_tilde_1 - np.array([0.004, 0.01, 0.03, 0.08]):
        assert y_star(a, model, cost, kern, SPEC.x_tilde_2) > SPEC.x_tilde_2


def test_inner_maps_decreasing(env):
    model, cost, _, _ = env
    kern = OuClosedFormKernels(SPEC)
    h = 1e-5
    for b in SPEC.x_tilde_2 + np.linspace(0.005, 0.06, 10):
        lo = x_star(b - h, model, cost, kern, SPEC.x_tilde_1)
        hi = x_star(b + h, model, cost, kern, SPEC.x_tilde_1)
        assert hi < lo
    for a in SPEC.x_tilde_1 - np.linspace(0.005, 0.06, 10):
        lo = y_star(a - h, model, cost, kern, SPEC.x_tilde_2)
        hi = y_star(a + h, model, cost, kern, SPEC.x_tilde_2)
        assert hi < lo


def test_scaling_invariance_of_band(env, solution):
    # multiplying psi_hat and phi_hat by arbitrary positive constants must
    # leave the boundaries untouched (the equations are homogeneous)
    model, cost, hat_pair, base_pair = env
    cp, cf = 37.5, 0.004
    scaled = hat_pair._replace(
        psi=lambda x: cp * hat_pair.psi(x),
        psi_prime=lambda x: cp * hat_pair.psi_prime(x),
        phi=lambda x: cf * hat_pair.phi(x),
        phi_prime=lambda x: cf * hat_pair.phi_prime(x),
        wronskian=cp * cf * hat_pair.wronskian)
    sol = solve_band(model, cost, scaled, base_pair,
                     rh=OuHoldingResolvent(SPEC))
    assert sol.a_star == pytest.approx(solution.a_star, abs=1e-10)
    assert sol.b_star == pytest.approx(solution.b_star, abs=1e-10)


def test_uniqueness_grid_scan(env, solution):
    # exactly one cell of the (a, b) grid flips the sign of both band
    # equations, and it contains the solved pair
    kern = OuClosedFormKernels(SPEC)
    spread = 10 * SPEC.sigma
    a_grid = np.linspace(SPEC.x_tilde_1 - spread, SPEC.x_tilde_1 - 1e-6, 25)
    b_grid = np.linspace(SPEC.x_tilde_2 + 1e-6, SPEC.x_tilde_2 + spread, 25)
    f1 = np.array([[kern.k1(a, b) - kern.tail_upper(b) for b in b_grid]
                   for a in a_grid])
    f2 = np.array([[kern.k2(a, b) - kern.tail_lower(a) for b in b_grid]
                   for a in a_grid])
    cells = []
    for i in range(len(a_grid) - 1):
        for j in range(len(b_grid) - 1):
            corners = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)]
            quadrants = {(f1[c] > 0, f2[c] > 0) for c in corners}
            if len(quadrants) == 4:  # both residuals change sign transversally
                cells.append((i, j))
    assert len(cells) == 1
    i, j = cells[0]
    assert a_grid[i] <= solution.a_star <= a_grid[i + 1]
    assert b_grid[j] <= solution.b_star <= b_grid[j + 1]


def test_smooth_fit_second_derivative(solution):
    # one-sided finite differences of u' across each boundary agree,
    # relative to the second-derivative scale inside the band
    h = 1e-8
    mid = 0.5 * (solution.a_star + solution.b_star)
    u2_scale = 1.0 + abs(float(solution.u_second(mid)))
    for edge in (solution.a_star, solution.b_star):
        at = float(solution.u_prime(edge))
        left = (at - float(solution.u_prime(edge - h))) / h
        right = (float(solution.u_prime(edge + h)) - at) / h
        assert abs(left - right) <= 1e-5 * u2_scale


def test_gradient_conditions_at_boundaries(solution):
    assert solution.u_prime(solution.a_star) == pytest.approx(-SPEC.c1,
                                                              abs=1e-8)
    assert solution.u_prime(solution.b_star) == pytest.approx(SPEC.c2,
                                                              abs=1e-8)


def test_hjb_report_inside_and_outside(env, solution):
    model, cost, _, _ = env
    scale = SPEC.stationary_scale()
    grid = np.linspace(SPEC.m - 10 * scale, SPEC.m + 10 * scale, 1000)
    report = hjb_residual(solution, model, cost, grid)
    assert report.equality_inside <= 1e-6
    assert report.inequality_below <= 1e-8
    assert report.inequality_above <= 1e-8
    assert report.gradient_low <= 1e-8
    assert report.gradient_high <= 1e-8
    assert report.min_identity <= 1e-6


def test_flat_region_gradient_exact(solution):
    xs = np.linspace(solution.a_star - 0.1, solution.a_star, 20)
    np.testing.assert_array_equal(solution.u_prime(xs[:-1]), -SPEC.c1)


def test_degenerate_costs_rejected(env):
    from targetzone.free_boundary import CostModel

    model, _, hat_pair, base_pair = env
    with pytest.raises(ValueError):
        replace(SPEC, c1=-0.02, c2=0.01)  # violates c1 + c2 > 0 up front
    k = SPEC.r + SPEC.rho
    bad_cost = CostModel(  # bypasses the parameter-level check; c1 + c2 < 0
        h=lambda x: 0.5 * (x - SPEC.theta) ** 2,
        h_prime=lambda x: x - SPEC.theta,
        c1=lambda x: -0.02, c2=lambda x: 0.01,
        c1_hat=lambda x: k * 0.02, c2_hat=lambda x: -k * 0.01,
        c1_prime=lambda x: 0.0, c2_prime=lambda x: 0.0)
    with pytest.raises(ValueError):
        solve_band(model, bad_cost, hat_pair, base_pair)


def test_inconsistent_inputs_raise_assembly_error(env):
    # kernels solved for one cost level, value assembly for another:
    # the flat-region continuity check must catch it
    model, _, hat_pair, base_pair = env
    other = replace(SPEC, c1=0.5, c2=0.5)
    with pytest.raises(SolverError):
        solve_band(model, other.to_cost(), hat_pair, base_pair,
                   kernels=OuClosedFormKernels(SPEC),
                   rh=OuHoldingResolvent(other))


def test_coefficients_match_resolvent_formulas(env, solution):
    # the smooth-fit 2x2 system must agree with the direct expressions for
    # (A, B) built from the hat resolvent of h' - c1_hat at the lower
    # boundary (better conditioned numerically, provably equivalent at the
    # solved boundaries)
    import numpy as np
    from targetzone.diffusion import resolvent

    model, cost, hat_pair, base_pair = env
    a = solution.a_star
    k = SPEC.r + SPEC.rho
    g = lambda z: (z - SPEC.theta) + k * SPEC.c1  # h' - c1_hat

    rg = resolvent(model, hat_pair, g, a, "hat").value
    h = 2e-5
    rg_p = (resolvent(model, hat_pair, g, a + h, "hat").value
            - resolvent(model, hat_pair, g, a - h, "hat").value) / (2 * h)

    def second(pair_val, pair_der, x):
        return 2.0 * (SPEC.r * pair_val(x)
                      - SPEC.rho * (SPEC.m - x) * pair_der(x)) / SPEC.sigma ** 2

    psi, dpsi = base_pair.psi, base_pair.psi_prime
    phi, dphi = base_pair.phi, base_pair.phi_prime
    ddpsi = second(psi, dpsi, a)
    ddphi = second(phi, dphi, a)
    det = dpsi(a) * ddphi - ddpsi * dphi(a)
    coeff_a = (-rg * ddphi + rg_p * dphi(a)) / det
    coeff_b = (rg * ddpsi - rg_p * dpsi(a)) / det
    assert coeff_a == pytest.approx(solution.coeff_A, rel=1e-6)
    assert coeff_b == pytest.approx(solution.coeff_B, rel=1e-6)
