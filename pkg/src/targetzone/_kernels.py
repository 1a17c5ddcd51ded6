"""Compiled inner loops for the Monte Carlo engine.

The reflected kernel marches a block of normals through an Euler step with
projection onto [a, b], for several bands simultaneously (common random
numbers) and optionally for the antithetic mirror of every driving path.
State and accumulator arrays are carried between blocks by the caller, so
the kernels never hold a full path history.

Conventions: the mean-reverting drift enters as x + (drift_a - drift_b * x),
i.e. drift_a = rho * m * dt and drift_b = rho * dt.  `disc` holds discount
factors for the block's step boundaries, disc[k] at the block start plus k
steps.  Projection amounts are credited at the post-step stamp disc[k + 1].
"""

from __future__ import annotations

from numba import njit

__all__ = ["reflected_block", "first_exit_block"]


@njit(cache=True, fastmath=True)
def reflected_block(z, sign_pairs, x, h_prev, acc_h, acc_xi, acc_eta,
                    tot_xi, tot_eta, ab, theta, drift_a, drift_b, vol_sqdt,
                    disc, half_dt):
    n_draw, n_steps = z.shape
    n_bands = ab.shape[0]
    reps = 2 if sign_pairs else 1
    for p in range(n_draw):
        for rep in range(reps):
            ip = reps * p + rep
            sgn = 1.0 if rep == 0 else -1.0
            for k in range(n_steps):
                dz = vol_sqdt * sgn * z[p, k]
                w0 = disc[k]
                w1 = disc[k + 1]
                for j in range(n_bands):
                    a = ab[j, 0]
                    b = ab[j, 1]
                    xv = x[ip, j]
                    xv = xv + (drift_a - drift_b * xv) + dz
                    if xv < a:
                        d = a - xv
                        acc_xi[ip, j] += w1 * d
                        tot_xi[ip, j] += d
                        xv = a
                    elif xv > b:
                        d = xv - b
                        acc_eta[ip, j] += w1 * d
                        tot_eta[ip, j] += d
                        xv = b
                    hv = 0.5 * (xv - theta) * (xv - theta)
                    acc_h[ip, j] += half_dt * (w0 * h_prev[ip, j] + w1 * hv)
                    h_prev[ip, j] = hv
                    x[ip, j] = xv


@njit(cache=True, fastmath=True)
def first_exit_block(z, sign_pairs, x, g_prev, acc_int, alive, exit_side,
                     exit_step, exit_disc, a, b, theta, drift_a, drift_b,
                     vol_sqdt, disc, half_dt, step0):
    """Uncontrolled march until the state leaves (a, b).

    Accumulates the discounted running integral of g(x) = x - theta
    (trapezoid, at the kernel's discount grid) and records the exit side
    (-1 lower, +1 upper), the global step index of the crossing and the
    discount factor at the crossing stamp.
    """
    n_draw, n_steps = z.shape
    reps = 2 if sign_pairs else 1
    for p in range(n_draw):
        for rep in range(reps):
            ip = reps * p + rep
            if not alive[ip]:
                continue
            sgn = 1.0 if rep == 0 else -1.0
            xv = x[ip]
            gv = g_prev[ip]
            acc = acc_int[ip]
            for k in range(n_steps):
                xv = xv + (drift_a - drift_b * xv) + vol_sqdt * sgn * z[p, k]
                gn = xv - theta
                acc += half_dt * (disc[k] * gv + disc[k + 1] * gn)
                gv = gn
                if xv <= a or xv >= b:
                    alive[ip] = False
                    exit_side[ip] = -1 if xv <= a else 1
                    exit_step[ip] = step0 + k + 1
                    exit_disc[ip] = disc[k + 1]
                    break
            x[ip] = xv
            g_prev[ip] = gv
            acc_int[ip] = acc
