"""Pure-Python continuum kernels; fallback for the compiled ``_ckernels`` module.

Both modules expose the same functions with the same argument order:

    residual(ri, gamma, L, Ri, Ro, l, phi, P, C1, C2, nodes, weights) -> float
    continuum_batch(gamma, L, Ri, Ro, l, phi, P, C1, C2, nodes, weights,
                    xtol, maxiter) -> (F, M, ri, status)

Status codes: 0 ok, 1 no sign change in the bracket, 2 root search did not
converge, 3 axial stretch outside the guard band.
"""

import math

import numpy as np
from scipy.optimize import brentq

OK, NO_BRACKET, NOT_CONVERGED, BAD_STRETCH = 0, 1, 2, 3
LAMBDA_MIN, LAMBDA_MAX = 0.5, 2.0
BRACKET = (0.2, 5.0)


def stress_at(r, ri, lam, phi, L, Ri, gamma, C1, C2):
    """Extra-stress components (rr, tt, zz, tz) at current radius ``r``."""
    R = np.sqrt(lam * (r * r - ri * ri) + Ri * Ri)
    f_rr = R / (r * lam)
    f_tt = r / R
    f_tz = r * phi / L
    a_t = f_tt * math.sin(gamma) + f_tz * math.cos(gamma)
    a_z = lam * math.cos(gamma)
    k = 2.0 * C2 * (a_t * a_t + a_z * a_z - 1.0)
    s_rr = C1 * f_rr * f_rr
    s_tt = C1 * (f_tt * f_tt + f_tz * f_tz) + k * a_t * a_t
    s_zz = C1 * lam * lam + k * a_z * a_z
    s_tz = C1 * f_tz * lam + k * a_t * a_z
    return s_rr, s_tt, s_zz, s_tz


def _outer(ri, lam, Ri, Ro):
    return math.sqrt(ri * ri + (Ro * Ro - Ri * Ri) / lam)


def residual(ri, gamma, L, Ri, Ro, l, phi, P, C1, C2, nodes, weights):
    lam = l / L
    ro = _outer(ri, lam, Ri, Ro)
    half = 0.5 * (ro - ri)
    r = 0.5 * (ro + ri) + half * np.asarray(nodes)
    s_rr, s_tt, _, _ = stress_at(r, ri, lam, phi, L, Ri, gamma, C1, C2)
    return P + half * float(np.dot(weights, (s_rr - s_tt) / r))


def forces(ri, gamma, L, Ri, Ro, l, phi, P, C1, C2, nodes, weights):
    """Axial force and moment for a solved inner radius.

    The radial stress is the integral of the hoop/radial stress difference
    from the traction-free outer wall; its contribution to the axial force is
    folded into a single integral by exchanging the integration order.
    """
    lam = l / L
    ro = _outer(ri, lam, Ri, Ro)
    half = 0.5 * (ro - ri)
    r = 0.5 * (ro + ri) + half * np.asarray(nodes)
    s_rr, s_tt, s_zz, s_tz = stress_at(r, ri, lam, phi, L, Ri, gamma, C1, C2)
    w = half * np.asarray(weights)
    srr_moment = float(np.dot(w, (s_rr - s_tt) * (r * r - ri * ri) / (2.0 * r)))
    F = -2.0 * math.pi * (float(np.dot(w, (s_zz - s_rr) * r)) + srr_moment) + math.pi * ri * ri * P
    M = -2.0 * math.pi * float(np.dot(w, s_tz * r * r))
    return F, M


def solve_point(gamma, L, Ri, Ro, l, phi, P, C1, C2, nodes, weights, xtol=1e-15, maxiter=200):
    lam = l / L
    if not LAMBDA_MIN < lam < LAMBDA_MAX:
        return math.nan, BAD_STRETCH
    args = (gamma, L, Ri, Ro, l, phi, P, C1, C2, nodes, weights)
    a, b = BRACKET[0] * Ri, BRACKET[1] * Ri
    ga, gb = residual(a, *args), residual(b, *args)
    if ga == 0.0:
        return a, OK
    if gb == 0.0:
        return b, OK
    if math.copysign(1.0, ga) == math.copysign(1.0, gb) or not (math.isfinite(ga) and math.isfinite(gb)):
        return math.nan, NO_BRACKET
    try:
        root, info = brentq(residual, a, b, args=args, xtol=xtol, maxiter=maxiter,
                            full_output=True, disp=False)
    except ValueError:
        return math.nan, NO_BRACKET
    if not info.converged:
        return root, NOT_CONVERGED
    return root, OK


def continuum_batch(gamma, L, Ri, Ro, l, phi, P, C1, C2, nodes, weights, xtol=1e-15, maxiter=200):
    n = len(l)
    F = np.full(n, np.nan)
    M = np.full(n, np.nan)
    ri = np.full(n, np.nan)
    status = np.zeros(n, dtype=np.int8)
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    for k in range(n):
        args = (float(gamma[k]), float(L[k]), float(Ri[k]), float(Ro[k]),
                float(l[k]), float(phi[k]), float(P[k]), C1, C2, nodes, weights)
        root, st = solve_point(*args, xtol=xtol, maxiter=maxiter)
        status[k] = st
        if st == OK:
            ri[k] = root
            F[k], M[k] = forces(root, *args)
    return F, M, ri, status
