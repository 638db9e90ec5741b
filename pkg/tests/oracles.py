"""Independent reference implementations used by the tests.

Nothing here imports the package's model code; each oracle rebuilds its
quantity from the defining formulas with a different numerical method.
"""

import math

import mpmath
import numpy as np
from scipy.integrate import cumulative_simpson, simpson


def scalar_error(pred, meas):
    """Normalized RMS error by explicit loops over (F, M) pairs."""
    F_max = max(abs(m[0]) for m in meas)
    M_max = max(abs(m[1]) for m in meas)
    total = 0.0
    for (pf, pm), (mf, mm) in zip(pred, meas):
        total += ((mf - pf) / F_max) ** 2 + ((mm - pm) / M_max) ** 2
    return math.sqrt(total / len(meas))


def mp_lumped(gamma_deg, L_mm, Ro_mm, l_mm, phi_rad, dps=50):
    """Outer radius (m) and volume (m^3) of the fiber-constrained tube at 50 digits."""
    with mpmath.workdps(dps):
        g = mpmath.radians(mpmath.mpf(gamma_deg))
        L = mpmath.mpf(L_mm) / 1000
        Ro = mpmath.mpf(Ro_mm) / 1000
        l = mpmath.mpf(l_mm) / 1000
        phi = mpmath.mpf(phi_rad)
        B = L / mpmath.cos(g)
        Phi = L * mpmath.tan(g) / Ro
        ro = mpmath.sqrt(B ** 2 - l ** 2) / abs(Phi + phi)
        V = mpmath.pi * l * ro ** 2
        return ro, V


def _wall_fields(ri, design, l, phi, C1, C2, n):
    """Extra-stress components on an (n+1)-point grid of current radius."""
    gamma, L, Ri, Ro = design
    lam = l / L
    ro = math.sqrt(ri * ri + (Ro * Ro - Ri * Ri) / lam)
    r = np.linspace(ri, ro, n + 1)
    R = np.sqrt(lam * (r * r - ri * ri) + Ri * Ri)
    F = np.zeros((n + 1, 3, 3))
    F[:, 0, 0] = R / (r * lam)
    F[:, 1, 1] = r / R
    F[:, 1, 2] = r * phi / L
    F[:, 2, 2] = lam
    a0 = np.array([0.0, math.sin(gamma), math.cos(gamma)])
    a = F @ a0
    I4 = np.einsum("i,nji,njk,k->n", a0, F, F, a0)
    S = C1 * np.einsum("nij,nkj->nik", F, F) + 2 * C2 * (I4 - 1)[:, None, None] * np.einsum("ni,nj->nij", a, a)
    return r, S


def dense_residual(ri, design, l, phi, P, C1, C2, n=2000):
    r, S = _wall_fields(ri, design, l, phi, C1, C2, n)
    return P + simpson((S[:, 0, 0] - S[:, 1, 1]) / r, x=r)


def dense_solve(design, l, phi, P, C1, C2, n=2000, tol=1e-12):
    """Bisection for the inner radius on [0.2 Ri, 5 Ri]."""
    Ri = design[2]
    lo, hi = 0.2 * Ri, 5.0 * Ri
    g_lo = dense_residual(lo, design, l, phi, P, C1, C2, n)
    g_hi = dense_residual(hi, design, l, phi, P, C1, C2, n)
    assert g_lo * g_hi < 0, "no bracket"
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        g_mid = dense_residual(mid, design, l, phi, P, C1, C2, n)
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def dense_forces(design, l, phi, P, C1, C2, n=2000):
    """(ri, F, M) from the dense-grid solve and cumulative radial integration."""
    ri = dense_solve(design, l, phi, P, C1, C2, n)
    r, S = _wall_fields(ri, design, l, phi, C1, C2, n)
    h = (S[:, 0, 0] - S[:, 1, 1]) / r
    # sigma_rr(r) = int_r^ro h = c(ro) - c(r) with c the running integral from ri
    c = cumulative_simpson(h, x=r, initial=0.0)
    sigma_rr = c[-1] - c
    b = S[:, 0, 0] - sigma_rr
    szz = S[:, 2, 2] - b
    F = -2 * math.pi * simpson(szz * r, x=r) + math.pi * ri * ri * P
    M = -2 * math.pi * simpson(S[:, 1, 2] * r * r, x=r)
    return ri, F, M


def scalar_forward(w, o, u, b, in_min, in_max, out_min, out_max, x):
    """Network output by explicit sums, no array operations."""
    xn = []
    for i in range(len(x)):
        span = in_max[i] - in_min[i]
        xn.append(2.0 * (x[i] - in_min[i]) / span - 1.0 if span > 0 else 0.0)
    hidden = []
    for j in range(len(o)):
        z = o[j]
        for i in range(len(xn)):
            z += w[j][i] * xn[i]
        hidden.append(math.tanh(z))
    out = []
    for k in range(len(b)):
        y = b[k]
        for j in range(len(hidden)):
            y += u[k][j] * hidden[j]
        out.append(out_min[k] + 0.5 * (y + 1.0) * (out_max[k] - out_min[k]))
    return out
