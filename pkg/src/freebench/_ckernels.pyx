# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled continuum kernels. Same interface as ``freebench._pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, sin, cos, fabs, isfinite, NAN, M_PI

cnp.import_array()

DEF OK = 0
DEF NO_BRACKET = 1
DEF NOT_CONVERGED = 2
DEF BAD_STRETCH = 3

cdef double LAMBDA_MIN = 0.5
cdef double LAMBDA_MAX = 2.0
cdef double BRACKET_LO = 0.2
cdef double BRACKET_HI = 5.0
cdef double RTOL = 4 * 2.220446049250313e-16


cdef struct Point:
    double sg, cg, L, Ri, Ro, lam, phi, P, C1, C2
    const double *nodes
    const double *weights
    Py_ssize_t nq


cdef inline void stress_at(const Point *p, double r, double ri,
                           double *s_rr, double *s_tt, double *s_zz, double *s_tz) nogil:
    cdef double R = sqrt(p.lam * (r * r - ri * ri) + p.Ri * p.Ri)
    cdef double f_rr = R / (r * p.lam)
    cdef double f_tt = r / R
    cdef double f_tz = r * p.phi / p.L
    cdef double a_t = f_tt * p.sg + f_tz * p.cg
    cdef double a_z = p.lam * p.cg
    cdef double k = 2.0 * p.C2 * (a_t * a_t + a_z * a_z - 1.0)
    s_rr[0] = p.C1 * f_rr * f_rr
    s_tt[0] = p.C1 * (f_tt * f_tt + f_tz * f_tz) + k * a_t * a_t
    s_zz[0] = p.C1 * p.lam * p.lam + k * a_z * a_z
    s_tz[0] = p.C1 * f_tz * p.lam + k * a_t * a_z


cdef inline double outer(const Point *p, double ri) nogil:
    return sqrt(ri * ri + (p.Ro * p.Ro - p.Ri * p.Ri) / p.lam)


cdef double g(const Point *p, double ri) nogil:
    cdef double ro = outer(p, ri)
    cdef double half = 0.5 * (ro - ri)
    cdef double mid = 0.5 * (ro + ri)
    cdef double acc = 0.0, r, s_rr, s_tt, s_zz, s_tz
    cdef Py_ssize_t k
    for k in range(p.nq):
        r = mid + half * p.nodes[k]
        stress_at(p, r, ri, &s_rr, &s_tt, &s_zz, &s_tz)
        acc += p.weights[k] * (s_rr - s_tt) / r
    return p.P + half * acc


cdef void point_forces(const Point *p, double ri, double *F, double *M) nogil:
    cdef double ro = outer(p, ri)
    cdef double half = 0.5 * (ro - ri)
    cdef double mid = 0.5 * (ro + ri)
    cdef double acc_f = 0.0, acc_m = 0.0, r, w, s_rr, s_tt, s_zz, s_tz
    cdef Py_ssize_t k
    for k in range(p.nq):
        r = mid + half * p.nodes[k]
        w = half * p.weights[k]
        stress_at(p, r, ri, &s_rr, &s_tt, &s_zz, &s_tz)
        acc_f += w * ((s_zz - s_rr) * r + (s_rr - s_tt) * (r * r - ri * ri) / (2.0 * r))
        acc_m += w * s_tz * r * r
    F[0] = -2.0 * M_PI * acc_f + M_PI * ri * ri * p.P
    M[0] = -2.0 * M_PI * acc_m


cdef int brent(const Point *p, double xa, double xb, double xtol, int maxiter, double *root) nogil:
    cdef double xpre = xa, xcur = xb, xblk = 0.0
    cdef double fpre = g(p, xa), fcur = g(p, xb), fblk = 0.0
    cdef double spre = 0.0, scur = 0.0, sbis, delta, stry, dpre, dblk
    cdef int i
    if not (isfinite(fpre) and isfinite(fcur)) or fpre * fcur > 0:
        return NO_BRACKET
    if fpre == 0:
        root[0] = xpre
        return OK
    if fcur == 0:
        root[0] = xcur
        return OK
    for i in range(maxiter):
        if fpre != 0 and fcur != 0 and ((fpre < 0) != (fcur < 0)):
            xblk = xpre
            fblk = fpre
            spre = xcur - xpre
            scur = spre
        if fabs(fblk) < fabs(fcur):
            xpre = xcur
            xcur = xblk
            xblk = xpre
            fpre = fcur
            fcur = fblk
            fblk = fpre
        delta = (xtol + RTOL * fabs(xcur)) / 2.0
        sbis = (xblk - xcur) / 2.0
        if fcur == 0 or fabs(sbis) < delta:
            root[0] = xcur
            return OK
        if fabs(spre) > delta and fabs(fcur) < fabs(fpre):
            if xpre == xblk:
                stry = -fcur * (xcur - xpre) / (fcur - fpre)
            else:
                dpre = (fpre - fcur) / (xpre - xcur)
                dblk = (fblk - fcur) / (xblk - xcur)
                stry = -fcur * (fblk * dblk - fpre * dpre) / (dblk * dpre * (fblk - fpre))
            if 2 * fabs(stry) < min(fabs(spre), 3 * fabs(sbis) - delta):
                spre = scur
                scur = stry
            else:
                spre = sbis
                scur = sbis
        else:
            spre = sbis
            scur = sbis
        xpre = xcur
        fpre = fcur
        if fabs(scur) > delta:
            xcur += scur
        else:
            xcur += delta if sbis > 0 else -delta
        fcur = g(p, xcur)
    root[0] = xcur
    return NOT_CONVERGED


cdef void fill(Point *p, double gamma, double L, double Ri, double Ro, double l, double phi,
               double P, double C1, double C2, const double[::1] nodes, const double[::1] weights):
    p.sg = sin(gamma)
    p.cg = cos(gamma)
    p.L = L
    p.Ri = Ri
    p.Ro = Ro
    p.lam = l / L
    p.phi = phi
    p.P = P
    p.C1 = C1
    p.C2 = C2
    p.nodes = &nodes[0]
    p.weights = &weights[0]
    p.nq = nodes.shape[0]


def residual(double ri, double gamma, double L, double Ri, double Ro, double l, double phi,
             double P, double C1, double C2, nodes, weights):
    cdef const double[::1] nv = np.ascontiguousarray(nodes, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Point p
    fill(&p, gamma, L, Ri, Ro, l, phi, P, C1, C2, nv, wv)
    return g(&p, ri)


def continuum_batch(gamma, L, Ri, Ro, l, phi, P, double C1, double C2, nodes, weights,
                    double xtol=1e-15, int maxiter=200):
    cdef const double[::1] vg = np.ascontiguousarray(gamma, dtype=np.float64)
    cdef const double[::1] vL = np.ascontiguousarray(L, dtype=np.float64)
    cdef const double[::1] vRi = np.ascontiguousarray(Ri, dtype=np.float64)
    cdef const double[::1] vRo = np.ascontiguousarray(Ro, dtype=np.float64)
    cdef const double[::1] vl = np.ascontiguousarray(l, dtype=np.float64)
    cdef const double[::1] vphi = np.ascontiguousarray(phi, dtype=np.float64)
    cdef const double[::1] vP = np.ascontiguousarray(P, dtype=np.float64)
    cdef const double[::1] nv = np.ascontiguousarray(nodes, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = vl.shape[0], k
    F_out = np.full(n, np.nan)
    M_out = np.full(n, np.nan)
    ri_out = np.full(n, np.nan)
    st_out = np.zeros(n, dtype=np.int8)
    cdef double[::1] vF = F_out
    cdef double[::1] vM = M_out
    cdef double[::1] vri = ri_out
    cdef signed char[::1] vst = st_out
    cdef Point p
    cdef double root = 0.0, Fk = 0.0, Mk = 0.0
    cdef int st
    for k in range(n):
        fill(&p, vg[k], vL[k], vRi[k], vRo[k], vl[k], vphi[k], vP[k], C1, C2, nv, wv)
        if not (LAMBDA_MIN < p.lam < LAMBDA_MAX):
            vst[k] = BAD_STRETCH
            continue
        with nogil:
            st = brent(&p, BRACKET_LO * p.Ri, BRACKET_HI * p.Ri, xtol, maxiter, &root)
        vst[k] = st
        if st == OK:
            point_forces(&p, root, &Fk, &Mk)
            vri[k] = root
            vF[k] = Fk
            vM[k] = Mk
    return F_out, M_out, ri_out, st_out
