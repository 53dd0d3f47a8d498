# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Euler residual kernel. Mirrors ``_kernels_py.compute_residual``."""
from libc.math cimport sqrt, fabs, pow

import numpy as np


cdef inline void _rusanov(double rl, double ul, double vl, double pl,
                          double rr, double ur, double vr, double pr,
                          double nx, double ny, double g,
                          double* f, double* lam) noexcept nogil:
    cdef double el = pl / (g - 1.0) + 0.5 * rl * (ul * ul + vl * vl)
    cdef double er = pr / (g - 1.0) + 0.5 * rr * (ur * ur + vr * vr)
    cdef double vnl = ul * nx + vl * ny
    cdef double vnr = ur * nx + vr * ny
    cdef double cl = sqrt(g * pl / rl)
    cdef double cr = sqrt(g * pr / rr)
    cdef double a = fabs(vnl) + cl
    cdef double b = fabs(vnr) + cr
    cdef double lm = a if a > b else b
    f[0] = 0.5 * (rl * vnl + rr * vnr) - 0.5 * lm * (rr - rl)
    f[1] = 0.5 * (rl * ul * vnl + pl * nx + rr * ur * vnr + pr * nx) - 0.5 * lm * (rr * ur - rl * ul)
    f[2] = 0.5 * (rl * vl * vnl + pl * ny + rr * vr * vnr + pr * ny) - 0.5 * lm * (rr * vr - rl * vl)
    f[3] = 0.5 * ((el + pl) * vnl + (er + pr) * vnr) - 0.5 * lm * (er - el)
    lam[0] = lm


cdef inline void _prim(double[:, ::1] U, Py_ssize_t i, double g,
                       double* r, double* u, double* v, double* p) noexcept nogil:
    r[0] = U[i, 0]
    u[0] = U[i, 1] / r[0]
    v[0] = U[i, 2] / r[0]
    p[0] = (g - 1.0) * (U[i, 3] - 0.5 * r[0] * (u[0] * u[0] + v[0] * v[0]))


cdef inline void _farfield(double r, double u, double v, double p,
                           double nx, double ny, double ri, double ui, double vi, double pi_,
                           double g, double* rb, double* ub, double* vb, double* pb) noexcept nogil:
    cdef double gm1 = g - 1.0
    cdef double ci = sqrt(g * p / r)
    cdef double cinf = sqrt(g * pi_ / ri)
    cdef double vn = u * nx + v * ny
    cdef double vninf = ui * nx + vi * ny
    cdef double rp, rm, vnb, cb, s, ut, vt
    if vninf <= -cinf:
        rb[0] = ri; ub[0] = ui; vb[0] = vi; pb[0] = pi_
        return
    if vn >= ci:
        rb[0] = r; ub[0] = u; vb[0] = v; pb[0] = p
        return
    rp = vn + 2.0 * ci / gm1
    rm = vninf - 2.0 * cinf / gm1
    vnb = 0.5 * (rp + rm)
    cb = 0.25 * gm1 * (rp - rm)
    if vnb > 0.0:
        s = p / pow(r, g)
        ut = u - vn * nx
        vt = v - vn * ny
    else:
        s = pi_ / pow(ri, g)
        ut = ui - vninf * nx
        vt = vi - vninf * ny
    rb[0] = pow(cb * cb / (g * s), 1.0 / gm1)
    pb[0] = rb[0] * cb * cb / g
    ub[0] = ut + vnb * nx
    vb[0] = vt + vnb * ny


def compute_residual(double[:, ::1] U, inner, wall, far, winf, double gamma,
                     double[:, ::1] R, double[::1] lam):
    cdef long[::1] io = inner[0]
    cdef long[::1] inb = inner[1]
    cdef double[::1] inx = inner[2]
    cdef double[::1] iny = inner[3]
    cdef double[::1] ia = inner[4]
    cdef long[::1] wo = wall[0]
    cdef double[::1] wnx = wall[1]
    cdef double[::1] wny = wall[2]
    cdef double[::1] wa = wall[3]
    cdef long[::1] fo = far[0]
    cdef double[::1] fnx = far[1]
    cdef double[::1] fny = far[2]
    cdef double[::1] fa = far[3]
    cdef double ri = winf[0], ui = winf[1], vi = winf[2], pi_ = winf[3]
    cdef Py_ssize_t n = U.shape[0], f, i, j, k
    cdef double rl, ul, vl, pl, rr, ur, vr, pr, lm, a, c, vn
    cdef double flux[4]
    with nogil:
        for i in range(n):
            R[i, 0] = 0.0; R[i, 1] = 0.0; R[i, 2] = 0.0; R[i, 3] = 0.0
            lam[i] = 0.0
        for f in range(io.shape[0]):
            i = io[f]
            j = inb[f]
            _prim(U, i, gamma, &rl, &ul, &vl, &pl)
            _prim(U, j, gamma, &rr, &ur, &vr, &pr)
            _rusanov(rl, ul, vl, pl, rr, ur, vr, pr, inx[f], iny[f], gamma, flux, &lm)
            a = ia[f]
            for k in range(4):
                R[i, k] += flux[k] * a
                R[j, k] -= flux[k] * a
            lam[i] += lm * a
            lam[j] += lm * a
        for f in range(wo.shape[0]):
            i = wo[f]
            _prim(U, i, gamma, &rl, &ul, &vl, &pl)
            a = wa[f]
            R[i, 1] += pl * a * wnx[f]
            R[i, 2] += pl * a * wny[f]
            c = sqrt(gamma * pl / rl)
            vn = ul * wnx[f] + vl * wny[f]
            lam[i] += (fabs(vn) + c) * a
        for f in range(fo.shape[0]):
            i = fo[f]
            _prim(U, i, gamma, &rl, &ul, &vl, &pl)
            _farfield(rl, ul, vl, pl, fnx[f], fny[f], ri, ui, vi, pi_, gamma, &rr, &ur, &vr, &pr)
            _rusanov(rl, ul, vl, pl, rr, ur, vr, pr, fnx[f], fny[f], gamma, flux, &lm)
            a = fa[f]
            for k in range(4):
                R[i, k] += flux[k] * a
            lam[i] += lm * a
