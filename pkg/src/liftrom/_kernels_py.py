"""Pure-numpy reference implementation of the Euler residual kernel.

Must stay numerically interchangeable with ``_kernels.pyx``; see
``liftrom.kernels`` for backend selection.
"""
import numpy as np


def _primitives(U, gamma):
    rho = U[:, 0]
    u = U[:, 1] / rho
    v = U[:, 2] / rho
    p = (gamma - 1.0) * (U[:, 3] - 0.5 * rho * (u * u + v * v))
    return rho, u, v, p


def _rusanov(rl, ul, vl, pl, rr, ur, vr, pr, nx, ny, gamma):
    el = pl / (gamma - 1.0) + 0.5 * rl * (ul * ul + vl * vl)
    er = pr / (gamma - 1.0) + 0.5 * rr * (ur * ur + vr * vr)
    vnl = ul * nx + vl * ny
    vnr = ur * nx + vr * ny
    cl = np.sqrt(gamma * pl / rl)
    cr = np.sqrt(gamma * pr / rr)
    lam = np.maximum(np.abs(vnl) + cl, np.abs(vnr) + cr)
    f = np.empty((rl.size, 4))
    f[:, 0] = 0.5 * (rl * vnl + rr * vnr) - 0.5 * lam * (rr - rl)
    f[:, 1] = 0.5 * (rl * ul * vnl + pl * nx + rr * ur * vnr + pr * nx) - 0.5 * lam * (rr * ur - rl * ul)
    f[:, 2] = 0.5 * (rl * vl * vnl + pl * ny + rr * vr * vnr + pr * ny) - 0.5 * lam * (rr * vr - rl * vl)
    f[:, 3] = 0.5 * ((el + pl) * vnl + (er + pr) * vnr) - 0.5 * lam * (er - el)
    return f, lam


def farfield_state(rho, u, v, p, nx, ny, winf, gamma):
    """Riemann-invariant boundary state for outward normal ``(nx, ny)``."""
    ri, ui, vi, pi_ = winf
    gm1 = gamma - 1.0
    ci = np.sqrt(gamma * p / rho)
    cinf = np.sqrt(gamma * pi_ / ri)
    vn = u * nx + v * ny
    vninf = ui * nx + vi * ny
    rp = vn + 2.0 * ci / gm1
    rm = vninf - 2.0 * cinf / gm1
    vnb = 0.5 * (rp + rm)
    cb = 0.25 * gm1 * (rp - rm)
    out = vnb > 0.0
    s = np.where(out, p / rho**gamma, pi_ / ri**gamma)
    ut = np.where(out, u - vn * nx, ui - vninf * nx)
    vt = np.where(out, v - vn * ny, vi - vninf * ny)
    rb = (cb * cb / (gamma * s)) ** (1.0 / gm1)
    pb = rb * cb * cb / gamma
    ub = ut + vnb * nx
    vb = vt + vnb * ny
    # supersonic normal velocity: fully upwind
    sup_in = vninf <= -cinf
    sup_out = vn >= ci
    rb = np.where(sup_in, ri, np.where(sup_out, rho, rb))
    ub = np.where(sup_in, ui, np.where(sup_out, u, ub))
    vb = np.where(sup_in, vi, np.where(sup_out, v, vb))
    pb = np.where(sup_in, pi_, np.where(sup_out, p, pb))
    return rb, ub, vb, pb


def compute_residual(U, inner, wall, far, winf, gamma, R, lam):
    """Fill ``R`` (N x 4 net outward flux) and ``lam`` (N, sum of spectral
    radius times face area) for conservative state ``U``.

    ``inner`` = (owner, neighbor, nx, ny, area); ``wall``/``far`` =
    (owner, nx, ny, area).
    """
    n = U.shape[0]
    rho, u, v, p = _primitives(U, gamma)
    R[:] = 0.0
    lam[:] = 0.0

    o, nb, nx, ny, a = inner
    f, lm = _rusanov(rho[o], u[o], v[o], p[o], rho[nb], u[nb], v[nb], p[nb], nx, ny, gamma)
    f *= a[:, None]
    for k in range(4):
        R[:, k] += np.bincount(o, f[:, k], n) - np.bincount(nb, f[:, k], n)
    lam += np.bincount(o, lm * a, n) + np.bincount(nb, lm * a, n)

    o, nx, ny, a = wall
    if o.size:
        c = np.sqrt(gamma * p[o] / rho[o])
        pa = p[o] * a
        R[:, 1] += np.bincount(o, pa * nx, n)
        R[:, 2] += np.bincount(o, pa * ny, n)
        vn = u[o] * nx + v[o] * ny
        lam += np.bincount(o, (np.abs(vn) + c) * a, n)

    o, nx, ny, a = far
    if o.size:
        rb, ub, vb, pb = farfield_state(rho[o], u[o], v[o], p[o], nx, ny, winf, gamma)
        f, lm = _rusanov(rho[o], u[o], v[o], p[o], rb, ub, vb, pb, nx, ny, gamma)
        f *= a[:, None]
        for k in range(4):
            R[:, k] += np.bincount(o, f[:, k], n)
        lam += np.bincount(o, lm * a, n)
