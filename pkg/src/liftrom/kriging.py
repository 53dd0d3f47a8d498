"""Zero-mean simple Kriging of reduced coordinates (the POD-Krig baseline)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla

__all__ = [
    "GpModel",
    "KrigingError",
    "PodKrigSurrogate",
    "se_kernel",
    "correlation",
    "fit",
    "predict",
    "fit_surrogate",
    "pod_krig_coords",
    "pod_krig_predict",
    "save_surrogate",
    "load_surrogate",
]

NUGGETS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
REFINE_MAX = 100
LAMBDA_FLOOR = 1e-8  # smallest eigenvalue of R admitted by the length-scale search


class KrigingError(ValueError):
    pass


def se_kernel(a, b, ell: float) -> float:
    """Isotropic squared exponential ``exp(-|a - b|^2 / (2 ell^2))``."""
    if not ell > 0:
        raise ValueError("length-scale must be positive")
    r = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.exp(-np.dot(r.ravel(), r.ravel()) / (2.0 * ell * ell)))


def correlation(XA, XB, ell: float) -> np.ndarray:
    XA, XB = np.atleast_2d(XA), np.atleast_2d(XB)
    d2 = np.sum(XA * XA, 1)[:, None] + np.sum(XB * XB, 1)[None, :] - 2.0 * XA @ XB.T
    return np.exp(-np.maximum(d2, 0.0) / (2.0 * ell * ell))


@dataclass
class GpModel:
    """Fitted model on standardized inputs ``X = (Theta - shift) / scale``."""

    X: np.ndarray
    y: np.ndarray
    ell: float
    sigma2: float
    nugget: float
    L: np.ndarray
    alpha: np.ndarray
    shift: np.ndarray
    scale: np.ndarray

    def standardize(self, theta):
        return (np.atleast_2d(theta) - self.shift) / self.scale


def _chol(X, ell):
    R0 = correlation(X, X, ell)
    n = len(X)
    for nug in NUGGETS:
        try:
            return sla.cholesky(R0 + nug * np.eye(n), lower=True), nug
        except np.linalg.LinAlgError:
            continue
    raise KrigingError(f"correlation matrix not factorizable at ell={ell:.3g} even with nugget {NUGGETS[-1]:g}")


def _ell_cap(X, lo, hi):
    """Largest length-scale in ``[lo, hi]`` whose correlation matrix keeps
    its smallest eigenvalue above ``LAMBDA_FLOOR`` (bisection on log ell;
    the SE correlation matrix degenerates monotonically as ell grows)."""

    def ok(log_ell):
        return np.linalg.eigvalsh(correlation(X, X, math.exp(log_ell)))[0] >= LAMBDA_FLOOR

    a, b = math.log(lo), math.log(hi)
    if ok(b):
        return hi
    if not ok(a):
        return lo
    while b - a > 1e-6:
        m = 0.5 * (a + b)
        a, b = (m, b) if ok(m) else (a, m)
    return math.exp(a)


def _profile_nll(X, y, log_ell):
    """Negative concentrated log-likelihood (sigma^2 profiled out)."""
    L, _ = _chol(X, math.exp(log_ell))
    a = sla.cho_solve((L, True), y)
    M = len(y)
    s2 = max(float(y @ a) / M, 1e-300)
    return 0.5 * M * math.log(s2) + np.sum(np.log(np.diag(L)))


def _standardizer(theta):
    shift = theta.mean(axis=0)
    scale = theta.std(axis=0)
    scale[scale == 0] = 1.0
    return shift, scale


def fit(theta, values, ell_bounds=(1e-2, 1e2), tol=1e-4, _std=None) -> GpModel:
    """Maximum-likelihood length-scale by golden-section search over
    ``log ell``; ``sigma^2 = y^T R^-1 y / M``.

    The search interval is cut where the correlation matrix becomes
    numerically singular, so the mean still interpolates the data.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    y = np.asarray(values, dtype=float).ravel()
    M = theta.shape[0]
    if y.size != M:
        raise ValueError(f"{y.size} values for {M} inputs")
    if M < 3:
        raise ValueError("Kriging needs at least 3 training points")
    if np.unique(theta, axis=0).shape[0] != M:
        raise ValueError("training inputs contain duplicate rows")
    if not 0 < ell_bounds[0] < ell_bounds[1]:
        raise ValueError("invalid length-scale bounds")
    shift, scale = _std if _std is not None else _standardizer(theta)
    X = (theta - shift) / scale
    # beyond the cap the nugget, not the data, shapes the likelihood
    hi = _ell_cap(X, *ell_bounds)
    if not np.any(y):
        ell = math.sqrt(ell_bounds[0] * hi)
    elif hi <= ell_bounds[0]:
        ell = ell_bounds[0]
    else:
        a, b = math.log(ell_bounds[0]), math.log(hi)
        c, e = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
        fc, fe = _profile_nll(X, y, c), _profile_nll(X, y, e)
        while b - a > tol:
            if fc < fe:
                b, e, fe = e, c, fc
                c = b - GOLDEN * (b - a)
                fc = _profile_nll(X, y, c)
            else:
                a, c, fc = c, e, fe
                e = a + GOLDEN * (b - a)
                fe = _profile_nll(X, y, e)
        ell = math.exp(0.5 * (a + b))
    L, nug = _chol(X, ell)
    alpha = sla.cho_solve((L, True), y)
    sigma2 = float(y @ alpha) / M
    # the nugget only regularizes the factor: refine the weights against the
    # nugget-free correlation so the mean still interpolates the data
    R0 = correlation(X, X, ell)
    res = y - R0 @ alpha
    for _ in range(REFINE_MAX):
        step = alpha + sla.cho_solve((L, True), res)
        res_new = y - R0 @ step
        if np.abs(res_new).max() >= np.abs(res).max():
            break
        alpha, res = step, res_new
    return GpModel(X, y, ell, sigma2, nug, L, alpha, shift, scale)


def predict(model: GpModel, theta):
    """Posterior mean and variance (clamped at zero) at ``theta``.

    Returns scalars for a single point, arrays for a batch.
    """
    single = np.ndim(theta) <= 1
    Xq = model.standardize(theta)
    r = correlation(Xq, model.X, model.ell)
    mean = r @ model.alpha
    v = sla.solve_triangular(model.L, r.T, lower=True)
    var = np.maximum(model.sigma2 * (1.0 - np.sum(v * v, axis=0)), 0.0)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


@dataclass
class PodKrigSurrogate:
    """One model per retained reduced coordinate, sharing the basis."""

    models: list
    basis: object = None

    @property
    def count(self) -> int:
        return len(self.models)


def fit_surrogate(thetas, coords, basis=None, ell_bounds=(1e-2, 1e2)) -> PodKrigSurrogate:
    """Fit a model per column of ``coords`` (``M x k``)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    coords = np.asarray(coords, dtype=float)
    if basis is not None and coords.shape[1] != basis.k:
        raise ValueError(f"{coords.shape[1]} coordinates but basis has k={basis.k}")
    std = _standardizer(thetas)
    return PodKrigSurrogate([fit(thetas, coords[:, j], ell_bounds, _std=std) for j in range(coords.shape[1])], basis)


def pod_krig_coords(sur: PodKrigSurrogate, theta) -> np.ndarray:
    return np.array([predict(m, theta)[0] for m in sur.models])


def pod_krig_predict(sur: PodKrigSurrogate, db, theta, mesh=None) -> dict:
    """Interpolated reduced state lifted and post-processed like the ROM."""
    from .romdb import predict_full

    out = predict_full(db, pod_krig_coords(sur, theta), theta, mesh)
    return out


GP_MAGIC = b"liftrom-gp v1"


def save_surrogate(sur: PodKrigSurrogate, path) -> None:
    """Per model: ell, sigma^2, nugget, values, alpha and the Cholesky factor;
    the shared standardized inputs are written once."""
    if not sur.models:
        raise ValueError("surrogate has no models")
    m0 = sur.models[0]
    M, d = m0.X.shape
    with open(path, "wb") as fh:
        fh.write(GP_MAGIC + f" {sur.count} {M} {d}\n".encode())
        for a in (m0.shift, m0.scale, m0.X):
            fh.write(np.ascontiguousarray(a, "<f8").tobytes())
        for m in sur.models:
            fh.write(np.array([m.ell, m.sigma2, m.nugget], "<f8").tobytes())
            for a in (m.y, m.alpha, m.L):
                fh.write(np.ascontiguousarray(a, "<f8").tobytes())


def load_surrogate(path, basis=None) -> PodKrigSurrogate:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    head = raw[:nl].split() if nl > 0 else []
    if len(head) != 5 or b" ".join(head[:2]) != GP_MAGIC:
        raise ValueError(f"not a liftrom-gp v1 file: {path}")
    count, M, d = (int(t) for t in head[2:])
    need = 8 * (2 * d + M * d + count * (3 + 2 * M + M * M))
    if len(raw) - nl - 1 != need:
        raise ValueError(f"truncated or oversized surrogate file: {path}")
    flat = np.frombuffer(raw, "<f8", need // 8, nl + 1).copy()
    o = 0

    def take(n):
        nonlocal o
        o += n
        return flat[o - n : o]

    shift, scale, X = take(d), take(d), take(M * d).reshape(M, d)
    models = []
    for _ in range(count):
        ell, s2, nug = take(3)
        y, alpha, L = take(M), take(M), take(M * M).reshape(M, M)
        models.append(GpModel(X, y, float(ell), float(s2), float(nug), L, alpha, shift, scale))
    return PodKrigSurrogate(models, basis)
