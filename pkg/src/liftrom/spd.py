"""Exponential and logarithmic maps on the manifold of SPD matrices."""
from __future__ import annotations

import numpy as np

__all__ = ["SpdError", "sym", "spd_eig", "spd_sqrt_pair", "spd_log", "spd_exp"]

EIG_FLOOR = 1e-14


class SpdError(ValueError):
    pass


def sym(M):
    return 0.5 * (M + M.T)


def spd_eig(B, name="matrix"):
    """Eigen-decomposition of a symmetric matrix that must be positive definite."""
    B = np.asarray(B, dtype=float)
    w, V = np.linalg.eigh(sym(B))
    if w[0] <= 0.0:
        raise SpdError(f"{name} is not positive definite (min eigenvalue {w[0]:.3e})")
    return w, V


def _fn(w, V, f):
    return (V * f(w)) @ V.T


def spd_sqrt_pair(B0):
    """``(B0^{1/2}, B0^{-1/2})`` with eigenvalues floored at ``1e-14 * max``."""
    w, V = spd_eig(B0, "anchor")
    w = np.maximum(w, EIG_FLOOR * w[-1])
    s = np.sqrt(w)
    return (V * s) @ V.T, (V / s) @ V.T


def spd_log(B0, B, _pair=None, check=True):
    """Tangent vector of ``B`` at anchor ``B0``:
    ``B0^{1/2} log(B0^{-1/2} B B0^{-1/2}) B0^{1/2}``.

    ``check=False`` skips the separate positivity test of ``B`` (the
    whitened matrix is still checked).
    """
    if check:
        spd_eig(B, "target")
    S, Si = _pair if _pair is not None else spd_sqrt_pair(B0)
    w, V = np.linalg.eigh(sym(Si @ B @ Si))
    if w[0] <= 0.0:
        raise SpdError(f"whitened target is not positive definite (min eigenvalue {w[0]:.3e})")
    w = np.maximum(w, EIG_FLOOR * w[-1])
    return sym(S @ _fn(w, V, np.log) @ S)


def spd_exp(B0, T, _pair=None):
    """Map the symmetric tangent vector ``T`` at ``B0`` back to the manifold."""
    T = np.asarray(T, dtype=float)
    if not np.allclose(T, T.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(T).max())):
        raise SpdError("tangent vector is not symmetric")
    S, Si = _pair if _pair is not None else spd_sqrt_pair(B0)
    w, V = np.linalg.eigh(sym(Si @ T @ Si))
    # Gram form F F^T keeps the result positive even when the spectrum is wide
    F = S @ (V * np.exp(0.5 * w))
    return F @ F.T
