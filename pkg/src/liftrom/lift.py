"""Lifted linear system ``A y = f`` for the Euler equations and the
nonlinear closure constraints tying the eight observables together.

Observable order: ``rho u, rho v, rho uv, p, rho u^2, rho v^2, rho uH, rho vH``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .euler import Freestream, ObservableVector, observable_scales
from .fv import GradientOperators

__all__ = [
    "BLOCK_PATTERN",
    "LiftedSystem",
    "assemble_lifted",
    "extract_rhs",
    "closure_rhs",
    "constraints",
    "constraint_values",
    "constraint_jacobian",
    "energy_from_observables",
    "save_spmat",
    "load_spmat",
]

# (block row, observable column, 'x' or 'y')
BLOCK_PATTERN = (
    (0, 0, "x"), (0, 1, "y"),
    (1, 2, "y"), (1, 3, "x"), (1, 4, "x"),
    (2, 2, "x"), (2, 3, "y"), (2, 5, "y"),
    (3, 6, "x"), (3, 7, "y"),
)

QUOTIENT_FLOOR = 1e-10


@dataclass
class LiftedSystem:
    """``A`` is ``4N x 8N``; ``f`` is filled by :func:`extract_rhs`.

    ``Bx``/``By`` keep the far-field closure so a boundary-driven ``f`` can
    be formed for verification.
    """

    A: sp.csr_matrix
    n_cells: int
    Bx: sp.csr_matrix
    By: sp.csr_matrix
    f: np.ndarray | None = None
    theta: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)


def _block_matrix(gx, gy, shape_blocks=(4, 8)):
    grid = [[None] * shape_blocks[1] for _ in range(shape_blocks[0])]
    for r, c, d in BLOCK_PATTERN:
        grid[r][c] = gx if d == "x" else gy
    n_r, n_c = gx.shape[0], gx.shape[1]
    # fill one empty slot per column/row so bmat can infer sizes
    for c in range(shape_blocks[1]):
        if all(grid[r][c] is None for r in range(shape_blocks[0])):
            grid[0][c] = sp.csr_matrix((n_r, n_c))
    return sp.bmat(grid, format="csr")


def assemble_lifted(ops: GradientOperators, fs: Freestream | None = None, mesh=None, theta=None) -> LiftedSystem:
    """Assemble ``A`` with wall faces closed by owner extrapolation.

    Far-field faces are left to the right-hand side.
    """
    gx, gy = ops.extrapolated(("wall",))
    if gx.shape[0] != gx.shape[1]:
        raise ValueError("gradient operators must be square")
    if mesh is not None and mesh.n_cells != gx.shape[0]:
        raise ValueError(f"mesh has {mesh.n_cells} cells, operators {gx.shape[0]}")
    A = _block_matrix(gx, gy)
    far = ops.patch_columns("farfield")
    return LiftedSystem(
        A=A,
        n_cells=gx.shape[0],
        Bx=ops.Bx[:, far].tocsr(),
        By=ops.By[:, far].tocsr(),
        theta=None if theta is None else np.asarray(theta, dtype=float),
    )


def _flat(y, n8):
    if isinstance(y, ObservableVector):
        y = y.flat()
    y = np.asarray(y, dtype=float).ravel()
    if y.size != n8:
        raise ValueError(f"observable vector has length {y.size}, expected {n8}")
    return y


def extract_rhs(sys: LiftedSystem, y) -> np.ndarray:
    """``f := A y``: the snapshot-exact right-hand side."""
    f = sys.A @ _flat(y, sys.A.shape[1])
    sys.f = f
    return f


def closure_rhs(sys: LiftedSystem, y_far) -> np.ndarray:
    """Right-hand side from prescribed far-field face values ``y_far``
    with shape ``(8, F_far)`` (``f = -b_a``)."""
    y_far = np.asarray(y_far, dtype=float)
    f = np.zeros(sys.A.shape[0])
    n = sys.n_cells
    for r, c, d in BLOCK_PATTERN:
        B = sys.Bx if d == "x" else sys.By
        f[r * n : (r + 1) * n] -= B @ y_far[c]
    return f


# -- constraints ----------------------------------------------------------------

def energy_from_observables(y1, y2, y3, y4, gamma):
    """Specific total energy recovered from ``y1..y4`` via primitives."""
    u = y3 / y2
    v = y3 / y1
    rho = y1 * y2 / y3
    return 0.5 * (u * u + v * v) + y4 / ((gamma - 1.0) * rho)


def constraint_values(Y, gamma: float, form: str = "cross") -> np.ndarray:
    """Pointwise closure residuals ``(4, n)`` for observables ``Y`` ``(8, n)``.

    ``Y`` must already be in consistent (scaled or unscaled) units; both
    forms are homogeneous under the reference scaling.
    """
    y1, y2, y3, y4, y5, y6, y7, y8 = Y
    if form == "cross":
        P = 0.5 * (y5 + y6) + gamma / (gamma - 1.0) * y4
        return np.array([y2 * y5 - y1 * y3, y1 * y6 - y2 * y3, y1 * y7 - y5 * P, y2 * y8 - y6 * P])
    if form == "quotient":
        E = energy_from_observables(y1, y2, y3, y4, gamma)
        h_ratio = E + y4 * y3 / (y1 * y2)
        return np.array([y5 - y1 * y3 / y2, y6 - y2 * y3 / y1, y7 - y1 * h_ratio, y8 - y2 * h_ratio])
    raise ValueError(f"unknown constraint form {form!r}")


def constraint_jacobian(Y, gamma: float, form: str = "cross") -> np.ndarray:
    """Pointwise partials ``J[c, j, :] = d h_c / d y_(j+1)``, shape ``(4, 8, n)``."""
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[1]
    J = np.zeros((4, 8, n))
    if form == "cross":
        y1, y2, y3, y4, y5, y6, y7, y8 = Y
        gp = gamma / (gamma - 1.0)
        P = 0.5 * (y5 + y6) + gp * y4
        J[0, 0], J[0, 1], J[0, 2], J[0, 4] = -y3, y5, -y1, y2
        J[1, 0], J[1, 1], J[1, 2], J[1, 5] = y6, -y3, -y2, y1
        J[2, 0], J[2, 3], J[2, 4], J[2, 5], J[2, 6] = y7, -gp * y5, -P - 0.5 * y5, -0.5 * y5, y1
        J[3, 1], J[3, 3], J[3, 4], J[3, 5], J[3, 7] = y8, -gp * y6, -0.5 * y6, -P - 0.5 * y6, y2
        return J
    if form == "quotient":
        # central differences; only used at a handful of sampled points
        for j in range(8):
            h = 1e-6 * np.maximum(np.abs(Y[j]), 1e-8)
            Yp, Ym = Y.copy(), Y.copy()
            Yp[j] += h
            Ym[j] -= h
            J[:, j] = (constraint_values(Yp, gamma, form) - constraint_values(Ym, gamma, form)) / (2 * h)
        return J
    raise ValueError(f"unknown constraint form {form!r}")


def constraints(y: ObservableVector, fs: Freestream, form: str = "cross"):
    """Closure residuals ``(h1, h2, h3, h4)`` for physical observables.

    The cross-multiplied form is evaluated on observables scaled by their
    freestream reference magnitudes, so its values are O(1). The quotient
    form is returned in physical units and refuses near-zero denominators.
    """
    Y = y.data
    if form == "quotient":
        sc = observable_scales(fs)
        for idx in (0, 1, 2):
            if np.any(np.abs(Y[idx]) < QUOTIENT_FLOOR * sc[idx]):
                raise ZeroDivisionError(
                    f"y{idx + 1} below the division floor; use form='cross'"
                )
        return tuple(constraint_values(Y, fs.gamma, "quotient"))
    if form == "cross":
        Ys = Y / observable_scales(fs)[:, None]
        return tuple(constraint_values(Ys, fs.gamma, "cross"))
    raise ValueError(f"unknown constraint form {form!r}")


# -- persistence ------------------------------------------------------------------

SPMAT_MAGIC = b"liftrom-spmat v1"


def save_spmat(path, A: sp.spmatrix, f=None) -> None:
    """Row-compressed triplet binary: header, int64 indptr, int64 indices,
    float64 data, then ``f`` if given."""
    A = sp.csr_matrix(A)
    A.sort_indices()
    with open(path, "wb") as fh:
        fh.write(SPMAT_MAGIC + f" {A.shape[0]} {A.shape[1]} {A.nnz} f={0 if f is None else 1}\n".encode())
        fh.write(A.indptr.astype("<i8").tobytes())
        fh.write(A.indices.astype("<i8").tobytes())
        fh.write(A.data.astype("<f8").tobytes())
        if f is not None:
            fh.write(np.asarray(f, dtype="<f8").tobytes())


def load_spmat(path):
    raw = open(path, "rb").read()
    nl = raw.find(b"\n")
    head = raw[:nl].split()
    if b" ".join(head[:2]) != SPMAT_MAGIC:
        raise ValueError(f"not a liftrom sparse matrix file: {path}")
    rows, cols, nnz = (int(t) for t in head[2:5])
    has_f = head[5] == b"f=1"
    off = nl + 1
    need = 8 * (rows + 1 + 2 * nnz + (rows if has_f else 0))
    if len(raw) - off != need:
        raise ValueError("truncated sparse matrix file")
    indptr = np.frombuffer(raw, "<i8", rows + 1, off)
    off += 8 * (rows + 1)
    indices = np.frombuffer(raw, "<i8", nnz, off)
    off += 8 * nnz
    data = np.frombuffer(raw, "<f8", nnz, off)
    off += 8 * nnz
    A = sp.csr_matrix((data.copy(), indices.copy(), indptr.copy()), shape=(rows, cols))
    f = np.frombuffer(raw, "<f8", rows, off).copy() if has_f else None
    return A, f
