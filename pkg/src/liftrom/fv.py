"""Green-Gauss cell-centred gradient operators with symbolic boundary closure."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh

__all__ = ["GradientOperators", "assemble_gradient_ops", "apply_with_boundary"]


@dataclass(frozen=True)
class GradientOperators:
    """Interior-face gradient matrices plus per-boundary-face closure.

    ``Gx``/``Gy`` hold interior faces only. ``Bx``/``By`` are ``N x F_b``
    with entry ``n_x A_f / V_owner`` at (owner, boundary face), so that the
    full Green-Gauss gradient is ``Gx u + Bx u_b`` for face values ``u_b``.
    """

    Gx: sp.csr_matrix
    Gy: sp.csr_matrix
    Bx: sp.csr_matrix
    By: sp.csr_matrix
    boundary_faces: np.ndarray
    boundary_patch: np.ndarray
    boundary_owner: np.ndarray
    patch_names: tuple

    @property
    def n_cells(self) -> int:
        return self.Gx.shape[0]

    def patch_columns(self, name: str) -> np.ndarray:
        if name not in self.patch_names:
            return np.empty(0, dtype=np.int64)
        return np.flatnonzero(self.boundary_patch == self.patch_names.index(name))

    def extrapolated(self, patches: Sequence[str] = ("wall",)):
        """``(Gx, Gy)`` with zeroth-order owner extrapolation folded in on
        the named patches, whose face values are then no longer inputs."""
        cols = np.concatenate([self.patch_columns(p) for p in patches]) if patches else np.empty(0, int)
        if cols.size == 0:
            return self.Gx, self.Gy
        E = sp.csr_matrix(
            (np.ones(cols.size), (np.arange(cols.size), self.boundary_owner[cols])),
            shape=(cols.size, self.n_cells),
        )
        gx = (self.Gx + self.Bx[:, cols] @ E).tocsr()
        gy = (self.Gy + self.By[:, cols] @ E).tocsr()
        gx.sort_indices()
        gy.sort_indices()
        return gx, gy


def assemble_gradient_ops(mesh: Mesh) -> GradientOperators:
    n = mesh.n_cells
    inv_v = 1.0 / mesh.cell_volumes
    inner = mesh.interior_faces
    o, nb = mesh.face_owner[inner], mesh.face_neighbor[inner]
    sx = 0.5 * mesh.face_normal[inner, 0] * mesh.face_area[inner]
    sy = 0.5 * mesh.face_normal[inner, 1] * mesh.face_area[inner]
    rows = np.concatenate([o, o, nb, nb])
    cols = np.concatenate([o, nb, nb, o])

    def build(s):
        vals = np.concatenate([s, s, -s, -s]) * inv_v[rows]
        m = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return m

    bf = mesh.boundary_faces
    bo = mesh.face_owner[bf]
    nbf = bf.size

    def closure(comp):
        vals = mesh.face_normal[bf, comp] * mesh.face_area[bf] * inv_v[bo]
        return sp.csr_matrix((vals, (bo, np.arange(nbf))), shape=(n, nbf))

    return GradientOperators(
        Gx=build(sx),
        Gy=build(sy),
        Bx=closure(0),
        By=closure(1),
        boundary_faces=bf,
        boundary_patch=mesh.face_patch[bf],
        boundary_owner=bo,
        patch_names=tuple(mesh.patch_names),
    )


def _boundary_vector(ops: GradientOperators, boundary_values) -> np.ndarray:
    nbf = ops.boundary_faces.size
    if isinstance(boundary_values, Mapping):
        ub = np.full(nbf, np.nan)
        for name, vals in boundary_values.items():
            cols = ops.patch_columns(name)
            ub[cols] = np.broadcast_to(np.asarray(vals, dtype=float), cols.shape)
    else:
        ub = np.broadcast_to(np.asarray(boundary_values, dtype=float), (nbf,)).astype(float)
    missing = np.flatnonzero(np.isnan(ub))
    if missing.size:
        k = missing[0]
        name = ops.patch_names[ops.boundary_patch[k]]
        raise KeyError(
            f"no boundary value for patch '{name}', face {int(ops.boundary_faces[k])}"
        )
    return ub


def apply_with_boundary(ops: GradientOperators, field, boundary_values):
    """Green-Gauss gradient of ``field`` given values on every boundary face.

    ``boundary_values`` is either an array over boundary faces (in
    ``ops.boundary_faces`` order), a scalar, or a mapping patch name ->
    values for that patch.
    """
    u = np.asarray(field, dtype=float)
    ub = _boundary_vector(ops, boundary_values)
    return ops.Gx @ u + ops.Bx @ ub, ops.Gy @ u + ops.By @ ub
