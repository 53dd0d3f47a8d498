"""Quadrilateral finite-volume meshes: O-grids around airfoils, annuli,
Cartesian patches, and the plain-text mesh file format."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cst import AirfoilShape

__all__ = [
    "Mesh",
    "MeshError",
    "generate_omesh",
    "generate_annulus",
    "generate_cartesian",
    "mesh_from_quads",
    "save_mesh",
    "load_mesh",
]

MESH_MAGIC = "liftrom-mesh v1"


class MeshError(ValueError):
    pass


@dataclass
class Mesh:
    """Cell-centred FV mesh.

    Faces are stored as flat arrays. ``face_neighbor`` is -1 on boundary
    faces and ``face_normal`` points out of the owner cell. ``face_patch``
    indexes ``patch_names``; interior faces carry patch id -1.
    """

    cell_centers: np.ndarray
    cell_volumes: np.ndarray
    face_owner: np.ndarray
    face_neighbor: np.ndarray
    face_normal: np.ndarray
    face_area: np.ndarray
    face_patch: np.ndarray
    face_centers: np.ndarray
    patch_names: list[str]
    nodes: np.ndarray | None = field(default=None, compare=False)
    quads: np.ndarray | None = field(default=None, compare=False)

    @property
    def n_cells(self) -> int:
        return self.cell_volumes.size

    @property
    def n_faces(self) -> int:
        return self.face_area.size

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_neighbor >= 0)

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_neighbor < 0)

    def patch_faces(self, name: str) -> np.ndarray:
        if name not in self.patch_names:
            return np.empty(0, dtype=np.int64)
        return np.flatnonzero(self.face_patch == self.patch_names.index(name))

    def closure_residual(self) -> np.ndarray:
        """Per-cell sum of outward ``area * normal``; zero for closed cells."""
        s = self.face_normal * self.face_area[:, None]
        out = np.zeros((self.n_cells, 2))
        np.add.at(out, self.face_owner, s)
        inner = self.interior_faces
        np.add.at(out, self.face_neighbor[inner], -s[inner])
        return out

    def wall_chord(self) -> float:
        faces = self.patch_faces("wall")
        if faces.size == 0:
            return 0.0
        t = np.column_stack([-self.face_normal[faces, 1], self.face_normal[faces, 0]])
        half = 0.5 * self.face_area[faces, None] * t
        ends = np.concatenate([self.face_centers[faces] - half, self.face_centers[faces] + half])
        return float(ends[:, 0].max() - ends[:, 0].min())


def _polygon_area_centroid(p):
    """Signed area and centroid of quads ``p`` with shape (N, 4, 2)."""
    x, y = p[..., 0], p[..., 1]
    xn, yn = np.roll(x, -1, axis=1), np.roll(y, -1, axis=1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum(axis=1)
    cx = ((x + xn) * cross).sum(axis=1) / (6.0 * area)
    cy = ((y + yn) * cross).sum(axis=1) / (6.0 * area)
    return area, np.column_stack([cx, cy])


def mesh_from_quads(nodes, quads, boundary_patch) -> Mesh:
    """Build a :class:`Mesh` from node coordinates and counter-clockwise quads.

    ``boundary_patch(a, b)`` maps a boundary edge's node pair (arrays) to patch
    names (array of str).
    """
    nodes = np.asarray(nodes, dtype=float)
    quads = np.asarray(quads, dtype=np.int64)
    area, centers = _polygon_area_centroid(nodes[quads])
    bad = np.flatnonzero(area <= 0.0)
    if bad.size:
        raise MeshError(f"non-positive cell area at cell {bad[0]} (area={area[bad[0]]:.3e})")

    n = quads.shape[0]
    a = quads.reshape(-1)
    b = np.roll(quads, -1, axis=1).reshape(-1)
    cell = np.repeat(np.arange(n), 4)
    key = np.minimum(a, b) * nodes.shape[0] + np.maximum(a, b)
    order = np.argsort(key, kind="stable")
    key_s = key[order]
    first = np.ones(key_s.size, dtype=bool)
    first[1:] = key_s[1:] != key_s[:-1]
    starts = np.flatnonzero(first)
    counts = np.diff(np.append(starts, key_s.size))
    if np.any(counts > 2):
        raise MeshError("edge shared by more than two cells")

    e0 = order[starts]
    owner = cell[e0]
    fa, fb = a[e0], b[e0]
    neighbor = np.full(starts.size, -1, dtype=np.int64)
    two = counts == 2
    neighbor[two] = cell[order[starts[two] + 1]]

    pa, pb = nodes[fa], nodes[fb]
    t = pb - pa
    length = np.hypot(t[:, 0], t[:, 1])
    normal = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
    fc = 0.5 * (pa + pb)
    # ccw quads: edge a->b of the owner has its outward normal on the right
    flip = np.einsum("ij,ij->i", normal, fc - centers[owner]) < 0.0
    normal[flip] *= -1.0

    patch = np.full(starts.size, -1, dtype=np.int64)
    bnd = np.flatnonzero(~two)
    names: list[str] = []
    if bnd.size:
        labels = np.asarray(boundary_patch(fa[bnd], fb[bnd]))
        for lab in labels:
            if lab not in names:
                names.append(str(lab))
        names.sort(key=lambda s: {"wall": 0, "farfield": 1}.get(s, 2))
        patch[bnd] = [names.index(str(lab)) for lab in labels]

    return Mesh(
        cell_centers=centers,
        cell_volumes=area,
        face_owner=owner,
        face_neighbor=neighbor,
        face_normal=normal,
        face_area=length,
        face_patch=patch,
        face_centers=fc,
        patch_names=names,
        nodes=nodes,
        quads=quads,
    )


def _radial_fractions(n_radial, stretch):
    j = np.arange(n_radial + 1, dtype=float)
    if abs(stretch - 1.0) < 1e-12:
        return j / n_radial
    return (stretch**j - 1.0) / (stretch**n_radial - 1.0)


def _ring_mesh(inner, outer, n_radial, stretch, inner_patch, outer_patch):
    n_wrap = inner.shape[0]
    s = _radial_fractions(n_radial, stretch)
    ring = inner[None, :, :] + s[:, None, None] * (outer - inner)[None, :, :]
    nodes = ring.reshape(-1, 2)
    j, i = np.meshgrid(np.arange(n_radial), np.arange(n_wrap), indexing="ij")
    j, i = j.ravel(), i.ravel()
    ip = (i + 1) % n_wrap
    quads = np.column_stack(
        [j * n_wrap + i, j * n_wrap + ip, (j + 1) * n_wrap + ip, (j + 1) * n_wrap + i]
    )
    # O-grids are generated clockwise in i, so reverse to counter-clockwise when needed
    area, _ = _polygon_area_centroid(nodes[quads[:1]])
    if area[0] < 0:
        quads = quads[:, ::-1]

    def patch(a, b):
        layer = np.minimum(a, b) // n_wrap
        return np.where(layer == 0, inner_patch, outer_patch)

    mesh = mesh_from_quads(nodes, quads, patch)
    return mesh


def generate_omesh(
    shape: AirfoilShape,
    n_wrap: int = 64,
    n_radial: int = 32,
    far_radius: float = 15.0,
    stretch: float = 1.15,
) -> Mesh:
    """Algebraic O-grid around a chord-normalised airfoil.

    Surface nodes run clockwise from the trailing edge along the lower
    surface, and are joined by straight lines to equally spaced points on a
    circle of ``far_radius`` chords centred at mid-chord. Radial spacing grows
    geometrically by ``stretch``. Cells are ordered layer by layer from the
    wall, ``cell = j * n_wrap + i``.
    """
    if n_wrap < 32 or n_wrap % 2:
        raise ValueError("n_wrap must be even and >= 32")
    if n_radial < 8:
        raise ValueError("n_radial must be >= 8")
    if far_radius < 10:
        raise ValueError("far_radius must be >= 10 chords")
    half = n_wrap // 2
    t = np.arange(half + 1) / half
    psi_lo = 0.5 * (1.0 + np.cos(np.pi * t))  # 1 -> 0
    psi_up = psi_lo[::-1][1:-1]  # interior stations 0 -> 1
    y_lo = np.interp(psi_lo, shape.psi, shape.y_lower)
    y_up = np.interp(psi_up, shape.psi, shape.y_upper)
    inner = np.concatenate(
        [np.column_stack([psi_lo, y_lo]), np.column_stack([psi_up, y_up])]
    )
    ang_lo = -np.pi * t
    ang = np.concatenate([ang_lo, -ang_lo[::-1][1:-1]])
    cos_a = np.concatenate([np.cos(ang_lo), np.cos(ang_lo)[::-1][1:-1]])
    sin_a = np.sin(ang)
    outer = np.column_stack([0.5 + far_radius * cos_a, far_radius * sin_a])
    mesh = _ring_mesh(inner, outer, n_radial, stretch, "wall", "farfield")
    mesh.n_wrap, mesh.n_radial = n_wrap, n_radial
    return mesh


def generate_annulus(
    n_wrap: int = 32,
    n_radial: int = 8,
    r_inner: float = 1.0,
    r_outer: float = 10.0,
    stretch: float = 1.0,
    inner_patch: str = "farfield",
) -> Mesh:
    """Annulus centred at the origin; by default both rims are far-field."""
    ang = -2.0 * np.pi * np.arange(n_wrap) / n_wrap
    ring = np.column_stack([np.cos(ang), np.sin(ang)])
    mesh = _ring_mesh(r_inner * ring, r_outer * ring, n_radial, stretch, inner_patch, "farfield")
    mesh.n_wrap, mesh.n_radial = n_wrap, n_radial
    return mesh


def generate_cartesian(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0, origin=(0.0, 0.0)) -> Mesh:
    """Uniform Cartesian patch with every boundary edge on ``farfield``."""
    xs = origin[0] + np.linspace(0.0, lx, nx + 1)
    ys = origin[1] + np.linspace(0.0, ly, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()

    def nid(ii, jj):
        return ii * (ny + 1) + jj

    quads = np.column_stack([nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)])
    return mesh_from_quads(nodes, quads, lambda a, b: np.full(a.shape, "farfield"))


def save_mesh(mesh: Mesh, path) -> None:
    """Write the text mesh format with 17 significant digits."""
    g = "%.17g"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{MESH_MAGIC} {mesh.n_cells} {mesh.n_faces}\n")
        for c, v in zip(mesh.cell_centers, mesh.cell_volumes):
            fh.write(f"{g % c[0]} {g % c[1]} {g % v}\n")
        for f in range(mesh.n_faces):
            n = mesh.face_normal[f]
            fc = mesh.face_centers[f]
            fh.write(
                f"{mesh.face_owner[f]} {mesh.face_neighbor[f]} {g % n[0]} {g % n[1]} "
                f"{g % mesh.face_area[f]} {mesh.face_patch[f]} {g % fc[0]} {g % fc[1]}\n"
            )
        fh.write(f"patches {len(mesh.patch_names)}\n")
        for k, name in enumerate(mesh.patch_names):
            fh.write(f"{k} {name}\n")


def load_mesh(path) -> Mesh:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    head = lines[0].split()
    if " ".join(head[:2]) != MESH_MAGIC or len(head) != 4:
        raise MeshError(f"not a {MESH_MAGIC} file: {path}")
    nc, nf = int(head[2]), int(head[3])
    if len(lines) < 2 + nc + nf:
        raise MeshError("truncated mesh file")
    cells = np.array([[float(t) for t in ln.split()] for ln in lines[1 : 1 + nc]]).reshape(nc, 3)
    faces = [ln.split() for ln in lines[1 + nc : 1 + nc + nf]]
    owner = np.array([int(f[0]) for f in faces], dtype=np.int64)
    neigh = np.array([int(f[1]) for f in faces], dtype=np.int64)
    fnum = np.array([[float(t) for t in (f[2], f[3], f[4], f[6], f[7])] for f in faces]).reshape(nf, 5)
    patch = np.array([int(f[5]) for f in faces], dtype=np.int64)
    tail = lines[1 + nc + nf :]
    n_patch = int(tail[0].split()[1])
    names = [tail[1 + k].split(maxsplit=1)[1] for k in range(n_patch)]
    return Mesh(
        cell_centers=cells[:, :2].copy(),
        cell_volumes=cells[:, 2].copy(),
        face_owner=owner,
        face_neighbor=neigh,
        face_normal=fnum[:, :2].copy(),
        face_area=fnum[:, 2].copy(),
        face_patch=patch,
        face_centers=fnum[:, 3:].copy(),
        patch_names=names,
    )
