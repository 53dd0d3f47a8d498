"""O-mesh generation, mesh IO and Green-Gauss gradient operators."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liftrom.cst import NACA0012, CstAirfoil, evaluate_airfoil
from liftrom.fv import apply_with_boundary, assemble_gradient_ops
from liftrom.mesh import (
    MeshError,
    generate_annulus,
    generate_cartesian,
    generate_omesh,
    load_mesh,
    mesh_from_quads,
    save_mesh,
)

NACA_SHAPE = evaluate_airfoil(NACA0012, 201)
FLAT = evaluate_airfoil(CstAirfoil(np.zeros(3), np.zeros(3)), 201)


def dense_gradient(mesh, u, ub):
    """Face-by-face Green-Gauss loop (arithmetic face mean), dense."""
    n = mesh.n_cells
    gx, gy = np.zeros(n), np.zeros(n)
    bpos = {f: k for k, f in enumerate(mesh.boundary_faces)}
    for f in range(mesh.n_faces):
        o, nb = mesh.face_owner[f], mesh.face_neighbor[f]
        sx, sy = mesh.face_normal[f] * mesh.face_area[f]
        if nb >= 0:
            uf = 0.5 * (u[o] + u[nb])
            gx[o] += sx * uf
            gy[o] += sy * uf
            gx[nb] -= sx * uf
            gy[nb] -= sy * uf
        else:
            gx[o] += sx * ub[bpos[f]]
            gy[o] += sy * ub[bpos[f]]
    return gx / mesh.cell_volumes, gy / mesh.cell_volumes


def mirror_map(mesh):
    """Index of the cell whose centre is the reflection about y=0."""
    c = mesh.cell_centers
    key = lambda p: np.lexsort((np.round(p[:, 1], 9), np.round(p[:, 0], 9)))
    a = key(c)
    b = key(c * [1.0, -1.0])
    m = np.empty(mesh.n_cells, dtype=int)
    m[b] = a
    np.testing.assert_allclose(c[m], c * [1.0, -1.0], atol=1e-10)
    return m


# -- mesh generation ---------------------------------------------------------------

def test_omesh_default_counts():
    mesh = generate_omesh(NACA_SHAPE, 64, 32, 15.0, 1.15)
    assert mesh.n_cells == 2048
    assert np.all(mesh.cell_volumes > 0)
    assert mesh.patch_faces("wall").size == 64
    assert mesh.patch_faces("farfield").size == 64
    owners = np.bincount(mesh.face_owner, minlength=mesh.n_cells)
    assert owners.sum() == mesh.n_faces


def test_flat_plate_mesh_is_symmetric():
    mesh = generate_omesh(FLAT, 64, 16, 12.0, 1.1)
    m = mirror_map(mesh)
    np.testing.assert_allclose(mesh.cell_volumes[m], mesh.cell_volumes, rtol=1e-10)


def test_radial_stretch_ratio():
    mesh = generate_omesh(NACA_SHAPE, 64, 32, 15.0, 1.15)
    nodes = mesh.nodes.reshape(33, 64, 2)
    for i in (0, 16, 40):
        ray = nodes[:, i]
        h = np.hypot(*np.diff(ray, axis=0).T)
        np.testing.assert_allclose(h[1:] / h[:-1], 1.15, rtol=1e-9)


@pytest.mark.parametrize("kw", [dict(n_wrap=30), dict(n_wrap=33), dict(n_radial=7), dict(far_radius=9.0)])
def test_omesh_preconditions(kw):
    args = dict(n_wrap=32, n_radial=8, far_radius=10.0, stretch=1.1)
    args.update(kw)
    with pytest.raises(ValueError):
        generate_omesh(NACA_SHAPE, **args)


def test_negative_area_reports_cell():
    nodes = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [2, 0], [2, 1]], float)
    quads = np.array([[1, 4, 5, 2], [0, 3, 2, 1]])  # second is clockwise
    with pytest.raises(MeshError, match="cell 1"):
        mesh_from_quads(nodes, quads, lambda a, b: np.full(a.shape, "farfield"))


@settings(max_examples=25, deadline=None)
@given(
    st.sampled_from([32, 48, 64, 96]),
    st.integers(8, 24),
    st.floats(10.0, 30.0),
    st.floats(1.0, 1.3),
    st.floats(0.7, 1.3),
)
def test_geometric_closure_every_mesh(n_wrap, n_radial, radius, stretch, scale):
    shape = evaluate_airfoil(NACA0012.with_theta([0.2699 * scale], [1]), 121)
    mesh = generate_omesh(shape, n_wrap, n_radial, radius, stretch)
    assert np.all(mesh.cell_volumes > 0)
    assert np.abs(mesh.closure_residual()).max() <= 1e-10


def test_cartesian_and_annulus_closed():
    for mesh in (generate_cartesian(7, 5, 2.0, 1.0), generate_annulus(32, 8)):
        assert np.abs(mesh.closure_residual()).max() <= 1e-10


def test_mesh_file_round_trip(tmp_path):
    mesh = generate_omesh(NACA_SHAPE, 32, 8, 10.0, 1.2)
    save_mesh(mesh, tmp_path / "m.txt")
    assert (tmp_path / "m.txt").read_text().startswith(f"liftrom-mesh v1 {mesh.n_cells} {mesh.n_faces}\n")
    back = load_mesh(tmp_path / "m.txt")
    for name in ("cell_centers", "cell_volumes", "face_owner", "face_neighbor", "face_normal",
                 "face_area", "face_patch", "face_centers"):
        np.testing.assert_array_equal(getattr(back, name), getattr(mesh, name))
    assert back.patch_names == mesh.patch_names


def test_mesh_file_bad_header(tmp_path):
    (tmp_path / "bad.txt").write_text("liftrom-mesh v2 1 1\n")
    with pytest.raises(MeshError):
        load_mesh(tmp_path / "bad.txt")


# -- gradient operators -------------------------------------------------------------------

@pytest.fixture(scope="module")
def omesh():
    return generate_omesh(NACA_SHAPE, 32, 8, 10.0, 1.2)


@pytest.mark.parametrize("c", [0.0, 1.0, -3.7, 1e5])
def test_constant_field_annihilated(omesh, c):
    ops = assemble_gradient_ops(omesh)
    gx, gy = apply_with_boundary(ops, np.full(omesh.n_cells, c), c)
    assert np.abs(gx).max() <= 1e-12 * max(1.0, abs(c)) * 1e2
    assert np.abs(gy).max() <= 1e-12 * max(1.0, abs(c)) * 1e2


def test_zero_field_zero_output(omesh):
    ops = assemble_gradient_ops(omesh)
    gx, gy = apply_with_boundary(ops, np.zeros(omesh.n_cells), 0.0)
    assert not np.any(gx) and not np.any(gy)


@pytest.mark.parametrize("a, b", [(1.0, 0.0), (0.0, 1.0), (2.5, -1.5)])
def test_linear_exactness_cartesian(a, b):
    mesh = generate_cartesian(12, 9, 1.2, 0.9, origin=(-0.3, 0.4))
    ops = assemble_gradient_ops(mesh)
    lin = lambda p: a * p[:, 0] + b * p[:, 1]
    gx, gy = apply_with_boundary(ops, lin(mesh.cell_centers), lin(mesh.face_centers[ops.boundary_faces]))
    np.testing.assert_allclose(gx, a, atol=1e-10)
    np.testing.assert_allclose(gy, b, atol=1e-10)


def test_quadratic_matches_central_differences():
    nx, ny = 16, 10
    mesh = generate_cartesian(nx, ny, 1.0, 1.0)
    ops = assemble_gradient_ops(mesh)
    X = mesh.cell_centers[:, 0].reshape(nx, ny)
    U = X**2
    h = 1.0 / nx
    fd = np.zeros_like(U)
    fd[1:-1] = (U[2:] - U[:-2]) / (2 * h)
    ub = mesh.face_centers[ops.boundary_faces, 0] ** 2
    gx, _ = apply_with_boundary(ops, U.ravel(), ub)
    np.testing.assert_allclose(gx.reshape(nx, ny)[1:-1], fd[1:-1], atol=1e-10)
    # and the truncation error of both is O(h^2) against d/dx x^2 = 2x
    assert np.abs(fd[1:-1] - 2 * X[1:-1]).max() <= 10 * h * h


def test_sparse_action_matches_dense_oracle(omesh):
    assert omesh.n_cells <= 512
    ops = assemble_gradient_ops(omesh)
    rng = np.random.default_rng(1)
    u = rng.standard_normal(omesh.n_cells)
    ub = rng.standard_normal(ops.boundary_faces.size)
    gx, gy = apply_with_boundary(ops, u, ub)
    ox, oy = dense_gradient(omesh, u, ub)
    scale = np.abs(ox).max() + np.abs(oy).max()
    assert np.abs(gx - ox).max() <= 1e-12 * scale
    assert np.abs(gy - oy).max() <= 1e-12 * scale


def test_boundary_values_by_patch(omesh):
    ops = assemble_gradient_ops(omesh)
    u = np.arange(omesh.n_cells, dtype=float)
    a = apply_with_boundary(ops, u, {"wall": 2.0, "farfield": -1.0})
    ub = np.where(ops.boundary_patch == omesh.patch_names.index("wall"), 2.0, -1.0)
    b = apply_with_boundary(ops, u, ub)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_missing_boundary_value_names_patch(omesh):
    ops = assemble_gradient_ops(omesh)
    with pytest.raises(KeyError, match="farfield"):
        apply_with_boundary(ops, np.zeros(omesh.n_cells), {"wall": 0.0})


def test_operator_locality(omesh):
    ops = assemble_gradient_ops(omesh)
    allowed = set(zip(range(omesh.n_cells), range(omesh.n_cells)))
    inner = omesh.interior_faces
    for o, n in zip(omesh.face_owner[inner], omesh.face_neighbor[inner]):
        allowed |= {(o, n), (n, o)}
    for G in (ops.Gx, ops.Gy, *ops.extrapolated()):
        r, c = G.nonzero()
        assert set(zip(r.tolist(), c.tolist())) <= allowed


def test_extrapolated_wall_closure(omesh):
    ops = assemble_gradient_ops(omesh)
    gx, gy = ops.extrapolated(("wall",))
    u = np.random.default_rng(4).standard_normal(omesh.n_cells)
    wall = ops.patch_columns("wall")
    ub = np.zeros(ops.boundary_faces.size)
    ub[wall] = u[ops.boundary_owner[wall]]
    ex, ey = apply_with_boundary(ops, u, ub)
    np.testing.assert_allclose(gx @ u, ex, atol=1e-12 * np.abs(ex).max())
    np.testing.assert_allclose(gy @ u, ey, atol=1e-12 * np.abs(ey).max())


def test_mirror_symmetry_of_operators():
    mesh = generate_omesh(NACA_SHAPE, 64, 12, 12.0, 1.15)
    m = mirror_map(mesh)
    ops = assemble_gradient_ops(mesh)
    for G, sign in ((ops.Gx, 1.0), (ops.Gy, -1.0)):
        D = G.toarray()
        np.testing.assert_allclose(D[np.ix_(m, m)], sign * D, atol=1e-10 * np.abs(D).max())
