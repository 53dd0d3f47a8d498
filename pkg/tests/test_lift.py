"""Lifted operator A, right-hand side extraction, closure constraints and
the sparse-matrix file format."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liftrom.euler import NACA_FREESTREAM, FlowState, Freestream, observable_scales, state_to_observables
from liftrom.fv import assemble_gradient_ops
from liftrom.lift import (
    BLOCK_PATTERN,
    assemble_lifted,
    closure_rhs,
    constraint_jacobian,
    constraint_values,
    constraints,
    energy_from_observables,
    extract_rhs,
    load_spmat,
    save_spmat,
)
from liftrom.mesh import generate_annulus, generate_cartesian

UNIT = Freestream(1.0 / 1.4, 1.0, 1.0, 0.5, 0.0)
EXPECTED_BLOCKS = {(0, 0), (0, 1), (1, 2), (1, 3), (1, 4), (2, 2), (2, 3), (2, 5), (3, 6), (3, 7)}

states = st.tuples(
    st.floats(0.2, 3.0),
    st.floats(0.1, 2.0) | st.floats(-2.0, -0.1),
    st.floats(0.1, 2.0) | st.floats(-2.0, -0.1),
    st.floats(0.2, 3.0),
)


def obs(rho, u, v, p, fs=UNIT):
    f = lambda x: np.atleast_1d(np.asarray(x, dtype=float))
    return state_to_observables(FlowState(f(rho), f(u), f(v), f(p)), fs)


# -- operator -------------------------------------------------------------------------

def test_toy_block_pattern():
    mesh = generate_cartesian(2, 2)
    ops = assemble_gradient_ops(mesh)
    sys = assemble_lifted(ops)
    assert sys.A.shape == (16, 32)
    D = sys.A.toarray()
    for r in range(4):
        for c in range(8):
            blk = D[4 * r : 4 * r + 4, 4 * c : 4 * c + 4]
            if (r, c) not in EXPECTED_BLOCKS:
                assert not np.any(blk), (r, c)


def test_blocks_are_gradient_operators():
    mesh = generate_annulus(32, 8, inner_patch="wall")
    ops = assemble_gradient_ops(mesh)
    gx, gy = ops.extrapolated(("wall",))
    sys = assemble_lifted(ops, mesh=mesh)
    n = mesh.n_cells
    for r, c, d in BLOCK_PATTERN:
        blk = sys.A[r * n : (r + 1) * n, c * n : (c + 1) * n]
        G = gx if d == "x" else gy
        assert abs(blk - G).max() == 0.0
    assert sys.A.nnz == 10 * gx.nnz or sys.A.nnz == 5 * (gx.nnz + gy.nnz)


def test_uniform_freestream_annihilated():
    mesh = generate_annulus(32, 8, 1.0, 10.0, 1.1)
    fs = NACA_FREESTREAM
    sys = assemble_lifted(assemble_gradient_ops(mesh), fs, mesh)
    sc = observable_scales(fs)
    Ys = state_to_observables(FlowState.uniform(fs, mesh.n_cells), fs).data / sc[:, None]
    y_far = np.repeat(Ys[:, :1], sys.Bx.shape[1], axis=1)
    f = closure_rhs(sys, y_far)
    assert np.abs(sys.A @ Ys.ravel() - f).max() <= 1e-10


def test_snapshot_action_matches_dense(small_snapshots):
    fom = small_snapshots[0]
    sys = assemble_lifted(assemble_gradient_ops(fom.mesh), NACA_FREESTREAM, fom.mesh)
    assert fom.mesh.n_cells <= 512
    y = fom.Ys.ravel()
    dense = sys.A.toarray() @ y
    assert np.abs(sys.A @ y - dense).max() <= 1e-12 * np.abs(dense).max()


def test_assemble_dimension_mismatch(small_snapshots):
    fom = small_snapshots[0]
    other = generate_cartesian(3, 3)
    with pytest.raises(ValueError):
        assemble_lifted(assemble_gradient_ops(fom.mesh), NACA_FREESTREAM, other)


# -- right-hand side -------------------------------------------------------------------

def test_extract_rhs_zero_and_exact(small_snapshots):
    fom = small_snapshots[1]
    sys = assemble_lifted(assemble_gradient_ops(fom.mesh), NACA_FREESTREAM, fom.mesh)
    assert not np.any(extract_rhs(sys, np.zeros(8 * fom.mesh.n_cells)))
    f = extract_rhs(sys, fom.Ys.ravel())
    assert np.array_equal(sys.A @ fom.Ys.ravel() - f, np.zeros_like(f))
    with pytest.raises(ValueError):
        extract_rhs(sys, np.zeros(5))


def test_alpha_change_touches_only_boundary_rows():
    mesh = generate_annulus(32, 8, 1.0, 10.0, 1.1, inner_patch="wall")
    sys = assemble_lifted(assemble_gradient_ops(mesh), NACA_FREESTREAM, mesh)
    nf = sys.Bx.shape[1]
    rhs = []
    for alpha in (2.0, 4.0):
        fs = Freestream(101325.0, 1.225, 340.296, 0.6, alpha)
        Y = state_to_observables(FlowState.uniform(fs, 1), fs).data / observable_scales(fs)[:, None]
        rhs.append(closure_rhs(sys, np.repeat(Y, nf, axis=1)))
    changed = np.flatnonzero(rhs[0] != rhs[1]) % mesh.n_cells
    far_cells = set(mesh.face_owner[mesh.patch_faces("farfield")].tolist())
    assert changed.size and set(changed.tolist()) <= far_cells


# -- constraints -----------------------------------------------------------------------------

@pytest.mark.parametrize("form", ["cross", "quotient"])
def test_consistent_unit_state(form):
    h = constraints(obs(1, 1, 1, 1), UNIT, form)
    assert max(np.abs(x).max() for x in h) == 0.0


def test_y5_perturbation_quotient():
    y = obs(1.3, 0.7, -0.4, 2.0)
    for delta in (1e-3, -0.25, 2.0):
        z = y.data.copy()
        z[4] += delta
        h1 = constraint_values(z, 1.4, "quotient")[0]
        assert h1[0] == pytest.approx(delta, abs=1e-15)


@settings(max_examples=100)
@given(states)
def test_random_consistent_states_both_forms(s):
    y = obs(*s)
    for form in ("cross", "quotient"):
        assert max(np.abs(x).max() for x in constraints(y, UNIT, form)) <= 1e-10


@settings(max_examples=60)
@given(states, st.integers(4, 7), st.floats(0.01, 1.0))
def test_forms_share_zero_set(s, j, delta):
    Y = obs(*s).data.copy()
    Y[j] += delta
    q = constraint_values(Y, 1.4, "quotient")
    c = constraint_values(Y, 1.4, "cross")
    # the joint zero set {h1 = .. = h4 = 0} is shared; single components need not be
    assert np.all(np.abs(q) <= 1e-12, axis=0) == np.all(np.abs(c) <= 1e-12, axis=0)
    assert not np.all(np.abs(q) <= 1e-12)


@given(states)
def test_energy_recovery_identity(s):
    rho, u, v, p = s
    y = obs(rho, u, v, p)
    E = energy_from_observables(*(y.data[i] for i in range(4)), 1.4)
    assert E[0] == pytest.approx(0.5 * (u * u + v * v) + p / (0.4 * rho), rel=1e-12)


@settings(max_examples=30)
@given(states)
def test_cross_jacobian_matches_differences(s):
    Y = obs(*s).data + 0.01
    J = constraint_jacobian(Y, 1.4, "cross")
    for j in range(8):
        h = 1e-6
        Yp, Ym = Y.copy(), Y.copy()
        Yp[j] += h
        Ym[j] -= h
        fd = (constraint_values(Yp, 1.4) - constraint_values(Ym, 1.4)) / (2 * h)
        np.testing.assert_allclose(J[:, j], fd, atol=1e-6 * (1 + np.abs(fd).max()))


def test_quotient_refuses_tiny_denominators():
    y = obs(1.0, 1.0, 0.0, 1.0)
    with pytest.raises(ZeroDivisionError, match="cross"):
        constraints(y, UNIT, "quotient")
    assert constraints(y, UNIT, "cross")[0][0] == 0.0


def test_unknown_form():
    with pytest.raises(ValueError):
        constraint_values(obs(1, 1, 1, 1).data, 1.4, "other")


# -- file format -------------------------------------------------------------------------------

def test_spmat_round_trip(tmp_path, small_snapshots):
    fom = small_snapshots[0]
    sys = assemble_lifted(assemble_gradient_ops(fom.mesh), NACA_FREESTREAM, fom.mesh)
    f = extract_rhs(sys, fom.Ys.ravel())
    save_spmat(tmp_path / "a.bin", sys.A, f)
    A2, f2 = load_spmat(tmp_path / "a.bin")
    assert (A2 != sys.A).nnz == 0
    np.testing.assert_array_equal(f2, f)
    raw = (tmp_path / "a.bin").read_bytes()
    assert raw.startswith(b"liftrom-spmat v1 %d %d %d" % (*sys.A.shape, sys.A.nnz))
    (tmp_path / "b.bin").write_bytes(raw[:-3])
    with pytest.raises(ValueError):
        load_spmat(tmp_path / "b.bin")
