"""Projection to the reduced space and the constrained reduced solve."""
from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from liftrom.reduction import assemble_block_basis
from liftrom.rom import (
    ConstraintFn,
    ReducedSolution,
    RomInstance,
    RomSolveError,
    SolveOptions,
    project,
    reduced_objective,
    solve_rom,
)
from liftrom.spd import SpdError


def toy_basis(rng, n, ks):
    return assemble_block_basis([np.linalg.qr(rng.standard_normal((n, k)))[0] for k in ks])


def toy_system(rng, n, density=0.05):
    A = sp.random(4 * n, 8 * n, density=density, random_state=int(rng.integers(1 << 30)), format="csr")
    A = A + sp.hstack([sp.identity(4 * n)] * 2)  # keep every column hit
    return SimpleNamespace(A=A.tocsr(), f=rng.standard_normal(4 * n), theta=None)


# -- projection --------------------------------------------------------------------------

def test_identity_toy_gives_identity(rng):
    n = 30
    basis = toy_basis(rng, n, [2, 1, 3, 1, 2, 2, 1, 2])
    sys = SimpleNamespace(A=sp.identity(8 * n, format="csr"), f=rng.standard_normal(8 * n), theta=None)
    rom = project(sys, basis)
    np.testing.assert_allclose(rom.B, np.eye(basis.k), atol=1e-14)


def test_projection_matches_dense_oracle(rng):
    n = 256
    basis = toy_basis(rng, n, [3, 2, 2, 2, 3, 2, 2, 2])
    sys = toy_system(rng, n)
    rom = project(sys, basis)
    Ad, P = sys.A.toarray(), basis.dense()
    B = P.T @ Ad.T @ Ad @ P
    f = P.T @ Ad.T @ sys.f
    assert np.abs(rom.B - B).max() <= 1e-10 * np.abs(B).max()
    assert np.abs(rom.f - f).max() <= 1e-10 * np.abs(f).max()
    assert np.abs(rom.B - rom.B.T).max() == 0.0


def test_weighted_projection_matches_dense(rng):
    n = 64
    basis = toy_basis(rng, n, [2] * 8)
    sys = toy_system(rng, n)
    w = rng.uniform(0.1, 2.0, n)
    rom = project(sys, basis, weights=w)
    W = np.diag(np.tile(w, 4))
    AP = sys.A.toarray() @ basis.dense()
    np.testing.assert_allclose(rom.B, AP.T @ W @ AP, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(rom.f, AP.T @ W @ sys.f, rtol=1e-10, atol=1e-12)
    with pytest.raises(ValueError):
        project(sys, basis, weights=-w)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_reduced_residual_consistency(seed):
    rng = np.random.default_rng(seed)
    n = 40
    basis = toy_basis(rng, n, [2] * 8)
    sys = toy_system(rng, n, 0.1)
    rom = project(sys, basis)
    y = rng.standard_normal(basis.k)
    Ad, P = sys.A.toarray(), basis.dense()
    oracle = P.T @ (Ad.T @ (Ad @ (P @ y)) - Ad.T @ sys.f)
    red = rom.B @ y - rom.f
    assert np.abs(red - oracle).max() <= 1e-10 * max(1.0, np.abs(oracle).max())


def test_rank_deficient_projection_rejected(rng):
    n = 10
    basis = toy_basis(rng, n, [1] * 8)
    A = sp.hstack([sp.identity(4 * n), sp.csr_matrix((4 * n, 4 * n))]).tocsr()  # ignores y5..y8
    with pytest.raises(SpdError, match="eigenvalue"):
        project(SimpleNamespace(A=A, f=np.ones(4 * n), theta=None), basis)


def test_project_needs_rhs(rng):
    basis = toy_basis(rng, 5, [1] * 8)
    with pytest.raises(ValueError):
        project(SimpleNamespace(A=sp.identity(40, format="csr"), f=None, theta=None), basis)


def test_database_instances_spd(small_db):
    for r in small_db.instances:
        assert r.check_spd()[0] > 0
        assert np.array_equal(r.B, r.B.T)


# -- solve ----------------------------------------------------------------------------------

def test_unconstrained_solution(rng):
    M = rng.standard_normal((6, 6))
    rom = RomInstance(M @ M.T + 6 * np.eye(6), rng.standard_normal(6))
    sol = solve_rom(rom, None, np.zeros(6))
    np.testing.assert_allclose(sol.y, np.linalg.solve(rom.B, rom.f), atol=1e-8)
    assert sol.method == "direct"


def test_toy_constraint_matches_grid_search():
    B = np.array([[2.0, 0.3], [0.3, 1.0]])
    f = np.array([1.5, -0.4])
    rom = RomInstance(B, f)
    con = ConstraintFn(lambda y: [y[1] - y[0] ** 2], lambda y: [[-2 * y[0], 1.0]])
    sol = solve_rom(rom, con, np.array([0.5, 0.25]))
    # feasible curve y = (t, t^2): coarse then fine grid
    t = np.linspace(-3, 3, 600_001)
    obj = lambda t: 0.5 * np.sum((B @ np.vstack([t, t * t]) - f[:, None]) ** 2, axis=0)
    t0 = t[np.argmin(obj(t))]
    t = np.linspace(t0 - 1e-4, t0 + 1e-4, 200_001)
    tb = t[np.argmin(obj(t))]
    np.testing.assert_allclose(sol.y, [tb, tb * tb], atol=1e-4)
    assert sol.constraint_norm <= 1e-6


@pytest.mark.parametrize("fixture", ["small_db", "small_db_full"])
def test_training_point_reproduction(request, fixture):
    db = request.getfixturevalue(fixture)
    for i, rom in enumerate(db.instances):
        init = db.coords[i]
        sol = solve_rom(rom, db.deim, init, db.basis.ks, init_id=i)
        assert sol.constraint_norm <= 1e-6
        assert np.linalg.norm(sol.y - init) <= 1e-4 * np.linalg.norm(init)
        assert sol.objective <= reduced_objective(rom, init) + 1e-12


def test_budget_exhaustion_attaches_best(small_db):
    rom = small_db.instances[0]
    init = small_db.coords[1]
    with pytest.raises(RomSolveError) as exc:
        solve_rom(rom, small_db.deim, init, small_db.basis.ks, SolveOptions(max_evals=3))
    assert exc.value.best is not None and np.asarray(exc.value.best).size == rom.k


def test_bad_init_length(small_db):
    with pytest.raises(ValueError):
        solve_rom(small_db.instances[0], small_db.deim, np.zeros(3), small_db.basis.ks)


def test_solution_json_round_trip(small_db):
    sol = solve_rom(small_db.instances[2], small_db.deim, small_db.coords[2], small_db.basis.ks, init_id=2)
    back = ReducedSolution.from_json(sol.to_json())
    np.testing.assert_array_equal(back.y, sol.y)
    np.testing.assert_array_equal(back.theta, sol.theta)
    assert (back.objective, back.constraint_norm, back.iterations, back.init_id) == (
        sol.objective, sol.constraint_norm, sol.iterations, 2)
    assert "solve" in back.timing
