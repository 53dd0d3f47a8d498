"""Offline database build and online evaluation helpers."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .case import CaseSetup
from .euler import SolverError, aero_coefficients, observable_scales, solve_euler, state_to_observables
from .fv import assemble_gradient_ops
from .lift import assemble_lifted
from .reduction import CONSTRAINT_TARGET, assemble_block_basis, build_deim, pod
from .rom import RomSolveError, SolveOptions, project, solve_rom
from .romdb import RomDatabase, initial_guesses, interpolate_rom, predict_full

__all__ = [
    "BuildError",
    "FomResult",
    "run_fom",
    "collect_snapshots",
    "build_database",
    "rom_evaluate",
    "error_metrics",
]

log = logging.getLogger(__name__)

MAX_SKIP_FRACTION = 0.2


class BuildError(RuntimeError):
    pass


@dataclass
class FomResult:
    theta: np.ndarray
    Ys: np.ndarray  # scaled observables (8, N)
    cp: np.ndarray
    cl: float
    cd: float
    iterations: int
    seconds: float
    state: object = field(default=None, repr=False)
    mesh: object = field(default=None, repr=False)


def run_fom(case: CaseSetup, theta, solver: dict | None = None, keep=False) -> FomResult:
    """Mesh the airfoil at ``theta`` and converge the FOM there."""
    t0 = time.perf_counter()
    mesh = case.mesh_at(theta)
    state = solve_euler(mesh, case.freestream, **(solver or {}))
    out = aero_coefficients(state, mesh, case.freestream)
    Ys = state_to_observables(state, case.freestream).data / observable_scales(case.freestream)[:, None]
    return FomResult(
        np.asarray(theta, dtype=float), Ys, out["cp"], out["cl"], out["cd"],
        int(state.info["iterations"]), time.perf_counter() - t0,
        state if keep else None, mesh if keep else None,
    )


def _fom_task(args):
    case, theta, solver = args
    try:
        return run_fom(case, theta, solver)
    except SolverError as exc:
        return exc


def collect_snapshots(case: CaseSetup, thetas, solver=None, jobs: int = 1):
    """FOM snapshots at every ``theta``; failures are returned separately."""
    tasks = [(case, th, solver) for th in np.atleast_2d(thetas)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_fom_task, tasks))
    else:
        results = [_fom_task(t) for t in tasks]
    ok, failed = [], []
    for i, r in enumerate(results):
        if isinstance(r, Exception):
            log.warning("FOM at point %d failed: %s", i, r)
            failed.append({"index": i, "theta": tasks[i][1].tolist(), "error": str(r)})
        else:
            ok.append(r)
    return ok, failed


def build_database(
    case: CaseSetup,
    thetas,
    energy_target: float = 0.9999,
    solver: dict | None = None,
    jobs: int = 1,
    snapshots=None,
    weighting: str = "volume",
) -> RomDatabase:
    """FOM snapshots, POD per observable, DEIM, and one projected reduced
    model per training point.

    ``snapshots`` (a list of :class:`FomResult`) skips the FOM stage.
    ``weighting='volume'`` measures the lifted residual in the discrete
    L2 norm over the domain (rows weighted by cell volume); ``'none'``
    uses the raw Green-Gauss rows.
    """
    if weighting not in ("volume", "none"):
        raise ValueError(f"unknown residual weighting {weighting!r}")
    timings = {}
    t0 = time.perf_counter()
    failed = []
    if snapshots is None:
        snapshots, failed = collect_snapshots(case, thetas, solver, jobs)
    n_req = len(snapshots) + len(failed)
    if failed and len(failed) > MAX_SKIP_FRACTION * n_req:
        raise BuildError(f"{len(failed)} of {n_req} FOM solves failed (limit {int(MAX_SKIP_FRACTION * 100)}%)")
    if not snapshots:
        raise BuildError("no snapshots")
    timings["fom"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    fs = case.freestream
    slices = [pod(np.column_stack([s.Ys[i] for s in snapshots]), energy_target) for i in range(8)]
    basis = assemble_block_basis(slices, observable_scales(fs), energy_target)
    # On converged snapshots each quotient nonlinear term equals its target
    # observable, so the nonlinear-term POD basis is the target basis itself.
    dd = build_deim(basis, [basis.phis[t] for t in CONSTRAINT_TARGET], gamma=fs.gamma)
    timings["reduction"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    instances, coords = [], []
    for s in snapshots:
        mesh = case.mesh_at(s.theta)
        sys = assemble_lifted(assemble_gradient_ops(mesh), fs, mesh, s.theta)
        y = s.Ys.ravel()
        sys.f = sys.A @ y
        w = mesh.cell_volumes if weighting == "volume" else None
        instances.append(project(sys, basis, theta=s.theta, weights=w))
        coords.append(basis.reduce_scaled(s.Ys))
    timings["projection"] = time.perf_counter() - t2
    outputs = {
        "cl": np.array([s.cl for s in snapshots]),
        "cd": np.array([s.cd for s in snapshots]),
        "cp": np.vstack([s.cp for s in snapshots]),
        "fom_seconds": np.array([s.seconds for s in snapshots]),
    }
    meta = {"energy_target": energy_target, "weighting": weighting, "failed": failed, "timings": timings, "ks": basis.ks}
    return RomDatabase(np.vstack([s.theta for s in snapshots]), instances, basis, dd,
                       np.vstack(coords), case, outputs, meta)


def rom_evaluate(db: RomDatabase, theta, opts: SolveOptions | None = None, mesh=None) -> dict:
    """Interpolate, solve and post-process one parameter point.

    With ``opts.starts > 1`` the solve is repeated from the reduced
    snapshots of that many nearest training points and the feasible
    solution with the lowest objective is kept; the error of the nearest
    start is raised if none converges.
    """
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    rom = interpolate_rom(db, theta)
    t1 = time.perf_counter()
    sol, first_err = None, None
    for y0, i0 in initial_guesses(db, theta, opts.starts):
        try:
            cand = solve_rom(rom, db.deim, y0, db.basis.ks, opts, init_id=i0)
        except RomSolveError as exc:
            first_err = first_err or exc
            continue
        if sol is None or cand.objective < sol.objective:
            sol = cand
    if sol is None:
        raise first_err
    t2 = time.perf_counter()
    out = predict_full(db, sol.y, theta, mesh)
    t3 = time.perf_counter()
    out["solution"] = sol
    out["timing"] = {"interpolate": t1 - t0, "solve": t2 - t1, "lift": t3 - t2, "total": t3 - t0}
    return out


def error_metrics(cp_rom, cp_fom, cl_rom, cl_fom, cd_rom, cd_fom) -> dict:
    """Percent errors: C_P in the relative max norm, C_l and C_d relative."""
    cp_rom, cp_fom = np.asarray(cp_rom, dtype=float), np.asarray(cp_fom, dtype=float)
    if cp_rom.shape != cp_fom.shape:
        raise ValueError("C_P distributions differ in length")
    return {
        "cp": 100.0 * float(np.abs(cp_fom - cp_rom).max() / np.abs(cp_fom).max()),
        "cl": 100.0 * abs(cl_fom - cl_rom) / abs(cl_fom),
        "cd": 100.0 * abs(cd_fom - cd_rom) / abs(cd_fom),
    }
