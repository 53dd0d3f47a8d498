"""Projection of the lifted system and the constrained reduced solve.

The reduced problem is

    min_y  1/2 ||B y - f||^2   subject to   h(y) = 0,

with ``h`` the DEIM-reduced closure constraints. It is solved by damped
Gauss-Newton steps on the KKT system (a null-space SQP that never forms
``B^T B``), globalized with an l2 merit function. When the line search
stalls, an augmented-Lagrangian loop takes over.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import least_squares

from .reduction import BlockBasis, DeimData, deim_constraint, deim_constraint_jacobian
from .spd import SpdError, sym

__all__ = [
    "RomInstance",
    "ReducedSolution",
    "SolveOptions",
    "RomSolveError",
    "ConstraintFn",
    "project",
    "solve_rom",
    "reduced_objective",
]

log = logging.getLogger(__name__)


class RomSolveError(RuntimeError):
    """Raised when the reduced solve fails; ``best`` holds the best iterate."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


@dataclass
class RomInstance:
    B: np.ndarray
    f: np.ndarray
    theta: np.ndarray | None = None
    provenance: str = "snapshot-built"

    def __post_init__(self):
        self.B = np.asarray(self.B, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        if self.B.shape != (self.f.size, self.f.size):
            raise ValueError(f"B is {self.B.shape} but f has length {self.f.size}")

    @property
    def k(self) -> int:
        return self.f.size

    def check_spd(self):
        if np.abs(self.B - self.B.T).max() > 1e-10 * max(1.0, np.abs(self.B).max()):
            raise SpdError("reduced matrix is not symmetric")
        w = np.linalg.eigvalsh(self.B)
        if w[0] <= 0.0:
            raise SpdError(f"reduced matrix is not positive definite (min eigenvalue {w[0]:.3e})")
        return w


@dataclass
class ReducedSolution:
    y: np.ndarray
    objective: float
    constraint_norm: float
    iterations: int
    init_id: int | None = None
    evaluations: int = 0
    method: str = "sqp"
    converged: bool = True
    theta: np.ndarray | None = None
    timing: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "theta": None if self.theta is None else np.asarray(self.theta).tolist(),
                "y": np.asarray(self.y).tolist(),
                "objective": self.objective,
                "constraint_norm": self.constraint_norm,
                "iterations": self.iterations,
                "evaluations": self.evaluations,
                "init_id": self.init_id,
                "method": self.method,
                "converged": self.converged,
                "timing": self.timing,
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "ReducedSolution":
        d = json.loads(text)
        return cls(
            y=np.asarray(d["y"], dtype=float),
            objective=d["objective"],
            constraint_norm=d["constraint_norm"],
            iterations=d["iterations"],
            init_id=d.get("init_id"),
            evaluations=d.get("evaluations", 0),
            method=d.get("method", "sqp"),
            converged=d.get("converged", True),
            theta=None if d.get("theta") is None else np.asarray(d["theta"], dtype=float),
            timing=d.get("timing", {}),
        )


@dataclass
class SolveOptions:
    obj_tol: float = 1e-6
    con_tol: float = 1e-6
    max_evals: int = 4_000_000
    max_iters: int = 200
    form: str = "cross"
    starts: int = 1  # initial guesses tried by ``rom_evaluate``, nearest first


def project(sys, basis: BlockBasis, f=None, theta=None, weights=None) -> RomInstance:
    """``B = (A Phi)^T W (A Phi)``, ``f = (A Phi)^T W f`` in the scaled space.

    ``sys.A`` acts on scaled observables; ``f`` defaults to ``sys.f``.
    ``weights`` are optional non-negative row weights ``W`` (length ``4N``,
    or ``N`` to repeat per block row); the default is the plain product.
    """
    f = sys.f if f is None else f
    if f is None:
        raise ValueError("lifted system has no right-hand side; call extract_rhs first")
    if sys.A.shape[1] != 8 * basis.n_cells:
        raise ValueError(f"A has {sys.A.shape[1]} columns, basis expects {8 * basis.n_cells}")
    AP = basis.apply_operator(sys.A)
    f = np.asarray(f, dtype=float)
    if weights is not None:
        w = np.asarray(weights, dtype=float).ravel()
        if w.size * 4 == AP.shape[0]:
            w = np.tile(w, 4)
        if w.size != AP.shape[0] or np.any(w < 0):
            raise ValueError("row weights must be non-negative with one entry per row (or per cell)")
        sw = np.sqrt(w)
        AP = sw[:, None] * AP
        f = sw * f
    rom = RomInstance(sym(AP.T @ AP), AP.T @ f, theta=theta if theta is not None else sys.theta)
    rom.check_spd()
    return rom


def reduced_objective(rom: RomInstance, y) -> float:
    r = rom.B @ y - rom.f
    return 0.5 * float(r @ r)


@dataclass
class ConstraintFn:
    """Explicit equality constraint ``h(y) = 0`` with Jacobian ``J(y)``,
    accepted by :func:`solve_rom` in place of DEIM data."""

    fun: object
    jac: object


class _Problem:
    """Counts objective/constraint evaluations against the budget."""

    def __init__(self, rom, dd, ks, opts):
        self.rom, self.dd, self.ks, self.opts = rom, dd, ks, opts
        self.offs = np.concatenate([[0], np.cumsum(ks)]) if ks is not None else None
        self.evals = 0
        self.explicit = isinstance(dd, ConstraintFn)

    def _tick(self):
        self.evals += 1
        if self.evals > self.opts.max_evals:
            raise _Budget()

    def parts(self, y):
        o = self.offs
        return [y[o[i] : o[i + 1]] for i in range(8)]

    def obj(self, y):
        self._tick()
        return reduced_objective(self.rom, y)

    def con(self, y):
        if self.dd is None:
            return np.zeros(0)
        self._tick()
        if self.explicit:
            return np.atleast_1d(np.asarray(self.dd.fun(y), dtype=float))
        return deim_constraint(self.dd, self.parts(y), self.opts.form)

    def jac(self, y):
        if self.dd is None:
            return np.zeros((0, y.size))
        if self.explicit:
            return np.atleast_2d(np.asarray(self.dd.jac(y), dtype=float))
        return deim_constraint_jacobian(self.dd, self.parts(y), self.ks, self.opts.form)


class _Budget(Exception):
    pass


def _sqp(pb: _Problem, y0):
    """Null-space Gauss-Newton SQP with an l2-penalty merit line search.

    Returns ``(y, iterations, ok)``; ``ok`` is False when the line search
    failed or the iteration cap was hit.
    """
    B, f, opts = pb.rom.B, pb.rom.f, pb.opts
    y = y0.copy()
    mu = 1.0
    c = pb.con(y)
    phi = pb.obj(y)
    for it in range(1, opts.max_iters + 1):
        r = B @ y - f
        J = pb.jac(y)
        m = J.shape[0]
        if m:
            Q, R = np.linalg.qr(J.T, mode="complete")
            Rm = R[:m]
            if np.abs(np.diag(Rm)).min() <= 1e-13 * max(1.0, np.abs(Rm).max()):
                return y, it, False  # rank-deficient linearization
            Q1, Z = Q[:, :m], Q[:, m:]
            dp = -Q1 @ sla.solve_triangular(Rm, c, trans="T")
        else:
            Z = np.eye(y.size)
            dp = np.zeros_like(y)
            Q1 = Rm = None
        rp = r + B @ dp
        BZ = B @ Z
        w = np.linalg.lstsq(BZ, -rp, rcond=None)[0]
        d = dp + Z @ w
        # multipliers of the QP; they size the merit penalty
        if m:
            g_new = B.T @ (rp + BZ @ w)
            lam = -sla.solve_triangular(Rm, Q1.T @ g_new)
            mu = max(mu, 2.0 * np.linalg.norm(lam))
        cn = np.linalg.norm(c)
        merit = phi + mu * cn
        slope = float((B.T @ r) @ d) - mu * cn
        step_small = np.linalg.norm(d) <= 1e-12 * (1.0 + np.linalg.norm(y))
        if step_small and cn <= opts.con_tol:
            return y, it, True
        if slope >= 0.0:
            slope = -1e-16 * (1.0 + abs(merit))
        alpha = 1.0
        while True:
            yt = y + alpha * d
            ct = pb.con(yt)
            pt = pb.obj(yt)
            mt = pt + mu * np.linalg.norm(ct)
            if np.isfinite(mt) and mt <= merit + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
            if alpha < 1e-10:
                return y, it, False
        y, c, phi_old, phi = yt, ct, phi, pt
        cn = np.linalg.norm(c)
        rel = abs(phi_old - phi) / max(1.0, abs(phi))
        if cn <= opts.con_tol and rel <= opts.obj_tol and alpha * np.linalg.norm(d) <= np.sqrt(opts.obj_tol) * (1.0 + np.linalg.norm(y)):
            return y, it, True
    return y, opts.max_iters, False


def _augmented_lagrangian(pb: _Problem, y0):
    B, f, opts = pb.rom.B, pb.rom.f, pb.opts
    y = y0.copy()
    m = pb.con(y).size
    lam = np.zeros(m)
    rho = 10.0
    it = 0
    for outer in range(30):
        sr = np.sqrt(rho)

        def res(z):
            return np.concatenate([B @ z - f, sr * (pb.con(z) + lam / rho)])

        def jac(z):
            return np.vstack([B, sr * pb.jac(z)])

        sol = least_squares(res, y, jac=jac, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=200)
        y = sol.x
        it += sol.nfev
        c = pb.con(y)
        if np.linalg.norm(c) <= opts.con_tol:
            return y, it, True
        lam = lam + rho * c
        rho *= 10.0
    return y, it, False


def solve_rom(rom: RomInstance, dd: DeimData | ConstraintFn | None, init, ks=None,
              opts: SolveOptions | None = None, init_id=None) -> ReducedSolution:
    """Solve the constrained reduced problem from ``init``.

    ``dd=None`` gives the unconstrained least-squares solution. ``ks`` are
    the per-observable basis sizes (required with DEIM constraints).
    """
    opts = opts or SolveOptions()
    y0 = np.asarray(init, dtype=float).copy()
    if y0.size != rom.k:
        raise ValueError(f"initial guess has length {y0.size}, ROM has k={rom.k}")
    t0 = time.perf_counter()
    if dd is None:
        y = np.linalg.solve(rom.B, rom.f)
        return ReducedSolution(y, reduced_objective(rom, y), 0.0, 1, init_id, 1, "direct",
                               theta=rom.theta, timing={"solve": time.perf_counter() - t0})
    if not isinstance(dd, ConstraintFn) and (ks is None or sum(ks) != rom.k):
        raise ValueError("basis sizes ks must be given and sum to k")
    pb = _Problem(rom, dd, ks, opts)
    best = (y0, np.inf)
    method = "sqp"
    try:
        y, iters, ok = _sqp(pb, y0)
        best = (y, np.linalg.norm(pb.con(y)))
        if not ok or best[1] > opts.con_tol:
            log.info("SQP stalled after %d iterations (|h|=%.2e); augmented Lagrangian fallback", iters, best[1])
            method = "augmented-lagrangian"
            y, it2, ok = _augmented_lagrangian(pb, y)
            iters += it2
            cn = np.linalg.norm(pb.con(y))
            if cn < best[1]:
                best = (y, cn)
    except _Budget:
        raise RomSolveError(f"evaluation budget {opts.max_evals} exhausted", best[0]) from None
    y, cn = best
    sol = ReducedSolution(y, reduced_objective(rom, y), float(cn), iters, init_id, pb.evals, method,
                          converged=bool(cn <= opts.con_tol), theta=rom.theta,
                          timing={"solve": time.perf_counter() - t0})
    if not sol.converged:
        raise RomSolveError(f"constraint norm {cn:.3e} above tolerance {opts.con_tol:.1e}", sol)
    return sol
