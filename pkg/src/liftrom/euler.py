"""Steady 2D compressible Euler full-order model and state/observable maps.

The solver marches the conservative equations in pseudo-time with a
first-order Rusanov flux and local time stepping. Internally everything is
scaled by ``rho_inf`` and ``a_inf``; inputs and outputs are dimensional.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .mesh import Mesh

__all__ = [
    "Freestream",
    "FlowState",
    "ObservableVector",
    "SolverError",
    "NACA_FREESTREAM",
    "RAE_FREESTREAM",
    "INVERSE_DESIGN_FREESTREAM",
    "solve_euler",
    "state_to_observables",
    "observables_to_state",
    "aero_coefficients",
    "observable_scales",
    "save_snapshot",
    "load_snapshot",
]

log = logging.getLogger(__name__)

OBSERVABLE_NAMES = ("rho_u", "rho_v", "rho_uv", "p", "rho_u2", "rho_v2", "rho_uH", "rho_vH")
GUARD_EPS = 1e-8
# scaled residuals this small are roundoff: the state is already steady
RESIDUAL_FLOOR = 1e-13


class SolverError(RuntimeError):
    def __init__(self, msg, history=None, cell=None):
        super().__init__(msg)
        self.history = history if history is not None else []
        self.cell = cell


@dataclass(frozen=True)
class Freestream:
    p_inf: float
    rho_inf: float
    a_inf: float
    mach: float
    alpha: float  # degrees
    gamma: float = 1.4
    mu_inf: float | None = None  # carried for completeness; inviscid model ignores it

    def __post_init__(self):
        for name in ("p_inf", "rho_inf", "a_inf", "mach", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        a2 = self.gamma * self.p_inf / self.rho_inf
        if abs(a2 / self.a_inf**2 - 1.0) > 0.01:
            raise ValueError(
                f"a_inf={self.a_inf} inconsistent with gamma*p/rho (a={np.sqrt(a2):.3f}) beyond 1%"
            )

    @property
    def speed(self) -> float:
        return self.mach * self.a_inf

    @property
    def velocity(self) -> tuple[float, float]:
        al = np.deg2rad(self.alpha)
        return self.speed * np.cos(al), self.speed * np.sin(al)

    @property
    def dynamic_pressure(self) -> float:
        return 0.5 * self.rho_inf * self.speed**2

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("p_inf", "rho_inf", "a_inf", "mach", "alpha", "gamma", "mu_inf")}


NACA_FREESTREAM = Freestream(101325.0, 1.225, 340.296, 0.60, 2.0, mu_inf=1.78e-5)
RAE_FREESTREAM = Freestream(28745.0, 0.44, 301.86, 0.734, 2.79, mu_inf=1.49e-5)
INVERSE_DESIGN_FREESTREAM = Freestream(101325.0, 1.225, 340.296, 0.6, 2.0)


@dataclass
class FlowState:
    rho: np.ndarray
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    info: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n(self) -> int:
        return self.rho.size

    def stacked(self) -> np.ndarray:
        return np.vstack([self.rho, self.u, self.v, self.p])

    @classmethod
    def uniform(cls, fs: Freestream, n: int) -> "FlowState":
        u, v = fs.velocity
        one = np.ones(n)
        return cls(fs.rho_inf * one, u * one, v * one, fs.p_inf * one)


@dataclass
class ObservableVector:
    """The eight lifted observables, stored as an ``(8, N)`` array."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[0] != 8:
            raise ValueError("observables must have shape (8, N)")

    def __getitem__(self, i):  # 1-based like y1..y8
        return self.data[i - 1]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    @classmethod
    def from_flat(cls, y) -> "ObservableVector":
        return cls(np.asarray(y, dtype=float).reshape(8, -1))


def observable_scales(fs: Freestream) -> np.ndarray:
    """Reference magnitude of each observable built from ``rho_inf``, ``a_inf``.

    Mass fluxes scale with ``rho a``, momentum fluxes and pressure with
    ``rho a^2``, enthalpy fluxes with ``rho a^3``, so every block row of the
    lifted operator stays dimensionally homogeneous after scaling.
    """
    r, a = fs.rho_inf, fs.a_inf
    return np.array([r * a, r * a, r * a**2, r * a**2, r * a**2, r * a**2, r * a**3, r * a**3])


# -- solver ------------------------------------------------------------------

def _face_sets(mesh: Mesh, ref_len=1.0):
    inner = mesh.interior_faces
    sets = [
        (
            mesh.face_owner[inner].astype(np.int64),
            mesh.face_neighbor[inner].astype(np.int64),
            np.ascontiguousarray(mesh.face_normal[inner, 0]),
            np.ascontiguousarray(mesh.face_normal[inner, 1]),
            np.ascontiguousarray(mesh.face_area[inner]),
        )
    ]
    for name in ("wall", "farfield"):
        f = mesh.patch_faces(name)
        sets.append(
            (
                mesh.face_owner[f].astype(np.int64),
                np.ascontiguousarray(mesh.face_normal[f, 0]),
                np.ascontiguousarray(mesh.face_normal[f, 1]),
                np.ascontiguousarray(mesh.face_area[f]),
            )
        )
    extra = set(mesh.patch_names) - {"wall", "farfield"}
    if extra:
        raise ValueError(f"unsupported boundary patches {sorted(extra)}")
    return sets


def _to_conservative(rho, u, v, p, gamma):
    U = np.empty((rho.size, 4))
    U[:, 0] = rho
    U[:, 1] = rho * u
    U[:, 2] = rho * v
    U[:, 3] = p / (gamma - 1.0) + 0.5 * rho * (u * u + v * v)
    return U


def solve_euler(
    mesh: Mesh,
    fs: Freestream,
    cfl: float = 0.8,
    max_iters: int = 200000,
    tol: float = 1e-8,
    init: FlowState | None = None,
    backend: str | None = None,
) -> FlowState:
    """Converge the steady Euler equations on ``mesh``.

    Stops once the L2 norm of the density residual falls below
    ``tol`` times its initial value (or to roundoff level). Raises :class:`SolverError` on
    non-convergence or loss of positivity.
    """
    if not mesh.patch_faces("farfield").size:
        raise ValueError("mesh needs a farfield patch")
    kernel = kernels.get_backend(backend)
    g = fs.gamma
    rs, as_ = fs.rho_inf, fs.a_inf
    ps = rs * as_**2
    uinf, vinf = fs.velocity
    winf = np.array([1.0, uinf / as_, vinf / as_, fs.p_inf / ps])
    inner, wall, far = _face_sets(mesh)

    if init is None:
        init = FlowState.uniform(fs, mesh.n_cells)
    U = _to_conservative(init.rho / rs, init.u / as_, init.v / as_, init.p / ps, g)
    R = np.empty_like(U)
    lam = np.empty(mesh.n_cells)
    history = []
    r0 = None
    it = 0
    converged = False
    for it in range(max_iters + 1):
        kernel(U, inner, wall, far, winf, g, R, lam)
        res = float(np.sqrt(np.mean(R[:, 0] ** 2)))
        if r0 is None:
            r0 = res
        history.append(res)
        if res <= tol * r0 or res <= RESIDUAL_FLOOR:
            converged = True
            break
        if it == max_iters:
            break
        U -= (cfl / lam)[:, None] * R
        if it % 50 == 0:
            rho = U[:, 0]
            p = (g - 1.0) * (U[:, 3] - 0.5 * (U[:, 1] ** 2 + U[:, 2] ** 2) / rho)
            bad = np.flatnonzero(~((rho > 0) & (p > 0)))
            if bad.size:
                raise SolverError(
                    f"non-positive density/pressure at cell {bad[0]} (iteration {it})",
                    history,
                    int(bad[0]),
                )
    if not converged:
        raise SolverError(
            f"no convergence after {max_iters} iterations "
            f"(relative residual {history[-1] / r0:.3e})",
            history,
        )
    rho = U[:, 0]
    u = U[:, 1] / rho
    v = U[:, 2] / rho
    p = (g - 1.0) * (U[:, 3] - 0.5 * rho * (u * u + v * v))
    if np.any(rho <= 0) or np.any(p <= 0):
        bad = int(np.flatnonzero((rho <= 0) | (p <= 0))[0])
        raise SolverError(f"non-positive density/pressure at cell {bad}", history, bad)
    state = FlowState(rho * rs, u * as_, v * as_, p * ps)
    state.info = {"iterations": it, "history": np.asarray(history), "backend": kernels.BACKEND if backend is None else backend}
    return state


def farfield_mass_imbalance(state: FlowState, mesh: Mesh, fs: Freestream) -> tuple[float, float]:
    """(net outward mass flux, inflow mass flux) through the far-field,
    using the same boundary flux as the solver."""
    from ._kernels_py import _rusanov, farfield_state

    g = fs.gamma
    far = mesh.patch_faces("farfield")
    o = mesh.face_owner[far]
    nx, ny = mesh.face_normal[far, 0], mesh.face_normal[far, 1]
    rs, as_ = fs.rho_inf, fs.a_inf
    ps = rs * as_**2
    uinf, vinf = fs.velocity
    winf = (1.0, uinf / as_, vinf / as_, fs.p_inf / ps)
    r, u, v, p = state.rho[o] / rs, state.u[o] / as_, state.v[o] / as_, state.p[o] / ps
    rb, ub, vb, pb = farfield_state(r, u, v, p, nx, ny, winf, g)
    f, _ = _rusanov(r, u, v, p, rb, ub, vb, pb, nx, ny, g)
    m = f[:, 0] * mesh.face_area[far]
    return float(m.sum()), float(-m[m < 0].sum())


# -- state <-> observables ----------------------------------------------------

def state_to_observables(s: FlowState, fs: Freestream) -> ObservableVector:
    g = fs.gamma
    rho, u, v, p = s.rho, s.u, s.v, s.p
    if np.any(rho <= 0) or np.any(p <= 0):
        raise ValueError("density and pressure must be positive")
    rhoE = 0.5 * rho * (u * u + v * v) + p / (g - 1.0)
    H = (rhoE + p) / rho
    return ObservableVector(
        np.vstack([rho * u, rho * v, rho * u * v, p, rho * u * u, rho * v * v, rho * u * H, rho * v * H])
    )


def observables_to_state(y: ObservableVector, fs: Freestream) -> FlowState:
    """Invert the observable map: ``p = y4``, ``u = y3/y2``, ``v = y3/y1``,
    ``rho = y1 y2 / y3``.

    Where ``y2`` or ``y3`` falls below ``GUARD_EPS`` times its freestream
    scale the quotients are replaced by ``rho = y1^2/y5`` (or ``y2^2/y6``)
    and ``u = y1/rho``, ``v = y2/rho``.
    """
    sc = observable_scales(fs)
    y1, y2, y3, y4, y5, y6 = (y[i] for i in range(1, 7))
    p = y4.copy()
    guard = (np.abs(y2) < GUARD_EPS * sc[1]) | (np.abs(y3) < GUARD_EPS * sc[2]) | (np.abs(y1) < GUARD_EPS * sc[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        u = y3 / y2
        v = y3 / y1
        rho = y1 * y2 / y3
        if np.any(guard):
            use5 = np.abs(y5) >= np.abs(y6)
            rho_g = np.where(use5, y1 * y1 / y5, y2 * y2 / y6)
            rho[guard] = rho_g[guard]
            u[guard] = y1[guard] / rho_g[guard]
            v[guard] = y2[guard] / rho_g[guard]
    frac = guard.mean() if guard.size else 0.0
    if frac > 0.01:
        warnings.warn(f"division guard active in {100 * frac:.2f}% of cells", RuntimeWarning, stacklevel=2)
    if np.any(~np.isfinite(rho)) or np.any(~np.isfinite(u)) or np.any(~np.isfinite(v)):
        bad = int(np.flatnonzero(~(np.isfinite(rho) & np.isfinite(u) & np.isfinite(v)))[0])
        raise FloatingPointError(f"state recovery produced NaN/inf at cell {bad}")
    st = FlowState(rho, u, v, p)
    st.info = {"guarded_fraction": float(frac)}
    return st


# -- outputs -------------------------------------------------------------------

def aero_coefficients(s: FlowState, mesh: Mesh, fs: Freestream, chord: float | None = None) -> dict:
    """Wall pressure coefficient and lift/drag coefficients (pressure forces)."""
    wall = mesh.patch_faces("wall")
    if wall.size == 0:
        raise ValueError("mesh has no wall patch")
    if chord is None:
        chord = mesh.wall_chord()
    if not chord > 0:
        raise ValueError("zero chord")
    q = fs.dynamic_pressure
    pw = s.p[mesh.face_owner[wall]]
    cp = (pw - fs.p_inf) / q
    dF = ((pw - fs.p_inf) * mesh.face_area[wall])[:, None] * mesh.face_normal[wall]
    F = dF.sum(axis=0)
    al = np.deg2rad(fs.alpha)
    lift = -F[0] * np.sin(al) + F[1] * np.cos(al)
    drag = F[0] * np.cos(al) + F[1] * np.sin(al)
    return {
        "cp": cp,
        "cl": float(lift / (q * chord)),
        "cd": float(drag / (q * chord)),
        "x": mesh.face_centers[wall, 0].copy(),
        "y": mesh.face_centers[wall, 1].copy(),
    }


# -- snapshot files -------------------------------------------------------------

SNAP_MAGIC = b"liftrom-snap v1"


def save_snapshot(path, y: ObservableVector, state: FlowState, theta) -> None:
    theta = np.asarray(theta, dtype="<f8").ravel()
    head = SNAP_MAGIC + f" {y.n} O=8 d={theta.size}\n".encode()
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(y.data, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.stacked(), dtype="<f8").tobytes())
        fh.write(theta.tobytes())


def load_snapshot(path):
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    head = raw[:nl].split()
    if nl < 0 or b" ".join(head[:2]) != SNAP_MAGIC or head[3] != b"O=8":
        raise ValueError(f"not a liftrom snapshot file: {path}")
    n = int(head[2])
    d = int(head[4].split(b"=")[1])
    body = np.frombuffer(raw[nl + 1 :], dtype="<f8")
    if body.size != 12 * n + d:
        raise ValueError("truncated snapshot file")
    y = ObservableVector(body[: 8 * n].reshape(8, n).copy())
    st = body[8 * n : 12 * n].reshape(4, n)
    return y, FlowState(*[row.copy() for row in st]), body[12 * n :].copy()
