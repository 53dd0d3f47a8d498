"""Database of per-parameter reduced models: nearest-anchor selection,
SPD tangent-space interpolation and persistence."""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .case import CaseSetup
from .euler import ObservableVector, aero_coefficients, observables_to_state
from .reduction import BlockBasis, DeimData, load_basis_bytes, basis_bytes
from .rom import RomInstance
from .spd import spd_exp, spd_log, spd_sqrt_pair, sym

__all__ = [
    "RomDatabase",
    "nearest_anchor",
    "standardize_scales",
    "interpolate_rom",
    "initial_guess",
    "initial_guesses",
    "predict_full",
    "save_db",
    "load_db",
    "spd_log",
    "spd_exp",
]

log = logging.getLogger(__name__)

NODE_TOL = 1e-12


@dataclass
class RomDatabase:
    """Training parameters, per-point reduced models and the shared
    basis/DEIM data.

    ``coords`` holds the reduced training snapshots (``M x k``) used as
    initial guesses; ``case`` rebuilds meshes for post-processing.
    """

    thetas: np.ndarray
    instances: list
    basis: BlockBasis
    deim: DeimData | None
    coords: np.ndarray
    case: CaseSetup | None = None
    outputs: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        M = self.thetas.shape[0]
        if M == 0:
            raise ValueError("database is empty")
        if len(self.instances) != M or self.coords.shape[0] != M:
            raise ValueError("instances/coords do not match the number of parameters")
        ks = {r.k for r in self.instances}
        if ks != {self.basis.k}:
            raise ValueError(f"instance sizes {sorted(ks)} disagree with basis k={self.basis.k}")
        if np.unique(self.thetas, axis=0).shape[0] != M:
            raise ValueError("training parameters contain duplicate rows")

    @property
    def M(self) -> int:
        return self.thetas.shape[0]

    @property
    def d(self) -> int:
        return self.thetas.shape[1]

    @property
    def k(self) -> int:
        return self.basis.k

    @property
    def std(self) -> np.ndarray:
        return self.thetas.std(axis=0)


def standardize_scales(thetas) -> np.ndarray:
    """Per-dimension weights ``1/std``; zero-spread dimensions get weight 0."""
    std = np.atleast_2d(thetas).std(axis=0)
    w = np.zeros_like(std)
    ok = std > 0
    if not np.all(ok) and std.size > 0 and np.atleast_2d(thetas).shape[0] > 1:
        warnings.warn(
            f"parameter dimension(s) {np.flatnonzero(~ok).tolist()} have zero spread; dropped from the metric",
            RuntimeWarning,
            stacklevel=3,
        )
    w[ok] = 1.0 / std[ok]
    return w


def _distances(thetas, theta, w):
    z = (np.atleast_2d(thetas) - np.asarray(theta, dtype=float).ravel()) * w
    return np.sqrt(np.sum(z * z, axis=1))


def nearest_anchor(db_or_thetas, theta) -> int:
    """Index of the training point nearest to ``theta`` in standardized
    Euclidean distance; ties go to the lowest index."""
    thetas = db_or_thetas.thetas if isinstance(db_or_thetas, RomDatabase) else np.atleast_2d(db_or_thetas)
    if thetas.shape[0] == 0:
        raise ValueError("no training points")
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != thetas.shape[1]:
        raise ValueError(f"theta has {theta.size} entries, database has d={thetas.shape[1]}")
    w = standardize_scales(thetas)
    return int(np.argmin(_distances(thetas, theta, w)))  # argmin keeps the first minimum


def initial_guess(db: RomDatabase, theta):
    """``(reduced snapshot, index)`` of the nearest training point."""
    i = nearest_anchor(db, theta)
    return db.coords[i].copy(), i


def initial_guesses(db: RomDatabase, theta, count: int):
    """Up to ``count`` ``(reduced snapshot, index)`` pairs, nearest first;
    equal distances keep index order."""
    if count < 1:
        raise ValueError("count must be at least 1")
    thetas = db.thetas
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != thetas.shape[1]:
        raise ValueError(f"theta has {theta.size} entries, database has d={thetas.shape[1]}")
    dist = _distances(thetas, theta, standardize_scales(thetas))
    order = np.argsort(dist, kind="stable")[:count]
    return [(db.coords[i].copy(), int(i)) for i in order]


def _design(Z, degree):
    """Monomials up to ``degree`` in the columns of ``Z``."""
    n, d = Z.shape
    cols = [np.ones(n)]
    if degree >= 1:
        cols += [Z[:, i] for i in range(d)]
    if degree >= 2:
        cols += [Z[:, i] * Z[:, j] for i in range(d) for j in range(i, d)]
    return np.column_stack(cols)


def n_coeffs(d: int, degree: int) -> int:
    return {0: 1, 1: d + 1, 2: (d + 1) * (d + 2) // 2}[degree]


def stencil(thetas, theta, w=None):
    """Neighbour indices (nearest first) and polynomial degree for a query."""
    thetas = np.atleast_2d(thetas)
    M = thetas.shape[0]
    if w is None:
        w = standardize_scales(thetas)
    d_eff = int(np.count_nonzero(w))
    m = min(M, (d_eff + 1) * (d_eff + 2))
    order = np.argsort(_distances(thetas, theta, w), kind="stable")[:m]
    degree = 2
    while degree > 0 and m < n_coeffs(d_eff, degree):
        degree -= 1
    if degree < 2 and M > 1:
        warnings.warn(
            f"only {m} neighbours for d={d_eff}; polynomial degree lowered to {degree}",
            RuntimeWarning,
            stacklevel=3,
        )
    return order, degree


def interpolate_rom(db: RomDatabase, theta) -> RomInstance:
    """Reduced model at ``theta``.

    ``B`` is interpolated on the tangent plane at the nearest training
    matrix: neighbours are mapped with the Log map, an element-wise
    quadratic is fitted by least squares in standardized coordinates
    centred at ``theta``, and its constant term is mapped back with Exp.
    ``f`` uses the same stencil and fit in Euclidean space. A query on a
    training point returns that instance. If rounding leaves the mapped
    matrix non-positive, the fit is repeated at a lower degree, down to
    the anchor itself.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    w = standardize_scales(db.thetas)
    dist = _distances(db.thetas, theta, w)
    a = int(np.argmin(dist))
    if dist[a] <= NODE_TOL or db.M == 1:
        src = db.instances[a]
        return RomInstance(src.B.copy(), src.f.copy(), theta, "interpolated")
    idx, degree = stencil(db.thetas, theta, w)
    keep = w > 0
    Z = ((db.thetas[idx] - theta) * w)[:, keep]
    B0 = db.instances[a].B
    pair = spd_sqrt_pair(B0)
    iu = np.triu_indices(db.k)
    T = np.empty((len(idx), iu[0].size))
    F = np.empty((len(idx), db.k))
    for r, j in enumerate(idx):
        T[r] = (np.zeros((db.k, db.k)) if j == a else spd_log(B0, db.instances[j].B, pair, check=False))[iu]
        F[r] = db.instances[j].f
    rhs = np.hstack([T, F])
    while True:
        coef = np.linalg.lstsq(_design(Z, degree), rhs, rcond=None)[0][0]
        Tq = np.zeros((db.k, db.k))
        Tq[iu] = coef[: iu[0].size]
        Tq = Tq + np.triu(Tq, 1).T
        with np.errstate(over="ignore", invalid="ignore"):
            B = spd_exp(B0, Tq, pair)
        # a near-degenerate stencil can overshoot past what float64 resolves
        if np.isfinite(B).all() and np.linalg.eigvalsh(B)[0] > 0.0:
            return RomInstance(B, coef[iu[0].size :], theta, "interpolated")
        if degree == 0:
            src = db.instances[a]
            return RomInstance(src.B.copy(), src.f.copy(), theta, "interpolated")
        degree -= 1
        warnings.warn(f"interpolant lost positivity; polynomial degree lowered to {degree}", RuntimeWarning, stacklevel=2)


def predict_full(db: RomDatabase, y, theta, mesh=None) -> dict:
    """Lift reduced coordinates, recover the state and wall outputs."""
    if db.case is None:
        raise ValueError("database has no case setup; cannot build the mesh")
    fs = db.case.freestream
    obs = db.basis.lift(np.asarray(y, dtype=float))
    state = observables_to_state(obs, fs)
    if mesh is None:
        mesh = db.case.mesh_at(theta)
    out = aero_coefficients(state, mesh, fs)
    out["state"] = state
    out["observables"] = obs
    return out


# -- persistence ----------------------------------------------------------------------

DB_MAGIC = b"liftrom-db v1"


def _arr(fh, a):
    fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _deim_bytes(dd: DeimData | None, basis: BlockBasis) -> bytes:
    """Per constraint: q, flag (X equals the target basis prefix), idx,
    proj, optional X. ``rows`` are rebuilt from the basis on load."""
    from .reduction import CONSTRAINT_TARGET

    if dd is None:
        return np.int64(0).astype("<i8").tobytes()
    out = [np.int64(4).astype("<i8").tobytes(), np.float64(dd.gamma).astype("<f8").tobytes()]
    for c, t in enumerate(CONSTRAINT_TARGET):
        X = dd.X[c]
        q = X.shape[1]
        phi = basis.phis[t]
        shared = q <= phi.shape[1] and np.array_equal(X, phi[:, :q])
        out.append(np.array([q, int(shared)], dtype="<i8").tobytes())
        out.append(np.asarray(dd.idx[c], dtype="<i8").tobytes())
        out.append(np.ascontiguousarray(dd.proj[c], dtype="<f8").tobytes())
        out.append(np.float64(dd.cond[c] if dd.cond else np.nan).astype("<f8").tobytes())
        if not shared:
            out.append(np.asfortranarray(X, dtype="<f8").tobytes(order="F"))
    return b"".join(out)


class _Reader:
    def __init__(self, raw, off, path):
        self.raw, self.off, self.path = raw, off, path

    def take(self, dtype, count):
        need = np.dtype(dtype).itemsize * count
        if self.off + need > len(self.raw):
            raise ValueError(f"truncated database file: {self.path}")
        a = np.frombuffer(self.raw, dtype, count, self.off).copy()
        self.off += need
        return a

    def take_bytes(self, n):
        if self.off + n > len(self.raw):
            raise ValueError(f"truncated database file: {self.path}")
        b = self.raw[self.off : self.off + n]
        self.off += n
        return b


def _read_deim(rd: _Reader, basis: BlockBasis):
    from .reduction import CONSTRAINT_TARGET

    count = int(rd.take("<i8", 1)[0])
    if count == 0:
        return None
    gamma = float(rd.take("<f8", 1)[0])
    X, idx, proj, rows, cond = [], [], [], [], []
    n = basis.n_cells
    for c, t in enumerate(CONSTRAINT_TARGET):
        q, shared = (int(v) for v in rd.take("<i8", 2))
        ix = rd.take("<i8", q)
        kt = basis.ks[t]
        P = rd.take("<f8", kt * q).reshape(kt, q)
        cond.append(float(rd.take("<f8", 1)[0]))
        if shared:
            Xc = basis.phis[t][:, :q].copy()
        else:
            Xc = rd.take("<f8", n * q).reshape((n, q), order="F")
        X.append(Xc)
        idx.append(ix)
        proj.append(P)
        rows.append([p[ix] for p in basis.phis])
    return DeimData(X, idx, proj, rows, gamma, cond)


def save_db(db: RomDatabase, path) -> None:
    """Binary database plus a JSON index next to it (``<path>.json``)."""
    path = Path(path)
    M, d, k, N = db.M, db.d, db.k, db.basis.n_cells
    meta = {
        "case": None if db.case is None else db.case.to_dict(),
        "outputs": {key: np.asarray(v).tolist() for key, v in db.outputs.items()},
        "meta": db.meta,
    }
    meta_b = json.dumps(meta).encode()
    bb = basis_bytes(db.basis)
    with open(path, "wb") as fh:
        fh.write(DB_MAGIC + f" {M} {d} {k} {N}\n".encode())
        _arr(fh, db.thetas)
        _arr(fh, db.std)
        for r in db.instances:
            _arr(fh, r.B)
            _arr(fh, r.f)
        _arr(fh, db.coords)
        fh.write(np.int64(len(bb)).astype("<i8").tobytes())
        fh.write(bb)
        fh.write(_deim_bytes(db.deim, db.basis))
        fh.write(np.int64(len(meta_b)).astype("<i8").tobytes())
        fh.write(meta_b)
    index = {
        "format": "liftrom-db v1",
        "M": M,
        "d": d,
        "k": k,
        "N": N,
        "ks": db.basis.ks,
        "deim_q": None if db.deim is None else db.deim.q,
        "thetas": db.thetas.tolist(),
        "std": db.std.tolist(),
        "provenance": [r.provenance for r in db.instances],
        **meta,
    }
    Path(str(path) + ".json").write_text(json.dumps(index, indent=1), encoding="utf-8")


def load_db(path) -> RomDatabase:
    path = Path(path)
    raw = path.read_bytes()
    nl = raw.find(b"\n")
    head = raw[:nl].split() if nl > 0 else []
    if len(head) != 6 or b" ".join(head[:2]) != DB_MAGIC:
        raise ValueError(f"not a liftrom-db v1 file (bad header): {path}")
    try:
        M, d, k, N = (int(t) for t in head[2:])
    except ValueError:
        raise ValueError(f"corrupt database header: {path}") from None
    rd = _Reader(raw, nl + 1, path)
    thetas = rd.take("<f8", M * d).reshape(M, d)
    std = rd.take("<f8", d)
    insts = []
    for _ in range(M):
        B = rd.take("<f8", k * k).reshape(k, k)
        f = rd.take("<f8", k)
        insts.append(RomInstance(B, f, None, "snapshot-built"))
    coords = rd.take("<f8", M * k).reshape(M, k)
    nb = int(rd.take("<i8", 1)[0])
    basis = load_basis_bytes(rd.take_bytes(nb), path)
    if basis.n_cells != N or basis.k != k:
        raise ValueError(f"basis in {path} disagrees with header")
    deim = _read_deim(rd, basis)
    nm = int(rd.take("<i8", 1)[0])
    meta = json.loads(rd.take_bytes(nm).decode())
    if rd.off != len(raw):
        raise ValueError(f"trailing bytes in database file: {path}")
    for th, r in zip(thetas, insts):
        r.theta = th.copy()
    case = None if meta.get("case") is None else CaseSetup.from_dict(meta["case"])
    db = RomDatabase(
        thetas, insts, basis, deim, coords, case,
        {key: np.asarray(v) for key, v in meta.get("outputs", {}).items()},
        meta.get("meta", {}),
    )
    if not np.array_equal(std, db.std):
        raise ValueError(f"stored std-devs disagree with the parameters: {path}")
    return db
