"""POD bases, the block-diagonal trial basis, and DEIM hyper-reduction of
the closure constraints."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .euler import ObservableVector
from .lift import constraint_jacobian, constraint_values

__all__ = [
    "PodSlice",
    "BlockBasis",
    "DeimData",
    "pod",
    "energy_rank",
    "assemble_block_basis",
    "deim_select",
    "build_deim",
    "deim_constraint",
    "deim_constraint_jacobian",
    "save_basis",
    "load_basis",
    "basis_bytes",
    "load_basis_bytes",
]

log = logging.getLogger(__name__)

# target observable (0-based) whose basis projects each constraint
CONSTRAINT_TARGET = (4, 5, 6, 7)


@dataclass
class PodSlice:
    """POD of one observable: retained modes, all singular values, and the
    reduced training coordinates ``Phi^T Y`` (``k x M``)."""

    phi: np.ndarray
    sigma: np.ndarray
    energy_target: float
    coords: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.phi.shape[1]


def energy_rank(sigma, energy_target: float) -> int:
    """Smallest ``k`` whose cumulative singular-value fraction reaches the target."""
    sigma = np.asarray(sigma, dtype=float)
    frac = np.cumsum(sigma) / sigma.sum()
    k = int(np.searchsorted(frac, energy_target - 1e-13) + 1)
    return min(k, sigma.size)


def _fix_signs(V, W=None):
    for j in range(V.shape[1]):
        col = V[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if nz.size and col[nz[0]] < 0:
            V[:, j] *= -1.0
            if W is not None:
                W[j] *= -1.0
    return V, W


def pod(snapshots, energy_target: float = 0.9999) -> PodSlice:
    """Thin-SVD POD of an ``N x M`` snapshot matrix (no centring).

    Singular values below the numerical-rank threshold are dropped before
    applying the energy rule, so ``energy_target=1.0`` returns the numerical
    rank.
    """
    Y = np.asarray(snapshots, dtype=float)
    if Y.ndim != 2:
        raise ValueError("snapshot matrix must be 2-D")
    if not np.any(Y):
        raise ValueError("snapshot matrix is all zero")
    if not 0.0 < energy_target <= 1.0:
        raise ValueError("energy_target must lie in (0, 1]")
    V, s, Wt = np.linalg.svd(Y, full_matrices=False)
    tol = s[0] * max(Y.shape) * np.finfo(float).eps
    rank = int(np.sum(s > tol))
    k = energy_rank(s[:rank], energy_target)
    V, Wt = _fix_signs(V[:, :k].copy(), Wt[:k].copy())
    return PodSlice(phi=V, sigma=s, energy_target=energy_target, coords=s[:k, None] * Wt)


@dataclass
class BlockBasis:
    """Block-diagonal trial basis ``blkdiag(Phi_1..Phi_8)``, never densified.

    ``scales`` are the reference magnitudes dividing each observable before
    reduction; reduced coordinates live in that scaled space.
    """

    phis: list
    scales: np.ndarray = field(default_factory=lambda: np.ones(8))
    sigmas: list | None = None
    energy_target: float | None = None

    def __post_init__(self):
        if len(self.phis) != 8:
            raise ValueError(f"need 8 observable bases, got {len(self.phis)}")
        n = {p.shape[0] for p in self.phis}
        if len(n) != 1:
            raise ValueError("observable bases disagree on N")
        self.scales = np.asarray(self.scales, dtype=float)

    @property
    def n_cells(self) -> int:
        return self.phis[0].shape[0]

    @property
    def ks(self) -> list[int]:
        return [p.shape[1] for p in self.phis]

    @property
    def k(self) -> int:
        return sum(self.ks)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.ks)])

    def split(self, yt):
        o = self.offsets
        return [yt[o[i] : o[i + 1]] for i in range(8)]

    def reduce_scaled(self, Ys) -> np.ndarray:
        """Reduced coordinates of already-scaled observables ``(8, N)``."""
        return np.concatenate([p.T @ Ys[i] for i, p in enumerate(self.phis)])

    def reduce(self, y: ObservableVector) -> np.ndarray:
        return self.reduce_scaled(y.data / self.scales[:, None])

    def lift_scaled(self, yt) -> np.ndarray:
        return np.vstack([p @ part for p, part in zip(self.phis, self.split(yt))])

    def lift(self, yt) -> ObservableVector:
        return ObservableVector(self.lift_scaled(yt) * self.scales[:, None])

    def apply_operator(self, A) -> np.ndarray:
        """``A Phi`` for a ``rows x 8N`` sparse ``A``, block column by block column."""
        n = self.n_cells
        cols = []
        for i, p in enumerate(self.phis):
            cols.append(A[:, i * n : (i + 1) * n] @ p)
        return np.hstack(cols)

    def dense(self) -> np.ndarray:
        """Materialised ``8N x k`` basis; for tests on small problems only."""
        from scipy.linalg import block_diag

        return block_diag(*self.phis)


def assemble_block_basis(slices, scales=None, energy_target=None) -> BlockBasis:
    slices = list(slices)
    if len(slices) != 8 or any(s is None for s in slices):
        raise ValueError("a basis is required for each of the 8 observables")
    phis = [s.phi if isinstance(s, PodSlice) else np.asarray(s) for s in slices]
    sigmas = [s.sigma if isinstance(s, PodSlice) else None for s in slices]
    return BlockBasis(phis, np.ones(8) if scales is None else scales, sigmas, energy_target)


# -- DEIM -------------------------------------------------------------------------

def deim_select(X) -> np.ndarray:
    """Greedy DEIM interpolation indices for the columns of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValueError("DEIM needs a non-empty N x q basis")
    q = X.shape[1]
    idx = [int(np.argmax(np.abs(X[:, 0])))]
    for j in range(1, q):
        P = X[idx, :j]
        try:
            c = np.linalg.solve(P, X[idx, j])
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"singular DEIM system at step {j}") from exc
        r = X[:, j] - X[:, :j] @ c
        r[idx] = 0.0
        nxt = int(np.argmax(np.abs(r)))
        if np.abs(r[nxt]) <= 1e-14 * np.abs(X[:, j]).max():
            raise np.linalg.LinAlgError(f"DEIM residual vanished at step {j}: basis rank-deficient")
        idx.append(nxt)
    return np.asarray(idx, dtype=np.int64)


@dataclass
class DeimData:
    """Per-constraint DEIM payload.

    ``X[c]`` is the POD basis of the nonlinear-term snapshots (``N x q``),
    ``idx[c]`` the interpolation rows, ``proj[c] = Phi_t^T X (X[idx])^{-1}``
    and ``rows[c][i] = Phi_i[idx[c]]`` the sampled input bases.
    """

    X: list
    idx: list
    proj: list
    rows: list
    gamma: float = 1.4
    cond: list = field(default_factory=list)

    @property
    def q(self) -> list[int]:
        return [len(i) for i in self.idx]


def build_deim(basis: BlockBasis, nonlinear_bases, q=None, gamma: float = 1.4) -> DeimData:
    """Precompute DEIM data against ``basis``.

    ``nonlinear_bases[c]`` is an ``N x r`` orthonormal basis of the
    nonlinear term of constraint ``c`` (its leading ``q[c]`` columns are
    used). ``q`` defaults to the retained size of the target observable.
    """
    if q is None:
        q = [basis.ks[t] for t in CONSTRAINT_TARGET]
    Xs, idxs, projs, rows, conds = [], [], [], [], []
    for c, t in enumerate(CONSTRAINT_TARGET):
        X = np.asarray(nonlinear_bases[c], dtype=float)[:, : q[c]]
        if X.shape[1] < q[c]:
            raise ValueError(f"constraint {c + 1}: basis has only {X.shape[1]} columns, q={q[c]}")
        idx = deim_select(X)
        PX = X[idx]
        cond = float(np.linalg.cond(PX))
        log.debug("DEIM constraint %d: q=%d cond(P^T X)=%.3e", c + 1, q[c], cond)
        proj = np.linalg.solve(PX.T, (basis.phis[t].T @ X).T).T
        Xs.append(X)
        idxs.append(idx)
        projs.append(proj)
        rows.append([p[idx] for p in basis.phis])
        conds.append(cond)
    return DeimData(Xs, idxs, projs, rows, gamma, conds)


def _sampled(dd: DeimData, basis_split, c):
    return np.vstack([r @ part for r, part in zip(dd.rows[c], basis_split)])


_QUOTIENT_DEN = (0, 1, 2)
GUARD_FLOOR = 1e-8


def deim_constraint(dd: DeimData, parts, form: str = "cross") -> np.ndarray:
    """Reduced constraints ``h~`` (concatenated over the four constraints).

    ``parts`` are the reduced coordinates split per observable (scaled
    space). ``form='quotient'`` uses ``y~_t - proj g(rows)`` and falls back
    to the cross-multiplied kernel where a sampled denominator is tiny.
    """
    out = []
    for c, t in enumerate(CONSTRAINT_TARGET):
        Ys = _sampled(dd, parts, c)
        if form == "quotient" and np.all(np.abs(Ys[list(_QUOTIENT_DEN)]) > GUARD_FLOOR):
            h = constraint_values(Ys, dd.gamma, "quotient")[c]
            g = Ys[t] - h  # nonlinear term at the sampled rows
            out.append(parts[t] - dd.proj[c] @ g)
        else:
            h = constraint_values(Ys, dd.gamma, "cross")[c]
            out.append(dd.proj[c] @ h)
    return np.concatenate(out)


def deim_constraint_jacobian(dd: DeimData, parts, ks, form: str = "cross") -> np.ndarray:
    """Jacobian of :func:`deim_constraint` with respect to the stacked
    reduced coordinates."""
    offs = np.concatenate([[0], np.cumsum(ks)])
    blocks = []
    for c, t in enumerate(CONSTRAINT_TARGET):
        Ys = _sampled(dd, parts, c)
        quot = form == "quotient" and np.all(np.abs(Ys[list(_QUOTIENT_DEN)]) > GUARD_FLOOR)
        J = constraint_jacobian(Ys, dd.gamma, "quotient" if quot else "cross")[c]
        P = dd.proj[c]
        blk = np.zeros((P.shape[0], offs[-1]))
        for i in range(8):
            if not np.any(J[i]):
                continue
            blk[:, offs[i] : offs[i + 1]] = P @ (J[i][:, None] * dd.rows[c][i])
        if quot:
            # h~ = y~_t - P g, and J holds dh/dy = e_t - dg/dy at the samples
            blk[:, offs[t] : offs[t + 1]] += np.eye(ks[t]) - P @ dd.rows[c][t]
        blocks.append(blk)
    return np.vstack(blocks)


# -- persistence ---------------------------------------------------------------------

BASIS_MAGIC = b"liftrom-basis v1"


def basis_bytes(basis: BlockBasis) -> bytes:
    ks = basis.ks
    out = [BASIS_MAGIC + (f" {basis.n_cells} " + " ".join(map(str, ks)) + "\n").encode()]
    out.append(np.asarray(basis.scales, "<f8").tobytes())
    for p in basis.phis:
        out.append(np.asarray(p, dtype="<f8").tobytes(order="F"))
    for s in basis.sigmas or [None] * 8:
        s = np.empty(0) if s is None else np.asarray(s)
        out.append(np.int64(s.size).astype("<i8").tobytes())
        out.append(s.astype("<f8").tobytes())
    return b"".join(out)


def load_basis_bytes(raw: bytes, source="<bytes>") -> BlockBasis:
    nl = raw.find(b"\n")
    head = raw[:nl].split()
    if b" ".join(head[:2]) != BASIS_MAGIC or len(head) != 11:
        raise ValueError(f"not a liftrom basis file: {source}")
    n = int(head[2])
    ks = [int(t) for t in head[3:]]
    off = nl + 1

    def take(dtype, count):
        nonlocal off
        need = 8 * count
        if off + need > len(raw):
            raise ValueError(f"truncated basis data: {source}")
        a = np.frombuffer(raw, dtype, count, off).copy()
        off += need
        return a

    scales = take("<f8", 8)
    phis = [take("<f8", n * k).reshape((n, k), order="F") for k in ks]
    sigmas = []
    for _ in range(8):
        m = int(take("<i8", 1)[0])
        sigmas.append(take("<f8", m))
    if off != len(raw):
        raise ValueError(f"trailing bytes in basis data: {source}")
    return BlockBasis(phis, scales, sigmas)


def save_basis(path, basis: BlockBasis) -> None:
    with open(path, "wb") as fh:
        fh.write(basis_bytes(basis))


def load_basis(path) -> BlockBasis:
    with open(path, "rb") as fh:
        return load_basis_bytes(fh.read(), path)
