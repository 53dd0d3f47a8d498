"""Class-shape transformation (CST) airfoil parameterization.

The airfoil ordinate is ``y(psi) = C(psi) * S(psi)`` where ``C`` is the class
function ``psi**n1 * (1 - psi)**n2`` and ``S`` is a Bernstein-weighted shape
function whose coefficients are the design parameters.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import qmc

__all__ = [
    "CstAirfoil",
    "AirfoilShape",
    "NACA0012",
    "RAE2822",
    "class_fn",
    "shape_fn",
    "bernstein_basis",
    "evaluate_airfoil",
    "fit_cst",
    "perturb_family",
    "read_surface_points",
    "write_surface_points",
    "write_family_csv",
    "read_family_csv",
]


@dataclass(frozen=True)
class CstAirfoil:
    """CST coefficients for the upper and lower surface of one airfoil."""

    coeffs_upper: np.ndarray
    coeffs_lower: np.ndarray
    n1: float = 0.5
    n2: float = 1.0

    def __post_init__(self):
        up = np.asarray(self.coeffs_upper, dtype=float).copy()
        lo = np.asarray(self.coeffs_lower, dtype=float).copy()
        if up.ndim != 1 or lo.ndim != 1 or up.size == 0:
            raise ValueError("coefficient rows must be non-empty vectors")
        if up.size != lo.size:
            raise ValueError(
                f"upper/lower rows differ in length ({up.size} vs {lo.size})"
            )
        if not (self.n1 > 0 and self.n2 > 0):
            raise ValueError("class exponents n1, n2 must be positive")
        up.flags.writeable = False
        lo.flags.writeable = False
        object.__setattr__(self, "coeffs_upper", up)
        object.__setattr__(self, "coeffs_lower", lo)

    @property
    def order(self) -> int:
        return self.coeffs_upper.size - 1

    @property
    def theta(self) -> np.ndarray:
        """All coefficients flattened as ``[upper..., lower...]``."""
        return np.concatenate([self.coeffs_upper, self.coeffs_lower])

    def with_theta(self, values: Sequence[float], active: Sequence[int]) -> "CstAirfoil":
        """Copy with the coefficients at flat indices ``active`` replaced."""
        flat = self.theta
        flat[np.asarray(active, dtype=int)] = np.asarray(values, dtype=float)
        m = self.order + 1
        return CstAirfoil(flat[:m], flat[m:], self.n1, self.n2)


@dataclass
class AirfoilShape:
    psi: np.ndarray
    y_upper: np.ndarray
    y_lower: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float)
        self.y_upper = np.asarray(self.y_upper, dtype=float)
        self.y_lower = np.asarray(self.y_lower, dtype=float)
        if not (self.psi.shape == self.y_upper.shape == self.y_lower.shape):
            raise ValueError("psi, y_upper and y_lower must have equal shape")


NACA0012 = CstAirfoil([0.1689, 0.2699, 0.1387], [-0.1689, -0.2699, -0.1387])
RAE2822 = CstAirfoil(
    [0.1268, 0.4670, 0.5834, 0.2103], [-0.1268, -0.5425, -0.5096, 0.0581]
)


def class_fn(psi, n1: float = 0.5, n2: float = 1.0):
    """Class function ``psi**n1 * (1 - psi)**n2``; vanishes at both ends."""
    psi_arr = np.asarray(psi, dtype=float)
    if np.any(psi_arr < 0.0) or np.any(psi_arr > 1.0) or np.any(np.isnan(psi_arr)):
        raise ValueError("psi must lie in [0, 1]")
    out = psi_arr**n1 * (1.0 - psi_arr) ** n2
    return float(out) if out.ndim == 0 else out


def bernstein_basis(psi, order: int) -> np.ndarray:
    """Binomially weighted Bernstein basis, shape ``(len(psi), order + 1)``.

    Rows sum to one (partition of unity).
    """
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    i = np.arange(order + 1)
    k = np.array([comb(order, j) for j in i], dtype=float)
    return k * psi[:, None] ** i * (1.0 - psi[:, None]) ** (order - i)


def shape_fn(psi, coeffs):
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size == 0:
        raise ValueError("shape function needs at least one coefficient")
    out = bernstein_basis(psi, coeffs.size - 1) @ coeffs
    return float(out[0]) if np.ndim(psi) == 0 else out


def cosine_spacing(m: int) -> np.ndarray:
    """``m`` points on [0, 1], clustered towards both ends."""
    t = np.linspace(0.0, 1.0, m)
    psi = 0.5 * (1.0 - np.cos(np.pi * t))
    psi[0], psi[-1] = 0.0, 1.0
    return psi


def evaluate_airfoil(cst: CstAirfoil, m: int = 101, psi=None) -> AirfoilShape:
    """Sample ``cst`` at ``m`` cosine-clustered chord stations (or at ``psi``)."""
    if psi is None:
        if m < 2:
            raise ValueError("need at least two sample points")
        psi = cosine_spacing(m)
    psi = np.asarray(psi, dtype=float)
    c = class_fn(psi, cst.n1, cst.n2)
    y_up = c * shape_fn(psi, cst.coeffs_upper)
    y_lo = c * shape_fn(psi, cst.coeffs_lower)
    return AirfoilShape(psi, y_up, y_lo)


def _fit_surface(psi, y, order, n1, n2, name):
    design = class_fn(psi, n1, n2)[:, None] * bernstein_basis(psi, order)
    interior = (psi > 0.0) & (psi < 1.0)
    if np.unique(psi[interior]).size < order + 1:
        raise ValueError(
            f"{name} surface: need at least {order + 1} distinct interior samples"
        )
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < order + 1:
        raise ValueError(f"{name} surface: rank-deficient CST design matrix")
    return coef


def fit_cst(points: AirfoilShape, order: int, n1: float = 0.5, n2: float = 1.0) -> CstAirfoil:
    """Least-squares CST fit over all supplied points, per surface."""
    if order < 1:
        raise ValueError("order must be >= 1")
    up = _fit_surface(points.psi, points.y_upper, order, n1, n2, "upper")
    lo = _fit_surface(points.psi, points.y_lower, order, n1, n2, "lower")
    return CstAirfoil(up, lo, n1, n2)


def perturb_family(
    base: CstAirfoil,
    fraction: float,
    count: int,
    active: Sequence[int],
    seed: int,
) -> np.ndarray:
    """Latin-hypercube sample of the +/- ``fraction`` box around ``base``.

    Returns an array of shape ``(count, len(active))`` holding the active
    coefficient values, one row per family member.
    """
    active = list(active)
    if not active:
        raise ValueError("active coefficient set is empty")
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must lie in [0, 1)")
    if count < 1:
        raise ValueError("count must be >= 1")
    lo, hi = family_bounds(base, fraction, active)
    unit = qmc.LatinHypercube(d=len(active), seed=seed).random(count)
    return lo + unit * (hi - lo)


def family_bounds(base: CstAirfoil, fraction: float, active: Sequence[int]):
    """Well-ordered box bounds for the active coefficients."""
    a = base.theta[np.asarray(active, dtype=int)]
    b1, b2 = a * (1.0 - fraction), a * (1.0 + fraction)
    return np.minimum(b1, b2), np.maximum(b1, b2)


def write_surface_points(path, shape: AirfoilShape) -> None:
    """Write ``<path>.upper.dat`` / ``<path>.lower.dat`` two-column files."""
    path = Path(path)
    np.savetxt(path.with_suffix(".upper.dat"), np.column_stack([shape.psi, shape.y_upper]), fmt="%.17g")
    np.savetxt(path.with_suffix(".lower.dat"), np.column_stack([shape.psi, shape.y_lower]), fmt="%.17g")


def read_surface_points(path) -> AirfoilShape:
    path = Path(path)
    up = np.loadtxt(path.with_suffix(".upper.dat"), ndmin=2)
    lo = np.loadtxt(path.with_suffix(".lower.dat"), ndmin=2)
    if not np.array_equal(up[:, 0], lo[:, 0]):
        # resample lower onto upper stations so both share psi
        lo = np.column_stack([up[:, 0], np.interp(up[:, 0], lo[:, 0], lo[:, 1])])
    return AirfoilShape(up[:, 0], up[:, 1], lo[:, 1])


def write_family_csv(path, thetas: np.ndarray, active: Sequence[int]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"A{int(i)}" for i in active])
        for row in np.atleast_2d(thetas):
            w.writerow([repr(float(v)) for v in row])


def read_family_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    active = [int(h[1:]) for h in rows[0]]
    return np.array([[float(v) for v in r] for r in rows[1:]]), active
