"""Geometry/flow setup shared by the offline build and online queries."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cst import NACA0012, RAE2822, CstAirfoil, evaluate_airfoil, family_bounds
from .euler import Freestream, NACA_FREESTREAM, RAE_FREESTREAM
from .mesh import Mesh, generate_omesh

__all__ = ["CaseSetup", "BASE_AIRFOILS", "PRESET_FREESTREAM", "DEFAULT_MESH", "naca_case"]

BASE_AIRFOILS = {"naca0012": NACA0012, "rae2822": RAE2822}
PRESET_FREESTREAM = {"naca0012": NACA_FREESTREAM, "rae2822": RAE_FREESTREAM}
DEFAULT_MESH = {"n_wrap": 64, "n_radial": 32, "far_radius": 15.0, "stretch": 1.15}


@dataclass
class CaseSetup:
    """Base airfoil, active CST coefficients, perturbation box, mesh and
    freestream: everything needed to turn ``theta`` into a mesh."""

    base: CstAirfoil
    active: list
    fraction: float
    freestream: Freestream
    mesh: dict = field(default_factory=lambda: dict(DEFAULT_MESH))
    surface_points: int = 201

    def __post_init__(self):
        self.active = [int(a) for a in self.active]
        n = self.base.theta.size
        if not self.active or min(self.active) < 0 or max(self.active) >= n:
            raise ValueError(f"active indices must lie in [0, {n})")
        if len(set(self.active)) != len(self.active):
            raise ValueError("active indices repeat")

    @property
    def d(self) -> int:
        return len(self.active)

    def bounds(self):
        return family_bounds(self.base, self.fraction, self.active)

    def airfoil(self, theta) -> CstAirfoil:
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != self.d:
            raise ValueError(f"theta has {theta.size} entries, expected {self.d}")
        return self.base.with_theta(theta, self.active)

    def mesh_at(self, theta) -> Mesh:
        shape = evaluate_airfoil(self.airfoil(theta), self.surface_points)
        return generate_omesh(shape, **self.mesh)

    def to_dict(self) -> dict:
        return {
            "base": {
                "upper": self.base.coeffs_upper.tolist(),
                "lower": self.base.coeffs_lower.tolist(),
                "n1": self.base.n1,
                "n2": self.base.n2,
            },
            "active": self.active,
            "fraction": self.fraction,
            "freestream": self.freestream.to_dict(),
            "mesh": dict(self.mesh),
            "surface_points": self.surface_points,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CaseSetup":
        b = d["base"]
        return cls(
            base=CstAirfoil(np.asarray(b["upper"]), np.asarray(b["lower"]), b.get("n1", 0.5), b.get("n2", 1.0)),
            active=d["active"],
            fraction=d["fraction"],
            freestream=Freestream(**d["freestream"]),
            mesh=dict(d["mesh"]),
            surface_points=d.get("surface_points", 201),
        )


def naca_case(active=(1, 4), fraction=0.3, **mesh) -> CaseSetup:
    """NACA0012 at M=0.6, alpha=2 deg with the default O-mesh."""
    case = CaseSetup(NACA0012, list(active), fraction, NACA_FREESTREAM)
    case.mesh.update(mesh)
    return case
