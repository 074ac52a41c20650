"""Discrete energies and their first variations.

``form_gradient`` returns the weak-form pairing
``1/2 iint J_p(u(x)-u(y)) (v_i(x)-v_i(y)) k``, and ``mass_gradient`` returns
``int_Omega J_p(u) v_i``.  The Frechet derivatives of ``phi = [u]^p/2`` and of
``int_Omega |u|^p`` are ``p`` times these.  Both are assembled from the same
points as the energies, so each is the exact derivative of its discrete
energy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .geometry import DiscreteFunction, Mesh, Params
from .quadrature import QuadTable


@dataclass(frozen=True)
class FormValue:
    seminorm_p: float
    phi: float
    mass_p: float
    full_norm_p: float

    def to_dict(self) -> dict:
        return dict(seminorm_p=self.seminorm_p, phi=self.phi, mass_p=self.mass_p,
                    full_norm_p=self.full_norm_p)


@dataclass(frozen=True, eq=False)
class DualVector:
    """A linear functional given by its action on the nodal hat functions."""

    mesh: Mesh
    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=float)
        if c.shape != (self.mesh.n_nodes,):
            raise UsageError("one component per node expected")
        object.__setattr__(self, "components", c)

    def pair(self, v) -> float:
        """Action on a function given as DiscreteFunction or nodal array."""
        vals = getattr(v, "values", v)
        return float(np.dot(self.components, vals))

    def dual_norm(self) -> float:
        return dual_norm(self.components, self.mesh)

    def __sub__(self, other):
        return DualVector(self.mesh, self.components - other.components)

    def __add__(self, other):
        return DualVector(self.mesh, self.components + other.components)

    def __mul__(self, t):
        return DualVector(self.mesh, t * self.components)

    __rmul__ = __mul__


def dual_norm(components: np.ndarray, mesh: Mesh) -> float:
    """Euclidean norm of nodal components scaled by the lumped mesh width."""
    return float(np.sqrt(np.sum(components ** 2 / mesh.lumped_lengths())))


def j_p(t, p: float):
    """``|t|^{p-2} t`` with the continuous value 0 at t = 0."""
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(a > 0, np.sign(t) * a ** (p - 1.0), 0.0)
    return float(out) if out.ndim == 0 else out


def seminorm_p(values: np.ndarray, table: QuadTable) -> float:
    du = table.differences(values)
    return float(np.sum(table.w * np.abs(du) ** table.params.p))


def mass_p(values: np.ndarray, table: QuadTable) -> float:
    um = table.mass_values(values)
    return float(np.sum(table.mass_w * np.abs(um) ** table.params.p))


def gagliardo(u, table: QuadTable, params: Params | None = None) -> FormValue:
    vals = table.check_mesh(u)
    sn = seminorm_p(vals, table)
    m = mass_p(vals, table)
    phi = sn / 2.0
    return FormValue(sn, phi, m, phi + m)


def form_gradient_values(values: np.ndarray, table: QuadTable) -> np.ndarray:
    du = table.differences(values)
    return table.scatter(0.5 * table.w * j_p(du, table.params.p))


def mass_gradient_values(values: np.ndarray, table: QuadTable) -> np.ndarray:
    um = table.mass_values(values)
    return table.mass_scatter(table.mass_w * j_p(um, table.params.p))


def form_gradient(u, table: QuadTable, params: Params | None = None) -> DualVector:
    vals = table.check_mesh(u)
    return DualVector(table.mesh, form_gradient_values(vals, table))


def mass_gradient(u, table: QuadTable, params: Params | None = None) -> DualVector:
    vals = table.check_mesh(u)
    return DualVector(table.mesh, mass_gradient_values(vals, table))


def load_vector(f, table: QuadTable) -> np.ndarray:
    """``int_Omega f v_i`` with the mass rule; ``f`` is a callable or a constant."""
    fx = f(table.mass_x) if callable(f) else np.full_like(table.mass_x, float(f))
    fx = np.broadcast_to(np.asarray(fx, dtype=float), table.mass_x.shape)
    return table.mass_scatter(table.mass_w * fx)


def integrate_omega(g, table: QuadTable) -> float:
    """``int_Omega g`` for ``g`` sampled at the mass points (array) or callable."""
    gx = g(table.mass_x) if callable(g) else g
    return float(np.sum(table.mass_w * np.asarray(gx, dtype=float)))
