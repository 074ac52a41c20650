"""Parameters, the 1D mesh of the domain plus exterior collar, and P1 functions on it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, InputError, UsageError

INTERIOR = "INTERIOR"
EXTERIOR = "EXTERIOR"


@dataclass(frozen=True)
class Params:
    """Model and numerical parameters.

    The normalisation constant in front of the kernel is fixed to 1.
    ``r`` is the exponent of the superlinear source and only matters for the
    stationary problems; it defaults to ``p + 1``.
    """

    p: float
    s: float
    r: Optional[float] = None
    collar_radius: float = 1.0
    quad_order: int = 6
    tol_solver: float = 1e-8
    tol_quad: float = 1e-6

    def __post_init__(self):
        if not (math.isfinite(self.p) and self.p > 1):
            raise ConfigError(f"p must be > 1, got {self.p}")
        if not (0 < self.s < 1):
            raise ConfigError(f"s must lie in (0,1), got {self.s}")
        if self.r is None:
            object.__setattr__(self, "r", self.p + 1.0)
        if not (self.r > self.p):
            raise ConfigError(f"r must exceed p={self.p}, got {self.r}")
        if not (self.collar_radius > 0):
            raise ConfigError(f"collar_radius must be > 0, got {self.collar_radius}")
        if int(self.quad_order) != self.quad_order or self.quad_order < 1:
            raise ConfigError(f"quad_order must be a positive integer, got {self.quad_order}")
        if not (self.tol_solver > 0 and self.tol_quad > 0):
            raise ConfigError("tolerances must be positive")

    @property
    def ps(self) -> float:
        return self.p * self.s

    def replace(self, **changes) -> "Params":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if "p" in changes and "r" not in changes and data["r"] == data["p"] + 1.0:
            data["r"] = None
        data.update(changes)
        return Params(**data)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform P1 partition of ``[a-R, b+R]`` with ``a`` and ``b`` as nodes.

    Nodes are ordered left to right: the left collar, then the domain, then
    the right collar.  Element ``e`` joins nodes ``e`` and ``e+1``.
    """

    omega: tuple
    n_interior: int
    n_exterior: int
    R: float
    nodes: np.ndarray
    elements: np.ndarray
    node_interior: np.ndarray
    element_interior: np.ndarray

    @property
    def a(self) -> float:
        return self.omega[0]

    @property
    def b(self) -> float:
        return self.omega[1]

    @property
    def length(self) -> float:
        return self.omega[1] - self.omega[0]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def h_interior(self) -> float:
        return self.length / self.n_interior

    @property
    def h_exterior(self) -> float:
        return self.R / self.n_exterior

    @property
    def collar(self) -> tuple:
        return (self.omega[0] - self.R, self.omega[1] + self.R)

    def region(self, node: int) -> str:
        return INTERIOR if self.node_interior[node] else EXTERIOR

    def element_region(self, element: int) -> str:
        return INTERIOR if self.element_interior[element] else EXTERIOR

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.node_interior)

    @property
    def exterior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.node_interior)

    @property
    def interior_elements(self) -> np.ndarray:
        return np.flatnonzero(self.element_interior)

    def lumped_lengths(self) -> np.ndarray:
        """Half the total length of the elements touching each node."""
        h = self.h
        ell = np.zeros(self.n_nodes)
        ell[:-1] += 0.5 * h
        ell[1:] += 0.5 * h
        return ell

    def locate(self, x) -> tuple:
        """Element index and local coordinate in [0,1] for points inside the collar."""
        x = np.asarray(x, dtype=float)
        e = np.searchsorted(self.nodes, x, side="right") - 1
        e = np.clip(e, 0, self.n_elements - 1)
        lam = (x - self.nodes[e]) / (self.nodes[e + 1] - self.nodes[e])
        return e, lam

    def to_dict(self) -> dict:
        return {
            "omega": [float(self.omega[0]), float(self.omega[1])],
            "n_interior": int(self.n_interior),
            "n_exterior": int(self.n_exterior),
            "R": float(self.R),
            "n_nodes": int(self.n_nodes),
        }


def build_mesh(omega, n_interior: int, R: float, n_exterior: int) -> Mesh:
    a, b = float(omega[0]), float(omega[1])
    if not (math.isfinite(a) and math.isfinite(b) and b > a):
        raise ConfigError(f"degenerate interval ({a}, {b})")
    if int(n_interior) != n_interior or n_interior < 2:
        raise ConfigError(f"n_interior must be an integer >= 2, got {n_interior}")
    if int(n_exterior) != n_exterior or n_exterior < 1:
        raise ConfigError(f"n_exterior must be an integer >= 1, got {n_exterior}")
    if not (math.isfinite(R) and R > 0):
        raise ConfigError(f"collar radius R must be > 0, got {R}")
    n_interior, n_exterior = int(n_interior), int(n_exterior)

    left = a - R + R * np.arange(n_exterior) / n_exterior
    mid = a + (b - a) * np.arange(n_interior + 1) / n_interior
    right = b + R * np.arange(1, n_exterior + 1) / n_exterior
    mid[-1] = b
    nodes = np.concatenate([left, mid, right])
    n = len(nodes)
    elements = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    node_interior = np.zeros(n, dtype=bool)
    node_interior[n_exterior:n_exterior + n_interior + 1] = True
    element_interior = np.zeros(n - 1, dtype=bool)
    element_interior[n_exterior:n_exterior + n_interior] = True
    for arr in (nodes, elements, node_interior, element_interior):
        arr.setflags(write=False)
    return Mesh((a, b), n_interior, n_exterior, float(R), nodes, elements,
                node_interior, element_interior)


@dataclass(frozen=True, eq=False)
class DiscreteFunction:
    """Nodal values of a continuous piecewise-linear function on ``mesh``.

    Outside the collar the function is taken to be zero; the neglected kernel
    mass there is accounted for by :func:`nlneumann.quadrature.tail_weight`.
    ``source`` optionally keeps the smooth function the values were sampled
    from, which the pointwise identity checks use.
    """

    mesh: Mesh
    values: np.ndarray
    source: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n_nodes,):
            raise UsageError(f"expected {self.mesh.n_nodes} nodal values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InputError("nodal values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.mesh.nodes[0], self.mesh.nodes[-1]
        e, lam = self.mesh.locate(x)
        v = self.values
        out = (1.0 - lam) * v[e] + lam * v[e + 1]
        return np.where((x < lo) | (x > hi), 0.0, out)

    @property
    def interior_values(self) -> np.ndarray:
        return self.values[self.mesh.node_interior]

    @property
    def exterior_values(self) -> np.ndarray:
        return self.values[~self.mesh.node_interior]

    def with_values(self, values) -> "DiscreteFunction":
        return DiscreteFunction(self.mesh, values)

    def __neg__(self):
        return DiscreteFunction(self.mesh, -self.values)

    def __mul__(self, t):
        return DiscreteFunction(self.mesh, t * self.values)

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, DiscreteFunction):
            if other.mesh is not self.mesh:
                raise UsageError("functions live on different meshes")
            return DiscreteFunction(self.mesh, self.values + other.values)
        return DiscreteFunction(self.mesh, self.values + other)

    def __sub__(self, other):
        return self + (-other)


def interpolate(mesh: Mesh, f: Callable) -> DiscreteFunction:
    """Sample ``f`` at the nodes.  ``f`` may be vectorised or scalar."""
    with np.errstate(divide="ignore", invalid="ignore"):
        try:
            vals = np.asarray(f(mesh.nodes), dtype=float)
            if vals.shape != mesh.nodes.shape:
                vals = np.broadcast_to(vals, mesh.nodes.shape).astype(float)
        except (TypeError, ValueError, ZeroDivisionError):
            vals = np.array([_safe_call(f, x) for x in mesh.nodes], dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        where = mesh.nodes[bad][0]
        raise InputError(f"non-finite sample at x={where}")
    return DiscreteFunction(mesh, vals, source=f)


def _safe_call(f, x):
    try:
        return float(f(float(x)))
    except ZeroDivisionError:
        return math.nan
