"""Eigenpairs of the fractional p-Laplacian with zero nonlocal Neumann data.

The problem is to find ``u != 0`` and ``lambda`` with

    1/2 iint J_p(u(x)-u(y)) (v(x)-v(y)) k  =  lambda int_Omega J_p(u) v

for all ``v``.  Testing with ``v = u`` gives ``lambda = phi(u) / int_Omega |u|^p``
with ``phi = [u]^p / 2``.  Constants give ``lambda = 0``.  Nontrivial pairs are
found by minimising the Rayleigh quotient over functions with
``int_Omega J_p(u) = 0`` and are then certified by the weak-form residual alone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, SolverError, UsageError
from .forms import dual_norm, form_gradient_values, j_p, mass_gradient_values, mass_p, seminorm_p
from .geometry import DiscreteFunction, Mesh, Params
from .quadrature import QuadTable
from .solvers import DescentConfig, SolveStats, descend, form_metric_diagonal, root_find_monotone

log = logging.getLogger(__name__)

CERTIFY_TOL = 1e-6
SIGN_TOL = 1e-8


@dataclass
class EigenPair:
    lam: float
    u: DiscreteFunction
    residual: float
    sign_changes: bool
    linf_interior: float
    linf_exterior: float
    certified: bool = True
    stats: Optional[SolveStats] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {"lambda": self.lam, "residual": self.residual,
               "sign_changes": self.sign_changes, "linf_interior": self.linf_interior,
               "linf_exterior": self.linf_exterior, "certified": self.certified}
        if self.stats is not None:
            out["solver"] = self.stats.to_dict()
        return out


def rayleigh(u, table: QuadTable, params: Params | None = None) -> float:
    vals = table.check_mesh(u)
    mass = mass_p(vals, table)
    if not mass > 0:
        raise DomainError("Rayleigh quotient undefined: zero p-mass on Omega")
    return 0.5 * seminorm_p(vals, table) / mass


def eigen_residual(u, lam: float, table: QuadTable, params: Params | None = None) -> float:
    """Dual norm of ``form_gradient(u) - lam * mass_gradient(u)``."""
    vals = table.check_mesh(u)
    r = form_gradient_values(vals, table) - lam * mass_gradient_values(vals, table)
    return dual_norm(r, table.mesh)


def sign_change_check(pair, tol: float = SIGN_TOL) -> bool:
    """True iff the interior nodal values take both signs beyond ``tol``."""
    u = pair.u if isinstance(pair, EigenPair) else pair
    vals = u.interior_values
    return bool(vals.min() < -tol and vals.max() > tol)


def linf_equality_check(pair, mesh: Mesh | None = None, params: Params | None = None):
    """Sup norms of the nodal values on Omega and on the collar (exact for P1)."""
    u = pair.u if isinstance(pair, EigenPair) else pair
    return float(np.max(np.abs(u.interior_values))), float(np.max(np.abs(u.exterior_values)))


def _pair(u: DiscreteFunction, lam: float, table, certified=True, stats=None) -> EigenPair:
    lin, lex = linf_equality_check(u)
    res = eigen_residual(u, lam, table)
    return EigenPair(lam, u, res, sign_change_check(u), lin, lex, certified, stats)


def first_eigenpair(mesh: Mesh, table: QuadTable, params: Params | None = None) -> EigenPair:
    """``lambda = 0`` with the constant of unit p-mass, ``|Omega|^(-1/p)``."""
    p = table.params.p
    c = mesh.length ** (-1.0 / p)
    u = DiscreteFunction(mesh, np.full(mesh.n_nodes, c))
    return _pair(u, 0.0, table)


def balance_shift(values: np.ndarray, table: QuadTable) -> float:
    """Constant ``c`` with ``int_Omega J_p(u + c) = 0`` (unique; the map is increasing in c)."""
    p = table.params.p
    um = table.mass_values(values)
    mw = table.mass_w
    lo, hi = -float(um.max()), -float(um.min())
    if hi - lo == 0:
        raise DomainError("cannot balance a function that is constant on Omega")
    scale = max(abs(lo), abs(hi))
    return root_find_monotone(lambda c: float(np.sum(mw * j_p(um + c, p))), (lo, hi),
                              tol=1e-15 * scale, ftol=0.0)


def project(values: np.ndarray, table: QuadTable) -> np.ndarray:
    """Shift to zero J_p-mean on Omega, then scale to unit p-mass."""
    w = values + balance_shift(values, table)
    return w * mass_p(w, table) ** (-1.0 / table.params.p)


def next_eigenpair(mesh: Mesh, table: QuadTable, params: Params | None, seed: DiscreteFunction,
                   cfg: DescentConfig | None = None) -> EigenPair:
    """Smallest Rayleigh quotient found from ``seed`` on the balanced unit sphere.

    The iterates stay on ``{int |u|^p = 1, int J_p(u) = 0}``; at such a point
    the constant direction carries no derivative of the quotient, so the
    projected gradient is ``p (form_gradient - lambda mass_gradient)`` and the
    convergence test is ``p`` times the eigen residual.  The constraint only
    steers the search away from constants; the result is certified by the
    residual (``<= 1e-6``) and nothing else.
    """
    cfg = cfg or DescentConfig()
    p = table.params.p
    vals = table.check_mesh(seed)
    um = table.mass_values(vals)
    if np.ptp(um) == 0:
        raise UsageError("seed must not be constant on Omega")

    def objective(v):
        return rayleigh(v, table)

    def gradient(v):
        mass = mass_p(v, table)
        lam = 0.5 * seminorm_p(v, table) / mass
        return p / mass * (form_gradient_values(v, table) - lam * mass_gradient_values(v, table))

    u0 = project(vals, table)
    precond = 1.0 / form_metric_diagonal(u0, table)
    u, stats = descend(objective, gradient, u0, cfg, weights=mesh.lumped_lengths(),
                       precond=precond, project=lambda v: project(v, table))
    u = DiscreteFunction(mesh, u)
    lam = rayleigh(u, table)
    res = eigen_residual(u, lam, table)
    certified = res <= CERTIFY_TOL
    if not stats.converged and not certified:
        raise SolverError(f"eigen descent failed ({stats.message}); residual {res:.3e}", stats)
    if not certified:
        log.warning("eigenpair NOT CERTIFIED: residual %.3e > %.1e", res, CERTIFY_TOL)
    return _pair(u, lam, table, certified, stats)


def dense_eigenvalues(table: QuadTable) -> np.ndarray:
    """Generalised eigenvalues of the p = 2 problem, exterior nodes eliminated.

    ``1/2 K u = lambda M u`` where ``[v]^2 = v K v`` and ``M`` is the Omega mass
    matrix; the exterior rows of ``K u = 0`` are solved for the exterior values
    (a Schur complement).
    """
    import scipy.linalg as sla

    if table.params.p != 2:
        raise UsageError("the dense eigenvalue problem exists only for p = 2")
    K = table.quadratic_form_matrix()
    M = table.mass_matrix()
    I = table.mesh.node_interior
    E = ~I
    S = K[np.ix_(I, I)] - K[np.ix_(I, E)] @ np.linalg.solve(K[np.ix_(E, E)], K[np.ix_(E, I)])
    return sla.eigh(0.5 * S, M[np.ix_(I, I)], eigvals_only=True)
