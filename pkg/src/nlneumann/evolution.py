"""Implicit Euler for the nonlocal p-heat flow with zero Neumann data.

Each step is a proximal step of ``phi/p`` in ``L2(Omega)``; exterior nodal
values are free variables of every step, which is how the zero Neumann
condition enters.  Two properties hold exactly at the discrete level: testing
the optimality condition with the constant 1 removes the nonlocal term, so
the mass ``int_Omega u`` only drifts by the inner solver tolerance, and the
energy ``[u]^p`` cannot increase because the previous state is an admissible
candidate of the step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, SolverError
from .forms import seminorm_p
from .geometry import DiscreteFunction, Mesh, interpolate
from .quadrature import QuadTable
from .solvers import DescentConfig, SolveStats, prox_solve

log = logging.getLogger(__name__)


@dataclass
class EvolutionTrace:
    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    step_stats: list = field(default_factory=list)

    def rows(self):
        return zip(self.times, self.mass, self.energy)

    def max_mass_drift(self) -> float:
        m = np.asarray(self.mass)
        return float(np.max(np.abs(m - m[0]))) if m.size else 0.0

    def max_energy_increase(self) -> float:
        """Largest step-over-step increase of the energy (<= 0 means monotone)."""
        e = np.asarray(self.energy)
        return float(np.max(np.diff(e))) if e.size > 1 else 0.0


def mass(u: DiscreteFunction) -> float:
    """``int_Omega u`` by the trapezoid rule, exact for P1 functions."""
    mesh = u.mesh
    e = mesh.interior_elements
    v = u.values
    return float(np.sum(0.5 * mesh.h[e] * (v[e] + v[e + 1])))


def energy(u: DiscreteFunction, table: QuadTable) -> float:
    return seminorm_p(table.check_mesh(u), table)


def _profiles(omega) -> dict:
    a, b = omega
    mid, L = 0.5 * (a + b), b - a
    return {
        "constant": lambda x: np.ones_like(np.asarray(x, dtype=float)),
        "hat": lambda x: np.maximum(0.0, 1.0 - np.abs(np.asarray(x) - mid) / (0.25 * L)),
        "step": lambda x: np.where(np.asarray(x) < mid, 1.0, 0.0),
        "gaussian": lambda x: np.exp(-((np.asarray(x) - mid) / (0.1 * L)) ** 2),
    }


PROFILES = ("constant", "hat", "step", "gaussian")


def profile_function(name: str, omega) -> Callable:
    """Named shape on the interval ``omega`` as a vectorised callable."""
    table = _profiles(omega)
    if name not in table:
        raise ConfigError(f"unknown profile {name!r}; expected one of {', '.join(PROFILES)}")
    return table[name]


def profile(name: str, mesh: Mesh) -> DiscreteFunction:
    """Named initial datum sampled at every node of ``mesh``."""
    return interpolate(mesh, profile_function(name, mesh.omega))


def heat_solve(u0: DiscreteFunction, tau: float, n_steps: int, table: QuadTable, params=None,
               cfg: DescentConfig | None = None,
               snapshot_times: Optional[Sequence[float]] = None) -> EvolutionTrace:
    """Run ``n_steps`` implicit Euler steps of size ``tau`` from ``u0``.

    Snapshots are kept at the first step time reaching each requested time,
    and always at the final time.  A failing step raises ``SolverError`` whose
    ``trace`` attribute holds everything computed before it.
    """
    if not tau > 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    if int(n_steps) != n_steps or n_steps < 1:
        raise ConfigError(f"n_steps must be a positive integer, got {n_steps}")
    cfg = cfg or DescentConfig()
    table.check_mesh(u0)
    pending = sorted(float(t) for t in (snapshot_times or ()))
    trace = EvolutionTrace()
    u = u0

    def record(t, u, stats):
        trace.times.append(t)
        trace.mass.append(mass(u))
        trace.energy.append(energy(u, table))
        if stats is not None:
            trace.step_stats.append(stats)
        while pending and t >= pending[0] - 1e-12 * max(1.0, abs(t)):
            pending.pop(0)
            trace.snapshots.append((t, u))

    record(0.0, u, None)
    for k in range(1, int(n_steps) + 1):
        try:
            u, stats = prox_solve(u, tau, table, cfg)
        except SolverError as err:
            err.trace = trace
            raise
        record(k * tau, u, stats)
    if not trace.snapshots or trace.snapshots[-1][0] != trace.times[-1]:
        trace.snapshots.append((trace.times[-1], u))
    return trace

