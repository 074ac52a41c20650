"""Stationary problems with zero nonlocal Neumann data.

Both problems use the full norm ``||u||^p = phi(u) + int_Omega |u|^p`` with
``phi = [u]^p / 2``.

* The coercive problem  ``(-Delta)^s_p u + J_p(u) = f`` in Omega minimises
  ``J(u) = ||u||^p / p - int_Omega f u``; the functional is strictly convex, so
  the minimiser is unique.
* The superlinear problem ``(-Delta)^s_p u + J_p(u) = f(x, u)`` has a positive
  and a negative solution, critical points of
  ``E_+(u) = ||u||^p / p - int_Omega F(x, u^+)`` and of its mirror ``E_-``.
  They are found by descent on the set of ray maxima of ``E_+`` (the Nehari
  set for homogeneous ``f``) and certified by the gradient residual alone.

The pure Neumann problem without the zero-order term is only solvable for
sources with zero mean; ``check_compatibility`` reports this.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError, SolverError, UsageError
from .forms import dual_norm, form_gradient_values, j_p, load_vector, mass_gradient_values, \
    mass_p, seminorm_p
from .geometry import DiscreteFunction, Mesh, Params
from .pointops import extend_neumann
from .quadrature import QuadTable
from .solvers import DescentConfig, SolveStats, descend, form_metric_diagonal, \
    form_noise_floor, lumped_mass, root_find_monotone

log = logging.getLogger(__name__)

CERTIFY_TOL = 1e-6
SIGN_TOL = 1e-8


class Sign(str, enum.Enum):
    PLUS = "plus"
    MINUS = "minus"


class SignClass(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    MIXED = "mixed"
    CONSTANT = "constant"


class Compatibility(str, enum.Enum):
    INCOMPATIBLE = "incompatible"
    COMPATIBLE_CONSTANTS = "compatible_constants"
    COMPATIBLE = "compatible"


@dataclass(frozen=True)
class NonlinearitySpec:
    """A source ``f(x, t)`` with primitive ``F(x, t) = int_0^t f(x, s) ds``.

    ``a_bound`` and ``beta_star`` may be constants or callables of position.
    ``model`` marks the homogeneous source ``|t|^(r-2) t``.
    """

    f: Callable
    F: Callable
    a_bound: Union[float, Callable] = 0.0
    c: float = 1.0
    r: float = 3.0
    theta: float = 1.0
    beta_star: Union[float, Callable] = 0.0
    model: bool = False

    def __post_init__(self):
        if not self.theta >= 1:
            raise ConfigError(f"theta must be >= 1, got {self.theta}")
        if not self.r > 1:
            raise ConfigError(f"r must be > 1, got {self.r}")

    @classmethod
    def power(cls, r: float) -> "NonlinearitySpec":
        """The model source ``f(x, t) = |t|^(r-2) t``, ``F = |t|^r / r``."""
        r = float(r)
        return cls(f=lambda x, t: np.abs(t) ** (r - 2.0) * t,
                   F=lambda x, t: np.abs(t) ** r / r,
                   a_bound=0.0, c=1.0, r=r, theta=1.0, beta_star=0.0, model=True)

    def eval_f(self, x, t) -> np.ndarray:
        return np.asarray(self.f(x, t), dtype=float) * np.ones_like(np.asarray(t, dtype=float))

    def eval_F(self, x, t) -> np.ndarray:
        return np.asarray(self.F(x, t), dtype=float) * np.ones_like(np.asarray(t, dtype=float))


def _at(g, x):
    return np.asarray(g(x), dtype=float) if callable(g) else np.full_like(np.asarray(x, float), g)


@dataclass
class SolveReport:
    u: DiscreteFunction
    grad_residual: float
    objective: float
    sign: SignClass
    min_interior: float
    max_interior: float
    min_exterior: float
    max_exterior: float
    negative_part: float
    positive_part: float
    certified: bool = True
    stats: Optional[SolveStats] = field(default=None, repr=False)
    extension_gap: Optional[float] = None

    def to_dict(self) -> dict:
        out = {"grad_residual": self.grad_residual, "objective": self.objective,
               "sign": self.sign.value, "min_interior": self.min_interior,
               "max_interior": self.max_interior, "min_exterior": self.min_exterior,
               "max_exterior": self.max_exterior, "negative_part": self.negative_part,
               "positive_part": self.positive_part, "certified": self.certified}
        if self.extension_gap is not None:
            out["extension_gap"] = self.extension_gap
        if self.stats is not None:
            out["solver"] = self.stats.to_dict()
        return out


def classify_sign(values: np.ndarray, tol: float = SIGN_TOL) -> SignClass:
    """Sign class of nodal values; ``CONSTANT`` is reserved for the zero function."""
    lo, hi = float(np.min(values)), float(np.max(values))
    if max(abs(lo), abs(hi)) <= tol:
        return SignClass.CONSTANT
    if lo >= -tol:
        return SignClass.POSITIVE
    if hi <= tol:
        return SignClass.NEGATIVE
    return SignClass.MIXED


def _report(u: DiscreteFunction, residual: float, objective: float, stats, certified=True,
            extension_gap=None) -> SolveReport:
    vi, ve = u.interior_values, u.exterior_values
    ve = ve if ve.size else vi
    v = u.values
    return SolveReport(u, float(residual), float(objective), classify_sign(v),
                       float(vi.min()), float(vi.max()), float(ve.min()), float(ve.max()),
                       float(max(0.0, -v.min())), float(max(0.0, v.max())), certified, stats,
                       extension_gap)


def norm_p(values: np.ndarray, table: QuadTable) -> float:
    """``||u||^p = [u]^p / 2 + int_Omega |u|^p``."""
    return 0.5 * seminorm_p(values, table) + mass_p(values, table)


def _metric(values: np.ndarray, table: QuadTable) -> np.ndarray:
    """Diagonal of the second variation of ``||u||^p / p`` (regularised)."""
    p = table.params.p
    lumped = lumped_mass(table)
    if p == 2:
        zero = lumped
    else:
        um = np.abs(table.mass_values(values))
        floor = 1e-3 * max(float(um.max()), 1e-12)
        zero = (p - 1.0) * table.mass_scatter(table.mass_w * np.maximum(um, floor) ** (p - 2.0))
    return form_metric_diagonal(values, table) + zero


def _descend(objective, gradient, u0, table, cfg, project=None, precond=None):
    weights = table.mesh.lumped_lengths()
    floor = None
    if table.params.p < 2:
        def floor(v, f):
            return form_noise_floor(v, table, f)
    if precond is None:
        if table.params.p == 2:
            precond = 1.0 / _metric(u0, table)
        else:
            def precond(v):
                return 1.0 / _metric(v, table)
    return descend(objective, gradient, u0, cfg, weights=weights, precond=precond,
                   project=project, noise_floor=floor)


def _poisson_guess(load: np.ndarray, table: QuadTable) -> np.ndarray:
    """Solve ``J_p(u) = f`` node by node with ``f`` averaged against each hat.

    The nonlocal term is dropped, so this is exact for constant sources.
    Exterior nodes take the interior mean.
    """
    p = table.params.p
    mesh = table.mesh
    lumped = lumped_mass(table)
    inner = mesh.node_interior
    guess = np.empty(mesh.n_nodes)
    guess[inner] = j_p(load[inner] / lumped[inner], p / (p - 1.0))
    guess[~inner] = guess[inner].mean()
    return guess


def solve_poisson(f, table: QuadTable, params: Params | None = None,
                  u0: DiscreteFunction | None = None,
                  cfg: DescentConfig | None = None) -> SolveReport:
    """Unique minimiser of ``||u||^p / p - int_Omega f u``; ``f`` is a callable or constant.

    Without ``u0`` the descent starts from the pointwise solution of
    ``J_p(u) = f``, which ignores the nonlocal term.
    """
    cfg = cfg or DescentConfig()
    p = table.params.p
    mesh = table.mesh
    b = load_vector(f, table)
    if not np.all(np.isfinite(b)):
        raise ConfigError("source is not finite at the quadrature points")
    start = _poisson_guess(b, table) if u0 is None else table.check_mesh(u0).copy()

    def objective(v):
        return norm_p(v, table) / p - float(b @ v)

    def gradient(v):
        return form_gradient_values(v, table) + mass_gradient_values(v, table) - b

    v, stats = _descend(objective, gradient, start, table, cfg)
    if not stats.converged:
        raise SolverError(f"Poisson solve did not converge: {stats.message}, "
                          f"residual {stats.final_grad_norm:.3e}", stats)
    u = DiscreteFunction(mesh, v)
    return _report(u, dual_norm(gradient(v), mesh), objective(v), stats)


def check_compatibility(f, g=0.0, omega: tuple = (0.0, 1.0), tol: float = 1e-10) -> Compatibility:
    """Solvability of the pure Neumann problem ``(-Delta)^s_p u = f``, ``N u = g``.

    Testing with ``v = 1`` removes the nonlocal term, so ``int_Omega f`` must
    vanish.  When ``f = 0`` every solution is constant.  Only ``g = 0`` is
    supported.  ``f`` may be a constant or a callable of position; the mean is
    computed by adaptive quadrature and compared against ``tol`` times the
    mean of ``|f|``.
    """
    if callable(g) or float(g) != 0.0:
        raise UsageError("only zero exterior data is supported")
    a, b = map(float, omega)
    if not b > a:
        raise ConfigError(f"omega must satisfy a < b, got {omega}")
    if callable(f):
        def fx(x):
            return float(np.asarray(f(np.asarray(x, dtype=float)), dtype=float))
    else:
        c = float(f)

        def fx(x):
            return c
    with np.errstate(all="ignore"):
        total = integrate.quad(fx, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        size = integrate.quad(lambda x: abs(fx(x)), a, b, epsabs=1e-14, epsrel=1e-13,
                              limit=200)[0]
    total, size = float(total), float(size)
    if size <= tol * (b - a):
        return Compatibility.COMPATIBLE_CONSTANTS
    if abs(total) > tol * size:
        return Compatibility.INCOMPATIBLE
    return Compatibility.COMPATIBLE


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    measured: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "measured": self.measured,
                "detail": self.detail}


def check_growth_hypotheses(spec: NonlinearitySpec, sample_grid, p: float,
                            threshold: float = 1.0, small: float = 1e-6) -> dict:
    """Sampled checks of the four growth hypotheses on ``(positions, values)``.

    * f1: ``|f(x,t)| <= a(x) + c |t|^(r-1)``.
    * f2: ``F(x,t)/|t|^p`` increasing in ``|t|`` beyond ``threshold`` on each
      side and at least 10 times its value at the threshold at ``|t| = T``.
    * f3: ``sigma(x,t1) <= theta sigma(x,t2) + beta*(x)`` for all sampled
      ``0 < t1 <= t2`` and ``t2 <= t1 < 0``, with ``sigma = f t - p F``.
    * f4: ``max |f(x,t)/J_p(t)|`` over ``|t| <= small`` is below 1e-3 and
      shrinks as ``|t|`` does.

    Each entry carries the worst measured margin.  Nothing is raised.
    """
    xs, ts = (np.asarray(v, dtype=float) for v in sample_grid)
    ts = np.unique(ts)
    if not np.any(ts > threshold) or not np.any(ts < -threshold):
        raise ConfigError("sample values must reach beyond +-threshold")
    X, T = np.meshgrid(xs, ts, indexing="ij")
    fv = spec.eval_f(X, T)
    Fv = spec.eval_F(X, T)
    out = {}

    bound = _at(spec.a_bound, X) + spec.c * np.abs(T) ** (spec.r - 1.0)
    excess = float(np.max(np.abs(fv) - bound))
    out["f1"] = HypothesisCheck("f1", excess <= 1e-12 * max(1.0, float(np.max(bound))), excess,
                                "max(|f| - a - c|t|^(r-1))")

    ok, worst = True, math.inf
    for side in (ts > threshold, ts < -threshold):
        idx = np.flatnonzero(side)
        if ts[idx[0]] < 0:
            idx = idx[::-1]
        ratio = Fv[:, idx] / np.abs(T[:, idx]) ** p
        inc = np.diff(ratio, axis=1)
        ok &= bool(np.all(inc >= -1e-12 * np.abs(ratio[:, 1:])))
        growth = ratio[:, -1] / np.maximum(np.abs(ratio[:, 0]), np.finfo(float).tiny)
        worst = min(worst, float(np.min(growth)))
    out["f2"] = HypothesisCheck("f2", ok and worst >= 10.0, worst,
                                "min ratio F/|t|^p at T over value at threshold")

    sigma = fv * T - p * Fv
    beta = _at(spec.beta_star, xs)
    viol = -math.inf
    for side in (ts > 0, ts < 0):
        idx = np.flatnonzero(side)
        if ts[idx[0]] < 0:
            idx = idx[::-1]
        s = sigma[:, idx]
        # sigma(t1) - theta sigma(t2) - beta over pairs |t1| <= |t2|
        run_min = np.minimum.accumulate(s[:, ::-1], axis=1)[:, ::-1]
        viol = max(viol, float(np.max(s - spec.theta * run_min - beta[:, None])))
    out["f3"] = HypothesisCheck("f3", viol <= 1e-12 * max(1.0, float(np.max(np.abs(sigma)))),
                                viol, "max sigma(t1) - theta sigma(t2) - beta*")

    near = (np.abs(ts) <= small) & (ts != 0)
    if not np.any(near):
        out["f4"] = HypothesisCheck("f4", False, math.nan, "no samples with 0 < |t| <= small")
    else:
        tn = ts[near]
        q = np.abs(fv[:, near] / j_p(T[:, near], p))
        order = np.argsort(np.abs(tn))
        env = np.max(q[:, order], axis=0)
        shrinking = env[0] <= env[-1] + 1e-15
        out["f4"] = HypothesisCheck("f4", bool(env.max() <= 1e-3 and shrinking),
                                    float(env.max()), "max |f/J_p(t)| for |t| <= small")
    return out


def _part(values: np.ndarray, sign: Sign) -> np.ndarray:
    return np.maximum(values, 0.0) if sign is Sign.PLUS else np.minimum(values, 0.0)


def _energy(spec: NonlinearitySpec, table: QuadTable, sign: Sign):
    """``E_sign`` and its nodal gradient."""
    p = table.params.p
    xm, mw = table.mass_x, table.mass_w

    def objective(v):
        um = _part(table.mass_values(v), sign)
        return norm_p(v, table) / p - float(np.sum(mw * spec.eval_F(xm, um)))

    def gradient(v):
        um = _part(table.mass_values(v), sign)
        src = table.mass_scatter(mw * spec.eval_f(xm, um))
        return form_gradient_values(v, table) + mass_gradient_values(v, table) - src

    return objective, gradient


def nehari_project(u, spec: NonlinearitySpec, table: QuadTable, params: Params | None = None,
                   sign: Sign = Sign.PLUS) -> DiscreteFunction:
    """Scale ``u`` onto the Nehari set of the homogeneous model source.

    ``t* = (||u||^p / int_Omega |u^+|^r)^(1/(r-p))`` (``u^-`` for ``MINUS``).
    """
    if not spec.model:
        raise UsageError("exact Nehari scaling needs the homogeneous model source")
    vals = table.check_mesh(u)
    return DiscreteFunction(table.mesh, _nehari_values(vals, spec, table, Sign(sign)))


def _nehari_values(vals, spec, table, sign):
    p, r = table.params.p, spec.r
    um = np.abs(_part(table.mass_values(vals), sign))
    denom = float(np.sum(table.mass_w * um ** r))
    if not denom > 0:
        part = "positive" if sign is Sign.PLUS else "negative"
        raise DomainError(f"the {part} part of u vanishes on Omega")
    return vals * (norm_p(vals, table) / denom) ** (1.0 / (r - p))


def ray_project(u, spec: NonlinearitySpec, table: QuadTable, sign: Sign = Sign.PLUS,
                t_max: float = 1e8) -> DiscreteFunction:
    """Move ``u`` to the maximiser of ``t -> E_sign(t u)`` over ``t > 0``."""
    vals = table.check_mesh(u)
    return DiscreteFunction(table.mesh, _ray_values(vals, spec, table, Sign(sign), t_max))


def _ray_values(vals, spec, table, sign, t_max=1e8):
    if not np.any(_part(table.mass_values(vals), sign)):
        part = "positive" if sign is Sign.PLUS else "negative"
        raise DomainError(f"the {part} part of u vanishes on Omega")
    objective, gradient = _energy(spec, table, sign)
    ts = np.geomspace(1e-8, t_max, 161)
    with np.errstate(all="ignore"):
        e = np.array([objective(t * vals) for t in ts])
    e = np.where(np.isfinite(e), e, -np.inf)
    k = int(np.argmax(e))
    if k == len(ts) - 1:
        raise DomainError("energy along the ray does not come back down; check (f2)")
    lo, hi = ts[max(k - 1, 0)], ts[k + 1]
    # the ray derivative <E'(t u), u> changes sign from + to - at the maximiser
    t = root_find_monotone(lambda t: -float(gradient(t * vals) @ vals), (lo, hi),
                           tol=1e-15 * hi, ftol=0.0)
    return t * vals


def _extension_gap(u: DiscreteFunction, table: QuadTable) -> float:
    """Largest gap between the exterior values and the pointwise Neumann extension."""
    if u.exterior_values.size == 0:
        return 0.0
    ext = extend_neumann(u, table.mesh, table.params)
    return float(np.max(np.abs(ext.exterior_values - u.exterior_values)))


def mountain_pass_solve(sign: Sign, spec: NonlinearitySpec, table: QuadTable,
                        params: Params | None = None, seeds: Iterable = (),
                        cfg: DescentConfig | None = None) -> SolveReport:
    """Constant-sign critical point of ``E_sign`` from the best of ``seeds``.

    Each seed is moved onto the ray maximisers of ``E_sign`` (exact Nehari
    scaling for the model source) and descended there; the constraint is
    natural, so a stationary point of the restricted problem is a critical
    point of ``E_sign``.  The report with the lowest energy among certified
    runs is returned.  When no run reaches ``grad_residual <= 1e-6`` the best
    run comes back with ``certified = False``.
    """
    sign = Sign(sign)
    cfg = cfg or DescentConfig()
    mesh = table.mesh
    seeds = list(seeds)
    if not seeds:
        default = 1.0 if sign is Sign.PLUS else -1.0
        seeds = [DiscreteFunction(mesh, np.full(mesh.n_nodes, default))]
    objective, gradient = _energy(spec, table, sign)
    if spec.model:
        def proj(v):
            return _nehari_values(v, spec, table, sign)
    else:
        def proj(v):
            return _ray_values(v, spec, table, sign)

    best = None
    for seed in seeds:
        vals = table.check_mesh(seed).astype(float)
        try:
            start = proj(vals)
            v, stats = _descend(objective, gradient, start, table, cfg, project=proj)
        except (SolverError, DomainError) as err:
            log.warning("mountain-pass seed failed: %s", err)
            continue
        res = dual_norm(gradient(v), mesh)
        rep = _report(DiscreteFunction(mesh, v), res, objective(v), stats, res <= CERTIFY_TOL)
        key = (not rep.certified, rep.objective)
        if best is None or key < (not best.certified, best.objective):
            best = rep
    if best is None:
        raise SolverError("every mountain-pass seed failed")
    best.extension_gap = _extension_gap(best.u, table)
    if not best.certified:
        log.warning("mountain-pass solution NOT CERTIFIED: residual %.3e", best.grad_residual)
    return best
