"""First-order optimisation engines and a safeguarded monotone root finder."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, SolverError, UsageError
from .geometry import DiscreteFunction, Params

log = logging.getLogger(__name__)

# relative size below which objective differences are treated as roundoff
ROUNDOFF = 1e-14
FLOOR_CHECK_EVERY = 500


@dataclass(frozen=True)
class DescentConfig:
    max_iter: int = 50_000
    grad_tol: float = 1e-8
    armijo_c: float = 1e-4
    backtrack_ratio: float = 0.5
    initial_step: float = 1.0
    nonlinear_cg: bool = True

    def __post_init__(self):
        if self.max_iter < 1 or self.grad_tol <= 0 or self.initial_step <= 0:
            raise ConfigError("max_iter, grad_tol and initial_step must be positive")
        if not (0 < self.armijo_c < 1 and 0 < self.backtrack_ratio < 1):
            raise ConfigError("armijo_c and backtrack_ratio must lie in (0,1)")

    def replace(self, **changes) -> "DescentConfig":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return DescentConfig(**data)


@dataclass
class SolveStats:
    iterations: int = 0
    final_grad_norm: float = math.inf
    objective_trace: list = field(default_factory=list)
    converged: bool = False
    evaluations: int = 0
    message: str = ""
    noise_floor: float = 0.0

    def to_dict(self, trace: bool = False) -> dict:
        out = {"iterations": self.iterations, "final_grad_norm": self.final_grad_norm,
               "converged": self.converged, "evaluations": self.evaluations,
               "message": self.message}
        if self.noise_floor:
            out["noise_floor"] = self.noise_floor
        if self.objective_trace:
            out["objective_initial"] = self.objective_trace[0]
            out["objective_final"] = self.objective_trace[-1]
        if trace:
            out["objective_trace"] = list(self.objective_trace)
        return out

    def is_monotone(self, rel_slack: float = 1e-13) -> bool:
        t = np.asarray(self.objective_trace)
        if t.size < 2:
            return True
        scale = max(1.0, float(np.max(np.abs(t))))
        return bool(np.all(np.diff(t) <= rel_slack * scale))


def descend(objective: Callable, gradient: Callable, u0, cfg: DescentConfig = DescentConfig(),
            *, weights: Optional[np.ndarray] = None, precond: Optional[np.ndarray] = None,
            project: Optional[Callable] = None, norm: Optional[Callable] = None,
            noise_floor: Optional[Callable] = None):
    """Minimise ``objective`` from ``u0`` by preconditioned nonlinear CG with Armijo steps.

    ``gradient`` returns the nodal derivative of ``objective``.  Convergence
    is declared when the mesh-scaled dual norm ``sqrt(sum g^2 / weights)``
    (or ``norm(g)`` when given) drops below ``cfg.grad_tol``.  ``precond`` is a
    diagonal applied to the gradient to form search directions.  ``project``
    maps trial points back onto a constraint set; it must leave the objective
    unchanged up to roundoff along the projected curve.

    ``noise_floor(u, f)``, when given, estimates the gradient norm that
    rounding alone leaves at ``u`` where the objective value is ``f``.  It is consulted
    when the line search stalls, at ``max_iter``, and every
    ``FLOOR_CHECK_EVERY`` iterations if the best gradient norm has not halved
    over that window; a gradient below that floor then counts as converged, with
    ``stats.noise_floor`` recording the value used.

    Returns ``(u, stats)`` with ``u`` of the same kind as ``u0`` (array or
    DiscreteFunction).
    """
    as_function = isinstance(u0, DiscreteFunction)
    mesh = u0.mesh if as_function else None
    u = np.array(u0.values if as_function else u0, dtype=float)
    if weights is None:
        weights = mesh.lumped_lengths() if mesh is not None else np.ones_like(u)
    if norm is None:
        def norm(g):
            return float(np.sqrt(np.sum(g * g / weights)))
    if callable(precond):
        precond_at = precond
    else:
        fixed = np.ones_like(u) if precond is None else np.asarray(precond, dtype=float)

        def precond_at(_):
            return fixed

    if project is not None:
        u = project(u)
    f = objective(u)
    stats = SolveStats()
    stats.evaluations = 1
    if not math.isfinite(f):
        raise SolverError("objective is not finite at the initial point", stats)
    g = gradient(u)
    stats.objective_trace.append(float(f))

    z = precond_at(u) * g
    d = -z
    alpha_guess = cfg.initial_step
    steepest = True
    best = []
    for it in range(cfg.max_iter):
        res = norm(g)
        stats.final_grad_norm = res
        if res <= cfg.grad_tol:
            stats.converged = True
            stats.message = "gradient tolerance reached"
            break
        best.append(min(res, best[-1]) if best else res)
        if noise_floor is not None and it >= FLOOR_CHECK_EVERY and it % FLOOR_CHECK_EVERY == 0:
            stagnant = best[-1] > 0.5 * best[-1 - FLOOR_CHECK_EVERY]
            if stagnant and _at_floor(noise_floor, u, f, res, stats):
                break
        dphi0 = float(g @ d)
        if not dphi0 < 0:
            d, steepest = -z, True
            dphi0 = float(g @ d)
            if not dphi0 < 0:
                stats.message = "no descent direction"
                break
        step = _line_search(objective, gradient, u, f, g, d, dphi0, alpha_guess, cfg,
                            project, stats)
        if step is None:
            if not steepest:
                d, steepest = -z, True
                alpha_guess = cfg.initial_step
                continue
            if noise_floor is not None and _at_floor(noise_floor, u, f, res, stats):
                break
            stats.message = "line search stalled"
            break
        alpha, u_new, f_new, g_new = step
        z_new = precond_at(u_new) * g_new
        if cfg.nonlinear_cg:
            denom = float(g @ z)
            beta = max(0.0, float(g_new @ (z_new - z)) / denom) if denom > 0 else 0.0
            if abs(float(g_new @ z)) >= 0.2 * float(g_new @ z_new):
                beta = 0.0
        else:
            beta = 0.0
        d_new = -z_new + beta * d
        steepest = beta == 0.0
        dphi_new = float(g_new @ d_new)
        alpha_guess = alpha * dphi0 / dphi_new if dphi_new < 0 else alpha
        alpha_guess = float(np.clip(alpha_guess, 1e-3 * alpha, 1e3 * alpha))
        u, f, g, z, d = u_new, f_new, g_new, z_new, d_new
        stats.objective_trace.append(float(f))
        stats.iterations = it + 1
    else:
        stats.final_grad_norm = norm(g)
        stats.converged = stats.final_grad_norm <= cfg.grad_tol
        stats.message = "max_iter reached"
        if not stats.converged and noise_floor is not None:
            _at_floor(noise_floor, u, f, stats.final_grad_norm, stats)
    if stats.converged and not stats.message:
        stats.message = "gradient tolerance reached"
    result = DiscreteFunction(mesh, u) if as_function else u
    return result, stats


def _at_floor(noise_floor, u, f, res, stats) -> bool:
    fl = float(noise_floor(u, f))
    stats.noise_floor = fl
    if res <= fl:
        stats.converged = True
        stats.message = "gradient at floating-point floor"
        return True
    return False


def form_noise_floor(values: np.ndarray, table, objective_scale: float = 0.0,
                     ulps: float = 64.0, safety: float = 2.0) -> float:
    """Dual norm of the form gradient carried by pairs the objective cannot resolve.

    For ``p < 2`` the map ``t -> J_p(t)`` has unbounded slope at 0.  A pair
    whose energy ``w |du|^p`` is below the rounding level ``ulps * eps *
    objective_scale`` of the objective (or whose difference is within ``ulps``
    spacings of the values) is invisible to any line search, yet contributes
    ``J_p(du)`` to the gradient; at ``p = 1.5`` and ``|du| = 1e-12`` that is
    already 1e-6 per unit weight.  Such pairs arise wherever the exact
    minimiser has equal values, e.g. at mirror points of symmetric data.  The
    gradient norm they carry is the floor below which convergence cannot be
    certified in double precision.  Returns 0 for ``p >= 2``.
    """
    from .forms import dual_norm, j_p

    p = table.params.p
    if p >= 2:
        return 0.0
    values = np.asarray(values, dtype=float)
    delta = float(np.spacing(max(float(np.max(np.abs(values))), np.finfo(float).tiny)))
    du = np.abs(table.differences(values))
    eps = np.finfo(float).eps
    near = (du <= ulps * delta) | (table.w * du ** p <= ulps * eps * abs(objective_scale))
    if not np.any(near):
        return 0.0
    coef = np.where(near, 0.5 * table.w * j_p(np.maximum(du, delta), p), 0.0)
    return safety * dual_norm(table.scatter(coef), table.mesh)


def _line_search(objective, gradient, u, f0, g0, d, dphi0, alpha0, cfg, project, stats):
    """Armijo search along ``d`` seeded by a secant estimate of the 1D minimiser.

    When the objective change is at roundoff level the sufficient-decrease
    test is applied to the trapezoid estimate ``alpha (dphi(0)+dphi(alpha))/2``
    instead, which is not swamped by cancellation.
    """
    c = cfg.armijo_c

    def trial(alpha):
        v = u + alpha * d
        if project is not None:
            v = project(v)
        stats.evaluations += 1
        fv = objective(v)
        if not math.isfinite(fv):
            return None
        gv = gradient(v)
        return v, fv, gv, float(gv @ d)

    def acceptable(alpha, fv, dphi):
        if fv <= f0 + c * alpha * dphi0:
            return True
        if abs(fv - f0) <= ROUNDOFF * max(abs(f0), abs(fv), 1e-300):
            return 0.5 * alpha * (dphi0 + dphi) <= c * alpha * dphi0
        return False

    candidates = []
    alpha = alpha0
    first = None
    for _ in range(60):
        first = trial(alpha)
        if first is not None:
            break
        alpha *= cfg.backtrack_ratio
    if first is None:
        raise SolverError("objective became non-finite along the search direction", stats)
    v, fv, gv, dphi = first
    if acceptable(alpha, fv, dphi):
        candidates.append((fv, alpha, v, gv))
    curvature = dphi - dphi0
    if curvature > 0:
        alpha_s = alpha * (-dphi0) / curvature
        if abs(alpha_s / alpha - 1.0) > 0.05 and alpha_s > 0:
            second = trial(alpha_s)
            if second is not None:
                v2, fv2, gv2, dphi2 = second
                if acceptable(alpha_s, fv2, dphi2):
                    candidates.append((fv2, alpha_s, v2, gv2))
    if candidates:
        fv, a, v, gv = min(candidates, key=lambda t: t[0])
        return a, v, fv, gv
    alpha = alpha * cfg.backtrack_ratio
    if curvature > 0:
        alpha = min(alpha, alpha * (-dphi0) / curvature / cfg.backtrack_ratio)
    for _ in range(60):
        nxt = trial(alpha)
        if nxt is not None:
            v, fv, gv, dphi = nxt
            if acceptable(alpha, fv, dphi):
                return alpha, v, fv, gv
        alpha *= cfg.backtrack_ratio
    return None


def root_find_monotone(phi: Callable, bracket, tol: float = 1e-12, ftol: float | None = None,
                       max_iter: int = 200) -> float:
    """Root of a continuous nondecreasing ``phi`` with ``phi(lo) <= 0 <= phi(hi)``.

    Illinois-style false position, falling back to bisection whenever the
    secant point leaves the inner 90% of the bracket or the bracket fails to
    shrink by half over two steps.  Stops once the bracket is narrower than
    ``tol`` or ``|phi| <= ftol`` (default ``tol``).
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if lo > hi:
        raise UsageError("bracket must satisfy lo <= hi")
    ftol = tol if ftol is None else ftol
    flo, fhi = phi(lo), phi(hi)
    if flo > 0 or fhi < 0:
        raise UsageError(f"bracket is not sign-separating: phi(lo)={flo}, phi(hi)={fhi}")
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    side = 0
    width_prev = hi - lo
    for _ in range(max_iter):
        width = hi - lo
        if width <= tol:
            break
        t = hi - fhi * (hi - lo) / (fhi - flo)
        if not (lo + 0.05 * width < t < hi - 0.05 * width):
            t = 0.5 * (lo + hi)
        ft = phi(t)
        if abs(ft) <= ftol:
            return t
        if ft < 0:
            lo, flo = t, ft
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = t, ft
            if side == 1:
                flo *= 0.5
            side = 1
        if hi - lo > 0.5 * width_prev:
            mid = 0.5 * (lo + hi)
            fm = phi(mid)
            if abs(fm) <= ftol:
                return mid
            if fm < 0:
                lo, flo = mid, fm
            else:
                hi, fhi = mid, fm
            side = 0
        width_prev = width
    # false position keeps the root inside [lo, hi]; return the better end
    return lo if abs(flo) <= abs(fhi) else hi


def prox_step(u_prev: DiscreteFunction, tau: float, table, params: Params | None = None,
              cfg: DescentConfig = DescentConfig()) -> DiscreteFunction:
    """One implicit Euler step of the nonlocal p-heat flow.

    Minimises ``1/(2 tau) ||v - u_prev||^2_{L2(Omega)} + phi(v)/p`` over all
    nodes, where ``phi = [v]^p/2``; its optimality condition is the weak form
    of ``(v - u_prev)/tau + (-Delta)^s_p v = 0`` with zero Neumann data.
    """
    v, _ = prox_solve(u_prev, tau, table, cfg)
    return v


def prox_objective(table, u_prev_values: np.ndarray, tau: float):
    """Objective and gradient callables of the implicit Euler functional."""
    from .forms import form_gradient_values, seminorm_p

    p = table.params.p
    um_prev = table.mass_values(u_prev_values)
    mw = table.mass_w

    def objective(v):
        dm = table.mass_values(v) - um_prev
        return 0.5 / tau * float(np.sum(mw * dm * dm)) + seminorm_p(v, table) / (2.0 * p)

    def gradient(v):
        dm = table.mass_values(v) - um_prev
        return table.mass_scatter(mw * dm) / tau + form_gradient_values(v, table)

    return objective, gradient


def form_metric_diagonal(values: np.ndarray, table) -> np.ndarray:
    """Diagonal of the second variation of ``[v]^p/(2p)`` at ``values``, regularised near du = 0."""
    p = table.params.p
    if p == 2:
        return 0.5 * table.metric_diagonal()
    du = np.abs(table.differences(values))
    floor = 1e-3 * max(float(du.max()), 1e-12)
    B = table.difference_matrix()
    weight = 0.5 * (p - 1.0) * table.w * np.maximum(du, floor) ** (p - 2.0)
    return np.asarray(B.multiply(B).T @ weight).ravel()


def lumped_mass(table) -> np.ndarray:
    return table.mass_scatter(table.mass_w)


def prox_solve(u_prev: DiscreteFunction, tau: float, table, cfg: DescentConfig = DescentConfig(),
               u_start: DiscreteFunction | None = None):
    if not tau > 0:
        raise ConfigError(f"time step must be positive, got {tau}")
    vals = table.check_mesh(u_prev)
    objective, gradient = prox_objective(table, vals, tau)
    mdiag = lumped_mass(table) / tau
    if table.params.p == 2:
        diag = 1.0 / (mdiag + form_metric_diagonal(vals, table))
    else:
        def diag(v):
            return 1.0 / (mdiag + form_metric_diagonal(v, table))
    start = vals if u_start is None else table.check_mesh(u_start)
    weights = table.mesh.lumped_lengths()
    floor = None
    if table.params.p < 2:
        def floor(v, f):
            return form_noise_floor(v, table, f)
    v, stats = descend(objective, gradient, start.copy(), cfg,
                       weights=weights, precond=diag, noise_floor=floor)
    if not stats.converged:
        raise SolverError(f"prox step did not converge: {stats.message}, "
                          f"residual {stats.final_grad_norm:.3e}", stats)
    return DiscreteFunction(table.mesh, v), stats
