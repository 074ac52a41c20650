"""Pointwise operator evaluation, the Neumann extension and the nonlocal calculus checks.

``eval_plap`` computes the principal value

    (-Delta)^s_p u(x) = PV int J_p(u(x) - u(y)) |x-y|^{-1-ps} dy

over the truncated line.  Inside a symmetric window ``|t| < delta`` the two
mirror points are paired, ``D(t) = J_p(u(x)-u(x+t)) + J_p(u(x)-u(x-t))``,
which is ``O(t^p)`` for smooth ``u`` with ``u'(x) != 0``.  For very small
``t`` the difference ``D`` is replaced by its exact value for the quadratic
Taylor model of ``u`` at ``x``; this avoids the cancellation of evaluating
``u(x+t) - u(x)`` in floating point.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .errors import DomainError, UsageError
from .forms import j_p
from .geometry import DiscreteFunction, Mesh, Params
from .quadrature import QuadTable, gauss_legendre01, graded_rule
from .solvers import root_find_monotone

# below this separation the quadratic Taylor model replaces direct differences
TAYLOR_RADIUS = 1e-3
QUAD_LIMIT = 400


@dataclass(frozen=True)
class PointEval:
    value: float
    pv_inner_radius: float
    quad_error_est: float
    tail_estimate: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise DomainError("operator value is not finite")
        if not self.pv_inner_radius > 0:
            raise UsageError("PV window must be positive")


@dataclass(frozen=True)
class IdentityReport:
    """Residual of a nonlocal calculus identity together with its two sides."""

    residual: float
    lhs: float
    rhs: float
    omega_integral: float
    collar_integral: float
    tail_estimate: float
    quad_order: int

    def to_dict(self) -> dict:
        return dict(residual=self.residual, lhs=self.lhs, rhs=self.rhs,
                    omega_integral=self.omega_integral, collar_integral=self.collar_integral,
                    tail_estimate=self.tail_estimate, quad_order=self.quad_order)


def _jp(t: float, p: float) -> float:
    """Scalar ``J_p`` for use inside adaptive quadrature loops."""
    return math.copysign(abs(t) ** (p - 1.0), t) if t != 0.0 else 0.0


def _smooth(u) -> Callable:
    if isinstance(u, DiscreteFunction):
        if u.source is None:
            raise UsageError("pointwise evaluation needs the smooth function a DiscreteFunction "
                             "was sampled from")
        return u.source
    return u


def _scalar(u: Callable) -> Callable:
    return lambda y: float(u(y))


def _quad(f, lo, hi, tol, points=None, **kw):
    if hi <= lo:
        return 0.0, 0.0
    if points is not None:
        points = [pt for pt in points if lo < pt < hi]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        val, err = quad(f, lo, hi, epsabs=tol, epsrel=tol, limit=QUAD_LIMIT,
                        points=points or None, **kw)
    return val, err


def _geometric_points(x, lo, hi, start):
    """Breakpoints ``x -+ start * 2^k`` inside ``(lo, hi)``."""
    pts = []
    d = start
    while x - d > lo or x + d < hi:
        if x - d > lo:
            pts.append(x - d)
        if x + d < hi:
            pts.append(x + d)
        d *= 2.0
    return sorted(pts)


def _taylor_piece(g: float, c: float, t_c: float, params: Params, tol: float):
    """``int_0^{t_c} D(t) t^{-1-ps} dt`` for ``u = u(x) + g t + c t^2``.

    ``D(t) = J_p(t) Q(t)`` with ``Q(t) = J_p(g - c t) - J_p(g + c t)``.
    """
    p, ps = params.p, params.ps
    if c == 0.0:
        return 0.0, 0.0
    if g == 0.0:
        expo = 2.0 * p - 2.0 - ps
        if expo <= 0:
            raise DomainError("principal value diverges at a critical point for this (p, s)")
        return -2.0 * _jp(c, p) * t_c ** expo / expo, 0.0

    def Q(t):
        return _jp(g - c * t, p) - _jp(g + c * t, p)

    slope = -2.0 * (p - 1.0) * abs(g) ** (p - 2.0) * c

    def q_over_t(t):
        return Q(t) / t if t > 0 else slope

    t_kink = abs(g / c)
    t1 = min(t_c, 0.5 * t_kink)
    # weight t^(p-1-ps) is integrable because p - ps > 0
    val, err = _quad(q_over_t, 0.0, t1, tol, weight="alg", wvar=(p - 1.0 - ps, 0.0))
    if t1 < t_c:
        v2, e2 = _quad(lambda t: t ** (p - 2.0 - ps) * Q(t), t1, t_c, tol,
                       points=[t_kink] + [t1 * 2.0 ** k for k in range(1, 60)
                                          if t1 * 2.0 ** k < t_c])
        val, err = val + v2, err + e2
    return val, err


def _derivatives(u, x, lo, hi, du, d2u):
    if du is not None and d2u is not None:
        return float(du(x)), float(d2u(x))
    scale = max(1.0, abs(x))
    e1 = min(1e-5 * scale, 0.5 * (x - lo), 0.5 * (hi - x))
    e2 = min(1e-4 * scale, 0.5 * (x - lo), 0.5 * (hi - x))
    up, um = u(x + e1), u(x - e1)
    g = (up - um) / (2.0 * e1) if du is None else float(du(x))
    u0 = u(x)
    c2 = (u(x + e2) - 2.0 * u0 + u(x - e2)) / (e2 * e2) if d2u is None else float(d2u(x))
    return g, c2


def eval_plap(u, x: float, params: Params, window: Optional[float] = None, *,
              mesh: Optional[Mesh] = None, domain=None, du: Optional[Callable] = None,
              d2u: Optional[Callable] = None, tol: float = 1e-11) -> PointEval:
    """Principal value of the fractional p-Laplacian of a C^2 function at ``x``.

    The integral runs over the collar ``mesh.collar`` when a mesh is given,
    over ``domain=(lo, hi)`` when that is given, and over the whole line
    otherwise.  ``window`` is the half width of the symmetric PV window and
    defaults to one interior element (0.1 without a mesh).  Optional ``du``
    and ``d2u`` supply exact derivatives for the Taylor model; otherwise they
    are estimated by central differences.
    """
    f = _scalar(_smooth(u))
    x = float(x)
    if mesh is not None:
        lo, hi = mesh.collar
        if not (mesh.a < x < mesh.b):
            raise DomainError(f"x={x} is not interior to ({mesh.a}, {mesh.b})")
    elif domain is not None:
        lo, hi = float(domain[0]), float(domain[1])
    else:
        lo, hi = -math.inf, math.inf
    if not (lo < x < hi):
        raise DomainError(f"x={x} lies outside the integration domain ({lo}, {hi})")
    if window is None:
        window = mesh.h_interior if mesh is not None else 0.1
    if not window > 0:
        raise UsageError("window must be positive")
    if mesh is not None and window >= min(x - mesh.a, mesh.b - x):
        warnings.warn("PV window reaches past the domain boundary", RuntimeWarning, stacklevel=2)
    p, ps = params.p, params.ps
    delta = min(float(window), 0.5 * (x - lo), 0.5 * (hi - x))
    ux = f(x)

    g, u2 = _derivatives(f, x, lo, hi, du, d2u)
    t_c = min(TAYLOR_RADIUS * min(1.0, delta), delta)
    inner, err = _taylor_piece(g, 0.5 * u2, t_c, params, tol)

    def paired(t):
        return (_jp(ux - f(x + t), p) + _jp(ux - f(x - t), p)) * t ** (-1.0 - ps)

    bps = [t_c * 2.0 ** k for k in range(1, 80) if t_c * 2.0 ** k < delta]
    mid, e = _quad(paired, t_c, delta, tol, points=bps)
    inner, err = inner + mid, err + e

    def one_sided(y):
        return _jp(ux - f(y), p) * abs(x - y) ** (-1.0 - ps)

    outer = 0.0
    if math.isfinite(lo):
        pts = _geometric_points(x, lo, hi, 2.0 * delta)
        v, e = _quad(one_sided, lo, x - delta, tol, points=pts)
        outer += v
        err += e
        v, e = _quad(one_sided, x + delta, hi, tol, points=pts)
        outer += v
        err += e
        m = max(abs(ux), abs(f(lo)), abs(f(hi)))
        tail = (2.0 * m) ** (p - 1.0) * ((x - lo) ** -ps + (hi - x) ** -ps) / ps
    else:
        for a_, b_ in ((-math.inf, x - delta), (x + delta, math.inf)):
            v, e = _quad(one_sided, a_, b_, tol)
            outer += v
            err += e
        tail = 0.0
    return PointEval(inner + outer, delta, err, tail)


def _omega_of(u, omega):
    if isinstance(u, DiscreteFunction):
        return u.mesh.omega
    if omega is None:
        raise UsageError("the domain Omega is needed to evaluate a callable")
    return (float(omega[0]), float(omega[1]))


def _graded_both(a: float, b: float, left, right, order: int):
    """Gauss rule on [a, b] graded toward singular points ``left <= a`` and/or ``right >= b``."""
    if left is None and right is None:
        t, w = gauss_legendre01(order)
        return a + (b - a) * t, (b - a) * w
    if right is None:
        return graded_rule(a, b, left, order)
    if left is None:
        return graded_rule(a, b, right, order)
    mid = 0.5 * (a + b)
    y1, w1 = graded_rule(a, mid, left, order)
    y2, w2 = graded_rule(mid, b, right, order)
    return np.concatenate([y1, y2]), np.concatenate([w1, w2])


def pl_rule(mesh: Mesh, values: np.ndarray, elements, x: float, level: Optional[float],
            order: int):
    """Points and weights on ``elements`` for integrands built from a P1 function.

    Each element is split where its linear piece crosses ``level`` (the kink
    of ``J_p(level - u)``).  The continuation of that linear piece past the
    element ends is singular where it reaches ``level``, so a piece is graded
    toward that point when it is closer than the piece is long, and toward
    ``x``, which must not lie inside any of the elements.  Only the values on
    ``elements`` enter the rule.
    """
    nodes = mesh.nodes
    ys, ws = [], []
    for e in elements:
        lo, hi = nodes[e], nodes[e + 1]
        root = _linear_root(lo, hi, values[e], values[e + 1], level)
        if root is not None and lo < root < hi:
            pieces = [(lo, root, None, root), (root, hi, root, None)]
        else:
            pieces = [(lo, hi, root if root is not None and root <= lo else None,
                       root if root is not None and root >= hi else None)]
        for a_, b_, left, right in pieces:
            left = _nearest(left, x, a_, b_, -1)
            right = _nearest(right, x, b_, a_, 1)
            y, w = _graded_both(a_, b_, left, right, order)
            ys.append(y)
            ws.append(w)
    return np.concatenate(ys), np.concatenate(ws)


def _linear_root(lo: float, hi: float, v0: float, v1: float, level: Optional[float]):
    """Where the line through ``(lo, v0)`` and ``(hi, v1)`` equals ``level``, or None."""
    if level is None or v0 == v1:
        return None
    return lo + (level - v0) / (v1 - v0) * (hi - lo)


def _nearest(kink, x: float, end: float, other: float, side: int):
    """Closest singular point beyond ``end`` on ``side`` that needs grading, or None.

    The kink counts when it is nearer to ``end`` than the piece is long;
    ``x`` counts whenever it lies on that side.
    """
    best = x if side * (x - end) >= 0 else None
    if kink is not None and abs(kink - end) < abs(other - end) and \
            (best is None or abs(kink - end) < abs(best - end)):
        best = kink
    return best


def eval_neumann(u, x: float, params: Params, omega=None, order: Optional[int] = None,
                 tol: float = 1e-12) -> float:
    """Nonlocal normal derivative ``int_Omega J_p(u(x)-u(y)) |x-y|^{-1-ps} dy`` at x outside Omega.

    For a DiscreteFunction the integral uses Gauss rules on each interior
    element, graded toward ``x`` and split where ``u = u(x)``; for a callable
    it uses adaptive quadrature over ``omega``.
    """
    a, b = _omega_of(u, omega)
    x = float(x)
    if a <= x <= b:
        raise DomainError(f"x={x} is not outside the closed domain [{a}, {b}]")
    p, ps = params.p, params.ps
    if isinstance(u, DiscreteFunction):
        order = order or max(8, params.quad_order)
        return _neumann_pl(u.mesh, u.values, x, float(u(x)), p, ps, order)
    f = _scalar(u)
    ux = f(x)
    d = a - x if x < a else x - b
    L = b - a
    if x < a:
        pts = [a + d * 2.0 ** k for k in range(0, 200) if d * 2.0 ** k < L]
    else:
        pts = [b - d * 2.0 ** k for k in range(0, 200) if d * 2.0 ** k < L]
    val, _ = _quad(lambda y: _jp(ux - f(y), p) * abs(x - y) ** (-1.0 - ps), a, b, tol,
                   points=pts)
    return val


def _neumann_pl(mesh, values, x, t, p, ps, order):
    y, w = pl_rule(mesh, values, mesh.interior_elements, x, t, order)
    e, lam = mesh.locate(y)
    uy = values[e] + lam * (values[e + 1] - values[e])
    return float(np.sum(w * np.abs(x - y) ** (-1.0 - ps) * j_p(t - uy, p)))


def extend_neumann(u_interior, mesh: Mesh, params: Params, order: Optional[int] = None,
                   tol: float = 1e-12) -> DiscreteFunction:
    """Complete interior nodal values by solving the zero Neumann condition at exterior nodes.

    Each exterior value ``t`` solves ``int_Omega J_p(t - u(y)) k(x, y) dy = 0``
    with the same rule as :func:`eval_neumann`.  The left side is strictly
    increasing in ``t``, so the root is unique and lies between the extreme
    interior values.  Exterior nodes are independent of each other.
    """
    if isinstance(u_interior, DiscreteFunction):
        ui = u_interior.interior_values
    else:
        ui = np.asarray(u_interior, dtype=float)
    n_int = int(mesh.node_interior.sum())
    if ui.shape != (n_int,):
        raise UsageError(f"expected {n_int} interior values, got shape {ui.shape}")
    if not np.all(np.isfinite(ui)):
        raise DomainError("interior values must be finite")
    p, ps = params.p, params.ps
    order = order or max(8, params.quad_order)
    values = np.zeros(mesh.n_nodes)
    values[mesh.node_interior] = ui
    lo_u, hi_u = float(ui.min()), float(ui.max())
    if hi_u - lo_u <= tol * max(1.0, abs(lo_u), abs(hi_u)):
        values[~mesh.node_interior] = lo_u
        return DiscreteFunction(mesh, values)
    t_tol = tol * max(1.0, abs(lo_u), abs(hi_u))
    for j in mesh.exterior_nodes:
        x = mesh.nodes[j]
        values[j] = root_find_monotone(
            lambda t: _neumann_pl(mesh, values, x, t, p, ps, order),
            (lo_u, hi_u), tol=t_tol, ftol=0.0)
    return DiscreteFunction(mesh, values)


def _plap_pl(u: DiscreteFunction, x: float, params: Params, order: int) -> PointEval:
    """Operator of a P1 function at a non-nodal point of Omega.

    On the element containing ``x`` the function is linear and the principal
    value reduces to ``J_p(g) (G(x - e0) - G(e1 - x))`` with ``G' = t^(p-2-ps)``;
    the other elements use :func:`pl_rule`.
    """
    mesh = u.mesh
    p, ps = params.p, params.ps
    e, lam = mesh.locate(x)
    e = int(e)
    e0, e1 = mesh.nodes[e], mesh.nodes[e + 1]
    if not (e0 < x < e1):
        raise DomainError(f"x={x} is a mesh node; the P1 operator is evaluated between nodes")
    vals = u.values
    g = (vals[e + 1] - vals[e]) / (e1 - e0)
    ux = float(vals[e] + lam * (vals[e + 1] - vals[e]))
    beta = p - 1.0 - ps

    def G(t):
        return math.log(t) if abs(beta) < 1e-14 else t ** beta / beta

    own = _jp(g, p) * (G(x - e0) - G(e1 - x))
    others = [k for k in range(mesh.n_elements) if k != e]
    y, w = pl_rule(mesh, vals, others, x, ux, order)
    ey, ly = mesh.locate(y)
    uy = vals[ey] + ly * (vals[ey + 1] - vals[ey])
    rest = float(np.sum(w * np.abs(x - y) ** (-1.0 - ps) * j_p(ux - uy, p)))
    lo, hi = mesh.collar
    m = float(np.max(np.abs(vals)))
    tail = (2.0 * m) ** (p - 1.0) * ((x - lo) ** -ps + (hi - x) ** -ps) / ps
    return PointEval(own + rest, min(x - e0, e1 - x), 0.0, tail)


MAX_LEVELS = 24


def _panels(mesh: Mesh, q: int, params: Params, discrete: bool, levels: int = MAX_LEVELS):
    """Composite Gauss panels on Omega and on the collar.

    Elements touching the boundary of Omega are split geometrically toward it,
    ``levels`` deep.  Near the boundary the Neumann derivative behaves like
    ``A d^(p-1-ps) + B``.  For a smooth function the operator only becomes
    singular at the boundary if it is a critical point, like
    ``A d^(2p-2-ps) + B``; for a P1 function it behaves like
    ``A d^(p-1-ps) + B`` at every node, so all Omega elements are graded at
    both ends.  For a nonpositive exponent (logarithmic at 0) the last sliver
    ``[0, eps]`` is integrated exactly for that model, fitted from two
    samples; otherwise it gets a Gauss rule.

    Returns ``(x_omega, w_omega, x_collar, w_collar, slivers)`` with slivers
    ``(inside, endpoint, direction, eps, exponent)``.
    """
    t, w = gauss_legendre01(q)
    p, ps = params.p, params.ps
    exponent = {True: (p - 1.0 - ps) if discrete else (2.0 * p - 2.0 - ps),
                False: p - 1.0 - ps}
    slivers = []

    def half(lo, hi, at, inside, xs, ws):
        a, b = lo, hi
        for _ in range(levels):
            mid = 0.5 * (a + b)
            if at == lo:
                xs.append(mid + (b - mid) * t)
                ws.append((b - mid) * w)
                b = mid
            else:
                xs.append(a + (mid - a) * t)
                ws.append((mid - a) * w)
                a = mid
        if exponent[inside] <= 0:
            direction = 1.0 if at == lo else -1.0
            slivers.append((inside, at, direction, b - a, exponent[inside]))
        else:
            xs.append(a + (b - a) * t)
            ws.append((b - a) * w)

    def element(lo, hi, ends, inside):
        xs, ws = [], []
        if not ends:
            return lo + (hi - lo) * t, (hi - lo) * w
        if len(ends) == 2:
            mid = 0.5 * (lo + hi)
            half(lo, mid, lo, inside, xs, ws)
            half(mid, hi, hi, inside, xs, ws)
        else:
            half(lo, hi, ends[0], inside, xs, ws)
        return np.concatenate(xs), np.concatenate(ws)

    nodes = mesh.nodes
    om, cl = [], []
    for e in range(mesh.n_elements):
        lo, hi = nodes[e], nodes[e + 1]
        inside = bool(mesh.element_interior[e])
        if inside and discrete:
            ends = [lo, hi]
        else:
            ends = [z for z in (lo, hi) if z in (mesh.a, mesh.b)]
        (om if inside else cl).append(element(lo, hi, ends, inside))
    xo = np.concatenate([p[0] for p in om])
    wo = np.concatenate([p[1] for p in om])
    xc = np.concatenate([p[0] for p in cl])
    wc = np.concatenate([p[1] for p in cl])
    return xo, wo, xc, wc, slivers


def _sliver_integral(F, endpoint, direction, eps, alpha):
    """``int_0^eps F(endpoint + direction d) dd`` for ``F ~ A d^alpha + B``.

    ``alpha = 0`` stands for the borderline model ``A log d + B``.
    """
    f1 = float(F(endpoint + direction * eps))
    f2 = float(F(endpoint + direction * 0.5 * eps))
    if abs(alpha) < 1e-12:
        A = (f1 - f2) / math.log(2.0)
        B = f1 - A * math.log(eps)
        return A * eps * (math.log(eps) - 1.0) + B * eps
    A = (f1 - f2) / (eps ** alpha * (1.0 - 2.0 ** -alpha))
    B = f1 - A * eps ** alpha
    return A * eps ** (alpha + 1.0) / (alpha + 1.0) + B * eps


def check_divergence_theorem(u, mesh: Mesh, params: Params, quad_order: Optional[int] = None,
                             window: Optional[float] = None) -> IdentityReport:
    """``|int_Omega (-Delta)^s_p u + int_collar N u|`` by composite Gauss rules.

    ``u`` is a smooth callable (or a DiscreteFunction carrying one).  In the
    truncated setting the two integrals cancel exactly, so the residual
    measures quadrature error only; ``tail_estimate`` bounds what truncation
    at the collar edge leaves out of the untruncated identity.
    """
    f = _smooth(u)
    return _identity(lambda x: _plap_smooth(f, x, params, window, mesh),
                     lambda x: eval_neumann(f, x, params, omega=mesh.omega),
                     None, mesh, params, quad_order, discrete=False)


def _plap_smooth(f, x, params, window, mesh):
    return eval_plap(f, x, params, window, mesh=mesh)


def check_integration_by_parts(u: DiscreteFunction, v: DiscreteFunction, table: QuadTable,
                               params: Params | None = None, quad_order: Optional[int] = None,
                               smooth: bool = False, window: Optional[float] = None
                               ) -> IdentityReport:
    """Compare the table pairing ``<form_gradient(u), v>`` with its strong form.

    The strong form is ``int_Omega v (-Delta)^s_p u + int_collar v N u``.  By
    default it is evaluated for the P1 functions themselves, for which the
    identity is exact, so the residual tests the element-pair quadrature
    against an independent pointwise computation.  With ``smooth=True`` the
    smooth functions ``u.source`` and ``v.source`` are used instead; the
    residual then also contains the interpolation error, which is O(h^2).
    """
    from .forms import form_gradient_values

    params = params or table.params
    uv = table.check_mesh(u)
    vv = table.check_mesh(v)
    lhs = float(form_gradient_values(uv, table) @ vv)
    mesh = table.mesh
    order = max(8, params.quad_order)
    if smooth:
        f = _smooth(u)
        vf = _smooth(v)
        rep = _identity(lambda x: _plap_smooth(f, x, params, window, mesh),
                        lambda x: eval_neumann(f, x, params, omega=mesh.omega),
                        vf, mesh, params, quad_order, discrete=False)
    else:
        u = u if isinstance(u, DiscreteFunction) else DiscreteFunction(mesh, uv)
        v = v if isinstance(v, DiscreteFunction) else DiscreteFunction(mesh, vv)
        vf = DiscreteFunction(mesh, vv)
        rep = _identity(lambda x: _plap_pl(u, x, params, order),
                        lambda x: eval_neumann(DiscreteFunction(mesh, uv), x, params),
                        vf, mesh, params, quad_order, discrete=True)
    rhs = rep.rhs
    return IdentityReport(float(abs(lhs - rhs)), lhs, rhs, rep.omega_integral,
                          rep.collar_integral, rep.tail_estimate, rep.quad_order)


def _identity(op, neu, v, mesh, params, quad_order, discrete):
    q = int(quad_order or params.quad_order)
    levels = 16 if discrete else MAX_LEVELS
    xo, wo, xc, wc, slivers = _panels(mesh, q, params, discrete, levels)
    vf = (lambda x: 1.0) if v is None else (lambda x: float(v(x)))
    tails = []

    def op_value(x):
        pe = op(x)
        tails.append(pe.tail_estimate)
        return pe.value

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        op_vals = np.array([op_value(x) for x in xo])
        tail = float(np.sum(wo * np.array(tails)))
        omega_int = float(np.sum(wo * np.array([vf(x) for x in xo]) * op_vals))
        collar_int = float(np.sum(wc * np.array([vf(x) * neu(x) for x in xc])))
        for inside, endpoint, direction, eps, alpha in slivers:
            F = (lambda x: vf(x) * op_value(x)) if inside else (lambda x: vf(x) * neu(x))
            val = _sliver_integral(F, endpoint, direction, eps, alpha)
            if inside:
                omega_int += val
            else:
                collar_int += val
    rhs = omega_int + collar_int
    return IdentityReport(float(abs(rhs)), 0.0, float(rhs), float(omega_int),
                          float(collar_int), tail, q)
