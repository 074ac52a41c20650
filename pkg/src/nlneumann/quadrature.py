"""Singular-kernel quadrature for the Gagliardo double integral.

The integration region is every pair (x, y) of the truncated line
``[a-R, b+R]`` except those with both points in the collar.  For a P1
function the integrand ``|u(x)-u(y)|^p |x-y|^{-1-ps}`` behaves like
``|x-y|^{p-1-ps}`` on the diagonal, so identical and touching element pairs
get Gauss-Jacobi rules in the separation variable while separated pairs use
tensor Gauss rules, subdivided until they are well separated.

Every stored weight already contains the kernel: a table approximates
``integral G(x, y) k(x, y)`` by ``sum(w * G(x_i, y_i))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi, roots_legendre

from .errors import DomainError, GeometryError, UsageError
from .geometry import Mesh, Params

# separated pairs are refined until gap >= SEPARATION * max(length)
SEPARATION = 1.0


def kernel(x, y, params: Params):
    """``|x-y|^{-(1+ps)}``; raises on the diagonal."""
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    if np.any(d == 0):
        raise DomainError("kernel is singular on the diagonal x = y")
    out = d ** (-(1.0 + params.ps))
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=None)
def gauss_legendre01(n: int):
    t, w = roots_legendre(int(n))
    return 0.5 * (t + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_jacobi01(n: int, beta: float):
    """Nodes/weights for ``int_0^1 t^beta f(t) dt``."""
    t, w = roots_jacobi(int(n), 0.0, float(beta))
    return 0.5 * (t + 1.0), w / 2.0 ** (beta + 1.0)


def graded_rule(lo: float, hi: float, x: float, order: int, depth: float = 1e-10):
    """Composite Gauss rule on [lo, hi] for integrands nearly singular at ``x`` outside it.

    Pieces are halved toward ``x`` until each is no longer than its distance
    to ``x``.  When ``x`` is an endpoint (an integrable singularity such as a
    kink of ``J_p``) halving continues until the last piece is shorter than
    ``depth * (hi - lo)``.
    """
    if lo < x < hi:
        raise DomainError("graded_rule needs the singular point outside the interval")
    t, w = gauss_legendre01(order)
    starts, lengths = [], []
    near_left = abs(x - lo) <= abs(x - hi)
    a, b = lo, hi
    smallest = max(depth * (hi - lo), 1e-14 * (hi - lo + 1.0))
    while True:
        dist = (a - x) if near_left else (x - b)
        if (dist > 0 and dist >= b - a) or b - a < smallest:
            starts.append(a)
            lengths.append(b - a)
            break
        mid = 0.5 * (a + b)
        if near_left:
            starts.append(mid)
            lengths.append(b - mid)
            b = mid
        else:
            starts.append(a)
            lengths.append(mid - a)
            a = mid
    starts, lengths = np.asarray(starts)[:, None], np.asarray(lengths)[:, None]
    return (starts + lengths * t).ravel(), (lengths * w).ravel()


@dataclass
class TailReport:
    """Kernel mass neglected beyond the collar, per interior node."""

    nodes: np.ndarray
    tail: np.ndarray
    neglected_fraction: np.ndarray
    threshold: float = 0.5

    @property
    def max_tail(self) -> float:
        return float(self.tail.max()) if self.tail.size else 0.0

    @property
    def max_fraction(self) -> float:
        return float(self.neglected_fraction.max()) if self.neglected_fraction.size else 0.0

    @property
    def sufficient(self) -> bool:
        return self.max_fraction <= self.threshold

    def to_dict(self) -> dict:
        return {"max_tail": self.max_tail, "max_neglected_fraction": self.max_fraction,
                "threshold": self.threshold, "sufficient": self.sufficient}


def tail_weight(x: float, mesh: Mesh, params: Params) -> float:
    """``int_d^inf t^{-1-ps} dt = d^{-ps}/ps`` summed over both collar ends."""
    lo, hi = mesh.collar
    d_left, d_right = x - lo, hi - x
    if d_left <= 0 or d_right <= 0:
        raise GeometryError(f"x={x} is not strictly inside the collar ({lo}, {hi})")
    ps = params.ps
    return (d_left ** -ps + d_right ** -ps) / ps


def tail_report(mesh: Mesh, params: Params, threshold: float = 0.5) -> TailReport:
    ps = params.ps
    lo, hi = mesh.collar
    idx = mesh.interior_nodes[1:-1]
    x = mesh.nodes[idx]
    tail = np.array([tail_weight(xi, mesh, params) for xi in x])
    # fraction of the exterior kernel mass seen from x that lies beyond the collar
    frac = np.maximum(((x - mesh.a) / (x - lo)) ** ps, ((mesh.b - x) / (hi - x)) ** ps)
    return TailReport(x, tail, frac, threshold)


@dataclass
class QuadTable:
    """Quadrature points for the double integral and the Omega mass integral.

    Pair points: ``x, y`` positions, ``w`` kernel-inclusive weights, ``ex, lx``
    (resp. ``ey, ly``) element index and local coordinate of each point.
    Only pairs E <= F are stored; ``w`` already carries the factor 2 for
    E < F, so sums over the points integrate over all ordered pairs.
    ``pair_ptr`` delimits the points of ``pairs[k]``.
    """

    mesh: Mesh
    params: Params
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    ex: np.ndarray
    lx: np.ndarray
    ey: np.ndarray
    ly: np.ndarray
    pairs: np.ndarray
    pair_ptr: np.ndarray
    mass_x: np.ndarray
    mass_w: np.ndarray
    mass_e: np.ndarray
    mass_l: np.ndarray
    tail: TailReport
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_points(self) -> int:
        return len(self.w)

    def check_mesh(self, u) -> np.ndarray:
        mesh = getattr(u, "mesh", None)
        if mesh is not None and mesh is not self.mesh:
            raise UsageError("function and quadrature table live on different meshes")
        vals = np.asarray(getattr(u, "values", u), dtype=float)
        if vals.shape != (self.mesh.n_nodes,):
            raise UsageError(f"expected {self.mesh.n_nodes} nodal values, got {vals.shape}")
        return vals

    def differences(self, v: np.ndarray) -> np.ndarray:
        """``v(x_i) - v(y_i)`` at every pair point."""
        vx = v[self.ex] + self.lx * (v[self.ex + 1] - v[self.ex])
        vy = v[self.ey] + self.ly * (v[self.ey + 1] - v[self.ey])
        return vx - vy

    def scatter(self, coef: np.ndarray) -> np.ndarray:
        """Nodal vector ``sum_i coef_i (phi_j(x_i) - phi_j(y_i))``."""
        n = self.mesh.n_nodes
        out = np.bincount(self.ex, coef * (1.0 - self.lx), minlength=n)
        out += np.bincount(self.ex + 1, coef * self.lx, minlength=n)
        out -= np.bincount(self.ey, coef * (1.0 - self.ly), minlength=n)
        out -= np.bincount(self.ey + 1, coef * self.ly, minlength=n)
        return out

    def mass_values(self, v: np.ndarray) -> np.ndarray:
        return v[self.mass_e] + self.mass_l * (v[self.mass_e + 1] - v[self.mass_e])

    def mass_scatter(self, coef: np.ndarray) -> np.ndarray:
        n = self.mesh.n_nodes
        out = np.bincount(self.mass_e, coef * (1.0 - self.mass_l), minlength=n)
        out += np.bincount(self.mass_e + 1, coef * self.mass_l, minlength=n)
        return out

    def swapped(self) -> "QuadTable":
        """The same rule with the roles of x and y exchanged."""
        return QuadTable(self.mesh, self.params, self.y, self.x, self.w, self.ey, self.ly,
                         self.ex, self.lx, self.pairs[:, ::-1].copy(), self.pair_ptr,
                         self.mass_x, self.mass_w, self.mass_e, self.mass_l, self.tail)

    def ordered_pairs(self):
        """Yield ``(E, F, x, y, w)`` for every ordered element pair in the region."""
        for k, (e, f) in enumerate(self.pairs):
            sl = slice(self.pair_ptr[k], self.pair_ptr[k + 1])
            x, y, w = self.x[sl], self.y[sl], self.w[sl]
            if e == f:
                yield int(e), int(f), x, y, w
            else:
                yield int(e), int(f), x, y, 0.5 * w
                yield int(f), int(e), y, x, 0.5 * w

    def difference_matrix(self) -> sp.csr_matrix:
        """Sparse B with ``B @ v = differences(v)``."""
        if "B" not in self._cache:
            m = self.n_points
            rows = np.repeat(np.arange(m), 4)
            cols = np.column_stack([self.ex, self.ex + 1, self.ey, self.ey + 1]).ravel()
            vals = np.column_stack([1.0 - self.lx, self.lx, -(1.0 - self.ly), -self.ly]).ravel()
            self._cache["B"] = sp.csr_matrix((vals, (rows, cols)),
                                             shape=(m, self.mesh.n_nodes))
        return self._cache["B"]

    def quadratic_form_matrix(self) -> np.ndarray:
        """Dense K with ``[v]^2 = v @ K @ v``; meaningful only for p = 2."""
        if self.params.p != 2:
            raise UsageError("the matrix view of the form exists only for p = 2")
        B = self.difference_matrix()
        return (B.T @ sp.diags(self.w) @ B).toarray()

    def metric_diagonal(self) -> np.ndarray:
        """``sum w (phi_j(x)-phi_j(y))^2`` per node: diagonal of the p = 2 form."""
        if "diag" not in self._cache:
            B = self.difference_matrix()
            self._cache["diag"] = np.asarray(B.multiply(B).T @ self.w).ravel()
        return self._cache["diag"]

    def mass_matrix(self) -> np.ndarray:
        """Omega mass matrix assembled with the mass rule (exact for P1 when order >= 2)."""
        n = self.mesh.n_nodes
        M = np.zeros((n, n))
        phi0, phi1 = 1.0 - self.mass_l, self.mass_l
        for (i, j, a, b) in ((0, 0, phi0, phi0), (0, 1, phi0, phi1),
                             (1, 0, phi1, phi0), (1, 1, phi1, phi1)):
            np.add.at(M, (self.mass_e + i, self.mass_e + j), self.mass_w * a * b)
        return M


def _tensor(X, Y, order, params):
    t, w = gauss_legendre01(order)
    xs = X[0] + (X[1] - X[0]) * t
    ys = Y[0] + (Y[1] - Y[0]) * t
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    ww = np.outer((X[1] - X[0]) * w, (Y[1] - Y[0]) * w) * np.abs(xx - yy) ** (-1.0 - params.ps)
    return xx.ravel(), yy.ravel(), ww.ravel()


def _identical(X, order, params):
    """Rule on X x X; exact in t for integrands t^{p-1-ps} * (smooth)."""
    ps, p = params.ps, params.p
    beta = p - 1.0 - ps
    t, wt = gauss_jacobi01(order, beta)
    sg, wg = gauss_legendre01(order)
    h = X[1] - X[0]
    T, S = np.meshgrid(t, sg, indexing="ij")
    WT, WS = np.meshgrid(wt, wg, indexing="ij")
    eta = (1.0 - T) * S
    xi = eta + T
    w = WT * WS * h * h * (1.0 - T) * (h * T) ** (-1.0 - ps) / T ** beta
    x = X[0] + h * xi
    y = X[0] + h * eta
    x, y, w = x.ravel(), y.ravel(), w.ravel()
    return np.concatenate([x, y]), np.concatenate([y, x]), np.concatenate([w, w])


def _touching(X, Y, order, angular_order, params):
    """Rule on X x Y with X = [c-h1, c], Y = [c, c+h2] (Duffy split of the corner)."""
    ps, p = params.ps, params.p
    beta = p - ps
    c = X[1]
    h1, h2 = X[1] - X[0], Y[1] - Y[0]
    rho, wr = gauss_jacobi01(order, beta)
    th, wth = gauss_legendre01(angular_order)
    R_, TH = np.meshgrid(rho, th, indexing="ij")
    WR, WTH = np.meshgrid(wr, wth, indexing="ij")
    base = WR * WTH * h1 * h2 * R_ / R_ ** beta
    xs, ys, ws = [], [], []
    for xi, eta in ((R_, R_ * TH), (R_ * TH, R_)):
        x = c - h1 * xi
        y = c + h2 * eta
        xs.append(x.ravel())
        ys.append(y.ravel())
        ws.append((base * (h1 * xi + h2 * eta) ** (-1.0 - ps)).ravel())
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ws)


def _near_pair(X, Y, order, angular_order, params, out):
    """Recursive rule for X left of Y (possibly touching) that are not well separated."""
    lx, ly = X[1] - X[0], Y[1] - Y[0]
    gap = Y[0] - X[1]
    if gap <= 0:
        if lx > 2.0 * ly:
            cut = X[1] - ly
            _near_pair((cut, X[1]), Y, order, angular_order, params, out)
            _near_pair((X[0], cut), Y, order, angular_order, params, out)
            return
        if ly > 2.0 * lx:
            cut = Y[0] + lx
            _near_pair(X, (Y[0], cut), order, angular_order, params, out)
            _near_pair(X, (cut, Y[1]), order, angular_order, params, out)
            return
        out.append(_touching(X, Y, order, angular_order, params))
        return
    if gap >= SEPARATION * max(lx, ly):
        out.append(_tensor(X, Y, order, params))
        return
    if lx >= ly:
        m = 0.5 * (X[0] + X[1])
        _near_pair((X[0], m), Y, order, angular_order, params, out)
        _near_pair((m, X[1]), Y, order, angular_order, params, out)
    else:
        m = 0.5 * (Y[0] + Y[1])
        _near_pair(X, (Y[0], m), order, angular_order, params, out)
        _near_pair(X, (m, Y[1]), order, angular_order, params, out)


def build_quad_table(mesh: Mesh, params: Params, angular_order: int | None = None,
                     tail_threshold: float = 0.5) -> QuadTable:
    order = int(params.quad_order)
    angular_order = int(angular_order or 2 * order)
    nodes = mesh.nodes
    ne = mesh.n_elements
    inside = mesh.element_interior
    E, F = np.triu_indices(ne)
    keep = inside[E] | inside[F]
    E, F = E[keep], F[keep]

    lo, hi = nodes[:-1], nodes[1:]
    length = hi - lo
    gap = lo[F] - hi[E]
    separated = (F > E + 1) & (gap >= SEPARATION * np.maximum(length[E], length[F]))

    chunks = {}
    # well separated pairs: one vectorised tensor rule
    sep_idx = np.flatnonzero(separated)
    if sep_idx.size:
        t, w = gauss_legendre01(order)
        Es, Fs = E[sep_idx], F[sep_idx]
        xs = lo[Es, None] + length[Es, None] * t[None, :]
        ys = lo[Fs, None] + length[Fs, None] * t[None, :]
        wx = length[Es, None] * w[None, :]
        wy = length[Fs, None] * w[None, :]
        X = np.repeat(xs, order, axis=1)
        Y = np.tile(ys, (1, order))
        W = np.repeat(wx, order, axis=1) * np.tile(wy, (1, order))
        W = W * np.abs(X - Y) ** (-1.0 - params.ps)
        for k, idx in enumerate(sep_idx):
            chunks[idx] = (X[k], Y[k], 2.0 * W[k])
    for idx in np.flatnonzero(~separated):
        e, f = E[idx], F[idx]
        if e == f:
            x, y, w = _identical((lo[e], hi[e]), order, params)
        else:
            parts = []
            _near_pair((lo[e], hi[e]), (lo[f], hi[f]), order, angular_order, params, parts)
            x = np.concatenate([q[0] for q in parts])
            y = np.concatenate([q[1] for q in parts])
            w = 2.0 * np.concatenate([q[2] for q in parts])
        chunks[idx] = (x, y, w)

    xs, ys, ws, ptr, ex_list, ey_list = [], [], [], [0], [], []
    for idx in range(len(E)):
        x, y, w = chunks[idx]
        xs.append(x)
        ys.append(y)
        ws.append(w)
        ex_list.append(np.full(len(x), E[idx]))
        ey_list.append(np.full(len(y), F[idx]))
        ptr.append(ptr[-1] + len(x))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    w = np.concatenate(ws)
    ex = np.concatenate(ex_list)
    ey = np.concatenate(ey_list)
    lx = (x - lo[ex]) / length[ex]
    ly = (y - lo[ey]) / length[ey]
    if not (np.all(np.isfinite(w)) and np.all(w > 0)):
        raise UsageError("quadrature produced non-positive or non-finite weights")

    tm, wm = gauss_legendre01(order)
    ie = mesh.interior_elements
    mass_x = (lo[ie, None] + length[ie, None] * tm[None, :]).ravel()
    mass_w = (length[ie, None] * wm[None, :]).ravel()
    mass_e = np.repeat(ie, order)
    mass_l = np.tile(tm, len(ie))

    return QuadTable(mesh, params, x, y, w, ex, lx, ey, ly,
                     np.column_stack([E, F]), np.asarray(ptr),
                     mass_x, mass_w, mass_e, mass_l,
                     tail_report(mesh, params, tail_threshold))
