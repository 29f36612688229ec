"""Entropic optimal transport between measures quantised on regular 2-D grids.

Cost is ``|x - y|^2``. Dual potentials ``(f, g)`` are kept in cost units, so
the plan is ``pi_ij = a_i b_j exp((f_i + g_j - |x_i - y_j|^2) / eps)`` and the
convex potential of the map is ``Phi(x) = (|x|^2 - f(x)) / 2``.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from ._lse import lse2
from ._quad import gauss_legendre_panels
from .measures import MeasureSpec, support_box
from .transport1d import TransportMap

MASS_TOL = 1e-10
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 20000
MARGIN = 2
OMEGA = 1.8


class ConvergenceError(RuntimeError):
    """Sinkhorn stopped before reaching the requested marginal error."""

    def __init__(self, message: str, coupling: "Coupling"):
        super().__init__(message)
        self.coupling = coupling


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weights on the tensor grid ``x1 x x2`` (weights indexed ``[i1, i2]``)."""

    x1: np.ndarray
    x2: np.ndarray
    weights: np.ndarray
    label: str = ""

    def __post_init__(self):
        w = self.weights
        if w.shape != (self.x1.size, self.x2.size):
            raise ValueError("weights do not match the grid")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        for ax in (self.x1, self.x2):
            if ax.size > 2:
                d = np.diff(ax)
                if not np.allclose(d, d[0], rtol=1e-9, atol=0):
                    raise ValueError("grid must be regular")

    @property
    def spacing(self) -> tuple[float, float]:
        return float(self.x1[1] - self.x1[0]), float(self.x2[1] - self.x2[0])

    @property
    def h(self) -> float:
        return max(self.spacing)

    @property
    def nodes(self) -> np.ndarray:
        X1, X2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        return np.stack([X1.ravel(), X2.ravel()], axis=1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape


@dataclass(frozen=True, eq=False)
class Coupling:
    src: DiscreteMeasure
    tgt: DiscreteMeasure
    f: np.ndarray
    g: np.ndarray
    epsilon: float
    marginal_error: float
    iterations: int
    converged: bool
    diagnostics: list = field(default_factory=list)

    def plan_row(self, i1: int, i2: int) -> np.ndarray:
        """Row ``pi[(i1, i2), :]`` reshaped to the target grid."""
        s, t, eps = self.src, self.tgt, self.epsilon
        c = (s.x1[i1] - t.x1[:, None]) ** 2 + (s.x2[i2] - t.x2[None, :]) ** 2
        with np.errstate(divide="ignore"):
            lw = math.log(s.weights[i1, i2]) + np.log(t.weights)
        return np.exp(lw + (self.f[i1, i2] + self.g - c) / eps)

    def cost(self) -> float:
        """Transport cost ``sum pi_ij |x_i - y_j|^2`` (row by row)."""
        total = 0.0
        s, t = self.src, self.tgt
        for i1 in range(s.x1.size):
            for i2 in range(s.x2.size):
                if s.weights[i1, i2] == 0:
                    continue
                c = (s.x1[i1] - t.x1[:, None]) ** 2 + (s.x2[i2] - t.x2[None, :]) ** 2
                total += float(np.sum(self.plan_row(i1, i2) * c))
        return total


# --------------------------------------------------------------------------
# discretisation


def _log_density_grid(m: MeasureSpec, x1, x2) -> np.ndarray:
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    pts = np.stack([X1.ravel(), X2.ravel()], axis=1)
    return m.log_density(pts).reshape(X1.shape)


def _marginal_tails(m: MeasureSpec, lo, hi, panels=128, order=8):
    """Quadrature nodes and masses of the two coordinate marginals."""
    x1, w1 = gauss_legendre_panels(lo[0], hi[0], panels, order)
    x2, w2 = gauss_legendre_panels(lo[1], hi[1], panels, order)
    L = _log_density_grid(m, x1, x2)
    top = np.max(L[np.isfinite(L)])
    D = np.exp(L - top) * w1[:, None] * w2[None, :]
    total = D.sum()
    return (x1, D.sum(axis=1) / total), (x2, D.sum(axis=0) / total)


def auto_box(m: MeasureSpec, mass_tol: float = MASS_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Smallest coordinate box (from marginal tails) missing at most ``mass_tol / 2``."""
    if m.dim != 2:
        raise ValueError("grid transport is two-dimensional")
    if m.kind == "uniform_on_body":
        box = m.body.bounding_box
        if box is None:
            raise ValueError("body has no bounding box")
        return np.array([b[0] for b in box]), np.array([b[1] for b in box])
    if m.kind != "density" or not m.is_probability:
        raise ValueError("grid transport needs a probability density or a bounded body")
    lo, hi = support_box(m.potential, cutoff=60.0)
    share = mass_tol / 8
    out_lo, out_hi = lo.copy(), hi.copy()
    for k, (x, p) in enumerate(_marginal_tails(m, lo, hi)):
        cl = np.cumsum(p)
        cr = np.cumsum(p[::-1])[::-1]
        i = np.searchsorted(cl, share, side="right")
        j = np.nonzero(cr <= share)[0]
        out_lo[k] = x[max(i - 1, 0)]
        out_hi[k] = x[j[0]] if j.size else hi[k]
    return out_lo, out_hi


def box_coverage(m: MeasureSpec, lo, hi) -> float:
    """Fraction of the mass of ``m`` inside the box ``[lo, hi]``."""
    if m.kind == "uniform_on_body":
        if m.body.bounding_box is None:
            return 0.0
        inside = all(lo[k] <= b[0] and b[1] <= hi[k] for k, b in enumerate(m.body.bounding_box))
        return 1.0 if inside else float("nan")
    slo, shi = support_box(m.potential, cutoff=60.0)
    (x1, p1), (x2, p2) = _marginal_tails(m, np.minimum(slo, lo), np.maximum(shi, hi))
    out = p1[(x1 < lo[0]) | (x1 > hi[0])].sum() + p2[(x2 < lo[1]) | (x2 > hi[1])].sum()
    return float(1.0 - out)


def discretize(m: MeasureSpec, box=None, n: int = 64, mass_tol: float = MASS_TOL) -> DiscreteMeasure:
    """Quantise ``m`` on an ``n x n`` grid spanning ``box = (lo, hi)``.

    Weights are the density at the nodes (equal cell volumes), renormalised.
    """
    if not m.is_probability:
        raise ValueError("only probability measures can be discretised")
    if m.dim != 2:
        raise ValueError("grid transport is two-dimensional")
    if n < 3:
        raise ValueError("need at least 3 nodes per axis")
    if box is None:
        lo, hi = auto_box(m, mass_tol)
    else:
        lo, hi = (np.asarray(b, float) for b in box)
        if lo.ndim == 0:
            lo, hi = np.full(2, lo), np.full(2, hi)
    cov = box_coverage(m, lo, hi)
    if not (cov >= 1.0 - mass_tol):
        raise ValueError(f"box covers only {cov:.12g} of the mass (needs >= 1 - {mass_tol:g})")
    x1 = np.linspace(lo[0], hi[0], n)
    x2 = np.linspace(lo[1], hi[1], n)
    L = _log_density_grid(m, x1, x2)
    w = np.exp(L - np.max(L))
    w /= w.sum()
    return DiscreteMeasure(x1, x2, w, label=m.label)


# --------------------------------------------------------------------------
# Sinkhorn


def _kernels(src: DiscreteMeasure, tgt: DiscreteMeasure, eps: float):
    A1 = -((src.x1[:, None] - tgt.x1[None, :]) ** 2) / eps
    A2 = -((src.x2[:, None] - tgt.x2[None, :]) ** 2) / eps
    return A1, A2, np.ascontiguousarray(A1.T), np.ascontiguousarray(A2.T)


def _logw(w):
    with np.errstate(divide="ignore"):
        return np.log(w)


def sinkhorn(src: DiscreteMeasure, tgt: DiscreteMeasure, eps: float,
             max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL,
             init: Optional[tuple] = None, omega: float = OMEGA,
             strict: bool = True) -> Coupling:
    """Log-domain Sinkhorn with over-relaxation.

    Stops when the L1 marginal error (after an exact row update) is below
    ``tol``. Raises ``ConvergenceError`` carrying the last coupling when
    ``max_iter`` is exhausted, unless ``strict`` is False.
    """
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    t0 = time.perf_counter()
    la, lb = _logw(src.weights), _logw(tgt.weights)
    A1, A2, B1, B2 = _kernels(src, tgt, eps)
    if init is None:
        f = np.zeros(src.shape)
        g = np.zeros(tgt.shape)
    else:
        f, g = (np.array(v, float) for v in init)

    def f_update(g):
        return -eps * lse2(lb + g / eps, A1, A2)

    def g_update(f):
        return -eps * lse2(la + f / eps, B1, B2)

    def col_error(f, g):
        gn = g_update(f)
        d = np.where(tgt.weights > 0, (g - gn) / eps, 0.0)
        return float(np.sum(tgt.weights * np.abs(np.expm1(d)))), gn

    err = math.inf
    it = 0
    converged = False
    while it < max_iter:
        w = 1.0 if it < 5 else omega
        f = f + w * (f_update(g) - f)
        err, gn = col_error(f, g)
        g = g + w * (gn - g)
        it += 1
        if not math.isfinite(err):
            raise FloatingPointError("Sinkhorn iterates became non-finite")
        if err < tol:
            f = f_update(g)
            err, _ = col_error(f, g)
            if err < tol:
                converged = True
                break
    else:
        f = f_update(g)
        err, _ = col_error(f, g)
        converged = err < tol
    diag = {"epsilon": eps, "iterations": it, "marginal_error": err,
            "seconds": time.perf_counter() - t0, "converged": converged}
    c = Coupling(src, tgt, f, g, eps, err, it, converged, [diag])
    if strict and not converged:
        raise ConvergenceError(
            f"Sinkhorn did not reach tol={tol:g} at eps={eps:g} within {max_iter} "
            f"iterations (marginal error {err:.3g})", c)
    return c


def default_schedule(eps_start: float = 1.0, eps_end: float = 5e-3, factor: float = 0.5) -> list:
    if not (eps_start >= eps_end > 0 and 0 < factor < 1):
        raise ValueError("invalid epsilon schedule")
    out = []
    e = eps_start
    while e > eps_end * (1 + 1e-12):
        out.append(e)
        e *= factor
    out.append(eps_end)
    return out


def epsilon_schedule_solve(src: DiscreteMeasure, tgt: DiscreteMeasure,
                           eps_list: Sequence[float] | None = None,
                           max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL,
                           omega: float = OMEGA, strict: bool = True,
                           progress=None) -> Coupling:
    """Warm-started continuation over a strictly decreasing epsilon list."""
    eps_list = list(default_schedule() if eps_list is None else eps_list)
    if not eps_list:
        raise ValueError("empty epsilon schedule")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("epsilon schedule must be strictly decreasing")
    init = None
    diags = []
    c = None
    for eps in eps_list:
        try:
            c = sinkhorn(src, tgt, eps, max_iter=max_iter, tol=tol, init=init,
                         omega=omega, strict=strict)
        except ConvergenceError as exc:
            c0 = exc.coupling
            diags.extend(c0.diagnostics)
            exc.coupling = Coupling(c0.src, c0.tgt, c0.f, c0.g, c0.epsilon, c0.marginal_error,
                                    c0.iterations, False, diags)
            raise
        diags.extend(c.diagnostics)
        if progress is not None:
            progress(c.diagnostics[0])
        init = (c.f, c.g)
    return Coupling(c.src, c.tgt, c.f, c.g, c.epsilon, c.marginal_error,
                    sum(d["iterations"] for d in diags), c.converged, diags)


# --------------------------------------------------------------------------
# maps


@dataclass(frozen=True, eq=False)
class GridMap:
    """Barycentric map sampled on the source grid, plus its smooth extension."""

    coupling: Coupling
    values: np.ndarray  # (n1, n2, 2)
    map: TransportMap
    margin: int = MARGIN

    @property
    def src(self) -> DiscreteMeasure:
        return self.coupling.src

    def grid_jacobian(self) -> np.ndarray:
        """Central differences (one-sided at the box boundary), shape (n1, n2, 2, 2)."""
        s = self.src
        J = np.empty(self.values.shape[:2] + (2, 2))
        for k in range(2):
            J[..., k, 0] = np.gradient(self.values[..., k], s.x1, axis=0)
            J[..., k, 1] = np.gradient(self.values[..., k], s.x2, axis=1)
        return J

    def interior(self) -> tuple[slice, slice]:
        m = self.margin
        n1, n2 = self.values.shape[:2]
        return slice(m, n1 - m), slice(m, n2 - m)

    def interior_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        s = self.src
        X1, X2 = np.meshgrid(s.x1, s.x2, indexing="ij")
        i, j = self.interior()
        pts = np.stack([X1[i, j].ravel(), X2[i, j].ravel()], axis=1)
        vals = self.values[i, j].reshape(-1, 2)
        return pts, vals

    def potential_grid(self) -> np.ndarray:
        s = self.src
        X1, X2 = np.meshgrid(s.x1, s.x2, indexing="ij")
        return 0.5 * (X1**2 + X2**2 - self.coupling.f)

    def to_csv(self) -> str:
        s = self.src
        J = self.grid_jacobian()
        Phi = self.potential_grid()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x1", "x2", "T1", "T2", "J11", "J12", "J21", "J22", "f", "Phi"])
        for i1 in range(s.x1.size):
            for i2 in range(s.x2.size):
                w.writerow([repr(float(v)) for v in (
                    s.x1[i1], s.x2[i2], *self.values[i1, i2], *J[i1, i2].ravel(),
                    self.coupling.f[i1, i2], Phi[i1, i2])])
        return buf.getvalue()


def barycentric_map(c: Coupling, margin: int = MARGIN) -> GridMap:
    """Conditional-mean map of the plan, on the grid and at arbitrary points."""
    if not c.converged:
        raise ValueError("coupling did not converge; refusing to extract a map")
    s, t, eps = c.src, c.tgt, c.epsilon
    if np.any(s.weights <= 0):
        raise ValueError("source node with vanishing row mass")
    A1, A2, _, _ = _kernels(s, t, eps)
    lb = _logw(t.weights) + c.g / eps
    base = lse2(lb, A1, A2)
    s1 = t.x1.min() - 1.0
    s2 = t.x2.min() - 1.0
    m1 = np.exp(lse2(lb + np.log(t.x1 - s1)[:, None], A1, A2) - base) + s1
    m2 = np.exp(lse2(lb + np.log(t.x2 - s2)[None, :], A1, A2) - base) + s2
    values = np.stack([m1, m2], axis=-1)

    Y = t.nodes
    logb = lb.ravel()

    def _weights(x):
        x = np.atleast_2d(np.asarray(x, float))
        d2 = np.sum(x * x, 1)[:, None] - 2 * x @ Y.T + np.sum(Y * Y, 1)[None]
        return logb[None] - d2 / eps

    def _chunks(x, fn):
        x = np.atleast_2d(np.asarray(x, float))
        return np.concatenate([fn(x[k:k + 256]) for k in range(0, x.shape[0], 256)], axis=0) \
            if x.shape[0] else np.zeros((0,) + fn(np.zeros((1, 2))).shape[1:])

    def forward(x):
        def fn(xc):
            L = _weights(xc)
            P = np.exp(L - logsumexp(L, axis=1, keepdims=True))
            return P @ Y
        return _chunks(x, fn)

    def jacobian(x):
        # derivative of the conditional mean: (2/eps) Cov(y | x)
        def fn(xc):
            L = _weights(xc)
            P = np.exp(L - logsumexp(L, axis=1, keepdims=True))
            mean = P @ Y
            second = np.einsum("nj,ja,jb->nab", P, Y, Y)
            return (2.0 / eps) * (second - np.einsum("na,nb->nab", mean, mean))
        return _chunks(x, fn)

    def potential(x):
        def fn(xc):
            f = -eps * logsumexp(_weights(xc), axis=1)
            return 0.5 * (np.sum(xc * xc, 1) - f)
        return _chunks(x, fn)

    tm = TransportMap(forward, jacobian, "entropic",
                      ((float(s.x1[0]), float(s.x2[0])), (float(s.x1[-1]), float(s.x2[-1]))),
                      dim=2, potential=potential,
                      meta={"epsilon": eps, "h": s.h, "n": list(s.shape),
                            "marginal_error": c.marginal_error})
    return GridMap(c, values, tm, margin)


def solve_pair(source: MeasureSpec, target: MeasureSpec, n: int = 64,
               eps_list: Sequence[float] | None = None, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER, src_box=None, tgt_box=None,
               progress=None) -> GridMap:
    """Discretise both measures, run the epsilon schedule and extract the map."""
    src = discretize(source, src_box, n)
    tgt = discretize(target, tgt_box, n)
    c = epsilon_schedule_solve(src, tgt, eps_list, max_iter=max_iter, tol=tol, progress=progress)
    return barycentric_map(c)
