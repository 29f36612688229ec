"""Heat-flow transport driven by the Ornstein-Uhlenbeck semigroup.

With reference measure the standard Gaussian and target ``e^{-U} dgamma``
(normalised), the flow ``dS/dt = grad U_t(S)`` with
``U_t = -log P_t e^{-U}`` carries the target to the Gaussian; its inverse
``T = S_inf^{-1}`` pushes the Gaussian onto the target.

``P_t f(x) = E f(x e^{-t} + sqrt(1 - e^{-2t}) Y)`` is evaluated with
Gauss-Hermite quadrature. Derivatives of ``U_t`` come from differentiating
under the integral:

    grad U_t  = e^{-t} E_w[grad U]
    D^2 U_t   = e^{-2t} (E_w[D^2 U] - Cov_w[grad U])

where ``E_w`` is the quadrature average reweighted by ``e^{-U}``.
"""
from __future__ import annotations

import csv
import io
import math
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline, RegularGridInterpolator
from scipy.special import logsumexp

from ._quad import hermite_nodes
from . import measures as M
from .report import ReportEntry, make_entry
from .transport1d import TransportMap

GH_ORDER = 64
T_MAX = 20.0
DT = 1e-2
FLOW_TOL = 1e-8
PROBE_TOL = 1e-6
MAX_HALVINGS = 10
UNDERFLOW_LOG = -700.0

_WHITELIST = {"quadratic", "power", "quartic", "constant"}


@dataclass(frozen=True)
class _Separable:
    """``U(z) = sum_k c2_k z_k^2 / 2 + c4_k z_k^4 + const``."""

    c2: np.ndarray
    c4: np.ndarray
    const: float = 0.0

    def value(self, z):
        z2 = z * z
        return np.sum(z2 * (0.5 * self.c2 + self.c4 * z2), axis=-1) + self.const

    def grad(self, z):
        return z * (self.c2 + 4 * self.c4 * z * z)

    def hess_diag(self, z):
        return self.c2 + 12 * self.c4 * z * z


@lru_cache(maxsize=64)
def check_whitelist(U: M.Potential) -> _Separable:
    """Reject potentials outside the coordinatewise quadratic / even-quartic
    families; return their polynomial coefficients."""
    d = U.dim
    c2 = np.zeros(d)
    c4 = np.zeros(d)
    const = 0.0

    def visit(p):
        nonlocal const
        if p.family == "sum":
            for c in p.components:
                visit(c)
            return
        fam = p.family
        if fam == "quadratic":
            P = np.asarray(p.params["precision"], float)
            if not np.allclose(P, np.diag(np.diag(P))):
                raise ValueError("quadratic part must act coordinatewise")
            c2[:] += np.diag(P)
            const += p.params.get("const", 0.0)
        elif fam == "power" and p.params.get("power") in (2, 4):
            if p.params["power"] == 2:
                c2[:] += 2 * p.params["coef"]
            else:
                c4[:] += p.params["coef"]
        elif fam == "quartic":
            c2[:] += 1.0 / p.params["sigma"] ** 2
            c4[:] += p.params["lambda"]
        elif fam == "constant":
            const += p.params["c"]
        else:
            raise ValueError(f"potential family {fam!r} is not supported by the heat flow")
        const += p.params.get("shift", 0.0)

    visit(U)
    if np.any(c4 < 0) or np.any((c4 == 0) & (c2 <= -1)):
        raise ValueError("tilt makes e^{-U} non-integrable against the Gaussian")
    return _Separable(c2, c4, const)


def target_tilt(target: M.MeasureSpec) -> M.Potential:
    """``U = W - |x|^2/2`` for a whitelisted target ``e^{-W}`` (constants dropped)."""
    if target.kind != "density":
        raise ValueError("heat flow needs a density target")
    W = target.potential
    d = W.dim
    fam = W.family
    if fam == "quadratic":
        P = np.asarray(W.params["precision"]) - np.eye(d)
        U = M.quadratic(P)
    elif fam == "quartic":
        s = W.params["sigma"]
        U = M.add_potentials(M.quadratic(np.full(d, 1.0 / s**2 - 1.0)),
                             M.power_sum(d, W.params["lambda"]))
    else:
        raise ValueError(f"unsupported target family {fam!r}")
    check_whitelist(U)
    return U


# --------------------------------------------------------------------------
# quadrature


def _mehler_points(x, t, order):
    """Quadrature points ``x e^{-t} + s y`` with shape (n, m^d, d) and log-weights."""
    x = np.asarray(x, float)
    y, w = hermite_nodes(order)
    d = x.shape[1]
    if d == 1:
        Y = y[:, None]
        lw = np.log(w)
    else:
        grids = np.meshgrid(*([y] * d), indexing="ij")
        Y = np.stack([g.ravel() for g in grids], axis=1)
        lws = np.meshgrid(*([np.log(w)] * d), indexing="ij")
        lw = sum(l.ravel() for l in lws)
    s = math.sqrt(-math.expm1(-2 * t))
    Z = x[:, None, :] * math.exp(-t) + s * Y[None]
    return Z, lw


def _as2d(x, dim):
    x = np.asarray(x, float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1 or x.ndim == 1):
        return x.reshape(-1, 1), x.shape
    return x.reshape(-1, dim), x.shape[:-1]


def ou_apply(hfun: Callable[[np.ndarray], np.ndarray], t: float, x, order: int = GH_ORDER,
             dim: int = 1) -> np.ndarray:
    """Mehler formula ``P_t h(x)`` by Gauss-Hermite quadrature.

    ``hfun`` receives points shaped (N, dim) (or (N,) when dim == 1).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    pts, lead = _as2d(x, dim)
    if t == 0:
        arg = pts[:, 0] if dim == 1 else pts
        return np.asarray(hfun(arg), float).reshape(lead)
    Z, lw = _mehler_points(pts, t, order)
    flat = Z.reshape(-1, dim)
    vals = np.asarray(hfun(flat[:, 0] if dim == 1 else flat), float).reshape(Z.shape[:2])
    return (vals @ np.exp(lw)).reshape(lead)


def _moments_1d(c2, c4, const, x, t, order, need_hess):
    y, w = hermite_nodes(order)
    s = math.sqrt(-math.expm1(-2 * t))
    z = x[:, None] * math.exp(-t) + s * y[None]      # (n, m)
    z2 = z * z
    L = np.log(w)[None] - (z2 * (0.5 * c2 + c4 * z2) + const)
    mx = L.max(axis=1, keepdims=True)
    E = np.exp(L - mx)
    tot = E.sum(axis=1, keepdims=True)
    lse = (mx + np.log(tot))[:, 0]
    if np.any(lse < UNDERFLOW_LOG):
        raise FloatingPointError("P_t e^{-U} underflows at a query point")
    W = E / tot
    g = z * (c2 + 4 * c4 * z2)
    mean = np.sum(W * g, axis=1)
    if not need_hess:
        return lse, mean, None
    var = np.sum(W * (g - mean[:, None]) ** 2, axis=1)
    return lse, mean, np.sum(W * (c2 + 12 * c4 * z2), axis=1) - var


def _moments(U: M.Potential, t: float, pts: np.ndarray, order: int, need_hess: bool):
    """Reweighted averages at each point: log P_t e^{-U}, E_w[grad U], and
    (optionally) E_w[D^2 U] - Cov_w[grad U].

    Whitelisted tilts act coordinatewise and the Gaussian is a product, so
    the Mehler integral factorises into one-dimensional quadratures and the
    off-diagonal covariances vanish.
    """
    sep = check_whitelist(U)
    n, d = pts.shape
    lse = np.zeros(n)
    mean = np.empty((n, d))
    hess = np.zeros((n, d, d)) if need_hess else None
    for k in range(d):
        lk, mk, hk = _moments_1d(sep.c2[k], sep.c4[k], sep.const if k == 0 else 0.0,
                                 pts[:, k], t, order, need_hess)
        lse += lk
        mean[:, k] = mk
        if need_hess:
            hess[:, k, k] = hk
    return lse, mean, hess


def log_ou(U: M.Potential, t: float, x, order: int = GH_ORDER) -> np.ndarray:
    """``log P_t(e^{-U})(x)``."""
    pts, lead = _as2d(x, U.dim)
    if t == 0:
        return -check_whitelist(U).value(pts).reshape(lead)
    return _moments(U, t, pts, order, False)[0].reshape(lead)


def velocity(U: M.Potential, t: float, x, order: int = GH_ORDER) -> np.ndarray:
    """``-grad log P_t(e^{-U})(x) = grad U_t(x)``."""
    pts, lead = _as2d(x, U.dim)
    d = U.dim
    v = _field_and_jac(U, t, pts, order, need_hess=False)[0]
    return v.reshape(lead) if d == 1 else v.reshape(lead + (d,))


def hessian_Ut(U: M.Potential, t: float, x, order: int = GH_ORDER) -> np.ndarray:
    """``D^2 U_t(x)``, shape (n, d, d)."""
    pts, _ = _as2d(x, U.dim)
    return _field_and_jac(U, t, pts, order)[1]


def _field_and_jac(U, t, x, order, need_hess=True):
    """Velocity and its Jacobian at points x (n, d)."""
    if t == 0:
        sep = check_whitelist(U)
        H = None
        if need_hess:
            H = np.zeros((x.shape[0], x.shape[1], x.shape[1]))
            idx = np.arange(x.shape[1])
            H[:, idx, idx] = sep.hess_diag(x)
        return sep.grad(x), H
    _, mean, hess = _moments(U, t, x, order, need_hess)
    return math.exp(-t) * mean, (None if hess is None else math.exp(-2 * t) * hess)


# --------------------------------------------------------------------------
# flow


@dataclass(eq=False)
class FlowState:
    t: float
    seeds: np.ndarray          # (n, d)
    positions: np.ndarray      # (n, d)
    jacobians: np.ndarray      # (n, d, d), DS on seeds
    step: float
    quadrature_order: int
    times: list = field(default_factory=list)
    history: list = field(default_factory=list)      # positions at recorded times
    velocities: list = field(default_factory=list)   # velocities at recorded times
    halvings: int = 0
    residual_velocity: float = math.nan
    U: Optional[M.Potential] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.seeds.shape[1]
        w.writerow(["t", "seed"] + [f"position{k}" for k in range(d)]
                   + [f"velocity{k}" for k in range(d)])
        for t, P, V in zip(self.times, self.history, self.velocities):
            for i in range(P.shape[0]):
                w.writerow([repr(float(t)), i] + [repr(float(v)) for v in P[i]]
                           + [repr(float(v)) for v in V[i]])
        return buf.getvalue()


def integrate_flow(U: M.Potential, seeds, t_max: float = T_MAX, dt: float = DT,
                   order: int = GH_ORDER, n_records: int = 20,
                   progress: Optional[Callable[[float], None]] = None) -> FlowState:
    """Classical RK4 for ``(S, DS)`` from ``S_0 = Id`` up to ``t_max``.

    In 1-D the seed order must be preserved after every step; a violating
    step is retried with half the step size (at most ``MAX_HALVINGS`` times).
    """
    check_whitelist(U)
    d = U.dim
    X0, _ = _as2d(seeds, d)
    if d == 1:
        order_idx = np.argsort(X0[:, 0], kind="stable")
        X0 = X0[order_idx]
    if not np.all(np.isfinite(U.f(X0))):
        raise ValueError("seeds outside the potential's domain")
    if t_max <= 0 or dt <= 0:
        raise ValueError("t_max and dt must be positive")
    n = X0.shape[0]
    S = X0.copy()
    J = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    t = 0.0
    n_steps = int(math.ceil(t_max / dt - 1e-9))
    h0 = t_max / n_steps
    rec_every = max(1, n_steps // max(n_records, 1))
    times, hist, vels = [], [], []

    def rhs(tt, S, J):
        v, H = _field_and_jac(U, tt, S, order)
        return v, H @ J

    def record(tt, S):
        times.append(tt)
        hist.append(S.copy())
        vels.append(_field_and_jac(U, tt, S, order)[0])

    record(0.0, S)
    halvings = 0
    step_no = 0
    while step_no < n_steps:
        h = h0
        sub = 1
        for attempt in range(MAX_HALVINGS + 1):
            Sn, Jn = S, J
            tt = t
            for _ in range(sub):
                k1, l1 = rhs(tt, Sn, Jn)
                k2, l2 = rhs(tt + h / 2, Sn + h / 2 * k1, Jn + h / 2 * l1)
                k3, l3 = rhs(tt + h / 2, Sn + h / 2 * k2, Jn + h / 2 * l2)
                k4, l4 = rhs(tt + h, Sn + h * k3, Jn + h * l3)
                Sn = Sn + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                Jn = Jn + h / 6 * (l1 + 2 * l2 + 2 * l3 + l4)
                tt += h
            ok = np.all(np.isfinite(Sn))
            if d == 1 and ok:
                ok = bool(np.all(np.diff(Sn[:, 0]) > 0))
            if ok:
                break
            h /= 2
            sub *= 2
            halvings += 1
        else:
            raise FloatingPointError("flow step rejected after 10 step halvings")
        S, J = Sn, Jn
        step_no += 1
        t = step_no * h0
        if step_no % rec_every == 0 or step_no == n_steps:
            record(t, S)
            if progress is not None:
                progress(t)
    resid = float(np.max(np.abs(vels[-1])))
    return FlowState(t, X0, S, J, h0, order, times, hist, vels, halvings, resid, U)


def inverse_flow_map(fs: FlowState) -> TransportMap:
    """``T = S^{-1}`` from the integrated flow (provenance ``heatflow``)."""
    d = fs.seeds.shape[1]
    if d == 1:
        xs = fs.seeds[:, 0]
        Sx = fs.positions[:, 0]
        dS = fs.jacobians[:, 0, 0]
        if not np.all(np.diff(Sx) > 0):
            raise ValueError("flow map is not strictly increasing on the seeds")
        spline = CubicHermiteSpline(Sx, xs, 1.0 / dS)
        dspline = spline.derivative()
        fwd = CubicHermiteSpline(xs, Sx, dS)

        def forward(y):
            y = np.asarray(y, float)
            if np.any((y < Sx[0]) | (y > Sx[-1])):
                raise ValueError("query outside the seed hull")
            return spline(y)

        def jacobian(y):
            return dspline(np.asarray(y, float))

        return TransportMap(forward, jacobian, "heatflow", (float(Sx[0]), float(Sx[-1])),
                            dim=1, inverse=fwd,
                            meta={"t_max": fs.t, "dt": fs.step, "order": fs.quadrature_order,
                                  "residual_velocity": fs.residual_velocity})
    if d != 2:
        raise ValueError("heat-flow maps are supported in d <= 2")
    return _inverse_2d(fs)


def _inverse_2d(fs: FlowState) -> TransportMap:
    seeds = fs.seeds
    ax1 = np.unique(seeds[:, 0])
    ax2 = np.unique(seeds[:, 1])
    if ax1.size * ax2.size != seeds.shape[0]:
        raise ValueError("2-D inversion needs seeds on a tensor grid")
    order = np.lexsort((seeds[:, 1], seeds[:, 0]))
    shape = (ax1.size, ax2.size)
    S = fs.positions[order].reshape(shape + (2,))
    J = fs.jacobians[order].reshape(shape + (2, 2))
    interp_S = RegularGridInterpolator((ax1, ax2), S, method="cubic")
    interp_J = RegularGridInterpolator((ax1, ax2), J.reshape(shape + (4,)), method="linear")
    lo = np.array([ax1[0], ax2[0]])
    hi = np.array([ax1[-1], ax2[-1]])

    def forward(y, max_iter=50):
        y = np.atleast_2d(np.asarray(y, float))
        x = y / np.maximum(np.abs(J[shape[0] // 2, shape[1] // 2]).diagonal(), 1e-12)
        x = np.clip(x, lo, hi)
        failed = np.zeros(y.shape[0], bool)
        for i in range(y.shape[0]):
            xi = x[i]
            r = interp_S(xi[None])[0] - y[i]
            for _ in range(max_iter):
                if np.linalg.norm(r) < 1e-12:
                    break
                Ji = interp_J(xi[None])[0].reshape(2, 2)
                step = np.linalg.solve(Ji, r)
                lam = 1.0
                while lam > 1e-4:
                    cand = np.clip(xi - lam * step, lo, hi)
                    rc = interp_S(cand[None])[0] - y[i]
                    if np.linalg.norm(rc) < np.linalg.norm(r):
                        xi, r = cand, rc
                        break
                    lam /= 2
                else:
                    break
            failed[i] = np.linalg.norm(r) > 1e-8
            x[i] = np.where(failed[i], np.nan, xi)
        return x

    def jacobian(y):
        x = forward(y)
        Js = interp_J(np.nan_to_num(x)).reshape(-1, 2, 2)
        out = np.linalg.inv(Js)
        out[~np.all(np.isfinite(x), axis=1)] = np.nan
        return out

    return TransportMap(forward, jacobian, "heatflow", (tuple(S.min((0, 1))), tuple(S.max((0, 1)))),
                        dim=2, meta={"t_max": fs.t, "dt": fs.step, "order": fs.quadrature_order})


def logconcavity_probe(U: M.Potential, t_grid, x_grid, order: int = GH_ORDER,
                       tol: float = PROBE_TOL, name: str = "logconcavity_probe") -> ReportEntry:
    """Smallest eigenvalue of ``D^2 U_t`` over ``t_grid x x_grid``."""
    check_whitelist(U)
    audit = np.min(np.linalg.eigvalsh(U.d2f(_as2d(x_grid, U.dim)[0]))[:, 0])
    pts, _ = _as2d(x_grid, U.dim)
    lows = []
    for t in np.asarray(t_grid, float):
        H = hessian_Ut(U, float(t), pts, order)
        lows.append(float(np.min(np.linalg.eigvalsh(H)[:, 0])))
    low = min(lows)
    return make_entry(name, "logconcavity-probe", low, 0.0, tol, direction="lower",
                      tol_mode="abs",
                      inputs={"U": U.family, "params": U.params, "t": list(map(float, t_grid)),
                              "n_x": int(pts.shape[0]), "order": order},
                      details={"per_t_min": lows, "U_convexity_audit": float(audit)})


def pushforward_residual(fs: FlowState, lo: float, hi: float, n_quad: int = 4000) -> float:
    """1-D consistency: at every recorded time, the CDF of ``nu_t`` at ``S_t(x)``
    must equal the CDF of ``nu`` at ``x``. Returns the largest discrepancy."""
    if fs.seeds.shape[1] != 1:
        raise ValueError("push-forward residual is one-dimensional")
    U = fs.U
    xs = fs.seeds[:, 0]
    grid = np.linspace(lo, hi, n_quad + 1)

    def cdf_on(logdens, pts):
        vals = np.exp(logdens - logdens.max())
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(grid))])
        cum /= cum[-1]
        return np.interp(pts, grid, cum)

    phi = -0.5 * grid**2
    F0 = cdf_on(log_ou(U, 0.0, grid) + phi, xs)
    worst = 0.0
    for t, P in zip(fs.times, fs.history):
        ld = log_ou(U, t, grid, fs.quadrature_order) + phi
        worst = max(worst, float(np.max(np.abs(cdf_on(ld, P[:, 0]) - F0))))
    return worst
