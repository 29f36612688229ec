"""Certification diagnostics for transport maps.

Each ``*_check`` returns a :class:`ReportEntry`; the estimators
(``lipschitz_pairwise``, ``jacobian_opnorm_sup``, ``second_diff_quotient``)
return plain numbers or arrays.
"""
from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from . import grid_ot as G
from . import measures as M
from ._quad import gauss_legendre_panels
from .report import ReportEntry, make_entry, status_entry
from .transport1d import TransportMap, law_of

N_RANDOM_DIRECTIONS = 8


# --------------------------------------------------------------------------
# samplers and directions


def interval_sampler(lo: float, hi: float) -> Callable:
    def draw(rng, n):
        return rng.uniform(lo, hi, size=n)
    return draw


def box_sampler(lo, hi) -> Callable:
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)

    def draw(rng, n):
        return rng.uniform(lo, hi, size=(n, lo.size))
    return draw


def node_sampler(points) -> Callable:
    pts = np.asarray(points, float)

    def draw(rng, n):
        return pts[rng.integers(0, pts.shape[0], size=n)]
    return draw


def directions(d: int, seed: int = 0, n_random: int = N_RANDOM_DIRECTIONS) -> np.ndarray:
    """Coordinate basis followed by ``n_random`` seeded random unit vectors."""
    if d == 1:
        return np.ones((1, 1))
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((n_random, d))
    R /= np.linalg.norm(R, axis=1, keepdims=True)
    return np.vstack([np.eye(d), R])


# --------------------------------------------------------------------------
# Lipschitz estimators


def _quotients(P, V, i, j):
    P = P.reshape(P.shape[0], -1)
    V = V.reshape(V.shape[0], -1)
    num = np.linalg.norm(V[i] - V[j], axis=1)
    den = np.linalg.norm(P[i] - P[j], axis=1)
    ok = den > 0
    return num[ok] / den[ok], int(np.sum(~ok))


def lipschitz_pairwise(T: TransportMap, sampler: Callable, n_pairs: int = 100_000,
                       seed: int = 0, return_skipped: bool = False):
    """Largest ``|T(x) - T(y)| / |x - y|`` over sampled pairs (a lower bound)."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be positive")
    rng = np.random.default_rng(seed)
    X = np.asarray(sampler(rng, 2 * n_pairs), float)
    flat = X.reshape(2 * n_pairs, -1)
    uniq, inv = np.unique(flat, axis=0, return_inverse=True)
    inv = inv.ravel()
    arg = uniq[:, 0] if T.dim == 1 else uniq
    vals = np.asarray(T.forward(arg), float).reshape(uniq.shape[0], -1)
    q, skipped = _quotients(uniq, vals, inv[:n_pairs], inv[n_pairs:])
    best = float(q.max()) if q.size else math.nan
    return (best, skipped) if return_skipped else best


def grid_pairwise_lipschitz(gm: "G.GridMap", n_pairs: int = 100_000, seed: int = 0,
                            local_span: int = 3) -> float:
    """Pairwise quotient on interior grid nodes of an entropic map.

    Half the pairs are uniform over the interior nodes; the other half pair
    a node with a neighbour at most ``local_span`` cells away, so that the
    estimate sees the local slope as well as global spread.
    """
    rng = np.random.default_rng(seed)
    i1, i2 = gm.interior()
    vals = gm.values[i1, i2]
    n1, n2 = vals.shape[:2]
    s = gm.src
    X1, X2 = np.meshgrid(s.x1[i1], s.x2[i2], indexing="ij")
    P = np.stack([X1, X2], -1).reshape(-1, 2)
    V = vals.reshape(-1, 2)
    half = n_pairs // 2
    a = rng.integers(0, P.shape[0], size=n_pairs - half)
    b = rng.integers(0, P.shape[0], size=n_pairs - half)
    ca = rng.integers(0, n1, size=half)
    cb = rng.integers(0, n2, size=half)
    off = rng.integers(-local_span, local_span + 1, size=(half, 2))
    da = np.clip(ca + off[:, 0], 0, n1 - 1)
    db = np.clip(cb + off[:, 1], 0, n2 - 1)
    i = np.concatenate([a, ca * n2 + cb])
    j = np.concatenate([b, da * n2 + db])
    q, _ = _quotients(P, V, i, j)
    return float(q.max())


def jacobian_opnorm_sup(T, grid=None) -> float:
    """Max spectral norm of the Jacobian over ``grid``.

    For an entropic :class:`GridMap` the grid is its own node set and the
    Jacobian comes from central differences, excluding the boundary margin.
    """
    if isinstance(T, G.GridMap):
        i1, i2 = T.interior()
        J = T.grid_jacobian()[i1, i2].reshape(-1, 2, 2)
    else:
        if grid is None:
            raise ValueError("grid required")
        J = np.asarray(T.jacobian(np.asarray(grid, float)), float)
        if T.dim == 1:
            J = J.reshape(-1, 1, 1)
    if not np.all(np.isfinite(J)):
        raise ValueError("non-finite Jacobian entry")
    if J.shape[-1] == 1:
        return float(np.max(np.abs(J)))
    return float(np.max(np.linalg.norm(J, ord=2, axis=(-2, -1))))


def caffarelli_check(T: TransportMap, grid, K: float = 1.0, tol: float = 1e-6,
                     name: str = "caffarelli_sup_jacobian") -> ReportEntry:
    """``sup |DT| <= 1/sqrt(K)`` for a standard Gaussian source and D^2 W >= K."""
    val = jacobian_opnorm_sup(T, grid)
    g = np.asarray(grid, float)
    return make_entry(name, "contraction", val, 1.0 / math.sqrt(K), tol, tol_mode="abs",
                      inputs={"map": T.meta, "grid": [float(g.min()), float(g.max()), int(g.size)],
                              "K": K})


# --------------------------------------------------------------------------
# second differences


def second_diff_quotient(Phi: Callable, e, t: float, grid) -> np.ndarray:
    """Samples of ``(Phi(x+te) + Phi(x-te) - 2 Phi(x)) / t^2``."""
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.asarray(grid, float)
    e = np.asarray(e, float)
    if e.size == 1 and (x.ndim == 1):
        step = t * float(e.ravel()[0])
        vals = Phi(x + step) + Phi(x - step) - 2 * Phi(x)
    else:
        e = e / np.linalg.norm(e)
        vals = Phi(x + t * e) + Phi(x - t * e) - 2 * Phi(x)
    out = np.asarray(vals, float) / t**2
    if not np.all(np.isfinite(out)):
        raise ValueError("potential evaluated outside its domain")
    return out


def incremental_decay_check(Phi: Callable, e, t: float, x_list, decay_tol: float = 0.25,
                            linear_tol: float = 1e-8, name: str = "incremental_decay") -> ReportEntry:
    """Decay of ``delta_2 Phi`` along ``x_list`` (sorted by |x|).

    Constant quotients (linear maps) are outside the lemma's setting and give
    ``not_applicable``. Decay is confirmed when the tail is non-increasing
    and the last value is at most ``decay_tol`` times the largest one;
    otherwise the entry is ``inconclusive`` rather than a failure.
    """
    x = np.asarray(x_list, float)
    order = np.argsort(np.abs(x), kind="stable")
    x = x[order]
    q = second_diff_quotient(Phi, e, t, x) * t**2
    inputs = {"t": t, "x": [float(x.min()), float(x.max()), int(x.size)]}
    details = {"first": float(q[0]), "last": float(q[-1]), "peak": float(q.max())}
    if np.max(np.abs(q - q[0])) <= linear_tol * max(abs(q[0]), 1e-300):
        return status_entry(name, "incremental-decay", "not_applicable", inputs=inputs,
                            details={**details, "reason": "constant second difference"})
    peak = float(q.max())
    ratio = float(q[-1] / peak) if peak > 0 else 0.0
    k = int(np.argmax(q))
    tail = q[k:]
    monotone = bool(np.all(np.diff(tail) <= 1e-12 * peak))
    status = "pass" if (ratio <= decay_tol and monotone) else "inconclusive"
    return make_entry(name, "incremental-decay", ratio, decay_tol, 0.0, inputs=inputs,
                      details={**details, "tail_monotone": monotone}, status=status)


def _audit_modulus(pot: M.Potential, x_grid, y_vals, kind: str):
    """sup (kind='upper') or inf (kind='lower') over x of the second difference
    of ``pot`` at each |y| in ``y_vals`` (1-D)."""
    x = np.asarray(x_grid, float)
    out = []
    for y in y_vals:
        vals = pot.f((x + y)[:, None]) + pot.f((x - y)[:, None]) - 2 * pot.f(x[:, None])
        out.append(float(vals.max() if kind == "upper" else vals.min()))
    return np.array(out)


def holder_modulus_check(Phi: Callable, A_p: float, p: float, A_q: float, q: float, t_list,
                         x_grid, V: Optional[M.Potential] = None,
                         W: Optional[M.Potential] = None, audit_grid=None,
                         tol: float = 1e-8, name: str = "holder_modulus") -> ReportEntry:
    """Max of ``delta_2 Phi(x) / t^(1+alpha)`` against ``2 (A_p/A_q)^(1/(q+1))``,
    ``alpha = (p+1)/(q+1)``, after auditing the declared moduli."""
    alpha = (p + 1) / (q + 1)
    bound = 2 * (A_p / A_q) ** (1 / (q + 1))
    ts = np.asarray(t_list, float)
    inputs = {"A_p": A_p, "p": p, "A_q": A_q, "q": q, "t": ts}
    audit = {}
    if V is not None or W is not None:
        ag = np.linspace(-4, 4, 801) if audit_grid is None else np.asarray(audit_grid, float)
        ys = np.unique(np.concatenate([ts, np.linspace(0.05, 2.0, 40)]))
        if V is not None:
            up = _audit_modulus(V, ag, ys, "upper")
            slack = A_p * ys ** (p + 1) * (1 + 1e-10) + 1e-12 - up
            audit["V_min_slack"] = float(slack.min())
        if W is not None:
            lo = _audit_modulus(W, ag, ys, "lower")
            slack = lo - A_q * ys ** (q + 1) * (1 - 1e-10) + 1e-12
            audit["W_min_slack"] = float(slack.min())
        if min(audit.values()) < 0:
            return status_entry(name, "holder-modulus", "precondition_failed", inputs=inputs,
                                details={**audit, "bound": bound})
    x = np.asarray(x_grid, float)
    per_t = []
    for t in ts:
        d2 = second_diff_quotient(Phi, 1.0, float(t), x) * t**2
        per_t.append(float(np.max(d2) / t ** (1 + alpha)))
    return make_entry(name, "holder-modulus", max(per_t), bound, tol, inputs=inputs,
                      details={"alpha": alpha, "per_t": per_t, **audit})


def ms_modulus_check(T: TransportMap, delta: Callable, pair_sampler: Callable,
                     n_pairs: int = 20_000, seed: int = 0,
                     delta_inv: Optional[Callable] = None, delta_range: float = 1e6,
                     W: Optional[M.Potential] = None, V: Optional[M.Potential] = None,
                     audit_grid=None, name: str = "ms_modulus") -> ReportEntry:
    """Max over pairs of ``|T(x) - T(y)| - 8 delta^{-1}(4 |x-y|^2)``; pass iff <= 0."""
    inputs = {"map": T.meta, "n_pairs": n_pairs}
    audit = {}
    if V is not None or W is not None:
        ag = np.linspace(-4, 4, 801) if audit_grid is None else np.asarray(audit_grid, float)
        ys = np.linspace(0.05, 2.0, 40)
        if V is not None:
            audit["V_min_slack"] = float(np.min(ys**2 * (1 + 1e-10) + 1e-12
                                                - _audit_modulus(V, ag, ys, "upper")))
        if W is not None:
            dl = np.asarray(delta(ys), float)
            audit["W_min_slack"] = float(np.min(_audit_modulus(W, ag, ys, "lower") - dl * (1 - 1e-10)
                                                + 1e-12))
        if min(audit.values()) < 0:
            return status_entry(name, "ms-modulus", "precondition_failed", inputs=inputs,
                                seed=seed, details=audit)
    if delta_inv is None:
        def delta_inv(v):
            v = np.atleast_1d(np.asarray(v, float))
            out = np.empty_like(v)
            for k, vk in enumerate(v):
                if vk <= 0:
                    out[k] = 0.0
                    continue
                hi = 1.0
                while float(delta(hi)) < vk:
                    hi *= 2
                    if hi > delta_range:
                        raise ValueError("delta inverse outside the audited range")
                out[k] = optimize.brentq(lambda r: float(delta(r)) - vk, 0.0, hi, xtol=1e-14)
            return out
    rng = np.random.default_rng(seed)
    X = np.asarray(pair_sampler(rng, 2 * n_pairs), float)
    TX = np.asarray(T.forward(X), float)
    X = X.reshape(2 * n_pairs, -1)
    TX = TX.reshape(2 * n_pairs, -1)
    dx = np.linalg.norm(X[:n_pairs] - X[n_pairs:], axis=1)
    dt = np.linalg.norm(TX[:n_pairs] - TX[n_pairs:], axis=1)
    ok = dx > 0
    gap = dt[ok] - 8 * delta_inv(4 * dx[ok] ** 2)
    return make_entry(name, "ms-modulus", float(gap.max()), 0.0, 0.0, tol_mode="abs",
                      inputs=inputs, seed=seed,
                      details={"skipped": int(np.sum(~ok)), **audit})


def sodin_lemma_check(f: M.Potential, t: float, samples, h=None, n_circle: int = 64,
                      name: str = "sodin_lemma") -> ReportEntry:
    """``|grad f(x+th) - grad f(x)| <= (2/t) sup_v (f(x+2tv) + f(x-2tv) - 2 f(x))``.

    The supremum over unit v is taken over ``n_circle`` directions (plus h),
    which can only make the right side smaller.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    d = f.dim
    x = np.asarray(samples, float).reshape(-1, d)
    H = f.d2f(x)
    min_eig = float(np.min(np.linalg.eigvalsh(H)[:, 0]))
    inputs = {"family": f.family, "params": f.params, "t": t, "n": int(x.shape[0])}
    if min_eig < -M.AUDIT_TOL:
        return status_entry(name, "sodin-lemma", "precondition_failed", inputs=inputs,
                            details={"min_hessian_eig": min_eig})
    if h is None:
        h = np.eye(d)[0]
    h = np.asarray(h, float).reshape(d)
    h = h / np.linalg.norm(h)
    if d == 1:
        V = np.array([[1.0]])
    else:
        ang = np.linspace(0, np.pi, n_circle, endpoint=False)
        V = np.vstack([np.stack([np.cos(ang), np.sin(ang)], 1), h[None]])
    lhs = np.linalg.norm(f.df(x + t * h) - f.df(x), axis=1)
    fx = f.f(x)
    rhs = np.full(x.shape[0], -np.inf)
    for v in V:
        rhs = np.maximum(rhs, f.f(x + 2 * t * v) + f.f(x - 2 * t * v) - 2 * fx)
    rhs = (2.0 / t) * rhs
    gap = lhs - rhs
    scale = np.maximum(1.0, np.abs(rhs))
    return make_entry(name, "sodin-lemma", float(np.max(gap / scale)), 0.0, 1e-12,
                      tol_mode="abs", inputs=inputs,
                      details={"max_lhs": float(lhs.max()), "min_rhs": float(rhs.min()),
                               "min_hessian_eig": min_eig})


# --------------------------------------------------------------------------
# L^p estimates


def _source_quadrature(source: M.MeasureSpec, panels: int = 512, order: int = 8):
    """Nodes and normalised weights for integrating against a 1-D source."""
    law = law_of(source)
    if not law.finite:
        raise ValueError("L^p norms need a probability source")
    x, w = gauss_legendre_panels(law.lo, law.hi, panels, order)
    w = w * np.exp(law.logpdf(x))
    return x, w / w.sum()


def _lp(vals, w, p):
    vals = np.abs(vals)
    if math.isinf(p):
        return float(vals.max())
    return float(np.sum(w * vals**p) ** (1.0 / p))


def lp_norm_check(T, source: M.MeasureSpec, V: M.Potential, K: float, p_list=(1, 2, 4, math.inf),
                  tol: float = 1e-8, seed: int = 0, name: str = "lp_estimate") -> list:
    """``K ||Phi_ee^2||_p <= ||(V_ee)_+||_p`` and ``<= (p+1)/2 ||V_e^2||_p``.

    ``T`` is a 1-D :class:`TransportMap` (``Phi_ee = T'``) or an entropic
    :class:`GridMap` (``Phi_ee = e . DT e`` on interior nodes). For p = inf
    the first inequality is taken over the quadrature nodes and the second is
    skipped when ``||V_e^2||_inf`` is infinite.
    """
    entries = []
    if isinstance(T, G.GridMap):
        i1, i2 = T.interior()
        s = T.src
        X1, X2 = np.meshgrid(s.x1[i1], s.x2[i2], indexing="ij")
        x = np.stack([X1.ravel(), X2.ravel()], 1)
        w = s.weights[i1, i2].ravel()
        w = w / w.sum()
        J = T.grid_jacobian()[i1, i2].reshape(-1, 2, 2)
        Js = 0.5 * (J + np.swapaxes(J, 1, 2))
        dirs = directions(2, seed)
        Hv = V.d2f(x)
        gv = V.df(x)
        unbounded_grad = True
    else:
        x, w = _source_quadrature(source)
        Js = np.asarray(T.jacobian(x), float).reshape(-1, 1, 1)
        dirs = np.ones((1, 1))
        Hv = V.d2f(x[:, None])
        gv = V.df(x[:, None])
        unbounded_grad = True
    for k, e in enumerate(dirs):
        phi_ee = np.einsum("a,nab,b->n", e, Js, e)
        v_ee = np.einsum("a,nab,b->n", e, Hv, e)
        v_e2 = (gv @ e) ** 2
        for p in p_list:
            p = float(p)
            lhs = K * _lp(phi_ee**2, w, p)
            rhs1 = _lp(np.maximum(v_ee, 0.0), w, p)
            label = "inf" if math.isinf(p) else f"{p:g}"
            inputs = {"p": label, "K": K, "direction": e, "n": int(x.shape[0])}
            entries.append(make_entry(f"{name}[hessian,p={label},e={k}]", "lp-hessian",
                                      lhs, rhs1, tol, inputs=inputs, seed=seed,
                                      details={"lhs": lhs, "rhs": rhs1}))
            if math.isinf(p):
                if unbounded_grad:
                    entries.append(status_entry(
                        f"{name}[gradient,p=inf,e={k}]", "lp-gradient", "not_applicable",
                        inputs=inputs, seed=seed,
                        details={"reason": "sup of V_e^2 is infinite on the support"}))
                continue
            rhs2 = 0.5 * (p + 1) * _lp(v_e2, w, p)
            entries.append(make_entry(f"{name}[gradient,p={label},e={k}]", "lp-gradient",
                                      lhs, rhs2, tol, inputs=inputs, seed=seed,
                                      details={"lhs": lhs, "rhs": rhs2}))
    return entries


def operator_norm_lp_check(gm: "G.GridMap", V: M.Potential, K: float, r_list=(1, 2),
                           budget: float = 0.0, name: str = "operator_norm_lp") -> list:
    """``K (int ||D^2 Phi||^(2r))^(1/r) <= (int ||(D^2 V)_+||^r)^(1/r)`` on the grid."""
    i1, i2 = gm.interior()
    s = gm.src
    X1, X2 = np.meshgrid(s.x1[i1], s.x2[i2], indexing="ij")
    x = np.stack([X1.ravel(), X2.ravel()], 1)
    w = s.weights[i1, i2].ravel()
    w = w / w.sum()
    J = gm.grid_jacobian()[i1, i2].reshape(-1, 2, 2)
    nJ = np.linalg.norm(J, ord=2, axis=(-2, -1))
    ev = np.linalg.eigvalsh(V.d2f(x))
    nV = np.max(np.maximum(ev, 0.0), axis=1)
    out = []
    for r in r_list:
        if r < 1:
            raise ValueError("r must be at least 1")
        lhs = K * float(np.sum(w * nJ ** (2 * r)) ** (1.0 / r))
        rhs = float(np.sum(w * nV**r) ** (1.0 / r))
        out.append(make_entry(f"{name}[r={r:g}]", "operator-norm-lp", lhs, rhs, budget,
                              inputs={"r": r, "K": K, "map": gm.map.meta},
                              details={"lhs": lhs, "rhs": rhs, "budget": budget}))
    return out


# --------------------------------------------------------------------------
# body scaling


def body_scaling_check(body: M.ConvexBody, s_list=(0.5, 1.0, 2.0), n: int = 64,
                       eps_list=None, tol: float = 0.05, n_pairs: int = 100_000,
                       seed: int = 0, progress=None, name: str = "body_scaling") -> list:
    """Lipschitz constant of gamma -> uniform(sK) divided by that for K, against s."""
    src = G.discretize(M.make_standard_gaussian(2), None, n)
    lips = {}
    scales = sorted(set([1.0] + [float(s) for s in s_list]))
    for s in scales:
        tgt = G.discretize(M.make_uniform(body.scaled(s)), None, n)
        c = G.epsilon_schedule_solve(src, tgt, eps_list)
        gm = G.barycentric_map(c)
        lips[s] = grid_pairwise_lipschitz(gm, n_pairs, seed)
        if progress is not None:
            progress(f"body scaling s={s:g}: lipschitz {lips[s]:.6g}")
    out = []
    for s in s_list:
        ratio = lips[float(s)] / lips[1.0]
        out.append(make_entry(f"{name}[s={s:g}]", "body-scaling", ratio, float(s), tol,
                              direction="equal", seed=seed,
                              inputs={"body": body.name, "params": body.params, "s": s, "n": n},
                              details={"lipschitz": lips[float(s)], "lipschitz_unit": lips[1.0]}))
    return out


# --------------------------------------------------------------------------
# entropic calibration


def gaussian_calibration(gm: "G.GridMap", sigma: float, n_pairs: int = 100_000,
                         seed: int = 0) -> dict:
    """Deviation of an entropic Gaussian -> Gaussian(sigma) map from ``sigma x``.

    Returns the pairwise and Jacobian estimates, the relative budget (largest
    relative deviation of either estimate from sigma) and the measured
    constant ``C = max |T(x) - sigma x| / (h + eps)``.
    """
    pw = grid_pairwise_lipschitz(gm, n_pairs, seed)
    js = jacobian_opnorm_sup(gm)
    pts, vals = gm.interior_nodes()
    dev = float(np.max(np.linalg.norm(vals - sigma * pts, axis=1)))
    h = gm.src.h
    eps = gm.coupling.epsilon
    return {"pairwise": pw, "jacobian_sup": js,
            "budget": max(abs(pw - sigma), abs(js - sigma)) / sigma,
            "max_deviation": dev, "h": h, "epsilon": eps, "C": dev / (h + eps)}
