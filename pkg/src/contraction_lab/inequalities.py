"""Monte Carlo and quadrature checks of Gaussian and log-concave inequalities.

Every Monte Carlo check draws from its own PCG64 stream, seeded from the
master seed and a hash of the check name, so results do not depend on which
other checks run or in what order.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, special

from . import measures as M
from ._quad import hermite_nodes
from .report import ReportEntry, make_entry, status_entry
from .transport1d import law_of

SIGMAS = 3.0
CHUNK = 250_000
POINCARE_PRE_TOL = 1e-8
POINCARE_REL_TOL = 1e-6
PROFILE_GRID = 2000
PROFILE_TOL = 1e-6


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    n: int
    seed: int


def stream(seed: int, name: str) -> np.random.Generator:
    """Private generator for the check ``name`` under master ``seed``."""
    h = hashlib.sha256(name.encode()).digest()
    words = [int.from_bytes(h[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1)] + words)))


def _gaussian_chunks(rng, n, d):
    left = n
    while left > 0:
        k = min(CHUNK, left)
        yield rng.standard_normal((k, d))
        left -= k


def _as_predicate(s):
    if isinstance(s, M.ConvexBody):
        return s.membership
    if callable(s):
        return s
    raise TypeError("set must be a ConvexBody or a predicate on (n, d) arrays")


def mc_gaussian_prob(s, d: int, n: int, seed: int, name: str = "mc_gaussian_prob") -> MCEstimate:
    """``gamma_d(s)`` from ``n`` standard Gaussian samples."""
    if n < 1000:
        raise ValueError("n must be at least 1000")
    pred = _as_predicate(s)
    rng = stream(seed, name)
    hits = 0
    for X in _gaussian_chunks(rng, n, d):
        hits += int(np.count_nonzero(pred(X)))
    p = hits / n
    se = math.sqrt(p * (1 - p) / (n - 1)) if 0 < p < 1 else 0.0
    return MCEstimate(p, se, n, seed)


def _indicator_moments(preds, d, n, rng):
    """Counts of every pattern of the nested predicates, accumulated over chunks."""
    k = len(preds)
    counts = np.zeros(2**k, dtype=np.int64)
    for X in _gaussian_chunks(rng, n, d):
        code = np.zeros(X.shape[0], dtype=np.int64)
        for j, p in enumerate(preds):
            code |= p(X).astype(np.int64) << j
        counts += np.bincount(code, minlength=2**k)
    return counts


def _delta_stat(counts, n, stat, influence):
    """Plug-in statistic and its delta-method standard error.

    ``influence`` maps the vector of indicators (bits) and the probability
    estimates to the influence value of one sample.
    """
    k = int(math.log2(counts.size))
    bits = ((np.arange(counts.size)[:, None] >> np.arange(k)[None]) & 1).astype(float)
    probs = (counts[:, None] * bits).sum(0) / n
    vals = influence(bits, probs)
    mean = float(np.sum(counts * vals) / n)
    var = float(np.sum(counts * (vals - mean) ** 2) / (n - 1))
    return stat(probs), math.sqrt(var / n), probs


def correlation_check(A: M.ConvexBody, B: M.ConvexBody, d: int = 2, n: int = 1_000_000,
                      seed: int = 0, name: str = "correlation") -> ReportEntry:
    """``gamma(A & B) >= gamma(A) gamma(B)`` within a 3-sigma band."""
    if not A.symmetric:
        raise ValueError("A must be symmetric")
    if not M.midpoint_audit(A, stream(seed, name + ":audit")):
        raise ValueError("A failed the convexity spot-check")
    pa, pb = A.membership, B.membership
    both = lambda X: pa(X) & pb(X)
    counts = _indicator_moments([pa, pb, both], d, n, stream(seed, name))
    D, se, p = _delta_stat(
        counts, n, lambda p: p[2] - p[0] * p[1],
        lambda b, p: b[:, 2] - p[1] * b[:, 0] - p[0] * b[:, 1])
    return make_entry(name, "gaussian-correlation", D, 0.0, SIGMAS * se, direction="lower",
                      tol_mode="abs", seed=seed,
                      inputs={"A": [A.name, A.params], "B": [B.name, B.params], "d": d, "n": n},
                      details={"gamma_A": p[0], "gamma_B": p[1], "gamma_AB": p[2],
                               "std_error": se})


def harge_check(f: Callable, g: Callable, d: int = 1, n: int = 1_000_000, seed: int = 0,
                name: str = "harge", quad_order: int = 200) -> list:
    """``int f g dgamma <= int f dgamma int g dgamma`` (MC, plus quadrature in 1-D)."""
    rng = stream(seed, name)
    s_f = s_g = s_fg = 0.0
    sums = np.zeros((3, 3))
    for X in _gaussian_chunks(rng, n, d):
        fv = np.asarray(f(X), float)
        gv = np.asarray(g(X), float)
        V = np.stack([fv, gv, fv * gv])
        s_f += fv.sum()
        s_g += gv.sum()
        s_fg += (fv * gv).sum()
        sums += V @ V.T
    mf, mg, mfg = s_f / n, s_g / n, s_fg / n
    cov = (sums - n * np.outer([mf, mg, mfg], [mf, mg, mfg])) / (n - 1)
    grad = np.array([-mg, -mf, 1.0])  # D = E[fg] - E[f] E[g]
    se = math.sqrt(max(float(grad @ cov @ grad), 0.0) / n)
    D = mfg - mf * mg
    out = [make_entry(name, "harge-moment", D, 0.0, SIGMAS * se, tol_mode="abs", seed=seed,
                      inputs={"d": d, "n": n},
                      details={"E_fg": mfg, "E_f": mf, "E_g": mg, "std_error": se})]
    if d == 1:
        y, w = hermite_nodes(quad_order)
        fv = np.asarray(f(y[:, None]), float)
        gv = np.asarray(g(y[:, None]), float)
        lhs = float(w @ (fv * gv))
        rhs = float((w @ fv) * (w @ gv))
        out.append(make_entry(name + "_quadrature", "harge-moment", lhs, rhs, 1e-10,
                              inputs={"order": quad_order}, details={"lhs": lhs, "rhs": rhs}))
    return out


def b_inequality_check(K: M.ConvexBody, a: float = 0.5, b: float = 2.0, d: int = 2,
                       n: int = 1_000_000, seed: int = 0, n_stencil: int = 9,
                       name: str = "b_inequality") -> list:
    """``gamma(sqrt(ab) K)^2 >= gamma(aK) gamma(bK)`` and discrete concavity of
    ``t -> log gamma(e^t K)`` on ``n_stencil`` points between log a and log b."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not K.symmetric:
        raise ValueError("K must be symmetric")
    ts = np.linspace(math.log(a), math.log(b), n_stencil)
    scales = [a, math.sqrt(a * b), b] + [math.exp(t) for t in ts]
    preds = [(lambda X, s=s: K.membership(X / s)) for s in scales]
    rng = stream(seed, name)
    # accumulate single and pairwise hit counts (patterns of 12 bits are too many)
    m = len(preds)
    n1 = np.zeros(m)
    n2 = np.zeros((m, m))
    for X in _gaussian_chunks(rng, n, d):
        I = np.stack([p(X) for p in preds]).astype(float)
        n1 += I.sum(1)
        n2 += I @ I.T
    p = n1 / n
    cov = (n2 / n - np.outer(p, p)) * n / (n - 1)

    def se_of(grad):
        return math.sqrt(max(float(grad @ cov @ grad), 0.0) / n)

    inputs = {"K": [K.name, K.params], "a": a, "b": b, "d": d, "n": n}
    grad = np.zeros(m)
    grad[0], grad[1], grad[2] = -p[2], 2 * p[1], -p[0]
    D = p[1] ** 2 - p[0] * p[2]
    se = se_of(grad)
    out = [make_entry(name, "b-inequality", D, 0.0, SIGMAS * se, direction="lower",
                      tol_mode="abs", seed=seed, inputs=inputs,
                      details={"gamma_aK": p[0], "gamma_sqrtabK": p[1], "gamma_bK": p[2],
                               "std_error": se})]
    base = 3
    for k in range(1, n_stencil - 1):
        i0, i1, i2 = base + k - 1, base + k, base + k + 1
        if min(p[i0], p[i1], p[i2]) <= 0:
            out.append(status_entry(f"{name}_stencil[{k}]", "b-log-concavity", "inconclusive",
                                    seed=seed, inputs=inputs))
            continue
        g = np.zeros(m)
        g[i0], g[i1], g[i2] = 1 / p[i0], -2 / p[i1], 1 / p[i2]
        sd = math.log(p[i0]) + math.log(p[i2]) - 2 * math.log(p[i1])
        out.append(make_entry(f"{name}_stencil[{k}]", "b-log-concavity", sd, 0.0,
                              SIGMAS * se_of(g), tol_mode="abs", seed=seed,
                              inputs={**inputs, "t": float(ts[k])},
                              details={"std_error": se_of(g)}))
    return out


def strong_poincare_check(f: Callable, grad_f: Callable, d: int = 1, order: int = 64,
                          name: str = "strong_poincare") -> ReportEntry:
    """``int f^2 dgamma <= 1/2 int |grad f|^2 dgamma`` under
    ``int f = 0`` and ``int grad f = 0`` (checked by quadrature)."""
    y, w = hermite_nodes(order)
    if d == 1:
        X = y[:, None]
        W = w
    else:
        grids = np.meshgrid(*([y] * d), indexing="ij")
        X = np.stack([g.ravel() for g in grids], 1)
        W = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij")), axis=0).ravel()
    fv = np.asarray(f(X), float).reshape(-1)
    gv = np.asarray(grad_f(X), float).reshape(X.shape[0], d)
    mean_f = float(W @ fv)
    mean_g = W @ gv
    lhs = float(W @ fv**2)
    rhs = 0.5 * float(W @ np.sum(gv**2, axis=1))
    inputs = {"d": d, "order": order, "probe": fv[: min(8, fv.size)]}
    details = {"int_f": mean_f, "int_grad_f": mean_g, "lhs": lhs, "rhs": rhs}
    if abs(mean_f) > POINCARE_PRE_TOL or np.max(np.abs(mean_g)) > POINCARE_PRE_TOL:
        return status_entry(name, "strong-poincare", "precondition_failed", inputs=inputs,
                            details=details)
    return make_entry(name, "strong-poincare", lhs, rhs, POINCARE_REL_TOL, inputs=inputs,
                      details=details)


# --------------------------------------------------------------------------
# isoperimetric profiles


def _profile_fn(m: M.MeasureSpec):
    """``J(u)``: density at the point of mass coordinate ``u``, and the mass range."""
    law = law_of(m)
    if law.finite:
        def J(u):
            u = np.asarray(u, float)
            out = np.zeros(u.shape)
            inner = (u > 0) & (u < 1)
            if np.any(inner):
                x = law.quantile(u[inner])
                out[inner] = np.exp(law.logpdf(x))
            return out
        return J, 0.0, 1.0

    def J(u):
        u = np.asarray(u, float)
        return np.exp(law.logpdf(law.inv_mass(u)))

    lo = -math.inf
    if math.isfinite(getattr(law, "lo", -math.inf)):
        with np.errstate(divide="ignore"):
            lo = float(law.mass(law.lo))
    return J, lo, math.inf


def isoperimetric_profile_1d(m: M.MeasureSpec, t_list, n_grid: int = PROFILE_GRID,
                             polish: bool = True, window: float = 10.0) -> np.ndarray:
    """Least boundary measure among half-lines and intervals of mass t.

    In mass coordinates an interval of mass t starting at u has boundary
    measure ``J(u) + J(u + t)``; set endpoints at the edge of the support
    carry no boundary, so half-lines are the extreme choices of u. For an
    infinite measure the search window is ``u`` in ``[-t - window, window]``
    (around the anchor), and half-lines are excluded since they carry
    infinite mass.
    """
    J, lo, hi = _profile_fn(m)
    finite = math.isfinite(hi)
    out = []
    for t in np.atleast_1d(np.asarray(t_list, float)):
        if finite and not (0 < t < 1):
            raise ValueError("t must lie in (0, 1)")
        if not finite and not t > 0:
            raise ValueError("t must be positive")
        if finite:
            a, b = 0.0, 1.0 - t
        else:
            a = max(lo, -t - window)
            b = window
        u = np.linspace(a, b, n_grid)
        vals = J(u) + J(u + t)
        k = int(np.argmin(vals))
        best = float(vals[k])
        if polish and 0 < k < n_grid - 1:
            res = optimize.minimize_scalar(lambda s: float(J(np.array([s]))[0] + J(np.array([s + t]))[0]),
                                           bounds=(u[k - 1], u[k + 1]), method="bounded",
                                           options={"xatol": 1e-12})
            best = min(best, float(res.fun))
        out.append(best)
    return np.array(out)


def gaussian_profile(t) -> np.ndarray:
    """``phi(Phi^{-1}(t))``."""
    t = np.asarray(t, float)
    return np.exp(-0.5 * special.ndtri(t) ** 2) / math.sqrt(2 * math.pi)


def nu_profile(A: float, t) -> np.ndarray:
    """``e^{At/2} + e^{-At/2}``."""
    t = np.asarray(t, float)
    return 2 * np.cosh(A * t / 2)


def bakry_ledoux_check(W: M.Potential, t_list=(0.1, 0.25, 0.5), audit_points=None,
                       name: str = "bakry_ledoux") -> ReportEntry:
    """``I_mu(t) >= I_gamma(t) - 1e-6`` for ``mu = e^{-W}`` with ``W'' >= 1`` audited."""
    pts = np.linspace(-6, 6, 1201) if audit_points is None else audit_points
    audit = M.audit_convexity(W, 1.0, pts)
    ts = np.asarray(t_list, float)
    inputs = {"W": W.family, "params": W.params, "t": ts}
    if not audit.passed:
        return status_entry(name, "bakry-ledoux", "precondition_failed", inputs=inputs,
                            details={"min_hessian_eig": audit.computed})
    mu = M.density_measure(W)
    Im = isoperimetric_profile_1d(mu, ts)
    Ig = isoperimetric_profile_1d(M.make_standard_gaussian(1), ts)
    margin = Im - Ig
    return make_entry(name, "bakry-ledoux", float(margin.min()), 0.0, PROFILE_TOL,
                      direction="lower", tol_mode="abs", inputs=inputs,
                      details={"profile_mu": Im, "profile_gamma": Ig,
                               "profile_gamma_closed_form": gaussian_profile(ts),
                               "margins": margin})


def concentration_transfer_check(W: M.Potential, delta: Callable, r_list, A_list,
                                 audit_grid=None, name: str = "concentration") -> list:
    """Enlargements of half-lines ``(-inf, a]`` under ``nu = e^{-W}``:

    ``nu(A_r) >= Phi(Phi^{-1}(nu(A)) + sqrt(delta(r/8))/2)`` and, when
    ``nu(A) >= 1/2``, ``nu(A_r) >= 1 - exp(-delta(r/8)/8)/2``.
    """
    ag = np.linspace(-4, 4, 801) if audit_grid is None else np.asarray(audit_grid, float)
    ys = np.linspace(0.01, 2.0, 60)
    vals = [float(np.min(W.f((ag + y)[:, None]) + W.f((ag - y)[:, None]) - 2 * W.f(ag[:, None])))
            for y in ys]
    slack = float(np.min(np.array(vals) - np.asarray(delta(ys), float) * (1 - 1e-10) + 1e-12))
    nu = M.density_measure(W)
    law = law_of(nu)
    out = []
    if slack < 0:
        return [status_entry(name, "concentration-transfer", "precondition_failed",
                             inputs={"W": W.family, "params": W.params},
                             details={"modulus_slack": slack})]
    for a in A_list:
        for r in r_list:
            nuA = float(law.cdf(np.array([a]))[0])
            nuAr = float(law.cdf(np.array([a + r]))[0])
            dl = float(delta(r / 8.0))
            b1 = float(special.ndtr(special.ndtri(nuA) + 0.5 * math.sqrt(dl)))
            inputs = {"W": W.family, "params": W.params, "a": a, "r": r}
            out.append(make_entry(f"{name}[a={a:g},r={r:g}]", "concentration-transfer",
                                  nuAr, b1, 1e-12, direction="lower", tol_mode="abs",
                                  inputs=inputs, details={"nu_A": nuA, "delta": dl}))
            if nuA >= 0.5:
                b2 = 1.0 - 0.5 * math.exp(-dl / 8.0)
                out.append(make_entry(f"{name}_tail[a={a:g},r={r:g}]", "concentration-transfer",
                                      nuAr, b2, 1e-12, direction="lower", tol_mode="abs",
                                      inputs=inputs, details={"nu_A": nuA, "delta": dl}))
    return out
