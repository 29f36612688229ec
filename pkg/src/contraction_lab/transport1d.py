"""Monotone transport in one dimension by CDF inversion.

Probability laws are tabulated once with composite Gauss-Legendre quadrature
over the region where the density is numerically non-zero. Both the left
cumulative F and the right tail Q = 1 - F are kept so that quantiles far in
either tail keep full relative precision. Infinite measures use signed mass
coordinates anchored at 0 (symmetric laws) or at the left endpoint
(half-lines).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from ._quad import _leggauss
from .measures import MeasureSpec, support_box

PANELS = 4096
ORDER = 16
JACOBIAN_FLOOR = 1e-12
PROVENANCES = ("monotone1d", "radial", "entropic", "heatflow")


# --------------------------------------------------------------------------
# transport map container


@dataclass(frozen=True, eq=False)
class TransportMap:
    """An evaluable map with derivative, inverse and (optional) convex potential.

    In one dimension ``forward``/``jacobian``/``inverse`` act elementwise on
    arrays; in higher dimension they take ``(n, d)`` arrays and ``jacobian``
    returns ``(n, d, d)``.
    """

    forward: Callable
    jacobian: Callable
    provenance: str
    domain: tuple
    dim: int = 1
    inverse: Optional[Callable] = None
    potential: Optional[Callable] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def __call__(self, x):
        return self.forward(x)


# --------------------------------------------------------------------------
# one-dimensional laws


class _FiniteLaw:
    """Tabulated probability law on an interval."""

    finite = True

    def __init__(self, logdens: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
                 panels: int = PANELS, order: int = ORDER, check_gaps: bool = False):
        self.raw = logdens
        self.lo, self.hi = float(lo), float(hi)
        self.xg, self.wg = _leggauss(order)
        self.edges = np.linspace(self.lo, self.hi, panels + 1)
        half = 0.5 * np.diff(self.edges)
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        nodes = mid[:, None] + half[:, None] * self.xg[None]
        u = logdens(nodes.ravel()).reshape(nodes.shape)
        finite = np.isfinite(u)
        if check_gaps and not np.all(finite):
            raise ValueError("density vanishes on an interior interval; map undefined there")
        self.shift = float(np.max(u[finite]))
        vals = np.where(finite, np.exp(u - self.shift), 0.0)
        mass = np.sum(vals * (half[:, None] * self.wg[None]), axis=1)
        total = float(mass.sum())
        self.cumF = np.concatenate([[0.0], np.cumsum(mass)]) / total
        self.cumQ = np.concatenate([np.cumsum(mass[::-1])[::-1], [0.0]]) / total
        self.logZ = math.log(total) + self.shift

    def logpdf(self, x):
        x = np.asarray(x, float)
        out = np.full(x.shape, -np.inf)
        inside = (x >= self.lo) & (x <= self.hi)
        out[inside] = self.raw(x[inside]) - self.logZ
        return out

    def _partials(self, x, k):
        """Mass of [edge_k, x] and [x, edge_{k+1}]."""
        a = self.edges[k]
        b = self.edges[k + 1]
        xg, wg = self.xg, self.wg
        hl = 0.5 * (x - a)
        nl = (a + hl)[:, None] + hl[:, None] * xg[None]
        hr = 0.5 * (b - x)
        nr = (x + hr)[:, None] + hr[:, None] * xg[None]
        pl = np.exp(self.raw(nl.ravel()).reshape(nl.shape) - self.logZ)
        pr = np.exp(self.raw(nr.ravel()).reshape(nr.shape) - self.logZ)
        pl = np.where(np.isfinite(pl), pl, 0.0)
        pr = np.where(np.isfinite(pr), pr, 0.0)
        return hl * (pl @ wg), hr * (pr @ wg)

    def _panel(self, x):
        k = np.searchsorted(self.edges, x, side="right") - 1
        return np.clip(k, 0, len(self.edges) - 2)

    def both_tails(self, x):
        """``(F(x), 1 - F(x))`` each computed directly."""
        x = np.clip(np.asarray(x, float), self.lo, self.hi)
        flat = x.ravel()
        k = self._panel(flat)
        left, right = self._partials(flat, k)
        F = np.minimum(self.cumF[k] + left, 1.0)
        Q = np.minimum(self.cumQ[k + 1] + right, 1.0)
        return F.reshape(x.shape), Q.reshape(x.shape)

    def cdf(self, x):
        return self.both_tails(x)[0]

    def _solve(self, target, side):
        """Invert F (side='F') or Q (side='Q') at the given masses."""
        target = np.asarray(target, float).ravel()
        if side == "F":
            k = np.searchsorted(self.cumF, target, side="right") - 1
        else:
            k = np.searchsorted(-self.cumQ, -target, side="left") - 1
        k = np.clip(k, 0, len(self.edges) - 2)
        a = self.edges[k].copy()
        b = self.edges[k + 1].copy()
        c0 = (self.cumF if side == "F" else self.cumQ)[k]
        c1 = (self.cumF if side == "F" else self.cumQ)[k + 1]
        span = c1 - c0
        frac = np.where(span != 0, (target - c0) / np.where(span != 0, span, 1.0), 0.5)
        y = a + np.clip(frac, 0.0, 1.0) * (b - a)
        sign = 1.0 if side == "F" else -1.0
        active = np.ones(y.shape, bool)
        for _ in range(100):
            idx = np.nonzero(active)[0]
            if idx.size == 0:
                break
            yi = y[idx]
            left, right = self._partials(yi, k[idx])
            val = (self.cumF[k[idx]] + left) if side == "F" else (self.cumQ[k[idx] + 1] + right)
            g = sign * (val - target[idx])
            # keep the bracket [a, b] with g(a) <= 0 <= g(b)
            a[idx] = np.where(g <= 0, yi, a[idx])
            b[idx] = np.where(g > 0, yi, b[idx])
            dens = np.exp(self.raw(yi) - self.logZ)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = g / dens
            cand = yi - step
            bad = ~np.isfinite(cand) | (cand <= a[idx]) | (cand >= b[idx])
            cand = np.where(bad, 0.5 * (a[idx] + b[idx]), cand)
            y[idx] = cand
            # a Newton step of size s leaves an error of order s^2
            done = (~bad & (np.abs(step) <= 1e-10 * (1 + np.abs(yi)))) | \
                (b[idx] - a[idx] <= 4e-16 * (1 + np.abs(yi)))
            active[idx[done]] = False
        return y

    def quantile(self, u):
        u = np.asarray(u, float)
        return self._solve(u, "F").reshape(u.shape)

    def match(self, F, Q):
        """Point y with F_self(y) = F (or Q_self(y) = Q, whichever is smaller)."""
        F = np.asarray(F, float)
        Q = np.asarray(Q, float)
        out = np.empty(F.size)
        left = (F <= Q).ravel()
        if np.any(left):
            out[left] = self._solve(F.ravel()[left], "F")
        if np.any(~left):
            out[~left] = self._solve(Q.ravel()[~left], "Q")
        return out.reshape(F.shape)


class _NuLaw:
    """``dx / cos(Ax)`` with signed mass anchored at 0."""

    finite = False

    def __init__(self, A: float):
        self.A = A
        self.lo, self.hi = -math.pi / (2 * A), math.pi / (2 * A)

    def logpdf(self, x):
        x = np.asarray(x, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -np.log(np.cos(self.A * x))
        return np.where(np.abs(x) < self.hi, out, -np.inf)

    def mass(self, x):
        return np.arctanh(np.sin(self.A * np.asarray(x, float))) / self.A

    def inv_mass(self, m):
        return np.arctan(np.sinh(self.A * np.asarray(m, float))) / self.A


class _HalflineLaw:
    """``(level + slope*x) dx`` on [0, inf), mass anchored at 0."""

    finite = False

    def __init__(self, level: float, slope: float):
        self.level, self.slope = level, slope
        self.lo, self.hi = 0.0, math.inf

    def logpdf(self, x):
        x = np.asarray(x, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(self.level + self.slope * x)
        return np.where(x >= 0, out, -np.inf)

    def mass(self, x):
        x = np.asarray(x, float)
        return self.level * x + 0.5 * self.slope * x * x

    def inv_mass(self, m):
        m = np.asarray(m, float)
        if self.slope == 0:
            return m / self.level
        # stable root of slope/2 y^2 + level y - m = 0
        return 2 * m / (self.level + np.sqrt(self.level**2 + 2 * self.slope * m))


class _InfiniteNumericLaw:
    """Infinite measure ``e^{-V}`` handled by adaptive quadrature."""

    finite = False

    def __init__(self, spec: MeasureSpec):
        p = spec.potential
        self.pot = p
        self.lo, self.hi = float(p.lower[0]), float(p.upper[0])
        self.anchor = self.lo if math.isfinite(self.lo) else 0.0

    def logpdf(self, x):
        x = np.asarray(x, float)
        out = np.full(x.shape, -np.inf)
        inside = (x >= self.lo) & (x <= self.hi)
        out[inside] = -self.pot.f(x[inside].reshape(-1, 1))
        return out

    def _m(self, x):
        val, _ = integrate.quad(lambda s: math.exp(-float(self.pot.f(np.array([[s]]))[0])),
                                self.anchor, x, epsabs=1e-13, epsrel=1e-13, limit=200)
        return val

    def mass(self, x):
        return np.vectorize(self._m, otypes=[float])(x)

    def inv_mass(self, m):
        def one(mi):
            if mi == 0:
                return self.anchor
            step = 1.0
            lo = hi = self.anchor
            if mi > 0:
                while self._m(hi) < mi:
                    lo, hi = hi, min(self.anchor + step, self.hi)
                    step *= 2
            else:
                while self._m(lo) > mi:
                    hi, lo = lo, max(self.anchor - step, self.lo)
                    step *= 2
            return optimize.brentq(lambda y: self._m(y) - mi, lo, hi, xtol=1e-14, rtol=4e-16)

        return np.vectorize(one, otypes=[float])(m)


def law_of(m: MeasureSpec, check_gaps: bool = False):
    """One-dimensional law object for a measure description (cached)."""
    if m.dim != 1:
        raise ValueError("one-dimensional measure required")
    key = ("law", check_gaps)
    if key in m.cache:
        return m.cache[key]
    if m.kind == "model_nu":
        law = _NuLaw(m.A)
    elif m.kind == "lebesgue_halfline":
        law = _HalflineLaw(1.0, 0.0)
    elif m.mass == "infinite":
        fam = m.params.get("family")
        if fam == "halfline":
            law = _HalflineLaw(m.params["level"], m.params["slope"])
        elif m.kind == "density":
            law = _InfiniteNumericLaw(m)
        else:
            raise ValueError(f"unsupported infinite measure kind {m.kind!r}")
    elif m.kind == "density":
        p = m.potential
        lo, hi = support_box(p)
        law = _FiniteLaw(lambda x: -p.f(np.asarray(x, float).reshape(-1, 1)),
                         lo[0], hi[0], check_gaps=check_gaps)
    elif m.kind == "uniform_on_body":
        (a, b), = m.body.bounding_box
        law = _FiniteLaw(lambda x: np.zeros(np.shape(x)), a, b, panels=64, order=4)
    elif m.kind == "radial":
        raise ValueError("radial measures in one dimension are not supported; use a density")
    else:
        raise ValueError(f"unsupported measure kind {m.kind!r}")
    m.cache[key] = law
    return law


def cdf(m: MeasureSpec, x):
    """Cumulative mass up to ``x``.

    Probability laws give ``m((-inf, x])``. Infinite laws give the signed mass
    between the anchor (0 for ``dx/cos``, the left endpoint for half-lines)
    and ``x``.
    """
    law = law_of(m)
    xa = np.asarray(x, float)
    # the tabulated support may be a truncation of the true domain; beyond it
    # the mass is below exp(-690) and law.cdf clamps
    dlo, dhi = (float(v[0]) for v in m.domain)
    if np.any(xa < dlo) or np.any(xa > dhi):
        raise ValueError("x lies outside the closure of the domain")
    if law.finite:
        return law.cdf(xa)
    if m.kind == "model_nu" and np.any(np.abs(xa) >= law.hi):
        return np.sign(xa) * np.inf
    return law.mass(xa)


def _endpoint_slopes(T, x, jac, lo, hi):
    """Replace T' at domain endpoints by the one-sided quotient over the last cell."""
    flags = np.zeros(x.shape, bool)
    if x.size < 2:
        return jac, flags
    for idx, nb in ((0, 1), (-1, -2)):
        end = x[idx]
        if end in (lo, hi):
            flags[idx] = True
            Ta, Tb = T(np.array([x[nb], end]))
            jac[idx] = (Tb - Ta) / (end - x[nb])
    return jac, flags


def monotone_map(source: MeasureSpec, target: MeasureSpec) -> TransportMap:
    """Increasing map pushing ``source`` to ``target`` (the optimal one in 1-D)."""
    if source.dim != 1 or target.dim != 1:
        raise ValueError("monotone_map is one-dimensional")
    fin_s = source.mass != "infinite"
    fin_t = target.mass != "infinite"
    if fin_s != fin_t:
        raise ValueError("cannot transport between a finite and an infinite measure")
    S = law_of(source)
    Tl = law_of(target, check_gaps=True)
    if not fin_s:
        sym_s = source.kind == "model_nu"
        sym_t = target.kind == "model_nu"
        if sym_s != sym_t:
            raise ValueError("infinite measures use different anchoring conventions")

    if fin_s:
        def forward(x):
            F, Q = S.both_tails(x)
            return Tl.match(F, Q)

        def inverse(y):
            F, Q = Tl.both_tails(y)
            return S.match(F, Q)
    else:
        def forward(x):
            return Tl.inv_mass(S.mass(x))

        def inverse(y):
            return S.inv_mass(Tl.mass(y))

    def jacobian(x):
        x = np.asarray(x, float)
        return np.exp(S.logpdf(x) - Tl.logpdf(forward(x)))

    anchor = 0.0 if (not fin_s or S.lo < 0 < S.hi) else S.lo

    def potential(x):
        """``int_anchor^x T``, by 32-point Gauss-Legendre per evaluation."""
        x = np.asarray(x, float)
        xg, wg = _leggauss(32)
        flat = x.ravel()
        half = 0.5 * (flat - anchor)
        nodes = (anchor + half)[:, None] + half[:, None] * xg[None]
        vals = forward(nodes.ravel()).reshape(nodes.shape)
        return (half * (vals @ wg)).reshape(x.shape)

    return TransportMap(
        forward=forward, jacobian=jacobian, inverse=inverse, potential=potential,
        provenance="monotone1d", domain=(S.lo, S.hi), dim=1,
        meta={"source": source.label, "target": target.label,
              "target_domain": (Tl.lo, Tl.hi)},
    )


def inverse_map(t: TransportMap, probe=None) -> TransportMap:
    """The inverse of a strictly increasing 1-D map."""
    if t.dim != 1 or t.inverse is None:
        raise ValueError("inverse_map needs a one-dimensional map with an inverse")
    lo, hi = t.meta.get("target_domain", (-math.inf, math.inf))

    def jacobian(y):
        y = np.asarray(y, float)
        j = np.asarray(t.jacobian(t.inverse(y)), float)
        if np.any(j < JACOBIAN_FLOOR):
            raise ValueError("forward derivative below 1e-12; map not invertible to tolerance")
        return 1.0 / j

    if probe is not None:
        jacobian(np.asarray(probe, float))

    return TransportMap(
        forward=t.inverse, jacobian=jacobian, inverse=t.forward,
        provenance=t.provenance, domain=(lo, hi), dim=1,
        meta={**t.meta, "target_domain": t.domain, "inverted": True},
    )


def tabulate(t: TransportMap, x) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """``(x, T(x), T'(x), endpoint_flag)`` with one-sided endpoint slopes."""
    x = np.asarray(x, float)
    lo, hi = t.domain
    Tx = np.asarray(t.forward(x), float)
    interior = (x > lo) & (x < hi)
    jac = np.full(x.shape, np.nan)
    jac[interior] = t.jacobian(x[interior])
    jac, flags = _endpoint_slopes(t.forward, x, jac, lo, hi)
    return x, Tx, jac, flags


def to_csv(t: TransportMap, x) -> str:
    x, Tx, jac, flags = tabulate(t, x)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "T", "dT", "endpoint_one_sided"])
    for row in zip(x, Tx, jac, flags):
        w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(row[3])])
    return buf.getvalue()
