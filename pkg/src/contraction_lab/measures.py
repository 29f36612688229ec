"""Potentials, convex bodies and measure descriptions.

All evaluators take points as arrays of shape ``(n, d)``; a bare ``(n,)``
array is accepted in one dimension and a single ``(d,)`` point anywhere.
Outputs follow the input: ``value`` drops the point axis for single points,
``gradient``/``hessian`` keep the trailing ``(d,)``/``(d, d)`` axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .report import ReportEntry, make_entry

AUDIT_TOL = 1e-8
TRUNCATION_SIGMAS = 8.0

ArrayFn = Callable[[np.ndarray], np.ndarray]


def as_points(x, dim: int) -> tuple[np.ndarray, tuple]:
    """Return ``(pts, shape)`` with ``pts`` of shape (n, dim) and the leading
    shape needed to restore the caller's layout."""
    arr = np.asarray(x, dtype=float)
    if dim == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        lead = arr.shape
        return arr.reshape(-1, 1), lead
    if arr.shape[-1] != dim:
        raise ValueError(f"expected points with trailing dimension {dim}, got {arr.shape}")
    lead = arr.shape[:-1]
    return arr.reshape(-1, dim), lead


@dataclass(frozen=True, eq=False)
class Potential:
    """A smooth scalar field with exact first and second derivatives."""

    f: ArrayFn
    df: ArrayFn
    d2f: ArrayFn
    dim: int
    lower: tuple = None
    upper: tuple = None
    convexity_lower_bound: Optional[float] = None
    directional_upper_bound: Optional[float] = None
    even: bool = False
    unconditional: bool = False
    modulus: Optional[Callable[[np.ndarray], np.ndarray]] = None
    family: str = "custom"
    params: dict = field(default_factory=dict)
    components: tuple = ()

    def __post_init__(self):
        if self.lower is None:
            object.__setattr__(self, "lower", (-math.inf,) * self.dim)
        if self.upper is None:
            object.__setattr__(self, "upper", (math.inf,) * self.dim)

    # evaluation -----------------------------------------------------------
    def value(self, x):
        pts, lead = as_points(x, self.dim)
        return self.f(pts).reshape(lead if self.dim > 1 or lead else ())

    def gradient(self, x):
        pts, lead = as_points(x, self.dim)
        g = self.df(pts)
        return g.reshape(lead + (self.dim,)) if self.dim > 1 else g.reshape(lead)

    def hessian(self, x):
        pts, lead = as_points(x, self.dim)
        h = self.d2f(pts)
        return h.reshape(lead + (self.dim, self.dim)) if self.dim > 1 else h.reshape(lead)

    __call__ = value

    def contains(self, x) -> np.ndarray:
        pts, lead = as_points(x, self.dim)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        inside = np.all((pts >= lo) & (pts <= hi), axis=1)
        return inside.reshape(lead)

    def with_constant(self, c: float) -> "Potential":
        """Same potential shifted by a constant (used for normalisation)."""
        return Potential(
            f=lambda p, f=self.f: f(p) + c,
            df=self.df, d2f=self.d2f, dim=self.dim,
            lower=self.lower, upper=self.upper,
            convexity_lower_bound=self.convexity_lower_bound,
            directional_upper_bound=self.directional_upper_bound,
            even=self.even, unconditional=self.unconditional,
            modulus=self.modulus, family=self.family,
            params={**self.params, "shift": self.params.get("shift", 0.0) + c},
            components=self.components,
        )


# --------------------------------------------------------------------------
# built-in families


def quadratic(precision, dim: int | None = None, const: float = 0.0) -> Potential:
    """``V(x) = <P x, x>/2 + const`` for a symmetric positive semidefinite P."""
    P = np.asarray(precision, dtype=float)
    if P.ndim == 0:
        if dim is None:
            raise ValueError("dim is required for a scalar precision")
        P = P * np.eye(dim)
    elif P.ndim == 1:
        P = np.diag(P)
    d = P.shape[0]
    if not np.allclose(P, P.T):
        raise ValueError("precision matrix must be symmetric")
    eig = np.linalg.eigvalsh(P)
    diagonal = np.allclose(P, np.diag(np.diag(P)))

    def f(x):
        return 0.5 * np.einsum("ni,ij,nj->n", x, P, x) + const

    def df(x):
        return x @ P

    def d2f(x):
        return np.broadcast_to(P, (x.shape[0], d, d)).copy()

    return Potential(
        f, df, d2f, d,
        convexity_lower_bound=float(eig[0]),
        directional_upper_bound=float(eig[-1]),
        even=True, unconditional=diagonal,
        modulus=lambda r, k=float(eig[0]): k * np.asarray(r, float) ** 2,
        family="quadratic", params={"precision": P.tolist(), "const": const},
    )


def gaussian(dim: int = 1, sigma: float = 1.0) -> Potential:
    """Normalised potential of N(0, sigma^2 Id)."""
    if dim < 1:
        raise ValueError("dimension must be at least 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    const = 0.5 * dim * math.log(2 * math.pi * sigma**2)
    p = quadratic(np.full(dim, 1.0 / sigma**2), const=const)
    return _relabel(p, "quadratic", {"precision": p.params["precision"], "const": const,
                                     "sigma": sigma, "normalized": True})


def power_sum(dim: int = 1, coef: float = 1.0, power: int = 4) -> Potential:
    """``coef * sum_i x_i^power`` for an even power >= 2."""
    if power % 2 or power < 2:
        raise ValueError("power must be an even integer >= 2")
    k = power

    def ipow(x, j):
        # repeated multiplication; much faster than the generic float power
        out = np.ones_like(x)
        for _ in range(j):
            out = out * x
        return out

    def f(x):
        return coef * np.sum(ipow(x, k), axis=1)

    def df(x):
        return coef * k * ipow(x, k - 1)

    def d2f(x):
        out = np.zeros((x.shape[0], dim, dim))
        idx = np.arange(dim)
        out[:, idx, idx] = coef * k * (k - 1) * ipow(x, k - 2)
        return out

    if k == 2:
        mod = lambda r: 2 * coef * np.asarray(r, float) ** 2 / 1.0
    else:
        # sum_i 2 coef y_i^k >= 2 coef |y|^k / dim^(k/2 - 1)
        mod = lambda r: 2 * coef * np.asarray(r, float) ** k / dim ** (k / 2 - 1)
    return Potential(
        f, df, d2f, dim,
        convexity_lower_bound=2 * coef if k == 2 else 0.0,
        even=True, unconditional=True, modulus=mod,
        family="power", params={"coef": coef, "power": k},
    )


def radial_power(dim: int = 2, coef: float = 1.0) -> Potential:
    """``coef * |x|^4`` (convex, rotation invariant)."""

    def f(x):
        return coef * np.sum(x * x, axis=1) ** 2

    def df(x):
        return 4 * coef * np.sum(x * x, axis=1)[:, None] * x

    def d2f(x):
        r2 = np.sum(x * x, axis=1)
        eye = np.eye(dim)[None]
        return 4 * coef * (r2[:, None, None] * eye + 2 * np.einsum("ni,nj->nij", x, x))

    return Potential(f, df, d2f, dim, convexity_lower_bound=0.0, even=True,
                     unconditional=True, family="radial_power",
                     params={"coef": coef})


def quartic(dim: int = 1, lam: float = 1.0, sigma: float = 1.0) -> Potential:
    """``|x|^2/(2 sigma^2) + lam * sum_i x_i^4`` (unnormalised)."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    p = add_potentials(quadratic(np.full(dim, 1.0 / sigma**2)), power_sum(dim, lam))
    k = 1.0 / sigma**2
    return _relabel(p, "quartic", {"lambda": lam, "sigma": sigma},
                    modulus=lambda r: k * np.asarray(r, float) ** 2
                    + 2 * lam * np.asarray(r, float) ** 4 / dim)


def exponential(rate: float = 1.0) -> Potential:
    """Normalised potential ``rate*x - log(rate)`` of the exponential law on [0, inf)."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    lr = math.log(rate)
    return Potential(
        lambda x: rate * x[:, 0] - lr,
        lambda x: np.full_like(x, rate),
        lambda x: np.zeros((x.shape[0], 1, 1)),
        1, lower=(0.0,), upper=(math.inf,),
        convexity_lower_bound=0.0, directional_upper_bound=0.0,
        family="exponential", params={"rate": rate, "normalized": True},
    )


def linear_tilt(slope: float) -> Potential:
    """``slope * x`` on the whole line (used as g in exponential-law examples)."""
    return Potential(
        lambda x: slope * x[:, 0],
        lambda x: np.full_like(x, slope),
        lambda x: np.zeros((x.shape[0], 1, 1)),
        1, convexity_lower_bound=0.0, directional_upper_bound=0.0,
        family="linear", params={"slope": slope},
    )


def constant(c: float = 0.0, dim: int = 1, lower=None, upper=None) -> Potential:
    return Potential(
        lambda x: np.full(x.shape[0], float(c)),
        lambda x: np.zeros_like(x),
        lambda x: np.zeros((x.shape[0], dim, dim)),
        dim, lower=lower, upper=upper,
        convexity_lower_bound=0.0, directional_upper_bound=0.0,
        even=True, unconditional=True,
        modulus=lambda r: np.zeros_like(np.asarray(r, float)),
        family="constant", params={"c": c},
    )


def log_cosine(A: float = 1.0) -> Potential:
    """``W(x) = -log cos(Ax)`` on (-pi/2A, pi/2A); ``e^W dx`` is the model measure."""
    if A <= 0:
        raise ValueError("A must be positive")
    half = math.pi / (2 * A)
    return Potential(
        lambda x: -np.log(np.cos(A * x[:, 0])),
        lambda x: A * np.tan(A * x),
        lambda x: (A**2 / np.cos(A * x) ** 2)[:, :, None],
        1, lower=(-half,), upper=(half,),
        convexity_lower_bound=A**2, even=True, unconditional=True,
        family="log_cosine", params={"A": A},
    )


def smoothed_abs(eps: float = 1e-2) -> Potential:
    """``sqrt(x^2 + eps^2) - eps``: a convex, smooth stand-in for |x|."""

    def f(x):
        return np.sqrt(x[:, 0] ** 2 + eps**2) - eps

    def df(x):
        return x / np.sqrt(x**2 + eps**2)

    def d2f(x):
        return (eps**2 / (x**2 + eps**2) ** 1.5)[:, :, None]

    return Potential(f, df, d2f, 1, convexity_lower_bound=0.0, even=True,
                     unconditional=True, family="smoothed_abs", params={"eps": eps})


def _relabel(p: Potential, family: str, params: dict, **over) -> Potential:
    kw = dict(
        f=p.f, df=p.df, d2f=p.d2f, dim=p.dim, lower=p.lower, upper=p.upper,
        convexity_lower_bound=p.convexity_lower_bound,
        directional_upper_bound=p.directional_upper_bound,
        even=p.even, unconditional=p.unconditional, modulus=p.modulus,
        family=family, params=params, components=p.components,
    )
    kw.update(over)
    return Potential(**kw)


def add_potentials(Q: Potential, P: Potential) -> Potential:
    """Pointwise sum ``Q + P``; declared metadata combines conservatively."""
    if Q.dim != P.dim:
        raise ValueError("potentials live in different dimensions")
    lower = tuple(max(a, b) for a, b in zip(Q.lower, P.lower))
    upper = tuple(min(a, b) for a, b in zip(Q.upper, P.upper))
    if any(lo >= hi for lo, hi in zip(lower, upper)):
        raise ValueError("potential domains do not intersect in an open set")

    def opt_sum(a, b):
        return None if a is None or b is None else a + b

    if Q.modulus is not None and P.modulus is not None:
        modulus = lambda r, a=Q.modulus, b=P.modulus: a(r) + b(r)
    else:
        modulus = None
    return Potential(
        f=lambda x: Q.f(x) + P.f(x),
        df=lambda x: Q.df(x) + P.df(x),
        d2f=lambda x: Q.d2f(x) + P.d2f(x),
        dim=Q.dim, lower=lower, upper=upper,
        convexity_lower_bound=opt_sum(Q.convexity_lower_bound, P.convexity_lower_bound),
        directional_upper_bound=opt_sum(Q.directional_upper_bound, P.directional_upper_bound),
        even=Q.even and P.even,
        unconditional=Q.unconditional and P.unconditional,
        modulus=modulus, family="sum", params={},
        components=(Q, P),
    )


# --------------------------------------------------------------------------
# audits


def audit_convexity(p: Potential, claimed_K: float, points, tol: float = AUDIT_TOL) -> ReportEntry:
    """Check ``min eig D^2 p >= claimed_K - tol`` over the sample points."""
    pts, _ = as_points(points, p.dim)
    if pts.shape[0] == 0:
        raise ValueError("empty sample set")
    if not np.all(p.contains(pts)):
        raise ValueError("audit points must lie in the potential's domain")
    H = p.d2f(pts)
    min_eig = float(np.min(np.linalg.eigvalsh(H)[:, 0]))
    return make_entry(
        "audit_convexity", "convexity-audit", min_eig, claimed_K, tol,
        direction="lower", tol_mode="abs",
        inputs={"family": p.family, "params": p.params, "n_points": int(pts.shape[0])},
    )


def second_difference(p: Potential, x, y) -> np.ndarray:
    """Centred second difference ``p(x+y) + p(x-y) - 2 p(x)``."""
    xs, lead = as_points(x, p.dim)
    ys, _ = as_points(y, p.dim)
    xs, ys = np.broadcast_arrays(xs, ys)
    plus, minus = xs + ys, xs - ys
    if not (np.all(p.contains(plus)) and np.all(p.contains(minus))):
        raise ValueError("second difference leaves the potential's domain")
    out = p.f(plus) + p.f(minus) - 2 * p.f(xs)
    return out.reshape(lead)


def derivative_errors(p: Potential, points, rel_step: float = 1e-5) -> tuple[float, float]:
    """Largest relative discrepancy between analytic derivatives and central
    finite differences (step ``rel_step * (1 + |x|)``)."""
    pts, _ = as_points(points, p.dim)
    d = p.dim
    g = p.df(pts)
    H = p.d2f(pts)
    g_err = 0.0
    h_err = 0.0
    step = rel_step * (1 + np.linalg.norm(pts, axis=1))
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        shift = step[:, None] * e
        fd = (p.f(pts + shift) - p.f(pts - shift)) / (2 * step)
        g_err = max(g_err, float(np.max(np.abs(fd - g[:, i]) / np.maximum(1.0, np.abs(g[:, i])))))
        fdh = (p.df(pts + shift) - p.df(pts - shift)) / (2 * step[:, None])
        h_err = max(h_err, float(np.max(np.abs(fdh - H[:, :, i]) / np.maximum(1.0, np.abs(H[:, :, i])))))
    return g_err, h_err


def support_box(p: Potential, cutoff: float = 690.0, r0: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Box outside of which ``p - min p`` exceeds ``cutoff`` along every axis.

    Finite domain bounds are kept as they are.
    """
    d = p.dim
    centre = np.clip(np.zeros(d), np.asarray(p.lower), np.asarray(p.upper))
    centre = np.where(np.isfinite(centre), centre, 0.0)
    probe = [centre]
    for i in range(d):
        for s in (-1.0, 1.0):
            for r in np.linspace(0.05, 1.0, 20):
                q = centre.copy()
                q[i] += s * r
                probe.append(q)
    probe = np.array(probe)
    probe = probe[p.contains(probe)]
    vmin = float(np.min(p.f(probe)))
    lo = np.array(p.lower, dtype=float)
    hi = np.array(p.upper, dtype=float)
    for i in range(d):
        for s, bound in ((-1.0, lo), (1.0, hi)):
            if np.isfinite(bound[i]):
                continue
            e = np.zeros(d)
            e[i] = s

            def excess(r):
                return float(p.f((centre + r * e)[None])[0]) - vmin - cutoff

            r = r0
            while excess(r) < 0:
                r *= 2
                if r > 1e6:
                    raise ValueError("potential does not grow; cannot truncate")
            a, b = r / 2 if r > r0 else 0.0, r
            for _ in range(80):
                m = 0.5 * (a + b)
                if excess(m) < 0:
                    a = m
                else:
                    b = m
            bound[i] = centre[i] + s * b
    return lo, hi


# --------------------------------------------------------------------------
# convex bodies


@dataclass(frozen=True, eq=False)
class ConvexBody:
    """A convex set containing the origin, described by its radial function."""

    membership: Callable[[np.ndarray], np.ndarray]
    radial_function: Callable[[np.ndarray], np.ndarray]
    diameter: float
    symmetric: bool
    dim: int
    name: str = "body"
    bounding_box: tuple = None
    volume: Optional[float] = None
    params: dict = field(default_factory=dict)

    def contains(self, x) -> np.ndarray:
        pts, lead = as_points(x, self.dim)
        return self.membership(pts).reshape(lead)

    def scaled(self, s: float) -> "ConvexBody":
        if s <= 0:
            raise ValueError("scale must be positive")
        box = None if self.bounding_box is None else tuple(
            (s * lo, s * hi) for lo, hi in self.bounding_box)
        vol = None if self.volume is None else self.volume * s**self.dim
        return ConvexBody(
            membership=lambda p, m=self.membership: m(p / s),
            radial_function=lambda u, r=self.radial_function: s * r(u),
            diameter=s * self.diameter, symmetric=self.symmetric, dim=self.dim,
            name=f"{s:g}*{self.name}", bounding_box=box, volume=vol,
            params={**self.params, "scale": s * self.params.get("scale", 1.0)},
        )


def square(halfwidth: float = 1.0, dim: int = 2) -> ConvexBody:
    """The cube ``[-halfwidth, halfwidth]^dim``."""
    hw = float(halfwidth)
    return ConvexBody(
        membership=lambda p: np.all(np.abs(p) <= hw * (1 + 1e-12), axis=1),
        radial_function=lambda u: hw / np.max(np.abs(np.atleast_2d(u)), axis=1),
        diameter=2 * hw * math.sqrt(dim), symmetric=True, dim=dim,
        name="square" if dim == 2 else "cube",
        bounding_box=tuple((-hw, hw) for _ in range(dim)),
        volume=(2 * hw) ** dim, params={"halfwidth": hw},
    )


def interval(halfwidth: float = 1.0) -> ConvexBody:
    return square(halfwidth, dim=1)


def disk(radius: float = 1.0, dim: int = 2) -> ConvexBody:
    rad = float(radius)
    vol = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * rad**dim
    return ConvexBody(
        membership=lambda p: np.sum(p * p, axis=1) <= rad**2 * (1 + 1e-12),
        radial_function=lambda u: np.full(np.atleast_2d(u).shape[0], rad),
        diameter=2 * rad, symmetric=True, dim=dim, name="disk",
        bounding_box=tuple((-rad, rad) for _ in range(dim)), volume=vol,
        params={"radius": rad},
    )


def ellipsoid(semi_axes: Sequence[float]) -> ConvexBody:
    ax = np.asarray(semi_axes, dtype=float)
    dim = ax.size
    vol = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * float(np.prod(ax))
    return ConvexBody(
        membership=lambda p: np.sum((p / ax) ** 2, axis=1) <= 1 + 1e-12,
        radial_function=lambda u: 1.0 / np.sqrt(np.sum((np.atleast_2d(u) / ax) ** 2, axis=1)),
        diameter=2 * float(ax.max()), symmetric=True, dim=dim, name="ellipsoid",
        bounding_box=tuple((-a, a) for a in ax), volume=vol,
        params={"semi_axes": ax.tolist()},
    )


def strip(halfwidth: float = 1.0, axis: int = 0, dim: int = 2) -> ConvexBody:
    """The slab ``{|x_axis| <= halfwidth}`` (unbounded)."""
    hw = float(halfwidth)

    def radial(u):
        u = np.atleast_2d(u)
        with np.errstate(divide="ignore"):
            return hw / np.abs(u[:, axis])

    return ConvexBody(
        membership=lambda p: np.abs(p[:, axis]) <= hw,
        radial_function=radial, diameter=math.inf, symmetric=True, dim=dim,
        name="strip", params={"halfwidth": hw, "axis": axis},
    )


def whole_space(dim: int = 2) -> ConvexBody:
    return ConvexBody(
        membership=lambda p: np.ones(p.shape[0], dtype=bool),
        radial_function=lambda u: np.full(np.atleast_2d(u).shape[0], math.inf),
        diameter=math.inf, symmetric=True, dim=dim, name="whole_space",
    )


def midpoint_audit(body: ConvexBody, rng: np.random.Generator, n: int = 2000,
                   scale: float = 3.0) -> bool:
    """Spot-check convexity (and symmetry when declared) on random members."""
    pts = rng.uniform(-scale, scale, size=(8 * n, body.dim))
    mem = pts[body.membership(pts)][: 2 * n]
    if mem.shape[0] < 2:
        return True
    half = mem.shape[0] // 2
    mid = 0.5 * (mem[:half] + mem[half: 2 * half])
    ok = bool(np.all(body.membership(mid)))
    if body.symmetric:
        ok = ok and bool(np.all(body.membership(-mem)))
    return ok


# --------------------------------------------------------------------------
# measures


KINDS = ("density", "uniform_on_body", "radial", "model_nu", "lebesgue_halfline")


@dataclass(frozen=True, eq=False)
class MeasureSpec:
    """Description of a reference or target measure.

    ``density`` measures are ``exp(-V - log_norm) dx``; ``model_nu`` is
    ``exp(+W) dx`` with ``W = -log cos(Ax)``; ``radial`` measures are
    ``Psi(|x|) dx``.
    """

    kind: str
    dim: int
    potential: Optional[Potential] = None
    body: Optional[ConvexBody] = None
    radial_density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    A: Optional[float] = None
    mass: str = "probability"
    log_norm: float = 0.0
    label: str = ""
    params: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.mass not in ("probability", "infinite", "unnormalized"):
            raise ValueError(f"unknown mass type {self.mass!r}")

    @property
    def is_probability(self) -> bool:
        return self.mass == "probability"

    @property
    def domain(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "density":
            return np.array(self.potential.lower, float), np.array(self.potential.upper, float)
        if self.kind == "uniform_on_body":
            box = self.body.bounding_box
            return np.array([b[0] for b in box]), np.array([b[1] for b in box])
        if self.kind == "model_nu":
            h = math.pi / (2 * self.A)
            return np.array([-h]), np.array([h])
        if self.kind == "lebesgue_halfline":
            return np.array([0.0]), np.array([math.inf])
        return np.full(self.dim, -math.inf), np.full(self.dim, math.inf)

    def log_density(self, x) -> np.ndarray:
        pts, lead = as_points(x, self.dim)
        if self.kind == "density":
            out = np.full(pts.shape[0], -np.inf)
            ok = self.potential.contains(pts)
            out[ok] = -self.potential.f(pts[ok]) - self.log_norm
        elif self.kind == "uniform_on_body":
            out = np.where(self.body.membership(pts), -math.log(self.body.volume), -np.inf)
        elif self.kind == "model_nu":
            h = math.pi / (2 * self.A)
            inside = np.abs(pts[:, 0]) < h
            out = np.full(pts.shape[0], -np.inf)
            out[inside] = -np.log(np.cos(self.A * pts[inside, 0]))
        elif self.kind == "lebesgue_halfline":
            out = np.where(pts[:, 0] >= 0, 0.0, -np.inf)
        else:
            r = np.linalg.norm(pts, axis=1)
            with np.errstate(divide="ignore"):
                out = np.log(self.radial_density(r))
        return out.reshape(lead)

    def density(self, x) -> np.ndarray:
        return np.exp(self.log_density(x))


def density_measure(potential: Potential, *, normalize: bool = True, label: str = "",
                    mass: str | None = None, params: dict | None = None) -> MeasureSpec:
    """``exp(-V) dx``, normalised to a probability measure unless told otherwise."""
    if mass is None:
        mass = "probability" if normalize else "unnormalized"
    log_norm = 0.0
    if mass == "probability" and not potential.params.get("normalized", False):
        log_norm = math.log(normalizing_constant(potential))
    return MeasureSpec("density", potential.dim, potential=potential, mass=mass,
                       log_norm=log_norm, label=label or potential.family,
                       params=params or {})


def make_standard_gaussian(d: int = 1) -> MeasureSpec:
    """Standard Gaussian measure on R^d."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    return MeasureSpec("density", d, potential=gaussian(d), label="gaussian",
                       params={"family": "gaussian", "sigma": 1.0, "dim": d})


def make_gaussian(d: int = 1, sigma: float = 1.0) -> MeasureSpec:
    return MeasureSpec("density", d, potential=gaussian(d, sigma), label="gaussian",
                       params={"family": "gaussian", "sigma": sigma, "dim": d})


def make_uniform(body: ConvexBody) -> MeasureSpec:
    if body.volume is None or not math.isfinite(body.volume):
        raise ValueError("uniform measure needs a bounded body with known volume")
    return MeasureSpec("uniform_on_body", body.dim, body=body, label=f"uniform({body.name})",
                       params={"family": "uniform", "body": body.name, **body.params})


def make_model_nu(A: float = 1.0) -> MeasureSpec:
    """The log-convex model measure ``dx / cos(Ax)`` on (-pi/2A, pi/2A)."""
    if A <= 0:
        raise ValueError("A must be positive")
    return MeasureSpec("model_nu", 1, potential=log_cosine(A), A=float(A), mass="infinite",
                       label=f"nu_{A:g}", params={"family": "cosine_model", "A": A})


def make_lebesgue_halfline(level: float = 1.0, slope: float = 0.0) -> MeasureSpec:
    """Lebesgue measure on [0, inf), or ``(level + slope*x) dx`` there."""
    if level <= 0 or slope < 0:
        raise ValueError("half-line density must stay positive")
    if level == 1.0 and slope == 0.0:
        return MeasureSpec("lebesgue_halfline", 1, mass="infinite", label="lebesgue[0,inf)",
                           params={"family": "halfline", "level": 1.0, "slope": 0.0})
    pot = Potential(
        lambda x: -np.log(level + slope * x[:, 0]),
        lambda x: -slope / (level + slope * x),
        lambda x: (slope**2 / (level + slope * x) ** 2)[:, :, None],
        1, lower=(0.0,), upper=(math.inf,), family="halfline",
        params={"level": level, "slope": slope},
    )
    return MeasureSpec("density", 1, potential=pot, mass="infinite",
                       label=f"halfline({level:g}+{slope:g}x)",
                       params={"family": "halfline", "level": level, "slope": slope})


def make_radial(psi: Callable[[np.ndarray], np.ndarray], dim: int, label: str = "radial",
                params: dict | None = None) -> MeasureSpec:
    return MeasureSpec("radial", dim, radial_density=psi, mass="infinite", label=label,
                       params=params or {})


def normalizing_constant(p: Potential, panels: int = 256, order: int = 16) -> float:
    """``int exp(-V)`` over the region where it is numerically non-negligible."""
    from ._quad import gauss_legendre_panels

    if p.dim == 1:
        lo, hi = support_box(p)
        x, w = gauss_legendre_panels(lo[0], hi[0], 4 * panels, order)
        v = p.f(x[:, None])
        vmin = v.min()
        return float(np.sum(w * np.exp(-(v - vmin)))) * math.exp(-vmin)
    if p.dim == 2:
        lo, hi = support_box(p, cutoff=60.0)
        x1, w1 = gauss_legendre_panels(lo[0], hi[0], panels, 8)
        x2, w2 = gauss_legendre_panels(lo[1], hi[1], panels, 8)
        X1, X2 = np.meshgrid(x1, x2, indexing="ij")
        v = p.f(np.stack([X1.ravel(), X2.ravel()], 1)).reshape(X1.shape)
        vmin = v.min()
        return float(w1 @ np.exp(-(v - vmin)) @ w2) * math.exp(-vmin)
    raise ValueError("normalisation is implemented for d <= 2")


# --------------------------------------------------------------------------
# radial densities


def radial_psi(name: str, coef: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Built-in radial profiles Psi(r)."""
    if name == "constant":
        return lambda r: np.full(np.shape(r), float(coef))
    if name == "exp":
        return lambda r: np.exp(coef * np.asarray(r, float))
    if name == "inv1p":
        return lambda r: 1.0 / (1.0 + coef * np.asarray(r, float))
    if name == "affine":
        return lambda r: 1.0 + coef * np.asarray(r, float)
    raise ValueError(f"unknown radial profile {name!r}")
