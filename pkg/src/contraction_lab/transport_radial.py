"""Radial transport from Lebesgue measure to ``Psi(|x|) dx``.

The map is ``T(x) = phi(|x|) x/|x|`` where ``phi`` matches the mass of balls:
``d * int_0^phi s^(d-1) Psi(s) ds = r^d``. Its inverse profile is
``psi(r) = (d * int_0^r s^(d-1) Psi(s) ds)^(1/d)``.
"""
from __future__ import annotations

import csv
import io
import math
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from ._quad import gauss_legendre_panels
from .report import ReportEntry, make_entry, status_entry
from .transport1d import TransportMap

CRITERION_TOL = 1e-8
EIG_TOL = 1e-6

_U, _W = gauss_legendre_panels(0.0, 1.0, 8, 16)


class RadialProfile:
    """Mass-matching profile ``phi`` for a radial density ``Psi`` in dimension d.

    ``phi`` is tabulated on a geometric grid and interpolated with a monotone
    cubic; every evaluation is then polished by safeguarded Newton steps on
    the exact mass-matching equation.
    """

    def __init__(self, psi: Callable[[np.ndarray], np.ndarray], d: int, r_max: float = 10.0,
                 n_table: int = 400):
        if d < 1:
            raise ValueError("dimension must be at least 1")
        self.psi = psi
        self.d = int(d)
        p0 = float(np.asarray(psi(np.array([0.0])))[0])
        if not p0 > 0:
            raise ValueError("Psi must be positive")
        self.psi0 = p0
        self.r_max = float(r_max)
        grid = np.concatenate([[0.0], np.geomspace(1e-6, r_max, n_table)])
        phi = self._solve(grid, grid * p0 ** (-1.0 / d))
        self._spline = PchipInterpolator(grid, phi)

    # exact pieces ---------------------------------------------------------
    def inverse_profile(self, s):
        """``psi(s) = (d int_0^s u^(d-1) Psi(u) du)^(1/d)``."""
        s = np.asarray(s, float)
        flat = s.ravel()
        nodes = flat[:, None] * _U[None]
        vals = np.asarray(self.psi(nodes), float)
        if np.any(~(vals > 0)):
            raise ValueError("Psi must be positive on the integration range")
        inner = (vals * _U[None] ** (self.d - 1)) @ _W
        return (flat * (self.d * inner) ** (1.0 / self.d)).reshape(s.shape)

    def mass(self, s):
        """``d int_0^s u^(d-1) Psi(u) du``."""
        return self.inverse_profile(s) ** self.d

    def _solve(self, r, guess):
        r = np.asarray(r, float).ravel()
        phi = np.maximum(np.asarray(guess, float).ravel(), 0.0)
        lo = np.zeros_like(r)
        hi = np.full_like(r, np.inf)
        for _ in range(200):
            g = self.inverse_profile(phi) - r
            lo = np.where(g <= 0, phi, lo)
            hi = np.where(g > 0, phi, hi)
            dpsi = self._dinv(phi)
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = phi - g / dpsi
            bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
            mid = np.where(np.isfinite(hi), 0.5 * (lo + hi), 2 * lo + 1.0)
            cand = np.where(bad, mid, cand)
            cand = np.where(r == 0, 0.0, cand)
            if np.all(np.abs(cand - phi) <= 1e-15 * (1 + np.abs(phi))):
                phi = cand
                break
            phi = cand
        else:
            raise ValueError("mass-matching root find did not converge")
        return phi

    def _dinv(self, s):
        """Derivative of ``psi``: ``s^(d-1) Psi(s) / psi(s)^(d-1)``."""
        s = np.asarray(s, float)
        out = np.full(s.shape, self.psi0 ** (1.0 / self.d))
        pos = s > 0
        if np.any(pos):
            sp = s[pos]
            out[pos] = (sp / self.inverse_profile(sp)) ** (self.d - 1) * np.asarray(self.psi(sp), float)
        return out

    # public ---------------------------------------------------------------
    def phi(self, r):
        r = np.asarray(r, float)
        if np.any(r < 0):
            raise ValueError("radius must be nonnegative")
        guess = np.where(r <= self.r_max, self._spline(np.minimum(r, self.r_max)),
                         r * self.psi0 ** (-1.0 / self.d))
        return self._solve(r, guess).reshape(r.shape)

    __call__ = phi

    def dphi(self, r, phi=None):
        """``phi'(r) = r^(d-1) / (phi^(d-1) Psi(phi))`` (limit at r = 0)."""
        r = np.asarray(r, float)
        phi = self.phi(r) if phi is None else np.asarray(phi, float)
        out = np.full(r.shape, self.psi0 ** (-1.0 / self.d))
        pos = r > 0
        out[pos] = (r[pos] / phi[pos]) ** (self.d - 1) / np.asarray(self.psi(phi[pos]), float)
        return out


def radial_profile(psi, d: int, r) -> np.ndarray:
    """``phi(r)`` solving ``d int_0^phi s^(d-1) Psi(s) ds = r^d``."""
    r = np.asarray(r, float)
    rmax = float(np.max(r)) if r.size else 1.0
    return RadialProfile(psi, d, r_max=max(rmax, 1e-3)).phi(r)


def radial_jacobian_eigs(profile: RadialProfile, r) -> tuple[np.ndarray, np.ndarray]:
    """Radial and tangential eigenvalues ``(phi'(r), phi(r)/r)`` of DT."""
    r = np.asarray(r, float)
    phi = profile.phi(r)
    dphi = profile.dphi(r, phi)
    ratio = np.where(r > 0, phi / np.where(r > 0, r, 1.0), profile.psi0 ** (-1.0 / profile.d))
    return dphi, ratio


def criterion_values(psi, d: int, r) -> np.ndarray:
    """Finite-difference ``(r Psi(r)^(1/(d-1)))'``."""
    if d < 2:
        raise ValueError("the radial criterion needs d >= 2")
    r = np.asarray(r, float)
    e = 1.0 / (d - 1)

    def g(s):
        return s * np.asarray(psi(s), float) ** e

    h = 1e-5 * np.maximum(r, 1.0)
    central = r >= h
    out = np.empty(r.shape)
    out[central] = (g(r[central] + h[central]) - g(r[central] - h[central])) / (2 * h[central])
    fw = ~central
    if np.any(fw):
        rf, hf = r[fw], h[fw]
        out[fw] = (-3 * g(rf) + 4 * g(rf + hf) - g(rf + 2 * hf)) / (2 * hf)
    return out


def contraction_criterion(psi, d: int, r_grid, tol: float = EIG_TOL,
                          name: str = "radial_contraction") -> ReportEntry:
    """Report max eigenvalue of DT on the grid, gated by the sufficient criterion.

    When ``(r Psi^(1/(d-1)))' >= 1`` holds on the grid the entry is a real
    check of ``max(phi', phi/r) <= 1 + tol``; otherwise it is a diagnostic
    with status ``not_applicable``.
    """
    r = np.asarray(r_grid, float)
    if r.size == 0:
        raise ValueError("empty radius grid")
    crit = criterion_values(psi, d, r)
    prof = RadialProfile(psi, d, r_max=max(float(r.max()), 1e-3))
    dphi, ratio = radial_jacobian_eigs(prof, r)
    max_eig = float(np.max(np.maximum(dphi, ratio)))
    crit_min = float(np.min(crit))
    holds = crit_min >= 1.0 - CRITERION_TOL
    details = {"criterion_min": crit_min, "criterion_holds": holds, "max_eigenvalue": max_eig,
               "r_min": float(r.min()), "r_max": float(r.max()), "n": int(r.size)}
    inputs = {"d": d, "r": [float(r.min()), float(r.max()), int(r.size)],
              "psi_probe": np.asarray(psi(np.linspace(0, r.max(), 7)), float)}
    if not holds:
        return make_entry(name, "radial-criterion", max_eig, 1.0, tol, inputs=inputs,
                          details=details, status="not_applicable")
    return make_entry(name, "radial-criterion", max_eig, 1.0, tol, tol_mode="abs",
                      inputs=inputs, details=details)


def radial_map(profile: RadialProfile) -> TransportMap:
    d = profile.d

    def _split(x):
        x = np.atleast_2d(np.asarray(x, float))
        r = np.linalg.norm(x, axis=1)
        n = np.where(r[:, None] > 0, x / np.where(r > 0, r, 1.0)[:, None], 0.0)
        return x, r, n

    def forward(x):
        x, r, n = _split(x)
        return profile.phi(r)[:, None] * n

    def jacobian(x):
        x, r, n = _split(x)
        dphi, ratio = radial_jacobian_eigs(profile, r)
        nn = np.einsum("ni,nj->nij", n, n)
        eye = np.eye(d)[None]
        return dphi[:, None, None] * nn + ratio[:, None, None] * (eye - nn)

    def inverse(y):
        y, s, n = _split(y)
        return profile.inverse_profile(s)[:, None] * n

    def potential(x):
        x, r, _ = _split(x)
        nodes = r[:, None] * _U[None]
        return r * (profile.phi(nodes.ravel()).reshape(nodes.shape) @ _W)

    return TransportMap(forward, jacobian, "radial", (0.0, profile.r_max), dim=d,
                        inverse=inverse, potential=potential, meta={"d": d})


def to_csv(psi, d: int, r_grid) -> str:
    r = np.asarray(r_grid, float)
    prof = RadialProfile(psi, d, r_max=max(float(r.max()), 1e-3))
    phi = prof.phi(r)
    dphi, ratio = radial_jacobian_eigs(prof, r)
    crit = criterion_values(psi, d, r) if d >= 2 else np.full(r.shape, math.nan)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "phi", "dphi", "phi_over_r", "criterion"])
    for row in zip(r, phi, dphi, ratio, crit):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()
