"""Separable log-sum-exp kernels for tensor-grid Sinkhorn iterations.

``lse2(h, A1, A2)[i1, i2] = log sum_{j1, j2} exp(h[j1, j2] + A1[i1, j1] + A2[i2, j2])``

Terms more than ``CUT`` below the running maximum are skipped; they change
the result by less than ``exp(CUT)`` relative.
"""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

CUT = -50.0

try:
    import numba

    @numba.njit(cache=True)
    def _lse_rows(P, Q, cut):
        # out[a, i] = log sum_j exp(P[a, j] + Q[i, j])
        na, nj = P.shape
        ni = Q.shape[0]
        out = np.empty((na, ni))
        for a in range(na):
            for i in range(ni):
                m = -np.inf
                for j in range(nj):
                    v = P[a, j] + Q[i, j]
                    if v > m:
                        m = v
                if m == -np.inf:
                    out[a, i] = -np.inf
                    continue
                s = 0.0
                for j in range(nj):
                    v = P[a, j] + Q[i, j] - m
                    if v > cut:
                        s += np.exp(v)
                out[a, i] = m + np.log(s)
        return out

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def _lse_rows(P, Q, cut):
        return logsumexp(P[:, None, :] + Q[None, :, :], axis=2)


def lse2(h, A1, A2, cut: float = CUT):
    """Two-stage separable log-sum-exp (see module docstring)."""
    h = np.ascontiguousarray(h, dtype=float)
    t = _lse_rows(h, np.ascontiguousarray(A2), cut)  # (m1, n2)
    return _lse_rows(np.ascontiguousarray(t.T), np.ascontiguousarray(A1), cut).T


def lse2_reference(h, A1, A2):
    """Dense numpy version of ``lse2`` for testing."""
    t = logsumexp(h[:, None, :] + A2[None, :, :], axis=2)
    return logsumexp(A1[:, :, None] + t[None, :, :], axis=1)
