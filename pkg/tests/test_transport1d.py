import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from contraction_lab import measures as M
from contraction_lab import transport1d as T1

GAUSS = M.make_standard_gaussian(1)


def test_cdf_oracles():
    assert T1.cdf(GAUSS, 0.0) == pytest.approx(0.5, abs=1e-15)
    expo = M.density_measure(M.exponential(1.0))
    assert T1.cdf(expo, 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-14)


def test_cdf_far_tails_keep_relative_precision():
    # Phi(-30) ~ 4.9e-198
    from scipy.special import log_ndtr
    val = T1.cdf(GAUSS, -30.0)
    assert math.log(val) == pytest.approx(float(log_ndtr(-30.0)), rel=1e-10)


@pytest.mark.parametrize("x0", [0.3, 1.0, 1.4])
def test_nu_mass_closed_form(x0):
    nu = M.make_model_nu(1.0)
    want = math.log(math.tan(x0 / 2 + math.pi / 4))
    assert T1.cdf(nu, x0) - T1.cdf(nu, 0.0) == pytest.approx(want, rel=1e-12)
    quad, _ = integrate.quad(lambda s: 1 / math.cos(s), 0, x0, epsabs=1e-15, epsrel=1e-13, limit=200)
    assert quad == pytest.approx(want, rel=1e-12)


def test_identity_map():
    T = T1.monotone_map(GAUSS, M.make_standard_gaussian(1))
    x = np.linspace(-6, 6, 101)
    assert np.max(np.abs(T(x) - x)) < 1e-12
    assert np.max(np.abs(T.jacobian(x) - 1)) < 1e-12


def test_gaussian_scaling():
    T = T1.monotone_map(GAUSS, M.make_gaussian(1, 0.5))
    x = np.linspace(-8, 8, 401)
    assert np.max(np.abs(T(x) - 0.5 * x)) < 1e-12
    assert np.max(np.abs(T.jacobian(x) - 0.5)) < 1e-12
    S = T1.inverse_map(T)
    assert np.max(np.abs(S(0.5 * x) - x)) < 1e-11
    assert np.max(np.abs(S.jacobian(0.5 * x) - 2.0)) < 1e-10


def test_halfline_to_density_two():
    T = T1.monotone_map(M.make_lebesgue_halfline(1.0, 0.0), M.make_lebesgue_halfline(2.0, 0.0))
    x = np.linspace(0, 50, 11)
    assert np.allclose(T(x), x / 2, atol=1e-13)
    assert np.allclose(T.jacobian(x), 0.5)


def test_exponential_tilt():
    c = 0.5
    T = T1.monotone_map(M.density_measure(M.exponential(1 + c)), M.density_measure(M.exponential(1.0)))
    x = np.linspace(0, 20, 201)
    assert np.allclose(T(x), (1 + c) * x, rtol=1e-12, atol=1e-13)
    S = T1.inverse_map(T)
    assert np.max(S.jacobian(T(x))) == pytest.approx(1 / (1 + c), rel=1e-10)


def test_mixed_finite_infinite_rejected():
    with pytest.raises(ValueError):
        T1.monotone_map(GAUSS, M.make_model_nu(1.0))


def test_potential_derivative_is_map():
    T = T1.monotone_map(GAUSS, M.density_measure(M.quartic(1, 1.0, 1.0)))
    x = np.linspace(-3, 3, 61)
    h = 1e-5
    fd = (T.potential(x + h) - T.potential(x - h)) / (2 * h)
    assert np.max(np.abs(fd - T(x))) < 1e-7


@settings(max_examples=25, deadline=None)
@given(lam=st.floats(0.01, 20.0), a=st.floats(-5, 5), w=st.floats(0.01, 4))
def test_push_forward_of_intervals(lam, a, w):
    """mu(T^{-1}(I)) = nu(I) for intervals I, and T' <= 1 (W'' >= 1)."""
    tgt = M.density_measure(M.quartic(1, lam, 1.0))
    T = T1.monotone_map(GAUSS, tgt)
    lo, hi = a, a + w
    S = T1.inverse_map(T)
    mu_pre = T1.cdf(GAUSS, float(S(hi))) - T1.cdf(GAUSS, float(S(lo)))
    nu_I = T1.cdf(tgt, hi) - T1.cdf(tgt, lo)
    assert mu_pre == pytest.approx(nu_I, rel=1e-9, abs=1e-14)
    x = np.linspace(-8, 8, 801)
    assert np.all(np.diff(T(x)) > 0)
    assert np.max(T.jacobian(x)) <= 1 + 1e-9


def test_tabulate_and_csv():
    T = T1.monotone_map(GAUSS, M.make_gaussian(1, 0.5))
    x, y, d, flags = T1.tabulate(T, np.linspace(-1, 1, 5))
    assert np.allclose(y, 0.5 * x) and np.allclose(d, 0.5)
    text = T1.to_csv(T, np.linspace(-1, 1, 5))
    assert text.splitlines()[0].startswith("x,")
    assert len(text.splitlines()) == 6


def test_gap_detection():
    gap = lambda x: (x[:, 0] > 0.5) & (x[:, 0] < 1.0)
    p = M.Potential(f=lambda x: np.where(gap(x), np.inf, 0.5 * x[:, 0] ** 2),
                    df=lambda x: x, d2f=lambda x: np.ones((x.shape[0], 1, 1)), dim=1)
    m = M.density_measure(p)
    with pytest.raises(ValueError):
        T1.law_of(m, check_gaps=True)
