import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from contraction_lab import measures as M


def test_standard_gaussian_density_at_mode():
    m = M.make_standard_gaussian(1)
    assert float(m.density(0.0)) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)


def test_gaussian_hessian_is_identity():
    p = M.gaussian(2)
    H = p.hessian(np.random.default_rng(0).normal(size=(50, 2)))
    assert np.allclose(np.linalg.eigvalsh(H)[:, 0], 1.0)


def test_gaussian_mass_on_window():
    m = M.make_standard_gaussian(1)
    val, _ = integrate.quad(lambda x: float(m.density(x)), -8, 8, limit=200,
                            epsabs=1e-15, epsrel=1e-13)
    assert abs(val - 1) < 1e-12


def test_add_potentials_identity_and_hessian():
    Q = M.gaussian(1)
    s = M.add_potentials(Q, M.constant(0.0))
    assert s.convexity_lower_bound == 1.0
    P = M.power_sum(1, 1.0, 4)
    s2 = M.add_potentials(Q, P)
    assert float(s2.hessian(1.0)) == pytest.approx(13.0)


def test_smoothed_abs_keeps_curvature_bound():
    s = M.add_potentials(M.gaussian(1), M.smoothed_abs(1e-2))
    assert s.convexity_lower_bound == 1.0
    e = M.audit_convexity(s, 1.0, np.linspace(-5, 5, 1001))
    assert e.status == "pass"


@pytest.mark.parametrize("pot, K, ok", [
    (M.gaussian(1), 1.0, True),
    (M.power_sum(1, 1.0, 4), 1.0, False),
    (M.quartic(1, 1.0, 1.0), 1.0, True),
])
def test_audit_convexity(pot, K, ok):
    e = M.audit_convexity(pot, K, np.linspace(-4, 4, 801))
    assert (e.status == "pass") is ok


def test_second_difference_oracles():
    q = M.gaussian(2)
    assert M.second_difference(q, np.array([0.3, -1.0]), np.array([0.5, 2.0])) == pytest.approx(4.25)
    p4 = M.power_sum(1, 1.0, 4)
    t = 0.7
    assert M.second_difference(p4, np.array([0.0]), np.array([t])) == pytest.approx(2 * t**4)
    assert M.second_difference(p4, np.array([1.0]), np.array([1.0])) == pytest.approx(14.0)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-3, 3), y=st.floats(-2, 2), lam=st.floats(0.0, 5.0))
def test_second_difference_dominates_curvature(x, y, lam):
    p = M.quartic(1, lam, 1.0)
    val = float(M.second_difference(p, x, y))
    assert val >= p.convexity_lower_bound * y * y - 1e-9 * (1 + abs(val))


def test_derivatives_match_finite_differences():
    for p in (M.quartic(2, 0.3, 1.0), M.radial_power(2, 0.125), M.log_cosine(1.0)):
        pts = np.random.default_rng(1).uniform(-0.5, 0.5, size=(20, p.dim))
        e1, e2 = M.derivative_errors(p, pts)
        assert e1 < 1e-6 and e2 < 1e-5


def test_normalizing_constant_quartic():
    p = M.quartic(1, 1.0, 1.0)
    val, _ = integrate.quad(lambda x: math.exp(-x * x / 2 - x**4), -6, 6,
                            epsabs=1e-15, epsrel=1e-13, limit=200)
    assert M.normalizing_constant(p) == pytest.approx(val, rel=1e-12)


def test_bodies_membership_and_scaling():
    sq = M.square(1.0, 2)
    assert sq.contains(np.array([[0.9, -0.9], [1.1, 0.0]])).tolist() == [True, False]
    big = sq.scaled(2.0)
    assert big.contains(np.array([1.9, 1.9]))
    assert big.volume == pytest.approx(16.0)
    d = M.disk(1.0)
    assert d.contains(np.array([0.6, 0.6])) and not d.contains(np.array([0.8, 0.8]))
    assert M.midpoint_audit(M.ellipsoid([1.0, 3.0]), np.random.default_rng(0))


def test_measure_kinds():
    nu = M.make_model_nu(1.0)
    assert nu.mass == "infinite"
    assert float(nu.log_density(0.0)) == pytest.approx(0.0)
    u = M.make_uniform(M.square(1.0, 2))
    assert u.density(np.array([0.1, 0.2])) == pytest.approx(0.25)
    assert u.density(np.array([2.0, 0.0])) == 0.0


def test_radial_psi_names():
    r = np.array([0.0, 1.0])
    assert np.allclose(M.radial_psi("constant")(r), 1.0)
    assert np.allclose(M.radial_psi("exp")(r), np.exp(r))
    assert np.allclose(M.radial_psi("inv1p")(r), 1 / (1 + r))
    with pytest.raises(ValueError):
        M.radial_psi("nope")
