import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from contraction_lab import inequalities as I
from contraction_lab import measures as M

N = 200_000


def test_stream_is_deterministic_and_name_dependent():
    a = I.stream(7, "x").standard_normal(5)
    assert np.array_equal(a, I.stream(7, "x").standard_normal(5))
    assert not np.array_equal(a, I.stream(7, "y").standard_normal(5))
    assert not np.array_equal(a, I.stream(8, "x").standard_normal(5))


def test_mc_probabilities():
    whole = I.mc_gaussian_prob(M.whole_space(2), 2, N, 0)
    assert whole.mean == 1.0 and whole.std_error == 0.0
    half = I.mc_gaussian_prob(lambda X: X[:, 0] > 0, 2, N, 0)
    assert abs(half.mean - 0.5) <= 3 * half.std_error
    disk = I.mc_gaussian_prob(M.disk(1.0), 2, N, 0)
    assert abs(disk.mean - (1 - math.exp(-0.5))) <= 3 * disk.std_error
    with pytest.raises(ValueError):
        I.mc_gaussian_prob(M.disk(1.0), 2, 10, 0)
    with pytest.raises(TypeError):
        I.mc_gaussian_prob("disk", 2, N, 0)


def test_correlation_pass_and_equality_case():
    e = I.correlation_check(M.strip(1.0, 0), M.strip(1.0, 1), n=N)
    assert e.passed and abs(e.computed) <= e.tolerance
    e = I.correlation_check(M.disk(1.0), M.square(1.0), n=N)
    assert e.passed and e.computed > 0
    shifted = M.ConvexBody(lambda X: np.abs(X[:, 0] - 0.5) < 1, lambda u: np.ones(len(u)), 2.0,
                           symmetric=False, dim=2)
    with pytest.raises(ValueError):
        I.correlation_check(shifted, M.disk(1.0), n=N)


def test_harge_equality_and_quadrature():
    out = I.harge_check(lambda x: x[:, 0] ** 2, lambda x: np.ones(x.shape[0]), n=N)
    assert all(e.passed for e in out)
    quad = [e for e in out if e.name.endswith("_quadrature")][0]
    assert quad.computed == pytest.approx(quad.bound, rel=1e-12)
    out = I.harge_check(lambda x: x[:, 0] ** 2, lambda x: np.exp(-x[:, 0] ** 2), n=N)
    assert all(e.passed for e in out)


def test_b_inequality_passes():
    out = I.b_inequality_check(M.disk(1.0), n=N)
    assert len(out) == 8 and all(e.passed for e in out)


def test_strong_poincare():
    e = I.strong_poincare_check(lambda x: x[:, 0] ** 2 - 1, lambda x: 2 * x)
    assert e.passed
    # x^2 - 1: lhs = 2, rhs = 1/2 * 4 = 2 (equality)
    assert e.computed == pytest.approx(e.bound, rel=1e-10)
    e = I.strong_poincare_check(lambda x: x[:, 0], lambda x: np.ones_like(x))
    assert e.status == "precondition_failed"


def test_gaussian_profile_closed_form():
    g = M.make_standard_gaussian(1)
    assert I.gaussian_profile(0.5) == pytest.approx(1 / math.sqrt(2 * math.pi))
    ts = np.array([0.05, 0.2, 0.5, 0.8])
    assert np.allclose(I.isoperimetric_profile_1d(g, ts), I.gaussian_profile(ts), atol=1e-9)


def test_exponential_profile():
    m = M.density_measure(M.exponential(1.0))
    ts = np.array([0.1, 0.5, 0.9])
    assert np.allclose(I.isoperimetric_profile_1d(m, ts), np.minimum(ts, 1 - ts), atol=1e-9)


@pytest.mark.parametrize("A", [1.0, 2.0])
def test_nu_profile(A):
    ts = np.array([0.5, 1.0, 3.0])
    got = I.isoperimetric_profile_1d(M.make_model_nu(A), ts)
    assert np.allclose(got, I.nu_profile(A, ts), rtol=1e-8)


def test_profile_grid_refinement_invariant():
    m = M.density_measure(M.quartic(1, 0.5))
    ts = [0.15, 0.4]
    a = I.isoperimetric_profile_1d(m, ts, n_grid=1000)
    b = I.isoperimetric_profile_1d(m, ts, n_grid=4000)
    assert np.allclose(a, b, atol=1e-9)


def test_profile_rejects_bad_mass():
    with pytest.raises(ValueError):
        I.isoperimetric_profile_1d(M.make_standard_gaussian(1), [1.0])


@settings(max_examples=15, deadline=None)
@given(st.floats(0.02, 0.98))
def test_profile_symmetric_for_symmetric_law(t):
    g = M.make_standard_gaussian(1)
    a, b = I.isoperimetric_profile_1d(g, [t, 1 - t], n_grid=400)
    assert a == pytest.approx(b, abs=1e-9)


def test_bakry_ledoux():
    e = I.bakry_ledoux_check(M.quartic(1, 1.0))
    assert e.passed and e.computed >= 0
    e = I.bakry_ledoux_check(M.quadratic([0.5]))
    assert e.status == "precondition_failed"


def test_concentration_transfer():
    delta = lambda r: np.asarray(r, float) ** 2
    out = I.concentration_transfer_check(M.quadratic([2.0]), delta, [0.5, 2.0], [-1.0, 0.5])
    assert out and all(e.passed for e in out)
    out = I.concentration_transfer_check(M.quadratic([0.5]), delta, [1.0], [0.0])
    assert out[0].status == "precondition_failed"
