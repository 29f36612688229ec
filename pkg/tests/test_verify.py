import math

import numpy as np
import pytest

from contraction_lab import grid_ot as G
from contraction_lab import measures as M
from contraction_lab import transport1d as T1
from contraction_lab import transport_radial as TR
from contraction_lab import verify as V

GAUSS = M.make_standard_gaussian(1)


def _linear(diag):
    A = np.diag(diag)
    d = len(diag)
    return T1.TransportMap(lambda x: np.atleast_2d(x) @ A,
                           lambda x: np.broadcast_to(A, (np.atleast_2d(x).shape[0], d, d)),
                           "entropic", (-np.inf, np.inf), dim=d)


@pytest.fixture(scope="module")
def quartic_map():
    return T1.monotone_map(GAUSS, M.density_measure(M.quartic(1, 1.0)))


@pytest.fixture(scope="module")
def half_map():
    return T1.monotone_map(GAUSS, M.make_gaussian(1, 0.5))


def test_lipschitz_identity_and_half(half_map):
    ident = T1.monotone_map(GAUSS, GAUSS)
    s = V.interval_sampler(-4, 4)
    assert V.lipschitz_pairwise(ident, s, 5000) == pytest.approx(1.0, abs=1e-9)
    assert V.lipschitz_pairwise(half_map, s, 5000) == pytest.approx(0.5, abs=1e-9)


def test_lipschitz_counts_coincident_pairs():
    T = _linear([0.5, 0.8])
    val, skipped = V.lipschitz_pairwise(T, V.node_sampler(np.zeros((1, 2))), 10, return_skipped=True)
    assert skipped == 10 and math.isnan(val)
    with pytest.raises(ValueError):
        V.lipschitz_pairwise(T, V.box_sampler([-1, -1], [1, 1]), 0)


def test_quartic_map_is_contraction(quartic_map):
    lip = V.lipschitz_pairwise(quartic_map, V.interval_sampler(-6, 6), 100_000)
    sup = V.jacobian_opnorm_sup(quartic_map, np.linspace(-6, 6, 4001))
    assert lip <= 1 + 1e-6
    assert lip <= sup + 1e-9


def test_jacobian_sup_linear_and_radial():
    assert V.jacobian_opnorm_sup(_linear([0.5, 0.8]), np.zeros((3, 2))) == pytest.approx(0.8)
    ones = lambda r: np.ones_like(np.asarray(r, float))
    rm = TR.radial_map(TR.RadialProfile(ones, 2, r_max=3.0))
    pts = np.random.default_rng(0).uniform(-2, 2, size=(200, 2))
    assert V.jacobian_opnorm_sup(rm, pts) == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ValueError):
        V.jacobian_opnorm_sup(rm)


def test_second_difference_quotients(half_map, quartic_map):
    x = np.linspace(-3, 3, 61)
    assert np.allclose(V.second_diff_quotient(lambda y: 0.5 * y**2, 1.0, 0.3, x), 1.0)
    assert np.allclose(V.second_diff_quotient(half_map.potential, 1.0, 0.1, x), 0.5, atol=1e-8)
    q = V.second_diff_quotient(quartic_map.potential, 1.0, 1e-2, np.linspace(-5, 5, 2001))
    sup = V.jacobian_opnorm_sup(quartic_map, np.linspace(-5, 5, 2001))
    assert abs(q.max() - sup) < 1e-3
    with pytest.raises(ValueError):
        V.second_diff_quotient(lambda y: 0.5 * y**2, 1.0, 0.0, x)


def test_second_difference_outside_domain():
    with pytest.raises(ValueError):
        V.second_diff_quotient(lambda y: np.where(np.abs(y) < 1, y**2, np.inf), 1.0, 0.5, [0.8])


def test_incremental_decay(half_map):
    x = np.linspace(0, 6, 25)
    e = V.incremental_decay_check(half_map.potential, 1.0, 0.5, x)
    assert e.status == "not_applicable"
    unif = T1.monotone_map(GAUSS, M.make_uniform(M.interval(1.0)))
    e = V.incremental_decay_check(unif.potential, 1.0, 0.5, np.linspace(0, 7, 29))
    assert e.status == "pass" and e.computed <= 0.25


def test_holder_identity_and_quartic():
    ident = T1.monotone_map(GAUSS, GAUSS)
    x = np.linspace(-3, 3, 121)
    sq = M.quadratic([1.0])
    e = V.holder_modulus_check(ident.potential, 1.0, 1, 1.0, 1, [0.1, 0.5, 1.0], x, V=sq, W=sq)
    assert e.passed and e.bound == 2.0
    assert e.computed == pytest.approx(1.0, rel=1e-6)
    quart = M.power_sum(1, 1.0, 4)
    T = T1.monotone_map(GAUSS, M.density_measure(quart))
    e = V.holder_modulus_check(T.potential, 1.0, 1, 2.0, 3, [0.1, 0.5, 1.0], x, V=sq, W=quart)
    assert e.passed
    assert e.bound == pytest.approx(2 * 0.5**0.25)


def test_holder_audit_failure():
    sq = M.quadratic([1.0])
    e = V.holder_modulus_check(lambda y: 0.5 * y**2, 1.0, 1, 5.0, 1, [0.5], np.linspace(-1, 1, 5),
                               V=sq, W=sq)
    assert e.status == "precondition_failed"


def test_ms_modulus(quartic_map):
    ident = T1.monotone_map(GAUSS, GAUSS)
    delta = lambda r: np.asarray(r, float) ** 2
    s = V.interval_sampler(-4, 4)
    e = V.ms_modulus_check(ident, delta, s, n_pairs=2000)
    assert e.passed and e.computed < 0
    e = V.ms_modulus_check(quartic_map, delta, s, n_pairs=2000, V=M.quadratic([1.0]),
                           W=M.quartic(1, 1.0))
    assert e.passed


def test_sodin_lemma():
    x = np.linspace(-2, 2, 9)
    e = V.sodin_lemma_check(M.quadratic([1.0]), 0.3, x)
    assert e.passed and e.details["max_lhs"] == pytest.approx(0.3)
    assert e.details["min_rhs"] == pytest.approx(8 * 0.3)
    e = V.sodin_lemma_check(M.power_sum(1, 1.0, 4), 0.5, [1.0])
    # lhs = 4 (1.5^3 - 1), rhs = (2/t) (2^4 + 0^4 - 2)
    assert e.passed and e.details["max_lhs"] == pytest.approx(4 * (1.5**3 - 1))
    assert e.details["min_rhs"] == pytest.approx(4 * 14)
    e = V.sodin_lemma_check(M.linear_tilt(2.0), 0.5, x)
    assert e.passed and e.details["max_lhs"] == pytest.approx(0.0, abs=1e-12)
    pts = np.random.default_rng(1).normal(size=(50, 2))
    assert V.sodin_lemma_check(M.power_sum(2, 1.0, 4), 0.4, pts).passed


def test_sodin_rejects_nonconvex():
    e = V.sodin_lemma_check(M.quadratic([-1.0]), 0.1, [0.0])
    assert e.status == "precondition_failed"


def test_lp_gaussian_equality(half_map):
    entries = V.lp_norm_check(half_map, GAUSS, M.quadratic([1.0]), K=4.0)
    hess = [e for e in entries if e.check == "lp-hessian"]
    assert all(e.passed for e in entries if e.status != "not_applicable")
    for e in hess:
        assert e.computed == pytest.approx(1.0, rel=1e-9)
        assert e.bound == pytest.approx(1.0, rel=1e-9)
    grad1 = [e for e in entries if e.name == "lp_estimate[gradient,p=1,e=0]"][0]
    assert grad1.bound == pytest.approx(1.0, rel=1e-9)


def test_lp_quartic(quartic_map):
    V0 = M.quadratic([1.0])
    entries = V.lp_norm_check(quartic_map, GAUSS, V0, K=1.0)
    assert len(entries) == 8
    assert [e.status for e in entries].count("not_applicable") == 1
    assert all(e.passed for e in entries if e.status != "not_applicable")


@pytest.fixture(scope="module")
def entropic_half():
    return G.solve_pair(M.make_standard_gaussian(2), M.make_gaussian(2, 0.5), 32)


def test_operator_norm_gaussian(entropic_half):
    gm = entropic_half
    budget = gm.src.h + gm.coupling.epsilon
    out = V.operator_norm_lp_check(gm, M.quadratic([1.0, 1.0]), K=4.0, r_list=(1, 2), budget=budget)
    assert all(e.passed for e in out)
    assert out[0].bound == pytest.approx(1.0)
    with pytest.raises(ValueError):
        V.operator_norm_lp_check(gm, M.quadratic([1.0, 1.0]), K=4.0, r_list=(0.5,))


def test_entropic_calibration(entropic_half):
    cal = V.gaussian_calibration(entropic_half, 0.5, n_pairs=20_000)
    assert abs(cal["jacobian_sup"] - 0.5) <= cal["h"] + cal["epsilon"]
    assert cal["budget"] < 0.1


def test_body_scaling_unit_ratio():
    (e,) = V.body_scaling_check(M.square(1.0), s_list=(1.0,), n=16, eps_list=[1.0, 0.3, 0.1],
                                n_pairs=2000)
    assert e.computed == 1.0 and e.passed


def test_directions_deterministic():
    a, b = V.directions(2, seed=3), V.directions(2, seed=3)
    assert np.array_equal(a, b)
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0)
