import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact.designs import (
    DesignSpec, LdbParams, RdcSchedule, build_W, design_moment_error, eta, ldb_bound,
    lipschitz_C, log_bound_Bk_random, log_eta, log_ldb_bound, optimize_m, rdc_layer, rdc_phases,
    required_depth,
)
from artifact.haar import RngStream, haar_unitary
from artifact.nonmarkov import BoundParams, bound_Bk
from artifact.weingarten import UnsupportedRegimeError


def test_eta_and_log_eta():
    assert eta(2, 2, 1) == pytest.approx((4**4 * 4 + 2**-3) / 4)
    for dS, dE, k in [(2, 2, 1), (2, 8, 3), (3, 5, 2)]:
        assert log_eta(dS, dE, k) == pytest.approx(np.log(eta(dS, dE, k)))
    assert np.isfinite(log_eta(2, 2.0**60, 4))


def test_lipschitz_constant():
    assert lipschitz_C(2, 2, 1) == pytest.approx(4 * 2 / 16 / 9)
    with pytest.raises(ValueError):
        lipschitz_C(1, 2, 1)


def test_log_bound_Bk_matches_direct():
    for dS, dE, k in [(2, 2, 1), (2, 16, 1), (2, 64, 2), (3, 200, 1)]:
        assert log_bound_Bk_random(dS, dE, k) == pytest.approx(np.log(bound_Bk(BoundParams(dS, dE, k)).value))


def test_log_bound_Bk_huge_env():
    # D E[tr Y^2] - 1 ~ (D - 1/dS)/dE once the environment dominates
    v = log_bound_Bk_random(2, 2.0**60, 1)
    assert v == pytest.approx(np.log(0.5 * np.sqrt(7.5 * 2.0**-60)), rel=1e-9)


def test_bound_examples():
    spec = DesignSpec(10, 1e-3)
    p = LdbParams(2, 2.0**60, 1, 0.1)
    best = optimize_m(p, spec)
    assert 0 < best.m <= 2.5
    assert best.bound < 1e-10
    assert ldb_bound(p.with_m(best.m), spec) == pytest.approx(best.bound, rel=1e-9)


def test_bound_validation():
    spec = DesignSpec(8, 0.1)
    p = LdbParams(2, 16, 1, 0.5)
    with pytest.raises(ValueError):
        log_ldb_bound(p, spec)
    with pytest.raises(ValueError):
        log_ldb_bound(p.with_m(2.5), spec)
    with pytest.raises(ValueError):
        LdbParams(2, 16, 1, 0)
    with pytest.raises(ValueError):
        DesignSpec(0, 0.1)


def test_exact_design_drops_error_term():
    p = LdbParams(2, 2.0**20, 1, 0.1, m=1.0)
    assert log_ldb_bound(p, DesignSpec(8, 0.0)) <= log_ldb_bound(p, DesignSpec(8, 1e-3))


def test_optimum_beats_grid():
    spec = DesignSpec(12, 1e-6)
    p = LdbParams(2, 2.0**40, 2, 0.05)
    best = optimize_m(p, spec)
    grid = np.linspace(0.03, 3, 100)
    assert best.log_bound <= min(log_ldb_bound(p.with_m(m), spec) for m in grid) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 59), st.integers(2, 11), st.integers(1, 3))
def test_monotone_in_env_and_order(log2_dE, t, k):
    spec = DesignSpec(t, 1e-12)
    lo = optimize_m(LdbParams(2, 2.0**log2_dE, k, 0.1), spec).log_bound
    hi_env = optimize_m(LdbParams(2, 2.0 ** (log2_dE + 1), k, 0.1), spec).log_bound
    hi_t = optimize_m(LdbParams(2, 2.0**log2_dE, k, 0.1), DesignSpec(t + 1, 1e-12)).log_bound
    assert hi_env <= lo + 1e-9
    assert hi_t <= lo + 1e-9


def test_vacuous_regime_uses_small_m_limit():
    spec = DesignSpec(4, 1e-12)
    best = optimize_m(LdbParams(2, 4.0, 2, 0.1), spec)
    assert best.m == 0.0
    assert best.bound == pytest.approx(2 + 1e-12 / 8.0**4)


def test_optimum_respects_reference_points():
    spec = DesignSpec(10, 1e-12)
    p = LdbParams(2, 2.0**35, 2, 0.1)
    best = optimize_m(p, spec)
    assert best.log_bound <= log_ldb_bound(p.with_m(2.5), spec)
    assert best.log_bound <= log_ldb_bound(p.with_m(1.25), spec)
    assert np.isfinite(best.log_bound) and best.bound < 1


def test_required_depth():
    assert required_depth(10, 2.0**-40, 40) == pytest.approx(11)
    assert required_depth(4, 1.0, 7) == 4
    with pytest.raises(ValueError):
        required_depth(4, 0, 5)
    with pytest.raises(ValueError):
        required_depth(4, 0.1, 0)


def test_rdc_schedule():
    assert RdcSchedule(3).pairs == ((0, 1), (0, 2), (1, 2))
    assert RdcSchedule(2, [(1, 0)]).pairs == ((1, 0),)
    with pytest.raises(ValueError):
        RdcSchedule(2, [(0, 0)])
    with pytest.raises(ValueError):
        RdcSchedule(2, [(0, 2)])


def test_rdc_layer_structure(rng):
    t = 4
    ph = rdc_phases(RdcSchedule(3), t, rng)
    assert np.allclose(np.abs(ph), 1)
    assert ph[0] == pytest.approx(1)
    layer = rdc_layer(RdcSchedule(2), t, rng)
    assert np.allclose(layer, np.diag(np.diag(layer)))
    # every phase is a multiple of 2 pi / lcm of the grid sizes
    angles = np.angle(layer.diagonal()) * (t + 1) * (t // 2 + 1) / (2 * np.pi)
    assert np.allclose(angles, np.round(angles), atol=1e-9)
    with pytest.raises(UnsupportedRegimeError):
        rdc_phases(RdcSchedule(13), 2, rng)


def test_build_W(rng):
    w = build_W(3, 4, 2, rng=rng)
    assert np.linalg.norm(w @ w.conj().T - np.eye(8)) < 1e-10
    w0 = build_W(2, 4, 0, rng=rng)
    assert np.allclose(w0, np.diag(np.diag(w0)))
    with pytest.raises(UnsupportedRegimeError):
        build_W(11, 2, 1, rng=rng)
    with pytest.raises(ValueError):
        build_W(2, 2, 1, RdcSchedule(3), rng)
    a = build_W(2, 4, 1, rng=RngStream(5))
    assert np.array_equal(a, build_W(2, 4, 1, rng=RngStream(5)))


def test_haar_passes_moment_check(rng):
    err = design_moment_error(lambda r: haar_unitary(4, r), 2, 4, 1500, rng)
    assert err.deviation < 4 * err.stderr + 1e-12


def test_diagonal_layer_fails_moment_check(rng):
    sched = RdcSchedule(2)
    err = design_moment_error(lambda r: rdc_layer(sched, 4, r), 1, 4, 200, rng)
    # diagonal unitaries leave |0><0| fixed, far from I/4
    assert err.deviation > 0.5


def test_rdc_circuit_approaches_two_design(rng):
    err = design_moment_error(lambda r: build_W(2, 4, 2, rng=r), 2, 4, 1500, rng)
    assert err.deviation < 4 * err.stderr + 0.02
    with pytest.raises(UnsupportedRegimeError):
        design_moment_error(lambda r: np.eye(2), 3, 2, 5, rng)
