import itertools
import time

import numpy as np
import pytest

from artifact.haar import haar_unitary
from artifact.process import ProcessConfig, sample_process
from artifact.qmath import purity
from artifact.weingarten import (
    DeltaSystem, UnsupportedRegimeError, analytic_twirl, avg_process_constant, avg_purity_constant,
    avg_superchannel_closed_form, compose, cycle_count, cycle_type, delta_degree, haar_moment_tensor,
    inverse, permutations, purity_of_avg_superchannel, weingarten, weingarten_table,
)


def test_cycle_count():
    assert cycle_count((0, 1, 2)) == 3
    assert cycle_count((1, 2, 0)) == 1
    assert cycle_count((1, 0, 2)) == 2
    assert cycle_type((1, 0, 2)) == (2, 1)


def test_permutation_group_ops():
    perms = permutations(3)
    assert len(perms) == 6 and list(perms) == sorted(perms)
    for p in perms:
        assert compose(p, inverse(p)) == (0, 1, 2)
    assert compose((1, 2, 0), (1, 0, 2)) == (2, 1, 0)


@pytest.mark.parametrize("d", [2, 3, 4, 8])
def test_low_order_values(d):
    assert weingarten((0,), d) == pytest.approx(1 / d, abs=1e-12)
    assert weingarten((0, 1), d) == pytest.approx(1 / (d * d - 1), abs=1e-12)
    assert weingarten((1, 0), d) == pytest.approx(-1 / (d * (d * d - 1)), abs=1e-12)


def test_n3_known_values():
    # closed forms for S_3
    d = 4
    t = weingarten_table(3, d)
    den = d * (d * d - 1) * (d * d - 4)
    assert t((0, 1, 2)) == pytest.approx((d * d - 2) / den, abs=1e-14)
    assert t((1, 0, 2)) == pytest.approx(-1 / ((d * d - 1) * (d * d - 4)), abs=1e-14)
    assert t((1, 2, 0)) == pytest.approx(2 / den, abs=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_row_invariant(n):
    for d in sorted({n, n + 1, 8}):
        t = weingarten_table(n, d)
        assert t.residual < 1e-10
        perms = t.perms
        sigma = perms[len(perms) // 2]
        total = sum(d ** cycle_count(compose(sigma, inverse(tau))) * t(tau) for tau in perms)
        assert total == pytest.approx(0.0 if sigma != tuple(range(n)) else 1.0, abs=1e-10)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_class_function(n):
    t = weingarten_table(n, n + 2)
    by_type = {}
    for p, v in zip(t.perms, t.values):
        by_type.setdefault(cycle_type(p), []).append(v)
    for vals in by_type.values():
        assert np.ptp(vals) < 1e-14


def test_large_d_scaling():
    ratios = []
    sigma = (1, 2, 0)
    for d in (8, 16, 32, 64):
        ratios.append(weingarten(sigma, d) * d ** (2 * 3 - cycle_count(sigma)))
    assert abs(ratios[-1] / ratios[-2] - 1) < 0.1 and abs(ratios[-1]) > 0.5


def test_refuses_small_d():
    with pytest.raises(UnsupportedRegimeError):
        weingarten_table(3, 2)


def test_n6_builds_quickly():
    start = time.perf_counter()
    t = weingarten_table(6, 6)
    assert t.residual < 1e-10 and time.perf_counter() - start < 10


def test_moment_tensor_examples():
    assert haar_moment_tensor(1, 3, [1], [2], [1], [2]) == pytest.approx(1 / 3)
    assert haar_moment_tensor(1, 3, [1], [2], [0], [2]) == 0
    assert haar_moment_tensor(2, 2, [0, 0], [0, 0], [0, 0], [0, 0]).real == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        haar_moment_tensor(1, 2, [2], [0], [0], [0])


def test_moment_monte_carlo(rng):
    vals = np.array([abs(haar_unitary(2, rng)[0, 0]) ** 4 for _ in range(100_000)])
    se = vals.std(ddof=1) / np.sqrt(vals.size)
    assert abs(vals.mean() - 1 / 3) < 3 * se


def test_moment_tensor_matches_twirl(gen):
    d = 2
    x = gen.normal(size=(4, 4)) + 1j * gen.normal(size=(4, 4))
    tw = analytic_twirl(2, x, d)
    xt = x.reshape(d, d, d, d)
    idx = list(itertools.product(range(d), repeat=2))
    for (a1, a2), (b1, b2) in itertools.product(idx, idx):
        # E[(U (x) U) x (U (x) U)^dag]_{a,b} = sum_{c,e} E[U_a1c1 U_a2c2 conj(U_b1e1 U_b2e2)] x_{c,e}
        val = 0
        for (c1, c2), (e1, e2) in itertools.product(idx, idx):
            if xt[c1, c2, e1, e2] != 0:
                val += haar_moment_tensor(2, d, [a1, a2], [c1, c2], [b1, b2], [e1, e2]) * xt[c1, c2, e1, e2]
        assert val == pytest.approx(tw[a1 * d + a2, b1 * d + b2], abs=1e-12)


def test_analytic_twirl():
    rho = np.diag([0.3, 0.7])
    assert np.allclose(analytic_twirl(1, rho, 2), np.eye(2) / 2)
    assert np.allclose(analytic_twirl(2, np.eye(9), 3), np.eye(9))
    with pytest.raises(UnsupportedRegimeError):
        analytic_twirl(3, np.eye(8), 2)


def test_delta_degree():
    s = DeltaSystem({"a": 5, "b": 5, "c": 5})
    assert delta_degree(s) == 125
    s.eq("a", "b")
    s.eq("b", "c")
    assert delta_degree(s) == 5
    s.pin("a", 1)
    assert delta_degree(s) == 1
    s.pin("c", 2)
    assert delta_degree(s) == 0


def test_constant_process_k0():
    m = avg_process_constant(0, 2, 3)
    assert np.allclose(m, np.eye(2) / 2, atol=1e-12)


@pytest.mark.parametrize("dS,dE", [(2, 2), (2, 3)])
def test_constant_process_k1_closed_form(dS, dE):
    rho_s = np.zeros((dS, dS))
    rho_s[0, 0] = 1
    exact = avg_process_constant(1, dS, dE, normalization="unnormalized")
    closed = avg_superchannel_closed_form(dS, dE, rho_s)
    # the closed form is unit trace on [S, A1, B1] up to its own scale
    assert np.allclose(exact / np.trace(exact), closed / np.trace(closed), atol=1e-10)
    unit = avg_process_constant(1, dS, dE)
    assert np.trace(unit).real == pytest.approx(1)
    assert np.isclose(np.trace(exact).real, dS**2)


def test_constant_process_large_env():
    m = avg_process_constant(1, 2, 64)
    assert np.max(np.abs(m - np.eye(8) / 8)) < 2 / 64**2


@pytest.mark.parametrize("dS,dE", [(2, 2), (2, 3), (3, 2)])
def test_purity_of_average_superchannel(dS, dE):
    m = avg_process_constant(1, dS, dE)
    assert purity(m) == pytest.approx(purity_of_avg_superchannel(dS, dE, 1.0), abs=1e-9)


@pytest.mark.parametrize("dS,dE", [(2, 2), (2, 3), (3, 3), (2, 5)])
def test_constant_purity_k0(dS, dE):
    assert avg_purity_constant(0, dS, dE) == pytest.approx((dE + dS) / (dE * dS + 1), abs=1e-12)


def test_constant_purity_large_env():
    # excess over the maximally mixed value decays like 1/dE
    ex = [avg_purity_constant(1, 2, dE) * 8 - 1 for dE in (32, 64)]
    assert 0 < ex[1] < ex[0]
    assert ex[0] / ex[1] == pytest.approx(2, rel=0.02)


def test_constant_purity_depends_on_schmidt_spectrum_only(gen):
    dS, dE = 2, 3
    psi = gen.normal(size=6) + 1j * gen.normal(size=6)
    psi /= np.linalg.norm(psi)
    local = np.kron(haar_unitary(dE, gen), haar_unitary(dS, gen))
    phi = local @ psi
    ent = avg_purity_constant(1, dS, dE, np.outer(psi, psi.conj()))
    assert avg_purity_constant(1, dS, dE, np.outer(phi, phi.conj())) == pytest.approx(ent, abs=1e-10)
    prod = np.kron(haar_unitary(dE, gen)[:, 0], haar_unitary(dS, gen)[:, 0])
    assert avg_purity_constant(1, dS, dE, np.outer(prod, prod.conj())) == pytest.approx(
        avg_purity_constant(1, dS, dE), abs=1e-10)
    with pytest.raises(ValueError):
        avg_purity_constant(1, dS, dE, np.eye(6) / 6)


@pytest.mark.parametrize("dE", [2, 4])
def test_constant_purity_monte_carlo_k1(rng, dE):
    vals = [purity(sample_process(ProcessConfig(2, dE, 1, "constant", rng=rng)).choi) for _ in range(400)]
    se = np.std(vals, ddof=1) / np.sqrt(len(vals))
    assert abs(np.mean(vals) - avg_purity_constant(1, 2, dE)) < 3 * se


def test_constant_average_monte_carlo(rng):
    n = 2000
    acc = np.array([sample_process(ProcessConfig(2, 2, 1, "constant", rng=rng)).choi for _ in range(n)])
    mean = acc.mean(axis=0)
    se = np.sqrt(acc.real.var(axis=0, ddof=1) + acc.imag.var(axis=0, ddof=1)) / np.sqrt(n)
    assert np.all(np.abs(mean - avg_process_constant(1, 2, 2)) <= 4 * se + 1e-12)


def test_constant_regime_guards():
    with pytest.raises(UnsupportedRegimeError):
        avg_process_constant(3, 2, 4)
    with pytest.raises(UnsupportedRegimeError):
        avg_purity_constant(3, 2, 4)
    with pytest.raises(UnsupportedRegimeError):
        avg_purity_constant(2, 2, 2)
