import numpy as np
import pytest

from artifact.haar import (
    RngStream, canonical_typicality_experiment, entanglement_tail, ginibre, haar_unitary,
    levy_tail, mc_twirl, mean_and_stderr, reduced_purity_experiment,
)
from artifact.qmath import swap_operator
from artifact.weingarten import analytic_twirl


def test_stream_determinism():
    a = RngStream(7, 3).normal(5)
    assert np.array_equal(a, RngStream(7, 3).normal(5))
    assert not np.array_equal(a, RngStream(7, 4).normal(5))
    t1 = RngStream.for_trial(1, "exp", (2, 3)).uniform(size=3)
    assert np.array_equal(t1, RngStream.for_trial(1, "exp", (2, 3)).uniform(size=3))
    assert np.array_equal(ginibre(3, RngStream(1)), ginibre(3, RngStream(1)))


def test_ginibre_moments(rng):
    z = np.array([ginibre(2, rng) for _ in range(10_000)])
    n = z.size
    assert abs(z.real.mean()) < 4 / np.sqrt(n) and abs(z.imag.mean()) < 4 / np.sqrt(n)
    m, se = mean_and_stderr(np.abs(z.reshape(-1)) ** 2)
    assert abs(m - 1) < 3 * se


def test_haar_unitary_is_unitary(rng):
    for d in (1, 2, 5, 16):
        for _ in range(20):
            u = haar_unitary(d, rng)
            assert np.linalg.norm(u @ u.conj().T - np.eye(d)) < 1e-9
    u1 = haar_unitary(1, rng)
    assert np.isclose(abs(u1[0, 0]), 1)


def test_haar_first_moments(rng):
    n = 10_000
    us = np.array([haar_unitary(4, rng) for _ in range(n)])
    assert np.all(np.abs(us.mean(axis=0)) < 3 / np.sqrt(n))
    v = haar_unitary(4, RngStream(99))
    diff = np.abs((v @ us).mean(axis=0) - us.mean(axis=0))
    assert np.all(diff < 6 / np.sqrt(n))


def test_haar_state_average(rng):
    rho = np.diag([1.0, 0, 0, 0])
    mean, se = mc_twirl(1, rho, 20_000, rng)
    assert np.all(np.abs(mean - np.eye(4) / 4) <= 3 * se + 1e-12)


def test_mc_twirl_two_copies(rng):
    x = np.zeros((4, 4))
    x[0, 0] = 1
    mean, se = mc_twirl(2, x, 4000, rng)
    target = (np.eye(4) + swap_operator(2)) / 6
    assert np.allclose(target, analytic_twirl(2, x, 2))
    assert np.all(np.abs(mean - target) <= 3 * se + 1e-12)
    mean, se = mc_twirl(2, swap_operator(2), 50, rng)
    assert np.allclose(mean, swap_operator(2))
    with pytest.raises(ValueError):
        mc_twirl(2, np.eye(3), 10, rng)


@pytest.mark.parametrize("d", [2, 3])
def test_mc_twirl_random_operator(rng, d):
    g = rng.generator
    x = g.normal(size=(d * d, d * d)) + 1j * g.normal(size=(d * d, d * d))
    mean, se = mc_twirl(2, x, 3000, rng)
    z = np.abs(mean - analytic_twirl(2, x, d)) / np.maximum(se, 1e-15)
    # a 3-standard-error band, allowing the handful of excursions expected over d^4 entries
    assert np.mean(z > 3) < 0.02 and z.max() < 5


@pytest.mark.parametrize("dA,dB", [(2, 2), (2, 4)])
def test_reduced_purity(rng, dA, dB):
    m, se = reduced_purity_experiment(dA, dB, 2000, rng)
    assert abs(m - (dA + dB) / (dA * dB + 1)) < 3 * se


def test_reduced_purity_trivial_subsystem(rng):
    m, se = reduced_purity_experiment(1, 4, 50, rng)
    assert m == pytest.approx(1) and se == pytest.approx(0, abs=1e-12)


def test_canonical_typicality(rng):
    res = canonical_typicality_experiment(2, 16, 32, 400, rng)
    assert res.omega_e_purity == pytest.approx(1 / 16)
    assert res.bound == pytest.approx(0.5 * np.sqrt(1 / 8))
    assert res.mean <= res.bound + 3 * res.stderr
    triv = canonical_typicality_experiment(1, 8, 5, 20, rng)
    assert triv.mean == pytest.approx(0, abs=1e-12)
    for dR in (3, 7, 12):
        r = canonical_typicality_experiment(2, 8, dR, 5, rng)
        assert r.omega_e_purity <= 2 / dR + 1e-12
    with pytest.raises(ValueError):
        canonical_typicality_experiment(2, 2, 5, 10, rng)


def test_levy_tails():
    assert levy_tail(10, 1e-9, 1) == pytest.approx(2)
    assert levy_tail(9 * np.pi**3, 1, 1) == pytest.approx(2 / np.e)
    assert levy_tail(20, 0.5, 1) < levy_tail(10, 0.5, 1)
    assert levy_tail(10, 0.6, 1) < levy_tail(10, 0.5, 1)
    assert levy_tail(10, 0.5, 2) > levy_tail(10, 0.5, 1)
    assert entanglement_tail(9 * np.pi**3, 1) == pytest.approx(2 * np.exp(-2))
    with pytest.raises(ValueError):
        levy_tail(1, 0, 1)


def test_mean_and_stderr():
    m, se = mean_and_stderr(np.array([1.0, 2.0, 3.0]))
    assert m == 2 and se == pytest.approx(1 / np.sqrt(3))
    _, se1 = mean_and_stderr(np.array([1.0]))
    assert np.isinf(se1)
