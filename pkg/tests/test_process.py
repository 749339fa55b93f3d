import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact.channels import KrausMap, choi_of, standard_channel
from artifact.haar import RngStream, haar_unitary
from artifact.nonmarkov import n1_maxmixed, n1_marginals
from artifact.process import (
    MemoryGuardError, ProcessConfig, ProcessTensor, coarse_grain, contract, dense_process,
    dump_choi, fresh_environment_process, initial_state, leg_labels, load_choi, marginal,
    markov_process, process_from_unitaries, product_of_marginals, sample_process,
)
from artifact.process import tester as build_tester
from artifact.qmath import random_density, trace_distance

seeds = st.integers(0, 2**32 - 1)


def random_channel(g, d, r=2):
    v = haar_unitary(d * r, g)[:, :d]
    return KrausMap([v[i * d:(i + 1) * d] for i in range(r)])


def test_leg_labels():
    assert leg_labels(0) == ["S"]
    assert leg_labels(2) == ["S", "A2", "B2", "A1", "B1"]


def test_k0_process_is_reduced_state(rng):
    u = haar_unitary(6, rng)
    p = process_from_unitaries([u], 2, 3)
    psi = u[:, 0].reshape(3, 2)
    assert np.allclose(p.choi, psi.T @ psi.conj())
    assert p.k == 0 and np.isclose(np.trace(p.choi).real, 1)


@pytest.mark.parametrize("interaction", ["random", "constant"])
@pytest.mark.parametrize("dS,dE,k", [(2, 2, 1), (2, 3, 2), (3, 2, 1)])
def test_process_is_valid(rng, interaction, dS, dE, k):
    p = sample_process(ProcessConfig(dS, dE, k, interaction, rng=rng))
    assert p.dim == dS ** (2 * k + 1)
    assert p.is_psd(1e-10)
    assert p.causality_residual() < 1e-10
    assert np.isclose(np.trace(p.choi).real, 1)


@pytest.mark.parametrize("k", [1, 2])
def test_dense_reference_agrees(rng, k):
    us = [haar_unitary(4, rng) for _ in range(k + 1)]
    a = process_from_unitaries(us, 2, 2)
    b = dense_process(us, 2, 2)
    assert np.allclose(a.choi, b.choi, atol=1e-10)


def test_markov_identity_process():
    z0 = np.diag([1.0, 0])
    p = markov_process(z0, [standard_channel("identity", d=2)])
    assert np.isclose(contract(p, [standard_channel("identity", d=2)], povm_element=z0), 1)
    flip = standard_channel("unitary", u=np.array([[0, 1], [1, 0]]))
    assert np.isclose(contract(p, [flip], povm_element=z0), 0)


def test_markov_process_contracts_to_composition(gen):
    rho0 = random_density(2, gen)
    steps = [random_channel(gen, 2) for _ in range(2)]
    ops = [random_channel(gen, 2) for _ in range(2)]
    p = markov_process(rho0, steps)
    expect = rho0
    for op, st_ in zip(ops, steps):
        expect = st_(op(expect))
    assert np.allclose(contract(p, ops), expect, atol=1e-10)
    assert p.causality_residual() < 1e-10
    with pytest.raises(ValueError):
        markov_process(rho0, [KrausMap([np.diag([1.0, 0])])])


def test_contract_matches_unitary_dynamics(rng):
    dS, dE, k = 2, 2, 2
    us = [haar_unitary(4, rng) for _ in range(k + 1)]
    p = process_from_unitaries(us, dS, dE)
    ops = [random_channel(rng.generator, dS) for _ in range(k)]
    state = np.zeros((4, 4), dtype=complex)
    state[0, 0] = 1
    state = us[0] @ state @ us[0].conj().T
    for op, u in zip(ops, us[1:]):
        # operation on S in E (x) S, then the next unitary
        lifted = KrausMap([np.kron(np.eye(dE), kk) for kk in op.operators])
        state = u @ lifted(state) @ u.conj().T
    red = np.einsum("eaeb->ab", state.reshape(dE, dS, dE, dS))
    assert np.allclose(contract(p, ops), red, atol=1e-10)
    assert np.allclose(contract(p, tester_choi=build_tester(ops)), red, atol=1e-10)


def test_contract_probabilities_sum_to_one(rng):
    p = sample_process(ProcessConfig(2, 2, 1, rng=rng))
    z0, z1 = np.diag([1.0, 0]), np.diag([0, 1.0])
    ops = [KrausMap([z0]), KrausMap([z1])]
    total = sum(contract(p, [o], povm_element=e) for o in ops for e in (z0, z1))
    assert total == pytest.approx(1)
    with pytest.raises(ValueError):
        contract(p, [])


def test_marginals_and_product(gen):
    rho0 = random_density(2, gen)
    steps = [random_channel(gen, 2) for _ in range(2)]
    p = markov_process(rho0, steps)
    assert np.allclose(initial_state(p), rho0)
    for i, s in enumerate(steps, 1):
        assert np.allclose(marginal(p, i).matrix, choi_of(s).unit_trace().matrix, atol=1e-12)
    assert np.allclose(product_of_marginals(p).choi, p.choi, atol=1e-12)
    assert n1_marginals(p) < 1e-10
    with pytest.raises(ValueError):
        marginal(p, 3)


def test_fresh_environment_is_markov(rng):
    for k in (1, 2):
        p = fresh_environment_process(2, 2, k, rng)
        assert p.causality_residual() < 1e-10
        assert n1_marginals(p) < 1e-8


def test_coarse_grain_of_markov_is_markov(gen):
    rho0 = random_density(2, gen)
    steps = [random_channel(gen, 2) for _ in range(2)]
    p = markov_process(rho0, steps)
    # identity at step 1 hands C1(rho0) straight to step 2
    q1 = coarse_grain(p, [1])
    assert np.allclose(q1.choi, markov_process(steps[0](rho0), [steps[1]]).choi, atol=1e-12)
    # identity at step 2 composes the two maps
    comp = KrausMap([b @ a for a in steps[0].operators for b in steps[1].operators])
    q2 = coarse_grain(p, [2])
    assert np.allclose(q2.choi, markov_process(rho0, [comp]).choi, atol=1e-12)
    assert coarse_grain(p, []) is p
    with pytest.raises(ValueError):
        coarse_grain(p, [3])


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_coarse_grain_never_increases_distance(seed):
    rng = RngStream(seed)
    p = sample_process(ProcessConfig(2, 2, 2, rng=rng))
    for drop in ([1], [2], [1, 2]):
        assert n1_maxmixed(coarse_grain(p, drop)) <= n1_maxmixed(p) + 1e-9


def test_memory_guard(rng):
    with pytest.raises(MemoryGuardError):
        sample_process(ProcessConfig(2, 16, 3, rng=rng, max_vector=1000))


def test_process_validation():
    with pytest.raises(ValueError):
        ProcessTensor(np.eye(8), 1, 2)
    with pytest.raises(ValueError):
        ProcessTensor(np.eye(4) / 4, 1, 2)
    with pytest.raises(ValueError):
        ProcessConfig(2, 2, 1, "other")


def test_dump_load_round_trip(tmp_path, rng):
    p = sample_process(ProcessConfig(2, 2, 1, rng=rng))
    path = tmp_path / "choi.csv"
    dump_choi(path, p, dE=2, seed=5, interaction="random")
    q, header = load_choi(path)
    assert np.array_equal(q.choi, p.choi)
    assert header["seed"] == "5" and header["k"] == "1"


def test_fixed_seed_reproducible():
    a = sample_process(ProcessConfig(2, 3, 1, rng=RngStream(11)))
    b = sample_process(ProcessConfig(2, 3, 1, rng=RngStream(11)))
    assert np.array_equal(a.choi, b.choi)
    assert trace_distance(a.choi, sample_process(ProcessConfig(2, 3, 1, rng=RngStream(12))).choi) > 0
