"""Haar-random unitaries and Monte Carlo estimators built on them."""

from __future__ import annotations

import hashlib
from typing import NamedTuple

import numpy as np

from .qmath import SubsystemLayout, partial_trace, purity, trace_distance

__all__ = [
    "RngStream",
    "ginibre",
    "haar_unitary",
    "apply_tensor_power",
    "mc_twirl",
    "reduced_purity_experiment",
    "canonical_typicality_experiment",
    "levy_tail",
    "entanglement_tail",
    "mean_and_stderr",
]


def _stable_hash(*parts) -> int:
    h = hashlib.blake2b("\x1f".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


class RngStream:
    """Reproducible random stream keyed by ``(master_seed, stream_id)``.

    Backed by numpy's counter-based Philox bit generator seeded through a
    ``SeedSequence`` of the two keys, so distinct stream ids give
    independent sequences and no state is shared between streams.

    Parameters
    ----------
    master_seed : int
        Unsigned 64-bit experiment seed.
    stream_id : int
        Unsigned 64-bit stream identifier.
    """

    __slots__ = ("master_seed", "stream_id", "_gen")

    def __init__(self, master_seed: int, stream_id: int = 0):
        self.master_seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        ss = np.random.SeedSequence([self.master_seed, self.stream_id])
        self._gen = np.random.Generator(np.random.Philox(ss))

    @classmethod
    def for_trial(cls, master_seed: int, experiment: str, trial) -> "RngStream":
        """Stream for one trial of a named experiment."""
        return cls(master_seed, _stable_hash(experiment, trial))

    def child(self, *key) -> "RngStream":
        return RngStream(self.master_seed, _stable_hash(self.stream_id, *key))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normal(self, size=None, scale: float = 1.0):
        return self._gen.normal(0.0, scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id})"


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def ginibre(d: int, rng) -> np.ndarray:
    """``d x d`` matrix of i.i.d. standard complex normals (variance 1/2 per part)."""
    g = _gen(rng)
    scale = np.sqrt(0.5)
    return g.normal(0.0, scale, (d, d)) + 1j * g.normal(0.0, scale, (d, d))


def haar_unitary(d: int, rng) -> np.ndarray:
    """Haar-distributed unitary from the QR decomposition of a Ginibre matrix.

    The phases of ``R``'s diagonal are moved into ``Q`` so that the
    decomposition is unique and the result is Haar distributed.
    """
    q, r = np.linalg.qr(ginibre(d, rng))
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))


def apply_tensor_power(u: np.ndarray, x: np.ndarray, n: int) -> np.ndarray:
    """Return ``U^{(x)n} x U^{dag (x)n}`` without forming the tensor power."""
    d = u.shape[0]
    t = np.asarray(x, dtype=complex).reshape((d,) * (2 * n))
    uc = u.conj()
    for ax in range(n):
        t = np.moveaxis(np.tensordot(u, t, axes=([1], [ax])), 0, ax)
        t = np.moveaxis(np.tensordot(uc, t, axes=([1], [n + ax])), 0, n + ax)
    return t.reshape(d**n, d**n)


def mean_and_stderr(values) -> tuple:
    """Sample mean and standard error (sample std / sqrt(n)) along axis 0."""
    v = np.asarray(values)
    n = v.shape[0]
    mean = v.mean(axis=0)
    if n < 2:
        return mean, np.full_like(np.abs(mean), np.inf, dtype=float)
    if np.iscomplexobj(v):
        sd = np.sqrt(v.real.var(axis=0, ddof=1) + v.imag.var(axis=0, ddof=1))
    else:
        sd = v.std(axis=0, ddof=1)
    return mean, sd / np.sqrt(n)


def _nth_root(total: int, n: int) -> int:
    d = int(round(total ** (1.0 / n)))
    for cand in (d - 1, d, d + 1):
        if cand >= 1 and cand**n == total:
            return cand
    raise ValueError(f"dimension {total} is not a perfect {n}-th power")


def mc_twirl(n: int, x, samples: int, rng, sampler=None):
    """Monte Carlo estimate of the ``n``-fold twirl of ``x``.

    Parameters
    ----------
    n : int
        Moment order.
    x : array_like
        Square operator on ``d**n`` dimensions.
    samples : int
    rng : RngStream
    sampler : callable, optional
        ``sampler(d, rng) -> U``; Haar by default.

    Returns
    -------
    mean, stderr : numpy.ndarray
        Entrywise mean of ``U^{(x)n} x U^{dag (x)n}`` and its standard error.
    """
    if n < 1:
        raise ValueError("moment order must be >= 1")
    x = np.asarray(x, dtype=complex)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError("x must be square")
    d = _nth_root(x.shape[0], n)
    sampler = sampler or haar_unitary
    draws = np.empty((samples,) + x.shape, dtype=complex)
    for s in range(samples):
        draws[s] = apply_tensor_power(sampler(d, rng), x, n)
    return mean_and_stderr(draws)


def reduced_purity_experiment(dA: int, dB: int, samples: int, rng):
    """Mean purity of ``tr_B U|0><0|U^dag`` for Haar ``U`` on ``dA*dB``.

    Returns
    -------
    (float, float)
        Sample mean and standard error. The Haar average is
        ``(dA + dB) / (dA*dB + 1)``.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    vals = np.empty(samples)
    for s in range(samples):
        psi = haar_unitary(dA * dB, rng)[:, 0].reshape(dA, dB)
        vals[s] = purity(psi @ psi.conj().T)
    m, se = mean_and_stderr(vals)
    return float(m), float(se)


class TypicalityResult(NamedTuple):
    mean: float
    stderr: float
    bound: float
    omega_e_purity: float


def canonical_typicality_experiment(dS: int, dE: int, dR: int, samples: int, rng) -> TypicalityResult:
    """Distance of random restricted pure states to the canonical state.

    The restriction subspace is spanned by the first ``dR`` computational
    basis vectors of ``E (x) S``. Pure states are drawn Haar-uniformly
    inside it and their reduced states on ``S`` are compared with
    ``Omega_S = tr_E(1_R) / dR``.

    Returns
    -------
    TypicalityResult
        Sample mean and standard error of the trace distance, the bound
        ``sqrt(dS * tr(Omega_E^2)) / 2`` and ``tr(Omega_E^2)``.
    """
    if not 1 <= dR <= dS * dE:
        raise ValueError(f"dR must lie in [1, {dS * dE}], got {dR}")
    layout = SubsystemLayout(["E", "S"], [dE, dS])
    omega = np.zeros((dS * dE, dS * dE), dtype=complex)
    omega[np.arange(dR), np.arange(dR)] = 1.0 / dR
    omega_s = partial_trace(omega, layout, ["S"])
    omega_e_purity = purity(partial_trace(omega, layout, ["E"]))
    bound = 0.5 * np.sqrt(dS * omega_e_purity)
    vals = np.empty(samples)
    for s in range(samples):
        psi = np.zeros(dS * dE, dtype=complex)
        psi[:dR] = haar_unitary(dR, rng)[:, 0]
        rho_s = partial_trace(np.outer(psi, psi.conj()), layout, ["S"])
        vals[s] = trace_distance(rho_s, omega_s)
    m, se = mean_and_stderr(vals)
    return TypicalityResult(float(m), float(se), float(bound), float(omega_e_purity))


def levy_tail(d: float, delta: float, lipschitz: float) -> float:
    """Levy's lemma tail ``2 exp(-d delta^2 / (9 pi^3 L^2))``."""
    if delta <= 0 or lipschitz <= 0:
        raise ValueError("delta and lipschitz must be positive")
    return float(2.0 * np.exp(-d * delta**2 / (9 * np.pi**3 * lipschitz**2)))


def entanglement_tail(d_ab: float, delta: float) -> float:
    """Concentration tail for the reduced state of a random pure state,
    ``2 exp(-2 d_AB delta^2 / (9 pi^3))``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return float(2.0 * np.exp(-2.0 * d_ab * delta**2 / (9 * np.pi**3)))
