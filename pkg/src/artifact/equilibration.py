"""Dephasing, fuzzy clocks and single- and multitime equilibration bounds.

Composite systems in this module are ordered ``S (x) E (x) Gamma``: the
Hamiltonian acts on ``S (x) E`` and operations act on ``S (x) Gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .channels import KrausMap, superoperator
from .haar import _gen, haar_unitary
from .qmath import as_matrix, random_density, schatten_norm
from .weingarten import UnsupportedRegimeError

__all__ = [
    "Hamiltonian",
    "FuzzyClock",
    "MultitimeSetup",
    "MultitimeBound",
    "dephase",
    "g_factor",
    "partial_dephase",
    "s_factor",
    "d_eff",
    "gap_count",
    "short_bound",
    "short_trace_bound",
    "time_averaged_variance",
    "induced_2norm",
    "multitime_bound",
    "multitime_lhs",
    "random_setup",
]

LEVEL_MERGE_TOL = 1e-12
MAX_JOINT_DIM = 64
QUAD_RTOL = 1e-8


@dataclass(frozen=True)
class Hamiltonian:
    """``H = sum_n E_n P_n`` with distinct, increasing energies."""

    energies: np.ndarray
    projectors: tuple
    _basis: np.ndarray = field(default=None, repr=False, compare=False)
    _levels: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        ps = tuple(as_matrix(p) for p in self.projectors)
        if len(ps) != e.size or e.size == 0:
            raise ValueError("one projector per energy level required")
        if np.any(np.diff(e) <= 0):
            raise ValueError("energies must be strictly increasing")
        d = ps[0].shape[0]
        if not np.allclose(sum(ps), np.eye(d), atol=1e-9):
            raise ValueError("projectors must resolve the identity")
        if self._basis is None:
            cols, levels = [], []
            for n, p in enumerate(ps):
                lam, v = np.linalg.eigh(p)
                cols.append(v[:, lam > 0.5])
                levels += [n] * int(np.sum(lam > 0.5))
            basis = np.hstack(cols)
            if basis.shape[1] != d:
                raise ValueError("projectors are not orthogonal")
            object.__setattr__(self, "_basis", basis)
            object.__setattr__(self, "_levels", np.array(levels))
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "projectors", ps)

    @classmethod
    def from_matrix(cls, h) -> "Hamiltonian":
        """Spectral decomposition; eigenvalues within 1e-12 share a level."""
        h = as_matrix(h)
        if not np.allclose(h, h.conj().T, atol=1e-12):
            raise ValueError("Hamiltonian must be Hermitian")
        lam, v = np.linalg.eigh(h)
        levels = np.concatenate([[0], np.cumsum(np.diff(lam) > LEVEL_MERGE_TOL)])
        energies, projectors = [], []
        for n in range(levels[-1] + 1):
            cols = v[:, levels == n]
            energies.append(lam[levels == n].mean())
            projectors.append(cols @ cols.conj().T)
        return cls(np.array(energies), tuple(projectors), v, levels)

    @classmethod
    def from_energies(cls, energies) -> "Hamiltonian":
        """Diagonal Hamiltonian in the computational basis."""
        return cls.from_matrix(np.diag(np.asarray(energies, dtype=float)))

    @property
    def dim(self) -> int:
        return self.projectors[0].shape[0]

    @property
    def n_levels(self) -> int:
        return self.energies.size

    def matrix(self) -> np.ndarray:
        return sum(e * p for e, p in zip(self.energies, self.projectors))

    def evolve(self, t: float) -> np.ndarray:
        """``exp(-i H t)``."""
        phases = np.exp(-1j * self.energies[self._levels] * t)
        return (self._basis * phases) @ self._basis.conj().T

    def gaps(self) -> np.ndarray:
        """All ordered differences ``E_n - E_m`` with ``n != m``, sorted."""
        e = self.energies
        g = (e[:, None] - e[None, :])[~np.eye(e.size, dtype=bool)]
        return np.sort(g)


@dataclass(frozen=True)
class FuzzyClock:
    """Waiting-time distribution with fuzziness ``T`` around mean time ``tau``.

    Kinds
    -----
    uniform
        Flat on ``[tau - T/2, tau + T/2]``.
    half-normal
        ``p(t) = 2/sqrt(pi T) exp(-(t - tau)^2/T)`` for ``t >= tau``.
    numeric
        Tabulated density ``pdf`` on the time grid ``times``.
    sharp
        Deterministic waiting time ``tau``; ``T`` is ignored. The
        equilibrium reference keeps the unitary for such a step.
    """

    kind: str
    T: float = 1.0
    tau: float = 0.0
    times: np.ndarray | None = None
    pdf: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "half-normal", "numeric", "sharp"):
            raise ValueError(f"unknown clock kind {self.kind!r}")
        if self.kind != "sharp" and not self.T > 0:
            raise ValueError("fuzziness T must be positive")
        if self.tau < 0:
            raise ValueError("mean time must be nonnegative")
        if self.kind == "numeric":
            t = np.asarray(self.times, dtype=float)
            p = np.asarray(self.pdf, dtype=float)
            if t.shape != p.shape or t.size < 2 or np.any(np.diff(t) <= 0):
                raise ValueError("numeric clock needs increasing times with matching pdf")
            if abs(np.trapezoid(p, t) - 1.0) > 1e-6:
                raise ValueError("numeric pdf must integrate to 1")
            object.__setattr__(self, "times", t)
            object.__setattr__(self, "pdf", p)

    def characteristic(self, omega: float) -> complex:
        """``E[exp(-i t omega)]`` over the waiting time."""
        if omega == 0:
            return 1.0 + 0j
        if self.kind == "sharp":
            return complex(np.exp(-1j * self.tau * omega))
        if self.kind == "uniform":
            return complex(np.exp(-1j * self.tau * omega) * np.sinc(self.T * omega / (2 * np.pi)))
        if self.kind == "half-normal":
            norm = 2.0 / np.sqrt(np.pi * self.T)
            f = lambda s: norm * np.exp(-s * s / self.T)
            re = integrate.quad(f, 0, np.inf, weight="cos", wvar=omega, epsrel=QUAD_RTOL)[0]
            im = -integrate.quad(f, 0, np.inf, weight="sin", wvar=omega, epsrel=QUAD_RTOL)[0]
            return complex(np.exp(-1j * self.tau * omega) * (re + 1j * im))
        t, p = self.times, self.pdf
        f = lambda s: np.interp(s, t, p)
        opts = dict(weight="cos", wvar=omega, epsrel=QUAD_RTOL, limit=500)
        re = integrate.quad(f, t[0], t[-1], **opts)[0]
        opts["weight"] = "sin"
        im = -integrate.quad(f, t[0], t[-1], **opts)[0]
        return complex(re + 1j * im)


@dataclass(frozen=True)
class MultitimeSetup:
    """Operations ``A_0..A_k`` on ``S (x) Gamma`` interleaved with evolutions.

    ``hamiltonians`` holds one Hamiltonian on ``S (x) E`` or one per step.
    """

    hamiltonians: tuple
    ops: tuple
    rho: np.ndarray
    gamma: np.ndarray
    dS: int

    def __post_init__(self):
        hs = self.hamiltonians
        if isinstance(hs, Hamiltonian):
            hs = (hs,) * len(self.ops)
        hs = tuple(hs)
        if len(hs) != len(self.ops):
            raise ValueError("need one Hamiltonian per operation")
        rho, gamma = as_matrix(self.rho), as_matrix(self.gamma)
        dse, dg = rho.shape[0], gamma.shape[0]
        if any(h.dim != dse for h in hs):
            raise ValueError("Hamiltonian dimension must match the S (x) E state")
        if dse % self.dS:
            raise ValueError("dS must divide the S (x) E dimension")
        if any(op.d_in != self.dS * dg or op.d_out != self.dS * dg for op in self.ops):
            raise ValueError("operations must act on S (x) Gamma")
        object.__setattr__(self, "hamiltonians", hs)
        object.__setattr__(self, "ops", tuple(self.ops))
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "gamma", gamma)

    @property
    def k(self) -> int:
        return len(self.ops) - 1

    @property
    def dE(self) -> int:
        return self.rho.shape[0] // self.dS

    @property
    def dG(self) -> int:
        return self.gamma.shape[0]

    @property
    def dim(self) -> int:
        return self.rho.shape[0] * self.dG


class MultitimeBound(NamedTuple):
    A: float
    terms: list
    total: float


def _check_dim(rho, h: Hamiltonian) -> np.ndarray:
    rho = as_matrix(rho)
    if rho.shape != (h.dim, h.dim):
        raise ValueError(f"state dimension {rho.shape[0]} does not match Hamiltonian {h.dim}")
    return rho


def _apply_level_weights(rho: np.ndarray, h: Hamiltonian, g: np.ndarray) -> np.ndarray:
    """``sum_nm g[n, m] P_n rho P_m`` using the eigenbasis."""
    v, lv = h._basis, h._levels
    r = v.conj().T @ rho @ v
    return v @ (g[np.ix_(lv, lv)] * r) @ v.conj().T


def dephase(rho, h: Hamiltonian) -> np.ndarray:
    """Block-diagonal part ``sum_n P_n rho P_n``."""
    rho = _check_dim(rho, h)
    return _apply_level_weights(rho, h, np.eye(h.n_levels))


def g_factor(h: Hamiltonian, clock: FuzzyClock) -> np.ndarray:
    """Matrix ``G_nm = E[exp(-i t (E_n - E_m))]`` over the clock's waiting time."""
    e = h.energies
    diff = e[:, None] - e[None, :]
    g = np.empty(diff.shape, dtype=complex)
    for n in range(e.size):
        g[n, n] = 1.0
        for m in range(n + 1, e.size):
            g[n, m] = clock.characteristic(diff[n, m])
            # the waiting-time density is real, so G_mn = conj(G_nm)
            g[m, n] = np.conj(g[n, m])
    return g


def partial_dephase(rho, h: Hamiltonian, clock: FuzzyClock) -> np.ndarray:
    """Clock-averaged evolution ``sum_nm G_nm P_n rho P_m``."""
    rho = _check_dim(rho, h)
    return _apply_level_weights(rho, h, g_factor(h, clock))


def s_factor(h: Hamiltonian, clock: FuzzyClock) -> float:
    """``max_{n != m} |G_nm|``."""
    if h.n_levels < 2:
        raise ValueError("s_factor needs at least two energy levels")
    g = np.abs(g_factor(h, clock))
    np.fill_diagonal(g, 0.0)
    return float(g.max())


def d_eff(rho, h: Hamiltonian) -> float:
    """Inverse participation ratio ``1 / sum_n (tr P_n rho)^2``."""
    rho = _check_dim(rho, h)
    occ = np.array([np.real(np.trace(p @ rho)) for p in h.projectors])
    return float(1.0 / np.sum(occ**2))


def gap_count(h: Hamiltonian, eps: float) -> int:
    """Largest number of energy gaps inside any window ``[E, E + eps]``."""
    if h.n_levels < 2:
        raise ValueError("gap_count needs at least two energy levels")
    g = h.gaps()
    hi = np.searchsorted(g, g + eps, side="right")
    return int(np.max(hi - np.arange(g.size)))


def _short_factor(h: Hamiltonian, eps: float, T: float) -> float:
    return gap_count(h, eps) * (1.0 + 8.0 * np.log2(h.n_levels) / (eps * T))


def short_bound(a, rho, h: Hamiltonian, eps: float, T: float) -> float:
    """Finite-time bound on the time-averaged variance of ``<A>``.

    ``||A||^2 / d_eff(rho) * N(eps) * (1 + 8 log2(D) / (eps T))`` with ``D``
    the number of distinct energies.
    """
    if eps <= 0 or T <= 0:
        raise ValueError("eps and T must be positive")
    a = as_matrix(a)
    return float(schatten_norm(a, np.inf) ** 2 / d_eff(rho, h) * _short_factor(h, eps, T))


def short_trace_bound(dS: int, rho, h: Hamiltonian, eps: float, T: float) -> float:
    """Subsystem trace-distance variant ``dS/(2 sqrt(d_eff)) sqrt(N(eps) f)``."""
    if eps <= 0 or T <= 0:
        raise ValueError("eps and T must be positive")
    return float(0.5 * dS / np.sqrt(d_eff(rho, h)) * np.sqrt(_short_factor(h, eps, T)))


def time_averaged_variance(a, rho, h: Hamiltonian, T: float, samples: int, rng) -> float:
    """Mean of ``(<A>_t - <A>_omega)^2`` over ``t`` uniform on ``[0, T]``."""
    a, rho = as_matrix(a), _check_dim(rho, h)
    times = _gen(rng).uniform(0.0, T, samples)
    v, lv = h._basis, h._levels
    r = v.conj().T @ rho @ v
    ab = v.conj().T @ a @ v
    e = h.energies[lv]
    coeff = (ab.T * r).reshape(-1)
    ref = np.real(np.sum(coeff[(lv[:, None] == lv[None, :]).reshape(-1)]))
    freq = (e[:, None] - e[None, :]).reshape(-1)
    vals = np.real(np.exp(-1j * np.outer(times, freq)) @ coeff)
    return float(np.mean((vals - ref) ** 2))


def induced_2norm(superop) -> float:
    """Largest singular value of a superoperator matrix in an orthonormal basis."""
    m = as_matrix(superop)
    if m.shape[0] != m.shape[1]:
        raise ValueError("superoperator representation must be square")
    return float(np.linalg.norm(m, 2))


# ---- multitime machinery on S (x) E (x) Gamma -------------------------------

def _lift_op(op: KrausMap, dS: int, dE: int, dG: int) -> KrausMap:
    """Embed a map on ``S (x) Gamma`` into ``S (x) E (x) Gamma``."""
    ops = []
    for k in op.operators:
        t = k.reshape(dS, dG, dS, dG)
        full = np.einsum("agbh,ef->aegbfh", t, np.eye(dE)).reshape(dS * dE * dG, dS * dE * dG)
        ops.append(full)
    return KrausMap(ops, op.weights)


def _apply_map(op: KrausMap, x: np.ndarray) -> np.ndarray:
    return sum(w * k @ x @ k.conj().T for w, k in zip(op.weights, op.operators))


class _Step:
    """Evolution at one step: clock-averaged map and its equilibrium reference."""

    def __init__(self, h: Hamiltonian, clock: FuzzyClock, dG: int):
        self.h, self.clock, self.dG = h, clock, dG
        self.g = g_factor(h, clock)
        self.sharp = clock.kind == "sharp"

    def _weights(self, x, g):
        d = self.h.dim
        t = x.reshape(d, self.dG, d, self.dG)
        v, lv = self.h._basis, self.h._levels
        r = np.einsum("ic,iajb,jd->cadb", v.conj(), t, v)
        r = r * g[np.ix_(lv, lv)][:, None, :, None]
        return np.einsum("ic,cadb,jd->iajb", v, r, v.conj()).reshape(x.shape)

    def G(self, x):
        return self._weights(x, self.g)

    def D(self, x):
        return self.G(x) if self.sharp else self._weights(x, np.eye(self.h.n_levels))


def _steps(setup: MultitimeSetup, clock) -> list:
    clocks = (clock,) * (setup.k + 1) if isinstance(clock, FuzzyClock) else tuple(clock)
    if len(clocks) != setup.k + 1:
        raise ValueError("need one clock per step")
    if setup.dim > MAX_JOINT_DIM:
        raise UnsupportedRegimeError(f"joint dimension {setup.dim} exceeds {MAX_JOINT_DIM}")
    return [_Step(h, c, setup.dG) for h, c in zip(setup.hamiltonians, clocks)]


def multitime_lhs(setup: MultitimeSetup, clock) -> float:
    """``|tr[A_k G ... A_0 G(rho)] - tr[A_k D ... A_0 D(rho)]|``.

    ``clock`` is a single :class:`FuzzyClock` or one per step.
    """
    steps = _steps(setup, clock)
    ops = [_lift_op(op, setup.dS, setup.dE, setup.dG) for op in setup.ops]
    x = y = np.kron(setup.rho, setup.gamma)
    for st, op in zip(steps, ops):
        x = _apply_map(op, st.G(x))
        y = _apply_map(op, st.D(y))
    return float(abs(np.trace(x) - np.trace(y)))


def multitime_bound(setup: MultitimeSetup, clock) -> MultitimeBound:
    """Bound ``A_k + sum_l ||A_{k:l+1}|| (B_l + C_l)`` on :func:`multitime_lhs`.

    Returns
    -------
    MultitimeBound
        ``A`` is the single-time term, ``terms`` lists ``(B_l, C_l)`` for
        ``l = 0..k-1`` and ``total`` the full bound.
    """
    steps = _steps(setup, clock)
    k = setup.k
    ops = [_lift_op(op, setup.dS, setup.dE, setup.dG) for op in setup.ops]
    # X (x) id_E has the same induced 2-norm as X, so norms use S (x) Gamma only
    sops = [superoperator(op) for op in setup.ops]
    n = setup.dS * setup.dG
    varrho = np.kron(setup.rho, setup.gamma)
    varpi = steps[0].D(varrho)

    def chain(lo, hi):
        m = np.eye(n * n, dtype=complex)
        for j in range(lo, hi + 1):
            m = sops[j] @ m
        return m

    s_prod = 1.0
    for st in steps:
        if st.h.n_levels > 1:
            g = np.abs(st.g)
            np.fill_diagonal(g, 0.0)
            s_prod *= g.max()
    a_term = s_prod * induced_2norm(chain(0, k)) * schatten_norm(varrho - varpi, 2)

    terms, total = [], a_term
    x, y = steps[0].G(varrho), varpi  # varrho_l and varpi_l
    for ell in range(k):
        op = ops[ell]

        def g_tail(z):
            for st in steps[ell + 1:]:
                z = st.G(z)
            return z

        d_next = steps[ell + 1].D
        b = schatten_norm(g_tail(_apply_map(op, x)) - d_next(_apply_map(op, x))
                          - _apply_map(op, g_tail(x) - d_next(x)), 2)
        diff = x - y
        c = schatten_norm(d_next(_apply_map(op, diff)) - _apply_map(op, d_next(diff)), 2)
        terms.append((float(b), float(c)))
        total += induced_2norm(chain(ell + 1, k)) * (b + c)
        x = steps[ell + 1].G(_apply_map(op, x))
        y = steps[ell + 1].D(_apply_map(op, y))
    return MultitimeBound(float(a_term), terms, float(total))


def random_setup(rng, dS: int, dE: int, dG: int, k: int, outcomes: int = 2) -> tuple:
    """Random nondegenerate Hamiltonian and trace-nonincreasing operations.

    Each operation keeps a random nonempty subset of the outcomes of a Haar
    instrument on ``S (x) Gamma``; the initial state of ``S (x) E`` is pure.

    Returns
    -------
    (MultitimeSetup, float)
        The setup and the minimum gap of its Hamiltonian.
    """
    g = _gen(rng)
    dse, dsg = dS * dE, dS * dG
    herm = g.normal(size=(dse, dse)) + 1j * g.normal(size=(dse, dse))
    h = Hamiltonian.from_matrix((herm + herm.conj().T) / 2)
    ops = []
    for _ in range(k + 1):
        u = haar_unitary(dsg * outcomes, g)
        kraus = [u[i * dsg:(i + 1) * dsg, :dsg] for i in range(outcomes)]
        keep = g.permutation(outcomes)[: g.integers(1, outcomes + 1)]
        ops.append(KrausMap([kraus[i] for i in sorted(keep)]))
    psi = g.normal(size=dse) + 1j * g.normal(size=dse)
    psi /= np.linalg.norm(psi)
    gamma = random_density(dG, g)
    setup = MultitimeSetup(h, tuple(ops), np.outer(psi, psi.conj()), gamma, dS)
    return setup, float(np.min(np.diff(h.energies)))
