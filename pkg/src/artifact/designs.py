"""Large-deviation bounds over approximate unitary designs and RDC circuits.

Bounds are evaluated in log space so environments as large as ``2**60`` can
be scanned without overflow. The circuit ensemble is the random diagonal
circuit: layers of commuting two-qubit phase gates interleaved with
Hadamards on every qubit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .haar import _gen, apply_tensor_power, mean_and_stderr
from .weingarten import UnsupportedRegimeError, analytic_twirl

__all__ = [
    "DesignSpec",
    "LdbParams",
    "RdcSchedule",
    "eta",
    "log_eta",
    "lipschitz_C",
    "log_bound_Bk_random",
    "log_ldb_bound",
    "ldb_bound",
    "optimize_m",
    "required_depth",
    "rdc_phases",
    "rdc_layer",
    "build_W",
    "MomentError",
    "design_moment_error",
]

MAX_RDC_QUBITS = 12
MAX_W_QUBITS = 10
GRID_POINTS = 200


@dataclass(frozen=True)
class DesignSpec:
    t: int
    eps: float

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("design order t must be >= 1")
        if self.eps < 0:
            raise ValueError("design error must be nonnegative")


@dataclass(frozen=True)
class LdbParams:
    """Process and threshold parameters; ``dE`` may be any positive float."""

    dS: int
    dE: float
    k: int
    delta: float
    m: float | None = None

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    def with_m(self, m: float) -> "LdbParams":
        return LdbParams(self.dS, self.dE, self.k, self.delta, m)


@dataclass(frozen=True)
class RdcSchedule:
    """Qubit pairs receiving a two-qubit diagonal gate in each layer."""

    n_qubits: int
    pairs: tuple = None

    def __post_init__(self):
        pairs = self.pairs
        if pairs is None:
            pairs = tuple(itertools.combinations(range(self.n_qubits), 2))
        pairs = tuple(tuple(int(q) for q in p) for p in pairs)
        for a, b in pairs:
            if a == b or not (0 <= a < self.n_qubits and 0 <= b < self.n_qubits):
                raise ValueError(f"invalid qubit pair {(a, b)}")
        object.__setattr__(self, "pairs", pairs)


def log_eta(dS: int, dE: float, k: int) -> float:
    """Natural log of :func:`eta`."""
    l_dse = np.log(dS) + np.log(dE)
    return float(np.logaddexp(4 * l_dse + 2 * k * np.log(dS), -(2 * k + 1) * np.log(dS)) - np.log(4))


def eta(dS: int, dE: float, k: int) -> float:
    """Sum of coefficient moduli of the squared 2-norm measure,
    ``(dSE^4 dS^{2k} + dS^{-(2k+1)}) / 4``."""
    dse = dS * dE
    return (dse**4 * dS ** (2 * k) + dS ** (-(2 * k + 1))) / 4.0


def lipschitz_C(dS: int, dE: float, k: int) -> float:
    """Concentration constant ``dSE (k+1)/16 ((dS-1)/(dS^{k+1}-1))^2``."""
    if dS < 2:
        raise ValueError("dS must be >= 2")
    return dS * dE * (k + 1) / 16.0 * ((dS - 1) / (dS ** (k + 1) - 1)) ** 2


def log_bound_Bk_random(dS: int, dE: float, k: int) -> float:
    """Natural log of the mean non-Markovianity bound, random interaction.

    In the large-environment branch ``D * E[tr Y^2] - 1`` is evaluated as
    ``(1-u)(1-v)^k - 1 + D/dE`` with ``u, v = O(1/dE)`` to avoid
    cancellation.
    """
    D = float(dS) ** (2 * k + 1)
    if dE < D:
        from .nonmarkov import BoundParams, bound_Bk

        return float(np.log(bound_Bk(BoundParams(dS, int(round(dE)), k)).value))
    a, s = float(dE), float(dS)
    u = (a + s) / (a * a * s + a)
    v = (s * s - 1) / (a * a * s * s - 1)
    excess = np.expm1(np.log1p(-u) + k * np.log1p(-v)) + D / a
    return float(np.log(0.5) + 0.5 * np.log(max(excess, 1e-300)))


def _log_curve(p: LdbParams, spec: DesignSpec) -> Callable:
    """Vectorized ``m -> log bound`` with the ``m``-independent parts precomputed."""
    dS, dE, k = p.dS, p.dE, p.k
    l_dse = np.log(dS) + np.log(dE)
    log_c = np.log(lipschitz_C(dS, dE, k))
    log_2b = np.log(2.0) + log_bound_Bk_random(dS, dE, k)
    l_eta = log_eta(dS, dE, k)
    l_err = np.log(spec.eps) - spec.t * l_dse if spec.eps > 0 else None
    slope = 3 * (2 * k + 1) * np.log(dS) - 2 * np.log(p.delta)

    def curve(m):
        m = np.asarray(m, dtype=float)
        terms = [m * (np.log(m) - log_c), 2 * m * log_2b]
        if l_err is not None:
            terms.append(l_err + 2 * m * l_eta)
        return slope * m + logsumexp(np.stack(terms), axis=0)

    return curve


def log_ldb_bound(p: LdbParams, spec: DesignSpec) -> float:
    """Natural log of the design large-deviation bound (see :func:`ldb_bound`)."""
    m = p.m
    if m is None or not 0 < m <= spec.t / 4:
        raise ValueError(f"m must lie in (0, t/4] = (0, {spec.t / 4}], got {m}")
    return float(_log_curve(p, spec)(m))


def ldb_bound(p: LdbParams, spec: DesignSpec) -> float:
    """Bound on the probability that the diamond non-Markovianity exceeds delta.

    ``dS^{3m(2k+1)} / delta^{2m} [(m/C)^m + (2B)^{2m} + eps/dSE^t eta^{2m}]``
    with ``C`` from :func:`lipschitz_C`, ``B`` the random-interaction mean
    bound and ``eta`` from :func:`eta`. Overflow returns ``inf``.
    """
    with np.errstate(over="ignore"):
        return float(np.exp(log_ldb_bound(p, spec)))


class OptimizedBound(NamedTuple):
    m: float
    bound: float
    log_bound: float


def optimize_m(p: LdbParams, spec: DesignSpec) -> OptimizedBound:
    """Minimize the bound over real ``m`` in ``(0, t/4]``.

    A 200-point grid brackets the minimum of the log-bound and a
    golden-section search refines it; ties resolve to the smaller ``m``.
    The bound holds for every admissible ``m``, so its ``m -> 0+`` limit
    ``2 + eps / dSE^t`` is also a valid value; it is returned with
    ``m = 0.0`` when nothing on the grid beats it.
    """
    cap = spec.t / 4.0
    grid = cap * np.arange(1, GRID_POINTS + 1) / GRID_POINTS
    curve = _log_curve(p, spec)
    f = lambda m: float(curve(m))
    vals = curve(grid)
    j = int(np.argmin(vals))
    best_m, best = float(grid[j]), float(vals[j])
    if 0 < j < GRID_POINTS - 1:
        try:
            res = minimize_scalar(f, bracket=(grid[j - 1], grid[j], grid[j + 1]), method="golden",
                                  options={"xtol": 1e-10})
            if grid[j - 1] <= res.x <= grid[j + 1] and res.fun < best:
                best_m, best = float(res.x), float(res.fun)
        except ValueError:
            pass
    elif j == 0:
        res = minimize_scalar(f, bounds=(grid[0] * 1e-6, grid[1]), method="bounded",
                              options={"xatol": 1e-12})
        if res.fun < best:
            best_m, best = float(res.x), float(res.fun)
    edge = [0.0, 0.0]
    if spec.eps > 0:
        edge.append(np.log(spec.eps) - spec.t * (np.log(p.dS) + np.log(p.dE)))
    edge = float(logsumexp(edge))
    if edge < best:
        best_m, best = 0.0, edge
    with np.errstate(over="ignore"):
        return OptimizedBound(best_m, float(np.exp(best)), best)


def required_depth(t: int, eps: float, n: int) -> float:
    """Repetitions ``t - log2(eps)/n`` sufficient for an ``eps``-approximate design."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(t - np.log2(eps) / n)


def _bits(n: int) -> np.ndarray:
    idx = np.arange(2**n)
    return (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1


def rdc_phases(sched: RdcSchedule, t: int, rng) -> np.ndarray:
    """Diagonal of one random diagonal circuit layer.

    Each pair ``(a, b)`` gets ``diag(1, e^{i phi1}) (x) diag(1, e^{i phi2})``
    times a controlled phase ``e^{i theta}`` with ``phi`` drawn from
    ``{2 pi m/(t+1)}`` and ``theta`` from ``{2 pi m/(floor(t/2)+1)}``.
    Qubit 0 is the most significant bit.
    """
    n = sched.n_qubits
    if n > MAX_RDC_QUBITS:
        raise UnsupportedRegimeError(f"dense RDC layers limited to {MAX_RDC_QUBITS} qubits")
    g = _gen(rng)
    bits = _bits(n)
    phase = np.zeros(2**n)
    for a, b in sched.pairs:
        phi1, phi2 = 2 * np.pi * g.integers(0, t + 1, size=2) / (t + 1)
        theta = 2 * np.pi * g.integers(0, t // 2 + 1) / (t // 2 + 1)
        phase += phi1 * bits[:, a] + phi2 * bits[:, b] + theta * bits[:, a] * bits[:, b]
    return np.exp(1j * phase)


def rdc_layer(sched: RdcSchedule, t: int, rng) -> np.ndarray:
    """Dense diagonal unitary of one RDC layer; see :func:`rdc_phases`."""
    return np.diag(rdc_phases(sched, t, rng))


def _hadamards(n: int) -> np.ndarray:
    h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    out = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        out = np.kron(out, h)
    return out


def build_W(n: int, t: int, ell: int, sched: RdcSchedule | None = None, rng=None) -> np.ndarray:
    """Sample ``(RDC H_n)^{2 ell} RDC`` with fresh phases in every layer."""
    if n > MAX_W_QUBITS:
        raise UnsupportedRegimeError(f"dense W circuits limited to {MAX_W_QUBITS} qubits")
    if ell < 0:
        raise ValueError("ell must be >= 0")
    sched = sched or RdcSchedule(n)
    if sched.n_qubits != n:
        raise ValueError("schedule qubit count does not match n")
    hn = _hadamards(n)
    w = np.diag(rdc_phases(sched, t, rng))
    for _ in range(2 * ell):
        # left-multiply by RDC * H
        w = rdc_phases(sched, t, rng)[:, None] * (hn @ w)
    return w


class MomentError(NamedTuple):
    deviation: float
    stderr: float


def _probes(n: int, d: int) -> list:
    dim = d**n
    diag = np.zeros((dim, dim), dtype=complex)
    diag[0, 0] = 1.0
    off = np.zeros((dim, dim), dtype=complex)
    # |0 1><1 0| on the first two factors, or |0><1| for a single copy
    if n == 1:
        off[0, 1] = 1.0
    else:
        off[d ** (n - 2), d ** (n - 1)] = 1.0
    return [diag, off]


def design_moment_error(sampler: Callable, n_moment: int, d: int, samples: int, rng) -> MomentError:
    """Deviation of an ensemble's twirl from the Haar twirl.

    Parameters
    ----------
    sampler : callable
        ``sampler(rng) -> U`` returning a ``d x d`` unitary.
    n_moment : {1, 2}
    d : int
    samples : int
    rng : RngStream

    Returns
    -------
    MomentError
        Largest entrywise deviation over a fixed probe set and the standard
        error of that entry.
    """
    if n_moment not in (1, 2):
        raise UnsupportedRegimeError("moment checks available for n <= 2")
    probes = _probes(n_moment, d)
    draws = [np.empty((samples,) + p.shape, dtype=complex) for p in probes]
    for s in range(samples):
        u = sampler(rng)
        for pi, p in enumerate(probes):
            draws[pi][s] = apply_tensor_power(u, p, n_moment)
    worst, worst_se = 0.0, 0.0
    for p, dr in zip(probes, draws):
        mean, se = mean_and_stderr(dr)
        dev = np.abs(mean - analytic_twirl(n_moment, p, d))
        idx = np.unravel_index(np.argmax(dev), dev.shape)
        if dev[idx] >= worst:
            worst, worst_se = float(dev[idx]), float(se[idx])
    return MomentError(worst, worst_se)
