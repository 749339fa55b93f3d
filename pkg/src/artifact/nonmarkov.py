"""Non-Markovianity measures and analytic typicality bounds for processes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .process import ProcessTensor, initial_state, marginal, product_of_marginals
from .qmath import purity, relative_entropy, trace_distance, vn_entropy

__all__ = [
    "BoundParams",
    "NonMarkovReport",
    "BoundValue",
    "n1_maxmixed",
    "n1_marginals",
    "n2_maxmixed",
    "n_rel",
    "n_rel_direct",
    "diamond_interval",
    "report",
    "avg_purity_random",
    "avg_purity",
    "bound_Bk",
    "bound_from_purity",
    "concentration_constant",
    "concentration_tail",
]


@dataclass(frozen=True)
class BoundParams:
    dS: int
    dE: int
    k: int
    interaction: str = "random"

    def __post_init__(self):
        if self.dS < 1 or self.dE < 1 or self.k < 0:
            raise ValueError("dimensions must be >= 1 and k >= 0")
        if self.interaction not in ("random", "constant"):
            raise ValueError(f"unknown interaction {self.interaction!r}")


class NonMarkovReport(NamedTuple):
    n1_maxmixed: float
    n1_marginals: float
    n2_maxmixed: float
    n_rel: float
    diamond_interval: tuple


class BoundValue(NamedTuple):
    value: float
    branch: str


def _maxmixed(p: ProcessTensor) -> np.ndarray:
    return np.eye(p.dim) / p.dim


def n1_maxmixed(p: ProcessTensor) -> float:
    """Trace distance to the maximally noisy process (upper bound on N_1)."""
    return trace_distance(p.choi, _maxmixed(p))


def n1_marginals(p: ProcessTensor) -> float:
    """Trace distance to the product of the process marginals."""
    return trace_distance(p.choi, product_of_marginals(p).choi)


def n2_maxmixed(p: ProcessTensor) -> float:
    """``sqrt(tr Y^2 - dS^-(2k+1)) / 2``, the 2-norm distance to ``I/d``."""
    return float(0.5 * np.sqrt(max(purity(p.choi) - 1.0 / p.dim, 0.0)))


def n_rel(p: ProcessTensor) -> float:
    """Relative entropy to the closest Markov process, in bits.

    Uses the identity ``S(Y || prod marginals) = sum_i S(marginal_i) +
    S(rho_0) - S(Y)``.
    """
    total = vn_entropy(initial_state(p)) - vn_entropy(p.choi)
    for i in range(1, p.k + 1):
        total += vn_entropy(marginal(p, i).matrix)
    return float(max(total, 0.0))


def n_rel_direct(p: ProcessTensor) -> float:
    """``S(Y || product_of_marginals(Y))`` evaluated with matrix logarithms."""
    return relative_entropy(p.choi, product_of_marginals(p).choi)


def diamond_interval(n1: float, dS: int, k: int, exact: bool = False) -> tuple:
    """Interval for the diamond-norm measure implied by a trace-norm value.

    ``dS^-(2k+1) N_dia <= N_1 <= N_dia``. When ``n1`` is only an upper bound
    on ``N_1`` the lower end is not implied and is reported as 0.
    """
    lower = n1 if exact else 0.0
    return (float(lower), float(dS ** (2 * k + 1) * n1))


def report(p: ProcessTensor) -> NonMarkovReport:
    n1 = n1_maxmixed(p)
    return NonMarkovReport(n1, n1_marginals(p), n2_maxmixed(p), n_rel(p),
                           diamond_interval(n1, p.dS, p.k))


def avg_purity_random(params: BoundParams) -> float:
    """Haar-average process purity with independent unitaries at every step."""
    dS, dE, k = params.dS, params.dE, params.k
    dse = dS * dE
    if dse == 1:
        return 1.0
    return float((dE**2 - 1) / (dE * (dse + 1)) * ((dE**2 - 1) / (dse**2 - 1)) ** k + 1.0 / dE)


def avg_purity(params: BoundParams) -> float:
    """Average purity for either interaction type (constant needs ``k <= 2``)."""
    if params.interaction == "random":
        return avg_purity_random(params)
    from .weingarten import avg_purity_constant

    return avg_purity_constant(params.k, params.dS, params.dE)


def bound_from_purity(dS: int, dE: int, k: int, purity_avg: float) -> BoundValue:
    """Upper bound on the mean trace distance to ``I/d`` given ``E[tr Y^2]``."""
    D = float(dS) ** (2 * k + 1)
    if dE < D:
        y = 1.0 - dE / D
        x = dE / D * (1.0 + y)
        return BoundValue(float(0.5 * (np.sqrt(max(dE * purity_avg - x, 0.0)) + y)), "small-env")
    return BoundValue(float(0.5 * np.sqrt(max(D * purity_avg - 1.0, 0.0))), "large-env")


def bound_Bk(params: BoundParams) -> BoundValue:
    """Bound on the expected non-Markovianity ``E[N_1]``."""
    return bound_from_purity(params.dS, params.dE, params.k, avg_purity(params))


def concentration_constant(params: BoundParams) -> float:
    dS, dE, k = params.dS, params.dE, params.k
    if dS < 2:
        raise ValueError("dS must be >= 2")
    c = 0.25 if params.interaction == "constant" else (k + 1) / 4.0
    return c * dS * dE * ((dS - 1) / (dS ** (k + 1) - 1)) ** 2


def concentration_tail(params: BoundParams, delta: float) -> float:
    """``exp(-C delta^2)`` tail on deviations of ``N_1`` above its bound."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return float(np.exp(-concentration_constant(params) * delta**2))
