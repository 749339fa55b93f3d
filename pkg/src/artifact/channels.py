"""Quantum operations in operator-sum and Choi form.

Choi matrices are laid out as ``out (x) in``. The unnormalized convention is
``C = (Phi (x) id)(sum_ij |ii><jj|)``, so a trace-preserving map has
``tr_out C = I_in``. The unit-trace convention divides by ``d_in``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qmath import EIG_CUTOFF, TOL, SubsystemLayout, as_matrix, eig_hermitian, partial_trace

__all__ = [
    "KrausMap",
    "ChoiMatrix",
    "Instrument",
    "apply_kraus",
    "choi_of",
    "apply_via_choi",
    "kraus_from_choi",
    "dilate_apply",
    "standard_channel",
    "superoperator",
    "PAULIS",
]

PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


@dataclass(frozen=True)
class KrausMap:
    """Weighted operator-sum map ``rho -> sum_mu w_mu K_mu rho K_mu^dag``.

    Parameters
    ----------
    operators : sequence of array_like
        ``d_out x d_in`` Kraus operators.
    weights : sequence of float, optional
        Real outcome weights, all 1 by default. Weights other than 1 are
        allowed for the weighted maps that appear in the multitime bounds;
        trace non-increase is only checked for unit weights.
    """

    operators: tuple
    weights: tuple = None

    def __init__(self, operators, weights=None):
        ops = tuple(as_matrix(k) for k in operators)
        if not ops:
            raise ValueError("need at least one Kraus operator")
        shape = ops[0].shape
        if any(k.shape != shape for k in ops):
            raise ValueError("Kraus operators must share a shape")
        w = tuple(float(x) for x in weights) if weights is not None else (1.0,) * len(ops)
        if len(w) != len(ops):
            raise ValueError("one weight per operator required")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "weights", w)
        if all(x == 1.0 for x in w):
            ev = np.linalg.eigvalsh(self.gram())
            if ev[-1] > 1 + TOL:
                raise ValueError("Kraus map is trace increasing")

    @property
    def d_in(self) -> int:
        return self.operators[0].shape[1]

    @property
    def d_out(self) -> int:
        return self.operators[0].shape[0]

    def gram(self) -> np.ndarray:
        """``sum_mu w_mu K_mu^dag K_mu``."""
        return sum(w * k.conj().T @ k for w, k in zip(self.weights, self.operators))

    @property
    def is_tp(self) -> bool:
        return bool(np.allclose(self.gram(), np.eye(self.d_in), atol=TOL, rtol=0))

    def __call__(self, rho) -> np.ndarray:
        return apply_kraus(self, rho)


@dataclass(frozen=True)
class ChoiMatrix:
    """Choi matrix of a map with its normalization tag."""

    matrix: np.ndarray
    d_in: int
    d_out: int
    normalization: str = "unnormalized"

    def __post_init__(self):
        m = as_matrix(self.matrix)
        if m.shape != (self.d_in * self.d_out,) * 2:
            raise ValueError("Choi matrix shape does not match d_out * d_in")
        if self.normalization not in ("unnormalized", "unit-trace"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        object.__setattr__(self, "matrix", m)

    @property
    def layout(self) -> SubsystemLayout:
        return SubsystemLayout(["out", "in"], [self.d_out, self.d_in])

    def unnormalized(self) -> "ChoiMatrix":
        if self.normalization == "unnormalized":
            return self
        return ChoiMatrix(self.matrix * self.d_in, self.d_in, self.d_out, "unnormalized")

    def unit_trace(self) -> "ChoiMatrix":
        if self.normalization == "unit-trace":
            return self
        return ChoiMatrix(self.matrix / self.d_in, self.d_in, self.d_out, "unit-trace")

    @property
    def is_tp(self) -> bool:
        c = self.unnormalized()
        marg = partial_trace(c.matrix, c.layout, ["in"])
        return bool(np.allclose(marg, np.eye(self.d_in), atol=TOL, rtol=0))


@dataclass(frozen=True)
class Instrument:
    """Collection of CP branches summing to a trace-preserving map."""

    branches: tuple

    def __init__(self, branches: Sequence[KrausMap]):
        branches = tuple(branches)
        total = sum(b.gram() for b in branches)
        if not np.allclose(total, np.eye(branches[0].d_in), atol=TOL, rtol=0):
            raise ValueError("instrument branches do not sum to a trace-preserving map")
        object.__setattr__(self, "branches", branches)


def apply_kraus(m: KrausMap, rho) -> np.ndarray:
    rho = as_matrix(rho)
    if rho.shape != (m.d_in, m.d_in):
        raise ValueError(f"state dimension {rho.shape[0]} does not match map input {m.d_in}")
    return sum(w * k @ rho @ k.conj().T for w, k in zip(m.weights, m.operators))


def choi_of(m: KrausMap) -> ChoiMatrix:
    """Unnormalized Choi matrix ``sum_ij Phi(|i><j|) (x) |i><j|``."""
    c = sum(w * np.outer(k.reshape(-1), k.reshape(-1).conj())
            for w, k in zip(m.weights, m.operators))
    # vec(K) row-major has index (out, in), matching the out (x) in layout
    return ChoiMatrix(c, m.d_in, m.d_out, "unnormalized")


def apply_via_choi(c: ChoiMatrix, rho) -> np.ndarray:
    """``tr_in[C (I_out (x) rho^T)]`` with ``C`` unnormalized."""
    if c.normalization != "unnormalized":
        raise ValueError("apply_via_choi expects the unnormalized convention")
    rho = as_matrix(rho)
    if rho.shape != (c.d_in, c.d_in):
        raise ValueError("dimension mismatch")
    t = c.matrix.reshape(c.d_out, c.d_in, c.d_out, c.d_in)
    return np.einsum("aibj,ji->ab", t, rho.T)


def kraus_from_choi(c: ChoiMatrix) -> KrausMap:
    """Canonical Kraus operators from the spectral decomposition of ``C``."""
    c = c.unnormalized()
    lam, vec = eig_hermitian(c.matrix)
    if lam[0] < -TOL * max(1.0, abs(lam[-1])):
        raise ValueError("Choi matrix is not positive semidefinite")
    keep = lam > EIG_CUTOFF
    ops = [np.sqrt(l) * vec[:, i].reshape(c.d_out, c.d_in)
           for i, l in zip(np.flatnonzero(keep), lam[keep])]
    if not ops:
        ops = [np.zeros((c.d_out, c.d_in), dtype=complex)]
    return KrausMap(ops)


def dilate_apply(u, beta, rho) -> np.ndarray:
    """``tr_env[U (rho (x) beta) U^dag]`` with the system factor first."""
    u, beta, rho = as_matrix(u), as_matrix(beta), as_matrix(rho)
    d, de = rho.shape[0], beta.shape[0]
    if u.shape != (d * de, d * de):
        raise ValueError("unitary dimension must equal d_in * d_env")
    full = u @ np.kron(rho, beta) @ u.conj().T
    return partial_trace(full, SubsystemLayout(["sys", "env"], [d, de]), ["sys"])


def standard_channel(kind: str, *, d: int | None = None, u=None, q: float | None = None, h=None) -> KrausMap:
    """Common channels as Kraus maps.

    Parameters
    ----------
    kind : {"identity", "unitary", "depolarizing", "dephasing"}
    d : int
        Dimension for ``identity`` and ``depolarizing``.
    u : array_like
        Unitary for ``unitary``.
    q : float
        Depolarizing parameter in ``[0, 1]``; the map is
        ``rho -> q rho + (1 - q) tr(rho) I/d``.
    h : array_like
        Hermitian matrix whose spectral projectors define ``dephasing``.
    """
    if kind == "identity":
        return KrausMap([np.eye(d)])
    if kind == "unitary":
        u = as_matrix(u)
        if not np.allclose(u @ u.conj().T, np.eye(u.shape[0]), atol=TOL, rtol=0):
            raise ValueError("matrix is not unitary")
        return KrausMap([u])
    if kind == "depolarizing":
        if q is None or not 0 <= q <= 1:
            raise ValueError("depolarizing parameter must lie in [0, 1]")
        if d == 2:
            ops = [np.sqrt((1 + 3 * q) / 4) * PAULIS[0]]
            ops += [np.sqrt((1 - q) / 4) * p for p in PAULIS[1:]]
            return KrausMap(ops)
        # q * id plus (1 - q) times the completely depolarizing map
        ops = [np.sqrt(q) * np.eye(d)]
        for i in range(d):
            for j in range(d):
                e = np.zeros((d, d), dtype=complex)
                e[i, j] = np.sqrt((1 - q) / d)
                ops.append(e)
        return KrausMap(ops)
    if kind == "dephasing":
        h = as_matrix(h)
        from .equilibration import Hamiltonian  # local import avoids a cycle

        return KrausMap(Hamiltonian.from_matrix(h).projectors)
    raise ValueError(f"unknown channel kind {kind!r}")


def superoperator(m: KrausMap) -> np.ndarray:
    """Matrix of the map acting on row-major vectorized operators.

    Columns index the normalized matrix units ``|i><j|``, so the induced
    2-norm of the map equals the largest singular value.
    """
    return sum(w * np.kron(k, k.conj()) for w, k in zip(m.weights, m.operators))
