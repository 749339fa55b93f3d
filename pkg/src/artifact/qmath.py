"""Dense complex linear algebra and quantum-state primitives.

All routines work on plain ``numpy`` arrays of dtype ``complex128``. The
light container classes below only add validation and subsystem metadata.

Conventions
-----------
* Tolerance for Hermiticity, positivity and normalization checks is the
  module constant :data:`TOL` (``1e-9``).
* Eigenvalues below :data:`EIG_CUTOFF` (``1e-12``) are treated as zero in
  entropies and supports.
* In a composite space the leftmost subsystem label is the slowest-varying
  index, so ``kron(a, b)`` is laid out as ``[a, b]``.
* Logarithms are base 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TOL = 1e-9
EIG_CUTOFF = 1e-12

__all__ = [
    "TOL",
    "EIG_CUTOFF",
    "SubsystemLayout",
    "PureState",
    "DensityMatrix",
    "Povm",
    "as_matrix",
    "is_hermitian",
    "kron",
    "partial_trace",
    "permute_subsystems",
    "permute_operator",
    "schatten_norm",
    "trace_distance",
    "povm_distance",
    "purity",
    "max_entangled",
    "vn_entropy",
    "relative_entropy",
    "eig_hermitian",
    "basis_projector",
    "swap_operator",
    "random_density",
]


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered tensor-factor bookkeeping.

    Parameters
    ----------
    labels : sequence of str
        Unique subsystem names, slowest-varying first.
    dims : sequence of int
        Dimension of each subsystem.
    """

    labels: tuple
    dims: tuple

    def __init__(self, labels: Iterable[str], dims: Iterable[int]):
        labels = tuple(labels)
        dims = tuple(int(d) for d in dims)
        if len(labels) != len(dims):
            raise ValueError("labels and dims must have equal length")
        if len(set(labels)) != len(labels):
            raise ValueError(f"labels must be unique, got {labels}")
        if any(d < 1 for d in dims):
            raise ValueError(f"dimensions must be >= 1, got {dims}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dims", dims)

    @property
    def total(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.dims else 1

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"unknown subsystem label {label!r}") from None

    def dim(self, label: str) -> int:
        return self.dims[self.index(label)]

    def sub(self, keep: Iterable[str]) -> "SubsystemLayout":
        """Layout restricted to ``keep``, preserving the original order."""
        keep = set(keep)
        for lab in keep:
            self.index(lab)
        pairs = [(l, d) for l, d in zip(self.labels, self.dims) if l in keep]
        return SubsystemLayout([p[0] for p in pairs], [p[1] for p in pairs])

    def reorder(self, order: Sequence[str]) -> "SubsystemLayout":
        return SubsystemLayout(order, [self.dim(l) for l in order])


def as_matrix(m) -> np.ndarray:
    """Return ``m`` as a 2-D complex array (unwrapping container types)."""
    if isinstance(m, (DensityMatrix,)):
        return m.matrix
    arr = np.asarray(m, dtype=complex)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix has non-finite entries")
    return arr


def is_hermitian(m, tol: float = TOL) -> bool:
    m = np.asarray(m)
    return m.shape[0] == m.shape[1] and np.allclose(m, m.conj().T, atol=tol, rtol=0)


@dataclass(frozen=True)
class PureState:
    """Normalized state vector with a subsystem layout."""

    amplitudes: np.ndarray
    layout: SubsystemLayout

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amp.size != self.layout.total:
            raise ValueError("amplitude count does not match layout")
        if abs(np.linalg.norm(amp) - 1.0) > TOL:
            raise ValueError("state vector is not normalized")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()), self.layout)


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace matrix with a layout."""

    matrix: np.ndarray
    layout: SubsystemLayout = field(default=None)

    def __post_init__(self):
        m = as_matrix(self.matrix).copy()
        layout = self.layout or SubsystemLayout(["0"], [m.shape[0]])
        if m.shape != (layout.total, layout.total):
            raise ValueError(f"matrix shape {m.shape} does not match layout {layout.dims}")
        if not is_hermitian(m):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m).real - 1.0) > TOL:
            raise ValueError(f"density matrix has trace {np.trace(m).real}, expected 1")
        if np.linalg.eigvalsh(m)[0] < -TOL:
            raise ValueError("density matrix is not positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "layout", layout)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Povm:
    """Positive operator-valued measure."""

    elements: tuple

    def __init__(self, elements):
        els = tuple(as_matrix(e) for e in elements)
        if not els:
            raise ValueError("a POVM needs at least one element")
        d = els[0].shape[0]
        for e in els:
            if e.shape != (d, d):
                raise ValueError("POVM elements must share a square shape")
            if not is_hermitian(e) or np.linalg.eigvalsh(e)[0] < -TOL:
                raise ValueError("POVM elements must be Hermitian PSD")
        if not np.allclose(sum(els), np.eye(d), atol=TOL, rtol=0):
            raise ValueError("POVM elements do not sum to the identity")
        object.__setattr__(self, "elements", els)


def kron(a, b) -> np.ndarray:
    """Tensor product with ``a`` as the slow index."""
    return np.kron(as_matrix(a), as_matrix(b))


def partial_trace(m, layout: SubsystemLayout, keep: Iterable[str]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    Parameters
    ----------
    m : array_like
        Square matrix on ``layout``.
    layout : SubsystemLayout
    keep : iterable of str
        Labels to keep. The result follows the order of ``layout``.

    Returns
    -------
    numpy.ndarray
        Reduced matrix of dimension ``prod(kept dims)``.
    """
    m = as_matrix(m)
    keep = set(keep)
    for lab in keep:
        layout.index(lab)
    n = len(layout.dims)
    if m.shape != (layout.total, layout.total):
        raise ValueError("matrix dimension does not match layout")
    kept = [i for i in range(n) if layout.labels[i] in keep]
    dropped = [i for i in range(n) if layout.labels[i] not in keep]
    t = m.reshape(layout.dims + layout.dims)
    t = t.transpose(kept + dropped + [n + i for i in kept] + [n + i for i in dropped])
    dk = int(np.prod([layout.dims[i] for i in kept], dtype=np.int64))
    dd = int(np.prod([layout.dims[i] for i in dropped], dtype=np.int64))
    return np.einsum("ajbj->ab", t.reshape(dk, dd, dk, dd))


def _perm_axes(layout: SubsystemLayout, order: Sequence[str]) -> list:
    order = list(order)
    if sorted(order) != sorted(layout.labels) or len(order) != len(layout.labels):
        raise ValueError(f"{order} is not a permutation of {layout.labels}")
    return [layout.index(l) for l in order]


def permute_subsystems(state, layout: SubsystemLayout, order: Sequence[str]):
    """Reorder the tensor factors of a state vector.

    ``order`` lists the labels in their new positions. The amplitude of the
    reordered multi-index equals the original amplitude.

    Returns
    -------
    (numpy.ndarray, SubsystemLayout)
    """
    if isinstance(state, PureState):
        layout, state = state.layout, state.amplitudes
    vec = np.asarray(state, dtype=complex).reshape(layout.dims)
    axes = _perm_axes(layout, order)
    return vec.transpose(axes).reshape(-1), layout.reorder(order)


def permute_operator(m, layout: SubsystemLayout, order: Sequence[str]):
    """Reorder the tensor factors of an operator; see :func:`permute_subsystems`."""
    m = as_matrix(m)
    n = len(layout.dims)
    axes = _perm_axes(layout, order)
    t = m.reshape(layout.dims + layout.dims).transpose(axes + [n + a for a in axes])
    return t.reshape(layout.total, layout.total), layout.reorder(order)


def schatten_norm(m, p=1) -> float:
    """Schatten ``p``-norm for ``p`` in ``{1, 2, inf}``."""
    m = as_matrix(m)
    if p == 2:
        return float(np.linalg.norm(m))
    s = np.linalg.svd(m, compute_uv=False)
    if p == 1:
        return float(s.sum())
    if p in (np.inf, "inf"):
        return float(s.max()) if s.size else 0.0
    raise ValueError(f"unsupported Schatten order {p!r}")


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of ``rho - sigma``."""
    a, b = as_matrix(rho), as_matrix(sigma)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    diff = a - b
    diff = (diff + diff.conj().T) / 2
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())


def povm_distance(rho, sigma, povm: Povm) -> float:
    """Distinguishability ``1/2 sum_i |tr M_i (rho - sigma)|`` under one POVM."""
    if not isinstance(povm, Povm):
        povm = Povm(povm)
    diff = as_matrix(rho) - as_matrix(sigma)
    if diff.shape != povm.elements[0].shape:
        raise ValueError("dimension mismatch")
    return float(0.5 * sum(abs(np.trace(e @ diff)) for e in povm.elements))


def purity(rho) -> float:
    m = as_matrix(rho)
    return float(np.real(np.vdot(m.conj().T, m)))


def max_entangled(d: int, normalized: bool = True) -> np.ndarray:
    """Projector onto ``sum_i |ii>`` (divided by ``d`` if ``normalized``)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    v = np.eye(d, dtype=complex).reshape(-1)
    m = np.outer(v, v)
    return m / d if normalized else m


def _eigvals(rho) -> np.ndarray:
    m = as_matrix(rho)
    return np.linalg.eigvalsh((m + m.conj().T) / 2)


def vn_entropy(rho) -> float:
    """Von Neumann entropy in bits."""
    lam = _eigvals(rho)
    lam = lam[lam > EIG_CUTOFF]
    return float(-np.sum(lam * np.log2(lam)))


def relative_entropy(rho, sigma) -> float:
    """Quantum relative entropy ``S(rho || sigma)`` in bits.

    Returns ``inf`` when the support of ``rho`` is not contained in the
    support of ``sigma``.
    """
    a, b = as_matrix(rho), as_matrix(sigma)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    la, va = np.linalg.eigh((a + a.conj().T) / 2)
    lb, vb = np.linalg.eigh((b + b.conj().T) / 2)
    pa = la > EIG_CUTOFF
    pb = lb > EIG_CUTOFF
    # weight of rho's support outside sigma's support
    overlap = np.abs(va[:, pa].conj().T @ vb) ** 2
    leak = overlap[:, ~pb] @ np.ones((~pb).sum()) if (~pb).any() else np.zeros(pa.sum())
    if np.any(la[pa] * leak > EIG_CUTOFF):
        return float("inf")
    lp = la[pa]
    first = np.sum(lp * np.log2(lp))
    logb = np.zeros_like(lb)
    logb[pb] = np.log2(lb[pb])
    second = lp @ (overlap @ logb)
    return float(max(first - second, 0.0))


def eig_hermitian(m):
    """Eigendecomposition of a Hermitian matrix.

    Returns
    -------
    (numpy.ndarray, numpy.ndarray)
        Ascending eigenvalues and the unitary matrix of eigenvectors.

    Raises
    ------
    ValueError
        If ``m`` is not Hermitian within :data:`TOL`.
    """
    m = as_matrix(m)
    if m.shape[0] != m.shape[1] or not is_hermitian(m):
        raise ValueError("matrix is not Hermitian")
    return np.linalg.eigh((m + m.conj().T) / 2)


def basis_projector(d: int, i: int) -> np.ndarray:
    p = np.zeros((d, d), dtype=complex)
    p[i, i] = 1.0
    return p


def swap_operator(d: int) -> np.ndarray:
    """SWAP on ``C^d (x) C^d``."""
    s = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            s[i * d + j, j * d + i] = 1.0
    return s


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Density matrix ``G G^dag / tr`` from a complex Gaussian ``G``."""
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real
