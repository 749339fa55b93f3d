"""Process tensors: sampling, Markovian construction, contraction and marginals.

A ``k``-step process on a ``dS``-dimensional system is stored as its unit-trace
Choi state on ``2k + 1`` legs ordered ``[S, A_k, B_k, ..., A_1, B_1]``.
``A_i`` is the system state handed to the experimenter at step ``i`` and
``B_i`` is the state handed back. The dynamics between ``B_i`` and ``A_{i+1}``
(with ``A_{k+1}`` meaning the final output ``S``) is step ``i`` of the process;
the initial state arrives on ``A_1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .channels import ChoiMatrix, KrausMap, choi_of
from .haar import RngStream, haar_unitary
from .qmath import TOL, SubsystemLayout, as_matrix, partial_trace, permute_operator
from .weingarten import UnsupportedRegimeError

__all__ = [
    "MemoryGuardError",
    "DEFAULT_MAX_VECTOR",
    "ProcessTensor",
    "ProcessConfig",
    "leg_labels",
    "process_from_unitaries",
    "sample_process",
    "fresh_environment_process",
    "dense_process",
    "markov_process",
    "tester",
    "contract",
    "marginal",
    "initial_state",
    "product_of_marginals",
    "coarse_grain",
    "dump_choi",
    "load_choi",
]

DEFAULT_MAX_VECTOR = 2**24


class MemoryGuardError(UnsupportedRegimeError):
    """Raised when a construction would exceed the configured size cap."""


def leg_labels(k: int) -> list:
    labels = ["S"]
    for j in range(k, 0, -1):
        labels += [f"A{j}", f"B{j}"]
    return labels


@dataclass(frozen=True)
class ProcessTensor:
    """Unit-trace Choi state of a ``k``-step process.

    Parameters
    ----------
    choi : numpy.ndarray
        Matrix of dimension ``dS ** (2k + 1)``.
    k : int
    dS : int
    """

    choi: np.ndarray
    k: int
    dS: int

    def __post_init__(self):
        m = as_matrix(self.choi)
        d = self.dS ** (2 * self.k + 1)
        if m.shape != (d, d):
            raise ValueError(f"Choi shape {m.shape} does not match dS^(2k+1) = {d}")
        if abs(np.trace(m).real - 1.0) > 1e-8:
            raise ValueError("process Choi state must have unit trace")
        m = (m + m.conj().T) / 2
        m.setflags(write=False)
        object.__setattr__(self, "choi", m)

    @property
    def layout(self) -> SubsystemLayout:
        return SubsystemLayout(leg_labels(self.k), [self.dS] * (2 * self.k + 1))

    @property
    def dim(self) -> int:
        return self.choi.shape[0]

    def is_psd(self, tol: float = TOL) -> bool:
        return bool(np.linalg.eigvalsh(self.choi)[0] >= -tol)

    def causality_residual(self) -> float:
        """Max deviation from the causal marginal structure.

        Tracing ``S`` must leave ``I_{B_k}/dS`` times a ``(k-1)``-step
        process, tracing ``A_k`` next must leave ``I_{B_{k-1}}/dS`` and so on.
        """
        layout, m = self.layout, self.choi
        worst = 0.0
        labels = list(layout.labels)
        out = "S"
        for j in range(self.k, 0, -1):
            keep = [l for l in labels if l != out]
            red = partial_trace(m, layout, keep)
            sub = layout.sub(keep)
            rest = [l for l in keep if l != f"B{j}"]
            inner = partial_trace(red, sub, rest)
            target, tl = np.kron(np.eye(self.dS) / self.dS, inner), sub.sub(rest)
            target, _ = permute_operator(target, SubsystemLayout([f"B{j}"] + list(tl.labels),
                                                                 [self.dS] * (len(rest) + 1)), keep)
            worst = max(worst, float(np.max(np.abs(red - target))))
            m, layout, labels = inner, tl, rest
            out = f"A{j}"
        return worst


@dataclass
class ProcessConfig:
    """Parameters for sampling a process from Haar-random dynamics.

    Parameters
    ----------
    dS, dE, k : int
    interaction : {"random", "constant"}
        Independent unitaries at every step, or one unitary reused.
    fiducial : array_like, optional
        Pure initial state vector on ``E (x) S`` (environment first).
    rng : RngStream
    max_vector : int
        Refuse constructions whose state vector exceeds this length.
    """

    dS: int
    dE: int
    k: int
    interaction: str = "random"
    fiducial: np.ndarray | None = None
    rng: RngStream | None = None
    max_vector: int = DEFAULT_MAX_VECTOR

    def __post_init__(self):
        if self.dS < 1 or self.dE < 1 or self.k < 0:
            raise ValueError("dimensions must be >= 1 and k >= 0")
        if self.interaction not in ("random", "constant"):
            raise ValueError(f"unknown interaction {self.interaction!r}")


def _fiducial_vector(fiducial, dS, dE) -> np.ndarray:
    if fiducial is None:
        v = np.zeros(dE * dS, dtype=complex)
        v[0] = 1.0
        return v
    v = np.asarray(fiducial, dtype=complex).reshape(-1)
    if v.size != dE * dS or abs(np.linalg.norm(v) - 1) > TOL:
        raise ValueError("fiducial must be a normalized vector on E (x) S")
    return v


def process_from_unitaries(unitaries: Sequence[np.ndarray], dS: int, dE: int, fiducial=None,
                           max_vector: int = DEFAULT_MAX_VECTOR) -> ProcessTensor:
    """Process generated by ``U_k S_k ... U_1 S_1 U_0`` acting on the fiducial.

    The global state is carried as a pure vector over
    ``[E, S, A_k, B_k, ..., A_1, B_1]``; each swap ``S <-> A_i`` is an axis
    permutation. The Choi state is ``tr_E`` of the final pure state.
    """
    k = len(unitaries) - 1
    nlegs = 2 * k + 1
    if dE * dS**nlegs > max_vector:
        raise MemoryGuardError(f"state vector of length {dE * dS**nlegs} exceeds cap {max_vector}")
    psi = _fiducial_vector(fiducial, dS, dE)
    pair = (np.eye(dS, dtype=complex) / np.sqrt(dS)).reshape(-1)
    for _ in range(k):
        psi = np.kron(psi, pair)
    psi = psi.reshape(dE * dS, -1)
    shape = (dE, dS) + (dS,) * (2 * k)
    # axis of A_i in [E, S, A_k, B_k, ..., A_1, B_1]
    a_axis = {i: 2 + 2 * (k - i) for i in range(1, k + 1)}
    psi = unitaries[0] @ psi
    for i in range(1, k + 1):
        t = psi.reshape(shape)
        t = np.swapaxes(t, 1, a_axis[i])
        psi = unitaries[i] @ t.reshape(dE * dS, -1)
    m = psi.reshape(dE, dS**nlegs)
    choi = m.T @ m.conj()
    return ProcessTensor(choi, k, dS)


def sample_process(cfg: ProcessConfig) -> ProcessTensor:
    """Draw a process from Haar-random system-environment dynamics."""
    rng = cfg.rng if cfg.rng is not None else RngStream(0)
    if cfg.dE * cfg.dS ** (2 * cfg.k + 1) > cfg.max_vector:
        raise MemoryGuardError(
            f"state vector of length {cfg.dE * cfg.dS ** (2 * cfg.k + 1)} exceeds cap {cfg.max_vector}")
    d = cfg.dS * cfg.dE
    if cfg.interaction == "random":
        us = [haar_unitary(d, rng) for _ in range(cfg.k + 1)]
    else:
        u = haar_unitary(d, rng)
        us = [u] * (cfg.k + 1)
    return process_from_unitaries(us, cfg.dS, cfg.dE, cfg.fiducial, cfg.max_vector)


def dense_process(unitaries: Sequence[np.ndarray], dS: int, dE: int, fiducial=None) -> ProcessTensor:
    """Reference construction with explicit density matrices and swap matrices.

    Only meant for small cross-checks; memory grows as the square of the
    full dimension.
    """
    k = len(unitaries) - 1
    v = _fiducial_vector(fiducial, dS, dE)
    rho = np.outer(v, v.conj())
    phi = np.eye(dS).reshape(-1)
    phi = np.outer(phi, phi) / dS
    for _ in range(k):
        rho = np.kron(rho, phi)
    labels = ["E", "S"] + leg_labels(k)[1:]
    layout = SubsystemLayout(labels, [dE] + [dS] * (2 * k + 1))
    rest = dS ** (2 * k)
    rho = np.kron(unitaries[0], np.eye(rest)) @ rho @ np.kron(unitaries[0], np.eye(rest)).conj().T
    for i in range(1, k + 1):
        order = list(labels)
        ai = order.index(f"A{i}")
        order[1], order[ai] = order[ai], order[1]
        axes = [layout.index(l) for l in order]
        swap = np.eye(layout.total).reshape(layout.dims + (layout.total,))
        swap = swap.transpose(axes + [len(axes)]).reshape(layout.total, layout.total)
        big_u = np.kron(unitaries[i], np.eye(rest))
        rho = big_u @ swap @ rho @ swap.conj().T @ big_u.conj().T
    choi = partial_trace(rho, layout, labels[1:])
    return ProcessTensor(choi, k, dS)


def fresh_environment_process(dS: int, dE: int, k: int, rng, fiducial_s=None) -> ProcessTensor:
    """Process whose every step couples the system to a fresh environment.

    Each unitary ``U_i`` acts on ``S`` and its own environment ``E_i``
    prepared in ``|0>``; environments are never reused, so the resulting
    process is Markovian. The construction carries a pure vector over all
    environments and ancillas.
    """
    nlegs = 2 * k + 1
    if dE ** (k + 1) * dS**nlegs > DEFAULT_MAX_VECTOR:
        raise MemoryGuardError("fresh-environment vector exceeds the size cap")
    s0 = np.zeros(dS, dtype=complex)
    s0[0] = 1.0
    if fiducial_s is not None:
        s0 = np.asarray(fiducial_s, dtype=complex).reshape(-1)
    e0 = np.zeros(dE, dtype=complex)
    e0[0] = 1.0
    pair = (np.eye(dS, dtype=complex) / np.sqrt(dS)).reshape(-1)
    # axes: [E_0..E_k, S, A_k, B_k, ..., A_1, B_1]
    psi = e0
    for _ in range(k):
        psi = np.kron(psi, e0)
    psi = np.kron(psi, s0)
    for _ in range(k):
        psi = np.kron(psi, pair)
    shape = [dE] * (k + 1) + [dS] * nlegs
    s_ax = k + 1
    t = psi.reshape(shape)
    for i in range(k + 1):
        if i >= 1:
            t = np.swapaxes(t, s_ax, s_ax + 1 + 2 * (k - i))
        u = haar_unitary(dE * dS, rng).reshape(dE, dS, dE, dS)
        t = np.tensordot(u, t, axes=([2, 3], [i, s_ax]))
        t = np.moveaxis(t, [0, 1], [i, s_ax])
    m = t.reshape(dE ** (k + 1), dS**nlegs)
    return ProcessTensor(m.T @ m.conj(), k, dS)


def _as_choi(step) -> ChoiMatrix:
    if isinstance(step, ChoiMatrix):
        return step
    if isinstance(step, KrausMap):
        return choi_of(step)
    raise TypeError("steps must be ChoiMatrix or KrausMap instances")


def markov_process(rho0, steps: Sequence) -> ProcessTensor:
    """Markovian process ``C_k (x) ... (x) C_1 (x) rho0`` on the standard legs.

    Step ``i`` takes its input on ``B_i`` and delivers its output on
    ``A_{i+1}`` (the final step outputs on ``S``); ``rho0`` sits on ``A_1``.

    Parameters
    ----------
    rho0 : array_like
        Initial system state.
    steps : sequence of ChoiMatrix or KrausMap
        Trace-preserving step maps, earliest first.
    """
    rho0 = as_matrix(rho0)
    dS = rho0.shape[0]
    k = len(steps)
    chois = [_as_choi(s).unit_trace() for s in steps]
    for c in chois:
        if (c.d_in, c.d_out) != (dS, dS):
            raise ValueError("step maps must act on the system dimension")
        if not c.is_tp:
            raise ValueError("Markov steps must be trace preserving")
    mat = np.ones((1, 1), dtype=complex)
    labels = []
    for i in range(k, 0, -1):
        out = "S" if i == k else f"A{i + 1}"
        mat = np.kron(mat, chois[i - 1].matrix)
        labels += [out, f"B{i}"]
    mat = np.kron(mat, rho0)
    labels.append("A1" if k else "S")
    layout = SubsystemLayout(labels, [dS] * len(labels))
    choi, _ = permute_operator(mat, layout, leg_labels(k))
    return ProcessTensor(choi / np.trace(choi).real, k, dS)


def tester(ops: Sequence) -> np.ndarray:
    """Unnormalized tester Choi for one operation per step.

    Operation ``i`` maps ``A_i`` to ``B_i``; the result is laid out on
    ``[A_k, B_k, ..., A_1, B_1]`` with operations listed earliest first.
    """
    mat = np.ones((1, 1), dtype=complex)
    for op in reversed(list(ops)):
        c = _as_choi(op).unnormalized()
        # choi layout is [out, in] = [B_i, A_i]; reorder to [A_i, B_i]
        m, _ = permute_operator(c.matrix, SubsystemLayout(["B", "A"], [c.d_out, c.d_in]), ["A", "B"])
        mat = np.kron(mat, m)
    return mat


def contract(p: ProcessTensor, ops: Sequence = (), povm_element=None, tester_choi=None):
    """Multitime Born rule ``tr_in[Y (I_S (x) Lambda^T)]``.

    Parameters
    ----------
    p : ProcessTensor
    ops : sequence of KrausMap or ChoiMatrix
        ``k`` system operations, earliest first.
    povm_element : array_like, optional
        Final measurement effect; a probability is returned when given.
    tester_choi : array_like, optional
        Precontracted unnormalized tester on ``[A_k, B_k, ..., A_1, B_1]``
        used instead of ``ops``.

    Returns
    -------
    numpy.ndarray or float
        Output system state (subnormalized for trace-decreasing
        operations) or the outcome probability.
    """
    if tester_choi is None:
        if len(ops) != p.k:
            raise ValueError(f"need {p.k} operations, got {len(ops)}")
        for op in ops:
            c = _as_choi(op)
            if (c.d_in, c.d_out) != (p.dS, p.dS):
                raise ValueError("operation dimension mismatch")
        lam = tester(ops)
    else:
        lam = as_matrix(tester_choi)
    din = p.dS ** (2 * p.k)
    if lam.shape != (din, din):
        raise ValueError("tester dimension mismatch")
    # unit-trace process times dS^k is the unnormalized Choi state
    t = (p.choi * p.dS**p.k).reshape(p.dS, din, p.dS, din)
    out = np.einsum("aibj,ji->ab", t, lam.T)
    if povm_element is not None:
        return float(np.real(np.trace(as_matrix(povm_element) @ out)))
    return out


def marginal(p: ProcessTensor, step: int) -> ChoiMatrix:
    """Unit-trace Choi matrix of step ``step`` (``1 <= step <= k``).

    Keeps the output leg (``A_{step+1}`` or ``S``) and the input leg
    ``B_step``.
    """
    if not 1 <= step <= p.k:
        raise ValueError(f"step must lie in [1, {p.k}]")
    out = "S" if step == p.k else f"A{step + 1}"
    m = partial_trace(p.choi, p.layout, [out, f"B{step}"])
    return ChoiMatrix(m, p.dS, p.dS, "unit-trace")


def initial_state(p: ProcessTensor) -> np.ndarray:
    """Reduced state on the first output leg (``A_1``, or ``S`` when ``k = 0``)."""
    return partial_trace(p.choi, p.layout, ["A1" if p.k else "S"])


def product_of_marginals(p: ProcessTensor) -> ProcessTensor:
    """Markov process built from the initial state and all step marginals."""
    steps = [marginal(p, i) for i in range(1, p.k + 1)]
    rho0 = initial_state(p)
    mat = np.ones((1, 1), dtype=complex)
    labels = []
    for i in range(p.k, 0, -1):
        mat = np.kron(mat, steps[i - 1].matrix)
        labels += ["S" if i == p.k else f"A{i + 1}", f"B{i}"]
    mat = np.kron(mat, rho0)
    labels.append("A1" if p.k else "S")
    layout = SubsystemLayout(labels, [p.dS] * len(labels))
    choi, _ = permute_operator(mat, layout, leg_labels(p.k))
    return ProcessTensor(choi / np.trace(choi).real, p.k, p.dS)


def coarse_grain(p: ProcessTensor, drop: Iterable[int]) -> ProcessTensor:
    """Contract the identity operation at every step in ``drop``.

    The remaining steps are relabelled ``1..k'`` in their original order and
    the result is renormalized to unit trace.
    """
    drop = sorted(set(drop))
    if any(not 1 <= i <= p.k for i in drop):
        raise ValueError(f"steps to drop must lie in [1, {p.k}]")
    if not drop:
        return p
    d = p.dS
    layout = p.layout
    labels = list(layout.labels)
    # move dropped pairs to the end, then contract with |Phi~><Phi~|
    tail = []
    for i in drop:
        tail += [f"A{i}", f"B{i}"]
    keep = [l for l in labels if l not in tail]
    m, _ = permute_operator(p.choi, layout, keep + tail)
    vec = np.ones((1,), dtype=complex)
    phi = np.eye(d, dtype=complex).reshape(-1)
    for _ in drop:
        vec = np.kron(vec, phi)
    dk = d ** len(keep)
    t = m.reshape(dk, vec.size, dk, vec.size)
    red = np.einsum("aibj,i,j->ab", t, vec, vec.conj())
    new_k = p.k - len(drop)
    return ProcessTensor(red / np.trace(red).real, new_k, d)


def dump_choi(path, p: ProcessTensor, dE: int | None = None, seed=None, interaction: str | None = None):
    """Write a Choi matrix as CSV with a ``#`` header line of metadata.

    Entries are written row-major as ``row,col,real,imag``.
    """
    path = Path(path)
    rows, cols = np.nonzero(np.ones(p.choi.shape, dtype=bool))
    vals = p.choi.reshape(-1)
    with path.open("w", newline="\n") as fh:
        fh.write(f"# dS={p.dS} dE={dE} k={p.k} seed={seed} interaction={interaction}\n")
        fh.write("row,col,real,imag\n")
        for r, c, v in zip(rows, cols, vals):
            fh.write(f"{r},{c},{v.real:.17g},{v.imag:.17g}\n")


def load_choi(path) -> tuple:
    """Inverse of :func:`dump_choi`; returns ``(ProcessTensor, header dict)``."""
    path = Path(path)
    with path.open() as fh:
        header = dict(item.split("=", 1) for item in fh.readline()[1:].split())
        data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
    dS, k = int(header["dS"]), int(header["k"])
    d = dS ** (2 * k + 1)
    m = np.zeros((d, d), dtype=complex)
    m[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2] + 1j * data[:, 3]
    return ProcessTensor(m, k, dS), header
