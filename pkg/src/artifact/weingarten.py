"""Exact unitary-group moments via Weingarten calculus.

Permutations of ``{0, ..., n-1}`` are plain tuples (the image of each point)
enumerated in lexicographic order. Weingarten values come from inverting the
Gram matrix ``G[s, t] = d ** #cycles(s t^-1)``, which is invertible for
``d >= n``.

The second half of the module evaluates averages over a *constant*
system-environment interaction, where the same Haar unitary acts at every
step of a process. These are sums over pairs of permutations of products
of Kronecker deltas; each term is evaluated by union-find on the index
variables of the circuit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .qmath import as_matrix, swap_operator

__all__ = [
    "UnsupportedRegimeError",
    "Permutation",
    "permutations",
    "compose",
    "inverse",
    "cycle_count",
    "cycle_type",
    "WeingartenTable",
    "weingarten_table",
    "weingarten",
    "haar_moment_tensor",
    "analytic_twirl",
    "DeltaSystem",
    "delta_degree",
    "avg_process_constant",
    "avg_purity_constant",
    "purity_of_avg_superchannel",
    "avg_superchannel_closed_form",
]

Permutation = tuple

GRAM_RESIDUAL_TOL = 1e-8


class UnsupportedRegimeError(ValueError):
    """Raised when parameters fall outside the regime an exact method covers."""


@lru_cache(maxsize=None)
def permutations(n: int) -> tuple:
    """All permutations of ``range(n)`` in lexicographic order."""
    return tuple(itertools.permutations(range(n)))


def compose(p: Sequence[int], q: Sequence[int]) -> tuple:
    """``(p q)(i) = p[q[i]]``."""
    return tuple(p[i] for i in q)


def inverse(p: Sequence[int]) -> tuple:
    inv = [0] * len(p)
    for i, j in enumerate(p):
        inv[j] = i
    return tuple(inv)


def _cycles(p: Sequence[int]) -> list:
    seen = [False] * len(p)
    lengths = []
    for start in range(len(p)):
        if seen[start]:
            continue
        length, j = 0, start
        while not seen[j]:
            seen[j] = True
            j = p[j]
            length += 1
        lengths.append(length)
    return lengths


def cycle_count(p: Sequence[int]) -> int:
    """Number of cycles of ``p``, fixed points included."""
    return len(_cycles(p))


def cycle_type(p: Sequence[int]) -> tuple:
    """Cycle lengths sorted in descending order."""
    return tuple(sorted(_cycles(p), reverse=True))


@lru_cache(maxsize=None)
def _perm_data(n: int):
    """Permutation array, lookup codes, cycle counts and product table."""
    perms = np.array(permutations(n), dtype=np.int64).reshape(-1, n)
    radix = n ** np.arange(n, dtype=np.int64)
    lookup = np.full(max(n, 1) ** n, -1, dtype=np.int64)
    lookup[perms @ radix] = np.arange(len(perms))
    cycles = np.array([cycle_count(p) for p in map(tuple, perms)], dtype=np.int64)
    inv = np.argsort(perms, axis=1)
    inv_idx = lookup[inv @ radix]
    # prod[a, b] = index of perms[a] o perms[b]
    prod = lookup[perms[:, perms] @ radix]
    return perms, lookup, radix, cycles, inv_idx, prod


@dataclass(frozen=True)
class WeingartenTable:
    """Weingarten values ``Wg(sigma, d)`` for every ``sigma`` in ``S_n``.

    Attributes
    ----------
    n, d : int
    perms : tuple of tuple
        Lexicographically ordered permutations.
    values : numpy.ndarray
        ``values[i] = Wg(perms[i], d)``.
    residual : float
        Max deviation of ``sum_t d^{#(s t^-1)} Wg(t) - delta(s, id)``.
    method : str
        ``"inverse"`` or ``"solve"``.
    """

    n: int
    d: int
    perms: tuple
    values: np.ndarray
    residual: float
    method: str
    _index: dict = field(repr=False, compare=False, default=None)

    def __call__(self, p: Sequence[int]) -> float:
        return float(self.values[self._index[tuple(p)]])

    def by_cycle_type(self) -> dict:
        out = {}
        for p, v in zip(self.perms, self.values):
            out.setdefault(cycle_type(p), float(v))
        return out


def _gram(n: int, d: int) -> np.ndarray:
    perms, lookup, radix, cycles, inv_idx, prod = _perm_data(n)
    # G[s, t] = d ** #(s t^-1)
    st = prod[:, inv_idx]
    return np.power(float(d), cycles[st])


def _row_residual(gram: np.ndarray, wg: np.ndarray, id_idx: int) -> float:
    # Gram is symmetric and a class-function Wg satisfies G @ wg = e_id.
    target = np.zeros(len(wg))
    target[id_idx] = 1.0
    return float(np.max(np.abs(gram @ wg - target)))


@lru_cache(maxsize=64)
def weingarten_table(n: int, d: int) -> WeingartenTable:
    """Weingarten function on ``S_n`` at dimension ``d`` by Gram inversion.

    Raises
    ------
    UnsupportedRegimeError
        If ``d < n``; the Gram matrix is then singular.
    """
    if n < 1:
        raise ValueError("moment order must be >= 1")
    if d < n:
        raise UnsupportedRegimeError(f"Gram inversion needs d >= n (got n={n}, d={d})")
    perms = permutations(n)
    gram = _gram(n, d)
    id_idx = 0  # identity is lexicographically first
    wg = np.linalg.inv(gram)[id_idx]
    method = "inverse"
    res = _row_residual(gram, wg, id_idx)
    if res > GRAM_RESIDUAL_TOL:
        e = np.zeros(len(perms))
        e[id_idx] = 1.0
        wg = np.linalg.solve(gram, e)
        method = "solve"
        res = _row_residual(gram, wg, id_idx)
        if res > GRAM_RESIDUAL_TOL:
            raise ArithmeticError(f"Weingarten system ill-conditioned: residual {res:.3g}")
    wg.setflags(write=False)
    return WeingartenTable(n, d, perms, wg, res, method, {p: i for i, p in enumerate(perms)})


def weingarten(p: Sequence[int], d: int) -> float:
    """``Wg(p, d)`` for a single permutation."""
    return weingarten_table(len(p), d)(p)


def haar_moment_tensor(n: int, d: int, i, j, ip, jp) -> complex:
    """``E[U_{i1 j1} ... U_{in jn} conj(U_{i'1 j'1}) ... conj(U_{i'n j'n})]``.

    Parameters
    ----------
    n, d : int
        Moment order and dimension.
    i, j, ip, jp : sequence of int
        Row and column indices of the unconjugated and conjugated entries.
    """
    idx = [list(x) for x in (i, j, ip, jp)]
    if any(len(x) != n for x in idx):
        raise ValueError("each index list must have length n")
    if any(not 0 <= v < d for x in idx for v in x):
        raise ValueError("index out of range")
    i, j, ip, jp = idx
    table = weingarten_table(n, d)
    perms, lookup, radix, cycles, inv_idx, prod = _perm_data(n)
    total = 0.0
    ok_s = [all(i[l] == ip[s[l]] for l in range(n)) for s in table.perms]
    ok_t = [all(j[l] == jp[t[l]] for l in range(n)) for t in table.perms]
    for si, s_ok in enumerate(ok_s):
        if not s_ok:
            continue
        for ti, t_ok in enumerate(ok_t):
            if t_ok:
                total += table.values[prod[ti, inv_idx[si]]]
    return complex(total)


def analytic_twirl(n: int, x, d: int) -> np.ndarray:
    """Exact Haar twirl ``E[U^{(x)n} x U^{dag (x)n}]`` for ``n`` in ``{1, 2}``."""
    x = as_matrix(x)
    if n == 1:
        if x.shape != (d, d):
            raise ValueError("x must be d x d")
        return np.trace(x) * np.eye(d) / d
    if n == 2:
        if x.shape != (d * d, d * d):
            raise ValueError("x must be d^2 x d^2")
        swap = swap_operator(d)
        tr, trs = np.trace(x), np.trace(swap @ x)
        if d == 1:
            return tr * np.eye(1, dtype=complex)
        alpha = (tr - trs / d) / (d * d - 1)
        beta = (trs - tr / d) / (d * d - 1)
        return alpha * np.eye(d * d) + beta * swap
    raise UnsupportedRegimeError("analytic twirl only for n <= 2; use haar_moment_tensor")


# ---------------------------------------------------------------------------
# Delta systems


@dataclass
class DeltaSystem:
    """Product of Kronecker deltas over index variables.

    Parameters
    ----------
    sizes : dict
        Alphabet size of every variable.
    equalities : list of (var, var)
    pins : dict
        Variables fixed to constants.
    """

    sizes: dict
    equalities: list = field(default_factory=list)
    pins: dict = field(default_factory=dict)

    def add(self, var: Hashable, size: int):
        self.sizes[var] = size

    def eq(self, a: Hashable, b: Hashable):
        self.equalities.append((a, b))

    def pin(self, var: Hashable, value: int):
        self.pins[var] = value


class _UnionFind:
    def __init__(self, items: Iterable):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def delta_degree(sys: DeltaSystem) -> int:
    """Sum over all variable assignments of the product of deltas.

    Each connected component of the equality graph contributes its
    alphabet size, or 1 if it is pinned; a component pinned to two
    different constants makes the whole sum vanish.
    """
    uf = _UnionFind(sys.sizes)
    for a, b in sys.equalities:
        if sys.sizes[a] != sys.sizes[b]:
            raise ValueError(f"cannot equate variables of different alphabets: {a}, {b}")
        uf.union(a, b)
    fixed = {}
    for var, val in sys.pins.items():
        r = uf.find(var)
        if fixed.setdefault(r, val) != val:
            return 0
    value = 1
    for var in sys.sizes:
        r = uf.find(var)
        if r == var and r not in fixed:
            value *= sys.sizes[var]
    return value


# ---------------------------------------------------------------------------
# Constant-interaction process averages


class _Circuit:
    """Index variables of ``copies`` ket/bra pairs of a ``k``-step process.

    Every Haar instance has a row and a column index, each split into an
    environment part (alphabet ``dE``) and a system part (alphabet ``dS``).
    Within a chain, the column of instance ``j >= 1`` carries the previous
    row's environment index and the system index of ancilla ``B_j``; the
    previous row's system index leaves on ancilla ``A_j``.
    """

    def __init__(self, k: int, copies: int):
        self.k, self.copies = k, copies
        self.kinds = []  # 0 = environment, 1 = system
        self.struct = []
        self.ext = {}  # (side, chain, leg) -> var
        self.fid = {}  # (side, chain) -> (e var, s var)
        self.inst = {"ket": [], "bra": []}  # instance -> (row_e, row_s, col_e, col_s)
        for side in ("ket", "bra"):
            for c in range(copies):
                prev = None
                for j in range(k + 1):
                    re, rs, ce, cs = self._var(0), self._var(1), self._var(0), self._var(1)
                    self.inst[side].append((re, rs, ce, cs))
                    if j == 0:
                        self.fid[side, c] = (ce, cs)
                    else:
                        self.struct.append((ce, prev[0]))
                        self.ext[side, c, f"A{j}"] = prev[1]
                        self.ext[side, c, f"B{j}"] = cs
                    prev = (re, rs)
                self.ext[side, c, "S"] = prev[1]
                self.ext[side, c, "Eout"] = prev[0]
        for c in range(copies):
            self.struct.append((self.ext["ket", c, "Eout"], self.ext["bra", c, "Eout"]))

    def _var(self, kind: int) -> int:
        self.kinds.append(kind)
        return len(self.kinds) - 1

    def legs(self) -> list:
        out = ["S"]
        for j in range(self.k, 0, -1):
            out += [f"A{j}", f"B{j}"]
        return out

    def weingarten_edges(self, sigma, tau) -> list:
        ket, bra = self.inst["ket"], self.inst["bra"]
        edges = []
        for l, s in enumerate(sigma):
            edges += [(ket[l][0], bra[s][0]), (ket[l][1], bra[s][1])]
        for l, t in enumerate(tau):
            edges += [(ket[l][2], bra[t][2]), (ket[l][3], bra[t][3])]
        return edges


def _check_constant_args(k, dS, dE, n, max_k):
    if k < 0 or k > max_k:
        raise UnsupportedRegimeError(f"constant-interaction sums implemented for k <= {max_k}")
    if dS < 1 or dE < 1:
        raise ValueError("dimensions must be >= 1")
    if dS * dE < n:
        raise UnsupportedRegimeError(f"need dS*dE >= {n} for exact Weingarten values")


def _fiducial_matrix(rho, dS, dE) -> np.ndarray:
    if rho is None:
        m = np.zeros((dE * dS, dE * dS), dtype=complex)
        m[0, 0] = 1.0
        return m
    m = as_matrix(rho)
    if m.shape != (dE * dS, dE * dS):
        raise ValueError(f"fiducial must act on dE*dS = {dE * dS} dimensions (E first)")
    return m


def avg_process_constant(k: int, dS: int, dE: int, rho=None, normalization: str = "unit") -> np.ndarray:
    """Haar average of the process Choi state for a constant interaction.

    The same unitary ``U`` on ``E (x) S`` acts before the first intervention
    and after every intervention. Legs are ordered
    ``[S, A_k, B_k, ..., A_1, B_1]``.

    Parameters
    ----------
    k : int
        Number of interventions (``k <= 2``).
    dS, dE : int
    rho : array_like, optional
        Initial state on ``E (x) S`` (environment first); ``|00>`` by default.
    normalization : {"unit", "unnormalized"}
        Unit trace, or scaled to trace ``dS ** (k + 1)``.

    Returns
    -------
    numpy.ndarray
        Matrix of dimension ``dS ** (2k + 1)``.
    """
    n = k + 1
    _check_constant_args(k, dS, dE, n, 2)
    fid = _fiducial_matrix(rho, dS, dE)
    circ = _Circuit(k, 1)
    legs = circ.legs()
    table = weingarten_table(n, dS * dE)
    nlegs = len(legs)
    grids = np.indices((dS,) * (2 * nlegs)).reshape(2 * nlegs, -1)
    ext_vars = [circ.ext["ket", 0, l] for l in legs] + [circ.ext["bra", 0, l] for l in legs]
    dim = dS**nlegs
    out = np.zeros(dim * dim, dtype=complex)
    nz = np.argwhere(np.abs(fid) > 0)
    for sigma in table.perms:
        for tau in table.perms:
            wg = table(compose(tau, inverse(sigma)))
            base = circ.struct + circ.weingarten_edges(sigma, tau)
            for a, b in nz:
                ea, sa = divmod(int(a), dS)
                eb, sb = divmod(int(b), dS)
                out += wg * fid[a, b] * _delta_tensor(circ, base, ext_vars, grids, dS, dE,
                                                      {circ.fid["ket", 0]: (ea, sa),
                                                       circ.fid["bra", 0]: (eb, sb)})
    out = out.reshape(dim, dim) / dS**k
    if normalization == "unnormalized":
        return out * dS ** (k + 1)
    if normalization != "unit":
        raise ValueError(f"unknown normalization {normalization!r}")
    return out


def _delta_tensor(circ, edges, ext_vars, grids, dS, dE, fid_pins) -> np.ndarray:
    """Dense tensor over external system legs for one delta network."""
    uf = _UnionFind(range(len(circ.kinds)))
    for a, b in edges:
        uf.union(a, b)
    pinned = {}
    for (ve, vs), (e, s) in fid_pins.items():
        for var, val in ((ve, e), (vs, s)):
            r = uf.find(var)
            if pinned.setdefault(r, val) != val:
                return np.zeros(grids.shape[1])
    ext_roots = {uf.find(v) for v in ext_vars}
    factor = 1.0
    for v, kind in enumerate(circ.kinds):
        r = uf.find(v)
        if r == v and r not in pinned and r not in ext_roots:
            factor *= dE if kind == 0 else dS
    mask = np.ones(grids.shape[1], dtype=bool)
    first = {}
    for pos, v in enumerate(ext_vars):
        r = uf.find(v)
        if circ.kinds[v] == 0:
            raise AssertionError("external legs must be system indices")
        if r in pinned:
            mask &= grids[pos] == pinned[r]
        elif r in first:
            mask &= grids[pos] == grids[first[r]]
        else:
            first[r] = pos
    return factor * mask


def _batched_degrees(circ: _Circuit, struct, sigma_edges, tau_edges, pins, dS, dE):
    """Delta values of many networks sharing structure and pins.

    ``tau_edges`` has shape ``(B, M, 2)``; all other edges are shared.
    Returns an array of ``dE ** (#free env comps) * dS ** (#free sys comps)``
    (zero when pins contradict).
    """
    nv = len(circ.kinds)
    kinds = np.array(circ.kinds)
    const_ids = {}
    pin_edges = []
    for var, val in pins:
        key = (circ.kinds[var], val)
        if key not in const_ids:
            const_ids[key] = nv + len(const_ids)
        pin_edges.append((var, const_ids[key]))
    nt = nv + len(const_ids)
    shared = np.array(list(struct) + list(sigma_edges) + pin_edges, dtype=np.int64).reshape(-1, 2)
    B = tau_edges.shape[0]
    offs = (np.arange(B, dtype=np.int64) * nt)[:, None]
    rows = np.concatenate([(shared[:, 0][None, :] + offs).ravel(), (tau_edges[:, :, 0] + offs).ravel()])
    cols = np.concatenate([(shared[:, 1][None, :] + offs).ravel(), (tau_edges[:, :, 1] + offs).ravel()])
    graph = coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(B * nt, B * nt))
    _, labels = connected_components(graph, directed=False)
    labels = labels.reshape(B, nt)
    result = np.ones(B)
    for kind, size in ((0, dE), (1, dS)):
        consts = [cid for (kk, _), cid in const_ids.items() if kk == kind]
        cols_k = np.concatenate([np.flatnonzero(kinds == kind), consts]).astype(np.int64)
        n_all = _distinct_per_row(labels[:, cols_k])
        if consts:
            n_const = _distinct_per_row(labels[:, consts])
            result[n_const < len(consts)] = 0.0
        else:
            n_const = 0
        result *= float(size) ** (n_all - n_const)
    return result


def _distinct_per_row(a: np.ndarray) -> np.ndarray:
    s = np.sort(a, axis=1)
    return 1 + np.count_nonzero(np.diff(s, axis=1), axis=1)


def _schmidt(rho, dS, dE):
    """Schmidt coefficients of a pure fiducial on ``E (x) S``."""
    m = _fiducial_matrix(rho, dS, dE)
    lam, vec = np.linalg.eigh((m + m.conj().T) / 2)
    if abs(lam[-1] - 1.0) > 1e-9 or abs(np.trace(m).real - 1.0) > 1e-9:
        raise ValueError("fiducial state must be pure")
    psi = vec[:, -1].reshape(dE, dS)
    sv = np.linalg.svd(psi, compute_uv=False)
    return sv[sv > 1e-12]


def avg_purity_constant(k: int, dS: int, dE: int, rho=None) -> float:
    """Exact Haar average of ``tr(Upsilon^2)`` for a constant interaction.

    The unit-trace process is quartic in ``U``, so the average is a sum
    over ``(2k+2)!^2`` permutation pairs. Only the Schmidt spectrum of
    the pure fiducial ``rho`` matters, because local unitaries on it are
    absorbed into the Haar measure.

    Parameters
    ----------
    k : int
        Number of interventions (``k <= 2``).
    dS, dE : int
        Require ``dS * dE >= 2k + 2``.
    rho : array_like, optional
        Pure initial state on ``E (x) S``; ``|00>`` by default.
    """
    n = 2 * k + 2
    _check_constant_args(k, dS, dE, n, 2)
    schmidt = _schmidt(rho, dS, dE)
    circ = _Circuit(k, 2)
    # glue the two copies into tr(Y Y): ket of copy 0 meets bra of copy 1
    struct = list(circ.struct)
    for leg in circ.legs():
        struct.append((circ.ext["ket", 0, leg], circ.ext["bra", 1, leg]))
        struct.append((circ.ext["bra", 0, leg], circ.ext["ket", 1, leg]))
    table = weingarten_table(n, dS * dE)
    perms, lookup, radix, cycles, inv_idx, prod = _perm_data(n)
    ket = np.array(circ.inst["ket"])
    bra = np.array(circ.inst["bra"])
    # tau edges for every tau: columns of ket l tied to columns of bra tau(l)
    tau_edges = np.concatenate(
        [np.stack([np.broadcast_to(ket[:, 2], perms.shape), bra[perms, 2]], axis=-1),
         np.stack([np.broadcast_to(ket[:, 3], perms.shape), bra[perms, 3]], axis=-1)], axis=1)
    slots = [circ.fid["ket", 0], circ.fid["bra", 0], circ.fid["ket", 1], circ.fid["bra", 1]]
    total = 0.0
    for combo in itertools.product(range(len(schmidt)), repeat=4):
        coef = float(np.prod(schmidt[list(combo)]))
        pins = []
        for (ve, vs), i in zip(slots, combo):
            pins += [(ve, i), (vs, i)]
        for si in range(len(perms)):
            sigma = perms[si]
            sig_edges = [(int(ket[l, 0]), int(bra[s, 0])) for l, s in enumerate(sigma)]
            sig_edges += [(int(ket[l, 1]), int(bra[s, 1])) for l, s in enumerate(sigma)]
            deg = _batched_degrees(circ, struct, sig_edges, tau_edges, pins, dS, dE)
            wg = table.values[prod[:, inv_idx[si]]]
            total += coef * float(wg @ deg)
    return total / dS ** (2 * k)


def avg_superchannel_closed_form(dS: int, dE: int, rho_s) -> np.ndarray:
    """Closed-form constant-interaction average of the one-step process.

    Unit trace, legs ``[S, A_1, B_1]``; ``rho_s`` is the initial system
    state.
    """
    rho_s = as_matrix(rho_s)
    swap = swap_operator(dS)
    eye = np.eye(dS)
    m = (dE**2 / dS * np.eye(dS**3)
         + np.kron(swap, rho_s.T) / dS
         - np.kron(swap, eye / dS) / dS
         - np.kron(np.eye(dS**2) / dS**2, rho_s.T))
    return m / (dE**2 * dS**2 - 1)


def purity_of_avg_superchannel(dS: int, dE: int, rho_s_purity: float) -> float:
    """Closed-form ``tr[E(Upsilon)^2]`` for the one-step constant-interaction average."""
    return 2.0 / (dE**2 * dS**2 - 1) ** 2 * (
        1.0 / dS**3
        + rho_s_purity * (dS**2 - dS - 1) / (2.0 * dS**2)
        - dE**2 / dS
        + dE**4 * dS / 2.0
    )
