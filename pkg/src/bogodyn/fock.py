"""Truncated bosonic Fock space over a finite set of modes.

States are occupation vectors with total particle number in ``[nmin, nmax]``,
ordered by particle number and, within a shell, lexicographically descending
(``(n,0,...,0)`` first). Operators are scipy sparse matrices; creation
operators drop every state beyond the cutoff.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .errors import BudgetExceededError, CutoffError, NotPureError
from .pair import PairState

ORDER_TAG = "graded-lex-desc"
FORMAT_VERSION = 1
DEFAULT_FOCK_BUDGET = 4_000_000


@lru_cache(maxsize=256)
def _compositions(n: int, m: int) -> np.ndarray:
    if m == 1:
        return np.array([[n]], dtype=np.int32)
    blocks = []
    for first in range(n, -1, -1):
        rest = _compositions(n - first, m - 1)
        blocks.append(np.column_stack([np.full(len(rest), first, np.int32), rest]))
    out = np.vstack(blocks)
    out.flags.writeable = False
    return out


def shell_dimension(n_modes: int, n: int) -> int:
    return math.comb(n_modes + n - 1, n)


class FockBasis:
    def __init__(self, n_modes: int, nmax: int, nmin: int = 0, budget: int = DEFAULT_FOCK_BUDGET):
        if n_modes < 1 or nmax < 0 or not 0 <= nmin <= nmax:
            raise ValueError(f"bad Fock basis parameters M={n_modes}, nmin={nmin}, nmax={nmax}")
        dim = sum(shell_dimension(n_modes, n) for n in range(nmin, nmax + 1))
        if dim > budget:
            raise BudgetExceededError(f"Fock basis dimension {dim} exceeds budget {budget}")
        base = nmax + 1
        if n_modes * math.log2(base) > 62:
            raise BudgetExceededError("occupation keys overflow 64-bit integers")
        self.n_modes = n_modes
        self.nmax = nmax
        self.nmin = nmin
        self.states = np.vstack([_compositions(n, n_modes) for n in range(nmin, nmax + 1)])
        self.dim = len(self.states)
        self.total = self.states.sum(axis=1)
        sizes = [shell_dimension(n_modes, n) for n in range(nmin, nmax + 1)]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)])
        self._weights = base ** np.arange(n_modes - 1, -1, -1, dtype=np.int64)
        keys = self.states.astype(np.int64) @ self._weights
        self._order = np.argsort(keys, kind="stable")
        self._sorted_keys = keys[self._order]
        self._ops: dict = {}

    def __repr__(self):
        return f"FockBasis(M={self.n_modes}, nmin={self.nmin}, nmax={self.nmax}, dim={self.dim})"

    def __eq__(self, other):
        return (isinstance(other, FockBasis) and self.n_modes == other.n_modes
                and self.nmax == other.nmax and self.nmin == other.nmin)

    def __hash__(self):
        return hash((self.n_modes, self.nmin, self.nmax))

    def shell_slice(self, n: int) -> slice:
        if not self.nmin <= n <= self.nmax:
            raise ValueError(f"shell {n} outside [{self.nmin}, {self.nmax}]")
        i = n - self.nmin
        return slice(int(self._offsets[i]), int(self._offsets[i + 1]))

    def index(self, occ: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Indices of occupation rows; second array flags rows present in the basis."""
        occ = np.atleast_2d(np.asarray(occ, dtype=np.int64))
        tot = occ.sum(axis=1)
        ok = (tot >= self.nmin) & (tot <= self.nmax) & np.all(occ >= 0, axis=1)
        keys = np.where(ok, occ @ self._weights, -1)
        pos = np.searchsorted(self._sorted_keys, keys)
        pos = np.clip(pos, 0, self.dim - 1)
        found = ok & (self._sorted_keys[pos] == keys)
        return self._order[pos], found

    def vacuum(self) -> "FockVector":
        if self.nmin > 0:
            raise ValueError("basis does not contain the vacuum")
        v = np.zeros(self.dim, complex)
        v[0] = 1.0
        return FockVector(self, v)

    def basis_state(self, occ) -> "FockVector":
        idx, found = self.index(occ)
        if not found[0]:
            raise KeyError(f"occupation {occ} not in {self}")
        v = np.zeros(self.dim, complex)
        v[idx[0]] = 1.0
        return FockVector(self, v)


def sector(n_modes: int, n: int) -> FockBasis:
    return _sector(n_modes, n)


@lru_cache(maxsize=128)
def _sector(n_modes, n):
    return FockBasis(n_modes, n, n)


def apply_string(src: FockBasis, dst: FockBasis, ops, cap: int | None = None):
    """COO data of the operator string ``ops`` from ``src`` to ``dst``.

    ``ops`` is a sequence of ``(mode, +1)`` (creation) or ``(mode, -1)``
    (annihilation) written left to right as in the operator product; the
    rightmost acts first. Intermediate states above ``cap`` are dropped.
    """
    if cap is None:
        cap = max(src.nmax, dst.nmax)
    occ = src.states.astype(np.int64).copy()
    amp = np.ones(src.dim)
    valid = np.ones(src.dim, bool)
    tot = src.total.astype(np.int64).copy()
    for mode, kind in reversed(list(ops)):
        if kind < 0:
            valid &= occ[:, mode] > 0
            amp *= np.sqrt(np.maximum(occ[:, mode], 0))
            occ[:, mode] -= 1
            tot -= 1
        else:
            occ[:, mode] += 1
            tot += 1
            amp *= np.sqrt(np.maximum(occ[:, mode], 0))
            valid &= tot <= cap
    cols = np.nonzero(valid)[0]
    idx, found = dst.index(occ[cols])
    return idx[found], cols[found], amp[cols[found]]


def string_operator(src, dst, ops, coef=1.0, cap=None) -> sp.csr_matrix:
    r, c, v = apply_string(src, dst, ops, cap)
    return sp.csr_matrix((coef * v, (r, c)), shape=(dst.dim, src.dim), dtype=complex)


def ladder_matrices(basis: FockBasis):
    """Lists ``(a, adag)`` of annihilation and creation matrices for every mode."""
    cached = basis._ops.get("ladder")
    if cached is None:
        a = [string_operator(basis, basis, [(j, -1)]) for j in range(basis.n_modes)]
        ad = [string_operator(basis, basis, [(j, +1)]) for j in range(basis.n_modes)]
        cached = basis._ops["ladder"] = (a, ad)
    return cached


def number_operator(basis: FockBasis) -> sp.csr_matrix:
    return sp.diags(basis.total.astype(float)).tocsr().astype(complex)


def annihilator(f, basis: FockBasis) -> sp.csr_matrix:
    """a(f) = sum conj(f_j) a_j."""
    a, _ = ladder_matrices(basis)
    out = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for j, fj in enumerate(np.asarray(f)):
        if fj != 0:
            out = out + np.conj(fj) * a[j]
    return out


def creator(f, basis: FockBasis) -> sp.csr_matrix:
    return annihilator(f, basis).conj().T.tocsr()


def dGamma(h, basis: FockBasis, tol: float = 0.0) -> sp.csr_matrix:
    """sum_jk h[j,k] a_j^* a_k."""
    h = np.atleast_2d(np.asarray(h, complex))
    M = basis.n_modes
    if h.shape != (M, M):
        raise ValueError(f"one-body matrix has shape {h.shape}, expected {(M, M)}")
    rows, cols, vals = [], [], []
    for j in range(M):
        for k in range(M):
            if abs(h[j, k]) > tol:
                r, c, v = apply_string(basis, basis, [(j, +1), (k, -1)])
                rows.append(r)
                cols.append(c)
                vals.append(h[j, k] * v)
    if not rows:
        return sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(basis.dim, basis.dim), dtype=complex)


def pair_creation(K, basis: FockBasis) -> sp.csr_matrix:
    """sum_jk K[j,k] a_j^* a_k^* (no factor 1/2)."""
    K = np.atleast_2d(np.asarray(K, complex))
    M = basis.n_modes
    rows, cols, vals = [], [], []
    for j in range(M):
        for k in range(j, M):
            c = K[j, k] if j == k else K[j, k] + K[k, j]
            if c != 0:
                r, cc, v = apply_string(basis, basis, [(j, +1), (k, +1)])
                rows.append(r)
                cols.append(cc)
                vals.append(c * v)
    if not rows:
        return sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(basis.dim, basis.dim), dtype=complex)


def assemble_quadratic(kernels, basis: FockBasis) -> sp.csr_matrix:
    """dGamma(h) + 1/2 sum K2 a*a* + 1/2 sum conj(K2) a a for ``kernels`` with (h, K2)."""
    h, K = (kernels.h, kernels.K2) if hasattr(kernels, "h") else kernels
    P = pair_creation(K, basis)
    Hq = dGamma(h, basis) + 0.5 * (P + P.conj().T)
    return Hq.tocsr()


class QuadraticGenerator:
    """Fast re-assembly of quadratic Hamiltonians with a fixed sparsity pattern."""

    def __init__(self, basis: FockBasis):
        M = basis.n_modes
        self.basis = basis
        rows, cols, vals, tid = [], [], [], []
        self._terms = []
        for j in range(M):
            for k in range(M):
                self._terms.append(("h", j, k))
        for j in range(M):
            for k in range(j, M):
                self._terms.append(("c", j, k))
                self._terms.append(("a", j, k))
        for t, (kind, j, k) in enumerate(self._terms):
            ops = {"h": [(j, 1), (k, -1)], "c": [(j, 1), (k, 1)], "a": [(j, -1), (k, -1)]}[kind]
            r, c, v = apply_string(basis, basis, ops)
            rows.append(r)
            cols.append(c)
            vals.append(v)
            tid.append(np.full(len(r), t))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        keys = rows.astype(np.int64) * basis.dim + cols
        uniq, inv = np.unique(keys, return_inverse=True)
        self._D = sp.csr_matrix((np.concatenate(vals), (inv, np.concatenate(tid))),
                                shape=(len(uniq), len(self._terms)))
        r_u = uniq // basis.dim
        self._indices = (uniq % basis.dim).astype(np.int32)
        self._indptr = np.searchsorted(r_u, np.arange(basis.dim + 1)).astype(np.int32)
        jj = np.array([j for _, j, _ in self._terms])
        kk = np.array([k for _, _, k in self._terms])
        self._sel = {kind: np.array([i for i, t in enumerate(self._terms) if t[0] == kind])
                     for kind in "hca"}
        self._jk = {kind: (jj[s], kk[s]) for kind, s in self._sel.items()}

    def matrix(self, h, K) -> sp.csr_matrix:
        c = np.zeros(len(self._terms), complex)
        j, k = self._jk["h"]
        c[self._sel["h"]] = h[j, k]
        j, k = self._jk["c"]
        pc = np.where(j == k, 0.5 * K[j, k], 0.5 * (K[j, k] + K[k, j]))
        c[self._sel["c"]] = pc
        c[self._sel["a"]] = np.conj(pc)
        data = self._D @ c
        n = self.basis.dim
        return sp.csr_matrix((data, self._indices, self._indptr), shape=(n, n))


# --------------------------------------------------------------------------
# vectors


@dataclass(eq=False)
class FockVector:
    basis: FockBasis
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, complex)
        if self.amplitudes.shape != (self.basis.dim,):
            raise ValueError(f"amplitude vector of shape {self.amplitudes.shape} "
                             f"does not match {self.basis}")
        if not np.all(np.isfinite(self.amplitudes)):
            raise ValueError("non-finite amplitudes")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "FockVector":
        return FockVector(self.basis, self.amplitudes / self.norm())

    def shell_weights(self) -> np.ndarray:
        p = np.abs(self.amplitudes) ** 2
        return np.array([p[self.basis.shell_slice(n)].sum()
                         for n in range(self.basis.nmin, self.basis.nmax + 1)])

    def block(self, n: int) -> np.ndarray:
        return self.amplitudes[self.basis.shell_slice(n)]

    def expect(self, op) -> complex:
        return complex(np.vdot(self.amplitudes, op @ self.amplitudes))

    def lift(self, basis: FockBasis) -> "FockVector":
        """Embed into a basis with the same mode count and a larger shell range."""
        if basis.n_modes != self.basis.n_modes:
            raise ValueError("mode count mismatch")
        idx, found = basis.index(self.basis.states)
        if not found.all() and np.any(self.amplitudes[~found]):
            raise ValueError("target basis does not contain the support of the vector")
        v = np.zeros(basis.dim, complex)
        v[idx[found]] = self.amplitudes[found]
        return FockVector(basis, v)

    def save(self, path) -> None:
        header = {"format": "bogodyn.fock", "version": FORMAT_VERSION, "M": self.basis.n_modes,
                  "nmin": self.basis.nmin, "nmax": self.basis.nmax, "order": ORDER_TAG}
        np.savez(path, header=json.dumps(header), amplitudes=self.amplitudes)

    @classmethod
    def load(cls, path) -> "FockVector":
        with np.load(path, allow_pickle=False) as f:
            header = json.loads(str(f["header"]))
            if header.get("format") != "bogodyn.fock" or header.get("order") != ORDER_TAG:
                raise ValueError(f"{path}: unsupported Fock vector file {header}")
            if header["version"] > FORMAT_VERSION:
                raise ValueError(f"{path}: file version {header['version']} is newer than reader")
            basis = FockBasis(header["M"], header["nmax"], header.get("nmin", 0))
            return cls(basis, f["amplitudes"].copy())


# --------------------------------------------------------------------------
# dynamics

_CF4_C = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)
_CF4_A = ((3 - 2 * math.sqrt(3)) / 12, (3 + 2 * math.sqrt(3)) / 12)


@dataclass(eq=False)
class FockTrajectory:
    times: np.ndarray
    vectors: list = field(repr=False)
    leak: np.ndarray = field(repr=False)
    leak_budget: float
    norm_drift: float
    step_times: np.ndarray = field(default=None, repr=False)

    @property
    def flagged(self) -> bool:
        """True when the top-shell weight exceeded the leak budget (under-truncated run)."""
        return bool(self.leak.max() > self.leak_budget)

    def leak_until(self, t: float) -> float:
        """Largest top-shell weight over steps up to time t."""
        return float(self.leak[self.step_times <= t + 1e-9].max())

    def at_time(self, t: float) -> FockVector:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9:
            raise KeyError(f"time {t} was not sampled")
        return self.vectors[i]


def evolve_fock(phi0: FockVector, ktraj, t_final: float, dt: float = 5e-3,
                t0: float = 0.0, sample_times=None, leak_budget: float = 1e-6) -> FockTrajectory:
    """Integrate i dPhi/dt = H(t) Phi with a fourth-order commutator-free Magnus scheme.

    ``ktraj.kernels(t)`` supplies (h, K2) at the Gauss points of each step. The
    propagator is unitary on the truncated space, so the norm is conserved to
    the accuracy of the action of the matrix exponential.
    """
    basis = phi0.basis
    gen = QuadraticGenerator(basis)
    n = max(1, int(round(abs(t_final - t0) / dt)))
    h = (t_final - t0) / n
    grid = t0 + h * np.arange(n + 1)
    if sample_times is None:
        keep = set(range(n + 1))
    else:
        keep = {int(np.argmin(np.abs(grid - s))) for s in sample_times}
        for s in sample_times:
            if np.min(np.abs(grid - s)) > 1e-9:
                raise ValueError(f"sample time {s} is not on the step grid (dt={h})")
    top = basis.shell_slice(basis.nmax)
    v = phi0.amplitudes.copy()
    n0 = np.linalg.norm(v)
    times, vecs, leak = [], [], []

    def record(i):
        times.append(grid[i])
        vecs.append(FockVector(basis, v.copy()))

    leak.append(float(np.sum(np.abs(v[top]) ** 2)))
    if 0 in keep:
        record(0)
    for i in range(n):
        t = grid[i]
        k1 = ktraj.kernels(t + _CF4_C[0] * h)
        k2 = ktraj.kernels(t + _CF4_C[1] * h)
        H1 = gen.matrix(k1.h, k1.K2)
        H2 = gen.matrix(k2.h, k2.K2)
        a1, a2 = _CF4_A
        v = expm_multiply(-1j * h * (a2 * H1 + a1 * H2), v)
        v = expm_multiply(-1j * h * (a1 * H1 + a2 * H2), v)
        leak.append(float(np.sum(np.abs(v[top]) ** 2)))
        if i + 1 in keep:
            record(i + 1)
    drift = abs(np.linalg.norm(v) - n0)
    return FockTrajectory(np.array(times), vecs, np.array(leak), leak_budget, float(drift), grid)


# --------------------------------------------------------------------------
# quasi-free states


def extract_one_body(phi: FockVector) -> PairState:
    """gamma[j,k] = <a_k^* a_j>, alpha[j,k] = <a_j a_k>; both exact under truncation."""
    a, _ = ladder_matrices(phi.basis)
    v = phi.amplitudes
    X = np.column_stack([aj @ v for aj in a])
    gamma = (X.conj().T @ X).T
    alpha = np.array([[np.vdot(v, a[j] @ X[:, k]) for k in range(len(a))] for j in range(len(a))])
    return PairState(0.5 * (gamma + gamma.conj().T), 0.5 * (alpha + alpha.T))


def thouless_matrix(pair: PairState, purity_tol: float = 1e-8) -> np.ndarray:
    res = pair.purity_residual()
    if res > purity_tol:
        raise NotPureError(f"purity residual {res:.3g} exceeds {purity_tol:g}")
    M = pair.n_modes
    Z = np.linalg.solve(np.eye(M) + pair.gamma, pair.alpha)
    return 0.5 * (Z + Z.T)


def quasifree_from_thouless(Z, basis: FockBasis, cutoff_tol: float = 1e-8) -> FockVector:
    """Normalized exp(1/2 sum Z_jk a_j^* a_k^*)|vac> truncated to the basis."""
    Z = np.atleast_2d(np.asarray(Z, complex))
    if Z.shape != (basis.n_modes, basis.n_modes):
        raise ValueError("Thouless matrix does not match the mode count")
    if np.linalg.norm(Z, 2) >= 1:
        raise NotPureError("Thouless matrix must have operator norm < 1")
    B = 0.5 * pair_creation(Z, basis)
    v = basis.vacuum().amplitudes
    term = v.copy()
    for m in range(1, basis.nmax // 2 + 1):
        term = (B @ term) / m
        v = v + term
    phi = FockVector(basis, v).normalized()
    w = phi.shell_weights()
    top_even = basis.nmax - basis.nmax % 2
    if np.any(Z) and w[top_even] > cutoff_tol:
        raise CutoffError(f"weight {w[top_even]:.3g} in shell {top_even} exceeds {cutoff_tol:g}; "
                          "raise nmax")
    return phi


def quasifree_from_pair(pair: PairState, basis: FockBasis, purity_tol: float = 1e-8,
                        cutoff_tol: float = 1e-8) -> FockVector:
    return quasifree_from_thouless(thouless_matrix(pair, purity_tol), basis, cutoff_tol)


def squeezed_vacuum_amplitudes(r: float, nmax: int) -> np.ndarray:
    """Closed-form one-mode amplitudes on occupations 0..nmax (unnormalized tail dropped)."""
    t = math.tanh(r)
    out = np.zeros(nmax + 1)
    for m in range(nmax // 2 + 1):
        out[2 * m] = t ** m * math.sqrt(math.factorial(2 * m)) / (2 ** m * math.factorial(m))
    return out / math.sqrt(math.cosh(r))


@dataclass
class WickResult:
    even_residual: float
    odd_residual: float

    @property
    def residual(self) -> float:
        return max(self.even_residual, self.odd_residual)


def _lifted_ops(phi: FockVector):
    ext = FockBasis(phi.basis.n_modes, phi.basis.nmax + 2, min(phi.basis.nmin, 0))
    v = phi.lift(ext).amplitudes
    a, ad = ladder_matrices(ext)
    return v, list(a) + list(ad)


def wick_check(phi: FockVector, modes=None, max_modes: int = 6, seed: int = 0) -> WickResult:
    """Max deviation of 1-, 3- and 4-point correlators from the quasi-free pairing rule.

    ``modes`` restricts the check to a subset of modes; by default all modes
    are used when there are at most ``max_modes``, otherwise a seeded sample.
    """
    M = phi.basis.n_modes
    if modes is None:
        modes = np.arange(M)
        if M > max_modes:
            modes = np.sort(np.random.default_rng(seed).choice(M, max_modes, replace=False))
    modes = np.asarray(modes)
    v, ops = _lifted_ops(phi)
    sel = list(modes) + [M + m for m in modes]
    n = len(sel)
    adj = {i: (i + n // 2) % n for i in range(n)}
    O = [ops[s] for s in sel]
    one = np.array([np.vdot(v, o @ v) for o in O])
    X1 = np.column_stack([o @ v for o in O])
    # <O_a O_b> = <O_a^dagger v, O_b v>; O_a^dagger = O_adj(a)
    two = np.array([[np.vdot(X1[:, adj[a_]], X1[:, b_]) for b_ in range(n)] for a_ in range(n)])
    X2 = np.empty((len(v), n, n), complex)
    for a_ in range(n):
        for b_ in range(n):
            X2[:, a_, b_] = O[a_] @ X1[:, b_]
    # three-point <O_a O_b O_c> = <O_adj(a) v, O_b O_c v>
    three = np.einsum("ia,ibc->abc", X1.conj(), X2)
    three = three[[adj[a_] for a_ in range(n)]]
    # four-point <O_a O_b O_c O_d> = <O_adj(b) O_adj(a) v, O_c O_d v>
    flat = X2.reshape(len(v), n * n)
    gram = (flat.conj().T @ flat).reshape(n, n, n, n)
    perm = [adj[a_] for a_ in range(n)]
    four = np.transpose(gram, (1, 0, 2, 3))[np.ix_(perm, perm, range(n), range(n))]
    pairing = (np.einsum("ab,cd->abcd", two, two) + np.einsum("ac,bd->abcd", two, two)
               + np.einsum("ad,bc->abcd", two, two))
    odd = max(np.abs(one).max(), np.abs(three).max())
    return WickResult(float(np.abs(four - pairing).max()), float(odd))


def two_point_from_pair(pair: PairState, modes) -> np.ndarray:
    """Matrix of <O_a O_b> for O = (a_m..., a_m^*...) built from (gamma, alpha)."""
    g, al = pair.gamma, pair.alpha
    modes = np.asarray(modes)
    m = len(modes)
    G = g[np.ix_(modes, modes)]
    A = al[np.ix_(modes, modes)]
    out = np.empty((2 * m, 2 * m), complex)
    out[:m, :m] = A
    out[m:, m:] = A.conj()
    out[m:, :m] = G.T
    out[:m, m:] = np.eye(m) + G
    return out


@dataclass
class MomentCheck:
    s: int
    lhs: float | None
    base: float | None
    ratio: float | None
    status: str


def moment_check(phi: FockVector, s: int, wick_tol: float = 1e-6) -> MomentCheck:
    """<(1+N)^s> against <1+N>^s on quasi-free states; guards non-quasi-free input."""
    if s not in (2, 3, 4):
        raise ValueError("s must be 2, 3 or 4")
    if wick_check(phi).residual > wick_tol:
        return MomentCheck(s, None, None, None, "not quasi-free")
    p = np.abs(phi.amplitudes) ** 2 / phi.norm() ** 2
    n = phi.basis.total
    lhs = float(np.sum(p * (1 + n) ** s))
    base = float(np.sum(p * (1 + n)))
    return MomentCheck(s, lhs, base ** s, lhs / base ** s, "ok")
