"""Exact N-boson dynamics, the excitation map and the Bogoliubov comparison.

The excitation map sends an N-particle vector Psi to blocks (psi_0, ..., psi_N)
with psi_n an n-particle vector orthogonal to the condensate u in every slot,
such that Psi = sum_n a*(u)^(N-n) / sqrt((N-n)!) psi_n.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import linalg
from scipy.sparse.linalg import expm_multiply

from . import fock, hartree, pair, spectral
from .errors import BudgetExceededError, NotNormalizedError, NotOrthogonalError
from .fock import FockBasis, FockVector, sector
from .spectral import ModeBasis, PotentialFourier

DEFAULT_SECTOR_BUDGET = 3_000_000


# --------------------------------------------------------------------------
# N-particle sector


@dataclass(eq=False)
class NBodyVector:
    basis: FockBasis
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.basis.nmin != self.basis.nmax:
            raise ValueError("an N-body vector lives on a single particle-number sector")
        self.amplitudes = np.asarray(self.amplitudes, complex)
        if self.amplitudes.shape != (self.basis.dim,):
            raise ValueError("amplitude vector does not match the sector dimension")

    @property
    def N(self) -> int:
        return self.basis.nmax

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def nbody_sector(n_modes: int, N: int, budget: int = DEFAULT_SECTOR_BUDGET) -> FockBasis:
    dim = fock.shell_dimension(n_modes, N)
    if dim > budget:
        raise BudgetExceededError(f"N-body sector of dimension {dim} exceeds budget {budget}")
    return sector(n_modes, N)


def two_body_operator(W: np.ndarray, src: FockBasis, dst: FockBasis | None = None,
                      tol: float = 0.0) -> sp.csr_matrix:
    """sum W[p,q,r,s] a_p^* a_q^* a_s a_r (no prefactor)."""
    dst = src if dst is None else dst
    rows, cols, vals = [], [], []
    for p, q, r, s in np.argwhere(np.abs(W) > tol):
        rr, cc, v = fock.apply_string(src, dst, [(p, 1), (q, 1), (s, -1), (r, -1)])
        rows.append(rr)
        cols.append(cc)
        vals.append(W[p, q, r, s] * v)
    if not rows:
        return sp.csr_matrix((dst.dim, src.dim), dtype=complex)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(dst.dim, src.dim), dtype=complex)


def cubic_lowering_operator(C: np.ndarray, basis: FockBasis, tol: float = 0.0) -> sp.csr_matrix:
    """sum C[q,r,s] a_q^* a_r a_s."""
    rows, cols, vals = [], [], []
    for q, r, s in np.argwhere(np.abs(C) > tol):
        rr, cc, v = fock.apply_string(basis, basis, [(q, 1), (r, -1), (s, -1)])
        rows.append(rr)
        cols.append(cc)
        vals.append(C[q, r, s] * v)
    if not rows:
        return sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(basis.dim, basis.dim), dtype=complex)


def assemble_HN(N: int, w_hat: PotentialFourier, W: np.ndarray | None = None,
                budget: int = DEFAULT_SECTOR_BUDGET) -> sp.csr_matrix:
    """dGamma(-Laplace) + 1/(2(N-1)) sum W a*a*aa on the N-particle sector."""
    if N < 2:
        raise ValueError("N must be >= 2")
    basis = w_hat.basis
    sec = nbody_sector(basis.n_modes, N, budget)
    kin = sp.diags(sec.states @ basis.kinetic).astype(complex)
    if w_hat.is_zero:
        return kin.tocsr()
    if W is None:
        W = spectral.two_body_tensor(w_hat, basis)
    H = kin + two_body_operator(W, sec) / (2 * (N - 1))
    return (0.5 * (H + H.conj().T)).tocsr()


def total_momentum(basis: ModeBasis, sec: FockBasis) -> np.ndarray:
    """Diagonal of the total momentum, shape (dim, d)."""
    return sec.states @ basis.momenta


def momentum_leakage(H: sp.spmatrix, P: np.ndarray) -> float:
    """Largest matrix element of H between states of different total momentum."""
    H = H.tocoo()
    bad = np.any(P[H.row] != P[H.col], axis=1)
    return float(np.abs(H.data[bad]).max()) if bad.any() else 0.0


@dataclass(eq=False)
class NBodyTrajectory:
    times: np.ndarray
    vectors: list = field(repr=False)
    norm_drift: float
    energy_drift: float

    def at_time(self, t: float) -> NBodyVector:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9:
            raise KeyError(f"time {t} was not sampled")
        return self.vectors[i]


def evolve_nbody(psi0: NBodyVector, H: sp.spmatrix, sample_times, method: str = "expm",
                 dt: float = 1e-3) -> NBodyTrajectory:
    """Propagate e^{-itH} psi0 to each sample time (in increasing order from 0)."""
    times = np.asarray(sorted(set(float(t) for t in sample_times)))
    v = psi0.amplitudes.copy()
    e0 = float(np.real(np.vdot(v, H @ v)))
    n0 = np.linalg.norm(v)
    out = []
    t_prev = 0.0
    for t in times:
        span = t - t_prev
        if span != 0:
            if method == "expm":
                v = expm_multiply(-1j * span * H, v)
            elif method == "rk4":
                n = max(1, int(math.ceil(abs(span) / dt)))
                h = span / n
                for _ in range(n):
                    k1 = -1j * (H @ v)
                    k2 = -1j * (H @ (v + 0.5 * h * k1))
                    k3 = -1j * (H @ (v + 0.5 * h * k2))
                    k4 = -1j * (H @ (v + h * k3))
                    v = v + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            else:
                raise ValueError(f"unknown method {method!r}")
        out.append(NBodyVector(psi0.basis, v.copy()))
        t_prev = t
    norms = [np.linalg.norm(x.amplitudes) for x in out]
    energies = [float(np.real(np.vdot(x.amplitudes, H @ x.amplitudes))) for x in out]
    return NBodyTrajectory(times, out, float(max(abs(n - n0) for n in norms)),
                           float(max(abs(e - e0) for e in energies) / max(abs(e0), 1e-300)))


# --------------------------------------------------------------------------
# excitation map


def _frame_generator(u: np.ndarray):
    """(V, A, slot) with V unitary, V[:, slot] = u and V = expm(A), A anti-Hermitian."""
    slot = int(np.argmax(np.abs(u)))
    V = pair.condensate_frame(u, slot)
    T, Z = linalg.schur(V, output="complex")
    lam = np.diag(T)
    A = (Z * (1j * np.angle(lam))) @ Z.conj().T
    A = 0.5 * (A - A.conj().T)
    return V, A, slot


def _second_quantized_unitary(A: np.ndarray, sec: FockBasis, v: np.ndarray, sign: int):
    """Apply exp(sign * dGamma(A)) to ``v`` on one particle-number sector."""
    off = A - np.diag(np.diag(A))
    if not np.any(np.abs(off) > 1e-15):
        return np.exp(sign * (sec.states @ np.diag(A))) * v
    return expm_multiply(sign * fock.dGamma(A, sec), v)


@dataclass(eq=False)
class ExcitationDecomposition:
    u: np.ndarray
    blocks: list = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.blocks) - 1

    @property
    def n_modes(self) -> int:
        return len(self.u)

    def norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(b) for b in self.blocks])

    def total_norm2(self) -> float:
        return float(np.sum(self.norms() ** 2))

    def orthogonality_residual(self) -> float:
        out = 0.0
        for n in range(1, len(self.blocks)):
            r = _annihilate_u(self.u, n, self.blocks[n])
            out = max(out, float(np.linalg.norm(r)))
        return out

    def to_fock(self, basis: FockBasis | None = None) -> FockVector:
        basis = FockBasis(self.n_modes, self.N) if basis is None else basis
        v = np.zeros(basis.dim, complex)
        for n, b in enumerate(self.blocks):
            if basis.nmin <= n <= basis.nmax:
                v[basis.shell_slice(n)] = b
            elif np.any(b):
                raise ValueError(f"block {n} lies outside {basis}")
        return FockVector(basis, v)

    @classmethod
    def from_fock(cls, phi: FockVector, u: np.ndarray, N: int) -> "ExcitationDecomposition":
        """Blocks n <= N of a Fock vector (1^{<=N} phi); missing shells are zero."""
        M = phi.basis.n_modes
        blocks = []
        for n in range(N + 1):
            if phi.basis.nmin <= n <= phi.basis.nmax:
                blocks.append(phi.block(n).copy())
            else:
                blocks.append(np.zeros(fock.shell_dimension(M, n), complex))
        return cls(np.asarray(u, complex), blocks)


def _annihilate_u(u, n, block):
    M = len(u)
    src, dst = sector(M, n), sector(M, n - 1)
    out = np.zeros(dst.dim, complex)
    for j in range(M):
        if u[j] != 0:
            r, c, v = fock.apply_string(src, dst, [(j, -1)])
            np.add.at(out, r, np.conj(u[j]) * v * block[c])
    return out


def _create_u(u, n, block):
    """a*(u) from sector n to n+1."""
    M = len(u)
    src, dst = sector(M, n), sector(M, n + 1)
    out = np.zeros(dst.dim, complex)
    for j in range(M):
        if u[j] != 0:
            r, c, v = fock.apply_string(src, dst, [(j, 1)])
            np.add.at(out, r, u[j] * v * block[c])
    return out


def _check_condensate(u):
    u = np.asarray(u, complex)
    if abs(np.linalg.norm(u) - 1) > 1e-8:
        raise NotNormalizedError(f"condensate norm {np.linalg.norm(u)!r} is not 1")
    return u


def excitation_split(psi: NBodyVector, u: np.ndarray) -> ExcitationDecomposition:
    """Decompose psi by rotating u onto a coordinate mode and reading off its occupation."""
    u = _check_condensate(u)
    M, N = psi.basis.n_modes, psi.N
    if len(u) != M:
        raise ValueError("condensate and N-body vector have different mode counts")
    _, A, c = _frame_generator(u)
    rotated = _second_quantized_unitary(A, psi.basis, psi.amplitudes, -1)
    occ = psi.basis.states
    blocks = []
    for n in range(N + 1):
        sel = np.nonzero(occ[:, c] == N - n)[0]
        target = occ[sel].copy()
        target[:, c] = 0
        sec = sector(M, n)
        idx, found = sec.index(target)
        b = np.zeros(sec.dim, complex)
        b[idx] = rotated[sel]
        blocks.append(_second_quantized_unitary(A, sec, b, +1))
    return ExcitationDecomposition(u, blocks)


def excitation_join(decomp: ExcitationDecomposition, orth_tol: float = 1e-8) -> NBodyVector:
    """sum_n a*(u)^(N-n)/sqrt((N-n)!) psi_n, evaluated by a Horner recursion."""
    u = _check_condensate(decomp.u)
    N = decomp.N
    for n in range(1, N + 1):
        r = float(np.linalg.norm(_annihilate_u(u, n, decomp.blocks[n])))
        if r > orth_tol:
            raise NotOrthogonalError(f"block {n} is not orthogonal to the condensate "
                                     f"(residual {r:.3g})")
    acc = np.asarray(decomp.blocks[0], complex).copy()
    for m in range(1, N + 1):
        acc = _create_u(u, m - 1, acc) / math.sqrt(N - m + 1) + decomp.blocks[m]
    return NBodyVector(sector(len(u), N), acc)


def project_excitation(decomp: ExcitationDecomposition) -> tuple[ExcitationDecomposition, float]:
    """Remove condensate components from every block; returns the removed norm."""
    u = _check_condensate(decomp.u)
    M = len(u)
    _, A, c = _frame_generator(u)
    removed = 0.0
    blocks = []
    for n, b in enumerate(decomp.blocks):
        if n == 0:
            blocks.append(np.asarray(b, complex).copy())
            continue
        sec = sector(M, n)
        r = _second_quantized_unitary(A, sec, b, -1)
        bad = sec.states[:, c] > 0
        removed += float(np.sum(np.abs(r[bad]) ** 2))
        r[bad] = 0
        blocks.append(_second_quantized_unitary(A, sec, r, +1))
    return ExcitationDecomposition(u, blocks), math.sqrt(removed)


@dataclass
class NormError:
    error2: float
    normalized_error2: float
    overlap: float
    norm_exact: float
    norm_approx: float


def norm_error(psi_exact: NBodyVector, psi_approx: NBodyVector) -> NormError:
    if psi_exact.basis != psi_approx.basis:
        raise ValueError("vectors live on different sectors")
    a, b = psi_exact.amplitudes, psi_approx.amplitudes
    nb = float(np.linalg.norm(b))
    e2 = float(np.linalg.norm(a - b) ** 2)
    en = float(np.linalg.norm(a - b / nb) ** 2) if nb > 0 else float("nan")
    return NormError(e2, en, float(abs(np.vdot(a, b))), float(np.linalg.norm(a)), nb)


# --------------------------------------------------------------------------
# transformed generator


@dataclass(eq=False)
class TransformedGenerator:
    """Pieces of the generator of Phi_N = U_N Psi_N on the excitation space 1^{<=N}."""

    basis: FockBasis
    quadratic: sp.csr_matrix
    R: tuple = field(repr=False)

    def matrix(self) -> sp.csr_matrix:
        out = self.quadratic
        for Rj in self.R:
            out = out + 0.5 * (Rj + Rj.conj().T)
        return out.tocsr()


def remainder_operators(kernels: pair.KernelSet, N: int, basis: FockBasis | None = None):
    """R_0, ..., R_4 as sparse matrices on the Fock space with cutoff N."""
    u, Q, W = kernels.u, kernels.Q, kernels.W
    M = len(u)
    basis = FockBasis(M, N) if basis is None else basis
    n = basis.total.astype(float)
    Nm = N - n
    R0 = fock.dGamma(Q @ (kernels.V + kernels.K1 - kernels.mu * np.eye(M)) @ Q, basis)
    R0 = R0 @ sp.diags((1 - n) / (N - 1))
    R1 = sp.diags(-2 * n * np.sqrt(np.maximum(Nm, 0)) / (N - 1)) @ fock.annihilator(
        Q @ kernels.V @ u, basis)
    f2 = np.sqrt(np.maximum(Nm * (Nm - 1), 0)) / (N - 1) - 1
    R2 = fock.pair_creation(kernels.K2, basis) @ sp.diags(f2)
    A3 = np.einsum("qa,pars,rb,sc->pqbc", Q, W, Q, Q)
    C = np.einsum("p,pqrs->qrs", u.conj(), A3)
    R3 = sp.diags(2 * np.sqrt(np.maximum(Nm, 0)) / (N - 1)) @ cubic_lowering_operator(C, basis)
    A4 = np.einsum("pa,qb,abrs,rc,sd->pqcd", Q, Q, W, Q, Q)
    R4 = two_body_operator(A4, basis, tol=1e-15) / (2 * (N - 1))
    R4 = 0.5 * (R4 + R4.conj().T)
    return tuple(R.tocsr() for R in (R0, R1, R2, R3, R4)), basis


def transformed_generator(kernels: pair.KernelSet, N: int) -> TransformedGenerator:
    R, basis = remainder_operators(kernels, N)
    Hq = fock.assemble_quadratic(kernels, basis)
    return TransformedGenerator(basis, Hq, R)


@dataclass
class ResidualProbe:
    deltas: np.ndarray
    residuals: np.ndarray
    order: float


def transformed_residual(t: float, ktraj: pair.KernelTrajectory, psi_t: NBodyVector,
                         H_N: sp.spmatrix, delta: float) -> float:
    """|| i dPhi_N/dt - H~_N Phi_N || at time t, derivative by central difference of step delta."""
    if t - delta < ktraj.hartree.times[0] - 1e-12 or t + delta > ktraj.hartree.t_final + 1e-12:
        raise ValueError("Hartree trajectory does not cover [t - delta, t + delta]")
    N = psi_t.N
    vp = NBodyVector(psi_t.basis, expm_multiply(-1j * delta * H_N, psi_t.amplitudes))
    vm = NBodyVector(psi_t.basis, expm_multiply(1j * delta * H_N, psi_t.amplitudes))
    basis = FockBasis(psi_t.basis.n_modes, N)
    phi = excitation_split(psi_t, ktraj.u(t)).to_fock(basis).amplitudes
    php = excitation_split(vp, ktraj.u(t + delta)).to_fock(basis).amplitudes
    phm = excitation_split(vm, ktraj.u(t - delta)).to_fock(basis).amplitudes
    gen = transformed_generator(ktraj.kernels(t), N).matrix()
    return float(np.linalg.norm(1j * (php - phm) / (2 * delta) - gen @ phi))


def residual_order(t, ktraj, psi_t, H_N, deltas=(0.04, 0.02, 0.01, 0.005)) -> ResidualProbe:
    deltas = np.asarray(deltas, float)
    res = np.array([transformed_residual(t, ktraj, psi_t, H_N, d) for d in deltas])
    slope = float(np.polyfit(np.log(deltas), np.log(res), 1)[0])
    return ResidualProbe(deltas, res, slope)


# --------------------------------------------------------------------------
# end-to-end comparison


@dataclass
class ComparisonSettings:
    d: int = 1
    L: float = 2 * math.pi
    kmax: int = 1
    N: int = 4
    beta: float = 0.0
    profile: str = "cosine-bump"
    profile_params: dict = field(default_factory=lambda: {"c": 1.0, "R": 1.0})
    times: tuple = (0.5,)
    nmax: int = 12
    hartree_dt: float = 1e-3
    hartree_scheme: str = "rk4"
    fock_dt: float = 5e-3
    leak_budget: float = 1e-6
    condensate: str = "constant"
    condensate_epsilon: float = 0.2
    initial: str = "vacuum"
    initial_shift: float = 0.0
    nbody_method: str = "expm"
    nbody_dt: float = 1e-3
    sector_budget: int = DEFAULT_SECTOR_BUDGET


@dataclass
class ErrorRecord:
    t: float
    N: int
    beta: float
    n_modes: int
    error2: float
    normalized_error2: float
    overlap: float
    approx_norm: float
    trace_gamma: float
    kinetic: float
    initial_excitations: float
    initial_kinetic: float
    leak: float
    leak_flag: bool
    orth_residual: float
    hartree_norm_drift: float
    nbody_norm_drift: float
    nbody_energy_drift: float
    fock_norm_drift: float
    status: str = "ok"

    def as_dict(self) -> dict:
        return asdict(self)


def make_condensate(basis: ModeBasis, kind: str, epsilon: float = 0.2) -> np.ndarray:
    if kind == "constant":
        return hartree.constant_condensate(basis)
    if kind == "two-mode":
        return hartree.two_mode_condensate(basis, epsilon)
    raise ValueError(f"unknown condensate {kind!r}; use 'constant' or 'two-mode'")


def initial_excitation_state(kind: str, kernels: pair.KernelSet, fb: FockBasis,
                             shift: float = 0.0) -> FockVector:
    if kind == "vacuum":
        return fb.vacuum()
    if kind == "ground":
        p0 = pair.excitation_ground_state_pair(kernels, shift)
        return fock.quasifree_from_pair(p0, fb)
    raise ValueError(f"unknown initial excitation state {kind!r}; use 'vacuum' or 'ground'")


def run_comparison(s: ComparisonSettings) -> list[ErrorRecord]:
    """Hartree -> Bogoliubov (Fock) -> excitation join -> exact N-body -> norm error."""
    basis = spectral.build_mode_basis(s.d, s.L, s.kmax)
    prof = spectral.make_profile(s.profile, **s.profile_params)
    w_hat = spectral.scaled_potential_fourier(prof, s.beta, s.N, basis)
    M = basis.n_modes
    times = sorted(float(t) for t in s.times)
    t_end = max(times)
    u0 = make_condensate(basis, s.condensate, s.condensate_epsilon)
    htraj = hartree.evolve_hartree(u0, w_hat, t_end if t_end > 0 else s.hartree_dt,
                                   dt=s.hartree_dt, scheme=s.hartree_scheme)
    ktraj = pair.KernelTrajectory(htraj, w_hat)
    fb = FockBasis(M, s.nmax)
    phi0 = initial_excitation_state(s.initial, ktraj.kernels(0.0), fb, s.initial_shift)
    ft = fock.evolve_fock(phi0, ktraj, t_end, dt=s.fock_dt, sample_times=times,
                          leak_budget=s.leak_budget) if t_end > 0 else None

    dec0 = ExcitationDecomposition.from_fock(phi0, u0, s.N)
    psi0 = excitation_join(dec0)
    H = assemble_HN(s.N, w_hat, ktraj.W, s.sector_budget)
    nt = evolve_nbody(psi0, H, times, method=s.nbody_method, dt=s.nbody_dt)
    kin0 = float(np.real(phi0.expect(fock.dGamma(np.diag(1 + basis.kinetic), fb))))
    n_op = fock.number_operator(fb)
    ninit = float(np.real(phi0.expect(n_op)))
    h_drift = float(np.max(np.abs(np.linalg.norm(htraj.u, axis=1) - 1)))
    one_plus_T = fock.dGamma(np.diag(1 + basis.kinetic), fb)

    records = []
    for t in times:
        phi_t = ft.at_time(t) if (ft is not None and t > 0) else phi0
        u_t = ktraj.u(t)
        dec, orth = project_excitation(ExcitationDecomposition.from_fock(phi_t, u_t, s.N))
        approx = excitation_join(dec)
        ne = norm_error(nt.at_time(t), approx)
        pt = fock.extract_one_body(phi_t)
        leak = ft.leak_until(t) if ft is not None else float(phi0.shell_weights()[-1])
        records.append(ErrorRecord(
            t=t, N=s.N, beta=s.beta, n_modes=M, error2=ne.error2,
            normalized_error2=ne.normalized_error2, overlap=ne.overlap, approx_norm=ne.norm_approx,
            trace_gamma=pt.particle_number(),
            kinetic=float(np.real(phi_t.expect(one_plus_T))),
            initial_excitations=ninit, initial_kinetic=kin0, leak=leak,
            leak_flag=leak > s.leak_budget, orth_residual=orth, hartree_norm_drift=h_drift,
            nbody_norm_drift=nt.norm_drift, nbody_energy_drift=nt.energy_drift,
            fock_norm_drift=ft.norm_drift if ft is not None else 0.0,
            status="under-truncated" if leak > s.leak_budget else "ok"))
    return records
