"""Bogoliubov kernels and the (gamma, alpha) evolution of quasi-free states.

Matrix conventions (plane-wave basis):

* ``gamma[j, k] = <a_k^* a_j>`` and ``alpha[j, k] = <a_j a_k>``.
* The pairing kernel ``K2[j, k]`` multiplies ``a_j^* a_k^*``:
  ``H = dGamma(h) + 1/2 sum K2[j,k] a_j^* a_k^* + h.c.``.
* Operators acting on the conjugate slot (pairing kernels) are projected as
  ``Q @ K @ Q.T``.

With these conventions the density-matrix flow reads

    i dgamma/dt = h gamma - gamma h + K2 alpha^dagger - alpha K2^dagger
    i dalpha/dt = h alpha + alpha h^T + K2 + K2 gamma^T + gamma K2
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import spectral
from .errors import InadmissibleError, NotNormalizedError, StepSizeError
from .hartree import HartreeTrajectory, compute_mu, mean_field_potential
from .spectral import ModeBasis, PotentialFourier


@dataclass(eq=False)
class KernelSet:
    h: np.ndarray
    K1: np.ndarray
    K2_tilde: np.ndarray
    K2: np.ndarray
    Q: np.ndarray
    mu: float
    V: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    W: np.ndarray | None = field(default=None, repr=False)

    def invariant_residuals(self) -> dict[str, float]:
        Q, u = self.Q, self.u
        return {
            "h_hermitian": float(np.abs(self.h - self.h.conj().T).max()),
            "K2_symmetric": float(np.abs(self.K2 - self.K2.T).max()),
            "Q_idempotent": float(np.abs(Q @ Q - Q).max()),
            "Q_hermitian": float(np.abs(Q - Q.conj().T).max()),
            "Q_kills_u": float(np.abs(Q @ u).max()),
            "K2_projected": float(np.abs(Q @ self.K2 @ Q.conj() - self.K2).max()),
        }


def build_kernels(u: np.ndarray, w_hat: PotentialFourier, W: np.ndarray | None = None) -> KernelSet:
    """Assemble h, K1~, K2~, K2, Q and mu for the condensate ``u``."""
    basis = w_hat.basis
    u = np.asarray(u, dtype=complex)
    if u.shape != (basis.n_modes,):
        raise ValueError(f"condensate has shape {u.shape}, basis has {basis.n_modes} modes")
    if abs(np.linalg.norm(u) - 1) > 1e-8:
        raise NotNormalizedError(f"condensate norm {np.linalg.norm(u)!r} is not 1")
    if W is None:
        W = spectral.two_body_tensor(w_hat, basis)
    M = basis.n_modes
    V = spectral.multiplication_matrix(mean_field_potential(u, w_hat), basis)
    V = 0.5 * (V + V.conj().T)
    mu = compute_mu(u, w_hat)
    K1 = np.einsum("jqrk,r,q->jk", W, u, u.conj())
    K2t = np.einsum("jkrs,r,s->jk", W, u, u)
    Q = np.eye(M) - np.outer(u, u.conj())
    h = np.diag(basis.kinetic).astype(complex) + V - mu * np.eye(M) + Q @ K1 @ Q
    h = 0.5 * (h + h.conj().T)
    K2 = Q @ K2t @ Q.T
    K2 = 0.5 * (K2 + K2.T)
    return KernelSet(h=h, K1=K1, K2_tilde=K2t, K2=K2, Q=Q, mu=mu, V=V, u=u, W=W)


class KernelTrajectory:
    """Kernels along a Hartree trajectory, rebuilt at arbitrary times."""

    def __init__(self, hartree: HartreeTrajectory, w_hat: PotentialFourier):
        hartree.basis.check(w_hat.basis)
        self.hartree = hartree
        self.w_hat = w_hat
        self.W = spectral.two_body_tensor(w_hat, w_hat.basis)
        self._cache: dict[float, KernelSet] = {}

    @property
    def basis(self) -> ModeBasis:
        return self.w_hat.basis

    def u(self, t: float) -> np.ndarray:
        u = self.hartree.at(t)
        return u / np.linalg.norm(u)

    def kernels(self, t: float) -> KernelSet:
        key = float(t)
        ks = self._cache.get(key)
        if ks is None:
            if len(self._cache) > 4096:
                self._cache.clear()
            ks = build_kernels(self.u(t), self.w_hat, self.W)
            self._cache[key] = ks
        return ks


class StaticKernels:
    """Time-independent (h, K2); used for closed-form checks."""

    def __init__(self, h, K2, u=None):
        h = np.atleast_2d(np.asarray(h, dtype=complex))
        K2 = np.atleast_2d(np.asarray(K2, dtype=complex))
        M = h.shape[0]
        u = np.zeros(M, complex) if u is None else np.asarray(u, complex)
        self._ks = KernelSet(h=h, K1=np.zeros_like(h), K2_tilde=K2, K2=K2,
                             Q=np.eye(M) - np.outer(u, u.conj()), mu=0.0,
                             V=np.zeros_like(h), u=u)

    def kernels(self, t: float) -> KernelSet:
        return self._ks

    def u(self, t: float) -> np.ndarray:
        return self._ks.u


# --------------------------------------------------------------------------
# pair states


@dataclass(eq=False)
class PairState:
    gamma: np.ndarray
    alpha: np.ndarray
    t: float = 0.0

    @classmethod
    def vacuum(cls, n_modes: int, t: float = 0.0) -> "PairState":
        z = np.zeros((n_modes, n_modes), dtype=complex)
        return cls(z, z.copy(), t)

    @property
    def n_modes(self) -> int:
        return self.gamma.shape[0]

    def particle_number(self) -> float:
        return float(np.real(np.trace(self.gamma)))

    def purity_residual(self) -> float:
        g, a = self.gamma, self.alpha
        return float(np.abs(a @ a.conj().T - g @ (np.eye(len(g)) + g)).max())

    def symmetry_residual(self) -> float:
        return float(max(np.abs(self.gamma - self.gamma.conj().T).max(),
                         np.abs(self.alpha - self.alpha.T).max()))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.gamma + self.gamma.conj().T)).min())


def pair_rhs(gamma, alpha, kernels) -> tuple[np.ndarray, np.ndarray]:
    h, K = kernels.h, kernels.K2
    if gamma.shape != h.shape or alpha.shape != h.shape:
        raise ValueError(f"pair shapes {gamma.shape}, {alpha.shape} do not match kernels {h.shape}")
    Kd = K.conj().T
    dg = h @ gamma - gamma @ h + K @ alpha.conj().T - alpha @ Kd
    da = h @ alpha + alpha @ h.T + K + K @ gamma.T + gamma @ K
    return -1j * dg, -1j * da


def kinetic_diagnostic(pair: PairState, basis: ModeBasis) -> float:
    """<dGamma(1 - Laplace)> = tr((1 + |2 pi k/L|^2) gamma)."""
    return float(np.real(np.sum((1 + basis.kinetic) * np.diag(pair.gamma))))


@dataclass(eq=False)
class PairTrajectory:
    times: np.ndarray
    gammas: np.ndarray = field(repr=False)
    alphas: np.ndarray = field(repr=False)

    def state(self, i: int) -> PairState:
        return PairState(self.gammas[i].copy(), self.alphas[i].copy(), float(self.times[i]))

    def __len__(self):
        return len(self.times)

    def save(self, path) -> None:
        meta = {"format": "bogodyn.pair", "version": 1,
                "convention": "gamma[j,k]=<a_k^* a_j>, alpha[j,k]=<a_j a_k>"}
        np.savez(path, meta=json.dumps(meta), times=self.times, gammas=self.gammas,
                 alphas=self.alphas)

    @classmethod
    def load(cls, path) -> "PairTrajectory":
        with np.load(path, allow_pickle=False) as f:
            if json.loads(str(f["meta"])).get("format") != "bogodyn.pair":
                raise ValueError(f"{path}: not a pair trajectory file")
            return cls(f["times"].copy(), f["gammas"].copy(), f["alphas"].copy())

    def summary_rows(self, basis: ModeBasis):
        for i in range(len(self)):
            s = self.state(i)
            yield {"t": s.t, "trace_gamma": s.particle_number(),
                   "kinetic": kinetic_diagnostic(s, basis),
                   "purity_residual": s.purity_residual()}

    def to_csv(self, path, basis: ModeBasis) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, ["t", "trace_gamma", "kinetic", "purity_residual"])
            w.writeheader()
            for row in self.summary_rows(basis):
                w.writerow({k: repr(float(v)) for k, v in row.items()})


def _pair_integrate(g0, a0, ktraj, t0, t_final, dt):
    n = max(1, int(round(abs(t_final - t0) / dt)))
    h = (t_final - t0) / n
    times = t0 + h * np.arange(n + 1)
    gs = np.empty((n + 1,) + g0.shape, complex)
    as_ = np.empty_like(gs)
    g, a = g0, a0
    gs[0], as_[0] = g, a

    def f(t, g, a):
        return pair_rhs(g, a, ktraj.kernels(t))

    for i in range(n):
        t = times[i]
        k1 = f(t, g, a)
        k2 = f(t + h / 2, g + h / 2 * k1[0], a + h / 2 * k1[1])
        k3 = f(t + h / 2, g + h / 2 * k2[0], a + h / 2 * k2[1])
        k4 = f(t + h, g + h * k3[0], a + h * k3[1])
        g = g + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        a = a + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        gs[i + 1], as_[i + 1] = g, a
    return times, gs, as_


def evolve_pair(pair0: PairState, ktraj, t_final: float, dt: float = 1e-3,
                step_tol: float | None = 1e-8) -> PairTrajectory:
    """RK4 integration of the (gamma, alpha) system with kernels rebuilt at every stage."""
    hart = getattr(ktraj, "hartree", None)
    if hart is not None and t_final > hart.t_final + 1e-12:
        raise ValueError(f"Hartree trajectory ends at {hart.t_final}, requested {t_final}")
    g0 = np.asarray(pair0.gamma, complex)
    a0 = np.asarray(pair0.alpha, complex)
    times, gs, as_ = _pair_integrate(g0, a0, ktraj, pair0.t, t_final, dt)
    if step_tol is not None and t_final != pair0.t:
        _, gf, af = _pair_integrate(g0, a0, ktraj, pair0.t, t_final, dt / 2)
        gap = max(np.abs(gf[-1] - gs[-1]).max(), np.abs(af[-1] - as_[-1]).max())
        if gap > step_tol:
            raise StepSizeError(f"pair halved-dt re-run differs by {gap:.3g} > {step_tol:g}")
    return PairTrajectory(times, gs, as_)


# --------------------------------------------------------------------------
# quadratic Hamiltonians: ground-state bound and exact diagonalization


@dataclass
class GSEBound:
    bound: float
    hs_norm: float
    margin: float


def gse_lower_bound(H, K, tol: float = 1e-10) -> GSEBound:
    """Lower bound -1/2 ||H^(-1/2) K||_HS^2 on dGamma(H) + 1/2 (K a*a* + h.c.).

    The premise K conj(H)^-1 K^dagger <= H is checked; its smallest eigenvalue
    gap is returned as ``margin`` and a violation raises :class:`InadmissibleError`.
    """
    H = np.atleast_2d(np.asarray(H, complex))
    K = np.atleast_2d(np.asarray(K, complex))
    if np.abs(H - H.conj().T).max() > 1e-10 * max(1.0, np.abs(H).max()):
        raise ValueError("H is not Hermitian")
    if np.abs(K - K.T).max() > 1e-10 * max(1.0, np.abs(K).max()):
        raise ValueError("K is not symmetric")
    evals = np.linalg.eigvalsh(H)
    if evals.min() <= 0:
        raise ValueError(f"H is not positive definite (min eigenvalue {evals.min():.3g})")
    S = K @ np.linalg.solve(H.conj(), K.conj().T)
    margin = float(np.linalg.eigvalsh(H - 0.5 * (S + S.conj().T)).min())
    if margin < -tol:
        raise InadmissibleError(f"K H^-1 K* <= H violated by {-margin:.3g}", margin)
    hs2 = float(np.real(np.trace(K.conj().T @ np.linalg.solve(H, K))))
    return GSEBound(bound=-0.5 * hs2, hs_norm=float(np.sqrt(max(hs2, 0.0))), margin=margin)


def _bogoliubov_modes(H, K):
    """Positive frequencies and lowering-operator coefficients (p, q) for each mode."""
    M = H.shape[0]
    Hp = np.block([[H.conj(), -K.conj()], [-K, H]])
    Hp = 0.5 * (Hp + Hp.conj().T)
    ev, U = np.linalg.eigh(Hp)
    if ev.min() <= 0:
        raise InadmissibleError("quadratic Hamiltonian is not positive definite", float(ev.min()))
    root = (U * np.sqrt(ev)) @ U.conj().T
    sz = np.concatenate([np.ones(M), -np.ones(M)])
    S = root @ (sz[:, None] * root)
    S = 0.5 * (S + S.conj().T)
    w, Y = np.linalg.eigh(S)
    pos = w > 0
    X = sz[:, None] * (root @ Y[:, pos])
    return w[pos], X[:M], X[M:]


def bogoliubov_ground_energy(H, K) -> float:
    """Exact ground energy 1/2 (sum omega - tr H) via symplectic diagonalization."""
    H = np.atleast_2d(np.asarray(H, complex))
    K = np.atleast_2d(np.asarray(K, complex))
    w, _, _ = _bogoliubov_modes(H, K)
    return 0.5 * (float(np.sum(w)) - float(np.real(np.trace(H))))


def pairing_matrix_of_ground_state(H, K) -> np.ndarray:
    """Symmetric Z with ground state proportional to exp(1/2 a* Z a*)|vac>."""
    H = np.atleast_2d(np.asarray(H, complex))
    K = np.atleast_2d(np.asarray(K, complex))
    _, P, Qm = _bogoliubov_modes(H, K)
    Z = -np.linalg.solve(P.T, Qm.T)
    return 0.5 * (Z + Z.T)


def pair_from_thouless(Z) -> PairState:
    Z = np.atleast_2d(np.asarray(Z, complex))
    M = Z.shape[0]
    one_plus_gamma = np.linalg.inv(np.eye(M) - Z @ Z.conj())
    gamma = one_plus_gamma - np.eye(M)
    gamma = 0.5 * (gamma + gamma.conj().T)
    alpha = (np.eye(M) + gamma) @ Z
    return PairState(gamma, 0.5 * (alpha + alpha.T))


def ground_state_pair(H, K) -> PairState:
    return pair_from_thouless(pairing_matrix_of_ground_state(H, K))


def excitation_ground_state_pair(kernels: KernelSet, shift: float = 0.0) -> PairState:
    """Ground state of dGamma(h + shift) + pairing(K2) restricted to the excitation space."""
    Q, u = kernels.Q, kernels.u
    M = len(u)
    # orthonormal basis of range(Q): complete u to a unitary
    V = condensate_frame(u)
    c = int(np.argmax(np.abs(u)))
    B = np.delete(V, c, axis=1)
    Hp = B.conj().T @ (kernels.h + shift * np.eye(M)) @ B
    Kp = B.conj().T @ kernels.K2 @ B.conj()
    Zp = pairing_matrix_of_ground_state(0.5 * (Hp + Hp.conj().T), 0.5 * (Kp + Kp.T))
    return pair_from_thouless(B @ Zp @ B.T)


def condensate_frame(u: np.ndarray, slot: int | None = None) -> np.ndarray:
    """Unitary whose column ``slot`` equals ``u`` (default: the largest entry of u)."""
    u = np.asarray(u, complex)
    M = len(u)
    if slot is None:
        slot = int(np.argmax(np.abs(u)))
    cols = [u] + [np.eye(M)[j] for j in range(M) if j != slot]
    Qr, R = np.linalg.qr(np.column_stack(cols))
    Qr = Qr * (np.diag(R) / np.abs(np.diag(R)))[None, :]
    out = np.empty_like(Qr)
    order = [slot] + [j for j in range(M) if j != slot]
    out[:, order] = Qr
    return out


def random_admissible(rng: np.random.Generator, n_modes: int, fill=(0.1, 0.95)):
    """Random Hermitian H > 0 and symmetric K with K conj(H)^-1 K^dagger <= H."""
    A = rng.normal(size=(n_modes, n_modes)) + 1j * rng.normal(size=(n_modes, n_modes))
    H = A @ A.conj().T / n_modes + rng.uniform(0.2, 1.0) * np.eye(n_modes)
    B = rng.normal(size=(n_modes, n_modes)) + 1j * rng.normal(size=(n_modes, n_modes))
    K = B + B.T
    Hm = linalg.inv(linalg.sqrtm(H))
    S = Hm @ K @ np.linalg.solve(H.conj(), K.conj().T) @ Hm
    smax = 1 / np.sqrt(np.linalg.eigvalsh(0.5 * (S + S.conj().T)).max())
    K = K * smax * rng.uniform(*fill)
    return 0.5 * (H + H.conj().T), K
