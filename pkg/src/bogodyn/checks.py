"""Oracle-equivalence checks shared by the ``selftest`` and ``gse-check`` commands."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import eigsh

from . import fock, hartree, nbody, pair, spectral


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.1f}s)"


@dataclass
class GSETrial:
    n_modes: int
    bound: float
    exact: float
    fock_min: float
    margin: float


@dataclass
class GSESummary:
    trials: list
    violations: int
    fock_violations: int
    min_gap: float


def fock_ground_energy(H, K, nmax: int) -> float:
    """Lowest eigenvalue of the quadratic Hamiltonian on the even-parity truncated space."""
    M = H.shape[0]
    fb = fock.FockBasis(M, nmax)
    Hq = fock.assemble_quadratic((H, K), fb)
    even = np.nonzero(fb.total % 2 == 0)[0]
    Hq = Hq[even][:, even]
    if Hq.shape[0] <= 400:
        return float(np.linalg.eigvalsh(Hq.toarray()).min())
    v0 = np.zeros(Hq.shape[0])
    v0[0] = 1.0
    return float(eigsh(Hq, k=1, which="SA", v0=v0, tol=1e-12)[0][0])


def gse_trials(seed: int, draws: int = 200, max_modes: int = 3, nmax: int = 16) -> GSESummary:
    rng = np.random.default_rng(seed)
    trials = []
    for _ in range(draws):
        M = int(rng.integers(1, max_modes + 1))
        H, K = pair.random_admissible(rng, M)
        b = pair.gse_lower_bound(H, K)
        exact = pair.bogoliubov_ground_energy(H, K)
        trials.append(GSETrial(M, b.bound, exact, fock_ground_energy(H, K, nmax), b.margin))
    viol = sum(1 for t in trials if t.exact < t.bound - 1e-12)
    fviol = sum(1 for t in trials if t.fock_min < t.bound - 1e-12)
    gap = min(t.exact - t.bound for t in trials)
    return GSESummary(trials, viol, fviol, gap)


def one_mode_gse_error(h: float = 2.0, kappa: float = 0.7) -> float:
    closed = 0.5 * (math.sqrt(h * h - kappa * kappa) - h)
    return abs(pair.bogoliubov_ground_energy([[h]], [[kappa]]) - closed)


def _timed(name, fn):
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # noqa: BLE001
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return CheckResult(name, bool(ok), detail, time.perf_counter() - t0)


def _small_setup(beta=0.0, N=8, condensate="two-mode", t=1.0):
    basis = spectral.build_mode_basis(1, 2 * math.pi, 1)
    w_hat = spectral.scaled_potential_fourier(spectral.CosineBump(1.0, 1.0), beta, N, basis)
    u0 = nbody.make_condensate(basis, condensate, 0.3)
    ht = hartree.evolve_hartree(u0, w_hat, t)
    return basis, w_hat, pair.KernelTrajectory(ht, w_hat)


def check_pair_fock(seed: int) -> tuple[bool, str]:
    _, _, kt = _small_setup()
    fb = fock.FockBasis(3, 12)
    phi0 = fock.quasifree_from_pair(pair.excitation_ground_state_pair(kt.kernels(0.0)), fb)
    p0 = fock.extract_one_body(phi0)
    times = np.linspace(0, 1, 5)
    pt = pair.evolve_pair(p0, kt, 1.0, dt=1e-3)
    ft = fock.evolve_fock(phi0, kt, 1.0, dt=5e-3, sample_times=times)
    diff, wick = 0.0, 0.0
    for t, v in zip(ft.times, ft.vectors):
        i = int(np.argmin(np.abs(pt.times - t)))
        e = fock.extract_one_body(v)
        diff = max(diff, np.abs(e.gamma - pt.gammas[i]).max() + np.abs(e.alpha - pt.alphas[i]).max())
        wick = max(wick, fock.wick_check(v).residual)
    return diff <= 1e-5 and wick <= 1e-6, f"pair/fock gap {diff:.2e}, wick residual {wick:.2e}"


def check_gse(seed: int) -> tuple[bool, str]:
    s = gse_trials(seed, draws=50)
    err = one_mode_gse_error()
    ok = s.violations == 0 and s.fock_violations == 0 and err <= 1e-10
    return ok, f"{s.violations} violations in 50 draws, min gap {s.min_gap:.2e}, 1-mode err {err:.1e}"


def check_split_join(seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        M, N = int(rng.integers(2, 5)), int(rng.integers(2, 7))
        sec = nbody.nbody_sector(M, N)
        v = rng.normal(size=sec.dim) + 1j * rng.normal(size=sec.dim)
        u = rng.normal(size=M) + 1j * rng.normal(size=M)
        psi = nbody.NBodyVector(sec, v / np.linalg.norm(v))
        d = nbody.excitation_split(psi, u / np.linalg.norm(u))
        back = nbody.excitation_join(d)
        worst = max(worst, np.linalg.norm(back.amplitudes - psi.amplitudes),
                    abs(d.total_norm2() - 1))
    return worst <= 1e-10, f"max round-trip / norm error {worst:.1e}"


def check_free_case(seed: int) -> tuple[bool, str]:
    worst = 0.0
    for N in (4, 8):
        s = nbody.ComparisonSettings(N=N, profile="zero", profile_params={},
                                     times=(0.0, 0.5, 1.0))
        worst = max(worst, max(r.error2 for r in nbody.run_comparison(s)))
    return worst <= 1e-6, f"max error^2 {worst:.1e}"


def check_residual_order(seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    basis, w_hat, kt = _small_setup(N=4)
    H = nbody.assemble_HN(4, w_hat, kt.W)
    sec = nbody.nbody_sector(3, 4)
    v = rng.normal(size=sec.dim) + 1j * rng.normal(size=sec.dim)
    probe = nbody.residual_order(0.5, kt, nbody.NBodyVector(sec, v / np.linalg.norm(v)), H)
    return abs(probe.order - 2) <= 0.2, f"finite-difference order {probe.order:.3f}"


SELFTESTS = [
    ("pair vs fock evolution", check_pair_fock),
    ("ground-state energy bound", check_gse),
    ("excitation split/join", check_split_join),
    ("free-case exactness", check_free_case),
    ("transformed-equation residual", check_residual_order),
]


def run_selftest(seed: int = 1234) -> list[CheckResult]:
    return [_timed(name, lambda fn=fn: fn(seed)) for name, fn in SELFTESTS]
