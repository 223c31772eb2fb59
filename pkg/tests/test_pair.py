import math

import numpy as np
import pytest
from scipy import integrate, linalg
from scipy.sparse.linalg import expm_multiply

from bogodyn import fock, hartree, pair, spectral
from bogodyn.errors import InadmissibleError, NotNormalizedError, StepSizeError

L = 2 * math.pi


@pytest.fixture(scope="module")
def basis():
    return spectral.build_mode_basis(1, L, 1)


@pytest.fixture(scope="module")
def w_hat(basis):
    return spectral.scaled_potential_fourier(spectral.CosineBump(1, 1), 0.0, 8, basis)


@pytest.fixture(scope="module")
def ktraj(basis, w_hat):
    u0 = hartree.two_mode_condensate(basis, 0.3)
    return pair.KernelTrajectory(hartree.evolve_hartree(u0, w_hat, 1.0), w_hat)


def random_hk(rng, M, scale=0.3):
    A = rng.normal(size=(M, M)) + 1j * rng.normal(size=(M, M))
    B = rng.normal(size=(M, M)) + 1j * rng.normal(size=(M, M))
    return A + A.conj().T, scale * (B + B.T)


def test_kernels_zero_potential(basis):
    w0 = spectral.scaled_potential_fourier(spectral.ZeroPotential(), 0.0, 8, basis)
    ks = pair.build_kernels(hartree.two_mode_condensate(basis, 0.3), w0)
    for m in (ks.K1, ks.K2_tilde, ks.K2):
        assert not np.any(m)
    np.testing.assert_array_equal(ks.h, np.diag(basis.kinetic))


def test_pairing_kernel_constant_condensate(w_hat):
    b = spectral.build_mode_basis(1, L, 2)
    w = spectral.scaled_potential_fourier(spectral.CosineBump(1, 1), 0.0, 8, b)
    ks = pair.build_kernels(b.constant_mode(), w)
    prof = spectral.CosineBump(1, 1)
    for j in range(5):
        for k in range(5):
            kj, kk = b.momenta[j, 0], b.momenta[k, 0]
            if kj + kk != 0:
                assert ks.K2_tilde[j, k] == 0
                continue
            # int_0^L dx int_{-R}^{R} dz conj(e_j(x) e_k(x-z)) u(x) u(x-z) w(z), u = L^-1/2
            ref = integrate.quad(lambda z: float(prof(z)) * math.cos(2 * math.pi * kk * z / L),
                                 -1, 1, epsabs=1e-13)[0] / L
            assert ks.K2_tilde[j, k].real == pytest.approx(ref, abs=1e-10)
    z = b.zero_index
    assert not np.any(ks.K2[z]) and not np.any(ks.K2[:, z])
    assert ks.K2[b.mode_index([1]), b.mode_index([-1])] == pytest.approx(ks.K2_tilde[3, 1])


def test_kernel_invariants_generic(basis, w_hat):
    rng = np.random.default_rng(4)
    u = rng.normal(size=3) + 1j * rng.normal(size=3)
    ks = pair.build_kernels(u / np.linalg.norm(u), w_hat)
    assert max(ks.invariant_residuals().values()) <= 1e-12
    assert np.abs(ks.K1 - ks.K1.conj().T).max() <= 1e-14
    with pytest.raises(NotNormalizedError):
        pair.build_kernels(u, w_hat)
    with pytest.raises(ValueError):
        pair.build_kernels(np.ones(5) / math.sqrt(5), w_hat)


def test_rhs_free_quasifree_flow():
    rng = np.random.default_rng(5)
    h, _ = random_hk(rng, 3)
    p = pair.pair_from_thouless(0.2 * (lambda B: B + B.T)(rng.normal(size=(3, 3)) + 0j))
    ks = pair.StaticKernels(h, np.zeros((3, 3)))
    dg, da = pair.pair_rhs(p.gamma, p.alpha, ks.kernels(0))
    eps = 1e-5

    def flow(t):
        U = linalg.expm(-1j * h * t)
        return U @ p.gamma @ U.conj().T, U @ p.alpha @ linalg.expm(-1j * h.conj() * t)

    (gp, ap), (gm, am) = flow(eps), flow(-eps)
    np.testing.assert_allclose(dg, (gp - gm) / (2 * eps), atol=1e-9)
    np.testing.assert_allclose(da, (ap - am) / (2 * eps), atol=1e-9)


def test_rhs_vacuum_seeds_pairs():
    rng = np.random.default_rng(6)
    h, K = random_hk(rng, 3)
    z = np.zeros((3, 3), complex)
    dg, da = pair.pair_rhs(z, z, pair.StaticKernels(h, K).kernels(0))
    assert not np.any(dg)
    np.testing.assert_allclose(da, -1j * K)
    with pytest.raises(ValueError):
        pair.pair_rhs(np.zeros((2, 2)), z, pair.StaticKernels(h, K).kernels(0))


def test_rhs_matches_fock_finite_difference():
    rng = np.random.default_rng(7)
    h, K = random_hk(rng, 3, scale=0.2)
    h = h + 4 * np.eye(3)
    fb = fock.FockBasis(3, 18)
    Z = 0.05 * (lambda B: B + B.T)(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
    phi = fock.quasifree_from_thouless(Z, fb, cutoff_tol=1e-8)
    Hq = fock.assemble_quadratic((h, K), fb)
    eps = 1e-5
    plus = fock.extract_one_body(fock.FockVector(fb, expm_multiply(-1j * eps * Hq, phi.amplitudes)))
    minus = fock.extract_one_body(fock.FockVector(fb, expm_multiply(1j * eps * Hq, phi.amplitudes)))
    p0 = fock.extract_one_body(phi)
    dg, da = pair.pair_rhs(p0.gamma, p0.alpha, pair.StaticKernels(h, K).kernels(0))
    np.testing.assert_allclose(dg, (plus.gamma - minus.gamma) / (2 * eps), atol=1e-6)
    np.testing.assert_allclose(da, (plus.alpha - minus.alpha) / (2 * eps), atol=1e-6)


def test_evolve_pair_free_vacuum(basis):
    w0 = spectral.scaled_potential_fourier(spectral.ZeroPotential(), 0.0, 8, basis)
    kt = pair.KernelTrajectory(hartree.evolve_hartree(basis.constant_mode(), w0, 1.0), w0)
    tr = pair.evolve_pair(pair.PairState.vacuum(3), kt, 1.0)
    assert not np.any(tr.gammas) and not np.any(tr.alphas)


def test_evolve_pair_matches_fock(ktraj):
    pt = pair.evolve_pair(pair.PairState.vacuum(3), ktraj, 0.5)
    ft = fock.evolve_fock(fock.FockBasis(3, 12).vacuum(), ktraj, 0.5, sample_times=[0.5])
    e = fock.extract_one_body(ft.vectors[-1])
    assert np.abs(e.gamma - pt.gammas[-1]).max() <= 1e-5
    assert np.abs(e.alpha - pt.alphas[-1]).max() <= 1e-5


def test_evolve_pair_invariants(ktraj):
    p0 = pair.excitation_ground_state_pair(ktraj.kernels(0.0))
    tr = pair.evolve_pair(p0, ktraj, 1.0)
    for i in range(0, len(tr), 100):
        s = tr.state(i)
        assert s.symmetry_residual() <= 1e-10
        assert s.purity_residual() <= 1e-7 * (1 + s.t)
        assert s.min_eigenvalue() >= -1e-8
        u = ktraj.u(s.t)
        assert np.linalg.norm(s.gamma @ u) <= 1e-6
        assert np.linalg.norm(s.alpha @ u.conj()) <= 1e-6


def test_one_mode_squeezed_purity():
    r = 0.4
    p0 = pair.PairState(np.array([[math.sinh(r) ** 2]], complex),
                        np.array([[math.cosh(r) * math.sinh(r)]], complex))
    assert p0.purity_residual() <= 1e-15
    ks = pair.StaticKernels([[1.3]], [[0.0]])
    tr = pair.evolve_pair(p0, ks, 2.0, dt=1e-3)
    assert max(tr.state(i).purity_residual() for i in range(len(tr))) <= 1e-12


def test_evolve_pair_errors(ktraj):
    with pytest.raises(ValueError):
        pair.evolve_pair(pair.PairState.vacuum(3), ktraj, 2.0)
    with pytest.raises(StepSizeError):
        pair.evolve_pair(pair.PairState.vacuum(3), ktraj, 0.5, dt=0.1, step_tol=1e-14)


def test_pair_trajectory_export(ktraj, basis, tmp_path):
    tr = pair.evolve_pair(pair.PairState.vacuum(3), ktraj, 0.1, dt=1e-2)
    tr.save(tmp_path / "p.npz")
    back = pair.PairTrajectory.load(tmp_path / "p.npz")
    np.testing.assert_array_equal(back.alphas, tr.alphas)
    tr.to_csv(tmp_path / "p.csv", basis)
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "t,trace_gamma,kinetic,purity_residual"
    assert len(lines) == len(tr) + 1


def test_gse_zero_pairing():
    assert pair.gse_lower_bound(np.diag([1.0, 2.0]), np.zeros((2, 2))).bound == 0.0


def test_gse_one_mode():
    h, k = 2.0, 0.7
    b = pair.gse_lower_bound([[h]], [[k]])
    assert b.bound == pytest.approx(-k * k / (2 * h), abs=1e-15)
    assert b.hs_norm == pytest.approx(k / math.sqrt(h))
    exact = pair.bogoliubov_ground_energy([[h]], [[k]])
    assert exact == pytest.approx(0.5 * (math.sqrt(h * h - k * k) - h), abs=1e-12)
    assert exact >= b.bound
    fb = fock.FockBasis(1, 80)
    dense = np.linalg.eigvalsh(fock.assemble_quadratic(([[h]], [[k]]), fb).toarray()).min()
    assert dense == pytest.approx(exact, abs=1e-10)


def test_gse_random_three_mode_against_fock():
    rng = np.random.default_rng(8)
    H, K = pair.random_admissible(rng, 3)
    b = pair.gse_lower_bound(H, K)
    fb = fock.FockBasis(3, 16)
    lowest = np.linalg.eigvalsh(fock.assemble_quadratic((H, K), fb).toarray()).min()
    assert lowest >= b.bound
    assert lowest == pytest.approx(pair.bogoliubov_ground_energy(H, K), abs=1e-6)
    assert b.margin >= 0


def test_gse_rejects_inadmissible():
    with pytest.raises(InadmissibleError) as exc:
        pair.gse_lower_bound([[1.0]], [[1.5]])
    assert exc.value.margin < 0
    with pytest.raises(ValueError):
        pair.gse_lower_bound([[1.0, 1.0], [0.0, 1.0]], np.zeros((2, 2)))
    with pytest.raises(ValueError):
        pair.gse_lower_bound([[-1.0]], [[0.0]])


def test_ground_state_matches_dense_diagonalization():
    rng = np.random.default_rng(9)
    H, K = pair.random_admissible(rng, 2, fill=(0.5, 0.6))
    fb = fock.FockBasis(2, 40)
    ev, V = np.linalg.eigh(fock.assemble_quadratic((H, K), fb).toarray())
    phi = fock.quasifree_from_pair(pair.ground_state_pair(H, K), fb, cutoff_tol=1e-6)
    assert abs(np.vdot(V[:, 0], phi.amplitudes)) ** 2 >= 1 - 1e-6
    assert ev[0] == pytest.approx(pair.bogoliubov_ground_energy(H, K), abs=1e-8)


def test_kinetic_diagnostic(basis, ktraj):
    assert pair.kinetic_diagnostic(pair.PairState.vacuum(3), basis) == 0.0
    g = np.zeros((3, 3), complex)
    g[2, 2] = 1
    assert pair.kinetic_diagnostic(pair.PairState(g, np.zeros_like(g)), basis) == 2.0
    fb = fock.FockBasis(3, 12)
    ft = fock.evolve_fock(fb.vacuum(), ktraj, 0.5, sample_times=[0.5])
    v = ft.vectors[-1]
    fock_value = v.expect(fock.dGamma(np.diag(1 + basis.kinetic), fb)).real
    assert pair.kinetic_diagnostic(fock.extract_one_body(v), basis) == pytest.approx(fock_value,
                                                                                    abs=1e-12)
    pt = pair.evolve_pair(pair.PairState.vacuum(3), ktraj, 0.5)
    assert pair.kinetic_diagnostic(pt.state(len(pt) - 1), basis) == pytest.approx(fock_value,
                                                                                 abs=1e-6)


def test_condensate_frame():
    rng = np.random.default_rng(10)
    u = rng.normal(size=4) + 1j * rng.normal(size=4)
    u /= np.linalg.norm(u)
    for slot in (None, 2):
        V = pair.condensate_frame(u, slot)
        np.testing.assert_allclose(V.conj().T @ V, np.eye(4), atol=1e-14)
        s = int(np.argmax(np.abs(u))) if slot is None else slot
        np.testing.assert_allclose(V[:, s], u, atol=1e-14)


def test_thouless_pair_relations():
    r = 0.3
    p = pair.pair_from_thouless([[math.tanh(r)]])
    assert p.gamma[0, 0].real == pytest.approx(math.sinh(r) ** 2, abs=1e-14)
    assert p.alpha[0, 0].real == pytest.approx(math.cosh(r) * math.sinh(r), abs=1e-14)
