import math

import numpy as np
import pytest
from scipy import integrate

from bogodyn import hartree, spectral
from bogodyn.errors import NotNormalizedError, StepSizeError

L = 2 * math.pi


@pytest.fixture(scope="module")
def setup():
    b = spectral.build_mode_basis(1, L, 2)
    w = spectral.scaled_potential_fourier(spectral.CosineBump(1, 1), 0.0, 8, b)
    return b, w


@pytest.fixture(scope="module")
def zero(setup):
    b, _ = setup
    return spectral.scaled_potential_fourier(spectral.ZeroPotential(), 0.0, 8, b)


def test_mu_constant_condensate(setup):
    b, w = setup
    assert hartree.compute_mu(b.constant_mode(), w) == pytest.approx(1 / (2 * math.pi), abs=1e-14)


def test_mu_zero_potential(setup, zero):
    b, _ = setup
    assert hartree.compute_mu(hartree.two_mode_condensate(b, 0.3), zero) == 0.0


def test_mu_two_mode_against_double_quadrature(setup):
    b, w = setup
    u = hartree.two_mode_condensate(b, 0.3)
    prof = spectral.CosineBump(1, 1)

    def rho(x):
        return abs(b.evaluate(u, np.array([[x]]))[0]) ** 2

    # (w * rho) is a trigonometric polynomial, so the outer periodic rule is exact
    xs = np.linspace(0, L, 32, endpoint=False)
    inner = [integrate.quad(lambda z: float(prof(z)) * rho(x - z), -1, 1, epsabs=1e-13)[0]
             for x in xs]
    ref = 0.5 * sum(rho(x) * v for x, v in zip(xs, inner)) * L / 32
    assert hartree.compute_mu(u, w) == pytest.approx(ref, abs=1e-8)


def test_mu_requires_normalized(setup):
    b, w = setup
    with pytest.raises(NotNormalizedError):
        hartree.compute_mu(2 * b.constant_mode(), w)


def test_rhs_constant_condensate(setup):
    b, w = setup
    u = b.constant_mode()
    np.testing.assert_allclose(hartree.hartree_rhs(u, w), -1j * (2 / (2 * L)) * u, atol=1e-14)


def test_rhs_free_single_mode(setup, zero):
    b, _ = setup
    u = b.unit_vector([2])
    np.testing.assert_allclose(hartree.hartree_rhs(u, zero), -1j * 4 * u, atol=1e-14)


def test_rhs_is_tangent(setup):
    b, w = setup
    rng = np.random.default_rng(1)
    u = rng.normal(size=5) + 1j * rng.normal(size=5)
    u /= np.linalg.norm(u)
    assert abs(np.vdot(u, hartree.hartree_rhs(u, w)).real) < 1e-12


def test_constant_condensate_phase_solution(setup):
    b, w = setup
    tr = hartree.evolve_hartree(b.constant_mode(), w, 1.0)
    for i in (100, 500, 1000):
        t = tr.times[i]
        np.testing.assert_allclose(tr.u[i], np.exp(-1j * t * 2 / (2 * L)) * b.constant_mode(),
                                   atol=1e-10)


def test_free_flow(setup, zero):
    b, _ = setup
    rng = np.random.default_rng(2)
    u0 = rng.normal(size=5) + 1j * rng.normal(size=5)
    u0 /= np.linalg.norm(u0)
    tr = hartree.evolve_hartree(u0, zero, 0.7)
    np.testing.assert_allclose(tr.u[-1], np.exp(-0.7j * b.kinetic) * u0, atol=1e-10)


def test_conservation_and_scheme_agreement(setup):
    b, w = setup
    u0 = hartree.two_mode_condensate(b, 0.3)
    rk = hartree.evolve_hartree(u0, w, 1.0, scheme="rk4")
    st = hartree.evolve_hartree(u0, w, 1.0, scheme="strang")
    assert np.max(np.abs(np.linalg.norm(rk.u, axis=1) ** 2 - 1)) <= 1e-8 * 2
    e = np.array([hartree.hartree_energy(u, w) for u in rk.u])
    assert np.max(np.abs(e - e[0])) / abs(e[0]) <= 1e-6
    assert np.linalg.norm(rk.u[-1] - st.u[-1]) <= 1e-6


def test_strang_is_second_order(setup):
    b, w = setup
    u0 = hartree.two_mode_condensate(b, 0.3)
    ref = hartree.evolve_hartree(u0, w, 0.5, dt=1e-3, scheme="rk4").u[-1]
    errs = [np.linalg.norm(hartree.evolve_hartree(u0, w, 0.5, dt=dt, scheme="strang",
                                                  step_tol=None).u[-1] - ref)
            for dt in (0.02, 0.01)]
    assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.2)


def test_time_reversal(setup):
    b, w = setup
    u0 = hartree.two_mode_condensate(b, 0.3)
    fwd = hartree.evolve_hartree(u0, w, 1.0)
    back = hartree.evolve_hartree(fwd.u[-1] / np.linalg.norm(fwd.u[-1]), w, -1.0)
    assert np.linalg.norm(back.u[-1] - u0) <= 1e-6


def test_gauge_consistency(setup):
    b, w = setup
    u0 = hartree.two_mode_condensate(b, 0.3)
    a = hartree.evolve_hartree(u0, w, 1.0, include_mu=True)
    c = hartree.evolve_hartree(u0, w, 1.0, include_mu=False)
    assert np.max(np.abs(np.abs(a.u) - np.abs(c.u))) <= 1e-8
    phase = np.trapezoid(a.mu, a.times) if hasattr(np, "trapezoid") else np.trapz(a.mu, a.times)
    np.testing.assert_allclose(a.u[-1], np.exp(1j * phase) * c.u[-1], atol=1e-7)


def test_step_rejection(setup):
    b, w = setup
    with pytest.raises(StepSizeError):
        hartree.evolve_hartree(hartree.two_mode_condensate(b, 0.3), w, 1.0, dt=0.2, step_tol=1e-12)
    with pytest.raises(ValueError):
        hartree.evolve_hartree(b.constant_mode(), w, 1.0, scheme="euler")
    with pytest.raises(ValueError):
        hartree.evolve_hartree(b.constant_mode(), w, 1.0, dt=0)


def test_interpolation(setup):
    b, w = setup
    u0 = hartree.two_mode_condensate(b, 0.3)
    coarse = hartree.evolve_hartree(u0, w, 1.0, dt=1e-2, step_tol=None)
    fine = hartree.evolve_hartree(u0, w, 1.0, dt=1e-3)
    assert np.linalg.norm(coarse.at(0.375) - fine.at(0.375)) < 1e-8
    np.testing.assert_array_equal(coarse.at(coarse.times[3]), coarse.u[3])
    with pytest.raises(ValueError):
        coarse.at(1.5)


def test_export_round_trip(setup, tmp_path):
    b, w = setup
    tr = hartree.evolve_hartree(hartree.two_mode_condensate(b, 0.3), w, 0.1, dt=1e-2)
    tr.save(tmp_path / "h.npz")
    back = hartree.HartreeTrajectory.load(tmp_path / "h.npz")
    np.testing.assert_array_equal(back.u, tr.u)
    np.testing.assert_array_equal(back.mu, tr.mu)
    assert back.basis.is_compatible(b)
    tr.to_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "t,mode_index,re_u,im_u,mu"
    assert len(lines) == 1 + len(tr) * 5
    t, k, re, im, mu = lines[7].split(",")
    assert complex(float(re), float(im)) == tr.u[1][1]
