"""Galerkin-truncated Hartree equation for the condensate.

    i du/dt = (-Laplace + w_N * |u|^2 - mu_N) u,   mu_N = 1/2 <|u|^2, w_N * |u|^2>
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import spectral
from .errors import NotNormalizedError, StepSizeError
from .spectral import ModeBasis, PotentialFourier

SCHEMES = ("rk4", "strang")
DEFAULT_DT = 1e-3
DEFAULT_STEP_TOL = {"rk4": 1e-8, "strang": 1e-5}


@dataclass
class CondensateState:
    t: float
    u: np.ndarray
    mu: float


def _check_normalized(u, tol=1e-8):
    n = np.linalg.norm(u)
    if abs(n - 1) > tol:
        raise NotNormalizedError(f"condensate norm {n!r} deviates from 1 by more than {tol}")


def mean_field_potential(u: np.ndarray, w_hat: PotentialFourier) -> np.ndarray:
    """Difference-grid coefficients of w_N * |u|^2."""
    basis = w_hat.basis
    return spectral.convolve_density(spectral.density_coefficients(u, basis), w_hat, basis)


def _mu(u, v_hat, basis):
    rho = spectral.density_coefficients(u, basis)
    return 0.5 * float(np.real(np.vdot(rho, v_hat)))


def compute_mu(u: np.ndarray, w_hat: PotentialFourier) -> float:
    _check_normalized(u)
    return _mu(u, mean_field_potential(u, w_hat), w_hat.basis)


def hartree_energy(u: np.ndarray, w_hat: PotentialFourier) -> float:
    """<u, -Laplace u> + 1/2 <|u|^2, w_N * |u|^2>."""
    kin = float(np.sum(w_hat.basis.kinetic * np.abs(u) ** 2))
    return kin + _mu(u, mean_field_potential(u, w_hat), w_hat.basis)


def hartree_rhs(u: np.ndarray, w_hat: PotentialFourier, include_mu: bool = True) -> np.ndarray:
    basis = w_hat.basis
    v_hat = mean_field_potential(u, w_hat)
    out = basis.kinetic * u + spectral.multiply(v_hat, u, basis)
    if include_mu:
        out = out - _mu(u, v_hat, basis) * u
    return -1j * out


@dataclass(eq=False)
class HartreeTrajectory:
    basis: ModeBasis
    times: np.ndarray
    u: np.ndarray = field(repr=False)
    du: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    scheme: str = "rk4"
    dt: float = DEFAULT_DT

    def __len__(self):
        return len(self.times)

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    def state(self, i: int) -> CondensateState:
        return CondensateState(float(self.times[i]), self.u[i].copy(), float(self.mu[i]))

    def _locate(self, t):
        t0, t1 = self.times[0], self.times[-1]
        lo, hi = min(t0, t1), max(t0, t1)
        span = hi - lo
        if not (lo - 1e-12 * max(1.0, span) <= t <= hi + 1e-12 * max(1.0, span)):
            raise ValueError(f"time {t} outside trajectory span [{lo}, {hi}]")
        h = self.times[1] - self.times[0] if len(self) > 1 else 1.0
        i = int(np.clip(np.floor((t - t0) / h), 0, max(len(self) - 2, 0)))
        return i, h

    def at(self, t: float) -> np.ndarray:
        """Cubic Hermite interpolation of u(t) between stored steps."""
        if len(self) == 1:
            return self.u[0].copy()
        i, h = self._locate(t)
        s = (t - self.times[i]) / h
        if abs(s) < 1e-13:
            return self.u[i].copy()
        if abs(s - 1) < 1e-13:
            return self.u[i + 1].copy()
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return (h00 * self.u[i] + h10 * h * self.du[i]
                + h01 * self.u[i + 1] + h11 * h * self.du[i + 1])

    def sample(self, times) -> list[CondensateState]:
        out = []
        for t in times:
            i = int(np.argmin(np.abs(self.times - t)))
            if abs(self.times[i] - t) < 1e-12:
                out.append(self.state(i))
            else:
                u = self.at(t)
                out.append(CondensateState(float(t), u, np.nan))
        return out

    # -- export -----------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mode_index", "re_u", "im_u", "mu"])
            for t, u, mu in zip(self.times, self.u, self.mu):
                for k, c in enumerate(u):
                    w.writerow([repr(float(t)), k, repr(float(c.real)), repr(float(c.imag)),
                                repr(float(mu))])

    def save(self, path) -> None:
        meta = {"format": "bogodyn.hartree", "version": 1, "d": self.basis.d, "L": self.basis.L,
                "kmax": self.basis.kmax, "scheme": self.scheme, "dt": self.dt}
        np.savez(path, meta=json.dumps(meta), times=self.times, u=self.u, du=self.du, mu=self.mu)

    @classmethod
    def load(cls, path) -> "HartreeTrajectory":
        with np.load(path, allow_pickle=False) as f:
            meta = json.loads(str(f["meta"]))
            if meta.get("format") != "bogodyn.hartree":
                raise ValueError(f"{path}: not a Hartree trajectory file")
            basis = spectral.build_mode_basis(meta["d"], meta["L"], meta["kmax"])
            return cls(basis, f["times"].copy(), f["u"].copy(), f["du"].copy(), f["mu"].copy(),
                       meta["scheme"], meta["dt"])


def _rk4_step(u, h, rhs):
    k1 = rhs(u)
    k2 = rhs(u + 0.5 * h * k1)
    k3 = rhs(u + 0.5 * h * k2)
    k4 = rhs(u + h * k3)
    return u + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def _strang_step(u, h, w_hat, include_mu):
    basis = w_hat.basis
    half_kin = np.exp(-0.5j * h * basis.kinetic)

    def generator(v):
        v_hat = mean_field_potential(v, w_hat)
        G = spectral.multiplication_matrix(v_hat, basis)
        if include_mu:
            G = G - _mu(v, v_hat, basis) * np.eye(basis.n_modes)
        return 0.5 * (G + G.conj().T)

    u = half_kin * u
    mid = linalg.expm(-0.5j * h * generator(u)) @ u
    u = linalg.expm(-1j * h * generator(mid)) @ u
    return half_kin * u


def _integrate(u0, w_hat, t_final, dt, scheme, include_mu):
    n = max(1, int(round(abs(t_final) / dt)))
    h = t_final / n
    rhs = lambda v: hartree_rhs(v, w_hat, include_mu)  # noqa: E731
    us = np.empty((n + 1, len(u0)), dtype=complex)
    us[0] = u0
    u = u0
    for i in range(n):
        if scheme == "rk4":
            u = _rk4_step(u, h, rhs)
        else:
            u = _strang_step(u, h, w_hat, include_mu)
        us[i + 1] = u
    return np.linspace(0.0, t_final, n + 1), us, h


def evolve_hartree(u0, w_hat: PotentialFourier, t_final: float, dt: float = DEFAULT_DT,
                   scheme: str = "rk4", include_mu: bool = True,
                   step_tol: float | None | str = "auto") -> HartreeTrajectory:
    """Integrate the Hartree equation from ``u0`` to ``t_final`` (either sign).

    Every macro step is stored. With ``step_tol`` set, a second run at ``dt/2``
    must agree at ``t_final`` within ``step_tol`` or :class:`StepSizeError` is raised.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    u0 = np.asarray(u0, dtype=complex)
    _check_normalized(u0)
    times, us, h = _integrate(u0, w_hat, t_final, dt, scheme, include_mu)
    if step_tol == "auto":
        step_tol = DEFAULT_STEP_TOL[scheme]
    if step_tol is not None and t_final != 0:
        _, fine, _ = _integrate(u0, w_hat, t_final, dt / 2, scheme, include_mu)
        gap = float(np.linalg.norm(fine[-1] - us[-1]))
        if gap > step_tol:
            raise StepSizeError(f"halved-dt re-run differs by {gap:.3g} > {step_tol:g} (dt={dt:g})")
    du = np.array([hartree_rhs(u, w_hat, include_mu) for u in us])
    basis = w_hat.basis
    mus = np.array([_mu(u, mean_field_potential(u, w_hat), basis) for u in us])
    return HartreeTrajectory(basis, times, us, du, mus, scheme, abs(h))


# --------------------------------------------------------------------------
# initial data


def constant_condensate(basis: ModeBasis) -> np.ndarray:
    return basis.constant_mode()


def two_mode_condensate(basis: ModeBasis, epsilon: float = 0.2, k=1) -> np.ndarray:
    """Normalized (e_0 + epsilon e_k); ``k`` is a momentum (int for d=1)."""
    kv = np.atleast_1d(np.asarray(k, dtype=int))
    if kv.size == 1:
        kv = np.concatenate([kv, np.zeros(basis.d - 1, dtype=int)])
    u = basis.constant_mode() + epsilon * basis.unit_vector(kv)
    return u / np.linalg.norm(u)
