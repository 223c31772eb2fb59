"""Plane-wave mode basis on the torus and the scaled two-body interaction.

Conventions used throughout the package:

* The one-body space is spanned by ``e_k(x) = L**(-d/2) * exp(2j*pi*k.x/L)`` with
  integer ``k`` satisfying ``max|k_i| <= kmax``.  A state is stored as its
  coefficient vector in this basis.
* Momenta are ordered lexicographically over ``range(-kmax, kmax+1)**d`` so the
  coefficient vector reshapes (C order) to a ``(2*kmax+1,)*d`` grid. The zero
  mode sits at index ``(M - 1) // 2``.
* The Fourier transform of a potential is the plain integral
  ``w_hat(q) = int w(x) exp(-2j*pi*q.x/L) dx``; then
  ``(w * f)_q = w_hat(q) * f_q`` for orthonormal coefficients ``f_q``.
* Functions with doubled bandwidth (densities, potentials) live on the
  difference grid ``max|q_i| <= 2*kmax`` with the centre at offset ``2*kmax``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, signal, special

from .errors import BasisMismatchError, BudgetExceededError, QuadratureError

DEFAULT_MODE_BUDGET = 2_000_000
DEFAULT_TENSOR_BUDGET = 20_000_000
QUAD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ModeBasis:
    d: int
    L: float
    kmax: int
    momenta: np.ndarray = field(repr=False)
    zero_index: int

    @property
    def n_modes(self) -> int:
        return self.momenta.shape[0]

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return (2 * self.kmax + 1,) * self.d

    @property
    def diff_shape(self) -> tuple[int, ...]:
        return (4 * self.kmax + 1,) * self.d

    @cached_property
    def kinetic(self) -> np.ndarray:
        """Eigenvalues |2 pi k / L|^2 of -Laplace on each mode."""
        return np.sum((2 * np.pi * self.momenta / self.L) ** 2, axis=1)

    @cached_property
    def diff_momenta(self) -> np.ndarray:
        r = range(-2 * self.kmax, 2 * self.kmax + 1)
        return np.array(list(itertools.product(r, repeat=self.d)), dtype=np.int64)

    def is_compatible(self, other: "ModeBasis") -> bool:
        return (
            self is other
            or (self.d == other.d and self.kmax == other.kmax and self.L == other.L)
        )

    def check(self, other: "ModeBasis") -> None:
        if not self.is_compatible(other):
            raise BasisMismatchError(f"incompatible mode bases {self} and {other}")

    def mode_index(self, k) -> int:
        k = np.asarray(k, dtype=np.int64).reshape(self.d)
        if np.any(np.abs(k) > self.kmax):
            raise KeyError(f"momentum {tuple(k)} outside cutoff {self.kmax}")
        idx = 0
        for ki in k:
            idx = idx * (2 * self.kmax + 1) + int(ki) + self.kmax
        return idx

    def unit_vector(self, k) -> np.ndarray:
        v = np.zeros(self.n_modes, dtype=complex)
        v[self.mode_index(k)] = 1.0
        return v

    def constant_mode(self) -> np.ndarray:
        return self.unit_vector(np.zeros(self.d, dtype=int))

    def evaluate(self, coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Position-space values of a coefficient vector at points ``x`` (shape (P, d))."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.d:
            x = x.reshape(-1, self.d)
        phases = np.exp(2j * np.pi * (x @ self.momenta.T) / self.L)
        return (phases @ np.asarray(coeffs)) * self.L ** (-self.d / 2)

    def to_grid(self, coeffs: np.ndarray) -> np.ndarray:
        return np.asarray(coeffs).reshape(self.grid_shape)


def build_mode_basis(d: int, L: float, kmax: int, budget: int = DEFAULT_MODE_BUDGET) -> ModeBasis:
    if d < 1 or kmax < 0 or not L > 0:
        raise ValueError(f"need d >= 1, L > 0, kmax >= 0; got d={d}, L={L}, kmax={kmax}")
    n = (2 * kmax + 1) ** d
    if d * n > budget:
        raise BudgetExceededError(f"mode basis of {n} modes in d={d} exceeds budget {budget}")
    r = range(-kmax, kmax + 1)
    momenta = np.array(list(itertools.product(r, repeat=d)), dtype=np.int64).reshape(n, d)
    return ModeBasis(d=d, L=float(L), kmax=kmax, momenta=momenta, zero_index=(n - 1) // 2)


# --------------------------------------------------------------------------
# interaction profiles


def _sphere_area(d: int) -> float:
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


class CosineBump:
    """w(x) = c (1 + cos(pi |x| / R)) on |x| <= R, zero outside."""

    name = "cosine-bump"

    def __init__(self, c: float = 1.0, R: float = 1.0):
        if not (c > 0 and R > 0):
            raise ValueError("cosine-bump needs c > 0 and R > 0")
        self.c = float(c)
        self.R = float(R)

    @property
    def support(self) -> float:
        return self.R

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        return np.where(r <= self.R, self.c * (1 + np.cos(np.pi * r / self.R)), 0.0)

    def params(self) -> dict:
        return {"c": self.c, "R": self.R}

    def l1_norm(self, d: int) -> float:
        if d == 1:
            return 2 * self.c * self.R
        val, err = integrate.quad(lambda r: float(self(r)) * r ** (d - 1), 0, self.R,
                                  epsabs=1e-14, epsrel=1e-13)
        return _sphere_area(d) * val

    def transform(self, q: float, d: int) -> tuple[float, float]:
        """Radial Fourier transform at frequency ``q`` (cycles per length) and error estimate."""
        if q == 0:
            return self.l1_norm(d), 0.0
        if d == 1:
            def f(r):
                return float(self(r)) * math.cos(2 * math.pi * q * r)
            val, err = integrate.quad(f, 0, self.R, epsabs=1e-14, epsrel=1e-13, limit=400)
            return 2 * val, 2 * err
        nu = d / 2 - 1

        def g(r):
            return float(self(r)) * special.jv(nu, 2 * math.pi * q * r) * r ** (d / 2)
        val, err = integrate.quad(g, 0, self.R, epsabs=1e-14, epsrel=1e-13, limit=400)
        pref = 2 * math.pi * q ** (1 - d / 2)
        return pref * val, pref * err


class ZeroPotential:
    name = "zero"
    support = 0.0

    def __call__(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def params(self) -> dict:
        return {}

    def l1_norm(self, d: int) -> float:
        return 0.0

    def transform(self, q: float, d: int) -> tuple[float, float]:
        return 0.0, 0.0


PROFILES = {CosineBump.name: CosineBump, ZeroPotential.name: ZeroPotential}


def make_profile(name: str, **params):
    try:
        cls = PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown potential profile {name!r}; known: {sorted(PROFILES)}") from None
    return cls(**params)


@dataclass(frozen=True, eq=False)
class PotentialFourier:
    """Values of w_N_hat on the difference grid of ``basis``."""

    basis: ModeBasis
    values: np.ndarray = field(repr=False)
    l1_norm: float

    def at(self, q: np.ndarray) -> np.ndarray:
        """Lookup for integer momentum differences ``q`` of shape (..., d)."""
        q = np.asarray(q, dtype=np.int64)
        idx = tuple(np.moveaxis(q + 2 * self.basis.kmax, -1, 0))
        return self.values[idx]

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)


@dataclass(frozen=True, eq=False)
class InteractionPotential:
    profile: object
    beta: float
    N: int

    def __post_init__(self):
        if not 0 <= self.beta < 0.5:
            raise ValueError(f"beta must lie in [0, 1/2), got {self.beta}")
        if self.N < 2:
            raise ValueError(f"N must be >= 2, got {self.N}")

    def __call__(self, x):
        """Scaled potential w_N(x) = N^(d beta) w(N^beta x) for points of shape (P, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = x.shape[1]
        r = np.linalg.norm(x, axis=1) * self.N ** self.beta
        return self.N ** (d * self.beta) * self.profile(r)

    def fourier(self, basis: ModeBasis) -> PotentialFourier:
        return scaled_potential_fourier(self.profile, self.beta, self.N, basis)


def scaled_potential_fourier(profile, beta: float, N: int, basis: ModeBasis) -> PotentialFourier:
    """Fourier coefficients w_N_hat(q) = w_hat(q N^-beta) on the difference grid."""
    if N < 2:
        raise ValueError("N must be >= 2")
    support = profile.support * N ** (-beta)
    if support > basis.L / 2:
        raise ValueError(f"scaled support radius {support:g} exceeds L/2 = {basis.L / 2:g}")
    d = basis.d
    qs = basis.diff_momenta
    norms = np.linalg.norm(qs, axis=1)
    l1 = profile.l1_norm(d)
    out = np.empty(len(qs))
    cache: dict[float, float] = {}
    for i, (qv, qn) in enumerate(zip(qs, norms)):
        if qn == 0:
            out[i] = l1
            continue
        key = round(float(qn), 12)
        if key not in cache:
            val, err = profile.transform(qn * N ** (-beta) / basis.L, d)
            if not err <= QUAD_TOL:
                raise QuadratureError(f"quadrature error {err:.3g} at momentum {tuple(qv)}")
            cache[key] = val
        out[i] = cache[key]
    return PotentialFourier(basis=basis, values=out.reshape(basis.diff_shape), l1_norm=l1)


# --------------------------------------------------------------------------
# spectral products


def density_coefficients(u: np.ndarray, basis: ModeBasis) -> np.ndarray:
    """Orthonormal coefficients of |u|^2 on the difference grid."""
    U = basis.to_grid(u)
    return signal.correlate(U, U, mode="full", method="direct") * basis.L ** (-basis.d / 2)


def convolve_density(rho_hat: np.ndarray, w_hat: PotentialFourier, basis: ModeBasis) -> np.ndarray:
    """Coefficients of w_N * rho; both arrays live on the difference grid."""
    w_hat.basis.check(basis)
    rho_hat = np.asarray(rho_hat)
    if rho_hat.shape != basis.diff_shape:
        raise BasisMismatchError(f"density shape {rho_hat.shape} != {basis.diff_shape}")
    return w_hat.values * rho_hat


def multiply(v_hat: np.ndarray, u: np.ndarray, basis: ModeBasis) -> np.ndarray:
    """Galerkin projection of the product v*u onto the mode basis."""
    full = signal.convolve(v_hat, basis.to_grid(u), mode="full", method="direct")
    k = basis.kmax
    sl = tuple(slice(2 * k, 4 * k + 1) for _ in range(basis.d))
    return full[sl].reshape(-1) * basis.L ** (-basis.d / 2)


def multiplication_matrix(v_hat: np.ndarray, basis: ModeBasis) -> np.ndarray:
    """Matrix <e_j, v e_k> = L^(-d/2) v_hat(k_j - k_k)."""
    diff = basis.momenta[:, None, :] - basis.momenta[None, :, :] + 2 * basis.kmax
    return np.asarray(v_hat)[tuple(np.moveaxis(diff, -1, 0))] * basis.L ** (-basis.d / 2)


def two_body_tensor(w_hat: PotentialFourier, basis: ModeBasis,
                    budget: int = DEFAULT_TENSOR_BUDGET) -> np.ndarray:
    """W[p,q,r,s] = <e_p (x) e_q, w_N(x-y) e_r (x) e_s>.

    Equal to ``L^-d w_N_hat(p - r)`` when p + q = r + s and zero otherwise.
    """
    w_hat.basis.check(basis)
    M = basis.n_modes
    if M ** 4 > budget:
        raise BudgetExceededError(f"two-body tensor with {M}^4 entries exceeds budget {budget}")
    k = basis.momenta
    p = k[:, None, None, None, :]
    q = k[None, :, None, None, :]
    r = k[None, None, :, None, :]
    s = k[None, None, None, :, :]
    conserve = np.all(p + q == r + s, axis=-1)
    vals = w_hat.at(np.broadcast_to(p - r, (M, M, M, M, basis.d)))
    return np.where(conserve, vals, 0.0) * basis.L ** (-basis.d)
