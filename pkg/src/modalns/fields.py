"""Fourier-in-theta field model and modal calculus.

A scalar ``f(r, theta, z)`` is stored as ``f_0 + sum_k (c_k cos k theta +
s_k sin k theta)`` with coefficient stacks ``cos`` and ``sin`` of shape
``(K+1, Nr, Nz)``.  Row 0 of ``sin`` exists only to keep indexing uniform
and is always zero.  Vector fields stack the cylindrical components
``(r, theta, z)`` on a leading axis of length 3.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .grid import MeridianGrid, ddr, ddz, parity_table

R, T, Z = 0, 1, 2
COMPONENTS = ("r", "theta", "z")


class ParityClass(Enum):
    GENERAL = "General"
    COS_MERIDIAN_SIN_SWIRL = "CosMeridianSinSwirl"


def _check_stack(grid: MeridianGrid, a: np.ndarray, lead: tuple[int, ...]) -> None:
    if a.ndim != len(lead) + 3 or a.shape[:len(lead)] != lead or a.shape[-2:] != grid.shape:
        raise ValueError(f"coefficient stack of shape {a.shape} does not match grid {grid.shape}")


@dataclass(frozen=True, eq=False)
class ModalScalarField:
    grid: MeridianGrid
    cos: np.ndarray
    sin: np.ndarray

    def __post_init__(self):
        _check_stack(self.grid, self.cos, ())
        if self.sin.shape != self.cos.shape:
            raise ValueError("cos and sin stacks must share a shape")
        if np.any(self.sin[0]):
            raise ValueError("mode 0 has no sin coefficient")

    @property
    def K(self) -> int:
        return self.cos.shape[0] - 1

    @classmethod
    def zeros(cls, grid: MeridianGrid, K: int) -> ModalScalarField:
        return cls(grid, grid.zeros(K + 1), grid.zeros(K + 1))

    def __add__(self, o):
        return ModalScalarField(self.grid, self.cos + o.cos, self.sin + o.sin)

    def __sub__(self, o):
        return ModalScalarField(self.grid, self.cos - o.cos, self.sin - o.sin)

    def __neg__(self):
        return ModalScalarField(self.grid, -self.cos, -self.sin)

    def __mul__(self, a: float):
        return ModalScalarField(self.grid, a * self.cos, a * self.sin)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class ModalVectorField:
    """Velocity-like field with components ``(r, theta, z)``."""

    grid: MeridianGrid
    cos: np.ndarray
    sin: np.ndarray

    def __post_init__(self):
        _check_stack(self.grid, self.cos, (3,))
        if self.sin.shape != self.cos.shape:
            raise ValueError("cos and sin stacks must share a shape")
        if np.any(self.sin[:, 0]):
            raise ValueError("mode 0 has no sin coefficient")

    @property
    def K(self) -> int:
        return self.cos.shape[1] - 1

    @classmethod
    def zeros(cls, grid: MeridianGrid, K: int) -> ModalVectorField:
        return cls(grid, grid.zeros(3, K + 1), grid.zeros(3, K + 1))

    @classmethod
    def from_components(cls, r: ModalScalarField, theta: ModalScalarField,
                        z: ModalScalarField) -> ModalVectorField:
        return cls(r.grid, np.stack([r.cos, theta.cos, z.cos]),
                   np.stack([r.sin, theta.sin, z.sin]))

    def component(self, i: int) -> ModalScalarField:
        return ModalScalarField(self.grid, self.cos[i], self.sin[i])

    def with_modes(self, K: int) -> ModalVectorField:
        """Truncate or zero-pad to ``K`` theta-modes."""
        c, s = self.grid.zeros(3, K + 1), self.grid.zeros(3, K + 1)
        n = min(K, self.K) + 1
        c[:, :n], s[:, :n] = self.cos[:, :n], self.sin[:, :n]
        return ModalVectorField(self.grid, c, s)

    def copy(self) -> ModalVectorField:
        return ModalVectorField(self.grid, self.cos.copy(), self.sin.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.cos).all() and np.isfinite(self.sin).all())

    def __add__(self, o):
        return ModalVectorField(self.grid, self.cos + o.cos, self.sin + o.sin)

    def __sub__(self, o):
        return ModalVectorField(self.grid, self.cos - o.cos, self.sin - o.sin)

    def __neg__(self):
        return ModalVectorField(self.grid, -self.cos, -self.sin)

    def __mul__(self, a: float):
        return ModalVectorField(self.grid, a * self.cos, a * self.sin)

    __rmul__ = __mul__


@dataclass(frozen=True)
class NormReport:
    l2: float
    h1dot: float
    h1axi: float
    linf: float
    divmax: float

    def as_row(self) -> list[float]:
        return [self.l2, self.h1dot, self.h1axi, self.linf, self.divmax]


# --- quadrature -----------------------------------------------------------

def mode_weights(K: int) -> np.ndarray:
    """Parseval factors: ``2*pi`` for mode 0 and ``pi`` for k >= 1."""
    w = np.full(K + 1, np.pi)
    w[0] = 2.0 * np.pi
    return w


def cell_weights(grid: MeridianGrid) -> np.ndarray:
    """Midpoint rule ``r dr dz`` on the half-offset grid, shape ``(Nr, 1)``."""
    return grid.rr * (grid.dr * grid.dz)


def mode_energies(grid: MeridianGrid, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    """Squared L2 norm carried by each theta-mode of ``(..., K+1, Nr, Nz)``."""
    K = cos.shape[-3] - 1
    dens = (cos * cos + sin * sin) * cell_weights(grid)
    per_mode = dens.sum(axis=(-2, -1))
    while per_mode.ndim > 1:
        per_mode = per_mode.sum(axis=0)
    return mode_weights(K) * per_mode


def energy_slots(grid: MeridianGrid, cos: np.ndarray, sin: np.ndarray) -> float:
    """Squared L2 norm of a modal stack ``(..., K+1, Nr, Nz)``."""
    return float(mode_energies(grid, cos, sin).sum())


def inner(a: ModalVectorField, b: ModalVectorField) -> float:
    w = cell_weights(a.grid)
    per_mode = ((a.cos * b.cos + a.sin * b.sin) * w).sum(axis=(-2, -1)).sum(axis=0)
    return float(np.dot(mode_weights(a.K), per_mode))


def l2_norm(u) -> float:
    return np.sqrt(energy_slots(u.grid, u.cos, u.sin))


# --- modal calculus -------------------------------------------------------

def _kvec(K: int) -> np.ndarray:
    return np.arange(K + 1, dtype=float)[:, None, None]


def dtheta(cos: np.ndarray, sin: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient map of d/dtheta: ``cos k -> -k sin k``, ``sin k -> k cos k``."""
    k = _kvec(cos.shape[-3] - 1)
    ds = -k * cos
    ds[..., 0, :, :] = 0.0  # exact zero even for non-finite input
    return k * sin, ds


def vector_parity(K: int) -> np.ndarray:
    """Axis parities for the three components, shape ``(3, K+1, 1)``."""
    return np.stack([parity_table(c, K) for c in COMPONENTS])


def vector_ddr(u: ModalVectorField) -> ModalVectorField:
    p = vector_parity(u.K)
    return ModalVectorField(u.grid, ddr(u.cos, u.grid, p), ddr(u.sin, u.grid, p))


def vector_ddz(u: ModalVectorField) -> ModalVectorField:
    return ModalVectorField(u.grid, ddz(u.cos, u.grid), ddz(u.sin, u.grid))


def theta_average(u):
    """Keep the mode-0 coefficients and zero every k >= 1 slot."""
    c, s = np.zeros_like(u.cos), np.zeros_like(u.sin)
    c[..., 0, :, :] = u.cos[..., 0, :, :]
    return type(u)(u.grid, c, s)


def theta_derivative_vector(u: ModalVectorField) -> ModalVectorField:
    """d/dtheta of the vector field including the rotation of e_r, e_theta."""
    dc, ds = dtheta(u.cos, u.sin)
    dc[R] -= u.cos[T]
    ds[R] -= u.sin[T]
    dc[T] += u.cos[R]
    ds[T] += u.sin[R]
    return ModalVectorField(u.grid, dc, ds)


def modal_divergence(u: ModalVectorField) -> ModalScalarField:
    g = u.grid
    k = _kvec(u.K)
    pr = parity_table("r", u.K)
    inv_r = 1.0 / g.rr
    c = ddr(u.cos[R], g, pr) + u.cos[R] * inv_r + ddz(u.cos[Z], g) + k * u.sin[T] * inv_r
    s = ddr(u.sin[R], g, pr) + u.sin[R] * inv_r + ddz(u.sin[Z], g) - k * u.cos[T] * inv_r
    s[0] = 0.0
    return ModalScalarField(g, c, s)


def modal_gradient(phi: ModalScalarField) -> ModalVectorField:
    """Gradient of a modal scalar; theta slot is ``(1/r) d/dtheta``."""
    g = phi.grid
    pp = parity_table("pressure", phi.K)
    dc, ds = dtheta(phi.cos, phi.sin)
    inv_r = 1.0 / g.rr
    cos = np.stack([ddr(phi.cos, g, pp), dc * inv_r, ddz(phi.cos, g)])
    sin = np.stack([ddr(phi.sin, g, pp), ds * inv_r, ddz(phi.sin, g)])
    return ModalVectorField(g, cos, sin)


def modal_curl(u: ModalVectorField) -> ModalVectorField:
    g = u.grid
    inv_r = 1.0 / g.rr
    p = vector_parity(u.K)
    dc, ds = dtheta(u.cos, u.sin)

    def curl(a, da):
        dr_t = ddr(a[T], g, p[T])
        dr_z = ddr(a[Z], g, p[Z])
        out = np.stack([
            da[Z] * inv_r - ddz(a[T], g),
            ddz(a[R], g) - dr_z,
            dr_t + a[T] * inv_r - da[R] * inv_r,
        ])
        return out

    return ModalVectorField(g, curl(u.cos, dc), curl(u.sin, ds))


def omega_over_r_l2(u: ModalVectorField) -> float:
    """L2 norm of ``omega_theta / r`` for the axisymmetric part of ``u``."""
    g = u.grid
    om = ddz(u.cos[R, 0], g) - ddr(u.cos[Z, 0], g, 1.0)
    return float(np.sqrt(2.0 * np.pi * np.sum((om / g.rr) ** 2 * cell_weights(g))))


# --- sampling -------------------------------------------------------------

def _trig(K: int, n_theta: int) -> tuple[np.ndarray, np.ndarray]:
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    kt = np.outer(theta, np.arange(K + 1))
    return np.cos(kt), np.sin(kt)


def sample_physical(u, n_theta: int) -> np.ndarray:
    """Evaluate the truncated series at ``theta_m = 2 pi m / n_theta``.

    Returns ``(n_theta, Nr, Nz)`` for a scalar and ``(3, n_theta, Nr, Nz)``
    for a vector field.
    """
    if n_theta < 2 * u.K + 1:
        raise ValueError(f"n_theta={n_theta} cannot resolve K={u.K} (need >= {2 * u.K + 1})")
    C, S = _trig(u.K, n_theta)
    sub = "mk,...kij->...mij"
    return np.einsum(sub, C, u.cos) + np.einsum(sub, S, u.sin)


def project_samples(samples: np.ndarray, grid: MeridianGrid, K: int):
    """Discrete theta-quadrature back to modes ``0..K`` (inverse of sampling)."""
    n = samples.shape[-3]
    if n < 2 * K + 1:
        raise ValueError(f"{n} samples cannot resolve K={K}")
    C, S = _trig(K, n)
    w = np.full(K + 1, 2.0 / n)
    w[0] = 1.0 / n
    sub = "mk,...mij->...kij"
    cos = np.einsum(sub, C * w, samples)
    sin = np.einsum(sub, S * w, samples)
    sin[..., 0, :, :] = 0.0
    if samples.ndim == 4:
        return ModalVectorField(grid, cos, sin)
    return ModalScalarField(grid, cos, sin)


# --- norms and meters -----------------------------------------------------

def norms(u: ModalVectorField) -> NormReport:
    g = u.grid
    l2sq = energy_slots(g, u.cos, u.sin)
    dr_u = vector_ddr(u)
    dz_u = vector_ddz(u)
    dt_u = theta_derivative_vector(u)
    inv_r = 1.0 / g.rr
    grad_r = energy_slots(g, dr_u.cos, dr_u.sin)
    grad_z = energy_slots(g, dz_u.cos, dz_u.sin)
    grad_t = energy_slots(g, dt_u.cos * inv_r, dt_u.sin * inv_r)
    over_r = energy_slots(g, u.cos * inv_r, u.sin * inv_r)
    div = modal_divergence(u)
    samples = sample_physical(u, 4 * u.K + 2)
    return NormReport(
        l2=float(np.sqrt(l2sq)),
        h1dot=float(np.sqrt(grad_r + grad_z + grad_t)),
        h1axi=float(np.sqrt(grad_r + grad_z + over_r)),
        linf=float(np.sqrt((samples ** 2).sum(axis=0)).max()),
        divmax=float(max(np.abs(div.cos).max(), np.abs(div.sin).max())),
    )


def h1dot_sq(u: ModalVectorField) -> float:
    """Squared gradient norm; the integrand of the energy budget."""
    g = u.grid
    dr_u, dz_u, dt_u = vector_ddr(u), vector_ddz(u), theta_derivative_vector(u)
    inv_r = 1.0 / g.rr
    return (energy_slots(g, dr_u.cos, dr_u.sin) + energy_slots(g, dz_u.cos, dz_u.sin)
            + energy_slots(g, dt_u.cos * inv_r, dt_u.sin * inv_r))


def forbidden_mask(K: int) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks of slots outside the cos-meridian/sin-swirl class."""
    mc = np.zeros((3, K + 1), dtype=bool)
    ms = np.zeros((3, K + 1), dtype=bool)
    ms[R, 1:] = ms[Z, 1:] = True
    mc[T, :] = True
    return mc, ms


def parity_violation(u: ModalVectorField, cls: ParityClass) -> float:
    """Energy fraction in slots forbidden by ``cls`` (0 for ``GENERAL``)."""
    if cls is ParityClass.GENERAL:
        return 0.0
    total = energy_slots(u.grid, u.cos, u.sin)
    if total == 0.0:
        return 0.0
    mc, ms = forbidden_mask(u.K)
    bad_c = np.where(mc[:, :, None, None], u.cos, 0.0)
    bad_s = np.where(ms[:, :, None, None], u.sin, 0.0)
    return energy_slots(u.grid, bad_c, bad_s) / total


def nonaxisymmetric_fraction(u: ModalVectorField) -> float:
    """Energy share of all k >= 1 slots."""
    e = mode_energies(u.grid, u.cos, u.sin)
    total = float(e.sum())
    if total == 0.0:
        return 0.0
    return float(e[1:].sum()) / total


def swirl_mode0_fraction(u: ModalVectorField) -> float:
    total = energy_slots(u.grid, u.cos, u.sin)
    if total == 0.0:
        return 0.0
    return 2.0 * np.pi * float(np.sum(u.cos[T, 0] ** 2 * cell_weights(u.grid))) / total
