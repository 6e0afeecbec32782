"""Per-mode Helmholtz/Poisson solves and the divergence-free projection.

Scalar problems ``(sigma - L_m) x = rhs`` with

    L_m = d_rr + (1/r) d_r + d_zz - m^2 / r^2

are discretized with the compact conservative radial stencil and the
three-point periodic second difference in z.  A real FFT diagonalizes z;
what remains is one tridiagonal system in r per z-wavenumber, solved with a
vectorized Thomas sweep whose factors are cached.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .fields import R, T, Z, ModalScalarField, ModalVectorField, modal_divergence, modal_gradient
from .grid import AxisParity, MeridianGrid, axis_parity, central_symbol, compact_symbol, ddr_matrix

COMPAT_TOL = 1e-10


class OuterBC(Enum):
    DIRICHLET0 = -1.0  # ghost value mirrors with a sign flip
    NEUMANN0 = 1.0


class CompatibilityError(ValueError):
    """Singular Neumann solve with a right-hand side outside the range."""


@dataclass(frozen=True)
class HelmholtzSpec:
    k_theta: int
    m: int
    sigma: float
    parity: AxisParity
    outer_bc: OuterBC = OuterBC.DIRICHLET0

    def __post_init__(self):
        if self.m < 0 or self.k_theta < 0:
            raise ValueError("mode indices must be non-negative")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


# --- tridiagonal machinery ------------------------------------------------

def _radial_bands(grid: MeridianGrid, m, parity, outer):
    """Bands of the radial part of ``L_m`` for a batch of problems.

    Returns ``lower (Nr,)``, ``diag (B, Nr)`` and ``upper (Nr,)``; ghost
    closures are folded into the diagonal.
    """
    r, h2 = grid.r, grid.dr ** 2
    lower = (1.0 - 0.5 * grid.dr / r) / h2
    upper = (1.0 + 0.5 * grid.dr / r) / h2
    m = np.asarray(m, dtype=float)[:, None]
    diag = -2.0 / h2 - m ** 2 / r ** 2
    diag[:, 0] += lower[0] * np.asarray(parity, dtype=float)  # lower[0] is exactly 0
    diag[:, -1] += upper[-1] * np.asarray(outer, dtype=float)
    return lower, diag, upper


def _singular(m, sigma, outer) -> np.ndarray:
    return (np.asarray(m) == 0) & (sigma == 0.0) & (np.asarray(outer) == OuterBC.NEUMANN0.value)


@lru_cache(maxsize=64)
def _factor(grid: MeridianGrid, m: tuple, parity: tuple, outer: tuple, sigma: float):
    lower, diag, upper = _radial_bands(grid, m, parity, outer)
    lam = compact_symbol(grid)
    b = sigma + lam[None, None, :] - diag[:, :, None]  # (B, Nr, Nk)
    a, c = -lower, -upper
    pin = _singular(m, sigma, outer)
    c0 = np.broadcast_to(c[0], b[:, 0].shape).copy()
    b[pin, 0, 0] = 1.0
    c0[pin, 0] = 0.0
    n = grid.Nr
    inv = np.empty_like(b)
    cp = np.empty_like(b)
    inv[:, 0] = 1.0 / b[:, 0]
    cp[:, 0] = c0 * inv[:, 0]
    for i in range(1, n):
        inv[:, i] = 1.0 / (b[:, i] - a[i] * cp[:, i - 1])
        cp[:, i] = c[i] * inv[:, i]
    for arr in (inv, cp):
        arr.setflags(write=False)
    return a, inv, cp, pin


def _check_compat(grid: MeridianGrid, rhs: np.ndarray, pin: np.ndarray) -> None:
    if not pin.any():
        return
    w = grid.r[:, None]
    sub = rhs[pin]
    defect = np.abs((sub * w).sum(axis=(-2, -1)))
    scale = (np.abs(sub) * w).sum(axis=(-2, -1))
    rel = np.where(scale > 0, defect / np.where(scale > 0, scale, 1.0), 0.0)
    worst = float(rel.max())
    if worst > COMPAT_TOL:
        raise CompatibilityError(
            f"Neumann Poisson rhs is incompatible: relative defect {worst:.3e} > {COMPAT_TOL:g}")


def solve_stack(grid: MeridianGrid, m, parity, outer, sigma: float,
                rhs: np.ndarray) -> np.ndarray:
    """Solve ``B`` independent problems; ``rhs`` has shape ``(B, Nr, Nz)``."""
    m, parity, outer = (tuple(float(v) for v in x) for x in (m, parity, outer))
    a, inv, cp, pin = _factor(grid, m, parity, outer, float(sigma))
    _check_compat(grid, rhs, pin)
    d = np.fft.rfft(rhs, axis=-1)
    d[pin, 0, 0] = 0.0
    n = grid.Nr
    x = np.empty_like(d)
    x[:, 0] = d[:, 0] * inv[:, 0]
    for i in range(1, n):
        x[:, i] = (d[:, i] - a[i] * x[:, i - 1]) * inv[:, i]
    for i in range(n - 2, -1, -1):
        x[:, i] -= cp[:, i] * x[:, i + 1]
    out = np.fft.irfft(x, n=grid.Nz, axis=-1)
    if pin.any():
        w = grid.r[:, None]
        mean = (out[pin] * w).sum(axis=(-2, -1)) / (w.sum() * grid.Nz)
        out[pin] -= mean[:, None, None]
    return out


def laplacian_stack(grid: MeridianGrid, m, parity, outer, x: np.ndarray) -> np.ndarray:
    """Apply the discrete ``L_m`` row-wise to a ``(B, Nr, Nz)`` stack."""
    lower, diag, upper = _radial_bands(grid, np.atleast_1d(m), np.atleast_1d(parity),
                                       np.atleast_1d(outer))
    lower, upper = lower[:, None], upper[:, None]
    out = diag[:, :, None] * x
    out[:, 1:] += lower[1:] * x[:, :-1]
    out[:, :-1] += upper[:-1] * x[:, 1:]
    out += (np.roll(x, 1, axis=-1) - 2.0 * x + np.roll(x, -1, axis=-1)) / grid.dz ** 2
    return out


def _spec_args(spec: HelmholtzSpec):
    return (spec.m,), (int(spec.parity),), (spec.outer_bc.value,)


def helmholtz_apply(spec: HelmholtzSpec, x: np.ndarray, grid: MeridianGrid) -> np.ndarray:
    """``(sigma - L_m) x`` for a single meridian scalar."""
    m, p, o = _spec_args(spec)
    return spec.sigma * x - laplacian_stack(grid, m, p, o, x[None])[0]


def helmholtz_solve(spec: HelmholtzSpec, rhs: np.ndarray, grid: MeridianGrid) -> np.ndarray:
    """Solve ``(sigma - L_m) x = rhs`` on the meridian grid.

    In the singular case (``sigma = 0``, ``m = 0``, Neumann) the returned
    solution has zero r-weighted mean.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != grid.shape:
        raise ValueError(f"rhs shape {rhs.shape} does not match grid {grid.shape}")
    if not np.isfinite(rhs).all():
        raise ValueError("rhs contains non-finite values")
    m, p, o = _spec_args(spec)
    return solve_stack(grid, m, p, o, spec.sigma, rhs[None])[0]


def pressure_poisson(k: int, rhs_cos: np.ndarray, rhs_sin: np.ndarray,
                     grid: MeridianGrid) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``L_k P = rhs`` per trig slot with a Neumann outer wall."""
    spec = HelmholtzSpec(k, k, 0.0, axis_parity("pressure", k), OuterBC.NEUMANN0)
    P = helmholtz_solve(spec, -np.asarray(rhs_cos, dtype=float), grid)
    if k == 0:
        return P, np.zeros(grid.shape)
    return P, helmholtz_solve(spec, -np.asarray(rhs_sin, dtype=float), grid)


# --- vector diffusion -----------------------------------------------------

@lru_cache(maxsize=32)
def _diffusion_layout(K: int):
    """Potentials and parities of the decoupled scalar rows.

    Mode 0 contributes ``(r, theta, z)``; each k >= 1 contributes
    ``s+ = u^r_c + v^th_s``, ``s- = u^r_c - v^th_s``, ``t+ = v^r_s + u^th_c``,
    ``t- = v^r_s - u^th_c``, then the z cos and sin slots.
    """
    m, par = [1, 1, 0], [-1, -1, 1]
    for k in range(1, K + 1):
        pk = int(axis_parity("r", k))
        m += [k + 1, abs(k - 1), abs(k - 1), k + 1, k, k]
        par += [pk, pk, pk, pk, -pk, -pk]
    return tuple(m), tuple(par)


def pack_diffusion(u: ModalVectorField) -> np.ndarray:
    c, s = u.cos, u.sin
    rows = [c[R, 0], c[T, 0], c[Z, 0]]
    for k in range(1, u.K + 1):
        rows += [c[R, k] + s[T, k], c[R, k] - s[T, k],
                 s[R, k] + c[T, k], s[R, k] - c[T, k], c[Z, k], s[Z, k]]
    return np.stack(rows)


def unpack_diffusion(x: np.ndarray, grid: MeridianGrid, K: int) -> ModalVectorField:
    c, s = grid.zeros(3, K + 1), grid.zeros(3, K + 1)
    c[R, 0], c[T, 0], c[Z, 0] = x[0], x[1], x[2]
    for k in range(1, K + 1):
        sp, sm, tp, tm, zc, zs = x[3 + 6 * (k - 1): 9 + 6 * (k - 1)]
        c[R, k], s[T, k] = 0.5 * (sp + sm), 0.5 * (sp - sm)
        s[R, k], c[T, k] = 0.5 * (tp + tm), 0.5 * (tp - tm)
        c[Z, k], s[Z, k] = zc, zs
    return ModalVectorField(grid, c, s)


def vector_laplacian(u: ModalVectorField) -> ModalVectorField:
    """Discrete vector Laplacian with Dirichlet walls, via the s/t rotation."""
    m, par = _diffusion_layout(u.K)
    outer = (OuterBC.DIRICHLET0.value,) * len(m)
    y = laplacian_stack(u.grid, m, par, outer, pack_diffusion(u))
    return unpack_diffusion(y, u.grid, u.K)


def diffusion_solve(rhs: ModalVectorField, sigma: float) -> ModalVectorField:
    """``(sigma - Delta) u = rhs`` for the whole velocity, ``sigma > 0``."""
    if not sigma > 0:
        raise ValueError("implicit diffusion needs sigma > 0")
    m, par = _diffusion_layout(rhs.K)
    outer = (OuterBC.DIRICHLET0.value,) * len(m)
    x = solve_stack(rhs.grid, m, par, outer, sigma, pack_diffusion(rhs))
    return unpack_diffusion(x, rhs.grid, rhs.K)


# --- projection -----------------------------------------------------------

class Projector:
    """Exact discrete Leray projection ``u - G phi`` with ``D G phi = D u``.

    ``D`` is the modal divergence.  ``G`` is the modal gradient except in
    the outermost radial row, where ``d_r phi`` averages the last interior
    face difference with the zero wall flux of a Neumann pressure.  Without
    that closure discrete harmonic gradients such as ``r cos(theta)`` make
    ``D G`` singular.  For each mode k
    and z-wavenumber the composite ``D G`` is a dense ``Nr x Nr`` matrix;
    inverses are precomputed once per ``(grid, K)``.  The blocks with
    ``k = 0`` at the mean and Nyquist wavenumbers are singular: there the
    divergence only sees ``u^r`` and the projection removes that component
    outright.
    """

    def __init__(self, grid: MeridianGrid, K: int):
        self.grid, self.K = grid, K
        r = grid.r
        s2 = central_symbol(grid) ** 2
        nk = s2.size
        M = np.empty((K + 1, nk, grid.Nr, grid.Nr))
        eye = np.eye(grid.Nr)
        for k in range(K + 1):
            Dp = ddr_matrix(grid, int(axis_parity("pressure", k)))
            Dp[-1] = 0.0
            Dp[-1, -1], Dp[-1, -2] = 0.5 / grid.dr, -0.5 / grid.dr
            Ar = ddr_matrix(grid, int(axis_parity("r", k))) + np.diag(1.0 / r)
            base = Ar @ Dp - np.diag(k * k / r ** 2)
            M[k] = base[None] - s2[:, None, None] * eye
        Minv = np.zeros_like(M)
        good = np.ones((K + 1, nk), dtype=bool)
        good[0, 0] = good[0, -1] = False
        Minv[good] = np.linalg.inv(M[good])
        self.M, self.Minv = M, Minv

    def _solve(self, b: np.ndarray) -> np.ndarray:
        """Apply the block inverses to ``b`` shaped ``(K+1, Nk, 4, Nr)``.

        einsum (not matmul) keeps the result independent of BLAS threading;
        one refinement sweep recovers the digits lost to conditioning.
        """
        x = np.einsum("kqij,kqcj->kqci", self.Minv, b)
        res = b - np.einsum("kqij,kqcj->kqci", self.M, x)
        return x + np.einsum("kqij,kqcj->kqci", self.Minv, res)

    def gradient(self, phi: ModalScalarField) -> ModalVectorField:
        gp = modal_gradient(phi)
        half = 0.5 / self.grid.dr
        gp.cos[R, :, -1] = (phi.cos[:, -1] - phi.cos[:, -2]) * half
        gp.sin[R, :, -1] = (phi.sin[:, -1] - phi.sin[:, -2]) * half
        return gp

    def potential(self, u: ModalVectorField) -> ModalScalarField:
        g = self.grid
        d = modal_divergence(u)
        dc, ds = np.fft.rfft(d.cos, axis=-1), np.fft.rfft(d.sin, axis=-1)
        b = np.stack([dc.real, dc.imag, ds.real, ds.imag], axis=1)  # (K+1, 4, Nr, Nk)
        x = self._solve(np.ascontiguousarray(b.transpose(0, 3, 1, 2)))
        x = x.transpose(0, 2, 3, 1)  # back to (K+1, 4, Nr, Nk)
        pc = np.fft.irfft(x[:, 0] + 1j * x[:, 1], n=g.Nz, axis=-1)
        ps = np.fft.irfft(x[:, 2] + 1j * x[:, 3], n=g.Nz, axis=-1)
        ps[0] = 0.0
        return ModalScalarField(g, pc, ps)

    def __call__(self, u: ModalVectorField) -> tuple[ModalVectorField, ModalScalarField]:
        if u.K != self.K or u.grid != self.grid:
            raise ValueError("field does not match the projector's grid/K")
        phi = self.potential(u)
        gp = self.gradient(phi)
        cos, sin = u.cos - gp.cos, u.sin - gp.sin
        ur = cos[R, 0]
        f = np.fft.rfft(ur, axis=-1)
        sign = (-1.0) ** np.arange(self.grid.Nz)
        ur -= (f[:, 0].real / self.grid.Nz)[:, None]
        ur -= (f[:, -1].real / self.grid.Nz)[:, None] * sign
        return ModalVectorField(self.grid, cos, sin), phi


@lru_cache(maxsize=8)
def projector(grid: MeridianGrid, K: int) -> Projector:
    return Projector(grid, K)


def project_divfree(u: ModalVectorField) -> ModalVectorField:
    return projector(u.grid, u.K)(u)[0]
