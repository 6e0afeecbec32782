"""Meridian (r, z) grid and axis-aware finite differences.

Radial nodes sit at half-cell offsets, ``r_i = (i + 1/2) dr``, so no node
lies on the axis.  The axial direction is periodic.  Every operator acts on
the trailing two axes of an array shaped ``(..., Nr, Nz)``, so modal stacks
are differentiated in one call.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property

import numpy as np


class AxisParity(IntEnum):
    """Reflection sign used for the ghost value across r = 0."""

    EVEN = 1
    ODD = -1


@dataclass(frozen=True)
class MeridianGrid:
    Nr: int
    Nz: int
    Rmax: float
    Lz: float

    @property
    def dr(self) -> float:
        return self.Rmax / self.Nr

    @property
    def dz(self) -> float:
        return self.Lz / self.Nz

    @cached_property
    def r(self) -> np.ndarray:
        return (np.arange(self.Nr) + 0.5) * self.dr

    @cached_property
    def z(self) -> np.ndarray:
        return np.arange(self.Nz) * self.dz

    @cached_property
    def rr(self) -> np.ndarray:
        """Radial coordinate broadcast to ``(Nr, 1)``."""
        return self.r[:, None]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nr, self.Nz)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.r, self.z, indexing="ij")

    def zeros(self, *lead: int) -> np.ndarray:
        return np.zeros((*lead, self.Nr, self.Nz))


def make_grid(Nr: int, Nz: int, Rmax: float, Lz: float) -> MeridianGrid:
    """Build a validated meridian grid.

    ``Nz`` must be a power of two (the axial solves use an FFT) and the
    radial direction needs at least three nodes for the one-sided outer
    stencil.
    """
    if int(Nr) != Nr or Nr < 3:
        raise ValueError(f"Nr must be an integer >= 3, got {Nr}")
    if int(Nz) != Nz or Nz < 4 or (int(Nz) & (int(Nz) - 1)) != 0:
        raise ValueError(f"Nz must be a power of two >= 4, got {Nz}")
    if not (Rmax > 0 and Lz > 0) or not np.isfinite(Rmax) or not np.isfinite(Lz):
        raise ValueError(f"Rmax and Lz must be positive, got Rmax={Rmax}, Lz={Lz}")
    return MeridianGrid(int(Nr), int(Nz), float(Rmax), float(Lz))


def axis_parity(component: str, k: int) -> AxisParity:
    """Axis reflection sign of the mode-``k`` coefficient of ``component``.

    Scalar-like quantities (``z``, ``pressure``) extend as ``(-1)^k``; the
    in-plane components ``r`` and ``theta`` carry the opposite sign.
    """
    if k < 0:
        raise ValueError("mode index must be non-negative")
    if component in ("z", "pressure", "p"):
        return AxisParity(1 if k % 2 == 0 else -1)
    if component in ("r", "theta", "θ"):
        return AxisParity(-1 if k % 2 == 0 else 1)
    raise ValueError(f"unknown component {component!r}")


def parity_table(component: str, K: int) -> np.ndarray:
    """Signs for modes ``0..K`` shaped ``(K+1, 1)`` for :func:`ddr`."""
    return np.array([int(axis_parity(component, k)) for k in range(K + 1)],
                    dtype=float)[:, None]


def ddr(f: np.ndarray, grid: MeridianGrid, parity) -> np.ndarray:
    """Second-order radial derivative.

    The first node uses the ghost value ``parity * f[0]`` mirrored across the
    axis; the last node uses the one-sided three-point stencil.  ``parity``
    is a sign or an array broadcastable against ``f[..., 0, :]`` (for modal
    stacks, shape ``(K+1, 1)`` from :func:`parity_table`).
    """
    f = np.asarray(f, dtype=float)
    if f.shape[-2:] != grid.shape:
        raise ValueError(f"shape {f.shape} does not match grid {grid.shape}")
    p = np.asarray(parity, dtype=float)
    h2 = 2.0 * grid.dr
    out = np.empty_like(f)
    out[..., 1:-1, :] = (f[..., 2:, :] - f[..., :-2, :]) / h2
    out[..., 0, :] = (f[..., 1, :] - p * f[..., 0, :]) / h2
    out[..., -1, :] = (3.0 * f[..., -1, :] - 4.0 * f[..., -2, :] + f[..., -3, :]) / h2
    return out


def ddz(f: np.ndarray, grid: MeridianGrid) -> np.ndarray:
    """Second-order periodic central difference in z."""
    f = np.asarray(f, dtype=float)
    if f.shape[-2:] != grid.shape:
        raise ValueError(f"shape {f.shape} does not match grid {grid.shape}")
    return (np.roll(f, -1, axis=-1) - np.roll(f, 1, axis=-1)) / (2.0 * grid.dz)


def ddr_matrix(grid: MeridianGrid, parity: int) -> np.ndarray:
    """Dense ``Nr x Nr`` matrix of :func:`ddr` for one parity."""
    n, h2 = grid.Nr, 2.0 * grid.dr
    D = np.zeros((n, n))
    i = np.arange(1, n - 1)
    D[i, i + 1] = 1.0 / h2
    D[i, i - 1] = -1.0 / h2
    D[0, 1] = 1.0 / h2
    D[0, 0] = -parity / h2
    D[-1, -1], D[-1, -2], D[-1, -3] = 3.0 / h2, -4.0 / h2, 1.0 / h2
    return D


def z_wavenumbers(grid: MeridianGrid) -> np.ndarray:
    """Angular wavenumbers of ``numpy.fft.rfft`` along z."""
    return 2.0 * np.pi * np.fft.rfftfreq(grid.Nz, d=grid.dz)


def central_symbol(grid: MeridianGrid) -> np.ndarray:
    """``ddz`` acts on ``exp(i kappa z)`` as multiplication by ``1j * s``."""
    s = np.sin(z_wavenumbers(grid) * grid.dz) / grid.dz
    s[0] = s[-1] = 0.0  # exact zeros at the mean and Nyquist wavenumbers
    return s


def compact_symbol(grid: MeridianGrid) -> np.ndarray:
    """Eigenvalue of minus the 3-point second difference in z."""
    return (2.0 * np.sin(0.5 * z_wavenumbers(grid) * grid.dz) / grid.dz) ** 2
