"""IMEX time integration for the modal, axisymmetric and hierarchy systems.

One stepper serves all three.  Diffusion (with every 1/r^2 potential) is
implicit, advection explicit, and each stage ends with the discrete
projection.  The profile hierarchy runs the same stages on the list of
orders, with the order-n part of the quadratic nonlinearity; the orders are
therefore the exact epsilon-Taylor coefficients of the discrete scheme.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

from .diagnostics import DiagnosticsSeries
from .elliptic import diffusion_solve, projector, vector_laplacian
from .fields import (R, T, Z, ModalScalarField, ModalVectorField, ParityClass, h1dot_sq, l2_norm,
                     modal_divergence, norms, omega_over_r_l2, parity_violation,
                     sample_physical, swirl_mode0_fraction)
from .grid import MeridianGrid, axis_parity, ddr, ddz
from .nonlinear import advect, hierarchy_forcing

DIV_TOL = 1e-10


class Scheme(Enum):
    IMEX1 = "IMEX1"
    IMEX2 = "IMEX2"


class SolverError(RuntimeError):
    pass


class CFLError(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Time-integration settings; viscosity is fixed at 1."""

    grid: MeridianGrid
    K: int = 6
    dt: float = 2e-3
    T: float = 0.5
    save_every: int = 10
    scheme: Scheme = Scheme.IMEX2
    cfl_max: float = 0.5
    advection: bool = True
    keep_snapshots: bool = False
    parity_class: ParityClass = ParityClass.GENERAL

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.T >= self.dt:
            raise ValueError(f"T={self.T} must be at least dt={self.dt}")
        if abs(self.T / self.dt - round(self.T / self.dt)) > 1e-6:
            raise ValueError(f"T={self.T} is not a whole number of steps of dt={self.dt}")
        if self.save_every < 1:
            raise ValueError("save_every must be >= 1")
        if self.K < 0:
            raise ValueError("K must be >= 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def with_(self, **kw) -> SolverConfig:
        return replace(self, **kw)


@dataclass(frozen=True)
class FlowState:
    time: float
    u: ModalVectorField
    p: ModalScalarField | None = None


@dataclass(frozen=True)
class ProfileHierarchy:
    """Epsilon-independent profiles ``u_(0), ..., u_(N)`` at one time."""

    time: float
    orders: tuple[ModalVectorField, ...]

    def __post_init__(self):
        if not self.orders:
            raise ValueError("a hierarchy needs at least order 0")
        g, K = self.orders[0].grid, self.orders[0].K
        if any(o.grid != g or o.K != K for o in self.orders):
            raise ValueError("all orders must share grid and K")
        base = self.orders[0]
        if base.cos[:, 1:].any() or base.sin.any() or base.cos[T].any():
            raise ValueError("order 0 must be axisymmetric without swirl")

    @property
    def N(self) -> int:
        return len(self.orders) - 1


# --- initial data ---------------------------------------------------------

@dataclass(frozen=True)
class InitialProfiles:
    """Meridian and modal ingredients of the initial data.

    ``psi`` is a Stokes stream function, ``swirl0`` the axisymmetric swirl
    ``a^th_0``.  ``cos_modes[k] = (a^r_k, a^z_k)`` and ``sin_modes[k] =
    (b^r_k, b^z_k)``; the remaining theta slots come from the divergence
    closure.
    """

    psi: np.ndarray
    swirl0: np.ndarray
    cos_modes: Mapping[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    sin_modes: Mapping[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def swirl_closure(k: int, a_r: np.ndarray, a_z: np.ndarray, grid: MeridianGrid,
                  family: str = "cos") -> np.ndarray:
    """Theta coefficient that makes mode k divergence-free with shared stencils.

    For the cos family this is ``b^th_k = -(r/k)(d_r a^r + a^r/r + d_z a^z)``;
    the sin family returns ``a^th_k`` with the opposite sign.
    """
    if k < 1:
        raise ValueError("mode 0 has no swirl term in its divergence constraint")
    rr = grid.rr
    flux = ddr(a_r, grid, axis_parity("r", k)) + a_r / rr + ddz(a_z, grid)
    sign = -1.0 if family == "cos" else 1.0
    return sign * (rr / k) * flux


def meridian_from_stream(psi: np.ndarray, grid: MeridianGrid) -> tuple[np.ndarray, np.ndarray]:
    """``(u^r, u^z)`` of a stream function, exactly divergence-free discretely.

    Writing ``chi = psi / r`` gives ``u^r = -d_z chi`` and
    ``u^z = d_r chi + chi / r``; the divergence then cancels term by term.
    """
    chi = psi / grid.rr
    return -ddz(chi, grid), ddr(chi, grid, -1) + chi / grid.rr


def initial_orders(prof: InitialProfiles, grid: MeridianGrid,
                   K: int) -> tuple[ModalVectorField, ModalVectorField]:
    """Split the data into its order-0 and order-1 parts."""
    w0, w1 = ModalVectorField.zeros(grid, K), ModalVectorField.zeros(grid, K)
    w0.cos[R, 0], w0.cos[Z, 0] = meridian_from_stream(prof.psi, grid)
    w1.cos[T, 0] = prof.swirl0
    for k, (a_r, a_z) in prof.cos_modes.items():
        if k > K:
            raise ValueError(f"mode {k} exceeds truncation K={K}")
        w1.cos[R, k], w1.cos[Z, k] = a_r, a_z
        w1.sin[T, k] = swirl_closure(k, a_r, a_z, grid, "cos")
    for k, (b_r, b_z) in prof.sin_modes.items():
        if k > K:
            raise ValueError(f"mode {k} exceeds truncation K={K}")
        w1.sin[R, k], w1.sin[Z, k] = b_r, b_z
        w1.cos[T, k] = swirl_closure(k, b_r, b_z, grid, "sin")
    return w0, w1


def build_initial(prof: InitialProfiles, eps: float, grid: MeridianGrid,
                  K: int) -> ModalVectorField:
    w0, w1 = initial_orders(prof, grid, K)
    return w0 + eps * w1


@dataclass(frozen=True)
class DataFamily:
    """Gaussian-envelope data: a vortex-ring stream function plus modes.

    With ``odd_class`` the data lie in the cos-meridian/sin-swirl class: no
    sin-family modes and no axisymmetric swirl.
    """

    amplitude: float = 0.05
    mode_amplitude: float = 0.3
    swirl_amplitude: float = 0.3
    r0: float = 1.5
    z0: float = 2.0
    width: float = 0.4
    modes: tuple[int, ...] = (1, 2, 3)
    odd_class: bool = False

    def profiles(self, grid: MeridianGrid) -> InitialProfiles:
        r, z = grid.mesh()
        s = self.width
        gauss = np.exp(-((r - self.r0) ** 2 + (z - self.z0) ** 2) / s ** 2)
        zeta, rho = (z - self.z0) / s, (r - self.r0) / s
        psi = self.amplitude * r ** 2 * gauss
        cos_modes, sin_modes = {}, {}
        for k in self.modes:
            a = self.mode_amplitude / k
            cos_modes[k] = (a * zeta * gauss, 0.5 * a * (1.0 + rho) * gauss)
            if not self.odd_class:
                sin_modes[k] = (0.5 * a * gauss, -a * rho * zeta * gauss)
        swirl = np.zeros(grid.shape) if self.odd_class else \
            self.swirl_amplitude * (r / self.r0) * gauss
        return InitialProfiles(psi, swirl, cos_modes, sin_modes)


# --- stepping -------------------------------------------------------------

Fields = list[ModalVectorField]
NonlinearFn = Callable[[Sequence[ModalVectorField], float], Fields]


class Stepper:
    def __init__(self, cfg: SolverConfig, K: int):
        self.cfg, self.K = cfg, K
        self.proj = projector(cfg.grid, K)

    def _project(self, u: ModalVectorField):
        return self.proj(u)

    def step(self, us: Sequence[ModalVectorField], t: float, nonlinear: NonlinearFn):
        dt = self.cfg.dt
        if self.cfg.scheme is Scheme.IMEX1:
            sig = 1.0 / dt
            ns = nonlinear(us, t)
            out = [self._project(diffusion_solve(sig * (u + dt * n), sig)) for u, n in zip(us, ns)]
        else:
            sig = 2.0 / dt
            ns = nonlinear(us, t)
            half = [self._project(diffusion_solve(sig * (u + 0.5 * dt * n), sig))[0]
                    for u, n in zip(us, ns)]
            nh = nonlinear(half, t + 0.5 * dt)
            out = [self._project(diffusion_solve(
                sig * (u + 0.5 * dt * vector_laplacian(u) + dt * n), sig))
                for u, n in zip(us, nh)]
        return [o[0] for o in out], [o[1] * (1.0 / dt) for o in out]


def max_speed(u: ModalVectorField) -> float:
    s = sample_physical(u, 4 * u.K + 2)
    return float(np.sqrt((s ** 2).sum(axis=0)).max())


def _full_nonlinear(cfg: SolverConfig, forcing) -> NonlinearFn:
    def fn(us, t):
        u = us[0]
        n = -advect(u, u) if cfg.advection else ModalVectorField.zeros(u.grid, u.K)
        if forcing is not None:
            n = n + forcing(t)
        return [n]
    return fn


def _hierarchy_nonlinear(cfg: SolverConfig) -> NonlinearFn:
    def fn(ws, t):
        w0 = ws[0]
        if not cfg.advection:
            return [ModalVectorField.zeros(w0.grid, w0.K) for _ in ws]
        out = [-advect(w0, w0)]
        for n in range(1, len(ws)):
            lin = advect(w0, ws[n]) + advect(ws[n], w0)
            out.append(hierarchy_forcing(ws, n) - lin)
        return out
    return fn


def _integrate(us: Fields, cfg: SolverConfig, K: int, nonlinear: NonlinearFn,
               snapshot: Callable[[float, Fields], object] | None):
    """Shared time loop; diagnostics track ``us[0]``."""
    stepper = Stepper(cfg, K)
    series = DiagnosticsSeries()
    grid = cfg.grid
    h = min(grid.dr, grid.dz)
    scheme2 = cfg.scheme is Scheme.IMEX2

    def record(t, fields, budget):
        u = fields[0]
        snap = snapshot(t, fields) if snapshot is not None else None
        series.record(t, norms(u), budget, omega_over_r_l2(u), swirl_mode0_fraction(u),
                      parity_violation(u, cfg.parity_class), snap)

    budget, t = 0.0, 0.0
    phis = None
    record(t, us, budget)
    for n in range(1, cfg.n_steps + 1):
        speed = max_speed(us[0])
        if speed * cfg.dt / h > cfg.cfl_max:
            raise CFLError(f"CFL {speed * cfg.dt / h:.3f} exceeds {cfg.cfl_max} "
                           f"(max speed {speed:.4g}) at t={t:.4g}")
        new, phis = stepper.step(us, t, nonlinear)
        if not all(v.is_finite() for v in new):
            raise SolverError(f"non-finite values after step {n} (t={t + cfg.dt:.4g})")
        mid = 0.5 * (us[0] + new[0]) if scheme2 else new[0]
        budget += 2.0 * cfg.dt * h1dot_sq(mid)
        us, t = new, n * cfg.dt
        for v in us:
            d = modal_divergence(v)
            dmax = max(float(np.abs(d.cos).max()), float(np.abs(d.sin).max()))
            scale = max(l2_norm(v), 1e-300)
            series.worst_div_ratio = max(series.worst_div_ratio,
                                         dmax / scale if dmax > 0 else 0.0)
        series.steps = n
        if n % cfg.save_every == 0 or n == cfg.n_steps:
            record(t, us, budget)
    return us, phis, t, series


def _check_grid(u: ModalVectorField, cfg: SolverConfig) -> None:
    if u.grid != cfg.grid:
        raise ValueError("field grid differs from the solver grid")


def run_full(u0: ModalVectorField, cfg: SolverConfig,
             forcing: Callable[[float], ModalVectorField] | None = None):
    """Integrate the full modal system to ``cfg.T``.

    ``forcing(t)`` adds an explicit body force (used for manufactured
    solutions).
    """
    _check_grid(u0, cfg)
    snap = (lambda t, f: f[0]) if cfg.keep_snapshots else None
    us, phis, t, series = _integrate([u0], cfg, u0.K, _full_nonlinear(cfg, forcing), snap)
    return FlowState(t, us[0], phis[0] if phis else None), series


def step_full(s: FlowState, cfg: SolverConfig) -> FlowState:
    new, phis = Stepper(cfg, s.u.K).step([s.u], s.time, _full_nonlinear(cfg, None))
    return FlowState(s.time + cfg.dt, new[0], phis[0])


def run_axisym(u0: ModalVectorField, cfg: SolverConfig):
    """Axisymmetric system (with or without swirl) on the mode-0 slots only."""
    _check_grid(u0, cfg)
    if u0.cos[:, 1:].any() or u0.sin.any():
        raise ValueError("axisymmetric solver needs data without k >= 1 content")
    return run_full(u0.with_modes(0), cfg)


def run_hierarchy(init: tuple[ModalVectorField, ModalVectorField], N: int, cfg: SolverConfig):
    """Co-evolve orders ``0..N`` from ``(u_(0), u_(1))`` initial data.

    Orders two and higher start from zero.  Saved hierarchies are kept in
    ``series.snapshots``; the norms in the series track order 0.
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    w0, w1 = init
    _check_grid(w0, cfg)
    zero = ModalVectorField.zeros(w0.grid, w0.K)
    ws = [w0, w1] + [zero] * (N - 1) if N >= 1 else [w0]
    ProfileHierarchy(0.0, tuple(ws))  # validates order 0
    snap = lambda t, f: ProfileHierarchy(t, tuple(f))
    ws, _, t, series = _integrate(ws, cfg, w0.K, _hierarchy_nonlinear(cfg), snap)
    return ProfileHierarchy(t, tuple(ws)), series


def assemble_expansion(h: ProfileHierarchy, eps: float, N: int) -> ModalVectorField:
    """``sum_{j<=N} eps^j u_(j)``."""
    if N > h.N:
        raise ValueError(f"hierarchy holds orders up to {h.N}, asked for {N}")
    out = h.orders[0]
    for j in range(1, N + 1):
        out = out + (eps ** j) * h.orders[j]
    return out
