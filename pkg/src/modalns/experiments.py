"""Experiment drivers that turn flow runs into pass/fail acceptance numbers.

Independent runs (one per epsilon) go through a thread pool; results are
always gathered in list order, so outputs do not depend on ``workers``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .diagnostics import (DiagnosticsSeries, ScalingReport, energy_budget,
                          omega_over_r_monitor, scaling_slope)
from .elliptic import project_divfree
from .fields import (R, Z, ModalScalarField, ModalVectorField, ParityClass, dtheta,
                     energy_slots, h1dot_sq, l2_norm, modal_curl, modal_divergence,
                     project_samples, sample_physical, theta_average)
from .grid import ddr, ddz, make_grid
from .nonlinear import convolve_modes
from .solvers import (DataFamily, SolverConfig, SolverError, assemble_expansion,
                      build_initial, initial_orders, run_axisym, run_full, run_hierarchy)

ENERGY_TOL = 1e-6
DIV_TOL = 1e-10


class Experiment(Enum):
    EPS_SCALING = "eps-scaling"
    EXPANSION = "expansion"
    ODEVITY = "odevity"
    INVARIANTS = "invariants"


@dataclass(frozen=True)
class ExperimentConfig:
    which: Experiment
    solver: SolverConfig
    eps_list: tuple[float, ...] = (0.04, 0.02, 0.01)
    data_family: DataFamily = DataFamily()
    output_dir: Path = Path("out")
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        eps = self.eps_list
        if any(not e > 0 for e in eps):
            raise ValueError("eps_list entries must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError(f"eps_list must be strictly decreasing, got {list(eps)}")
        if self.which in (Experiment.EPS_SCALING, Experiment.EXPANSION) and len(eps) < 3:
            raise ValueError("scaling experiments need at least 3 eps values")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    threshold: str
    passed: bool


@dataclass
class ExperimentResult:
    name: str
    checks: list[Check] = field(default_factory=list)
    scaling: dict[str, tuple[ScalingReport, bool]] = field(default_factory=dict)
    summary_rows: dict[str, list[tuple]] = field(default_factory=dict)
    series: dict[str, DiagnosticsSeries] = field(default_factory=dict)
    finals: dict[str, tuple[float, ModalVectorField]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str, measured: float, ok: bool, threshold: str) -> None:
        self.checks.append(Check(name, float(measured), threshold, bool(ok)))

    def add_scaling(self, key: str, rep: ScalingReport, lo: float, hi: float,
                    r2_min: float) -> None:
        ok = rep.within(lo, hi, r2_min)
        self.scaling[key] = (rep, ok)
        self.summary_rows[key] = [(e, v, rep.slope, rep.r2, int(ok))
                                  for e, v in zip(rep.eps_values, rep.norms)]
        self.check(f"{key}_slope", rep.slope, ok, f"[{lo}, {hi}] with r2 >= {r2_min}")


def _pmap(fn: Callable, items: Sequence, workers: int) -> list:
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _sup_diff(a: Iterable[ModalVectorField], b: Iterable[ModalVectorField], K: int,
              op=lambda x: x) -> float:
    return max(l2_norm(op(x) - y.with_modes(K)) for x, y in zip(a, b))


def _run_checks(res: ExperimentResult, tag: str, s: DiagnosticsSeries) -> None:
    defect = energy_budget(s)
    res.check(f"energy_defect[{tag}]", defect, defect <= ENERGY_TOL, f"<= {ENERGY_TOL:g}")
    res.check(f"div_residual[{tag}]", s.worst_div_ratio, s.worst_div_ratio <= DIV_TOL,
              f"<= {DIV_TOL:g} * |u|")


def _solver(cfg: ExperimentConfig, **kw) -> SolverConfig:
    return replace(cfg.solver, keep_snapshots=True, **kw)


def eps_pair(eps: float, cfg: ExperimentConfig):
    """Full run from the epsilon data and axisymmetric run from its average."""
    grid, K = cfg.solver.grid, cfg.solver.K
    u0 = build_initial(cfg.data_family.profiles(grid), eps, grid, K)
    scfg = _solver(cfg)
    full = run_full(u0, scfg)
    axi = run_axisym(theta_average(u0), scfg)
    return full, axi


def experiment_eps_scaling(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult(Experiment.EPS_SCALING.value)
    K = cfg.solver.K
    runs = _pmap(lambda e: eps_pair(e, cfg), cfg.eps_list, cfg.workers)
    d_full, d_avg = [], []
    for eps, ((fs, fser), (ax, aser)) in zip(cfg.eps_list, runs):
        d_full.append(_sup_diff(fser.snapshots, aser.snapshots, K))
        d_avg.append(_sup_diff(fser.snapshots, aser.snapshots, K, theta_average))
        res.series[f"full_eps{eps:g}"], res.series[f"axisym_eps{eps:g}"] = fser, aser
        res.finals[f"full_eps{eps:g}"] = (fs.time, fs.u)
        _run_checks(res, f"full_eps{eps:g}", fser)
        _run_checks(res, f"axisym_eps{eps:g}", aser)
    res.add_scaling("u_minus_ubar", scaling_slope(list(zip(cfg.eps_list, d_full))),
                    0.85, 1.15, 0.995)
    res.add_scaling("avg_u_minus_ubar", scaling_slope(list(zip(cfg.eps_list, d_avg))),
                    1.7, 2.3, 0.99)
    return res


EXPANSION_BANDS = {0: (0.85, 1.15), 1: (1.8, 2.2), 2: (2.6, 3.4)}


def experiment_expansion(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult(Experiment.EXPANSION.value)
    grid, K = cfg.solver.grid, cfg.solver.K
    prof = cfg.data_family.profiles(grid)
    scfg = _solver(cfg)
    N = max(EXPANSION_BANDS)

    def task(item):
        if item is None:
            return run_hierarchy(initial_orders(prof, grid, K), N, scfg)
        return run_full(build_initial(prof, item, grid, K), scfg)

    out = _pmap(task, [None, *cfg.eps_list], cfg.workers)
    (h, hser), fulls = out[0], out[1:]
    res.series["hierarchy_order0"] = hser
    _run_checks(res, "hierarchy_order0", hser)
    snaps = hser.snapshots
    mer = max(np.sqrt(energy_slots(grid, s.orders[1].cos[[R, Z], :1], s.orders[1].sin[[R, Z], :1]))
              for s in snaps)
    tot = max(l2_norm(s.orders[1]) for s in snaps)
    ratio = mer / tot if tot > 0 else 0.0
    res.check("order1_mode0_meridian_ratio", ratio, ratio <= 1e-12, "<= 1e-12")
    rem = {n: [] for n in range(N + 1)}
    for eps, (fs, fser) in zip(cfg.eps_list, fulls):
        res.series[f"full_eps{eps:g}"] = fser
        res.finals[f"full_eps{eps:g}"] = (fs.time, fs.u)
        _run_checks(res, f"full_eps{eps:g}", fser)
        for n in range(N + 1):
            rem[n].append(max(l2_norm(u - assemble_expansion(hh, eps, n))
                              for u, hh in zip(fser.snapshots, snaps)))
    for n, (lo, hi) in EXPANSION_BANDS.items():
        res.add_scaling(f"remainder_N{n}", scaling_slope(list(zip(cfg.eps_list, rem[n]))),
                        lo, hi, 0.0)
    for n, w in enumerate(h.orders):
        res.finals[f"profile_{n}"] = (h.time, w)
    return res


def experiment_odevity(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult(Experiment.ODEVITY.value)
    grid, K = cfg.solver.grid, cfg.solver.K
    prof = replace(cfg.data_family, odd_class=True).profiles(grid)
    scfg = replace(cfg.solver, parity_class=ParityClass.COS_MERIDIAN_SIN_SWIRL)
    runs = _pmap(lambda e: run_full(build_initial(prof, e, grid, K), scfg),
                 cfg.eps_list, cfg.workers)
    rows = []
    for eps, (fs, ser) in zip(cfg.eps_list, runs):
        tag = f"full_eps{eps:g}"
        res.series[tag], res.finals[tag] = ser, (fs.time, fs.u)
        worst, swirl = max(ser.parity_violation), max(ser.swirl)
        ok = worst <= 1e-12 and swirl <= 1e-14
        res.check(f"parity_violation[{tag}]", worst, worst <= 1e-12, "<= 1e-12")
        res.check(f"swirl_mode0_share[{tag}]", swirl, swirl <= 1e-14, "<= 1e-14")
        _run_checks(res, tag, ser)
        rows.append((eps, worst, float("nan"), float("nan"), int(ok)))
    res.summary_rows["parity_violation"] = rows
    return res


# --- invariants suite -----------------------------------------------------

def _random_scalar(rng, grid, K, decay: float = 1.0) -> ModalScalarField:
    c = rng.standard_normal((K + 1, *grid.shape))
    s = rng.standard_normal((K + 1, *grid.shape))
    s[0] = 0.0
    w = (1.0 + np.arange(K + 1)) ** -decay
    return ModalScalarField(grid, c * w[:, None, None], s * w[:, None, None])


def _smooth_vector(rng, grid, K) -> ModalVectorField:
    """Random superposition of Gaussian bumps, projected divergence-free."""
    r, z = grid.mesh()
    cos, sin = grid.zeros(3, K + 1), grid.zeros(3, K + 1)
    for _ in range(4):
        r0 = rng.uniform(0.3, 0.6) * grid.Rmax
        z0 = rng.uniform(0.3, 0.7) * grid.Lz
        width = rng.uniform(0.1, 0.15) * grid.Rmax
        bump = np.exp(-((r - r0) ** 2 + (z - z0) ** 2) / width ** 2)
        cos += rng.standard_normal((3, K + 1, 1, 1)) * bump
        sin += rng.standard_normal((3, K + 1, 1, 1)) * bump
    sin[:, 0] = 0.0
    return project_divfree(ModalVectorField(grid, cos, sin))


def _scalar_l2(f: ModalScalarField) -> float:
    return float(np.sqrt(energy_slots(f.grid, f.cos, f.sin)))


def _avg(f: ModalScalarField) -> ModalScalarField:
    c = np.zeros_like(f.cos)
    c[0] = f.cos[0]
    return ModalScalarField(f.grid, c, np.zeros_like(f.sin))


def _refinement_ratio(op: Callable, n: int) -> float:
    errs = []
    for m in (n, 2 * n):
        g = make_grid(m, m, 1.0, 1.0)
        rr, zz = g.mesh()
        f = np.sin(2.0 * rr) * np.cos(2 * np.pi * zz)
        exact, approx = op(g, rr, zz, f)
        errs.append(np.abs(approx - exact)[1:-1].max())
    return errs[0] / errs[1]


def experiment_invariants(cfg: ExperimentConfig, n_random: int = 1000,
                          n_fields: int = 20) -> ExperimentResult:
    res = ExperimentResult(Experiment.INVARIANTS.value)
    rng = np.random.default_rng(cfg.seed)
    grid, K = cfg.solver.grid, cfg.solver.K

    # Poincare-type bounds for the theta average
    fails = 0
    worst = -np.inf
    for _ in range(n_random):
        f = _random_scalar(rng, grid, K)
        fbar = _avg(f)
        dc, ds = dtheta(f.cos, f.sin)
        nf, navg = _scalar_l2(f), _scalar_l2(fbar)
        osc = _scalar_l2(f - fbar)
        nd = _scalar_l2(ModalScalarField(grid, dc, ds))
        slack = 1e-12 * nf
        fails += (navg > nf + slack) + (osc > 2 * np.pi * nd + slack) + (osc > nd + slack)
        worst = max(worst, osc / nd if nd > 0 else 0.0)
    res.check("poincare_failures", fails, fails == 0, "== 0")
    res.check("poincare_sharp_ratio", worst, worst <= 1.0 + 1e-12, "<= 1")

    # averaging identity
    worst_id, worst_tail = 0.0, 0.0
    for _ in range(n_fields):
        f, g = _random_scalar(rng, grid, K), _random_scalar(rng, grid, K)
        fb, gb = _avg(f), _avg(g)
        lhs = _avg(convolve_modes(f, g)) - convolve_modes(fb, gb)
        rhs = _avg(convolve_modes(f - fb, g - gb))
        tail = _avg(convolve_modes(gb, _avg(f - fb))) + _avg(convolve_modes(fb, _avg(g - gb)))
        scale = _scalar_l2(convolve_modes(f, g))
        worst_id = max(worst_id, _scalar_l2(lhs - rhs - tail) / scale)
        worst_tail = max(worst_tail, _scalar_l2(tail) / scale)
    res.check("averaging_identity", worst_id, worst_id <= 1e-12, "<= 1e-12")
    res.check("averaging_tail_terms", worst_tail, worst_tail <= 1e-14, "<= 1e-14")

    # convolution against physical-space products
    worst_conv = 0.0
    n_theta = 4 * K + 2
    for _ in range(n_fields):
        f, g = _random_scalar(rng, grid, K), _random_scalar(rng, grid, K)
        ref = project_samples(sample_physical(f, n_theta) * sample_physical(g, n_theta), grid, K)
        got = convolve_modes(f, g)
        worst_conv = max(worst_conv, _scalar_l2(got - ref) / _scalar_l2(ref))
    res.check("convolution_vs_pseudospectral", worst_conv, worst_conv <= 1e-11, "<= 1e-11")

    # projection: idempotence and divergence removal
    worst_idem, worst_div = 0.0, 0.0
    for _ in range(n_fields):
        c = rng.standard_normal((3, K + 1, *grid.shape))
        s = rng.standard_normal((3, K + 1, *grid.shape))
        s[:, 0] = 0.0
        p1 = project_divfree(ModalVectorField(grid, c, s))
        p2 = project_divfree(p1)
        worst_idem = max(worst_idem, l2_norm(p2 - p1) / l2_norm(p1))
        d = modal_divergence(p1)
        worst_div = max(worst_div, max(np.abs(d.cos).max(), np.abs(d.sin).max()) / l2_norm(p1))
    res.check("projection_idempotence", worst_idem, worst_idem <= 1e-11, "<= 1e-11")
    res.check("projection_divergence", worst_div, worst_div <= DIV_TOL, f"<= {DIV_TOL:g}")

    # Biot-Savart band on smooth divergence-free fields
    lo, hi = np.inf, 0.0
    for _ in range(max(3, n_fields // 4)):
        u = _smooth_vector(rng, grid, K)
        ratio = np.sqrt(h1dot_sq(u)) / l2_norm(modal_curl(u))
        lo, hi = min(lo, ratio), max(hi, ratio)
    res.check("biot_savart_min", lo, lo >= 0.5, ">= 0.5")
    res.check("biot_savart_max", hi, hi <= 2.0, "<= 2")

    # refinement of the derivative stencils
    ratio_r = _refinement_ratio(lambda g, rr, zz, f: (2.0 * np.cos(2.0 * rr) * np.cos(2 * np.pi * zz),
                                                      ddr(f, g, -1)), 32)
    ratio_z = _refinement_ratio(lambda g, rr, zz, f: (-2 * np.pi * np.sin(2.0 * rr) * np.sin(2 * np.pi * zz),
                                                      ddz(f, g)), 32)
    for name, val in (("ddr_refinement_ratio", ratio_r), ("ddz_refinement_ratio", ratio_z)):
        res.check(name, val, 3.5 <= val <= 4.5, "in [3.5, 4.5]")

    # short flow runs: energy inequality and omega/r monotonicity
    prof = cfg.data_family.profiles(grid)
    w0, _ = initial_orders(prof, grid, K)
    short = replace(cfg.solver, T=min(cfg.solver.T, 0.1), save_every=1)
    try:
        _, axi = run_axisym(w0, short)
    except SolverError as exc:
        res.check(f"run_completed[axisym_no_swirl]: {exc}", np.nan, False, "completes")
    else:
        mon = omega_over_r_monitor(axi)
        res.check("omega_over_r_max_increase", mon.max_increase, mon.ok, "<= 1e-8 per step")
        _run_checks(res, "axisym_no_swirl", axi)
        res.series["axisym_no_swirl"] = axi
    try:
        full_state, full = run_full(build_initial(prof, cfg.eps_list[0], grid, K), short)
    except SolverError as exc:
        res.check(f"run_completed[full_short]: {exc}", np.nan, False, "completes")
    else:
        _run_checks(res, "full_short", full)
        res.series["full_short"] = full
        res.finals["full_short"] = (full_state.time, full_state.u)
    return res


RUNNERS = {
    Experiment.EPS_SCALING: experiment_eps_scaling,
    Experiment.EXPANSION: experiment_expansion,
    Experiment.ODEVITY: experiment_odevity,
    Experiment.INVARIANTS: experiment_invariants,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.which](cfg)
