"""Time series of flow monitors and the log-log regressions built on them."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fields import ModalVectorField, NormReport, norms

CSV_COLUMNS = ("time", "l2", "h1dot", "h1axi", "linf", "divmax",
               "energy_defect", "parity_violation")


@dataclass
class DiagnosticsSeries:
    """Records taken at save points of a run.

    ``budget[i]`` is the cumulative dissipation ``2 sum dt |grad u|^2`` up to
    ``times[i]``.  ``snapshots`` optionally keeps the saved states.
    """

    times: list[float] = field(default_factory=list)
    reports: list[NormReport] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)
    budget: list[float] = field(default_factory=list)
    omega_over_r: list[float] = field(default_factory=list)
    swirl: list[float] = field(default_factory=list)
    parity_violation: list[float] = field(default_factory=list)
    div_residual: list[float] = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    worst_div_ratio: float = 0.0
    steps: int = 0

    def __len__(self) -> int:
        return len(self.times)

    def record(self, time: float, report: NormReport, budget: float, omega: float,
               swirl: float, parity: float, snapshot=None) -> None:
        if self.times and not time > self.times[-1]:
            raise ValueError("diagnostic times must increase strictly")
        self.times.append(float(time))
        self.reports.append(report)
        self.energy.append(report.l2 ** 2)
        self.budget.append(float(budget))
        self.omega_over_r.append(float(omega))
        self.swirl.append(float(swirl))
        self.parity_violation.append(float(parity))
        self.div_residual.append(report.divmax)
        if snapshot is not None:
            self.snapshots.append(snapshot)

    def energy_defects(self) -> np.ndarray:
        e = np.asarray(self.energy)
        if e.size == 0 or e[0] == 0.0:
            return np.zeros(e.size)
        return (e + np.asarray(self.budget) - e[0]) / e[0]

    def rows(self) -> list[list[float]]:
        defects = self.energy_defects()
        return [[t, *rep.as_row(), d, pv] for t, rep, d, pv in
                zip(self.times, self.reports, defects, self.parity_violation)]


@dataclass(frozen=True)
class ScalingReport:
    eps_values: tuple[float, ...]
    norms: tuple[float, ...]
    slope: float
    r2: float

    def within(self, lo: float, hi: float, r2_min: float) -> bool:
        return bool(lo <= self.slope <= hi and self.r2 >= r2_min)


@dataclass(frozen=True)
class MonitorResult:
    ok: bool
    max_increase: float
    index: int | None  # first offending record, if any


def compare_fields(a: ModalVectorField, b: ModalVectorField) -> NormReport:
    if a.grid != b.grid or a.K != b.K:
        raise ValueError("fields must share grid and K")
    return norms(a - b)


def scaling_slope(points: Sequence[tuple[float, float]]) -> ScalingReport:
    """Least-squares fit of ``log norm = slope * log eps + c``."""
    if len(points) < 3:
        raise ValueError("a scaling fit needs at least 3 points")
    eps = np.array([p[0] for p in points], dtype=float)
    val = np.array([p[1] for p in points], dtype=float)
    if np.any(eps <= 0) or np.any(val <= 0) or not np.all(np.isfinite(val)):
        raise ValueError(f"scaling fit needs positive finite values, got {val.tolist()}")
    x, y = np.log(eps), np.log(val)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0.0:
        raise ValueError("eps values must not all coincide")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    resid = y - (ym + slope * (x - xm))
    sst = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / sst if sst > 0 else 1.0
    return ScalingReport(tuple(eps.tolist()), tuple(val.tolist()), slope, r2)


def energy_budget(series: DiagnosticsSeries) -> float:
    """Worst relative defect of ``E(t) + budget(t) <= E(0)``."""
    if len(series) == 0:
        raise ValueError("empty diagnostics series")
    return float(series.energy_defects().max())


def omega_over_r_monitor(series: DiagnosticsSeries, rel_tol: float = 1e-8) -> MonitorResult:
    """Check that ``|omega_theta / r|_{L2}`` never grows beyond ``rel_tol``."""
    if any(s > 0.0 for s in series.swirl):
        raise ValueError("the omega/r monitor applies to runs without swirl")
    w = np.asarray(series.omega_over_r)
    if w.size < 2:
        return MonitorResult(True, 0.0, None)
    prev = w[:-1]
    inc = np.where(prev > 0, (w[1:] - prev) / np.where(prev > 0, prev, 1.0),
                   np.where(w[1:] > 0, np.inf, 0.0))
    bad = np.flatnonzero(inc > rel_tol)
    worst = float(inc.max())
    return MonitorResult(bad.size == 0, worst, int(bad[0]) + 1 if bad.size else None)
