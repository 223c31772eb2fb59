"""Grid execution over (N, beta) and log-log rate fits."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import SweepConfig
from .errors import BudgetExceededError
from .nbody import ErrorRecord, run_comparison

NAN = float("nan")


@dataclass
class RateFit:
    beta: float
    t: float
    points: list = field(repr=False)
    slope: float
    intercept: float
    residual: float

    @property
    def reference_slope(self) -> float:
        return (2 * self.beta - 1) / 2

    @property
    def slope_gap(self) -> float:
        return self.slope - self.reference_slope

    def as_dict(self) -> dict:
        return {"beta": self.beta, "t": self.t, "slope": self.slope, "intercept": self.intercept,
                "residual": self.residual, "reference_slope": self.reference_slope,
                "slope_gap": self.slope_gap, "points": [list(p) for p in self.points]}


def fit_rate(points, beta: float, t: float = NAN) -> RateFit:
    """Least-squares fit of log(error^2) = slope * log(N) + intercept."""
    pts = sorted((int(n), float(e)) for n, e in points)
    if len(pts) < 3:
        raise ValueError(f"rate fit needs at least 3 points, got {len(pts)}")
    if any(not e > 0 or not math.isfinite(e) for _, e in pts):
        raise ValueError("rate fit needs strictly positive, finite errors")
    x = np.log([n for n, _ in pts])
    y = np.log([e for _, e in pts])
    slope, intercept = np.polyfit(x, y, 1)
    res = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return RateFit(float(beta), float(t), pts, float(slope), float(intercept), res)


def failed_records(cfg: SweepConfig, N: int, beta: float, status: str) -> list[ErrorRecord]:
    return [ErrorRecord(t=t, N=N, beta=beta, n_modes=cfg.n_modes, error2=NAN,
                        normalized_error2=NAN, overlap=NAN, approx_norm=NAN, trace_gamma=NAN,
                        kinetic=NAN, initial_excitations=NAN, initial_kinetic=NAN, leak=NAN,
                        leak_flag=False, orth_residual=NAN, hartree_norm_drift=NAN,
                        nbody_norm_drift=NAN, nbody_energy_drift=NAN, fock_norm_drift=NAN,
                        status=status) for t in sorted(cfg["sweep"]["times"])]


def run_cell(cfg: SweepConfig, N: int, beta: float) -> list[ErrorRecord]:
    """One grid cell; failures come back as marked records instead of exceptions."""
    try:
        return run_comparison(cfg.comparison(N, beta))
    except BudgetExceededError as exc:
        return failed_records(cfg, N, beta, f"skipped: {exc}")
    except Exception as exc:  # noqa: BLE001 - isolate every cell
        return failed_records(cfg, N, beta, f"failed: {type(exc).__name__}: {exc}")


def _cell_job(args):
    cfg, N, beta = args
    return run_cell(cfg, N, beta)


def fits_from_records(records: list[ErrorRecord], t: float) -> list[RateFit]:
    fits = []
    for beta in sorted({r.beta for r in records}):
        pts = [(r.N, r.error2) for r in records
               if r.beta == beta and r.status == "ok" and abs(r.t - t) < 1e-12]
        if len(pts) >= 3 and all(e > 0 for _, e in pts):
            fits.append(fit_rate(pts, beta, t))
    return fits


@dataclass
class SweepResult:
    records: list[ErrorRecord]
    fits: list[RateFit]

    @property
    def n_skipped(self) -> int:
        return sum(1 for r in self.records if r.status.startswith("skipped"))

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.records if r.status.startswith("failed"))

    @property
    def n_ok(self) -> int:
        return sum(1 for r in self.records if r.status in ("ok", "under-truncated"))


def run_sweep(cfg: SweepConfig, workers: int | None = None) -> SweepResult:
    """Run every (N, beta) cell; output order follows the config, independent of workers."""
    cells = cfg.cells()
    workers = cfg["run"]["workers"] if workers is None else workers
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_cell_job, [(cfg, N, b) for N, b in cells]))
    else:
        chunks = [run_cell(cfg, N, b) for N, b in cells]
    records = [r for chunk in chunks for r in chunk]
    return SweepResult(records, fits_from_records(records, cfg.fit_time()))
