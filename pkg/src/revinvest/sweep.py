"""One-at-a-time parameter sweeps for single-agent and mean-field solutions."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import solve_equilibrium
from .params import ModelParams, validate
from .single_agent import solve_single_agent

SWEEP_PARAMS = ("lambda", "delta", "gamma", "r", "alpha", "rho")
CSV_COLUMNS = ("value", "y0", "xb_single", "xs_single", "rho_star", "xb_mfg", "xs_mfg", "K")

# Default grids, chosen by us (axis ranges of the published figures are not
# given). Points where 2 delta / gamma^2 hits alpha or 1 show up as skipped
# rows, e.g. delta = 1.2 and alpha = 0.5 at the base point.
DEFAULT_GRIDS = {
    "lambda": np.linspace(0.1, 0.9, 17),
    "delta": np.linspace(0.1, 1.9, 19),
    "gamma": np.linspace(1.5, 3.5, 21),
    "r": np.linspace(1.5, 6.0, 19),
    "alpha": np.linspace(0.1, 0.9, 17),
    "rho": np.linspace(0.25, 4.0, 16),
}

# Directions of the comparative statics reported for the base case.
EXPECTED_TRENDS = {
    "lambda": {"y0": "increasing", "rho_star": "decreasing"},
    "delta": {"rho_star": "decreasing"},
    "gamma": {"rho_star": "increasing"},
    "r": {"rho_star": "increasing"},
    "alpha": {"rho_star": "decreasing"},
    "rho": {"xb_single": "increasing", "xs_single": "increasing"},
}


@dataclass
class SweepSpec:
    parameter: str
    grid: list[float]
    base: ModelParams = field(default_factory=ModelParams)
    rho_single: float = 1.0

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMS:
            raise ValueError(f"parameter must be one of {SWEEP_PARAMS}, got {self.parameter!r}")
        self.grid = [float(v) for v in self.grid]
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("sweep grid must be strictly increasing")

    @classmethod
    def default(cls, parameter: str, **kw) -> SweepSpec:
        return cls(parameter, list(DEFAULT_GRIDS[parameter]), **kw)


@dataclass
class SweepRow:
    value: float
    y0: float = math.nan
    xb_single: float = math.nan
    xs_single: float = math.nan
    rho_star: float = math.nan
    xb_mfg: float = math.nan
    xs_mfg: float = math.nan
    K: float = math.nan
    fixed_point_residual: float = math.nan
    skipped: str | None = None

    def as_csv_row(self) -> list[float]:
        return [getattr(self, c) for c in CSV_COLUMNS]


def _row(spec: SweepSpec, value: float) -> SweepRow:
    if spec.parameter == "rho":
        params, rho_single = spec.base, value
    else:
        try:
            params = spec.base.replace(**{spec.parameter: value})
        except ValueError as exc:
            return SweepRow(value, skipped=str(exc))
        rho_single = spec.rho_single
    report = validate(params)
    if not report.nondegenerate_ok:
        return SweepRow(value, skipped="; ".join(m for m in report.messages if "warning" not in m))
    try:
        single = solve_single_agent(rho_single, params)
        eq = solve_equilibrium(params)
    except (ValueError, RuntimeError) as exc:
        return SweepRow(value, skipped=f"{type(exc).__name__}: {exc}")
    return SweepRow(
        value=value,
        y0=single.y0,
        xb_single=single.policy.x_b,
        xs_single=single.policy.x_s,
        rho_star=eq.rho_star,
        xb_mfg=eq.policy_star.x_b,
        xs_mfg=eq.policy_star.x_s,
        K=eq.contraction_K,
        fixed_point_residual=eq.fixed_point_residual(params),
    )


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[SweepRow]:
    """One row per grid value, in grid order.

    Grid points that fail (degenerate exponents, no contraction, invalid
    parameter) come back as rows with NaN columns and a ``skipped`` reason.
    For ``parameter == "rho"`` only the single-agent columns vary; the
    mean-field columns repeat the base-point equilibrium.
    """
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda v: _row(spec, v), spec.grid))
    return [_row(spec, v) for v in spec.grid]


@dataclass
class TrendCheck:
    column: str
    expected: str
    passed: bool
    violation: tuple[float, float] | None = None
    n_points: int = 0


@dataclass
class MonotonicityReport:
    parameter: str
    checks: list[TrendCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def monotonicity_report(rows: list[SweepRow], expectations: dict[str, str], parameter: str = "") -> MonotonicityReport:
    """Check strict monotone trends over the non-skipped rows.

    ``expectations`` maps a column name to "increasing" or "decreasing". A
    failed check records the first pair of grid values that breaks the trend.
    """
    good = [r for r in rows if r.skipped is None]
    if len(good) < 3:
        raise ValueError("need at least 3 valid rows for a trend check")
    checks = []
    for column, direction in expectations.items():
        if direction not in ("increasing", "decreasing"):
            raise ValueError(f"unknown trend {direction!r}")
        sign = 1.0 if direction == "increasing" else -1.0
        violation = None
        for a, b in zip(good, good[1:]):
            if not sign * (getattr(b, column) - getattr(a, column)) > 0:
                violation = (a.value, b.value)
                break
        checks.append(TrendCheck(column, direction, violation is None, violation, len(good)))
    return MonotonicityReport(parameter, checks)
