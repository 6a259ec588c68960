"""Self-check of every invariant for one parameter set."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import EquilibriumError, solve_equilibrium
from .params import ModelParams, ParameterError, compute_exponents, quadratic_residual, validate
from .simulate import SimConfig, ks_distance, simulate_reflected_path
from .single_agent import SolverError, f_ratio, hjb_residual, solve_single_agent, solve_y0

EXPONENT_TOL = 1e-12
Y0_TOL = 1e-12
SMOOTH_FIT_TOL = 1e-8
HJB_TOL = 1e-8
FIXED_POINT_TOL = 1e-12
CONSISTENCY_TOL = 1e-10
SCALING_TOL = 1e-10
CHECK_PATHS = 20_000
MAX_CHECK_STEPS = 5_000


@dataclass
class CheckReport:
    passed: bool
    first_failure: str | None
    checks: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "first_failure": self.first_failure,
            "warnings": self.warnings,
            "checks": self.checks,
        }


def mixing_horizon(x_b: float, x_s: float, params: ModelParams, decay: float = 10.0) -> float:
    """Time for the slowest mode of the reflected log-process to decay by e^-decay.

    The log-state is Brownian motion with drift mu and volatility sigma on an
    interval of length L; its spectral gap is mu^2/(2 sigma^2) + sigma^2 pi^2/(2 L^2).
    """
    sigma = params.gamma
    mu = params.delta - 0.5 * sigma**2
    L = math.log(x_s / x_b)
    gap = mu**2 / (2 * sigma**2) + (sigma * math.pi) ** 2 / (2 * L**2)
    return decay / gap


def _ks_config(x_b: float, x_s: float, params: ModelParams, seed: int, n_paths: int) -> SimConfig:
    horizon = mixing_horizon(x_b, x_s, params)
    # keep a step small against the band width so double touches are rare
    dt = min(0.01, (math.log(x_s / x_b) / 20.0 / params.gamma) ** 2)
    dt = max(dt, horizon / MAX_CHECK_STEPS)
    dt = min(dt, horizon / 100)
    return SimConfig(dt=dt, horizon=horizon, seed=seed, n_paths=n_paths,
                     record_every=max(1, int(round(horizon / dt))))


def check(params: ModelParams, seed: int = 0, n_paths: int = CHECK_PATHS) -> CheckReport:
    """Run the parameter, single-agent, equilibrium and simulation invariants.

    Every check runs when possible; the report names the first one that
    failed. A violated strict inequality only adds a warning.
    """
    out: dict = {}
    warns: list[str] = []
    order: list[tuple[str, bool]] = []

    def record(name, ok, **info):
        out[name] = {"ok": bool(ok), **info}
        order.append((name, bool(ok)))

    report = validate(params)
    warns += [m for m in report.messages if m.startswith("warning")]
    hard = [m for m in report.messages if not m.startswith("warning")]
    record("non-degeneracy", report.nondegenerate_ok, messages=hard, strict_ok=report.strict_ok)
    if not report.nondegenerate_ok:
        return _finish(out, order, warns)

    try:
        exps = compute_exponents(params)
        res = max(abs(quadratic_residual(k, params)) for k in (exps.m, exps.n))
        record("exponents", res <= EXPONENT_TOL * max(1.0, params.r),
               m=exps.m, n=exps.n, residual=res)

        y0 = solve_y0(params.lam, exps, params.alpha)
        res = abs(float(f_ratio(y0, exps, params.alpha)) - (1.0 - params.lam))
        record("y0-equation", res <= Y0_TOL, y0=y0, residual=res)

        single = solve_single_agent(params.a0, params)
        sf = float(np.max(np.abs(single.smooth_fit_residuals())))
        record("smooth-fit", sf <= SMOOTH_FIT_TOL, rho=params.a0,
               x_b=single.policy.x_b, x_s=single.policy.x_s, max_residual=sf)

        lo, hi = single.policy.x_b / 10.0, single.policy.x_s * 10.0
        xs = np.geomspace(lo, hi, 1000)
        ode, buy, sell = hjb_residual(single, xs)
        scale = np.maximum(1.0, np.abs(single(xs)))
        worst = float(np.max(np.maximum.reduce([np.abs(np.minimum(ode, 0.0)) / scale,
                                                np.abs(np.minimum(buy, 0.0)),
                                                np.abs(np.minimum(sell, 0.0))])))
        record("hjb-inequalities", worst <= HJB_TOL, worst_violation=worst)
    except (ParameterError, SolverError) as exc:
        record("single-agent", False, error=str(exc))
        return _finish(out, order, warns)

    try:
        eq = solve_equilibrium(params)
    except (EquilibriumError, ParameterError) as exc:
        name = "contraction" if "contraction" in str(exc) else "equilibrium"
        record(name, False, error=str(exc))
        return _finish(out, order, warns)
    record("contraction", eq.contraction_K < 1.0, K=eq.contraction_K)
    fp = eq.fixed_point_residual(params)
    record("fixed-point", fp <= FIXED_POINT_TOL, rho_star=eq.rho_star,
           rho_picard=eq.rho_picard, iterations=eq.iterations, residual=fp)
    cr = eq.consistency_residual(params)
    record("mean-field-consistency", cr <= CONSISTENCY_TOL, residual=cr)
    # thresholds at rho* equal the unit-price thresholds scaled by rho*^(1/(1-alpha))
    unit = solve_single_agent(1.0, params).policy
    f = eq.rho_star ** (1.0 / (1.0 - params.alpha))
    sc = max(abs(eq.policy_star.x_b / (unit.x_b * f) - 1), abs(eq.policy_star.x_s / (unit.x_s * f) - 1))
    record("threshold-scaling", sc <= SCALING_TOL, residual=sc)

    pol = eq.policy_star
    cfg = _ks_config(pol.x_b, pol.x_s, params, seed, n_paths)
    try:
        sim = simulate_reflected_path(pol, params, cfg, rho=eq.rho_star)
    except RuntimeError as exc:
        record("simulation", False, error=str(exc))
        return _finish(out, order, warns)
    ks = ks_distance(sim.terminal_states, eq.law_star)
    ks_tol = 1.5 * 1.36 / math.sqrt(n_paths)
    inside = bool(np.all((sim.states >= pol.x_b * (1 - 1e-12)) & (sim.states <= pol.x_s * (1 + 1e-12))))
    record("simulation-confinement", inside)
    record("simulation-ks", ks <= ks_tol, ks=ks, tolerance=ks_tol, n_paths=n_paths,
           dt=cfg.dt, horizon=cfg.horizon)
    return _finish(out, order, warns)


def _finish(out, order, warns) -> CheckReport:
    first = next((name for name, ok in order if not ok), None)
    return CheckReport(first is None, first, out, warns)
