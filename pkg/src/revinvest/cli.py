"""Command-line interface: ``revinvest <command> [options]``.

Exit codes: 0 success, 1 invariant failure, 2 configuration error.
Results go to stdout (or ``--out``); diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from .checks import check
from .config import ConfigError, RunConfig, dump_csv, dump_json, load_config
from .equilibrium import EquilibriumError, solve_equilibrium
from .params import PARAM_KEYS, ParameterError, validate
from .simulate import SCHEMES, SimConfig, SimulationError, nash_gap_experiment, simulate_reflected_path
from .single_agent import SolverError, ThresholdPolicy, hjb_residual, solve_single_agent
from .sweep import CSV_COLUMNS, EXPECTED_TRENDS, SWEEP_PARAMS, SweepSpec, monotonicity_report, run_sweep

log = logging.getLogger("revinvest")

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def parse_grid(text: str) -> np.ndarray:
    """``lo:hi:n`` -> n equally spaced points from lo to hi inclusive."""
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigError(f"grid must look like lo:hi:n, got {text!r}") from None
    if n < 2 or not hi > lo:
        raise ConfigError(f"grid needs n >= 2 and hi > lo, got {text!r}")
    return np.linspace(lo, hi, n)


def parse_int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise ConfigError(f"expected positive integers, got {text!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model parameters (override --config)")
    for key in PARAM_KEYS:
        g.add_argument(f"--{key}", type=float, default=None, dest=f"param_{key}")
    common.add_argument("--config", default=None,
                        help="flat YAML file of parameters (default: $REVINVEST_CONFIG)")
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--paths", type=int, default=10_000)
    sim.add_argument("--dt", type=float, default=1e-3)
    sim.add_argument("--horizon", type=float, default=10.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--scheme", choices=SCHEMES, default="bridge")
    sim.add_argument("--workers", type=int, default=1)

    p = _Parser(prog="revinvest", description="Partially reversible investment under mean-field price competition.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve-single", parents=[common], help="single-agent thresholds and value function")
    s.add_argument("--rho", type=float, default=1.0)
    s.add_argument("--grid", default=None, help="lo:hi:n state grid; writes a CSV of v, v', v'' and HJB terms")

    s = sub.add_parser("solve-mfg", parents=[common], help="mean-field equilibrium")
    s.add_argument("--law-csv", default=None, help="also write the stationary pdf/cdf on a grid to this file")
    s.add_argument("--law-points", type=int, default=200)

    s = sub.add_parser("sweep", parents=[common], help="one-at-a-time parameter sweep to CSV")
    s.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    s.add_argument("--grid", default=None, help="lo:hi:n (default: built-in grid)")
    s.add_argument("--single-rho", type=float, default=1.0)
    s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("simulate", parents=[common, sim], help="simulate reflected paths, per-path CSV")
    pol = s.add_mutually_exclusive_group()
    pol.add_argument("--policy-from-mfg", action="store_true", help="use the equilibrium band (default)")
    pol.add_argument("--xb", type=float, default=None)
    s.add_argument("--xs", type=float, default=None)
    s.add_argument("--rho", type=float, default=None, help="price for revenue (default rho*)")

    s = sub.add_parser("nash-gap", parents=[common, sim], help="N-player approximate-equilibrium experiment")
    s.add_argument("--N", default="10,100,1000,10000")
    s.add_argument("--samples", type=int, default=10_000, help="opponent resamples per N")
    s.add_argument("--csv", default=None, help="also write N, deviation_stat, gap, stderr as CSV")
    s.set_defaults(paths=20_000, dt=2e-3, horizon=None)

    s = sub.add_parser("check", parents=[common], help="run every invariant; nonzero exit on failure")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--paths", type=int, default=20_000)
    return p


def _run_config(args) -> RunConfig:
    overrides = {k: getattr(args, f"param_{k}") for k in PARAM_KEYS}
    opts = {k: v for k, v in vars(args).items()
            if not k.startswith("param_") and k not in ("config", "out", "verbose", "command")}
    return load_config(args.command, args.config, overrides, opts, args.out)


def _warn_strict(rc: RunConfig):
    for m in validate(rc.params).messages:
        log.warning(m.removeprefix("warning: "))


def cmd_solve_single(rc: RunConfig) -> int:
    o = rc.options
    v = solve_single_agent(o["rho"], rc.params)
    result = {
        "rho": o["rho"], "m": v.exponents.m, "n": v.exponents.n, "y0": v.y0,
        "x_b": v.policy.x_b, "x_s": v.policy.x_s,
        "A": v.A, "B": v.B, "H": v.H, "C1": v.C1, "C2": v.C2,
        "smooth_fit_residuals": list(v.smooth_fit_residuals()),
    }
    if o.get("grid"):
        x = parse_grid(o["grid"])
        if x[0] <= 0:
            raise ConfigError("state grid must be positive")
        ode, buy, sell = hjb_residual(v, x)
        rows = zip(x, v(x), v.derivative(x, 1), v.derivative(x, 2), ode, buy, sell)
        dump_csv(("x", "v", "dv", "d2v", "ode_term", "buy_term", "sell_term"), rows,
                 {**rc.header(), **{k: result[k] for k in ("rho", "x_b", "x_s")}}, rc.output)
    else:
        dump_json({"result": result}, rc.header(), rc.output)
    return EXIT_OK


def cmd_solve_mfg(rc: RunConfig) -> int:
    eq = solve_equilibrium(rc.params)
    result = {
        "rho_star": eq.rho_star, "x_b_star": eq.policy_star.x_b, "x_s_star": eq.policy_star.x_s,
        "K": eq.contraction_K, "rho_picard": eq.rho_picard, "iterations": eq.iterations,
        "m": eq.exponents.m, "n": eq.exponents.n, "y0": eq.y0,
        "fixed_point_residual": eq.fixed_point_residual(rc.params),
        "consistency_residual": eq.consistency_residual(rc.params),
    }
    dump_json({"result": result}, rc.header(), rc.output)
    path = rc.options.get("law_csv")
    if path:
        x = np.geomspace(eq.policy_star.x_b, eq.policy_star.x_s, rc.options["law_points"])
        dump_csv(("x", "pdf", "cdf"), zip(x, eq.law_star.pdf(x), eq.law_star.cdf(x)),
                 {**rc.header(), "rho_star": eq.rho_star}, path)
    return EXIT_OK


def cmd_sweep(rc: RunConfig) -> int:
    o = rc.options
    grid = parse_grid(o["grid"]) if o.get("grid") else None
    spec = (SweepSpec(o["param"], list(grid), rc.params, o["single_rho"]) if grid is not None
            else SweepSpec.default(o["param"], base=rc.params, rho_single=o["single_rho"]))
    rows = run_sweep(spec, workers=o["workers"])
    for r in rows:
        if r.skipped:
            log.warning("%s = %g skipped: %s", spec.parameter, r.value, r.skipped)
    head = {**rc.header(), "parameter": spec.parameter, "single_rho": spec.rho_single}
    dump_csv(CSV_COLUMNS, (r.as_csv_row() for r in rows), head, rc.output)
    try:
        rep = monotonicity_report(rows, EXPECTED_TRENDS[spec.parameter], spec.parameter)
        for c in rep.checks:
            log.info("trend %s %s: %s", c.column, c.expected, "ok" if c.passed else f"broken at {c.violation}")
    except ValueError as exc:
        log.info("no trend check: %s", exc)
    return EXIT_OK


def _sim_config(o, horizon=None) -> SimConfig:
    return SimConfig(dt=o["dt"], horizon=horizon if horizon is not None else o["horizon"],
                     seed=o["seed"], n_paths=o["paths"], scheme=o["scheme"], workers=o["workers"])


def cmd_simulate(rc: RunConfig) -> int:
    o = rc.options
    if (o.get("xb") is None) != (o.get("xs") is None):
        raise ConfigError("--xb and --xs must be given together")
    rho = o.get("rho")
    if o.get("xb") is not None:
        policy = ThresholdPolicy(o["xb"], o["xs"])
        if rho is None:
            rho = solve_equilibrium(rc.params).rho_star
    else:
        eq = solve_equilibrium(rc.params)
        policy = eq.policy_star
        rho = eq.rho_star if rho is None else rho
    cfg = _sim_config(o)
    cfg = replace(cfg, record_every=cfg.n_steps)
    res = simulate_reflected_path(policy, rc.params, cfg, rho=rho)
    head = {**rc.header(), "x_b": policy.x_b, "x_s": policy.x_s, "rho": rho,
            "dt": cfg.dt, "horizon": cfg.horizon, "scheme": cfg.scheme}
    cols = ("path", "x0", "x_terminal", "xi_plus", "xi_minus", "revenue", "control_cost", "discounted_payoff")
    rows = zip(range(cfg.n_paths), res.initial_states, res.terminal_states, res.xi_plus[:, -1],
               res.xi_minus[:, -1], res.revenue, res.control_cost, res.discounted_payoff)
    dump_csv(cols, rows, head, rc.output)
    return EXIT_OK


def cmd_nash_gap(rc: RunConfig) -> int:
    o = rc.options
    Ns = parse_int_list(o["N"])
    eq = solve_equilibrium(rc.params)
    horizon = o["horizon"]
    if horizon is None:
        horizon = float(np.ceil(np.log(1e6) / rc.params.r * 10) / 10)
    cfg = _sim_config(o, horizon)
    rep = nash_gap_experiment(rc.params, eq, Ns, cfg=cfg, n_resamples=o["samples"])
    dump_json({"result": rep.to_dict()}, {**rc.header(), "dt": cfg.dt, "horizon": cfg.horizon}, rc.output)
    if o.get("csv"):
        dump_csv(("N", "deviation_stat", "gap", "stderr"),
                 ([r["N"], r["deviation_stat"], r["gap"], r["stderr"]] for r in rep.rows()),
                 rc.header(), o["csv"])
    return EXIT_OK


def cmd_check(rc: RunConfig) -> int:
    rep = check(rc.params, seed=rc.options["seed"], n_paths=rc.options["paths"])
    for w in rep.warnings:
        log.warning(w.removeprefix("warning: "))
    dump_json({"result": rep.to_dict()}, rc.header(), rc.output)
    if not rep.passed:
        detail = rep.checks[rep.first_failure]
        msg = detail.get("error") or "; ".join(detail.get("messages", [])) or str(detail)
        log.error("invariant failed: %s (%s)", rep.first_failure, msg)
    return rep.exit_code


COMMANDS = {
    "solve-single": cmd_solve_single,
    "solve-mfg": cmd_solve_mfg,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "nash-gap": cmd_nash_gap,
    "check": cmd_check,
}


def _setup_logging(verbose: bool):
    # a fresh handler per call so the current sys.stderr is used
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("revinvest: %(levelname)s: %(message)s"))
    for h in list(log.handlers):
        log.removeHandler(h)
    log.addHandler(handler)
    log.setLevel(logging.INFO if verbose else logging.WARNING)
    log.propagate = False


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        rc = _run_config(args)
        if rc.command != "check":
            _warn_strict(rc)
        return COMMANDS[rc.command](rc)
    except ParameterError as exc:
        if str(exc).startswith("non-degeneracy"):
            print(f"revinvest: invariant failure: {exc}", file=sys.stderr)
            return EXIT_INVARIANT
        print(f"revinvest: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"revinvest: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, EquilibriumError, SimulationError) as exc:
        print(f"revinvest: invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"revinvest: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
