import sys

import numpy as np
import pytest

from revinvest import ModelParams, compute_exponents, solve_equilibrium, solve_single_agent


@pytest.fixture(scope="session")
def base():
    return ModelParams()


@pytest.fixture(scope="session")
def base_exps(base):
    return compute_exponents(base)


@pytest.fixture(scope="session")
def base_single(base):
    return solve_single_agent(1.0, base)


@pytest.fixture(scope="session")
def base_eq(base):
    return solve_equilibrium(base)


def random_valid_params(rng: np.random.Generator, n: int):
    """Random parameter sets satisfying delta < r and a safe non-degeneracy margin."""
    out = []
    while len(out) < n:
        delta = rng.uniform(0.05, 2.0)
        gamma = rng.uniform(0.5, 3.0)
        r = delta + rng.uniform(0.2, 4.0)
        alpha = rng.uniform(0.1, 0.8)
        lam = rng.uniform(0.1, 0.8)
        nu = 2 * delta / gamma**2
        if abs(nu - 1) < 0.05 or abs(nu - alpha) < 0.05:
            continue
        out.append(ModelParams(delta=delta, gamma=gamma, r=r, alpha=alpha, lam=lam,
                               p=rng.uniform(0.2, 2.0), c=rng.uniform(0.5, 2.0),
                               a0=1.0, a1=rng.uniform(0.0, 0.2)))
    return out


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
    terminalreporter.write_line("")
    for c, part, ok, detail in sorted(mod.RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {c} [{part}]: {detail}")
