"""Stationary law of the reflected process, the price map and its fixed point."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import (
    NONDEGENERACY_TOL,
    CharacteristicExponents,
    ModelParams,
    ParameterError,
    compute_exponents,
)
from .single_agent import (
    ThresholdPolicy,
    ValueFunction,
    solve_thresholds,
    solve_value_function,
    solve_y0,
    threshold_constant,
)

PICARD_TOL = 1e-13
PICARD_MAX_ITER = 10_000
CLOSED_FORM_AGREEMENT = 1e-12


class EquilibriumError(RuntimeError):
    """No contraction, or the two routes to the fixed point disagree."""


def _power_diff(hi: float, lo: float, k: float) -> float:
    """hi**k - lo**k without cancellation for small k * log(hi/lo)."""
    return lo**k * math.expm1(k * math.log(hi / lo))


@dataclass(frozen=True)
class StationaryLaw:
    """Limiting law of geometric Brownian motion reflected on [x_b, x_s].

    The density is a power law, f(x) = norm * x**(nu - 2) on the band, with
    nu = 2 delta / gamma^2 and norm = (nu - 1) / (x_s**(nu-1) - x_b**(nu-1)).
    It is the speed density 2 / (gamma^2 x^2 s(x)), s(x) = (theta/x)**nu the
    scale density, normalised over the band; theta cancels.
    """

    policy: ThresholdPolicy
    nu: float
    norm: float

    @property
    def support(self) -> tuple[float, float]:
        return self.policy.x_b, self.policy.x_s

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        inside = (x >= lo) & (x <= hi)
        out = np.where(inside, self.norm * np.where(inside, x, 1.0) ** (self.nu - 2.0), 0.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        k = self.nu - 1.0
        xc = np.clip(x, lo, hi)
        out = np.expm1(k * np.log(xc / lo)) / math.expm1(k * math.log(hi / lo))
        out = np.where(x >= hi, 1.0, np.where(x <= lo, 0.0, out))
        return float(out) if out.ndim == 0 else out

    def ppf(self, u):
        """Inverse CDF on [0, 1]."""
        u = np.asarray(u, dtype=float)
        lo, hi = self.support
        k = self.nu - 1.0
        total = math.expm1(k * math.log(hi / lo))
        out = lo * np.exp(np.log1p(u * total) / k)
        out = np.clip(out, lo, hi)
        return float(out) if out.ndim == 0 else out

    def moment(self, power: float) -> float:
        """E[X**power] in closed form; power must differ from 1 - nu."""
        lo, hi = self.support
        k = self.nu - 1.0
        kk = k + power
        if abs(kk) <= NONDEGENERACY_TOL:
            raise ParameterError("moment exponent collides with the density exponent")
        return (k / kk) * _power_diff(hi, lo, kk) / _power_diff(hi, lo, k)


def stationary_law(policy: ThresholdPolicy, params: ModelParams) -> StationaryLaw:
    nu = params.nu
    if abs(nu - 1.0) <= NONDEGENERACY_TOL:
        raise ParameterError(f"non-degeneracy: 2*delta/gamma^2 = {nu} too close to 1")
    if policy.x_b == policy.x_s:
        raise ParameterError("degenerate band x_b == x_s has no density")
    norm = (nu - 1.0) / _power_diff(policy.x_s, policy.x_b, nu - 1.0)
    return StationaryLaw(policy, nu, norm)


def inverse_demand(x, params: ModelParams):
    """Price a0 - a1 * x**(1 - alpha) generated by production level x."""
    return params.a0 - params.a1 * np.asarray(x, dtype=float) ** (1.0 - params.alpha)


def mean_price(law: StationaryLaw, params: ModelParams) -> float:
    """Average inverse-demand price a0 - a1 E[X**(1-alpha)] under the law."""
    if abs(params.nu - params.alpha) <= NONDEGENERACY_TOL:
        raise ParameterError(
            f"non-degeneracy: 2*delta/gamma^2 = {params.nu} too close to alpha = {params.alpha}"
        )
    if params.a1 == 0.0:
        return params.a0
    return params.a0 - params.a1 * law.moment(1.0 - params.alpha)


def contraction_constant(params: ModelParams, exps: CharacteristicExponents, y0: float) -> float:
    """Slope magnitude K of the affine price map Gamma(rho) = a0 - K rho."""
    nu, a = params.nu, params.alpha
    if abs(nu - 1.0) <= NONDEGENERACY_TOL or abs(nu - a) <= NONDEGENERACY_TOL:
        raise ParameterError(
            f"non-degeneracy: 2*delta/gamma^2 = {nu} collides with alpha or 1"
        )
    if params.a1 == 0.0:
        return 0.0
    moment_ratio = ((nu - 1.0) / (nu - a)) * math.expm1((nu - a) * math.log(y0)) / math.expm1(
        (nu - 1.0) * math.log(y0)
    )
    return params.a1 * moment_ratio * threshold_constant(params, exps, y0) ** (1.0 - a)


def gamma_map(rho: float, params: ModelParams, exps: CharacteristicExponents, y0: float) -> float:
    """Price generated by the population when everyone best-responds to ``rho``."""
    if not rho > 0:
        raise ParameterError(f"price rho > 0 violated: {rho}")
    return params.a0 - contraction_constant(params, exps, y0) * rho


@dataclass(frozen=True)
class EquilibriumSolution:
    rho_star: float
    policy_star: ThresholdPolicy
    value_star: ValueFunction
    law_star: StationaryLaw
    contraction_K: float
    iterations: int
    exponents: CharacteristicExponents
    y0: float
    rho_picard: float
    picard_steps: list[float] = field(default_factory=list, repr=False)

    def fixed_point_residual(self, params: ModelParams) -> float:
        return abs(gamma_map(self.rho_star, params, self.exponents, self.y0) - self.rho_star)

    def consistency_residual(self, params: ModelParams) -> float:
        """|rho* - average price under the equilibrium stationary law|."""
        return abs(mean_price(self.law_star, params) - self.rho_star)


def picard_iterate(
    params: ModelParams,
    exps: CharacteristicExponents,
    y0: float,
    rho0: float | None = None,
    tol: float = PICARD_TOL,
    max_iter: int = PICARD_MAX_ITER,
) -> tuple[float, list[float]]:
    """Iterate rho <- Gamma(rho) from ``rho0`` (default a0).

    Each update goes through the full chain thresholds -> stationary law ->
    average price rather than the affine shortcut. Returns the last iterate
    and the list of step sizes |Gamma(rho_k) - rho_k|.
    """
    rho = params.a0 if rho0 is None else rho0
    steps = []
    for _ in range(max_iter):
        law = stationary_law(solve_thresholds(rho, params, exps, y0), params)
        new = mean_price(law, params)
        if not new > 0:
            raise EquilibriumError(f"price map left the positive half-line: {new}")
        steps.append(abs(new - rho))
        rho = new
        if steps[-1] < tol:
            return rho, steps
    raise EquilibriumError(f"Picard iteration did not converge in {max_iter} steps")


def solve_equilibrium(params: ModelParams) -> EquilibriumSolution:
    """Mean-field equilibrium price, band, value function and stationary law.

    The fixed point is obtained in closed form, rho* = a0 / (1 + K), and
    independently by Picard iteration of the price map; the two must agree
    to 1e-12.
    """
    exps = compute_exponents(params)
    y0 = solve_y0(params.lam, exps, params.alpha)
    K = contraction_constant(params, exps, y0)
    if K >= 1.0:
        raise EquilibriumError(f"contraction: price-map slope K = {K:.6g} >= 1")
    rho_star = params.a0 / (1.0 + K)
    rho_it, steps = picard_iterate(params, exps, y0)
    if abs(rho_it - rho_star) > CLOSED_FORM_AGREEMENT * max(1.0, rho_star):
        raise EquilibriumError(
            f"closed-form rho* = {rho_star!r} and Picard rho = {rho_it!r} disagree"
        )
    policy = solve_thresholds(rho_star, params, exps, y0)
    value = solve_value_function(rho_star, params, exps, policy, y0)
    law = stationary_law(policy, params)
    return EquilibriumSolution(
        rho_star=rho_star,
        policy_star=policy,
        value_star=value,
        law_star=law,
        contraction_K=K,
        iterations=len(steps),
        exponents=exps,
        y0=y0,
        rho_picard=rho_it,
        picard_steps=steps,
    )
