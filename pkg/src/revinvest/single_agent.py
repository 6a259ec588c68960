"""Fixed-price singular control problem: thresholds and closed-form value.

For a given price rho the optimal policy keeps production inside a band
[x_b, x_s]. The band ratio y0 = x_s / x_b solves F(y0) = 1 - lambda and does
not depend on rho; both thresholds scale as rho**(1/(1-alpha)).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .params import CharacteristicExponents, ModelParams, ParameterError, compute_exponents

Y_SCAN_START = 1.0 + 1e-6
Y_SCAN_CAP = 1e9
BISECTION_RTOL = 1e-13
CROSS_FORM_RTOL = 1e-8


class SolverError(RuntimeError):
    """Raised when a numerical step cannot produce a trustworthy answer."""


class MultipleRootsWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ThresholdPolicy:
    """Reflection band: buy below ``x_b``, sell above ``x_s``."""

    x_b: float
    x_s: float

    def __post_init__(self):
        if not (0.0 < self.x_b <= self.x_s) or not math.isfinite(self.x_s):
            raise ValueError(f"need 0 < x_b <= x_s < inf, got ({self.x_b}, {self.x_s})")

    @property
    def ratio(self) -> float:
        return self.x_s / self.x_b

    @property
    def midpoint(self) -> float:
        """Geometric midpoint sqrt(x_b * x_s) of the band."""
        return math.sqrt(self.x_b * self.x_s)

    def scaled(self, factor: float) -> ThresholdPolicy:
        return ThresholdPolicy(self.x_b * factor, self.x_s * factor)


def f_ratio(y, exps: CharacteristicExponents, alpha: float):
    """Evaluate F(y) whose level set F(y) = 1 - lambda fixes the band ratio.

    Numerator and denominator are divided by y**n and differences of powers
    are formed with expm1 to avoid overflow for large y and cancellation
    near y = 1. Accepts scalars or arrays with every element > 1.
    """
    m, n, a = exps.m, exps.n, alpha
    if isinstance(y, (float, int)):
        return _f_ratio_scalar(float(y), m, n, a)
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 1.0)):
        raise ValueError("F is defined for y > 1 only")
    L = np.log(y)
    k1 = (n - 1.0) * (a - m)
    k2 = (1.0 - m) * (n - a)
    e_an = np.expm1((a - n) * L)  # y^(a-n) - 1
    e_ma = np.expm1((m - a) * L)  # y^(m-a) - 1
    num = k1 * np.exp((m - 1.0) * L) * e_an + k2 * np.exp((a - 1.0) * L) * e_ma
    den = k1 * e_an + k2 * np.exp((a - n) * L) * e_ma
    if np.any(np.abs(den) < 1e-300):
        raise SolverError("degenerate denominator in F; check the exponents")
    out = num / den
    return float(out) if out.ndim == 0 else out


def _f_ratio_scalar(y: float, m: float, n: float, a: float) -> float:
    # same expression as f_ratio with math instead of numpy (root-finder hot path)
    if not y > 1.0:
        raise ValueError("F is defined for y > 1 only")
    L = math.log(y)
    k1 = (n - 1.0) * (a - m)
    k2 = (1.0 - m) * (n - a)
    e_an = math.expm1((a - n) * L)
    e_ma = math.expm1((m - a) * L)
    num = k1 * math.exp((m - 1.0) * L) * e_an + k2 * math.exp((a - 1.0) * L) * e_ma
    den = k1 * e_an + k2 * math.exp((a - n) * L) * e_ma
    if abs(den) < 1e-300:
        raise SolverError("degenerate denominator in F; check the exponents")
    return num / den


def _f_ratio_derivative(y: float, exps: CharacteristicExponents, alpha: float) -> float:
    # central difference, only used for a single polishing step
    h = 1e-6 * (y - 1.0)
    return (f_ratio(y + h, exps, alpha) - f_ratio(y - h, exps, alpha)) / (2.0 * h)


def solve_y0(lam: float, exps: CharacteristicExponents, alpha: float) -> float:
    """Band ratio y0 > 1 with F(y0) = 1 - lam.

    The grid 1 + 1e-6 * 2**k (k = 0, 1, ...) up to 1e9 is scanned for sign
    changes of F - (1 - lam); the smallest bracket is refined by bisection
    and a single guarded Newton step. More than one sign change triggers a
    ``MultipleRootsWarning`` and the smallest root is kept.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0,1), got {lam}")
    target = 1.0 - lam

    ys = [Y_SCAN_START]
    while ys[-1] < Y_SCAN_CAP:
        ys.append(1.0 + 2.0 * (ys[-1] - 1.0))
    ys = np.array(ys)
    g = f_ratio(ys, exps, alpha) - target
    crossings = np.flatnonzero(np.sign(g[:-1]) != np.sign(g[1:]))
    if crossings.size == 0:
        raise SolverError(
            f"no root of F(y) = {target} bracketed on [{Y_SCAN_START}, {Y_SCAN_CAP:g}]"
        )
    if crossings.size > 1:
        warnings.warn(
            f"F(y) = 1 - lambda has {crossings.size} bracketed roots; using the smallest",
            MultipleRootsWarning,
            stacklevel=2,
        )
    i = crossings[0]
    lo, hi = float(ys[i]), float(ys[i + 1])
    g_lo = float(g[i])
    if g_lo == 0.0:
        return float(lo)
    while hi - lo > BISECTION_RTOL * hi:
        mid = float(0.5 * (lo + hi))
        g_mid = f_ratio(mid, exps, alpha) - target
        if g_mid == 0.0:
            return float(mid)
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    y = 0.5 * (lo + hi)
    res = f_ratio(y, exps, alpha) - target
    slope = _f_ratio_derivative(y, exps, alpha)
    if slope != 0.0:
        y_new = y - res / slope
        if lo <= y_new <= hi and abs(f_ratio(y_new, exps, alpha) - target) < abs(res):
            y = y_new
    return float(y)


def threshold_constant(params: ModelParams, exps: CharacteristicExponents, y0: float) -> float:
    """Price-free factor K_b with x_b(rho) = K_b * rho**(1/(1-alpha))."""
    m, n, a = exps.m, exps.n, params.alpha
    base = (2.0 * params.c * a * (y0**n - y0**a)) / (
        params.gamma**2 * params.p * (1.0 - m) * (n - a) * (y0**n - (1.0 - params.lam) * y0)
    )
    return base ** (1.0 / (1.0 - a))


def solve_thresholds(
    rho: float, params: ModelParams, exps: CharacteristicExponents, y0: float
) -> ThresholdPolicy:
    if not rho > 0:
        raise ParameterError(f"price rho > 0 violated: {rho}")
    x_b = threshold_constant(params, exps, y0) * rho ** (1.0 / (1.0 - params.alpha))
    return ThresholdPolicy(x_b, x_b * y0)


def _coef_A(q, x, H, exps, alpha):
    m, n = exps.m, exps.n
    return (q * (n - 1.0) * x - alpha * (n - alpha) * H * x**alpha) / (m * (n - m) * x**m)


def _coef_B(q, x, H, exps, alpha):
    m, n = exps.m, exps.n
    return (q * (m - 1.0) * x - alpha * (m - alpha) * H * x**alpha) / (n * (m - n) * x**n)


@dataclass(frozen=True)
class ValueFunction:
    """Piecewise closed-form value of the fixed-price control problem.

    ``p x + C1`` on [0, x_b], ``A x^m + B x^n + H x^alpha`` on (x_b, x_s) and
    ``p (1-lambda) x + C2`` on [x_s, inf). At the knots themselves the middle
    branch is used.
    """

    policy: ThresholdPolicy
    A: float
    B: float
    H: float
    C1: float
    C2: float
    rho: float
    params: ModelParams
    exponents: CharacteristicExponents
    y0: float

    def _branches(self, x):
        x = np.asarray(x, dtype=float)
        low = x < self.policy.x_b
        high = x > self.policy.x_s
        mid = ~(low | high)
        return x, low, mid, high

    def derivative(self, x, order: int = 0):
        """Closed-form value (order 0) or its first/second derivative."""
        if order not in (0, 1, 2):
            raise ValueError("order must be 0, 1 or 2")
        x, low, mid, high = self._branches(x)
        if np.any(x < 0):
            raise ValueError("value function is defined for x >= 0")
        out = np.empty_like(x)
        pr = self.params
        q_low, q_high = pr.p, pr.sell_price
        if order == 0:
            out[low] = q_low * x[low] + self.C1
            out[high] = q_high * x[high] + self.C2
        elif order == 1:
            out[low] = q_low
            out[high] = q_high
        else:
            out[low] = 0.0
            out[high] = 0.0
        xm = x[mid]
        m, n, a = self.exponents.m, self.exponents.n, pr.alpha
        terms = ((self.A, m), (self.B, n), (self.H, a))
        acc = np.zeros_like(xm)
        for coef, k in terms:
            factor = 1.0
            for j in range(order):
                factor *= k - j
            acc += coef * factor * xm ** (k - order)
        out[mid] = acc
        return float(out) if out.ndim == 0 else out

    def __call__(self, x):
        return self.derivative(x, 0)

    def smooth_fit_residuals(self) -> np.ndarray:
        """Relative residuals of value, slope and curvature matching at both knots."""
        pr = self.params
        m, n, a = self.exponents.m, self.exponents.n, pr.alpha
        out = []
        for x, q, C in ((self.policy.x_b, pr.p, self.C1), (self.policy.x_s, pr.sell_price, self.C2)):
            v = self.A * x**m + self.B * x**n + self.H * x**a
            v1 = m * self.A * x ** (m - 1) + n * self.B * x ** (n - 1) + a * self.H * x ** (a - 1)
            v2 = (
                m * (m - 1) * self.A * x ** (m - 2)
                + n * (n - 1) * self.B * x ** (n - 2)
                + a * (a - 1) * self.H * x ** (a - 2)
            )
            curv_scale = (
                abs(m * (m - 1) * self.A * x ** (m - 2))
                + abs(n * (n - 1) * self.B * x ** (n - 2))
                + abs(a * (a - 1) * self.H * x ** (a - 2))
            )
            out += [
                (v - (q * x + C)) / max(abs(v), abs(q * x + C), 1e-300),
                (v1 - q) / q,
                v2 / curv_scale,
            ]
        return np.array(out)


def value_coefficients(rho, params, exps, policy):
    """(A, B, H) from the x_b-side closed forms and the same from the x_s side."""
    a = params.alpha
    H = 2.0 * params.c * rho / (params.gamma**2 * (exps.n - a) * (a - exps.m))
    at_b = (
        _coef_A(params.p, policy.x_b, H, exps, a),
        _coef_B(params.p, policy.x_b, H, exps, a),
    )
    at_s = (
        _coef_A(params.sell_price, policy.x_s, H, exps, a),
        _coef_B(params.sell_price, policy.x_s, H, exps, a),
    )
    return H, at_b, at_s


def solve_value_function(
    rho: float,
    params: ModelParams,
    exps: CharacteristicExponents,
    policy: ThresholdPolicy,
    y0: float | None = None,
) -> ValueFunction:
    """Closed-form value function for a band solved under the same price.

    A and B come from the slope and curvature conditions at x_b. Raises
    ``SolverError`` if the same conditions at x_s then fail by more than 1e-8
    relative to the size of their terms, which signals a bad band ratio.
    (Re-deriving A from the x_s side instead is ill-conditioned once the
    band is wide, because A x^m is negligible there.)
    """
    H, (A, B), _ = value_coefficients(rho, params, exps, policy)
    m, n, a = exps.m, exps.n, params.alpha
    xb, xs = policy.x_b, policy.x_s
    C1 = A * xb**m + B * xb**n + H * xb**a - params.p * xb
    C2 = A * xs**m + B * xs**n + H * xs**a - params.sell_price * xs
    v = ValueFunction(
        policy, A, B, H, C1, C2, rho, params, exps, policy.ratio if y0 is None else y0
    )
    res = v.smooth_fit_residuals()
    if not np.all(np.abs(res) <= CROSS_FORM_RTOL):
        raise SolverError(f"smooth fit fails at the band edges: residuals {res.tolist()}")
    return v


def evaluate_value(v: ValueFunction, x):
    return v(x)


def hjb_residual(v: ValueFunction, x):
    """The three brackets of the HJB quasi-variational inequality at x > 0.

    Returns ``(ode_term, buy_term, sell_term)`` where
    ``ode_term = r v - c rho x^alpha - delta x v' - gamma^2 x^2 v'' / 2``,
    ``buy_term = p - v'`` and ``sell_term = v' - p (1-lambda)``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("HJB residual needs x > 0")
    pr = v.params
    val = v.derivative(x, 0)
    d1 = v.derivative(x, 1)
    d2 = v.derivative(x, 2)
    ode = pr.r * val - pr.c * v.rho * x**pr.alpha - pr.delta * x * d1 - 0.5 * pr.gamma**2 * x**2 * d2
    return ode, pr.p - d1, d1 - pr.sell_price


def solve_single_agent(rho: float, params: ModelParams) -> ValueFunction:
    exps = compute_exponents(params)
    y0 = solve_y0(params.lam, exps, params.alpha)
    policy = solve_thresholds(rho, params, exps, y0)
    return solve_value_function(rho, params, exps, policy, y0)
