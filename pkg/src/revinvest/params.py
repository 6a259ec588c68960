"""Model constants, standing-assumption checks and characteristic exponents."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

# |2*delta/gamma**2 - 1| and |2*delta/gamma**2 - alpha| must exceed this.
NONDEGENERACY_TOL = 1e-9

PARAM_KEYS = ("delta", "gamma", "r", "alpha", "lambda", "p", "c", "a0", "a1")


class ParameterError(ValueError):
    """Raised when model constants violate a hard requirement."""


@dataclass(frozen=True)
class ModelParams:
    """Exogenous constants of the partially reversible investment model.

    Defaults reproduce the base case used throughout the package
    (delta=1, gamma=2, r=3, alpha=0.6, lambda=0.6, p=0.5, c=1, a0=1, a1=0.1).

    ``lam`` is the irreversibility parameter; it is exposed as ``lambda`` in
    configuration files and on the command line.
    """

    delta: float = 1.0
    gamma: float = 2.0
    r: float = 3.0
    alpha: float = 0.6
    lam: float = 0.6
    p: float = 0.5
    c: float = 1.0
    a0: float = 1.0
    a1: float = 0.1

    def __post_init__(self):
        for name in ("delta", "gamma", "r", "alpha", "lam", "p", "c", "a0", "a1"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ParameterError(f"{_public(name)} must be a finite number, got {value!r}")
            object.__setattr__(self, name, float(value))
        for name in ("delta", "gamma", "r", "p", "c", "a0"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{_public(name)} > 0 violated: {getattr(self, name)}")
        for name in ("alpha", "lam"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ParameterError(
                    f"{_public(name)} ∈ (0,1) violated: {getattr(self, name)}"
                )
        if self.a1 < 0:
            raise ParameterError(f"a1 >= 0 violated: {self.a1}")
        g2 = self.gamma**2
        if g2 == 0.0 or not math.isfinite(2.0 * self.delta / g2):
            raise ParameterError(f"gamma > 0 violated: gamma^2 underflows for gamma = {self.gamma!r}")

    @property
    def nu(self) -> float:
        """Exponent 2*delta/gamma**2 of the stationary density."""
        return 2.0 * self.delta / self.gamma**2

    @property
    def sell_price(self) -> float:
        """Unit salvage value p*(1-lambda) received when contracting."""
        return self.p * (1.0 - self.lam)

    def replace(self, **changes) -> ModelParams:
        if "lambda" in changes:
            changes["lam"] = changes.pop("lambda")
        return replace(self, **changes)

    def to_dict(self) -> dict[str, float]:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return {k: d[k] for k in PARAM_KEYS}

    @classmethod
    def from_dict(cls, values: dict) -> ModelParams:
        unknown = set(values) - set(PARAM_KEYS)
        if unknown:
            raise ParameterError(f"unknown parameter key: {sorted(unknown)[0]!r}")
        kw = dict(values)
        if "lambda" in kw:
            kw["lam"] = kw.pop("lambda")
        return cls(**kw)


def _public(name: str) -> str:
    return "lambda" if name == "lam" else name


@dataclass(frozen=True)
class CharacteristicExponents:
    """Roots m < 0 < 1 < n of (gamma^2/2) k (k-1) + delta k - r = 0."""

    m: float
    n: float


@dataclass(frozen=True)
class ValidityReport:
    strict_ok: bool
    nondegenerate_ok: bool
    contraction_ok: bool | None = None
    messages: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        """True when nothing beyond the strict-inequality warning failed."""
        return self.nondegenerate_ok and self.contraction_ok is not False

    def with_contraction(self, K: float) -> ValidityReport:
        msgs = list(self.messages)
        ok = bool(K < 1.0)
        if not ok:
            msgs.append(f"contraction: price-map slope K = {K:.6g} >= 1, no unique equilibrium")
        return replace(self, contraction_ok=ok, messages=msgs)


def quadratic_residual(k: float, params: ModelParams) -> float:
    return 0.5 * params.gamma**2 * k * (k - 1.0) + params.delta * k - params.r


def compute_exponents(params: ModelParams) -> CharacteristicExponents:
    """Return the two roots of the characteristic quadratic of the HJB ODE.

    Raises
    ------
    ParameterError
        If ``delta >= r``; the positive root is then not above 1.
    """
    if params.delta >= params.r:
        raise ParameterError(
            f"delta < r violated (delta={params.delta}, r={params.r}): positive exponent n <= 1"
        )
    g2 = params.gamma**2
    b = params.delta / g2 - 0.5
    s = math.sqrt(b * b + 2.0 * params.r / g2)
    prod = -2.0 * params.r / g2
    # take the root without cancellation, recover the other from the product
    if b >= 0:
        m = -b - s
        n = prod / m
    else:
        n = -b + s
        m = prod / n
    return CharacteristicExponents(m=m, n=n)


def validate(params: ModelParams, contraction_K: float | None = None) -> ValidityReport:
    """Report on the standing assumptions; never raises.

    The strict inequality 2*delta + gamma^2 < r is reported but treated as a
    warning: the closed-form solution stays well defined whenever delta < r
    and the non-degeneracy condition holds.
    """
    msgs = []
    strict_ok = 2.0 * params.delta + params.gamma**2 < params.r
    if not strict_ok:
        msgs.append(
            "warning: 2*delta + gamma^2 < r does not hold "
            f"({2.0 * params.delta + params.gamma**2:.6g} >= {params.r:.6g})"
        )
    nu = params.nu
    nondegenerate_ok = (
        abs(nu - 1.0) > NONDEGENERACY_TOL and abs(nu - params.alpha) > NONDEGENERACY_TOL
    )
    if not nondegenerate_ok:
        msgs.append(f"non-degeneracy: 2*delta/gamma^2 = {nu:.12g} collides with alpha or 1")
    if params.delta >= params.r:
        nondegenerate_ok = False
        msgs.append("delta < r violated: characteristic exponent n <= 1")
    report = ValidityReport(strict_ok, nondegenerate_ok, None, msgs)
    if contraction_K is not None:
        report = report.with_contraction(contraction_K)
    return report
