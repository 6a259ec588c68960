"""Partially reversible investment: single-agent control, mean-field equilibrium
and N-player Monte Carlo checks."""

__version__ = "0.1.0"

from .equilibrium import (  # noqa: E402
    EquilibriumError,
    EquilibriumSolution,
    StationaryLaw,
    contraction_constant,
    gamma_map,
    inverse_demand,
    mean_price,
    solve_equilibrium,
    stationary_law,
)
from .params import (  # noqa: E402
    CharacteristicExponents,
    ModelParams,
    ParameterError,
    ValidityReport,
    compute_exponents,
    validate,
)
from .single_agent import (  # noqa: E402
    SolverError,
    ThresholdPolicy,
    ValueFunction,
    evaluate_value,
    f_ratio,
    hjb_residual,
    solve_single_agent,
    solve_thresholds,
    solve_value_function,
    solve_y0,
)
