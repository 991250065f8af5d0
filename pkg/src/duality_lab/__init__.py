"""Desk-scale laboratory for conditional utility-maximization duality.

Finite filtered probability spaces, small tree markets, utility/conjugate
pairs, conditional primal and dual solvers at stopping times, and the
surrounding verification toolkit (stability experiments, epsilon-nets,
minimax reconciliation).
"""

from ._kernels import HAVE_COMPILED
from .space import (
    FilteredSpace,
    SigmaAlgebra,
    check_stopping_time,
    cond_expect,
    essential_extremum,
    sigma_algebra_at,
)
from .market import (
    ArbitrageError,
    MarketError,
    MarketModel,
    build_density,
    build_market,
    check_nflvr,
    deflator_constraints,
)
from .utility import (
    UtilityPair,
    ae_dual_bound_check,
    asymptotic_elasticity_estimate,
    conjugate_eval,
    log_utility,
    power_utility,
    table_utility,
)
from .duality import (
    DualityResult,
    DualUnboundedError,
    PrimalUnboundedError,
    SolverError,
    brute_force_oracle,
    conjugacy_check,
    dual_derivative,
    dual_oracle,
    dual_relation_check,
    dual_solve,
    primal_solve,
    value_process,
)
from .analysis import (
    ConvexCompactSet,
    cond_ui_check,
    conditional_minimax_verify,
    deflator_frontier_grid,
    ftau_convex_net,
    ky_fan,
    net_cover_certificate,
    p_lim_extremum,
    partition_subconvex_net,
)
from .stability import (
    MarketSequence,
    appropriate_convergence_check,
    run_stability_experiment,
    uniform_convergence_on_set,
    v_compactness_check,
)
from .bridge import reconcile_minimax

__version__ = "0.1.0"

__all__ = [
    "HAVE_COMPILED",
    "FilteredSpace",
    "SigmaAlgebra",
    "check_stopping_time",
    "cond_expect",
    "essential_extremum",
    "sigma_algebra_at",
    "ArbitrageError",
    "MarketError",
    "MarketModel",
    "build_density",
    "build_market",
    "check_nflvr",
    "deflator_constraints",
    "UtilityPair",
    "ae_dual_bound_check",
    "asymptotic_elasticity_estimate",
    "conjugate_eval",
    "log_utility",
    "power_utility",
    "table_utility",
    "DualityResult",
    "DualUnboundedError",
    "PrimalUnboundedError",
    "SolverError",
    "brute_force_oracle",
    "conjugacy_check",
    "dual_derivative",
    "dual_oracle",
    "dual_relation_check",
    "dual_solve",
    "primal_solve",
    "value_process",
    "ConvexCompactSet",
    "cond_ui_check",
    "conditional_minimax_verify",
    "deflator_frontier_grid",
    "ftau_convex_net",
    "ky_fan",
    "net_cover_certificate",
    "p_lim_extremum",
    "partition_subconvex_net",
    "MarketSequence",
    "appropriate_convergence_check",
    "run_stability_experiment",
    "uniform_convergence_on_set",
    "v_compactness_check",
    "reconcile_minimax",
    "__version__",
]
