"""Optimal liquidation and oracle-manipulation simulation on a CPMM oracle.

The package models a lending protocol whose price oracle is a fee-charging
constant-product market maker, computes closed-form optimal liquidation
profits, quantifies sandwich-attack (OEV) profitability, and locates the
fee level at which every attack becomes unprofitable.  Brute-force oracles
(discretized dynamic program, quadrature, split inequalities) ground every
closed form.
"""

from .amm import InsufficientReservesError, PoolState
from .attack import (
    AttackResult,
    CriticalFeeResult,
    DeltaBounds,
    NonMonotoneFeeProfileError,
    NoThresholdError,
    OptimizeOutcome,
    attack_profit,
    critical_fee,
    delta_baddebt_cap,
    delta_bounds,
    delta_max_no_revert,
    delta_trigger_bound,
    front_run,
    limiting_profit_nofee,
    optimize_attack,
)
from .config import ConfigError, ScenarioConfig, load_config
from .engine import (
    Binding,
    LastBinding,
    LiquidationResult,
    Strategy,
    best_strategy,
    final_tranche,
    interior_maximum,
    marginal_phase_profit,
    run_liquidation,
    single_shot_profit,
    strategy_grid,
)
from .lending import (
    DEFAULT_CONVENTION,
    BoundSet,
    ClosingBound,
    LoanPosition,
    RepayConvention,
    RiskParams,
    bound_closing,
    bound_collateral,
    bound_debt,
    compute_bounds,
    debt_exhaustion_bound,
    health_factor,
    hf_after_marginal,
    marginal_repay_total,
    post_liquidation_state,
    repay_amount,
)
from .oracles import (
    Instance,
    OracleConfig,
    dp_oracle,
    hf_monotonicity_check,
    integral_oracle,
    random_instances,
    simulate_liquidation_sequence,
    subadditivity_check,
    verification_report,
)

__version__ = "0.1.0"

__all__ = [
    "AttackResult", "Binding", "BoundSet", "ClosingBound", "ConfigError",
    "CriticalFeeResult", "DEFAULT_CONVENTION", "DeltaBounds", "Instance",
    "InsufficientReservesError", "LastBinding", "LiquidationResult",
    "LoanPosition", "NoThresholdError", "NonMonotoneFeeProfileError",
    "OptimizeOutcome", "OracleConfig", "PoolState", "RepayConvention",
    "RiskParams", "ScenarioConfig", "Strategy", "attack_profit",
    "best_strategy", "bound_closing", "bound_collateral", "bound_debt",
    "compute_bounds", "critical_fee", "debt_exhaustion_bound",
    "delta_baddebt_cap", "delta_bounds", "delta_max_no_revert",
    "delta_trigger_bound", "dp_oracle", "final_tranche", "front_run",
    "health_factor", "hf_after_marginal", "hf_monotonicity_check",
    "integral_oracle", "interior_maximum", "limiting_profit_nofee",
    "load_config", "marginal_phase_profit", "marginal_repay_total",
    "optimize_attack", "post_liquidation_state", "random_instances",
    "repay_amount", "run_liquidation", "simulate_liquidation_sequence",
    "single_shot_profit", "strategy_grid", "subadditivity_check",
    "verification_report",
]
