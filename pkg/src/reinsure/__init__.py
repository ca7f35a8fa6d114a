"""Markov-modulated insurance risk: simulation, claim filtering, and
optimal dynamic reinsurance under partial information."""

from .errors import (
    ConfigError,
    DegenerateObservation,
    DomainError,
    NonConcaveError,
    NumericalError,
    ReinsureError,
    StabilityError,
)
from .model import (
    AdmissibilityReport,
    ClaimDistribution,
    Contract,
    CustomContract,
    Discrete,
    ExcessOfLoss,
    Exponential,
    Gamma,
    MarketParams,
    ModelSpec,
    Proportional,
    TruncatedNormal,
    ceded_mean,
    ceded_second_moment,
    check_admissibility,
    claim_mean,
    claim_second_moment,
    exp_moment,
    exp_z_moment,
    mgf,
    retained,
    retained_exp_moment,
    retention_gradient_kernel,
)
from .filtering import (
    FilterState,
    FilterTrajectory,
    initial_filter,
    integrate_ks_rk4,
    jump_map,
    jump_update,
    ks_drift,
    propagate,
    run_filter,
)
from .premiums import (
    PremiumPrinciple,
    StandardPremiums,
    insurer_premium,
    reinsurance_premium,
    validate_premium_contract,
)
from .simulate import (
    ChainPath,
    ClaimPath,
    WealthSample,
    path_rng,
    simulate_chain,
    simulate_claims,
    simulate_path,
    wealth_path,
)
from .solver import (
    FullInfoPolicy,
    OracleSolution,
    PolicyTable,
    SimplexGrid,
    SolverConfig,
    Tag,
    ValueTable,
    full_info_policy,
    hamiltonian_h,
    optimize_u,
    single_state_oracle,
    solve_backward,
)
from .strategies import (
    ClosedFormExcessEV,
    ClosedFormPropEV,
    ClosedFormPropVar,
    ConstantStrategy,
    FeedbackStrategy,
    FullInfoStrategy,
    Strategy,
    evaluate,
    u_star_excess_ev,
    u_star_prop_ev,
    u_star_prop_var,
)
from .evaluation import (
    InfoComparisonReport,
    SnellDiagnostics,
    ThetaSweepResult,
    UtilityEstimate,
    bellman_diagnostic,
    bellman_diagnostics,
    closed_form_retention_lattice,
    compare_information,
    mc_expected_utility,
    mc_utilities,
    theta_sweep,
)

__version__ = "0.1.0"
