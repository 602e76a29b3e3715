"""Two-opinion multi-sample voting dynamics on two-community random graphs.

Simulation of polynomial voting rules on the stochastic block model G(2n,p,q),
plus the induced two-dimensional mean-field dynamics: fixed points, stability,
phase thresholds, and concentration diagnostics.
"""

from .sbm_graph import (
    Graph,
    DegreeStats,
    generate_sbm,
    degree_stats,
    connectivity_report,
    deg_in_set,
    graph_from_edges,
    save_graph,
    load_graph,
)
from .voting_core import (
    STATUS_CONSENSUS,
    STATUS_TIMEOUT,
    VotingRule,
    OpinionState,
    Trajectory,
    InitFamily,
    make_rule_bo3,
    make_rule_bo2,
    make_rule_best_of,
    make_rule_polynomial,
    state_from_member,
    state_from_sets,
    fractions,
    to_delta,
    from_delta,
    step,
    step_probability,
    step_sampling,
    step_probabilities,
    run_until_consensus,
    make_initial,
    parse_init_family,
    biased_global,
    half_half,
    clustered,
    exact_counts,
    random_density,
    write_trajectory_csv,
)
from .induced_dynamics import (
    NO_CONVERGENCE,
    UNMATCHED,
    InducedMap,
    Orbit,
    induced_map,
    u_of_r,
    r_of_u,
    eval_H,
    eval_T_bo3,
    eval_T_bo2,
    eval_T_generic,
    iterate,
    orbit_limit,
    check_S_closed,
    write_orbit_csv,
)
from .fixed_point_analysis import (
    CLASS_CONSENSUS,
    CLASS_MARGINAL,
    CLASS_SADDLE,
    CLASS_SINK,
    CLASS_SOURCE,
    Matrix2,
    FixedPointReport,
    ThresholdResult,
    fixed_points_bo3,
    fixed_points_bo2,
    fixed_point_locations,
    jacobian_analytic,
    jacobian_numeric,
    eigen_2x2,
    singular_values_2x2,
    classify,
    analyze,
    eigen_table,
    threshold_r,
    competitive_checks,
)
from .concentration_probe import (
    WStatReport,
    w_stat,
    w_hat,
    w_concentration_scan,
    p2_scan,
    p3_scan,
    variance_profile,
    goodness_report,
)
from .experiment_harness import (
    ExperimentConfig,
    TrialRecord,
    rule_from_name,
    derive_seed,
    step_budget,
    run_trials,
    phase_sweep,
    sink_persistence,
    trajectory_deviation,
    escape_time,
    worst_case_scan,
    consensus_time_scaling,
    adversarial_families,
    write_results_csv,
)

__version__ = "0.1.0"
