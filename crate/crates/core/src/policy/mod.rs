//! Counterfactual policy experiments on a trained bundle: reopening
//! scenarios, the employment/cases frontier, per-policy marginal effects, the
//! protest counterfactual and the employment equivalent of a case count.

mod blm;
mod frontier;
mod marginal;
mod report;
mod scenario;

pub use blm::{
    blm_counterfactual, employment_shift_cases, employment_value_equivalence, BlmConfig, BlmDay, BlmReport,
    Equivalence, EquivalenceSetup, EQUIVALENCE_MAX_SHIFT, EQUIVALENCE_TOLERANCE,
};
pub use frontier::{dominance_filter, dominates, efficient_frontier};
pub use marginal::{marginal_policy_stats, marginal_policy_stats_partial, rank_by_ratio, MarginalPolicyStat};
pub use report::{frontier_points, read_scenarios_csv, write_scenarios_csv, FrontierPoint};
pub use scenario::{
    date_range, enumerate_scenarios, scenario_trajectories, simulate_scenario, sweep_scenarios, OpenMask,
    PolicyScenario, ScenarioOutcome, DEFAULT_HORIZON, LEVER_NAMES,
};
