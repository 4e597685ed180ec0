//! Variance-reduced Q-learning for tabular discounted MDPs.
//!
//! * [`mdp`]: MDP representation, exact Bellman operators and solvers.
//! * [`sampling`]: the generative model with alias-table draws and labelled streams.
//! * [`algorithms`]: ordinary and variance-reduced synchronous Q-learning.
//! * [`bounds`]: parameter planning and sample-complexity calculators.
//! * [`harness`]: MDP generators, multi-trial experiments, CSV traces and summaries.

pub mod algorithms;
pub mod bounds;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod sampling;

pub use algorithms::{
    monte_carlo_bellman, oracle_vr_run, oracle_vr_update, ordinary_q_learning, run_epoch, two_phase_minimax,
    vr_q_learning, vr_q_learning_with_sampler, vr_update, Phase, RunTrace, StepRule, TraceRecord, TwoPhaseConfig,
    TwoPhaseReport, VrqlConfig,
};
pub use bounds::{corollary_budget, epochs_needed, plan_parameters, t_max, worst_case_budget, ParameterPlan};
pub use error::{Error, Result};
pub use mdp::{
    bellman_apply, empirical_bellman_apply, greedy_policy, instance_complexity, linf_distance, policy_q_exact,
    sigma_star, solve_optimal_q, validate_mdp, InstanceComplexity, Policy, QFunction, TabularMdp,
};
pub use sampling::{build_sampler, draw_sample_matrix, split_stream, GenerativeSampler, SampleMatrix};
