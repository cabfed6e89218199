//! Greedy and optimal decision-tree policies for group identification,
//! evaluated in exact rational arithmetic, with an audit of the stop-node
//! cover used in greedy approximation arguments.
//!
//! The main entry points:
//!
//! - [`parse_instance`] / [`validate_instance`] load and check an instance.
//! - [`greedy_policy`] and [`optimal_policy`] build decision trees.
//! - [`stop_cover`] and [`overcount_audit`] examine the stop nodes of a tree
//!   at a reward threshold and measure how much a node-mass-weighted cost sum
//!   overcounts when those nodes overlap.
//! - [`find_partition_violations`] mines random instances for overlaps.

pub mod audit;
pub mod counterexample;
mod error;
pub mod instance;
pub mod objective;
pub mod policy;
pub mod rational;
pub mod search;

pub use audit::{
    bound_audit, overcount_audit, stop_cover, stop_node, AuditReport, BoundReport, StopCover, StopEntry,
    Verdict,
};
pub use error::{Error, Result};
pub use instance::{
    class_masses, node_mass, parse_instance, validate_instance, ClassId, Instance, ItemSet, Outcome,
    PartialRealization, RealizationSet, ValidationReport,
};
pub use objective::{
    check_adaptive_submodularity, check_strong_adaptive_monotonicity, compute_eta, coverage_value,
    expected_reward, marginal_gain, reward, ExplicitTable, ObjectiveKind, PropertyKind, PropertyViolation,
};
pub use policy::{
    evaluate_cost, greedy_policy, optimal_policy, to_dot, trace, CostProfile, DecisionTree, NodeId, TieBreak,
};
pub use rational::Rational;
pub use search::{find_partition_violations, generate_instances, Finding, SearchConfig};
