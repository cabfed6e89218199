//! Stop nodes and the overcounting audit.
//!
//! For a threshold `x`, the stop node of a realization is the deepest node on
//! its root-to-leaf path whose expected reward is still strictly below `x`.
//! The consistent sets of the distinct stop nodes need not partition the
//! realizations: when one stop node is an ancestor of another, the shared
//! realizations are counted once per node. [`overcount_audit`] measures that
//! excess against a reference cost profile.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::instance::{node_mass, Instance, RealizationSet};
use crate::objective::{compute_eta, coverage_value, ObjectiveKind};
use crate::policy::{trace, CostProfile, DecisionTree, NodeId};
use crate::rational::Rational;

/// Tolerance on the floating-point side of the bound comparison.
pub const BOUND_TOLERANCE: f64 = 1e-12;

/// `Q` for the group-identification reward: a pure node scores exactly 1.
pub fn group_coverage() -> Rational {
    Rational::one()
}

fn check_threshold(tree: &DecisionTree, x: &Rational) -> Result<()> {
    let q = group_coverage();
    if x > &q {
        return Err(Error::ThresholdAboveQ { x: x.to_string(), q: q.to_string() });
    }
    let root = &tree.root().f_e;
    if x <= root {
        return Err(Error::NoStopNode { x: x.to_string(), root: root.to_string() });
    }
    Ok(())
}

/// Deepest node on `phi`'s path with `f_E < x`. Requires `f_E(root) < x <= Q`.
pub fn stop_node(tree: &DecisionTree, phi: usize, x: &Rational) -> Result<NodeId> {
    check_threshold(tree, x)?;
    let path = trace(tree, phi)?;
    Ok(*path
        .iter()
        .rev()
        .find(|&&id| &tree.node(id).f_e < x)
        .expect("root qualifies once the threshold is checked"))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StopEntry {
    pub node: NodeId,
    /// Every realization consistent with the node.
    pub set: RealizationSet,
    /// The realizations whose stop node this is.
    pub stopping: RealizationSet,
    pub f_e: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Partition,
    Overlap { first: NodeId, second: NodeId },
    Gap { uncovered: usize },
}

impl Verdict {
    pub fn is_partition(&self) -> bool {
        matches!(self, Verdict::Partition)
    }

    pub fn is_overlap(&self) -> bool {
        matches!(self, Verdict::Overlap { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StopCover {
    pub x: Rational,
    /// Distinct stop nodes, in node order.
    pub entries: Vec<StopEntry>,
    pub verdict: Verdict,
}

impl StopCover {
    pub fn entry(&self, node: NodeId) -> Option<&StopEntry> {
        self.entries.iter().find(|e| e.node == node)
    }
}

pub fn stop_cover(tree: &DecisionTree, x: &Rational) -> Result<StopCover> {
    check_threshold(tree, x)?;
    let n = tree.root().set.len();
    let mut by_node: Vec<(NodeId, Vec<usize>)> = Vec::new();
    for phi in 0..n {
        let node = stop_node(tree, phi, x)?;
        match by_node.iter_mut().find(|(id, _)| *id == node) {
            Some((_, v)) => v.push(phi),
            None => by_node.push((node, vec![phi])),
        }
    }
    by_node.sort_by_key(|(id, _)| *id);
    let entries: Vec<StopEntry> = by_node
        .into_iter()
        .map(|(node, stopping)| StopEntry {
            node,
            set: tree.node(node).set.clone(),
            stopping: RealizationSet::new(stopping),
            f_e: tree.node(node).f_e.clone(),
        })
        .collect();

    let mut verdict = None;
    'pairs: for (i, a) in entries.iter().enumerate() {
        for b in &entries[i + 1..] {
            if !a.set.is_disjoint(&b.set) {
                verdict = Some(Verdict::Overlap { first: a.node, second: b.node });
                break 'pairs;
            }
        }
    }
    let verdict = verdict.unwrap_or_else(|| {
        match (0..n).find(|&phi| !entries.iter().any(|e| e.set.contains(phi))) {
            Some(uncovered) => Verdict::Gap { uncovered },
            None => Verdict::Partition,
        }
    });
    Ok(StopCover { x: x.clone(), entries, verdict })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    /// `Σ_a p_a · E[c | a]` over distinct stop nodes, full node masses.
    pub overlap_weighted_sum: Rational,
    /// `Σ_a P(stop at a) · E[c | a]`, the expectation under the actual
    /// stop-node distribution.
    pub true_expectation: Rational,
    pub reference_c_avg: Rational,
    /// `overlap_weighted_sum - reference_c_avg`.
    pub gap: Rational,
    /// `Σ_a p_a` over distinct stop nodes; 1 exactly when the sets partition.
    pub total_stop_mass: Rational,
}

pub fn overcount_audit(
    inst: &Instance,
    tree: &DecisionTree,
    reference: &CostProfile,
    x: &Rational,
) -> Result<AuditReport> {
    if reference.per_realization.len() != inst.num_realizations() {
        return Err(Error::ProfileMismatch(format!(
            "{} costs for {} realizations",
            reference.per_realization.len(),
            inst.num_realizations()
        )));
    }
    let cover = stop_cover(tree, x)?;
    Ok(audit_cover(inst, &cover, reference))
}

/// Audit numbers for an already computed cover.
pub fn audit_cover(inst: &Instance, cover: &StopCover, reference: &CostProfile) -> AuditReport {
    let mut overlap = Rational::zero();
    let mut truth = Rational::zero();
    let mut total_mass = Rational::zero();
    for entry in &cover.entries {
        let p_a = node_mass(inst, &entry.set).expect("stop nodes are non-empty");
        let weighted: Rational =
            entry.set.iter().map(|r| inst.prior(r) * &reference.per_realization[r]).sum();
        let mean = &weighted / &p_a;
        let stopping_mass = node_mass(inst, &entry.stopping).expect("stop node has a stopper");
        overlap += weighted;
        truth += stopping_mass * &mean;
        total_mass += p_a;
    }
    AuditReport {
        gap: &overlap - &reference.c_avg,
        overlap_weighted_sum: overlap,
        true_expectation: truth,
        reference_c_avg: reference.c_avg.clone(),
        total_stop_mass: total_mass,
    }
}

fn serialize_f64_str<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub q: Rational,
    pub eta: Rational,
    pub delta: Rational,
    /// `Q / (delta * eta)`, exact.
    pub log_argument: Rational,
    /// `ln(Q / (delta * eta)) + 1` in double precision.
    #[serde(serialize_with = "serialize_f64_str")]
    pub bound_factor: f64,
    pub greedy_c_avg: Rational,
    pub optimal_c_avg: Rational,
    /// `greedy / optimal`; absent when both costs are zero.
    pub ratio: Option<Rational>,
    pub degenerate: bool,
    pub bound_satisfied: bool,
}

/// Checks `c_avg(greedy) <= c_avg(opt) * (ln(Q / (delta * eta)) + 1)` with
/// the approximation factor fixed at 1.
pub fn bound_audit(inst: &Instance, greedy: &CostProfile, opt: &CostProfile) -> Result<BoundReport> {
    let obj = ObjectiveKind::GroupId;
    let q = coverage_value(inst, &obj)?;
    let eta = compute_eta(inst, &obj)?;
    let delta = inst.min_prior().cloned().ok_or(Error::EmptySet)?;
    let log_argument = q
        .checked_div(&(&delta * &eta))
        .ok_or_else(|| Error::Invalid("delta * eta is zero".into()))?;
    let bound_factor = log_argument.to_f64().ln() + 1.0;

    let (ratio, degenerate, bound_satisfied) = if opt.c_avg.is_zero() {
        if !greedy.c_avg.is_zero() {
            return Err(Error::DegenerateBound(greedy.c_avg.to_string()));
        }
        (None, true, true)
    } else {
        let ratio = &greedy.c_avg / &opt.c_avg;
        let ok = ratio.to_f64() <= bound_factor + BOUND_TOLERANCE;
        (Some(ratio), false, ok)
    };
    Ok(BoundReport {
        q,
        eta,
        delta,
        log_argument,
        bound_factor,
        greedy_c_avg: greedy.c_avg.clone(),
        optimal_c_avg: opt.c_avg.clone(),
        ratio,
        degenerate,
        bound_satisfied,
    })
}
