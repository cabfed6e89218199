//! Decision-tree policies.
//!
//! A [`DecisionTree`] is stored as an arena in breadth-first order: node 0 is
//! the root and children are numbered in the order they are expanded, with
//! siblings sorted by outcome. Every node caches its realization set, its
//! expected reward `f_E` and the cost accumulated on the path to it.
//!
//! [`greedy_policy`] picks, at every impure node, the unused splitting item
//! maximising expected gain per unit cost. Exact ties are common (all three
//! root items of the bundled counterexample gain 18/25), so the rule that
//! resolves them is explicit: [`TieBreak::LowestIndex`], the default, takes
//! the first item in document order and is what makes greedy choose `e1` at
//! that root.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{node_mass, validate_instance, Instance, ItemSet, Outcome, RealizationSet};
use crate::objective::{expected_reward, marginal_gain};
use crate::rational::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Leaf,
    Internal { item: usize, children: Vec<(Outcome, NodeId)> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub set: RealizationSet,
    pub kind: NodeKind,
    pub f_e: Rational,
    pub path_cost: Rational,
    pub parent: Option<NodeId>,
    pub depth: usize,
    /// Items chosen on the path from the root to this node.
    pub used: ItemSet,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf)
    }

    pub fn item(&self) -> Option<usize> {
        match self.kind {
            NodeKind::Leaf => None,
            NodeKind::Internal { item, .. } => Some(item),
        }
    }

    pub fn children(&self) -> &[(Outcome, NodeId)] {
        match &self.kind {
            NodeKind::Leaf => &[],
            NodeKind::Internal { children, .. } => children,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    leaf_of: Vec<NodeId>,
}

impl DecisionTree {
    pub const ROOT: NodeId = NodeId(0);

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate().map(|(k, n)| (NodeId(k), n))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf reached by realization `phi`.
    pub fn leaf_of(&self, phi: usize) -> Option<NodeId> {
        self.leaf_of.get(phi).copied()
    }

    /// Node reached by a sequence of (item, outcome) choices from the root,
    /// provided each step uses the item the tree actually chooses there.
    pub fn follow(&self, path: &[(usize, Outcome)]) -> Option<NodeId> {
        let mut at = Self::ROOT;
        for &(item, outcome) in path {
            let node = self.node(at);
            if node.item() != Some(item) {
                return None;
            }
            at = node.children().iter().find(|(o, _)| *o == outcome)?.1;
        }
        Some(at)
    }

    /// True when `a` lies on the root path of `b` (including `a == b`).
    pub fn is_ancestor_or_self(&self, a: NodeId, b: NodeId) -> bool {
        let mut at = Some(b);
        while let Some(id) = at {
            if id == a {
                return true;
            }
            at = self.node(id).parent;
        }
        false
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(|(_, n)| n.is_leaf()).map(|(id, _)| id)
    }
}

/// Builds a tree breadth-first, asking `choose` for the item at every impure
/// node. The chosen item must split the node.
fn build_tree(
    inst: &Instance,
    mut choose: impl FnMut(&RealizationSet, ItemSet) -> Result<usize>,
) -> Result<DecisionTree> {
    let root_set = inst.all_realizations();
    let mut nodes = vec![Node {
        f_e: expected_reward(inst, &root_set)?,
        set: root_set,
        kind: NodeKind::Leaf,
        path_cost: Rational::zero(),
        parent: None,
        depth: 0,
        used: ItemSet::empty(),
    }];
    let mut leaf_of = vec![DecisionTree::ROOT; inst.num_realizations()];
    let mut queue = VecDeque::from([DecisionTree::ROOT]);
    while let Some(id) = queue.pop_front() {
        let (set, used, cost, depth) = {
            let n = &nodes[id.0];
            (n.set.clone(), n.used, n.path_cost.clone(), n.depth)
        };
        if inst.is_pure(&set) {
            for r in set.iter() {
                leaf_of[r] = id;
            }
            continue;
        }
        let item = choose(&set, used)?;
        if used.contains(item) || !set.is_split_by(inst, item) {
            return Err(Error::Invalid(format!(
                "item {} does not split node {}",
                inst.items()[item].id,
                set.display_ids(inst)
            )));
        }
        let mut children = Vec::new();
        for (outcome, child) in set.split(inst, item) {
            let child_id = NodeId(nodes.len());
            nodes.push(Node {
                f_e: expected_reward(inst, &child)?,
                set: child,
                kind: NodeKind::Leaf,
                path_cost: &cost + inst.cost(item),
                parent: Some(id),
                depth: depth + 1,
                used: used.with(item),
            });
            children.push((outcome, child_id));
            queue.push_back(child_id);
        }
        nodes[id.0].kind = NodeKind::Internal { item, children };
    }
    Ok(DecisionTree { nodes, leaf_of })
}

/// How greedy resolves exactly equal gain/cost ratios.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum TieBreak {
    #[default]
    LowestIndex,
    HighestIndex,
    /// Pseudo-random, but a fixed function of the seed and the tied items.
    SeededRandom(u64),
}

impl TieBreak {
    /// Picks one of `candidates` (sorted item indices, non-empty).
    pub fn pick(&self, candidates: &[usize]) -> usize {
        match self {
            TieBreak::LowestIndex => candidates[0],
            TieBreak::HighestIndex => candidates[candidates.len() - 1],
            TieBreak::SeededRandom(seed) => {
                let mix = candidates.iter().fold(*seed, |h, &c| {
                    (h ^ c as u64).wrapping_mul(0x0000_0100_0000_01b3).rotate_left(17)
                });
                let mut rng = ChaCha8Rng::seed_from_u64(mix);
                candidates[rng.random_range(0..candidates.len())]
            }
        }
    }
}

impl fmt::Display for TieBreak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TieBreak::LowestIndex => f.write_str("lowest"),
            TieBreak::HighestIndex => f.write_str("highest"),
            TieBreak::SeededRandom(seed) => write!(f, "random:{seed}"),
        }
    }
}

impl FromStr for TieBreak {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lowest" => Ok(TieBreak::LowestIndex),
            "highest" => Ok(TieBreak::HighestIndex),
            _ => s
                .strip_prefix("random:")
                .and_then(|seed| seed.parse().ok())
                .map(TieBreak::SeededRandom)
                .ok_or_else(|| format!("unknown tie-break {s:?} (expected lowest, highest or random:SEED)")),
        }
    }
}

impl Serialize for TieBreak {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// A candidate item at a node with its gain and gain per unit cost.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Candidate {
    pub item: usize,
    pub gain: Rational,
    pub ratio: Rational,
}

/// Unused items that split `set`, scored as greedy sees them.
pub fn greedy_candidates(inst: &Instance, set: &RealizationSet, used: ItemSet) -> Result<Vec<Candidate>> {
    (0..inst.num_items())
        .filter(|&e| !used.contains(e) && set.is_split_by(inst, e))
        .map(|e| {
            let gain = marginal_gain(inst, set, used, e)?;
            let ratio = &gain / inst.cost(e);
            Ok(Candidate { item: e, gain, ratio })
        })
        .collect()
}

pub fn greedy_policy(inst: &Instance, tie: TieBreak) -> Result<DecisionTree> {
    validate_instance(inst).into_result()?;
    build_tree(inst, |set, used| {
        let candidates = greedy_candidates(inst, set, used)?;
        let best = candidates.iter().map(|c| &c.ratio).max().ok_or_else(|| {
            Error::Invalid(format!("no item splits impure node {}", set.display_ids(inst)))
        })?;
        let tied: Vec<usize> = candidates.iter().filter(|c| &c.ratio == best).map(|c| c.item).collect();
        Ok(tie.pick(&tied))
    })
}

/// Expected cost of a policy, per realization and on average.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CostProfile {
    pub per_realization: Vec<Rational>,
    pub c_avg: Rational,
}

impl CostProfile {
    /// Profile from explicit per-realization costs; `c_avg` is their prior-weighted mean.
    pub fn from_costs(inst: &Instance, per_realization: Vec<Rational>) -> Result<Self> {
        if per_realization.len() != inst.num_realizations() {
            return Err(Error::ProfileMismatch(format!(
                "{} costs for {} realizations",
                per_realization.len(),
                inst.num_realizations()
            )));
        }
        let c_avg = per_realization.iter().enumerate().map(|(r, c)| inst.prior(r) * c).sum();
        Ok(CostProfile { per_realization, c_avg })
    }
}

/// Prices every realization's root-to-leaf path with the item costs of
/// `inst`, which may differ from the costs the tree was built under.
pub fn evaluate_cost(inst: &Instance, tree: &DecisionTree) -> CostProfile {
    let per_realization = (0..inst.num_realizations())
        .map(|r| {
            let mut cost = Rational::zero();
            let mut at = tree.node(tree.leaf_of[r]).parent;
            while let Some(id) = at {
                let node = tree.node(id);
                cost += inst.cost(node.item().expect("parents are internal"));
                at = node.parent;
            }
            cost
        })
        .collect();
    CostProfile::from_costs(inst, per_realization).expect("tree built for this instance")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OptimalConfig {
    /// Upper bound on memoised realization sets.
    pub max_states: usize,
}

impl Default for OptimalConfig {
    fn default() -> Self {
        OptimalConfig { max_states: 1 << 20 }
    }
}

struct Memo<'a> {
    inst: &'a Instance,
    cap: usize,
    table: HashMap<RealizationSet, (Rational, Option<usize>)>,
}

impl Memo<'_> {
    fn solve(&mut self, set: &RealizationSet) -> Result<Rational> {
        if let Some((v, _)) = self.table.get(set) {
            return Ok(v.clone());
        }
        if self.table.len() >= self.cap {
            return Err(Error::TooLarge(format!("more than {} memo states", self.cap)));
        }
        let inst = self.inst;
        let entry = if inst.is_pure(set) {
            (Rational::zero(), None)
        } else {
            let mass = node_mass(inst, set)?;
            let mut best: Option<(Rational, usize)> = None;
            // The surviving set alone determines the subproblem: an item used
            // higher up cannot split it again.
            for e in (0..inst.num_items()).filter(|&e| set.is_split_by(inst, e)) {
                let mut v = inst.cost(e).clone();
                for (_, child) in set.split(inst, e) {
                    let w = node_mass(inst, &child)? / &mass;
                    v += w * self.solve(&child)?;
                }
                if best.as_ref().is_none_or(|(b, _)| &v < b) {
                    best = Some((v, e));
                }
            }
            let (v, e) = best.ok_or_else(|| {
                Error::Invalid(format!("no item splits impure node {}", set.display_ids(inst)))
            })?;
            (v, Some(e))
        };
        let v = entry.0.clone();
        self.table.insert(set.clone(), entry);
        Ok(v)
    }
}

pub fn optimal_policy(inst: &Instance) -> Result<(DecisionTree, CostProfile)> {
    optimal_policy_with(inst, OptimalConfig::default())
}

/// Minimum expected-cost tree by memoised recursion over realization sets.
/// Ties go to the lowest item index.
pub fn optimal_policy_with(inst: &Instance, cfg: OptimalConfig) -> Result<(DecisionTree, CostProfile)> {
    validate_instance(inst).into_result()?;
    let mut memo = Memo { inst, cap: cfg.max_states, table: HashMap::new() };
    let best = memo.solve(&inst.all_realizations())?;
    let tree = build_tree(inst, |set, _| {
        memo.table
            .get(set)
            .and_then(|(_, e)| *e)
            .ok_or_else(|| Error::Invalid(format!("no optimal choice recorded for {}", set.display_ids(inst))))
    })?;
    let profile = evaluate_cost(inst, &tree);
    debug_assert_eq!(profile.c_avg, best);
    Ok((tree, profile))
}

/// Nodes from the root to the leaf of realization `phi`, inclusive.
pub fn trace(tree: &DecisionTree, phi: usize) -> Result<Vec<NodeId>> {
    let leaf = tree
        .leaf_of(phi)
        .ok_or_else(|| Error::Unknown { kind: "realization", id: phi.to_string() })?;
    let mut path = vec![leaf];
    let mut at = tree.node(leaf).parent;
    while let Some(id) = at {
        path.push(id);
        at = tree.node(id).parent;
    }
    path.reverse();
    Ok(path)
}

/// Graphviz rendering. Nodes are emitted in breadth-first order as `n0, n1, ...`,
/// labelled `"{name}: {set}, f_E = p/q"`; edges are labelled `"{item} = {outcome}"`.
pub fn to_dot(tree: &DecisionTree, inst: &Instance, name: impl Fn(NodeId) -> String) -> String {
    let mut out = String::from("digraph policy {\n  node [shape=box];\n");
    for (id, node) in tree.nodes() {
        out.push_str(&format!(
            "  {id} [label=\"{}: {}, f_E = {}\"];\n",
            name(id),
            node.set.display_ids(inst),
            node.f_e
        ));
    }
    for (id, node) in tree.nodes() {
        if let Some(item) = node.item() {
            for (outcome, child) in node.children() {
                out.push_str(&format!(
                    "  {id} -> {child} [label=\"{} = {outcome}\"];\n",
                    inst.items()[item].id
                ));
            }
        }
    }
    out.push_str("}\n");
    out
}
