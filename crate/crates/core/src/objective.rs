//! The group-identification reward and brute-force property checkers.
//!
//! For a realization `phi` whose consistent node is `a`,
//!
//! ```text
//! f(a, phi) = 1 - p_a^2 + (p_a^k)^2
//! ```
//!
//! where `p_a` is the prior mass of `a` and `p_a^k` the mass of the members of
//! `a` sharing `phi`'s class `k`. The node value `f_E(a)` is the
//! prior-weighted mean of `f` over the members of `a`. Once a node is pure
//! `p_a = p_a^k` and the reward is exactly 1, so the coverage value is `Q = 1`.
//!
//! The checkers enumerate every pair of partial realizations reachable with
//! positive probability and test the conditional-expected-marginal forms of
//! adaptive submodularity and strong adaptive monotonicity.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{class_masses, node_mass, Instance, ItemSet, PartialRealization, RealizationSet};
use crate::rational::Rational;

/// Enumeration over item subsets stops being practical well before this.
pub const MAX_ENUMERATED_ITEMS: usize = 16;

/// Reward of realization `phi` sitting in node `a`.
pub fn reward(inst: &Instance, a: &RealizationSet, phi: usize) -> Result<Rational> {
    if !a.contains(phi) {
        return Err(Error::NotMember(phi));
    }
    let p_a = node_mass(inst, a)?;
    let k = inst.class_of(phi);
    let p_ak: Rational = a.iter().filter(|&r| inst.class_of(r) == k).map(|r| inst.prior(r)).sum();
    Ok(Rational::one() - p_a.square() + p_ak.square())
}

/// `f_E(a)`: the conditional mean reward over the members of `a`.
pub fn expected_reward(inst: &Instance, a: &RealizationSet) -> Result<Rational> {
    let p_a = node_mass(inst, a)?;
    let ks = class_masses(inst, a)?;
    let base = Rational::one() - p_a.square();
    let mut acc = Rational::zero();
    for r in a.iter() {
        let p_ak = &ks[&inst.class_of(r)];
        acc += inst.prior(r) * (&base + p_ak.square());
    }
    Ok(acc / p_a)
}

/// Expected increase in `f_E` from observing `e` at node `a` whose observed
/// domain is `dom`.
pub fn marginal_gain(inst: &Instance, a: &RealizationSet, dom: ItemSet, e: usize) -> Result<Rational> {
    if dom.contains(e) {
        return Err(Error::ItemAlreadyUsed(e));
    }
    ObjectiveKind::GroupId.gain(inst, dom, a, e)
}

/// Reward values supplied directly for every (item subset, realization) pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplicitTable {
    num_items: usize,
    /// `values[mask][realization]`.
    values: Vec<Vec<Rational>>,
}

impl ExplicitTable {
    pub fn from_fn(inst: &Instance, mut f: impl FnMut(ItemSet, usize) -> Rational) -> Result<Self> {
        let m = inst.num_items();
        if m > MAX_ENUMERATED_ITEMS {
            return Err(Error::TooLarge(format!("explicit table over {m} items")));
        }
        let values = (0..1u64 << m)
            .map(|mask| {
                let s = ItemSet::from_items((0..m).filter(|i| mask & (1 << i) != 0));
                (0..inst.num_realizations()).map(|r| f(s, r)).collect()
            })
            .collect();
        Ok(ExplicitTable { num_items: m, values })
    }

    pub fn get(&self, s: ItemSet, phi: usize) -> &Rational {
        &self.values[s.bits() as usize][phi]
    }

    pub fn set(&mut self, s: ItemSet, phi: usize, value: Rational) {
        self.values[s.bits() as usize][phi] = value;
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ObjectiveKind {
    GroupId,
    ExplicitTable(ExplicitTable),
}

impl ObjectiveKind {
    /// `f(dom, phi)`.
    pub fn value(&self, inst: &Instance, dom: ItemSet, phi: usize) -> Rational {
        match self {
            ObjectiveKind::GroupId => {
                let a = PartialRealization::observed_by(inst, dom, phi).consistent_set(inst);
                reward(inst, &a, phi).expect("phi is consistent with its own observations")
            }
            ObjectiveKind::ExplicitTable(t) => t.get(dom, phi).clone(),
        }
    }

    /// `E[f(dom, Phi) | Phi in a]` where `a` is the consistent set of a
    /// partial realization with domain `dom`.
    pub fn expected(&self, inst: &Instance, dom: ItemSet, a: &RealizationSet) -> Result<Rational> {
        match self {
            ObjectiveKind::GroupId => expected_reward(inst, a),
            ObjectiveKind::ExplicitTable(t) => {
                let p_a = node_mass(inst, a)?;
                let acc: Rational = a.iter().map(|r| inst.prior(r) * t.get(dom, r)).sum();
                Ok(acc / p_a)
            }
        }
    }

    /// `Δ(e | ψ)` for the partial realization with domain `dom` and consistent set `a`.
    pub fn gain(&self, inst: &Instance, dom: ItemSet, a: &RealizationSet, e: usize) -> Result<Rational> {
        let p_a = node_mass(inst, a)?;
        let next = dom.with(e);
        let mut after = Rational::zero();
        for (_, child) in a.split(inst, e) {
            let p_child = node_mass(inst, &child)?;
            after += &p_child * self.expected(inst, next, &child)?;
        }
        Ok(after / p_a - self.expected(inst, dom, a)?)
    }

    fn check_size(&self, inst: &Instance) -> Result<()> {
        if inst.num_items() > MAX_ENUMERATED_ITEMS {
            return Err(Error::TooLarge(format!(
                "{} items; subset enumeration supports at most {MAX_ENUMERATED_ITEMS}",
                inst.num_items()
            )));
        }
        if let ObjectiveKind::ExplicitTable(t) = self {
            if t.num_items != inst.num_items() {
                return Err(Error::Invalid(format!(
                    "table covers {} items, instance has {}",
                    t.num_items,
                    inst.num_items()
                )));
            }
        }
        Ok(())
    }
}

/// The common value of `f(E, phi)` over all realizations.
pub fn coverage_value(inst: &Instance, obj: &ObjectiveKind) -> Result<Rational> {
    obj.check_size(inst)?;
    let full = inst.all_items();
    let mut values = (0..inst.num_realizations()).map(|r| obj.value(inst, full, r));
    let first = values.next().ok_or(Error::EmptySet)?;
    for v in values {
        if v != first {
            return Err(Error::NoUniformQ { first: first.to_string(), other: v.to_string() });
        }
    }
    Ok(first)
}

/// Largest `eta` with `f(S, phi) > Q - eta => f(S, phi) = Q`, over all item
/// subsets `S`. Returns `Q` when no pair falls short of `Q`.
pub fn compute_eta(inst: &Instance, obj: &ObjectiveKind) -> Result<Rational> {
    let q = coverage_value(inst, obj)?;
    let mut best: Option<Rational> = None;
    for s in ItemSet::all_subsets(inst.num_items()) {
        for r in 0..inst.num_realizations() {
            let v = obj.value(inst, s, r);
            if v < q {
                let gap = &q - v;
                if best.as_ref().is_none_or(|b| &gap < b) {
                    best = Some(gap);
                }
            }
        }
    }
    Ok(best.unwrap_or(q))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyKind {
    Submodularity,
    Monotonicity,
}

/// A violated inequality. For submodularity `lhs = Δ(e|ψ) < rhs = Δ(e|ψ′)`;
/// for monotonicity `lhs = f_E(ψ) > rhs = f_E(ψ′)` with `ψ′ = ψ ∪ {(e, o)}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PropertyViolation {
    pub kind: PropertyKind,
    pub psi: PartialRealization,
    pub psi_prime: PartialRealization,
    pub item: usize,
    pub lhs: Rational,
    pub rhs: Rational,
}

impl PropertyViolation {
    pub fn describe(&self, inst: &Instance) -> String {
        let e = &inst.items()[self.item].id;
        match self.kind {
            PropertyKind::Submodularity => format!(
                "submodularity: Δ({e}|{}) = {} < Δ({e}|{}) = {}",
                self.psi.display_ids(inst),
                self.lhs,
                self.psi_prime.display_ids(inst),
                self.rhs
            ),
            PropertyKind::Monotonicity => format!(
                "monotonicity: f_E({}) = {} > f_E({}) = {}",
                self.psi.display_ids(inst),
                self.lhs,
                self.psi_prime.display_ids(inst),
                self.rhs
            ),
        }
    }
}

impl fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PropertyKind::Submodularity => "submodularity",
            PropertyKind::Monotonicity => "monotonicity",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckOptions {
    /// Reporting stops after this many violations.
    pub limit: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { limit: 100 }
    }
}

/// Positive-mass cells of the partition induced by each subset, in the
/// canonical subset order.
fn reachable_cells(inst: &Instance) -> Vec<(ItemSet, Vec<RealizationSet>)> {
    let all = inst.all_realizations();
    ItemSet::all_subsets(inst.num_items())
        .into_iter()
        .map(|s| {
            let cells = all
                .partition(inst, s)
                .into_iter()
                .filter(|c| c.iter().map(|r| inst.prior(r)).sum::<Rational>().is_positive())
                .collect();
            (s, cells)
        })
        .collect()
}

pub fn check_adaptive_submodularity(inst: &Instance, obj: &ObjectiveKind) -> Result<Vec<PropertyViolation>> {
    check_adaptive_submodularity_with(inst, obj, CheckOptions::default())
}

/// Reports every `(ψ, ψ′, e)` with `ψ ⊆ ψ′`, `e ∉ dom(ψ′)` and
/// `Δ(e|ψ) < Δ(e|ψ′)`, up to `opts.limit`.
pub fn check_adaptive_submodularity_with(
    inst: &Instance,
    obj: &ObjectiveKind,
    opts: CheckOptions,
) -> Result<Vec<PropertyViolation>> {
    obj.check_size(inst)?;
    let cells = reachable_cells(inst);
    let m = inst.num_items();
    let mut out = Vec::new();
    for (s, s_cells) in &cells {
        for a in s_cells {
            let psi = PartialRealization::observed_by(inst, *s, a.members()[0]);
            let mut base_gain: Vec<Option<Rational>> = vec![None; m];
            for (s2, s2_cells) in cells.iter().filter(|(s2, _)| s.is_subset(*s2)) {
                for b in s2_cells.iter().filter(|b| b.is_subset(a)) {
                    for e in (0..m).filter(|&e| !s2.contains(e)) {
                        let lhs = match &base_gain[e] {
                            Some(g) => g.clone(),
                            None => {
                                let g = obj.gain(inst, *s, a, e)?;
                                base_gain[e] = Some(g.clone());
                                g
                            }
                        };
                        let rhs = obj.gain(inst, *s2, b, e)?;
                        if lhs < rhs {
                            out.push(PropertyViolation {
                                kind: PropertyKind::Submodularity,
                                psi: psi.clone(),
                                psi_prime: PartialRealization::observed_by(inst, *s2, b.members()[0]),
                                item: e,
                                lhs,
                                rhs,
                            });
                            if out.len() >= opts.limit {
                                return Ok(out);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn check_strong_adaptive_monotonicity(
    inst: &Instance,
    obj: &ObjectiveKind,
) -> Result<Vec<PropertyViolation>> {
    check_strong_adaptive_monotonicity_with(inst, obj, CheckOptions::default())
}

/// Reports every `(ψ, e, o)` where observing outcome `o` of `e` lowers the
/// conditional expected reward, up to `opts.limit`.
pub fn check_strong_adaptive_monotonicity_with(
    inst: &Instance,
    obj: &ObjectiveKind,
    opts: CheckOptions,
) -> Result<Vec<PropertyViolation>> {
    obj.check_size(inst)?;
    let mut out = Vec::new();
    for (s, s_cells) in reachable_cells(inst) {
        for a in &s_cells {
            let parent = obj.expected(inst, s, a)?;
            let psi = PartialRealization::observed_by(inst, s, a.members()[0]);
            for e in (0..inst.num_items()).filter(|&e| !s.contains(e)) {
                for (o, child) in a.split(inst, e) {
                    if !node_mass(inst, &child)?.is_positive() {
                        continue;
                    }
                    let value = obj.expected(inst, s.with(e), &child)?;
                    if parent > value {
                        out.push(PropertyViolation {
                            kind: PropertyKind::Monotonicity,
                            psi: psi.clone(),
                            psi_prime: psi.with(e, o)?,
                            item: e,
                            lhs: parent.clone(),
                            rhs: value,
                        });
                        if out.len() >= opts.limit {
                            return Ok(out);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterexample;
    use crate::instance::parse_instance;

    fn q(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn set(v: &[usize]) -> RealizationSet {
        RealizationSet::new(v.to_vec())
    }

    fn two_point() -> Instance {
        parse_instance(
            r#"{"items":[{"id":"e","cost":"1"}],"realizations":[
            {"id":"a","prob":"1/2","class":"x","obs":{"e":0}},
            {"id":"b","prob":"1/2","class":"y","obs":{"e":1}}]}"#,
        )
        .unwrap()
    }

    fn singleton() -> Instance {
        parse_instance(
            r#"{"items":[{"id":"e","cost":"1"}],"realizations":[
            {"id":"a","prob":"1","class":"x","obs":{"e":0}}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn reward_values() {
        let inst = counterexample::instance();
        assert_eq!(reward(&inst, &set(&[0, 1, 2]), 0).unwrap(), q("17/25"));
        assert_eq!(reward(&inst, &set(&[1]), 1).unwrap(), q("1"));
        assert_eq!(reward(&inst, &inst.all_realizations(), 0).unwrap(), q("1/25"));
        assert!(matches!(reward(&inst, &set(&[1]), 0), Err(Error::NotMember(0))));
    }

    #[test]
    fn expected_reward_values() {
        let inst = counterexample::instance();
        assert_eq!(expected_reward(&inst, &set(&[0, 1, 2])).unwrap(), q("17/25"));
        assert_eq!(expected_reward(&inst, &set(&[0, 2])).unwrap(), q("22/25"));
        assert_eq!(expected_reward(&inst, &set(&[3, 4])).unwrap(), q("22/25"));
        assert!(expected_reward(&inst, &set(&[])).is_err());
    }

    #[test]
    fn marginal_gain_values() {
        let inst = counterexample::instance();
        let all = inst.all_realizations();
        for e in 0..3 {
            assert_eq!(marginal_gain(&inst, &all, ItemSet::empty(), e).unwrap(), q("18/25"));
        }
        let b = set(&[0, 1, 2]);
        assert_eq!(marginal_gain(&inst, &b, ItemSet::from_items([0]), 1).unwrap(), q("6/25"));
        for e in 1..3 {
            assert!(marginal_gain(&inst, &set(&[1]), ItemSet::from_items([0]), e).unwrap().is_zero());
        }
        assert!(matches!(
            marginal_gain(&inst, &b, ItemSet::from_items([0]), 0),
            Err(Error::ItemAlreadyUsed(0))
        ));
    }

    #[test]
    fn coverage_and_eta() {
        let inst = counterexample::instance();
        assert_eq!(coverage_value(&inst, &ObjectiveKind::GroupId).unwrap(), q("1"));
        assert_eq!(compute_eta(&inst, &ObjectiveKind::GroupId).unwrap(), q("3/25"));
        assert_eq!(compute_eta(&singleton(), &ObjectiveKind::GroupId).unwrap(), q("1"));
        assert_eq!(compute_eta(&two_point(), &ObjectiveKind::GroupId).unwrap(), q("3/4"));
    }

    #[test]
    fn coverage_with_shared_class_duplicates() {
        let inst = parse_instance(
            r#"{"items":[{"id":"e","cost":"1"}],"realizations":[
            {"id":"a","prob":"1/4","class":"x","obs":{"e":0}},
            {"id":"b","prob":"1/4","class":"x","obs":{"e":0}},
            {"id":"c","prob":"1/2","class":"y","obs":{"e":1}}]}"#,
        )
        .unwrap();
        assert_eq!(coverage_value(&inst, &ObjectiveKind::GroupId).unwrap(), q("1"));
    }

    #[test]
    fn non_uniform_table_has_no_q() {
        let inst = two_point();
        let full = inst.all_items();
        let table = ExplicitTable::from_fn(&inst, |s, r| {
            if s == full {
                Rational::from(r as i64 + 1)
            } else {
                Rational::zero()
            }
        })
        .unwrap();
        assert!(matches!(
            coverage_value(&inst, &ObjectiveKind::ExplicitTable(table)),
            Err(Error::NoUniformQ { .. })
        ));
    }

    #[test]
    fn checkers_accept_group_id() {
        for inst in [counterexample::instance(), two_point(), singleton()] {
            assert!(check_adaptive_submodularity(&inst, &ObjectiveKind::GroupId).unwrap().is_empty());
            assert!(check_strong_adaptive_monotonicity(&inst, &ObjectiveKind::GroupId).unwrap().is_empty());
        }
    }

    #[test]
    fn planted_submodularity_violation() {
        // Two items: Δ(e2 | ∅) = 0, Δ(e2 | {e1 = 0}) = 1.
        let inst = parse_instance(
            r#"{"items":[{"id":"e1","cost":"1"},{"id":"e2","cost":"1"}],"realizations":[
            {"id":"a","prob":"1/2","class":"x","obs":{"e1":0,"e2":0}},
            {"id":"b","prob":"1/2","class":"y","obs":{"e1":1,"e2":1}}]}"#,
        )
        .unwrap();
        let both = ItemSet::from_items([0, 1]);
        let table = ExplicitTable::from_fn(&inst, |s, r| {
            if s == both && r == 0 {
                Rational::one()
            } else {
                Rational::zero()
            }
        })
        .unwrap();
        let found = check_adaptive_submodularity(&inst, &ObjectiveKind::ExplicitTable(table)).unwrap();
        // The table is symmetric in the two items, so (∅, {e2 = 0}, e1) is found too.
        assert_eq!(found.len(), 2);
        let v = &found[0];
        assert_eq!(v.kind, PropertyKind::Submodularity);
        assert_eq!(v.psi.pairs(), &[]);
        assert_eq!(v.psi_prime.pairs(), &[(0, 0)]);
        assert_eq!(v.item, 1);
        assert_eq!(v.lhs, q("0"));
        assert_eq!(v.rhs, q("1"));
        assert!(v.describe(&inst).starts_with("submodularity"));
    }

    #[test]
    fn planted_monotonicity_violation() {
        let inst = two_point();
        let e = ItemSet::from_items([0]);
        let table = ExplicitTable::from_fn(&inst, |s, r| {
            if s == e && r == 1 {
                Rational::zero()
            } else {
                Rational::one()
            }
        })
        .unwrap();
        let found = check_strong_adaptive_monotonicity(&inst, &ObjectiveKind::ExplicitTable(table)).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].psi_prime.pairs(), &[(0, 1)]);
        assert_eq!(found[0].lhs, q("1"));
        assert_eq!(found[0].rhs, q("0"));
    }

    #[test]
    fn limit_caps_report() {
        let inst = counterexample::instance();
        let table = ExplicitTable::from_fn(&inst, |s, _| Rational::from(-(s.len() as i64))).unwrap();
        let obj = ObjectiveKind::ExplicitTable(table);
        let capped = check_strong_adaptive_monotonicity_with(&inst, &obj, CheckOptions { limit: 3 }).unwrap();
        assert_eq!(capped.len(), 3);
        let all = check_strong_adaptive_monotonicity(&inst, &obj).unwrap();
        assert_eq!(&all[..3], &capped[..]);
    }
}
