//! Instance data model: items with costs, realizations with priors and
//! classes, and the deterministic observation table between them.
//!
//! Ids are strings in the document; internally items and realizations are
//! addressed by their position in document order, which is also the order
//! every tie-break in the crate refers to.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Rational;

/// Outcome of applying an item to a realization.
pub type Outcome = u32;

/// Upper bound on items so that item subsets fit in a `u64` mask.
pub const MAX_ITEMS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ClassId(pub usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Item {
    pub id: String,
    pub cost: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Realization {
    pub id: String,
    pub prior: Rational,
    pub class: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    items: Vec<Item>,
    realizations: Vec<Realization>,
    /// `observations[r][i]` is the outcome of item `i` on realization `r`.
    observations: Vec<Vec<Outcome>>,
    classes: Vec<String>,
    class_of: Vec<ClassId>,
}

impl Instance {
    /// Assembles an instance, checking only structural soundness (unique ids,
    /// a full rectangular table). Semantic checks live in [`validate_instance`].
    pub fn new(
        items: Vec<Item>,
        realizations: Vec<Realization>,
        observations: Vec<Vec<Outcome>>,
    ) -> Result<Self> {
        if items.len() > MAX_ITEMS {
            return Err(Error::TooLarge(format!(
                "{} items (at most {MAX_ITEMS} supported)",
                items.len()
            )));
        }
        let mut seen = HashSet::new();
        for item in &items {
            if !seen.insert(item.id.as_str()) {
                return Err(Error::DuplicateId { kind: "item", id: item.id.clone() });
            }
        }
        let mut seen = HashSet::new();
        for r in &realizations {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId { kind: "realization", id: r.id.clone() });
            }
        }
        if observations.len() != realizations.len() {
            return Err(Error::Malformed(format!(
                "{} observation rows for {} realizations",
                observations.len(),
                realizations.len()
            )));
        }
        for (r, row) in realizations.iter().zip(&observations) {
            if row.len() != items.len() {
                return Err(Error::Malformed(format!(
                    "realization {:?} has {} observations, expected {}",
                    r.id,
                    row.len(),
                    items.len()
                )));
            }
        }

        let mut classes: Vec<String> = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut class_of = Vec::with_capacity(realizations.len());
        for r in &realizations {
            let next = index.len();
            let k = *index.entry(r.class.as_str()).or_insert(next);
            if k == classes.len() {
                classes.push(r.class.clone());
            }
            class_of.push(ClassId(k));
        }

        Ok(Instance { items, realizations, observations, classes, class_of })
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn realizations(&self) -> &[Realization] {
        &self.realizations
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_realizations(&self) -> usize {
        self.realizations.len()
    }

    pub fn observation(&self, realization: usize, item: usize) -> Outcome {
        self.observations[realization][item]
    }

    pub fn row(&self, realization: usize) -> &[Outcome] {
        &self.observations[realization]
    }

    pub fn prior(&self, realization: usize) -> &Rational {
        &self.realizations[realization].prior
    }

    pub fn cost(&self, item: usize) -> &Rational {
        &self.items[item].cost
    }

    pub fn class_of(&self, realization: usize) -> ClassId {
        self.class_of[realization]
    }

    pub fn class_name(&self, class: ClassId) -> &str {
        &self.classes[class.0]
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn item_index(&self, id: &str) -> Result<usize> {
        self.items
            .iter()
            .position(|i| i.id == id)
            .ok_or_else(|| Error::Unknown { kind: "item", id: id.to_string() })
    }

    pub fn realization_index(&self, id: &str) -> Result<usize> {
        self.realizations
            .iter()
            .position(|r| r.id == id)
            .ok_or_else(|| Error::Unknown { kind: "realization", id: id.to_string() })
    }

    pub fn all_realizations(&self) -> RealizationSet {
        RealizationSet((0..self.realizations.len()).collect())
    }

    pub fn all_items(&self) -> ItemSet {
        ItemSet::full(self.items.len())
    }

    /// Smallest prior over all realizations.
    pub fn min_prior(&self) -> Option<&Rational> {
        self.realizations.iter().map(|r| &r.prior).min()
    }

    /// True when every member of `set` has the same class.
    pub fn is_pure(&self, set: &RealizationSet) -> bool {
        let mut it = set.iter().map(|r| self.class_of(r));
        match it.next() {
            None => true,
            Some(k) => it.all(|c| c == k),
        }
    }

    /// Same instance with replaced item costs, in item order.
    pub fn with_costs(&self, costs: Vec<Rational>) -> Result<Instance> {
        if costs.len() != self.items.len() {
            return Err(Error::Malformed(format!(
                "{} costs for {} items",
                costs.len(),
                self.items.len()
            )));
        }
        let mut out = self.clone();
        for (item, cost) in out.items.iter_mut().zip(costs) {
            item.cost = cost;
        }
        Ok(out)
    }

    pub fn to_document(&self) -> InstanceDocument {
        InstanceDocument {
            items: self
                .items
                .iter()
                .map(|i| ItemDocument { id: i.id.clone(), cost: i.cost.to_string() })
                .collect(),
            realizations: self
                .realizations
                .iter()
                .zip(&self.observations)
                .map(|(r, row)| RealizationDocument {
                    id: r.id.clone(),
                    prob: r.prior.to_string(),
                    class: r.class.clone(),
                    obs: self.items.iter().map(|i| i.id.clone()).zip(row.iter().copied()).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("document serializes")
    }
}

/// On-disk instance document. Unknown keys are rejected at every level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    pub items: Vec<ItemDocument>,
    pub realizations: Vec<RealizationDocument>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemDocument {
    pub id: String,
    pub cost: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizationDocument {
    pub id: String,
    pub prob: String,
    pub class: String,
    pub obs: IndexMap<String, Outcome>,
}

impl InstanceDocument {
    pub fn into_instance(self) -> Result<Instance> {
        let items = self
            .items
            .into_iter()
            .map(|i| Ok(Item { cost: i.cost.parse()?, id: i.id }))
            .collect::<Result<Vec<_>>>()?;
        let item_pos: HashMap<&str, usize> =
            items.iter().enumerate().map(|(k, i)| (i.id.as_str(), k)).collect();
        if item_pos.len() != items.len() {
            let mut seen = HashSet::new();
            let dup = items.iter().find(|i| !seen.insert(i.id.as_str())).unwrap();
            return Err(Error::DuplicateId { kind: "item", id: dup.id.clone() });
        }

        let mut realizations = Vec::with_capacity(self.realizations.len());
        let mut observations = Vec::with_capacity(self.realizations.len());
        for r in self.realizations {
            let mut row: Vec<Option<Outcome>> = vec![None; items.len()];
            for (key, outcome) in &r.obs {
                let k = *item_pos.get(key.as_str()).ok_or_else(|| {
                    Error::Malformed(format!("realization {:?} observes unknown item {key:?}", r.id))
                })?;
                row[k] = Some(*outcome);
            }
            let row = row
                .into_iter()
                .enumerate()
                .map(|(k, o)| {
                    o.ok_or_else(|| {
                        Error::Malformed(format!(
                            "realization {:?} is missing an observation for item {:?}",
                            r.id, items[k].id
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            realizations.push(Realization { prior: r.prob.parse()?, id: r.id, class: r.class });
            observations.push(row);
        }
        Instance::new(items, realizations, observations)
    }
}

/// Parses an instance document. Structure is checked here; the semantic
/// invariants (priors, costs, determinability) are reported by
/// [`validate_instance`].
pub fn parse_instance(text: &str) -> Result<Instance> {
    let doc: InstanceDocument =
        serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
    doc.into_instance()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Issue {
    NoRealizations,
    NonPositivePrior { realization: String, prior: Rational },
    PriorSum { sum: Rational },
    NonPositiveCost { item: String, cost: Rational },
    ClassNotDeterminable { first: String, second: String },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::NoRealizations => write!(f, "instance has no realizations"),
            Issue::NonPositivePrior { realization, prior } => {
                write!(f, "prior of {realization} is {prior}, must be > 0")
            }
            Issue::PriorSum { sum } => write!(f, "priors sum ≠ 1 (sum = {sum})"),
            Issue::NonPositiveCost { item, cost } => {
                write!(f, "cost of {item} is {cost}, must be > 0")
            }
            Issue::ClassNotDeterminable { first, second } => write!(
                f,
                "class not determinable: {first} and {second} have identical observations but different classes"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    /// Converts a non-empty report into an error for callers that need a valid instance.
    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let msg = self.issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
            Err(Error::Invalid(msg))
        }
    }
}

pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut issues = Vec::new();
    if inst.num_realizations() == 0 {
        issues.push(Issue::NoRealizations);
    }
    for r in inst.realizations() {
        if !r.prior.is_positive() {
            issues.push(Issue::NonPositivePrior { realization: r.id.clone(), prior: r.prior.clone() });
        }
    }
    if inst.num_realizations() > 0 {
        let sum: Rational = inst.realizations().iter().map(|r| &r.prior).sum();
        if !sum.is_one() {
            issues.push(Issue::PriorSum { sum });
        }
    }
    for item in inst.items() {
        if !item.cost.is_positive() {
            issues.push(Issue::NonPositiveCost { item: item.id.clone(), cost: item.cost.clone() });
        }
    }
    let mut by_row: BTreeMap<&[Outcome], Vec<usize>> = BTreeMap::new();
    for r in 0..inst.num_realizations() {
        by_row.entry(inst.row(r)).or_default().push(r);
    }
    let mut clashes = Vec::new();
    for members in by_row.values() {
        for (k, &a) in members.iter().enumerate() {
            for &b in &members[k + 1..] {
                if inst.class_of(a) != inst.class_of(b) {
                    clashes.push((a, b));
                }
            }
        }
    }
    clashes.sort_unstable();
    for (a, b) in clashes {
        issues.push(Issue::ClassNotDeterminable {
            first: inst.realizations()[a].id.clone(),
            second: inst.realizations()[b].id.clone(),
        });
    }
    ValidationReport { issues }
}

/// A set of items as a bit mask over item indices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ItemSet(u64);

impl ItemSet {
    pub fn empty() -> Self {
        ItemSet(0)
    }

    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_ITEMS);
        if n == MAX_ITEMS {
            ItemSet(u64::MAX)
        } else {
            ItemSet((1u64 << n) - 1)
        }
    }

    pub fn from_items(items: impl IntoIterator<Item = usize>) -> Self {
        items.into_iter().fold(ItemSet(0), |s, i| s.with(i))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, item: usize) -> bool {
        item < MAX_ITEMS && self.0 & (1 << item) != 0
    }

    #[must_use]
    pub fn with(self, item: usize) -> Self {
        ItemSet(self.0 | (1 << item))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: ItemSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..MAX_ITEMS).filter(move |&i| self.contains(i))
    }

    /// Every subset of `{0..n}`, ordered by size and then lexicographically on
    /// the sorted member list.
    pub fn all_subsets(n: usize) -> Vec<ItemSet> {
        assert!(n < 32, "subset enumeration over {n} items");
        let mut out: Vec<ItemSet> = (0..1u64 << n).map(ItemSet).collect();
        out.sort_by_cached_key(|s| (s.len(), s.iter().collect::<Vec<_>>()));
        out
    }
}

impl fmt::Display for ItemSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let members: Vec<String> = self.iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", members.join(","))
    }
}

/// Realization indices, kept sorted and deduplicated.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RealizationSet(Vec<usize>);

impl RealizationSet {
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        RealizationSet(members)
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, r: usize) -> bool {
        self.0.binary_search(&r).is_ok()
    }

    pub fn is_disjoint(&self, other: &RealizationSet) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }

    pub fn is_subset(&self, other: &RealizationSet) -> bool {
        self.0.iter().all(|r| other.contains(*r))
    }

    /// Members grouped by their outcome on `item`, in increasing outcome order.
    /// Empty outcome classes are omitted.
    pub fn split(&self, inst: &Instance, item: usize) -> Vec<(Outcome, RealizationSet)> {
        let mut groups: BTreeMap<Outcome, Vec<usize>> = BTreeMap::new();
        for r in self.iter() {
            groups.entry(inst.observation(r, item)).or_default().push(r);
        }
        groups.into_iter().map(|(o, v)| (o, RealizationSet(v))).collect()
    }

    /// True when `item` sends members to at least two different outcomes.
    pub fn is_split_by(&self, inst: &Instance, item: usize) -> bool {
        let mut it = self.iter().map(|r| inst.observation(r, item));
        match it.next() {
            None => false,
            Some(o) => it.any(|x| x != o),
        }
    }

    /// Cells of the partition induced by observing every item in `items`,
    /// ordered by their smallest member.
    pub fn partition(&self, inst: &Instance, items: ItemSet) -> Vec<RealizationSet> {
        let mut cells: Vec<(Vec<Outcome>, Vec<usize>)> = Vec::new();
        let mut index: HashMap<Vec<Outcome>, usize> = HashMap::new();
        for r in self.iter() {
            let key: Vec<Outcome> = items.iter().map(|i| inst.observation(r, i)).collect();
            match index.get(&key) {
                Some(&k) => cells[k].1.push(r),
                None => {
                    index.insert(key.clone(), cells.len());
                    cells.push((key, vec![r]));
                }
            }
        }
        cells.into_iter().map(|(_, v)| RealizationSet(v)).collect()
    }

    pub fn display_ids(&self, inst: &Instance) -> String {
        let ids: Vec<&str> = self.iter().map(|r| inst.realizations()[r].id.as_str()).collect();
        format!("{{{}}}", ids.join(","))
    }
}

impl FromIterator<usize> for RealizationSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        RealizationSet::new(iter.into_iter().collect())
    }
}

/// Observed (item, outcome) pairs, sorted by item.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct PartialRealization {
    pairs: Vec<(usize, Outcome)>,
}

impl PartialRealization {
    pub fn new(mut pairs: Vec<(usize, Outcome)>) -> Result<Self> {
        pairs.sort_unstable();
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::ItemAlreadyUsed(w[0].0));
        }
        Ok(PartialRealization { pairs })
    }

    /// The partial realization observed by `member` on the items of `dom`.
    pub fn observed_by(inst: &Instance, dom: ItemSet, member: usize) -> Self {
        PartialRealization { pairs: dom.iter().map(|i| (i, inst.observation(member, i))).collect() }
    }

    pub fn pairs(&self) -> &[(usize, Outcome)] {
        &self.pairs
    }

    pub fn domain(&self) -> ItemSet {
        ItemSet::from_items(self.pairs.iter().map(|p| p.0))
    }

    pub fn with(&self, item: usize, outcome: Outcome) -> Result<Self> {
        let mut pairs = self.pairs.clone();
        pairs.push((item, outcome));
        PartialRealization::new(pairs)
    }

    /// Realizations agreeing with every observed pair.
    pub fn consistent_set(&self, inst: &Instance) -> RealizationSet {
        (0..inst.num_realizations())
            .filter(|&r| self.pairs.iter().all(|&(i, o)| inst.observation(r, i) == o))
            .collect()
    }

    pub fn display_ids(&self, inst: &Instance) -> String {
        let parts: Vec<String> =
            self.pairs.iter().map(|&(i, o)| format!("{}={o}", inst.items()[i].id)).collect();
        format!("{{{}}}", parts.join(","))
    }
}

fn mass_unchecked(inst: &Instance, a: &RealizationSet) -> Rational {
    a.iter().map(|r| inst.prior(r)).sum()
}

/// Total prior mass of `a`.
pub fn node_mass(inst: &Instance, a: &RealizationSet) -> Result<Rational> {
    if a.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(mass_unchecked(inst, a))
}

/// Prior mass of each class present in `a`.
pub fn class_masses(inst: &Instance, a: &RealizationSet) -> Result<BTreeMap<ClassId, Rational>> {
    if a.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut out: BTreeMap<ClassId, Rational> = BTreeMap::new();
    for r in a.iter() {
        *out.entry(inst.class_of(r)).or_default() += inst.prior(r);
    }
    Ok(out)
}
