//! Random instance generation and mining for overlapping stop-node covers.

use std::collections::VecDeque;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::audit::{audit_cover, group_coverage, stop_cover, AuditReport, StopCover, Verdict};
use crate::error::{Error, Result};
use crate::instance::{validate_instance, Instance, InstanceDocument, Item, Realization};
use crate::policy::{greedy_policy, optimal_policy, DecisionTree, TieBreak};
use crate::rational::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostMode {
    Unit,
    /// Integer costs drawn uniformly from `1..=max`.
    RandomInt { max: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorMode {
    Uniform,
    /// Each realization draws `a/b` with `1 <= a <= b <= max_denominator`,
    /// then all priors are renormalised to sum to 1.
    Random { max_denominator: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassMode {
    /// Every realization is its own class.
    Distinct,
    /// Classes drawn uniformly from `max_classes` labels.
    Random { max_classes: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Thresholds {
    /// Midpoints between consecutive distinct `f_E` values of the tree.
    Grid,
    /// A fixed list; values outside `(f_E(root), Q]` are skipped per instance.
    Fixed(Vec<Rational>),
}

#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub realizations: RangeInclusive<usize>,
    pub items: RangeInclusive<usize>,
    pub arity: u32,
    pub costs: CostMode,
    pub priors: PriorMode,
    pub classes: ClassMode,
    pub thresholds: Thresholds,
    pub seed: u64,
    pub max_instances: usize,
    /// Total random draws allowed, valid or not.
    pub max_attempts: usize,
    pub stop_after_first: bool,
    pub tie: TieBreak,
    /// Emitted ahead of the random stream, without counting toward `max_instances`.
    pub injected: Vec<Instance>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            realizations: 5..=5,
            items: 3..=3,
            arity: 2,
            costs: CostMode::Unit,
            priors: PriorMode::Uniform,
            classes: ClassMode::Distinct,
            thresholds: Thresholds::Grid,
            seed: 0,
            max_instances: 100,
            max_attempts: 100_000,
            stop_after_first: false,
            tie: TieBreak::LowestIndex,
            injected: Vec::new(),
        }
    }
}

impl SearchConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("search config: {m}")));
        if self.realizations.is_empty() || *self.realizations.start() == 0 {
            return bad("realization range must be non-empty and start at 1 or more");
        }
        if self.items.is_empty() {
            return bad("item range is empty");
        }
        if *self.items.end() > crate::instance::MAX_ITEMS {
            return bad("too many items");
        }
        if self.arity == 0 {
            return bad("outcome arity must be at least 1");
        }
        if let CostMode::RandomInt { max: 0 } = self.costs {
            return bad("cost bound must be at least 1");
        }
        if let PriorMode::Random { max_denominator: 0 } = self.priors {
            return bad("prior denominator bound must be at least 1");
        }
        if let ClassMode::Random { max_classes: 0 } = self.classes {
            return bad("class count must be at least 1");
        }
        Ok(())
    }
}

/// Deterministic stream of valid instances.
pub struct InstanceStream {
    cfg: SearchConfig,
    rng: ChaCha8Rng,
    injected: VecDeque<Instance>,
    emitted: usize,
    attempts: usize,
    discarded: usize,
}

impl InstanceStream {
    pub fn attempts(&self) -> usize {
        self.attempts
    }

    pub fn discarded(&self) -> usize {
        self.discarded
    }

    /// Explains an early end of the stream, if the attempt budget ran out.
    pub fn diagnostic(&self) -> Option<String> {
        (self.emitted < self.cfg.max_instances && self.attempts >= self.cfg.max_attempts).then(|| {
            format!(
                "stopped after {} attempts: {} valid instances emitted, {} invalid draws discarded",
                self.attempts, self.emitted, self.discarded
            )
        })
    }

    fn draw(&mut self) -> Instance {
        let cfg = &self.cfg;
        let rng = &mut self.rng;
        let n = rng.random_range(cfg.realizations.clone());
        let m = rng.random_range(cfg.items.clone());
        let items = (0..m)
            .map(|i| Item {
                id: format!("e{}", i + 1),
                cost: match cfg.costs {
                    CostMode::Unit => Rational::one(),
                    CostMode::RandomInt { max } => Rational::from(rng.random_range(1..=max as i64)),
                },
            })
            .collect();
        let weights: Vec<Rational> = match cfg.priors {
            PriorMode::Uniform => vec![Rational::new(1, n as i64); n],
            PriorMode::Random { max_denominator } => {
                let raw: Vec<Rational> = (0..n)
                    .map(|_| {
                        let d = rng.random_range(1..=max_denominator as i64);
                        Rational::new(rng.random_range(1..=d), d)
                    })
                    .collect();
                let total: Rational = raw.iter().sum();
                raw.into_iter().map(|w| w / &total).collect()
            }
        };
        let realizations = weights
            .into_iter()
            .enumerate()
            .map(|(r, prior)| Realization {
                id: format!("phi{}", r + 1),
                prior,
                class: match cfg.classes {
                    ClassMode::Distinct => format!("k{}", r + 1),
                    ClassMode::Random { max_classes } => format!("k{}", rng.random_range(1..=max_classes)),
                },
            })
            .collect();
        let observations = (0..n).map(|_| (0..m).map(|_| rng.random_range(0..cfg.arity)).collect()).collect();
        Instance::new(items, realizations, observations).expect("generated ids are unique")
    }
}

impl Iterator for InstanceStream {
    type Item = Instance;

    fn next(&mut self) -> Option<Instance> {
        if let Some(inst) = self.injected.pop_front() {
            return Some(inst);
        }
        while self.emitted < self.cfg.max_instances && self.attempts < self.cfg.max_attempts {
            self.attempts += 1;
            let inst = self.draw();
            if validate_instance(&inst).is_valid() {
                self.emitted += 1;
                return Some(inst);
            }
            self.discarded += 1;
        }
        None
    }
}

pub fn generate_instances(cfg: &SearchConfig) -> Result<InstanceStream> {
    cfg.check()?;
    for inst in &cfg.injected {
        validate_instance(inst).into_result()?;
    }
    Ok(InstanceStream {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        injected: cfg.injected.iter().cloned().collect(),
        cfg: cfg.clone(),
        emitted: 0,
        attempts: 0,
        discarded: 0,
    })
}

/// Midpoints between consecutive distinct node values. The verdict is
/// constant for `x` between two consecutive values, so one point per gap
/// covers every case.
pub fn threshold_grid(tree: &DecisionTree) -> Vec<Rational> {
    let mut values: Vec<Rational> = tree.nodes().map(|(_, n)| n.f_e.clone()).collect();
    values.sort();
    values.dedup();
    values.windows(2).map(|w| (&w[0] + &w[1]) / Rational::from(2)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Finding {
    /// Position of the instance in the stream.
    pub index: usize,
    pub instance: Instance,
    pub tie: TieBreak,
    pub x: Rational,
    pub cover: StopCover,
    /// Audit against the optimal policy's cost profile.
    pub audit: AuditReport,
}

#[derive(Serialize)]
struct StopNodeRecord {
    node: String,
    set: Vec<String>,
    stopping: Vec<String>,
    f_e: Rational,
}

#[derive(Serialize)]
struct FindingRecord<'a> {
    instance: InstanceDocument,
    audit: AuditBlock<'a>,
}

#[derive(Serialize)]
struct AuditBlock<'a> {
    index: usize,
    tie: TieBreak,
    x: &'a Rational,
    stop_nodes: Vec<StopNodeRecord>,
    verdict: &'a Verdict,
    report: &'a AuditReport,
}

impl Finding {
    /// Instance document plus an `audit` block.
    pub fn to_json(&self) -> String {
        let ids = |set: &crate::instance::RealizationSet| -> Vec<String> {
            set.iter().map(|r| self.instance.realizations()[r].id.clone()).collect()
        };
        let record = FindingRecord {
            instance: self.instance.to_document(),
            audit: AuditBlock {
                index: self.index,
                tie: self.tie,
                x: &self.x,
                stop_nodes: self
                    .cover
                    .entries
                    .iter()
                    .map(|e| StopNodeRecord {
                        node: e.node.to_string(),
                        set: ids(&e.set),
                        stopping: ids(&e.stopping),
                        f_e: e.f_e.clone(),
                    })
                    .collect(),
                verdict: &self.cover.verdict,
                report: &self.audit,
            },
        };
        let mut s = serde_json::to_string_pretty(&record).expect("finding serializes");
        s.push('\n');
        s
    }

    /// Rebuilds the greedy tree and cover from scratch and checks the overlap.
    pub fn reverify(&self) -> Result<bool> {
        let tree = greedy_policy(&self.instance, self.tie)?;
        let cover = stop_cover(&tree, &self.x)?;
        Ok(cover.verdict.is_overlap() && cover == self.cover)
    }
}

pub fn find_partition_violations(cfg: &SearchConfig) -> Result<Vec<Finding>> {
    let mut findings = Vec::new();
    for (index, inst) in generate_instances(cfg)?.enumerate() {
        let tree = greedy_policy(&inst, cfg.tie)?;
        let root = tree.root().f_e.clone();
        let q = group_coverage();
        let xs: Vec<Rational> = match &cfg.thresholds {
            Thresholds::Grid => threshold_grid(&tree),
            Thresholds::Fixed(xs) => xs.iter().filter(|x| **x > root && **x <= q).cloned().collect(),
        };
        let mut reference = None;
        for x in xs {
            let cover = stop_cover(&tree, &x)?;
            if !cover.verdict.is_overlap() {
                continue;
            }
            if reference.is_none() {
                reference = Some(optimal_policy(&inst)?.1);
            }
            let audit = audit_cover(&inst, &cover, reference.as_ref().expect("set above"));
            let finding = Finding { index, instance: inst.clone(), tie: cfg.tie, x, cover, audit };
            if !finding.reverify()? {
                return Err(Error::Invalid(format!("finding for instance {index} failed re-verification")));
            }
            findings.push(finding);
            if cfg.stop_after_first {
                return Ok(findings);
            }
        }
    }
    Ok(findings)
}

/// Writes `dir/NNNN.json`, one file per finding, and returns the paths.
pub fn write_findings(dir: &Path, findings: &[Finding]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    findings
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let path = dir.join(format!("{k:04}.json"));
            fs::write(&path, f.to_json())?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterexample;
    use crate::instance::parse_instance;

    #[test]
    fn stream_is_deterministic_and_valid() {
        let cfg = SearchConfig { max_instances: 100, ..SearchConfig::default() };
        let a: Vec<Instance> = generate_instances(&cfg).unwrap().collect();
        let b: Vec<Instance> = generate_instances(&cfg).unwrap().collect();
        assert_eq!(a.len(), 100);
        assert_eq!(a, b);
        for inst in &a {
            assert_eq!((inst.num_realizations(), inst.num_items()), (5, 3));
            assert!(validate_instance(inst).is_valid());
        }
    }

    #[test]
    fn singleton_stream() {
        let cfg = SearchConfig { realizations: 1..=1, max_instances: 10, ..SearchConfig::default() };
        let all: Vec<Instance> = generate_instances(&cfg).unwrap().collect();
        assert_eq!(all.len(), 10);
        assert!(all.iter().all(|i| i.num_realizations() == 1));
        assert!(find_partition_violations(&cfg).unwrap().is_empty());
    }

    #[test]
    fn impossible_constraints_exhaust_attempts() {
        let cfg = SearchConfig {
            realizations: 2..=2,
            items: 0..=0,
            max_attempts: 50,
            ..SearchConfig::default()
        };
        let mut stream = generate_instances(&cfg).unwrap();
        assert!(stream.next().is_none());
        assert_eq!(stream.discarded(), 50);
        assert!(stream.diagnostic().unwrap().contains("50 attempts"));
    }

    #[test]
    fn random_priors_are_exact_and_bounded() {
        let cfg = SearchConfig {
            priors: PriorMode::Random { max_denominator: 60 },
            costs: CostMode::RandomInt { max: 9 },
            classes: ClassMode::Random { max_classes: 3 },
            realizations: 2..=6,
            items: 1..=4,
            arity: 3,
            max_instances: 50,
            ..SearchConfig::default()
        };
        for inst in generate_instances(&cfg).unwrap() {
            let total: Rational = inst.realizations().iter().map(|r| &r.prior).sum();
            assert!(total.is_one());
            assert!(inst.items().iter().all(|i| i.cost >= 1 && i.cost <= 9));
        }
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = SearchConfig { arity: 0, ..SearchConfig::default() };
        assert!(generate_instances(&cfg).is_err());
        #[allow(clippy::reversed_empty_ranges)]
        let cfg = SearchConfig { realizations: 3..=2, ..SearchConfig::default() };
        assert!(generate_instances(&cfg).is_err());
    }

    #[test]
    fn grid_for_reference_tree() {
        let inst = counterexample::instance();
        let tree = greedy_policy(&inst, TieBreak::LowestIndex).unwrap();
        let grid: Vec<String> = threshold_grid(&tree).iter().map(ToString::to_string).collect();
        assert_eq!(grid, ["9/25", "39/50", "47/50"]);
    }

    #[test]
    fn injected_reference_is_found() {
        let cfg = SearchConfig {
            injected: vec![counterexample::instance()],
            thresholds: Thresholds::Fixed(vec![counterexample::threshold()]),
            max_instances: 0,
            ..SearchConfig::default()
        };
        let found = find_partition_violations(&cfg).unwrap();
        assert_eq!(found.len(), 1);
        let f = &found[0];
        assert_eq!(f.index, 0);
        let tree = greedy_policy(&f.instance, f.tie).unwrap();
        let b = counterexample::node(&tree, "b").unwrap();
        let c = counterexample::node(&tree, "c").unwrap();
        assert_eq!(f.cover.verdict, Verdict::Overlap { first: b, second: c });
        assert_eq!(f.audit.gap, Rational::new(6, 5));
        assert!(f.reverify().unwrap());
    }

    #[test]
    fn findings_round_trip_their_instance() {
        let cfg = SearchConfig {
            injected: vec![counterexample::instance()],
            max_instances: 0,
            ..SearchConfig::default()
        };
        let found = find_partition_violations(&cfg).unwrap();
        assert!(!found.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let paths = write_findings(dir.path(), &found).unwrap();
        assert_eq!(paths[0].file_name().unwrap(), "0000.json");
        let text = fs::read_to_string(&paths[0]).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let doc = serde_json::to_string(&value["instance"]).unwrap();
        assert_eq!(parse_instance(&doc).unwrap(), found[0].instance);
        assert_eq!(value["audit"]["verdict"]["verdict"], "overlap");
    }
}
