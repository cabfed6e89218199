//! Independent oracles and seeded instance suites for the integration tests.
#![allow(dead_code)]

use adagroup::instance::{Item, Realization};
use adagroup::search::{generate_instances, ClassMode, CostMode, PriorMode, SearchConfig};
use adagroup::{Instance, ItemSet, Rational, RealizationSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn q(s: &str) -> Rational {
    s.parse().unwrap()
}

/// Seeded valid instances with random priors, classes, costs and arity.
pub fn suite(seed: u64, count: usize, max_realizations: usize, max_items: usize, arity: u32) -> Vec<Instance> {
    let cfg = SearchConfig {
        realizations: 1..=max_realizations,
        items: 1..=max_items,
        arity,
        costs: CostMode::RandomInt { max: 5 },
        priors: PriorMode::Random { max_denominator: 12 },
        classes: ClassMode::Random { max_classes: max_realizations.max(2) - 1 },
        seed,
        max_instances: count,
        ..SearchConfig::default()
    };
    let out: Vec<Instance> = generate_instances(&cfg).unwrap().collect();
    assert_eq!(out.len(), count, "suite generator ran out of attempts");
    out
}

/// Minimum expected cost over every decision tree, by exhaustive recursion
/// over (surviving set, items used so far). Every unused item is tried,
/// including ones that do not split the set. No memoisation.
pub fn naive_optimal_cost(inst: &Instance) -> Rational {
    fn mass(inst: &Instance, set: &[usize]) -> Rational {
        set.iter().map(|&r| inst.prior(r).clone()).sum()
    }
    fn pure(inst: &Instance, set: &[usize]) -> bool {
        set.windows(2).all(|w| inst.class_of(w[0]) == inst.class_of(w[1]))
    }
    fn go(inst: &Instance, set: &[usize], used: u64) -> Option<Rational> {
        if pure(inst, set) {
            return Some(Rational::zero());
        }
        let total = mass(inst, set);
        let mut best: Option<Rational> = None;
        for e in 0..inst.num_items() {
            if used & (1 << e) != 0 {
                continue;
            }
            let mut outcomes: Vec<u32> = set.iter().map(|&r| inst.observation(r, e)).collect();
            outcomes.sort_unstable();
            outcomes.dedup();
            let mut v = inst.cost(e).clone();
            let mut feasible = true;
            for o in outcomes {
                let child: Vec<usize> = set.iter().copied().filter(|&r| inst.observation(r, e) == o).collect();
                match go(inst, &child, used | (1 << e)) {
                    Some(c) => v += mass(inst, &child) / &total * c,
                    None => {
                        feasible = false;
                        break;
                    }
                }
            }
            if feasible && best.as_ref().is_none_or(|b| &v < b) {
                best = Some(v);
            }
        }
        best
    }
    let all: Vec<usize> = (0..inst.num_realizations()).collect();
    go(inst, &all, 0).expect("valid instance has a feasible tree")
}

/// `1 - p_a^2 + Σ_k (p_a^k)^3 / p_a`.
pub fn closed_form_f_e(inst: &Instance, a: &RealizationSet) -> Rational {
    let p_a: Rational = a.iter().map(|r| inst.prior(r)).sum();
    let mut per_class: Vec<Rational> = vec![Rational::zero(); inst.num_classes()];
    for r in a.iter() {
        per_class[inst.class_of(r).0] += inst.prior(r);
    }
    let cubes: Rational = per_class.iter().map(|m| m * m * m).sum();
    Rational::one() - p_a.square() + cubes / p_a
}

pub fn random_costs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Rational> {
    (0..n).map(|_| Rational::from(rng.random_range(1..=10i64))).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Same instance with items and realizations listed in permuted order.
pub fn relabel(inst: &Instance, item_perm: &[usize], real_perm: &[usize]) -> Instance {
    let items = item_perm
        .iter()
        .map(|&i| Item { id: inst.items()[i].id.clone(), cost: inst.cost(i).clone() })
        .collect();
    let realizations = real_perm
        .iter()
        .map(|&r| {
            let src = &inst.realizations()[r];
            Realization { id: src.id.clone(), prior: src.prior.clone(), class: src.class.clone() }
        })
        .collect();
    let observations = real_perm
        .iter()
        .map(|&r| item_perm.iter().map(|&i| inst.observation(r, i)).collect())
        .collect();
    Instance::new(items, realizations, observations).unwrap()
}

pub fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(rng);
    v
}

pub fn subsets_of(n: usize) -> Vec<ItemSet> {
    ItemSet::all_subsets(n)
}
