//! The five-realization, three-item instance on which greedy stop nodes
//! overlap, embedded verbatim together with the conventional node names of
//! its greedy tree.
//!
//! Node naming: `r` is the root, `b`/`g` are the `e1 = 0`/`e1 = 1` branches,
//! `c`/`d` are the `e2 = 1`/`e2 = 0` branches under `b`, and `e`/`f` are the
//! `e3 = 0`/`e3 = 1` branches under `c`. The two leaves under `g` carry no
//! conventional name and are called `h` (`e2 = 0`) and `i` (`e2 = 1`).

use crate::instance::{parse_instance, Instance, Outcome};
use crate::policy::{DecisionTree, NodeId};
use crate::rational::Rational;

pub const INSTANCE_JSON: &str = r#"{
  "items": [
    {"id": "e1", "cost": "1"},
    {"id": "e2", "cost": "1"},
    {"id": "e3", "cost": "1"}
  ],
  "realizations": [
    {"id": "phi1", "prob": "1/5", "class": "k1", "obs": {"e1": 0, "e2": 1, "e3": 0}},
    {"id": "phi2", "prob": "1/5", "class": "k2", "obs": {"e1": 0, "e2": 0, "e3": 1}},
    {"id": "phi3", "prob": "1/5", "class": "k3", "obs": {"e1": 0, "e2": 1, "e3": 1}},
    {"id": "phi4", "prob": "1/5", "class": "k4", "obs": {"e1": 1, "e2": 0, "e3": 1}},
    {"id": "phi5", "prob": "1/5", "class": "k5", "obs": {"e1": 1, "e2": 1, "e3": 0}}
  ]
}
"#;

pub fn instance() -> Instance {
    parse_instance(INSTANCE_JSON).expect("embedded instance parses")
}

/// The threshold at which the overlap shows up.
pub fn threshold() -> Rational {
    Rational::new(23, 25)
}

/// Conventional names with the (item index, outcome) path from the root.
pub const NAMED_PATHS: &[(&str, &[(usize, Outcome)])] = &[
    ("r", &[]),
    ("b", &[(0, 0)]),
    ("g", &[(0, 1)]),
    ("c", &[(0, 0), (1, 1)]),
    ("d", &[(0, 0), (1, 0)]),
    ("e", &[(0, 0), (1, 1), (2, 0)]),
    ("f", &[(0, 0), (1, 1), (2, 1)]),
    ("h", &[(0, 1), (1, 0)]),
    ("i", &[(0, 1), (1, 1)]),
];

/// Looks up a named node in `tree`, if the tree has that path.
pub fn node(tree: &DecisionTree, name: &str) -> Option<NodeId> {
    let (_, path) = NAMED_PATHS.iter().find(|(n, _)| *n == name)?;
    tree.follow(path)
}

/// Conventional name for `id` when `tree` has the greedy shape.
pub fn name_of(tree: &DecisionTree, id: NodeId) -> Option<&'static str> {
    NAMED_PATHS.iter().find(|(_, path)| tree.follow(path) == Some(id)).map(|(n, _)| *n)
}
