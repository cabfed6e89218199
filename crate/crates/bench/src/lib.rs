//! Fixed workloads shared by the benchmarks.

use adagroup::search::{generate_instances, ClassMode, PriorMode, SearchConfig};
use adagroup::Instance;

/// A reproducible instance with `n` realizations over `m` binary items.
pub fn random_instance(n: usize, m: usize, seed: u64) -> Instance {
    let cfg = SearchConfig {
        realizations: n..=n,
        items: m..=m,
        priors: PriorMode::Random { max_denominator: 60 },
        classes: ClassMode::Random { max_classes: n.div_ceil(2) },
        seed,
        max_instances: 1,
        ..SearchConfig::default()
    };
    generate_instances(&cfg)
        .and_then(|mut s| s.next().ok_or_else(|| adagroup::Error::Invalid("no valid draw".into())))
        .expect("generator yields an instance")
}
