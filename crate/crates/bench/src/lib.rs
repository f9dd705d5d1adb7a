//! Fixtures shared by the criterion benchmarks.

use mttsp_core::generate::{generate_instance, GenConfig};
use mttsp_core::Instance;

/// Generated instance with `n` targets, `m` agents and the given total window
/// length per target.
pub fn fixture(n: usize, m: usize, duration: f64, seed: u64) -> Instance {
    generate_instance(&GenConfig::new(n, duration, seed))
        .expect("bench fixture generates")
        .with_agents(m)
}
