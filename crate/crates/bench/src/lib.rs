//! Shared fixtures for the criterion benchmarks.

use okl_core::{Dataset, Instance, Label, LabeledExample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` points uniform in `[-1, 1]^d`, labelled by a noisy quadratic.
pub fn synthetic(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = x[0] * x[0] + x.get(1).copied().unwrap_or(0.0) - 0.3 + 0.2 * rng.random_range(-1.0..1.0);
            LabeledExample { instance: Instance::dense(x), label: Label::from_margin(s), source_index: i }
        })
        .collect();
    Dataset { examples, dimension: d, name: format!("synthetic-{n}x{d}") }
}
