//! Inputs shared by the pipeline benchmarks.

use std::path::PathBuf;

use rand::Rng;
use relgen_core::corpus::load_tacred;
use relgen_core::seed::rng_from_seed;
use relgen_core::{Provenance, ReSample};

pub fn fixture_gold() -> Vec<ReSample> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/fixtures/tacred_synth.json");
    load_tacred(path).expect("fixture loads")
}

/// `n` random sentences of 12..40 words over a `vocab`-word vocabulary.
pub fn synthetic_samples(n: usize, vocab: usize, seed: u64) -> Vec<ReSample> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(12..40);
            let tokens: Vec<String> = (0..len).map(|_| format!("w{}", rng.gen_range(0..vocab))).collect();
            ReSample::from_ranges(tokens, (0, 2), (5, 6), "per:age", Provenance::Generated, format!("s{i}"))
                .expect("spans in range")
        })
        .collect()
}
