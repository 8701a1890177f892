//! Wall-clock cost of template generation, excluding I/O.

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::scoring::{eval_key, EvalScheme};
use crate::baseline::BaselineTransform;
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::hashgray::protect;

pub const MIN_TRIALS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchReport {
    pub trials: usize,
    /// Seconds.
    pub median: f64,
    /// Seconds.
    pub p95: f64,
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Times one template generation per trial over pre-generated embeddings.
/// For baselines the per-key transform setup is included, since a new key
/// means new permutations or projections.
pub fn bench_template_generation(scheme: &EvalScheme, dim: usize, trials: usize, seed: u64) -> Result<BenchReport> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidParameter(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let inputs: Vec<Embedding> = (0..trials)
        .map(|_| Embedding::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect::<Result<_>>()?;
    let keys: Vec<_> = (0..trials).map(|i| eval_key(seed, "bench", i)).collect();

    let mut samples = Vec::with_capacity(trials);
    for (e, key) in inputs.iter().zip(&keys) {
        let start = Instant::now();
        match scheme {
            EvalScheme::Cosine => {
                black_box(e.l2_norm());
            }
            EvalScheme::Charvoc(params) => {
                black_box(protect(key, e, params)?);
            }
            EvalScheme::Baseline(params) => {
                black_box(BaselineTransform::new(params, key)?.apply(e)?);
            }
        }
        samples.push(start.elapsed().as_secs_f64());
    }
    samples.sort_by(f64::total_cmp);
    Ok(BenchReport {
        trials,
        median: median(&samples),
        p95: percentile(&samples, 0.95),
    })
}
