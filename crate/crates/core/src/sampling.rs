//! Random draws used by the simulators and randomized fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp1};

/// Name of the generator recorded in run manifests.
pub const GENERATOR: &str = "ChaCha8 (rand_chacha 0.9), stream = replication index";

/// Generator for replication `replication` of a run seeded with `seed`.
/// Streams are independent, so replications can run on any thread.
pub fn substream(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Symmetric Dirichlet(1) draw of dimension `k` (normalized unit
/// exponentials). Every entry is strictly positive.
pub fn dirichlet_ones<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    loop {
        let draw: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draw.iter().sum();
        if total > 0.0 && draw.iter().all(|&x| x > 0.0) {
            return draw.into_iter().map(|x| x / total).collect();
        }
    }
}

/// Inverse-cdf draw of an index from `weights` (which should sum to 1).
/// Falls back to the last positive weight on round-off.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}
