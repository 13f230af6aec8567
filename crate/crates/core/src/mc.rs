//! Reproducible Monte Carlo replications.
//!
//! Every replication draws from its own ChaCha stream keyed by
//! `(master seed, replication index, stream tag)`, so results do not depend
//! on scheduling or on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for replication `rep` of stream `tag` under `master`.
pub fn rng_for(master: u64, rep: u64, tag: u64) -> ChaCha8Rng {
    let seed = mix(mix(master) ^ mix(rep.wrapping_add(0x51_7CC1_B727_220A)) ^ tag.rotate_left(17));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// Runs `reps` replications in parallel and returns their outputs in
/// replication order.
pub fn replicate<T, F>(reps: usize, master: u64, tag: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_for(master, rep as u64, tag);
            f(rep, &mut rng)
        })
        .collect()
}

/// Empirical rejection frequency with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectionRate {
    pub rejections: usize,
    pub reps: usize,
    /// Replications whose test raised an error; counted as non-rejections.
    pub failures: usize,
}

impl RejectionRate {
    pub fn from_outcomes<E>(outcomes: &[Result<bool, E>]) -> Self {
        let mut rejections = 0;
        let mut failures = 0;
        for o in outcomes {
            match o {
                Ok(true) => rejections += 1,
                Ok(false) => {}
                Err(_) => failures += 1,
            }
        }
        Self { rejections, reps: outcomes.len(), failures }
    }

    pub fn rate(&self) -> f64 {
        if self.reps == 0 {
            0.0
        } else {
            self.rejections as f64 / self.reps as f64
        }
    }

    pub fn mc_se(&self) -> f64 {
        if self.reps == 0 {
            return 0.0;
        }
        let p = self.rate();
        (p * (1.0 - p) / self.reps as f64).sqrt()
    }
}
