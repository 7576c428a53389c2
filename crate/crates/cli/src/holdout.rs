//! Holdout protocol for a pair of observed dissimilarity matrices.
//!
//! Each replicate draws two distinct objects `a` and `b`, embeds the other
//! `n - 2` objects, and places two test pairs out of sample: `a` in both
//! conditions (matched) and `a` in condition 1 against `b` in condition 2
//! (unmatched). The matched statistics over all replicates form the null
//! distribution that sets the critical value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use jofc::inference::{bootstrap_critical_value, TestStatisticSample};
use jofc::pipeline::{JofcSettings, JointEmbedding};
use jofc::{DissimilarityMatrix, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldoutDraw {
    pub replicate: usize,
    pub held_out: [usize; 2],
    pub matched: f64,
    pub unmatched: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldoutLevel {
    pub alpha: f64,
    pub critical_value: f64,
    /// Fraction of matched statistics above the critical value.
    pub size: f64,
    /// Fraction of unmatched statistics above the critical value.
    pub power: f64,
}

/// Smallest input the protocol accepts: two held out, two left to embed.
pub const MIN_OBJECTS: usize = 4;

/// Replicate `k` draws its pair from `ChaCha8(seed + k)`.
pub fn holdout_draws(
    delta1: &DissimilarityMatrix,
    delta2: &DissimilarityMatrix,
    w: f64,
    settings: &JofcSettings,
    replicates: usize,
    seed: u64,
) -> Result<Vec<HoldoutDraw>> {
    let n = delta1.len();
    if delta2.len() != n {
        return Err(Error::SizeMismatch { expected: n, found: delta2.len() });
    }
    if n < MIN_OBJECTS {
        return Err(Error::TooFewValues { needed: MIN_OBJECTS, found: n });
    }
    (0..replicates)
        .into_par_iter()
        .map(|replicate| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(replicate as u64));
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            let train: Vec<usize> = (0..n).filter(|&i| i != a && i != b).collect();
            let model = JointEmbedding::fit(&delta1.submatrix(&train), &delta2.submatrix(&train), w, settings)?;
            let d1 = delta1.row_restricted(a, &train);
            let matched = model.tau(&d1, &delta2.row_restricted(a, &train))?.tau;
            let unmatched = model.tau(&d1, &delta2.row_restricted(b, &train))?.tau;
            log::info!("holdout replicate {replicate}: objects {a}, {b}");
            Ok(HoldoutDraw { replicate, held_out: [a, b], matched, unmatched })
        })
        .collect()
}

pub fn sample(draws: &[HoldoutDraw]) -> Result<TestStatisticSample> {
    TestStatisticSample::new(draws.iter().map(|d| d.matched).collect(), draws.iter().map(|d| d.unmatched).collect())
}

/// Critical value, empirical size and power at each level.
pub fn levels(draws: &[HoldoutDraw], alphas: &[f64]) -> Result<Vec<HoldoutLevel>> {
    let matched: Vec<f64> = draws.iter().map(|d| d.matched).collect();
    let frac_above = |values: &mut dyn Iterator<Item = f64>, t: f64| {
        let (mut above, mut total) = (0usize, 0usize);
        for v in values {
            total += 1;
            if v > t {
                above += 1;
            }
        }
        above as f64 / total as f64
    };
    alphas
        .iter()
        .map(|&alpha| {
            let critical_value = bootstrap_critical_value(&matched, alpha)?;
            Ok(HoldoutLevel {
                alpha,
                critical_value,
                size: frac_above(&mut draws.iter().map(|d| d.matched), critical_value),
                power: frac_above(&mut draws.iter().map(|d| d.unmatched), critical_value),
            })
        })
        .collect()
}
