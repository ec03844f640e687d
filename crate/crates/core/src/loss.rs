//! Training objectives: binary cross-entropy on relatedness and a margin
//! ranking loss over positive/negative box pairs.

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::pseudo_gt::BoxTarget;

/// Scores are clamped to `[CLAMP, 1 - CLAMP]` inside the cross-entropy.
pub const CLAMP: f64 = 1e-7;

/// Default ranking margin.
pub const DEFAULT_MARGIN: f64 = 0.1;

fn clamp_score(r: f64) -> f64 {
    r.clamp(CLAMP, 1.0 - CLAMP)
}

fn check_lengths(r: &[f64], targets: usize) -> Result<()> {
    if r.is_empty() {
        return Err(Error::EmptyInput("score list"));
    }
    if r.len() != targets {
        return Err(Error::DimensionMismatch {
            what: "binary labels",
            expected: r.len(),
            found: targets,
        });
    }
    Ok(())
}

/// `-(1/|B|) Σ [r* ln r + (1 - r*) ln(1 - r)]` with clamped `r`.
pub fn binary_xe(r: &[f64], r_star: &[u8]) -> Result<f64> {
    check_lengths(r, r_star.len())?;
    let sum: f64 = r
        .iter()
        .zip(r_star)
        .map(|(&r, &t)| {
            let r = clamp_score(r);
            if t == 1 {
                libm::log(r)
            } else {
                libm::log(1.0 - r)
            }
        })
        .sum();
    Ok(-sum / r.len() as f64)
}

/// `dL/dr_i` of [`binary_xe`]; zero where the clamp is active.
pub fn binary_xe_grad(r: &[f64], r_star: &[u8]) -> Result<Vec<f64>> {
    check_lengths(r, r_star.len())?;
    let n = r.len() as f64;
    Ok(r.iter()
        .zip(r_star)
        .map(|(&r, &t)| {
            if !(CLAMP..=1.0 - CLAMP).contains(&r) {
                0.0
            } else if t == 1 {
                -1.0 / (r * n)
            } else {
                1.0 / ((1.0 - r) * n)
            }
        })
        .collect())
}

/// A ranking pair: `negative` should score at least `margin` below `positive`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankPair {
    pub negative: usize,
    pub positive: usize,
}

/// Sampling after splitting by q-value.
///
/// Every box with `rho > 0.5` is a positive. For each positive, the boxes
/// with a strictly smaller q-value are ranked by predicted relatedness
/// (descending) and the first `min(top_h, count)` become its negatives.
/// Ties in relatedness are broken by a permutation drawn from `seed`.
pub fn sample_pairs(targets: &[BoxTarget], predicted: &[f64], top_h: usize, seed: u64) -> Result<Vec<RankPair>> {
    if targets.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            what: "predicted scores",
            expected: targets.len(),
            found: predicted.len(),
        });
    }
    let mut ranked: Vec<usize> = (0..targets.len()).collect();
    ranked.shuffle(&mut crate::rng::stream(seed, 0x5a11));
    ranked.sort_by(|&a, &b| predicted[b].total_cmp(&predicted[a]));

    let mut pairs = Vec::new();
    for (pos, t) in targets.iter().enumerate() {
        if !t.is_positive() {
            continue;
        }
        pairs.extend(
            ranked
                .iter()
                .filter(|&&i| targets[i].q_value < t.q_value)
                .take(top_h)
                .map(|&negative| RankPair {
                    negative,
                    positive: pos,
                }),
        );
    }
    Ok(pairs)
}

/// `(1/N) Σ max(0, r_neg - r_pos + margin)`; 0 for no pairs.
pub fn ranking_loss(pairs: &[RankPair], r: &[f64], margin: f64) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let sum: f64 = pairs
        .iter()
        .map(|p| (r[p.negative] - r[p.positive] + margin).max(0.0))
        .sum();
    sum / pairs.len() as f64
}

/// `dL/dr` of [`ranking_loss`]. Pairs exactly at the hinge get zero slope.
pub fn ranking_loss_grad(pairs: &[RankPair], r: &[f64], margin: f64) -> Vec<f64> {
    let mut g = vec![0.0; r.len()];
    if pairs.is_empty() {
        return g;
    }
    let w = 1.0 / pairs.len() as f64;
    for p in pairs {
        if r[p.negative] - r[p.positive] + margin > 0.0 {
            g[p.negative] += w;
            g[p.positive] -= w;
        }
    }
    g
}
