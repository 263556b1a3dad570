//! AUC and the one-sided Mann-Whitney U test.

use serde::{Deserialize, Serialize};

use super::normal::phi_bar;
use super::ranks::{midranks, tie_term};
use crate::error::{Error, Result};

/// Scores split by true label: `positives` for true-M1 items, `negatives`
/// for true-M2 items.
#[derive(Debug, Clone)]
pub struct ScoreSample {
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
}

impl ScoreSample {
    pub fn new(positives: Vec<f64>, negatives: Vec<f64>) -> Result<Self> {
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::InvalidInput(
                "both score groups must be non-empty".into(),
            ));
        }
        if positives
            .iter()
            .chain(negatives.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("scores must be finite".into()));
        }
        Ok(Self {
            positives,
            negatives,
        })
    }
}

/// Outcome of the one-sided test (alternative: positives stochastically
/// larger, i.e. AUC > 0.5).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TestOutcome {
    pub auc: f64,
    pub u_statistic: f64,
    pub z: f64,
    pub p_one_sided: f64,
    /// All pooled values identical; p pinned to 1.0 rather than erroring.
    pub degenerate: bool,
}

/// Rank-sum U statistic for the positive group.
fn u_statistic(sample: &ScoreSample) -> (f64, Vec<usize>) {
    let m = sample.positives.len();
    let pooled: Vec<f64> = sample
        .positives
        .iter()
        .chain(sample.negatives.iter())
        .copied()
        .collect();
    let (ranks, ties) = midranks(&pooled);
    let rank_sum_pos: f64 = ranks[..m].iter().sum();
    let u = rank_sum_pos - (m * (m + 1)) as f64 / 2.0;
    (u, ties)
}

/// `P(pos > neg) + 0.5 * P(pos = neg)` over all pairs, via midranks.
pub fn auc(sample: &ScoreSample) -> f64 {
    let m = sample.positives.len() as f64;
    let n = sample.negatives.len() as f64;
    let (u, _) = u_statistic(sample);
    u / (m * n)
}

/// One-sided Mann-Whitney U with tie-corrected normal approximation.
pub fn mwu_one_sided(sample: &ScoreSample, continuity: bool) -> TestOutcome {
    let m = sample.positives.len() as f64;
    let n = sample.negatives.len() as f64;
    let big_n = m + n;
    let (u, ties) = u_statistic(sample);
    let auc = u / (m * n);

    let tie_adjustment = if big_n > 1.0 {
        tie_term(&ties) / (big_n * (big_n - 1.0))
    } else {
        0.0
    };
    let variance = m * n / 12.0 * ((big_n + 1.0) - tie_adjustment);
    if variance <= 0.0 {
        return TestOutcome {
            auc,
            u_statistic: u,
            z: 0.0,
            p_one_sided: 1.0,
            degenerate: true,
        };
    }
    let correction = if continuity { 0.5 } else { 0.0 };
    let z = (u - m * n / 2.0 - correction) / variance.sqrt();
    TestOutcome {
        auc,
        u_statistic: u,
        z,
        p_one_sided: phi_bar(z),
        degenerate: false,
    }
}
