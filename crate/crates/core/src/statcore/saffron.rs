//! Online FDR control with alpha-wealth (SAFFRON).
//!
//! State carries the full candidacy/rejection history; the test level for
//! the next p-value is a deterministic function of that prefix and the
//! parameters. Rejected p-values are always candidates (the level never
//! exceeds the candidacy threshold), so wealth is only spent on
//! non-candidate tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Riemann zeta(s) for s > 1 via direct summation plus an Euler-Maclaurin
/// tail, used to normalize the spending sequence.
fn zeta(s: f64) -> f64 {
    const J: usize = 200_000;
    let mut total = 0.0;
    for j in 1..=J {
        total += (j as f64).powf(-s);
    }
    let jf = J as f64;
    total + jf.powf(1.0 - s) / (s - 1.0) - 0.5 * jf.powf(-s) + s * jf.powf(-s - 1.0) / 12.0
}

/// Parameters of the procedure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaffronParams {
    /// Target FDR level.
    pub alpha: f64,
    /// Candidacy threshold.
    pub lambda: f64,
    /// Initial wealth.
    pub w0: f64,
    /// Exponent of the polynomial spending sequence gamma_j ~ j^-s.
    pub gamma_exponent: f64,
}

impl SaffronParams {
    /// lambda = 0.5, w0 = alpha/2, gamma_j proportional to j^-1.6.
    pub fn default_for(alpha: f64) -> Self {
        SaffronParams {
            alpha,
            lambda: 0.5,
            w0: alpha / 2.0,
            gamma_exponent: 1.6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaffronState {
    params: SaffronParams,
    /// Candidacy indicator per processed p-value.
    candidates: Vec<bool>,
    /// 1-based times of rejections.
    rejection_times: Vec<usize>,
    /// Sum of levels spent on non-candidate tests, scaled by 1/(1-lambda).
    spent: f64,
    /// Normalization constant of the gamma sequence.
    gamma_norm: f64,
}

impl SaffronState {
    pub fn new(params: SaffronParams) -> Result<Self> {
        if !(params.alpha > 0.0 && params.alpha < 1.0) {
            return Err(Error::InvalidInput("alpha must lie in (0,1)".into()));
        }
        if !(params.lambda > 0.0 && params.lambda < 1.0) {
            return Err(Error::InvalidInput("lambda must lie in (0,1)".into()));
        }
        if !(params.w0 > 0.0 && params.w0 <= params.alpha) {
            return Err(Error::InvalidInput("w0 must lie in (0, alpha]".into()));
        }
        if params.gamma_exponent <= 1.0 {
            return Err(Error::InvalidInput(
                "gamma exponent must exceed 1 for a summable sequence".into(),
            ));
        }
        let gamma_norm = zeta(params.gamma_exponent);
        Ok(SaffronState {
            params,
            candidates: Vec::new(),
            rejection_times: Vec::new(),
            spent: 0.0,
            gamma_norm,
        })
    }

    fn gamma(&self, j: i64) -> f64 {
        if j < 1 {
            0.0
        } else {
            (j as f64).powf(-self.params.gamma_exponent) / self.gamma_norm
        }
    }

    /// Number of processed p-values so far.
    pub fn tests(&self) -> usize {
        self.candidates.len()
    }

    pub fn rejections(&self) -> usize {
        self.rejection_times.len()
    }

    /// Remaining error budget: alpha * max(R,1) minus the spent estimate.
    /// Non-negative by construction of the level schedule.
    pub fn wealth(&self) -> f64 {
        self.params.alpha * (self.rejections().max(1)) as f64 - self.spent
    }

    /// Test level that would apply to the next p-value.
    pub fn next_level(&self) -> f64 {
        let t = (self.candidates.len() + 1) as i64;
        let candidates_before: i64 = self.candidates.iter().filter(|&&c| c).count() as i64;
        let p = &self.params;

        let mut level = p.w0 * self.gamma(t - candidates_before);
        for (j, &tau) in self.rejection_times.iter().enumerate() {
            let candidates_after_tau: i64 =
                self.candidates[tau..].iter().filter(|&&c| c).count() as i64;
            let g = self.gamma(t - tau as i64 - candidates_after_tau);
            let earned = if j == 0 {
                (1.0 - p.lambda) * p.alpha - p.w0
            } else {
                (1.0 - p.lambda) * p.alpha
            };
            level += earned * g;
        }
        level.min(p.lambda)
    }
}

/// Feed one p-value through the procedure; returns the rejection decision
/// and the updated state.
pub fn saffron_step(mut state: SaffronState, p: f64) -> Result<(bool, SaffronState)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "p-value must lie in [0,1], got {p}"
        )));
    }
    let level = state.next_level();
    let is_candidate = p < state.params.lambda;
    let rejected = p <= level;
    if !is_candidate {
        state.spent += level / (1.0 - state.params.lambda);
    }
    if rejected {
        state.rejection_times.push(state.candidates.len() + 1);
    }
    state.candidates.push(is_candidate);
    Ok((rejected, state))
}
