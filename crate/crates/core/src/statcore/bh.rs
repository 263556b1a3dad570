//! Benjamini-Hochberg step-up procedure.

/// Step-up rejection at FDR level `q`.
///
/// Finds the largest i with `p_(i) <= (i/M) q` and rejects every hypothesis
/// whose p-value is at or below that order statistic, so tied p-values share
/// one fate.
pub fn bh_reject(pvalues: &[f64], q: f64) -> Vec<bool> {
    assert!(q > 0.0 && q < 1.0, "q must lie in (0,1)");
    assert!(
        pvalues.iter().all(|p| (0.0..=1.0).contains(p)),
        "p-values must lie in [0,1]"
    );
    let m = pvalues.len();
    if m == 0 {
        return Vec::new();
    }
    let mut sorted: Vec<f64> = pvalues.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("p-values are finite"));

    let mut cutoff = None;
    for (i, p) in sorted.iter().enumerate() {
        if *p <= (i + 1) as f64 / m as f64 * q {
            cutoff = Some(*p);
        }
    }
    match cutoff {
        Some(threshold) => pvalues.iter().map(|p| *p <= threshold).collect(),
        None => vec![false; m],
    }
}
