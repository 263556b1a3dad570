//! Closed-form planning rules linking judgment budgets to detectable AUC
//! gaps under the balanced one-sided design (m = n = N/2).

use super::normal::phi_inv;
use crate::error::{Error, Result};

fn null_se(total_judgments: u64) -> f64 {
    let n = total_judgments as f64;
    ((n + 1.0) / (3.0 * n * n)).sqrt()
}

fn check_n(total_judgments: u64) -> Result<()> {
    if total_judgments < 4 || total_judgments % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "N must be even and >= 4, got {total_judgments}"
        )));
    }
    Ok(())
}

/// Smallest AUC reaching one-sided significance at level `alpha` with `n`
/// total judgments: `0.5 + z_{1-alpha} * sqrt((N+1)/(3 N^2))`.
pub fn min_significant_auc(total_judgments: u64, alpha: f64) -> Result<f64> {
    check_n(total_judgments)?;
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0, 0.5], got {alpha}"
        )));
    }
    Ok(0.5 + phi_inv(1.0 - alpha) * null_se(total_judgments))
}

/// Smallest AUC detectable with power `1-beta` at level `alpha`:
/// `0.5 + (z_{1-alpha} + z_{1-beta}) * sqrt((N+1)/(3 N^2))`.
pub fn min_detectable_auc(total_judgments: u64, alpha: f64, beta: f64) -> Result<f64> {
    check_n(total_judgments)?;
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0, 0.5], got {alpha}"
        )));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "beta must lie in (0,1), got {beta}"
        )));
    }
    Ok(0.5 + (phi_inv(1.0 - alpha) + phi_inv(1.0 - beta)) * null_se(total_judgments))
}

/// Judgments needed to detect an AUC gap `delta` with power `1-beta` at
/// level `alpha`: ceiling of `(z_{1-alpha}+z_{1-beta})^2 / (3 delta^2)`,
/// rounded up to the next even integer so the design stays balanced.
pub fn required_judgments(delta: f64, alpha: f64, beta: f64) -> Result<u64> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidInput(format!(
            "delta must lie in (0, 0.5), got {delta}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidInput(
            "alpha and beta must lie in (0,1)".into(),
        ));
    }
    let z_sum = phi_inv(1.0 - alpha) + phi_inv(1.0 - beta);
    let raw = z_sum * z_sum / (3.0 * delta * delta);
    let mut n = raw.ceil() as u64;
    if n % 2 != 0 {
        n += 1;
    }
    Ok(n.max(4))
}

#[cfg(test)]
mod tests {
    use super::*;

    const STRINGENT_ALPHA: f64 = 0.00037037;

    #[test]
    fn significance_table() {
        for (n, expected) in [(80, 0.719), (120, 0.679), (200, 0.638), (400, 0.598)] {
            let got = min_significant_auc(n, STRINGENT_ALPHA).unwrap();
            assert!(
                (got - expected).abs() <= 5e-4,
                "N={n}: got {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn alpha_half_reduces_to_chance() {
        assert!((min_significant_auc(1_000_000, 0.5).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn detectable_reduces_to_significant_at_beta_half() {
        let a = min_detectable_auc(144, 0.05, 0.5).unwrap();
        let b = min_significant_auc(144, 0.05).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn detectable_monotone_in_n() {
        let mut last = f64::INFINITY;
        for n in [40u64, 80, 160, 320, 640] {
            let v = min_detectable_auc(n, 0.05, 0.2).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn detectable_inverts_required_judgments() {
        // gap 0.12 at alpha=0.05, power 0.8 needs 144 judgments, at which
        // point the detectable gap is back at ~0.12
        let n = required_judgments(0.12, 0.05, 0.2).unwrap();
        assert_eq!(n, 144);
        let gap = min_detectable_auc(n, 0.05, 0.2).unwrap() - 0.5;
        assert!((gap - 0.12).abs() < 0.005, "gap={gap}");
    }

    #[test]
    fn required_judgments_table() {
        assert_eq!(required_judgments(0.12, 0.05, 0.2).unwrap(), 144);
        for (delta, expected) in [
            (0.12, 412u64),
            (0.13, 351),
            (0.14, 303),
            (0.15, 264),
            (0.16, 232),
        ] {
            let got = required_judgments(delta, STRINGENT_ALPHA, 0.2).unwrap();
            assert!(
                got.abs_diff(expected) <= 1,
                "delta={delta}: got {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn domain_errors() {
        assert!(min_significant_auc(81, 0.05).is_err());
        assert!(min_significant_auc(2, 0.05).is_err());
        assert!(min_significant_auc(80, 0.6).is_err());
        assert!(required_judgments(0.0, 0.05, 0.2).is_err());
    }
}
