//! Agreement, calibration, correlation, decomposition and diversity
//! metrics used by the discriminator-comparison and recovery analyses.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::normal::phi_bar;
use super::ranks::midranks;
use crate::error::{Error, Result};

/// Mean squared error of probability-scaled scores against binary labels
/// (label true = item truly from M1).
pub fn brier(scores_0_100: &[f64], labels: &[bool]) -> Result<f64> {
    if scores_0_100.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "score/label length mismatch: {} vs {}",
            scores_0_100.len(),
            labels.len()
        )));
    }
    if scores_0_100.is_empty() {
        return Err(Error::InvalidInput("empty score list".into()));
    }
    if scores_0_100.iter().any(|s| !(0.0..=100.0).contains(s)) {
        return Err(Error::InvalidInput("scores must lie in [0,100]".into()));
    }
    let total: f64 = scores_0_100
        .iter()
        .zip(labels)
        .map(|(s, &l)| {
            let d = s / 100.0 - if l { 1.0 } else { 0.0 };
            d * d
        })
        .sum();
    Ok(total / scores_0_100.len() as f64)
}

/// Product-moment correlation. Constant inputs are a degenerate error, not
/// a silent zero.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput(
            "correlation needs two equal-length vectors of length >= 2".into(),
        ));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::Degenerate(
            "correlation undefined for constant input".into(),
        ));
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// Rank correlation: Pearson on midranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput(
            "correlation needs two equal-length vectors of length >= 2".into(),
        ));
    }
    let (rx, _) = midranks(x);
    let (ry, _) = midranks(y);
    pearson(&rx, &ry)
}

/// Outcome of the one-sided Wilcoxon signed-rank test (alternative:
/// `a` greater than `b`).
#[derive(Debug, Clone, Copy)]
pub struct WilcoxonOutcome {
    pub w_plus: f64,
    pub n_nonzero: usize,
    pub p_one_sided: f64,
    pub degenerate: bool,
}

/// Paired one-sided Wilcoxon signed-rank test with tie correction;
/// zero differences are dropped.
pub fn wilcoxon_signed_rank_one_sided(a: &[f64], b: &[f64]) -> Result<WilcoxonOutcome> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidInput(
            "paired test needs equal-length non-empty lists".into(),
        ));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Ok(WilcoxonOutcome {
            w_plus: 0.0,
            n_nonzero: 0,
            p_one_sided: 1.0,
            degenerate: true,
        });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = midranks(&abs);
    let w_plus: f64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| *r)
        .sum();
    let n = diffs.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let tie_adjustment: f64 = ties
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum::<f64>()
        / 48.0;
    let variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_adjustment;
    if variance <= 0.0 {
        return Ok(WilcoxonOutcome {
            w_plus,
            n_nonzero: diffs.len(),
            p_one_sided: 1.0,
            degenerate: true,
        });
    }
    let z = (w_plus - mean - 0.5) / variance.sqrt();
    Ok(WilcoxonOutcome {
        w_plus,
        n_nonzero: diffs.len(),
        p_one_sided: phi_bar(z),
        degenerate: false,
    })
}

/// Jaccard index of the two top-`frac` id sets under each value map
/// (ties broken by id, ascending, for determinism).
pub fn jaccard_top_fraction(
    values_a: &BTreeMap<String, f64>,
    values_b: &BTreeMap<String, f64>,
    frac: f64,
) -> Result<f64> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "fraction must lie in (0,1], got {frac}"
        )));
    }
    if values_a.is_empty() {
        return Err(Error::InvalidInput("empty value maps".into()));
    }
    if values_a.keys().ne(values_b.keys()) {
        return Err(Error::InvalidInput(
            "value maps must share the same key set".into(),
        ));
    }
    let take = ((frac * values_a.len() as f64).ceil() as usize).max(1);
    let top = |m: &BTreeMap<String, f64>| -> BTreeSet<String> {
        let mut entries: Vec<(&String, f64)> = m.iter().map(|(k, v)| (k, *v)).collect();
        entries.sort_by(|(ka, va), (kb, vb)| {
            vb.partial_cmp(va)
                .expect("finite values")
                .then_with(|| ka.cmp(kb))
        });
        entries.into_iter().take(take).map(|(k, _)| k.clone()).collect()
    };
    let a = top(values_a);
    let b = top(values_b);
    let intersection = a.intersection(&b).count() as f64;
    let union = a.union(&b).count() as f64;
    Ok(intersection / union)
}

/// Chance-corrected agreement between two raters over categorical labels.
pub fn cohen_kappa(r1: &[String], r2: &[String]) -> Result<f64> {
    if r1.len() != r2.len() || r1.is_empty() {
        return Err(Error::InvalidInput(
            "raters must supply equal-length non-empty label lists".into(),
        ));
    }
    let n = r1.len() as f64;
    let mut marg1: HashMap<&String, f64> = HashMap::new();
    let mut marg2: HashMap<&String, f64> = HashMap::new();
    let mut agree = 0.0;
    for (a, b) in r1.iter().zip(r2) {
        *marg1.entry(a).or_default() += 1.0;
        *marg2.entry(b).or_default() += 1.0;
        if a == b {
            agree += 1.0;
        }
    }
    let po = agree / n;
    let pe: f64 = marg1
        .iter()
        .map(|(label, c1)| c1 / n * marg2.get(label).copied().unwrap_or(0.0) / n)
        .sum();
    if (1.0 - pe).abs() < 1e-12 {
        return Err(Error::Degenerate(
            "kappa undefined: chance agreement is 1 (degenerate marginals)".into(),
        ));
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Fleiss' kappa over an item x category count table with a constant
/// number of raters per item.
pub fn fleiss_kappa(table: &[Vec<u64>]) -> Result<f64> {
    if table.is_empty() || table[0].is_empty() {
        return Err(Error::InvalidInput("empty agreement table".into()));
    }
    let raters: u64 = table[0].iter().sum();
    if raters < 2 {
        return Err(Error::InvalidInput("need at least 2 raters per item".into()));
    }
    if table.iter().any(|row| row.iter().sum::<u64>() != raters) {
        return Err(Error::InvalidInput(
            "every item must have the same rater count".into(),
        ));
    }
    let n_items = table.len() as f64;
    let n_raters = raters as f64;
    let n_categories = table[0].len();

    let mut p_bar = 0.0;
    let mut category_props = vec![0.0; n_categories];
    for row in table {
        let mut same_pairs = 0.0;
        for (j, &count) in row.iter().enumerate() {
            let c = count as f64;
            same_pairs += c * (c - 1.0);
            category_props[j] += c;
        }
        p_bar += same_pairs / (n_raters * (n_raters - 1.0));
    }
    p_bar /= n_items;
    let total = n_items * n_raters;
    let pe: f64 = category_props
        .iter()
        .map(|c| {
            let p = c / total;
            p * p
        })
        .sum();
    if (1.0 - pe).abs() < 1e-12 {
        return Err(Error::Degenerate(
            "kappa undefined: chance agreement is 1 (degenerate marginals)".into(),
        ));
    }
    Ok((p_bar - pe) / (1.0 - pe))
}

/// One observation of a three-factor design.
#[derive(Debug, Clone)]
pub struct Observation {
    pub value: f64,
    pub factor_a: String,
    pub factor_b: String,
    pub factor_c: String,
}

/// Percent of total sum of squares attributed to each main effect, plus
/// the residual. Percentages sum to 100.
#[derive(Debug, Clone, Copy)]
pub struct VarianceDecomposition {
    pub pct_a: f64,
    pub pct_b: f64,
    pub pct_c: f64,
    pub pct_residual: f64,
    pub total_ss: f64,
}

/// Main-effects decomposition of `Y = mu + a_i + b_j + c_k + e`.
pub fn variance_decomposition(observations: &[Observation]) -> Result<VarianceDecomposition> {
    if observations.len() < 2 {
        return Err(Error::InvalidInput(
            "decomposition needs at least 2 observations".into(),
        ));
    }
    let n = observations.len() as f64;
    let grand = observations.iter().map(|o| o.value).sum::<f64>() / n;
    let total_ss: f64 = observations
        .iter()
        .map(|o| {
            let d = o.value - grand;
            d * d
        })
        .sum();

    let main_effect = |key: fn(&Observation) -> &String| -> Result<f64> {
        let mut groups: BTreeMap<&String, (f64, f64)> = BTreeMap::new();
        for o in observations {
            let entry = groups.entry(key(o)).or_insert((0.0, 0.0));
            entry.0 += o.value;
            entry.1 += 1.0;
        }
        if groups.len() < 2 {
            return Err(Error::InvalidInput(
                "every factor needs at least 2 levels".into(),
            ));
        }
        Ok(groups
            .values()
            .map(|(sum, count)| {
                let mean = sum / count;
                let d = mean - grand;
                count * d * d
            })
            .sum())
    };

    let ss_a = main_effect(|o| &o.factor_a)?;
    let ss_b = main_effect(|o| &o.factor_b)?;
    let ss_c = main_effect(|o| &o.factor_c)?;
    if total_ss == 0.0 {
        return Err(Error::Degenerate(
            "decomposition undefined: all observations identical".into(),
        ));
    }
    let residual = total_ss - ss_a - ss_b - ss_c;
    Ok(VarianceDecomposition {
        pct_a: 100.0 * ss_a / total_ss,
        pct_b: 100.0 * ss_b / total_ss,
        pct_c: 100.0 * ss_c / total_ss,
        pct_residual: 100.0 * residual / total_ss,
        total_ss,
    })
}

fn unigram_set(text: &str) -> BTreeSet<String> {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect()
}

/// `1 - mean pairwise Jaccard similarity` of lower-cased unigram sets
/// (higher means less lexical overlap).
pub fn unigram_jaccard_diversity(texts: &[String]) -> Result<f64> {
    if texts.len() < 2 {
        return Err(Error::InvalidInput(
            "diversity needs at least 2 texts".into(),
        ));
    }
    let sets: Vec<BTreeSet<String>> = texts.iter().map(|t| unigram_set(t)).collect();
    let mut total = 0.0;
    let mut pairs = 0.0;
    for i in 0..sets.len() {
        for j in (i + 1)..sets.len() {
            let intersection = sets[i].intersection(&sets[j]).count() as f64;
            let union = sets[i].union(&sets[j]).count() as f64;
            total += if union == 0.0 { 1.0 } else { intersection / union };
            pairs += 1.0;
        }
    }
    Ok(1.0 - total / pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn brier_perfect_and_constant() {
        assert_eq!(brier(&[100.0, 0.0], &[true, false]).unwrap(), 0.0);
        assert_eq!(brier(&[50.0, 50.0, 50.0, 50.0], &[true, false, true, false]).unwrap(), 0.25);
        let v = brier(&[80.0, 30.0], &[true, false]).unwrap();
        assert!((v - 0.065).abs() < 1e-12);
        assert!(brier(&[10.0], &[true, false]).is_err());
        assert!(brier(&[150.0], &[true]).is_err());
    }

    #[test]
    fn pearson_and_spearman_basics() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        // monotone but nonlinear: rank correlation saturates first
        let y = [1.0, 4.0, 9.0];
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let r = pearson(&x, &y).unwrap();
        assert!(r < 1.0 && (r - 0.989_743_318_610_787_2).abs() < 1e-9);
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn wilcoxon_shifted_pairs() {
        let b: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let a: Vec<f64> = b.iter().map(|v| v + 1.0).collect();
        let out = wilcoxon_signed_rank_one_sided(&a, &b).unwrap();
        assert!(out.p_one_sided < 0.001, "p={}", out.p_one_sided);
        let same = wilcoxon_signed_rank_one_sided(&b, &b).unwrap();
        assert!(same.degenerate);
        assert_eq!(same.p_one_sided, 1.0);
    }

    #[test]
    fn jaccard_top_sets() {
        let mk = |vals: &[(&str, f64)]| -> BTreeMap<String, f64> {
            vals.iter().map(|(k, v)| (k.to_string(), *v)).collect()
        };
        let ids: Vec<String> = (0..10).map(|i| format!("h{i}")).collect();
        let mut a = BTreeMap::new();
        let mut b = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            // top-2 of a: h0,h1; top-2 of b: h1,h2
            a.insert(id.clone(), 100.0 - i as f64);
            b.insert(
                id.clone(),
                match i {
                    1 => 100.0,
                    2 => 99.0,
                    _ => 50.0 - i as f64,
                },
            );
        }
        assert!((jaccard_top_fraction(&a, &b, 0.2).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(jaccard_top_fraction(&a, &a, 0.2).unwrap(), 1.0);
        let c = mk(&[("x", 1.0)]);
        assert!(jaccard_top_fraction(&a, &c, 0.2).is_err());
    }

    #[test]
    fn cohen_kappa_identity() {
        let r = labels(&["y", "n", "y", "y"]);
        assert_eq!(cohen_kappa(&r, &r).unwrap(), 1.0);
    }

    #[test]
    fn cohen_kappa_symmetric_marginals() {
        // 200 items, 77% agreement, both raters at exactly 100/100 marginals:
        // pe = 0.5 so kappa = 2*0.77 - 1 = 0.54
        let mut r1 = Vec::new();
        let mut r2 = Vec::new();
        let mut push = |n: usize, a: &str, b: &str| {
            for _ in 0..n {
                r1.push(a.to_string());
                r2.push(b.to_string());
            }
        };
        push(77, "a", "a");
        push(77, "b", "b");
        push(23, "a", "b");
        push(23, "b", "a");
        let k = cohen_kappa(&r1, &r2).unwrap();
        assert!((k - 0.54).abs() < 1e-12);
    }

    #[test]
    fn fleiss_unanimous() {
        let table: Vec<Vec<u64>> = (0..60)
            .map(|i| if i % 2 == 0 { vec![3, 0] } else { vec![0, 3] })
            .collect();
        assert_eq!(fleiss_kappa(&table).unwrap(), 1.0);
    }

    #[test]
    fn fleiss_rejects_ragged_rater_counts() {
        assert!(fleiss_kappa(&[vec![3, 0], vec![2, 2]]).is_err());
    }

    #[test]
    fn fleiss_degenerate_single_category() {
        let table = vec![vec![3u64], vec![3]];
        assert!(matches!(fleiss_kappa(&table), Err(Error::Degenerate(_))));
    }

    #[test]
    fn decomposition_pure_main_effect() {
        let mut obs = Vec::new();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    obs.push(Observation {
                        value: a as f64 * 10.0,
                        factor_a: format!("a{a}"),
                        factor_b: format!("b{b}"),
                        factor_c: format!("c{c}"),
                    });
                }
            }
        }
        let d = variance_decomposition(&obs).unwrap();
        assert!(d.pct_a > 99.0);
        assert!(d.pct_b.abs() < 1e-9 && d.pct_c.abs() < 1e-9);
        let sum = d.pct_a + d.pct_b + d.pct_c + d.pct_residual;
        assert!((sum - 100.0).abs() < 1e-9);
    }

    #[test]
    fn decomposition_rejects_single_level() {
        let obs = vec![
            Observation { value: 1.0, factor_a: "x".into(), factor_b: "b0".into(), factor_c: "c0".into() },
            Observation { value: 2.0, factor_a: "x".into(), factor_b: "b1".into(), factor_c: "c1".into() },
        ];
        assert!(variance_decomposition(&obs).is_err());
    }

    #[test]
    fn diversity_cases() {
        let texts = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(unigram_jaccard_diversity(&texts(&["a b", "a b"])).unwrap(), 0.0);
        assert_eq!(unigram_jaccard_diversity(&texts(&["a b", "c d"])).unwrap(), 1.0);
        let v = unigram_jaccard_diversity(&texts(&["a b", "b c"])).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        assert!(unigram_jaccard_diversity(&texts(&["only one"])).is_err());
    }
}
