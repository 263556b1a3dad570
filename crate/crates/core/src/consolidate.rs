//! Consolidation of validated hypotheses: correlation-based affinity,
//! spectral clustering with silhouette-selected k, representative picking,
//! and the thematic summary.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genpair::ModelTag;
use crate::hypothesis::Hypothesis;
use crate::kmeans::kmeans;
use crate::llmclient::{ChatRequest, LlmClient, Role};
use crate::seeding;
use crate::statcore::pearson;
use crate::templates;
use crate::validate::Example;

/// Discriminator scores of every hypothesis over a shared evaluation set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub hypothesis_ids: Vec<String>,
    pub example_ids: Vec<String>,
    /// `values[row][col]` is the score of hypothesis `row` on example `col`.
    pub values: Vec<Vec<f64>>,
    pub labels: Vec<ModelTag>,
}

impl ScoreMatrix {
    pub fn check(&self) -> Result<()> {
        if self.values.len() != self.hypothesis_ids.len() {
            return Err(Error::Inconsistent("score matrix row count mismatch".into()));
        }
        for row in &self.values {
            if row.len() != self.example_ids.len() {
                return Err(Error::Inconsistent("score matrix has missing cells".into()));
            }
        }
        if self.labels.len() != self.example_ids.len() {
            return Err(Error::Inconsistent("score matrix label count mismatch".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressionResult {
    pub chosen_k: usize,
    pub assignment: BTreeMap<String, usize>,
    pub representatives: BTreeMap<usize, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub silhouette: Option<f64>,
    /// Set when n < 9: every hypothesis kept as its own representative.
    #[serde(default)]
    pub skipped: bool,
}

/// Uniform balanced sample across contexts: exactly size/2 per model.
pub fn build_shared_eval_set(
    pools_m1: &[Example],
    pools_m2: &[Example],
    size: usize,
    seed: u64,
) -> Result<Vec<Example>> {
    if size == 0 || size % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "shared eval set size must be even and positive, got {size}"
        )));
    }
    let per_side = size / 2;
    if pools_m1.len() < per_side || pools_m2.len() < per_side {
        return Err(Error::Shortfall {
            context: "shared eval set".into(),
            needed: per_side,
            m1: pools_m1.len(),
            m2: pools_m2.len(),
        });
    }
    let mut rng = seeding::rng_for(seed, "shared_eval", "all");
    let mut chosen = Vec::with_capacity(size);
    for pool in [pools_m1, pools_m2] {
        let mut indices: Vec<usize> = (0..pool.len()).collect();
        indices.shuffle(&mut rng);
        chosen.extend(indices[..per_side].iter().map(|&i| pool[i].clone()));
    }
    chosen.shuffle(&mut rng);
    Ok(chosen)
}

/// Pairwise Pearson correlations between score rows. Constant rows are
/// excluded from the output (their ids are returned as the second element).
pub fn correlation_matrix(matrix: &ScoreMatrix) -> Result<(Vec<String>, Vec<String>, Vec<Vec<f64>>)> {
    matrix.check()?;
    let mut kept = Vec::new();
    let mut kept_rows: Vec<&Vec<f64>> = Vec::new();
    let mut excluded = Vec::new();
    for (id, row) in matrix.hypothesis_ids.iter().zip(&matrix.values) {
        let constant = row.windows(2).all(|w| w[0] == w[1]);
        if constant {
            excluded.push(id.clone());
        } else {
            kept.push(id.clone());
            kept_rows.push(row);
        }
    }
    if kept.len() < 2 {
        return Err(Error::Degenerate(
            "fewer than 2 non-constant score rows; consolidation impossible".into(),
        ));
    }
    let n = kept.len();
    let mut rho = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let r = pearson(kept_rows[i], kept_rows[j])?;
            rho[i][j] = r;
            rho[j][i] = r;
        }
    }
    Ok((kept, excluded, rho))
}

/// Shift-and-scale correlations into [0,1] with a unit diagonal.
pub fn affinity_from_correlation(rho: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rho.len();
    let mut affinity = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            affinity[i][j] = if i == j { 1.0 } else { (rho[i][j] + 1.0) / 2.0 };
        }
    }
    affinity
}

/// Spectral embedding of a precomputed affinity: rows of the k
/// smallest-eigenvalue eigenvectors of `L_sym = I - D^{-1/2} A D^{-1/2}`,
/// renormalized, then seeded k-means.
pub fn spectral_cluster(affinity: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = affinity.len();
    if k < 1 || k > n {
        return Err(Error::InvalidInput(format!(
            "cluster count {k} out of range for {n} hypotheses"
        )));
    }
    for (i, row) in affinity.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidInput("affinity matrix must be square".into()));
        }
        for (j, &v) in row.iter().enumerate() {
            if !(0.0..=1.0 + 1e-12).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "affinity[{i}][{j}] = {v} outside [0,1]"
                )));
            }
            if (affinity[j][i] - v).abs() > 1e-9 {
                return Err(Error::InvalidInput("affinity matrix must be symmetric".into()));
            }
        }
    }

    let embedding = spectral_embedding(affinity, k)?;
    let fit = kmeans(&embedding, k, seed, 10)?;
    Ok(fit.assignment)
}

/// The embedding rows; exposed separately so tests can check eigenpair
/// residuals.
pub fn spectral_embedding(affinity: &[Vec<f64>], k: usize) -> Result<Vec<Vec<f64>>> {
    let n = affinity.len();
    let degree: Vec<f64> = affinity.iter().map(|row| row.iter().sum::<f64>()).collect();
    let inv_sqrt: Vec<f64> = degree
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut laplacian = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let normalized = inv_sqrt[i] * affinity[i][j] * inv_sqrt[j];
            let identity = if i == j { 1.0 } else { 0.0 };
            laplacian[(i, j)] = identity - normalized;
        }
    }
    // enforce exact symmetry against rounding
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (laplacian[(i, j)] + laplacian[(j, i)]);
            laplacian[(i, j)] = v;
            laplacian[(j, i)] = v;
        }
    }
    let eigen = laplacian.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[a]
            .partial_cmp(&eigen.eigenvalues[b])
            .expect("finite eigenvalues")
    });
    let chosen = &order[..k];

    let mut rows = vec![vec![0.0; k]; n];
    for (col, &ev_index) in chosen.iter().enumerate() {
        let vector = eigen.eigenvectors.column(ev_index);
        for i in 0..n {
            rows[i][col] = vector[i];
        }
    }
    for row in &mut rows {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }
    Ok(rows)
}

/// Mean silhouette over all points for a distance matrix and assignment;
/// singleton clusters contribute 0.
pub fn silhouette(distance: &[Vec<f64>], assignment: &[usize]) -> f64 {
    let n = assignment.len();
    let clusters: BTreeSet<usize> = assignment.iter().copied().collect();
    let mut total = 0.0;
    for i in 0..n {
        let own = assignment[i];
        let own_size = assignment.iter().filter(|&&a| a == own).count();
        if own_size <= 1 {
            continue; // s(i) = 0
        }
        let a: f64 = (0..n)
            .filter(|&j| j != i && assignment[j] == own)
            .map(|j| distance[i][j])
            .sum::<f64>()
            / (own_size - 1) as f64;
        let b = clusters
            .iter()
            .filter(|&&c| c != own)
            .map(|&c| {
                let members: Vec<usize> = (0..n).filter(|&j| assignment[j] == c).collect();
                members.iter().map(|&j| distance[i][j]).sum::<f64>() / members.len() as f64
            })
            .min_by(|x, y| x.partial_cmp(y).expect("finite distances"))
            .unwrap_or(f64::INFINITY);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// Exhaustive silhouette-maximizing k over `{3..8}` intersected with
/// `k <= n/3` (ties favor smaller k). Below n = 9 compression is skipped
/// and every hypothesis represents itself.
pub fn select_k(
    affinity: &[Vec<f64>],
    hypothesis_ids: &[String],
    seed: u64,
) -> Result<CompressionResult> {
    let n = affinity.len();
    if n != hypothesis_ids.len() {
        return Err(Error::InvalidInput("affinity/id length mismatch".into()));
    }
    let max_k = (n / 3).min(8);
    if n < 9 || max_k < 3 {
        let assignment: BTreeMap<String, usize> = hypothesis_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let representatives: BTreeMap<usize, String> = hypothesis_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (i, id.clone()))
            .collect();
        return Ok(CompressionResult {
            chosen_k: n,
            assignment,
            representatives,
            silhouette: None,
            skipped: true,
        });
    }

    let distance: Vec<Vec<f64>> = affinity
        .iter()
        .map(|row| row.iter().map(|&a| 1.0 - a).collect())
        .collect();

    let mut best: Option<(usize, Vec<usize>, f64)> = None;
    for k in 3..=max_k {
        let assignment = spectral_cluster(affinity, k, seeding::derive_seed(seed, "spectral", &k.to_string()))?;
        let score = silhouette(&distance, &assignment);
        let better = match &best {
            None => true,
            Some((_, _, best_score)) => score > *best_score,
        };
        if better {
            best = Some((k, assignment, score));
        }
    }
    let (chosen_k, assignment, score) = best.expect("feasible set non-empty");
    let assignment_map: BTreeMap<String, usize> = hypothesis_ids
        .iter()
        .zip(&assignment)
        .map(|(id, &c)| (id.clone(), c))
        .collect();
    Ok(CompressionResult {
        chosen_k,
        assignment: assignment_map,
        representatives: BTreeMap::new(),
        silhouette: Some(score),
        skipped: false,
    })
}

/// Two-stage representative rule: keep the top half of the cluster by mean
/// within-cluster correlation, then take the member with the highest
/// validation AUC; ties fall to the lowest id.
pub fn pick_representative(
    members: &[String],
    rho: &BTreeMap<(String, String), f64>,
    auc_within: &BTreeMap<String, f64>,
) -> Result<String> {
    if members.is_empty() {
        return Err(Error::InvalidInput("empty cluster".into()));
    }
    if members.len() == 1 {
        return Ok(members[0].clone());
    }
    let mean_corr = |id: &String| -> f64 {
        let others: Vec<f64> = members
            .iter()
            .filter(|other| *other != id)
            .map(|other| {
                rho.get(&(id.clone(), other.clone()))
                    .or_else(|| rho.get(&(other.clone(), id.clone())))
                    .copied()
                    .unwrap_or(0.0)
            })
            .collect();
        others.iter().sum::<f64>() / others.len() as f64
    };
    let mut scored: Vec<(String, f64)> = members.iter().map(|id| (id.clone(), mean_corr(id))).collect();
    scored.sort_by(|(ida, ca), (idb, cb)| {
        cb.partial_cmp(ca).expect("finite correlations").then_with(|| ida.cmp(idb))
    });
    let keep = members.len().div_ceil(2);
    let retained = &scored[..keep];
    let mut best: Option<(&String, f64)> = None;
    for (id, _) in retained {
        let auc = auc_within.get(id).copied().unwrap_or(f64::NEG_INFINITY);
        let better = match best {
            None => true,
            Some((best_id, best_auc)) => {
                auc > best_auc || (auc == best_auc && id < best_id)
            }
        };
        if better {
            best = Some((id, auc));
        }
    }
    Ok(best.expect("retained set non-empty").0.clone())
}

/// Parsed form of a thematic summary reply.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParsedSummary {
    pub categories: Vec<SummaryCategory>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryCategory {
    pub name: String,
    pub items: Vec<SummaryItem>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryItem {
    pub change: String,
    pub description: String,
    pub citations: Vec<(String, u64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThematicSummary {
    /// Verbatim summarizer reply.
    pub raw: String,
    pub parsed: Option<ParsedSummary>,
}

/// Scaffold listing the validated hypotheses with (dataset, id) indices.
/// Ids are 1-based per dataset, in hypothesis order.
pub fn build_summary_scaffold(hypotheses: &[Hypothesis]) -> (String, BTreeMap<(String, u64), String>) {
    let mut scaffold = String::from(templates::SUMMARY_SCAFFOLD_NOTE);
    scaffold.push('\n');
    let mut index: BTreeMap<(String, u64), String> = BTreeMap::new();
    let mut counters: BTreeMap<String, u64> = BTreeMap::new();
    for h in hypotheses {
        let counter = counters.entry(h.dataset.clone()).or_insert(0);
        *counter += 1;
        index.insert((h.dataset.clone(), *counter), h.hypothesis_id.clone());
        scaffold.push_str(&format!("\nHypothesis ({}, {}): {}", h.dataset, counter, h.text));
    }
    (scaffold, index)
}

fn brace_argument(text: &str, start: usize) -> Option<(String, usize)> {
    let bytes = text.as_bytes();
    if start >= bytes.len() || bytes[start] != b'{' {
        return None;
    }
    let mut depth = 0usize;
    for (offset, ch) in text[start..].char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    let inner = &text[start + 1..start + offset];
                    return Some((inner.to_string(), start + offset + 1));
                }
            }
            _ => {}
        }
    }
    None
}

/// Parse `\catrow{...}` / `\itemrow{...}{...}` rows and the
/// `(dataset: i, j, ...)` citation tuples.
pub fn parse_summary(
    raw: &str,
    valid_index: &BTreeMap<(String, u64), String>,
) -> Option<ParsedSummary> {
    let citation_re = Regex::new(r"\(([A-Za-z0-9_. -]+):\s*([0-9][0-9,\s]*)\)").expect("valid regex");
    let mut parsed = ParsedSummary::default();
    let mut position = 0usize;
    let mut found_any = false;
    while let Some(offset) = raw[position..].find('\\') {
        let at = position + offset;
        let rest = &raw[at..];
        if let Some(after) = rest.strip_prefix("\\catrow") {
            let arg_start = at + (rest.len() - after.len());
            if let Some((name, next)) = brace_argument(raw, arg_start) {
                parsed.categories.push(SummaryCategory {
                    name: name.trim().to_string(),
                    items: Vec::new(),
                });
                found_any = true;
                position = next;
                continue;
            }
        } else if let Some(after) = rest.strip_prefix("\\itemrow") {
            let arg_start = at + (rest.len() - after.len());
            if let Some((change, mid)) = brace_argument(raw, arg_start) {
                let mut desc_start = mid;
                while raw[desc_start..].starts_with(char::is_whitespace) {
                    desc_start += raw[desc_start..].chars().next().map_or(0, |c| c.len_utf8());
                }
                if let Some((description, next)) = brace_argument(raw, desc_start) {
                    let mut citations = Vec::new();
                    for captures in citation_re.captures_iter(&description) {
                        let dataset = captures[1].trim().to_string();
                        for num in captures[2].split(',') {
                            if let Ok(id) = num.trim().parse::<u64>() {
                                citations.push((dataset.clone(), id));
                            }
                        }
                    }
                    for citation in &citations {
                        if !valid_index.contains_key(citation) {
                            parsed.warnings.push(format!(
                                "citation ({}, {}) does not reference a validated hypothesis",
                                citation.0, citation.1
                            ));
                        }
                    }
                    if parsed.categories.is_empty() {
                        parsed.categories.push(SummaryCategory {
                            name: String::new(),
                            items: Vec::new(),
                        });
                    }
                    parsed
                        .categories
                        .last_mut()
                        .expect("category exists")
                        .items
                        .push(SummaryItem {
                            change: change.trim().to_string(),
                            description: description.trim().to_string(),
                            citations,
                        });
                    found_any = true;
                    position = next;
                    continue;
                }
            }
        }
        position = at + 1;
    }
    found_any.then_some(parsed)
}

/// Query the summarizer over all validated hypotheses and store the reply
/// verbatim plus, when the reply follows the requested row markers, a
/// parsed form.
pub fn thematic_summary(validated: &[Hypothesis], client: &LlmClient) -> Result<ThematicSummary> {
    if validated.is_empty() {
        return Err(Error::InvalidInput(
            "thematic summary needs at least one validated hypothesis".into(),
        ));
    }
    let (scaffold, index) = build_summary_scaffold(validated);
    let prompt = format!("{scaffold}\n\n{}", templates::SUMMARY_INSTRUCTION);
    let request = ChatRequest {
        max_tokens: 4096,
        ..ChatRequest::new(prompt)
    };
    let (raw, _usage) = client.complete(Role::Summarizer, "summarize", &request)?;
    let parsed = parse_summary(&raw, &index);
    Ok(ThematicSummary { raw, parsed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_affinity(blocks: &[usize], high: f64, low: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let n: usize = blocks.iter().sum();
        let mut membership = Vec::with_capacity(n);
        for (index, &size) in blocks.iter().enumerate() {
            membership.extend(std::iter::repeat_n(index, size));
        }
        let mut affinity = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                affinity[i][j] = if i == j {
                    1.0
                } else if membership[i] == membership[j] {
                    high
                } else {
                    low
                };
            }
        }
        (affinity, membership)
    }

    fn agreement(a: &[usize], b: &[usize]) -> bool {
        // identical up to relabeling
        let mut map = BTreeMap::new();
        for (x, y) in a.iter().zip(b) {
            if *map.entry(*x).or_insert(*y) != *y {
                return false;
            }
        }
        let distinct_a: BTreeSet<_> = a.iter().collect();
        let distinct_b: BTreeSet<_> = b.iter().collect();
        distinct_a.len() == distinct_b.len()
    }

    #[test]
    fn spectral_recovers_planted_blocks() {
        let (affinity, truth) = block_affinity(&[5, 5, 5], 0.95, 0.05);
        let assignment = spectral_cluster(&affinity, 3, 42).unwrap();
        assert!(agreement(&assignment, &truth));
    }

    #[test]
    fn spectral_k_equals_n_gives_singletons() {
        let (affinity, _) = block_affinity(&[2, 2], 0.9, 0.1);
        let assignment = spectral_cluster(&affinity, 4, 1).unwrap();
        let distinct: BTreeSet<_> = assignment.iter().collect();
        assert_eq!(distinct.len(), 4);
    }

    #[test]
    fn spectral_deterministic() {
        let (affinity, _) = block_affinity(&[4, 4, 4], 0.9, 0.2);
        assert_eq!(
            spectral_cluster(&affinity, 3, 9).unwrap(),
            spectral_cluster(&affinity, 3, 9).unwrap()
        );
    }

    #[test]
    fn spectral_rejects_bad_affinity() {
        let asym = vec![vec![1.0, 0.2], vec![0.8, 1.0]];
        assert!(spectral_cluster(&asym, 2, 0).is_err());
        let out_of_range = vec![vec![1.0, 1.5], vec![1.5, 1.0]];
        assert!(spectral_cluster(&out_of_range, 2, 0).is_err());
    }

    #[test]
    fn eigenpair_residuals_small() {
        let (affinity, _) = block_affinity(&[4, 4], 0.9, 0.1);
        let n = affinity.len();
        let degree: Vec<f64> = affinity.iter().map(|r| r.iter().sum::<f64>()).collect();
        let mut laplacian = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let identity = if i == j { 1.0 } else { 0.0 };
                laplacian[(i, j)] = identity - affinity[i][j] / (degree[i] * degree[j]).sqrt();
            }
        }
        let eigen = laplacian.clone().symmetric_eigen();
        for idx in 0..n {
            let v = eigen.eigenvectors.column(idx);
            let residual = (&laplacian * v) - eigen.eigenvalues[idx] * v;
            assert!(residual.norm() <= 1e-8, "residual {}", residual.norm());
        }
    }

    #[test]
    fn silhouette_prefers_true_block_count() {
        let (affinity, _) = block_affinity(&[8, 8, 8, 8], 0.92, 0.08);
        let ids: Vec<String> = (0..32).map(|i| format!("h{i:02}")).collect();
        let result = select_k(&affinity, &ids, 7).unwrap();
        assert_eq!(result.chosen_k, 4);
        assert!(!result.skipped);
        assert!(result.silhouette.unwrap() > 0.5);
    }

    #[test]
    fn orthogonal_noise_rows_give_half_affinity() {
        let mut state = 987654321u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        let matrix = ScoreMatrix {
            hypothesis_ids: (0..6).map(|i| format!("h{i}")).collect(),
            example_ids: (0..400).map(|i| format!("e{i}")).collect(),
            values: (0..6)
                .map(|_| (0..400).map(|_| next() * 100.0).collect())
                .collect(),
            labels: (0..400)
                .map(|i| if i % 2 == 0 { ModelTag::M1 } else { ModelTag::M2 })
                .collect(),
        };
        let (_, _, rho) = correlation_matrix(&matrix).unwrap();
        let affinity = affinity_from_correlation(&rho);
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert!(
                        (affinity[i][j] - 0.5).abs() < 0.12,
                        "independent rows should land near 0.5, got {}",
                        affinity[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn nine_hypotheses_feasible_set_is_three() {
        let (affinity, truth) = block_affinity(&[3, 3, 3], 0.95, 0.05);
        let ids: Vec<String> = (0..9).map(|i| format!("h{i}")).collect();
        let result = select_k(&affinity, &ids, 11).unwrap();
        assert!(!result.skipped);
        assert_eq!(result.chosen_k, 3, "only k=3 is feasible for n=9");
        let assignment: Vec<usize> = ids.iter().map(|id| result.assignment[id]).collect();
        assert!(agreement(&assignment, &truth));
    }

    #[test]
    fn small_families_skip_compression() {
        let (affinity, _) = block_affinity(&[4, 4], 0.9, 0.1);
        let ids: Vec<String> = (0..8).map(|i| format!("h{i}")).collect();
        let result = select_k(&affinity, &ids, 7).unwrap();
        assert!(result.skipped);
        assert_eq!(result.representatives.len(), 8);
    }

    #[test]
    fn representative_two_stage_rule() {
        // four members whose mean within-cluster correlations order as
        // a > b > c > d, so the top half {a, b} is retained; AUCs
        // (0.70, 0.95, 0.99, 0.99) then pick b even though c and d have
        // the highest AUCs
        let members: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let mut rho = BTreeMap::new();
        let mut set = |x: &str, y: &str, v: f64| {
            rho.insert((x.to_string(), y.to_string()), v);
        };
        set("a", "b", 0.9);
        set("a", "c", 0.5);
        set("a", "d", 0.4);
        set("b", "c", 0.3);
        set("b", "d", 0.2);
        set("c", "d", -0.8);
        // means: a = 0.600, b = 0.467, c = 0.000, d = -0.067
        let mut auc = BTreeMap::new();
        auc.insert("a".to_string(), 0.70);
        auc.insert("b".to_string(), 0.95);
        auc.insert("c".to_string(), 0.99);
        auc.insert("d".to_string(), 0.99);
        let rep = pick_representative(&members, &rho, &auc).unwrap();
        assert_eq!(rep, "b");
    }

    #[test]
    fn representative_singleton_and_ties() {
        let members = vec!["only".to_string()];
        assert_eq!(
            pick_representative(&members, &BTreeMap::new(), &BTreeMap::new()).unwrap(),
            "only"
        );
        // all-equal correlations and AUCs: lowest id wins
        let members: Vec<String> = ["b", "a"].iter().map(|s| s.to_string()).collect();
        let mut rho = BTreeMap::new();
        rho.insert(("a".to_string(), "b".to_string()), 0.5);
        let mut auc = BTreeMap::new();
        auc.insert("a".to_string(), 0.9);
        auc.insert("b".to_string(), 0.9);
        assert_eq!(pick_representative(&members, &rho, &auc).unwrap(), "a");
    }

    #[test]
    fn affinity_shift_and_scale() {
        let rho = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        let affinity = affinity_from_correlation(&rho);
        assert_eq!(affinity[0][1], 0.0);
        assert_eq!(affinity[0][0], 1.0);
    }

    #[test]
    fn correlation_excludes_constant_rows() {
        let matrix = ScoreMatrix {
            hypothesis_ids: vec!["a".into(), "b".into(), "c".into()],
            example_ids: vec!["e0".into(), "e1".into(), "e2".into()],
            values: vec![
                vec![1.0, 2.0, 3.0],
                vec![5.0, 5.0, 5.0],
                vec![3.0, 2.0, 1.0],
            ],
            labels: vec![ModelTag::M1, ModelTag::M2, ModelTag::M1],
        };
        let (kept, excluded, rho) = correlation_matrix(&matrix).unwrap();
        assert_eq!(kept, vec!["a".to_string(), "c".to_string()]);
        assert_eq!(excluded, vec!["b".to_string()]);
        assert!((rho[0][1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn summary_parse_extracts_rows_and_citations() {
        let mut index = BTreeMap::new();
        index.insert(("persona".to_string(), 1), "h1".to_string());
        index.insert(("persona".to_string(), 4), "h4".to_string());
        index.insert(("bold".to_string(), 2), "h9".to_string());
        let raw = "\\begin{tabularx}{x}{y}\n\\catrow{Tone shifts}\n\\itemrow{More formal}\n  {M2 is more formal (persona: 1, 4), (bold: 2).}\n\\end{tabularx}";
        let parsed = parse_summary(raw, &index).unwrap();
        assert_eq!(parsed.categories.len(), 1);
        assert_eq!(parsed.categories[0].name, "Tone shifts");
        let item = &parsed.categories[0].items[0];
        assert_eq!(
            item.citations,
            vec![
                ("persona".to_string(), 1),
                ("persona".to_string(), 4),
                ("bold".to_string(), 2)
            ]
        );
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn summary_parse_flags_unknown_citations() {
        let mut index = BTreeMap::new();
        index.insert(("persona".to_string(), 1), "h1".to_string());
        let raw = "\\catrow{C}\n\\itemrow{x}{cites (persona: 7)}";
        let parsed = parse_summary(raw, &index).unwrap();
        assert_eq!(parsed.warnings.len(), 1);
    }

    #[test]
    fn summary_parse_unstructured_returns_none() {
        assert!(parse_summary("free-form prose, no rows", &BTreeMap::new()).is_none());
    }

    #[test]
    fn scaffold_indexes_per_dataset() {
        let mk = |id: &str, dataset: &str| Hypothesis {
            hypothesis_id: id.into(),
            run_id: "r".into(),
            dataset: dataset.into(),
            intervention: "i".into(),
            context_id: "c".into(),
            text: format!("text {id}"),
            k_pairs_shown: 1,
            diversification_version: 0,
        };
        let hypotheses = vec![mk("h1", "persona"), mk("h2", "bold"), mk("h3", "persona")];
        let (scaffold, index) = build_summary_scaffold(&hypotheses);
        assert!(scaffold.starts_with(templates::SUMMARY_SCAFFOLD_NOTE));
        assert!(scaffold.contains("Hypothesis (persona, 1): text h1"));
        assert!(scaffold.contains("Hypothesis (bold, 1): text h2"));
        assert!(scaffold.contains("Hypothesis (persona, 2): text h3"));
        assert_eq!(index[&("persona".to_string(), 2)], "h3");
    }
}
