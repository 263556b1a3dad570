//! Blinded, balanced discriminative testing of hypotheses on held-out
//! pairs, with BH verdicts over the run's hypothesis family.

use rand::seq::SliceRandom;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::genpair::{ContextSamples, ModelTag, PartitionSide};
use crate::llmclient::{ChatRequest, LlmClient, Role};
use crate::seeding;
use crate::statcore::{self, ScoreSample};
use crate::templates;

/// One held-out example offered to the discriminator. `example_id` and
/// `true_label` never appear in the request payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Example {
    pub example_id: String,
    pub true_label: ModelTag,
    /// Prompt and completion, concatenated.
    pub text: String,
}

/// One blinded discriminator judgment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub hypothesis_id: String,
    pub example_id: String,
    pub true_label: ModelTag,
    pub score: f64,
    pub raw_reply: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationResult {
    pub hypothesis_id: String,
    pub n_judgments: usize,
    pub auc_within: f64,
    pub p_one_sided: f64,
    pub validated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc_cross: Option<f64>,
    pub degenerate: bool,
}

/// Validation-side examples of a context, per model. Completion text is
/// concatenated onto the prompt because the probe templates end mid-frame.
pub fn validation_pool(samples: &ContextSamples) -> (Vec<Example>, Vec<Example>) {
    let mut m1 = Vec::new();
    let mut m2 = Vec::new();
    for pair in samples.side_pairs(PartitionSide::Validation) {
        for record in &pair.m1 {
            m1.push(Example {
                example_id: format!("{}/{}/m1", record.prompt_id, record.sample_index),
                true_label: ModelTag::M1,
                text: format!("{}{}", pair.prompt_text, record.text),
            });
        }
        for record in &pair.m2 {
            m2.push(Example {
                example_id: format!("{}/{}/m2", record.prompt_id, record.sample_index),
                true_label: ModelTag::M2,
                text: format!("{}{}", pair.prompt_text, record.text),
            });
        }
    }
    (m1, m2)
}

/// Balanced judgment set: exactly N/2 examples per model, sampled without
/// replacement, order shuffled by the derived seed.
pub fn sample_judgment_set(
    context_label: &str,
    pool_m1: &[Example],
    pool_m2: &[Example],
    n: usize,
    seed: u64,
) -> Result<Vec<Example>> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "judgment budget must be even and positive, got {n}"
        )));
    }
    let per_side = n / 2;
    if pool_m1.len() < per_side || pool_m2.len() < per_side {
        return Err(Error::Shortfall {
            context: context_label.to_string(),
            needed: per_side,
            m1: pool_m1.len(),
            m2: pool_m2.len(),
        });
    }
    let mut rng = seeding::rng_for(seed, "judgment_set", context_label);
    let mut chosen: Vec<Example> = Vec::with_capacity(n);
    for pool in [pool_m1, pool_m2] {
        let mut indices: Vec<usize> = (0..pool.len()).collect();
        indices.shuffle(&mut rng);
        chosen.extend(indices[..per_side].iter().map(|&i| pool[i].clone()));
    }
    chosen.shuffle(&mut rng);
    Ok(chosen)
}

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").expect("valid regex"))
}

/// Default upper end of the discriminator score range.
pub const DEFAULT_SCORE_MAX: f64 = 100.0;

/// Strict parse first, then lenient first-number extraction. Out-of-range
/// replies are rejected, never clamped.
pub fn parse_score(reply: &str, max_score: f64) -> Option<f64> {
    let trimmed = reply.trim();
    let value = match trimmed.parse::<f64>() {
        Ok(v) => v,
        Err(_) => number_regex()
            .find(trimmed)
            .and_then(|m| m.as_str().parse::<f64>().ok())?,
    };
    (0.0..=max_score).contains(&value).then_some(value)
}

/// Score one blinded example under a hypothesis. An unparseable reply is
/// re-asked once; a second failure drops the judgment (returned as
/// `Ok(None)` with a warning pushed).
pub fn score_example(
    hypothesis_id: &str,
    hypothesis_text: &str,
    example: &Example,
    client: &LlmClient,
    warnings: &mut Vec<String>,
) -> Result<Option<JudgmentRecord>> {
    score_example_scaled(
        hypothesis_id,
        hypothesis_text,
        example,
        DEFAULT_SCORE_MAX,
        client,
        warnings,
    )
}

/// [`score_example`] with a configurable score ceiling.
pub fn score_example_scaled(
    hypothesis_id: &str,
    hypothesis_text: &str,
    example: &Example,
    max_score: f64,
    client: &LlmClient,
    warnings: &mut Vec<String>,
) -> Result<Option<JudgmentRecord>> {
    let prompt = templates::fill(
        &templates::fill(templates::DISCRIMINATOR_TEMPLATE, "hypothesis", hypothesis_text),
        "selected_text",
        &example.text,
    );
    for attempt in 0..2 {
        let request = ChatRequest {
            max_tokens: 16,
            ..ChatRequest::new(prompt.clone())
        }
        .with_nonce(format!("{hypothesis_id}/{}/{attempt}", example.example_id));
        let (reply, _usage) = client.complete(Role::Discriminator, "validate", &request)?;
        if let Some(score) = parse_score(&reply, max_score) {
            return Ok(Some(JudgmentRecord {
                hypothesis_id: hypothesis_id.to_string(),
                example_id: example.example_id.clone(),
                true_label: example.true_label,
                score,
                raw_reply: reply,
            }));
        }
        if attempt == 1 {
            warnings.push(format!(
                "dropped judgment {hypothesis_id}/{}: unparseable reply {reply:?}",
                example.example_id
            ));
        }
    }
    Ok(None)
}

/// Score many examples under one hypothesis with a bounded worker pool.
/// Slot order (and therefore every downstream artifact) is independent of
/// scheduling: results and warnings come back in example order.
pub fn score_examples_parallel(
    hypothesis_id: &str,
    hypothesis_text: &str,
    examples: &[Example],
    max_score: f64,
    client: &LlmClient,
    max_workers: usize,
) -> Result<(Vec<Option<JudgmentRecord>>, Vec<String>)> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    type Slot = Option<(Result<Option<JudgmentRecord>>, Vec<String>)>;
    let slots: Mutex<Vec<Slot>> = Mutex::new((0..examples.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = max_workers.max(1).min(examples.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                let Some(example) = examples.get(index) else { break };
                let mut warnings = Vec::new();
                let outcome = score_example_scaled(
                    hypothesis_id,
                    hypothesis_text,
                    example,
                    max_score,
                    client,
                    &mut warnings,
                );
                slots.lock().expect("slots poisoned")[index] = Some((outcome, warnings));
            });
        }
    });

    let mut judgments = Vec::with_capacity(examples.len());
    let mut warnings = Vec::new();
    for slot in slots.into_inner().expect("slots poisoned") {
        let (outcome, slot_warnings) = slot.expect("every slot visited");
        warnings.extend(slot_warnings);
        judgments.push(outcome?);
    }
    Ok((judgments, warnings))
}

/// Drop newest majority-label judgments until the label imbalance is within
/// 2% of the judgment count.
pub fn rebalance(judgments: &mut Vec<JudgmentRecord>) {
    loop {
        let m1 = judgments.iter().filter(|j| j.true_label == ModelTag::M1).count();
        let m2 = judgments.len() - m1;
        let imbalance = m1.abs_diff(m2);
        if imbalance as f64 <= 0.02 * judgments.len() as f64 || judgments.is_empty() {
            return;
        }
        let majority = if m1 > m2 { ModelTag::M1 } else { ModelTag::M2 };
        if let Some(pos) = judgments.iter().rposition(|j| j.true_label == majority) {
            judgments.remove(pos);
        } else {
            return;
        }
    }
}

/// AUC and one-sided p for a hypothesis from its judgments. Positives are
/// true-M1 scores, so AUC > 0.5 means scores track M1 as described.
pub fn test_hypothesis(judgments: &[JudgmentRecord]) -> Result<statcore::TestOutcome> {
    let positives: Vec<f64> = judgments
        .iter()
        .filter(|j| j.true_label == ModelTag::M1)
        .map(|j| j.score)
        .collect();
    let negatives: Vec<f64> = judgments
        .iter()
        .filter(|j| j.true_label == ModelTag::M2)
        .map(|j| j.score)
        .collect();
    let sample = ScoreSample::new(positives, negatives).map_err(|_| {
        Error::InvalidInput("judgment set must contain both true labels".into())
    })?;
    Ok(statcore::mwu_one_sided(&sample, true))
}

/// Score a balanced sample drawn across all *other* contexts' validation
/// pools; absent when no other context has data. Cross judgments are
/// appended to `judgments_out` alongside the within-context ones.
#[allow(clippy::too_many_arguments)]
pub fn cross_context_auc(
    hypothesis_id: &str,
    hypothesis_text: &str,
    others_m1: &[Example],
    others_m2: &[Example],
    budget: usize,
    seed: u64,
    max_score: f64,
    client: &LlmClient,
    max_workers: usize,
    judgments_out: &mut Vec<JudgmentRecord>,
    warnings: &mut Vec<String>,
) -> Result<Option<f64>> {
    if others_m1.is_empty() || others_m2.is_empty() {
        return Ok(None);
    }
    let per_side = (budget / 2).min(others_m1.len()).min(others_m2.len()).max(1);
    let label = format!("cross/{hypothesis_id}");
    let examples = sample_judgment_set(&label, others_m1, others_m2, per_side * 2, seed)?;
    let (scored, score_warnings) = score_examples_parallel(
        hypothesis_id,
        hypothesis_text,
        &examples,
        max_score,
        client,
        max_workers,
    )?;
    warnings.extend(score_warnings);
    let mut judgments: Vec<JudgmentRecord> = scored.into_iter().flatten().collect();
    rebalance(&mut judgments);
    if judgments.iter().any(|j| j.true_label == ModelTag::M1)
        && judgments.iter().any(|j| j.true_label == ModelTag::M2)
    {
        let outcome = test_hypothesis(&judgments)?;
        judgments_out.extend(judgments);
        Ok(Some(outcome.auc))
    } else {
        Ok(None)
    }
}

/// Candidate outcome entering the family-wise verdict.
#[derive(Debug, Clone)]
pub struct CandidateOutcome {
    pub hypothesis_id: String,
    pub n_judgments: usize,
    pub auc_within: f64,
    pub p_one_sided: f64,
    pub auc_cross: Option<f64>,
    pub degenerate: bool,
}

/// Apply the BH step-up over the run's hypothesis family. A zero FDR
/// budget validates nothing.
pub fn finalize_run(candidates: &[CandidateOutcome], q: f64) -> Result<Vec<ValidationResult>> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("empty hypothesis family".into()));
    }
    let rejected = if q <= 0.0 {
        vec![false; candidates.len()]
    } else {
        let pvalues: Vec<f64> = candidates.iter().map(|c| c.p_one_sided).collect();
        statcore::bh_reject(&pvalues, q)
    };
    Ok(candidates
        .iter()
        .zip(rejected)
        .map(|(c, validated)| ValidationResult {
            hypothesis_id: c.hypothesis_id.clone(),
            n_judgments: c.n_judgments,
            auc_within: c.auc_within,
            p_one_sided: c.p_one_sided,
            validated,
            auc_cross: c.auc_cross,
            degenerate: c.degenerate,
        })
        .collect())
}

/// Summary counts for the report, computed over one family's results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilySummary {
    pub hypothesis_count: usize,
    pub validated_count: usize,
    pub mean_within_auc_validated: Option<f64>,
    pub mean_cross_auc_validated: Option<f64>,
    pub min_validated_auc: Option<f64>,
}

pub fn summarize_family(results: &[ValidationResult]) -> FamilySummary {
    let validated: Vec<&ValidationResult> = results.iter().filter(|r| r.validated).collect();
    let mean = |values: Vec<f64>| -> Option<f64> {
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    FamilySummary {
        hypothesis_count: results.len(),
        validated_count: validated.len(),
        mean_within_auc_validated: mean(validated.iter().map(|r| r.auc_within).collect()),
        mean_cross_auc_validated: mean(
            validated.iter().filter_map(|r| r.auc_cross).collect(),
        ),
        min_validated_auc: validated
            .iter()
            .map(|r| r.auc_within)
            .min_by(|a, b| a.partial_cmp(b).expect("finite auc")),
    }
}
