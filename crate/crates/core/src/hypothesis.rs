//! Hypothesis proposal and the adaptive diversification instruction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genpair::{ContextSamples, PartitionSide};
use crate::kmeans::kmeans;
use crate::llmclient::{ChatRequest, EmbedRequest, LlmClient, Role};
use crate::templates;

pub const DEFAULT_PAIRS_SHOWN: usize = 20;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hypothesis {
    pub hypothesis_id: String,
    pub run_id: String,
    pub dataset: String,
    pub intervention: String,
    pub context_id: String,
    pub text: String,
    pub k_pairs_shown: usize,
    pub diversification_version: u32,
}

/// Global diversification state for one run; a single logical writer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiversificationState {
    /// (hypothesis_id, text) in proposal order.
    pub prior_hypotheses: Vec<(String, String)>,
    /// Hypotheses whose p-values passed the online (SAFFRON) gate.
    pub saffron_pass_count: u32,
    /// Cached instruction; empty before the first update.
    pub current_instruction: String,
    pub version: u32,
    /// Warm-up length before updates may fire.
    pub n0: u32,
    /// Update cadence in gate passes.
    pub b: u32,
    /// Maximum number of theme clusters.
    pub k_centers: usize,
}

impl DiversificationState {
    pub fn new(n0: u32, b: u32, k_centers: usize) -> Self {
        DiversificationState {
            prior_hypotheses: Vec::new(),
            saffron_pass_count: 0,
            current_instruction: String::new(),
            version: 0,
            n0,
            b,
            k_centers,
        }
    }
}

impl Default for DiversificationState {
    fn default() -> Self {
        DiversificationState::new(10, 10, 5)
    }
}

/// True when the warm-up has passed and the pass count sits on the cadence.
pub fn should_update(state: &DiversificationState) -> bool {
    state.saffron_pass_count >= state.n0
        && state.b > 0
        && state.saffron_pass_count % state.b == 0
}

/// The texts shown for one construction pair.
#[derive(Debug, Clone)]
pub struct ShownPair {
    pub m1_text: String,
    pub m2_text: String,
}

/// First `k` construction prompts in stable prompt_id order, pairing the
/// first sample from each model.
pub fn select_construction_pairs(samples: &ContextSamples, k: usize) -> Vec<ShownPair> {
    let mut pairs = samples.side_pairs(PartitionSide::Construction);
    pairs.sort_by(|a, b| a.prompt_id.cmp(&b.prompt_id));
    pairs
        .into_iter()
        .take(k)
        .filter_map(|p| {
            Some(ShownPair {
                m1_text: p.m1.first()?.text.clone(),
                m2_text: p.m2.first()?.text.clone(),
            })
        })
        .collect()
}

/// Assemble the hypothesizer prompt: numbered text blocks, the cached
/// diversification instruction when non-empty, and up to three prior
/// same-context hypotheses as history.
pub fn build_hypothesizer_prompt(
    pairs: &[ShownPair],
    instruction: &str,
    same_context_history: &[String],
) -> String {
    let mut prompt = String::new();
    prompt.push_str(templates::HYPOTHESIZER_HEADER);
    prompt.push('\n');
    prompt.push_str(templates::HYPOTHESIZER_MODEL1_HEADING);
    for (i, pair) in pairs.iter().enumerate() {
        prompt.push_str(&format!("\nModel 1 Text {i}: {}", pair.m1_text));
    }
    prompt.push('\n');
    prompt.push_str(templates::HYPOTHESIZER_MODEL2_HEADING);
    for (i, pair) in pairs.iter().enumerate() {
        prompt.push_str(&format!("\nModel 2 Text {i}: {}", pair.m2_text));
    }
    prompt.push_str("\n\n");
    prompt.push_str(templates::HYPOTHESIZER_FOOTER);
    if !instruction.is_empty() {
        prompt.push_str("\n\n");
        prompt.push_str(instruction);
    }
    if !same_context_history.is_empty() {
        prompt.push_str("\n\n");
        prompt.push_str(templates::HISTORY_HEADING);
        for h in same_context_history.iter().rev().take(3).rev() {
            prompt.push_str(&format!("\n- {h}"));
        }
        prompt.push('\n');
        prompt.push_str(templates::HISTORY_FOOTER);
    }
    prompt
}

/// Metadata carried into the stored hypothesis.
#[derive(Debug, Clone)]
pub struct HypothesisContext {
    pub run_id: String,
    pub dataset: String,
    pub intervention: String,
    pub context_id: String,
    pub sequence: usize,
}

/// Propose one hypothesis for a context from its construction pairs.
pub fn propose_hypothesis(
    samples: &ContextSamples,
    k: usize,
    state: &DiversificationState,
    same_context_history: &[String],
    client: &LlmClient,
    meta: &HypothesisContext,
) -> Result<Hypothesis> {
    let pairs = select_construction_pairs(samples, k);
    if pairs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "context {} has no construction pairs",
            meta.context_id
        )));
    }
    let prompt = build_hypothesizer_prompt(&pairs, &state.current_instruction, same_context_history);
    let request = ChatRequest {
        max_tokens: 1024,
        ..ChatRequest::new(prompt)
    };
    let (text, _usage) = client.complete(Role::Hypothesizer, "hypothesize", &request)?;
    if text.trim().is_empty() {
        return Err(Error::Client {
            role: Role::Hypothesizer.to_string(),
            detail: format!("empty completion for context {}", meta.context_id),
        });
    }
    Ok(Hypothesis {
        hypothesis_id: format!("{}-h{:04}", meta.run_id, meta.sequence),
        run_id: meta.run_id.clone(),
        dataset: meta.dataset.clone(),
        intervention: meta.intervention.clone(),
        context_id: meta.context_id.clone(),
        text,
        k_pairs_shown: pairs.len(),
        diversification_version: state.version,
    })
}

/// Prompt asking the summarizer for a short theme summary of the
/// representative hypotheses.
pub fn build_theme_summary_prompt(representatives: &[&str]) -> String {
    let mut prompt = String::from(templates::THEME_SUMMARY_HEADER);
    for text in representatives {
        prompt.push_str(&format!("\n- {text}"));
    }
    prompt.push_str("\n\n");
    prompt.push_str(templates::THEME_SUMMARY_FOOTER);
    prompt
}

/// Refresh the diversification instruction: embed prior hypotheses, cluster
/// them, summarize the cluster representatives, and cache the new
/// instruction. On any client failure the state is returned unchanged with
/// a warning so the pipeline proceeds with the stale instruction.
pub fn update_diversification(
    mut state: DiversificationState,
    client: &LlmClient,
    seed: u64,
) -> Result<(DiversificationState, Vec<String>)> {
    if !should_update(&state) {
        return Err(Error::InvalidInput(
            "diversification update requested off-schedule".into(),
        ));
    }
    if state.prior_hypotheses.is_empty() {
        return Err(Error::InvalidInput(
            "diversification update needs at least one prior hypothesis".into(),
        ));
    }
    let mut warnings = Vec::new();

    let mut embeddings: Vec<Vec<f64>> = Vec::with_capacity(state.prior_hypotheses.len());
    for (id, text) in &state.prior_hypotheses {
        let request = EmbedRequest {
            text: templates::fill(templates::EMBED_TEMPLATE, "text_to_embed", text),
            nonce: None,
        };
        match client.embed(Role::Embedder, "diversify", &request) {
            Ok((v, _)) => embeddings.push(v),
            Err(e) => {
                warnings.push(format!(
                    "diversification embedding failed for {id}: {e}; keeping stale instruction"
                ));
                return Ok((state, warnings));
            }
        }
    }

    let k = state.k_centers.min(state.prior_hypotheses.len()).max(1);
    let fit = match kmeans(&embeddings, k, seed, 10) {
        Ok(fit) => fit,
        Err(e) => {
            warnings.push(format!(
                "diversification clustering failed: {e}; keeping stale instruction"
            ));
            return Ok((state, warnings));
        }
    };

    // representative per center: closest hypothesis, ties to the lowest id
    let mut representatives: Vec<&str> = Vec::with_capacity(k);
    for (center_index, center) in fit.centers.iter().enumerate() {
        let mut best: Option<(f64, &str, &str)> = None; // (distance, id, text)
        for (i, (id, text)) in state.prior_hypotheses.iter().enumerate() {
            if fit.assignment[i] != center_index {
                continue;
            }
            let d: f64 = embeddings[i]
                .iter()
                .zip(center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let better = match &best {
                None => true,
                Some((bd, bid, _)) => d < *bd || (d == *bd && id.as_str() < *bid),
            };
            if better {
                best = Some((d, id, text));
            }
        }
        if let Some((_, _, text)) = best {
            representatives.push(text);
        }
    }

    let request = ChatRequest {
        max_tokens: 512,
        ..ChatRequest::new(build_theme_summary_prompt(&representatives))
    };
    let theme = match client.complete(Role::Summarizer, "diversify", &request) {
        Ok((text, _)) => text.trim().to_string(),
        Err(e) => {
            warnings.push(format!(
                "diversification summarizer failed: {e}; keeping stale instruction"
            ));
            return Ok((state, warnings));
        }
    };

    state.current_instruction = templates::fill(templates::DIVERSIFICATION_TEMPLATE, "T", &theme);
    state.version += 1;
    Ok((state, warnings))
}
