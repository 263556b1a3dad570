//! Paired response generation under a shared decoding protocol, plus the
//! prompt-level construction/validation split.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llmclient::{ChatRequest, LlmClient, Role, TokenUsage};
use crate::seeding;

/// Shared decoding protocol for both subject models.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    /// Extra tokens allowed before a chain-of-thought is stripped.
    pub cot_budget: u32,
    pub samples_per_prompt: u32,
    /// Delimiter whose final occurrence ends the chain-of-thought.
    pub cot_marker: String,
    /// Marks a subject that emits a chain-of-thought; grants the default
    /// 196-token budget when none is configured.
    pub reasoning_model: bool,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            temperature: 1.0,
            top_p: 0.95,
            max_tokens: 112,
            cot_budget: 0,
            samples_per_prompt: 1,
            cot_marker: "</think>".to_string(),
            reasoning_model: false,
        }
    }
}

impl DecodingConfig {
    /// Budget of extra pre-strip tokens actually granted.
    pub fn effective_cot_budget(&self) -> u32 {
        if self.cot_budget == 0 && self.reasoning_model {
            196
        } else {
            self.cot_budget
        }
    }
    pub fn validate(&self) -> Result<()> {
        if self.temperature < 0.0 {
            return Err(Error::InvalidInput("temperature must be >= 0".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::InvalidInput("top_p must lie in (0,1]".into()));
        }
        if self.max_tokens == 0 || self.samples_per_prompt == 0 {
            return Err(Error::InvalidInput(
                "max_tokens and samples_per_prompt must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelTag {
    M1,
    M2,
}

impl ModelTag {
    pub fn role(&self) -> Role {
        match self {
            ModelTag::M1 => Role::SubjectM1,
            ModelTag::M2 => Role::SubjectM2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub prompt_id: String,
    pub model_tag: ModelTag,
    pub sample_index: u32,
    /// Post-strip text.
    pub text: String,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionSide {
    Construction,
    Validation,
}

/// One prompt's paired generations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptPair {
    pub prompt_id: String,
    pub prompt_text: String,
    pub m1: Vec<GenerationRecord>,
    pub m2: Vec<GenerationRecord>,
}

/// All samples for one context, with the prompt-level partition once
/// [`split_construction_validation`] has run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextSamples {
    pub context_id: String,
    pub pairs: Vec<PromptPair>,
    #[serde(default)]
    pub partition: BTreeMap<String, PartitionSide>,
}

impl ContextSamples {
    pub fn side_pairs(&self, side: PartitionSide) -> Vec<&PromptPair> {
        self.pairs
            .iter()
            .filter(|p| self.partition.get(&p.prompt_id) == Some(&side))
            .collect()
    }
}

/// Returns the text after the final marker occurrence; text without the
/// marker is returned unchanged.
pub fn strip_chain_of_thought(text: &str, marker: &str) -> String {
    if marker.is_empty() {
        return text.to_string();
    }
    match text.rfind(marker) {
        Some(pos) => text[pos + marker.len()..].to_string(),
        None => text.to_string(),
    }
}

/// Optional per-model prompt transform, used when the intervention under
/// audit is itself implemented via prompting. `None` keeps the payloads to
/// both subjects byte-identical.
pub type PromptWrapper<'a> = Option<&'a (dyn Fn(&str) -> String + Sync)>;

/// Generate `samples_per_prompt` completions per model for every prompt.
///
/// Failures are retried by the transport; prompts that still fail are
/// dropped, and the stage aborts when more than 20% of a context's prompts
/// failed.
pub fn generate_pairs(
    context_id: &str,
    prompts: &[(String, String)],
    client: &LlmClient,
    cfg: &DecodingConfig,
    m2_wrapper: PromptWrapper<'_>,
    max_workers: usize,
) -> Result<ContextSamples> {
    cfg.validate()?;
    if prompts.is_empty() {
        return Err(Error::InvalidInput(format!(
            "context {context_id} has no prompts"
        )));
    }

    struct Job {
        prompt_index: usize,
        tag: ModelTag,
        sample_index: u32,
    }
    let mut jobs = Vec::new();
    for prompt_index in 0..prompts.len() {
        for sample_index in 0..cfg.samples_per_prompt {
            jobs.push(Job {
                prompt_index,
                tag: ModelTag::M1,
                sample_index,
            });
            jobs.push(Job {
                prompt_index,
                tag: ModelTag::M2,
                sample_index,
            });
        }
    }

    let next_job = AtomicUsize::new(0);
    let results: Mutex<BTreeMap<(usize, ModelTag, u32), Result<GenerationRecord>>> =
        Mutex::new(BTreeMap::new());

    let worker_count = max_workers.max(1).min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            scope.spawn(|| loop {
                let index = next_job.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(index) else { break };
                let (prompt_id, prompt_text) = &prompts[job.prompt_index];
                let user = match (job.tag, m2_wrapper) {
                    (ModelTag::M2, Some(wrap)) => wrap(prompt_text),
                    _ => prompt_text.clone(),
                };
                let request = ChatRequest {
                    system: None,
                    user,
                    temperature: cfg.temperature,
                    top_p: cfg.top_p,
                    max_tokens: cfg.max_tokens + cfg.effective_cot_budget(),
                    extra: BTreeMap::new(),
                    nonce: Some(format!("{prompt_id}/{}", job.sample_index)),
                };
                let outcome = client
                    .complete(job.tag.role(), "generate", &request)
                    .map(|(text, usage)| GenerationRecord {
                        prompt_id: prompt_id.clone(),
                        model_tag: job.tag,
                        sample_index: job.sample_index,
                        text: strip_chain_of_thought(&text, &cfg.cot_marker),
                        usage,
                    });
                results
                    .lock()
                    .expect("results poisoned")
                    .insert((job.prompt_index, job.tag, job.sample_index), outcome);
            });
        }
    });

    let results = results.into_inner().expect("results poisoned");
    let mut pairs = Vec::new();
    let mut failed_prompts = 0usize;
    for (prompt_index, (prompt_id, prompt_text)) in prompts.iter().enumerate() {
        let mut m1 = Vec::new();
        let mut m2 = Vec::new();
        let mut failed = false;
        for sample_index in 0..cfg.samples_per_prompt {
            for tag in [ModelTag::M1, ModelTag::M2] {
                match results.get(&(prompt_index, tag, sample_index)) {
                    Some(Ok(record)) => match tag {
                        ModelTag::M1 => m1.push(record.clone()),
                        ModelTag::M2 => m2.push(record.clone()),
                    },
                    _ => failed = true,
                }
            }
        }
        if failed || m1.is_empty() || m2.is_empty() {
            failed_prompts += 1;
            continue;
        }
        pairs.push(PromptPair {
            prompt_id: prompt_id.clone(),
            prompt_text: prompt_text.clone(),
            m1,
            m2,
        });
    }

    if failed_prompts * 5 > prompts.len() {
        return Err(Error::Stage(format!(
            "context {context_id}: {failed_prompts} of {} prompts failed generation (> 20%)",
            prompts.len()
        )));
    }
    Ok(ContextSamples {
        context_id: context_id.to_string(),
        pairs,
        partition: BTreeMap::new(),
    })
}

/// Prompt-level random split into construction and validation sides; every
/// sample of a prompt inherits its side and both sides stay non-empty.
pub fn split_construction_validation(
    mut samples: ContextSamples,
    validation_fraction: f64,
    seed: u64,
) -> Result<ContextSamples> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "validation fraction must lie in (0,1), got {validation_fraction}"
        )));
    }
    let n = samples.pairs.len();
    if n < 2 {
        return Err(Error::CannotSplit {
            context_id: samples.context_id.clone(),
        });
    }
    let mut prompt_ids: Vec<String> = samples.pairs.iter().map(|p| p.prompt_id.clone()).collect();
    let mut rng = seeding::rng_for(seed, "split", &samples.context_id);
    prompt_ids.shuffle(&mut rng);

    let n_validation = ((n as f64 * validation_fraction).round() as usize).clamp(1, n - 1);
    let mut partition = BTreeMap::new();
    for (i, prompt_id) in prompt_ids.into_iter().enumerate() {
        let side = if i < n_validation {
            PartitionSide::Validation
        } else {
            PartitionSide::Construction
        };
        partition.insert(prompt_id, side);
    }
    samples.partition = partition;
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llmclient::test_support::StubBackend;
    use crate::llmclient::{CallMode, RoleConfig};
    use std::sync::Arc;

    fn subject_client() -> LlmClient {
        let mut roles = BTreeMap::new();
        for role in [Role::SubjectM1, Role::SubjectM2] {
            roles.insert(
                role,
                RoleConfig {
                    endpoint: "http://unused".into(),
                    model: "stub".into(),
                    api_key_env: String::new(),
                    price_in: 0.0,
                    price_out: 0.0,
                },
            );
        }
        LlmClient::new(roles, Arc::new(StubBackend::new("reply")), CallMode::Live, 3)
    }

    fn prompts(n: usize) -> Vec<(String, String)> {
        (0..n)
            .map(|i| (format!("p{i:02}"), format!("prompt text {i}")))
            .collect()
    }

    #[test]
    fn cardinality_one_sample() {
        let samples =
            generate_pairs("ctx", &prompts(10), &subject_client(), &DecodingConfig::default(), None, 4)
                .unwrap();
        assert_eq!(samples.pairs.len(), 10);
        let m1_total: usize = samples.pairs.iter().map(|p| p.m1.len()).sum();
        let m2_total: usize = samples.pairs.iter().map(|p| p.m2.len()).sum();
        assert_eq!((m1_total, m2_total), (10, 10));
    }

    #[test]
    fn resampling_keeps_all_samples() {
        let cfg = DecodingConfig {
            samples_per_prompt: 5,
            ..DecodingConfig::default()
        };
        let samples = generate_pairs("ctx", &prompts(3), &subject_client(), &cfg, None, 4).unwrap();
        assert!(samples.pairs.iter().all(|p| p.m1.len() == 5 && p.m2.len() == 5));
    }

    #[test]
    fn strip_marker_cases() {
        assert_eq!(strip_chain_of_thought("<think>steps</think>Answer.", "</think>"), "Answer.");
        assert_eq!(strip_chain_of_thought("Answer only.", "</think>"), "Answer only.");
        assert_eq!(
            strip_chain_of_thought("<think>a</think>mid<think>b</think>tail", "</think>"),
            "tail"
        );
        assert_eq!(strip_chain_of_thought("text", ""), "text");
    }

    fn dummy_samples(n: usize) -> ContextSamples {
        let pairs = (0..n)
            .map(|i| PromptPair {
                prompt_id: format!("p{i:02}"),
                prompt_text: format!("t{i}"),
                m1: vec![GenerationRecord {
                    prompt_id: format!("p{i:02}"),
                    model_tag: ModelTag::M1,
                    sample_index: 0,
                    text: "a".into(),
                    usage: TokenUsage::default(),
                }],
                m2: vec![GenerationRecord {
                    prompt_id: format!("p{i:02}"),
                    model_tag: ModelTag::M2,
                    sample_index: 0,
                    text: "b".into(),
                    usage: TokenUsage::default(),
                }],
            })
            .collect();
        ContextSamples {
            context_id: "ctx".into(),
            pairs,
            partition: BTreeMap::new(),
        }
    }

    #[test]
    fn split_is_balanced_and_reproducible() {
        let split = split_construction_validation(dummy_samples(10), 0.5, 99).unwrap();
        let validation = split
            .partition
            .values()
            .filter(|s| **s == PartitionSide::Validation)
            .count();
        assert_eq!(validation, 5);
        let again = split_construction_validation(dummy_samples(10), 0.5, 99).unwrap();
        assert_eq!(split.partition, again.partition);
        let other_seed = split_construction_validation(dummy_samples(10), 0.5, 100).unwrap();
        assert_eq!(split.partition.len(), other_seed.partition.len());
    }

    #[test]
    fn split_three_prompts_both_sides_nonempty() {
        let split = split_construction_validation(dummy_samples(3), 0.5, 1).unwrap();
        let validation = split
            .partition
            .values()
            .filter(|s| **s == PartitionSide::Validation)
            .count();
        assert!(validation == 1 || validation == 2);
        assert!(validation < 3);
    }

    #[test]
    fn split_single_prompt_fails() {
        let err = split_construction_validation(dummy_samples(1), 0.5, 1).unwrap_err();
        assert!(matches!(err, Error::CannotSplit { .. }));
    }

    #[test]
    fn no_prompt_on_both_sides() {
        let split = split_construction_validation(dummy_samples(20), 0.3, 5).unwrap();
        let construction: Vec<_> = split.side_pairs(PartitionSide::Construction);
        let validation: Vec<_> = split.side_pairs(PartitionSide::Validation);
        assert_eq!(construction.len() + validation.len(), 20);
        for c in &construction {
            assert!(!validation.iter().any(|v| v.prompt_id == c.prompt_id));
        }
    }

    #[test]
    fn reasoning_flag_grants_cot_budget() {
        let plain = DecodingConfig::default();
        assert_eq!(plain.effective_cot_budget(), 0);
        let reasoning = DecodingConfig {
            reasoning_model: true,
            ..DecodingConfig::default()
        };
        assert_eq!(reasoning.effective_cot_budget(), 196);
        let explicit = DecodingConfig {
            reasoning_model: true,
            cot_budget: 64,
            ..DecodingConfig::default()
        };
        assert_eq!(explicit.effective_cot_budget(), 64);
    }

    /// Fails every request whose prompt contains a poison token.
    struct FlakyBackend;

    impl crate::llmclient::Backend for FlakyBackend {
        fn chat(
            &self,
            role: Role,
            _cfg: &crate::llmclient::RoleConfig,
            req: &ChatRequest,
        ) -> crate::error::Result<(String, TokenUsage)> {
            if req.user.contains("poison") {
                return Err(Error::Client {
                    role: role.to_string(),
                    detail: "refused".into(),
                });
            }
            Ok(("ok".into(), TokenUsage::new(1, 1)))
        }

        fn embed(
            &self,
            _role: Role,
            _cfg: &crate::llmclient::RoleConfig,
            _req: &crate::llmclient::EmbedRequest,
        ) -> crate::error::Result<(Vec<f64>, TokenUsage)> {
            unreachable!("no embeddings in generation")
        }

        fn operations(&self) -> u64 {
            0
        }
    }

    fn flaky_client() -> LlmClient {
        let mut roles = BTreeMap::new();
        for role in [Role::SubjectM1, Role::SubjectM2] {
            roles.insert(
                role,
                crate::llmclient::RoleConfig {
                    endpoint: "http://unused".into(),
                    model: "flaky".into(),
                    api_key_env: String::new(),
                    price_in: 0.0,
                    price_out: 0.0,
                },
            );
        }
        LlmClient::new(roles, Arc::new(FlakyBackend), CallMode::Live, 2)
    }

    #[test]
    fn sparse_failures_drop_prompts_but_proceed() {
        let mut prompts = prompts(10);
        prompts[3].1 = "poison here".into();
        let samples =
            generate_pairs("ctx", &prompts, &flaky_client(), &DecodingConfig::default(), None, 2)
                .unwrap();
        assert_eq!(samples.pairs.len(), 9);
        assert!(samples.pairs.iter().all(|p| p.prompt_id != "p03"));
    }

    #[test]
    fn heavy_failures_abort_the_stage() {
        let mut prompts = prompts(10);
        for i in [1usize, 4, 7] {
            prompts[i].1 = format!("poison {i}");
        }
        let err =
            generate_pairs("ctx", &prompts, &flaky_client(), &DecodingConfig::default(), None, 2)
                .unwrap_err();
        assert!(matches!(err, Error::Stage(_)), "{err:?}");
    }

    #[test]
    fn wrapper_applies_to_m2_only() {
        let wrap = |prompt: &str| format!("WRAPPED {prompt}");
        let samples = generate_pairs(
            "ctx",
            &prompts(2),
            &subject_client(),
            &DecodingConfig::default(),
            Some(&wrap),
            1,
        )
        .unwrap();
        // the stub echoes a constant, so inspect usage: wrapped prompts are
        // longer, giving higher input token counts on the M2 side
        for pair in &samples.pairs {
            assert!(pair.m2[0].usage.input_tokens > pair.m1[0].usage.input_tokens);
        }
    }
}
