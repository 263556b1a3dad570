//! Synthetic behavior recovery: persona injection via the prompt wrapper,
//! trait-match judging, recovery/elicitation metrics, and the scripted
//! mock models that make offline end-to-end runs analytic.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::llmclient::{
    Backend, ChatRequest, EmbedRequest, LlmClient, Role, RoleConfig, TokenUsage,
};
use crate::statcore::phi;
use crate::templates;

/// One curated persona: category key and the injected phrasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub key: String,
    pub phrasing: String,
}

const PERSONA_TABLE_TSV: &str = include_str!("../data/persona_table.tsv");

/// The 36 curated persona key/phrasing pairs shipped with the crate.
pub fn builtin_personas() -> Vec<PersonaSpec> {
    PERSONA_TABLE_TSV
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let (key, phrasing) = line.split_once('\t').expect("table rows are key\\tphrasing");
            PersonaSpec {
                key: key.to_string(),
                phrasing: phrasing.to_string(),
            }
        })
        .collect()
}

/// Survey wrapper with the persona phrasing substituted, followed by the
/// evaluation prompt.
pub fn wrap_persona(prompt: &str, phrasing: &str) -> String {
    let wrapper = templates::fill(
        templates::PERSONA_WRAPPER_TEMPLATE,
        "persona_description",
        phrasing,
    );
    format!("{wrapper}\n\n{prompt}")
}

/// Yes/No trait-recovery judgment. Anything other than a parseable yes/no
/// is re-asked once, then counted as no-match with a warning.
pub fn judge_match(
    phrasing: &str,
    hypothesis_text: &str,
    client: &LlmClient,
    warnings: &mut Vec<String>,
) -> Result<bool> {
    let prompt = templates::fill(
        &templates::fill(templates::JUDGE_MATCH_TEMPLATE, "persona_description", phrasing),
        "hypothesis",
        hypothesis_text,
    );
    for attempt in 0..2 {
        let request = ChatRequest {
            max_tokens: 8,
            ..ChatRequest::new(prompt.clone())
        }
        .with_nonce(format!("judge/{attempt}"));
        let (reply, _) = client.complete(Role::Judge, "judge", &request)?;
        let normalized = reply.trim().trim_matches(['"', '\'', '.']).to_ascii_lowercase();
        match normalized.as_str() {
            "yes" => return Ok(true),
            "no" => return Ok(false),
            _ if attempt == 1 => {
                warnings.push(format!(
                    "unparseable judge reply {reply:?}; counted as no-match"
                ));
                return Ok(false);
            }
            _ => {}
        }
    }
    Ok(false)
}

/// Per-context hypothesis outcome entering the recovery metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextRecovery {
    /// The query persona defining the context.
    pub query_key: String,
    pub validated: bool,
    pub judged_match: bool,
    pub auc_within: Option<f64>,
}

/// Result of one injected-persona run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectedRun {
    pub injected_key: String,
    pub run_index: u32,
    /// Off-target contexts only.
    pub contexts: Vec<ContextRecovery>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryOutcome {
    pub injected_key: String,
    pub run_index: u32,
    /// Any off-target context matched (the primary criterion).
    pub run_recovered: bool,
    pub fraction_recovered: f64,
    pub matched_count: usize,
    /// Secondary criterion: at least eighteen matching contexts.
    pub recovered_ge18: bool,
    pub validated_count: usize,
    pub matched_auc_mean: Option<f64>,
    pub unmatched_auc_mean: Option<f64>,
}

/// Aggregate rows mirroring the recoverability/elicitation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryTable {
    pub outcomes: Vec<RecoveryOutcome>,
    /// Per injected persona: mean fraction of off-target contexts whose
    /// validated hypothesis matched, across runs.
    pub recoverability: BTreeMap<String, f64>,
    /// Per query persona: fraction of injected personas it elicited at
    /// least once.
    pub elicitation: BTreeMap<String, f64>,
    /// (injected, query) -> mean match rate, the heatmap grid.
    pub heatmap: BTreeMap<(String, String), f64>,
}

/// Recovery and elicitation metrics over a set of injected runs.
pub fn recovery_metrics(runs: &[InjectedRun]) -> Result<RecoveryTable> {
    if runs.is_empty() {
        return Err(Error::InvalidInput("no completed injected runs".into()));
    }
    let mut outcomes = Vec::new();
    let mut recover_acc: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut heat_acc: BTreeMap<(String, String), (f64, f64)> = BTreeMap::new();
    // query -> set of injected personas elicited
    let mut elicited: BTreeMap<String, BTreeMap<String, bool>> = BTreeMap::new();

    for run in runs {
        let matched: Vec<&ContextRecovery> = run
            .contexts
            .iter()
            .filter(|c| c.validated && c.judged_match)
            .collect();
        let off_target = run.contexts.len();
        let fraction = if off_target == 0 {
            0.0
        } else {
            matched.len() as f64 / off_target as f64
        };
        let mean = |values: Vec<f64>| {
            if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            }
        };
        let matched_auc
            = mean(matched.iter().filter_map(|c| c.auc_within).collect());
        let unmatched_auc = mean(
            run.contexts
                .iter()
                .filter(|c| c.validated && !c.judged_match)
                .filter_map(|c| c.auc_within)
                .collect(),
        );
        outcomes.push(RecoveryOutcome {
            injected_key: run.injected_key.clone(),
            run_index: run.run_index,
            run_recovered: !matched.is_empty(),
            fraction_recovered: fraction,
            matched_count: matched.len(),
            recovered_ge18: matched.len() >= 18,
            validated_count: run.contexts.iter().filter(|c| c.validated).count(),
            matched_auc_mean: matched_auc,
            unmatched_auc_mean: unmatched_auc,
        });
        let acc = recover_acc.entry(run.injected_key.clone()).or_insert((0.0, 0.0));
        acc.0 += fraction;
        acc.1 += 1.0;
        for context in &run.contexts {
            let hit = context.validated && context.judged_match;
            let heat = heat_acc
                .entry((run.injected_key.clone(), context.query_key.clone()))
                .or_insert((0.0, 0.0));
            heat.0 += if hit { 1.0 } else { 0.0 };
            heat.1 += 1.0;
            let slot = elicited
                .entry(context.query_key.clone())
                .or_default()
                .entry(run.injected_key.clone())
                .or_insert(false);
            *slot |= hit;
        }
    }

    let recoverability = recover_acc
        .into_iter()
        .map(|(k, (sum, n))| (k, sum / n))
        .collect();
    let injected_total = runs
        .iter()
        .map(|r| r.injected_key.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    let elicitation = elicited
        .into_iter()
        .map(|(query, hits)| {
            let count = hits.values().filter(|&&v| v).count();
            (query, count as f64 / injected_total as f64)
        })
        .collect();
    let heatmap = heat_acc
        .into_iter()
        .map(|(k, (sum, n))| (k, sum / n))
        .collect();
    Ok(RecoveryTable {
        outcomes,
        recoverability,
        elicitation,
        heatmap,
    })
}

/// Scripted mock model pair: subjects inject a marker token at a given
/// rate and the discriminator scores on marker presence alone, simulating
/// the information channel rather than language understanding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockModelSpec {
    pub marker: String,
    /// Marker insertion probability for M1 and M2.
    pub m1_injection_rate: f64,
    pub m2_injection_rate: f64,
    pub base_vocabulary: Vec<String>,
    /// Discriminator score (in "matches M1" space) when the marker is
    /// present / absent in the scored text.
    pub score_if_marker: f64,
    pub score_if_absent: f64,
    pub noise_sd: f64,
    /// Phrasing returned inside the scripted hypothesis; the scripted
    /// judge answers Yes when its Text 2 contains this string.
    pub injected_phrasing: String,
}

impl MockModelSpec {
    pub fn validate(&self) -> Result<()> {
        for rate in [self.m1_injection_rate, self.m2_injection_rate] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidInput(format!(
                    "injection rate {rate} outside [0,1]"
                )));
            }
        }
        if self.base_vocabulary.is_empty() {
            return Err(Error::InvalidInput("mock vocabulary is empty".into()));
        }
        Ok(())
    }

    /// Closed-form AUC of the discriminative channel: P(pos > neg) for the
    /// two-point score mixtures with shared Gaussian noise, positives being
    /// true-M1 items scored in "matches M1" space.
    pub fn closed_form_auc(&self) -> f64 {
        let p_pos_marker = self.m1_injection_rate;
        let p_neg_marker = self.m2_injection_rate;
        let score = |marker: bool| {
            if marker {
                self.score_if_marker
            } else {
                self.score_if_absent
            }
        };
        let mut total = 0.0;
        for (pos_marker, wp) in [(true, p_pos_marker), (false, 1.0 - p_pos_marker)] {
            for (neg_marker, wn) in [(true, p_neg_marker), (false, 1.0 - p_neg_marker)] {
                let diff = score(pos_marker) - score(neg_marker);
                let prob = if self.noise_sd > 0.0 {
                    phi(diff / (self.noise_sd * std::f64::consts::SQRT_2))
                } else if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    0.0
                } else {
                    0.5
                };
                total += wp * wn * prob;
            }
        }
        total
    }
}

fn rng_from_parts(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update([0u8]);
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    ChaCha8Rng::seed_from_u64(u64::from_le_bytes(
        digest[..8].try_into().expect("digest is 32 bytes"),
    ))
}

/// Deterministic pseudo-random filler with the marker inserted at the
/// configured rate; seeded per prompt.
pub fn mock_subject(
    spec: &MockModelSpec,
    injection_rate: f64,
    prompt: &str,
    seed: u64,
) -> String {
    let mut rng = rng_from_parts(seed, &["subject", prompt]);
    let words = 8 + (rng.gen::<u32>() % 5) as usize;
    let mut tokens: Vec<String> = (0..words)
        .map(|_| spec.base_vocabulary[rng.gen_range(0..spec.base_vocabulary.len())].clone())
        .collect();
    if rng.gen::<f64>() < injection_rate {
        let slot = rng.gen_range(0..=tokens.len());
        tokens.insert(slot, spec.marker.clone());
    }
    tokens.join(" ")
}

/// Marker-keyed score with seeded Gaussian noise, clamped to [0,100]. The
/// hypothesis enters only the noise seed.
pub fn mock_discriminator(
    spec: &MockModelSpec,
    hypothesis: &str,
    text: &str,
    seed: u64,
) -> f64 {
    let mut rng = rng_from_parts(seed, &["discriminator", hypothesis, text]);
    let base = if text.contains(&spec.marker) {
        spec.score_if_marker
    } else {
        spec.score_if_absent
    };
    // Box-Muller from two uniform draws
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    let gaussian = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    (base + spec.noise_sd * gaussian).clamp(0.0, 100.0)
}

/// Offline backend driving the full pipeline from the scripted models.
pub struct MockBackend {
    spec: MockModelSpec,
    seed: u64,
    ops: AtomicU64,
}

impl MockBackend {
    pub fn new(spec: MockModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(MockBackend {
            spec,
            seed,
            ops: AtomicU64::new(0),
        })
    }

    pub fn spec(&self) -> &MockModelSpec {
        &self.spec
    }

    fn scripted_hypothesis(&self) -> String {
        format!(
            "Model 2 responses insert the token \"{}\" ({}) far more often than Model 1 responses, which mostly contain neutral filler.",
            self.spec.marker, self.spec.injected_phrasing
        )
    }

    /// The text portion of a discriminator request (the bytes between the
    /// `Text: ` line and the final scoring instruction of the template).
    fn extract_selected_text(user: &str) -> &str {
        let start = user.find("\n\nText: ").map(|i| i + "\n\nText: ".len());
        let end = user.rfind("\n\nProvide your response as a single number");
        match (start, end) {
            (Some(s), Some(e)) if s <= e => &user[s..e],
            _ => user,
        }
    }

    fn extract_judge_texts(user: &str) -> Option<(&str, &str)> {
        let t1_start = user.find("\n\nText 1: ")? + "\n\nText 1: ".len();
        let t2_marker = user[t1_start..].find("\n\nText 2: ")?;
        let t1 = &user[t1_start..t1_start + t2_marker];
        let t2_start = t1_start + t2_marker + "\n\nText 2: ".len();
        let t2_end = user[t2_start..]
            .find("\n\nProvide your answer")
            .map(|i| t2_start + i)?;
        Some((t1.trim_end_matches('.'), &user[t2_start..t2_end]))
    }
}

impl Backend for MockBackend {
    fn chat(&self, role: Role, _cfg: &RoleConfig, req: &ChatRequest) -> Result<(String, TokenUsage)> {
        self.ops.fetch_add(1, Ordering::SeqCst);
        let nonce = req.nonce.as_deref().unwrap_or("");
        let text = match role {
            Role::SubjectM1 => mock_subject(
                &self.spec,
                self.spec.m1_injection_rate,
                &format!("{}|{nonce}", req.user),
                self.seed,
            ),
            Role::SubjectM2 => mock_subject(
                &self.spec,
                self.spec.m2_injection_rate,
                &format!("{}|{nonce}|m2", req.user),
                self.seed,
            ),
            Role::Hypothesizer => self.scripted_hypothesis(),
            Role::Discriminator => {
                let selected = Self::extract_selected_text(&req.user);
                let score = mock_discriminator(&self.spec, "scripted", selected, self.seed);
                format!("{score:.4}")
            }
            Role::Summarizer => {
                if req.user.starts_with(templates::THEME_SUMMARY_HEADER) {
                    format!("marker-token insertion ({})", self.spec.marker)
                } else {
                    // thematic summary: cite every hypothesis listed in the scaffold
                    let mut citations: BTreeMap<String, Vec<String>> = BTreeMap::new();
                    for line in req.user.lines() {
                        if let Some(rest) = line.strip_prefix("Hypothesis (") {
                            if let Some((pair, _)) = rest.split_once("): ") {
                                if let Some((dataset, id)) = pair.split_once(", ") {
                                    citations
                                        .entry(dataset.to_string())
                                        .or_default()
                                        .push(id.to_string());
                                }
                            }
                        }
                    }
                    let cites = citations
                        .iter()
                        .map(|(dataset, ids)| format!("({}: {})", dataset, ids.join(", ")))
                        .collect::<Vec<_>>()
                        .join(", ");
                    format!(
                        "\\begin{{tabularx}}{{\\linewidth}}{{xy}}\n\\catrow{{Lexical markers}}\n\\itemrow{{Marker insertion}}\n  {{Model 2 inserts \"{}\" where Model 1 does not, e.g., {cites}.}}\n\\end{{tabularx}}",
                        self.spec.marker
                    )
                }
            }
            Role::Judge => {
                let answer = match Self::extract_judge_texts(&req.user) {
                    Some((trait_text, hypothesis_text)) => {
                        hypothesis_text.to_ascii_lowercase().contains(&trait_text.to_ascii_lowercase())
                    }
                    None => false,
                };
                if answer { "Yes".to_string() } else { "No".to_string() }
            }
            Role::Embedder => {
                return Err(Error::Client {
                    role: role.to_string(),
                    detail: "embedding requested through chat".into(),
                })
            }
        };
        let usage = TokenUsage::new(
            (req.user.len() as u64).div_ceil(4),
            (text.len() as u64).div_ceil(4),
        );
        Ok((text, usage))
    }

    fn embed(&self, _role: Role, _cfg: &RoleConfig, req: &EmbedRequest) -> Result<(Vec<f64>, TokenUsage)> {
        self.ops.fetch_add(1, Ordering::SeqCst);
        // deterministic 8-dim embedding from the text digest
        let digest = Sha256::digest(req.text.as_bytes());
        let values: Vec<f64> = digest[..8]
            .iter()
            .map(|&b| (b as f64 - 127.5) / 127.5)
            .collect();
        Ok((values, TokenUsage::new((req.text.len() as u64).div_ceil(4), 0)))
    }

    fn operations(&self) -> u64 {
        self.ops.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llmclient::CallMode;
    use crate::statcore::{auc, ScoreSample};
    use std::sync::Arc;

    fn spec(m1_rate: f64, m2_rate: f64) -> MockModelSpec {
        MockModelSpec {
            marker: "zxqv".into(),
            m1_injection_rate: m1_rate,
            m2_injection_rate: m2_rate,
            base_vocabulary: ["alpha", "beta", "gamma", "delta", "epsilon"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            score_if_marker: 15.0,
            score_if_absent: 85.0,
            noise_sd: 5.0,
            injected_phrasing: "a believer in Hinduism".into(),
        }
    }

    #[test]
    fn builtin_table_has_36_unique_personas() {
        let personas = builtin_personas();
        assert_eq!(personas.len(), 36);
        let keys: std::collections::BTreeSet<&String> = personas.iter().map(|p| &p.key).collect();
        assert_eq!(keys.len(), 36);
        assert!(personas.iter().all(|p| !p.phrasing.is_empty()));
        let hinduism = personas.iter().find(|p| p.key == "subscribes-to-Hinduism").unwrap();
        assert_eq!(hinduism.phrasing, "a believer in Hinduism");
    }

    #[test]
    fn wrapper_bytes() {
        let wrapped = wrap_persona("What do you think?", "a believer in Hinduism");
        assert!(wrapped.contains("answer like someone who is:\n\na believer in Hinduism."));
        assert!(wrapped.ends_with("Speak directly, as if these are your own opinions.\n\nWhat do you think?"));
        // byte-identical across calls
        assert_eq!(wrapped, wrap_persona("What do you think?", "a believer in Hinduism"));
    }

    fn judge_client(backend: Arc<dyn Backend>) -> LlmClient {
        let mut roles = BTreeMap::new();
        roles.insert(
            Role::Judge,
            RoleConfig {
                endpoint: "http://unused".into(),
                model: "mock".into(),
                api_key_env: String::new(),
                price_in: 0.0,
                price_out: 0.0,
            },
        );
        LlmClient::new(roles, backend, CallMode::Live, 2)
    }

    #[test]
    fn judge_match_yes_no_paths() {
        let backend = Arc::new(MockBackend::new(spec(0.1, 0.9), 1).unwrap());
        let client = judge_client(backend);
        let mut warnings = Vec::new();
        let matched = judge_match(
            "a believer in Hinduism",
            "Model 2 answers through a Hindu-dharma lens; it reads as a believer in Hinduism.",
            &client,
            &mut warnings,
        )
        .unwrap();
        assert!(matched);
        let unmatched = judge_match(
            "a believer in Hinduism",
            "Model 2 talks about sports more often.",
            &client,
            &mut warnings,
        )
        .unwrap();
        assert!(!unmatched);
        assert!(warnings.is_empty());
    }

    #[test]
    fn judge_unparseable_counts_as_no_match() {
        let stub = Arc::new(crate::llmclient::test_support::StubBackend::new("maybe"));
        let client = judge_client(stub);
        let mut warnings = Vec::new();
        let matched = judge_match("x", "y", &client, &mut warnings).unwrap();
        assert!(!matched);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn mock_subject_rates_and_determinism() {
        let s = spec(0.0, 1.0);
        let always = mock_subject(&s, 1.0, "prompt-1", 7);
        assert!(always.contains("zxqv"));
        let never = mock_subject(&s, 0.0, "prompt-1", 7);
        assert!(!never.contains("zxqv"));
        assert_eq!(
            mock_subject(&s, 0.5, "prompt-2", 7),
            mock_subject(&s, 0.5, "prompt-2", 7)
        );
        assert_ne!(
            mock_subject(&s, 0.5, "prompt-2", 7),
            mock_subject(&s, 0.5, "prompt-3", 7)
        );
    }

    #[test]
    fn mock_discriminator_matches_closed_form_auc() {
        let s = spec(0.1, 0.9);
        let expected = s.closed_form_auc();
        assert!((expected - 0.9).abs() < 1e-6, "closed form {expected}");
        // empirical AUC over N=400: positives are true-M1 texts
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for i in 0..200 {
            let m1_text = mock_subject(&s, s.m1_injection_rate, &format!("m1-{i}"), 3);
            let m2_text = mock_subject(&s, s.m2_injection_rate, &format!("m2-{i}"), 3);
            positives.push(mock_discriminator(&s, "h", &m1_text, 3));
            negatives.push(mock_discriminator(&s, "h", &m2_text, 3));
        }
        let empirical = auc(&ScoreSample::new(positives, negatives).unwrap());
        assert!(
            (empirical - expected).abs() <= 0.05,
            "empirical {empirical} vs closed form {expected}"
        );
    }

    #[test]
    fn scores_clamped_to_range() {
        let mut s = spec(0.5, 0.5);
        s.noise_sd = 60.0;
        for i in 0..200 {
            let text = mock_subject(&s, 0.5, &format!("p{i}"), 11);
            let score = mock_discriminator(&s, "h", &text, 11);
            assert!((0.0..=100.0).contains(&score));
        }
    }

    #[test]
    fn recovery_metrics_boundaries() {
        let run = |injected: &str, matches: &[bool]| InjectedRun {
            injected_key: injected.into(),
            run_index: 0,
            contexts: matches
                .iter()
                .enumerate()
                .map(|(i, &m)| ContextRecovery {
                    query_key: format!("q{i}"),
                    validated: true,
                    judged_match: m,
                    auc_within: Some(if m { 0.95 } else { 0.85 }),
                })
                .collect(),
        };
        let table = recovery_metrics(&[run("a", &[true, true, true])]).unwrap();
        assert_eq!(table.outcomes[0].fraction_recovered, 1.0);
        assert!(table.outcomes[0].run_recovered);
        assert_eq!(table.recoverability["a"], 1.0);

        let table = recovery_metrics(&[run("a", &[false, false])]).unwrap();
        assert!(!table.outcomes[0].run_recovered);
        assert_eq!(table.outcomes[0].fraction_recovered, 0.0);

        // matched mean above unmatched mean by construction
        let table = recovery_metrics(&[run("a", &[true, false, true])]).unwrap();
        assert!(table.outcomes[0].matched_auc_mean.unwrap() > table.outcomes[0].unmatched_auc_mean.unwrap());
    }

    #[test]
    fn run_recovered_monotone_in_matching_contexts() {
        let base = InjectedRun {
            injected_key: "a".into(),
            run_index: 0,
            contexts: vec![ContextRecovery {
                query_key: "q0".into(),
                validated: true,
                judged_match: true,
                auc_within: Some(0.9),
            }],
        };
        let mut extended = base.clone();
        extended.contexts.push(ContextRecovery {
            query_key: "q1".into(),
            validated: false,
            judged_match: false,
            auc_within: None,
        });
        let a = recovery_metrics(&[base]).unwrap();
        let b = recovery_metrics(&[extended]).unwrap();
        assert!(a.outcomes[0].run_recovered);
        assert!(b.outcomes[0].run_recovered, "adding a context never flips recovery off");
    }

    #[test]
    fn elicitation_counts_injected_personas_per_query() {
        let mk = |injected: &str, q0: bool, q1: bool| InjectedRun {
            injected_key: injected.into(),
            run_index: 0,
            contexts: vec![
                ContextRecovery {
                    query_key: "q0".into(),
                    validated: true,
                    judged_match: q0,
                    auc_within: Some(0.9),
                },
                ContextRecovery {
                    query_key: "q1".into(),
                    validated: true,
                    judged_match: q1,
                    auc_within: Some(0.9),
                },
            ],
        };
        let table = recovery_metrics(&[mk("a", true, false), mk("b", true, true)]).unwrap();
        assert_eq!(table.elicitation["q0"], 1.0, "q0 elicited both injected personas");
        assert_eq!(table.elicitation["q1"], 0.5);
        assert_eq!(table.heatmap[&("a".to_string(), "q0".to_string())], 1.0);
    }
}
