//! Stage orchestration. Every stage reads and writes files under the run's
//! output directory, so any prefix of the pipeline can be resumed, and a
//! replay-mode rerun is a no-op on outputs.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, RunMode};
use crate::consolidate::{
    self, affinity_from_correlation, build_shared_eval_set, correlation_matrix, pick_representative,
    select_k, CompressionResult, ScoreMatrix,
};
use crate::corpus::{self, ParseSpec, PromptBank};
use crate::embedcluster::{self, ContextMode, ContextSet};
use crate::error::{Error, Result};
use crate::genpair::{
    self, ContextSamples, GenerationRecord, ModelTag, PartitionSide, PromptPair,
};
use crate::harness::{self, MockBackend, MockModelSpec};
use crate::hypothesis::{self, DiversificationState, Hypothesis, HypothesisContext};
use crate::llmclient::{
    estimate_cost, Backend, CallMode, HttpBackend, LlmClient, ReplayStore, Role, TokenUsage,
    UsageLedger,
};
use crate::report::{self, RunLedgerRow};
use crate::seeding;
use crate::statcore::{SaffronParams, SaffronState};
use crate::validate::{self, rebalance, sample_judgment_set, CandidateOutcome, JudgmentRecord};

pub const BANK_FILE: &str = "bank.jsonl";
pub const CONTEXTS_FILE: &str = "contexts.jsonl";
pub const GENERATIONS_FILE: &str = "generations.jsonl";
pub const PARTITION_FILE: &str = "partition.jsonl";
pub const HYPOTHESES_FILE: &str = "hypotheses.jsonl";
pub const OUTCOMES_FILE: &str = "outcomes.jsonl";
pub const JUDGMENTS_FILE: &str = "judgments.jsonl";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const SUMMARY_TEXT_FILE: &str = "summary.txt";
pub const SUMMARY_SIDECAR_FILE: &str = "summary.json";
pub const COMPRESSION_FILE: &str = "compression.json";
pub const USAGE_FILE: &str = "usage.jsonl";
pub const WARNINGS_FILE: &str = "warnings.log";
pub const COST_FILE: &str = "cost.json";

/// A configured run bound to a client.
pub struct PipelineRun {
    pub cfg: RunConfig,
    pub client: LlmClient,
}

/// Build the client described by the config, with an HTTP transport.
pub fn build_http_client(cfg: &RunConfig) -> Result<LlmClient> {
    let backend: Arc<dyn Backend> = Arc::new(HttpBackend::new(120)?);
    build_client_with_backend(cfg, backend)
}

/// Build the client described by the config over an arbitrary transport
/// (mock transports included).
pub fn build_client_with_backend(cfg: &RunConfig, backend: Arc<dyn Backend>) -> Result<LlmClient> {
    let mode = match cfg.mode {
        RunMode::Live => CallMode::Live,
        RunMode::Record => CallMode::Record(open_store(cfg)?),
        RunMode::Replay => CallMode::Replay(open_store(cfg)?),
    };
    Ok(LlmClient::new(
        cfg.roles.clone(),
        backend,
        mode,
        cfg.max_in_flight,
    ))
}

fn open_store(cfg: &RunConfig) -> Result<ReplayStore> {
    let dir = cfg
        .fixtures_dir
        .as_ref()
        .ok_or_else(|| Error::Config("record/replay modes require fixtures_dir".into()))?;
    ReplayStore::open(dir)
}

impl PipelineRun {
    pub fn new(cfg: RunConfig, client: LlmClient) -> Result<Self> {
        cfg.validate()?;
        std::fs::create_dir_all(&cfg.output_dir)
            .map_err(|e| Error::io(cfg.output_dir.display().to_string(), e))?;
        Ok(PipelineRun { cfg, client })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn require(&self, name: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if !path.exists() {
            return Err(Error::DependencyMissing(path.display().to_string()));
        }
        Ok(path)
    }

    fn append_warnings(&self, stage: &str, warnings: &[String]) -> Result<()> {
        self.replace_stage_lines(WARNINGS_FILE, &format!("[{stage}] "), {
            let mut lines = Vec::new();
            for w in warnings {
                lines.push(format!("[{stage}] {w}"));
            }
            lines
        })
    }

    /// Rewrite `name` keeping every line that does not start with
    /// `stage_prefix`, then appending `new_lines`, so a re-run of the same
    /// stage leaves identical bytes.
    fn replace_stage_lines(&self, name: &str, stage_prefix: &str, new_lines: Vec<String>) -> Result<()> {
        let path = self.path(name);
        let mut kept: Vec<String> = Vec::new();
        if path.exists() {
            let file = std::fs::File::open(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
                if !line.starts_with(stage_prefix) && !line.trim().is_empty() {
                    kept.push(line);
                }
            }
        }
        kept.extend(new_lines);
        if kept.is_empty() && !path.exists() {
            return Ok(());
        }
        let mut file = std::fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        for line in kept {
            writeln!(file, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        Ok(())
    }

    /// Record this stage's usage snapshot so the cost report can attribute
    /// tokens per stage. Totals equal the sum over persisted call records
    /// when recording; a re-run replaces the stage's rows.
    fn flush_usage(&self, stage: &str, before: &UsageLedger) -> Result<()> {
        let after = self.client.usage_ledger();
        let mut lines = Vec::new();
        for (role, stages) in &after.entries {
            for (stage_label, usage) in stages {
                let prior = before
                    .entries
                    .get(role)
                    .and_then(|s| s.get(stage_label))
                    .copied()
                    .unwrap_or_default();
                let delta = TokenUsage {
                    input_tokens: usage.input_tokens - prior.input_tokens,
                    output_tokens: usage.output_tokens - prior.output_tokens,
                    estimated: usage.estimated,
                };
                if delta.input_tokens == 0 && delta.output_tokens == 0 {
                    continue;
                }
                let row = serde_json::json!({
                    "stage": stage,
                    "call_kind": stage_label,
                    "role": role,
                    "input_tokens": delta.input_tokens,
                    "output_tokens": delta.output_tokens,
                    "estimated": delta.estimated,
                });
                lines.push(row.to_string());
            }
        }
        self.replace_usage_rows(stage, lines)
    }

    fn replace_usage_rows(&self, stage: &str, new_lines: Vec<String>) -> Result<()> {
        let path = self.path(USAGE_FILE);
        let mut kept: Vec<String> = Vec::new();
        if path.exists() {
            let file = std::fs::File::open(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let value: serde_json::Value = serde_json::from_str(&line).unwrap_or_default();
                if value["stage"].as_str() != Some(stage) {
                    kept.push(line);
                }
            }
        }
        kept.extend(new_lines);
        if kept.is_empty() && !path.exists() {
            return Ok(());
        }
        let mut file = std::fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        for line in kept {
            writeln!(file, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        Ok(())
    }

    // ----- stage: ingest ---------------------------------------------------

    pub fn ingest(&self) -> Result<PromptBank> {
        let spec = ParseSpec {
            text_field: self.cfg.dataset.text_field.clone(),
            category_field: self.cfg.dataset.category_field.clone(),
            delimiter: self.cfg.dataset.delimiter,
        };
        let bank = corpus::load_bank(&self.cfg.dataset.path, self.cfg.dataset.dataset, &spec)?;
        corpus::save_bank(&bank, &self.path(BANK_FILE))?;
        Ok(bank)
    }

    // ----- stage: cluster --------------------------------------------------

    pub fn cluster(&self) -> Result<ContextSet> {
        let bank = corpus::read_bank(&self.require(BANK_FILE)?)?;
        let before = self.client.usage_ledger();
        let set = match self.cfg.dataset.context_mode {
            ContextMode::Predefined => {
                embedcluster::build_contexts(&bank, None, ContextMode::Predefined, 0, self.cfg.seed, 10)?
            }
            ContextMode::Clustered => {
                let p = if self.cfg.dataset.p > 0 {
                    self.cfg.dataset.p
                } else {
                    crate::config::default_context_count(self.cfg.dataset.dataset)
                };
                let embeddings = embedcluster::embed_prompts(&bank, &self.client)?;
                embedcluster::build_contexts(
                    &bank,
                    Some(&embeddings),
                    ContextMode::Clustered,
                    p,
                    seeding::derive_seed(self.cfg.seed, "kmeans", &self.cfg.run_id),
                    10,
                )?
            }
        };
        embedcluster::save_contexts(&set, &self.path(CONTEXTS_FILE))?;
        self.flush_usage("cluster", &before)?;
        Ok(set)
    }

    // ----- stage: generate -------------------------------------------------

    pub fn generate(&self) -> Result<()> {
        let bank = corpus::read_bank(&self.require(BANK_FILE)?)?;
        let contexts = embedcluster::read_contexts(&self.require(CONTEXTS_FILE)?)?;
        let text_by_id: BTreeMap<&String, &String> = bank
            .records
            .iter()
            .map(|r| (&r.prompt_id, &r.formatted_text))
            .collect();

        let before = self.client.usage_ledger();
        let persona = self.cfg.persona_injection.clone();
        let wrapper = persona
            .as_ref()
            .map(|phrasing| move |prompt: &str| harness::wrap_persona(prompt, phrasing));

        let gen_path = self.path(GENERATIONS_FILE);
        let mut gen_out = std::fs::File::create(&gen_path)
            .map_err(|e| Error::io(gen_path.display().to_string(), e))?;
        let part_path = self.path(PARTITION_FILE);
        let mut part_out = std::fs::File::create(&part_path)
            .map_err(|e| Error::io(part_path.display().to_string(), e))?;

        for (context_id, prompt_ids) in &contexts.contexts {
            let prompts: Vec<(String, String)> = prompt_ids
                .iter()
                .map(|id| {
                    let text = text_by_id.get(id).ok_or_else(|| {
                        Error::Inconsistent(format!("context {context_id} references unknown prompt {id}"))
                    })?;
                    Ok((id.clone(), (*text).clone()))
                })
                .collect::<Result<_>>()?;
            let samples = genpair::generate_pairs(
                context_id,
                &prompts,
                &self.client,
                &self.cfg.decoding,
                wrapper.as_ref().map(|w| w as &(dyn Fn(&str) -> String + Sync)),
                self.cfg.max_in_flight,
            )?;
            let samples = genpair::split_construction_validation(
                samples,
                self.cfg.stages.validation_fraction,
                self.cfg.seed,
            )?;
            for pair in &samples.pairs {
                for record in pair.m1.iter().chain(pair.m2.iter()) {
                    let row = GenRow::from_record(&self.cfg.run_id, context_id, record);
                    writeln!(gen_out, "{}", serde_json::to_string(&row).expect("row serializes"))
                        .map_err(|e| Error::io(gen_path.display().to_string(), e))?;
                }
            }
            for (prompt_id, side) in &samples.partition {
                let row = serde_json::json!({
                    "context_id": context_id,
                    "prompt_id": prompt_id,
                    "side": side,
                });
                writeln!(part_out, "{row}")
                    .map_err(|e| Error::io(part_path.display().to_string(), e))?;
            }
        }
        self.flush_usage("generate", &before)?;
        Ok(())
    }

    fn load_samples(&self) -> Result<BTreeMap<String, ContextSamples>> {
        let bank = corpus::read_bank(&self.require(BANK_FILE)?)?;
        let contexts = embedcluster::read_contexts(&self.require(CONTEXTS_FILE)?)?;
        let gen_path = self.require(GENERATIONS_FILE)?;
        let part_path = self.require(PARTITION_FILE)?;
        let text_by_id: BTreeMap<&String, &String> = bank
            .records
            .iter()
            .map(|r| (&r.prompt_id, &r.formatted_text))
            .collect();

        let mut generations: BTreeMap<(String, String), (Vec<GenerationRecord>, Vec<GenerationRecord>)> =
            BTreeMap::new();
        let file = std::fs::File::open(&gen_path).map_err(|e| Error::io(gen_path.display().to_string(), e))?;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(gen_path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: GenRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
                context: gen_path.display().to_string(),
                detail: e.to_string(),
            })?;
            let slot = generations
                .entry((row.context_id.clone(), row.prompt_id.clone()))
                .or_default();
            let record = row.into_record();
            match record.model_tag {
                ModelTag::M1 => slot.0.push(record),
                ModelTag::M2 => slot.1.push(record),
            }
        }

        let mut partition: BTreeMap<String, BTreeMap<String, PartitionSide>> = BTreeMap::new();
        let file = std::fs::File::open(&part_path).map_err(|e| Error::io(part_path.display().to_string(), e))?;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(part_path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
                context: part_path.display().to_string(),
                detail: e.to_string(),
            })?;
            let side: PartitionSide =
                serde_json::from_value(value["side"].clone()).map_err(|e| Error::Parse {
                    context: part_path.display().to_string(),
                    detail: e.to_string(),
                })?;
            partition
                .entry(value["context_id"].as_str().unwrap_or_default().to_string())
                .or_default()
                .insert(value["prompt_id"].as_str().unwrap_or_default().to_string(), side);
        }

        let mut result = BTreeMap::new();
        for (context_id, prompt_ids) in &contexts.contexts {
            let mut pairs = Vec::new();
            for prompt_id in prompt_ids {
                let Some((m1, m2)) = generations.remove(&(context_id.clone(), prompt_id.clone()))
                else {
                    continue; // prompt failed generation and was dropped
                };
                let prompt_text = text_by_id
                    .get(prompt_id)
                    .map(|t| (*t).clone())
                    .unwrap_or_default();
                pairs.push(PromptPair {
                    prompt_id: prompt_id.clone(),
                    prompt_text,
                    m1,
                    m2,
                });
            }
            result.insert(
                context_id.clone(),
                ContextSamples {
                    context_id: context_id.clone(),
                    pairs,
                    partition: partition.remove(context_id).unwrap_or_default(),
                },
            );
        }
        Ok(result)
    }

    // ----- stage: hypothesize ---------------------------------------------

    /// Propose one hypothesis per context, score its held-out judgment set,
    /// and feed the p-value to the online (SAFFRON) gate that drives the
    /// diversification schedule. The same p-values are reused for the BH
    /// verdicts later.
    pub fn hypothesize(&self) -> Result<Vec<Hypothesis>> {
        let samples = self.load_samples()?;
        let before = self.client.usage_ledger();
        let mut warnings = Vec::new();

        let mut diversification = DiversificationState::new(
            self.cfg.stages.diversification_n0,
            self.cfg.stages.diversification_b,
            self.cfg.stages.diversification_k,
        );
        let mut saffron = SaffronState::new(SaffronParams::default_for(self.cfg.stages.q))?;

        let hyp_path = self.path(HYPOTHESES_FILE);
        let mut hyp_out = std::fs::File::create(&hyp_path)
            .map_err(|e| Error::io(hyp_path.display().to_string(), e))?;
        let out_path = self.path(OUTCOMES_FILE);
        let mut outcome_out = std::fs::File::create(&out_path)
            .map_err(|e| Error::io(out_path.display().to_string(), e))?;
        let jud_path = self.path(JUDGMENTS_FILE);
        let mut judgment_out = std::fs::File::create(&jud_path)
            .map_err(|e| Error::io(jud_path.display().to_string(), e))?;

        let mut hypotheses = Vec::new();
        for (sequence, (context_id, context_samples)) in samples.iter().enumerate() {
            let meta = HypothesisContext {
                run_id: self.cfg.run_id.clone(),
                dataset: self.cfg.dataset.dataset.to_string(),
                intervention: self.cfg.intervention.clone(),
                context_id: context_id.clone(),
                sequence: sequence + 1,
            };
            let hypothesis = hypothesis::propose_hypothesis(
                context_samples,
                self.cfg.stages.k_pairs,
                &diversification,
                &[],
                &self.client,
                &meta,
            )?;

            // within-context judgments
            let (pool_m1, pool_m2) = validate::validation_pool(context_samples);
            let judgment_seed =
                seeding::derive_seed(self.cfg.seed, "judgments", &hypothesis.hypothesis_id);
            let examples = sample_judgment_set(
                context_id,
                &pool_m1,
                &pool_m2,
                self.cfg.judgment_budget(),
                judgment_seed,
            )?;
            let (scored, score_warnings) = validate::score_examples_parallel(
                &hypothesis.hypothesis_id,
                &hypothesis.text,
                &examples,
                self.cfg.stages.score_scale_max,
                &self.client,
                self.cfg.max_in_flight,
            )?;
            warnings.extend(score_warnings);
            let mut judgments: Vec<JudgmentRecord> = scored.into_iter().flatten().collect();
            rebalance(&mut judgments);
            let outcome = validate::test_hypothesis(&judgments)?;

            let (passed, next_saffron) = crate::statcore::saffron_step(saffron, outcome.p_one_sided)?;
            saffron = next_saffron;
            if passed {
                diversification.saffron_pass_count += 1;
                diversification
                    .prior_hypotheses
                    .push((hypothesis.hypothesis_id.clone(), hypothesis.text.clone()));
                if self.cfg.stages.diversification
                    && hypothesis::should_update(&diversification)
                    && !diversification.prior_hypotheses.is_empty()
                {
                    let seed = seeding::derive_seed(
                        self.cfg.seed,
                        "diversify",
                        &diversification.version.to_string(),
                    );
                    let (next, update_warnings) =
                        hypothesis::update_diversification(diversification, &self.client, seed)?;
                    diversification = next;
                    warnings.extend(update_warnings);
                }
            }

            for j in &judgments {
                let row = JudgmentRow::within(j);
                writeln!(judgment_out, "{}", serde_json::to_string(&row).expect("row serializes"))
                    .map_err(|e| Error::io(jud_path.display().to_string(), e))?;
            }
            let outcome_row = OutcomeRow {
                hypothesis_id: hypothesis.hypothesis_id.clone(),
                context_id: context_id.clone(),
                n_judgments: judgments.len(),
                auc_within: outcome.auc,
                p_one_sided: outcome.p_one_sided,
                degenerate: outcome.degenerate,
                saffron_pass: passed,
            };
            writeln!(
                outcome_out,
                "{}",
                serde_json::to_string(&outcome_row).expect("row serializes")
            )
            .map_err(|e| Error::io(out_path.display().to_string(), e))?;
            writeln!(hyp_out, "{}", serde_json::to_string(&hypothesis).expect("row serializes"))
                .map_err(|e| Error::io(hyp_path.display().to_string(), e))?;
            hypotheses.push(hypothesis);
        }
        self.append_warnings("hypothesize", &warnings)?;
        self.flush_usage("hypothesize", &before)?;
        Ok(hypotheses)
    }

    // ----- stage: validate ------------------------------------------------

    /// Cross-context AUC plus the BH verdicts over the run family; writes
    /// the run ledger.
    pub fn validate(&self) -> Result<Vec<RunLedgerRow>> {
        let samples = self.load_samples()?;
        let hypotheses = self.read_hypotheses()?;
        let outcomes = self.read_outcomes()?;
        let before = self.client.usage_ledger();
        let mut warnings = Vec::new();

        let mut cross_rows: Vec<String> = Vec::new();
        let mut candidates = Vec::new();
        for hypothesis in &hypotheses {
            let outcome = outcomes
                .get(&hypothesis.hypothesis_id)
                .ok_or_else(|| Error::DependencyMissing(format!(
                    "outcome row for {}",
                    hypothesis.hypothesis_id
                )))?;
            let mut others_m1 = Vec::new();
            let mut others_m2 = Vec::new();
            for (context_id, context_samples) in &samples {
                if context_id == &hypothesis.context_id {
                    continue;
                }
                let (m1, m2) = validate::validation_pool(context_samples);
                others_m1.extend(m1);
                others_m2.extend(m2);
            }
            let mut cross_judgments = Vec::new();
            let cross = validate::cross_context_auc(
                &hypothesis.hypothesis_id,
                &hypothesis.text,
                &others_m1,
                &others_m2,
                self.cfg.cross_budget(),
                seeding::derive_seed(self.cfg.seed, "cross", &hypothesis.hypothesis_id),
                self.cfg.stages.score_scale_max,
                &self.client,
                self.cfg.max_in_flight,
                &mut cross_judgments,
                &mut warnings,
            )?;
            for j in &cross_judgments {
                let row = JudgmentRow::cross(j);
                cross_rows.push(serde_json::to_string(&row).expect("row serializes"));
            }
            candidates.push(CandidateOutcome {
                hypothesis_id: hypothesis.hypothesis_id.clone(),
                n_judgments: outcome.n_judgments,
                auc_within: outcome.auc_within,
                p_one_sided: outcome.p_one_sided,
                auc_cross: cross,
                degenerate: outcome.degenerate,
            });
        }

        // replace any previous cross records so a re-run stays idempotent
        self.replace_stage_lines(JUDGMENTS_FILE, "{\"kind\":\"cross\"", cross_rows)?;

        let results = validate::finalize_run(&candidates, self.cfg.stages.q)?;
        let res_path = self.path(RESULTS_FILE);
        let mut res_out = std::fs::File::create(&res_path)
            .map_err(|e| Error::io(res_path.display().to_string(), e))?;
        for r in &results {
            writeln!(res_out, "{}", serde_json::to_string(r).expect("row serializes"))
                .map_err(|e| Error::io(res_path.display().to_string(), e))?;
        }

        let by_id: BTreeMap<&String, &Hypothesis> =
            hypotheses.iter().map(|h| (&h.hypothesis_id, h)).collect();
        let rows: Vec<RunLedgerRow> = results
            .iter()
            .map(|r| {
                let h = by_id[&r.hypothesis_id];
                RunLedgerRow {
                    run_id: h.run_id.clone(),
                    dataset: h.dataset.clone(),
                    intervention: h.intervention.clone(),
                    hypothesis_id: h.hypothesis_id.clone(),
                    context_id: h.context_id.clone(),
                    text: h.text.clone(),
                    n_judgments: r.n_judgments,
                    auc_within: r.auc_within,
                    auc_cross: r.auc_cross,
                    p_value: r.p_one_sided,
                    validated: r.validated,
                    degenerate: r.degenerate,
                }
            })
            .collect();
        report::emit_ledger(&rows, &self.path(LEDGER_FILE))?;
        self.append_warnings("validate", &warnings)?;
        self.flush_usage("validate", &before)?;
        Ok(rows)
    }

    // ----- stage: consolidate ----------------------------------------------

    pub fn consolidate(&self) -> Result<CompressionResult> {
        let ledger = report::read_ledger(&self.require(LEDGER_FILE)?)?;
        let validated: Vec<&RunLedgerRow> = ledger.iter().filter(|r| r.validated).collect();
        if validated.is_empty() {
            return Err(Error::InvalidInput(
                "no validated hypotheses; nothing to consolidate".into(),
            ));
        }
        let samples = self.load_samples()?;
        let before = self.client.usage_ledger();
        let mut warnings = Vec::new();

        // shared evaluation set across all contexts; with reuse enabled it
        // is drawn from examples that already carry stage-2 judgments so
        // those scores need not be requested again
        let mut all_m1 = Vec::new();
        let mut all_m2 = Vec::new();
        for context_samples in samples.values() {
            let (m1, m2) = validate::validation_pool(context_samples);
            all_m1.extend(m1);
            all_m2.extend(m2);
        }
        let reused_scores = if self.cfg.stages.reuse_stage2_judgments {
            let scores = self.read_judgment_scores()?;
            let judged: std::collections::BTreeSet<&String> =
                scores.keys().map(|(_, example_id)| example_id).collect();
            all_m1.retain(|e| judged.contains(&e.example_id));
            all_m2.retain(|e| judged.contains(&e.example_id));
            scores
        } else {
            BTreeMap::new()
        };
        let size = self
            .cfg
            .stages
            .eval_set_size
            .min(all_m1.len() * 2)
            .min(all_m2.len() * 2);
        let size = if size % 2 == 0 { size } else { size - 1 };
        let shared = build_shared_eval_set(
            &all_m1,
            &all_m2,
            size,
            seeding::derive_seed(self.cfg.seed, "shared_eval", &self.cfg.run_id),
        )?;

        // score matrix: every validated hypothesis over the shared set,
        // reusing stage-2 scores where present
        let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
        for row in &validated {
            let mut scores: Vec<Option<f64>> = vec![None; shared.len()];
            let mut missing = Vec::new();
            for (col, example) in shared.iter().enumerate() {
                let reuse_key = (row.hypothesis_id.clone(), example.example_id.clone());
                match reused_scores.get(&reuse_key) {
                    Some(&score) => scores[col] = Some(score),
                    None => missing.push(col),
                }
            }
            let to_score: Vec<validate::Example> =
                missing.iter().map(|&col| shared[col].clone()).collect();
            let (scored, score_warnings) = validate::score_examples_parallel(
                &format!("matrix/{}", row.hypothesis_id),
                &row.text,
                &to_score,
                self.cfg.stages.score_scale_max,
                &self.client,
                self.cfg.max_in_flight,
            )?;
            warnings.extend(score_warnings);
            for (&col, judgment) in missing.iter().zip(scored) {
                scores[col] = judgment.map(|j| j.score);
            }
            rows.push(scores);
        }
        // drop columns with any missing cell, for all rows
        let mut keep: Vec<usize> = (0..shared.len())
            .filter(|&col| rows.iter().all(|r| r[col].is_some()))
            .collect();
        if keep.len() < shared.len() {
            warnings.push(format!(
                "dropped {} shared-eval columns with missing scores",
                shared.len() - keep.len()
            ));
        }
        // restore label balance by dropping newest majority-label columns
        loop {
            let m1 = keep
                .iter()
                .filter(|&&c| shared[c].true_label == ModelTag::M1)
                .count();
            let m2 = keep.len() - m1;
            if m1 == m2 || keep.is_empty() {
                break;
            }
            let majority = if m1 > m2 { ModelTag::M1 } else { ModelTag::M2 };
            let Some(pos) = keep.iter().rposition(|&c| shared[c].true_label == majority) else {
                break;
            };
            keep.remove(pos);
        }
        let matrix = ScoreMatrix {
            hypothesis_ids: validated.iter().map(|r| r.hypothesis_id.clone()).collect(),
            example_ids: keep.iter().map(|&c| shared[c].example_id.clone()).collect(),
            values: rows
                .iter()
                .map(|r| keep.iter().map(|&c| r[c].expect("kept columns are complete")).collect())
                .collect(),
            labels: keep.iter().map(|&c| shared[c].true_label).collect(),
        };

        let compression = match correlation_matrix(&matrix) {
            Err(Error::Degenerate(reason)) => {
                warnings.push(format!("consolidation skipped: {reason}"));
                let assignment: BTreeMap<String, usize> = matrix
                    .hypothesis_ids
                    .iter()
                    .enumerate()
                    .map(|(i, id)| (id.clone(), i))
                    .collect();
                let representatives = matrix
                    .hypothesis_ids
                    .iter()
                    .enumerate()
                    .map(|(i, id)| (i, id.clone()))
                    .collect();
                CompressionResult {
                    chosen_k: matrix.hypothesis_ids.len(),
                    assignment,
                    representatives,
                    silhouette: None,
                    skipped: true,
                }
            }
            Err(other) => return Err(other),
            Ok((kept_ids, excluded, rho)) => {
                if !excluded.is_empty() {
                    warnings.push(format!(
                        "excluded constant-score hypotheses from compression: {}",
                        excluded.join(", ")
                    ));
                }
                let affinity = affinity_from_correlation(&rho);
                let mut compression = select_k(
                    &affinity,
                    &kept_ids,
                    seeding::derive_seed(self.cfg.seed, "consolidate", &self.cfg.run_id),
                )?;
                if !compression.skipped {
                    let mut rho_map: BTreeMap<(String, String), f64> = BTreeMap::new();
                    for (i, a) in kept_ids.iter().enumerate() {
                        for (j, b) in kept_ids.iter().enumerate() {
                            if i < j {
                                rho_map.insert((a.clone(), b.clone()), rho[i][j]);
                            }
                        }
                    }
                    let auc_map: BTreeMap<String, f64> = validated
                        .iter()
                        .map(|r| (r.hypothesis_id.clone(), r.auc_within))
                        .collect();
                    let mut clusters: BTreeMap<usize, Vec<String>> = BTreeMap::new();
                    for (id, &cluster) in &compression.assignment {
                        clusters.entry(cluster).or_default().push(id.clone());
                    }
                    for (cluster, members) in clusters {
                        let rep = pick_representative(&members, &rho_map, &auc_map)?;
                        compression.representatives.insert(cluster, rep);
                    }
                }
                compression
            }
        };

        let path = self.path(COMPRESSION_FILE);
        let json = serde_json::to_string_pretty(&compression).expect("compression serializes");
        std::fs::write(&path, json).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.append_warnings("consolidate", &warnings)?;
        self.flush_usage("consolidate", &before)?;
        Ok(compression)
    }

    // ----- stage: summarize -------------------------------------------------

    pub fn summarize(&self) -> Result<consolidate::ThematicSummary> {
        let ledger = report::read_ledger(&self.require(LEDGER_FILE)?)?;
        let hypotheses = self.read_hypotheses()?;
        let validated_ids: std::collections::BTreeSet<&String> = ledger
            .iter()
            .filter(|r| r.validated)
            .map(|r| &r.hypothesis_id)
            .collect();
        let validated: Vec<Hypothesis> = hypotheses
            .into_iter()
            .filter(|h| validated_ids.contains(&h.hypothesis_id))
            .collect();
        let before = self.client.usage_ledger();
        let summary = consolidate::thematic_summary(&validated, &self.client)?;
        let mut warnings = Vec::new();
        if let Some(parsed) = &summary.parsed {
            warnings.extend(parsed.warnings.iter().cloned());
        } else {
            warnings.push("summary reply did not follow the requested row markers; stored verbatim only".into());
        }
        report::emit_summary(
            &summary.raw,
            &summary.parsed,
            &self.path(SUMMARY_TEXT_FILE),
            &self.path(SUMMARY_SIDECAR_FILE),
        )?;
        self.append_warnings("summarize", &warnings)?;
        self.flush_usage("summarize", &before)?;
        Ok(summary)
    }

    // ----- stage: report ----------------------------------------------------

    pub fn report(&self) -> Result<Vec<report::MetricsRow>> {
        let ledger = report::read_ledger(&self.require(LEDGER_FILE)?)?;
        report::check_ledger_verdicts(&ledger, self.cfg.stages.q)?;
        let table = report::metrics_from_ledger(&ledger);
        report::emit_metrics(&table, &self.path(METRICS_FILE))?;
        self.write_cost_report()?;
        Ok(table)
    }

    /// Aggregate the usage file into per-role totals and price them.
    pub fn write_cost_report(&self) -> Result<()> {
        let usage = self.read_usage_totals()?;
        let cost = estimate_cost(&usage, &self.cfg.roles)?;
        let path = self.path(COST_FILE);
        let json = serde_json::to_string_pretty(&cost).expect("cost serializes");
        std::fs::write(&path, json).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }

    pub fn read_usage_totals(&self) -> Result<BTreeMap<Role, TokenUsage>> {
        let path = self.path(USAGE_FILE);
        let mut totals: BTreeMap<Role, TokenUsage> = BTreeMap::new();
        if !path.exists() {
            return Ok(totals);
        }
        let file = std::fs::File::open(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
                context: path.display().to_string(),
                detail: e.to_string(),
            })?;
            let role: Role = serde_json::from_value(value["role"].clone()).map_err(|e| Error::Parse {
                context: path.display().to_string(),
                detail: e.to_string(),
            })?;
            totals.entry(role).or_default().add(&TokenUsage {
                input_tokens: value["input_tokens"].as_u64().unwrap_or(0),
                output_tokens: value["output_tokens"].as_u64().unwrap_or(0),
                estimated: value["estimated"].as_bool().unwrap_or(false),
            });
        }
        Ok(totals)
    }

    // ----- readers -----------------------------------------------------------

    pub fn read_hypotheses(&self) -> Result<Vec<Hypothesis>> {
        let path = self.require(HYPOTHESES_FILE)?;
        let file = std::fs::File::open(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut out = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                context: path.display().to_string(),
                detail: e.to_string(),
            })?);
        }
        Ok(out)
    }

    /// (hypothesis_id, example_id) -> score over every persisted judgment.
    pub fn read_judgment_scores(&self) -> Result<BTreeMap<(String, String), f64>> {
        let path = self.require(JUDGMENTS_FILE)?;
        let file = std::fs::File::open(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut scores = BTreeMap::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: JudgmentRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
                context: path.display().to_string(),
                detail: e.to_string(),
            })?;
            scores.insert((row.hypothesis_id, row.example_id), row.score);
        }
        Ok(scores)
    }

    pub fn read_outcomes(&self) -> Result<BTreeMap<String, OutcomeRow>> {
        let path = self.require(OUTCOMES_FILE)?;
        let file = std::fs::File::open(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut out = BTreeMap::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: OutcomeRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
                context: path.display().to_string(),
                detail: e.to_string(),
            })?;
            out.insert(row.hypothesis_id.clone(), row);
        }
        Ok(out)
    }
}

/// Generation file row.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GenRow {
    run_id: String,
    context_id: String,
    prompt_id: String,
    model_tag: ModelTag,
    sample_index: u32,
    text: String,
    input_tokens: u64,
    output_tokens: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    estimated: bool,
}

impl GenRow {
    fn from_record(run_id: &str, context_id: &str, record: &GenerationRecord) -> Self {
        GenRow {
            run_id: run_id.to_string(),
            context_id: context_id.to_string(),
            prompt_id: record.prompt_id.clone(),
            model_tag: record.model_tag,
            sample_index: record.sample_index,
            text: record.text.clone(),
            input_tokens: record.usage.input_tokens,
            output_tokens: record.usage.output_tokens,
            estimated: record.usage.estimated,
        }
    }

    fn into_record(self) -> GenerationRecord {
        GenerationRecord {
            prompt_id: self.prompt_id,
            model_tag: self.model_tag,
            sample_index: self.sample_index,
            text: self.text,
            usage: TokenUsage {
                input_tokens: self.input_tokens,
                output_tokens: self.output_tokens,
                estimated: self.estimated,
            },
        }
    }
}

/// Judgment file row; `kind` separates within/cross records so the AUC can
/// be recomputed exactly offline.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct JudgmentRow {
    kind: String,
    hypothesis_id: String,
    example_id: String,
    true_label: ModelTag,
    score: f64,
    raw_reply: String,
}

impl JudgmentRow {
    fn within(j: &JudgmentRecord) -> Self {
        Self::tagged("within", j)
    }

    fn cross(j: &JudgmentRecord) -> Self {
        Self::tagged("cross", j)
    }

    fn tagged(kind: &str, j: &JudgmentRecord) -> Self {
        JudgmentRow {
            kind: kind.to_string(),
            hypothesis_id: j.hypothesis_id.clone(),
            example_id: j.example_id.clone(),
            true_label: j.true_label,
            score: j.score,
            raw_reply: j.raw_reply.clone(),
        }
    }
}

/// Per-hypothesis within-context outcome persisted by the hypothesize stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub hypothesis_id: String,
    pub context_id: String,
    pub n_judgments: usize,
    pub auc_within: f64,
    pub p_one_sided: f64,
    pub degenerate: bool,
    pub saffron_pass: bool,
}

/// Convenience driver: every stage in order.
pub fn run_all(run: &PipelineRun) -> Result<()> {
    run.ingest()?;
    run.cluster()?;
    run.generate()?;
    run.hypothesize()?;
    run.validate()?;
    // consolidation and summary only apply when something validated
    let ledger = report::read_ledger(&run.path(LEDGER_FILE))?;
    if ledger.iter().any(|r| r.validated) {
        run.consolidate()?;
        run.summarize()?;
    }
    run.report()?;
    Ok(())
}

/// Write a synthetic prompt bank for mock end-to-end runs: `contexts`
/// categories with `prompts_per_context` statements each.
pub fn write_mock_bank(path: &Path, contexts: usize, prompts_per_context: usize) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    for c in 0..contexts {
        for p in 0..prompts_per_context {
            let row = serde_json::json!({
                "statement": format!("People in group {c} often think about topic {p}."),
                "behavior": format!("category-{c:02}"),
            });
            writeln!(out, "{row}").map_err(|e| Error::io(path.display().to_string(), e))?;
        }
    }
    Ok(())
}

/// Configuration for an offline mock run; shared by tests and the CLI's
/// synthetic-recover mock path.
pub fn mock_run_config(
    output_dir: &Path,
    bank_path: &Path,
    run_id: &str,
    seed: u64,
    n_judgments: usize,
) -> RunConfig {
    let mut roles = BTreeMap::new();
    for role in Role::ALL {
        roles.insert(
            role,
            crate::llmclient::RoleConfig {
                endpoint: "mock://local".into(),
                model: format!("mock-{}", role.as_str()),
                api_key_env: String::new(),
                price_in: 0.0,
                price_out: 0.0,
            },
        );
    }
    RunConfig {
        run_id: run_id.to_string(),
        seed,
        intervention: "mock".into(),
        mode: RunMode::Live,
        fixtures_dir: None,
        output_dir: output_dir.to_path_buf(),
        max_in_flight: 4,
        persona_injection: None,
        dataset: crate::config::DatasetConfig {
            path: bank_path.to_path_buf(),
            dataset: crate::corpus::SourceDataset::Persona,
            text_field: "statement".into(),
            category_field: Some("behavior".into()),
            delimiter: None,
            context_mode: ContextMode::Predefined,
            p: 0,
        },
        decoding: crate::genpair::DecodingConfig {
            samples_per_prompt: 4,
            ..Default::default()
        },
        stages: crate::config::StageParams {
            n_judgments,
            ..Default::default()
        },
        roles,
    }
}

/// Build a mock-backed pipeline run.
pub fn mock_pipeline(cfg: RunConfig, spec: MockModelSpec, backend_seed: u64) -> Result<PipelineRun> {
    let backend: Arc<dyn Backend> = Arc::new(MockBackend::new(spec, backend_seed)?);
    let client = build_client_with_backend(&cfg, backend)?;
    PipelineRun::new(cfg, client)
}
