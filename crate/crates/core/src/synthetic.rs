//! Synthetic behavior recovery driver: inject a persona into M2 via the
//! prompt wrapper, run the pipeline per injected persona and repeat,
//! judge whether validated hypotheses recover the injection, and emit the
//! recovery/elicitation tables.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::harness::{
    self, judge_match, recovery_metrics, ContextRecovery, InjectedRun, MockBackend, MockModelSpec,
    PersonaSpec, RecoveryTable,
};
use crate::llmclient::{Backend, LlmClient};
use crate::pipeline::{build_client_with_backend, PipelineRun, LEDGER_FILE};
use crate::report;
use crate::seeding;

pub const RECOVERY_OUTCOMES_FILE: &str = "recovery_outcomes.jsonl";
pub const RECOVERY_TABLE_FILE: &str = "recovery.tsv";
pub const HEATMAP_FILE: &str = "recovery_heatmap.tsv";

/// Options for a synthetic recovery campaign.
#[derive(Debug, Clone)]
pub struct SyntheticOptions {
    /// Personas to inject; empty means the full built-in table.
    pub personas: Vec<String>,
    pub repeats: u32,
    pub output_dir: PathBuf,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions {
            personas: Vec::new(),
            repeats: 4,
            output_dir: PathBuf::from("synthetic"),
        }
    }
}

fn selected_personas(options: &SyntheticOptions) -> Result<Vec<PersonaSpec>> {
    let table = harness::builtin_personas();
    if options.personas.is_empty() {
        return Ok(table);
    }
    options
        .personas
        .iter()
        .map(|key| {
            table
                .iter()
                .find(|p| &p.key == key)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("unknown persona key `{key}`")))
        })
        .collect()
}

/// Client factory per inner run; lets the caller bind mock or live
/// transports while the driver owns run wiring.
pub type ClientFactory<'a> = dyn Fn(&RunConfig, &PersonaSpec) -> Result<LlmClient> + 'a;

/// Run the recovery campaign: one pipeline run per (persona, repeat),
/// judge matches on validated hypotheses, aggregate, and emit tables
/// under `options.output_dir`.
pub fn run_recovery(
    base: &RunConfig,
    options: &SyntheticOptions,
    make_client: &ClientFactory<'_>,
) -> Result<RecoveryTable> {
    let personas = selected_personas(options)?;
    if options.repeats == 0 {
        return Err(Error::InvalidInput("repeats must be >= 1".into()));
    }
    std::fs::create_dir_all(&options.output_dir)
        .map_err(|e| Error::io(options.output_dir.display().to_string(), e))?;

    let mut runs = Vec::new();
    for persona in &personas {
        for repeat in 0..options.repeats {
            let run_id = format!("{}-r{repeat}", persona.key);
            let mut cfg = base.clone();
            cfg.run_id = run_id.clone();
            cfg.seed = seeding::derive_seed(base.seed, "synthetic", &run_id);
            cfg.persona_injection = Some(persona.phrasing.clone());
            cfg.output_dir = options.output_dir.join(&run_id);
            let client = make_client(&cfg, persona)?;
            let run = PipelineRun::new(cfg, client)?;

            run.ingest()?;
            run.cluster()?;
            run.generate()?;
            run.hypothesize()?;
            let rows = run.validate()?;

            let mut warnings = Vec::new();
            let mut contexts = Vec::new();
            for row in &rows {
                // contexts are persona categories; skip the injected one
                if row.context_id == persona.key {
                    continue;
                }
                let judged = if row.validated {
                    judge_match(&persona.phrasing, &row.text, &run.client, &mut warnings)?
                } else {
                    false
                };
                contexts.push(ContextRecovery {
                    query_key: row.context_id.clone(),
                    validated: row.validated,
                    judged_match: judged,
                    auc_within: Some(row.auc_within),
                });
            }
            if !warnings.is_empty() {
                let path = options.output_dir.join(format!("{run_id}.warnings.log"));
                std::fs::write(&path, warnings.join("\n"))
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
            }
            runs.push(InjectedRun {
                injected_key: persona.key.clone(),
                run_index: repeat,
                contexts,
            });
            // keep the per-run ledger next to the recovery artifacts
            let _ = report::read_ledger(&run.path(LEDGER_FILE))?;
        }
    }

    let table = recovery_metrics(&runs)?;
    emit_recovery_tables(&table, &options.output_dir)?;
    Ok(table)
}

/// Write outcome rows, the per-persona recoverability/elicitation table,
/// and the heatmap grid.
pub fn emit_recovery_tables(table: &RecoveryTable, dir: &Path) -> Result<()> {
    let path = dir.join(RECOVERY_OUTCOMES_FILE);
    let mut out = std::fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    for outcome in &table.outcomes {
        writeln!(out, "{}", serde_json::to_string(outcome).expect("outcome serializes"))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }

    let path = dir.join(RECOVERY_TABLE_FILE);
    let mut out = std::fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    writeln!(out, "persona\trecoverability\telicitation")
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let keys: std::collections::BTreeSet<&String> = table
        .recoverability
        .keys()
        .chain(table.elicitation.keys())
        .collect();
    for key in keys {
        let rec = table
            .recoverability
            .get(key)
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "N/A".into());
        let elic = table
            .elicitation
            .get(key)
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "N/A".into());
        writeln!(out, "{key}\t{rec}\t{elic}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }

    let path = dir.join(HEATMAP_FILE);
    let mut out = std::fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut injected: Vec<&String> = Vec::new();
    let mut queries: Vec<&String> = Vec::new();
    for (inj, q) in table.heatmap.keys() {
        if !injected.contains(&inj) {
            injected.push(inj);
        }
        if !queries.contains(&q) {
            queries.push(q);
        }
    }
    injected.sort();
    queries.sort();
    let header: Vec<String> = std::iter::once("injected\\query".to_string())
        .chain(queries.iter().map(|q| (*q).clone()))
        .collect();
    writeln!(out, "{}", header.join("\t")).map_err(|e| Error::io(path.display().to_string(), e))?;
    for inj in &injected {
        let mut cells = vec![(*inj).clone()];
        for q in &queries {
            let cell = table
                .heatmap
                .get(&((*inj).clone(), (*q).clone()))
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "N/A".into());
            cells.push(cell);
        }
        writeln!(out, "{}", cells.join("\t")).map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

/// Mock client factory: scripted subject/discriminator channel whose
/// marker and phrasing follow the injected persona.
pub fn mock_client_factory(
    backend_seed: u64,
) -> impl Fn(&RunConfig, &PersonaSpec) -> Result<LlmClient> {
    move |cfg: &RunConfig, persona: &PersonaSpec| {
        let spec = MockModelSpec {
            marker: format!("tok-{}", persona.key.to_ascii_lowercase()),
            m1_injection_rate: 0.1,
            m2_injection_rate: 0.9,
            base_vocabulary: ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            score_if_marker: 15.0,
            score_if_absent: 85.0,
            noise_sd: 5.0,
            injected_phrasing: persona.phrasing.clone(),
        };
        let backend: Arc<dyn Backend> = Arc::new(MockBackend::new(
            spec,
            seeding::derive_seed(backend_seed, "mock_backend", &cfg.run_id),
        )?);
        build_client_with_backend(cfg, backend)
    }
}

/// Per-persona mock statement bank: every persona key becomes a context.
pub fn write_mock_persona_bank(path: &Path, personas: &[PersonaSpec], prompts_each: usize) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    for persona in personas {
        for i in 0..prompts_each {
            let row = serde_json::json!({
                "statement": format!("Someone {} would agree with statement {i}.", persona.phrasing.trim_end_matches('.')),
                "behavior": persona.key,
            });
            writeln!(out, "{row}").map_err(|e| Error::io(path.display().to_string(), e))?;
        }
    }
    Ok(())
}

/// Summary counts used by the CLI's closing output.
pub fn recovery_headline(table: &RecoveryTable) -> BTreeMap<String, String> {
    let mut headline = BTreeMap::new();
    let runs = table.outcomes.len();
    let recovered = table.outcomes.iter().filter(|o| o.run_recovered).count();
    let mean_fraction = if runs == 0 {
        0.0
    } else {
        table.outcomes.iter().map(|o| o.fraction_recovered).sum::<f64>() / runs as f64
    };
    headline.insert("runs".into(), runs.to_string());
    headline.insert("runs_recovered".into(), recovered.to_string());
    headline.insert(
        "mean_fraction_recovered".into(),
        format!("{mean_fraction:.3}"),
    );
    headline.insert(
        "recovered_ge18_runs".into(),
        table
            .outcomes
            .iter()
            .filter(|o| o.recovered_ge18)
            .count()
            .to_string(),
    );
    headline
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::mock_run_config;

    #[test]
    fn mock_recovery_campaign_recovers_global_marker() {
        let dir = tempfile::tempdir().unwrap();
        let personas: Vec<PersonaSpec> = harness::builtin_personas().into_iter().take(4).collect();
        let bank = dir.path().join("persona_bank.jsonl");
        write_mock_persona_bank(&bank, &personas, 10).unwrap();

        let base = mock_run_config(&dir.path().join("unused"), &bank, "base", 3, 16);
        let options = SyntheticOptions {
            personas: personas.iter().map(|p| p.key.clone()).take(2).collect(),
            repeats: 1,
            output_dir: dir.path().join("synthetic"),
        };
        let table = run_recovery(&base, &options, &mock_client_factory(77)).unwrap();
        assert_eq!(table.outcomes.len(), 2);
        for outcome in &table.outcomes {
            assert!(outcome.run_recovered, "global marker should recover");
            assert!(outcome.fraction_recovered > 0.9, "fraction {}", outcome.fraction_recovered);
        }
        assert!(dir.path().join("synthetic").join(RECOVERY_TABLE_FILE).exists());
        assert!(dir.path().join("synthetic").join(HEATMAP_FILE).exists());
        let headline = recovery_headline(&table);
        assert_eq!(headline["runs"], "2");
        assert_eq!(headline["runs_recovered"], "2");
    }

    #[test]
    fn unknown_persona_key_rejected() {
        let options = SyntheticOptions {
            personas: vec!["no-such-persona".into()],
            repeats: 1,
            output_dir: PathBuf::from("x"),
        };
        assert!(selected_personas(&options).is_err());
    }
}
