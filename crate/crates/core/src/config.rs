//! Run configuration: one structured file determines a replay run
//! completely (credentials excepted).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::SourceDataset;
use crate::embedcluster::ContextMode;
use crate::error::{Error, Result};
use crate::genpair::DecodingConfig;
use crate::llmclient::{Role, RoleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Live,
    Record,
    Replay,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub dataset: SourceDataset,
    pub text_field: String,
    #[serde(default)]
    pub category_field: Option<String>,
    #[serde(default)]
    pub delimiter: Option<char>,
    pub context_mode: ContextMode,
    /// Cluster count for clustered mode; ignored for predefined.
    #[serde(default)]
    pub p: usize,
}

/// Default cluster counts per source: Persona categories are predefined;
/// TruthfulQA and BOLD cluster into 15 and 50.
pub fn default_context_count(dataset: SourceDataset) -> usize {
    match dataset {
        SourceDataset::Persona => 135,
        SourceDataset::Truthfulqa => 15,
        SourceDataset::Bold => 50,
        SourceDataset::Custom => 10,
    }
}

/// Held-out judgment budgets per experimental setting.
pub fn default_judgments_for_intervention(intervention: &str) -> usize {
    match intervention.to_ascii_lowercase().as_str() {
        "synthetic" | "synthetic-recovery" => 80,
        "distillation" | "reasoning-distillation" => 120,
        "editing" | "knowledge-editing" => 200,
        "unlearning" => 400,
        _ => 80,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StageParams {
    /// Construction pairs shown to the hypothesizer.
    pub k_pairs: usize,
    /// Held-out judgments per hypothesis (even). 0 selects the
    /// intervention default.
    pub n_judgments: usize,
    /// BH FDR level.
    pub q: f64,
    pub validation_fraction: f64,
    pub diversification: bool,
    pub diversification_n0: u32,
    pub diversification_b: u32,
    pub diversification_k: usize,
    /// Shared evaluation set size for consolidation.
    pub eval_set_size: usize,
    /// Cross-context judgment budget; 0 means "same as n_judgments".
    pub cross_budget: usize,
    /// Reuse within-context judgments for the consolidation score matrix
    /// instead of scoring a fresh shared set.
    pub reuse_stage2_judgments: bool,
    /// Upper end of the discriminator score range.
    pub score_scale_max: f64,
}

impl Default for StageParams {
    fn default() -> Self {
        StageParams {
            k_pairs: 20,
            n_judgments: 0,
            q: 0.05,
            validation_fraction: 0.5,
            diversification: true,
            diversification_n0: 10,
            diversification_b: 10,
            diversification_k: 5,
            eval_set_size: 200,
            cross_budget: 0,
            reuse_stage2_judgments: false,
            score_scale_max: 100.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    pub seed: u64,
    pub intervention: String,
    pub mode: RunMode,
    /// Fixture store; required for record/replay.
    #[serde(default)]
    pub fixtures_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Persona phrasing injected into every M2 prompt (synthetic recovery).
    #[serde(default)]
    pub persona_injection: Option<String>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub decoding: DecodingConfig,
    #[serde(default)]
    pub stages: StageParams,
    pub roles: BTreeMap<Role, RoleConfig>,
}

fn default_in_flight() -> usize {
    4
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() {
            return Err(Error::Config("run_id must be non-empty".into()));
        }
        if !(self.stages.q > 0.0 && self.stages.q < 1.0) {
            return Err(Error::Config(format!("q must lie in (0,1), got {}", self.stages.q)));
        }
        let n = self.judgment_budget();
        if n == 0 || n % 2 != 0 {
            return Err(Error::Config(format!(
                "n_judgments must be even and positive, got {n}"
            )));
        }
        if !(self.stages.validation_fraction > 0.0 && self.stages.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must lie in (0,1)".into()));
        }
        self.decoding.validate().map_err(|e| Error::Config(e.to_string()))?;
        if matches!(self.mode, RunMode::Record | RunMode::Replay) && self.fixtures_dir.is_none() {
            return Err(Error::Config(
                "record/replay modes require fixtures_dir".into(),
            ));
        }
        Ok(())
    }

    /// Effective judgment budget N.
    pub fn judgment_budget(&self) -> usize {
        if self.stages.n_judgments > 0 {
            self.stages.n_judgments
        } else {
            default_judgments_for_intervention(&self.intervention)
        }
    }

    /// Effective cross-context budget M.
    pub fn cross_budget(&self) -> usize {
        if self.stages.cross_budget > 0 {
            self.stages.cross_budget
        } else {
            self.judgment_budget()
        }
    }
}
