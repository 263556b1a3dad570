//! Deterministic statistics engine: rank statistics, FDR control, power
//! planning, and the agreement/calibration/diversity metrics.
//!
//! Every operation is pure; same inputs give bit-identical outputs.

pub mod auc_mwu;
pub mod bh;
pub mod metrics;
pub mod normal;
pub mod power;
pub mod ranks;
pub mod saffron;

pub use auc_mwu::{auc, mwu_one_sided, ScoreSample, TestOutcome};
pub use bh::bh_reject;
pub use metrics::{
    brier, cohen_kappa, fleiss_kappa, jaccard_top_fraction, pearson, spearman,
    unigram_jaccard_diversity, variance_decomposition, wilcoxon_signed_rank_one_sided,
    Observation, VarianceDecomposition, WilcoxonOutcome,
};
pub use normal::{phi, phi_bar, phi_inv};
pub use power::{min_detectable_auc, min_significant_auc, required_judgments};
pub use saffron::{saffron_step, SaffronParams, SaffronState};
