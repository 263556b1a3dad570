//! Run ledger, metrics tables and summary artifacts in stable formats.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statcore::bh_reject;

/// One hypothesis-level ledger row; `(run_id, dataset, intervention,
/// hypothesis_id)` is unique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedgerRow {
    pub run_id: String,
    pub dataset: String,
    pub intervention: String,
    pub hypothesis_id: String,
    pub context_id: String,
    pub text: String,
    pub n_judgments: usize,
    pub auc_within: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc_cross: Option<f64>,
    pub p_value: f64,
    pub validated: bool,
    pub degenerate: bool,
}

/// Write ledger rows as one JSON record per line, stable field order.
pub fn emit_ledger(rows: &[RunLedgerRow], path: &Path) -> Result<()> {
    let mut seen = BTreeMap::new();
    for row in rows {
        let key = (
            row.run_id.clone(),
            row.dataset.clone(),
            row.intervention.clone(),
            row.hypothesis_id.clone(),
        );
        if seen.insert(key.clone(), ()).is_some() {
            return Err(Error::Inconsistent(format!(
                "duplicate ledger key {key:?}"
            )));
        }
    }
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| Error::Parse {
            context: "ledger serialization".into(),
            detail: e.to_string(),
        })?;
        writeln!(out, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

pub fn read_ledger(path: &Path) -> Result<Vec<RunLedgerRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            detail: e.to_string(),
        })?);
    }
    Ok(rows)
}

/// Re-check from the ledger alone that every validated row passes the BH
/// step-up within its (run, dataset) family.
pub fn check_ledger_verdicts(rows: &[RunLedgerRow], q: f64) -> Result<()> {
    let mut families: BTreeMap<(String, String), Vec<&RunLedgerRow>> = BTreeMap::new();
    for row in rows {
        families
            .entry((row.run_id.clone(), row.dataset.clone()))
            .or_default()
            .push(row);
    }
    for ((run_id, dataset), family) in families {
        let pvalues: Vec<f64> = family.iter().map(|r| r.p_value).collect();
        let verdicts = bh_reject(&pvalues, q);
        for (row, verdict) in family.iter().zip(verdicts) {
            if row.validated != verdict {
                return Err(Error::Inconsistent(format!(
                    "ledger row {} in family ({run_id}, {dataset}) has validated={} but BH gives {}",
                    row.hypothesis_id, row.validated, verdict
                )));
            }
        }
    }
    Ok(())
}

/// One metrics cell group for an (intervention, dataset) pair, aggregated
/// across runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub intervention: String,
    pub dataset: String,
    pub runs: usize,
    pub hypothesis_count: f64,
    pub validated_mean: f64,
    /// Population standard deviation across runs.
    pub validated_sd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_within_auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_cross_auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_validated_auc: Option<f64>,
}

fn population_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Aggregate ledger rows into the metrics table. Pure function of the
/// ledger.
pub fn metrics_from_ledger(rows: &[RunLedgerRow]) -> Vec<MetricsRow> {
    let mut groups: BTreeMap<(String, String), BTreeMap<String, Vec<&RunLedgerRow>>> =
        BTreeMap::new();
    for row in rows {
        groups
            .entry((row.intervention.clone(), row.dataset.clone()))
            .or_default()
            .entry(row.run_id.clone())
            .or_default()
            .push(row);
    }
    let mut table = Vec::new();
    for ((intervention, dataset), runs) in groups {
        let mut hyp_counts = Vec::new();
        let mut val_counts = Vec::new();
        let mut within = Vec::new();
        let mut cross = Vec::new();
        let mut min_val: Option<f64> = None;
        for family in runs.values() {
            hyp_counts.push(family.len() as f64);
            let validated: Vec<&&RunLedgerRow> = family.iter().filter(|r| r.validated).collect();
            val_counts.push(validated.len() as f64);
            for row in &validated {
                within.push(row.auc_within);
                if let Some(c) = row.auc_cross {
                    cross.push(c);
                }
                min_val = Some(match min_val {
                    None => row.auc_within,
                    Some(m) => m.min(row.auc_within),
                });
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        table.push(MetricsRow {
            intervention,
            dataset,
            runs: runs.len(),
            hypothesis_count: mean(&hyp_counts),
            validated_mean: mean(&val_counts),
            validated_sd: population_sd(&val_counts),
            mean_within_auc: (!within.is_empty()).then(|| mean(&within)),
            mean_cross_auc: (!cross.is_empty()).then(|| mean(&cross)),
            min_validated_auc: min_val,
        });
    }
    table
}

fn auc_cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.3}"),
        None => "N/A".to_string(),
    }
}

/// Tab-separated metrics file with deterministic column order and
/// formatting; N/A cells when nothing validated.
pub fn emit_metrics(table: &[MetricsRow], path: &Path) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    writeln!(
        out,
        "intervention\tdataset\truns\tn_hyp\tn_val_mean\tn_val_sd\twithin_auc\tcross_auc\tmin_val_auc"
    )
    .map_err(|e| Error::io(path.display().to_string(), e))?;
    for row in table {
        writeln!(
            out,
            "{}\t{}\t{}\t{:.1}\t{:.1}\t{:.1}\t{}\t{}\t{}",
            row.intervention,
            row.dataset,
            row.runs,
            row.hypothesis_count,
            row.validated_mean,
            row.validated_sd,
            auc_cell(row.mean_within_auc),
            auc_cell(row.mean_cross_auc),
            auc_cell(row.min_validated_auc),
        )
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

/// Summary artifacts: verbatim text plus the structured sidecar.
pub fn emit_summary(
    raw: &str,
    sidecar: &impl Serialize,
    text_path: &Path,
    sidecar_path: &Path,
) -> Result<()> {
    std::fs::write(text_path, raw).map_err(|e| Error::io(text_path.display().to_string(), e))?;
    let json = serde_json::to_string_pretty(sidecar).map_err(|e| Error::Parse {
        context: "summary sidecar".into(),
        detail: e.to_string(),
    })?;
    std::fs::write(sidecar_path, json).map_err(|e| Error::io(sidecar_path.display().to_string(), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(run: &str, dataset: &str, hyp: &str, p: f64, validated: bool, auc: f64) -> RunLedgerRow {
        RunLedgerRow {
            run_id: run.into(),
            dataset: dataset.into(),
            intervention: "mock".into(),
            hypothesis_id: hyp.into(),
            context_id: "c0".into(),
            text: "hypothesis text".into(),
            n_judgments: 80,
            auc_within: auc,
            auc_cross: Some(auc - 0.05),
            p_value: p,
            validated,
            degenerate: false,
        }
    }

    #[test]
    fn ledger_round_trip_is_byte_identical() {
        let rows = vec![
            row("r1", "persona", "h1", 0.001, true, 0.9),
            row("r1", "persona", "h2", 0.8, false, 0.52),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        emit_ledger(&rows, &path).unwrap();
        let bytes_first = std::fs::read(&path).unwrap();
        let reloaded = read_ledger(&path).unwrap();
        assert_eq!(rows, reloaded);
        emit_ledger(&reloaded, &path).unwrap();
        assert_eq!(bytes_first, std::fs::read(&path).unwrap());
    }

    #[test]
    fn duplicate_ledger_key_rejected() {
        let rows = vec![
            row("r1", "persona", "h1", 0.1, false, 0.5),
            row("r1", "persona", "h1", 0.2, false, 0.5),
        ];
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_ledger(&rows, &dir.path().join("l.jsonl")).is_err());
    }

    #[test]
    fn verdict_recheck_catches_tampering() {
        let rows = vec![
            row("r1", "persona", "h1", 0.001, true, 0.9),
            row("r1", "persona", "h2", 0.9, false, 0.5),
        ];
        check_ledger_verdicts(&rows, 0.05).unwrap();
        let mut tampered = rows.clone();
        tampered[1].validated = true;
        assert!(check_ledger_verdicts(&tampered, 0.05).is_err());
    }

    #[test]
    fn metrics_mean_and_population_sd() {
        // validated counts {12, 13, 13} -> mean 12.7, population sd 0.47
        let mut rows = Vec::new();
        for (run, validated_count) in [("r1", 12usize), ("r2", 13), ("r3", 13)] {
            for i in 0..15 {
                rows.push(row(
                    run,
                    "persona",
                    &format!("{run}-h{i}"),
                    if i < validated_count { 0.0001 } else { 0.9 },
                    i < validated_count,
                    0.8,
                ));
            }
        }
        let table = metrics_from_ledger(&rows);
        assert_eq!(table.len(), 1);
        let cell = &table[0];
        assert!((cell.validated_mean - 38.0 / 3.0).abs() < 1e-12);
        assert!((cell.validated_sd - 0.4714045207910317).abs() < 1e-12);
        assert_eq!(format!("{:.1}", cell.validated_mean), "12.7");
        assert_eq!(format!("{:.1}", cell.validated_sd), "0.5");
    }

    #[test]
    fn zero_validated_renders_na() {
        let rows = vec![row("r1", "persona", "h1", 0.9, false, 0.5)];
        let table = metrics_from_ledger(&rows);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.tsv");
        emit_metrics(&table, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with("N/A\tN/A\tN/A"));
    }

    #[test]
    fn metrics_are_pure_function_of_ledger() {
        let rows = vec![
            row("r1", "persona", "h1", 0.001, true, 0.9),
            row("r1", "bold", "h2", 0.002, true, 0.8),
        ];
        let a = metrics_from_ledger(&rows);
        let b = metrics_from_ledger(&rows);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
