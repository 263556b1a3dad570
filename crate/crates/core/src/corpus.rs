//! Probe-dataset ingestion: raw statements/questions/prefixes rendered into
//! formatted prompts.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::templates;

/// Origin of a prompt bank; selects the formatting template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceDataset {
    Persona,
    Truthfulqa,
    Bold,
    Custom,
}

impl fmt::Display for SourceDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SourceDataset::Persona => "persona",
            SourceDataset::Truthfulqa => "truthfulqa",
            SourceDataset::Bold => "bold",
            SourceDataset::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SourceDataset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "persona" => Ok(SourceDataset::Persona),
            "truthfulqa" => Ok(SourceDataset::Truthfulqa),
            "bold" => Ok(SourceDataset::Bold),
            "custom" => Ok(SourceDataset::Custom),
            other => Err(Error::InvalidInput(format!("unknown dataset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt_id: String,
    pub source_dataset: SourceDataset,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub formatted_text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptBank {
    pub bank_id: String,
    pub dataset: SourceDataset,
    pub records: Vec<PromptRecord>,
    pub has_predefined_categories: bool,
}

/// Byte-exact template application for a dataset. Custom datasets pass
/// through unchanged; whitespace in `raw_text` is preserved verbatim.
pub fn format_prompt(raw_text: &str, dataset: SourceDataset) -> Result<String> {
    if raw_text.is_empty() {
        return Err(Error::InvalidInput("raw prompt text is empty".into()));
    }
    Ok(match dataset {
        SourceDataset::Persona => {
            templates::fill(templates::PERSONA_PROMPT_TEMPLATE, "statement", raw_text)
        }
        SourceDataset::Truthfulqa => {
            templates::fill(templates::TRUTHFULQA_PROMPT_TEMPLATE, "question", raw_text)
        }
        SourceDataset::Bold => templates::fill(templates::BOLD_PROMPT_TEMPLATE, "prompt", raw_text),
        SourceDataset::Custom => raw_text.to_string(),
    })
}

/// Field mapping for input files: structured records (one JSON object per
/// line) or delimiter-separated tables with a header row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParseSpec {
    /// Name of the raw-text field/column.
    pub text_field: String,
    /// Optional category field/column.
    #[serde(default)]
    pub category_field: Option<String>,
    /// Column delimiter for tabular files; `None` means JSON lines.
    #[serde(default)]
    pub delimiter: Option<char>,
}

fn content_hash(dataset: SourceDataset, raw_text: &str, category: Option<&str>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(dataset.to_string().as_bytes());
    hasher.update([0u8]);
    hasher.update(raw_text.as_bytes());
    if let Some(c) = category {
        hasher.update([0u8]);
        hasher.update(c.as_bytes());
    }
    let digest = hasher.finalize();
    digest[..4].iter().map(|b| format!("{b:02x}")).collect()
}

fn derive_prompt_id(dataset: SourceDataset, row: usize, raw: &str, category: Option<&str>) -> String {
    format!("{dataset}-{row:06}-{}", content_hash(dataset, raw, category))
}

/// Load a prompt bank from a UTF-8 text file, one record per row.
pub fn load_bank(path: &Path, dataset: SourceDataset, parse_spec: &ParseSpec) -> Result<PromptBank> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);

    let mut records = Vec::new();
    let mut header: Option<Vec<String>> = None;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (raw_text, category) = match parse_spec.delimiter {
            None => parse_json_row(&line, parse_spec, line_no)?,
            Some(delim) => {
                let cells: Vec<String> = line.split(delim).map(|c| c.to_string()).collect();
                match &header {
                    None => {
                        header = Some(cells);
                        continue;
                    }
                    Some(columns) => parse_table_row(columns, &cells, parse_spec, line_no)?,
                }
            }
        };
        let row = records.len();
        let prompt_id = derive_prompt_id(dataset, row, &raw_text, category.as_deref());
        let formatted_text = format_prompt(&raw_text, dataset)?;
        records.push(PromptRecord {
            prompt_id,
            source_dataset: dataset,
            raw_text,
            category,
            formatted_text,
        });
    }
    if records.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no records found in {}",
            path.display()
        )));
    }
    let mut seen = BTreeMap::new();
    for r in &records {
        if let Some(prev) = seen.insert(r.prompt_id.clone(), &r.raw_text) {
            return Err(Error::Inconsistent(format!(
                "duplicate derived prompt_id {} (rows with text {:?} / {:?})",
                r.prompt_id, prev, r.raw_text
            )));
        }
    }
    let has_predefined_categories = records
        .iter()
        .all(|r| r.category.as_deref().is_some_and(|c| !c.is_empty()));
    let bank_id = format!(
        "{dataset}-{}",
        content_hash(dataset, &records.len().to_string(), None)
    );
    Ok(PromptBank {
        bank_id,
        dataset,
        records,
        has_predefined_categories,
    })
}

fn parse_json_row(line: &str, spec: &ParseSpec, line_no: usize) -> Result<(String, Option<String>)> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        context: format!("bank line {}", line_no + 1),
        detail: e.to_string(),
    })?;
    let raw = value
        .get(&spec.text_field)
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::MissingField {
            field: spec.text_field.clone(),
            context: format!("bank line {}", line_no + 1),
        })?
        .to_string();
    let category = match &spec.category_field {
        None => None,
        Some(field) => Some(
            value
                .get(field)
                .and_then(|v| v.as_str())
                .ok_or_else(|| Error::MissingField {
                    field: field.clone(),
                    context: format!("bank line {}", line_no + 1),
                })?
                .to_string(),
        ),
    };
    Ok((raw, category))
}

fn parse_table_row(
    columns: &[String],
    cells: &[String],
    spec: &ParseSpec,
    line_no: usize,
) -> Result<(String, Option<String>)> {
    let find = |field: &str| -> Result<String> {
        let idx = columns
            .iter()
            .position(|c| c == field)
            .ok_or_else(|| Error::MissingField {
                field: field.to_string(),
                context: "table header".to_string(),
            })?;
        cells.get(idx).cloned().ok_or_else(|| Error::MissingField {
            field: field.to_string(),
            context: format!("bank line {}", line_no + 1),
        })
    };
    let raw = find(&spec.text_field)?;
    let category = match &spec.category_field {
        None => None,
        Some(field) => Some(find(field)?),
    };
    Ok((raw, category))
}

/// Write a bank as one JSON record per line.
pub fn save_bank(bank: &PromptBank, path: &Path) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let header = serde_json::json!({
        "bank_id": bank.bank_id,
        "dataset": bank.dataset,
        "has_predefined_categories": bank.has_predefined_categories,
    });
    writeln!(out, "{header}").map_err(|e| Error::io(path.display().to_string(), e))?;
    for record in &bank.records {
        let line = serde_json::to_string(record).map_err(|e| Error::Parse {
            context: "bank serialization".into(),
            detail: e.to_string(),
        })?;
        writeln!(out, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

/// Reload a bank written by [`save_bank`].
pub fn read_bank(path: &Path) -> Result<PromptBank> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Parse {
            context: path.display().to_string(),
            detail: "empty bank file".into(),
        })?
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let header: serde_json::Value = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut records = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PromptRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            detail: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(PromptBank {
        bank_id: header["bank_id"].as_str().unwrap_or_default().to_string(),
        dataset: serde_json::from_value(header["dataset"].clone()).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            detail: e.to_string(),
        })?,
        has_predefined_categories: header["has_predefined_categories"].as_bool().unwrap_or(false),
        records,
    })
}
