//! Prompt embedding and semantic context construction.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::PromptBank;
use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::llmclient::{EmbedRequest, LlmClient, Role};
use crate::templates;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub prompt_id: String,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextMode {
    Predefined,
    Clustered,
}

/// Partition of a bank into semantic contexts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextSet {
    pub contexts: BTreeMap<String, Vec<String>>,
    pub mode: ContextMode,
    pub p: usize,
}

impl ContextSet {
    /// Disjointness plus full coverage against the owning bank.
    pub fn check_partition(&self, bank: &PromptBank) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (context_id, prompts) in &self.contexts {
            if prompts.is_empty() {
                return Err(Error::Inconsistent(format!(
                    "context {context_id} is empty"
                )));
            }
            for p in prompts {
                if let Some(previous) = seen.insert(p.clone(), context_id.clone()) {
                    return Err(Error::Inconsistent(format!(
                        "prompt {p} appears in contexts {previous} and {context_id}"
                    )));
                }
            }
        }
        if seen.len() != bank.records.len() {
            return Err(Error::Inconsistent(format!(
                "contexts cover {} prompts but the bank holds {}",
                seen.len(),
                bank.records.len()
            )));
        }
        for record in &bank.records {
            if !seen.contains_key(&record.prompt_id) {
                return Err(Error::Inconsistent(format!(
                    "prompt {} missing from every context",
                    record.prompt_id
                )));
            }
        }
        Ok(())
    }
}

/// Embed every prompt with the instruction-prefixed request.
pub fn embed_prompts(bank: &PromptBank, client: &LlmClient) -> Result<Vec<EmbeddingVector>> {
    if bank.records.is_empty() {
        return Err(Error::InvalidInput("cannot embed an empty bank".into()));
    }
    let mut vectors = Vec::with_capacity(bank.records.len());
    let mut dim: Option<usize> = None;
    for record in &bank.records {
        let text = templates::fill(
            templates::EMBED_TEMPLATE,
            "text_to_embed",
            &record.formatted_text,
        );
        let (values, _usage) = client
            .embed(Role::Embedder, "cluster", &EmbedRequest { text, nonce: None })
            .map_err(|e| match e {
                Error::Client { detail, .. } => Error::Client {
                    role: format!("embedder (prompt {})", record.prompt_id),
                    detail,
                },
                other => other,
            })?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Inconsistent(format!(
                "non-finite embedding for prompt {}",
                record.prompt_id
            )));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Inconsistent(format!(
                    "embedding dimension changed from {d} to {} at prompt {}",
                    values.len(),
                    record.prompt_id
                )))
            }
            _ => {}
        }
        vectors.push(EmbeddingVector {
            prompt_id: record.prompt_id.clone(),
            values,
        });
    }
    Ok(vectors)
}

fn l2_normalize(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / norm).collect()
    }
}

/// Group prompts into contexts: by stored category, or by seeded k-means
/// over L2-normalized embeddings.
pub fn build_contexts(
    bank: &PromptBank,
    embeddings: Option<&[EmbeddingVector]>,
    mode: ContextMode,
    p: usize,
    seed: u64,
    n_init: usize,
) -> Result<ContextSet> {
    let set = match mode {
        ContextMode::Predefined => {
            if !bank.has_predefined_categories {
                return Err(Error::InvalidInput(
                    "predefined contexts requested but the bank has no categories".into(),
                ));
            }
            let mut contexts: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for record in &bank.records {
                let category = record.category.clone().expect("categories checked above");
                contexts.entry(category).or_default().push(record.prompt_id.clone());
            }
            let p = contexts.len();
            ContextSet {
                contexts,
                mode,
                p,
            }
        }
        ContextMode::Clustered => {
            if p == 0 {
                return Err(Error::InvalidInput("cluster count must be >= 1".into()));
            }
            let embeddings = embeddings.ok_or_else(|| {
                Error::InvalidInput("clustered contexts require embeddings".into())
            })?;
            if embeddings.len() != bank.records.len() {
                return Err(Error::Inconsistent(format!(
                    "{} embeddings for {} prompts",
                    embeddings.len(),
                    bank.records.len()
                )));
            }
            let points: Vec<Vec<f64>> =
                embeddings.iter().map(|e| l2_normalize(&e.values)).collect();
            let fit = kmeans(&points, p, seed, n_init)?;
            let width = (p.max(2) as f64).log10().ceil() as usize;
            let mut contexts: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for (embedding, &cluster) in embeddings.iter().zip(&fit.assignment) {
                contexts
                    .entry(format!("c{cluster:0width$}"))
                    .or_default()
                    .push(embedding.prompt_id.clone());
            }
            if contexts.len() != p {
                return Err(Error::Inconsistent(format!(
                    "clustering produced {} non-empty contexts for p = {p}",
                    contexts.len()
                )));
            }
            ContextSet {
                contexts,
                mode,
                p,
            }
        }
    };
    set.check_partition(bank)?;
    Ok(set)
}

/// Persist a context set, one `{context_id, prompt_ids}` record per line.
pub fn save_contexts(set: &ContextSet, path: &Path) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let header = serde_json::json!({"mode": set.mode, "p": set.p});
    writeln!(out, "{header}").map_err(|e| Error::io(path.display().to_string(), e))?;
    for (context_id, prompt_ids) in &set.contexts {
        let line = serde_json::json!({"context_id": context_id, "prompt_ids": prompt_ids});
        writeln!(out, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

pub fn read_contexts(path: &Path) -> Result<ContextSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Parse {
            context: path.display().to_string(),
            detail: "empty context file".into(),
        })?
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let header: serde_json::Value = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let mode: ContextMode = serde_json::from_value(header["mode"].clone()).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let p = header["p"].as_u64().unwrap_or(0) as usize;
    let mut contexts = BTreeMap::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let context_id = value["context_id"].as_str().unwrap_or_default().to_string();
        let prompt_ids: Vec<String> = serde_json::from_value(value["prompt_ids"].clone())
            .map_err(|e| Error::Parse {
                context: path.display().to_string(),
                detail: e.to_string(),
            })?;
        contexts.insert(context_id, prompt_ids);
    }
    Ok(ContextSet { contexts, mode, p })
}
