//! Precomputed token embeddings from an external text encoder.
//!
//! One JSON object per line:
//! `{"prompt_id": str, "text": str, "dim": int, "token_embeddings": [[f64; dim], ...]}`.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PromptError, PromptTokens};
use crate::numerics::Mat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalRecord {
    pub prompt_id: String,
    pub text: String,
    pub dim: usize,
    pub token_embeddings: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExternalPrompt {
    pub prompt_id: String,
    pub text: String,
    pub tokens: PromptTokens,
}

impl ExternalRecord {
    fn into_prompt(self, line: usize, expected_dim: Option<usize>) -> Result<ExternalPrompt, PromptError> {
        let schema = |msg: String| PromptError::Schema { line, msg };
        if self.token_embeddings.is_empty() {
            return Err(schema(format!("prompt {:?} has no token embeddings", self.prompt_id)));
        }
        if let Some(dim) = expected_dim {
            if dim != self.dim {
                return Err(schema(format!("dim {} differs from earlier records ({dim})", self.dim)));
            }
        }
        if let Some((i, t)) = self.token_embeddings.iter().enumerate().find(|(_, t)| t.len() != self.dim) {
            return Err(schema(format!("token {i} has {} values, declared dim {}", t.len(), self.dim)));
        }
        let rows = self.token_embeddings.len();
        let values = self.token_embeddings.into_iter().flatten().collect();
        let embeddings = Mat::from_vec(rows, self.dim, values).map_err(|e| schema(e.to_string()))?;
        Ok(ExternalPrompt { prompt_id: self.prompt_id, text: self.text, tokens: PromptTokens::External { embeddings } })
    }
}

pub fn parse_external_embeddings(reader: impl BufRead) -> Result<Vec<ExternalPrompt>, PromptError> {
    let mut out: Vec<ExternalPrompt> = Vec::new();
    let mut dim = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| PromptError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ExternalRecord = serde_json::from_str(&line)
            .map_err(|e| PromptError::Schema { line: line_no, msg: e.to_string() })?;
        let record_dim = record.dim;
        out.push(record.into_prompt(line_no, dim)?);
        dim = Some(record_dim);
    }
    if out.is_empty() {
        return Err(PromptError::Schema { line: 0, msg: "no records".into() });
    }
    Ok(out)
}

pub fn read_external_embeddings(path: impl AsRef<Path>) -> Result<Vec<ExternalPrompt>, PromptError> {
    let file = File::open(path.as_ref()).map_err(|e| PromptError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_external_embeddings(BufReader::new(file))
}

pub fn write_external_embeddings(path: impl AsRef<Path>, records: &[ExternalRecord]) -> Result<(), PromptError> {
    let mut file = File::create(path.as_ref()).map_err(|e| PromptError::Io(e.to_string()))?;
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| PromptError::Io(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| PromptError::Io(e.to_string()))?;
    }
    Ok(())
}
