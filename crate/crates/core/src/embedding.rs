//! Speaker embeddings and their plain-text file format.
//!
//! One vector per line, whitespace-separated decimal reals, with an optional
//! leading `<speaker_id>:` token. Blank lines and lines starting with `#`
//! are skipped.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// A real-valued feature vector produced by an external speaker extractor.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("embedding must have at least one value".into()));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        let norm = self.l2_norm() * other.l2_norm();
        Ok(if norm == 0.0 { 0.0 } else { dot / norm })
    }
}

/// One parsed line of an embedding file.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingLine {
    pub speaker: Option<String>,
    pub embedding: Embedding,
}

pub fn parse_embedding_line(line: &str, line_no: usize) -> Result<EmbeddingLine> {
    let mut tokens = line.split_whitespace().peekable();
    let speaker = match tokens.peek() {
        Some(tok) if tok.ends_with(':') => {
            let id = &tok[..tok.len() - 1];
            if id.is_empty() {
                return Err(Error::parse(line_no, "empty speaker id"));
            }
            let id = id.to_string();
            tokens.next();
            Some(id)
        }
        _ => None,
    };
    let values = tokens
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::parse(line_no, format!("not a number: {tok:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let embedding = Embedding::new(values).map_err(|e| Error::parse(line_no, e.to_string()))?;
    Ok(EmbeddingLine { speaker, embedding })
}

pub fn parse_embedding_file(text: &str) -> Result<Vec<EmbeddingLine>> {
    let mut out = Vec::new();
    let mut dim = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed = parse_embedding_line(line, idx + 1)?;
        match dim {
            None => dim = Some(parsed.embedding.dim()),
            Some(d) if d != parsed.embedding.dim() => {
                return Err(Error::parse(
                    idx + 1,
                    format!("dimension {} differs from earlier lines ({d})", parsed.embedding.dim()),
                ))
            }
            _ => {}
        }
        out.push(parsed);
    }
    Ok(out)
}

pub fn format_embedding_line(speaker: Option<&str>, embedding: &Embedding) -> String {
    let mut out = String::new();
    if let Some(id) = speaker {
        out.push_str(id);
        out.push(':');
    }
    for (i, v) in embedding.values().iter().enumerate() {
        if i > 0 || speaker.is_some() {
            out.push(' ');
        }
        // `{}` on f64 is the shortest representation that parses back exactly.
        write!(out, "{v}").unwrap();
    }
    out
}
