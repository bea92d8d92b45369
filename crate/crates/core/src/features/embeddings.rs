use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("line {line}: expected {expected} values, found {found}")]
    DimMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: bad number {token:?}")]
    BadNumber { line: usize, token: String },
    #[error("embedding table is empty")]
    Empty,
    #[error("cosine of a zero vector")]
    ZeroVector,
    #[error("vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Word vectors keyed by lower-cased word.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: HashMap::new(),
        }
    }

    /// Parses `word v1 v2 ... vD` lines. The first row fixes `D`; for words
    /// that differ only in case the first row wins.
    pub fn parse_text(text: &str) -> Result<Self, EmbeddingError> {
        let mut table: Option<Self> = None;
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values = parts
                .map(|t| {
                    t.parse::<f64>().map_err(|_| EmbeddingError::BadNumber {
                        line: i + 1,
                        token: t.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let t = table.get_or_insert_with(|| Self::new(values.len()));
            if values.len() != t.dim {
                return Err(EmbeddingError::DimMismatch {
                    line: i + 1,
                    expected: t.dim,
                    found: values.len(),
                });
            }
            t.entries.entry(word.to_lowercase()).or_insert(values);
        }
        table.ok_or(EmbeddingError::Empty)
    }

    pub fn to_text(&self) -> String {
        let mut words: Vec<&String> = self.entries.keys().collect();
        words.sort();
        let mut out = String::new();
        for w in words {
            out.push_str(w);
            for v in &self.entries[w] {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<(), EmbeddingError> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimMismatch {
                line: 0,
                expected: self.dim,
                found: vector.len(),
            });
        }
        self.entries.insert(word.to_lowercase(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    /// Vocabulary in sorted order.
    pub fn words(&self) -> Vec<&str> {
        let mut w: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        w.sort_unstable();
        w
    }
}

/// Mean of the in-vocabulary vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub vector: Vec<f64>,
    pub in_vocab: usize,
}

impl Pooled {
    /// True when no token was found, in which case `vector` is all zeros.
    pub fn all_oov(&self) -> bool {
        self.in_vocab == 0
    }
}

pub fn mean_pool<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Pooled {
    let mut sum = vec![0.0; table.dim()];
    let mut n = 0usize;
    for tok in tokens {
        if let Some(v) = table.get(tok.as_ref()) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            n += 1;
        }
    }
    if n > 0 {
        for s in &mut sum {
            *s /= n as f64;
        }
    }
    Pooled {
        vector: sum,
        in_vocab: n,
    }
}

/// Average word embedding of an action. Out-of-vocabulary words are skipped.
pub fn action_embedding<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Pooled {
    mean_pool(tokens, table)
}

/// Average POS-tag embedding; tags missing from the table are skipped.
pub fn pos_embedding(tags: &[crate::extraction::PosTag], table: &EmbeddingTable) -> Pooled {
    let names: Vec<&str> = tags.iter().map(|t| t.as_str()).collect();
    mean_pool(&names, table)
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::LengthMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Sentence-level and action-level context vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextFeatures {
    pub sentence_before: Vec<f64>,
    pub sentence_after: Vec<f64>,
    pub action_prev: Vec<f64>,
    pub action_next: Vec<f64>,
}

fn is_word(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

/// Context of an action occupying `span` of `sentence`: mean embeddings of
/// up to `window` words on each side within the sentence, and the pooled
/// embeddings of the neighbouring actions (zeros when there is none).
pub fn context_features<S: AsRef<str>>(
    sentence: &[S],
    span: (usize, usize),
    prev_action: Option<&[S]>,
    next_action: Option<&[S]>,
    table: &EmbeddingTable,
    window: usize,
) -> ContextFeatures {
    let (start, end) = (span.0.min(sentence.len()), span.1.min(sentence.len()));
    let before: Vec<&str> = sentence[..start]
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| is_word(t))
        .collect();
    let before = &before[before.len().saturating_sub(window)..];
    let after: Vec<&str> = sentence[end..]
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| is_word(t))
        .take(window)
        .collect();
    let zeros = || vec![0.0; table.dim()];
    ContextFeatures {
        sentence_before: mean_pool(before, table).vector,
        sentence_after: mean_pool(&after, table).vector,
        action_prev: prev_action.map_or_else(zeros, |a| mean_pool(a, table).vector),
        action_next: next_action.map_or_else(zeros, |a| mean_pool(a, table).vector),
    }
}
