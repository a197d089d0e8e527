use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::FoundryError;
use crate::model::{DialogueRecord, Record};

pub const DEFAULT_TAU: f64 = 0.8;

/// Similarity of two chief complaints in [0, 1].
pub trait Similarity: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Lowercased word n-grams with punctuation stripped.
pub fn shingles(text: &str, n: usize) -> BTreeSet<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let words: Vec<&str> = cleaned.split_whitespace().collect();
    if n <= 1 || words.len() < n {
        return words.into_iter().map(str::to_string).collect();
    }
    words.windows(n).map(|w| w.join(" ")).collect()
}

/// Jaccard index over word shingles; two empty texts count as identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordJaccard {
    pub n: usize,
}

impl Default for WordJaccard {
    fn default() -> Self {
        WordJaccard { n: 1 }
    }
}

impl Similarity for WordJaccard {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        let (a, b) = (shingles(a, self.n), shingles(b, self.n));
        let union = a.union(&b).count();
        if union == 0 {
            return 1.0;
        }
        a.intersection(&b).count() as f64 / union as f64
    }
}

/// Maps text to a dense vector.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Vec<f64>;
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Cosine similarity of embeddings.
pub struct EmbeddingCosine<E>(pub E);

impl<E: Embedder> Similarity for EmbeddingCosine<E> {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        cosine(&self.0.embed(a), &self.0.embed(b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropEntry {
    pub id: String,
    pub matched_id: String,
    pub similarity: f64,
}

impl Record for DropEntry {
    const KIND: &'static str = "drop_entry";
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DedupOutcome {
    pub kept: Vec<DialogueRecord>,
    pub dropped: Vec<DropEntry>,
}

/// Greedy scan in id order: a dialogue is dropped when its opening complaint
/// is at least `tau` similar to an already kept one.
pub fn dedup_complaints(
    records: Vec<DialogueRecord>,
    tau: f64,
    similarity: &dyn Similarity,
) -> Result<DedupOutcome, FoundryError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(FoundryError::Precondition(format!("tau {tau} outside (0, 1]")));
    }
    let mut records = records;
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = DedupOutcome::default();
    for record in records {
        let complaint = record.opening_complaint();
        let hit = out
            .kept
            .iter()
            .map(|k| (k, similarity.similarity(k.opening_complaint(), complaint)))
            .find(|(_, s)| *s >= tau);
        match hit {
            Some((kept, s)) => out.dropped.push(DropEntry {
                id: record.id.clone(),
                matched_id: kept.id.clone(),
                similarity: s,
            }),
            None => out.kept.push(record),
        }
    }
    Ok(out)
}
