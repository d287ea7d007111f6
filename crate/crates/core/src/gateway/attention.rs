use std::collections::{BTreeSet, HashMap};

use super::AttentionBackend;
use crate::corpus::NestedAnnotation;
use crate::error::GatewayError;
use crate::scalar::Real;
use crate::template::AttentionMap;

/// Stand-in attention without a neural model: token `i` attends to token
/// `j` in proportion to `α +` the number of corpus sentences in which both
/// words occur, each row normalized to sum to 1.
#[derive(Debug, Clone)]
pub struct CooccurrenceAttention<F> {
    index: HashMap<String, u32>,
    pairs: HashMap<(u32, u32), u64>,
    alpha: F,
}

impl<F: Real> CooccurrenceAttention<F> {
    pub fn fit(corpus: &[NestedAnnotation], alpha: F) -> Self {
        let mut index: HashMap<String, u32> = HashMap::new();
        let mut pairs: HashMap<(u32, u32), u64> = HashMap::new();
        for ann in corpus {
            let ids: BTreeSet<u32> = ann
                .words()
                .map(|w| {
                    let next = index.len() as u32;
                    *index.entry(w.to_string()).or_insert(next)
                })
                .collect();
            let ids: Vec<u32> = ids.into_iter().collect();
            for (k, &a) in ids.iter().enumerate() {
                for &b in &ids[k..] {
                    *pairs.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
        CooccurrenceAttention { index, pairs, alpha }
    }

    /// Sentences containing both words; symmetric.
    pub fn cooccurrence(&self, a: &str, b: &str) -> u64 {
        match (self.index.get(a), self.index.get(b)) {
            (Some(&x), Some(&y)) => self.pairs.get(&(x.min(y), x.max(y))).copied().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn map(&self, words: &[&str]) -> AttentionMap<F> {
        let rows: Vec<Vec<F>> = words
            .iter()
            .map(|a| {
                let raw: Vec<F> = words
                    .iter()
                    .map(|b| F::from_u64(self.cooccurrence(a, b)).unwrap() + self.alpha)
                    .collect();
                let sum: F = raw.iter().copied().sum();
                raw.into_iter().map(|w| w / sum).collect()
            })
            .collect();
        AttentionMap::from_rows(rows).expect("normalized rows are stochastic")
    }
}

impl<F: Real> AttentionBackend<F> for CooccurrenceAttention<F> {
    fn attention(&self, ann: &NestedAnnotation) -> Result<AttentionMap<F>, GatewayError> {
        let words: Vec<&str> = ann.words().collect();
        Ok(self.map(&words))
    }
}
