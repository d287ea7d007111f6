//! Add-α smoothed bigram model: the built-in generator and scorer.

use std::collections::HashMap;

use rand::{Rng, RngCore};

use super::{FillBackend, ScoreBackend};
use crate::cnlc::{Item, LinearizedSequence};
use crate::error::GatewayError;
use crate::scalar::Real;

pub const DEFAULT_SMOOTHING: f64 = 1.0;

/// Longest run of words generated for one mask.
pub const MAX_EXPANSION: usize = 3;

type WordId = u32;

/// Unigram and bigram counts with add-α smoothing.
///
/// `P(w) = (c(w) + α) / (C + αV)` and
/// `P(w | v) = (c(v, w) + α) / (c(v, ·) + αV)`, where `V` is the vocabulary
/// size and `c(v, ·)` counts word continuations of `v`. Sentence-final
/// occurrences are tracked separately so generation knows when to stop.
#[derive(Debug, Clone)]
pub struct NgramModel<F> {
    words: Vec<String>,
    index: HashMap<String, WordId>,
    unigram: Vec<u64>,
    total: u64,
    followers: Vec<Vec<(WordId, u64)>>,
    continuations: Vec<u64>,
    finals: Vec<u64>,
    alpha: F,
}

impl<F: Real> NgramModel<F> {
    pub fn train<I, S>(sentences: I, alpha: F) -> Result<Self, GatewayError>
    where
        I: IntoIterator,
        I::Item: AsRef<[S]>,
        S: AsRef<str>,
    {
        if alpha.partial_cmp(&F::zero()) != Some(std::cmp::Ordering::Greater) || !alpha.is_finite() {
            return Err(GatewayError::InvalidSmoothing(alpha.to_f64_lossy()));
        }
        let mut model = NgramModel {
            words: Vec::new(),
            index: HashMap::new(),
            unigram: Vec::new(),
            total: 0,
            followers: Vec::new(),
            continuations: Vec::new(),
            finals: Vec::new(),
            alpha,
        };
        let mut pairs: HashMap<(WordId, WordId), u64> = HashMap::new();
        for sentence in sentences {
            let mut prev: Option<WordId> = None;
            for word in sentence.as_ref() {
                let id = model.intern(word.as_ref());
                model.unigram[id as usize] += 1;
                model.total += 1;
                if let Some(p) = prev {
                    *pairs.entry((p, id)).or_insert(0) += 1;
                    model.continuations[p as usize] += 1;
                }
                prev = Some(id);
            }
            if let Some(p) = prev {
                model.finals[p as usize] += 1;
            }
        }
        if model.total == 0 {
            return Err(GatewayError::EmptyCorpus);
        }
        for ((v, w), c) in pairs {
            model.followers[v as usize].push((w, c));
        }
        for row in &mut model.followers {
            row.sort_unstable();
        }
        Ok(model)
    }

    fn intern(&mut self, word: &str) -> WordId {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.words.len() as WordId;
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), id);
        self.unigram.push(0);
        self.followers.push(Vec::new());
        self.continuations.push(0);
        self.finals.push(0);
        id
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total
    }

    pub fn unigram_count(&self, word: &str) -> u64 {
        self.index.get(word).map_or(0, |&i| self.unigram[i as usize])
    }

    pub fn bigram_count(&self, prev: &str, word: &str) -> u64 {
        match (self.index.get(prev), self.index.get(word)) {
            (Some(&v), Some(&w)) => self.pair(v, w),
            _ => 0,
        }
    }

    pub fn bigram_total(&self) -> u64 {
        self.continuations.iter().sum()
    }

    fn pair(&self, v: WordId, w: WordId) -> u64 {
        let row = &self.followers[v as usize];
        row.binary_search_by_key(&w, |&(id, _)| id).map_or(0, |i| row[i].1)
    }

    pub fn unigram_prob(&self, word: &str) -> F {
        let v = F::of_count(self.words.len());
        let c = F::from_u64(self.unigram_count(word)).unwrap();
        (c + self.alpha) / (F::from_u64(self.total).unwrap() + self.alpha * v)
    }

    pub fn bigram_prob(&self, prev: &str, word: &str) -> F {
        let v = F::of_count(self.words.len());
        let context = self.index.get(prev).map_or(0, |&p| self.continuations[p as usize]);
        let c = F::from_u64(self.bigram_count(prev, word)).unwrap();
        (c + self.alpha) / (F::from_u64(context).unwrap() + self.alpha * v)
    }

    /// Mean per-token log-probability; the first token is scored by its
    /// unigram probability.
    pub fn score(&self, words: &[&str]) -> Result<F, GatewayError> {
        let first = words.first().ok_or(GatewayError::EmptyInput)?;
        let mut total = self.unigram_prob(first).ln();
        for pair in words.windows(2) {
            total = total + self.bigram_prob(pair[0], pair[1]).ln();
        }
        Ok(total / F::of_count(words.len()))
    }

    /// Draw the word after `prev`. With `allow_end`, the draw may instead
    /// end the sentence (returns `None`). Without a known context the
    /// unigram distribution is used.
    pub fn sample_next<R: Rng + ?Sized>(&self, prev: Option<&str>, allow_end: bool, rng: &mut R) -> Option<&str> {
        let alpha = self.alpha.to_f64_lossy();
        let context = prev.and_then(|p| self.index.get(p)).copied();
        let (row, end_weight): (Vec<f64>, f64) = match context {
            Some(v) => {
                let mut weights = vec![alpha; self.words.len()];
                for &(w, c) in &self.followers[v as usize] {
                    weights[w as usize] += c as f64;
                }
                let end = if allow_end {
                    self.finals[v as usize] as f64 + alpha
                } else {
                    0.0
                };
                (weights, end)
            }
            None => (self.unigram.iter().map(|&c| c as f64 + alpha).collect(), 0.0),
        };
        let total: f64 = row.iter().sum::<f64>() + end_weight;
        let mut target = rng.gen::<f64>() * total;
        for (i, w) in row.iter().enumerate() {
            if target < *w {
                return Some(&self.words[i]);
            }
            target -= w;
        }
        if end_weight > 0.0 {
            None
        } else {
            self.words.last().map(String::as_str)
        }
    }
}

pub fn train_ngram<S: AsRef<str>>(sentences: &[Vec<S>]) -> Result<NgramModel<f64>, GatewayError> {
    NgramModel::train(sentences, DEFAULT_SMOOTHING)
}

impl<F: Real> ScoreBackend<F> for NgramModel<F> {
    fn score(&self, words: &[&str]) -> Result<F, GatewayError> {
        NgramModel::score(self, words)
    }
}

/// Mask filler over a bigram model. Each mask expands to 1 to
/// [`MAX_EXPANSION`] words (geometric, p = 0.5), each conditioned on the
/// previous word; after the first word a sampled sentence end stops the
/// expansion early.
#[derive(Debug, Clone)]
pub struct NgramGenerator<F> {
    model: NgramModel<F>,
}

impl<F: Real> NgramGenerator<F> {
    pub fn new(model: NgramModel<F>) -> Self {
        NgramGenerator { model }
    }

    pub fn model(&self) -> &NgramModel<F> {
        &self.model
    }
}

impl<F: Real> FillBackend for NgramGenerator<F> {
    fn fill(&self, seq: &LinearizedSequence, rng: &mut dyn RngCore) -> Result<LinearizedSequence, GatewayError> {
        let mut out: Vec<Item> = Vec::with_capacity(seq.items.len() + 8);
        let mut last_word: Option<String> = None;
        for item in &seq.items {
            if !item.is_mask() {
                if let Item::Word(w) = item {
                    last_word = Some(w.clone());
                }
                out.push(item.clone());
                continue;
            }
            let mut length = 1;
            while length < MAX_EXPANSION && rng.gen_bool(0.5) {
                length += 1;
            }
            for k in 0..length {
                match self.model.sample_next(last_word.as_deref(), k > 0, rng) {
                    Some(w) => {
                        last_word = Some(w.to_string());
                        out.push(Item::Word(w.to_string()));
                    }
                    None => break,
                }
            }
        }
        Ok(LinearizedSequence::new(seq.source_id.clone(), out))
    }
}
