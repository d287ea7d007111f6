//! Sentence retrieval by cosine similarity, and template fusion.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cnlc::{Item, Sentinel};
use crate::corpus::NestedAnnotation;
use crate::error::RetrievalError;
use crate::scalar::Real;
use crate::template::Template;

pub const DEFAULT_MAX_LEN: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: Deserialize<'de>"))]
pub struct SentenceEmbedding<F> {
    pub sentence_id: String,
    pub vector: Vec<F>,
}

impl<F: Real> SentenceEmbedding<F> {
    pub fn new(sentence_id: impl Into<String>, vector: Vec<F>) -> Self {
        SentenceEmbedding {
            sentence_id: sentence_id.into(),
            vector,
        }
    }

    pub fn similarity(&self, other: &Self) -> Result<F, RetrievalError> {
        similarity(&self.vector, &other.vector)
    }
}

/// Cosine similarity. A zero vector is similar to nothing (0).
pub fn similarity<F: Real>(a: &[F], b: &[F]) -> Result<F, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: F = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    let na = a.iter().map(|&x| x * x).sum::<F>().sqrt();
    let nb = b.iter().map(|&x| x * x).sum::<F>().sqrt();
    if na == F::zero() || nb == F::zero() {
        return Ok(F::zero());
    }
    Ok((dot / (na * nb)).max(-F::one()).min(F::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetrievalConfig {
    pub top_n: usize,
}

impl RetrievalConfig {
    pub fn new(top_n: usize) -> Result<Self, RetrievalError> {
        if top_n == 0 {
            Err(RetrievalError::InvalidTopN)
        } else {
            Ok(RetrievalConfig { top_n })
        }
    }
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { top_n: 1 }
    }
}

/// The `top_n` sentences most similar to `query_id`, excluding itself.
/// Higher scores first, ties by ascending sentence id.
pub fn top_n_similar<F: Real>(
    query_id: &str,
    corpus: &[SentenceEmbedding<F>],
    cfg: &RetrievalConfig,
) -> Result<Vec<(String, F)>, RetrievalError> {
    let query = corpus
        .iter()
        .find(|e| e.sentence_id == query_id)
        .ok_or_else(|| RetrievalError::UnknownSentence(query_id.to_string()))?;
    let mut scored = corpus
        .iter()
        .filter(|e| e.sentence_id != query_id)
        .map(|e| Ok((e.sentence_id.clone(), query.similarity(e)?)))
        .collect::<Result<Vec<_>, RetrievalError>>()?;
    rank_neighbors(&mut scored);
    scored.truncate(cfg.top_n);
    Ok(scored)
}

fn rank_neighbors<F: Real>(scored: &mut [(String, F)]) {
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
}

/// TF-IDF bag of lowercased words with smoothed idf
/// `ln((1 + N) / (1 + df)) + 1`, L2-normalized. Words outside the fitted
/// vocabulary are ignored.
#[derive(Debug, Clone)]
pub struct TfIdfEmbedder<F> {
    vocab: BTreeMap<String, usize>,
    idf: Vec<F>,
}

impl<F: Real> TfIdfEmbedder<F> {
    pub fn fit<'a, I, S>(sentences: I) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut n = 0usize;
        for sentence in sentences {
            n += 1;
            let mut seen: Vec<String> = sentence.iter().map(|w| w.as_ref().to_lowercase()).collect();
            seen.sort();
            seen.dedup();
            for w in seen {
                *df.entry(w).or_insert(0) += 1;
            }
        }
        let vocab: BTreeMap<String, usize> = df.keys().cloned().zip(0..).collect();
        let idf = df
            .values()
            .map(|&d| F::of(((1 + n) as f64 / (1 + d) as f64).ln() + 1.0))
            .collect();
        TfIdfEmbedder { vocab, idf }
    }

    pub fn fit_corpus(corpus: &[NestedAnnotation]) -> Self {
        let words: Vec<Vec<&str>> = corpus.iter().map(|a| a.words().collect()).collect();
        Self::fit(words.iter().map(Vec::as_slice))
    }

    pub fn dimension(&self) -> usize {
        self.vocab.len()
    }

    pub fn embed<S: AsRef<str>>(&self, words: &[S]) -> Vec<F> {
        let mut v = vec![F::zero(); self.vocab.len()];
        if words.is_empty() {
            return v;
        }
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for w in words {
            if let Some(&i) = self.vocab.get(&w.as_ref().to_lowercase()) {
                *counts.entry(i).or_insert(0) += 1;
            }
        }
        let len = F::of_count(words.len());
        for (i, c) in counts {
            v[i] = F::of_count(c) / len * self.idf[i];
        }
        let norm = v.iter().map(|&x| x * x).sum::<F>().sqrt();
        if norm > F::zero() {
            for x in &mut v {
                *x = *x / norm;
            }
        }
        v
    }
}

/// Neighbor lists for every sentence of a corpus, computed once.
#[derive(Debug, Clone)]
pub struct RetrievalIndex<F> {
    embeddings: Vec<SentenceEmbedding<F>>,
    neighbors: Vec<Vec<(String, F)>>,
}

impl<F: Real> RetrievalIndex<F> {
    /// Exhaustive pairwise scan; `O(N^2 d)`.
    pub fn build(embeddings: Vec<SentenceEmbedding<F>>, cfg: &RetrievalConfig) -> Result<Self, RetrievalError> {
        let neighbors = embeddings
            .iter()
            .map(|e| top_n_similar(&e.sentence_id, &embeddings, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RetrievalIndex { embeddings, neighbors })
    }

    /// An index that returns no neighbours for any sentence.
    pub fn without_neighbors(embeddings: Vec<SentenceEmbedding<F>>) -> Self {
        let neighbors = vec![Vec::new(); embeddings.len()];
        RetrievalIndex { embeddings, neighbors }
    }

    pub fn embeddings(&self) -> &[SentenceEmbedding<F>] {
        &self.embeddings
    }

    pub fn neighbors(&self, position: usize) -> &[(String, F)] {
        &self.neighbors[position]
    }

    /// Embedding cache: one `{"sentence_id":..,"vector":[..]}` per line.
    pub fn embedding_cache(&self) -> String
    where
        F: Serialize,
    {
        let mut out = String::new();
        for e in &self.embeddings {
            out.push_str(&serde_json::to_string(e).expect("embeddings serialize"));
            out.push('\n');
        }
        out
    }

    /// One `{"query_id":..,"neighbors":[[id,score],..]}` line per sentence,
    /// scores with six decimals.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (e, neighbors) in self.embeddings.iter().zip(&self.neighbors) {
            let list: Vec<String> = neighbors
                .iter()
                .map(|(id, s)| format!("[{},{:.6}]", json_string(id), s.to_f64_lossy()))
                .collect();
            let _ = writeln!(
                out,
                "{{\"query_id\":{},\"neighbors\":[{}]}}",
                json_string(&e.sentence_id),
                list.join(",")
            );
        }
        out
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// Strategy for combining a sentence's template with a similar sentence's.
pub trait Fusion {
    fn fuse(&self, a: &Template, b: &Template, max_len: usize) -> Template;
}

/// `a ++ <fuse> ++ b`, with `b` cut short when the result would exceed
/// `max_len` items. Entities of `b` that lose their closing sentinel to the
/// cut are dropped entirely.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConcatFusion;

impl Fusion for ConcatFusion {
    fn fuse(&self, a: &Template, b: &Template, max_len: usize) -> Template {
        let budget = max_len.saturating_sub(a.items.len() + 1);
        let mut tail: Vec<Item> = b.items.iter().take(budget).cloned().collect();
        if tail.len() < b.items.len() {
            drop_unclosed(&mut tail);
        }
        let mut fused = a.clone();
        fused.items.push(Item::Sentinel(Sentinel::Fuse));
        fused.origins.push(None);
        fused.origins.extend(std::iter::repeat_n(None, tail.len()));
        fused.items.extend(tail);
        fused.partner = Some(b.source_id.clone());
        fused.collapse_masks();
        fused
    }
}

fn drop_unclosed(items: &mut Vec<Item>) {
    let mut open = Vec::new();
    for (i, item) in items.iter().enumerate() {
        match item {
            Item::Sentinel(Sentinel::Open(_)) => open.push(i),
            Item::Sentinel(Sentinel::Close(_)) => {
                open.pop();
            }
            _ => {}
        }
    }
    for i in open.into_iter().rev() {
        items.remove(i);
    }
}

pub fn fuse_templates(a: &Template, b: &Template, max_len: usize) -> Template {
    ConcatFusion.fuse(a, b, max_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnlc::{delinearize, LinearizedSequence};
    use crate::corpus::{Label, Schema, Span};
    use crate::template::{build_template, KeywordSet};

    fn emb(id: &str, v: &[f64]) -> SentenceEmbedding<f64> {
        SentenceEmbedding::new(id, v.to_vec())
    }

    fn ann(id: &str, words: &[&str], spans: &[(usize, usize, &str)]) -> NestedAnnotation {
        let spans = spans
            .iter()
            .map(|&(s, e, l)| Span::new(s, e, Label::new(l).unwrap()))
            .collect();
        NestedAnnotation::new(id, words, spans, &Schema::default()).unwrap()
    }

    #[test]
    fn cosine_basics() {
        assert!((similarity::<f64>(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((similarity::<f64>(&[1.0, 2.0], &[2.0, 1.0]).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(similarity(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            similarity(&[1.0], &[1.0, 2.0]),
            Err(RetrievalError::DimensionMismatch(1, 2))
        ));
        let f32_sim: f32 = similarity(&[1.0f32, 2.0], &[2.0, 1.0]).unwrap();
        assert!((f32_sim - 0.8).abs() < 1e-6);
    }

    #[test]
    fn retrieval_excludes_the_query() {
        let corpus = vec![emb("a", &[1.0, 1.0]), emb("b", &[1.0, 1.0])];
        let got = top_n_similar("a", &corpus, &RetrievalConfig::default()).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].0, "b");
        assert!((got[0].1 - 1.0).abs() < 1e-12);
        let single = vec![emb("a", &[1.0])];
        assert!(top_n_similar("a", &single, &RetrievalConfig::default())
            .unwrap()
            .is_empty());
        assert!(top_n_similar("z", &single, &RetrievalConfig::default()).is_err());
        assert!(RetrievalConfig::new(0).is_err());
    }

    #[test]
    fn ties_break_by_id() {
        let corpus = vec![
            emb("q", &[1.0, 0.0]),
            emb("c", &[2.0, 0.0]),
            emb("a", &[3.0, 0.0]),
            emb("b", &[0.0, 1.0]),
        ];
        let got = top_n_similar("q", &corpus, &RetrievalConfig::new(3).unwrap()).unwrap();
        let ids: Vec<&str> = got.iter().map(|(i, _)| i.as_str()).collect();
        assert_eq!(ids, ["a", "c", "b"]);
    }

    #[test]
    fn tfidf_vectors_are_unit_length() {
        let sentences = [vec!["The", "cat"], vec!["the", "dog"], vec!["a", "cat"]];
        let embedder = TfIdfEmbedder::<f64>::fit(sentences.iter().map(Vec::as_slice));
        assert_eq!(embedder.dimension(), 4);
        let v = embedder.embed(&["the", "cat"]);
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(embedder.embed(&["zebra"]).iter().all(|&x| x == 0.0));
        let same = embedder.embed(&["THE", "CAT"]);
        assert_eq!(v, same);
    }

    #[test]
    fn report_prints_six_decimals() {
        let index = RetrievalIndex::build(
            vec![emb("a", &[1.0, 2.0]), emb("b", &[2.0, 1.0])],
            &RetrievalConfig::default(),
        )
        .unwrap();
        assert_eq!(
            index.report(),
            "{\"query_id\":\"a\",\"neighbors\":[[\"b\",0.800000]]}\n{\"query_id\":\"b\",\"neighbors\":[[\"a\",0.800000]]}\n"
        );
        assert!(index
            .embedding_cache()
            .starts_with("{\"sentence_id\":\"a\",\"vector\":[1.0,2.0]}"));
    }

    #[test]
    fn fusion_concatenates_with_a_separator() {
        let a = build_template(
            &ann(
                "s1",
                &["The", "Chinese", "embassy", "in", "France"],
                &[(0, 3, "FAC"), (1, 2, "GPE")],
            ),
            &KeywordSet::default(),
        );
        let b = build_template(&ann("s2", &["hello"], &[]), &KeywordSet::new([0]));
        let c = fuse_templates(&a, &b, DEFAULT_MAX_LEN);
        assert_eq!(
            c.to_text(),
            "<FAC> The <GPE> Chinese </GPE> embassy </FAC> <mask> <fuse> hello"
        );
        assert_eq!(c.partner.as_deref(), Some("s2"));
        assert_eq!(c.items.len(), c.origins.len());

        let mut empty = b.clone();
        empty.items.clear();
        empty.origins.clear();
        let d = fuse_templates(&a, &empty, DEFAULT_MAX_LEN);
        assert_eq!(d.items.len(), a.items.len() + 1);
    }

    #[test]
    fn fusion_shifts_partner_spans() {
        let a = build_template(&ann("a", &["x", "y"], &[(0, 1, "PER")]), &KeywordSet::default());
        let b = build_template(
            &ann("b", &["p", "q", "r"], &[(0, 2, "ORG"), (1, 2, "GPE")]),
            &KeywordSet::default(),
        );
        let c = fuse_templates(&a, &b, DEFAULT_MAX_LEN);
        let offset = a.items.len() + 1;
        let shifted: Vec<Span> = b
            .spans()
            .into_iter()
            .map(|s| Span::new(s.start + offset, s.end + offset, s.label))
            .collect();
        let fused = c.spans();
        assert_eq!(&fused[..a.spans().len()], a.spans().as_slice());
        assert_eq!(&fused[a.spans().len()..], shifted.as_slice());
    }

    #[test]
    fn truncation_drops_straddling_spans() {
        let a = build_template(&ann("a", &["x"], &[(0, 1, "PER")]), &KeywordSet::default());
        // b: <ORG> p q r </ORG> s   (items: 6)
        let b = build_template(
            &ann("b", &["p", "q", "r", "s"], &[(0, 3, "ORG")]),
            &KeywordSet::new([3]),
        );
        // a has 3 items; budget for b = 8 - 4 = 4, cutting inside <ORG>
        let c = fuse_templates(&a, &b, 8);
        assert!(c.items.len() <= 8);
        let labels: Vec<String> = c.label_multiset().iter().map(ToString::to_string).collect();
        assert_eq!(labels, ["PER"]);
        let filled: Vec<Item> = c
            .items
            .iter()
            .map(|i| if i.is_mask() { Item::Word("_".into()) } else { i.clone() })
            .collect();
        let seq = LinearizedSequence::new("c", filled).without_fuse();
        let back = delinearize(&seq, &Schema::default()).unwrap();
        assert_eq!(back.spans().len(), 1);
        assert_eq!(back.spans()[0].label.as_str(), "PER");
    }
}
