//! Brute-force reference implementations and random instance generators.
//! The oracles work on plain tuples and recompute everything from token
//! sets, without calling the library code they check.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use cnlaug::corpus::{LabelSet, NestedAnnotation, Schema, Span};
use cnlaug::synth::{random_annotation, RandomShape};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type RawSpan = (usize, usize, String);

pub fn raw(ann: &NestedAnnotation) -> Vec<RawSpan> {
    ann.spans()
        .iter()
        .map(|s| (s.start, s.end, s.label.as_str().to_string()))
        .collect()
}

fn tokens_of(s: &RawSpan) -> BTreeSet<usize> {
    (s.0..s.1).collect()
}

/// (#S, #NS, #E, #NE)
pub fn stats(corpus: &[NestedAnnotation]) -> (usize, usize, usize, usize) {
    let mut out = (0, 0, 0, 0);
    for ann in corpus {
        let spans = raw(ann);
        let mut nested = 0;
        for (i, inner) in spans.iter().enumerate() {
            let inside = spans
                .iter()
                .enumerate()
                .any(|(j, outer)| i != j && tokens_of(inner).is_subset(&tokens_of(outer)));
            nested += usize::from(inside);
        }
        out.0 += 1;
        out.1 += usize::from(nested > 0);
        out.2 += spans.len();
        out.3 += nested;
    }
    out
}

/// (outside, inside) -> count over every containing pair.
pub fn correlation(corpus: &[NestedAnnotation]) -> BTreeMap<(String, String), u64> {
    let mut out = BTreeMap::new();
    for ann in corpus {
        let spans = raw(ann);
        for (i, outer) in spans.iter().enumerate() {
            for (j, inner) in spans.iter().enumerate() {
                if i != j && tokens_of(inner).is_subset(&tokens_of(outer)) {
                    *out.entry((outer.2.clone(), inner.2.clone())).or_insert(0) += 1;
                }
            }
        }
    }
    out
}

/// Clip, filter, sort, take. `tenths` is the ratio times ten, so the take
/// count is an exact integer ceiling.
pub fn keywords(ann: &NestedAnnotation, attention: &[Vec<f64>], tenths: usize) -> Vec<usize> {
    let n = ann.len();
    let spans = raw(ann);
    let is_entity = |t: usize| spans.iter().any(|s| s.0 <= t && t < s.1);
    let rows: Vec<usize> = (0..n).filter(|&t| is_entity(t)).collect();
    if rows.is_empty() {
        return Vec::new();
    }
    let mut total = 0.0;
    for &i in &rows {
        for j in 0..n {
            total += attention[i][j];
        }
    }
    let mut cands: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let tok = &ann.tokens()[j];
        if is_entity(j) || tok.is_stopword || tok.is_punct {
            continue;
        }
        let mut got = 0.0;
        for &i in &rows {
            got += attention[i][j];
        }
        let share = if total > 0.0 { got / total } else { 0.0 };
        cands.push((j, if share > 0.10 { 0.10 } else { share }));
    }
    let take = (tenths * cands.len()).div_ceil(10);
    // selection sort: repeatedly take the best remaining
    let mut picked = Vec::new();
    for _ in 0..take {
        let mut best = 0;
        for k in 1..cands.len() {
            if cands[k].1 > cands[best].1 || (cands[k].1 == cands[best].1 && cands[k].0 < cands[best].0) {
                best = k;
            }
        }
        picked.push(cands.remove(best).0);
    }
    picked.sort_unstable();
    picked
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for k in 0..a.len() {
        dot += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (dot / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
}

pub fn top_n(query: &str, corpus: &[(String, Vec<f64>)], n: usize) -> Vec<(String, f64)> {
    let q = &corpus.iter().find(|(id, _)| id == query).unwrap().1;
    let mut rest: Vec<(String, f64)> = corpus
        .iter()
        .filter(|(id, _)| id != query)
        .map(|(id, v)| (id.clone(), cosine(q, v)))
        .collect();
    let mut out = Vec::new();
    while out.len() < n && !rest.is_empty() {
        let mut best = 0;
        for k in 1..rest.len() {
            if rest[k].1 > rest[best].1 || (rest[k].1 == rest[best].1 && rest[k].0 < rest[best].0) {
                best = k;
            }
        }
        out.push(rest.remove(best));
    }
    out
}

/// label -> (tp, fp, fn), with "" holding the micro totals.
pub fn prf_counts(gold: &[NestedAnnotation], pred: &[NestedAnnotation]) -> BTreeMap<String, (usize, usize, usize)> {
    let mut out: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for g in gold {
        let p = pred.iter().find(|p| p.id() == g.id()).unwrap();
        let mut unmatched = raw(g);
        for span in raw(p) {
            let e = out.entry(span.2.clone()).or_default();
            if let Some(k) = unmatched.iter().position(|u| *u == span) {
                unmatched.remove(k);
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
        for span in unmatched {
            out.entry(span.2).or_default().2 += 1;
        }
    }
    let micro = out.values().fold((0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    out.insert(String::new(), micro);
    out
}

/// (precision, recall, f1) by the textbook formulas, 0 for 0/0.
pub fn prf((tp, fp, fn_): (usize, usize, usize)) -> (f64, f64, f64) {
    let p = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let r = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

pub fn macro_f1(counts: &BTreeMap<String, (usize, usize, usize)>) -> f64 {
    let f: Vec<f64> = counts
        .iter()
        .filter(|(l, c)| !l.is_empty() && c.0 + c.1 + c.2 > 0)
        .map(|(_, &c)| prf(c).2)
        .collect();
    if f.is_empty() {
        0.0
    } else {
        f.iter().sum::<f64>() / f.len() as f64
    }
}

/// Ids of sentences where some token lies under more than `max` spans.
pub fn too_deep(corpus: &[NestedAnnotation], max: usize) -> Vec<String> {
    corpus
        .iter()
        .filter(|ann| {
            let spans = raw(ann);
            (0..ann.len()).any(|t| spans.iter().filter(|s| s.0 <= t && t < s.1).count() > max)
        })
        .map(|a| a.id().to_string())
        .collect()
}

// ---- generators ----

pub fn unbounded() -> Schema {
    Schema::default().with_max_depth(None)
}

pub fn corpus(rng: &mut ChaCha8Rng, size: usize, shape: &RandomShape) -> Vec<NestedAnnotation> {
    (0..size)
        .map(|i| random_annotation(&format!("r{i:03}"), &LabelSet::default(), shape, &unbounded(), rng))
        .collect()
}

/// A prediction for `gold`: spans dropped, relabelled or shifted at random,
/// keeping only edits that leave a valid annotation.
pub fn perturb(gold: &NestedAnnotation, rng: &mut ChaCha8Rng) -> NestedAnnotation {
    let schema = unbounded();
    let labels: Vec<_> = LabelSet::default().iter().cloned().collect();
    let words: Vec<&str> = gold.words().collect();
    let mut spans: Vec<Span> = gold.spans().to_vec();
    for _ in 0..rng.gen_range(0..4) {
        let mut next = spans.clone();
        match rng.gen_range(0..4) {
            0 if !next.is_empty() => {
                let k = rng.gen_range(0..next.len());
                next.remove(k);
            }
            1 if !next.is_empty() => {
                let k = rng.gen_range(0..next.len());
                next[k].label = labels[rng.gen_range(0..labels.len())].clone();
            }
            2 if !next.is_empty() => {
                let k = rng.gen_range(0..next.len());
                if next[k].end < words.len() {
                    next[k].end += 1;
                }
            }
            _ => {
                let s = rng.gen_range(0..words.len());
                let e = rng.gen_range(s + 1..=words.len());
                next.push(Span::new(s, e, labels[rng.gen_range(0..labels.len())].clone()));
            }
        }
        if NestedAnnotation::new(gold.id(), &words, next.clone(), &schema).is_ok() {
            spans = next;
        }
    }
    NestedAnnotation::new(gold.id(), &words, spans, &schema).unwrap()
}

/// Rows of sixteenths, so every sum the code and the oracle form is exact.
pub fn dyadic_attention(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut row = vec![0.0; n];
            for _ in 0..16 {
                row[rng.gen_range(0..n)] += 1.0 / 16.0;
            }
            row
        })
        .collect()
}
