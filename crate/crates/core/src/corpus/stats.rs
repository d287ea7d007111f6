use std::collections::BTreeMap;
use std::fmt;
use std::ops::Add;

use serde::Serialize;

use super::{Label, NestedAnnotation, Span};

/// Sentence and entity counts, with their nested subsets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub num_sentences: usize,
    pub num_nested_sentences: usize,
    pub num_entities: usize,
    pub num_nested_entities: usize,
}

impl Add for CorpusStats {
    type Output = CorpusStats;
    fn add(self, rhs: CorpusStats) -> CorpusStats {
        CorpusStats {
            num_sentences: self.num_sentences + rhs.num_sentences,
            num_nested_sentences: self.num_nested_sentences + rhs.num_nested_sentences,
            num_entities: self.num_entities + rhs.num_entities,
            num_nested_entities: self.num_nested_entities + rhs.num_nested_entities,
        }
    }
}

/// A span is nested when some other span of the sentence contains it; a
/// sentence is nested when it has at least one nested span.
pub fn corpus_stats(annotations: &[NestedAnnotation]) -> CorpusStats {
    annotations
        .iter()
        .map(|ann| {
            let nested = nested_spans(ann.spans());
            CorpusStats {
                num_sentences: 1,
                num_nested_sentences: usize::from(nested > 0),
                num_entities: ann.spans().len(),
                num_nested_entities: nested,
            }
        })
        .fold(CorpusStats::default(), Add::add)
}

// Spans are canonically ordered, so any container of spans[j] sits at an
// index whose start is <= spans[j].start.
fn nested_spans(spans: &[Span]) -> usize {
    spans
        .iter()
        .enumerate()
        .filter(|(j, inner)| {
            spans
                .iter()
                .enumerate()
                .take_while(|(_, outer)| outer.start <= inner.start)
                .any(|(i, outer)| i != *j && outer.contains(inner))
        })
        .count()
}

/// Counts of (outside, inside) label pairs over every containing pair of
/// spans, not only direct parents.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorrelationMatrix {
    counts: BTreeMap<(Label, Label), u64>,
}

impl CorrelationMatrix {
    pub fn get(&self, outside: &Label, inside: &Label) -> u64 {
        self.counts
            .get(&(outside.clone(), inside.clone()))
            .copied()
            .unwrap_or(0)
    }

    pub fn increment(&mut self, outside: &Label, inside: &Label) {
        *self.counts.entry((outside.clone(), inside.clone())).or_insert(0) += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Non-zero entries in (outside, inside) order.
    pub fn iter(&self) -> impl Iterator<Item = (&Label, &Label, u64)> {
        self.counts.iter().map(|((o, i), c)| (o, i, *c))
    }

    pub fn is_zero(&self) -> bool {
        self.counts.values().all(|&c| c == 0)
    }
}

pub fn label_correlation(annotations: &[NestedAnnotation]) -> CorrelationMatrix {
    let mut matrix = CorrelationMatrix::default();
    for ann in annotations {
        let spans = ann.spans();
        for outer in spans {
            for inner in spans.iter().take_while(|s| s.start < outer.end) {
                if outer.contains(inner) {
                    matrix.increment(&outer.label, &inner.label);
                }
            }
        }
    }
    matrix
}

/// Number of spans covering each token.
pub fn token_depths(ann: &NestedAnnotation) -> Vec<usize> {
    let mut depth = vec![0; ann.len()];
    for span in ann.spans() {
        for d in &mut depth[span.start..span.end] {
            *d += 1;
        }
    }
    depth
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BioLayer {
    /// Maximal spans only. Among equal-extent outermost spans the first in
    /// canonical (label) order wins.
    #[default]
    Outermost,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BioTag {
    Begin(Label),
    Inside(Label),
    Outside,
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioTag::Begin(l) => write!(f, "B-{l}"),
            BioTag::Inside(l) => write!(f, "I-{l}"),
            BioTag::Outside => f.write_str("O"),
        }
    }
}

pub fn bio_encode(ann: &NestedAnnotation, layer: BioLayer) -> Vec<BioTag> {
    let BioLayer::Outermost = layer;
    let mut tags = vec![BioTag::Outside; ann.len()];
    let mut covered_until = 0;
    // canonical order visits each outermost span before anything inside it
    for span in ann.spans() {
        if span.start < covered_until {
            continue;
        }
        tags[span.start] = BioTag::Begin(span.label.clone());
        for tag in &mut tags[span.start + 1..span.end] {
            *tag = BioTag::Inside(span.label.clone());
        }
        covered_until = span.end;
    }
    tags
}
