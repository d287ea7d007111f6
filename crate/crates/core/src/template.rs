//! Keyword selection, masked templates and dynamic masking.
//!
//! A template is the linearized sentence with every token that is neither
//! part of an entity nor a keyword replaced by `<mask>`, and runs of masks
//! collapsed to one. Dynamic masking then hides a random subset of the
//! keywords, with the subset size driven by a Gaussian-sampled rate.

use std::collections::BTreeSet;

use rand::distributions::Open01;
use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cnlc::{join_items, linearize, Item, LinearizedSequence, Sentinel};
use crate::corpus::{Label, NestedAnnotation, Span};
use crate::error::TemplateError;
use crate::scalar::{ceil_fraction, Real};

/// Largest share of the total entity attention a single token may carry
/// when ranking keywords.
pub const ATTENTION_SHARE_CAP: f64 = 0.10;

pub const DEFAULT_KEYWORD_RATIO: f64 = 0.3;
pub const DEFAULT_MASK_RATE: f64 = 0.3;

const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Square row-stochastic matrix; row `i` is the attention token `i` pays
/// to every token of the sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap<F> {
    n: usize,
    weights: Vec<F>,
}

impl<F: Real> AttentionMap<F> {
    pub fn from_rows(rows: Vec<Vec<F>>) -> Result<Self, TemplateError> {
        let n = rows.len();
        let mut weights = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(TemplateError::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &w) in row.iter().enumerate() {
                if !w.is_finite() || w < F::zero() {
                    return Err(TemplateError::InvalidEntry { row: i, col: j });
                }
            }
            let sum: F = row.iter().copied().sum();
            let tolerance = F::of(ROW_SUM_TOLERANCE) + F::of_count(n) * F::epsilon();
            if (sum - F::one()).abs() > tolerance {
                return Err(TemplateError::NotStochastic {
                    row: i,
                    sum: sum.to_f64_lossy(),
                });
            }
            weights.extend(row);
        }
        Ok(AttentionMap { n, weights })
    }

    pub fn uniform(n: usize) -> Self {
        let w = if n == 0 { F::zero() } else { F::one() / F::of_count(n) };
        AttentionMap {
            n,
            weights: vec![w; n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, row: usize, col: usize) -> F {
        self.weights[row * self.n + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[F]> {
        self.weights.chunks(self.n.max(1)).take(self.n)
    }
}

/// Sorted token indices of the selected keywords.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct KeywordSet {
    indices: Vec<usize>,
}

impl KeywordSet {
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Self {
        let set: BTreeSet<usize> = indices.into_iter().collect();
        KeywordSet {
            indices: set.into_iter().collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// `K`, the keyword count.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Pick the non-entity tokens that entity tokens attend to most.
///
/// A token's score is the attention it receives from all entity tokens, as
/// a share of the total entity attention, capped at
/// [`ATTENTION_SHARE_CAP`]. Entity tokens, stopwords and punctuation are not
/// candidates. The top `ceil(ratio * candidates)` are returned; ties go to
/// the lower index.
pub fn select_keywords<F: Real>(
    ann: &NestedAnnotation,
    attention: &AttentionMap<F>,
    ratio: f64,
) -> Result<KeywordSet, TemplateError> {
    if attention.size() != ann.len() {
        return Err(TemplateError::DimensionMismatch {
            expected: ann.len(),
            found: attention.size(),
        });
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(TemplateError::InvalidRatio(ratio));
    }
    let entity = ann.entity_mask();
    if !entity.iter().any(|&e| e) {
        return Ok(KeywordSet::default());
    }
    let mut received = vec![F::zero(); ann.len()];
    for (i, _) in entity.iter().enumerate().filter(|(_, &e)| e) {
        for (r, &w) in received.iter_mut().zip(attention.row(i)) {
            *r = *r + w;
        }
    }
    let total: F = received.iter().copied().sum();
    let cap = F::of(ATTENTION_SHARE_CAP);
    let mut candidates: Vec<(usize, F)> = ann
        .tokens()
        .iter()
        .filter(|t| !entity[t.index] && !t.is_stopword && !t.is_punct)
        .map(|t| {
            let share = if total > F::zero() {
                received[t.index] / total
            } else {
                F::zero()
            };
            (t.index, share.min(cap))
        })
        .collect();
    let take = ceil_fraction(ratio, candidates.len());
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(KeywordSet::new(candidates.into_iter().take(take).map(|(i, _)| i)))
}

/// A masked linearization. `origins[i]` is the source token index of item
/// `i` when that item is an unmasked word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub source_id: String,
    pub items: Vec<Item>,
    pub origins: Vec<Option<usize>>,
    pub keywords: KeywordSet,
    /// Keywords hidden by dynamic masking.
    pub masked: Vec<usize>,
    /// Set when this template was fused with another sentence.
    pub partner: Option<String>,
}

impl Template {
    /// Entity spans in item coordinates: `start` is the index of the open
    /// sentinel, `end` is one past the close sentinel.
    pub fn spans(&self) -> Vec<Span> {
        let mut open: Vec<(usize, &Label)> = Vec::new();
        let mut spans = Vec::new();
        for (i, item) in self.items.iter().enumerate() {
            match item {
                Item::Sentinel(Sentinel::Open(l)) => open.push((i, l)),
                Item::Sentinel(Sentinel::Close(_)) => {
                    if let Some((start, l)) = open.pop() {
                        spans.push(Span::new(start, i + 1, l.clone()));
                    }
                }
                _ => {}
            }
        }
        spans.sort_by(Span::canonical_cmp);
        spans
    }

    pub fn label_multiset(&self) -> Vec<Label> {
        let mut labels: Vec<Label> = self.spans().into_iter().map(|s| s.label).collect();
        labels.sort();
        labels
    }

    pub fn mask_count(&self) -> usize {
        self.items.iter().filter(|i| i.is_mask()).count()
    }

    pub fn has_consecutive_masks(&self) -> bool {
        self.items.windows(2).any(|w| w[0].is_mask() && w[1].is_mask())
    }

    /// Keyword token indices still visible in the template.
    pub fn visible_keywords(&self) -> Vec<usize> {
        self.origins
            .iter()
            .flatten()
            .copied()
            .filter(|&i| self.keywords.contains(i))
            .collect()
    }

    pub fn to_sequence(&self) -> LinearizedSequence {
        LinearizedSequence::new(self.source_id.clone(), self.items.clone())
    }

    pub fn to_text(&self) -> String {
        join_items(&self.items)
    }

    /// Sidecar metadata record for the template file.
    pub fn metadata(&self) -> TemplateMetadata<'_> {
        TemplateMetadata {
            source_id: &self.source_id,
            partner: self.partner.as_deref(),
            keywords: self.keywords.indices(),
            masked: &self.masked,
        }
    }

    pub(crate) fn collapse_masks(&mut self) {
        let mut items = Vec::with_capacity(self.items.len());
        let mut origins = Vec::with_capacity(self.items.len());
        for (item, origin) in self.items.drain(..).zip(self.origins.drain(..)) {
            if item.is_mask() && items.last().is_some_and(Item::is_mask) {
                continue;
            }
            items.push(item);
            origins.push(origin);
        }
        self.items = items;
        self.origins = origins;
    }
}

#[derive(Debug, Serialize)]
pub struct TemplateMetadata<'a> {
    pub source_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partner: Option<&'a str>,
    pub keywords: &'a [usize],
    pub masked: &'a [usize],
}

pub fn build_template(ann: &NestedAnnotation, keywords: &KeywordSet) -> Template {
    let entity = ann.entity_mask();
    let linear = linearize(ann);
    let mut items = Vec::with_capacity(linear.items.len());
    let mut origins = Vec::with_capacity(linear.items.len());
    let mut token = 0;
    for item in linear.items {
        match item {
            Item::Word(_) => {
                if entity[token] || keywords.contains(token) {
                    items.push(item);
                    origins.push(Some(token));
                } else {
                    items.push(Item::Sentinel(Sentinel::Mask));
                    origins.push(None);
                }
                token += 1;
            }
            sentinel => {
                items.push(sentinel);
                origins.push(None);
            }
        }
    }
    let mut template = Template {
        source_id: ann.id().to_string(),
        items,
        origins,
        keywords: keywords.clone(),
        masked: Vec::new(),
        partner: None,
    };
    template.collapse_masks();
    template
}

/// Normal(`mu`, 1/K) masking-rate distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMaskConfig {
    pub mu: f64,
}

impl GaussianMaskConfig {
    pub fn new(mu: f64) -> Result<Self, TemplateError> {
        if (0.0..=1.0).contains(&mu) {
            Ok(GaussianMaskConfig { mu })
        } else {
            Err(TemplateError::InvalidRate(mu))
        }
    }

    pub fn std_dev(&self, keywords: usize) -> f64 {
        1.0 / keywords as f64
    }
}

impl Default for GaussianMaskConfig {
    fn default() -> Self {
        GaussianMaskConfig { mu: DEFAULT_MASK_RATE }
    }
}

/// Draw a masking rate by inverting the normal CDF at one uniform draw,
/// clamped to `[0, 1]`. Zero keywords give rate 0.
pub fn sample_mask_rate<R: Rng + ?Sized>(cfg: &GaussianMaskConfig, keywords: usize, rng: &mut R) -> f64 {
    if keywords == 0 {
        return 0.0;
    }
    let u: f64 = rng.sample(Open01);
    let normal = Normal::new(cfg.mu, cfg.std_dev(keywords)).expect("std dev is positive");
    normal.inverse_cdf(u).clamp(0.0, 1.0)
}

/// Mask exactly `count` of the template's visible keywords, chosen
/// uniformly without replacement, then re-collapse.
pub fn mask_keywords<R: Rng + ?Sized>(template: &Template, count: usize, rng: &mut R) -> Template {
    let visible = template.visible_keywords();
    let count = count.min(visible.len());
    let chosen: BTreeSet<usize> = rand::seq::index::sample(rng, visible.len(), count)
        .into_iter()
        .map(|i| visible[i])
        .collect();
    let mut out = template.clone();
    for (item, origin) in out.items.iter_mut().zip(out.origins.iter_mut()) {
        if origin.is_some_and(|o| chosen.contains(&o)) {
            *item = Item::Sentinel(Sentinel::Mask);
            *origin = None;
        }
    }
    out.masked.extend(chosen);
    out.masked.sort_unstable();
    out.collapse_masks();
    out
}

/// Result of one dynamic-masking draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicMask {
    pub template: Template,
    pub rate: f64,
    /// `round(rate * K)`, the number of keywords masked.
    pub masked_count: usize,
}

pub fn dynamic_mask<R: Rng + ?Sized>(template: &Template, cfg: &GaussianMaskConfig, rng: &mut R) -> DynamicMask {
    let k = template.visible_keywords().len();
    let rate = sample_mask_rate(cfg, k, rng);
    let masked_count = (rate * k as f64).round() as usize;
    DynamicMask {
        template: mask_keywords(template, masked_count, rng),
        rate,
        masked_count,
    }
}
