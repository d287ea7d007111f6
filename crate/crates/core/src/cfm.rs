//! Confidence filtering of generated samples.
//!
//! Stage one sorts generations into silver and none-silver by checking the
//! recovered entity labels against the expected ones. Stage two keeps the
//! best-scoring fraction of the silver pool.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use crate::cnlc::{delinearize, strip_sentinels, LinearizedSequence};
use crate::corpus::{token_depths, Label, NestedAnnotation, Schema, Span};
use crate::error::{FilterError, GatewayError};
use crate::gateway::{score_sentence, ScoreBackend};
use crate::scalar::{ceil_fraction, Real};
use crate::template::Template;

pub const DEFAULT_SILVER_RATE: f64 = 0.70;
pub const SILVER_PREFIX: &str = "aug-";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    ParseFailure,
    LabelMismatch,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reason::ParseFailure => "parse_failure",
            Reason::LabelMismatch => "label_mismatch",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Silver,
    NoneSilver(Reason),
}

impl Verdict {
    pub fn is_silver(&self) -> bool {
        matches!(self, Verdict::Silver)
    }

    pub fn reason(&self) -> Option<Reason> {
        match self {
            Verdict::Silver => None,
            Verdict::NoneSilver(r) => Some(*r),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.is_silver() { "silver" } else { "none_silver" })
    }
}

/// How recovered spans are compared with the expected ones.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MatchMode {
    /// Equal label multisets; positions are free to move.
    #[default]
    LabelMultiset,
    /// Equal span sets, positions included. Only expectations built from a
    /// source annotation carry positions; for the others this falls back to
    /// label multisets.
    Exact,
}

/// What a generation must reproduce to count as silver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expectation {
    labels: Vec<Label>,
    spans: Option<Vec<Span>>,
}

impl Expectation {
    pub fn from_source(source: &NestedAnnotation) -> Self {
        Expectation {
            labels: source.label_multiset(),
            spans: Some(source.spans().to_vec()),
        }
    }

    /// Labels of every entity that survived into the template.
    pub fn from_template(template: &Template) -> Self {
        Expectation {
            labels: template.label_multiset(),
            spans: None,
        }
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    fn accepts(&self, recovered: &NestedAnnotation, mode: MatchMode) -> bool {
        match (mode, &self.spans) {
            (MatchMode::Exact, Some(spans)) => recovered.spans() == spans.as_slice(),
            _ => recovered.label_multiset() == self.labels,
        }
    }
}

/// One generated sentence and its filtering outcome. `variant` numbers the
/// generations made from the same source sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample<F> {
    pub source_id: String,
    pub variant: usize,
    pub partner: Option<String>,
    pub generated: LinearizedSequence,
    pub recovered: Option<NestedAnnotation>,
    pub verdict: Verdict,
    pub pll: Option<F>,
}

impl<F: Real> AugmentedSample<F> {
    pub fn is_silver(&self) -> bool {
        self.verdict.is_silver()
    }

    /// `source-variant`; unique within one run.
    pub fn sample_id(&self) -> String {
        format!("{}-{}", self.source_id, self.variant)
    }

    /// Score a silver sample on its words alone. None-silver samples are
    /// left unscored.
    pub fn score_with(&mut self, backend: &dyn ScoreBackend<F>) -> Result<(), GatewayError> {
        if self.is_silver() {
            let words = strip_sentinels(&self.generated);
            self.pll = Some(score_sentence(&words, backend)?);
        }
        Ok(())
    }
}

pub fn classify_silver<F: Real>(
    generated: LinearizedSequence,
    source: &NestedAnnotation,
    schema: &Schema,
) -> AugmentedSample<F> {
    let expected = Expectation::from_source(source);
    classify_against(generated, 0, &expected, MatchMode::LabelMultiset, schema)
}

pub fn classify_against<F: Real>(
    generated: LinearizedSequence,
    variant: usize,
    expected: &Expectation,
    mode: MatchMode,
    schema: &Schema,
) -> AugmentedSample<F> {
    let (recovered, verdict) = match delinearize(&generated, schema) {
        Err(_) => (None, Verdict::NoneSilver(Reason::ParseFailure)),
        Ok(ann) if expected.accepts(&ann, mode) => (Some(ann), Verdict::Silver),
        Ok(ann) => (Some(ann), Verdict::NoneSilver(Reason::LabelMismatch)),
    };
    AugmentedSample {
        source_id: generated.source_id.clone(),
        variant,
        partner: None,
        generated,
        recovered,
        verdict,
        pll: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub silver_rate: f64,
}

impl FilterConfig {
    pub fn new(silver_rate: f64) -> Result<Self, FilterError> {
        if silver_rate > 0.0 && silver_rate <= 1.0 {
            Ok(FilterConfig { silver_rate })
        } else {
            Err(FilterError::InvalidRate(silver_rate))
        }
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            silver_rate: DEFAULT_SILVER_RATE,
        }
    }
}

/// Indices of the kept silver samples, best first.
///
/// Silver samples are ordered by PLL descending, then source id, then
/// position in `samples`; the first `⌈ρ·S⌉` are kept. An unscored silver
/// sample ranks below every scored one.
pub fn rank_and_select<F: Real>(samples: &[AugmentedSample<F>], cfg: &FilterConfig) -> Vec<usize> {
    let mut silver: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].is_silver()).collect();
    let keep = ceil_fraction(cfg.silver_rate, silver.len());
    silver.sort_by(|&a, &b| {
        let (sa, sb) = (&samples[a], &samples[b]);
        let pa = sa.pll.unwrap_or(F::neg_infinity());
        let pb = sb.pll.unwrap_or(F::neg_infinity());
        pb.partial_cmp(&pa)
            .unwrap_or(Ordering::Equal)
            .then_with(|| sa.source_id.cmp(&sb.source_id))
            .then(a.cmp(&b))
    });
    silver.truncate(keep);
    silver
}

/// `golden ++ silver`, with every silver id prefixed. Silver annotations
/// are revalidated against `schema`.
pub fn merge_aug_golden(
    golden: &[NestedAnnotation],
    silver: &[NestedAnnotation],
    prefix: &str,
    schema: &Schema,
) -> Result<Vec<NestedAnnotation>, FilterError> {
    let mut seen: HashSet<String> = golden.iter().map(|a| a.id().to_string()).collect();
    let mut merged = golden.to_vec();
    for ann in silver {
        let id = format!("{prefix}{}", ann.id());
        let words: Vec<&str> = ann.words().collect();
        let checked = NestedAnnotation::new(id.clone(), &words, ann.spans().to_vec(), schema)
            .map_err(|source| FilterError::InvalidSilver { id: id.clone(), source })?;
        if !seen.insert(id.clone()) {
            return Err(FilterError::IdCollision(id));
        }
        merged.push(checked);
    }
    Ok(merged)
}

/// Split off sentences where some token sits under more than `max_depth`
/// entities. Returns `(kept, removed)` in input order.
pub fn depth_prefilter(
    corpus: Vec<NestedAnnotation>,
    max_depth: usize,
) -> (Vec<NestedAnnotation>, Vec<NestedAnnotation>) {
    corpus
        .into_iter()
        .partition(|ann| token_depths(ann).into_iter().all(|d| d <= max_depth))
}

/// One line of the per-sample report.
#[derive(Debug, Serialize)]
pub struct SampleRecord<'a, F> {
    pub source_id: &'a str,
    pub variant: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partner: Option<&'a str>,
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<Reason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pll: Option<F>,
    pub kept: bool,
}

impl<F: Real + Serialize> AugmentedSample<F> {
    pub fn record(&self, kept: bool) -> SampleRecord<'_, F> {
        SampleRecord {
            source_id: &self.source_id,
            variant: self.variant,
            partner: self.partner.as_deref(),
            verdict: self.verdict.to_string(),
            reason: self.verdict.reason(),
            pll: self.pll,
            kept,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnlc::linearize;
    use crate::corpus::corpus_stats;

    fn embassy() -> NestedAnnotation {
        let words = ["The", "Chinese", "embassy", "in", "France"];
        let schema = Schema::default();
        let spans = vec![
            Span::new(0, 3, schema.label("FAC").unwrap()),
            Span::new(1, 2, schema.label("GPE").unwrap()),
            Span::new(4, 5, schema.label("GPE").unwrap()),
        ];
        NestedAnnotation::new("s1", &words, spans, &schema).unwrap()
    }

    fn silver(id: &str, variant: usize, pll: f64) -> AugmentedSample<f64> {
        AugmentedSample {
            source_id: id.into(),
            variant,
            partner: None,
            generated: LinearizedSequence::parse(id, "a"),
            recovered: None,
            verdict: Verdict::Silver,
            pll: Some(pll),
        }
    }

    #[test]
    fn verdicts() {
        let schema = Schema::default();
        let src = embassy();
        let same: AugmentedSample<f64> = classify_silver(linearize(&src), &src, &schema);
        assert_eq!(same.verdict, Verdict::Silver);
        assert_eq!(same.recovered.as_ref(), Some(&src));

        let broken = LinearizedSequence::parse("s1", "<FAC> The <GPE> Chinese embassy </FAC> in France");
        let s: AugmentedSample<f64> = classify_silver(broken, &src, &schema);
        assert_eq!(s.verdict, Verdict::NoneSilver(Reason::ParseFailure));
        assert!(s.recovered.is_none());

        let dropped = LinearizedSequence::parse("s1", "<FAC> The <GPE> Chinese </GPE> embassy </FAC> in France");
        let s: AugmentedSample<f64> = classify_silver(dropped, &src, &schema);
        assert_eq!(s.verdict, Verdict::NoneSilver(Reason::LabelMismatch));
    }

    #[test]
    fn positions_only_matter_in_exact_mode() {
        let schema = Schema::default();
        let src = embassy();
        let shifted = LinearizedSequence::parse(
            "s1",
            "<FAC> The <GPE> Chinese </GPE> big embassy </FAC> in <GPE> France </GPE>",
        );
        let expected = Expectation::from_source(&src);
        let loose: AugmentedSample<f64> =
            classify_against(shifted.clone(), 0, &expected, MatchMode::LabelMultiset, &schema);
        assert!(loose.is_silver());
        let exact: AugmentedSample<f64> = classify_against(shifted, 0, &expected, MatchMode::Exact, &schema);
        assert_eq!(exact.verdict, Verdict::NoneSilver(Reason::LabelMismatch));
    }

    #[test]
    fn depth_limit_is_a_parse_failure() {
        let schema = Schema::default().with_max_depth(Some(1));
        let src = embassy();
        let s: AugmentedSample<f64> = classify_silver(linearize(&src), &src, &schema);
        assert_eq!(s.verdict, Verdict::NoneSilver(Reason::ParseFailure));
    }

    #[test]
    fn selection_keeps_the_ceiling_share() {
        let pool: Vec<_> = (0..10).map(|i| silver(&format!("s{i:02}"), 0, -(i as f64))).collect();
        let kept = rank_and_select(&pool, &FilterConfig::new(0.7).unwrap());
        assert_eq!(kept, vec![0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(rank_and_select(&pool, &FilterConfig::new(1.0).unwrap()).len(), 10);
        assert_eq!(rank_and_select(&pool, &FilterConfig::new(0.01).unwrap()), vec![0]);
        assert!(rank_and_select::<f64>(&[], &FilterConfig::default()).is_empty());
        assert!(FilterConfig::new(0.0).is_err());
        assert!(FilterConfig::new(1.5).is_err());
        assert!(FilterConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn ties_fall_back_to_source_then_position() {
        let pool = vec![
            silver("b", 0, 1.0),
            silver("a", 1, 1.0),
            silver("a", 0, 1.0),
            silver("c", 0, 2.0),
        ];
        let kept = rank_and_select(&pool, &FilterConfig::new(1.0).unwrap());
        assert_eq!(kept, vec![3, 1, 2, 0]);
    }

    #[test]
    fn none_silver_is_never_selected() {
        let mut pool = vec![silver("a", 0, 5.0), silver("b", 0, 1.0)];
        pool[0].verdict = Verdict::NoneSilver(Reason::LabelMismatch);
        assert_eq!(rank_and_select(&pool, &FilterConfig::new(1.0).unwrap()), vec![1]);
    }

    #[test]
    fn merge_concatenates_and_prefixes() {
        let schema = Schema::default();
        let golden: Vec<_> = (0..5).map(|i| embassy().with_id(format!("g{i}"))).collect();
        let extra: Vec<_> = (0..3).map(|i| embassy().with_id(format!("g{i}-0"))).collect();
        let merged = merge_aug_golden(&golden, &extra, SILVER_PREFIX, &schema).unwrap();
        assert_eq!(merged.len(), 8);
        assert_eq!(merged[5].id(), "aug-g0-0");
        assert_eq!(corpus_stats(&merged), corpus_stats(&golden) + corpus_stats(&extra));
        assert_eq!(merge_aug_golden(&golden, &[], SILVER_PREFIX, &schema).unwrap(), golden);
        let clash = vec![embassy().with_id("0")];
        assert!(matches!(
            merge_aug_golden(&golden, &clash, "g", &schema),
            Err(FilterError::IdCollision(id)) if id == "g0"
        ));
        let shallow = Schema::default().with_max_depth(Some(1));
        assert!(matches!(
            merge_aug_golden(&[], &extra, SILVER_PREFIX, &shallow),
            Err(FilterError::InvalidSilver { .. })
        ));
    }

    #[test]
    fn prefilter_drops_deep_sentences() {
        let schema = Schema::default().with_max_depth(None);
        let l = schema.label("PER").unwrap();
        let spans = (0..4).map(|d| Span::new(d, 8 - d, l.clone())).collect();
        let deep = NestedAnnotation::new("deep", &["w"; 8], spans, &schema).unwrap();
        let flat = NestedAnnotation::new("flat", &["w"; 3], vec![], &schema).unwrap();
        let (kept, removed) = depth_prefilter(vec![deep.clone(), flat.clone(), embassy()], 3);
        assert_eq!(kept, vec![flat, embassy()]);
        assert_eq!(removed, vec![deep]);
    }
}
