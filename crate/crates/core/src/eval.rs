//! Span-level scoring and plain-text/jsonl reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::json;

use crate::corpus::{CorpusStats, CorrelationMatrix, Label, LabelSet, NestedAnnotation};
use crate::error::EvalError;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf<F> {
    pub precision: F,
    pub recall: F,
    pub f1: F,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio<F: Real>(num: usize, den: usize) -> F {
    if den == 0 {
        F::zero()
    } else {
        F::of_count(num) / F::of_count(den)
    }
}

impl<F: Real> Prf<F> {
    /// 0/0 counts as 0 for every ratio.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision: F = ratio(tp, tp + fp);
        let recall: F = ratio(tp, tp + fn_);
        let sum = precision + recall;
        let f1 = if sum > F::zero() {
            F::of(2.0) * precision * recall / sum
        } else {
            F::zero()
        };
        Prf {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }

    pub fn gold(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn predicted(&self) -> usize {
        self.tp + self.fp
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanEvaluation<F> {
    pub micro: Prf<F>,
    /// In label-set order, including labels left out of the macro average.
    pub per_label: Vec<(Label, Prf<F>)>,
    /// Mean F1 over labels with at least one gold or predicted span.
    pub macro_f1: F,
}

impl<F: Real> SpanEvaluation<F> {
    /// Labels with neither gold nor predicted spans.
    pub fn excluded(&self) -> impl Iterator<Item = &Label> {
        self.per_label
            .iter()
            .filter(|(_, p)| p.gold() == 0 && p.predicted() == 0)
            .map(|(l, _)| l)
    }
}

type SpanKey<'a> = (usize, usize, &'a Label);

fn span_counts(ann: &NestedAnnotation) -> BTreeMap<SpanKey<'_>, usize> {
    let mut counts = BTreeMap::new();
    for s in ann.spans() {
        *counts.entry((s.start, s.end, &s.label)).or_insert(0) += 1;
    }
    counts
}

/// Exact `(start, end, label)` matching, sentence by sentence. Sentences are
/// paired by id; both sides must hold the same ids.
pub fn span_prf<F: Real>(
    gold: &[NestedAnnotation],
    pred: &[NestedAnnotation],
    labels: &LabelSet,
) -> Result<SpanEvaluation<F>, EvalError> {
    let by_id: HashMap<&str, &NestedAnnotation> = pred.iter().map(|a| (a.id(), a)).collect();
    if let Some(extra) = pred.iter().find(|p| !gold.iter().any(|g| g.id() == p.id())) {
        return Err(EvalError::UnexpectedPrediction(extra.id().to_string()));
    }
    // label -> (tp, gold, predicted)
    let mut tally: HashMap<&Label, (usize, usize, usize)> = HashMap::new();
    for g in gold {
        let p = by_id
            .get(g.id())
            .ok_or_else(|| EvalError::MissingPrediction(g.id().to_string()))?;
        let gc = span_counts(g);
        let pc = span_counts(p);
        for (&(_, _, label), &n) in &gc {
            tally.entry(label).or_default().1 += n;
        }
        for (key, &n) in &pc {
            let entry = tally.entry(key.2).or_default();
            entry.2 += n;
            entry.0 += n.min(gc.get(key).copied().unwrap_or(0));
        }
    }

    let mut total = (0, 0, 0);
    let mut per_label = Vec::with_capacity(labels.len());
    for label in labels.iter() {
        let (tp, g, p) = tally.get(label).copied().unwrap_or_default();
        total = (total.0 + tp, total.1 + g, total.2 + p);
        per_label.push((label.clone(), Prf::from_counts(tp, p - tp, g - tp)));
    }
    let scored: Vec<F> = per_label
        .iter()
        .filter(|(_, prf)| prf.gold() + prf.predicted() > 0)
        .map(|(_, prf)| prf.f1)
        .collect();
    let macro_f1 = if scored.is_empty() {
        F::zero()
    } else {
        scored.iter().copied().sum::<F>() / F::of_count(scored.len())
    };
    Ok(SpanEvaluation {
        micro: Prf::from_counts(total.0, total.2 - total.0, total.1 - total.0),
        per_label,
        macro_f1,
    })
}

/// Rendered report: aligned text plus one jsonl record per number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub text: String,
    pub jsonl: String,
}

#[derive(Debug, Default)]
pub struct ReportInput<'a, F> {
    pub stats: Option<&'a CorpusStats>,
    pub correlation: Option<&'a CorrelationMatrix>,
    pub prf: Option<&'a SpanEvaluation<F>>,
}

fn record(out: &mut String, section: &str, label: Option<&str>, metric: &str, value: serde_json::Value) {
    let line = match label {
        Some(l) => json!({"section": section, "label": l, "metric": metric, "value": value}),
        None => json!({"section": section, "metric": metric, "value": value}),
    };
    out.push_str(&line.to_string());
    out.push('\n');
}

pub fn render_report<F: Real + Serialize>(labels: &LabelSet, input: &ReportInput<'_, F>) -> Report {
    let mut text = String::new();
    let mut jsonl = String::new();
    let mut blocks = 0;

    if let Some(stats) = input.stats {
        blocks += 1;
        text.push_str("statistics\n");
        for (name, key, v) in [
            ("sentences", "#S", stats.num_sentences),
            ("nested sentences", "#NS", stats.num_nested_sentences),
            ("entities", "#E", stats.num_entities),
            ("nested entities", "#NE", stats.num_nested_entities),
        ] {
            let _ = writeln!(text, "  {name:<18}{key:>4}{v:>10}");
            record(&mut jsonl, "stats", None, key, json!(v));
        }
    }

    if let Some(corr) = input.correlation {
        if blocks > 0 {
            text.push('\n');
        }
        blocks += 1;
        text.push_str("correlation (rows inside, columns outside)\n");
        let _ = write!(text, "  {:<6}", "");
        for outside in labels.iter() {
            let _ = write!(text, "{:>7}", outside.as_str());
        }
        text.push('\n');
        for inside in labels.iter() {
            let _ = write!(text, "  {:<6}", inside.as_str());
            for outside in labels.iter() {
                let n = corr.get(outside, inside);
                let _ = write!(text, "{n:>7}");
                let pair = format!("{}>{}", outside.as_str(), inside.as_str());
                record(&mut jsonl, "correlation", Some(&pair), "count", json!(n));
            }
            text.push('\n');
        }
    }

    if let Some(eval) = input.prf {
        if blocks > 0 {
            text.push('\n');
        }
        let _ = writeln!(
            text,
            "  {:<8}{:>8}{:>8}{:>8}{:>7}{:>7}{:>7}",
            "label", "P", "R", "F1", "tp", "fp", "fn"
        );
        let row = |text: &mut String, jsonl: &mut String, name: &str, p: &Prf<F>, section: &str| {
            let _ = writeln!(
                text,
                "  {:<8}{:>8.2}{:>8.2}{:>8.2}{:>7}{:>7}{:>7}",
                name,
                p.precision.to_f64_lossy() * 100.0,
                p.recall.to_f64_lossy() * 100.0,
                p.f1.to_f64_lossy() * 100.0,
                p.tp,
                p.fp,
                p.fn_
            );
            let label = (section == "label").then_some(name);
            for (metric, v) in [("precision", p.precision), ("recall", p.recall), ("f1", p.f1)] {
                record(jsonl, section, label, metric, json!(v));
            }
            for (metric, v) in [("tp", p.tp), ("fp", p.fp), ("fn", p.fn_)] {
                record(jsonl, section, label, metric, json!(v));
            }
        };
        for (label, p) in &eval.per_label {
            row(&mut text, &mut jsonl, label.as_str(), p, "label");
        }
        row(&mut text, &mut jsonl, "micro", &eval.micro, "micro");
        let _ = writeln!(text, "  {:<8}{:>24.2}", "macro", eval.macro_f1.to_f64_lossy() * 100.0);
        record(&mut jsonl, "macro", None, "f1", json!(eval.macro_f1));
        let excluded: Vec<&str> = eval.excluded().map(Label::as_str).collect();
        if excluded.is_empty() {
            text.push_str("macro F1 averages every label\n");
        } else {
            let _ = writeln!(
                text,
                "macro F1 leaves out labels with no gold and no predicted spans: {}",
                excluded.join(" ")
            );
        }
    }

    Report { text, jsonl }
}
