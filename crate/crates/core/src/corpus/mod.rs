//! Nested-annotation data model: tokens, labels, spans and the validation
//! rules every annotation in a corpus obeys.

mod io;
mod stats;

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::cnlc::Sentinel;

pub use io::{parse_corpus, read_corpus_file, write_corpus, write_corpus_file, Format};
pub use stats::{
    bio_encode, corpus_stats, label_correlation, token_depths, BioLayer, BioTag, CorpusStats, CorrelationMatrix,
};

/// Label set used when a run does not configure one.
pub const DEFAULT_LABELS: [&str; 7] = ["PER", "ORG", "GPE", "FAC", "WEA", "LOC", "VEH"];

pub const DEFAULT_MAX_DEPTH: usize = 3;

/// Validation failures for a single annotation. Each rule has its own kind.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotationError {
    #[error("sentence id is empty")]
    EmptyId,
    #[error("token {index} is empty")]
    EmptyToken { index: usize },
    #[error("token {index} ({text:?}) contains whitespace")]
    WhitespaceInToken { index: usize, text: String },
    #[error("token {index} ({text:?}) collides with a reserved sentinel")]
    ReservedToken { index: usize, text: String },
    #[error("invalid label name {0:?}")]
    InvalidLabelName(String),
    #[error("label {0} is not in the configured label set")]
    UnknownLabel(String),
    #[error("span {span} is out of range for a sentence of {len} tokens")]
    OutOfRange { span: Span, len: usize },
    #[error("duplicate span {0}")]
    DuplicateSpan(Span),
    #[error("spans {0} and {1} cross")]
    CrossingSpans(Span, Span),
    #[error("token {token} has label depth {depth}, limit is {max}")]
    DepthExceeded { token: usize, depth: usize, max: usize },
}

/// Entity type name, `[A-Z][A-Z0-9_]*`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Label(String);

impl Label {
    pub fn new(name: impl Into<String>) -> Result<Self, AnnotationError> {
        let name = name.into();
        if is_label_name(&name) {
            Ok(Label(name))
        } else {
            Err(AnnotationError::InvalidLabelName(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

pub(crate) fn is_label_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_uppercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

impl TryFrom<String> for Label {
    type Error = AnnotationError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Label::new(value)
    }
}

impl From<Label> for String {
    fn from(label: Label) -> Self {
        label.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered, duplicate-free set of labels fixed for a run. The order is the
/// column order of every report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet(Vec<Label>);

impl LabelSet {
    pub fn new<I, S>(names: I) -> Result<Self, AnnotationError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels: Vec<Label> = Vec::new();
        for name in names {
            let label = Label::new(name)?;
            if !labels.contains(&label) {
                labels.push(label);
            }
        }
        Ok(LabelSet(labels))
    }

    pub fn contains(&self, label: &Label) -> bool {
        self.0.contains(label)
    }

    pub fn get(&self, name: &str) -> Option<&Label> {
        self.0.iter().find(|l| l.as_str() == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Label> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for LabelSet {
    fn default() -> Self {
        LabelSet::new(DEFAULT_LABELS).expect("default labels are well formed")
    }
}

/// Lowercase stopword list, one word per line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopList(HashSet<String>);

impl StopList {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        StopList(
            words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    pub fn from_reader<R: BufRead>(reader: R) -> std::io::Result<Self> {
        let lines = reader.lines().collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_words(lines))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-run validation context: which labels exist, which words are
/// stopwords, and how deep nesting may go.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub labels: LabelSet,
    pub stopwords: StopList,
    /// `None` disables the depth check (used before depth prefiltering).
    pub max_depth: Option<usize>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            labels: LabelSet::default(),
            stopwords: StopList::default(),
            max_depth: Some(DEFAULT_MAX_DEPTH),
        }
    }
}

impl Schema {
    pub fn with_max_depth(mut self, max_depth: Option<usize>) -> Self {
        self.max_depth = max_depth;
        self
    }

    pub fn with_stopwords(mut self, stopwords: StopList) -> Self {
        self.stopwords = stopwords;
        self
    }

    pub fn token(&self, index: usize, text: &str) -> Token {
        Token {
            text: text.to_string(),
            index,
            is_punct: is_punctuation(text),
            is_stopword: self.stopwords.contains(text),
        }
    }

    pub fn label(&self, name: &str) -> Result<Label, AnnotationError> {
        let label = Label::new(name)?;
        if self.labels.contains(&label) {
            Ok(label)
        } else {
            Err(AnnotationError::UnknownLabel(name.to_string()))
        }
    }
}

/// True when every character is Unicode punctuation (general category P*).
pub fn is_punctuation(text: &str) -> bool {
    !text.is_empty()
        && text.chars().all(|c| {
            matches!(
                get_general_category(c),
                GeneralCategory::ConnectorPunctuation
                    | GeneralCategory::DashPunctuation
                    | GeneralCategory::OpenPunctuation
                    | GeneralCategory::ClosePunctuation
                    | GeneralCategory::InitialPunctuation
                    | GeneralCategory::FinalPunctuation
                    | GeneralCategory::OtherPunctuation
            )
        })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub index: usize,
    pub is_punct: bool,
    pub is_stopword: bool,
}

/// Half-open token range `[start, end)` with a label.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: Label,
}

impl Span {
    pub fn new(start: usize, end: usize, label: Label) -> Self {
        Span { start, end, label }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn same_extent(&self, other: &Span) -> bool {
        self.start == other.start && self.end == other.end
    }

    /// `other` lies within `self` and is not the same span. Equal extents
    /// with different labels contain each other.
    pub fn contains(&self, other: &Span) -> bool {
        self != other && self.start <= other.start && other.end <= self.end
    }

    pub fn crosses(&self, other: &Span) -> bool {
        (self.start < other.start && other.start < self.end && self.end < other.end)
            || (other.start < self.start && self.start < other.end && other.end < self.end)
    }

    pub fn covers(&self, token: usize) -> bool {
        self.start <= token && token < self.end
    }

    /// Outer spans first: start ascending, end descending, label ascending.
    pub fn canonical_cmp(&self, other: &Span) -> std::cmp::Ordering {
        self.start
            .cmp(&other.start)
            .then(other.end.cmp(&self.end))
            .then_with(|| self.label.cmp(&other.label))
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{}]", self.start, self.end, self.label)
    }
}

/// A tokenized sentence with its nested entity spans. Spans are kept in
/// canonical order, so two annotations with the same span set compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestedAnnotation {
    id: String,
    tokens: Vec<Token>,
    spans: Vec<Span>,
}

impl NestedAnnotation {
    pub fn new<S: AsRef<str>>(
        id: impl Into<String>,
        words: &[S],
        spans: Vec<Span>,
        schema: &Schema,
    ) -> Result<Self, AnnotationError> {
        let id = id.into();
        if id.is_empty() {
            return Err(AnnotationError::EmptyId);
        }
        let mut tokens = Vec::with_capacity(words.len());
        for (index, word) in words.iter().enumerate() {
            let text = word.as_ref();
            check_token_text(index, text)?;
            tokens.push(schema.token(index, text));
        }
        let spans = validate_spans(tokens.len(), spans, schema)?;
        Ok(NestedAnnotation { id, tokens, spans })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    /// Same sentence under a new id.
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// True for tokens covered by at least one span.
    pub fn entity_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.tokens.len()];
        for span in &self.spans {
            for covered in &mut mask[span.start..span.end] {
                *covered = true;
            }
        }
        mask
    }

    /// Span labels sorted, i.e. the label multiset.
    pub fn label_multiset(&self) -> Vec<Label> {
        let mut labels: Vec<Label> = self.spans.iter().map(|s| s.label.clone()).collect();
        labels.sort();
        labels
    }

    pub fn max_depth(&self) -> usize {
        token_depths(self).into_iter().max().unwrap_or(0)
    }
}

fn check_token_text(index: usize, text: &str) -> Result<(), AnnotationError> {
    if text.is_empty() {
        return Err(AnnotationError::EmptyToken { index });
    }
    if text.chars().any(char::is_whitespace) {
        return Err(AnnotationError::WhitespaceInToken {
            index,
            text: text.to_string(),
        });
    }
    if Sentinel::from_surface(text).is_some() {
        return Err(AnnotationError::ReservedToken {
            index,
            text: text.to_string(),
        });
    }
    Ok(())
}

fn validate_spans(len: usize, mut spans: Vec<Span>, schema: &Schema) -> Result<Vec<Span>, AnnotationError> {
    for span in &spans {
        if !schema.labels.contains(&span.label) {
            return Err(AnnotationError::UnknownLabel(span.label.to_string()));
        }
        if span.start >= span.end || span.end > len {
            return Err(AnnotationError::OutOfRange {
                span: span.clone(),
                len,
            });
        }
    }
    spans.sort_by(Span::canonical_cmp);
    for pair in spans.windows(2) {
        if pair[0] == pair[1] {
            return Err(AnnotationError::DuplicateSpan(pair[0].clone()));
        }
    }
    for (i, a) in spans.iter().enumerate() {
        for b in &spans[i + 1..] {
            // canonical order: b.start >= a.start, so only b can start inside a
            if b.start >= a.end {
                break;
            }
            if a.crosses(b) {
                return Err(AnnotationError::CrossingSpans(a.clone(), b.clone()));
            }
        }
    }
    if let Some(max) = schema.max_depth {
        let mut depth = vec![0usize; len];
        for span in &spans {
            for d in &mut depth[span.start..span.end] {
                *d += 1;
            }
        }
        if let Some((token, &d)) = depth.iter().enumerate().find(|(_, &d)| d > max) {
            return Err(AnnotationError::DepthExceeded { token, depth: d, max });
        }
    }
    Ok(spans)
}
