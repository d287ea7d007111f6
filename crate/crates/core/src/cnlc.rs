//! Composite nested-label linearization.
//!
//! Each span is wrapped in its own pair of label sentinels, so nested
//! entities become nested brackets:
//!
//! ```text
//! <FAC> The <GPE> Chinese </GPE> embassy </FAC> in France
//! ```
//!
//! At a shared boundary the longer span opens first and closes last. Spans
//! with the same extent nest by label name, the smallest outermost. The
//! inverse is a single left-to-right pass with a stack of open labels.

use std::fmt;

use crate::corpus::{is_label_name, Label, NestedAnnotation, Schema, Span};
use crate::error::CodecError;

pub const MASK: &str = "<mask>";
pub const FUSE: &str = "<fuse>";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Sentinel {
    Open(Label),
    Close(Label),
    Mask,
    Fuse,
}

impl Sentinel {
    /// Recognize a reserved surface form. Any label-shaped name counts,
    /// whether or not it is in the run's label set.
    pub fn from_surface(text: &str) -> Option<Sentinel> {
        match text {
            MASK => return Some(Sentinel::Mask),
            FUSE => return Some(Sentinel::Fuse),
            _ => {}
        }
        let inner = text.strip_prefix('<')?.strip_suffix('>')?;
        let (closing, name) = match inner.strip_prefix('/') {
            Some(name) => (true, name),
            None => (false, inner),
        };
        if !is_label_name(name) {
            return None;
        }
        let label = Label::new(name).ok()?;
        Some(if closing {
            Sentinel::Close(label)
        } else {
            Sentinel::Open(label)
        })
    }

    pub fn surface(&self) -> String {
        match self {
            Sentinel::Open(l) => format!("<{l}>"),
            Sentinel::Close(l) => format!("</{l}>"),
            Sentinel::Mask => MASK.to_string(),
            Sentinel::Fuse => FUSE.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Item {
    Word(String),
    Sentinel(Sentinel),
}

impl Item {
    pub fn from_surface(text: &str) -> Item {
        match Sentinel::from_surface(text) {
            Some(s) => Item::Sentinel(s),
            None => Item::Word(text.to_string()),
        }
    }

    pub fn surface(&self) -> String {
        match self {
            Item::Word(w) => w.clone(),
            Item::Sentinel(s) => s.surface(),
        }
    }

    pub fn is_mask(&self) -> bool {
        matches!(self, Item::Sentinel(Sentinel::Mask))
    }

    pub fn is_word(&self) -> bool {
        matches!(self, Item::Word(_))
    }

    pub fn word(&self) -> Option<&str> {
        match self {
            Item::Word(w) => Some(w),
            Item::Sentinel(_) => None,
        }
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Item::Word(w) => f.write_str(w),
            Item::Sentinel(s) => f.write_str(&s.surface()),
        }
    }
}

/// Tokens interleaved with sentinels. The text form joins surface forms
/// with single spaces.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LinearizedSequence {
    pub source_id: String,
    pub items: Vec<Item>,
}

impl LinearizedSequence {
    pub fn new(source_id: impl Into<String>, items: Vec<Item>) -> Self {
        LinearizedSequence {
            source_id: source_id.into(),
            items,
        }
    }

    /// Split on whitespace and classify every piece. Never fails: whether
    /// the sentinels make sense is for [`delinearize`] to decide.
    pub fn parse(source_id: impl Into<String>, text: &str) -> Self {
        Self::new(source_id, text.split_whitespace().map(Item::from_surface).collect())
    }

    pub fn to_text(&self) -> String {
        join_items(&self.items)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Drop `<fuse>` separators, joining the fused parts into one sentence.
    pub fn without_fuse(&self) -> LinearizedSequence {
        LinearizedSequence::new(
            self.source_id.clone(),
            self.items
                .iter()
                .filter(|i| !matches!(i, Item::Sentinel(Sentinel::Fuse)))
                .cloned()
                .collect(),
        )
    }
}

impl fmt::Display for LinearizedSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

pub fn join_items(items: &[Item]) -> String {
    items.iter().map(Item::surface).collect::<Vec<_>>().join(" ")
}

/// Sequence file: one `source_id<TAB>sequence` line per sequence.
pub fn write_sequences(seqs: &[LinearizedSequence]) -> String {
    let mut out = String::new();
    for seq in seqs {
        out.push_str(&seq.source_id);
        out.push('\t');
        out.push_str(&seq.to_text());
        out.push('\n');
    }
    out
}

/// Read a sequence file. Lines without a tab get the id `line-N`; blank
/// lines are skipped.
pub fn parse_sequences(text: &str) -> Vec<LinearizedSequence> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| match line.split_once('\t') {
            Some((id, body)) => LinearizedSequence::parse(id, body),
            None => LinearizedSequence::parse(format!("line-{}", i + 1), line),
        })
        .collect()
}

pub fn linearize(ann: &NestedAnnotation) -> LinearizedSequence {
    let mut items = Vec::with_capacity(ann.len() + 2 * ann.spans().len());
    let mut open: Vec<&Span> = Vec::new();
    let mut pending = ann.spans().iter().peekable();
    for (i, token) in ann.tokens().iter().enumerate() {
        while let Some(span) = pending.next_if(|s| s.start == i) {
            items.push(Item::Sentinel(Sentinel::Open(span.label.clone())));
            open.push(span);
        }
        items.push(Item::Word(token.text.clone()));
        while let Some(span) = open.pop_if(|s| s.end == i + 1) {
            items.push(Item::Sentinel(Sentinel::Close(span.label.clone())));
        }
    }
    LinearizedSequence::new(ann.id(), items)
}

pub fn delinearize(seq: &LinearizedSequence, schema: &Schema) -> Result<NestedAnnotation, CodecError> {
    let mut words: Vec<&str> = Vec::new();
    let mut spans = Vec::new();
    let mut open: Vec<(&Label, usize, usize)> = Vec::new();
    for (position, item) in seq.items.iter().enumerate() {
        match item {
            Item::Word(w) => words.push(w),
            Item::Sentinel(Sentinel::Open(label)) => {
                check_label(label, position, schema)?;
                open.push((label, words.len(), position));
            }
            Item::Sentinel(Sentinel::Close(label)) => {
                check_label(label, position, schema)?;
                let (opened, start, _) = open.pop().ok_or_else(|| CodecError::UnmatchedClose {
                    label: label.to_string(),
                    position,
                })?;
                if opened != label {
                    return Err(CodecError::MismatchedClose {
                        expected: opened.to_string(),
                        found: label.to_string(),
                        position,
                    });
                }
                if start == words.len() {
                    return Err(CodecError::EmptySpan {
                        label: label.to_string(),
                        position,
                    });
                }
                spans.push(Span::new(start, words.len(), label.clone()));
            }
            Item::Sentinel(s @ (Sentinel::Mask | Sentinel::Fuse)) => {
                return Err(CodecError::ResidualSentinel {
                    surface: s.surface(),
                    position,
                })
            }
        }
    }
    if let Some((label, _, position)) = open.pop() {
        return Err(CodecError::Unbalanced {
            label: label.to_string(),
            position,
        });
    }
    Ok(NestedAnnotation::new(seq.source_id.clone(), &words, spans, schema)?)
}

fn check_label(label: &Label, position: usize, schema: &Schema) -> Result<(), CodecError> {
    if schema.labels.contains(label) {
        Ok(())
    } else {
        Err(CodecError::UnknownLabel {
            label: label.to_string(),
            position,
        })
    }
}

pub fn strip_sentinels(seq: &LinearizedSequence) -> Vec<&str> {
    seq.items.iter().filter_map(Item::word).collect()
}
