//! Corpus file formats.
//!
//! `jsonl` is canonical: one object per line with keys `id`, `tokens`,
//! `spans` in that order, spans as `[start,end,"LABEL"]` triples in
//! canonical order. Writing then parsing is the identity, and writing is
//! byte-stable.
//!
//! `inline` is a fixture-friendly bracket format, one sentence per line,
//! optionally prefixed by `id<TAB>`:
//!
//! ```text
//! [FAC The [GPE Chinese ] embassy ] in France
//! ```

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AnnotationError, Label, NestedAnnotation, Schema, Span};
use crate::error::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Inline,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(Format::Jsonl),
            "inline" | "inline-bracket" => Ok(Format::Inline),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

impl Format {
    /// Guess from a file extension; anything but `.txt`/`.inline` is jsonl.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("txt") | Some("inline") => Format::Inline,
            _ => Format::Jsonl,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    tokens: Vec<String>,
    spans: Vec<(usize, usize, String)>,
}

impl Record {
    fn from_annotation(ann: &NestedAnnotation) -> Self {
        Record {
            id: ann.id().to_string(),
            tokens: ann.words().map(str::to_string).collect(),
            spans: ann
                .spans()
                .iter()
                .map(|s| (s.start, s.end, s.label.to_string()))
                .collect(),
        }
    }

    fn into_annotation(self, schema: &Schema) -> Result<NestedAnnotation, AnnotationError> {
        let spans = self
            .spans
            .into_iter()
            .map(|(start, end, name)| Ok(Span::new(start, end, Label::new(name)?)))
            .collect::<Result<Vec<_>, AnnotationError>>()?;
        NestedAnnotation::new(self.id, &self.tokens, spans, schema)
    }
}

/// Parse a whole corpus. Line numbers in errors are 1-based.
pub fn parse_corpus<R: Read>(reader: R, format: Format, schema: &Schema) -> Result<Vec<NestedAnnotation>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).split(b'\n').enumerate() {
        let line_no = idx + 1;
        let bytes = line?;
        let text = String::from_utf8(bytes).map_err(|_| CorpusError::Utf8 { line: line_no })?;
        let text = text.strip_suffix('\r').unwrap_or(&text);
        if text.trim().is_empty() {
            continue;
        }
        let ann = match format {
            Format::Jsonl => parse_jsonl_line(text, line_no, schema)?,
            Format::Inline => parse_inline_line(text, line_no, schema)?,
        };
        if !seen.insert(ann.id().to_string()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: ann.id().to_string(),
            });
        }
        out.push(ann);
    }
    Ok(out)
}

fn parse_jsonl_line(text: &str, line: usize, schema: &Schema) -> Result<NestedAnnotation, CorpusError> {
    let record: Record = serde_json::from_str(text).map_err(|e| CorpusError::Malformed {
        line,
        message: e.to_string(),
    })?;
    let id = record.id.clone();
    record
        .into_annotation(schema)
        .map_err(|source| CorpusError::Invalid { line, id, source })
}

fn parse_inline_line(text: &str, line: usize, schema: &Schema) -> Result<NestedAnnotation, CorpusError> {
    let (id, body) = match text.split_once('\t') {
        Some((id, body)) => (id.trim().to_string(), body),
        None => (format!("line-{line}"), text),
    };
    let malformed = |message: String| CorpusError::Malformed {
        line,
        message: message.to_string(),
    };
    let mut words: Vec<&str> = Vec::new();
    let mut open: Vec<(usize, Label)> = Vec::new();
    let mut spans = Vec::new();
    for piece in body.split_whitespace() {
        if piece == "]" {
            let (start, label) = open
                .pop()
                .ok_or_else(|| malformed("closing bracket without an open one".into()))?;
            if start == words.len() {
                return Err(malformed(format!("empty [{label} ] span")));
            }
            spans.push(Span::new(start, words.len(), label));
        } else if let Some(label) = inline_open(piece) {
            open.push((words.len(), label));
        } else {
            words.push(piece);
        }
    }
    if let Some((_, label)) = open.last() {
        return Err(malformed(format!("unclosed [{label} span")));
    }
    NestedAnnotation::new(id.clone(), &words, spans, schema).map_err(|source| CorpusError::Invalid { line, id, source })
}

fn inline_open(piece: &str) -> Option<Label> {
    piece.strip_prefix('[').and_then(|name| Label::new(name).ok())
}

/// Serialize a corpus. Only the inline format can fail, for tokens that
/// look like its brackets.
pub fn write_corpus(annotations: &[NestedAnnotation], format: Format) -> Result<String, CorpusError> {
    let mut out = String::new();
    for ann in annotations {
        match format {
            Format::Jsonl => {
                let line = serde_json::to_string(&Record::from_annotation(ann)).expect("records always serialize");
                out.push_str(&line);
            }
            Format::Inline => out.push_str(&inline_line(ann)?),
        }
        out.push('\n');
    }
    Ok(out)
}

fn inline_line(ann: &NestedAnnotation) -> Result<String, CorpusError> {
    let mut pieces: Vec<String> = Vec::new();
    let mut stack: Vec<&Span> = Vec::new();
    let mut next = ann.spans().iter().peekable();
    for (i, token) in ann.tokens().iter().enumerate() {
        if token.text == "]" || inline_open(&token.text).is_some() {
            return Err(CorpusError::Unrepresentable {
                id: ann.id().to_string(),
                text: token.text.clone(),
            });
        }
        while let Some(span) = next.next_if(|s| s.start == i) {
            pieces.push(format!("[{}", span.label));
            stack.push(span);
        }
        pieces.push(token.text.clone());
        while stack.last().is_some_and(|s| s.end == i + 1) {
            stack.pop();
            pieces.push("]".to_string());
        }
    }
    Ok(format!("{}\t{}", ann.id(), pieces.join(" ")))
}

pub fn read_corpus_file(path: &Path, schema: &Schema) -> Result<Vec<NestedAnnotation>, CorpusError> {
    let file = fs::File::open(path)?;
    parse_corpus(file, Format::from_path(path), schema)
}

pub fn write_corpus_file(path: &Path, annotations: &[NestedAnnotation]) -> Result<(), CorpusError> {
    fs::write(path, write_corpus(annotations, Format::from_path(path))?)?;
    Ok(())
}
