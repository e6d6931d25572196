//! Result file formats.
//!
//! * per-document: `doc_id,label:score label:score ...`
//! * submission: `doc_id,label label ...`
//! * transposed: `label doc:score doc:score ...`
//!
//! Scores are written with six decimals. A result line keeps its entries in
//! file order, which for ranked output is best first.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{DocId, LabelId};
use crate::error::{Error, Result};
use crate::inference::{PredictionList, TransposedPrediction};

/// Keyed ranked lists; the key is a document id (per-document files) or a
/// label id (transposed files).
pub type ResultLists = BTreeMap<u64, Vec<(u64, Option<f64>)>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `doc_id,label[:score] ...`
    PerDocument,
    /// `label doc[:score] ...`
    PerLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    DocToLabel,
    LabelToDoc,
}

pub fn format_score(score: f64) -> String {
    format!("{score:.6}")
}

fn write_entries(out: &mut String, entries: &[(u64, Option<f64>)]) {
    for (i, (id, score)) in entries.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        match score {
            Some(s) => {
                let _ = write!(out, "{id}:{}", format_score(*s));
            }
            None => {
                let _ = write!(out, "{id}");
            }
        }
    }
}

pub fn format_lists(lists: &ResultLists, orientation: Orientation) -> String {
    let mut out = String::new();
    for (key, entries) in lists {
        let _ = write!(out, "{key}");
        match orientation {
            Orientation::PerDocument => out.push(','),
            Orientation::PerLabel => {
                if !entries.is_empty() {
                    out.push(' ');
                }
            }
        }
        write_entries(&mut out, entries);
        out.push('\n');
    }
    out
}

fn parse_entry(tok: &str) -> std::result::Result<(u64, Option<f64>), String> {
    let (id, score) = match tok.split_once(':') {
        Some((id, s)) => {
            let v: f64 = s.parse().map_err(|_| format!("invalid score in {tok:?}"))?;
            if !v.is_finite() {
                return Err(format!("non-finite score in {tok:?}"));
            }
            (id, Some(v))
        }
        None => (tok, None),
    };
    let id = id.parse().map_err(|_| format!("invalid id in {tok:?}"))?;
    Ok((id, score))
}

/// Parses a result file. A leading `Id,...` header line is skipped.
pub fn parse_lists(text: &str, orientation: Orientation, source_name: &str) -> Result<ResultLists> {
    let mut lists = ResultLists::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("Id")) {
            continue;
        }
        let err = |m: String| Error::parse(source_name, lineno + 1, m);
        let (key, rest) = match orientation {
            Orientation::PerDocument => line
                .split_once(',')
                .ok_or_else(|| err("expected \"doc_id,labels\"".into()))?,
            Orientation::PerLabel => line.split_once(' ').unwrap_or((line, "")),
        };
        let key: u64 = key.trim().parse().map_err(|_| err(format!("invalid key {key:?}")))?;
        let entries = rest
            .split_whitespace()
            .map(parse_entry)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(err)?;
        if lists.insert(key, entries).is_some() {
            return Err(err(format!("duplicate key {key}")));
        }
    }
    Ok(lists)
}

fn entry_order(a: &(u64, Option<f64>), b: &(u64, Option<f64>)) -> std::cmp::Ordering {
    let sa = a.1.unwrap_or(f64::NEG_INFINITY);
    let sb = b.1.unwrap_or(f64::NEG_INFINITY);
    sb.total_cmp(&sa).then(a.0.cmp(&b.0))
}

/// Swaps keys and entries. Output entries are ordered by score descending,
/// then id ascending.
pub fn transpose_lists(lists: &ResultLists) -> ResultLists {
    let mut out = ResultLists::new();
    for (&key, entries) in lists {
        for &(id, score) in entries {
            out.entry(id).or_default().push((key, score));
        }
    }
    for entries in out.values_mut() {
        entries.sort_by(entry_order);
    }
    out
}

/// Transposes result-file text in the given direction.
pub fn transpose_results(text: &str, direction: Direction, source_name: &str) -> Result<String> {
    let (from, to) = match direction {
        Direction::DocToLabel => (Orientation::PerDocument, Orientation::PerLabel),
        Direction::LabelToDoc => (Orientation::PerLabel, Orientation::PerDocument),
    };
    let lists = parse_lists(text, from, source_name)?;
    Ok(format_lists(&transpose_lists(&lists), to))
}

pub fn read_lists(path: impl AsRef<Path>, orientation: Orientation) -> Result<ResultLists> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lists(&text, orientation, &path.display().to_string())
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn predictions_to_lists(preds: &[PredictionList]) -> ResultLists {
    preds
        .iter()
        .map(|p| (p.doc_id, p.entries.iter().map(|&(l, s)| (l as u64, Some(s))).collect()))
        .collect()
}

pub fn transposed_to_lists(tp: &TransposedPrediction) -> ResultLists {
    tp.lists
        .iter()
        .map(|(&l, list)| (l as u64, list.iter().map(|i| (i.doc_id, Some(i.score))).collect()))
        .collect()
}

/// Submission lines for every document in `doc_ids`, labels ascending.
pub fn format_submission(labelsets: &BTreeMap<DocId, Vec<LabelId>>) -> String {
    let mut out = String::new();
    for (doc, labels) in labelsets {
        let mut labels = labels.clone();
        labels.sort_unstable();
        labels.dedup();
        let _ = write!(out, "{doc},");
        for (i, l) in labels.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{l}");
        }
        out.push('\n');
    }
    out
}

/// Ranked label lists per document, as used for evaluation.
pub fn lists_to_rankings(lists: &ResultLists) -> Result<BTreeMap<DocId, Vec<LabelId>>> {
    lists
        .iter()
        .map(|(&doc, entries)| {
            let labels = entries
                .iter()
                .map(|&(l, _)| {
                    LabelId::try_from(l).map_err(|_| Error::InvalidInput(format!("label id {l} out of range")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((doc, labels))
        })
        .collect()
}
