//! Baseline lexical alignment between two labelled vocabularies.
//!
//! Every source/target pair is scored by the best Levenshtein similarity over their
//! (normalised) labels; mappings above a threshold are kept, optionally reduced to a
//! 1-to-1 alignment by confidence, and evaluated against a partial reference with recall
//! and estimated precision.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("reference mapping set is empty")]
    EmptyReference,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("threshold {0} outside (0, 1]")]
    Threshold(f64),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mapping {
    pub source: String,
    pub target: String,
    pub confidence: f64,
}

impl Mapping {
    pub fn new(source: impl Into<String>, target: impl Into<String>, confidence: f64) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            confidence,
        }
    }

    fn key(&self) -> (&str, &str) {
        (&self.source, &self.target)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentScores {
    pub num_mappings: usize,
    pub recall: f64,
    pub est_precision: f64,
}

/// Classic dynamic-programming edit distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - d(a, b) / max(|a|, |b|)`, with two empty strings defined as identical.
pub fn levenshtein_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(a, b) as f64 / longest as f64
}

/// Lowercases, trims and removes the abbreviation tokens `sp.` and `var.`.
pub fn normalize_label(label: &str) -> String {
    label
        .to_lowercase()
        .split_whitespace()
        .filter(|tok| *tok != "sp." && *tok != "var.")
        .collect::<Vec<_>>()
        .join(" ")
}

/// Emits `(s, t)` whenever the best label-pair similarity exceeds `threshold`.
pub fn lexical_match(
    src: &BTreeMap<String, Vec<String>>,
    tgt: &BTreeMap<String, Vec<String>>,
    threshold: f64,
) -> Result<Vec<Mapping>, AlignError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(AlignError::Threshold(threshold));
    }
    let norm = |m: &BTreeMap<String, Vec<String>>| -> Vec<(String, Vec<String>)> {
        m.iter()
            .map(|(k, labels)| (k.clone(), labels.iter().map(|l| normalize_label(l)).collect()))
            .collect()
    };
    let src = norm(src);
    let tgt = norm(tgt);
    let mut out = Vec::new();
    for (s, s_labels) in &src {
        for (t, t_labels) in &tgt {
            let mut best: f64 = 0.0;
            for a in s_labels {
                for b in t_labels {
                    best = best.max(levenshtein_similarity(a, b));
                }
            }
            if best > threshold {
                out.push(Mapping::new(s.clone(), t.clone(), best));
            }
        }
    }
    Ok(out)
}

/// Greedy 1-to-1 reduction: highest confidence first, ties by `(source, target)`.
pub fn filter_one_to_one(m: &[Mapping]) -> Vec<Mapping> {
    let mut sorted: Vec<&Mapping> = m.iter().collect();
    sorted.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.key().cmp(&b.key()))
    });
    let mut used_s = HashSet::new();
    let mut used_t = HashSet::new();
    let mut out = Vec::new();
    for mp in sorted {
        if used_s.contains(mp.source.as_str()) || used_t.contains(mp.target.as_str()) {
            continue;
        }
        used_s.insert(mp.source.as_str());
        used_t.insert(mp.target.as_str());
        out.push(mp.clone());
    }
    out
}

/// Recall against `reference` and precision estimated on the mappings that touch a
/// reference entity. Mappings are compared by `(source, target)` only.
pub fn evaluate_alignment(m: &[Mapping], reference: &[Mapping]) -> Result<AlignmentScores, AlignError> {
    if reference.is_empty() {
        return Err(AlignError::EmptyReference);
    }
    let ref_pairs: HashSet<(&str, &str)> = reference.iter().map(Mapping::key).collect();
    let ref_src: HashSet<&str> = reference.iter().map(|r| r.source.as_str()).collect();
    let ref_tgt: HashSet<&str> = reference.iter().map(|r| r.target.as_str()).collect();
    let m_pairs: HashSet<(&str, &str)> = m.iter().map(Mapping::key).collect();

    let approx: Vec<&(&str, &str)> = m_pairs
        .iter()
        .filter(|(s, t)| ref_src.contains(s) || ref_tgt.contains(t))
        .collect();
    let hits_approx = approx.iter().filter(|p| ref_pairs.contains(**p)).count();
    let hits = m_pairs.iter().filter(|p| ref_pairs.contains(*p)).count();
    let est_precision = if approx.is_empty() {
        0.0
    } else {
        hits_approx as f64 / approx.len() as f64
    };
    Ok(AlignmentScores {
        num_mappings: m_pairs.len(),
        recall: hits as f64 / ref_pairs.len() as f64,
        est_precision,
    })
}

/// Parses `source<TAB>target[<TAB>confidence]` lines (confidence defaults to 1).
pub fn parse_mappings(text: &str) -> Result<Vec<Mapping>, AlignError> {
    let mut out = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let err = |reason: String| AlignError::Parse { line: i + 1, reason };
        let confidence = match cols.len() {
            2 => 1.0,
            3 => cols[2]
                .trim()
                .parse::<f64>()
                .map_err(|e| err(format!("bad confidence {:?}: {e}", cols[2])))?,
            n => return Err(err(format!("expected 2 or 3 columns, found {n}"))),
        };
        if !(0.0..=1.0).contains(&confidence) {
            return Err(err(format!("confidence {confidence} outside [0, 1]")));
        }
        if cols[0].is_empty() || cols[1].is_empty() {
            return Err(err("empty entity name".into()));
        }
        out.push(Mapping::new(cols[0], cols[1], confidence));
    }
    Ok(out)
}

pub fn format_mappings(m: &[Mapping]) -> String {
    m.iter()
        .map(|x| format!("{}\t{}\t{}\n", x.source, x.target, x.confidence))
        .collect()
}

/// Parses `name<TAB>label` lines into a label map; repeated names accumulate labels.
pub fn parse_labels(text: &str) -> Result<BTreeMap<String, Vec<String>>, AlignError> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let (name, label) = line.split_once('\t').ok_or_else(|| AlignError::Parse {
            line: i + 1,
            reason: "expected name<TAB>label".into(),
        })?;
        out.entry(name.to_owned()).or_default().push(label.to_owned());
    }
    Ok(out)
}

pub fn read_file(path: &Path) -> Result<String, AlignError> {
    std::fs::read_to_string(path).map_err(|e| AlignError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
