//! Confusion metrics, Youden's index, run aggregation and explained variance.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    Length { scores: usize, labels: usize },
    #[error("empty batch")]
    Empty,
    #[error("label {0} is not 0 or 1")]
    Label(f64),
    #[error("{0} is undefined: no {1} samples")]
    UndefinedRate(&'static str, &'static str),
    #[error("explained variance needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("embedding matrix has zero total variance")]
    ZeroVariance,
    #[error("no runs to aggregate")]
    NoRuns,
    #[error("metrics file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_batch(scores: &[f64], labels: &[f64]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::Length {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    match labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        Some(&y) => Err(EvalError::Label(y)),
        None => Ok(()),
    }
}

/// Counts under the decision rule `ŷ > τ`.
pub fn confusion(scores: &[f64], labels: &[f64], tau: f64) -> Result<ConfusionCounts, EvalError> {
    check_batch(scores, labels)?;
    let mut c = ConfusionCounts::default();
    for (&p, &y) in scores.iter().zip(labels) {
        match (p > tau, y == 1.0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub sensitivity: f64,
    pub specificity: f64,
    /// Youden's index, `sensitivity + specificity − 1`.
    pub yi: f64,
}

pub fn youden(sensitivity: f64, specificity: f64) -> f64 {
    sensitivity + specificity - 1.0
}

pub fn compute_metrics(c: &ConfusionCounts) -> Result<Rates, EvalError> {
    if c.tp + c.fn_ == 0 {
        return Err(EvalError::UndefinedRate("sensitivity", "positive"));
    }
    if c.tn + c.fp == 0 {
        return Err(EvalError::UndefinedRate("specificity", "negative"));
    }
    let sensitivity = c.tp as f64 / (c.tp + c.fn_) as f64;
    let specificity = c.tn as f64 / (c.tn + c.fp) as f64;
    Ok(Rates {
        sensitivity,
        specificity,
        yi: youden(sensitivity, specificity),
    })
}

/// Maximum Youden's index over thresholds and the smallest threshold attaining it.
///
/// Candidates are 0, 1 and the midpoints between consecutive distinct scores, which
/// covers every distinct labelling a threshold can induce on the batch.
pub fn youden_max(scores: &[f64], labels: &[f64]) -> Result<(f64, f64), EvalError> {
    check_batch(scores, labels)?;
    let pos = labels.iter().filter(|&&y| y == 1.0).count();
    let neg = labels.len() - pos;
    if pos == 0 {
        return Err(EvalError::UndefinedRate("sensitivity", "positive"));
    }
    if neg == 0 {
        return Err(EvalError::UndefinedRate("specificity", "negative"));
    }
    let mut pairs: Vec<(f64, bool)> = scores.iter().zip(labels).map(|(&p, &y)| (p, y == 1.0)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut taus = vec![0.0, 1.0];
    taus.extend(pairs.windows(2).filter(|w| w[0].0 < w[1].0).map(|w| (w[0].0 + w[1].0) / 2.0));
    taus.sort_by(f64::total_cmp);
    taus.dedup();

    // Sweep thresholds upwards, moving samples with score ≤ τ to the negative side.
    let (mut i, mut pos_below, mut neg_below) = (0, 0usize, 0usize);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for tau in taus {
        while i < pairs.len() && pairs[i].0 <= tau {
            if pairs[i].1 {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            i += 1;
        }
        let yi = youden((pos - pos_below) as f64 / pos as f64, neg_below as f64 / neg as f64);
        if yi > best.0 {
            best = (yi, tau);
        }
    }
    Ok(best)
}

/// Per-run metrics: rates at the default threshold plus the tuned threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sensitivity: f64,
    pub specificity: f64,
    pub yi: f64,
    pub yi_max: f64,
    pub tau_max: f64,
}

/// Scores a test batch. `tau_max` is chosen on `tuning` (validation by default, or the test
/// batch itself) and `yi_max` is the test YI at that threshold.
pub fn evaluate(
    test_scores: &[f64],
    test_labels: &[f64],
    tuning: (&[f64], &[f64]),
    tau: f64,
) -> Result<MetricsReport, EvalError> {
    let at_default = compute_metrics(&confusion(test_scores, test_labels, tau)?)?;
    let (_, tau_max) = youden_max(tuning.0, tuning.1)?;
    let at_tuned = compute_metrics(&confusion(test_scores, test_labels, tau_max)?)?;
    Ok(MetricsReport {
        sensitivity: at_default.sensitivity,
        specificity: at_default.specificity,
        yi: at_default.yi,
        yi_max: at_tuned.yi,
        tau_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self, EvalError> {
        if values.is_empty() {
            return Err(EvalError::NoRuns);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Self { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub sensitivity: Summary,
    pub specificity: Summary,
    pub yi: Summary,
    pub yi_max: Summary,
    pub tau_max: Summary,
}

pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<Aggregate, EvalError> {
    let col = |f: fn(&MetricsReport) -> f64| Summary::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(Aggregate {
        sensitivity: col(|r| r.sensitivity)?,
        specificity: col(|r| r.specificity)?,
        yi: col(|r| r.yi)?,
        yi_max: col(|r| r.yi_max)?,
        tau_max: col(|r| r.tau_max)?,
    })
}

/// Fraction of total variance captured by the leading `components` principal components.
pub fn explained_variance(m: &Matrix, components: usize) -> Result<f64, EvalError> {
    let (n, k) = m.shape();
    if n < 2 {
        return Err(EvalError::TooFewRows(n));
    }
    let x = DMatrix::from_row_slice(n, k, m.as_slice());
    let mean = x.row_mean();
    let centred = DMatrix::from_fn(n, k, |r, c| x[(r, c)] - mean[c]);
    let cov = centred.transpose() * &centred;
    let mut eig: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = eig.iter().sum();
    if total <= 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok((eig.iter().take(components).sum::<f64>() / total).min(1.0))
}

pub const METRICS_HEADER: &str = "model,strategy,run,sensitivity,specificity,yi,yi_max,tau_max";

/// One metrics CSV row; `run` is a run index, `mean` or `std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub strategy: String,
    pub run: String,
    pub sensitivity: f64,
    pub specificity: f64,
    pub yi: f64,
    pub yi_max: f64,
    pub tau_max: f64,
}

impl MetricsRow {
    pub fn from_report(model: &str, strategy: &str, run: impl ToString, r: &MetricsReport) -> Self {
        Self {
            model: model.to_owned(),
            strategy: strategy.to_owned(),
            run: run.to_string(),
            sensitivity: r.sensitivity,
            specificity: r.specificity,
            yi: r.yi,
            yi_max: r.yi_max,
            tau_max: r.tau_max,
        }
    }

    /// The `mean` and `std` rows for an aggregate.
    pub fn from_aggregate(model: &str, strategy: &str, a: &Aggregate) -> [Self; 2] {
        let pick = |f: fn(&Summary) -> f64| MetricsReport {
            sensitivity: f(&a.sensitivity),
            specificity: f(&a.specificity),
            yi: f(&a.yi),
            yi_max: f(&a.yi_max),
            tau_max: f(&a.tau_max),
        };
        [
            Self::from_report(model, strategy, "mean", &pick(|s| s.mean)),
            Self::from_report(model, strategy, "std", &pick(|s| s.std)),
        ]
    }
}

pub fn write_metrics(rows: &[MetricsRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.model, r.strategy, r.run, r.sensitivity, r.specificity, r.yi, r.yi_max, r.tau_max
        )?;
    }
    Ok(())
}

pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRow>, EvalError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| EvalError::Parse {
        line: 1,
        reason: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>().join(",") != METRICS_HEADER {
        return Err(EvalError::Parse {
            line: 1,
            reason: format!("expected header `{METRICS_HEADER}`"),
        });
    }
    rd.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| EvalError::Parse {
                line: i + 2,
                reason: e.to_string(),
            })
        })
        .collect()
}
