//! Effect records: ingestion, unit conversion, binarisation, de-duplication and splits.
//!
//! The preparation pipeline turns raw CSV rows into samples `(c, s, κ, y)` where `κ` is
//! the base-10 log of the concentration in mg/L and `y = 1` marks a lethal effect.

mod prep;
mod split;
mod units;

pub use prep::{
    binarize_label, dedup_median, log_normalize, parse_samples, prepare, read_samples, write_samples, EntityFilter,
    NameMap, Sample,
};
pub use split::{oversample, split_strategy, write_split, Proportions, SplitResult, Strategy};
pub use units::{convert_units, parse_unit_registry, UnitRegistry};

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EffectsError {
    #[error("row {row}: {reason}")]
    Parse { row: usize, reason: String },
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("unit {unit:?} not in registry (known: {known})")]
    UnknownUnit { unit: String, known: String },
    #[error("concentration {0} is not positive")]
    NonPositive(f64),
    #[error("invalid proportions {0:?}: need three positive values summing to 1")]
    Proportions([f64; 3]),
    #[error("{0}")]
    TooFewGroups(String),
    #[error("label {0} absent from the training data")]
    MissingClass(u8),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// One experiment as read from the effects file.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectRecord {
    pub chemical: String,
    pub species: String,
    pub concentration: f64,
    pub unit: String,
    pub endpoint: String,
    pub effect: String,
}

#[derive(Deserialize)]
struct Row {
    chemical: String,
    species: String,
    concentration: String,
    unit: String,
    endpoint: String,
    #[serde(default)]
    effect: String,
}

pub(crate) const EFFECT_COLUMNS: [&str; 6] = ["chemical", "species", "concentration", "unit", "endpoint", "effect"];

fn csv_error(e: csv::Error) -> EffectsError {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    EffectsError::Parse {
        row,
        reason: e.to_string(),
    }
}

pub(crate) fn require_columns(headers: &csv::StringRecord, cols: &[&str]) -> Result<(), EffectsError> {
    for c in cols {
        if !headers.iter().any(|h| h.trim() == *c) {
            return Err(EffectsError::MissingColumn((*c).to_owned()));
        }
    }
    Ok(())
}

/// Parses an effects CSV; unknown columns are ignored, row numbers count the header as 1.
pub fn parse_effects(text: &str) -> Result<Vec<EffectRecord>, EffectsError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    require_columns(rdr.headers().map_err(csv_error)?, &EFFECT_COLUMNS)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(csv_error)?;
        let concentration: f64 = row.concentration.parse().map_err(|_| EffectsError::Parse {
            row: i + 2,
            reason: format!("concentration {:?} is not a number", row.concentration),
        })?;
        if !concentration.is_finite() {
            return Err(EffectsError::Parse {
                row: i + 2,
                reason: format!("concentration {:?} is not finite", row.concentration),
            });
        }
        out.push(EffectRecord {
            chemical: row.chemical,
            species: row.species,
            concentration,
            unit: row.unit,
            endpoint: row.endpoint,
            effect: row.effect,
        });
    }
    Ok(out)
}

pub fn load_effects(path: impl AsRef<Path>) -> Result<Vec<EffectRecord>, EffectsError> {
    parse_effects(&read_text(path)?)
}

pub(crate) fn read_text(path: impl AsRef<Path>) -> Result<String, EffectsError> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|e| EffectsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
