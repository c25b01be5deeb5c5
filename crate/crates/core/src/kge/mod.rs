//! Knowledge-graph embedding models.
//!
//! Nine scoring functions over three families:
//!
//! | family        | models                         | polarity                 |
//! |---------------|--------------------------------|--------------------------|
//! | decomposition | DistMult, ComplEx, HolE        | higher = more plausible  |
//! | geometric     | TransE, RotatE, pRotatE, HAKE  | distance, lower = better |
//! | convolutional | ConvKB, ConvE                  | higher = more plausible  |
//!
//! Losses never see raw geometric distances: [`KgeConfig::plausibility`] maps a raw score
//! to `bias - distance` for geometric models and leaves the others unchanged.
//!
//! Vector layouts per [`Representation`]:
//! - `Real`: `k` reals.
//! - `Complex`: `2k` reals, interleaved `(re, im)` pairs.
//! - `ModulusPhase` (HAKE): `k` moduli followed by `k` phases.
//! - `Phase` (pRotatE): `k` phases.
//!
//! RotatE relations store `k` phases only, the unit modulus being structural.

mod conv;
mod holo;
pub mod score;
mod table;

pub use conv::{ConvKind, ConvParams, ConvShape};
pub use holo::{circular_convolution, circular_correlation};
pub use score::ScoreGradients;
pub use table::{init_embeddings, EmbeddingTable};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::EntityTriple;

#[derive(Debug, Error, PartialEq)]
pub enum KgeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{model} expects a {expected:?} table, got {got:?}")]
    Representation {
        model: ModelKind,
        expected: Representation,
        got: Representation,
    },
    #[error("table width mismatch: expected {expected}, got {got}")]
    Width { expected: usize, got: usize },
    #[error("{0} requires convolution parameters")]
    MissingConv(ModelKind),
    #[error("triple references id {0} outside the table")]
    OutOfRange(u32),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    DistMult,
    ComplEx,
    HolE,
    TransE,
    RotatE,
    #[serde(rename = "pRotatE")]
    PRotatE,
    #[serde(rename = "HAKE")]
    Hake,
    ConvKB,
    ConvE,
}

impl ModelKind {
    pub const ALL: [ModelKind; 9] = [
        ModelKind::DistMult,
        ModelKind::ComplEx,
        ModelKind::HolE,
        ModelKind::TransE,
        ModelKind::RotatE,
        ModelKind::PRotatE,
        ModelKind::Hake,
        ModelKind::ConvKB,
        ModelKind::ConvE,
    ];

    /// Distance-based models whose raw score is lower for plausible triples.
    pub fn is_geometric(self) -> bool {
        matches!(self, ModelKind::TransE | ModelKind::RotatE | ModelKind::PRotatE | ModelKind::Hake)
    }

    pub fn is_convolutional(self) -> bool {
        matches!(self, ModelKind::ConvKB | ModelKind::ConvE)
    }

    pub fn representation(self) -> Representation {
        match self {
            ModelKind::ComplEx | ModelKind::RotatE => Representation::Complex,
            ModelKind::Hake => Representation::ModulusPhase,
            ModelKind::PRotatE => Representation::Phase,
            _ => Representation::Real,
        }
    }

    pub fn entity_width(self, k: usize) -> usize {
        match self.representation() {
            Representation::Real | Representation::Phase => k,
            Representation::Complex | Representation::ModulusPhase => 2 * k,
        }
    }

    pub fn relation_width(self, k: usize) -> usize {
        match self {
            ModelKind::ComplEx | ModelKind::Hake => 2 * k,
            _ => k,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::DistMult => "DistMult",
            ModelKind::ComplEx => "ComplEx",
            ModelKind::HolE => "HolE",
            ModelKind::TransE => "TransE",
            ModelKind::RotatE => "RotatE",
            ModelKind::PRotatE => "pRotatE",
            ModelKind::Hake => "HAKE",
            ModelKind::ConvKB => "ConvKB",
            ModelKind::ConvE => "ConvE",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = KgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| KgeError::UnknownModel(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    Real,
    Complex,
    ModulusPhase,
    Phase,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::Real => "real",
            Representation::Complex => "complex",
            Representation::ModulusPhase => "modulus-phase",
            Representation::Phase => "phase",
        }
    }
}

impl FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(Representation::Real),
            "complex" => Ok(Representation::Complex),
            "modulus-phase" => Ok(Representation::ModulusPhase),
            "phase" => Ok(Representation::Phase),
            _ => Err(format!("unknown representation {s:?}")),
        }
    }
}

fn default_norm() -> u8 {
    2
}
fn default_modulus() -> f64 {
    1.0
}
fn default_filters() -> usize {
    8
}

/// Model hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgeConfig {
    pub model: ModelKind,
    /// Embedding dimension `k` (complex models store `2k` reals).
    pub dim: usize,
    #[serde(default = "default_norm")]
    pub norm_order: u8,
    /// Additive plausibility offset for geometric models.
    #[serde(default)]
    pub bias: f64,
    /// Modulus constraint used by pRotatE.
    #[serde(default = "default_modulus")]
    pub modulus: f64,
    #[serde(default = "default_filters")]
    pub conv_filters: usize,
    /// Overrides the ConvE kernel (rows, cols); defaults to 3×3 clipped to the image.
    #[serde(default)]
    pub conv_kernel: Option<(usize, usize)>,
    /// Overrides the ConvE reshape (rows, cols) of each embedding.
    #[serde(default)]
    pub conve_reshape: Option<(usize, usize)>,
}

impl KgeConfig {
    pub fn new(model: ModelKind, dim: usize) -> Self {
        Self {
            model,
            dim,
            norm_order: default_norm(),
            bias: 0.0,
            modulus: default_modulus(),
            conv_filters: default_filters(),
            conv_kernel: None,
            conve_reshape: None,
        }
    }

    pub fn validate(&self) -> Result<(), KgeError> {
        if self.dim == 0 {
            return Err(KgeError::Config("dimension must be at least 1".into()));
        }
        if !matches!(self.norm_order, 1 | 2) {
            return Err(KgeError::Config(format!("norm order {} not in {{1, 2}}", self.norm_order)));
        }
        if !(self.bias >= 0.0 && self.bias.is_finite()) {
            return Err(KgeError::Config(format!("bias {} must be finite and ≥ 0", self.bias)));
        }
        if !(self.modulus > 0.0 && self.modulus.is_finite()) {
            return Err(KgeError::Config(format!("modulus constraint {} must be > 0", self.modulus)));
        }
        if self.model.is_convolutional() {
            self.conv_shape()?;
        }
        Ok(())
    }

    pub fn entity_width(&self) -> usize {
        self.model.entity_width(self.dim)
    }

    pub fn relation_width(&self) -> usize {
        self.model.relation_width(self.dim)
    }

    /// Convolution geometry for ConvKB/ConvE; `None` for other models.
    pub fn conv_shape(&self) -> Result<Option<ConvShape>, KgeError> {
        match self.model {
            ModelKind::ConvKB => Ok(Some(ConvShape::conv_kb(self.dim, self.conv_filters)?)),
            ModelKind::ConvE => Ok(Some(ConvShape::conv_e(
                self.dim,
                self.conv_filters,
                self.conve_reshape,
                self.conv_kernel,
            )?)),
            _ => Ok(None),
        }
    }

    /// Maps a raw score to "higher = more plausible".
    pub fn plausibility_of(&self, raw: f64) -> f64 {
        if self.model.is_geometric() {
            self.bias - raw
        } else {
            raw
        }
    }

    /// `d plausibility / d raw`.
    pub fn plausibility_sign(&self) -> f64 {
        if self.model.is_geometric() {
            -1.0
        } else {
            1.0
        }
    }

    /// Checks that `table` has the layout this model expects.
    pub fn check_table(&self, table: &EmbeddingTable) -> Result<(), KgeError> {
        let expected = self.model.representation();
        if table.representation != expected {
            return Err(KgeError::Representation {
                model: self.model,
                expected,
                got: table.representation,
            });
        }
        if table.entities.cols() != self.entity_width() {
            return Err(KgeError::Width {
                expected: self.entity_width(),
                got: table.entities.cols(),
            });
        }
        if table.relations.cols() != self.relation_width() {
            return Err(KgeError::Width {
                expected: self.relation_width(),
                got: table.relations.cols(),
            });
        }
        match (self.conv_shape()?, &table.conv) {
            (Some(shape), Some(c)) if c.shape == shape => Ok(()),
            (Some(_), _) => Err(KgeError::MissingConv(self.model)),
            (None, _) => Ok(()),
        }
    }

    fn check_ids(&self, table: &EmbeddingTable, t: EntityTriple) -> Result<(), KgeError> {
        for e in [t.subject, t.object] {
            if e as usize >= table.entities.rows() {
                return Err(KgeError::OutOfRange(e));
            }
        }
        if t.predicate as usize >= table.relations.rows() {
            return Err(KgeError::OutOfRange(t.predicate));
        }
        Ok(())
    }

    /// Raw model score of a triple.
    pub fn score(&self, table: &EmbeddingTable, t: EntityTriple) -> Result<f64, KgeError> {
        self.check_table(table)?;
        self.check_ids(table, t)?;
        Ok(score::score_vectors(
            self,
            table.conv.as_ref(),
            table.entities.row(t.subject as usize),
            table.relations.row(t.predicate as usize),
            table.entities.row(t.object as usize),
        ))
    }

    /// Plausibility (`higher = better`) of a triple.
    pub fn plausibility(&self, table: &EmbeddingTable, t: EntityTriple) -> Result<f64, KgeError> {
        Ok(self.plausibility_of(self.score(table, t)?))
    }

    /// Exact partial derivatives of the raw score w.r.t. every participating parameter.
    pub fn score_gradients(&self, table: &EmbeddingTable, t: EntityTriple) -> Result<ScoreGradients, KgeError> {
        self.check_table(table)?;
        self.check_ids(table, t)?;
        Ok(score::score_gradients_vectors(
            self,
            table.conv.as_ref(),
            table.entities.row(t.subject as usize),
            table.relations.row(t.predicate as usize),
            table.entities.row(t.object as usize),
        ))
    }
}
