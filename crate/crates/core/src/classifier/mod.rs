//! MLP effect classifier with one-hot, pre-trained and fine-tuned entity embeddings.
//!
//! A sample `(c, s, κ)` feeds three branches (chemical embedding, species embedding and
//! the scalar log-concentration), each a stack of hidden layers. The branch outputs are
//! concatenated, passed through a trunk of hidden layers and a sigmoid output unit.
//! Every hidden layer is `Dense → ReLU → Dropout → BatchNorm`.

mod layers;
mod mlp;
mod train;

pub use layers::{Dense, Hidden};
pub use mlp::{bce_loss, predict, Mlp};
pub use train::{fine_tune, train_classifier, ClfHistory, ClfTrainOptions, FineTuneGraph, FtConfig};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::train::TrainError;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("invalid classifier configuration: {0}")]
    Config(String),
    #[error("invalid layer spec {spec:?}: {reason}")]
    LayerSpec { spec: String, reason: String },
    #[error("embedding width mismatch: configured {expected}, table has {got}")]
    Dimension { expected: usize, got: usize },
    #[error("input index {index} outside embedding table with {rows} rows")]
    Index { index: usize, rows: usize },
    #[error("classifier training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("fine-tuning requires a model initialised from pre-trained embeddings with source `finetune`, got `{0}`")]
    NotFineTunable(EmbeddingSource),
    #[error("empty {0} set")]
    EmptySet(&'static str),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl ClassifierError {
    pub fn is_numerical(&self) -> bool {
        match self {
            ClassifierError::Diverged { .. } => true,
            ClassifierError::Train(e) => e.is_numerical(),
            _ => false,
        }
    }
}

/// Where the chemical and species embedding matrices come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    /// Randomly initialised, trained with the classifier.
    OneHot,
    /// Copied from trained graph embeddings and frozen.
    Pretrained,
    /// Copied from trained graph embeddings and trained further.
    Finetune,
}

impl EmbeddingSource {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingSource::OneHot => "one_hot",
            EmbeddingSource::Pretrained => "pretrained",
            EmbeddingSource::Finetune => "finetune",
        }
    }

    pub fn embeddings_trainable(self) -> bool {
        self != EmbeddingSource::Pretrained
    }
}

impl fmt::Display for EmbeddingSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmbeddingSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one_hot" | "one-hot" | "onehot" => Ok(EmbeddingSource::OneHot),
            "pretrained" => Ok(EmbeddingSource::Pretrained),
            "finetune" => Ok(EmbeddingSource::Finetune),
            _ => Err(format!("unknown embedding source {s:?}")),
        }
    }
}

/// Hidden-layer widths of the chemical, species, concentration and trunk stacks,
/// written `(u,…)/(u,…)/(u,…)/(u,…)` with `-` for an empty stack.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LayerSpec {
    pub chemical: Vec<usize>,
    pub species: Vec<usize>,
    pub kappa: Vec<usize>,
    pub trunk: Vec<usize>,
}

impl LayerSpec {
    /// No branch layers and a single 128-unit trunk layer.
    pub fn simple() -> Self {
        Self {
            chemical: vec![],
            species: vec![],
            kappa: vec![],
            trunk: vec![128],
        }
    }

    pub fn is_simple(&self) -> bool {
        self.chemical.is_empty() && self.species.is_empty() && self.kappa.is_empty() && self.trunk.len() == 1
    }

    /// Checks widths against the search space: powers of two in 16..=1024 for the
    /// embedding branches and trunk, 4..=32 for the concentration branch.
    pub fn validate_search_space(&self) -> Result<(), ClassifierError> {
        let check = |units: &[usize], lo: usize, hi: usize, what: &str| {
            match units.iter().find(|&&u| !(u.is_power_of_two() && (lo..=hi).contains(&u))) {
                Some(u) => Err(ClassifierError::LayerSpec {
                    spec: self.to_string(),
                    reason: format!("{what} width {u} is not a power of two in {lo}..={hi}"),
                }),
                None => Ok(()),
            }
        };
        check(&self.chemical, 16, 1024, "chemical")?;
        check(&self.species, 16, 1024, "species")?;
        check(&self.kappa, 4, 32, "concentration")?;
        check(&self.trunk, 16, 1024, "trunk")
    }
}

fn format_group(units: &[usize]) -> String {
    if units.is_empty() {
        "-".to_owned()
    } else {
        format!("({})", units.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(","))
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            format_group(&self.chemical),
            format_group(&self.species),
            format_group(&self.kappa),
            format_group(&self.trunk)
        )
    }
}

impl FromStr for LayerSpec {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| ClassifierError::LayerSpec {
            spec: s.to_owned(),
            reason: reason.to_owned(),
        };
        let groups: Vec<&str> = s.trim().split('/').map(str::trim).collect();
        if groups.len() != 4 {
            return Err(err("expected four '/'-separated groups"));
        }
        let mut parsed = Vec::with_capacity(4);
        for g in groups {
            if g == "-" {
                parsed.push(Vec::new());
                continue;
            }
            let inner = g
                .strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| err("groups are '-' or parenthesised unit lists"))?;
            let units = inner
                .split(',')
                .map(|u| match u.trim().parse::<usize>() {
                    Ok(0) | Err(_) => Err(err("unit counts must be positive integers")),
                    Ok(v) => Ok(v),
                })
                .collect::<Result<Vec<_>, _>>()?;
            parsed.push(units);
        }
        let trunk = parsed.pop().expect("four groups");
        let kappa = parsed.pop().expect("four groups");
        let species = parsed.pop().expect("four groups");
        let chemical = parsed.pop().expect("four groups");
        Ok(Self {
            chemical,
            species,
            kappa,
            trunk,
        })
    }
}

impl TryFrom<String> for LayerSpec {
    type Error = ClassifierError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<LayerSpec> for String {
    fn from(l: LayerSpec) -> String {
        l.to_string()
    }
}

fn default_dropout() -> f64 {
    0.2
}
fn default_momentum() -> f64 {
    0.99
}
fn default_bn_eps() -> f64 {
    1e-3
}
fn default_layers() -> LayerSpec {
    LayerSpec::simple()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    #[serde(default = "default_layers")]
    pub layers: LayerSpec,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    pub source: EmbeddingSource,
    /// Embedding width `k` (columns of `W_c` and `W_s`).
    pub dim: usize,
    #[serde(default = "default_momentum")]
    pub bn_momentum: f64,
    #[serde(default = "default_bn_eps")]
    pub bn_eps: f64,
}

impl MlpConfig {
    pub fn new(source: EmbeddingSource, dim: usize, layers: LayerSpec) -> Self {
        Self {
            layers,
            dropout: default_dropout(),
            source,
            dim,
            bn_momentum: default_momentum(),
            bn_eps: default_bn_eps(),
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.dim == 0 {
            return Err(ClassifierError::Config("embedding width must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ClassifierError::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(ClassifierError::Config(format!("momentum {} not in [0, 1)", self.bn_momentum)));
        }
        if !(self.bn_eps > 0.0) {
            return Err(ClassifierError::Config("normalisation epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Column-oriented classifier inputs; `chemical`/`species` index embedding rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Inputs {
    pub chemical: Vec<usize>,
    pub species: Vec<usize>,
    pub kappa: Vec<f64>,
    pub labels: Vec<f64>,
}

impl Inputs {
    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Inputs {
        Inputs {
            chemical: idx.iter().map(|&i| self.chemical[i]).collect(),
            species: idx.iter().map(|&i| self.species[i]).collect(),
            kappa: idx.iter().map(|&i| self.kappa[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}
