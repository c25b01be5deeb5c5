//! Versioned plain-text checkpoints for embedding tables and classifiers.
//!
//! Floats are written with Rust's shortest round-trip formatting, so save → load → save
//! reproduces the same bytes.
//!
//! ```text
//! kge-ckpt 1 <model> <dim>
//! config <json KgeConfig>
//! names entities <n>        one name per line
//! names relations <n>
//! tensor entities <rows> <cols>
//! tensor relations <rows> <cols>
//! tensor conv 1 <len>       convolutional models only
//! end
//!
//! clf-ckpt 1 <source> <k> <layer spec>
//! options <dropout> <bn momentum> <bn eps>
//! names chemicals <n>
//! names species <n>
//! tensor <name> <rows> <cols>   for every named classifier tensor
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::classifier::{ClassifierError, EmbeddingSource, LayerSpec, Mlp, MlpConfig};
use crate::kge::{ConvParams, EmbeddingTable, KgeConfig, KgeError};
use crate::matrix::Matrix;

pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("unrecognised checkpoint header `{0}`")]
    Header(String),
    #[error("unsupported checkpoint version {0} (expected {VERSION})")]
    Version(String),
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("checkpoint is truncated (no `end` marker)")]
    Truncated,
    #[error(transparent)]
    Kge(#[from] KgeError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Embedding table with the configuration and dictionaries needed to use it.
#[derive(Debug, Clone, PartialEq)]
pub struct KgeCheckpoint {
    pub config: KgeConfig,
    pub table: EmbeddingTable,
    pub entity_names: Vec<String>,
    pub relation_names: Vec<String>,
}

/// Classifier weights plus the names indexing the rows of its embedding matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ClfCheckpoint {
    pub mlp: Mlp,
    pub chemicals: Vec<String>,
    pub species: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Kge(KgeCheckpoint),
    Classifier(ClfCheckpoint),
}

fn write_names(out: &mut String, label: &str, names: &[String]) {
    let _ = writeln!(out, "names {label} {}", names.len());
    for n in names {
        let _ = writeln!(out, "{n}");
    }
}

fn write_tensor(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "tensor {name} {} {}", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

fn check_names(names: &[String]) -> Result<(), CheckpointError> {
    match names.iter().find(|n| n.is_empty() || n.contains(['\n', '\r'])) {
        Some(n) => Err(CheckpointError::Line {
            line: 0,
            reason: format!("name {n:?} cannot be stored one per line"),
        }),
        None => Ok(()),
    }
}

impl KgeCheckpoint {
    pub fn to_text(&self) -> Result<String, CheckpointError> {
        self.config.check_table(&self.table)?;
        check_names(&self.entity_names)?;
        check_names(&self.relation_names)?;
        let mut out = String::new();
        let json = serde_json::to_string(&self.config).expect("config serialises");
        let _ = writeln!(out, "kge-ckpt {VERSION} {} {}", self.config.model, self.config.dim);
        let _ = writeln!(out, "config {json}");
        write_names(&mut out, "entities", &self.entity_names);
        write_names(&mut out, "relations", &self.relation_names);
        write_tensor(&mut out, "entities", &self.table.entities);
        write_tensor(&mut out, "relations", &self.table.relations);
        if let Some(c) = &self.table.conv {
            write_tensor(&mut out, "conv", &Matrix::from_vec(1, c.values.len(), c.values.clone()));
        }
        out.push_str("end\n");
        Ok(out)
    }
}

impl ClfCheckpoint {
    pub fn to_text(&self) -> Result<String, CheckpointError> {
        check_names(&self.chemicals)?;
        check_names(&self.species)?;
        let c = &self.mlp.config;
        let mut out = String::new();
        let _ = writeln!(out, "clf-ckpt {VERSION} {} {} {}", c.source, c.dim, c.layers);
        let _ = writeln!(out, "options {:?} {:?} {:?}", c.dropout, c.bn_momentum, c.bn_eps);
        write_names(&mut out, "chemicals", &self.chemicals);
        write_names(&mut out, "species", &self.species);
        for (name, t) in self.mlp.named_tensors() {
            write_tensor(&mut out, &name, t);
        }
        out.push_str("end\n");
        Ok(out)
    }
}

impl Checkpoint {
    pub fn to_text(&self) -> Result<String, CheckpointError> {
        match self {
            Checkpoint::Kge(k) => k.to_text(),
            Checkpoint::Classifier(c) => c.to_text(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Checkpoint::Kge(_) => "kge",
            Checkpoint::Classifier(_) => "classifier",
        }
    }
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
    remaining: usize,
}

fn declared_values(c: &MlpConfig, nc: usize, ns: usize) -> usize {
    let stack = |inp: usize, widths: &[usize]| {
        let mut prev = inp;
        let mut n = 0usize;
        for &w in widths {
            n = n.saturating_add(prev.saturating_add(5).saturating_mul(w));
            prev = w;
        }
        (n, prev)
    };
    let k = c.dim;
    let l = &c.layers;
    let (a, wa) = stack(k, &l.chemical);
    let (b, wb) = stack(k, &l.species);
    let (d, wd) = stack(1, &l.kappa);
    let (t, wt) = stack(wa.saturating_add(wb).saturating_add(wd), &l.trunk);
    nc.saturating_add(ns)
        .saturating_mul(k)
        .saturating_add(a)
        .saturating_add(b)
        .saturating_add(d)
        .saturating_add(t)
        .saturating_add(wt)
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            line: 0,
            remaining: text.len() / 2,
        }
    }

    fn err(&self, reason: impl Into<String>) -> CheckpointError {
        CheckpointError::Line {
            line: self.line,
            reason: reason.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str, CheckpointError> {
        let (i, l) = self.lines.next().ok_or(CheckpointError::Truncated)?;
        self.line = i + 1;
        Ok(l)
    }

    /// Next line split on spaces, which must start with `keyword` and have `n` fields after it.
    fn fields(&mut self, keyword: &str, n: usize) -> Result<Vec<&'a str>, CheckpointError> {
        let l = self.next()?;
        let mut it = l.split(' ');
        if it.next() != Some(keyword) {
            return Err(self.err(format!("expected `{keyword}`")));
        }
        let rest: Vec<&str> = it.collect();
        if rest.len() != n {
            return Err(self.err(format!("`{keyword}` takes {n} fields, got {}", rest.len())));
        }
        Ok(rest)
    }

    fn number<T: std::str::FromStr>(&self, s: &str) -> Result<T, CheckpointError> {
        s.parse().map_err(|_| self.err(format!("bad number `{s}`")))
    }

    fn names(&mut self, label: &str) -> Result<Vec<String>, CheckpointError> {
        let f = self.fields("names", 2)?;
        if f[0] != label {
            return Err(self.err(format!("expected names block `{label}`")));
        }
        let n: usize = self.number(f[1])?;
        (0..n).map(|_| self.next().map(str::to_owned)).collect()
    }

    fn tensor(&mut self, name: &str) -> Result<Matrix, CheckpointError> {
        let f = self.fields("tensor", 3)?;
        if f[0] != name {
            return Err(self.err(format!("expected tensor `{name}`, found `{}`", f[0])));
        }
        let (rows, cols): (usize, usize) = (self.number(f[1])?, self.number(f[2])?);
        let mut data = Vec::new();
        for _ in 0..rows {
            let l = self.next()?;
            let before = data.len();
            if cols > 0 {
                for tok in l.split(' ') {
                    data.push(self.number::<f64>(tok)?);
                }
            } else if !l.is_empty() {
                return Err(self.err("expected an empty row"));
            }
            if data.len() - before != cols {
                return Err(self.err(format!("row has {} values, expected {cols}", data.len() - before)));
            }
        }
        Ok(Matrix::from_vec(rows, cols, data))
    }

    fn end(&mut self) -> Result<(), CheckpointError> {
        if self.next()? != "end" {
            return Err(self.err("expected `end`"));
        }
        match self.lines.next() {
            Some((i, _)) => Err(CheckpointError::Line {
                line: i + 1,
                reason: "trailing content after `end`".into(),
            }),
            None => Ok(()),
        }
    }
}

fn check_version(v: &str) -> Result<(), CheckpointError> {
    if v.parse::<u32>().ok() != Some(VERSION) {
        return Err(CheckpointError::Version(v.to_owned()));
    }
    Ok(())
}

fn parse_kge(r: &mut Reader<'_>, header: &[&str]) -> Result<KgeCheckpoint, CheckpointError> {
    let l = r.next()?;
    let json = l.strip_prefix("config ").ok_or_else(|| r.err("expected `config`"))?;
    let config: KgeConfig = serde_json::from_str(json).map_err(|e| r.err(e.to_string()))?;
    config.validate()?;
    if header[2] != config.model.name() || r.number::<usize>(header[3])? != config.dim {
        return Err(r.err("header disagrees with config"));
    }
    let entity_names = r.names("entities")?;
    let relation_names = r.names("relations")?;
    let entities = r.tensor("entities")?;
    let relations = r.tensor("relations")?;
    let conv = match config.conv_shape()? {
        Some(shape) => {
            let v = r.tensor("conv")?;
            if v.rows() != 1 || v.cols() != shape.param_len() {
                return Err(r.err(format!("conv tensor must be 1×{}", shape.param_len())));
            }
            Some(ConvParams {
                shape,
                values: v.as_slice().to_vec(),
            })
        }
        None => None,
    };
    r.end()?;
    let table = EmbeddingTable {
        representation: config.model.representation(),
        entities,
        relations,
        conv,
    };
    config.check_table(&table)?;
    if entity_names.len() != table.num_entities() || relation_names.len() != table.num_relations() {
        return Err(r.err("name blocks do not match tensor rows"));
    }
    Ok(KgeCheckpoint {
        config,
        table,
        entity_names,
        relation_names,
    })
}

fn parse_clf(r: &mut Reader<'_>, header: &[&str]) -> Result<ClfCheckpoint, CheckpointError> {
    let source: EmbeddingSource = header[2].parse().map_err(|e: String| r.err(e))?;
    let dim: usize = r.number(header[3])?;
    let layers: LayerSpec = header[4].parse()?;
    let o = r.fields("options", 3)?;
    let mut config = MlpConfig::new(source, dim, layers);
    config.dropout = r.number(o[0])?;
    config.bn_momentum = r.number(o[1])?;
    config.bn_eps = r.number(o[2])?;
    config.validate()?;
    let chemicals = r.names("chemicals")?;
    let species = r.names("species")?;
    // Every stored value takes at least two bytes, which bounds what a header may claim.
    if declared_values(&config, chemicals.len(), species.len()) > r.remaining {
        return Err(CheckpointError::Truncated);
    }
    let (c, s) = (Matrix::zeros(chemicals.len(), dim), Matrix::zeros(species.len(), dim));
    let pre = (source != EmbeddingSource::OneHot).then_some((&c, &s));
    let mut mlp = Mlp::build(&config, chemicals.len(), species.len(), pre, 0)?;
    for (name, slot) in mlp.named_tensors_mut() {
        let t = r.tensor(&name)?;
        if t.shape() != slot.shape() {
            return Err(r.err(format!(
                "tensor `{name}` is {:?}, expected {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }
    r.end()?;
    Ok(ClfCheckpoint { mlp, chemicals, species })
}

/// Parses either checkpoint kind, dispatching on the header.
pub fn parse_checkpoint(text: &str) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader::new(text);
    let first = r.next().map_err(|_| CheckpointError::Header(String::new()))?;
    let header: Vec<&str> = first.split(' ').collect();
    match (header[0], header.len()) {
        ("kge-ckpt", 4) => {
            check_version(header[1])?;
            parse_kge(&mut r, &header).map(Checkpoint::Kge)
        }
        ("clf-ckpt", 5) => {
            check_version(header[1])?;
            parse_clf(&mut r, &header).map(Checkpoint::Classifier)
        }
        ("kge-ckpt" | "clf-ckpt", _) if header.len() >= 2 => {
            check_version(header[1])?;
            Err(CheckpointError::Header(first.to_owned()))
        }
        _ => Err(CheckpointError::Header(first.chars().take(80).collect())),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CheckpointError {
    CheckpointError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    parse_checkpoint(&std::fs::read_to_string(path).map_err(|e| io_err(path, e))?)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    std::fs::write(path, ckpt.to_text()?).map_err(|e| io_err(path, e))
}
