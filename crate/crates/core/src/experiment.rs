//! Run configuration and the end-to-end experiment driver.
//!
//! The driver works in two phases. Training and prediction for every run happen first,
//! with test labels held in [`SealedLabels`]; only once all scores exist are the labels
//! opened and metrics computed.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::align::parse_mappings;
use crate::classifier::{
    fine_tune, train_classifier, ClfTrainOptions, EmbeddingSource, FineTuneGraph, FtConfig, Inputs, LayerSpec, Mlp,
    MlpConfig,
};
use crate::effects::{
    load_effects, oversample, parse_unit_registry, prepare, read_samples, read_text, split_strategy, write_split,
    EntityFilter, NameMap, Proportions, Sample, Strategy, UnitRegistry,
};
use crate::eval::{
    aggregate_runs, compute_metrics, confusion, evaluate, explained_variance, write_metrics, MetricsReport, MetricsRow,
    Rates,
};
use crate::kg::{load_triples, KnowledgeGraph};
use crate::kge::{EmbeddingTable, KgeConfig};
use crate::train::{random_search, train_kge, write_hpo_log, write_training_log, HpoSpec, LossConfig, TrainOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub chemical_graph: Option<PathBuf>,
    pub species_graph: Option<PathBuf>,
    /// Raw effect records, prepared on load.
    pub effects: Option<PathBuf>,
    /// Already prepared samples; takes precedence over `effects`.
    pub samples: Option<PathBuf>,
    /// Mapping files (`source<TAB>target<TAB>confidence`) from effect names to graph entities.
    pub chemical_map: Option<PathBuf>,
    pub species_map: Option<PathBuf>,
    pub units: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub strategy: Strategy,
    #[serde(default)]
    pub proportions: Proportions,
    #[serde(default = "yes")]
    pub oversample: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            strategy: Strategy::I,
            proportions: Proportions::default(),
            oversample: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KgeSection {
    pub model: KgeConfig,
    pub loss: LossConfig,
    #[serde(default)]
    pub train: TrainOptions,
    /// When present, the model is chosen by random search and `model`/`loss` only seed it.
    #[serde(default)]
    pub hpo: Option<HpoSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KgeSections {
    pub chemical: Option<KgeSection>,
    pub species: Option<KgeSection>,
}

/// Where the tuned threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauSource {
    #[default]
    Validation,
    Test,
}

fn default_settings() -> BTreeMap<String, LayerSpec> {
    BTreeMap::from([
        ("simple".to_owned(), LayerSpec::simple()),
        (
            "complex".to_owned(),
            "(128)/(128)/(4)/(128)".parse().expect("valid layer spec"),
        ),
    ])
}
fn default_variants() -> Vec<EmbeddingSource> {
    vec![EmbeddingSource::OneHot, EmbeddingSource::Pretrained, EmbeddingSource::Finetune]
}
fn default_dropout() -> f64 {
    0.2
}
fn default_one_hot_dim() -> usize {
    128
}
fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSection {
    /// Named layer settings, e.g. `simple = "-/-/-/(128)"`.
    #[serde(default = "default_settings")]
    pub settings: BTreeMap<String, LayerSpec>,
    #[serde(default = "default_variants")]
    pub variants: Vec<EmbeddingSource>,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// Embedding width of the one-hot variant.
    #[serde(default = "default_one_hot_dim")]
    pub one_hot_dim: usize,
    #[serde(default)]
    pub train: ClfTrainOptions,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub tau_source: TauSource,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            settings: default_settings(),
            variants: default_variants(),
            dropout: default_dropout(),
            one_hot_dim: default_one_hot_dim(),
            train: ClfTrainOptions::default(),
            threshold: default_threshold(),
            tau_source: TauSource::default(),
        }
    }
}

fn default_repeats() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub kge: KgeSections,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub finetune: FtConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            repeats: default_repeats(),
            paths: Paths::default(),
            split: SplitSection::default(),
            kge: KgeSections::default(),
            classifier: ClassifierSection::default(),
            finetune: FtConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file, resolving relative paths against its directory and checking
    /// that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut cfg.paths;
        for slot in [
            &mut p.chemical_graph,
            &mut p.species_graph,
            &mut p.effects,
            &mut p.samples,
            &mut p.chemical_map,
            &mut p.species_map,
            &mut p.units,
        ]
        .into_iter()
        .flatten()
        {
            if slot.is_relative() {
                *slot = base.join(&*slot);
            }
            if !slot.exists() {
                return Err(Error::Config(format!("referenced file {} does not exist", slot.display())));
            }
        }
        Ok(cfg)
    }

    pub fn needs_graphs(&self) -> bool {
        self.classifier.variants.iter().any(|v| *v != EmbeddingSource::OneHot)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be ≥ 1".into()));
        }
        self.split.proportions.validate()?;
        let c = &self.classifier;
        if c.settings.is_empty() || c.variants.is_empty() {
            return Err(Error::Config("at least one classifier setting and variant is required".into()));
        }
        for spec in c.settings.values() {
            spec.validate_search_space()?;
        }
        if !(0.0..=1.0).contains(&c.threshold) {
            return Err(Error::Config(format!("threshold {} not in [0, 1]", c.threshold)));
        }
        MlpConfig::new(EmbeddingSource::OneHot, c.one_hot_dim, LayerSpec::simple()).validate()?;
        for s in [&self.kge.chemical, &self.kge.species].into_iter().flatten() {
            s.model.validate()?;
            s.loss.validate()?;
            if let Some(h) = &s.hpo {
                h.validate()?;
            }
        }
        if self.needs_graphs() {
            let (Some(ch), Some(sp)) = (&self.kge.chemical, &self.kge.species) else {
                return Err(Error::Config(
                    "pretrained and finetune variants need [kge.chemical] and [kge.species]".into(),
                ));
            };
            if ch.hpo.is_none() && sp.hpo.is_none() && ch.model.entity_width() != sp.model.entity_width() {
                return Err(Error::Config(format!(
                    "chemical and species entity widths differ ({} vs {})",
                    ch.model.entity_width(),
                    sp.model.entity_width()
                )));
            }
        }
        Ok(())
    }
}

/// Samples and graphs an experiment runs on.
#[derive(Debug, Clone, Default)]
pub struct ExperimentData {
    pub samples: Vec<Sample>,
    pub chemical_graph: Option<KnowledgeGraph>,
    pub species_graph: Option<KnowledgeGraph>,
}

fn load_map(path: &Option<PathBuf>, members: Option<&KnowledgeGraph>) -> Result<NameMap> {
    Ok(match (path, members) {
        (Some(p), _) => {
            let m = parse_mappings(&read_text(p)?)?;
            NameMap::Mapped(m.into_iter().map(|m| (m.source, m.target)).collect())
        }
        (None, Some(g)) => NameMap::Members(g.entities().names().iter().cloned().collect()),
        (None, None) => NameMap::Any,
    })
}

impl ExperimentData {
    /// Loads graphs and samples; samples are prepared from raw records if needed and
    /// restricted to entities present in the graphs.
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let p = &cfg.paths;
        let graph = |path: &Option<PathBuf>, what: &str| -> Result<Option<KnowledgeGraph>> {
            match path {
                Some(path) => Ok(Some(load_triples(path)?.drop_literals())),
                None if cfg.needs_graphs() => Err(Error::Config(format!("paths.{what} is required"))),
                None => Ok(None),
            }
        };
        let chemical_graph = graph(&p.chemical_graph, "chemical_graph")?;
        let species_graph = graph(&p.species_graph, "species_graph")?;
        let filter = EntityFilter {
            chemicals: load_map(&p.chemical_map, chemical_graph.as_ref())?,
            species: load_map(&p.species_map, species_graph.as_ref())?,
        };
        let samples = match (&p.samples, &p.effects) {
            (Some(s), _) => read_samples(s)?
                .into_iter()
                .filter_map(|mut s| {
                    let (c, sp) = filter.resolve(&s.chemical, &s.species)?;
                    s.chemical = c;
                    s.species = sp;
                    Some(s)
                })
                .collect(),
            (None, Some(e)) => {
                let registry = match &p.units {
                    Some(u) => parse_unit_registry(&read_text(u)?)?,
                    None => UnitRegistry::default(),
                };
                prepare(&load_effects(e)?, &registry, &filter)?
            }
            (None, None) => return Err(Error::Config("paths.samples or paths.effects is required".into())),
        };
        if samples.is_empty() {
            return Err(Error::Config("no samples left after matching names to graph entities".into()));
        }
        Ok(Self {
            samples,
            chemical_graph,
            species_graph,
        })
    }
}

/// Test labels withheld until every model has produced its test scores.
pub struct SealedLabels {
    labels: Vec<Vec<f64>>,
}

impl SealedLabels {
    fn open(self, events: &mut Vec<String>) -> Vec<Vec<f64>> {
        events.push("open test labels".to_owned());
        self.labels
    }
}

/// Outcome of one classifier in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRun {
    pub run: usize,
    /// `<variant>/<setting>`, e.g. `pretrained/simple`.
    pub model: String,
    /// Validation rates at the configured threshold.
    pub validation: Option<Rates>,
    pub test: MetricsReport,
    pub best_epoch: usize,
    /// Explained variance of the chemical and species embedding matrices.
    pub explained_variance: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub runs: Vec<ModelRun>,
    /// Per-run rows followed by `mean` and `std` rows for every model.
    pub rows: Vec<MetricsRow>,
    pub events: Vec<String>,
}

struct Pending {
    run: usize,
    model: String,
    validation: Option<Rates>,
    val_scores: Vec<f64>,
    val_labels: Vec<f64>,
    test_scores: Vec<f64>,
    best_epoch: usize,
    explained_variance: Option<(f64, f64)>,
}

struct Index {
    chemical: HashMap<String, usize>,
    species: HashMap<String, usize>,
}

impl Index {
    fn from_names<'a>(chem: impl IntoIterator<Item = &'a String>, species: impl IntoIterator<Item = &'a String>) -> Self {
        let idx = |names: Vec<&String>| names.into_iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self {
            chemical: idx(chem.into_iter().collect()),
            species: idx(species.into_iter().collect()),
        }
    }

    fn inputs(&self, samples: &[Sample], with_labels: bool) -> Result<Inputs> {
        let mut x = Inputs::default();
        for s in samples {
            let missing = |what: &str, n: &str| Error::Config(format!("{what} `{n}` has no embedding row"));
            x.chemical.push(*self.chemical.get(&s.chemical).ok_or_else(|| missing("chemical", &s.chemical))?);
            x.species.push(*self.species.get(&s.species).ok_or_else(|| missing("species", &s.species))?);
            x.kappa.push(s.concentration);
            if with_labels {
                x.labels.push(f64::from(s.label));
            }
        }
        Ok(x)
    }
}

fn labels(samples: &[Sample]) -> Vec<f64> {
    samples.iter().map(|s| f64::from(s.label)).collect()
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// A trained graph embedding and the section used for fine-tuning it.
pub struct TrainedKge {
    pub config: KgeConfig,
    pub loss: LossConfig,
    pub table: EmbeddingTable,
    pub history: Vec<f64>,
}

/// Trains one graph's embedding per its section, running random search first if configured.
pub fn train_section(
    g: &KnowledgeGraph,
    section: &KgeSection,
    seed: u64,
    hpo_log: Option<&mut Vec<u8>>,
) -> Result<TrainedKge> {
    let (config, loss) = match &section.hpo {
        Some(spec) => {
            let res = random_search(g, &section.model, spec, &section.train, seed)?;
            if let Some(w) = hpo_log {
                write_hpo_log(&res, w).map_err(|e| Error::io("hpo log", e))?;
            }
            (res.best.config, res.best.loss)
        }
        None => (section.model.clone(), section.loss.clone()),
    };
    let (table, state) = train_kge(g, &config, &loss, &section.train, seed)?;
    Ok(TrainedKge {
        config,
        loss,
        table,
        history: state.loss_history,
    })
}

fn ft_graph<'a>(g: &'a KnowledgeGraph, k: &'a TrainedKge, s: &KgeSection) -> FineTuneGraph<'a> {
    FineTuneGraph {
        graph: g,
        config: &k.config,
        loss: &k.loss,
        table: k.table.clone(),
        sampling: s.train.sampling,
    }
}

fn probabilities(m: &Mlp, x: &Inputs) -> Result<Vec<f64>> {
    Ok(m.forward(x)?)
}

/// Trains and evaluates every configured classifier for `cfg.repeats` runs with seeds
/// `cfg.seed + r`. Writes splits, logs and metrics under `out` when given.
pub fn run_experiment(cfg: &RunConfig, data: &ExperimentData, out: Option<&Path>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let c = &cfg.classifier;
    let mut events = Vec::new();
    let mut pending = Vec::new();
    let mut sealed = SealedLabels { labels: Vec::new() };
    let one_hot_index = {
        let mut chems: Vec<&String> = data.samples.iter().map(|s| &s.chemical).collect();
        let mut species: Vec<&String> = data.samples.iter().map(|s| &s.species).collect();
        chems.sort();
        chems.dedup();
        species.sort();
        species.dedup();
        Index::from_names(chems, species)
    };
    let graphs = match (&data.chemical_graph, &data.species_graph, &cfg.kge.chemical, &cfg.kge.species) {
        (Some(gc), Some(gs), Some(kc), Some(ks)) if cfg.needs_graphs() => Some((gc, gs, kc, ks)),
        _ if cfg.needs_graphs() => {
            return Err(Error::Config("graph variants need both graphs and [kge] sections".into()))
        }
        _ => None,
    };
    let graph_index = graphs.map(|(gc, gs, _, _)| Index::from_names(gc.entities().names(), gs.entities().names()));

    for run in 0..cfg.repeats {
        let seed = cfg.seed.wrapping_add(run as u64);
        let split = split_strategy(&data.samples, cfg.split.strategy, cfg.split.proportions, seed)?;
        events.push(format!("run {run}: split {}", cfg.split.strategy));
        if let Some(o) = out {
            write_split(&split, seed, o.join("splits").join(format!("run-{run}")))?;
        }
        let train = if cfg.split.oversample {
            oversample(&split.train, seed)?
        } else {
            split.train.clone()
        };
        sealed.labels.push(labels(&split.test));

        let kge = match graphs {
            Some((gc, gs, kc, ks)) => {
                let mut tables = Vec::new();
                for (name, g, section, s) in [
                    ("chemical", gc, kc, seed),
                    ("species", gs, ks, seed.wrapping_add(1 << 32)),
                ] {
                    let mut hpo_log = Vec::new();
                    let t = train_section(g, section, s, Some(&mut hpo_log))?;
                    events.push(format!("run {run}: train kge {name} ({})", t.config.model));
                    if let Some(o) = out {
                        let mut log = Vec::new();
                        write_training_log(&t.history, &mut log).map_err(|e| Error::io(o, e))?;
                        write_file(&o.join("kge").join(format!("run-{run}-{name}.csv")), &log)?;
                        if !hpo_log.is_empty() {
                            write_file(&o.join("kge").join(format!("run-{run}-{name}-hpo.csv")), &hpo_log)?;
                        }
                    }
                    tables.push(t);
                }
                if tables[0].table.entities.cols() != tables[1].table.entities.cols() {
                    return Err(Error::Config("chemical and species embeddings differ in width".into()));
                }
                Some(tables)
            }
            None => None,
        };

        for (setting, spec) in &c.settings {
            let mut pt_model: Option<Mlp> = None;
            for variant in [EmbeddingSource::OneHot, EmbeddingSource::Pretrained, EmbeddingSource::Finetune] {
                let wanted = c.variants.contains(&variant);
                let needed_as_init = variant == EmbeddingSource::Pretrained && c.variants.contains(&EmbeddingSource::Finetune);
                if !wanted && !needed_as_init {
                    continue;
                }
                let index = if variant == EmbeddingSource::OneHot {
                    &one_hot_index
                } else {
                    graph_index.as_ref().expect("graph variants have graphs")
                };
                let xtrain = index.inputs(&train, true)?;
                let xval = index.inputs(&split.validation, true)?;
                let xtest = index.inputs(&split.test, false)?;
                let (mlp, best_epoch) = match variant {
                    EmbeddingSource::OneHot => {
                        let mut mc = MlpConfig::new(variant, c.one_hot_dim, spec.clone());
                        mc.dropout = c.dropout;
                        let m = Mlp::build(
                            &mc,
                            index.chemical.len(),
                            index.species.len(),
                            None,
                            seed,
                        )?;
                        let (m, h) = train_classifier(m, &xtrain, &xval, &c.train, seed)?;
                        (m, h.best_epoch)
                    }
                    EmbeddingSource::Pretrained => {
                        let t = kge.as_ref().expect("graph variants have tables");
                        let mut mc = MlpConfig::new(variant, t[0].table.entities.cols(), spec.clone());
                        mc.dropout = c.dropout;
                        let m = Mlp::build(
                            &mc,
                            t[0].table.num_entities(),
                            t[1].table.num_entities(),
                            Some((&t[0].table.entities, &t[1].table.entities)),
                            seed,
                        )?;
                        let (m, h) = train_classifier(m, &xtrain, &xval, &c.train, seed)?;
                        pt_model = Some(m.clone());
                        (m, h.best_epoch)
                    }
                    EmbeddingSource::Finetune => {
                        let t = kge.as_ref().expect("graph variants have tables");
                        let (gc, gs, kc, ks) = graphs.expect("graph variants have graphs");
                        let init = pt_model.take().expect("pretrained model trained first");
                        let (m, _, h) = fine_tune(
                            init.with_source(EmbeddingSource::Finetune),
                            &cfg.finetune,
                            ft_graph(gc, &t[0], kc),
                            ft_graph(gs, &t[1], ks),
                            &xtrain,
                            &xval,
                            &c.train,
                            seed,
                        )?;
                        (m, h.best_epoch)
                    }
                };
                let model = format!("{variant}/{setting}");
                events.push(format!("run {run}: train {model}"));
                if !wanted {
                    continue;
                }
                let val_scores = probabilities(&mlp, &xval)?;
                let validation = compute_metrics(&confusion(&val_scores, &xval.labels, c.threshold)?).ok();
                let test_scores = probabilities(&mlp, &xtest)?;
                events.push(format!("run {run}: predict test {model}"));
                let ev = explained_variance(&mlp.chem_embed, 10)
                    .and_then(|a| Ok((a, explained_variance(&mlp.species_embed, 10)?)))
                    .ok();
                pending.push(Pending {
                    run,
                    model,
                    validation,
                    val_scores,
                    val_labels: xval.labels,
                    test_scores,
                    best_epoch,
                    explained_variance: ev,
                });
            }
        }
    }

    let test_labels = sealed.open(&mut events);
    let strategy = cfg.split.strategy.name();
    let mut runs = Vec::new();
    for p in pending {
        let y = &test_labels[p.run];
        let tuning = match c.tau_source {
            TauSource::Validation => (&p.val_scores[..], &p.val_labels[..]),
            TauSource::Test => (&p.test_scores[..], &y[..]),
        };
        let test = evaluate(&p.test_scores, y, tuning, c.threshold)?;
        runs.push(ModelRun {
            run: p.run,
            model: p.model,
            validation: p.validation,
            test,
            best_epoch: p.best_epoch,
            explained_variance: p.explained_variance,
        });
    }
    events.push("metrics".to_owned());

    let mut rows = Vec::new();
    let mut models: Vec<&str> = runs.iter().map(|r| r.model.as_str()).collect();
    models.sort();
    models.dedup();
    for m in models {
        let reports: Vec<MetricsReport> = runs.iter().filter(|r| r.model == m).map(|r| r.test).collect();
        for r in runs.iter().filter(|r| r.model == m) {
            rows.push(MetricsRow::from_report(m, strategy, r.run, &r.test));
        }
        rows.extend(MetricsRow::from_aggregate(m, strategy, &aggregate_runs(&reports)?));
    }

    if let Some(o) = out {
        let mut buf = Vec::new();
        write_metrics(&rows, &mut buf).map_err(|e| Error::io(o, e))?;
        write_file(&o.join("metrics.csv"), &buf)?;
        let mut var = String::from("model,strategy,run,explained_variance_chemical,explained_variance_species,yi\n");
        for r in &runs {
            if let Some((a, b)) = r.explained_variance {
                let _ = writeln!(var, "{},{},{},{a},{b},{}", r.model, strategy, r.run, r.test.yi);
            }
        }
        write_file(&o.join("variance.csv"), var.as_bytes())?;
        write_file(&o.join("events.log"), (events.join("\n") + "\n").as_bytes())?;
    }
    Ok(ExperimentReport { runs, rows, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effects::Strategy;
    use crate::kge::ModelKind;
    use crate::synthetic::{clustered_effects, EffectsSpec};
    use crate::train::LossKind;

    fn small_config(variants: Vec<EmbeddingSource>) -> RunConfig {
        let section = |dim| KgeSection {
            model: KgeConfig::new(ModelKind::DistMult, dim),
            loss: LossConfig::new(LossKind::PairwiseLogistic, 1.0, 4),
            train: TrainOptions {
                epochs: 20,
                ..TrainOptions::default()
            },
            hpo: None,
        };
        RunConfig {
            seed: 3,
            repeats: 2,
            split: SplitSection {
                strategy: Strategy::Iv,
                ..SplitSection::default()
            },
            kge: KgeSections {
                chemical: Some(section(16)),
                species: Some(section(16)),
            },
            classifier: ClassifierSection {
                settings: BTreeMap::from([("simple".to_owned(), LayerSpec::simple())]),
                variants,
                one_hot_dim: 16,
                train: ClfTrainOptions {
                    epochs: 5,
                    ..ClfTrainOptions::default()
                },
                ..ClassifierSection::default()
            },
            ..RunConfig::default()
        }
    }

    fn data() -> ExperimentData {
        let spec = EffectsSpec {
            chemical_entities: 60,
            species_entities: 40,
            branching: 2,
            samples: 400,
        };
        let d = clustered_effects(&spec, 1);
        ExperimentData {
            samples: d.samples,
            chemical_graph: Some(d.chemicals.graph),
            species_graph: Some(d.species.graph),
        }
    }

    #[test]
    fn test_labels_are_opened_once_after_all_training() {
        let cfg = small_config(default_variants());
        let rep = run_experiment(&cfg, &data(), None).unwrap();
        let open = rep.events.iter().position(|e| e == "open test labels").unwrap();
        assert_eq!(rep.events.iter().filter(|e| *e == "open test labels").count(), 1);
        let last_work = rep
            .events
            .iter()
            .rposition(|e| e.contains(": train ") || e.contains(": predict "))
            .unwrap();
        assert!(last_work < open);
        assert_eq!(rep.runs.len(), 2 * 3);
        // 3 models × (2 runs + mean + std)
        assert_eq!(rep.rows.len(), 3 * 4);
    }

    #[test]
    fn outputs_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(vec![EmbeddingSource::OneHot, EmbeddingSource::Pretrained]);
        let a = run_experiment(&cfg, &data(), Some(dir.path())).unwrap();
        let b = run_experiment(&cfg, &data(), None).unwrap();
        assert_eq!(a.runs, b.runs);
        for f in ["metrics.csv", "events.log", "variance.csv", "splits/run-0/test.csv", "kge/run-1-species.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(text.starts_with(crate::eval::METRICS_HEADER));
        assert!(text.contains("pretrained/simple,iv,mean,"));
    }

    #[test]
    fn one_hot_without_graphs() {
        let mut cfg = small_config(vec![EmbeddingSource::OneHot]);
        cfg.kge = KgeSections::default();
        cfg.repeats = 1;
        let mut d = data();
        d.chemical_graph = None;
        d.species_graph = None;
        let rep = run_experiment(&cfg, &d, None).unwrap();
        assert_eq!(rep.runs.len(), 1);
        let std_row = rep.rows.iter().find(|r| r.run == "std").unwrap();
        assert_eq!(std_row.yi, 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::from_toml("repeats = 0").is_err());
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        // Graph variants by default, but no [kge] sections.
        assert!(RunConfig::from_toml("").is_err());
        let ok = RunConfig::from_toml("[classifier]\nvariants = [\"one_hot\"]\n").unwrap();
        assert_eq!(ok.repeats, 10);
        assert_eq!(ok.classifier.settings["complex"].to_string(), "(128)/(128)/(4)/(128)");
        let bad_units = "[classifier]\nvariants = [\"one_hot\"]\nsettings = { tiny = \"-/-/-/(3)\" }\n";
        assert!(RunConfig::from_toml(bad_units).is_err());
    }

    #[test]
    fn config_roundtrips_through_toml() {
        let cfg = small_config(default_variants());
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }
}
