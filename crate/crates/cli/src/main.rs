use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use kgeffect::align::{evaluate_alignment, filter_one_to_one, format_mappings, lexical_match, parse_labels, parse_mappings};
use kgeffect::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, ClfCheckpoint, KgeCheckpoint};
use kgeffect::classifier::{
    fine_tune, train_classifier, ClfHistory, EmbeddingSource, FineTuneGraph, Inputs, LayerSpec, Mlp, MlpConfig,
};
use kgeffect::effects::{oversample, read_samples, split_strategy, write_samples, write_split, Proportions, Sample, Strategy};
use kgeffect::eval::{evaluate, write_metrics, MetricsRow};
use kgeffect::experiment::{run_experiment, train_section, ExperimentData, KgeSection, Paths, RunConfig};
use kgeffect::kg::{compute_stats, directed_crawl, emit_similarity_triples, load_triples, parse_fingerprints, KnowledgeGraph};
use kgeffect::train::{write_training_log, HpoSpec};

#[derive(Parser)]
#[command(name = "kgeffect", version, about = "Knowledge graph embeddings and effect classifiers")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; commands print to stdout when it is absent and they can.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Chemical,
    Species,
}

impl Which {
    fn name(self) -> &'static str {
        match self {
            Which::Chemical => "chemical",
            Which::Species => "species",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Densities and entropies of a triple file (literals dropped first).
    Stats { graph: PathBuf },
    /// Triples reachable from the seed entities along outgoing edges.
    Crawl {
        graph: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        seeds: Vec<String>,
    },
    /// Similarity triples from chemical fingerprints.
    Simtriples {
        fingerprints: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
    },
    /// Lexical alignment of two label files.
    Align {
        source: PathBuf,
        target: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
        /// Keep every mapping above the threshold instead of reducing to 1-to-1.
        #[arg(long)]
        many: bool,
    },
    /// Recall and estimated precision of a mapping file against a reference.
    AlignEval { mappings: PathBuf, reference: PathBuf },
    /// Raw effect records to log-normalised binary samples.
    PrepEffects {
        effects: PathBuf,
        #[arg(long)]
        units: Option<PathBuf>,
        #[arg(long)]
        chemical_graph: Option<PathBuf>,
        #[arg(long)]
        species_graph: Option<PathBuf>,
        #[arg(long)]
        chemical_map: Option<PathBuf>,
        #[arg(long)]
        species_map: Option<PathBuf>,
    },
    /// Train/validation/test split of a sample file.
    Split {
        samples: PathBuf,
        #[arg(long)]
        strategy: Option<Strategy>,
        /// `train,validation,test`, e.g. `0.7,0.15,0.15`.
        #[arg(long)]
        proportions: Option<String>,
    },
    /// Trains one graph's embedding as configured in `[kge.<graph>]`.
    TrainKge {
        #[arg(value_enum)]
        graph: Which,
        /// Triple file; defaults to `paths.<graph>_graph`.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Random search over the `[kge.<graph>.hpo]` ranges, then trains the best setting.
    HpoKge {
        #[arg(value_enum)]
        graph: Which,
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Trains a classifier on split files.
    TrainClf {
        #[arg(long)]
        source: EmbeddingSource,
        /// Name of a `[classifier.settings]` entry.
        #[arg(long, default_value = "simple")]
        setting: String,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        validation: PathBuf,
        #[arg(long)]
        chemical_kge: Option<PathBuf>,
        #[arg(long)]
        species_kge: Option<PathBuf>,
        /// Samples whose entities define the one-hot rows; defaults to train ∪ validation.
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        no_oversample: bool,
    },
    /// Jointly trains a pre-trained classifier and both graph embeddings.
    Finetune {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        chemical_kge: PathBuf,
        #[arg(long)]
        species_kge: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        validation: PathBuf,
        #[arg(long)]
        no_oversample: bool,
    },
    /// Metrics of a classifier checkpoint on a labelled sample file.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        /// Samples on which τ_max is chosen; defaults to `--samples`.
        #[arg(long)]
        tune: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Every configured classifier over `repeats` seeded runs.
    RunExperiment,
}

/// Bad command-line usage detected after parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        let numerical = cause.downcast_ref::<kgeffect::Error>().is_some_and(|e| e.is_numerical())
            || cause.downcast_ref::<kgeffect::train::TrainError>().is_some_and(|e| e.is_numerical())
            || cause.downcast_ref::<kgeffect::classifier::ClassifierError>().is_some_and(|e| e.is_numerical());
        if numerical {
            return 3;
        }
    }
    2
}

struct Ctx {
    config: RunConfig,
    seed: u64,
    out: Option<PathBuf>,
}

impl Ctx {
    fn new(shared: Shared) -> Result<Self> {
        let config = match &shared.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => RunConfig::default(),
        };
        let seed = shared.seed.unwrap_or(config.seed);
        Ok(Self {
            config,
            seed,
            out: shared.out,
        })
    }

    fn out_dir(&self) -> Result<&Path> {
        let dir = self.out.as_deref().ok_or_else(|| usage("this command needs --out <dir>"))?;
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    /// Writes `name` under `--out`, or prints it when no directory is given.
    fn emit(&self, name: &str, text: &str) -> Result<()> {
        match &self.out {
            Some(_) => write(&self.out_dir()?.join(name), text.as_bytes()),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn kge_section(&self, which: Which) -> Result<&KgeSection> {
        let s = match which {
            Which::Chemical => &self.config.kge.chemical,
            Which::Species => &self.config.kge.species,
        };
        s.as_ref().ok_or_else(|| usage(format!("--config needs a [kge.{}] section", which.name())))
    }

    fn graph_path(&self, which: Which, file: Option<PathBuf>) -> Result<PathBuf> {
        let p = &self.config.paths;
        let configured = match which {
            Which::Chemical => &p.chemical_graph,
            Which::Species => &p.species_graph,
        };
        file.or_else(|| configured.clone())
            .ok_or_else(|| usage(format!("give --file or paths.{}_graph", which.name())))
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn graph(path: &Path) -> Result<KnowledgeGraph> {
    Ok(load_triples(path).with_context(|| format!("loading {}", path.display()))?)
}

fn samples(path: &Path) -> Result<Vec<Sample>> {
    Ok(read_samples(path).with_context(|| format!("reading {}", path.display()))?)
}

fn kge_checkpoint(path: &Path) -> Result<KgeCheckpoint> {
    match load_checkpoint(path).with_context(|| format!("loading {}", path.display()))? {
        Checkpoint::Kge(k) => Ok(k),
        other => bail!("{} holds a {} checkpoint, expected kge", path.display(), other.kind()),
    }
}

fn clf_checkpoint(path: &Path) -> Result<ClfCheckpoint> {
    match load_checkpoint(path).with_context(|| format!("loading {}", path.display()))? {
        Checkpoint::Classifier(c) => Ok(c),
        other => bail!("{} holds a {} checkpoint, expected classifier", path.display(), other.kind()),
    }
}

fn inputs(s: &[Sample], chemicals: &[String], species: &[String]) -> Result<Inputs> {
    let index = |names: &[String]| -> HashMap<String, usize> {
        names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect()
    };
    let (ci, si) = (index(chemicals), index(species));
    let mut x = Inputs::default();
    for s in s {
        x.chemical.push(*ci.get(&s.chemical).ok_or_else(|| anyhow!("chemical `{}` has no embedding", s.chemical))?);
        x.species.push(*si.get(&s.species).ok_or_else(|| anyhow!("species `{}` has no embedding", s.species))?);
        x.kappa.push(s.concentration);
        x.labels.push(f64::from(s.label));
    }
    Ok(x)
}

fn history_csv(h: &ClfHistory) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,chemical_kge_loss,species_kge_loss\n");
    for (i, (t, v)) in h.train_loss.iter().zip(&h.val_loss).enumerate() {
        let opt = |v: &[f64]| v.get(i).map(|x| x.to_string()).unwrap_or_default();
        out += &format!("{},{t},{v},{},{}\n", i + 1, opt(&h.chem_kge_loss), opt(&h.species_kge_loss));
    }
    out
}

fn training_set(path: &Path, no_oversample: bool, seed: u64) -> Result<Vec<Sample>> {
    let s = samples(path)?;
    Ok(if no_oversample { s } else { oversample(&s, seed)? })
}

fn layer_spec(ctx: &Ctx, setting: &str) -> Result<LayerSpec> {
    ctx.config
        .classifier
        .settings
        .get(setting)
        .cloned()
        .ok_or_else(|| usage(format!("no classifier setting named `{setting}`")))
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(cli.shared)?;
    match cli.command {
        Command::Stats { graph: path } => {
            let g = graph(&path)?.drop_literals();
            ctx.emit("stats.txt", &compute_stats(&g)?.to_string())
        }
        Command::Crawl { graph: path, seeds } => {
            let g = graph(&path)?;
            let crawl = directed_crawl(&g, &g.entity_ids(&seeds)?)?;
            ctx.emit("crawl.tsv", &crawl.to_tsv())
        }
        Command::Simtriples { fingerprints, threshold } => {
            let fps = parse_fingerprints(&read(&fingerprints)?)?;
            let text: String =
                emit_similarity_triples(&fps, threshold)?.iter().map(|(s, p, o)| format!("{s}\t{p}\t{o}\n")).collect();
            ctx.emit("similarity.tsv", &text)
        }
        Command::Align {
            source,
            target,
            threshold,
            many,
        } => {
            let m = lexical_match(&parse_labels(&read(&source)?)?, &parse_labels(&read(&target)?)?, threshold)?;
            let m = if many { m } else { filter_one_to_one(&m) };
            ctx.emit("mappings.tsv", &format_mappings(&m))
        }
        Command::AlignEval { mappings, reference } => {
            let s = evaluate_alignment(&parse_mappings(&read(&mappings)?)?, &parse_mappings(&read(&reference)?)?)?;
            let text = format!(
                "num_mappings\t{}\nrecall\t{}\nest_precision\t{}\n",
                s.num_mappings, s.recall, s.est_precision
            );
            ctx.emit("alignment.txt", &text)
        }
        Command::PrepEffects {
            effects,
            units,
            chemical_graph,
            species_graph,
            chemical_map,
            species_map,
        } => {
            let base = &ctx.config.paths;
            let mut cfg = RunConfig::default();
            cfg.classifier.variants = vec![EmbeddingSource::OneHot];
            cfg.paths = Paths {
                effects: Some(effects),
                units: units.or_else(|| base.units.clone()),
                chemical_graph: chemical_graph.or_else(|| base.chemical_graph.clone()),
                species_graph: species_graph.or_else(|| base.species_graph.clone()),
                chemical_map: chemical_map.or_else(|| base.chemical_map.clone()),
                species_map: species_map.or_else(|| base.species_map.clone()),
                samples: None,
            };
            let data = ExperimentData::load(&cfg)?;
            let mut buf = Vec::new();
            write_samples(&data.samples, &mut buf)?;
            eprintln!("{} samples", data.samples.len());
            ctx.emit("samples.csv", &String::from_utf8(buf)?)
        }
        Command::Split {
            samples: path,
            strategy,
            proportions,
        } => {
            let mut p = ctx.config.split.proportions;
            if let Some(text) = proportions {
                let v: Vec<f64> = text
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| usage(format!("--proportions {text:?} is not three numbers")))?;
                let [train, validation, test] = v[..] else {
                    return Err(usage(format!("--proportions {text:?} is not three numbers")));
                };
                p = Proportions {
                    train,
                    validation,
                    test,
                };
            }
            let strategy = strategy.unwrap_or(ctx.config.split.strategy);
            let r = split_strategy(&samples(&path)?, strategy, p, ctx.seed)?;
            let dir = ctx.out_dir()?;
            write_split(&r, ctx.seed, dir)?;
            eprintln!(
                "strategy {strategy}: {} train, {} validation, {} test",
                r.train.len(),
                r.validation.len(),
                r.test.len()
            );
            Ok(())
        }
        Command::TrainKge { graph: which, file } => kge_command(&ctx, which, file, false),
        Command::HpoKge { graph: which, file } => kge_command(&ctx, which, file, true),
        Command::TrainClf {
            source,
            setting,
            train,
            validation,
            chemical_kge,
            species_kge,
            index,
            no_oversample,
        } => {
            let c = &ctx.config.classifier;
            let train = training_set(&train, no_oversample, ctx.seed)?;
            let val = samples(&validation)?;
            let (chemicals, species, tables, dim) = match source {
                EmbeddingSource::OneHot => {
                    let pool = match index {
                        Some(p) => samples(&p)?,
                        None => train.iter().chain(&val).cloned().collect(),
                    };
                    let chems: BTreeSet<String> = pool.iter().map(|s| s.chemical.clone()).collect();
                    let species: BTreeSet<String> = pool.iter().map(|s| s.species.clone()).collect();
                    (chems.into_iter().collect(), species.into_iter().collect(), None, c.one_hot_dim)
                }
                EmbeddingSource::Pretrained => {
                    let (Some(cp), Some(sp)) = (chemical_kge, species_kge) else {
                        return Err(usage("--source pretrained needs --chemical-kge and --species-kge"));
                    };
                    let (ck, sk) = (kge_checkpoint(&cp)?, kge_checkpoint(&sp)?);
                    let dim = ck.table.entities.cols();
                    (ck.entity_names, sk.entity_names, Some((ck.table.entities, sk.table.entities)), dim)
                }
                EmbeddingSource::Finetune => return Err(usage("use the finetune command for --source finetune")),
            };
            let mut mc = MlpConfig::new(source, dim, layer_spec(&ctx, &setting)?);
            mc.dropout = c.dropout;
            let mlp = Mlp::build(&mc, chemicals.len(), species.len(), tables.as_ref().map(|(a, b)| (a, b)), ctx.seed)?;
            let (mlp, hist) = train_classifier(
                mlp,
                &inputs(&train, &chemicals, &species)?,
                &inputs(&val, &chemicals, &species)?,
                &c.train,
                ctx.seed,
            )?;
            let dir = ctx.out_dir()?;
            write(&dir.join(format!("clf-{source}-{setting}.log.csv")), history_csv(&hist).as_bytes())?;
            let ck = Checkpoint::Classifier(ClfCheckpoint { mlp, chemicals, species });
            save_checkpoint(&ck, dir.join(format!("clf-{source}-{setting}.ckpt")))?;
            eprintln!("best epoch {}", hist.best_epoch);
            Ok(())
        }
        Command::Finetune {
            init,
            chemical_kge,
            species_kge,
            train,
            validation,
            no_oversample,
        } => {
            let init = clf_checkpoint(&init)?;
            let (ck, sk) = (kge_checkpoint(&chemical_kge)?, kge_checkpoint(&species_kge)?);
            if init.chemicals != ck.entity_names || init.species != sk.entity_names {
                bail!("classifier rows do not match the graph embedding entities");
            }
            let gc = graph(&ctx.graph_path(Which::Chemical, None)?)?.drop_literals();
            let gs = graph(&ctx.graph_path(Which::Species, None)?)?.drop_literals();
            for (g, k, which) in [(&gc, &ck, Which::Chemical), (&gs, &sk, Which::Species)] {
                if g.entities().names() != k.entity_names.as_slice() {
                    bail!("the {} graph does not match its embedding checkpoint", which.name());
                }
            }
            let (sc, ss) = (ctx.kge_section(Which::Chemical)?, ctx.kge_section(Which::Species)?);
            let train = training_set(&train, no_oversample, ctx.seed)?;
            let val = samples(&validation)?;
            fn ft<'a>(graph: &'a KnowledgeGraph, k: &'a KgeCheckpoint, s: &'a KgeSection) -> FineTuneGraph<'a> {
                FineTuneGraph {
                    graph,
                    config: &k.config,
                    loss: &s.loss,
                    table: k.table.clone(),
                    sampling: s.train.sampling,
                }
            }
            let (mlp, tables, hist) = fine_tune(
                init.mlp.with_source(EmbeddingSource::Finetune),
                &ctx.config.finetune,
                ft(&gc, &ck, sc),
                ft(&gs, &sk, ss),
                &inputs(&train, &init.chemicals, &init.species)?,
                &inputs(&val, &init.chemicals, &init.species)?,
                &ctx.config.classifier.train,
                ctx.seed,
            )?;
            let dir = ctx.out_dir()?;
            write(&dir.join("clf-finetune.log.csv"), history_csv(&hist).as_bytes())?;
            let [tc, ts] = tables;
            for (k, table, which) in [(ck, tc, Which::Chemical), (sk, ts, Which::Species)] {
                let ck = Checkpoint::Kge(KgeCheckpoint { table, ..k });
                save_checkpoint(&ck, dir.join(format!("kge-{}-finetuned.ckpt", which.name())))?;
            }
            let ck = Checkpoint::Classifier(ClfCheckpoint {
                mlp,
                chemicals: init.chemicals,
                species: init.species,
            });
            save_checkpoint(&ck, dir.join("clf-finetune.ckpt"))?;
            eprintln!("best epoch {}", hist.best_epoch);
            Ok(())
        }
        Command::Evaluate {
            model,
            samples: path,
            tune,
            threshold,
        } => {
            let ck = clf_checkpoint(&model)?;
            let test = inputs(&samples(&path)?, &ck.chemicals, &ck.species)?;
            let scores = ck.mlp.forward(&test)?;
            let (tune_scores, tune_labels) = match tune {
                Some(p) => {
                    let x = inputs(&samples(&p)?, &ck.chemicals, &ck.species)?;
                    (ck.mlp.forward(&x)?, x.labels)
                }
                None => (scores.clone(), test.labels.clone()),
            };
            let tau = threshold.unwrap_or(ctx.config.classifier.threshold);
            let report = evaluate(&scores, &test.labels, (&tune_scores, &tune_labels), tau)?;
            let name = format!("{}/{}", ck.mlp.config.source, ck.mlp.config.layers);
            let mut buf = Vec::new();
            write_metrics(&[MetricsRow::from_report(&name, "-", 0, &report)], &mut buf)?;
            ctx.emit("metrics.csv", &String::from_utf8(buf)?)
        }
        Command::RunExperiment => {
            let mut cfg = ctx.config.clone();
            cfg.seed = ctx.seed;
            let data = ExperimentData::load(&cfg)?;
            let dir = ctx.out_dir()?;
            let report = run_experiment(&cfg, &data, Some(dir))?;
            let mut out = std::io::stdout().lock();
            for r in report.rows.iter().filter(|r| r.run == "mean") {
                writeln!(out, "{:<24} YI {:.3}  YI_max {:.3}", r.model, r.yi, r.yi_max)?;
            }
            Ok(())
        }
    }
}

fn kge_command(ctx: &Ctx, which: Which, file: Option<PathBuf>, hpo: bool) -> Result<()> {
    let g = graph(&ctx.graph_path(which, file)?)?.drop_literals();
    let mut section = ctx.kge_section(which)?.clone();
    if hpo {
        section.hpo.get_or_insert_with(HpoSpec::default);
    } else {
        section.hpo = None;
    }
    let mut hpo_log = Vec::new();
    let t = train_section(&g, &section, ctx.seed, Some(&mut hpo_log))?;
    let dir = ctx.out_dir()?;
    let name = which.name();
    let mut log = Vec::new();
    write_training_log(&t.history, &mut log)?;
    write(&dir.join(format!("kge-{name}.log.csv")), &log)?;
    if hpo {
        write(&dir.join(format!("kge-{name}-hpo.csv")), &hpo_log)?;
    }
    let ck = Checkpoint::Kge(KgeCheckpoint {
        config: t.config,
        table: t.table,
        entity_names: g.entities().names().to_vec(),
        relation_names: g.relations().names().to_vec(),
    });
    save_checkpoint(&ck, dir.join(format!("kge-{name}.ckpt")))?;
    eprintln!("{} after {} epochs: loss {:.4}", ck.kind(), t.history.len(), t.history.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
