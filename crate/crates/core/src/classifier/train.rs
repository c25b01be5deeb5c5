use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::mlp::bce_with_grad;
use super::{bce_loss, ClassifierError, EmbeddingSource, Inputs, Mlp};
use crate::kg::{EntityTriple, KnowledgeGraph};
use crate::kge::{EmbeddingTable, KgeConfig};
use crate::matrix::Matrix;
use crate::rng::{self, stream, Rng};
use crate::train::{batch_loss, sample_negatives, Adam, LossConfig, Sampling, TableGradients, TrainError};

fn default_epochs() -> usize {
    100
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    256
}
fn default_patience() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClfTrainOptions {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
}

impl Default for ClfTrainOptions {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            lr: default_lr(),
            batch_size: default_batch(),
            patience: default_patience(),
        }
    }
}

impl ClfTrainOptions {
    fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ClassifierError::Config(format!("learning rate {} must be > 0", self.lr)));
        }
        if self.batch_size == 0 || self.patience == 0 {
            return Err(ClassifierError::Config("batch size and patience must be ≥ 1".into()));
        }
        Ok(())
    }
}

fn one() -> f64 {
    1.0
}
fn default_scale() -> f64 {
    0.01
}

/// Joint fine-tuning weights `L = α_C·L_C + α_S·L_S + α_MLP·L_MLP` and learning-rate scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtConfig {
    #[serde(default = "one")]
    pub alpha_c: f64,
    #[serde(default = "one")]
    pub alpha_s: f64,
    #[serde(default = "one")]
    pub alpha_mlp: f64,
    #[serde(default = "default_scale")]
    pub lr_scale: f64,
}

impl Default for FtConfig {
    fn default() -> Self {
        Self {
            alpha_c: 1.0,
            alpha_s: 1.0,
            alpha_mlp: 1.0,
            lr_scale: default_scale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClfHistory {
    /// Mean training BCE per epoch, measured before each batch's update.
    pub train_loss: Vec<f64>,
    /// Validation BCE after each epoch (inference mode).
    pub val_loss: Vec<f64>,
    /// Mean graph losses per epoch during fine-tuning (empty otherwise).
    pub chem_kge_loss: Vec<f64>,
    pub species_kge_loss: Vec<f64>,
    /// Epoch whose weights were kept; 0 means the initial weights.
    pub best_epoch: usize,
}

struct EarlyStop {
    best: f64,
    wait: usize,
    patience: usize,
}

impl EarlyStop {
    fn new(patience: usize) -> Self {
        Self {
            best: f64::INFINITY,
            wait: 0,
            patience,
        }
    }

    /// Returns (improved, stop).
    fn observe(&mut self, v: f64) -> (bool, bool) {
        if v < self.best {
            self.best = v;
            self.wait = 0;
            (true, false)
        } else {
            self.wait += 1;
            (false, self.wait >= self.patience)
        }
    }
}

fn check_sets(mlp: &Mlp, chem: &Matrix, species: &Matrix, train: &Inputs, val: &Inputs) -> Result<(), ClassifierError> {
    if train.is_empty() {
        return Err(ClassifierError::EmptySet("training"));
    }
    if val.is_empty() {
        return Err(ClassifierError::EmptySet("validation"));
    }
    mlp.check_inputs(train, chem, species)?;
    mlp.check_inputs(val, chem, species)
}

fn epoch_order(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

fn val_loss(mlp: &Mlp, chem: &Matrix, species: &Matrix, val: &Inputs) -> f64 {
    let p: Vec<f64> = mlp
        .logits_with(chem, species, val)
        .into_iter()
        .map(crate::train::sigmoid)
        .collect();
    bce_loss(&p, &val.labels)
}

/// Trains with Adam on BCE, stopping once validation BCE has not improved for
/// `patience` epochs and returning the best-validation weights.
pub fn train_classifier(
    mut mlp: Mlp,
    train: &Inputs,
    val: &Inputs,
    opts: &ClfTrainOptions,
    seed: u64,
) -> Result<(Mlp, ClfHistory), ClassifierError> {
    opts.validate()?;
    check_sets(&mlp, &mlp.chem_embed, &mlp.species_embed, train, val)?;
    let trainable = mlp.config.source.embeddings_trainable();
    let mut lens = mlp.layer_lens();
    if trainable {
        lens.push(mlp.chem_embed.as_slice().len());
        lens.push(mlp.species_embed.as_slice().len());
    }
    let mut adam = Adam::new(opts.lr, &lens);
    let mut rng = rng::stream(seed, stream::MLP);
    let mut history = ClfHistory::default();
    let mut stop = EarlyStop::new(opts.patience);
    let mut best = mlp.clone();
    for epoch in 1..=opts.epochs {
        let order = epoch_order(train.len(), &mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let batch = train.subset(chunk);
            let (logits, cache) = mlp.train_forward_with(&mlp.chem_embed, &mlp.species_embed, &batch, &mut rng);
            let (loss, dl) = bce_with_grad(&logits, &batch.labels);
            if !loss.is_finite() {
                return Err(ClassifierError::Diverged { epoch });
            }
            sum += loss * chunk.len() as f64;
            let mut g = mlp.zeros_like();
            let mut gc = trainable.then(|| Matrix::zeros(mlp.chem_embed.rows(), mlp.chem_embed.cols()));
            let mut gs = trainable.then(|| Matrix::zeros(mlp.species_embed.rows(), mlp.species_embed.cols()));
            mlp.backward_with(&batch, &cache, &dl, &mut g, gc.as_mut(), gs.as_mut());
            let mut grads = g.layer_tensors();
            if let (Some(c), Some(s)) = (&gc, &gs) {
                grads.push(c.as_slice());
                grads.push(s.as_slice());
            }
            match adam.step(&mut mlp.param_tensors_mut(trainable), &grads) {
                Err(TrainError::NonFiniteGradient) => return Err(ClassifierError::Diverged { epoch }),
                r => r?,
            }
            mlp.update_running(&cache);
        }
        history.train_loss.push(sum / train.len() as f64);
        let v = val_loss(&mlp, &mlp.chem_embed, &mlp.species_embed, val);
        if !v.is_finite() {
            return Err(ClassifierError::Diverged { epoch });
        }
        history.val_loss.push(v);
        let (improved, halt) = stop.observe(v);
        if improved {
            best = mlp.clone();
            history.best_epoch = epoch;
        }
        if halt {
            break;
        }
    }
    Ok((best, history))
}

/// One graph taking part in fine-tuning. The table's entity matrix is replaced by the
/// classifier's embedding matrix, so both losses train the same parameters.
pub struct FineTuneGraph<'a> {
    pub graph: &'a KnowledgeGraph,
    pub config: &'a KgeConfig,
    pub loss: &'a LossConfig,
    pub table: EmbeddingTable,
    pub sampling: Sampling,
}

struct GraphState<'a> {
    graph: &'a KnowledgeGraph,
    config: &'a KgeConfig,
    loss: &'a LossConfig,
    sampling: Sampling,
    triples: Vec<EntityTriple>,
    table: EmbeddingTable,
    grads: TableGradients,
    rng: Rng,
    weight: f64,
}

impl<'a> GraphState<'a> {
    fn new(g: FineTuneGraph<'a>, embed: &Matrix, weight: f64, seed: u64, tag: u64) -> Result<Self, ClassifierError> {
        g.config.check_table(&g.table).map_err(TrainError::from)?;
        if g.table.entities.shape() != embed.shape() {
            return Err(ClassifierError::Dimension {
                expected: embed.cols(),
                got: g.table.entities.cols(),
            });
        }
        let triples = g.graph.entity_triples().map_err(TrainError::from)?;
        if triples.is_empty() {
            return Err(TrainError::NoTriples.into());
        }
        let mut table = g.table;
        table.entities = embed.clone();
        let grads = TableGradients::zeros_like(&table);
        Ok(Self {
            graph: g.graph,
            config: g.config,
            loss: g.loss,
            sampling: g.sampling,
            triples,
            table,
            grads,
            rng: rng::stream(seed, tag),
            weight,
        })
    }

    /// Adds `weight · ∂L_KGE` for `n` freshly drawn triples into the gradient buffer.
    fn accumulate(&mut self, n: usize) -> Result<f64, TrainError> {
        if self.weight == 0.0 {
            return Ok(0.0);
        }
        let pos: Vec<EntityTriple> = (0..n)
            .map(|_| self.triples[self.rng.gen_range(0..self.triples.len())])
            .collect();
        let negs = sample_negatives(self.graph, &pos, self.loss.negatives, self.sampling, &mut self.rng)?;
        batch_loss(self.config, &self.table, self.loss, &pos, &negs, self.weight, Some(&mut self.grads))
    }
}

/// Jointly trains the classifier and both embedding tables on
/// `α_C·L_C + α_S·L_S + α_MLP·L_MLP` at `lr · lr_scale`, drawing as many graph triples
/// per batch as there are classifier samples. Stops on validation `L_MLP`.
#[allow(clippy::too_many_arguments)]
pub fn fine_tune(
    mlp: Mlp,
    ft: &FtConfig,
    chem: FineTuneGraph<'_>,
    species: FineTuneGraph<'_>,
    train: &Inputs,
    val: &Inputs,
    opts: &ClfTrainOptions,
    seed: u64,
) -> Result<(Mlp, [EmbeddingTable; 2], ClfHistory), ClassifierError> {
    if mlp.config.source != EmbeddingSource::Finetune {
        return Err(ClassifierError::NotFineTunable(mlp.config.source));
    }
    if [ft.alpha_c, ft.alpha_s, ft.alpha_mlp].iter().any(|a| !(*a >= 0.0 && a.is_finite()))
        || !(ft.lr_scale > 0.0 && ft.lr_scale.is_finite())
    {
        return Err(ClassifierError::Config(format!(
            "loss weights must be ≥ 0 and the learning-rate scale > 0: {ft:?}"
        )));
    }
    opts.validate()?;
    check_sets(&mlp, &mlp.chem_embed, &mlp.species_embed, train, val)?;
    let mut mlp = mlp;
    let mut gc = GraphState::new(chem, &mlp.chem_embed, ft.alpha_c, seed, stream::FT_CHEMICAL)?;
    let mut gs = GraphState::new(species, &mlp.species_embed, ft.alpha_s, seed, stream::FT_SPECIES)?;
    let mut lens = mlp.layer_lens();
    lens.extend(crate::train::table_lens(&gc.table));
    lens.extend(crate::train::table_lens(&gs.table));
    let mut adam = Adam::new(opts.lr * ft.lr_scale, &lens);
    let mut rng = rng::stream(seed, stream::MLP);
    let mut history = ClfHistory::default();
    let mut stop = EarlyStop::new(opts.patience);
    let snapshot = |m: &Mlp, c: &EmbeddingTable, s: &EmbeddingTable| {
        let mut m = m.clone();
        m.chem_embed = c.entities.clone();
        m.species_embed = s.entities.clone();
        (m, [c.clone(), s.clone()])
    };
    let mut best = snapshot(&mlp, &gc.table, &gs.table);
    for epoch in 1..=opts.epochs {
        let order = epoch_order(train.len(), &mut rng);
        let (mut sum, mut sum_c, mut sum_s) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(opts.batch_size) {
            let batch = train.subset(chunk);
            let (logits, cache) = mlp.train_forward_with(&gc.table.entities, &gs.table.entities, &batch, &mut rng);
            let (loss, mut dl) = bce_with_grad(&logits, &batch.labels);
            dl.iter_mut().for_each(|d| *d *= ft.alpha_mlp);
            gc.grads.clear();
            gs.grads.clear();
            let lc = gc.accumulate(chunk.len())?;
            let ls = gs.accumulate(chunk.len())?;
            if !(loss.is_finite() && lc.is_finite() && ls.is_finite()) {
                return Err(ClassifierError::Diverged { epoch });
            }
            sum += loss * chunk.len() as f64;
            sum_c += lc * chunk.len() as f64;
            sum_s += ls * chunk.len() as f64;
            let mut g = mlp.zeros_like();
            mlp.backward_with(
                &batch,
                &cache,
                &dl,
                &mut g,
                Some(&mut gc.grads.entities),
                Some(&mut gs.grads.entities),
            );
            let mut grads = g.layer_tensors();
            grads.extend(crate::train::gradient_tensors(&gc.grads));
            grads.extend(crate::train::gradient_tensors(&gs.grads));
            let mut params = mlp.param_tensors_mut(false);
            params.extend(crate::train::table_tensors(&mut gc.table));
            params.extend(crate::train::table_tensors(&mut gs.table));
            match adam.step(&mut params, &grads) {
                Err(TrainError::NonFiniteGradient) => return Err(ClassifierError::Diverged { epoch }),
                r => r?,
            }
            mlp.update_running(&cache);
        }
        let n = train.len() as f64;
        history.train_loss.push(sum / n);
        history.chem_kge_loss.push(sum_c / n);
        history.species_kge_loss.push(sum_s / n);
        let v = val_loss(&mlp, &gc.table.entities, &gs.table.entities, val);
        if !v.is_finite() {
            return Err(ClassifierError::Diverged { epoch });
        }
        history.val_loss.push(v);
        let (improved, halt) = stop.observe(v);
        if improved {
            best = snapshot(&mlp, &gc.table, &gs.table);
            history.best_epoch = epoch;
        }
        if halt {
            break;
        }
    }
    let (mlp, tables) = best;
    Ok((mlp, tables, history))
}
