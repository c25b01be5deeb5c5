use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{sample_negatives, Adam, LossKind, Sampling, TrainError};
use crate::kg::{EntityTriple, KnowledgeGraph};
use crate::kge::{init_embeddings, score, EmbeddingTable, KgeConfig};
use crate::matrix::Matrix;
use crate::rng::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Margin γ, used by the hinge losses only.
    #[serde(default)]
    pub margin: f64,
    /// Negatives per positive η.
    pub negatives: usize,
}

impl LossConfig {
    pub fn new(kind: LossKind, margin: f64, negatives: usize) -> Self {
        Self { kind, margin, negatives }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(TrainError::Config(format!("margin {} must be finite and ≥ 0", self.margin)));
        }
        if self.negatives == 0 {
            return Err(TrainError::Config("need at least one negative per positive".into()));
        }
        Ok(())
    }
}

fn default_epochs() -> usize {
    100
}
fn default_lr() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Positives per step; defaults to the whole graph up to 1024 triples, else 1024.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub sampling: Sampling,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            lr: default_lr(),
            batch_size: None,
            sampling: Sampling::default(),
        }
    }
}

impl TrainOptions {
    pub fn batch_for(&self, n: usize) -> usize {
        self.batch_size.unwrap_or(if n <= 1024 { n } else { 1024 }).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    /// Mean per-positive loss of each epoch, measured before that epoch's updates.
    pub loss_history: Vec<f64>,
    pub adam: Adam,
    pub seed: u64,
}

/// Gradient buffers shaped like an [`EmbeddingTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct TableGradients {
    pub entities: Matrix,
    pub relations: Matrix,
    pub conv: Option<Vec<f64>>,
}

impl TableGradients {
    pub fn zeros_like(t: &EmbeddingTable) -> Self {
        Self {
            entities: Matrix::zeros(t.entities.rows(), t.entities.cols()),
            relations: Matrix::zeros(t.relations.rows(), t.relations.cols()),
            conv: t.conv.as_ref().map(|c| vec![0.0; c.values.len()]),
        }
    }

    pub fn clear(&mut self) {
        self.entities.fill(0.0);
        self.relations.fill(0.0);
        if let Some(c) = &mut self.conv {
            c.fill(0.0);
        }
    }
}

/// Adds `scale · ∂score(t)` for one triple into `grads`; returns the raw score.
fn accumulate(cfg: &KgeConfig, table: &EmbeddingTable, t: EntityTriple, scale: f64, grads: &mut TableGradients) -> f64 {
    let (s, p, o) = (t.subject as usize, t.predicate as usize, t.object as usize);
    let w = table.entities.cols();
    let mut gs = vec![0.0; w];
    let mut go = vec![0.0; w];
    let raw = score::accumulate_gradients(
        cfg,
        table.conv.as_ref(),
        table.entities.row(s),
        table.relations.row(p),
        table.entities.row(o),
        scale,
        &mut gs,
        grads.relations.row_mut(p),
        &mut go,
        grads.conv.as_deref_mut(),
    );
    for (g, d) in grads.entities.row_mut(s).iter_mut().zip(&gs) {
        *g += d;
    }
    for (g, d) in grads.entities.row_mut(o).iter_mut().zip(&go) {
        *g += d;
    }
    raw
}

fn plausibility(cfg: &KgeConfig, table: &EmbeddingTable, t: EntityTriple) -> f64 {
    cfg.plausibility_of(score::score_vectors(
        cfg,
        table.conv.as_ref(),
        table.entities.row(t.subject as usize),
        table.relations.row(t.predicate as usize),
        table.entities.row(t.object as usize),
    ))
}

/// Mean per-positive loss of a batch, accumulating `weight · ∂(mean loss)` into `grads`.
///
/// `negatives` holds `η` corruptions per positive, grouped in positive order; each positive
/// is paired only with its own negatives.
pub fn batch_loss(
    cfg: &KgeConfig,
    table: &EmbeddingTable,
    loss: &LossConfig,
    positives: &[EntityTriple],
    negatives: &[EntityTriple],
    weight: f64,
    mut grads: Option<&mut TableGradients>,
) -> Result<f64, TrainError> {
    if positives.is_empty() {
        return Ok(0.0);
    }
    if negatives.len() % positives.len() != 0 {
        return Err(TrainError::Shape(format!(
            "{} negatives for {} positives",
            negatives.len(),
            positives.len()
        )));
    }
    let eta = negatives.len() / positives.len();
    let b = positives.len() as f64;
    let sign = cfg.plausibility_sign();
    let mut total = 0.0;
    for (i, &pos) in positives.iter().enumerate() {
        let negs = &negatives[i * eta..(i + 1) * eta];
        let ps = [plausibility(cfg, table, pos)];
        let ns: Vec<f64> = negs.iter().map(|&n| plausibility(cfg, table, n)).collect();
        let v = loss.kind.evaluate(loss.margin, &ps, &ns);
        total += v.value;
        if let Some(g) = grads.as_deref_mut() {
            accumulate(cfg, table, pos, weight * sign * v.d_pos[0] / b, g);
            for (&n, &d) in negs.iter().zip(&v.d_neg) {
                if d != 0.0 {
                    accumulate(cfg, table, n, weight * sign * d / b, g);
                }
            }
        }
    }
    Ok(total / b)
}

/// Loss of one positive against its negatives, with exact gradients w.r.t. the table.
pub fn loss_gradients(
    cfg: &KgeConfig,
    table: &EmbeddingTable,
    loss: &LossConfig,
    positive: EntityTriple,
    negatives: &[EntityTriple],
) -> Result<(f64, TableGradients), TrainError> {
    cfg.check_table(table)?;
    let mut g = TableGradients::zeros_like(table);
    let v = batch_loss(cfg, table, loss, &[positive], negatives, 1.0, Some(&mut g))?;
    Ok((v, g))
}

pub(crate) fn table_tensors(table: &mut EmbeddingTable) -> Vec<&mut [f64]> {
    let mut v = vec![table.entities.as_mut_slice(), table.relations.as_mut_slice()];
    if let Some(c) = &mut table.conv {
        v.push(c.values.as_mut_slice());
    }
    v
}

pub(crate) fn gradient_tensors(g: &TableGradients) -> Vec<&[f64]> {
    let mut v = vec![g.entities.as_slice(), g.relations.as_slice()];
    if let Some(c) = &g.conv {
        v.push(c.as_slice());
    }
    v
}

pub(crate) fn table_lens(table: &EmbeddingTable) -> Vec<usize> {
    let mut v = vec![table.entities.as_slice().len(), table.relations.as_slice().len()];
    if let Some(c) = &table.conv {
        v.push(c.values.len());
    }
    v
}

/// Trains embeddings for every triple of `g` from a seeded initialisation.
pub fn train_kge(
    g: &KnowledgeGraph,
    cfg: &KgeConfig,
    loss: &LossConfig,
    opts: &TrainOptions,
    seed: u64,
) -> Result<(EmbeddingTable, TrainState), TrainError> {
    cfg.validate()?;
    loss.validate()?;
    if !(opts.lr > 0.0 && opts.lr.is_finite()) {
        return Err(TrainError::Config(format!("learning rate {} must be > 0", opts.lr)));
    }
    let triples = g.entity_triples()?;
    if triples.is_empty() {
        return Err(TrainError::NoTriples);
    }
    let mut table = init_embeddings(cfg, g.num_entities(), g.num_relations(), seed)?;
    let mut state = TrainState {
        epoch: 0,
        loss_history: Vec::with_capacity(opts.epochs),
        adam: Adam::new(opts.lr, &table_lens(&table)),
        seed,
    };
    let mut neg_rng = rng::stream(seed, stream::NEGATIVES);
    let mut shuffle_rng = rng::stream(seed, stream::SHUFFLE);
    let batch = opts.batch_for(triples.len());
    let mut order = triples.clone();
    let mut grads = TableGradients::zeros_like(&table);
    for epoch in 1..=opts.epochs {
        if batch < order.len() {
            order.shuffle(&mut shuffle_rng);
        }
        let mut sum = 0.0;
        for chunk in order.chunks(batch) {
            let negs = sample_negatives(g, chunk, loss.negatives, opts.sampling, &mut neg_rng)?;
            grads.clear();
            let l = batch_loss(cfg, &table, loss, chunk, &negs, 1.0, Some(&mut grads))?;
            if !l.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            sum += l * chunk.len() as f64;
            match state.adam.step(&mut table_tensors(&mut table), &gradient_tensors(&grads)) {
                Err(TrainError::NonFiniteGradient) => return Err(TrainError::Diverged { epoch }),
                r => r?,
            }
        }
        state.loss_history.push(sum / triples.len() as f64);
        state.epoch = epoch;
    }
    if !table.is_finite() {
        return Err(TrainError::Diverged { epoch: state.epoch });
    }
    Ok((table, state))
}

/// `L_last / L_first`; a run that starts at zero loss scores 1 if it stays there, else +∞.
pub fn relative_loss(state: &TrainState) -> Result<f64, TrainError> {
    match (state.loss_history.first(), state.loss_history.last()) {
        (Some(&first), Some(&last)) if first == 0.0 => Ok(if last == 0.0 { 1.0 } else { f64::INFINITY }),
        (Some(&first), Some(&last)) => Ok(if first == last { 1.0 } else { last / first }),
        _ => Err(TrainError::EmptyHistory),
    }
}

/// Rank of the true object among all entities by plausibility; ties count half.
pub fn rank_object(cfg: &KgeConfig, table: &EmbeddingTable, t: EntityTriple) -> f64 {
    let truth = plausibility(cfg, table, t);
    let (mut better, mut ties) = (0usize, 0usize);
    for e in 0..table.num_entities() as u32 {
        if e == t.object {
            continue;
        }
        let v = plausibility(cfg, table, EntityTriple::new(t.subject, t.predicate, e));
        if v > truth {
            better += 1;
        } else if v == truth {
            ties += 1;
        }
    }
    1.0 + better as f64 + ties as f64 / 2.0
}

pub fn mean_rank(cfg: &KgeConfig, table: &EmbeddingTable, triples: &[EntityTriple]) -> f64 {
    triples.iter().map(|&t| rank_object(cfg, table, t)).sum::<f64>() / triples.len().max(1) as f64
}

/// CSV `epoch,loss,relative_loss`, epochs numbered from 1.
pub fn write_training_log(history: &[f64], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "epoch,loss,relative_loss")?;
    if let Some(&first) = history.first() {
        for (i, l) in history.iter().enumerate() {
            writeln!(w, "{},{},{}", i + 1, l, l / first)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::parse_triples;
    use crate::kge::ModelKind;

    fn state(h: Vec<f64>) -> TrainState {
        TrainState {
            epoch: h.len(),
            loss_history: h,
            adam: Adam::new(0.1, &[]),
            seed: 0,
        }
    }

    #[test]
    fn relative_loss_examples() {
        assert_eq!(relative_loss(&state(vec![3.0, 3.0, 3.0])).unwrap(), 1.0);
        assert_eq!(relative_loss(&state(vec![10.0, 5.0])).unwrap(), 0.5);
        assert_eq!(relative_loss(&state(vec![7.0])).unwrap(), 1.0);
        assert_eq!(relative_loss(&state(vec![0.0, 0.0])).unwrap(), 1.0);
        assert_eq!(relative_loss(&state(vec![0.0, 2.0])).unwrap(), f64::INFINITY);
        assert_eq!(relative_loss(&state(vec![])), Err(TrainError::EmptyHistory));
    }

    fn chain() -> KnowledgeGraph {
        parse_triples("a\tp\tb\nb\tp\tc\nc\tp\td\nd\tq\ta\n").unwrap()
    }

    #[test]
    fn zero_epochs_returns_initial_table() {
        let g = chain();
        let cfg = KgeConfig::new(ModelKind::DistMult, 4);
        let opts = TrainOptions {
            epochs: 0,
            ..TrainOptions::default()
        };
        let loss = LossConfig::new(LossKind::PointwiseLogistic, 0.0, 2);
        let (t, s) = train_kge(&g, &cfg, &loss, &opts, 5).unwrap();
        assert_eq!(t, init_embeddings(&cfg, 4, 2, 5).unwrap());
        assert!(s.loss_history.is_empty());
        assert!(relative_loss(&s).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let g = chain();
        let cfg = KgeConfig::new(ModelKind::TransE, 4);
        let loss = LossConfig::new(LossKind::PairwiseHinge, 1.0, 3);
        let opts = TrainOptions {
            epochs: 20,
            batch_size: Some(2),
            sampling: Sampling::Slcwa,
            ..TrainOptions::default()
        };
        let a = train_kge(&g, &cfg, &loss, &opts, 7).unwrap();
        let b = train_kge(&g, &cfg, &loss, &opts, 7).unwrap();
        assert_eq!(a.1.loss_history, b.1.loss_history);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn single_triple_loss_is_monotone() {
        let g = parse_triples("a\tp\tb\n").unwrap();
        let mut cfg = KgeConfig::new(ModelKind::DistMult, 1);
        cfg.dim = 1;
        let loss = LossConfig::new(LossKind::PointwiseLogistic, 0.0, 1);
        let opts = TrainOptions {
            epochs: 200,
            lr: 1e-3,
            ..TrainOptions::default()
        };
        let (_, s) = train_kge(&g, &cfg, &loss, &opts, 3).unwrap();
        for w in s.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", w);
        }
        assert!(relative_loss(&s).unwrap() < 1.0);
    }

    #[test]
    fn literals_rejected() {
        let g = parse_triples("a\tp\t\"lit\"\n").unwrap();
        let cfg = KgeConfig::new(ModelKind::DistMult, 2);
        let loss = LossConfig::new(LossKind::PointwiseHinge, 1.0, 1);
        assert!(matches!(
            train_kge(&g, &cfg, &loss, &TrainOptions::default(), 0),
            Err(TrainError::Kg(_))
        ));
    }

    #[test]
    fn huge_learning_rate_reports_epoch() {
        let g = chain();
        let cfg = KgeConfig::new(ModelKind::DistMult, 2);
        let loss = LossConfig::new(LossKind::PointwiseHinge, 1.0, 1);
        let opts = TrainOptions {
            epochs: 50,
            lr: 1e200,
            ..TrainOptions::default()
        };
        match train_kge(&g, &cfg, &loss, &opts, 0) {
            Err(e @ TrainError::Diverged { .. }) => assert!(e.is_numerical()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn log_format() {
        let mut out = Vec::new();
        write_training_log(&[4.0, 2.0], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "epoch,loss,relative_loss\n1,4,1\n2,2,0.5\n");
    }
}
