use std::f64::consts::TAU;

use rand::Rng as _;

use super::{ConvParams, KgeConfig, KgeError, ModelKind, Representation};
use crate::matrix::Matrix;
use crate::rng::{self, stream};

/// Entity and relation parameters of one model, plus convolution weights if any.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub representation: Representation,
    pub entities: Matrix,
    pub relations: Matrix,
    pub conv: Option<ConvParams>,
}

impl EmbeddingTable {
    pub fn num_entities(&self) -> usize {
        self.entities.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.entities.is_finite()
            && self.relations.is_finite()
            && self.conv.as_ref().is_none_or(|c| c.values.iter().all(|v| v.is_finite()))
    }
}

/// Columns of an entity row that hold phases (drawn from `[0, 2π)` rather than the real box).
fn entity_phase_cols(model: ModelKind, k: usize) -> std::ops::Range<usize> {
    match model {
        ModelKind::PRotatE => 0..k,
        ModelKind::Hake => k..2 * k,
        _ => 0..0,
    }
}

fn relation_phase_cols(model: ModelKind, k: usize) -> std::ops::Range<usize> {
    match model {
        ModelKind::RotatE | ModelKind::PRotatE => 0..k,
        ModelKind::Hake => k..2 * k,
        _ => 0..0,
    }
}

fn fill(m: &mut Matrix, phases: std::ops::Range<usize>, bound: f64, rng: &mut rng::Rng) {
    for r in 0..m.rows() {
        for (c, v) in m.row_mut(r).iter_mut().enumerate() {
            *v = if phases.contains(&c) {
                rng.gen_range(0.0..TAU)
            } else {
                rng.gen_range(-bound..=bound)
            };
        }
    }
}

/// Fresh parameters: real coordinates uniform in `±6/√k`, phases uniform in `[0, 2π)`,
/// convolution weights Glorot-uniform with zero biases.
pub fn init_embeddings(
    cfg: &KgeConfig,
    num_entities: usize,
    num_relations: usize,
    seed: u64,
) -> Result<EmbeddingTable, KgeError> {
    cfg.validate()?;
    let k = cfg.dim;
    let bound = 6.0 / (k as f64).sqrt();
    let mut rng = rng::stream(seed, stream::INIT);
    let mut entities = Matrix::zeros(num_entities, cfg.entity_width());
    let mut relations = Matrix::zeros(num_relations, cfg.relation_width());
    fill(&mut entities, entity_phase_cols(cfg.model, k), bound, &mut rng);
    fill(&mut relations, relation_phase_cols(cfg.model, k), bound, &mut rng);
    let conv = cfg.conv_shape()?.map(|shape| ConvParams::init(shape, &mut rng));
    Ok(EmbeddingTable {
        representation: cfg.model.representation(),
        entities,
        relations,
        conv,
    })
}
