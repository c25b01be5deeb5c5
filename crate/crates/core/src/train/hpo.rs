use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{relative_loss, train_kge, LossConfig, LossKind, TrainError, TrainOptions};
use crate::kg::KnowledgeGraph;
use crate::kge::KgeConfig;
use crate::rng::{self, stream};

/// Search ranges; bounds are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HpoSpec {
    pub losses: Vec<LossKind>,
    pub margin: (f64, f64),
    pub bias: (f64, f64),
    pub dim: (usize, usize),
    pub negatives: (usize, usize),
    pub trials: usize,
}

impl Default for HpoSpec {
    fn default() -> Self {
        Self {
            losses: LossKind::ALL.to_vec(),
            margin: (1.0, 10.0),
            bias: (0.0, 20.0),
            dim: (100, 400),
            negatives: (10, 100),
            trials: 20,
        }
    }
}

impl HpoSpec {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |what: &str| Err(TrainError::Config(format!("search range for {what} is empty or invalid")));
        if self.trials == 0 {
            return Err(TrainError::Config("at least one trial is required".into()));
        }
        if self.losses.is_empty() {
            return bad("losses");
        }
        if !(self.margin.0 >= 0.0 && self.margin.0 <= self.margin.1 && self.margin.1.is_finite()) {
            return bad("margin");
        }
        if !(self.bias.0 >= 0.0 && self.bias.0 <= self.bias.1 && self.bias.1.is_finite()) {
            return bad("bias");
        }
        if self.dim.0 == 0 || self.dim.0 > self.dim.1 {
            return bad("dimension");
        }
        if self.negatives.0 == 0 || self.negatives.0 > self.negatives.1 {
            return bad("negatives");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpoTrial {
    pub index: usize,
    pub config: KgeConfig,
    pub loss: LossConfig,
    /// `None` when the trial diverged.
    pub relative_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpoResult {
    pub best: HpoTrial,
    pub trials: Vec<HpoTrial>,
}

/// Random search minimising relative loss.
///
/// Every trial samples all five values, so the trial list depends only on `seed`; the
/// margin is then zeroed for logistic losses and the bias for non-geometric models.
/// Diverged trials are skipped; other training errors abort the search.
pub fn random_search(
    g: &KnowledgeGraph,
    base: &KgeConfig,
    spec: &HpoSpec,
    opts: &TrainOptions,
    seed: u64,
) -> Result<HpoResult, TrainError> {
    spec.validate()?;
    let mut rng = rng::stream(seed, stream::HPO);
    let mut trials = Vec::with_capacity(spec.trials);
    for index in 0..spec.trials {
        let kind = spec.losses[rng.gen_range(0..spec.losses.len())];
        let margin = rng.gen_range(spec.margin.0..=spec.margin.1);
        let bias = rng.gen_range(spec.bias.0..=spec.bias.1);
        let dim = rng.gen_range(spec.dim.0..=spec.dim.1);
        let negatives = rng.gen_range(spec.negatives.0..=spec.negatives.1);
        let mut config = base.clone();
        config.dim = dim;
        config.bias = if base.model.is_geometric() { bias } else { 0.0 };
        // an explicit ConvE reshape cannot follow a sampled dimension
        config.conve_reshape = None;
        let loss = LossConfig::new(kind, if kind.uses_margin() { margin } else { 0.0 }, negatives);
        let relative = match train_kge(g, &config, &loss, opts, seed.wrapping_add(index as u64 + 1)) {
            Ok((_, state)) => Some(relative_loss(&state)?),
            Err(e) if e.is_numerical() => None,
            Err(e) => return Err(e),
        };
        trials.push(HpoTrial {
            index,
            config,
            loss,
            relative_loss: relative,
        });
    }
    let best = trials
        .iter()
        .filter(|t| t.relative_loss.is_some())
        .min_by(|a, b| a.relative_loss.partial_cmp(&b.relative_loss).expect("relative loss is never NaN"))
        .cloned()
        .ok_or(TrainError::AllTrialsDiverged(spec.trials))?;
    Ok(HpoResult { best, trials })
}

/// CSV of every trial: `trial,loss,margin,bias,dim,negatives,relative_loss` (empty RL if diverged).
pub fn write_hpo_log(result: &HpoResult, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "trial,loss,margin,bias,dim,negatives,relative_loss")?;
    for t in &result.trials {
        let rl = t.relative_loss.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            t.index, t.loss.kind, t.loss.margin, t.config.bias, t.config.dim, t.loss.negatives, rl
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::parse_triples;
    use crate::kge::ModelKind;

    fn small_spec(trials: usize) -> HpoSpec {
        HpoSpec {
            dim: (2, 6),
            negatives: (1, 3),
            trials,
            ..HpoSpec::default()
        }
    }

    fn opts() -> TrainOptions {
        TrainOptions {
            epochs: 5,
            ..TrainOptions::default()
        }
    }

    #[test]
    fn trials_within_ranges_and_reproducible() {
        let g = parse_triples("a\tp\tb\nb\tp\tc\nc\tq\ta\n").unwrap();
        let base = KgeConfig::new(ModelKind::TransE, 4);
        let spec = small_spec(6);
        let a = random_search(&g, &base, &spec, &opts(), 3).unwrap();
        let b = random_search(&g, &base, &spec, &opts(), 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials.len(), 6);
        for t in &a.trials {
            assert!((2..=6).contains(&t.config.dim));
            assert!((1..=3).contains(&t.loss.negatives));
            assert!((0.0..=20.0).contains(&t.config.bias));
            if t.loss.kind.uses_margin() {
                assert!((1.0..=10.0).contains(&t.loss.margin));
            } else {
                assert_eq!(t.loss.margin, 0.0);
            }
        }
        let best = a.best.relative_loss.unwrap();
        assert!(a.trials.iter().all(|t| t.relative_loss.unwrap() >= best));
    }

    #[test]
    fn one_trial_is_the_winner() {
        let g = parse_triples("a\tp\tb\nb\tp\tc\n").unwrap();
        let base = KgeConfig::new(ModelKind::DistMult, 4);
        let r = random_search(&g, &base, &small_spec(1), &opts(), 0);
        let r = r.unwrap();
        assert_eq!(r.best, r.trials[0]);
        assert_eq!(r.best.config.bias, 0.0);
        let mut log = Vec::new();
        write_hpo_log(&r, &mut log).unwrap();
        assert_eq!(String::from_utf8(log).unwrap().lines().count(), 2);
    }

    #[test]
    fn all_diverged_is_an_error() {
        let g = parse_triples("a\tp\tb\nb\tp\tc\n").unwrap();
        let base = KgeConfig::new(ModelKind::DistMult, 4);
        let o = TrainOptions {
            epochs: 30,
            lr: 1e200,
            ..TrainOptions::default()
        };
        let spec = HpoSpec {
            losses: vec![LossKind::PointwiseHinge],
            ..small_spec(2)
        };
        assert_eq!(
            random_search(&g, &base, &spec, &o, 0).unwrap_err(),
            TrainError::AllTrialsDiverged(2)
        );
    }

    #[test]
    fn zero_trials_rejected() {
        let g = parse_triples("a\tp\tb\n").unwrap();
        let base = KgeConfig::new(ModelKind::DistMult, 4);
        assert!(random_search(&g, &base, &small_spec(0), &opts(), 0).is_err());
    }
}
