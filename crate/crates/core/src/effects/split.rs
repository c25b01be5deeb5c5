use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{write_samples, EffectsError, Sample};
use crate::rng::{self, stream};

/// How samples are kept apart across train/validation/test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Random over (chemical, species) pairs.
    I,
    /// Disjoint chemicals.
    Ii,
    /// Disjoint species.
    Iii,
    /// Disjoint chemicals and disjoint species.
    Iv,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::I, Strategy::Ii, Strategy::Iii, Strategy::Iv];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::I => "i",
            Strategy::Ii => "ii",
            Strategy::Iii => "iii",
            Strategy::Iv => "iv",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown split strategy {s:?} (expected i, ii, iii or iv)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for Proportions {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.15,
            test: 0.15,
        }
    }
}

impl Proportions {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }

    pub fn validate(&self) -> Result<(), EffectsError> {
        let p = self.as_array();
        let ok = p.iter().all(|&x| x > 0.0 && x.is_finite()) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(EffectsError::Proportions(p))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub strategy: Strategy,
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl SplitResult {
    pub fn partitions(&self) -> [&[Sample]; 3] {
        [&self.train, &self.validation, &self.test]
    }
}

/// Shuffles the group keys and hands each to the partition furthest below its target
/// share of samples (ties go to the earlier partition). Once the remaining keys are only
/// just enough to give every empty partition one group, they go to empty partitions.
fn greedy_assign<K: Clone + Eq + Hash>(
    keys_in_order: Vec<K>,
    weight: &HashMap<K, usize>,
    targets: [f64; 3],
    rng: &mut rng::Rng,
) -> HashMap<K, usize> {
    let mut keys = keys_in_order;
    keys.shuffle(rng);
    let total: usize = keys.iter().map(|k| weight[k]).sum();
    let goal = targets.map(|t| t * total as f64);
    let mut filled = [0usize; 3];
    let mut out = HashMap::with_capacity(keys.len());
    let mut count = [0usize; 3];
    let n = keys.len();
    for (idx, k) in keys.into_iter().enumerate() {
        let empty = count.iter().filter(|&&c| c == 0).count();
        let forced = n - idx <= empty;
        let mut best = None::<usize>;
        for i in 0..3 {
            if forced && count[i] > 0 {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => goal[i] - filled[i] as f64 > goal[b] - filled[b] as f64,
            };
            if better {
                best = Some(i);
            }
        }
        let best = best.expect("at least one eligible partition");
        count[best] += 1;
        filled[best] += weight[&k];
        out.insert(k, best);
    }
    out
}

fn keys_and_weights<K: Clone + Eq + Hash>(samples: &[Sample], key: impl Fn(&Sample) -> K) -> (Vec<K>, HashMap<K, usize>) {
    let mut order = Vec::new();
    let mut w = HashMap::new();
    for s in samples {
        let k = key(s);
        *w.entry(k.clone()).or_insert_with(|| {
            order.push(k);
            0
        }) += 1;
    }
    (order, w)
}

/// Splits samples into train/validation/test under `strategy`.
///
/// Strategy (iv) partitions chemicals and species independently with targets proportional
/// to `√p` and keeps a sample only where both land in the same partition, so the kept
/// shares approximate `p`; the discarded cross-partition samples are unavoidable.
pub fn split_strategy(
    samples: &[Sample],
    strategy: Strategy,
    proportions: Proportions,
    seed: u64,
) -> Result<SplitResult, EffectsError> {
    proportions.validate()?;
    let p = proportions.as_array();
    let mut rng = rng::stream(seed, stream::SPLIT);
    let too_few = |what: &str, n: usize| {
        EffectsError::TooFewGroups(format!("{n} distinct {what} cannot populate three partitions"))
    };
    let assignment: Vec<Option<usize>> = match strategy {
        Strategy::I | Strategy::Ii | Strategy::Iii => {
            let key = |s: &Sample| match strategy {
                Strategy::I => (s.chemical.clone(), s.species.clone()),
                Strategy::Ii => (s.chemical.clone(), String::new()),
                _ => (String::new(), s.species.clone()),
            };
            let (order, w) = keys_and_weights(samples, key);
            if order.len() < 3 {
                let what = ["pairs", "chemicals", "species"][strategy as usize];
                return Err(too_few(what, order.len()));
            }
            let a = greedy_assign(order, &w, p, &mut rng);
            samples.iter().map(|s| Some(a[&key(s)])).collect()
        }
        Strategy::Iv => {
            let norm: f64 = p.iter().map(|x| x.sqrt()).sum();
            let q = p.map(|x| x.sqrt() / norm);
            let (co, cw) = keys_and_weights(samples, |s| s.chemical.clone());
            let (so, sw) = keys_and_weights(samples, |s| s.species.clone());
            if co.len() < 3 {
                return Err(too_few("chemicals", co.len()));
            }
            if so.len() < 3 {
                return Err(too_few("species", so.len()));
            }
            let ca = greedy_assign(co, &cw, q, &mut rng);
            let sa = greedy_assign(so, &sw, q, &mut rng);
            samples
                .iter()
                .map(|s| {
                    let (a, b) = (ca[&s.chemical], sa[&s.species]);
                    (a == b).then_some(a)
                })
                .collect()
        }
    };
    let mut parts: [Vec<Sample>; 3] = Default::default();
    for (s, a) in samples.iter().zip(assignment) {
        if let Some(i) = a {
            parts[i].push(s.clone());
        }
    }
    if let Some(i) = parts.iter().position(Vec::is_empty) {
        return Err(EffectsError::TooFewGroups(format!(
            "strategy {strategy} left the {} partition empty",
            ["train", "validation", "test"][i]
        )));
    }
    let [train, validation, test] = parts;
    Ok(SplitResult {
        strategy,
        train,
        validation,
        test,
    })
}

/// Appends uniformly drawn duplicates of the minority class until both classes are equal.
pub fn oversample(train: &[Sample], seed: u64) -> Result<Vec<Sample>, EffectsError> {
    let pos: Vec<&Sample> = train.iter().filter(|s| s.label == 1).collect();
    let neg: Vec<&Sample> = train.iter().filter(|s| s.label == 0).collect();
    if pos.is_empty() {
        return Err(EffectsError::MissingClass(1));
    }
    if neg.is_empty() {
        return Err(EffectsError::MissingClass(0));
    }
    let (minority, deficit) = if pos.len() < neg.len() {
        (&pos, neg.len() - pos.len())
    } else {
        (&neg, pos.len() - neg.len())
    };
    let mut rng = rng::stream(seed, stream::OVERSAMPLE);
    let mut out = train.to_vec();
    for _ in 0..deficit {
        out.push(minority[rng.gen_range(0..minority.len())].clone());
    }
    Ok(out)
}

#[derive(Serialize)]
struct Summary {
    strategy: Strategy,
    seed: u64,
    train: usize,
    validation: usize,
    test: usize,
}

/// Writes `train.csv`, `validation.csv`, `test.csv` and `split.json` into `dir`.
pub fn write_split(result: &SplitResult, seed: u64, dir: impl AsRef<Path>) -> Result<(), EffectsError> {
    let dir = dir.as_ref();
    let io = |p: &Path, e: &dyn fmt::Display| EffectsError::Io {
        path: p.display().to_string(),
        message: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, &e))?;
    for (name, part) in ["train", "validation", "test"].iter().zip(result.partitions()) {
        let path = dir.join(format!("{name}.csv"));
        let f = std::fs::File::create(&path).map_err(|e| io(&path, &e))?;
        write_samples(part, f)?;
    }
    let summary = Summary {
        strategy: result.strategy,
        seed,
        train: result.train.len(),
        validation: result.validation.len(),
        test: result.test.len(),
    };
    let path = dir.join("split.json");
    let json = serde_json::to_string_pretty(&summary).map_err(|e| io(&path, &e))?;
    std::fs::write(&path, json + "\n").map_err(|e| io(&path, &e))
}
