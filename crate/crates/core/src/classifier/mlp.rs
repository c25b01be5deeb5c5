use rand::Rng as _;

use super::layers::{Dense, Hidden, HiddenCache};
use super::{ClassifierError, EmbeddingSource, Inputs, MlpConfig};
use crate::matrix::Matrix;
use crate::rng::{self, stream, Rng};
use crate::train::sigmoid;

const CLAMP: f64 = 1e-7;

/// Classifier weights, including the two embedding matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub config: MlpConfig,
    /// `W_c`: one row per chemical-graph entity (or per chemical for one-hot).
    pub chem_embed: Matrix,
    /// `W_s`: one row per species-graph entity (or per species for one-hot).
    pub species_embed: Matrix,
    pub chemical: Vec<Hidden>,
    pub species: Vec<Hidden>,
    pub kappa: Vec<Hidden>,
    pub trunk: Vec<Hidden>,
    pub out: Dense,
}

pub(crate) struct ForwardCache {
    branches: [Vec<HiddenCache>; 3],
    trunk: Vec<HiddenCache>,
    top: Matrix,
    widths: [usize; 3],
}

fn stack(widths: &[usize], inp: usize, rng: &mut Rng) -> Vec<Hidden> {
    let mut prev = inp;
    widths
        .iter()
        .map(|&w| {
            let h = Hidden::init(prev, w, rng);
            prev = w;
            h
        })
        .collect()
}

fn out_width(layers: &[Hidden], inp: usize) -> usize {
    layers.last().map_or(inp, Hidden::width)
}

fn check_rows(idx: &[usize], rows: usize) -> Result<(), ClassifierError> {
    match idx.iter().find(|&&i| i >= rows) {
        Some(&index) => Err(ClassifierError::Index { index, rows }),
        None => Ok(()),
    }
}

/// Mean binary cross-entropy with predictions clamped to `[1e-7, 1 − 1e-7]`.
pub fn bce_loss(yhat: &[f64], y: &[f64]) -> f64 {
    assert_eq!(yhat.len(), y.len());
    if y.is_empty() {
        return 0.0;
    }
    let s: f64 = yhat
        .iter()
        .zip(y)
        .map(|(&p, &t)| {
            let p = p.clamp(CLAMP, 1.0 - CLAMP);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    s / y.len() as f64
}

/// BCE on logits and its gradient w.r.t. each logit (zero where the prediction is clamped).
pub(crate) fn bce_with_grad(logits: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
    let n = y.len().max(1) as f64;
    let probs: Vec<f64> = logits.iter().map(|&u| sigmoid(u)).collect();
    let grad = probs
        .iter()
        .zip(y)
        .map(|(&p, &t)| {
            if p < CLAMP || p > 1.0 - CLAMP {
                0.0
            } else {
                (p - t) / n
            }
        })
        .collect();
    (bce_loss(&probs, y), grad)
}

impl Mlp {
    /// Builds a classifier; `pretrained` supplies `(W_c, W_s)` for the pre-trained and
    /// fine-tuned sources and must be absent for one-hot.
    pub fn build(
        config: &MlpConfig,
        num_chemicals: usize,
        num_species: usize,
        pretrained: Option<(&Matrix, &Matrix)>,
        seed: u64,
    ) -> Result<Self, ClassifierError> {
        config.validate()?;
        let k = config.dim;
        let mut rng = rng::stream(seed, stream::INIT);
        let (chem_embed, species_embed) = match (config.source, pretrained) {
            (EmbeddingSource::OneHot, None) => {
                let mut init = |rows: usize| Matrix::from_fn(rows, k, |_, _| rng.gen_range(-0.05..=0.05));
                (init(num_chemicals), init(num_species))
            }
            (EmbeddingSource::OneHot, Some(_)) => {
                return Err(ClassifierError::Config("one-hot classifiers take no pre-trained tables".into()))
            }
            (_, None) => {
                return Err(ClassifierError::Config(format!(
                    "source `{}` needs pre-trained embedding tables",
                    config.source
                )))
            }
            (_, Some((c, s))) => {
                for t in [c, s] {
                    if t.cols() != k {
                        return Err(ClassifierError::Dimension {
                            expected: k,
                            got: t.cols(),
                        });
                    }
                }
                (c.clone(), s.clone())
            }
        };
        let l = &config.layers;
        let chemical = stack(&l.chemical, k, &mut rng);
        let species = stack(&l.species, k, &mut rng);
        let kappa = stack(&l.kappa, 1, &mut rng);
        let concat = out_width(&chemical, k) + out_width(&species, k) + out_width(&kappa, 1);
        let trunk = stack(&l.trunk, concat, &mut rng);
        let out = Dense::init(out_width(&trunk, concat), 1, &mut rng);
        Ok(Self {
            config: config.clone(),
            chem_embed,
            species_embed,
            chemical,
            species,
            kappa,
            trunk,
            out,
        })
    }

    /// Switches the embedding source, e.g. pre-trained → fine-tuned after baseline training.
    pub fn with_source(mut self, source: EmbeddingSource) -> Self {
        self.config.source = source;
        self
    }

    /// Zero-valued copy used as a gradient buffer.
    pub(crate) fn zeros_like(&self) -> Mlp {
        let z = |h: &[Hidden]| h.iter().map(|l| Hidden::zeros(l.dense.w.rows(), l.width())).collect();
        Mlp {
            config: self.config.clone(),
            chem_embed: Matrix::zeros(0, 0),
            species_embed: Matrix::zeros(0, 0),
            chemical: z(&self.chemical),
            species: z(&self.species),
            kappa: z(&self.kappa),
            trunk: z(&self.trunk),
            out: Dense::zeros(self.out.w.rows(), 1),
        }
    }

    fn hidden_layers(&self) -> impl Iterator<Item = &Hidden> {
        self.chemical.iter().chain(&self.species).chain(&self.kappa).chain(&self.trunk)
    }

    fn hidden_layers_mut(&mut self) -> impl Iterator<Item = &mut Hidden> {
        self.chemical
            .iter_mut()
            .chain(self.species.iter_mut())
            .chain(self.kappa.iter_mut())
            .chain(self.trunk.iter_mut())
    }

    /// Trainable layer tensors (weights, biases, scales, shifts) in a fixed order,
    /// followed by the two embedding matrices when `embeddings` is set.
    pub(crate) fn param_tensors_mut(&mut self, embeddings: bool) -> Vec<&mut [f64]> {
        let mut v = Vec::new();
        let out = &mut self.out;
        for h in self
            .chemical
            .iter_mut()
            .chain(self.species.iter_mut())
            .chain(self.kappa.iter_mut())
            .chain(self.trunk.iter_mut())
        {
            v.push(h.dense.w.as_mut_slice());
            v.push(h.dense.b.as_mut_slice());
            v.push(h.gamma.as_mut_slice());
            v.push(h.beta.as_mut_slice());
        }
        v.push(out.w.as_mut_slice());
        v.push(out.b.as_mut_slice());
        if embeddings {
            v.push(self.chem_embed.as_mut_slice());
            v.push(self.species_embed.as_mut_slice());
        }
        v
    }

    pub(crate) fn layer_tensors(&self) -> Vec<&[f64]> {
        let mut v = Vec::new();
        for h in self.hidden_layers() {
            v.push(h.dense.w.as_slice());
            v.push(h.dense.b.as_slice());
            v.push(h.gamma.as_slice());
            v.push(h.beta.as_slice());
        }
        v.push(self.out.w.as_slice());
        v.push(self.out.b.as_slice());
        v
    }

    pub(crate) fn layer_lens(&self) -> Vec<usize> {
        self.layer_tensors().iter().map(|t| t.len()).collect()
    }

    /// Every learnable weight, frozen embeddings included, excluding normalisation
    /// running statistics.
    pub fn weight_count(&self) -> usize {
        self.chem_embed.as_slice().len()
            + self.species_embed.as_slice().len()
            + self.layer_tensors().iter().map(|t| t.len()).sum::<usize>()
    }

    /// All tensors with stable names, in serialisation order.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut v = vec![
            ("chem_embed".to_owned(), &self.chem_embed),
            ("species_embed".to_owned(), &self.species_embed),
        ];
        for (branch, layers) in [
            ("chem", &self.chemical),
            ("species", &self.species),
            ("kappa", &self.kappa),
            ("trunk", &self.trunk),
        ] {
            for (i, h) in layers.iter().enumerate() {
                v.push((format!("{branch}.{i}.w"), &h.dense.w));
                v.push((format!("{branch}.{i}.b"), &h.dense.b));
                v.push((format!("{branch}.{i}.gamma"), &h.gamma));
                v.push((format!("{branch}.{i}.beta"), &h.beta));
                v.push((format!("{branch}.{i}.mean"), &h.running_mean));
                v.push((format!("{branch}.{i}.var"), &h.running_var));
            }
        }
        v.push(("out.w".to_owned(), &self.out.w));
        v.push(("out.b".to_owned(), &self.out.b));
        v
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut v = vec![
            ("chem_embed".to_owned(), &mut self.chem_embed),
            ("species_embed".to_owned(), &mut self.species_embed),
        ];
        for (branch, layers) in [
            ("chem", &mut self.chemical),
            ("species", &mut self.species),
            ("kappa", &mut self.kappa),
            ("trunk", &mut self.trunk),
        ] {
            for (i, h) in layers.iter_mut().enumerate() {
                v.push((format!("{branch}.{i}.w"), &mut h.dense.w));
                v.push((format!("{branch}.{i}.b"), &mut h.dense.b));
                v.push((format!("{branch}.{i}.gamma"), &mut h.gamma));
                v.push((format!("{branch}.{i}.beta"), &mut h.beta));
                v.push((format!("{branch}.{i}.mean"), &mut h.running_mean));
                v.push((format!("{branch}.{i}.var"), &mut h.running_var));
            }
        }
        v.push(("out.w".to_owned(), &mut self.out.w));
        v.push(("out.b".to_owned(), &mut self.out.b));
        v
    }

    pub(crate) fn check_inputs(&self, x: &Inputs, chem: &Matrix, species: &Matrix) -> Result<(), ClassifierError> {
        check_rows(&x.chemical, chem.rows())?;
        check_rows(&x.species, species.rows())
    }

    /// Inference-mode logits using the given embedding matrices.
    pub(crate) fn logits_with(&self, chem: &Matrix, species: &Matrix, x: &Inputs) -> Vec<f64> {
        let eps = self.config.bn_eps;
        let run = |mut h: Matrix, layers: &[Hidden]| {
            for l in layers {
                h = l.infer(&h, eps);
            }
            h
        };
        let c = run(chem.gather_rows(&x.chemical), &self.chemical);
        let s = run(species.gather_rows(&x.species), &self.species);
        let k = run(Matrix::from_vec(x.len(), 1, x.kappa.clone()), &self.kappa);
        let t = run(Matrix::hconcat(&[&c, &s, &k]), &self.trunk);
        self.out.forward(&t).as_slice().to_vec()
    }

    /// Probabilities `ŷ ∈ (0, 1)` in inference mode.
    pub fn forward(&self, x: &Inputs) -> Result<Vec<f64>, ClassifierError> {
        self.check_inputs(x, &self.chem_embed, &self.species_embed)?;
        Ok(self
            .logits_with(&self.chem_embed, &self.species_embed, x)
            .into_iter()
            .map(sigmoid)
            .collect())
    }

    /// Training-mode logits with caches for back-propagation.
    pub(crate) fn train_forward_with(
        &self,
        chem: &Matrix,
        species: &Matrix,
        x: &Inputs,
        rng: &mut Rng,
    ) -> (Vec<f64>, ForwardCache) {
        let (rate, eps) = (self.config.dropout, self.config.bn_eps);
        let mut run = |mut h: Matrix, layers: &[Hidden]| {
            let mut caches = Vec::with_capacity(layers.len());
            for l in layers {
                let (y, c) = l.train_forward(&h, rate, eps, rng);
                caches.push(c);
                h = y;
            }
            (h, caches)
        };
        let (c, cc) = run(chem.gather_rows(&x.chemical), &self.chemical);
        let (s, sc) = run(species.gather_rows(&x.species), &self.species);
        let (k, kc) = run(Matrix::from_vec(x.len(), 1, x.kappa.clone()), &self.kappa);
        let widths = [c.cols(), s.cols(), k.cols()];
        let (top, tc) = run(Matrix::hconcat(&[&c, &s, &k]), &self.trunk);
        let logits = self.out.forward(&top).as_slice().to_vec();
        (
            logits,
            ForwardCache {
                branches: [cc, sc, kc],
                trunk: tc,
                top,
                widths,
            },
        )
    }

    /// Back-propagates `dlogits` into `g` and, if given, the embedding gradient matrices.
    pub(crate) fn backward_with(
        &self,
        x: &Inputs,
        cache: &ForwardCache,
        dlogits: &[f64],
        g: &mut Mlp,
        gchem: Option<&mut Matrix>,
        gspecies: Option<&mut Matrix>,
    ) {
        let dl = Matrix::from_vec(dlogits.len(), 1, dlogits.to_vec());
        let mut d = self.out.backward(&cache.top, &dl, &mut g.out);
        for (i, l) in self.trunk.iter().enumerate().rev() {
            d = l.backward(&cache.trunk[i], &d, &mut g.trunk[i]);
        }
        let parts = d.hsplit(&cache.widths);
        let branch_back = |layers: &[Hidden], caches: &[HiddenCache], gl: &mut [Hidden], mut d: Matrix| {
            for i in (0..layers.len()).rev() {
                d = layers[i].backward(&caches[i], &d, &mut gl[i]);
            }
            d
        };
        let dc = branch_back(&self.chemical, &cache.branches[0], &mut g.chemical, parts[0].clone());
        let ds = branch_back(&self.species, &cache.branches[1], &mut g.species, parts[1].clone());
        let _ = branch_back(&self.kappa, &cache.branches[2], &mut g.kappa, parts[2].clone());
        if let Some(gc) = gchem {
            for (r, &row) in x.chemical.iter().enumerate() {
                for (a, b) in gc.row_mut(row).iter_mut().zip(dc.row(r)) {
                    *a += b;
                }
            }
        }
        if let Some(gs) = gspecies {
            for (r, &row) in x.species.iter().enumerate() {
                for (a, b) in gs.row_mut(row).iter_mut().zip(ds.row(r)) {
                    *a += b;
                }
            }
        }
    }

    pub(crate) fn update_running(&mut self, cache: &ForwardCache) {
        let m = self.config.bn_momentum;
        let caches = cache.branches.iter().flatten().chain(&cache.trunk);
        for (l, c) in self.hidden_layers_mut().zip(caches) {
            l.update_running(c, m);
        }
    }
}

/// Labels `[ŷ > τ]` and the raw probabilities.
pub fn predict(mlp: &Mlp, x: &Inputs, threshold: f64) -> Result<(Vec<u8>, Vec<f64>), ClassifierError> {
    let p = mlp.forward(x)?;
    Ok((p.iter().map(|&v| u8::from(v > threshold)).collect(), p))
}
