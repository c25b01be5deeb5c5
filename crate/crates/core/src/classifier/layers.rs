use rand::Rng as _;

use crate::matrix::Matrix;
use crate::rng::Rng;

/// Affine layer `x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `in × out`.
    pub w: Matrix,
    /// `1 × out`.
    pub b: Matrix,
}

impl Dense {
    pub fn zeros(inp: usize, out: usize) -> Self {
        Self {
            w: Matrix::zeros(inp, out),
            b: Matrix::zeros(1, out),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init(inp: usize, out: usize, rng: &mut Rng) -> Self {
        let a = (6.0 / (inp + out) as f64).sqrt();
        let mut d = Self::zeros(inp, out);
        for v in d.w.as_mut_slice() {
            *v = rng.gen_range(-a..=a);
        }
        d
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut z = x.matmul(&self.w);
        z.add_row_broadcast(self.b.as_slice());
        z
    }

    /// Accumulates parameter gradients into `g` and returns `∂/∂x`.
    pub fn backward(&self, x: &Matrix, dz: &Matrix, g: &mut Dense) -> Matrix {
        g.w.axpy(1.0, &x.t_matmul(dz));
        g.b.axpy(1.0, &dz.column_sums());
        dz.matmul_t(&self.w)
    }
}

/// `Dense → ReLU → Dropout → BatchNorm`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hidden {
    pub dense: Dense,
    pub gamma: Matrix,
    pub beta: Matrix,
    pub running_mean: Matrix,
    pub running_var: Matrix,
}

pub(crate) struct HiddenCache {
    x: Matrix,
    z: Matrix,
    keep: Option<Vec<f64>>,
    xhat: Matrix,
    pub(crate) mean: Vec<f64>,
    pub(crate) var: Vec<f64>,
    invstd: Vec<f64>,
}

impl Hidden {
    pub fn zeros(inp: usize, out: usize) -> Self {
        Self {
            dense: Dense::zeros(inp, out),
            gamma: Matrix::zeros(1, out),
            beta: Matrix::zeros(1, out),
            running_mean: Matrix::zeros(1, out),
            running_var: Matrix::zeros(1, out),
        }
    }

    pub fn init(inp: usize, out: usize, rng: &mut Rng) -> Self {
        Self {
            dense: Dense::init(inp, out, rng),
            gamma: Matrix::from_vec(1, out, vec![1.0; out]),
            beta: Matrix::zeros(1, out),
            running_mean: Matrix::zeros(1, out),
            running_var: Matrix::from_vec(1, out, vec![1.0; out]),
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.cols()
    }

    /// Inference pass: no dropout, normalisation with running statistics.
    pub fn infer(&self, x: &Matrix, eps: f64) -> Matrix {
        let mut y = self.dense.forward(x);
        let (g, b, m, v) = (
            self.gamma.as_slice(),
            self.beta.as_slice(),
            self.running_mean.as_slice(),
            self.running_var.as_slice(),
        );
        for r in 0..y.rows() {
            for (j, val) in y.row_mut(r).iter_mut().enumerate() {
                *val = g[j] * (val.max(0.0) - m[j]) / (v[j] + eps).sqrt() + b[j];
            }
        }
        y
    }

    /// Training pass with batch statistics; dropout masks come from `rng` when `rate > 0`.
    pub(crate) fn train_forward(&self, x: &Matrix, rate: f64, eps: f64, rng: &mut Rng) -> (Matrix, HiddenCache) {
        let z = self.dense.forward(x);
        let (n, w) = z.shape();
        let mut a = Matrix::from_fn(n, w, |r, c| z.get(r, c).max(0.0));
        let keep = (rate > 0.0).then(|| {
            let scale = 1.0 / (1.0 - rate);
            let mask: Vec<f64> = (0..n * w)
                .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale })
                .collect();
            for (v, m) in a.as_mut_slice().iter_mut().zip(&mask) {
                *v *= m;
            }
            mask
        });
        let mut mean = vec![0.0; w];
        let mut var = vec![0.0; w];
        for r in 0..n {
            for (j, v) in a.row(r).iter().enumerate() {
                mean[j] += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for r in 0..n {
            for (j, v) in a.row(r).iter().enumerate() {
                var[j] += (v - mean[j]).powi(2);
            }
        }
        var.iter_mut().for_each(|v| *v /= n as f64);
        let invstd: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let xhat = Matrix::from_fn(n, w, |r, c| (a.get(r, c) - mean[c]) * invstd[c]);
        let (g, b) = (self.gamma.as_slice(), self.beta.as_slice());
        let y = Matrix::from_fn(n, w, |r, c| g[c] * xhat.get(r, c) + b[c]);
        let cache = HiddenCache {
            x: x.clone(),
            z,
            keep,
            xhat,
            mean,
            var,
            invstd,
        };
        (y, cache)
    }

    pub(crate) fn backward(&self, cache: &HiddenCache, dy: &Matrix, g: &mut Hidden) -> Matrix {
        let (n, w) = dy.shape();
        let gamma = self.gamma.as_slice();
        let mut sum_dxhat = vec![0.0; w];
        let mut sum_dxhat_xhat = vec![0.0; w];
        for r in 0..n {
            for j in 0..w {
                let d = dy.get(r, j);
                let xh = cache.xhat.get(r, j);
                g.gamma.as_mut_slice()[j] += d * xh;
                g.beta.as_mut_slice()[j] += d;
                let dxh = d * gamma[j];
                sum_dxhat[j] += dxh;
                sum_dxhat_xhat[j] += dxh * xh;
            }
        }
        let nf = n as f64;
        let dz = Matrix::from_fn(n, w, |r, j| {
            let dxh = dy.get(r, j) * gamma[j];
            let da = cache.invstd[j] / nf * (nf * dxh - sum_dxhat[j] - cache.xhat.get(r, j) * sum_dxhat_xhat[j]);
            let keep = cache.keep.as_ref().map_or(1.0, |k| k[r * w + j]);
            if cache.z.get(r, j) > 0.0 {
                da * keep
            } else {
                0.0
            }
        });
        self.dense.backward(&cache.x, &dz, &mut g.dense)
    }

    /// Exponential moving average of the batch statistics.
    pub(crate) fn update_running(&mut self, cache: &HiddenCache, momentum: f64) {
        for (r, m) in self.running_mean.as_mut_slice().iter_mut().zip(&cache.mean) {
            *r = momentum * *r + (1.0 - momentum) * m;
        }
        for (r, v) in self.running_var.as_mut_slice().iter_mut().zip(&cache.var) {
            *r = momentum * *r + (1.0 - momentum) * v;
        }
    }
}
