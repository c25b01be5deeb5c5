//! Shared convolution machinery for ConvKB and ConvE.
//!
//! Both models build a small image from the triple, apply `F` valid 2-D filters with a
//! per-filter bias and ReLU, flatten filter-major and project through a dense layer:
//!
//! - ConvKB: image is the `k × 3` matrix `[s p o]`, kernel `1 × 3`, dense output is the score.
//! - ConvE: `s` and `p` are reshaped to `rows × cols` and stacked vertically, the dense
//!   output `z ∈ ℝ^k` is scored against the object as `z · o`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::KgeError;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConvKind {
    ConvKB,
    ConvE,
}

impl ConvKind {
    pub fn name(self) -> &'static str {
        match self {
            ConvKind::ConvKB => "ConvKB",
            ConvKind::ConvE => "ConvE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvShape {
    pub kind: ConvKind,
    pub dim: usize,
    pub filters: usize,
    pub kernel_rows: usize,
    pub kernel_cols: usize,
    pub image_rows: usize,
    pub image_cols: usize,
}

/// Largest divisor of `k` not exceeding `√k`, paired with its cofactor.
pub(crate) fn near_square(k: usize) -> (usize, usize) {
    let mut rows = 1;
    let mut r = 1;
    while r * r <= k {
        if k % r == 0 {
            rows = r;
        }
        r += 1;
    }
    (rows, k / rows)
}

impl ConvShape {
    pub fn conv_kb(dim: usize, filters: usize) -> Result<Self, KgeError> {
        Self::new(ConvKind::ConvKB, dim, filters, 1, 3, dim, 3)
    }

    pub fn conv_e(
        dim: usize,
        filters: usize,
        reshape: Option<(usize, usize)>,
        kernel: Option<(usize, usize)>,
    ) -> Result<Self, KgeError> {
        let (rows, cols) = match reshape {
            Some((r, c)) if r * c == dim && r > 0 => (r, c),
            Some((r, c)) => {
                return Err(KgeError::Config(format!("reshape {r}×{c} does not factor dimension {dim}")))
            }
            None => near_square(dim),
        };
        let (kh, kw) = kernel.unwrap_or(((2 * rows).min(3), cols.min(3)));
        Self::new(ConvKind::ConvE, dim, filters, kh, kw, 2 * rows, cols)
    }

    pub fn new(
        kind: ConvKind,
        dim: usize,
        filters: usize,
        kernel_rows: usize,
        kernel_cols: usize,
        image_rows: usize,
        image_cols: usize,
    ) -> Result<Self, KgeError> {
        if filters == 0 || dim == 0 {
            return Err(KgeError::Config("convolution needs at least one filter and dimension ≥ 1".into()));
        }
        if kernel_rows == 0 || kernel_cols == 0 || kernel_rows > image_rows || kernel_cols > image_cols {
            return Err(KgeError::Config(format!(
                "kernel {kernel_rows}×{kernel_cols} does not fit image {image_rows}×{image_cols}"
            )));
        }
        let shape = Self {
            kind,
            dim,
            filters,
            kernel_rows,
            kernel_cols,
            image_rows,
            image_cols,
        };
        let expected = match kind {
            ConvKind::ConvKB => (dim, 3),
            ConvKind::ConvE => (image_rows, dim / (image_rows / 2).max(1)),
        };
        if (image_rows, image_cols) != expected
            || (kind == ConvKind::ConvE && (image_rows % 2 != 0 || (image_rows / 2) * image_cols != dim))
        {
            return Err(KgeError::Config(format!(
                "{} image {image_rows}×{image_cols} inconsistent with dimension {dim}",
                kind.name()
            )));
        }
        Ok(shape)
    }

    pub fn out_rows(&self) -> usize {
        self.image_rows - self.kernel_rows + 1
    }

    pub fn out_cols(&self) -> usize {
        self.image_cols - self.kernel_cols + 1
    }

    /// Length of the flattened feature-map vector.
    pub fn hidden(&self) -> usize {
        self.filters * self.out_rows() * self.out_cols()
    }

    /// Dense layer output width: 1 for ConvKB, `k` for ConvE.
    pub fn output(&self) -> usize {
        match self.kind {
            ConvKind::ConvKB => 1,
            ConvKind::ConvE => self.dim,
        }
    }

    fn kernel_len(&self) -> usize {
        self.filters * self.kernel_rows * self.kernel_cols
    }

    fn filter_bias_at(&self) -> usize {
        self.kernel_len()
    }

    fn dense_at(&self) -> usize {
        self.filter_bias_at() + self.filters
    }

    fn dense_bias_at(&self) -> usize {
        self.dense_at() + self.hidden() * self.output()
    }

    pub fn param_len(&self) -> usize {
        self.dense_bias_at() + self.output()
    }

    pub(crate) fn image(&self, s: &[f64], p: &[f64], o: &[f64]) -> Vec<f64> {
        match self.kind {
            ConvKind::ConvKB => (0..self.dim).flat_map(|i| [s[i], p[i], o[i]]).collect(),
            ConvKind::ConvE => s.iter().chain(p).copied().collect(),
        }
    }

    /// Routes image gradients back to the subject, relation and object vectors.
    pub(crate) fn scatter_image(&self, dimg: &[f64], gs: &mut [f64], gp: &mut [f64], go: &mut [f64]) {
        match self.kind {
            ConvKind::ConvKB => {
                for i in 0..self.dim {
                    gs[i] += dimg[3 * i];
                    gp[i] += dimg[3 * i + 1];
                    go[i] += dimg[3 * i + 2];
                }
            }
            ConvKind::ConvE => {
                let (a, b) = dimg.split_at(self.dim);
                for (g, d) in gs.iter_mut().zip(a) {
                    *g += d;
                }
                for (g, d) in gp.iter_mut().zip(b) {
                    *g += d;
                }
            }
        }
    }
}

/// Trainable convolution and dense parameters, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub shape: ConvShape,
    pub values: Vec<f64>,
}

pub(crate) struct ConvTrace {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub z: Vec<f64>,
}

impl ConvParams {
    pub fn zeros(shape: ConvShape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.param_len()],
        }
    }

    /// Glorot-uniform kernels and dense weights, zero biases.
    pub fn init(shape: ConvShape, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(shape);
        let area = (shape.kernel_rows * shape.kernel_cols) as f64;
        let a = (6.0 / (area + shape.filters as f64 * area)).sqrt();
        for v in &mut p.values[..shape.kernel_len()] {
            *v = rng.gen_range(-a..=a);
        }
        let b = (6.0 / (shape.hidden() + shape.output()) as f64).sqrt();
        let (lo, hi) = (shape.dense_at(), shape.dense_bias_at());
        for v in &mut p.values[lo..hi] {
            *v = rng.gen_range(-b..=b);
        }
        p
    }

    pub(crate) fn forward(&self, img: &[f64]) -> ConvTrace {
        let sh = &self.shape;
        let (oh, ow, kh, kw, w) = (sh.out_rows(), sh.out_cols(), sh.kernel_rows, sh.kernel_cols, sh.image_cols);
        let vals = &self.values;
        let mut pre = vec![0.0; sh.hidden()];
        for f in 0..sh.filters {
            let kern = &vals[f * kh * kw..(f + 1) * kh * kw];
            let fb = vals[sh.filter_bias_at() + f];
            for r in 0..oh {
                for c in 0..ow {
                    let mut acc = fb;
                    for u in 0..kh {
                        for v in 0..kw {
                            acc += kern[u * kw + v] * img[(r + u) * w + c + v];
                        }
                    }
                    pre[(f * oh + r) * ow + c] = acc;
                }
            }
        }
        let hidden: Vec<f64> = pre.iter().map(|&x| x.max(0.0)).collect();
        let out = sh.output();
        let dense = &vals[sh.dense_at()..sh.dense_bias_at()];
        let mut z = vals[sh.dense_bias_at()..].to_vec();
        for (h, &x) in hidden.iter().enumerate() {
            if x != 0.0 {
                for (zo, wo) in z.iter_mut().zip(&dense[h * out..(h + 1) * out]) {
                    *zo += x * wo;
                }
            }
        }
        ConvTrace { pre, hidden, z }
    }

    /// Back-propagates `dz`; parameter gradients are added (times `scale`) to `gparams`
    /// and the image gradient is returned unscaled.
    pub(crate) fn backward(
        &self,
        img: &[f64],
        trace: &ConvTrace,
        dz: &[f64],
        gparams: Option<&mut [f64]>,
        scale: f64,
    ) -> Vec<f64> {
        let sh = &self.shape;
        let (oh, ow, kh, kw, w) = (sh.out_rows(), sh.out_cols(), sh.kernel_rows, sh.kernel_cols, sh.image_cols);
        let out = sh.output();
        let vals = &self.values;
        let dense = &vals[sh.dense_at()..sh.dense_bias_at()];
        let dpre: Vec<f64> = (0..sh.hidden())
            .map(|h| {
                if trace.pre[h] > 0.0 {
                    dense[h * out..(h + 1) * out].iter().zip(dz).map(|(a, b)| a * b).sum()
                } else {
                    0.0
                }
            })
            .collect();
        let mut dimg = vec![0.0; img.len()];
        for f in 0..sh.filters {
            let kern = &vals[f * kh * kw..(f + 1) * kh * kw];
            for r in 0..oh {
                for c in 0..ow {
                    let d = dpre[(f * oh + r) * ow + c];
                    if d == 0.0 {
                        continue;
                    }
                    for u in 0..kh {
                        for v in 0..kw {
                            dimg[(r + u) * w + c + v] += kern[u * kw + v] * d;
                        }
                    }
                }
            }
        }
        if let Some(g) = gparams {
            for f in 0..sh.filters {
                for r in 0..oh {
                    for c in 0..ow {
                        let d = scale * dpre[(f * oh + r) * ow + c];
                        if d == 0.0 {
                            continue;
                        }
                        g[sh.filter_bias_at() + f] += d;
                        for u in 0..kh {
                            for v in 0..kw {
                                g[f * kh * kw + u * kw + v] += d * img[(r + u) * w + c + v];
                            }
                        }
                    }
                }
            }
            let at = sh.dense_at();
            for (h, &x) in trace.hidden.iter().enumerate() {
                if x != 0.0 {
                    for (o, &d) in dz.iter().enumerate() {
                        g[at + h * out + o] += scale * x * d;
                    }
                }
            }
            for (o, &d) in dz.iter().enumerate() {
                g[sh.dense_bias_at() + o] += scale * d;
            }
        }
        dimg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_square_reshape() {
        assert_eq!(near_square(4), (2, 2));
        assert_eq!(near_square(6), (2, 3));
        assert_eq!(near_square(7), (1, 7));
        assert_eq!(near_square(200), (10, 20));
    }

    #[test]
    fn conv_e_shapes() {
        let s = ConvShape::conv_e(4, 8, None, Some((2, 2))).unwrap();
        assert_eq!((s.image_rows, s.image_cols), (4, 2));
        assert_eq!((s.out_rows(), s.out_cols()), (3, 1));
        assert_eq!(s.hidden(), 24);
        assert_eq!(s.param_len(), 8 * 4 + 8 + 24 * 4 + 4);
        assert!(ConvShape::conv_e(6, 8, Some((4, 2)), None).is_err());
        assert!(ConvShape::conv_e(4, 8, None, Some((5, 1))).is_err());
    }

    #[test]
    fn conv_kb_shapes() {
        let s = ConvShape::conv_kb(5, 8).unwrap();
        assert_eq!(s.hidden(), 40);
        assert_eq!(s.param_len(), 24 + 8 + 40 + 1);
    }
}
