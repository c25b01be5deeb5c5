//! Scoring functions and their exact gradients on raw parameter slices.
//!
//! The slice-level API lets callers score vectors that do not live in an
//! [`EmbeddingTable`](super::EmbeddingTable), e.g. classifier weights during fine-tuning.

use super::conv::ConvParams;
use super::holo::{circular_convolution, circular_correlation};
use super::{KgeConfig, ModelKind};

/// Raw score and its partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradients {
    pub score: f64,
    pub subject: Vec<f64>,
    pub relation: Vec<f64>,
    pub object: Vec<f64>,
    pub conv: Option<Vec<f64>>,
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `‖d‖_n` for `n ∈ {1, 2}`.
pub fn norm(d: &[f64], n: u8) -> f64 {
    match n {
        1 => d.iter().map(|x| x.abs()).sum(),
        _ => d.iter().map(|x| x * x).sum::<f64>().sqrt(),
    }
}

/// Writes `∂‖d‖_n / ∂d` into `g`, using 0 where the norm is not differentiable.
fn norm_grad(d: &[f64], n: u8, g: &mut [f64]) -> f64 {
    let v = norm(d, n);
    match n {
        1 => {
            for (gi, &x) in g.iter_mut().zip(d) {
                *gi = sgn(x);
            }
        }
        _ => {
            for (gi, &x) in g.iter_mut().zip(d) {
                *gi = if v > 0.0 { x / v } else { 0.0 };
            }
        }
    }
    v
}

pub fn distmult(s: &[f64], p: &[f64], o: &[f64]) -> f64 {
    s.iter().zip(p).zip(o).map(|((a, b), c)| b * (a * c)).sum()
}

/// `Re(⟨s, p, conj(o)⟩)` over interleaved complex vectors.
pub fn complex(s: &[f64], p: &[f64], o: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..s.len() / 2 {
        let (a, b) = (s[2 * i], s[2 * i + 1]);
        let (c, d) = (p[2 * i], p[2 * i + 1]);
        let (e, f) = (o[2 * i], o[2 * i + 1]);
        acc += a * c * e + b * c * f + a * d * f - b * d * e;
    }
    acc
}

/// `p · (s ⋆ o)` with circular correlation.
pub fn hole(s: &[f64], p: &[f64], o: &[f64]) -> f64 {
    crate::matrix::dot(p, &circular_correlation(s, o))
}

pub fn transe(s: &[f64], p: &[f64], o: &[f64], n: u8) -> f64 {
    let d: Vec<f64> = (0..s.len()).map(|i| s[i] + p[i] - o[i]).collect();
    norm(&d, n)
}

/// Residual of rotating `s` by the phases `θ` and subtracting `o`, as `[re; im]`.
fn rotate_residual(s: &[f64], theta: &[f64], o: &[f64]) -> Vec<f64> {
    let k = theta.len();
    let mut d = vec![0.0; 2 * k];
    for i in 0..k {
        let (a, b) = (s[2 * i], s[2 * i + 1]);
        let (cs, sn) = (theta[i].cos(), theta[i].sin());
        d[i] = a * cs - b * sn - o[2 * i];
        d[k + i] = a * sn + b * cs - o[2 * i + 1];
    }
    d
}

/// `‖s ∘ e^{iθ} − o‖_n` with complex entities and phase-only relations.
pub fn rotate(s: &[f64], theta: &[f64], o: &[f64], n: u8) -> f64 {
    norm(&rotate_residual(s, theta, o), n)
}

fn half_phase(s: &[f64], p: &[f64], o: &[f64]) -> Vec<f64> {
    (0..s.len()).map(|i| (s[i] + p[i] - o[i]) / 2.0).collect()
}

/// `2·C·‖sin((θ_s + θ_p − θ_o)/2)‖_n` over phase vectors with modulus constraint `C`.
pub fn protate(s: &[f64], p: &[f64], o: &[f64], n: u8, modulus: f64) -> f64 {
    let v: Vec<f64> = half_phase(s, p, o).iter().map(|x| x.sin()).collect();
    2.0 * modulus * norm(&v, n)
}

/// `‖|s_m| ∘ |p_m| − |o_m|‖_n + ‖sin((θ_s + θ_p − θ_o)/2)‖_1` over `[moduli; phases]`.
pub fn hake(s: &[f64], p: &[f64], o: &[f64], n: u8) -> f64 {
    let k = s.len() / 2;
    let m: Vec<f64> = (0..k).map(|i| s[i].abs() * p[i].abs() - o[i].abs()).collect();
    let phase: f64 = half_phase(&s[k..], &p[k..], &o[k..]).iter().map(|x| x.sin().abs()).sum();
    norm(&m, n) + phase
}

pub fn convkb(conv: &ConvParams, s: &[f64], p: &[f64], o: &[f64]) -> f64 {
    let img = conv.shape.image(s, p, o);
    conv.forward(&img).z[0]
}

pub fn conve(conv: &ConvParams, s: &[f64], p: &[f64], o: &[f64]) -> f64 {
    let img = conv.shape.image(s, p, o);
    crate::matrix::dot(&conv.forward(&img).z, o)
}

fn conv_of<'a>(cfg: &KgeConfig, conv: Option<&'a ConvParams>) -> &'a ConvParams {
    conv.unwrap_or_else(|| panic!("{} scored without convolution parameters", cfg.model))
}

/// Raw score of `(s, p, o)` under `cfg`.
///
/// # Panics
/// If a convolutional model is scored without parameters; table-level entry points
/// check this up front.
pub fn score_vectors(cfg: &KgeConfig, conv: Option<&ConvParams>, s: &[f64], p: &[f64], o: &[f64]) -> f64 {
    let n = cfg.norm_order;
    match cfg.model {
        ModelKind::DistMult => distmult(s, p, o),
        ModelKind::ComplEx => complex(s, p, o),
        ModelKind::HolE => hole(s, p, o),
        ModelKind::TransE => transe(s, p, o, n),
        ModelKind::RotatE => rotate(s, p, o, n),
        ModelKind::PRotatE => protate(s, p, o, n, cfg.modulus),
        ModelKind::Hake => hake(s, p, o, n),
        ModelKind::ConvKB => convkb(conv_of(cfg, conv), s, p, o),
        ModelKind::ConvE => conve(conv_of(cfg, conv), s, p, o),
    }
}

/// Adds `scale · ∂score` into the gradient buffers and returns the raw score.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_gradients(
    cfg: &KgeConfig,
    conv: Option<&ConvParams>,
    s: &[f64],
    p: &[f64],
    o: &[f64],
    scale: f64,
    gs: &mut [f64],
    gp: &mut [f64],
    go: &mut [f64],
    gconv: Option<&mut [f64]>,
) -> f64 {
    let n = cfg.norm_order;
    match cfg.model {
        ModelKind::DistMult => {
            for i in 0..s.len() {
                gs[i] += scale * p[i] * o[i];
                gp[i] += scale * s[i] * o[i];
                go[i] += scale * s[i] * p[i];
            }
            distmult(s, p, o)
        }
        ModelKind::ComplEx => {
            let mut acc = 0.0;
            for i in 0..s.len() / 2 {
                let (ra, rb) = (2 * i, 2 * i + 1);
                let (a, b, c, d, e, f) = (s[ra], s[rb], p[ra], p[rb], o[ra], o[rb]);
                acc += a * c * e + b * c * f + a * d * f - b * d * e;
                gs[ra] += scale * (c * e + d * f);
                gs[rb] += scale * (c * f - d * e);
                gp[ra] += scale * (a * e + b * f);
                gp[rb] += scale * (a * f - b * e);
                go[ra] += scale * (a * c - b * d);
                go[rb] += scale * (b * c + a * d);
            }
            acc
        }
        ModelKind::HolE => {
            let corr = circular_correlation(s, o);
            let d_s = circular_correlation(p, o);
            let d_o = circular_convolution(s, p);
            for i in 0..s.len() {
                gs[i] += scale * d_s[i];
                gp[i] += scale * corr[i];
                go[i] += scale * d_o[i];
            }
            crate::matrix::dot(p, &corr)
        }
        ModelKind::TransE => {
            let d: Vec<f64> = (0..s.len()).map(|i| s[i] + p[i] - o[i]).collect();
            let mut g = vec![0.0; d.len()];
            let v = norm_grad(&d, n, &mut g);
            for i in 0..d.len() {
                gs[i] += scale * g[i];
                gp[i] += scale * g[i];
                go[i] -= scale * g[i];
            }
            v
        }
        ModelKind::RotatE => {
            let k = p.len();
            let d = rotate_residual(s, p, o);
            let mut g = vec![0.0; 2 * k];
            let v = norm_grad(&d, n, &mut g);
            for i in 0..k {
                let (a, b) = (s[2 * i], s[2 * i + 1]);
                let (cs, sn) = (p[i].cos(), p[i].sin());
                let (gr, gq) = (g[i], g[k + i]);
                gs[2 * i] += scale * (gr * cs + gq * sn);
                gs[2 * i + 1] += scale * (-gr * sn + gq * cs);
                gp[i] += scale * (gr * (-a * sn - b * cs) + gq * (a * cs - b * sn));
                go[2 * i] -= scale * gr;
                go[2 * i + 1] -= scale * gq;
            }
            v
        }
        ModelKind::PRotatE => {
            let x = half_phase(s, p, o);
            let sv: Vec<f64> = x.iter().map(|t| t.sin()).collect();
            let mut g = vec![0.0; x.len()];
            let v = 2.0 * cfg.modulus * norm_grad(&sv, n, &mut g);
            for i in 0..x.len() {
                // d/dθ of 2C·N(sin(x)) with x = (θs + θp − θo)/2
                let dx = 2.0 * cfg.modulus * g[i] * x[i].cos() / 2.0;
                gs[i] += scale * dx;
                gp[i] += scale * dx;
                go[i] -= scale * dx;
            }
            v
        }
        ModelKind::Hake => {
            let k = s.len() / 2;
            let m: Vec<f64> = (0..k).map(|i| s[i].abs() * p[i].abs() - o[i].abs()).collect();
            let mut g = vec![0.0; k];
            let modulus = norm_grad(&m, n, &mut g);
            for i in 0..k {
                gs[i] += scale * g[i] * p[i].abs() * sgn(s[i]);
                gp[i] += scale * g[i] * s[i].abs() * sgn(p[i]);
                go[i] -= scale * g[i] * sgn(o[i]);
            }
            let x = half_phase(&s[k..], &p[k..], &o[k..]);
            let mut phase = 0.0;
            for (i, xi) in x.iter().enumerate() {
                let sn = xi.sin();
                phase += sn.abs();
                let dx = sgn(sn) * xi.cos() / 2.0;
                gs[k + i] += scale * dx;
                gp[k + i] += scale * dx;
                go[k + i] -= scale * dx;
            }
            modulus + phase
        }
        ModelKind::ConvKB | ModelKind::ConvE => {
            let conv = conv_of(cfg, conv);
            let img = conv.shape.image(s, p, o);
            let trace = conv.forward(&img);
            let (score, dz) = if cfg.model == ModelKind::ConvKB {
                (trace.z[0], vec![1.0])
            } else {
                for (g, z) in go.iter_mut().zip(&trace.z) {
                    *g += scale * z;
                }
                (crate::matrix::dot(&trace.z, o), o.to_vec())
            };
            let dimg = conv.backward(&img, &trace, &dz, gconv, scale);
            let scaled: Vec<f64> = dimg.iter().map(|d| d * scale).collect();
            conv.shape.scatter_image(&scaled, gs, gp, go);
            score
        }
    }
}

/// Score and gradients as freshly allocated vectors.
pub fn score_gradients_vectors(
    cfg: &KgeConfig,
    conv: Option<&ConvParams>,
    s: &[f64],
    p: &[f64],
    o: &[f64],
) -> ScoreGradients {
    let mut gs = vec![0.0; s.len()];
    let mut gp = vec![0.0; p.len()];
    let mut go = vec![0.0; o.len()];
    let mut gc = conv.map(|c| vec![0.0; c.values.len()]);
    let score = accumulate_gradients(cfg, conv, s, p, o, 1.0, &mut gs, &mut gp, &mut go, gc.as_deref_mut());
    ScoreGradients {
        score,
        subject: gs,
        relation: gp,
        object: go,
        conv: gc,
    }
}

/// Distance, in argument space, from the nearest point where the score is not
/// differentiable (`|x| = 0`, `‖x‖ = 0` or a ReLU hinge). Infinite for smooth models.
pub fn kink_distance(cfg: &KgeConfig, conv: Option<&ConvParams>, s: &[f64], p: &[f64], o: &[f64]) -> f64 {
    let n = cfg.norm_order;
    let vec_kink = |d: &[f64]| -> f64 {
        if n == 1 {
            d.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min)
        } else {
            norm(d, 2)
        }
    };
    match cfg.model {
        ModelKind::DistMult | ModelKind::ComplEx | ModelKind::HolE => f64::INFINITY,
        ModelKind::TransE => {
            let d: Vec<f64> = (0..s.len()).map(|i| s[i] + p[i] - o[i]).collect();
            vec_kink(&d)
        }
        ModelKind::RotatE => vec_kink(&rotate_residual(s, p, o)),
        ModelKind::PRotatE => {
            let v: Vec<f64> = half_phase(s, p, o).iter().map(|x| x.sin()).collect();
            vec_kink(&v)
        }
        ModelKind::Hake => {
            let k = s.len() / 2;
            let m: Vec<f64> = (0..k).map(|i| s[i].abs() * p[i].abs() - o[i].abs()).collect();
            let abs_min = s[..k]
                .iter()
                .chain(&p[..k])
                .chain(&o[..k])
                .map(|x| x.abs())
                .fold(f64::INFINITY, f64::min);
            let sin_min = half_phase(&s[k..], &p[k..], &o[k..])
                .iter()
                .map(|x| x.sin().abs())
                .fold(f64::INFINITY, f64::min);
            vec_kink(&m).min(abs_min).min(sin_min)
        }
        ModelKind::ConvKB | ModelKind::ConvE => {
            let conv = conv_of(cfg, conv);
            let trace = conv.forward(&conv.shape.image(s, p, o));
            trace.pre.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min)
        }
    }
}
