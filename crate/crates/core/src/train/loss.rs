//! Ranking losses over plausibility scores ("higher = more plausible").

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    PointwiseHinge,
    PointwiseLogistic,
    PairwiseHinge,
    PairwiseLogistic,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::PointwiseHinge,
        LossKind::PointwiseLogistic,
        LossKind::PairwiseHinge,
        LossKind::PairwiseLogistic,
    ];

    pub fn uses_margin(self) -> bool {
        matches!(self, LossKind::PointwiseHinge | LossKind::PairwiseHinge)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::PointwiseHinge => "pointwise_hinge",
            LossKind::PointwiseLogistic => "pointwise_logistic",
            LossKind::PairwiseHinge => "pairwise_hinge",
            LossKind::PairwiseLogistic => "pairwise_logistic",
        }
    }

    /// Loss of one positive against a set of negatives, with derivatives w.r.t. every score.
    ///
    /// Pointwise losses label the positive `+1` and each negative `−1`; pairwise losses
    /// sum over all (positive, negative) pairs.
    pub fn evaluate(self, margin: f64, pos: &[f64], neg: &[f64]) -> LossValue {
        let mut d_pos = vec![0.0; pos.len()];
        let mut d_neg = vec![0.0; neg.len()];
        let mut value = 0.0;
        match self {
            LossKind::PointwiseHinge | LossKind::PointwiseLogistic => {
                let hinge = self == LossKind::PointwiseHinge;
                let labelled = pos.iter().zip(d_pos.iter_mut()).map(|(s, d)| (1.0, s, d));
                let labelled = labelled.chain(neg.iter().zip(d_neg.iter_mut()).map(|(s, d)| (-1.0, s, d)));
                for (y, &s, d) in labelled {
                    if hinge {
                        let t = margin - y * s;
                        if t > 0.0 {
                            value += t;
                            *d = -y;
                        }
                    } else {
                        value += softplus(-y * s);
                        *d = -y * sigmoid(-y * s);
                    }
                }
            }
            LossKind::PairwiseHinge => {
                for (sp, dp) in pos.iter().zip(d_pos.iter_mut()) {
                    for (sn, dn) in neg.iter().zip(d_neg.iter_mut()) {
                        let t = margin + sn - sp;
                        if t > 0.0 {
                            value += t;
                            *dp -= 1.0;
                            *dn += 1.0;
                        }
                    }
                }
            }
            LossKind::PairwiseLogistic => {
                for (sp, dp) in pos.iter().zip(d_pos.iter_mut()) {
                    for (sn, dn) in neg.iter().zip(d_neg.iter_mut()) {
                        let x = sn - sp;
                        value += softplus(x);
                        let g = sigmoid(x);
                        *dp -= g;
                        *dn += g;
                    }
                }
            }
        }
        LossValue { value, d_pos, d_neg }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown loss {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub d_pos: Vec<f64>,
    pub d_neg: Vec<f64>,
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn split_labels(scores: &[f64], labels: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let pos = scores.iter().zip(labels).filter(|(_, &y)| y > 0.0).map(|(s, _)| *s).collect();
    let neg = scores.iter().zip(labels).filter(|(_, &y)| y <= 0.0).map(|(s, _)| *s).collect();
    (pos, neg)
}

/// `Σ [γ − y·S]₊` with labels `±1`.
pub fn loss_pointwise_hinge(scores: &[f64], labels: &[f64], margin: f64) -> f64 {
    let (p, n) = split_labels(scores, labels);
    LossKind::PointwiseHinge.evaluate(margin, &p, &n).value
}

/// `Σ ln(1 + exp(−y·S))` with labels `±1`.
pub fn loss_pointwise_logistic(scores: &[f64], labels: &[f64]) -> f64 {
    let (p, n) = split_labels(scores, labels);
    LossKind::PointwiseLogistic.evaluate(0.0, &p, &n).value
}

/// `Σ_{pos, neg} [γ + S(neg) − S(pos)]₊`.
pub fn loss_pairwise_hinge(pos: &[f64], neg: &[f64], margin: f64) -> f64 {
    LossKind::PairwiseHinge.evaluate(margin, pos, neg).value
}

/// `Σ_{pos, neg} ln(1 + exp(S(neg) − S(pos)))`.
pub fn loss_pairwise_logistic(pos: &[f64], neg: &[f64]) -> f64 {
    LossKind::PairwiseLogistic.evaluate(0.0, pos, neg).value
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    #[test]
    fn pointwise_examples() {
        assert_eq!(loss_pointwise_hinge(&[2.0], &[1.0], 1.0), 0.0);
        assert_eq!(loss_pointwise_hinge(&[0.5], &[-1.0], 1.0), 1.5);
        assert_eq!(loss_pointwise_hinge(&[], &[], 1.0), 0.0);
        assert!((loss_pointwise_logistic(&[0.0], &[1.0]) - LN_2).abs() < 1e-15);
        assert!((loss_pointwise_logistic(&[0.0], &[-1.0]) - LN_2).abs() < 1e-15);
        assert!(loss_pointwise_logistic(&[800.0], &[1.0]) < 1e-300);
    }

    #[test]
    fn pairwise_examples() {
        assert_eq!(loss_pairwise_hinge(&[5.0], &[1.0], 1.0), 0.0);
        assert_eq!(loss_pairwise_hinge(&[1.0], &[1.0], 1.0), 1.0);
        // four unsatisfied pairs, each contributing γ + 0
        assert_eq!(loss_pairwise_hinge(&[1.0, 1.0], &[1.0, 1.0], 1.0), 4.0);
        assert!((loss_pairwise_logistic(&[3.0, 3.0], &[3.0]) - 2.0 * LN_2).abs() < 1e-15);
        assert!(loss_pairwise_logistic(&[100.0], &[0.0]) < 1e-40);
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(softplus(-1000.0), 0.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }

    fn kink_free(kind: LossKind, margin: f64, pos: &[f64], neg: &[f64]) -> bool {
        let tol = 1e-3;
        match kind {
            LossKind::PointwiseHinge => pos
                .iter()
                .map(|s| margin - s)
                .chain(neg.iter().map(|s| margin + s))
                .all(|t| t.abs() > tol),
            LossKind::PairwiseHinge => pos.iter().all(|p| neg.iter().all(|n| (margin + n - p).abs() > tol)),
            _ => true,
        }
    }

    proptest! {
        #[test]
        fn gradients_match_differences(
            kind in prop::sample::select(LossKind::ALL.to_vec()),
            margin in 0.0f64..5.0,
            pos in prop::collection::vec(-5.0f64..5.0, 1..4),
            neg in prop::collection::vec(-5.0f64..5.0, 1..5),
        ) {
            prop_assume!(kink_free(kind, margin, &pos, &neg));
            let v = kind.evaluate(margin, &pos, &neg);
            prop_assert!(v.value >= 0.0);
            let h = 1e-6;
            for i in 0..pos.len() {
                let mut a = pos.clone();
                let mut b = pos.clone();
                a[i] += h;
                b[i] -= h;
                let fd = (kind.evaluate(margin, &a, &neg).value - kind.evaluate(margin, &b, &neg).value) / (2.0 * h);
                prop_assert!((fd - v.d_pos[i]).abs() <= 1e-6 * (1.0 + fd.abs()));
                prop_assert!(v.d_pos[i] <= 0.0);
            }
            for i in 0..neg.len() {
                let mut a = neg.clone();
                let mut b = neg.clone();
                a[i] += h;
                b[i] -= h;
                let fd = (kind.evaluate(margin, &pos, &a).value - kind.evaluate(margin, &pos, &b).value) / (2.0 * h);
                prop_assert!((fd - v.d_neg[i]).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
        }

        #[test]
        fn logistic_decreases_in_positive_score(s in -20.0f64..20.0, n in -20.0f64..20.0) {
            let a = loss_pairwise_logistic(&[s], &[n]);
            let b = loss_pairwise_logistic(&[s + 0.5], &[n]);
            prop_assert!(b < a || a == 0.0);
            prop_assert!(a > 0.0 || s - n > 30.0);
        }
    }
}
