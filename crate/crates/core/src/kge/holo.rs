//! Circular correlation and convolution through the FFT.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward(x: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(x.len()).process(&mut buf));
    buf
}

fn inverse_real(mut buf: Vec<Complex<f64>>) -> Vec<f64> {
    let n = buf.len();
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n).process(&mut buf));
    buf.into_iter().map(|c| c.re / n as f64).collect()
}

/// `(a ⋆ b)_j = Σ_i a_i · b_{(i + j) mod k}`.
pub fn circular_correlation(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return Vec::new();
    }
    let fa = forward(a);
    let fb = forward(b);
    inverse_real(fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect())
}

/// `(a ∗ b)_m = Σ_j a_j · b_{(m - j) mod k}`.
pub fn circular_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return Vec::new();
    }
    let fa = forward(a);
    let fb = forward(b);
    inverse_real(fa.iter().zip(&fb).map(|(x, y)| x * y).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_corr(a: &[f64], b: &[f64]) -> Vec<f64> {
        let k = a.len();
        (0..k).map(|j| (0..k).map(|i| a[i] * b[(i + j) % k]).sum()).collect()
    }

    fn naive_conv(a: &[f64], b: &[f64]) -> Vec<f64> {
        let k = a.len();
        (0..k).map(|m| (0..k).map(|j| a[j] * b[(m + k - j) % k]).sum()).collect()
    }

    #[test]
    fn small_correlation() {
        let c = circular_correlation(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]);
        // j=0: 4+10+18, j=1: 5+12+12, j=2: 6+8+15
        for (x, y) in c.iter().zip([32.0, 29.0, 29.0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn matches_direct_sums(v in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..24)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            for (x, y) in circular_correlation(&a, &b).iter().zip(naive_corr(&a, &b)) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            for (x, y) in circular_convolution(&a, &b).iter().zip(naive_conv(&a, &b)) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
