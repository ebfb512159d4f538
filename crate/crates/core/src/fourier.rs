//! Two-sided Fourier analysis/synthesis on uniform grids.
//!
//! `analyze` produces the series coefficients alpha_l with the 1/L
//! normalization, so that
//!
//! ```text
//! v(t_k) = sum_l alpha_l exp(i omega_l t_k),   omega_l = 2 pi l / T,
//! ```
//!
//! with signed l running over -floor(L/2) .. ceil(L/2)-1 and t_k = k T / L.
//! The full two-sided spectrum is retained so synthesis is an exact inverse.

use crate::error::{Error, Result};
use crate::fft::{dft_multi, signed_index, Sign};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Two-sided Fourier-series decomposition of a real signal.
#[derive(Clone, Debug)]
pub struct FourierDecomposition {
    /// Coefficients in stored DFT bin order; bin k holds signed frequency
    /// index `signed_index(k, len)`.
    pub coefficients: Vec<Complex64>,
    /// Signal period T in seconds (the grid spans [0, T)).
    pub period: f64,
    /// Grid size L.
    pub len: usize,
}

impl FourierDecomposition {
    /// Angular frequency omega_l (rad/s) of stored bin `k`, with signed l.
    pub fn omega(&self, k: usize) -> f64 {
        2.0 * PI * signed_index(k, self.len) as f64 / self.period
    }

    /// All angular frequencies in stored bin order.
    pub fn omegas(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.omega(k)).collect()
    }

    /// Signed harmonic index of stored bin `k`.
    pub fn signed_index(&self, k: usize) -> i64 {
        signed_index(k, self.len)
    }
}

/// Decompose L uniform samples over period T into two-sided coefficients:
/// alpha_l = (1/L) sum_k v_k exp(-i omega_l t_k).
///
/// Power-of-two grids use the radix-2 path; other grids a mixed-radix/direct
/// evaluation that is identical to plain summation up to round-off.
pub fn analyze(samples: &[f64], period: f64) -> Result<FourierDecomposition> {
    let len = samples.len();
    if len < 2 {
        return Err(Error::contract("analyze", format!("need L >= 2, got {len}")));
    }
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::contract("analyze", format!("invalid period {period}")));
    }
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft_multi(&mut buf, len, 1, Sign::Forward);
    let scale = 1.0 / len as f64;
    for c in buf.iter_mut() {
        *c *= scale;
    }
    Ok(FourierDecomposition {
        coefficients: buf,
        period,
        len,
    })
}

/// Evaluate u(t) = Re sum_l lambda_l exp(i omega_l t) on the given time grid.
///
/// When `t_grid` is exactly the canonical grid k T / L the inverse transform
/// is used; otherwise the sum is evaluated directly (signed frequencies, so
/// band-limited signals extend consistently off the canonical grid).
pub fn synthesize(d: &FourierDecomposition, t_grid: &[f64]) -> Vec<f64> {
    if is_canonical_grid(d, t_grid) {
        let mut buf = d.coefficients.clone();
        dft_multi(&mut buf, d.len, 1, Sign::Inverse);
        return buf.iter().map(|c| c.re).collect();
    }
    t_grid
        .iter()
        .map(|&t| {
            let mut acc = Complex64::default();
            for (k, c) in d.coefficients.iter().enumerate() {
                acc += c * Complex64::from_polar(1.0, d.omega(k) * t);
            }
            acc.re
        })
        .collect()
}

fn is_canonical_grid(d: &FourierDecomposition, t_grid: &[f64]) -> bool {
    if t_grid.len() != d.len {
        return false;
    }
    let dt = d.period / d.len as f64;
    t_grid
        .iter()
        .enumerate()
        .all(|(k, &t)| (t - k as f64 * dt).abs() <= 1e-12 * d.period.max(1.0))
}

/// Backward rule of `analyze`: map a loss gradient with respect to the
/// coefficients to a gradient with respect to the input samples.
///
/// The transform is linear, so the adjoint is the conjugate-transposed
/// transform carrying the same 1/L factor:
/// g_v[k] = Re( (1/L) sum_l g_alpha[l] exp(+i omega_l t_k) ).
pub fn adjoint_gradient(upstream: &[Complex64]) -> Vec<f64> {
    let len = upstream.len();
    if len == 0 {
        return Vec::new();
    }
    let mut buf = upstream.to_vec();
    dft_multi(&mut buf, len, 1, Sign::Inverse);
    let scale = 1.0 / len as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::bin_of_signed;

    fn canonical_grid(len: usize, period: f64) -> Vec<f64> {
        (0..len).map(|k| k as f64 * period / len as f64).collect()
    }

    #[test]
    fn constant_signal_is_dc_only() {
        let d = analyze(&[3.0; 16], 2.0).unwrap();
        assert!((d.coefficients[0] - Complex64::new(3.0, 0.0)).norm() < 1e-14);
        for k in 1..16 {
            assert!(d.coefficients[k].norm() < 1e-14, "bin {k} leaked");
        }
    }

    #[test]
    fn fundamental_sine_coefficients() {
        // v = sin(omega_1 t) -> alpha_1 = -i/2, alpha_{-1} = +i/2.
        let len = 32;
        let period = 4.0;
        let w1 = 2.0 * PI / period;
        let v: Vec<f64> = canonical_grid(len, period)
            .iter()
            .map(|&t| (w1 * t).sin())
            .collect();
        let d = analyze(&v, period).unwrap();
        let plus = d.coefficients[bin_of_signed(1, len)];
        let minus = d.coefficients[bin_of_signed(-1, len)];
        assert!((plus - Complex64::new(0.0, -0.5)).norm() < 1e-13);
        assert!((minus - Complex64::new(0.0, 0.5)).norm() < 1e-13);
        for k in 0..len {
            let l = signed_index(k, len);
            if l.abs() != 1 {
                assert!(d.coefficients[k].norm() < 1e-13);
            }
        }
    }

    #[test]
    fn analysis_matches_naive_summation() {
        // Direct O(L^2) summation oracle on a random 64-sample signal.
        let len = 64usize;
        let period = 1.7;
        let mut state = 99u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let v: Vec<f64> = (0..len).map(|_| next()).collect();
        let d = analyze(&v, period).unwrap();
        let grid = canonical_grid(len, period);
        for k in 0..len {
            let w = d.omega(k);
            let mut want = Complex64::default();
            for (j, &t) in grid.iter().enumerate() {
                want += v[j] * Complex64::from_polar(1.0, -w * t);
            }
            want /= len as f64;
            assert!(
                (d.coefficients[k] - want).norm() <= 1e-12,
                "bin {k}: {} vs {want}",
                d.coefficients[k]
            );
        }
    }

    #[test]
    fn synthesize_inverts_analyze() {
        for len in [8usize, 51] {
            let period = 1.0;
            let v: Vec<f64> = (0..len).map(|k| ((k * k + 1) as f64).sin()).collect();
            let d = analyze(&v, period).unwrap();
            let back = synthesize(&d, &canonical_grid(len, period));
            for (a, b) in back.iter().zip(&v) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_coefficients_give_zero_signal() {
        let d = FourierDecomposition {
            coefficients: vec![Complex64::default(); 8],
            period: 1.0,
            len: 8,
        };
        assert!(synthesize(&d, &canonical_grid(8, 1.0)).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_mode_direct_evaluation() {
        // lambda_2 = 1 on an L=8 grid against plain exponential summation,
        // evaluated off the canonical grid to exercise the direct path.
        let len = 8;
        let period = 2.0;
        let mut coeff = vec![Complex64::default(); len];
        coeff[bin_of_signed(2, len)] = Complex64::new(1.0, 0.0);
        let d = FourierDecomposition {
            coefficients: coeff,
            period,
            len,
        };
        let ts = [0.0, 0.13, 0.5, 1.99];
        let got = synthesize(&d, &ts);
        for (&t, &g) in ts.iter().zip(&got) {
            let want = (2.0 * 2.0 * PI * t / period).cos();
            assert!((g - want).abs() < 1e-12, "t={t}: {g} vs {want}");
        }
    }

    #[test]
    fn adjoint_of_dc_is_mean_gradient() {
        // d Re(alpha_0) / d v_k = 1/L.
        let len = 10;
        let mut up = vec![Complex64::default(); len];
        up[0] = Complex64::new(1.0, 0.0);
        let g = adjoint_gradient(&up);
        for &gk in &g {
            assert!((gk - 0.1).abs() < 1e-14);
        }
    }

    #[test]
    fn adjoint_zero_upstream() {
        let g = adjoint_gradient(&vec![Complex64::default(); 12]);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        // Random real function of the coefficients: f = sum_l a_l Re(alpha_l) + b_l Im(alpha_l).
        let len = 12usize;
        let period = 0.9;
        let mut state = 5u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let v: Vec<f64> = (0..len).map(|_| next()).collect();
        let a: Vec<f64> = (0..len).map(|_| next()).collect();
        let b: Vec<f64> = (0..len).map(|_| next()).collect();
        let f = |v: &[f64]| -> f64 {
            let d = analyze(v, period).unwrap();
            d.coefficients
                .iter()
                .enumerate()
                .map(|(l, c)| a[l] * c.re + b[l] * c.im)
                .sum()
        };
        // Upstream gradient in the steepest-ascent convention.
        let up: Vec<Complex64> = (0..len).map(|l| Complex64::new(a[l], b[l])).collect();
        let grad = adjoint_gradient(&up);
        let h = 1e-6;
        for k in 0..len {
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[k] += h;
            vm[k] -= h;
            let fd = (f(&vp) - f(&vm)) / (2.0 * h);
            let rel = (grad[k] - fd).abs() / fd.abs().max(1e-8);
            assert!(rel <= 1e-6, "k={k}: ad={} fd={fd}", grad[k]);
        }
    }

    #[test]
    fn parseval_and_linearity() {
        let len = 40usize;
        let period = 3.0;
        let mut state = 17u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let x: Vec<f64> = (0..len).map(|_| next()).collect();
        let y: Vec<f64> = (0..len).map(|_| next()).collect();
        let dx = analyze(&x, period).unwrap();
        // Parseval: sum v^2 / L == sum |alpha|^2.
        let lhs: f64 = x.iter().map(|v| v * v).sum::<f64>() / len as f64;
        let rhs: f64 = dx.coefficients.iter().map(|c| c.norm_sqr()).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        // Linearity and conjugate symmetry.
        let (a, b) = (0.7, -1.3);
        let z: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let dz = analyze(&z, period).unwrap();
        let dy = analyze(&y, period).unwrap();
        for k in 0..len {
            let want = a * dx.coefficients[k] + b * dy.coefficients[k];
            assert!((dz.coefficients[k] - want).norm() < 1e-12);
            let conj_bin = bin_of_signed(-signed_index(k, len), len);
            assert!((dz.coefficients[conj_bin] - dz.coefficients[k].conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(analyze(&[1.0], 1.0).is_err());
        assert!(analyze(&[1.0, 2.0], 0.0).is_err());
        assert!(analyze(&[1.0, 2.0], f64::NAN).is_err());
    }
}
