//! Internal discrete Fourier transform kernels.
//!
//! Operates on row-major `[len][channels]` buffers, transforming along the
//! first axis for all channels at once. Powers of two go through an iterative
//! radix-2 path; other lengths (the PDE grids use 17, 20, 25, 40, 51, 80) go
//! through a recursive mixed-radix split with a direct DFT for prime factors.
//! No normalization is applied here; callers own the 1/L convention.

use num_complex::Complex64;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum Sign {
    /// exp(-i 2 pi j k / L) — analysis direction.
    Forward,
    /// exp(+i 2 pi j k / L) — synthesis direction.
    Inverse,
}

impl Sign {
    fn factor(self) -> f64 {
        match self {
            Sign::Forward => -1.0,
            Sign::Inverse => 1.0,
        }
    }
}

/// In-place DFT along axis 0 of a `[len][channels]` row-major buffer.
pub(crate) fn dft_multi(data: &mut [Complex64], len: usize, channels: usize, sign: Sign) {
    assert_eq!(data.len(), len * channels, "dft_multi buffer extent");
    if len <= 1 {
        return;
    }
    if len.is_power_of_two() {
        fft_pow2_multi(data, len, channels, sign);
    } else if channels == 1 && len <= 32 {
        // Tiny single-channel transforms: plain summation beats the
        // recursion's allocation overhead.
        let out = dft_direct(data, len, channels, sign);
        data.copy_from_slice(&out);
    } else {
        let out = fft_rec(data, len, channels, sign);
        data.copy_from_slice(&out);
    }
}

fn twiddles(len: usize, sign: Sign) -> Arc<Vec<Complex64>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Arc<Vec<Complex64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (len, matches!(sign, Sign::Forward));
    let mut guard = cache.lock().expect("twiddle cache poisoned");
    guard
        .entry(key)
        .or_insert_with(|| {
            let step = sign.factor() * 2.0 * PI / len as f64;
            Arc::new(
                (0..len / 2)
                    .map(|k| Complex64::from_polar(1.0, step * k as f64))
                    .collect(),
            )
        })
        .clone()
}

/// Iterative radix-2 Cooley-Tukey over rows of `channels` values.
fn fft_pow2_multi(data: &mut [Complex64], len: usize, channels: usize, sign: Sign) {
    // Bit-reversal permutation of rows.
    let bits = len.trailing_zeros();
    for i in 0..len {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if j > i {
            for ch in 0..channels {
                data.swap(i * channels + ch, j * channels + ch);
            }
        }
    }
    let tw = twiddles(len, sign);
    let mut half = 1;
    while half < len {
        let stride = len / (2 * half); // twiddle index step
        let mut start = 0;
        while start < len {
            for k in 0..half {
                let w = tw[k * stride];
                let (i, j) = ((start + k) * channels, (start + k + half) * channels);
                for ch in 0..channels {
                    let t = data[j + ch] * w;
                    let u = data[i + ch];
                    data[i + ch] = u + t;
                    data[j + ch] = u - t;
                }
            }
            start += 2 * half;
        }
        half *= 2;
    }
}

fn smallest_prime_factor(n: usize) -> usize {
    for p in [2usize, 3, 5, 7, 11, 13] {
        if n % p == 0 {
            return p;
        }
    }
    let mut p = 17;
    while p * p <= n {
        if n % p == 0 {
            return p;
        }
        p += 2;
    }
    n
}

/// Recursive mixed-radix DFT; returns the transformed buffer.
fn fft_rec(data: &[Complex64], len: usize, channels: usize, sign: Sign) -> Vec<Complex64> {
    if len == 1 {
        return data.to_vec();
    }
    let p = smallest_prime_factor(len);
    if p == len {
        return dft_direct(data, len, channels, sign);
    }
    let m = len / p;
    // Transform the p decimated sub-sequences x[j], x[j+p], ...
    let mut subs = Vec::with_capacity(p);
    for j in 0..p {
        let mut sub = Vec::with_capacity(m * channels);
        for k in 0..m {
            let row = (k * p + j) * channels;
            sub.extend_from_slice(&data[row..row + channels]);
        }
        subs.push(fft_rec(&sub, m, channels, sign));
    }
    // Combine: X[k] = sum_j w_len^{j k} * sub_j[k mod m]
    let step = sign.factor() * 2.0 * PI / len as f64;
    let mut out = vec![Complex64::default(); len * channels];
    for k in 0..len {
        let base = Complex64::from_polar(1.0, step * k as f64);
        let mut w = Complex64::new(1.0, 0.0);
        let krow = k * channels;
        let srow = (k % m) * channels;
        for sub in &subs {
            for ch in 0..channels {
                out[krow + ch] += sub[srow + ch] * w;
            }
            w *= base;
        }
    }
    out
}

/// Direct O(L^2) DFT — used for prime lengths inside the recursion.
fn dft_direct(data: &[Complex64], len: usize, channels: usize, sign: Sign) -> Vec<Complex64> {
    let step = sign.factor() * 2.0 * PI / len as f64;
    let mut out = vec![Complex64::default(); len * channels];
    for k in 0..len {
        let krow = k * channels;
        for j in 0..len {
            let w = Complex64::from_polar(1.0, step * ((k * j) % len) as f64);
            let jrow = j * channels;
            for ch in 0..channels {
                out[krow + ch] += data[jrow + ch] * w;
            }
        }
    }
    out
}

/// Signed frequency index for stored DFT bin `k` of an `len`-point transform:
/// 0, 1, ..., ceil(L/2)-1, -floor(L/2), ..., -1.
pub(crate) fn signed_index(k: usize, len: usize) -> i64 {
    debug_assert!(k < len);
    if k < len.div_ceil(2) {
        k as i64
    } else {
        k as i64 - len as i64
    }
}

/// Stored bin holding signed frequency `ell` (inverse of `signed_index`).
pub(crate) fn bin_of_signed(ell: i64, len: usize) -> usize {
    let l = len as i64;
    (((ell % l) + l) % l) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference DFT by plain summation; deliberately independent of the
    /// implementation above.
    fn naive(data: &[Complex64], len: usize, channels: usize, sign: Sign) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); len * channels];
        for k in 0..len {
            for j in 0..len {
                let ang = sign.factor() * 2.0 * PI * (k as f64) * (j as f64) / len as f64;
                let w = Complex64::from_polar(1.0, ang);
                for ch in 0..channels {
                    out[k * channels + ch] += data[j * channels + ch] * w;
                }
            }
        }
        out
    }

    fn random_buf(n: usize, seed: u64) -> Vec<Complex64> {
        // Small deterministic LCG; no need for a real RNG here.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        (0..n)
            .map(|_| {
                let mut next = || {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
                };
                Complex64::new(next(), next())
            })
            .collect()
    }

    #[test]
    fn matches_naive_all_benchmark_lengths() {
        for &len in &[2usize, 4, 8, 16, 17, 20, 25, 32, 40, 51, 64, 80, 128] {
            for &ch in &[1usize, 3] {
                let src = random_buf(len * ch, len as u64 * 31 + ch as u64);
                let mut got = src.clone();
                dft_multi(&mut got, len, ch, Sign::Forward);
                let want = naive(&src, len, ch, Sign::Forward);
                for (g, w) in got.iter().zip(&want) {
                    assert!(
                        (g - w).norm() <= 1e-11 * (len as f64),
                        "len={len} ch={ch}: {g} vs {w}"
                    );
                }
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        for &len in &[8usize, 20, 51, 80] {
            let src = random_buf(len * 2, 7 + len as u64);
            let mut buf = src.clone();
            dft_multi(&mut buf, len, 2, Sign::Forward);
            dft_multi(&mut buf, len, 2, Sign::Inverse);
            for (b, s) in buf.iter().zip(&src) {
                let back = b / len as f64;
                assert!((back - s).norm() < 1e-12, "{back} vs {s}");
            }
        }
    }

    #[test]
    fn signed_index_layout() {
        assert_eq!(
            (0..8).map(|k| signed_index(k, 8)).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, -4, -3, -2, -1]
        );
        assert_eq!(
            (0..5).map(|k| signed_index(k, 5)).collect::<Vec<_>>(),
            vec![0, 1, 2, -2, -1]
        );
        for len in [5usize, 8] {
            for k in 0..len {
                assert_eq!(bin_of_signed(signed_index(k, len), len), k);
            }
        }
    }
}
