//! Truncated spectral convolution layers (the Fourier-baseline counterpart of
//! the Laplace layer).
//!
//! Weights are complex per-mode channel mixers over the retained low modes.
//! Real output is guaranteed by mirroring: a retained bin with negative lead
//! frequency uses the conjugated weight of its mirror bin, so for real inputs
//! the output spectrum stays conjugate-symmetric. Everything outside the
//! retained window is zeroed.
//!
//! 1D weights have shape [c_in, c_out, M] over non-negative modes 0..M-1 with
//! M <= L/2 + 1 (M = L/2 + 1 retains the full spectrum of a real signal).
//! 2D weights have shape [c_in, c_out, M0, M1]: M0 counts non-negative modes
//! on axis 0 (mirrored to negative ones), M1 is a two-sided signed window on
//! axis 1 stored in the same wrap-around order as DFT bins (M1 = L1 keeps the
//! whole axis).

use crate::error::{Error, Result};
use crate::fft::{bin_of_signed, dft_multi, signed_index, Sign};
use crate::tensor::{Op, Tape, TensorData, TensorId};
use num_complex::Complex64;
use rayon::prelude::*;

/// How a stored spectrum bin maps onto the weight tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ModeTap {
    /// Multiply by w[index...].
    Direct(usize),
    /// Multiply by conj(w[index...]).
    Mirrored(usize),
    /// Truncated away.
    Zero,
}

/// Tap for a 1D bin with signed frequency `ell` of an L-point spectrum.
fn tap_1d(k: usize, len: usize, modes: usize) -> ModeTap {
    let ell = signed_index(k, len);
    if ell >= 0 {
        if (ell as usize) < modes {
            ModeTap::Direct(ell as usize)
        } else {
            ModeTap::Zero
        }
    } else if len % 2 == 0 && ell == -((len / 2) as i64) {
        // Even-length Nyquist bin has no positive partner; treat directly.
        if len / 2 < modes {
            ModeTap::Direct(len / 2)
        } else {
            ModeTap::Zero
        }
    } else if ((-ell) as usize) < modes {
        ModeTap::Mirrored((-ell) as usize)
    } else {
        ModeTap::Zero
    }
}

/// Membership of signed frequency `ell` in a two-sided window of `m` modes
/// stored in wrap-around order; returns the storage index.
fn window_index(ell: i64, m: usize) -> Option<usize> {
    let lo = -((m / 2) as i64);
    let hi = (m as i64 + 1) / 2; // exclusive
    if ell >= lo && ell < hi {
        Some(bin_of_signed(ell, m))
    } else {
        None
    }
}

/// Tap for a 2D bin (k0, k1): axis 0 non-negative + mirror, axis 1 signed
/// window. The mirror of (l0, l1) is the bin holding (-l0, -l1) modulo the
/// grid.
fn tap_2d(k0: usize, k1: usize, l0: usize, l1: usize, m0: usize, m1: usize) -> ModeTap {
    let e0 = signed_index(k0, l0);
    let e1 = signed_index(k1, l1);
    let direct0 = if e0 >= 0 {
        Some(e0 as usize)
    } else if l0 % 2 == 0 && e0 == -((l0 / 2) as i64) {
        Some(l0 / 2)
    } else {
        None
    };
    if let Some(i0) = direct0 {
        if i0 < m0 {
            if let Some(i1) = window_index(e1, m1) {
                return ModeTap::Direct(i0 * m1 + i1);
            }
        }
        return ModeTap::Zero;
    }
    // e0 < 0 (and not the Nyquist row): mirror to (-e0, mirrored e1).
    let i0 = (-e0) as usize;
    if i0 >= m0 {
        return ModeTap::Zero;
    }
    let k1m = (l1 - k1) % l1;
    let e1m = signed_index(k1m, l1);
    match window_index(e1m, m1) {
        Some(i1) => ModeTap::Mirrored(i0 * m1 + i1),
        None => ModeTap::Zero,
    }
}

/// Trainable 1D spectral weights.
#[derive(Clone, Debug)]
pub struct SpectralWeights1D {
    pub c_in: usize,
    pub c_out: usize,
    pub modes: usize,
    /// [c_in][c_out][modes]
    pub weights: Vec<Complex64>,
}

/// Trainable 2D spectral weights.
#[derive(Clone, Debug)]
pub struct SpectralWeights2D {
    pub c_in: usize,
    pub c_out: usize,
    pub modes0: usize,
    pub modes1: usize,
    /// [c_in][c_out][modes0][modes1]
    pub weights: Vec<Complex64>,
}

pub struct Spectral1dSaved {
    batch: usize,
    len: usize,
    c_in: usize,
    c_out: usize,
    modes: usize,
    weights: Vec<Complex64>,
    /// alpha as channel planes, [batch][c_in][len].
    alpha: Vec<Complex64>,
    taps: Vec<ModeTap>,
}

pub struct Spectral2dSaved {
    batch: usize,
    l0: usize,
    l1: usize,
    c_in: usize,
    c_out: usize,
    modes0: usize,
    modes1: usize,
    weights: Vec<Complex64>,
    /// alpha as channel planes, [batch][c_in][l0*l1].
    alpha: Vec<Complex64>,
    taps: Vec<ModeTap>,
}

pub(crate) struct SpectralGrads {
    pub v: TensorData,
    pub w: TensorData,
}

#[cfg(test)]
fn mix_bin(
    alpha: &[Complex64],
    weights: &[Complex64],
    tap: ModeTap,
    ci: usize,
    co: usize,
    w_stride: usize,
    out: &mut [Complex64],
) {
    match tap {
        ModeTap::Zero => {}
        ModeTap::Direct(widx) => {
            for i in 0..ci {
                let a = alpha[i];
                if a == Complex64::default() {
                    continue;
                }
                for j in 0..co {
                    out[j] += a * weights[(i * co + j) * w_stride + widx];
                }
            }
        }
        ModeTap::Mirrored(widx) => {
            for i in 0..ci {
                let a = alpha[i];
                if a == Complex64::default() {
                    continue;
                }
                for j in 0..co {
                    out[j] += a * weights[(i * co + j) * w_stride + widx].conj();
                }
            }
        }
    }
}

pub(crate) fn spectral_forward_1d(
    v: &TensorData,
    w: &TensorData,
) -> Result<(TensorData, Spectral1dSaved)> {
    let wsh = w.shape();
    if wsh.len() != 3 {
        return Err(Error::shape("spectral_conv_1d", format!("weights {wsh:?}")));
    }
    let (ci, co, modes) = (wsh[0], wsh[1], wsh[2]);
    let vsh = v.shape();
    if vsh.len() != 3 || vsh[2] != ci {
        return Err(Error::shape(
            "spectral_conv_1d",
            format!("input {vsh:?} vs weights c_in {ci}"),
        ));
    }
    let (batch, len) = (vsh[0], vsh[1]);
    if modes > len / 2 + 1 {
        return Err(Error::Config(format!(
            "spectral modes {modes} exceed L/2+1 = {} for L = {len}",
            len / 2 + 1
        )));
    }
    let vs = v.real()?;
    let ws = w.complex()?;
    let taps: Vec<ModeTap> = (0..len).map(|k| tap_1d(k, len, modes)).collect();

    let per: Vec<(Vec<Complex64>, Vec<f64>)> = (0..batch)
        .into_par_iter()
        .map(|b| {
            // alpha = DFT(v)/L as channel planes.
            let mut buf = vec![Complex64::default(); len * ci];
            for (k, slot) in buf.iter_mut().enumerate() {
                *slot = Complex64::new(vs[b * len * ci + k], 0.0);
            }
            dft_multi(&mut buf, len, ci, Sign::Forward);
            let scale = 1.0 / len as f64;
            let mut alpha = vec![Complex64::default(); ci * len];
            for k in 0..len {
                for i in 0..ci {
                    alpha[i * len + k] = buf[k * ci + i] * scale;
                }
            }
            // Mode mixing with weight rows walked contiguously per channel
            // pair; mirrored bins use the conjugated weight of the partner.
            let mut out_planes = vec![Complex64::default(); co * len];
            for i in 0..ci {
                let aplane = &alpha[i * len..(i + 1) * len];
                for j in 0..co {
                    let wrow = &ws[(i * co + j) * modes..(i * co + j + 1) * modes];
                    let oplane = &mut out_planes[j * len..(j + 1) * len];
                    for k in 0..len {
                        match taps[k] {
                            ModeTap::Zero => {}
                            ModeTap::Direct(widx) => oplane[k] += aplane[k] * wrow[widx],
                            ModeTap::Mirrored(widx) => {
                                oplane[k] += aplane[k] * wrow[widx].conj()
                            }
                        }
                    }
                }
            }
            let mut synth = vec![Complex64::default(); len * co];
            for j in 0..co {
                for k in 0..len {
                    synth[k * co + j] = out_planes[j * len + k];
                }
            }
            dft_multi(&mut synth, len, co, Sign::Inverse);
            let out: Vec<f64> = synth.iter().map(|c| c.re).collect();
            (alpha, out)
        })
        .collect();

    let mut alpha = Vec::with_capacity(batch * len * ci);
    let mut out = Vec::with_capacity(batch * len * co);
    for (a, o) in per {
        alpha.extend(a);
        out.extend(o);
    }
    let out = TensorData::from_real(out, vec![batch, len, co])?;
    if !out.is_finite() {
        return Err(Error::NonFinite {
            op: "spectral_conv_1d",
            detail: "output contains NaN/Inf".into(),
        });
    }
    Ok((
        out,
        Spectral1dSaved {
            batch,
            len,
            c_in: ci,
            c_out: co,
            modes,
            weights: ws.to_vec(),
            alpha,
            taps,
        },
    ))
}

pub(crate) fn backward_1d(saved: &Spectral1dSaved, upstream: &TensorData) -> Result<SpectralGrads> {
    let g = upstream.real()?;
    let (batch, len, ci, co, modes) = (saved.batch, saved.len, saved.c_in, saved.c_out, saved.modes);

    let per: Vec<(Vec<f64>, Vec<Complex64>)> = (0..batch)
        .into_par_iter()
        .map(|b| {
            // g_out_alpha = forward-sign DFT of upstream (synthesis adjoint),
            // transposed to per-output-channel planes.
            let mut g_oa: Vec<Complex64> = g[b * len * co..(b + 1) * len * co]
                .iter()
                .map(|&x| Complex64::new(x, 0.0))
                .collect();
            dft_multi(&mut g_oa, len, co, Sign::Forward);
            let mut go_planes = vec![Complex64::default(); co * len];
            for k in 0..len {
                for j in 0..co {
                    go_planes[j * len + k] = g_oa[k * co + j];
                }
            }
            let alpha = &saved.alpha[b * ci * len..(b + 1) * ci * len];

            let mut g_alpha_planes = vec![Complex64::default(); ci * len];
            let mut g_w = vec![Complex64::default(); ci * co * modes];
            for i in 0..ci {
                let aplane = &alpha[i * len..(i + 1) * len];
                let gaplane = &mut g_alpha_planes[i * len..(i + 1) * len];
                for j in 0..co {
                    let go = &go_planes[j * len..(j + 1) * len];
                    let wrow = &saved.weights[(i * co + j) * modes..(i * co + j + 1) * modes];
                    let gwrow = &mut g_w[(i * co + j) * modes..(i * co + j + 1) * modes];
                    for k in 0..len {
                        match saved.taps[k] {
                            ModeTap::Zero => {}
                            ModeTap::Direct(widx) => {
                                gwrow[widx] += go[k] * aplane[k].conj();
                                gaplane[k] += go[k] * wrow[widx].conj();
                            }
                            // out = conj(w) alpha: g_w += conj(g_out) alpha,
                            // g_alpha += g_out w.
                            ModeTap::Mirrored(widx) => {
                                gwrow[widx] += go[k].conj() * aplane[k];
                                gaplane[k] += go[k] * wrow[widx];
                            }
                        }
                    }
                }
            }
            let mut synth = vec![Complex64::default(); len * ci];
            for i in 0..ci {
                for k in 0..len {
                    synth[k * ci + i] = g_alpha_planes[i * len + k];
                }
            }
            dft_multi(&mut synth, len, ci, Sign::Inverse);
            let scale = 1.0 / len as f64;
            let g_v: Vec<f64> = synth.iter().map(|c| c.re * scale).collect();
            (g_v, g_w)
        })
        .collect();

    let mut g_v = Vec::with_capacity(batch * len * ci);
    let mut g_w = vec![Complex64::default(); ci * co * modes];
    for (gv, gw) in per {
        g_v.extend(gv);
        for (acc, x) in g_w.iter_mut().zip(&gw) {
            *acc += x;
        }
    }
    Ok(SpectralGrads {
        v: TensorData::from_real(g_v, vec![batch, len, ci])?,
        w: TensorData::from_complex(g_w, vec![ci, co, modes])?,
    })
}

pub(crate) fn spectral_forward_2d(
    v: &TensorData,
    w: &TensorData,
) -> Result<(TensorData, Spectral2dSaved)> {
    let wsh = w.shape();
    if wsh.len() != 4 {
        return Err(Error::shape("spectral_conv_2d", format!("weights {wsh:?}")));
    }
    let (ci, co, m0, m1) = (wsh[0], wsh[1], wsh[2], wsh[3]);
    let vsh = v.shape();
    if vsh.len() != 4 || vsh[3] != ci {
        return Err(Error::shape(
            "spectral_conv_2d",
            format!("input {vsh:?} vs weights c_in {ci}"),
        ));
    }
    let (batch, l0, l1) = (vsh[0], vsh[1], vsh[2]);
    if m0 > l0 / 2 + 1 {
        return Err(Error::Config(format!(
            "axis-0 modes {m0} exceed L0/2+1 = {} for L0 = {l0}",
            l0 / 2 + 1
        )));
    }
    if m1 > l1 {
        return Err(Error::Config(format!(
            "axis-1 window {m1} exceeds L1 = {l1}"
        )));
    }
    let vs = v.real()?;
    let ws = w.complex()?;
    let grid = l0 * l1;
    let mut taps = vec![ModeTap::Zero; grid];
    for k0 in 0..l0 {
        for k1 in 0..l1 {
            taps[k0 * l1 + k1] = tap_2d(k0, k1, l0, l1, m0, m1);
        }
    }

    let per: Vec<(Vec<Complex64>, Vec<f64>)> = (0..batch)
        .into_par_iter()
        .map(|b| {
            let mut buf = vec![Complex64::default(); grid * ci];
            for (k, slot) in buf.iter_mut().enumerate() {
                *slot = Complex64::new(vs[b * grid * ci + k], 0.0);
            }
            dft_multi(&mut buf, l0, l1 * ci, Sign::Forward);
            for row in buf.chunks_mut(l1 * ci) {
                dft_multi(row, l1, ci, Sign::Forward);
            }
            let scale = 1.0 / grid as f64;
            let mut alpha = vec![Complex64::default(); ci * grid];
            for k in 0..grid {
                for i in 0..ci {
                    alpha[i * grid + k] = buf[k * ci + i] * scale;
                }
            }
            let wn = m0 * m1;
            let mut out_planes = vec![Complex64::default(); co * grid];
            for i in 0..ci {
                let aplane = &alpha[i * grid..(i + 1) * grid];
                for j in 0..co {
                    let wrow = &ws[(i * co + j) * wn..(i * co + j + 1) * wn];
                    let oplane = &mut out_planes[j * grid..(j + 1) * grid];
                    for k in 0..grid {
                        match taps[k] {
                            ModeTap::Zero => {}
                            ModeTap::Direct(widx) => oplane[k] += aplane[k] * wrow[widx],
                            ModeTap::Mirrored(widx) => {
                                oplane[k] += aplane[k] * wrow[widx].conj()
                            }
                        }
                    }
                }
            }
            let mut synth = vec![Complex64::default(); grid * co];
            for j in 0..co {
                for k in 0..grid {
                    synth[k * co + j] = out_planes[j * grid + k];
                }
            }
            dft_multi(&mut synth, l0, l1 * co, Sign::Inverse);
            for row in synth.chunks_mut(l1 * co) {
                dft_multi(row, l1, co, Sign::Inverse);
            }
            let out: Vec<f64> = synth.iter().map(|c| c.re).collect();
            (alpha, out)
        })
        .collect();

    let mut alpha = Vec::with_capacity(batch * grid * ci);
    let mut out = Vec::with_capacity(batch * grid * co);
    for (a, o) in per {
        alpha.extend(a);
        out.extend(o);
    }
    let out = TensorData::from_real(out, vec![batch, l0, l1, co])?;
    if !out.is_finite() {
        return Err(Error::NonFinite {
            op: "spectral_conv_2d",
            detail: "output contains NaN/Inf".into(),
        });
    }
    Ok((
        out,
        Spectral2dSaved {
            batch,
            l0,
            l1,
            c_in: ci,
            c_out: co,
            modes0: m0,
            modes1: m1,
            weights: ws.to_vec(),
            alpha,
            taps,
        },
    ))
}

pub(crate) fn backward_2d(saved: &Spectral2dSaved, upstream: &TensorData) -> Result<SpectralGrads> {
    let g = upstream.real()?;
    let (batch, l0, l1) = (saved.batch, saved.l0, saved.l1);
    let (ci, co) = (saved.c_in, saved.c_out);
    let grid = l0 * l1;
    let wn = saved.modes0 * saved.modes1;

    let per: Vec<(Vec<f64>, Vec<Complex64>)> = (0..batch)
        .into_par_iter()
        .map(|b| {
            let mut g_oa: Vec<Complex64> = g[b * grid * co..(b + 1) * grid * co]
                .iter()
                .map(|&x| Complex64::new(x, 0.0))
                .collect();
            dft_multi(&mut g_oa, l0, l1 * co, Sign::Forward);
            for row in g_oa.chunks_mut(l1 * co) {
                dft_multi(row, l1, co, Sign::Forward);
            }
            let mut go_planes = vec![Complex64::default(); co * grid];
            for k in 0..grid {
                for j in 0..co {
                    go_planes[j * grid + k] = g_oa[k * co + j];
                }
            }
            let alpha = &saved.alpha[b * ci * grid..(b + 1) * ci * grid];

            let mut g_alpha_planes = vec![Complex64::default(); ci * grid];
            let mut g_w = vec![Complex64::default(); ci * co * wn];
            for i in 0..ci {
                let aplane = &alpha[i * grid..(i + 1) * grid];
                let gaplane = &mut g_alpha_planes[i * grid..(i + 1) * grid];
                for j in 0..co {
                    let go = &go_planes[j * grid..(j + 1) * grid];
                    let wrow = &saved.weights[(i * co + j) * wn..(i * co + j + 1) * wn];
                    let gwrow = &mut g_w[(i * co + j) * wn..(i * co + j + 1) * wn];
                    for k in 0..grid {
                        match saved.taps[k] {
                            ModeTap::Zero => {}
                            ModeTap::Direct(widx) => {
                                gwrow[widx] += go[k] * aplane[k].conj();
                                gaplane[k] += go[k] * wrow[widx].conj();
                            }
                            ModeTap::Mirrored(widx) => {
                                gwrow[widx] += go[k].conj() * aplane[k];
                                gaplane[k] += go[k] * wrow[widx];
                            }
                        }
                    }
                }
            }
            let mut synth = vec![Complex64::default(); grid * ci];
            for i in 0..ci {
                for k in 0..grid {
                    synth[k * ci + i] = g_alpha_planes[i * grid + k];
                }
            }
            dft_multi(&mut synth, l0, l1 * ci, Sign::Inverse);
            for row in synth.chunks_mut(l1 * ci) {
                dft_multi(row, l1, ci, Sign::Inverse);
            }
            let scale = 1.0 / grid as f64;
            let g_v: Vec<f64> = synth.iter().map(|c| c.re * scale).collect();
            (g_v, g_w)
        })
        .collect();

    let mut g_v = Vec::with_capacity(batch * grid * ci);
    let mut g_w = vec![Complex64::default(); ci * co * wn];
    for (gv, gw) in per {
        g_v.extend(gv);
        for (acc, x) in g_w.iter_mut().zip(&gw) {
            *acc += x;
        }
    }
    Ok(SpectralGrads {
        v: TensorData::from_real(g_v, vec![batch, l0, l1, ci])?,
        w: TensorData::from_complex(g_w, vec![ci, co, saved.modes0, saved.modes1])?,
    })
}

impl Tape {
    /// Differentiable 1D spectral convolution: v [batch, len, c_in] with
    /// weights [c_in, c_out, M] -> [batch, len, c_out].
    pub fn spectral_conv_1d(&mut self, v: TensorId, w: TensorId) -> Result<TensorId> {
        let (out, saved) = spectral_forward_1d(self.value(v), self.value(w))?;
        Ok(self.push_op(
            out,
            Op::SpectralConv1d {
                v,
                w,
                saved: Box::new(saved),
            },
            &[v, w],
        ))
    }

    /// Differentiable 2D spectral convolution: v [batch, l0, l1, c_in] with
    /// weights [c_in, c_out, M0, M1] -> [batch, l0, l1, c_out].
    pub fn spectral_conv_2d(&mut self, v: TensorId, w: TensorId) -> Result<TensorId> {
        let (out, saved) = spectral_forward_2d(self.value(v), self.value(w))?;
        Ok(self.push_op(
            out,
            Op::SpectralConv2d {
                v,
                w,
                saved: Box::new(saved),
            },
            &[v, w],
        ))
    }
}

/// Apply 1D spectral weights outside a tape.
pub fn spectral_conv_1d(w: &SpectralWeights1D, v: &TensorData) -> Result<TensorData> {
    let wt = TensorData::from_complex(w.weights.clone(), vec![w.c_in, w.c_out, w.modes])?;
    Ok(spectral_forward_1d(v, &wt)?.0)
}

/// Apply 2D spectral weights outside a tape.
pub fn spectral_conv_2d(w: &SpectralWeights2D, v: &TensorData) -> Result<TensorData> {
    let wt = TensorData::from_complex(
        w.weights.clone(),
        vec![w.c_in, w.c_out, w.modes0, w.modes1],
    )?;
    Ok(spectral_forward_2d(v, &wt)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dtype;
    use std::f64::consts::PI;

    struct Lcg(u64);
    impl Lcg {
        fn next(&mut self) -> f64 {
            self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((self.0 >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        }
        fn next_c(&mut self) -> Complex64 {
            Complex64::new(self.next(), self.next())
        }
    }

    fn identity_weights_1d(ch: usize, modes: usize) -> TensorData {
        let mut w = vec![Complex64::default(); ch * ch * modes];
        for i in 0..ch {
            for m in 0..modes {
                w[(i * ch + i) * modes + m] = Complex64::new(1.0, 0.0);
            }
        }
        TensorData::from_complex(w, vec![ch, ch, modes]).unwrap()
    }

    #[test]
    fn identity_full_spectrum_reproduces_input() {
        let mut rng = Lcg(2);
        let (b, len, ch) = (2, 16, 2);
        let w = identity_weights_1d(ch, len / 2 + 1);
        let vs: Vec<f64> = (0..b * len * ch).map(|_| rng.next()).collect();
        let v = TensorData::from_real(vs.clone(), vec![b, len, ch]).unwrap();
        let (out, _) = spectral_forward_1d(&v, &w).unwrap();
        for (a, bb) in out.real().unwrap().iter().zip(&vs) {
            assert!((a - bb).abs() <= 1e-10, "{a} vs {bb}");
        }
    }

    #[test]
    fn zero_weights_zero_output() {
        let w = TensorData::zeros(&[1, 1, 4], Dtype::Complex);
        let v = TensorData::from_real((0..8).map(|x| x as f64).collect(), vec![1, 8, 1]).unwrap();
        let (out, _) = spectral_forward_1d(&v, &w).unwrap();
        assert!(out.real().unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn too_many_modes_is_config_error() {
        let w = TensorData::zeros(&[1, 1, 6], Dtype::Complex);
        let v = TensorData::zeros(&[1, 8, 1], Dtype::Real);
        assert!(matches!(
            spectral_forward_1d(&v, &w),
            Err(Error::Config(_))
        ));
    }

    /// Independent oracle: build the time-domain kernel whose spectrum is the
    /// (mirrored) weights by naive summation and circularly convolve.
    #[test]
    fn matches_direct_convolution_oracle() {
        let mut rng = Lcg(15);
        let (len, ci, co, modes) = (12, 2, 2, 4);
        let ws: Vec<Complex64> = (0..ci * co * modes).map(|_| rng.next_c()).collect();
        let w = TensorData::from_complex(ws.clone(), vec![ci, co, modes]).unwrap();
        let vs: Vec<f64> = (0..len * ci).map(|_| rng.next()).collect();
        let v = TensorData::from_real(vs.clone(), vec![1, len, ci]).unwrap();
        let (out, _) = spectral_forward_1d(&v, &w).unwrap();

        // kernel h_ij[d] = (1/L) sum_l tap_ij(l) exp(i w_l t_d)
        let mut h = vec![Complex64::default(); ci * co * len];
        for i in 0..ci {
            for j in 0..co {
                for d in 0..len {
                    let mut acc = Complex64::default();
                    for k in 0..len {
                        let ell = signed_index(k, len);
                        let tap = if ell >= 0 && (ell as usize) < modes {
                            ws[(i * co + j) * modes + ell as usize]
                        } else if ell < 0 && ((-ell) as usize) < modes {
                            ws[(i * co + j) * modes + (-ell) as usize].conj()
                        } else {
                            Complex64::default()
                        };
                        let ang = 2.0 * PI * ell as f64 * d as f64 / len as f64;
                        acc += tap * Complex64::new(0.0, ang).exp();
                    }
                    h[(i * co + j) * len + d] = acc / len as f64;
                }
            }
        }
        for k in 0..len {
            for j in 0..co {
                let mut acc = Complex64::default();
                for i in 0..ci {
                    for m in 0..len {
                        let d = (k + len - m) % len;
                        acc += h[(i * co + j) * len + d] * vs[m * ci + i];
                    }
                }
                let got = out.real().unwrap()[k * co + j];
                assert!(
                    (got - acc.re).abs() <= 1e-10 * acc.re.abs().max(1.0),
                    "k={k} j={j}: {got} vs {}",
                    acc.re
                );
            }
        }
    }

    #[test]
    fn circular_shift_equivariance() {
        let mut rng = Lcg(8);
        let (len, modes) = (16, 5);
        let ws: Vec<Complex64> = (0..modes).map(|_| rng.next_c()).collect();
        let w = TensorData::from_complex(ws, vec![1, 1, modes]).unwrap();
        let vs: Vec<f64> = (0..len).map(|_| rng.next()).collect();
        let shift = 5usize;
        let shifted: Vec<f64> = (0..len).map(|k| vs[(k + len - shift) % len]).collect();
        let o1 = spectral_forward_1d(
            &TensorData::from_real(vs, vec![1, len, 1]).unwrap(),
            &w,
        )
        .unwrap()
        .0;
        let o2 = spectral_forward_1d(
            &TensorData::from_real(shifted, vec![1, len, 1]).unwrap(),
            &w,
        )
        .unwrap()
        .0;
        for k in 0..len {
            let a = o1.real().unwrap()[(k) % len];
            let b = o2.real().unwrap()[(k + shift) % len];
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Lcg(21);
        let (b, len, ci, co, modes) = (2, 8, 2, 2, 3);
        let ws: Vec<Complex64> = (0..ci * co * modes).map(|_| rng.next_c()).collect();
        let vs: Vec<f64> = (0..b * len * ci).map(|_| rng.next()).collect();

        let loss_fn = |w: &[Complex64], v: &[f64]| -> f64 {
            let mut tape = Tape::new();
            let vt = tape.leaf(TensorData::from_real(v.to_vec(), vec![b, len, ci]).unwrap(), false);
            let wt = tape.leaf(
                TensorData::from_complex(w.to_vec(), vec![ci, co, modes]).unwrap(),
                false,
            );
            let out = tape.spectral_conv_1d(vt, wt).unwrap();
            let loss = tape.sum_squares(out).unwrap();
            tape.value(loss).scalar_value().unwrap()
        };

        let (g_v, g_w) = {
            let mut tape = Tape::new();
            let vt = tape.leaf(TensorData::from_real(vs.clone(), vec![b, len, ci]).unwrap(), true);
            let wt = tape.leaf(
                TensorData::from_complex(ws.clone(), vec![ci, co, modes]).unwrap(),
                true,
            );
            let out = tape.spectral_conv_1d(vt, wt).unwrap();
            let loss = tape.sum_squares(out).unwrap();
            tape.backward(loss).unwrap();
            (
                tape.grad(vt).unwrap().real().unwrap().to_vec(),
                tape.grad(wt).unwrap().complex().unwrap().to_vec(),
            )
        };
        let h = 1e-6;
        for idx in 0..ws.len() {
            for part in 0..2 {
                let mut up = ws.clone();
                let mut dn = ws.clone();
                if part == 0 {
                    up[idx].re += h;
                    dn[idx].re -= h;
                } else {
                    up[idx].im += h;
                    dn[idx].im -= h;
                }
                let fd = (loss_fn(&up, &vs) - loss_fn(&dn, &vs)) / (2.0 * h);
                let ad = if part == 0 { g_w[idx].re } else { g_w[idx].im };
                let rel = (ad - fd).abs() / fd.abs().max(1e-8);
                assert!(rel <= 1e-5, "w[{idx}].{part}: {ad} vs {fd}");
            }
        }
        for idx in (0..vs.len()).step_by(3) {
            let mut up = vs.clone();
            let mut dn = vs.clone();
            up[idx] += h;
            dn[idx] -= h;
            let fd = (loss_fn(&ws, &up) - loss_fn(&ws, &dn)) / (2.0 * h);
            let rel = (g_v[idx] - fd).abs() / fd.abs().max(1e-8);
            assert!(rel <= 1e-5, "v[{idx}]: {} vs {fd}", g_v[idx]);
        }
    }

    #[test]
    fn identity_full_spectrum_2d_reproduces_input() {
        let mut rng = Lcg(4);
        // Odd x even grid mirrors the PDE benchmarks.
        let (b, l0, l1, ch) = (1, 5, 4, 2);
        let (m0, m1) = (l0 / 2 + 1, l1);
        let mut w = vec![Complex64::default(); ch * ch * m0 * m1];
        for i in 0..ch {
            for m in 0..m0 * m1 {
                w[(i * ch + i) * m0 * m1 + m] = Complex64::new(1.0, 0.0);
            }
        }
        let wt = TensorData::from_complex(w, vec![ch, ch, m0, m1]).unwrap();
        let vs: Vec<f64> = (0..b * l0 * l1 * ch).map(|_| rng.next()).collect();
        let v = TensorData::from_real(vs.clone(), vec![b, l0, l1, ch]).unwrap();
        let (out, _) = spectral_forward_2d(&v, &wt).unwrap();
        for (a, bb) in out.real().unwrap().iter().zip(&vs) {
            assert!((a - bb).abs() <= 1e-10, "{a} vs {bb}");
        }
    }

    #[test]
    fn zero_weights_2d() {
        let w = TensorData::zeros(&[1, 1, 2, 3], Dtype::Complex);
        let v = TensorData::from_real((0..24).map(|x| x as f64).collect(), vec![1, 4, 6, 1]).unwrap();
        let (out, _) = spectral_forward_2d(&v, &w).unwrap();
        assert!(out.real().unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mode_bounds_2d() {
        let v = TensorData::zeros(&[1, 4, 6, 1], Dtype::Real);
        let w = TensorData::zeros(&[1, 1, 4, 3], Dtype::Complex);
        assert!(matches!(spectral_forward_2d(&v, &w), Err(Error::Config(_))));
        let w = TensorData::zeros(&[1, 1, 2, 7], Dtype::Complex);
        assert!(matches!(spectral_forward_2d(&v, &w), Err(Error::Config(_))));
    }

    /// Truncated 2D conv against the naive per-bin mixing oracle.
    #[test]
    fn matches_naive_2d_oracle() {
        let mut rng = Lcg(33);
        let (l0, l1, ci, co, m0, m1) = (6, 5, 2, 1, 2, 3);
        let ws: Vec<Complex64> = (0..ci * co * m0 * m1).map(|_| rng.next_c()).collect();
        let w = TensorData::from_complex(ws.clone(), vec![ci, co, m0, m1]).unwrap();
        let vs: Vec<f64> = (0..l0 * l1 * ci).map(|_| rng.next()).collect();
        let v = TensorData::from_real(vs.clone(), vec![1, l0, l1, ci]).unwrap();
        let (out, _) = spectral_forward_2d(&v, &w).unwrap();

        // naive: full 2D DFT, per-bin tap, inverse, real part
        let grid = l0 * l1;
        let mut alpha = vec![Complex64::default(); grid * ci];
        for k0 in 0..l0 {
            for k1 in 0..l1 {
                for i in 0..ci {
                    let mut acc = Complex64::default();
                    for j0 in 0..l0 {
                        for j1 in 0..l1 {
                            let ang = -2.0 * PI * (k0 * j0) as f64 / l0 as f64
                                - 2.0 * PI * (k1 * j1) as f64 / l1 as f64;
                            acc += vs[(j0 * l1 + j1) * ci + i] * Complex64::new(0.0, ang).exp();
                        }
                    }
                    alpha[(k0 * l1 + k1) * ci + i] = acc / grid as f64;
                }
            }
        }
        let mut out_alpha = vec![Complex64::default(); grid * co];
        for k0 in 0..l0 {
            for k1 in 0..l1 {
                let tap = tap_2d(k0, k1, l0, l1, m0, m1);
                let k = k0 * l1 + k1;
                mix_bin(
                    &alpha[k * ci..(k + 1) * ci],
                    &ws,
                    tap,
                    ci,
                    co,
                    m0 * m1,
                    &mut out_alpha[k * co..(k + 1) * co],
                );
            }
        }
        for k0 in 0..l0 {
            for k1 in 0..l1 {
                for j in 0..co {
                    let mut acc = Complex64::default();
                    for b0 in 0..l0 {
                        for b1 in 0..l1 {
                            let ang = 2.0 * PI * (k0 * b0) as f64 / l0 as f64
                                + 2.0 * PI * (k1 * b1) as f64 / l1 as f64;
                            acc += out_alpha[(b0 * l1 + b1) * co + j]
                                * Complex64::new(0.0, ang).exp();
                        }
                    }
                    let got = out.real().unwrap()[(k0 * l1 + k1) * co + j];
                    assert!((got - acc.re).abs() <= 1e-10 * acc.re.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_2d() {
        let mut rng = Lcg(55);
        let (b, l0, l1, ci, co, m0, m1) = (1, 4, 3, 2, 1, 2, 3);
        let ws: Vec<Complex64> = (0..ci * co * m0 * m1).map(|_| rng.next_c()).collect();
        let vs: Vec<f64> = (0..b * l0 * l1 * ci).map(|_| rng.next()).collect();
        let loss_fn = |w: &[Complex64], v: &[f64]| -> f64 {
            let mut tape = Tape::new();
            let vt = tape.leaf(
                TensorData::from_real(v.to_vec(), vec![b, l0, l1, ci]).unwrap(),
                false,
            );
            let wt = tape.leaf(
                TensorData::from_complex(w.to_vec(), vec![ci, co, m0, m1]).unwrap(),
                false,
            );
            let out = tape.spectral_conv_2d(vt, wt).unwrap();
            let loss = tape.sum_squares(out).unwrap();
            tape.value(loss).scalar_value().unwrap()
        };
        let (g_v, g_w) = {
            let mut tape = Tape::new();
            let vt = tape.leaf(TensorData::from_real(vs.clone(), vec![b, l0, l1, ci]).unwrap(), true);
            let wt = tape.leaf(
                TensorData::from_complex(ws.clone(), vec![ci, co, m0, m1]).unwrap(),
                true,
            );
            let out = tape.spectral_conv_2d(vt, wt).unwrap();
            let loss = tape.sum_squares(out).unwrap();
            tape.backward(loss).unwrap();
            (
                tape.grad(vt).unwrap().real().unwrap().to_vec(),
                tape.grad(wt).unwrap().complex().unwrap().to_vec(),
            )
        };
        let h = 1e-6;
        for idx in 0..ws.len() {
            for part in 0..2 {
                let mut up = ws.clone();
                let mut dn = ws.clone();
                if part == 0 {
                    up[idx].re += h;
                    dn[idx].re -= h;
                } else {
                    up[idx].im += h;
                    dn[idx].im -= h;
                }
                let fd = (loss_fn(&up, &vs) - loss_fn(&dn, &vs)) / (2.0 * h);
                let ad = if part == 0 { g_w[idx].re } else { g_w[idx].im };
                let rel = (ad - fd).abs() / fd.abs().max(1e-8);
                assert!(rel <= 1e-5, "w[{idx}].{part}: {ad} vs {fd}");
            }
        }
        for idx in 0..vs.len() {
            let mut up = vs.clone();
            let mut dn = vs.clone();
            up[idx] += h;
            dn[idx] -= h;
            let fd = (loss_fn(&ws, &up) - loss_fn(&ws, &dn)) / (2.0 * h);
            let rel = (g_v[idx] - fd).abs() / fd.abs().max(1e-8);
            assert!(rel <= 1e-5, "v[{idx}]: {} vs {fd}", g_v[idx]);
        }
    }
}
