//! Operator model assembly: lifting map, operator block(s) with linear
//! bypass, projection map.
//!
//! Both model kinds share the skeleton out = Q(block(...block(P([f, coords]))))
//! where each block computes sigma(K(v) + W v) with K either the Laplace layer
//! (pole-residue kernel) or a truncated spectral convolution. The Laplace
//! model uses a single block; the Fourier baseline uses four, with no
//! activation after the last one.

use crate::error::{Error, Result};
use crate::tensor::{Activation, Dtype, Tape, TensorData, TensorId};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lno,
    Fno,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lno" => Ok(ModelKind::Lno),
            "fno" => Ok(ModelKind::Fno),
            other => Err(Error::UnknownOption {
                what: "model",
                value: other.into(),
                valid: "lno, fno",
            }),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Lno => "lno",
            ModelKind::Fno => "fno",
        })
    }
}

/// Architecture description; a pure function of this struct determines the
/// parameter layout, the parameter count, and (given a seed) every initial
/// value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub kind: ModelKind,
    pub layers: usize,
    pub width: usize,
    /// Per-axis mode counts: trainable pole counts for the Laplace model,
    /// retained-mode counts for the Fourier baseline. Length = grid rank.
    pub modes: Vec<usize>,
    pub activation: Activation,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Append normalized coordinate channels (t/T, and x/X in 2D) before
    /// lifting. On by default for both kinds so comparisons stay fair.
    pub coord_channels: bool,
    /// Physical span of each grid axis (seconds / meters).
    pub periods: Vec<f64>,
}

impl OperatorConfig {
    pub fn rank(&self) -> usize {
        self.modes.len()
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ModelKind::Lno if self.layers != 1 => {
                return Err(Error::Config(format!(
                    "the Laplace operator uses exactly 1 layer, got {}",
                    self.layers
                )))
            }
            ModelKind::Fno if self.layers != 4 => {
                return Err(Error::Config(format!(
                    "the Fourier baseline uses exactly 4 layers, got {}",
                    self.layers
                )))
            }
            _ => {}
        }
        if self.width == 0 {
            return Err(Error::Config("width must be >= 1".into()));
        }
        if self.modes.is_empty() || self.modes.len() > 2 {
            return Err(Error::Config(format!(
                "modes must have 1 or 2 axes, got {:?}",
                self.modes
            )));
        }
        if self.modes.iter().any(|&m| m == 0) {
            return Err(Error::Config("mode counts must be >= 1".into()));
        }
        if self.periods.len() != self.modes.len() {
            return Err(Error::Config(format!(
                "periods {:?} must match grid rank {}",
                self.periods,
                self.modes.len()
            )));
        }
        if self.periods.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
            return Err(Error::Config(format!("invalid periods {:?}", self.periods)));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("channel counts must be >= 1".into()));
        }
        Ok(())
    }

    fn lifted_in(&self) -> usize {
        self.in_channels + if self.coord_channels { self.rank() } else { 0 }
    }

    /// Total trainable entries (a complex entry counts once), computable
    /// without building the model.
    pub fn parameter_count(&self) -> usize {
        let w = self.width;
        let lift = self.lifted_in() * w + w;
        let proj = w * self.out_channels + self.out_channels;
        let per_layer = match (self.kind, self.modes.as_slice()) {
            (ModelKind::Lno, [n]) => 2 * w * w * n + w * w,
            (ModelKind::Lno, [n0, n1]) => w * w * (n0 + n1) + w * w * n0 * n1 + w * w,
            (ModelKind::Fno, [m]) => w * w * m + w * w,
            (ModelKind::Fno, [m0, m1]) => w * w * m0 * m1 + w * w,
            _ => unreachable!("validated rank"),
        };
        lift + proj + self.layers * per_layer
    }
}

/// One named trainable tensor.
#[derive(Clone)]
pub struct Param {
    pub name: String,
    pub value: Arc<TensorData>,
}

/// Assembled operator model: configuration plus named parameters in a fixed
/// order (the checkpoint and optimizer orders).
#[derive(Clone)]
pub struct OperatorModel {
    pub config: OperatorConfig,
    params: Vec<Param>,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

fn real_uniform_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> TensorData {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| uniform(rng, -scale, scale)).collect();
    TensorData::from_real(data, shape.to_vec()).expect("shape/data agree")
}

fn complex_uniform_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> TensorData {
    let n: usize = shape.iter().product();
    let data: Vec<Complex64> = (0..n)
        .map(|_| {
            let re = uniform(rng, -scale, scale);
            let im = uniform(rng, -scale, scale);
            Complex64::new(re, im)
        })
        .collect();
    TensorData::from_complex(data, shape.to_vec()).expect("shape/data agree")
}

/// Pole initialization: Re(mu) ~ U(-1, -0.05), Im(mu) ~ U(-1, 1) * pi N / T.
/// Negative real parts keep exp(mu t) bounded at the start of training.
fn pole_tensor(rng: &mut ChaCha8Rng, shape: &[usize], n_modes: usize, period: f64) -> TensorData {
    let n: usize = shape.iter().product();
    let im_scale = PI * n_modes as f64 / period;
    let data: Vec<Complex64> = (0..n)
        .map(|_| {
            let re = uniform(rng, -1.0, -0.05);
            let im = uniform(rng, -1.0, 1.0) * im_scale;
            Complex64::new(re, im)
        })
        .collect();
    TensorData::from_complex(data, shape.to_vec()).expect("shape/data agree")
}

impl OperatorModel {
    /// Deterministic construction from a seed: same config + seed gives
    /// bit-identical parameters.
    pub fn build(config: OperatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = config.width;
        let cin = config.lifted_in();
        let mut params = Vec::new();
        let push = |name: String, t: TensorData, params: &mut Vec<Param>| {
            params.push(Param {
                name,
                value: Arc::new(t),
            });
        };

        let lift_scale = 1.0 / (cin as f64).sqrt();
        push(
            "lift.weight".into(),
            real_uniform_tensor(&mut rng, &[cin, w], lift_scale),
            &mut params,
        );
        push(
            "lift.bias".into(),
            real_uniform_tensor(&mut rng, &[w], lift_scale),
            &mut params,
        );

        for layer in 0..config.layers {
            match (config.kind, config.modes.as_slice()) {
                (ModelKind::Lno, [n]) => {
                    let beta_scale = 1.0 / (w * n) as f64;
                    push(
                        format!("layer{layer}.poles"),
                        pole_tensor(&mut rng, &[w, w, *n], *n, config.periods[0]),
                        &mut params,
                    );
                    push(
                        format!("layer{layer}.residues"),
                        complex_uniform_tensor(&mut rng, &[w, w, *n], beta_scale),
                        &mut params,
                    );
                }
                (ModelKind::Lno, [n0, n1]) => {
                    let beta_scale = 1.0 / (w * n0 * n1) as f64;
                    push(
                        format!("layer{layer}.poles0"),
                        pole_tensor(&mut rng, &[w, w, *n0], *n0, config.periods[0]),
                        &mut params,
                    );
                    push(
                        format!("layer{layer}.poles1"),
                        pole_tensor(&mut rng, &[w, w, *n1], *n1, config.periods[1]),
                        &mut params,
                    );
                    push(
                        format!("layer{layer}.residues"),
                        complex_uniform_tensor(&mut rng, &[w, w, *n0, *n1], beta_scale),
                        &mut params,
                    );
                }
                (ModelKind::Fno, [m]) => {
                    let scale = 1.0 / (w * w) as f64;
                    push(
                        format!("layer{layer}.spectral"),
                        complex_uniform_tensor(&mut rng, &[w, w, *m], scale),
                        &mut params,
                    );
                }
                (ModelKind::Fno, [m0, m1]) => {
                    let scale = 1.0 / (w * w) as f64;
                    push(
                        format!("layer{layer}.spectral"),
                        complex_uniform_tensor(&mut rng, &[w, w, *m0, *m1], scale),
                        &mut params,
                    );
                }
                _ => unreachable!("validated rank"),
            }
            let bypass_scale = 1.0 / (w as f64).sqrt();
            push(
                format!("layer{layer}.bypass"),
                real_uniform_tensor(&mut rng, &[w, w], bypass_scale),
                &mut params,
            );
        }

        let proj_scale = 1.0 / (w as f64).sqrt();
        push(
            "proj.weight".into(),
            real_uniform_tensor(&mut rng, &[w, config.out_channels], proj_scale),
            &mut params,
        );
        push(
            "proj.bias".into(),
            real_uniform_tensor(&mut rng, &[config.out_channels], proj_scale),
            &mut params,
        );

        Ok(OperatorModel { config, params })
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Mutable access for the optimizer; clones on write only if a tape still
    /// holds the previous snapshot.
    pub fn params_mut(&mut self) -> impl Iterator<Item = (&str, &mut TensorData)> {
        self.params
            .iter_mut()
            .map(|p| (p.name.as_str(), Arc::make_mut(&mut p.value)))
    }

    pub fn set_param(&mut self, name: &str, value: TensorData) -> Result<()> {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))?;
        if p.value.shape() != value.shape() || p.value.dtype() != value.dtype() {
            return Err(Error::shape("set_param", format!("{name}: layout mismatch")));
        }
        p.value = Arc::new(value);
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Append normalized coordinate channels to a raw input batch.
    fn augment(&self, input: &TensorData) -> Result<TensorData> {
        let shape = input.shape();
        let rank = self.config.rank();
        if shape.len() != rank + 2 || shape[rank + 1] != self.config.in_channels {
            return Err(Error::shape(
                "model_forward",
                format!(
                    "input {:?} vs rank {} with {} channels",
                    shape, rank, self.config.in_channels
                ),
            ));
        }
        if !self.config.coord_channels {
            return Ok(input.clone());
        }
        let batch = shape[0];
        let grid: usize = shape[1..=rank].iter().product();
        let cin = self.config.in_channels;
        let cout = cin + rank;
        let src = input.real()?;
        let mut data = vec![0.0f64; batch * grid * cout];
        for b in 0..batch {
            for g in 0..grid {
                let dst = (b * grid + g) * cout;
                let from = (b * grid + g) * cin;
                data[dst..dst + cin].copy_from_slice(&src[from..from + cin]);
                match rank {
                    1 => {
                        data[dst + cin] = g as f64 / shape[1] as f64;
                    }
                    2 => {
                        let (l1,) = (shape[2],);
                        data[dst + cin] = (g / l1) as f64 / shape[1] as f64;
                        data[dst + cin + 1] = (g % l1) as f64 / l1 as f64;
                    }
                    _ => unreachable!(),
                }
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape[rank + 1] = cout;
        TensorData::from_real(data, out_shape)
    }

    /// Record the full forward pass on a tape; returns the output id.
    pub fn forward(&self, tape: &mut Tape, input: &TensorData) -> Result<TensorId> {
        self.config.validate()?;
        let aug = self.augment(input)?;
        let x = tape.leaf(aug, false);

        let lift_w = tape.parameter(self.param("lift.weight").expect("built").value.clone());
        let lift_b = tape.parameter(self.param("lift.bias").expect("built").value.clone());
        let mut v = tape.linear(x, lift_w, lift_b)?;

        for layer in 0..self.config.layers {
            let k = match (self.config.kind, self.config.modes.as_slice()) {
                (ModelKind::Lno, [_]) => {
                    let poles = tape.parameter(
                        self.param(&format!("layer{layer}.poles")).expect("built").value.clone(),
                    );
                    let residues = tape.parameter(
                        self.param(&format!("layer{layer}.residues"))
                            .expect("built")
                            .value
                            .clone(),
                    );
                    tape.laplace_1d(v, poles, residues, self.config.periods[0])?
                }
                (ModelKind::Lno, [_, _]) => {
                    let p0 = tape.parameter(
                        self.param(&format!("layer{layer}.poles0")).expect("built").value.clone(),
                    );
                    let p1 = tape.parameter(
                        self.param(&format!("layer{layer}.poles1")).expect("built").value.clone(),
                    );
                    let residues = tape.parameter(
                        self.param(&format!("layer{layer}.residues"))
                            .expect("built")
                            .value
                            .clone(),
                    );
                    tape.laplace_2d(
                        v,
                        p0,
                        p1,
                        residues,
                        (self.config.periods[0], self.config.periods[1]),
                    )?
                }
                (ModelKind::Fno, _) => {
                    let w = tape.parameter(
                        self.param(&format!("layer{layer}.spectral"))
                            .expect("built")
                            .value
                            .clone(),
                    );
                    match self.config.rank() {
                        1 => tape.spectral_conv_1d(v, w)?,
                        _ => tape.spectral_conv_2d(v, w)?,
                    }
                }
                _ => unreachable!("validated rank"),
            };
            let wmat = tape.parameter(
                self.param(&format!("layer{layer}.bypass")).expect("built").value.clone(),
            );
            let bypass = tape.matmul(v, wmat)?;
            let summed = tape.add(k, bypass)?;
            // No activation after the last Fourier block before projecting.
            let last = layer + 1 == self.config.layers;
            v = if self.config.kind == ModelKind::Fno && last {
                summed
            } else {
                tape.activation(summed, self.config.activation)?
            };
        }

        let proj_w = tape.parameter(self.param("proj.weight").expect("built").value.clone());
        let proj_b = tape.parameter(self.param("proj.bias").expect("built").value.clone());
        tape.linear(v, proj_w, proj_b)
    }

    /// Forward pass without gradient bookkeeping.
    pub fn forward_eval(&self, input: &TensorData) -> Result<TensorData> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, input)?;
        Ok(tape.value(out).clone())
    }

    // -- checkpoint container ------------------------------------------------

    /// Byte-stable checkpoint: magic, version, config JSON, then named flat
    /// little-endian f64 arrays (complex stored interleaved re, im).
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
        w.write_all(b"LNOC").map_err(io_err)?;
        w.write_all(&1u32.to_le_bytes()).map_err(io_err)?;
        let cfg = serde_json::to_vec(&self.config).expect("config serializes");
        w.write_all(&(cfg.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&cfg).map_err(io_err)?;
        w.write_all(&(self.params.len() as u32).to_le_bytes()).map_err(io_err)?;
        for p in &self.params {
            let name = p.name.as_bytes();
            w.write_all(&(name.len() as u16).to_le_bytes()).map_err(io_err)?;
            w.write_all(name).map_err(io_err)?;
            let t = p.value.as_ref();
            w.write_all(&[match t.dtype() {
                Dtype::Real => 0u8,
                Dtype::Complex => 1u8,
            }])
            .map_err(io_err)?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes()).map_err(io_err)?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
            }
            match t.dtype() {
                Dtype::Real => {
                    for &x in t.real()? {
                        w.write_all(&x.to_le_bytes()).map_err(io_err)?;
                    }
                }
                Dtype::Complex => {
                    for &z in t.complex()? {
                        w.write_all(&z.re.to_le_bytes()).map_err(io_err)?;
                        w.write_all(&z.im.to_le_bytes()).map_err(io_err)?;
                    }
                }
            }
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut r = BufReader::new(file);
        let pd = || path.display().to_string();
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, path)?;
        if &magic != b"LNOC" {
            return Err(Error::format(pd(), "bad magic (expected LNOC)"));
        }
        let version = read_u32(&mut r, path)?;
        if version != 1 {
            return Err(Error::format(pd(), format!("unsupported version {version}")));
        }
        let cfg_len = read_u32(&mut r, path)? as usize;
        if cfg_len > 1 << 20 {
            return Err(Error::format(pd(), "unreasonable config length"));
        }
        let mut cfg_buf = vec![0u8; cfg_len];
        read_exact(&mut r, &mut cfg_buf, path)?;
        let config: OperatorConfig = serde_json::from_slice(&cfg_buf)
            .map_err(|e| Error::format(pd(), format!("config json: {e}")))?;
        config.validate()?;
        let n_params = read_u32(&mut r, path)? as usize;
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let mut len_buf = [0u8; 2];
            read_exact(&mut r, &mut len_buf, path)?;
            let name_len = u16::from_le_bytes(len_buf) as usize;
            let mut name_buf = vec![0u8; name_len];
            read_exact(&mut r, &mut name_buf, path)?;
            let name = String::from_utf8(name_buf)
                .map_err(|_| Error::format(pd(), "parameter name not UTF-8"))?;
            let mut dt = [0u8; 1];
            read_exact(&mut r, &mut dt, path)?;
            let rank = read_u32(&mut r, path)? as usize;
            if rank > 8 {
                return Err(Error::format(pd(), "unreasonable tensor rank"));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u32(&mut r, path)? as usize);
            }
            let numel: usize = shape.iter().product();
            let value = match dt[0] {
                0 => {
                    let mut data = vec![0.0f64; numel];
                    for slot in data.iter_mut() {
                        *slot = read_f64(&mut r, path)?;
                    }
                    TensorData::from_real(data, shape)?
                }
                1 => {
                    let mut data = vec![Complex64::default(); numel];
                    for slot in data.iter_mut() {
                        let re = read_f64(&mut r, path)?;
                        let im = read_f64(&mut r, path)?;
                        *slot = Complex64::new(re, im);
                    }
                    TensorData::from_complex(data, shape)?
                }
                other => return Err(Error::format(pd(), format!("unknown dtype tag {other}"))),
            };
            if !value.is_finite() {
                return Err(Error::format(pd(), format!("parameter {name} is not finite")));
            }
            params.push(Param {
                name,
                value: Arc::new(value),
            });
        }
        let model = OperatorModel { config, params };
        let rebuilt = OperatorModel::build(model.config.clone(), 0)?;
        if rebuilt.params.len() != model.params.len()
            || rebuilt
                .params
                .iter()
                .zip(&model.params)
                .any(|(a, b)| a.name != b.name || a.value.shape() != b.value.shape())
        {
            return Err(Error::format(pd(), "parameter layout does not match config"));
        }
        Ok(model)
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::format(path.display().to_string(), format!("truncated file: {e}")))
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, path)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read, path: &Path) -> Result<f64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, path)?;
    Ok(f64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn duffing_lno_config() -> OperatorConfig {
        OperatorConfig {
            kind: ModelKind::Lno,
            layers: 1,
            width: 4,
            modes: vec![16],
            activation: Activation::Sin,
            in_channels: 1,
            out_channels: 1,
            coord_channels: true,
            periods: vec![20.48],
        }
    }

    #[test]
    fn duffing_parameter_count_matches_hand_count() {
        // lift (1+1 coord -> 4): 2*4 + 4 = 12; poles/residues 4*4*16 each =
        // 512; bypass 4*4 = 16; proj 4 + 1 = 5. Total 545.
        let cfg = duffing_lno_config();
        assert_eq!(cfg.parameter_count(), 545);
        let model = OperatorModel::build(cfg, 3).unwrap();
        assert_eq!(model.parameter_count(), 545);
    }

    #[test]
    fn build_is_deterministic() {
        let a = OperatorModel::build(duffing_lno_config(), 9).unwrap();
        let b = OperatorModel::build(duffing_lno_config(), 9).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert_eq!(pa.name, pb.name);
            assert_eq!(pa.value.as_ref(), pb.value.as_ref());
        }
        let c = OperatorModel::build(duffing_lno_config(), 10).unwrap();
        assert_ne!(
            a.params()[0].value.real().unwrap(),
            c.params()[0].value.real().unwrap()
        );
    }

    #[test]
    fn poles_start_stable() {
        let model = OperatorModel::build(duffing_lno_config(), 4).unwrap();
        let poles = model.param("layer0.poles").unwrap().value.complex().unwrap().to_vec();
        assert!(poles.iter().all(|p| p.re < 0.0));
    }

    #[test]
    fn minimal_model_builds_and_runs() {
        let cfg = OperatorConfig {
            kind: ModelKind::Lno,
            layers: 1,
            width: 1,
            modes: vec![1],
            activation: Activation::Tanh,
            in_channels: 1,
            out_channels: 1,
            coord_channels: true,
            periods: vec![1.0],
        };
        let model = OperatorModel::build(cfg, 0).unwrap();
        let input = TensorData::from_real((0..8).map(|x| x as f64 * 0.1).collect(), vec![1, 8, 1]).unwrap();
        let out = model.forward_eval(&input).unwrap();
        assert_eq!(out.shape(), &[1, 8, 1]);
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_output_for_odd_activations() {
        for kind in [ModelKind::Lno, ModelKind::Fno] {
            let cfg = OperatorConfig {
                kind,
                layers: if kind == ModelKind::Lno { 1 } else { 4 },
                width: 3,
                modes: vec![2],
                activation: Activation::Sin,
                in_channels: 1,
                out_channels: 1,
                coord_channels: false,
                periods: vec![2.0],
            };
            let mut model = OperatorModel::build(cfg, 5).unwrap();
            let zero_b = TensorData::zeros(&[3], Dtype::Real);
            model.set_param("lift.bias", zero_b).unwrap();
            model
                .set_param("proj.bias", TensorData::zeros(&[1], Dtype::Real))
                .unwrap();
            let input = TensorData::zeros(&[2, 8, 1], Dtype::Real);
            let out = model.forward_eval(&input).unwrap();
            assert!(out.real().unwrap().iter().all(|&x| x == 0.0), "{kind}");
        }
    }

    #[test]
    fn forward_shape_contract_duffing_grid() {
        let model = OperatorModel::build(duffing_lno_config(), 2).unwrap();
        let input = TensorData::from_real(
            (0..2 * 2048).map(|k| (k as f64 * 0.01).sin()).collect(),
            vec![2, 2048, 1],
        )
        .unwrap();
        let out = model.forward_eval(&input).unwrap();
        assert_eq!(out.shape(), &[2, 2048, 1]);
    }

    #[test]
    fn fno_layer_count_enforced() {
        let mut cfg = duffing_lno_config();
        cfg.kind = ModelKind::Fno;
        assert!(matches!(
            OperatorModel::build(cfg, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_grid_rank_for_case_errors() {
        // 2D modes fed a 1D input.
        let cfg = OperatorConfig {
            kind: ModelKind::Lno,
            layers: 1,
            width: 2,
            modes: vec![2, 2],
            activation: Activation::Sin,
            in_channels: 1,
            out_channels: 1,
            coord_channels: true,
            periods: vec![1.0, 1.0],
        };
        let model = OperatorModel::build(cfg, 0).unwrap();
        let input = TensorData::zeros(&[1, 8, 1], Dtype::Real);
        assert!(model.forward_eval(&input).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.lnoc");
        let model = OperatorModel::build(duffing_lno_config(), 11).unwrap();
        model.save(&path).unwrap();
        let loaded = OperatorModel::load(&path).unwrap();
        assert_eq!(loaded.config, model.config);
        for (a, b) in model.params().iter().zip(loaded.params()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.as_ref(), b.value.as_ref());
        }
        // Byte-stability: saving twice gives identical bytes.
        let path2 = dir.path().join("model2.lnoc");
        loaded.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn corrupt_checkpoint_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.lnoc");
        let model = OperatorModel::build(duffing_lno_config(), 1).unwrap();
        model.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            OperatorModel::load(&path),
            Err(Error::Format { .. })
        ));
        // Truncation detected too.
        let model2 = OperatorModel::build(duffing_lno_config(), 1).unwrap();
        model2.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            OperatorModel::load(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn full_model_gradients_match_finite_differences() {
        // Small instances of both kinds; perturb a handful of entries in
        // every trainable tensor.
        for kind in [ModelKind::Lno, ModelKind::Fno] {
            let cfg = OperatorConfig {
                kind,
                layers: if kind == ModelKind::Lno { 1 } else { 4 },
                width: 2,
                modes: vec![2],
                activation: Activation::Sin,
                in_channels: 1,
                out_channels: 1,
                coord_channels: true,
                periods: vec![1.3],
            };
            let model = OperatorModel::build(cfg, 21).unwrap();
            let input = TensorData::from_real(
                (0..16).map(|k| (0.9 * k as f64).sin()).collect(),
                vec![2, 8, 1],
            )
            .unwrap();
            let target = TensorData::from_real(
                (0..16).map(|k| (0.4 * k as f64).cos()).collect(),
                vec![2, 8, 1],
            )
            .unwrap();

            let loss_of = |m: &OperatorModel| -> f64 {
                let mut tape = Tape::new();
                let out = m.forward(&mut tape, &input).unwrap();
                let loss = tape.mean_relative_l2(out, &target).unwrap();
                tape.value(loss).scalar_value().unwrap()
            };

            // Reference gradients.
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, &input).unwrap();
            let loss = tape.mean_relative_l2(out, &target).unwrap();
            tape.backward(loss).unwrap();
            // Parameter leaves appear on the tape in forward order; map them
            // back to names by shape+value identity.
            let mut grads = Vec::new();
            for p in model.params() {
                let mut found = None;
                for id in 0..tape.len() {
                    let tid = crate::tensor::TensorId(id);
                    if tape.value(tid) as *const _ == p.value.as_ref() as *const _ {
                        found = Some(tape.grad(tid).expect("param grad").clone());
                        break;
                    }
                }
                grads.push((p.name.clone(), found.expect("param on tape")));
            }

            let h = 1e-6;
            for (name, grad) in &grads {
                let base = model.param(name).unwrap().value.as_ref().clone();
                let n = base.numel();
                for idx in (0..n).step_by((n / 3).max(1)) {
                    let parts: &[usize] = match base.dtype() {
                        Dtype::Real => &[0],
                        Dtype::Complex => &[0, 1],
                    };
                    for &part in parts {
                        let mut up = base.clone();
                        let mut dn = base.clone();
                        match base.dtype() {
                            Dtype::Real => {
                                up.real_mut().unwrap()[idx] += h;
                                dn.real_mut().unwrap()[idx] -= h;
                            }
                            Dtype::Complex => {
                                if part == 0 {
                                    up.complex_mut().unwrap()[idx].re += h;
                                    dn.complex_mut().unwrap()[idx].re -= h;
                                } else {
                                    up.complex_mut().unwrap()[idx].im += h;
                                    dn.complex_mut().unwrap()[idx].im -= h;
                                }
                            }
                        }
                        let mut mu = model.clone();
                        mu.set_param(name, up).unwrap();
                        let mut md = model.clone();
                        md.set_param(name, dn).unwrap();
                        let fd = (loss_of(&mu) - loss_of(&md)) / (2.0 * h);
                        let ad = match grad.dtype() {
                            Dtype::Real => grad.real().unwrap()[idx],
                            Dtype::Complex => {
                                if part == 0 {
                                    grad.complex().unwrap()[idx].re
                                } else {
                                    grad.complex().unwrap()[idx].im
                                }
                            }
                        };
                        let rel = (ad - fd).abs() / fd.abs().max(1e-8);
                        assert!(rel <= 1e-5, "{kind} {name}[{idx}].{part}: ad={ad} fd={fd}");
                    }
                }
            }
        }
    }
}
