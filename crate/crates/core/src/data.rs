//! Benchmark dataset generation: three forced ODE families solved with the
//! adaptive integrator, three PDE families emitted from closed-form
//! forcing/solution pairs, plus a little-endian container format and CSV
//! export.
//!
//! Every case emits 200 training, 50 validation, and 130 test samples.
//! Training forcings sweep the amplitude A over {0.05, 0.10, ..., 10.00};
//! validation/test amplitudes are 180 evenly spaced values over the stated
//! range, split 50/130 by a fixed-seed shuffle and sorted ascending within
//! each split.

use crate::error::{Error, Result};
use crate::ode::rk45;
use crate::tensor::TensorData;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Fixed seed of the validation/test amplitude shuffle.
const SPLIT_SHUFFLE_SEED: u64 = 7;
/// Integration tolerances for the ODE benchmarks.
const ODE_RTOL: f64 = 1e-8;
const ODE_ATOL: f64 = 1e-8;

macro_rules! fmt_via_serde {
    () => {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            let s = serde_json::to_string(self).expect("plain enum");
            f.write_str(s.trim_matches('"'))
        }
    };
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum Case {
    Duffing,
    Pendulum,
    Lorenz,
    Beam,
    Diffusion,
    ReactionDiffusion,
}

impl Case {
    pub const ALL: [Case; 6] = [
        Case::Duffing,
        Case::Pendulum,
        Case::Lorenz,
        Case::Beam,
        Case::Diffusion,
        Case::ReactionDiffusion,
    ];

    pub fn valid_scenarios(self) -> &'static [Scenario] {
        match self {
            Case::Duffing | Case::Pendulum => &[Scenario::C0, Scenario::C05],
            Case::Lorenz => &[Scenario::Rho5, Scenario::Rho10],
            _ => &[Scenario::Base],
        }
    }
}

impl std::str::FromStr for Case {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "duffing" => Ok(Case::Duffing),
            "pendulum" => Ok(Case::Pendulum),
            "lorenz" => Ok(Case::Lorenz),
            "beam" => Ok(Case::Beam),
            "diffusion" => Ok(Case::Diffusion),
            "reaction-diffusion" => Ok(Case::ReactionDiffusion),
            other => Err(Error::UnknownOption {
                what: "case",
                value: other.into(),
                valid: "duffing, pendulum, lorenz, beam, diffusion, reaction-diffusion",
            }),
        }
    }
}

impl std::fmt::Display for Case {
    fmt_via_serde!();
}

/// Per-case scenario: damping levels for the oscillators, Rayleigh numbers
/// for the Lorenz system, a single base scenario for the PDEs.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    C0,
    C05,
    Rho5,
    Rho10,
    Base,
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c0" => Ok(Scenario::C0),
            "c05" => Ok(Scenario::C05),
            "rho5" => Ok(Scenario::Rho5),
            "rho10" => Ok(Scenario::Rho10),
            "base" => Ok(Scenario::Base),
            other => Err(Error::UnknownOption {
                what: "scenario",
                value: other.into(),
                valid: "c0, c05, rho5, rho10, base",
            }),
        }
    }
}

impl std::fmt::Display for Scenario {
    fmt_via_serde!();
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Vali,
    Test,
}

impl Split {
    pub fn sample_count(self) -> usize {
        match self {
            Split::Train => 200,
            Split::Vali => 50,
            Split::Test => 130,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "vali" => Ok(Split::Vali),
            "test" => Ok(Split::Test),
            other => Err(Error::UnknownOption {
                what: "split",
                value: other.into(),
                valid: "train, vali, test",
            }),
        }
    }
}

impl std::fmt::Display for Split {
    fmt_via_serde!();
}

/// Per-sample grid layout: extents (e.g. [2048] or [51, 17] as [time, space])
/// and the matching spacings (dt, dx).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub extents: Vec<usize>,
    pub spacings: Vec<f64>,
}

impl GridSpec {
    pub fn points(&self) -> usize {
        self.extents.iter().product()
    }

    /// Physical span per axis (extent * spacing), the periods fed to models.
    pub fn periods(&self) -> Vec<f64> {
        self.extents
            .iter()
            .zip(&self.spacings)
            .map(|(&n, &d)| n as f64 * d)
            .collect()
    }
}

/// Input/output sample pairs on a fixed grid with split metadata.
#[derive(Clone, Debug)]
pub struct TimeSeriesDataset {
    pub case: Case,
    pub scenario: Scenario,
    pub split: Split,
    pub grid: GridSpec,
    pub amplitudes: Vec<f64>,
    /// Flat [n_samples][grid points].
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    case: Case,
    scenario: Scenario,
    split: Split,
    amplitudes: Vec<f64>,
}

impl TimeSeriesDataset {
    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn sample_input(&self, idx: usize) -> &[f64] {
        let n = self.grid.points();
        &self.inputs[idx * n..(idx + 1) * n]
    }

    pub fn sample_output(&self, idx: usize) -> &[f64] {
        let n = self.grid.points();
        &self.outputs[idx * n..(idx + 1) * n]
    }

    fn batch_tensor(&self, from: &[f64], indices: &[usize]) -> TensorData {
        let n = self.grid.points();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(&from[i * n..(i + 1) * n]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.grid.extents);
        shape.push(1);
        TensorData::from_real(data, shape).expect("consistent grid")
    }

    /// Gather samples into a [batch, grid..., 1] tensor.
    pub fn input_batch(&self, indices: &[usize]) -> TensorData {
        self.batch_tensor(&self.inputs, indices)
    }

    pub fn output_batch(&self, indices: &[usize]) -> TensorData {
        self.batch_tensor(&self.outputs, indices)
    }

    fn validate(&self) -> Result<()> {
        let n = self.grid.points() * self.amplitudes.len();
        if self.inputs.len() != n || self.outputs.len() != n {
            return Err(Error::shape(
                "dataset",
                format!(
                    "expected {n} values, got {}/{}",
                    self.inputs.len(),
                    self.outputs.len()
                ),
            ));
        }
        if self.grid.extents.len() != self.grid.spacings.len() {
            return Err(Error::shape("dataset", "grid extents/spacings disagree"));
        }
        if self.inputs.iter().chain(&self.outputs).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: "dataset",
                detail: "dataset contains NaN/Inf".into(),
            });
        }
        if self.amplitudes.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::contract("dataset", "amplitudes must be sorted ascending"));
        }
        Ok(())
    }

    // -- container format ---------------------------------------------------

    /// Little-endian container: magic "LNOD", u32 version = 1, u32 rank,
    /// u32 extents[rank], u32 sample count, f64 spacings[rank], u32 metadata
    /// length + UTF-8 JSON metadata, then contiguous f64 inputs and outputs.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
        w.write_all(b"LNOD").map_err(io_err)?;
        w.write_all(&1u32.to_le_bytes()).map_err(io_err)?;
        w.write_all(&(self.grid.extents.len() as u32).to_le_bytes()).map_err(io_err)?;
        for &e in &self.grid.extents {
            w.write_all(&(e as u32).to_le_bytes()).map_err(io_err)?;
        }
        w.write_all(&(self.amplitudes.len() as u32).to_le_bytes()).map_err(io_err)?;
        for &s in &self.grid.spacings {
            w.write_all(&s.to_le_bytes()).map_err(io_err)?;
        }
        let meta = serde_json::to_vec(&Metadata {
            case: self.case,
            scenario: self.scenario,
            split: self.split,
            amplitudes: self.amplitudes.clone(),
        })
        .expect("metadata serializes");
        w.write_all(&(meta.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&meta).map_err(io_err)?;
        for &x in self.inputs.iter().chain(&self.outputs) {
            w.write_all(&x.to_le_bytes()).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut r = BufReader::new(file);
        let pd = || path.display().to_string();
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, path)?;
        if &magic != b"LNOD" {
            return Err(Error::format(pd(), "bad magic (expected LNOD)"));
        }
        let version = read_u32(&mut r, path)?;
        if version != 1 {
            return Err(Error::format(pd(), format!("unsupported version {version}")));
        }
        let rank = read_u32(&mut r, path)? as usize;
        if rank == 0 || rank > 2 {
            return Err(Error::format(pd(), format!("unsupported rank {rank}")));
        }
        let mut extents = Vec::with_capacity(rank);
        for _ in 0..rank {
            extents.push(read_u32(&mut r, path)? as usize);
        }
        let n_samples = read_u32(&mut r, path)? as usize;
        let mut spacings = Vec::with_capacity(rank);
        for _ in 0..rank {
            spacings.push(read_f64(&mut r, path)?);
        }
        let meta_len = read_u32(&mut r, path)? as usize;
        if meta_len > 1 << 24 {
            return Err(Error::format(pd(), "unreasonable metadata length"));
        }
        let mut meta_buf = vec![0u8; meta_len];
        read_exact(&mut r, &mut meta_buf, path)?;
        let meta: Metadata = serde_json::from_slice(&meta_buf)
            .map_err(|e| Error::format(pd(), format!("metadata json: {e}")))?;
        if meta.amplitudes.len() != n_samples {
            return Err(Error::format(
                pd(),
                format!(
                    "header sample count {n_samples} vs {} amplitudes",
                    meta.amplitudes.len()
                ),
            ));
        }
        let grid = GridSpec { extents, spacings };
        let n = grid.points() * n_samples;
        let mut payload = vec![0.0f64; 2 * n];
        for slot in payload.iter_mut() {
            *slot = read_f64(&mut r, path)?;
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(|e| Error::io(pd(), e))? != 0 {
            return Err(Error::format(pd(), "trailing bytes after payload"));
        }
        let outputs = payload.split_off(n);
        let ds = TimeSeriesDataset {
            case: meta.case,
            scenario: meta.scenario,
            split: meta.split,
            grid,
            amplitudes: meta.amplitudes,
            inputs: payload,
            outputs,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Dump one sample as CSV for inspection (t[,x], input, output columns).
    pub fn export_csv(&self, idx: usize, path: &Path) -> Result<()> {
        if idx >= self.len() {
            return Err(Error::contract("export_csv", format!("sample {idx} out of range")));
        }
        let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
        let input = self.sample_input(idx);
        let output = self.sample_output(idx);
        match self.grid.extents.as_slice() {
            [l] => {
                writeln!(w, "t,input,output").map_err(io_err)?;
                for k in 0..*l {
                    writeln!(
                        w,
                        "{:.17e},{:.17e},{:.17e}",
                        k as f64 * self.grid.spacings[0],
                        input[k],
                        output[k]
                    )
                    .map_err(io_err)?;
                }
            }
            [l0, l1] => {
                writeln!(w, "t,x,input,output").map_err(io_err)?;
                for k0 in 0..*l0 {
                    for k1 in 0..*l1 {
                        writeln!(
                            w,
                            "{:.17e},{:.17e},{:.17e},{:.17e}",
                            k0 as f64 * self.grid.spacings[0],
                            k1 as f64 * self.grid.spacings[1],
                            input[k0 * l1 + k1],
                            output[k0 * l1 + k1]
                        )
                        .map_err(io_err)?;
                    }
                }
            }
            _ => return Err(Error::contract("export_csv", "unsupported rank")),
        }
        w.flush().map_err(io_err)
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

// ---------------------------------------------------------------------------
// amplitude families
// ---------------------------------------------------------------------------

/// Training amplitudes 0.05, 0.10, ..., 10.00.
fn train_amplitudes() -> Vec<f64> {
    (1..=200).map(|k| k as f64 * 0.05).collect()
}

/// 180 evenly spaced amplitudes over [lo, hi], shuffled with a fixed seed and
/// split into 50 validation + 130 test, each sorted ascending.
fn vali_test_amplitudes(lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let n = 180;
    let all: Vec<f64> = (0..n)
        .map(|i| lo + i as f64 * (hi - lo) / (n - 1) as f64)
        .collect();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SPLIT_SHUFFLE_SEED);
    idx.shuffle(&mut rng);
    let mut vali: Vec<f64> = idx[..50].iter().map(|&i| all[i]).collect();
    let mut test: Vec<f64> = idx[50..].iter().map(|&i| all[i]).collect();
    vali.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    test.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    (vali, test)
}

fn amplitudes_for(case: Case, split: Split) -> Vec<f64> {
    match split {
        Split::Train => train_amplitudes(),
        _ => {
            let (lo, hi) = match case {
                Case::Beam | Case::Diffusion => (1.24, 10.19),
                _ => (0.14, 9.09),
            };
            let (vali, test) = vali_test_amplitudes(lo, hi);
            match split {
                Split::Vali => vali,
                Split::Test => test,
                Split::Train => unreachable!(),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// forcing families and generators
// ---------------------------------------------------------------------------

/// ODE forcing: A sin(5t) for training, A exp(-0.05 t) sin(5t) otherwise.
fn ode_forcing(split: Split, amplitude: f64) -> impl Fn(f64) -> f64 + Copy {
    let decay = if split == Split::Train { 0.0 } else { 0.05 };
    move |t: f64| amplitude * (-decay * t).exp() * (5.0 * t).sin()
}

const ODE_GRID: (usize, f64) = (2048, 0.01);

fn ode_grid() -> Vec<f64> {
    (0..ODE_GRID.0).map(|k| k as f64 * ODE_GRID.1).collect()
}

/// Generate any case/scenario/split combination.
pub fn generate(case: Case, scenario: Scenario, split: Split) -> Result<TimeSeriesDataset> {
    if !case.valid_scenarios().contains(&scenario) {
        return Err(Error::Config(format!(
            "scenario {scenario} is not valid for case {case} (valid: {})",
            case.valid_scenarios()
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    match case {
        Case::Duffing => gen_duffing(scenario, split),
        Case::Pendulum => gen_pendulum(scenario, split),
        Case::Lorenz => gen_lorenz(scenario, split),
        Case::Beam => gen_beam(split),
        Case::Diffusion => gen_diffusion(split),
        Case::ReactionDiffusion => gen_reaction_diffusion(split),
    }
}

/// Shared driver for the three ODE cases: integrate one second-order (or
/// third-order) system per amplitude and record the observed coordinate.
fn gen_ode<F>(
    case: Case,
    scenario: Scenario,
    split: Split,
    y0: Vec<f64>,
    observe: usize,
    rhs_for: F,
) -> Result<TimeSeriesDataset>
where
    F: Fn(f64, &dyn Fn(f64) -> f64, &[f64], &mut [f64]) + Sync,
{
    let amplitudes = amplitudes_for(case, split);
    let grid = ode_grid();
    let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = amplitudes
        .par_iter()
        .enumerate()
        .map(|(sample_idx, &a)| {
            let forcing = ode_forcing(split, a);
            let sol = rk45(
                |t, y, dy| rhs_for(t, &forcing, y, dy),
                &y0,
                &grid,
                ODE_RTOL,
                ODE_ATOL,
            )
            .map_err(|e| match e {
                Error::Integration { t, detail } => Error::Integration {
                    t,
                    detail: format!("sample {sample_idx} (A = {a}): {detail}"),
                },
                other => other,
            })?;
            let input: Vec<f64> = grid.iter().map(|&t| forcing(t)).collect();
            let output: Vec<f64> = sol.states.iter().map(|s| s[observe]).collect();
            Ok((input, output))
        })
        .collect();

    let n = grid.len();
    let mut inputs = Vec::with_capacity(amplitudes.len() * n);
    let mut outputs = Vec::with_capacity(amplitudes.len() * n);
    for r in results {
        let (i, o) = r?;
        inputs.extend(i);
        outputs.extend(o);
    }
    let ds = TimeSeriesDataset {
        case,
        scenario,
        split,
        grid: GridSpec {
            extents: vec![ODE_GRID.0],
            spacings: vec![ODE_GRID.1],
        },
        amplitudes,
        inputs,
        outputs,
    };
    ds.validate()?;
    Ok(ds)
}

/// Forced oscillator with cubic elasticity: x'' + c x' + x + x^3 = f(t),
/// zero initial conditions; output x(t).
pub fn gen_duffing(scenario: Scenario, split: Split) -> Result<TimeSeriesDataset> {
    let c = if scenario == Scenario::C05 { 0.5 } else { 0.0 };
    gen_ode(
        Case::Duffing,
        scenario,
        split,
        vec![0.0, 0.0],
        0,
        move |t, f, y, dy| {
            dy[0] = y[1];
            dy[1] = f(t) - c * y[1] - y[0] - y[0] * y[0] * y[0];
        },
    )
}

/// Driven gravity pendulum: x'' + c x' + sin(x) = f(t), zero initial
/// conditions; output x(t).
pub fn gen_pendulum(scenario: Scenario, split: Split) -> Result<TimeSeriesDataset> {
    let c = if scenario == Scenario::C05 { 0.5 } else { 0.0 };
    gen_ode(
        Case::Pendulum,
        scenario,
        split,
        vec![0.0, 0.0],
        0,
        move |t, f, y, dy| {
            dy[0] = y[1];
            dy[1] = f(t) - c * y[1] - y[0].sin();
        },
    )
}

/// Forced convection system (sigma = 10, beta = 8/3), forcing entering the
/// third equation: z' = x y - beta z - f(t); ICs (1, 0, 0); output x(t).
pub fn gen_lorenz(scenario: Scenario, split: Split) -> Result<TimeSeriesDataset> {
    let rho = if scenario == Scenario::Rho10 { 10.0 } else { 5.0 };
    let (sigma, beta) = (10.0, 8.0 / 3.0);
    gen_ode(
        Case::Lorenz,
        scenario,
        split,
        vec![1.0, 0.0, 0.0],
        0,
        move |t, f, y, dy| {
            dy[0] = sigma * (y[1] - y[0]);
            dy[1] = y[0] * (rho - y[2]) - y[1];
            dy[2] = y[0] * y[1] - beta * y[2] - f(t);
        },
    )
}

/// Shared driver for the closed-form PDE pairs on a [time][space] grid.
fn gen_pde(
    case: Case,
    split: Split,
    extents: [usize; 2],
    spacings: [f64; 2],
    pair: impl Fn(f64, f64, f64) -> (f64, f64),
) -> Result<TimeSeriesDataset> {
    let amplitudes = amplitudes_for(case, split);
    let (lt, lx) = (extents[0], extents[1]);
    let n = lt * lx;
    let mut inputs = Vec::with_capacity(amplitudes.len() * n);
    let mut outputs = Vec::with_capacity(amplitudes.len() * n);
    for &a in &amplitudes {
        for kt in 0..lt {
            let t = kt as f64 * spacings[0];
            for kx in 0..lx {
                let x = kx as f64 * spacings[1];
                let (f, y) = pair(a, t, x);
                inputs.push(f);
                outputs.push(y);
            }
        }
    }
    let ds = TimeSeriesDataset {
        case,
        scenario: Scenario::Base,
        split,
        grid: GridSpec {
            extents: extents.to_vec(),
            spacings: spacings.to_vec(),
        },
        amplitudes,
        inputs,
        outputs,
    };
    ds.validate()?;
    Ok(ds)
}

/// Transverse beam deflection pairs on a 51 x 17 grid (dt = 0.02, dx = 0.1):
/// train f = A e^{-0.05x} (1 - 10^2) sin(10 t), y = A e^{-0.05x} sin(10 t);
/// test decay e^{-x}. Emitted verbatim from the closed forms.
pub fn gen_beam(split: Split) -> Result<TimeSeriesDataset> {
    let decay = if split == Split::Train { 0.05 } else { 1.0 };
    gen_pde(
        Case::Beam,
        split,
        [51, 17],
        [0.02, 0.1],
        move |a, t, x| {
            let envelope = a * (-decay * x).exp();
            let f = envelope * (1.0 - 100.0) * (10.0 * t).sin();
            let y = envelope * (10.0 * t).sin();
            (f, y)
        },
    )
}

/// Heat-equation pairs on a 25 x 80 grid (dt = 0.02, dx = 0.05):
/// train f = A e^{-0.05t} (1 - pi^2) sin(pi x), y = A e^{-0.05t} sin(pi x);
/// test decay e^{-t}.
pub fn gen_diffusion(split: Split) -> Result<TimeSeriesDataset> {
    let decay = if split == Split::Train { 0.05 } else { 1.0 };
    gen_pde(
        Case::Diffusion,
        split,
        [25, 80],
        [0.02, 0.05],
        move |a, t, x| {
            let envelope = a * (-decay * t).exp();
            let f = envelope * (1.0 - PI * PI) * (PI * x).sin();
            let y = envelope * (PI * x).sin();
            (f, y)
        },
    )
}

/// Reaction-diffusion pairs on a 20 x 40 grid (dt = 0.0526, dx = 0.0513):
/// f = A e^{-dt} (1 - pi^2) sin(pi x) + A^2 e^{-2dt} sin^2(pi x) with decay
/// d = 0.05 (train) or 1 (test); y = A e^{-dt} sin(pi x).
pub fn gen_reaction_diffusion(split: Split) -> Result<TimeSeriesDataset> {
    let decay = if split == Split::Train { 0.05 } else { 1.0 };
    gen_pde(
        Case::ReactionDiffusion,
        split,
        [20, 40],
        [0.0526, 0.0513],
        move |a, t, x| {
            let s = (PI * x).sin();
            let lin = a * (-decay * t).exp() * s;
            let quad = a * a * (-2.0 * decay * t).exp() * s * s;
            let f = (1.0 - PI * PI) * lin + quad;
            (f, lin)
        },
    )
}
