use lno::data::{Case, Scenario};
use lno::model::{ModelKind, OperatorModel};
use lno::tensor::{Tape, TensorData};
use lno::train::model_preset;
use std::time::Instant;

fn bench(label: &str, case: Case, scenario: Scenario, kind: ModelKind, width: Option<usize>, b: usize) {
    let mut cfg = model_preset(case, scenario, kind);
    if let Some(w) = width {
        cfg.width = w;
    }
    let model = OperatorModel::build(cfg.clone(), 0).unwrap();
    let grid: usize = match cfg.modes.len() {
        1 => 2048,
        _ => {
            if case == Case::Beam { 51 * 17 } else if case == Case::Diffusion { 25 * 80 } else { 20 * 40 }
        }
    };
    let shape: Vec<usize> = match cfg.modes.len() {
        1 => vec![b, 2048, 1],
        _ => {
            if case == Case::Beam { vec![b, 51, 17, 1] } else if case == Case::Diffusion { vec![b, 25, 80, 1] } else { vec![b, 20, 40, 1] }
        }
    };
    let input = TensorData::from_real((0..b * grid).map(|k| (0.1 * k as f64).sin()).collect(), shape).unwrap();
    let target = input.clone();
    let reps = 2;
    let t0 = Instant::now();
    for _ in 0..reps {
        let mut tape = Tape::new();
        let _ = model.forward(&mut tape, &input).unwrap();
    }
    let fwd = t0.elapsed().as_secs_f64() / reps as f64;
    let t0 = Instant::now();
    for _ in 0..reps {
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &input).unwrap();
        let loss = tape.mean_relative_l2(out, &target).unwrap();
        tape.backward(loss).unwrap();
    }
    let step = t0.elapsed().as_secs_f64() / reps as f64;
    println!("{label:34} fwd {fwd:7.3}s  step {step:7.3}s");
}

fn main() {
    bench("duffing LNO w4 (table)", Case::Duffing, Scenario::C0, ModelKind::Lno, None, 20);
    bench("duffing FNO w16", Case::Duffing, Scenario::C0, ModelKind::Fno, Some(16), 20);
    bench("duffing FNO w32", Case::Duffing, Scenario::C0, ModelKind::Fno, Some(32), 20);
    bench("beam LNO w16 (table)", Case::Beam, Scenario::Base, ModelKind::Lno, None, 50);
    bench("beam FNO w16", Case::Beam, Scenario::Base, ModelKind::Fno, Some(16), 50);
    bench("diffusion LNO w16 (table)", Case::Diffusion, Scenario::Base, ModelKind::Lno, None, 50);
    bench("diffusion FNO w16", Case::Diffusion, Scenario::Base, ModelKind::Fno, Some(16), 50);
}
