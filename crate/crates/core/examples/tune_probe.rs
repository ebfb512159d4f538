use lno::data::{gen_duffing, Scenario, Split, TimeSeriesDataset};
use lno::model::{ModelKind, OperatorModel};
use lno::train::{model_preset, train, train_preset};
use lno::data::Case;

fn scale_inputs(ds: &TimeSeriesDataset, s: f64) -> TimeSeriesDataset {
    let mut out = ds.clone();
    for v in out.inputs.iter_mut() {
        *v *= s;
    }
    out
}

fn run(label: &str, scale_inputs_by: Option<f64>, epochs: usize, act: Option<&str>) {
    let train_ds = gen_duffing(Scenario::C0, Split::Train).unwrap();
    let vali_ds = gen_duffing(Scenario::C0, Split::Vali).unwrap();
    let test_ds = gen_duffing(Scenario::C0, Split::Test).unwrap();
    let (train_ds, vali_ds, test_ds) = if let Some(s) = scale_inputs_by {
        // dataset-level input scaling: divide by train-input std
        let n = train_ds.inputs.len() as f64;
        let mean = train_ds.inputs.iter().sum::<f64>() / n;
        let var = train_ds.inputs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let k = s / var.sqrt();
        eprintln!("{label}: input scale {k:.4}");
        (scale_inputs(&train_ds, k), scale_inputs(&vali_ds, k), scale_inputs(&test_ds, k))
    } else {
        (train_ds, vali_ds, test_ds)
    };
    let mut cfg = model_preset(Case::Duffing, Scenario::C0, ModelKind::Lno);
    if let Some(a) = act {
        cfg.activation = a.parse().unwrap();
    }
    let mut tc = train_preset(Case::Duffing, Scenario::C0, ModelKind::Lno);
    tc.epochs = epochs;
    tc.seed = 0;
    let mut model = OperatorModel::build(cfg, 0).unwrap();
    let r = train(&mut model, &train_ds, &vali_ds, &test_ds, &tc).unwrap();
    println!(
        "{label:24} e1 {:.4}  e20 {:.4}  e{} {:.4}  val_last {:.4}  test {:.4}",
        r.train_loss[0],
        r.train_loss[19.min(epochs - 1)],
        epochs,
        r.train_loss[epochs - 1],
        r.val_rel_l2[epochs - 1],
        r.test_mean
    );
}

fn main() {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(80);
    run("baseline", None, epochs, None);
    run("input-normalized", Some(1.0), epochs, None);
    run("tanh", None, epochs, Some("tanh"));
    run("normalized+tanh", Some(1.0), epochs, Some("tanh"));
}
