//! Command-line entry point: dataset generation, training, evaluation, and
//! end-to-end model comparisons.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage/configuration error,
//! 3 comparison finished but the expected error ordering did not hold.

use clap::{Args, Parser, Subcommand};
use lno::data::{generate, Case, Scenario, Split, TimeSeriesDataset};
use lno::error::Error;
use lno::manifest::RunManifest;
use lno::model::{ModelKind, OperatorModel};
use lno::reproduce::{dataset_path, run_comparison, ReproduceOptions};
use lno::train::{evaluate, model_preset, train, train_preset, Overrides};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "lno",
    version,
    about = "Operator-learning benchmarks: Laplace-domain operator vs Fourier baseline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train/vali/test datasets for one benchmark case.
    Generate(GenerateArgs),
    /// Train a single model (one trial) on a generated dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split of a dataset.
    Eval(EvalArgs),
    /// Run the full comparison: n trials of both model kinds, table + plot.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    case: String,
    /// c0/c05 (oscillators), rho5/rho10 (convection), base (PDEs; default).
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory (defaults to $LNO_OUT_ROOT or ./runs, plus a name).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overwrite existing dataset files.
    #[arg(long)]
    force: bool,
    /// Also dump the first sample of each split as CSV.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    case: String,
    #[arg(long)]
    scenario: Option<String>,
    /// lno or fno.
    #[arg(long)]
    model: String,
    /// Directory holding the generated .lnod files.
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// JSON config file; flags below override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// Per-axis mode counts, comma separated (e.g. "16" or "4,4").
    #[arg(long)]
    modes: Option<String>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    case: String,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    data_dir: PathBuf,
    /// Where to write metrics.json (printed to stdout regardless).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long)]
    case: String,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Dataset cache (defaults to <out-dir>/data); generated when missing.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Max parallel trial workers.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    modes: Option<String>,
    #[arg(long)]
    force: bool,
}

/// Optional JSON training config; unknown fields are rejected so typos fail
/// loudly with the offending field named.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
    seed: Option<u64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    epsilon: Option<f64>,
    lr_decay_every: Option<usize>,
    lr_decay_factor: Option<f64>,
    best_checkpoint: Option<bool>,
    width: Option<usize>,
    modes: Option<Vec<usize>>,
    coord_channels: Option<bool>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::UnknownOption { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Reproduce(args) => cmd_reproduce(args),
    }
}

fn parse_case_scenario(case: &str, scenario: &Option<String>) -> Result<(Case, Scenario), Error> {
    let case: Case = case.parse()?;
    let scenario = match scenario {
        Some(s) => s.parse()?,
        None => match case.valid_scenarios() {
            [only] => *only,
            valid => {
                return Err(Error::Config(format!(
                    "case {case} needs --scenario (valid: {})",
                    valid.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
                )))
            }
        },
    };
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
    Ok((case, scenario))
}

fn out_root() -> PathBuf {
    std::env::var_os("LNO_OUT_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn resolve_out_dir(arg: Option<PathBuf>, default_name: String) -> PathBuf {
    arg.unwrap_or_else(|| out_root().join(default_name))
}

/// Existing outputs are never overwritten silently.
fn guard_targets(paths: &[PathBuf], force: bool) -> Result<(), Error> {
    if force {
        return Ok(());
    }
    for p in paths {
        if p.exists() {
            return Err(Error::Config(format!(
                "refusing to overwrite {} (pass --force to allow)",
                p.display()
            )));
        }
    }
    Ok(())
}

fn parse_modes(s: &Option<String>) -> Result<Option<Vec<usize>>, Error> {
    match s {
        None => Ok(None),
        Some(text) => {
            let modes: Result<Vec<usize>, _> =
                text.split(',').map(|p| p.trim().parse::<usize>()).collect();
            modes
                .map(Some)
                .map_err(|_| Error::Config(format!("cannot parse --modes '{text}'")))
        }
    }
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn cmd_generate(args: GenerateArgs) -> Result<ExitCode, Error> {
    let (case, scenario) = parse_case_scenario(&args.case, &args.scenario)?;
    let out_dir = resolve_out_dir(args.out_dir, format!("data-{case}-{scenario}"));
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let targets: Vec<PathBuf> = [Split::Train, Split::Vali, Split::Test]
        .iter()
        .map(|&s| dataset_path(&out_dir, case, scenario, s))
        .collect();
    guard_targets(&targets, args.force)?;

    let mut manifest = RunManifest::new(
        command_line(),
        serde_json::json!({"case": case, "scenario": scenario}),
    );
    for (&split, path) in [Split::Train, Split::Vali, Split::Test].iter().zip(&targets) {
        let ds = generate(case, scenario, split)?;
        ds.save(path)?;
        manifest.record_file_hash(path)?;
        manifest.record_artifact(path);
        println!(
            "wrote {} ({} samples on grid {:?})",
            path.display(),
            ds.len(),
            ds.grid.extents
        );
        if args.csv {
            let csv = out_dir.join(format!("{case}_{scenario}_{split}_sample0.csv"));
            ds.export_csv(0, &csv)?;
            manifest.record_artifact(&csv);
        }
    }
    manifest.save(&out_dir)?;
    Ok(ExitCode::SUCCESS)
}

fn load_splits(
    data_dir: &Path,
    case: Case,
    scenario: Scenario,
) -> Result<(TimeSeriesDataset, TimeSeriesDataset, TimeSeriesDataset), Error> {
    let mut sets = Vec::with_capacity(3);
    for split in [Split::Train, Split::Vali, Split::Test] {
        let path = dataset_path(data_dir, case, scenario, split);
        if !path.exists() {
            return Err(Error::Config(format!(
                "dataset {} not found; run `lno generate --case {case} --scenario {scenario} --out-dir {}` first",
                path.display(),
                data_dir.display()
            )));
        }
        sets.push(TimeSeriesDataset::load(&path)?);
    }
    let mut it = sets.into_iter();
    Ok((
        it.next().expect("three"),
        it.next().expect("three"),
        it.next().expect("three"),
    ))
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode, Error> {
    let (case, scenario) = parse_case_scenario(&args.case, &args.scenario)?;
    let kind: ModelKind = args.model.parse()?;
    let out_dir = resolve_out_dir(args.out_dir, format!("train-{case}-{scenario}-{kind}"));
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let ckpt_path = out_dir.join("checkpoint.lnoc");
    let report_path = out_dir.join("report.json");
    guard_targets(&[ckpt_path.clone(), report_path.clone()], args.force)?;

    let mut model_cfg = model_preset(case, scenario, kind);
    let mut train_cfg = train_preset(case, scenario, kind);
    if let Some(cfg_path) = &args.config {
        let text = std::fs::read_to_string(cfg_path)
            .map_err(|e| Error::io(cfg_path.display().to_string(), e))?;
        let file: FileConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", cfg_path.display())))?;
        if let Some(v) = file.learning_rate {
            train_cfg.learning_rate = v;
        }
        if let Some(v) = file.batch_size {
            train_cfg.batch_size = v;
        }
        if let Some(v) = file.epochs {
            train_cfg.epochs = v;
        }
        if let Some(v) = file.seed {
            train_cfg.seed = v;
        }
        if let Some(v) = file.beta1 {
            train_cfg.beta1 = v;
        }
        if let Some(v) = file.beta2 {
            train_cfg.beta2 = v;
        }
        if let Some(v) = file.epsilon {
            train_cfg.epsilon = v;
        }
        if let Some(v) = file.lr_decay_every {
            train_cfg.lr_decay_every = v;
        }
        if let Some(v) = file.lr_decay_factor {
            train_cfg.lr_decay_factor = v;
        }
        if let Some(v) = file.best_checkpoint {
            train_cfg.best_checkpoint = v;
        }
        if let Some(v) = file.width {
            model_cfg.width = v;
        }
        if let Some(v) = file.modes {
            model_cfg.modes = v;
        }
        if let Some(v) = file.coord_channels {
            model_cfg.coord_channels = v;
        }
    }
    if let Some(v) = args.seed {
        train_cfg.seed = v;
    }
    if let Some(v) = args.epochs {
        train_cfg.epochs = v;
    }
    if let Some(v) = args.lr {
        train_cfg.learning_rate = v;
    }
    if let Some(v) = args.batch {
        train_cfg.batch_size = v;
    }
    if let Some(v) = args.width {
        model_cfg.width = v;
    }
    if let Some(m) = parse_modes(&args.modes)? {
        model_cfg.modes = m;
    }

    let (train_ds, vali_ds, test_ds) = load_splits(&args.data_dir, case, scenario)?;
    let mut model = OperatorModel::build(model_cfg.clone(), train_cfg.seed)?;
    println!(
        "training {kind} on {case}/{scenario}: width {}, modes {:?}, {} epochs, lr {}, batch {}, seed {}",
        model_cfg.width,
        model_cfg.modes,
        train_cfg.epochs,
        train_cfg.learning_rate,
        train_cfg.batch_size,
        train_cfg.seed
    );
    let report = train(&mut model, &train_ds, &vali_ds, &test_ds, &train_cfg)?;

    model.save(&ckpt_path)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&report_path, json)
        .map_err(|e| Error::io(report_path.display().to_string(), e))?;

    let mut manifest = RunManifest::new(
        command_line(),
        serde_json::json!({"model": model_cfg, "train": train_cfg}),
    );
    for split in [Split::Train, Split::Vali, Split::Test] {
        manifest.record_file_hash(&dataset_path(&args.data_dir, case, scenario, split))?;
    }
    manifest.record_artifact(&ckpt_path);
    manifest.record_artifact(&report_path);
    manifest.save(&out_dir)?;

    match &report.failed {
        Some(msg) => {
            eprintln!("trial failed: {msg}");
            Ok(ExitCode::from(1))
        }
        None => {
            println!(
                "test rel-L2 mean {:.6e} std {:.6e} (best epoch {}, {:.1}s)",
                report.test_mean, report.test_std, report.best_epoch, report.wall_seconds
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode, Error> {
    let (case, scenario) = parse_case_scenario(&args.case, &args.scenario)?;
    let model = OperatorModel::load(&args.checkpoint)?;
    let test_path = dataset_path(&args.data_dir, case, scenario, Split::Test);
    let test_ds = TimeSeriesDataset::load(&test_path)?;
    if test_ds.grid.extents.len() != model.config.rank() {
        return Err(Error::shape(
            "eval",
            format!(
                "checkpoint is rank-{} but dataset grid is {:?}",
                model.config.rank(),
                test_ds.grid.extents
            ),
        ));
    }
    let (per_sample, mean, std) = evaluate(&model, &test_ds, 20)?;
    println!("test rel-L2 mean {mean:.6e} std {std:.6e} over {} samples", per_sample.len());
    let metrics = serde_json::json!({
        "case": case,
        "scenario": scenario,
        "checkpoint": args.checkpoint.display().to_string(),
        "mean_rel_l2": mean,
        "std_rel_l2": std,
        "per_sample_rel_l2": per_sample,
    });
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&metrics).expect("serializes"))
            .map_err(|e| Error::io(out.display().to_string(), e))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_reproduce(args: ReproduceArgs) -> Result<ExitCode, Error> {
    let (case, scenario) = parse_case_scenario(&args.case, &args.scenario)?;
    let out_dir = resolve_out_dir(args.out_dir, format!("reproduce-{case}-{scenario}"));
    let data_dir = args.data_dir.clone().unwrap_or_else(|| out_dir.join("data"));
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    guard_targets(
        &[
            out_dir.join("comparison.csv"),
            out_dir.join("comparison.json"),
            out_dir.join("comparison.svg"),
        ],
        args.force,
    )?;

    let opts = ReproduceOptions {
        trials: args.trials,
        base_seed: args.seed,
        jobs: args.jobs,
        overrides: Overrides {
            epochs: args.epochs,
            learning_rate: args.lr,
            batch_size: args.batch,
            width: args.width,
            modes: parse_modes(&args.modes)?,
        },
    };
    let report = run_comparison(case, scenario, &data_dir, &out_dir, &opts)?;

    let mut manifest = RunManifest::new(
        command_line(),
        serde_json::to_value(&opts).expect("options serialize"),
    );
    for split in [Split::Train, Split::Vali, Split::Test] {
        manifest.record_file_hash(&dataset_path(&data_dir, case, scenario, split))?;
    }
    for artifact in ["comparison.csv", "comparison.json", "comparison.svg"] {
        manifest.record_artifact(&out_dir.join(artifact));
    }
    manifest.save(&out_dir)?;

    println!(
        "{case}/{scenario}: lno mean {:.6e} (std {:.6e}), fno mean {:.6e} (std {:.6e}), {:.1}s",
        report.lno.mean, report.lno.std, report.fno.mean, report.fno.std, report.wall_seconds
    );
    let failed = !report.lno.failed_trials.is_empty() || !report.fno.failed_trials.is_empty();
    if failed {
        eprintln!(
            "failed trials: lno {:?}, fno {:?}",
            report.lno.failed_trials, report.fno.failed_trials
        );
        return Ok(ExitCode::from(1));
    }
    if report.ordering_held {
        println!("ordering held: lno mean < fno mean");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("ordering violated: expected lno mean < fno mean");
        Ok(ExitCode::from(3))
    }
}
