//! End-to-end comparison runs: train both model kinds for several trials,
//! aggregate test errors, emit a CSV table, a JSON report, and an SVG bar
//! chart, and report whether the expected error ordering held.

use crate::data::{generate, Case, Scenario, Split, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::model::ModelKind;
use crate::train::{run_trials, Overrides, TrialsAggregate};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReproduceOptions {
    pub trials: usize,
    pub base_seed: u64,
    pub jobs: usize,
    pub overrides: Overrides,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        ReproduceOptions {
            trials: 5,
            base_seed: 1,
            jobs: 1,
            overrides: Overrides::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub case: Case,
    pub scenario: Scenario,
    pub options: ReproduceOptions,
    pub lno: TrialsAggregate,
    pub fno: TrialsAggregate,
    /// Whether the Laplace operator achieved the lower mean test error.
    pub ordering_held: bool,
    pub wall_seconds: f64,
}

/// Load the three splits from `data_dir` if present, generating and saving
/// any that are missing.
pub fn load_or_generate(
    case: Case,
    scenario: Scenario,
    data_dir: &Path,
) -> Result<(TimeSeriesDataset, TimeSeriesDataset, TimeSeriesDataset)> {
    std::fs::create_dir_all(data_dir).map_err(|e| Error::io(data_dir.display().to_string(), e))?;
    let mut out = Vec::with_capacity(3);
    for split in [Split::Train, Split::Vali, Split::Test] {
        let path = dataset_path(data_dir, case, scenario, split);
        let ds = if path.exists() {
            let ds = TimeSeriesDataset::load(&path)?;
            if ds.case != case || ds.scenario != scenario || ds.split != split {
                return Err(Error::format(
                    path.display().to_string(),
                    format!("file holds {}/{}/{}", ds.case, ds.scenario, ds.split),
                ));
            }
            ds
        } else {
            let ds = generate(case, scenario, split)?;
            ds.save(&path)?;
            ds
        };
        out.push(ds);
    }
    let mut it = out.into_iter();
    Ok((
        it.next().expect("three splits"),
        it.next().expect("three splits"),
        it.next().expect("three splits"),
    ))
}

pub fn dataset_path(dir: &Path, case: Case, scenario: Scenario, split: Split) -> PathBuf {
    dir.join(format!("{case}_{scenario}_{split}.lnod"))
}

/// Run the full comparison for one case/scenario. Writes comparison.csv,
/// comparison.json, and comparison.svg into `out_dir`.
pub fn run_comparison(
    case: Case,
    scenario: Scenario,
    data_dir: &Path,
    out_dir: &Path,
    opts: &ReproduceOptions,
) -> Result<ComparisonReport> {
    let started = std::time::Instant::now();
    let (train_ds, vali_ds, test_ds) = load_or_generate(case, scenario, data_dir)?;
    let data = (&train_ds, &vali_ds, &test_ds);

    let lno = run_trials(
        case,
        scenario,
        ModelKind::Lno,
        opts.trials,
        opts.base_seed,
        &opts.overrides,
        opts.jobs,
        data,
    )?;
    let fno = run_trials(
        case,
        scenario,
        ModelKind::Fno,
        opts.trials,
        opts.base_seed,
        &opts.overrides,
        opts.jobs,
        data,
    )?;

    let ordering_held =
        lno.failed_trials.is_empty() && fno.failed_trials.is_empty() && lno.mean < fno.mean;
    let report = ComparisonReport {
        case,
        scenario,
        options: opts.clone(),
        lno,
        fno,
        ordering_held,
        wall_seconds: started.elapsed().as_secs_f64(),
    };

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    write_csv(&report, &out_dir.join("comparison.csv"))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    let json_path = out_dir.join("comparison.json");
    std::fs::write(&json_path, json).map_err(|e| Error::io(json_path.display().to_string(), e))?;
    write_svg(&report, &out_dir.join("comparison.svg"))?;
    Ok(report)
}

/// Stable CSV: one row per model with mean/std over trials.
pub fn write_csv(report: &ComparisonReport, path: &Path) -> Result<()> {
    let mut text = String::from("case,scenario,model,trials,mean_rel_l2,std_rel_l2,failed_trials\n");
    for agg in [&report.lno, &report.fno] {
        text.push_str(&format!(
            "{},{},{},{},{:.10e},{:.10e},{}\n",
            report.case,
            report.scenario,
            agg.kind,
            agg.trials,
            agg.mean,
            agg.std,
            agg.failed_trials.len()
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Minimal standalone SVG bar chart (log scale) with the numbers printed on
/// the bars, so the emitted values stay inspectable.
pub fn write_svg(report: &ComparisonReport, path: &Path) -> Result<()> {
    let entries = [
        ("lno", report.lno.mean, report.lno.std, "#2b6cb0"),
        ("fno", report.fno.mean, report.fno.std, "#c05621"),
    ];
    let (w, h) = (420.0, 300.0);
    let (left, bottom, top) = (70.0, 40.0, 30.0);
    let plot_h = h - bottom - top;
    let finite: Vec<f64> = entries
        .iter()
        .flat_map(|e| [e.1, (e.1 + e.2).max(1e-300)])
        .filter(|v| v.is_finite() && *v > 0.0)
        .collect();
    let max_v = finite.iter().cloned().fold(1e-6, f64::max) * 2.0;
    let min_v = (finite.iter().cloned().fold(1.0, f64::min) / 10.0).max(1e-12);
    let y_of = |v: f64| {
        let v = v.max(min_v);
        top + plot_h * (1.0 - (v / min_v).ln() / (max_v / min_v).ln())
    };
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{} / {}: mean test relative L2 ({} trials)</text>\n",
        w / 2.0,
        report.case,
        report.scenario,
        report.options.trials
    ));
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>\n",
        top + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        top + plot_h,
        w - 20.0,
        top + plot_h
    ));
    // Decade gridlines.
    let mut decade = 10f64.powf(min_v.log10().ceil());
    while decade < max_v {
        let y = y_of(decade);
        svg.push_str(&format!(
            "<line x1=\"{left}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#ddd\"/><text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">1e{}</text>\n",
            w - 20.0,
            left - 4.0,
            y + 3.0,
            decade.log10().round() as i64
        ));
        decade *= 10.0;
    }
    let bar_w = 80.0;
    for (i, (label, mean, std, color)) in entries.iter().enumerate() {
        let x = left + 60.0 + i as f64 * 160.0;
        if mean.is_finite() && *mean > 0.0 {
            let y = y_of(*mean);
            svg.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y:.1}\" width=\"{bar_w}\" height=\"{:.1}\" fill=\"{color}\"/>\n",
                top + plot_h - y
            ));
            let (ylo, yhi) = (y_of(mean - std), y_of(mean + std));
            let cx = x + bar_w / 2.0;
            svg.push_str(&format!(
                "<line x1=\"{cx}\" y1=\"{yhi:.1}\" x2=\"{cx}\" y2=\"{ylo:.1}\" stroke=\"black\"/>\n"
            ));
            svg.push_str(&format!(
                "<text x=\"{cx}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{mean:.3e} &#177; {std:.2e}</text>\n",
                yhi - 6.0
            ));
        } else {
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">failed</text>\n",
                x + bar_w / 2.0,
                top + plot_h / 2.0
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{label}</text>\n",
            x + bar_w / 2.0,
            top + plot_h + 16.0
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::Overrides;

    #[test]
    fn comparison_outputs_are_deterministic_and_well_formed() {
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        let opts = ReproduceOptions {
            trials: 2,
            base_seed: 3,
            jobs: 1,
            overrides: Overrides {
                epochs: Some(1),
                width: Some(2),
                modes: Some(vec![2, 2]),
                ..Overrides::default()
            },
        };
        let out1 = dir.path().join("run1");
        let out2 = dir.path().join("run2");
        let r1 = run_comparison(Case::Beam, Scenario::Base, &data_dir, &out1, &opts).unwrap();
        let r2 = run_comparison(Case::Beam, Scenario::Base, &data_dir, &out2, &opts).unwrap();
        assert_eq!(r1.lno.trial_means, r2.lno.trial_means);
        let csv1 = std::fs::read(out1.join("comparison.csv")).unwrap();
        let csv2 = std::fs::read(out2.join("comparison.csv")).unwrap();
        assert_eq!(csv1, csv2, "identical seeds must give byte-identical tables");
        let text = String::from_utf8(csv1).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("case,scenario,model"));
        assert!(lines[1].contains(",lno,"));
        assert!(lines[2].contains(",fno,"));
        // Mean fields parse as non-negative numbers.
        for line in &lines[1..] {
            let mean: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
            assert!(mean >= 0.0);
        }
        assert!(out1.join("comparison.svg").exists());
        assert!(out1.join("comparison.json").exists());
    }
}
