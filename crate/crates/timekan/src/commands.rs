//! Command implementations behind the `timekan` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use timekan_core::data::{split_and_standardize, DatasetSplit, Family, Part, RawDataset};
use timekan_core::gradcheck::{run_suite, GradcheckOptions, GradcheckReport};
use timekan_core::model::MacEstimate;
use timekan_core::training::{evaluate, fit, FitEvent, FitReport};
use timekan_core::{ModelConfig, OrderPolicy, Tensor, TimeKanModel, UpsamplerKind};

use crate::analysis::{effective_frequency, EffectiveFrequency};
use crate::checkpoint::{self, write_json};
use crate::config::{RunConfig, SyntheticKind};
use crate::csv_io::{load_csv, write_dataset, write_predictions};
use crate::error::{CliError, CliResult};

pub const METRICS_FILE: &str = "metrics.json";
pub const EVAL_FILE: &str = "eval.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const ABLATION_FILE: &str = "ablation.json";
pub const RESOLVED_FILE: &str = "resolved_config.json";
pub const GRADCHECK_FILE: &str = "gradcheck.json";
pub const INSPECT_FILE: &str = "inspect.json";

/// Metric scale written next to every MSE/MAE.
pub const METRIC_UNITS: &str = "standardized";

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn load_dataset(cfg: &RunConfig) -> CliResult<(RawDataset, Family)> {
    let d = &cfg.data;
    let raw = match (d.path.is_empty(), d.synthetic) {
        (true, SyntheticKind::None) => {
            return Err(CliError::Config("no dataset: set data.path or data.synthetic".into()));
        }
        (true, kind) => crate::synth::generate(kind, d.rows, d.seed)?,
        (false, _) => load_csv(Path::new(&d.path), d.timestamp_flag())?,
    };
    Ok((raw, d.family()))
}

pub fn prepare_split(cfg: &RunConfig) -> CliResult<(RawDataset, DatasetSplit)> {
    let (raw, family) = load_dataset(cfg)?;
    let split = split_and_standardize(&raw, family, cfg.model.lookback, cfg.model.horizon)?;
    Ok((raw, split))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub metric_units: String,
    #[serde(flatten)]
    pub report: FitReport,
}

fn progress(quiet: bool) -> impl FnMut(FitEvent) {
    move |e| {
        if let FitEvent::Epoch { epoch, train_loss, val_mse, improved } = e {
            if !quiet {
                eprintln!(
                    "epoch {epoch:>3}  train_loss {train_loss:.6}  val_mse {val_mse:.6}{}",
                    if improved { "  *" } else { "" }
                );
            }
        }
    }
}

/// Fits, checkpoints, and reports test metrics of the saved checkpoint.
pub fn train(cfg: &RunConfig, quiet: bool) -> CliResult<Metrics> {
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    cfg.write_resolved(&out.join(RESOLVED_FILE))?;
    let (raw, split) = prepare_split(cfg)?;
    let started = Instant::now();
    let mut model = TimeKanModel::new(cfg.model.clone())?;
    let mut obs = progress(quiet);
    let mut report = fit(&mut model, &split, &cfg.train, Some(&mut obs))?;
    checkpoint::save(&out, &model, raw.column_names(), Some(&split.stats))?;
    // Report what eval will see: the stored f32 parameters.
    let (stored, _) = checkpoint::load(&out)?;
    let (mse, mae) = evaluate(&stored, &split, Part::Test)?;
    report.test_mse = mse;
    report.test_mae = mae;
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    let metrics = Metrics {
        metric_units: METRIC_UNITS.into(),
        report,
    };
    write_json(&out.join(METRICS_FILE), &metrics)?;
    if !quiet {
        println!(
            "best epoch {} of {}: val_mse {:.6}  test_mse {:.6}  test_mae {:.6} ({METRIC_UNITS})",
            metrics.report.best_epoch,
            metrics.report.val_mse.len(),
            metrics.report.best_val_mse,
            mse,
            mae
        );
    }
    Ok(metrics)
}

fn load_matching(checkpoint_dir: &Path, cfg: &RunConfig) -> CliResult<(TimeKanModel, checkpoint::Manifest)> {
    let (model, manifest) = checkpoint::load(checkpoint_dir)?;
    let diff = manifest.config.differing_fields(&cfg.model);
    if !diff.is_empty() {
        let detail: Vec<String> = diff
            .iter()
            .map(|f| {
                let a = serde_json::to_value(&manifest.config).ok().and_then(|v| v.get(*f).cloned());
                let b = serde_json::to_value(&cfg.model).ok().and_then(|v| v.get(*f).cloned());
                format!("model.{f} (checkpoint {}, config {})", show(a), show(b))
            })
            .collect();
        return Err(CliError::Config(format!(
            "checkpoint {} does not match the configuration: {}",
            checkpoint_dir.display(),
            detail.join(", ")
        )));
    }
    Ok((model, manifest))
}

fn show(v: Option<serde_json::Value>) -> String {
    v.map_or_else(|| "?".into(), |v| v.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Part,
    pub mse: f64,
    pub mae: f64,
    pub windows: usize,
    pub metric_units: String,
}

pub fn eval(cfg: &RunConfig, checkpoint_dir: &Path, part: Part) -> CliResult<EvalReport> {
    let (model, _) = load_matching(checkpoint_dir, cfg)?;
    let (_, split) = prepare_split(cfg)?;
    let (mse, mae) = evaluate(&model, &split, part)?;
    let report = EvalReport {
        split: part,
        mse,
        mae,
        windows: split.windows(part, cfg.model.lookback, cfg.model.horizon, 1).len(),
        metric_units: METRIC_UNITS.into(),
    };
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    write_json(&out.join(EVAL_FILE), &report)?;
    Ok(report)
}

/// Forecasts `horizon` steps past the end of `input` for every variate, in
/// raw units. Returns the columns written to `predictions.csv`.
pub fn predict(cfg: &RunConfig, checkpoint_dir: &Path, input: &Path) -> CliResult<Vec<Vec<f64>>> {
    let (model, manifest) = load_matching(checkpoint_dir, cfg)?;
    let raw = load_csv(input, cfg.data.timestamp_flag())?;
    let (t, f) = (cfg.model.lookback, cfg.model.horizon);
    if raw.rows() < t {
        return Err(CliError::Data(format!(
            "{}: {} rows, the look-back window needs {t}",
            input.display(),
            raw.rows()
        )));
    }
    let stats = manifest.standardization.as_ref();
    if let Some(s) = stats {
        if s.mean.len() != raw.cols() {
            return Err(CliError::Data(format!(
                "{}: {} variates, the checkpoint was trained on {}",
                input.display(),
                raw.cols(),
                s.mean.len()
            )));
        }
    }
    let n = raw.cols();
    let first = raw.rows() - t;
    let mut windows = Vec::with_capacity(n * t);
    for c in 0..n {
        let col = raw.column(c);
        windows.extend(col[first..].iter().map(|&v| stats.map_or(v, |s| s.standardize(c, v))));
    }
    let pred = model.forward(&Tensor::new(&[n, t], windows)?)?;
    let columns: Vec<Vec<f64>> = pred
        .data()
        .chunks_exact(f)
        .enumerate()
        .map(|(c, row)| row.iter().map(|&v| stats.map_or(v, |s| s.destandardize(c, v))).collect())
        .collect();
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    write_predictions(&out.join(PREDICTIONS_FILE), raw.column_names(), &columns)?;
    Ok(columns)
}

pub fn gradcheck(out: Option<&Path>, opts: &GradcheckOptions) -> CliResult<GradcheckReport> {
    let report = run_suite(opts)?;
    for op in &report.ops {
        println!(
            "{:<6} {:<56} max_rel_err {:.3e}  cases {:>3}  coords {:>6}",
            if op.passed { "PASS" } else { "FAIL" },
            op.op,
            op.max_rel_error,
            op.cases,
            op.coordinates
        );
    }
    println!("tolerance {:.0e}, eps {:.0e}", report.tolerance, report.eps);
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&dir.join(GRADCHECK_FILE), &report)?;
    }
    if !report.passed {
        let failed: Vec<&str> = report.ops.iter().filter(|o| !o.passed).map(|o| o.op.as_str()).collect();
        return Err(CliError::GradcheckFailed(failed.join(", ")));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectReport {
    pub param_count: usize,
    pub macs: MacEstimate,
    /// `None` for the MLP ablation.
    pub kan_orders: Option<Vec<usize>>,
    pub level_lengths: Vec<usize>,
    pub effective_frequency: Vec<EffectiveFrequency>,
}

pub fn format_orders(orders: &Option<Vec<usize>>) -> String {
    match orders {
        Some(o) => format!("[{}]", o.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")),
        None => "none (mlp)".into(),
    }
}

pub const INSPECT_BATCH: usize = 32;

pub fn inspect(
    cfg: &RunConfig,
    checkpoint_dir: Option<&Path>,
    csv: Option<&Path>,
    windows: &[usize],
) -> CliResult<InspectReport> {
    let model = match checkpoint_dir {
        Some(dir) => checkpoint::load(dir)?.0,
        None => TimeKanModel::new(cfg.model.clone())?,
    };
    let c = model.config();
    let mut report = InspectReport {
        param_count: model.count_params(),
        macs: model.estimate_macs(INSPECT_BATCH),
        kan_orders: c.kan_orders(),
        level_lengths: c.level_lengths(),
        effective_frequency: Vec::new(),
    };
    println!("params: {}", report.param_count);
    println!(
        "macs@batch{INSPECT_BATCH}: {} (per sample: fixed {}, per block {}, blocks {})",
        report.macs.total, report.macs.fixed, report.macs.per_block, report.macs.blocks
    );
    println!("kan_orders: {}", format_orders(&report.kan_orders));
    println!("level_lengths: {:?}", report.level_lengths);
    if let Some(path) = csv {
        let raw = load_csv(path, cfg.data.timestamp_flag())?;
        for &w in windows {
            let e = effective_frequency(&raw, w, cfg.data.seed)?;
            let per: Vec<String> = raw
                .column_names()
                .iter()
                .zip(&e.per_variate)
                .map(|(n, v)| format!("{n}={v:.2}"))
                .collect();
            println!("effective_frequency window {w}: mean {:.2} [{}]", e.mean, per.join(", "));
            report.effective_frequency.push(e);
        }
    }
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    write_json(&out.join(INSPECT_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub test_mse: f64,
    pub test_mae: f64,
    pub best_val_mse: f64,
    pub best_epoch: usize,
    pub param_count: usize,
    pub config: ModelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub metric_units: String,
    pub rows: Vec<AblationRow>,
    /// Whether multi-order KAN has the lowest test MSE among the order
    /// policies. Reported only.
    pub multi_order_best: bool,
}

pub fn ablation_variants(base: &ModelConfig) -> Vec<(String, ModelConfig)> {
    let with = |p: OrderPolicy, u: UpsamplerKind| ModelConfig {
        order_policy: p,
        upsampler: u,
        ..base.clone()
    };
    use OrderPolicy::*;
    use UpsamplerKind::*;
    vec![
        ("order=multi_order".into(), with(MultiOrder, Frequency)),
        ("order=fixed(2)".into(), with(Fixed(2), Frequency)),
        ("order=fixed(5)".into(), with(Fixed(5), Frequency)),
        ("order=mlp".into(), with(Mlp, Frequency)),
        ("upsampler=frequency".into(), with(MultiOrder, Frequency)),
        ("upsampler=linear_interp".into(), with(MultiOrder, LinearInterp)),
    ]
}

pub fn ablate(cfg: &RunConfig, quiet: bool) -> CliResult<AblationReport> {
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    cfg.write_resolved(&out.join(RESOLVED_FILE))?;
    let (_, split) = prepare_split(cfg)?;
    // Identical configurations train identically, so each distinct one runs once.
    let mut done: BTreeMap<String, FitReport> = BTreeMap::new();
    let mut rows = Vec::new();
    for (variant, model_cfg) in ablation_variants(&cfg.model) {
        let key = serde_json::to_string(&model_cfg).expect("config serializes");
        let report = match done.get(&key) {
            Some(r) => r.clone(),
            None => {
                if !quiet {
                    eprintln!("training {variant}");
                }
                let mut model = TimeKanModel::new(model_cfg.clone())?;
                let mut obs = progress(quiet);
                let r = fit(&mut model, &split, &cfg.train, Some(&mut obs))?;
                done.insert(key, r.clone());
                r
            }
        };
        if !quiet {
            println!(
                "{variant:<26} test_mse {:.6}  test_mae {:.6}  params {}",
                report.test_mse, report.test_mae, report.param_count
            );
        }
        rows.push(AblationRow {
            variant,
            test_mse: report.test_mse,
            test_mae: report.test_mae,
            best_val_mse: report.best_val_mse,
            best_epoch: report.best_epoch,
            param_count: report.param_count,
            config: model_cfg,
        });
    }
    let order_rows = &rows[..4];
    let multi_order_best = order_rows[1..].iter().all(|r| order_rows[0].test_mse <= r.test_mse);
    let report = AblationReport {
        metric_units: METRIC_UNITS.into(),
        rows,
        multi_order_best,
    };
    write_json(&out.join(ABLATION_FILE), &report)?;
    Ok(report)
}

pub fn synth(kind: SyntheticKind, rows: usize, seed: u64, output: &Path) -> CliResult<PathBuf> {
    let raw = crate::synth::generate(kind, rows, seed)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_dataset(output, &raw)?;
    Ok(output.to_path_buf())
}
