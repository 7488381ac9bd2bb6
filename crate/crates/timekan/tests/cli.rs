use std::fs;
use std::path::Path;
use std::process::Command;

use timekan::checkpoint;
use timekan::commands::{self, Metrics};
use timekan::config::{Overrides, RunConfig};
use timekan_core::data::Standardizer;
use timekan_core::{ModelConfig, TimeKanModel};

const BIN: &str = env!("CARGO_BIN_EXE_timekan");

fn toy_sets(out: &Path) -> Vec<String> {
    [
        "data.synthetic=two_tone",
        "data.rows=600",
        "model.T=16",
        "model.F=8",
        "model.k=2",
        "model.D=4",
        "train.max_epochs=2",
        "train.patience=1",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([format!("out={}", out.display())])
    .collect()
}

fn args(cmd: &str, out: &Path, extra: &[&str]) -> Vec<String> {
    let mut v = vec!["timekan".to_string(), cmd.to_string(), "-q".into()];
    for s in toy_sets(out) {
        v.push("--set".into());
        v.push(s);
    }
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn read_metrics(dir: &Path) -> Metrics {
    serde_json::from_str(&fs::read_to_string(dir.join(commands::METRICS_FILE)).unwrap()).unwrap()
}

#[test]
fn train_writes_artifacts_and_eval_reproduces_test_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(timekan::run(args("train", &out, &[])), 0);
    for f in ["metrics.json", "model.ckpt", "model.manifest.json", "resolved_config.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let m = read_metrics(&out);
    assert_eq!(m.metric_units, "standardized");
    assert_eq!(m.report.train_loss.len(), m.report.val_mse.len());

    // eval from the stored resolved config alone
    let ck = out.display().to_string();
    assert_eq!(timekan::run(["timekan", "eval", "--checkpoint", &ck]), 0);
    let e: commands::EvalReport = serde_json::from_str(&fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
    assert_eq!((e.mse, e.mae), (m.report.test_mse, m.report.test_mae));

    assert_eq!(timekan::run(["timekan", "eval", "--checkpoint", &ck, "--split", "val"]), 0);
    let v: commands::EvalReport = serde_json::from_str(&fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
    assert_eq!(v.split, timekan_core::data::Part::Val);
    assert!((v.mse - m.report.best_val_mse).abs() < 1e-4, "f32 rounding only");
}

#[test]
fn horizon_mismatch_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(timekan::run(args("train", &out, &[])), 0);
    let ck = out.display().to_string();
    let o = Command::new(BIN)
        .args(["eval", "--checkpoint", &ck, "--set", "model.F=4"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("model.horizon"), "{err}");
}

#[test]
fn missing_csv_exits_one_with_path() {
    let o = Command::new(BIN)
        .args(["train", "--set", "data.path=/nonexistent/ETTh1.csv"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/ETTh1.csv"));
}

#[test]
fn unknown_key_exits_one() {
    let o = Command::new(BIN).args(["inspect", "--set", "model.width=3"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.width"));
}

#[test]
fn gradcheck_passes_and_corruption_exits_two() {
    let ok = Command::new(BIN).args(["gradcheck", "--seeds", "1"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8_lossy(&ok.stdout);
    for op in timekan_core::gradcheck::LAYER_OPS {
        assert!(text.contains(op), "{op} missing from report");
    }
    assert!(!text.contains("FAIL"));
    let bad = Command::new(BIN)
        .args(["gradcheck", "--seeds", "1", "--corrupt", "chebyshev_kan"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn inspect_reports_default_orders_and_constant_column_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("flat.csv");
    let mut text = String::from("date,a\n");
    for i in 0..600 {
        text.push_str(&format!("{i},3.5\n"));
    }
    fs::write(&csv, text).unwrap();
    let out = dir.path().join("i");
    let o = Command::new(BIN)
        .args(["inspect", "--csv"])
        .arg(&csv)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("kan_orders: [5,4,3,2]"), "{stdout}");
    let rep: commands::InspectReport =
        serde_json::from_str(&fs::read_to_string(out.join("inspect.json")).unwrap()).unwrap();
    assert!(rep.effective_frequency.iter().all(|e| e.per_variate == vec![1.0]));
}

#[test]
fn predict_shapes_and_constant_forecast() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ck");
    let cfg = ModelConfig { lookback: 16, horizon: 8, embed_dim: 4, levels: 2, ..ModelConfig::default() };
    let mut model = TimeKanModel::new(cfg).unwrap();
    for p in model.parameters_mut() {
        p.value.fill(0.0);
    }
    let stats = Standardizer { mean: vec![1.0, -2.0], std: vec![2.0, 0.5] };
    checkpoint::save(&ckpt, &model, &["a".into(), "b".into()], Some(&stats)).unwrap();
    let input = dir.path().join("in.csv");
    let mut text = String::from("date,a,b\n");
    for i in 0..20 {
        text.push_str(&format!("{i},7.25,-1\n"));
    }
    fs::write(&input, &text).unwrap();
    let out = dir.path().join("p");
    let run_cfg = RunConfig::resolve(&Overrides {
        sets: vec!["model.T=16".into(), "model.F=8".into(), "model.D=4".into(), "model.k=2".into()],
        out: Some(out.clone()),
        ..Default::default()
    })
    .unwrap();
    let cols = commands::predict(&run_cfg, &ckpt, &input).unwrap();
    assert_eq!(cols.len(), 2);
    assert!(cols[0].iter().all(|v| (v - 7.25).abs() < 1e-9));
    assert!(cols[1].iter().all(|v| (v + 1.0).abs() < 1e-9));
    let written = fs::read_to_string(out.join("predictions.csv")).unwrap();
    let lines: Vec<&str> = written.lines().collect();
    assert_eq!(lines[0], "step,a,b");
    assert_eq!(lines.len(), 1 + 8);
    assert!(lines[8].starts_with("8,"));

    let short = dir.path().join("short.csv");
    fs::write(&short, "a,b\n1,2\n3,4\n").unwrap();
    assert!(commands::predict(&run_cfg, &ckpt, &short).is_err());
}

#[test]
fn same_seed_gives_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(timekan::run(args("train", &a, &["--seed", "5"])), 0);
    assert_eq!(timekan::run(args("train", &b, &["--seed", "5"])), 0);
    let strip = |p: &Path| -> String {
        fs::read_to_string(p.join("metrics.json"))
            .unwrap()
            .lines()
            .filter(|l| !l.contains("wall_clock_seconds"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(fs::read(a.join("model.ckpt")).unwrap(), fs::read(b.join("model.ckpt")).unwrap());
}

#[test]
fn ablate_writes_six_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ab");
    assert_eq!(timekan::run(args("ablate", &out, &[])), 0);
    let rep: commands::AblationReport =
        serde_json::from_str(&fs::read_to_string(out.join("ablation.json")).unwrap()).unwrap();
    assert_eq!(rep.rows.len(), 6);
    assert_eq!(rep.rows[5].config.upsampler, timekan_core::UpsamplerKind::LinearInterp);
    assert_eq!(rep.rows[0].test_mse, rep.rows[4].test_mse);
}
