//! End-to-end tests of the binary: exit codes, artifacts, and seeding.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use periodcast::data::{save_csv, synthetic_series};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_periodcast")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn run_env(args: &[&str], key: &str, val: &str) -> Output {
    Command::new(bin()).args(args).env(key, val).output().expect("binary runs")
}

fn write_dataset(dir: &Path) -> PathBuf {
    let s = synthetic_series(260, 1, 8.0, 1.0, 0.0, 0.05, 3);
    let p = dir.join("data.csv");
    save_csv(&s, &p).unwrap();
    p
}

fn write_config(dir: &Path, data: &Path, out: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "data": data,
        "out": out,
        "input_len": 16,
        "horizon": 8,
        "period": 8,
        "ma_kernel": 5,
        "d_model": 8,
        "n_heads": 2,
        "d_ff": 8,
        "enc_layers": 1,
        "dec_layers": 1,
        "dropout": 0.0,
        "epochs": 2,
        "lr": 1e-3,
        "ratios": [0.7, 0.15, 0.15],
    });
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    p
}

#[test]
fn train_missing_dataset_exits_3_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--data",
        "/definitely/not/here.csv",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/definitely/not/here.csv"));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"no_such_key": 1}"#).unwrap();
    let out = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_is_bit_reproducible_under_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let cfg = write_config(dir.path(), &data, &out_a);
    let r1 = run(&["train", "--config", cfg.to_str().unwrap(), "--seed", "11"]);
    assert_eq!(r1.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&r1.stderr));
    let r2 = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "11",
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert_eq!(r2.status.code(), Some(0));
    let ck_a = std::fs::read(out_a.join("checkpoint.bin")).unwrap();
    let ck_b = std::fs::read(out_b.join("checkpoint.bin")).unwrap();
    assert_eq!(ck_a, ck_b, "checkpoints differ");
    let s_a = std::fs::read_to_string(out_a.join("summary.json")).unwrap();
    let s_b = std::fs::read_to_string(out_b.join("summary.json")).unwrap();
    assert_eq!(s_a, s_b, "summaries differ");
}

#[test]
fn seed_env_var_is_fallback_but_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path());
    let out_env = dir.path().join("env");
    let cfg = write_config(dir.path(), &data, &out_env);
    let r = run_env(&["train", "--config", cfg.to_str().unwrap()], "PERIODCAST_SEED", "99");
    assert_eq!(r.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let resolved: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_env.join("resolved_config.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(resolved["seed"], 99);

    let out_flag = dir.path().join("flag");
    let r2 = run_env(
        &[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "5",
            "--out",
            out_flag.to_str().unwrap(),
        ],
        "PERIODCAST_SEED",
        "99",
    );
    assert_eq!(r2.status.code(), Some(0));
    let resolved2: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_flag.join("resolved_config.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(resolved2["seed"], 5);
}

#[test]
fn forecast_after_train_produces_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path());
    let out = dir.path().join("o");
    let cfg = write_config(dir.path(), &data, &out);
    assert_eq!(run(&["train", "--config", cfg.to_str().unwrap()]).status.code(), Some(0));
    let fdir = dir.path().join("fc");
    let r = run(&[
        "forecast",
        "--checkpoint",
        out.join("checkpoint.bin").to_str().unwrap(),
        "--input",
        data.to_str().unwrap(),
        "--out",
        fdir.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let wide = std::fs::read_to_string(fdir.join("forecast.csv")).unwrap();
    assert_eq!(wide.lines().count(), 9);
    assert!(fdir.join("forecast_long.csv").exists());
}

#[test]
fn bench_subcommand_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let r = run(&[
        "bench",
        "--lengths",
        "32,64",
        "--d-model",
        "8",
        "--np",
        "4",
        "--reps",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("kernel,length,reps,median_seconds,op_count"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn bench_rejects_bad_reps_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let r = run(&["bench", "--lengths", "32,64", "--reps", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn predictability_subcommand_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path());
    let out = dir.path().join("o");
    let cfg = write_config(dir.path(), &data, &out);
    let r = run(&["predictability", "--config", cfg.to_str().unwrap(), "--k", "3"]);
    assert_eq!(r.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    assert!(out.join("predictability.json").exists());
    assert!(out.join("folds.csv").exists());
}
