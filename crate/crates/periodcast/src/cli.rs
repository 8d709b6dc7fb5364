//! Command implementations behind the binary's subcommands, plus the flat
//! run-configuration document they all share. Every command resolves its
//! effective config first and writes it next to the outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_csv, split_and_window, RawSeries};
use crate::error::{Error, Result};
use crate::hpo::space::SearchSpace;
use crate::model::{load_checkpoint, save_checkpoint, ModelConfig, ParamStore, ForecastModel};
use crate::tensor::{Activation, PadMode, Tensor};
use crate::training::{
    evaluate, persistence_baseline, seasonal_naive_baseline, train_loop, EvalMetrics, ModelTrainer,
    TrainConfig, TrainOutcome,
};

pub const DEFAULT_SEED: u64 = 42;
pub const SEED_ENV_VAR: &str = "PERIODCAST_SEED";

/// One flat JSON document covering data, model, training, search, and
/// predictability settings. Unknown keys are rejected.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    // data
    pub data: Option<PathBuf>,
    pub date_column: String,
    /// Restrict to a single feature column when set.
    pub target_column: Option<String>,
    pub ratios: [f64; 3],
    // model
    pub input_len: usize,
    pub horizon: usize,
    pub period: usize,
    pub ma_kernel: usize,
    pub scale: f64,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub ff_kernel: usize,
    pub d_ff: usize,
    pub sub_ratio: f64,
    pub dropout: f64,
    pub activation: Activation,
    pub ff_activation: Activation,
    pub pad_mode: PadMode,
    // training
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub grad_clip: Option<f64>,
    pub stride: usize,
    pub seed: Option<u64>,
    // hyperparameter search
    pub trials: usize,
    pub workers: usize,
    // predictability
    pub k: usize,
    pub folds: usize,
    // output
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            date_column: "date".into(),
            target_column: None,
            ratios: [0.7, 0.1, 0.2],
            input_len: 96,
            horizon: 96,
            period: 24,
            ma_kernel: 25,
            scale: 0.5,
            enc_layers: 2,
            dec_layers: 1,
            d_model: 512,
            n_heads: 8,
            ff_kernel: 3,
            d_ff: 2048,
            sub_ratio: 0.5,
            dropout: 0.05,
            activation: Activation::default(),
            ff_activation: Activation::default(),
            pad_mode: PadMode::default(),
            epochs: 50,
            patience: 4,
            batch_size: 32,
            lr: 1e-4,
            grad_clip: Some(5.0),
            stride: 1,
            seed: None,
            trials: 32,
            workers: 8,
            k: 10,
            folds: 1,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }

    /// Seed precedence: explicit flag > config file > PERIODCAST_SEED > 42.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<u64> {
        let seed = match (flag, self.seed) {
            (Some(s), _) => s,
            (None, Some(s)) => s,
            (None, None) => match std::env::var(SEED_ENV_VAR) {
                Ok(v) => v.parse::<u64>().map_err(|_| {
                    Error::Config(format!("{SEED_ENV_VAR}={v} is not a valid seed"))
                })?,
                Err(_) => DEFAULT_SEED,
            },
        };
        self.seed = Some(seed);
        Ok(seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|r| *r < 0.0) || self.ratios.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("split ratios must be nonnegative with positive sum".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }

    pub fn model_config(&self, n_features: usize) -> ModelConfig {
        ModelConfig {
            input_len: self.input_len,
            horizon: self.horizon,
            period: self.period,
            ma_kernel: self.ma_kernel,
            scale: self.scale,
            n_features,
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            d_model: self.d_model,
            n_heads: self.n_heads,
            ff_kernel: self.ff_kernel,
            d_ff: self.d_ff,
            sub_ratio: self.sub_ratio,
            dropout: self.dropout,
            activation: self.activation,
            ff_activation: self.ff_activation,
            pad_mode: self.pad_mode,
        }
    }

    /// Apply one searched hyperparameter by name.
    pub fn apply_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "input_len" => self.input_len = value as usize,
            "horizon" => self.horizon = value as usize,
            "period" => self.period = value as usize,
            "ma_kernel" => self.ma_kernel = value as usize,
            "scale" => self.scale = value,
            "lr" => self.lr = value,
            "d_model" => self.d_model = value as usize,
            "n_heads" => self.n_heads = value as usize,
            "d_ff" => self.d_ff = value as usize,
            "dropout" => self.dropout = value,
            "batch_size" => self.batch_size = value as usize,
            "sub_ratio" => self.sub_ratio = value,
            _ => {
                return Err(Error::Config(format!(
                    "search space names unknown hyperparameter '{name}'"
                )))
            }
        }
        Ok(())
    }
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create output dir {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Data(format!("serialize {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| Error::Data(format!("write {}: {e}", path.display())))
}

fn load_series(cfg: &RunConfig) -> Result<RawSeries> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset: set 'data' in the config or pass --data".into()))?;
    let series = load_csv(path, &cfg.date_column)?;
    match &cfg.target_column {
        Some(c) => series.select_column(c),
        None => Ok(series),
    }
}

fn run_training(cfg: &RunConfig, series: &RawSeries) -> Result<TrainOutcome<ParamStore>> {
    let (train, valid, _) = split_and_window(series, cfg.input_len, cfg.horizon, cfg.ratios)?;
    let model = ForecastModel::new(cfg.model_config(train.n_features()))?;
    let tc = TrainConfig {
        max_epochs: cfg.epochs,
        patience: cfg.patience,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        seed: cfg.seed.unwrap_or(DEFAULT_SEED),
        grad_clip: cfg.grad_clip,
        stride: cfg.stride,
    };
    let mut trainer = ModelTrainer::new(&model, &train, &valid, tc)?;
    train_loop(&mut trainer, cfg.epochs, cfg.patience, |_, _, _| {})
}

#[derive(Serialize)]
struct TrainSummary {
    best_epoch: usize,
    epochs_run: usize,
    best_valid_mae: f64,
    eval_split: String,
    metrics: EvalMetrics,
    baselines: BaselineSummary,
    seed: u64,
}

#[derive(Serialize)]
struct BaselineSummary {
    persistence: EvalMetrics,
    seasonal_naive: EvalMetrics,
}

/// Train, then write checkpoint, per-epoch journal, and a summary with
/// test metrics next to both baselines.
pub fn cmd_train(mut cfg: RunConfig, seed_flag: Option<u64>) -> Result<()> {
    let seed = cfg.resolve_seed(seed_flag)?;
    cfg.validate()?;
    ensure_out_dir(&cfg.out)?;
    write_json(&cfg, &cfg.out.join("resolved_config.json"))?;
    let series = load_series(&cfg)?;

    // epoch journal is written live so aborted runs keep their trace
    let journal_path = cfg.out.join("epochs.ndjson");
    let mut journal = std::io::BufWriter::new(
        std::fs::File::create(&journal_path)
            .map_err(|e| Error::Data(format!("{}: {e}", journal_path.display())))?,
    );

    let (train, valid, test) = split_and_window(&series, cfg.input_len, cfg.horizon, cfg.ratios)?;
    let model = ForecastModel::new(cfg.model_config(train.n_features()))?;
    let tc = TrainConfig {
        max_epochs: cfg.epochs,
        patience: cfg.patience,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        seed,
        grad_clip: cfg.grad_clip,
        stride: cfg.stride,
    };
    let mut trainer = ModelTrainer::new(&model, &train, &valid, tc)?;
    let outcome = train_loop(&mut trainer, cfg.epochs, cfg.patience, |epoch, st, seconds| {
        use std::io::Write;
        let line = serde_json::json!({
            "epoch": epoch,
            "train_loss": st.train_loss,
            "valid_mse": st.valid_mse,
            "valid_mae": st.valid_mae,
            "seconds": seconds,
        });
        let _ = writeln!(journal, "{line}");
        let _ = journal.flush();
        log::info!(
            "epoch {epoch}: train_loss {:.6} valid_mse {:.6} valid_mae {:.6} ({seconds:.1}s)",
            st.train_loss,
            st.valid_mse,
            st.valid_mae
        );
    })?;

    let (eval_split, eval_ds) = if !test.is_empty() {
        ("test", &test)
    } else if !valid.is_empty() {
        ("valid", &valid)
    } else {
        ("train", &train)
    };
    let metrics = evaluate(&model, &outcome.best_snapshot, eval_ds)?;
    let baselines = BaselineSummary {
        persistence: persistence_baseline(eval_ds),
        seasonal_naive: seasonal_naive_baseline(eval_ds, cfg.period),
    };

    save_checkpoint(
        &cfg.out.join("checkpoint.bin"),
        &model.cfg,
        &outcome.best_snapshot,
        Some(&train.stats),
    )?;
    write_json(
        &TrainSummary {
            best_epoch: outcome.best_epoch,
            epochs_run: outcome.epochs_run,
            best_valid_mae: outcome.best_valid,
            eval_split: eval_split.into(),
            metrics,
            baselines,
            seed,
        },
        &cfg.out.join("summary.json"),
    )?;
    Ok(())
}

/// Forecast the horizon following the last input window of a CSV.
/// Writes a wide CSV (one column per feature) and a long plot-ready CSV.
pub fn cmd_forecast(checkpoint: &Path, input: &Path, out_dir: &Path, date_column: &str) -> Result<()> {
    let (mcfg, params, norm) = load_checkpoint(checkpoint)?;
    let norm = norm.ok_or_else(|| {
        Error::Data(format!(
            "checkpoint {} carries no normalization statistics",
            checkpoint.display()
        ))
    })?;
    let series = load_csv(input, date_column)?;
    if series.columns != norm.columns {
        return Err(Error::Data(format!(
            "input columns {:?} do not match checkpoint columns {:?}",
            series.columns, norm.columns
        )));
    }
    let t = series.values.len();
    if t < mcfg.input_len {
        return Err(Error::Data(format!(
            "input has {t} rows but the model needs an input window of {}",
            mcfg.input_len
        )));
    }
    ensure_out_dir(out_dir)?;
    let window: Vec<Vec<f64>> = series.values[t - mcfg.input_len..]
        .iter()
        .map(|r| norm.normalize_row(r))
        .collect();
    let x = Tensor::from_rows(&window)?;
    let model = ForecastModel::new(mcfg.clone())?;
    let pred = model.predict(&params, &x)?;
    let pred_raw = norm.denormalize(&pred);

    // wide CSV: horizon rows
    let wide = out_dir.join("forecast.csv");
    {
        let mut w = csv::Writer::from_path(&wide).map_err(|e| Error::Data(e.to_string()))?;
        let mut header = vec!["t".to_string()];
        header.extend(norm.columns.iter().cloned());
        w.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
        for i in 0..mcfg.horizon {
            let mut rec = vec![(t + i).to_string()];
            for j in 0..norm.columns.len() {
                rec.push(format!("{}", pred_raw.get2(i, j)));
            }
            w.write_record(&rec).map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))?;
    }

    // long CSV: history window + forecast, one row per (t, series)
    let long = out_dir.join("forecast_long.csv");
    {
        let mut w = csv::Writer::from_path(&long).map_err(|e| Error::Data(e.to_string()))?;
        w.write_record(["t", "series", "value", "kind"])
            .map_err(|e| Error::Data(e.to_string()))?;
        let start = t - mcfg.input_len;
        for (i, row) in series.values[start..].iter().enumerate() {
            for (j, col) in norm.columns.iter().enumerate() {
                w.write_record([
                    (start + i).to_string(),
                    col.clone(),
                    format!("{}", row[j]),
                    "history".to_string(),
                ])
                .map_err(|e| Error::Data(e.to_string()))?;
            }
        }
        for i in 0..mcfg.horizon {
            for (j, col) in norm.columns.iter().enumerate() {
                w.write_record([
                    (t + i).to_string(),
                    col.clone(),
                    format!("{}", pred_raw.get2(i, j)),
                    "forecast".to_string(),
                ])
                .map_err(|e| Error::Data(e.to_string()))?;
            }
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))?;
    }
    Ok(())
}

/// Search hyperparameters by training the model per trial; writes the
/// trial journal and the winning configuration as a trainable config.
pub fn cmd_hpo(
    mut cfg: RunConfig,
    seed_flag: Option<u64>,
    space_file: Option<&Path>,
    trials_flag: Option<usize>,
    workers_flag: Option<usize>,
) -> Result<()> {
    let seed = cfg.resolve_seed(seed_flag)?;
    if let Some(t) = trials_flag {
        cfg.trials = t;
    }
    if let Some(w) = workers_flag {
        cfg.workers = w;
    }
    cfg.validate()?;
    ensure_out_dir(&cfg.out)?;
    write_json(&cfg, &cfg.out.join("resolved_config.json"))?;
    let space = match space_file {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read space {}: {e}", p.display())))?;
            let s: SearchSpace = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("space {}: {e}", p.display())))?;
            s.validate()?;
            s
        }
        None => crate::hpo::space::default_space(),
    };
    let series = load_series(&cfg)?;

    let base = cfg.clone();
    let objective = |h: &[f64]| -> Result<f64> {
        let mut trial_cfg = base.clone();
        for (spec, &v) in space.params.iter().zip(h) {
            trial_cfg.apply_param(&spec.name, v)?;
        }
        let outcome = run_training(&trial_cfg, &series)?;
        Ok(outcome.best_valid)
    };
    let search = crate::hpo::SearchConfig {
        n_trials: cfg.trials,
        n_workers: cfg.workers,
        seed,
        journal_path: Some(cfg.out.join("trials.ndjson")),
    };
    let outcome = crate::hpo::run(objective, &space, &search)?;

    let mut best_cfg = cfg.clone();
    for (spec, &v) in space.params.iter().zip(&outcome.best.h) {
        best_cfg.apply_param(&spec.name, v)?;
    }
    write_json(&best_cfg, &cfg.out.join("best_config.json"))?;
    log::info!(
        "best trial {} with validation loss {:?}: {:?}",
        outcome.best.trial_id,
        outcome.best.l_valid,
        outcome.best.h
    );
    Ok(())
}

/// Score how repeatable the dataset's history is; writes a JSON report
/// and a per-fold CSV.
pub fn cmd_predictability(mut cfg: RunConfig, seed_flag: Option<u64>) -> Result<()> {
    cfg.resolve_seed(seed_flag)?;
    cfg.validate()?;
    ensure_out_dir(&cfg.out)?;
    write_json(&cfg, &cfg.out.join("resolved_config.json"))?;
    let series = load_series(&cfg)?;
    let (train, valid, _) = split_and_window(&series, cfg.input_len, cfg.horizon, cfg.ratios)?;
    let report = crate::predictability::predictability(&train, &valid, cfg.k, cfg.folds)?;
    write_json(&report, &cfg.out.join("predictability.json"))?;
    crate::predictability::write_fold_csv(&report, &cfg.out.join("folds.csv"))?;
    log::info!("predictability score {:.4} (K={})", report.score, report.k);
    Ok(())
}

/// Time the attention kernels and write the results CSV.
pub fn cmd_bench(lengths: &[usize], d_model: usize, np: usize, reps: usize, out: &Path) -> Result<()> {
    let results = crate::bench::run_bench(lengths, d_model, np, reps)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_out_dir(parent)?;
        }
    }
    crate::bench::write_csv(&results, out)?;
    Ok(())
}
