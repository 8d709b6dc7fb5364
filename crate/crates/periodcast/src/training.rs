//! ADAM + L1 training with early stopping, plus evaluation metrics and
//! the naive forecasting baselines used as sanity references.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::model::{Mode, ParamStore, ForecastModel, TapedParams};
use crate::parallel::par_map;
use crate::tensor::{Tape, Tensor};

/// Mean absolute deviation over all elements.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> f64 {
    let n = pred.numel() as f64;
    pred.data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n
}

// ── optimizer ───────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global-norm gradient clip; None disables.
    pub clip: Option<f64>,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip: Some(5.0) }
    }
}

/// First/second moment buffers aligned with the parameter name order.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let m = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        let v = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        AdamState { m, v, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected update. `grads` must align with the param order.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam_step: {} gradients for {} parameters",
            grads.len(),
            state.m.len()
        )));
    }
    let scale = match cfg.clip {
        Some(clip) => {
            let sq: f64 = grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum();
            let norm = sq.sqrt();
            if norm > clip {
                clip / norm
            } else {
                1.0
            }
        }
        None => 1.0,
    };
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    for (idx, (_, p)) in params.iter_mut().enumerate() {
        let g = &grads[idx];
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        for ((pv, gv), (mv, vv)) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
        {
            let gc = gv * scale;
            *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gc;
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gc * gc;
            let mhat = *mv / bc1;
            let vhat = *vv / bc2;
            *pv -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

// ── evaluation ──────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct EvalMetrics {
    /// Normalized-scale errors (the default reporting scale).
    pub mse: f64,
    pub mae: f64,
    /// Raw-scale errors after denormalization.
    pub mse_raw: f64,
    pub mae_raw: f64,
}

fn accumulate(pred: &Tensor, target: &Tensor) -> (f64, f64) {
    let mut se = 0.0;
    let mut ae = 0.0;
    for (a, b) in pred.data().iter().zip(target.data()) {
        let d = a - b;
        se += d * d;
        ae += d.abs();
    }
    (se, ae)
}

/// MSE/MAE of the model over every window of a dataset.
pub fn evaluate(model: &ForecastModel, params: &ParamStore, ds: &WindowedDataset) -> Result<EvalMetrics> {
    if ds.is_empty() {
        return Err(Error::Data("evaluate: dataset has no windows".into()));
    }
    let idx: Vec<usize> = (0..ds.len()).collect();
    let per_window: Vec<Result<(f64, f64, f64, f64)>> = par_map(&idx, |&i| {
        let pred = model.predict(params, &ds.sample(i))?;
        let target = ds.label(i);
        let (se, ae) = accumulate(&pred, &target);
        let (se_r, ae_r) = accumulate(&ds.stats.denormalize(&pred), &ds.stats.denormalize(&target));
        Ok((se, ae, se_r, ae_r))
    });
    let mut tot = (0.0, 0.0, 0.0, 0.0);
    for r in per_window {
        let (se, ae, se_r, ae_r) = r?;
        tot = (tot.0 + se, tot.1 + ae, tot.2 + se_r, tot.3 + ae_r);
    }
    let n = (ds.len() * ds.horizon * ds.n_features()) as f64;
    Ok(EvalMetrics { mse: tot.0 / n, mae: tot.1 / n, mse_raw: tot.2 / n, mae_raw: tot.3 / n })
}

/// Forecast that repeats the last observed value (normalized scale).
pub fn persistence_baseline(ds: &WindowedDataset) -> EvalMetrics {
    baseline(ds, |sample, _t, j| sample.get2(sample.rows() - 1, j))
}

/// Forecast that repeats the last observed period cyclically.
pub fn seasonal_naive_baseline(ds: &WindowedDataset, period: usize) -> EvalMetrics {
    let p = period.max(1).min(ds.input_len);
    baseline(ds, move |sample, t, j| sample.get2(sample.rows() - p + (t % p), j))
}

fn baseline(ds: &WindowedDataset, f: impl Fn(&Tensor, usize, usize) -> f64 + Sync) -> EvalMetrics {
    let idx: Vec<usize> = (0..ds.len()).collect();
    let d = ds.n_features();
    let per: Vec<(f64, f64, f64, f64)> = par_map(&idx, |&i| {
        let sample = ds.sample(i);
        let target = ds.label(i);
        let mut pred = Tensor::zeros(&[ds.horizon, d]);
        for t in 0..ds.horizon {
            for j in 0..d {
                pred.set2(t, j, f(&sample, t, j));
            }
        }
        let (se, ae) = accumulate(&pred, &target);
        let (se_r, ae_r) = accumulate(&ds.stats.denormalize(&pred), &ds.stats.denormalize(&target));
        (se, ae, se_r, ae_r)
    });
    let mut tot = (0.0, 0.0, 0.0, 0.0);
    for (se, ae, se_r, ae_r) in per {
        tot = (tot.0 + se, tot.1 + ae, tot.2 + se_r, tot.3 + ae_r);
    }
    let n = (ds.len() * ds.horizon * d) as f64;
    EvalMetrics { mse: tot.0 / n, mae: tot.1 / n, mse_raw: tot.2 / n, mae_raw: tot.3 / n }
}

// ── early-stopped training loop ─────────────────────────────────────

#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_mse: f64,
    pub valid_mae: f64,
}

/// Anything the early-stopped loop can drive: one epoch of optimization
/// plus a way to snapshot the current parameters.
pub trait Trainable {
    type Snapshot: Clone;
    fn run_epoch(&mut self, epoch: usize) -> Result<EpochStats>;
    fn snapshot(&self) -> Self::Snapshot;
}

#[derive(Debug)]
pub struct TrainOutcome<S> {
    pub best_snapshot: S,
    pub best_valid: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Run up to `max_epochs`, stopping when the validation loss has not
/// strictly improved for `patience` consecutive epochs. Returns the
/// parameters from the best-validation epoch, not the last.
pub fn train_loop<T: Trainable>(
    trainable: &mut T,
    max_epochs: usize,
    patience: usize,
    mut on_epoch: impl FnMut(usize, &EpochStats, f64),
) -> Result<TrainOutcome<T::Snapshot>> {
    if patience == 0 {
        return Err(Error::Config("patience must be >= 1".into()));
    }
    let mut best_valid = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_snapshot: Option<T::Snapshot> = None;
    let mut since_improvement = 0usize;
    let mut epochs_run = 0usize;
    for epoch in 1..=max_epochs {
        let t0 = std::time::Instant::now();
        let stats = trainable.run_epoch(epoch)?;
        epochs_run = epoch;
        if !stats.valid_loss.is_finite() || !stats.train_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "training aborted at epoch {epoch}: non-finite loss (train {}, valid {})",
                stats.train_loss, stats.valid_loss
            )));
        }
        on_epoch(epoch, &stats, t0.elapsed().as_secs_f64());
        if stats.valid_loss < best_valid {
            best_valid = stats.valid_loss;
            best_epoch = epoch;
            best_snapshot = Some(trainable.snapshot());
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= patience {
                break;
            }
        }
    }
    let best_snapshot = best_snapshot.ok_or_else(|| Error::Config("no epochs were run".into()))?;
    Ok(TrainOutcome { best_snapshot, best_valid, best_epoch, epochs_run })
}

// ── model trainer ───────────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub grad_clip: Option<f64>,
    /// Stride over training windows per epoch (1 = every window).
    pub stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 30,
            patience: 4,
            batch_size: 32,
            lr: 1e-4,
            seed: 42,
            grad_clip: Some(5.0),
            stride: 1,
        }
    }
}

fn sample_seed(base: u64, epoch: usize, index: usize) -> u64 {
    base.wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add((epoch as u64) << 32)
        .wrapping_add(index as u64)
}

pub struct ModelTrainer<'a> {
    pub model: &'a ForecastModel,
    pub params: ParamStore,
    adam_state: AdamState,
    adam_cfg: AdamConfig,
    train: &'a WindowedDataset,
    valid: &'a WindowedDataset,
    cfg: TrainConfig,
}

impl<'a> ModelTrainer<'a> {
    pub fn new(
        model: &'a ForecastModel,
        train: &'a WindowedDataset,
        valid: &'a WindowedDataset,
        cfg: TrainConfig,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Data("training dataset has no windows".into()));
        }
        let params = model.init_params(cfg.seed);
        let adam_state = AdamState::new(&params);
        let adam_cfg = AdamConfig { clip: cfg.grad_clip, ..AdamConfig::with_lr(cfg.lr) };
        Ok(ModelTrainer { model, params, adam_state, adam_cfg, train, valid, cfg })
    }

    fn batch_gradients(&self, indices: &[usize], epoch: usize) -> Result<(f64, Vec<Tensor>)> {
        let results: Vec<Result<(f64, Vec<Tensor>)>> = par_map(indices, |&i| {
            let tape = Tape::new();
            let tp = TapedParams::new(&tape, &self.params);
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(self.cfg.seed, epoch, i));
            let out = self
                .model
                .forward(&tape, &self.train.sample(i), &tp, &mut Mode::Train { rng: &mut rng })?;
            let target = tape.constant(self.train.label(i));
            let loss = out.l1_loss(target)?;
            let loss_val = loss.value().data()[0];
            let grads = tape.backward(loss)?;
            Ok((loss_val, tp.collect_grads(&grads)))
        });
        let n = indices.len() as f64;
        let mut total_loss = 0.0;
        let mut acc: Option<Vec<Tensor>> = None;
        for r in results {
            let (loss, grads) = r?;
            total_loss += loss;
            match &mut acc {
                None => acc = Some(grads),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&grads) {
                        for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
                            *av += gv;
                        }
                    }
                }
            }
        }
        let mut grads = acc.expect("non-empty batch");
        for g in &mut grads {
            for v in g.data_mut() {
                *v /= n;
            }
        }
        Ok((total_loss / n, grads))
    }

    fn validation_metrics(&self) -> Result<(f64, f64, f64)> {
        if self.valid.is_empty() {
            return Ok((f64::NAN, f64::NAN, f64::NAN));
        }
        let m = evaluate(self.model, &self.params, self.valid)?;
        Ok((m.mae, m.mse, m.mae))
    }
}

impl Trainable for ModelTrainer<'_> {
    type Snapshot = ParamStore;

    fn run_epoch(&mut self, epoch: usize) -> Result<EpochStats> {
        let mut indices: Vec<usize> = (0..self.train.len()).step_by(self.cfg.stride.max(1)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(self.cfg.seed, epoch, usize::MAX / 2));
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        // chunks() borrows indices while we mutate self, so collect first
        let chunks: Vec<Vec<usize>> = indices.chunks(self.cfg.batch_size.max(1)).map(|c| c.to_vec()).collect();
        for chunk in &chunks {
            let (loss, grads) = self.batch_gradients(chunk, epoch)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("training aborted: non-finite batch loss at epoch {epoch}")));
            }
            adam_step(&mut self.params, &grads, &mut self.adam_state, &self.adam_cfg)?;
            epoch_loss += loss;
            batches += 1;
        }
        let train_loss = epoch_loss / batches.max(1) as f64;
        let (valid_loss, valid_mse, valid_mae) = self.validation_metrics()?;
        let valid_loss = if valid_loss.is_nan() { train_loss } else { valid_loss };
        Ok(EpochStats {
            train_loss,
            valid_loss,
            valid_mse: if valid_mse.is_nan() { train_loss } else { valid_mse },
            valid_mae: if valid_mae.is_nan() { train_loss } else { valid_mae },
        })
    }

    fn snapshot(&self) -> ParamStore {
        self.params.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split_and_window, synthetic_series};
    use crate::model::ModelConfig;
    use crate::tensor::{Activation, PadMode};

    #[test]
    fn l1_loss_examples() {
        let a = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap();
        assert_eq!(l1_loss(&a, &a), 0.0);
        assert_eq!(l1_loss(&a, &b), 1.5);
        // symmetric in the sign of the error
        let c = Tensor::new(vec![2], vec![-1.0, -2.0]).unwrap();
        let z = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap();
        assert_eq!(l1_loss(&a, &z), l1_loss(&c, &z));
    }

    fn scalar_store(v: f64) -> ParamStore {
        let mut p = ParamStore::default();
        p.insert("x", Tensor::scalar(v));
        p
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = scalar_store(3.0);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig::with_lr(0.1);
        adam_step(&mut p, &[Tensor::scalar(0.0)], &mut st, &cfg).unwrap();
        assert_eq!(p.get("x").unwrap().data()[0], 3.0);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // bias correction makes the first update ~ lr * sign(g)
        let mut p = scalar_store(1.0);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig { clip: None, ..AdamConfig::with_lr(0.01) };
        adam_step(&mut p, &[Tensor::scalar(0.37)], &mut st, &cfg).unwrap();
        let moved = 1.0 - p.get("x").unwrap().data()[0];
        assert!((moved - 0.01).abs() < 1e-5, "moved {moved}");
    }

    #[test]
    fn adam_converges_on_scalar_quadratic() {
        // minimize (x - 2)^2 from x = -1
        let mut p = scalar_store(-1.0);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig { clip: None, ..AdamConfig::with_lr(0.1) };
        for _ in 0..200 {
            let x = p.get("x").unwrap().data()[0];
            let g = 2.0 * (x - 2.0);
            adam_step(&mut p, &[Tensor::scalar(g)], &mut st, &cfg).unwrap();
        }
        let x = p.get("x").unwrap().data()[0];
        assert!((x - 2.0).abs() < 0.05, "x = {x}");
    }

    fn tiny_model_config() -> ModelConfig {
        ModelConfig {
            input_len: 16,
            horizon: 8,
            period: 4,
            ma_kernel: 5,
            scale: 0.5,
            n_features: 1,
            enc_layers: 1,
            dec_layers: 1,
            d_model: 8,
            n_heads: 2,
            ff_kernel: 3,
            d_ff: 8,
            sub_ratio: 0.5,
            dropout: 0.0,
            activation: Activation::Gelu,
            ff_activation: Activation::Gelu,
            pad_mode: PadMode::Replicate,
        }
    }

    #[test]
    fn evaluate_perfect_and_constant_predictors() {
        let s = synthetic_series(300, 1, 8.0, 1.0, 0.0, 0.05, 1);
        let (train, _, _) = split_and_window(&s, 8, 4, [0.9, 0.05, 0.05]).unwrap();
        // constant-zero predictor on standardized data: MSE ~ variance ~ 1
        let m = persistence_like_zero(&train);
        assert!((m.0 - 1.0).abs() < 0.35, "mse {}", m.0);
        // Jensen: MSE >= MAE^2
        assert!(m.0 >= m.1 * m.1);
    }

    fn persistence_like_zero(ds: &WindowedDataset) -> (f64, f64) {
        let mut se = 0.0;
        let mut ae = 0.0;
        let mut n = 0.0;
        for i in 0..ds.len() {
            let label = ds.label(i);
            for v in label.data() {
                se += v * v;
                ae += v.abs();
                n += 1.0;
            }
        }
        (se / n, ae / n)
    }

    #[test]
    fn baselines_are_sane_on_pure_sine() {
        // seasonal-naive is near-perfect on a clean sine, persistence is not
        let s = synthetic_series(400, 1, 8.0, 1.0, 0.0, 0.0, 2);
        let (train, _, _) = split_and_window(&s, 16, 8, [0.9, 0.05, 0.05]).unwrap();
        let sn = seasonal_naive_baseline(&train, 8);
        let pe = persistence_baseline(&train);
        assert!(sn.mse < 1e-6, "seasonal-naive mse {}", sn.mse);
        assert!(pe.mse > 0.1, "persistence mse {}", pe.mse);
    }

    struct Scripted {
        losses: Vec<f64>,
        epoch_seen: usize,
    }

    impl Trainable for Scripted {
        type Snapshot = usize; // "parameters" = the epoch index
        fn run_epoch(&mut self, epoch: usize) -> Result<EpochStats> {
            self.epoch_seen = epoch;
            let l = self.losses[epoch - 1];
            Ok(EpochStats { train_loss: l, valid_loss: l, valid_mse: l, valid_mae: l })
        }
        fn snapshot(&self) -> usize {
            self.epoch_seen
        }
    }

    #[test]
    fn early_stopping_patience_semantics() {
        let mut s = Scripted { losses: vec![1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95, 0.96], epoch_seen: 0 };
        let out = train_loop(&mut s, 8, 4, |_, _, _| {}).unwrap();
        assert_eq!(out.epochs_run, 6);
        assert_eq!(out.best_epoch, 2);
        assert_eq!(out.best_snapshot, 2);
        assert!((out.best_valid - 0.9).abs() < 1e-12);
    }

    #[test]
    fn patience_longer_than_epochs_runs_all() {
        let mut s = Scripted { losses: vec![1.0, 1.1, 1.2], epoch_seen: 0 };
        let out = train_loop(&mut s, 3, 10, |_, _, _| {}).unwrap();
        assert_eq!(out.epochs_run, 3);
        assert_eq!(out.best_epoch, 1);
    }

    #[test]
    fn monotone_improvement_never_stops_early() {
        let mut s = Scripted { losses: (0..10).map(|i| 1.0 - 0.05 * i as f64).collect(), epoch_seen: 0 };
        let out = train_loop(&mut s, 10, 2, |_, _, _| {}).unwrap();
        assert_eq!(out.epochs_run, 10);
        assert_eq!(out.best_epoch, 10);
    }

    struct NanAfter {
        n: usize,
    }

    impl Trainable for NanAfter {
        type Snapshot = ();
        fn run_epoch(&mut self, epoch: usize) -> Result<EpochStats> {
            let l = if epoch > self.n { f64::NAN } else { 1.0 / epoch as f64 };
            Ok(EpochStats { train_loss: l, valid_loss: l, valid_mse: l, valid_mae: l })
        }
        fn snapshot(&self) {}
    }

    #[test]
    fn nan_loss_aborts_with_diagnostic() {
        let mut s = NanAfter { n: 2 };
        let err = train_loop(&mut s, 10, 4, |_, _, _| {}).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(err.to_string().contains("epoch 3"));
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let s = synthetic_series(240, 1, 8.0, 1.0, 0.0, 0.02, 3);
        let (train, valid, _) = split_and_window(&s, 16, 8, [0.7, 0.15, 0.15]).unwrap();
        let model = ForecastModel::new(tiny_model_config()).unwrap();
        let cfg = TrainConfig { max_epochs: 5, patience: 10, lr: 1e-3, seed: 7, ..Default::default() };
        let run = || {
            let mut trainer = ModelTrainer::new(&model, &train, &valid, cfg.clone()).unwrap();
            let mut first = None;
            let mut last = None;
            let out = train_loop(&mut trainer, 5, 10, |_, st, _| {
                if first.is_none() {
                    first = Some(st.train_loss);
                }
                last = Some(st.train_loss);
            })
            .unwrap();
            (first.unwrap(), last.unwrap(), out.best_valid, out.best_snapshot)
        };
        let (first, last, best_a, params_a) = run();
        assert!(last < first, "loss did not decrease: {first} -> {last}");
        // seeded rerun is bit-identical
        let (_, _, best_b, params_b) = run();
        assert_eq!(best_a.to_bits(), best_b.to_bits());
        assert_eq!(params_a, params_b);
    }

    #[test]
    fn gate_closed_model_still_trains() {
        let mut mc = tiny_model_config();
        mc.scale = 0.0;
        let s = synthetic_series(240, 1, 8.0, 1.0, 0.0, 0.02, 4);
        let (train, valid, _) = split_and_window(&s, 16, 8, [0.7, 0.15, 0.15]).unwrap();
        let model = ForecastModel::new(mc).unwrap();
        let cfg = TrainConfig { max_epochs: 5, patience: 10, lr: 1e-3, seed: 8, ..Default::default() };
        let mut trainer = ModelTrainer::new(&model, &train, &valid, cfg).unwrap();
        let mut losses = Vec::new();
        train_loop(&mut trainer, 5, 10, |_, st, _| losses.push(st.train_loss)).unwrap();
        assert!(losses.last().unwrap() < losses.first().unwrap());
    }

    #[test]
    fn best_params_reproduce_recorded_validation_loss() {
        let s = synthetic_series(240, 1, 8.0, 1.0, 0.0, 0.02, 5);
        let (train, valid, _) = split_and_window(&s, 16, 8, [0.7, 0.15, 0.15]).unwrap();
        let model = ForecastModel::new(tiny_model_config()).unwrap();
        let cfg = TrainConfig { max_epochs: 4, patience: 10, lr: 1e-3, seed: 9, ..Default::default() };
        let mut trainer = ModelTrainer::new(&model, &train, &valid, cfg).unwrap();
        let out = train_loop(&mut trainer, 4, 10, |_, _, _| {}).unwrap();
        let m = evaluate(&model, &out.best_snapshot, &valid).unwrap();
        assert!((m.mae - out.best_valid).abs() < 1e-10);
    }
}
