//! Encoder-decoder forecaster over decomposed series.
//!
//! The encoder refines the seasonal component of the full input window;
//! the decoder runs gated self- and cross-period attention over a recent
//! subseries extended with length-O placeholders, accumulating trend
//! increments that are added back to the seasonal projection for the
//! final forecast.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{cross_period_attention, period_attention, AttentionWeights, PeriodAttentionConfig};
use crate::data::NormStats;
use crate::decomp::decompose;
use crate::error::{Error, Result};
use crate::tensor::{Activation, PadMode, Tape, Tensor, Var};

fn default_enc_layers() -> usize {
    2
}
fn default_dec_layers() -> usize {
    1
}
fn default_d_model() -> usize {
    512
}
fn default_n_heads() -> usize {
    8
}
fn default_ff_kernel() -> usize {
    3
}
fn default_d_ff() -> usize {
    2048
}
fn default_sub_ratio() -> f64 {
    0.5
}
fn default_dropout() -> f64 {
    0.05
}

/// All architectural hyperparameters of one model instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input window length L.
    pub input_len: usize,
    /// Prediction horizon O.
    pub horizon: usize,
    /// Period length P for the attention blocks.
    pub period: usize,
    /// Moving-average kernel size k (odd).
    pub ma_kernel: usize,
    /// Attention gate s; 0 disables attention.
    pub scale: f64,
    /// Number of input features D_in.
    pub n_features: usize,
    #[serde(default = "default_enc_layers")]
    pub enc_layers: usize,
    #[serde(default = "default_dec_layers")]
    pub dec_layers: usize,
    #[serde(default = "default_d_model")]
    pub d_model: usize,
    #[serde(default = "default_n_heads")]
    pub n_heads: usize,
    /// Feed-forward convolution kernel (odd).
    #[serde(default = "default_ff_kernel")]
    pub ff_kernel: usize,
    #[serde(default = "default_d_ff")]
    pub d_ff: usize,
    /// Fraction of L used as the decoder's recent subseries.
    #[serde(default = "default_sub_ratio")]
    pub sub_ratio: f64,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// Activation applied to V when the attention gate is closed.
    #[serde(default)]
    pub activation: Activation,
    /// Activation between the two feed-forward convolutions.
    #[serde(default)]
    pub ff_activation: Activation,
    /// Padding for convolutions and moving averages.
    #[serde(default)]
    pub pad_mode: PadMode,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.horizon == 0 || self.n_features == 0 {
            return Err(Error::Config("input_len, horizon and n_features must be >= 1".into()));
        }
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return Err(Error::Config("enc_layers and dec_layers must be >= 1".into()));
        }
        if !(self.sub_ratio > 0.0 && self.sub_ratio <= 1.0) {
            return Err(Error::Config(format!("sub_ratio must be in (0,1], got {}", self.sub_ratio)));
        }
        if self.ff_kernel % 2 == 0 {
            return Err(Error::Config(format!("ff_kernel must be odd, got {}", self.ff_kernel)));
        }
        if self.ma_kernel % 2 == 0 {
            return Err(Error::Config(format!("ma_kernel must be odd, got {}", self.ma_kernel)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0,1), got {}", self.dropout)));
        }
        self.attention_config().validate()
    }

    pub fn attention_config(&self) -> PeriodAttentionConfig {
        PeriodAttentionConfig {
            period: self.period,
            scale: self.scale,
            n_heads: self.n_heads,
            d_model: self.d_model,
            activation: self.activation,
        }
    }

    /// Length of the decoder's recent subseries.
    pub fn sub_len(&self) -> usize {
        ((self.sub_ratio * self.input_len as f64).ceil() as usize).max(1)
    }
}

/// Learnable weights keyed by name. The key order is fixed (BTreeMap),
/// which keeps optimizer state, checkpoints and gradient reductions
/// deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    map: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn insert(&mut self, name: &str, t: Tensor) {
        self.map.insert(name.to_string(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.map
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.map.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.map.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.map.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.map.values().map(|t| t.numel()).sum()
    }
}

/// Parameters mirrored onto a tape as differentiable leaves.
pub struct TapedParams<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> TapedParams<'t> {
    pub fn new(tape: &'t Tape, params: &ParamStore) -> Self {
        let vars = params
            .iter()
            .map(|(name, t)| (name.clone(), tape.leaf(t.clone())))
            .collect();
        TapedParams { vars }
    }

    pub fn var(&self, name: &str) -> Result<Var<'t>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing parameter '{name}'")))
    }

    fn attention(&self, prefix: &str) -> Result<AttentionWeights<'t>> {
        Ok(AttentionWeights {
            wq: self.var(&format!("{prefix}.wq"))?,
            bq: self.var(&format!("{prefix}.bq"))?,
            wk: self.var(&format!("{prefix}.wk"))?,
            bk: self.var(&format!("{prefix}.bk"))?,
            wv: self.var(&format!("{prefix}.wv"))?,
            bv: self.var(&format!("{prefix}.bv"))?,
            wo: self.var(&format!("{prefix}.wo"))?,
            bo: self.var(&format!("{prefix}.bo"))?,
        })
    }

    /// Gradients of every parameter in name order, zeros where unused.
    pub fn collect_grads(&self, grads: &crate::tensor::Gradients) -> Vec<Tensor> {
        self.vars.values().map(|&v| grads.get_or_zeros(v)).collect()
    }
}

/// Forward-pass mode; training mode draws dropout masks from the rng.
pub enum Mode<'r> {
    Eval,
    Train { rng: &'r mut ChaCha8Rng },
}

/// Decoder seed streams: seasonal gets length-O zero placeholders, trend
/// gets the per-feature mean of the recent subseries.
pub struct DecoderInputs<'t> {
    pub seasonal_init: Var<'t>,
    pub trend_init: Var<'t>,
}

pub struct ForecastModel {
    pub cfg: ModelConfig,
}

impl ForecastModel {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(ForecastModel { cfg })
    }

    /// Deterministic parameter initialization from a seed.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let cfg = &self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::default();
        let xavier = |fan_in: usize, fan_out: usize| (2.0 / (fan_in + fan_out) as f64).sqrt();

        let linear = |p: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, i: usize, o: usize| {
            p.insert(&format!("{name}.w"), Tensor::randn(&[i, o], xavier(i, o), rng));
            p.insert(&format!("{name}.b"), Tensor::zeros(&[o]));
        };
        let attn = |p: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str| {
            let d = cfg.d_model;
            for part in ["wq", "wk", "wv", "wo"] {
                p.insert(&format!("{prefix}.{part}"), Tensor::randn(&[d, d], xavier(d, d), rng));
            }
            for part in ["bq", "bk", "bv", "bo"] {
                p.insert(&format!("{prefix}.{part}"), Tensor::zeros(&[d]));
            }
        };
        let ff = |p: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str| {
            let (k, d, f) = (cfg.ff_kernel, cfg.d_model, cfg.d_ff);
            p.insert(&format!("{prefix}.w1"), Tensor::randn(&[k, d, f], xavier(k * d, f), rng));
            p.insert(&format!("{prefix}.b1"), Tensor::zeros(&[f]));
            p.insert(&format!("{prefix}.w2"), Tensor::randn(&[k, f, d], xavier(k * f, d), rng));
            p.insert(&format!("{prefix}.b2"), Tensor::zeros(&[d]));
        };

        linear(&mut p, &mut rng, "embed_enc", cfg.n_features, cfg.d_model);
        linear(&mut p, &mut rng, "embed_dec", cfg.n_features, cfg.d_model);
        for l in 0..cfg.enc_layers {
            attn(&mut p, &mut rng, &format!("enc{l}.pa"));
            ff(&mut p, &mut rng, &format!("enc{l}.ff"));
        }
        for l in 0..cfg.dec_layers {
            attn(&mut p, &mut rng, &format!("dec{l}.pa"));
            attn(&mut p, &mut rng, &format!("dec{l}.cpa"));
            ff(&mut p, &mut rng, &format!("dec{l}.ff"));
            linear(&mut p, &mut rng, &format!("dec{l}.wtc"), cfg.d_model, cfg.n_features);
        }
        linear(&mut p, &mut rng, "head", cfg.d_model, cfg.n_features);
        p
    }

    fn dropout<'t>(&self, tape: &'t Tape, x: Var<'t>, mode: &mut Mode<'_>) -> Result<Var<'t>> {
        let rate = self.cfg.dropout;
        match mode {
            Mode::Train { rng } if rate > 0.0 => {
                let shape = x.shape();
                let keep = 1.0 - rate;
                let numel: usize = shape.iter().product();
                let data = (0..numel)
                    .map(|_| {
                        use rand::Rng;
                        if rng.gen_range(0.0..1.0) < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let mask = tape.constant(Tensor::new(shape, data)?);
                x.mul(mask)
            }
            _ => Ok(x),
        }
    }

    /// Residual two-convolution block across the time axis.
    pub fn feed_forward<'t>(
        &self,
        tape: &'t Tape,
        x: Var<'t>,
        tp: &TapedParams<'t>,
        prefix: &str,
        mode: &mut Mode<'_>,
    ) -> Result<Var<'t>> {
        let cfg = &self.cfg;
        let h = x
            .conv1d(tp.var(&format!("{prefix}.w1"))?, cfg.pad_mode)?
            .add_bias(tp.var(&format!("{prefix}.b1"))?)?
            .activation(cfg.ff_activation)
            .conv1d(tp.var(&format!("{prefix}.w2"))?, cfg.pad_mode)?
            .add_bias(tp.var(&format!("{prefix}.b2"))?)?;
        let h = self.dropout(tape, h, mode)?;
        x.add(h)
    }

    /// One encoder layer: both sublayers discard the trend component.
    pub fn encoder_layer<'t>(
        &self,
        tape: &'t Tape,
        x: Var<'t>,
        tp: &TapedParams<'t>,
        layer: usize,
        mode: &mut Mode<'_>,
    ) -> Result<Var<'t>> {
        let cfg = &self.cfg;
        let acfg = cfg.attention_config();
        let w = tp.attention(&format!("enc{layer}.pa"))?;
        let pa = period_attention(x, x, x, &w, &acfg)?;
        let pa = self.dropout(tape, pa, mode)?;
        let x1 = x.sub(pa.add(x)?.moving_average(cfg.ma_kernel)?)?;
        let ffr = self.feed_forward(tape, x1, tp, &format!("enc{layer}.ff"), mode)?;
        x1.sub(ffr.moving_average(cfg.ma_kernel)?)
    }

    /// One decoder layer; returns the refined seasonal stream and the
    /// accumulated trend stream (feature space).
    pub fn decoder_layer<'t>(
        &self,
        tape: &'t Tape,
        sn: Var<'t>,
        tc: Var<'t>,
        enc_out: Var<'t>,
        tp: &TapedParams<'t>,
        layer: usize,
        mode: &mut Mode<'_>,
    ) -> Result<(Var<'t>, Var<'t>)> {
        let cfg = &self.cfg;
        let acfg = cfg.attention_config();

        let wpa = tp.attention(&format!("dec{layer}.pa"))?;
        let pa = self.dropout(tape, period_attention(sn, sn, sn, &wpa, &acfg)?, mode)?;
        let tc1 = pa.add(sn)?.moving_average(cfg.ma_kernel)?;
        let sn1 = sn.sub(tc1)?;

        let wcpa = tp.attention(&format!("dec{layer}.cpa"))?;
        let cpa = self.dropout(tape, cross_period_attention(sn1, enc_out, &wcpa, &acfg)?, mode)?;
        let tc2 = cpa.add(sn1)?.moving_average(cfg.ma_kernel)?;
        let sn2 = sn1.sub(tc2)?;

        let ffr = self.feed_forward(tape, sn2, tp, &format!("dec{layer}.ff"), mode)?;
        let tc3 = ffr.moving_average(cfg.ma_kernel)?;
        let sn3 = sn2.sub(tc3)?;

        let w_tc = tp.var(&format!("dec{layer}.wtc.w"))?;
        let b_tc = tp.var(&format!("dec{layer}.wtc.b"))?;
        let increment = tc1.add(tc2)?.add(tc3)?.matmul(w_tc)?.add_bias(b_tc)?;
        let tc_out = tc.add(increment)?;
        Ok((sn3, tc_out))
    }

    /// Seed the decoder streams from the recent subseries of the input.
    pub fn build_inputs<'t>(&self, tape: &'t Tape, x: Var<'t>) -> Result<DecoderInputs<'t>> {
        let cfg = &self.cfg;
        let l = cfg.input_len;
        let sub_len = cfg.sub_len();
        let x_sub = if sub_len == l { x } else { x.slice_rows(l - sub_len, l)? };
        let d = decompose(x_sub, cfg.ma_kernel)?;
        let zeros = tape.constant(Tensor::zeros(&[cfg.horizon, cfg.n_features]));
        let seasonal_init = d.seasonal.concat_rows(zeros)?;
        let mean = x_sub.mean_axis0()?.repeat_rows(cfg.horizon)?;
        let trend_init = d.trend.concat_rows(mean)?;
        Ok(DecoderInputs { seasonal_init, trend_init })
    }

    /// Full forward pass: (L, D_in) normalized input to (O, D_in) forecast.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        x: &Tensor,
        tp: &TapedParams<'t>,
        mode: &mut Mode<'_>,
    ) -> Result<Var<'t>> {
        let cfg = &self.cfg;
        if x.shape() != [cfg.input_len, cfg.n_features] {
            return Err(Error::Shape(format!(
                "forward expects ({}, {}), got {:?}",
                cfg.input_len,
                cfg.n_features,
                x.shape()
            )));
        }
        let xv = tape.constant(x.clone());

        let mut enc = xv
            .matmul(tp.var("embed_enc.w")?)?
            .add_bias(tp.var("embed_enc.b")?)?;
        for l in 0..cfg.enc_layers {
            enc = self.encoder_layer(tape, enc, tp, l, mode)?;
        }

        let dec_inputs = self.build_inputs(tape, xv)?;
        let mut sn = dec_inputs
            .seasonal_init
            .matmul(tp.var("embed_dec.w")?)?
            .add_bias(tp.var("embed_dec.b")?)?;
        let mut tc = dec_inputs.trend_init;
        for l in 0..cfg.dec_layers {
            let (sn_next, tc_next) = self.decoder_layer(tape, sn, tc, enc, tp, l, mode)?;
            sn = sn_next;
            tc = tc_next;
        }

        let seasonal_out = sn.matmul(tp.var("head.w")?)?.add_bias(tp.var("head.b")?)?;
        let full = seasonal_out.add(tc)?;
        let total = cfg.sub_len() + cfg.horizon;
        full.slice_rows(total - cfg.horizon, total)
    }

    /// Eval-mode forward on raw params; returns the forecast tensor.
    pub fn predict(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let tp = TapedParams::new(&tape, params);
        let out = self.forward(&tape, x, &tp, &mut Mode::Eval)?;
        Ok(out.value())
    }
}

// ── checkpoint io ───────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    norm: Option<NormStats>,
    tensors: Vec<TensorMeta>,
}

/// Write a checkpoint: one JSON header line, then the raw little-endian
/// f64 payload of each tensor in header order. Bit-exact round-trip.
pub fn save_checkpoint(
    path: &Path,
    cfg: &ModelConfig,
    params: &ParamStore,
    norm: Option<&NormStats>,
) -> Result<()> {
    let header = CheckpointHeader {
        config: cfg.clone(),
        norm: norm.cloned(),
        tensors: params
            .iter()
            .map(|(name, t)| TensorMeta { name: name.clone(), shape: t.shape().to_vec() })
            .collect(),
    };
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::Data(e.to_string()))?;
    w.write_all(b"\n")?;
    for (_, t) in params.iter() {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ParamStore, Option<NormStats>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: CheckpointHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Data(format!("bad checkpoint header: {e}")))?;
    header.config.validate().map_err(|e| Error::Config(format!("checkpoint config invalid: {e}")))?;
    let mut params = ParamStore::default();
    for meta in &header.tensors {
        let numel: usize = meta.shape.iter().product();
        let mut buf = vec![0u8; numel * 8];
        r.read_exact(&mut buf)
            .map_err(|e| Error::Data(format!("truncated checkpoint tensor '{}': {e}", meta.name)))?;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.insert(&meta.name, Tensor::new(meta.shape.clone(), data)?);
    }
    Ok((header.config, params, header.norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    pub(crate) fn small_config() -> ModelConfig {
        ModelConfig {
            input_len: 16,
            horizon: 8,
            period: 4,
            ma_kernel: 3,
            scale: 0.5,
            n_features: 2,
            enc_layers: 1,
            dec_layers: 1,
            d_model: 16,
            n_heads: 2,
            ff_kernel: 3,
            d_ff: 16,
            sub_ratio: 0.5,
            dropout: 0.0,
            activation: Activation::Gelu,
            ff_activation: Activation::Gelu,
            pad_mode: PadMode::Replicate,
        }
    }

    fn rand_input(cfg: &ModelConfig, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::randn(&[cfg.input_len, cfg.n_features], 1.0, &mut rng)
    }

    #[test]
    fn build_inputs_shapes_and_placeholders() {
        let mut cfg = small_config();
        cfg.input_len = 96;
        cfg.horizon = 96;
        cfg.sub_ratio = 0.5;
        let model = ForecastModel::new(cfg.clone()).unwrap();
        let tape = Tape::new();
        let x = tape.constant(rand_input(&cfg, 1));
        let di = model.build_inputs(&tape, x).unwrap();
        assert_eq!(di.seasonal_init.shape(), vec![144, 2]);
        assert_eq!(di.trend_init.shape(), vec![144, 2]);
        // last O seasonal rows are zeros
        let sv = di.seasonal_init.value();
        assert!(sv.data()[48 * 2..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn build_inputs_full_sub_ratio() {
        let mut cfg = small_config();
        cfg.sub_ratio = 1.0;
        let model = ForecastModel::new(cfg.clone()).unwrap();
        let tape = Tape::new();
        let x0 = rand_input(&cfg, 2);
        let x = tape.constant(x0.clone());
        let di = model.build_inputs(&tape, x).unwrap();
        assert_eq!(di.seasonal_init.shape(), vec![cfg.input_len + cfg.horizon, 2]);
    }

    #[test]
    fn constant_series_seeds_trivial_decomposition() {
        let cfg = small_config();
        let model = ForecastModel::new(cfg.clone()).unwrap();
        let tape = Tape::new();
        let x = tape.constant(Tensor::filled(&[cfg.input_len, cfg.n_features], 2.5));
        let di = model.build_inputs(&tape, x).unwrap();
        for v in di.trend_init.value().data() {
            assert!((v - 2.5).abs() < 1e-12);
        }
        for v in di.seasonal_init.value().data() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn encoder_layer_zero_input_zero_output_weights() {
        let cfg = small_config();
        let model = ForecastModel::new(cfg.clone()).unwrap();
        let mut params = model.init_params(3);
        // zero the sublayer output projections
        for name in ["enc0.pa.wo", "enc0.ff.w2"] {
            let t = params.get_mut(name).unwrap();
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        let tape = Tape::new();
        let tp = TapedParams::new(&tape, &params);
        let x = tape.constant(Tensor::zeros(&[cfg.input_len, cfg.d_model]));
        let out = model
            .encoder_layer(&tape, x, &tp, 0, &mut Mode::Eval)
            .unwrap()
            .value();
        assert!(out.data().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn encoder_layer_preserves_shape() {
        let cfg = small_config();
        let model = ForecastModel::new(cfg.clone()).unwrap();
        let params = model.init_params(4);
        let tape = Tape::new();
        let tp = TapedParams::new(&tape, &params);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = tape.constant(Tensor::randn(&[cfg.input_len, cfg.d_model], 1.0, &mut rng));
        let out = model.encoder_layer(&tape, x, &tp, 0, &mut Mode::Eval).unwrap();
        assert_eq!(out.shape(), vec![cfg.input_len, cfg.d_model]);
    }

    #[test]
    fn feed_forward_zero_weights_is_identity() {
        let cfg = small_config();
        let model = ForecastModel::new(cfg.clone()).unwrap();
        let mut params = model.init_params(6);
        for name in ["enc0.ff.w1", "enc0.ff.b1", "enc0.ff.w2", "enc0.ff.b2"] {
            let t = params.get_mut(name).unwrap();
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        let tape = Tape::new();
        let tp = TapedParams::new(&tape, &params);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x0 = Tensor::randn(&[cfg.input_len, cfg.d_model], 1.0, &mut rng);
        let x = tape.constant(x0.clone());
        let out = model
            .feed_forward(&tape, x, &tp, "enc0.ff", &mut Mode::Eval)
            .unwrap()
            .value();
        assert_eq!(out.data(), x0.data());
    }

    #[test]
    fn feed_forward_identity_convs_double_input() {
        // kappa=1, identity conv weights, identity activation, d_ff == d_model
        let mut cfg = small_config();
        cfg.ff_kernel = 1;
        cfg.d_ff = cfg.d_model;
        cfg.ff_activation = Activation::Identity;
        let model = ForecastModel::new(cfg.clone()).unwrap();
        let mut params = model.init_params(8);
        for name in ["enc0.ff.w1", "enc0.ff.w2"] {
            let t = params.get_mut(name).unwrap();
            let d = cfg.d_model;
            for v in t.data_mut() {
                *v = 0.0;
            }
            for i in 0..d {
                t.data_mut()[i * d + i] = 1.0;
            }
        }
        let tape = Tape::new();
        let tp = TapedParams::new(&tape, &params);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x0 = Tensor::randn(&[cfg.input_len, cfg.d_model], 1.0, &mut rng);
        let x = tape.constant(x0.clone());
        let out = model
            .feed_forward(&tape, x, &tp, "enc0.ff", &mut Mode::Eval)
            .unwrap()
            .value();
        for (o, i) in out.data().iter().zip(x0.data()) {
            assert!((o - 2.0 * i).abs() < 1e-12);
        }
    }

    #[test]
    fn decoder_zero_weights_leaves_trend_unchanged() {
        let cfg = small_config();
        let model = ForecastModel::new(cfg.clone()).unwrap();
        let mut params = model.init_params(10);
        let t = params.get_mut("dec0.wtc.w").unwrap();
        for v in t.data_mut() {
            *v = 0.0;
        }
        let tape = Tape::new();
        let tp = TapedParams::new(&tape, &params);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let len = cfg.sub_len() + cfg.horizon;
        let sn = tape.constant(Tensor::zeros(&[len, cfg.d_model]));
        let tc0 = Tensor::randn(&[len, cfg.n_features], 1.0, &mut rng);
        let tc = tape.constant(tc0.clone());
        let enc = tape.constant(Tensor::randn(&[cfg.input_len, cfg.d_model], 1.0, &mut rng));
        let (_, tc_out) = model
            .decoder_layer(&tape, sn, tc, enc, &tp, 0, &mut Mode::Eval)
            .unwrap();
        assert_eq!(tc_out.value().data(), tc0.data());
    }

    #[test]
    fn decoder_sublayer_split_is_a_decomposition() {
        // each sublayer: sn_out + tc_increment == sublayer input
        let cfg = small_config();
        let model = ForecastModel::new(cfg.clone()).unwrap();
        let params = model.init_params(12);
        let tape = Tape::new();
        let tp = TapedParams::new(&tape, &params);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let len = cfg.sub_len() + cfg.horizon;
        let sn0 = Tensor::randn(&[len, cfg.d_model], 1.0, &mut rng);
        let sn = tape.constant(sn0.clone());
        let acfg = cfg.attention_config();
        let w = tp.attention("dec0.pa").unwrap();
        let pa = period_attention(sn, sn, sn, &w, &acfg).unwrap();
        let tc1 = pa.add(sn).unwrap().moving_average(cfg.ma_kernel).unwrap();
        let sn1 = sn.sub(tc1).unwrap();
        let rec = sn1.add(tc1).unwrap().value();
        for (r, o) in rec.data().iter().zip(sn0.data()) {
            assert!((r - o).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_zero_projection_predicts_subseries_mean() {
        let cfg = small_config();
        let model = ForecastModel::new(cfg.clone()).unwrap();
        let mut params = model.init_params(14);
        for name in ["head.w", "head.b", "dec0.wtc.w", "dec0.wtc.b"] {
            let t = params.get_mut(name).unwrap();
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        let x0 = rand_input(&cfg, 15);
        let pred = model.predict(&params, &x0).unwrap();
        // expected: per-feature mean of the last sub_len rows
        let sub = cfg.sub_len();
        for j in 0..cfg.n_features {
            let mean: f64 = (cfg.input_len - sub..cfg.input_len)
                .map(|i| x0.get2(i, j))
                .sum::<f64>()
                / sub as f64;
            for t in 0..cfg.horizon {
                assert!((pred.get2(t, j) - mean).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn forward_output_shape_and_determinism() {
        let cfg = small_config();
        let model = ForecastModel::new(cfg.clone()).unwrap();
        let params = model.init_params(16);
        let x0 = rand_input(&cfg, 17);
        let a = model.predict(&params, &x0).unwrap();
        let b = model.predict(&params, &x0).unwrap();
        assert_eq!(a.shape(), &[cfg.horizon, cfg.n_features]);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn parameter_count_independent_of_lengths() {
        let mut a = small_config();
        let mut b = small_config();
        a.input_len = 16;
        a.horizon = 8;
        b.input_len = 96;
        b.horizon = 96;
        let pa = ForecastModel::new(a).unwrap().init_params(0);
        let pb = ForecastModel::new(b).unwrap().init_params(0);
        assert_eq!(pa.total_elements(), pb.total_elements());
    }

    #[test]
    fn gate_closed_forward_ignores_qk_weights() {
        let mut cfg = small_config();
        cfg.scale = 0.0;
        let model = ForecastModel::new(cfg.clone()).unwrap();
        let mut params = model.init_params(18);
        let x0 = rand_input(&cfg, 19);
        let a = model.predict(&params, &x0).unwrap();
        // arbitrary reinitialization of all Q/K projections
        let mut rng = ChaCha8Rng::seed_from_u64(999);
        for name in params.names() {
            if name.contains(".wq") || name.contains(".wk") || name.contains(".bq") || name.contains(".bk") {
                let t = params.get_mut(&name).unwrap();
                let reinit = Tensor::randn(t.shape(), 3.0, &mut rng);
                *t = reinit;
            }
        }
        let b = model.predict(&params, &x0).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn checkpoint_roundtrip_bit_exact() {
        let cfg = small_config();
        let model = ForecastModel::new(cfg.clone()).unwrap();
        let params = model.init_params(20);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let norm = NormStats {
            mean: vec![0.5, -1.0],
            std: vec![1.5, 2.0],
            columns: vec!["a".into(), "b".into()],
        };
        save_checkpoint(&path, &cfg, &params, Some(&norm)).unwrap();
        let (cfg2, params2, norm2) = load_checkpoint(&path).unwrap();
        assert_eq!(cfg2.input_len, cfg.input_len);
        assert_eq!(params, params2);
        let norm2 = norm2.unwrap();
        assert_eq!(norm2.mean, norm.mean);
        // second save of the loaded state is byte-identical
        let path2 = dir.path().join("model2.ckpt");
        save_checkpoint(&path2, &cfg2, &params2, Some(&norm2)).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn dropout_masks_are_seed_deterministic() {
        let mut cfg = small_config();
        cfg.dropout = 0.2;
        let model = ForecastModel::new(cfg.clone()).unwrap();
        let params = model.init_params(21);
        let x0 = rand_input(&cfg, 22);
        let run = |seed: u64| {
            let tape = Tape::new();
            let tp = TapedParams::new(&tape, &params);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            model
                .forward(&tape, &x0, &tp, &mut Mode::Train { rng: &mut rng })
                .unwrap()
                .value()
        };
        assert_eq!(run(1).data(), run(1).data());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let _: f64 = rng.gen_range(0.0..1.0);
        // different seeds give different masks
        assert_ne!(run(1).data(), run(2).data());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = small_config();
        cfg.ma_kernel = 4;
        assert!(ForecastModel::new(cfg).is_err());
        let mut cfg = small_config();
        cfg.d_model = 15;
        assert!(ForecastModel::new(cfg).is_err());
        let mut cfg = small_config();
        cfg.sub_ratio = 0.0;
        assert!(ForecastModel::new(cfg).is_err());
    }
}
