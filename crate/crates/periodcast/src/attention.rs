//! Gated period attention.
//!
//! Sequences are cut into N_p periods of length P (left replicate-padded
//! to a whole number of periods), one N_p x N_p score is computed per head
//! on the period-flattened vectors, and a scaling factor `s` gates the
//! score. With `s = 0` the score path is skipped entirely and only an
//! activation is applied to the value projection, so the Q/K projections
//! never enter the graph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Activation, Var};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PeriodAttentionConfig {
    /// Period length in steps.
    pub period: usize,
    /// Scaling factor gating the attention score; 0 disables attention.
    pub scale: f64,
    pub n_heads: usize,
    pub d_model: usize,
    /// Activation applied to V when the gate is closed.
    pub activation: Activation,
}

impl PeriodAttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.period == 0 {
            return Err(Error::Config("attention period must be >= 1".into()));
        }
        if self.scale < 0.0 {
            return Err(Error::Config("attention scaling factor must be >= 0".into()));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    /// The 1/sqrt(P) denominator folded into the gate.
    pub fn effective_scale(&self) -> f64 {
        self.scale / (self.period as f64).sqrt()
    }
}

/// Projection weights for one attention block.
#[derive(Clone, Copy)]
pub struct AttentionWeights<'t> {
    pub wq: Var<'t>,
    pub bq: Var<'t>,
    pub wk: Var<'t>,
    pub bk: Var<'t>,
    pub wv: Var<'t>,
    pub bv: Var<'t>,
    pub wo: Var<'t>,
    pub bo: Var<'t>,
}

/// Number of whole periods covering `len`.
pub fn period_count(len: usize, period: usize) -> usize {
    len.div_ceil(period)
}

/// Reshape (len, d) to (N_p, P*d), left replicate-padding to N_p*P rows.
/// Returns the reshaped tensor and the original length for the inverse.
pub fn resize_to_periods(x: Var<'_>, period: usize) -> Result<(Var<'_>, usize)> {
    let shape = x.shape();
    let (len, d) = (shape[0], shape[1]);
    let n_p = period_count(len, period);
    let pad = n_p * period - len;
    let padded = if pad > 0 { x.pad_rows_front(pad)? } else { x };
    Ok((padded.reshape(vec![n_p, period * d])?, len))
}

/// Inverse of `resize_to_periods`: recover (len, d) from (N_p, P*d).
pub fn resize_from_periods(x: Var<'_>, period: usize, len: usize, d: usize) -> Result<Var<'_>> {
    let shape = x.shape();
    let n_p = shape[0];
    let total = n_p * period;
    let flat = x.reshape(vec![total, d])?;
    if total == len {
        Ok(flat)
    } else {
        flat.slice_rows(total - len, total)
    }
}

/// Multiply count of the score + aggregation kernel at one head of
/// width `d_model`: both products are N_p x N_p x (P * d_model).
pub fn flop_count(len: usize, period: usize, d_model: usize) -> u64 {
    let n_p = period_count(len, period) as u64;
    2 * n_p * n_p * (period as u64) * (d_model as u64)
}

/// Reference multiply count for full attention (score L x L).
pub fn full_attention_flop_count(len: usize, d_model: usize) -> u64 {
    2 * (len as u64) * (len as u64) * (d_model as u64)
}

/// Gated period attention. Self-attention when `q`, `k`, `v` share a
/// length; the cross variant only requires `k` and `v` to agree.
pub fn period_attention<'t>(
    q: Var<'t>,
    k: Var<'t>,
    v: Var<'t>,
    w: &AttentionWeights<'t>,
    cfg: &PeriodAttentionConfig,
) -> Result<Var<'t>> {
    cfg.validate()?;
    let q_shape = q.shape();
    let kv_shape = k.shape();
    if k.shape() != v.shape() {
        return Err(Error::Shape(format!(
            "period attention: key shape {:?} != value shape {:?}",
            k.shape(),
            v.shape()
        )));
    }
    if q_shape[1] != cfg.d_model || kv_shape[1] != cfg.d_model {
        return Err(Error::Shape(format!(
            "period attention: inputs must have width d_model={}, got {:?} and {:?}",
            cfg.d_model, q_shape, kv_shape
        )));
    }

    let v_proj = v.matmul(w.wv)?.add_bias(w.bv)?;

    if cfg.scale == 0.0 {
        // Gate closed: activation on V only, scores never computed and the
        // Q/K projections stay out of the graph.
        let gated = v_proj.activation(cfg.activation);
        return gated.matmul(w.wo)?.add_bias(w.bo);
    }

    let q_proj = q.matmul(w.wq)?.add_bias(w.bq)?;
    let k_proj = k.matmul(w.wk)?.add_bias(w.bk)?;

    let d_head = cfg.d_model / cfg.n_heads;
    let s_eff = cfg.effective_scale();
    let mut heads: Option<Var<'t>> = None;
    for h in 0..cfg.n_heads {
        let (c0, c1) = (h * d_head, (h + 1) * d_head);
        let qh = q_proj.slice_cols(c0, c1)?;
        let kh = k_proj.slice_cols(c0, c1)?;
        let vh = v_proj.slice_cols(c0, c1)?;
        let (qf, q_len) = resize_to_periods(qh, cfg.period)?;
        let (kf, _) = resize_to_periods(kh, cfg.period)?;
        let (vf, _) = resize_to_periods(vh, cfg.period)?;
        let scores = qf.matmul(kf.transpose()?)?.scale(s_eff).softmax_rows()?;
        let ctx = scores.matmul(vf)?;
        let out_h = resize_from_periods(ctx, cfg.period, q_len, d_head)?;
        heads = Some(match heads {
            None => out_h,
            Some(acc) => acc.concat_cols(out_h)?,
        });
    }
    let concat = heads.expect("n_heads >= 1");
    concat.matmul(w.wo)?.add_bias(w.bo)
}

/// Decoder-to-encoder attention: queries from the decoder, keys and
/// values from the encoder output.
pub fn cross_period_attention<'t>(
    q_from_decoder: Var<'t>,
    kv_from_encoder: Var<'t>,
    w: &AttentionWeights<'t>,
    cfg: &PeriodAttentionConfig,
) -> Result<Var<'t>> {
    period_attention(q_from_decoder, kv_from_encoder, kv_from_encoder, w, cfg)
}
