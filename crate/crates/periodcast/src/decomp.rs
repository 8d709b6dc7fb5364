//! Seasonal/trend split by padded moving average.
//!
//! `trend = MA(x, k)` with replicate end-padding, `seasonal = x - trend`,
//! so `seasonal + trend` reconstructs the input to fp round-off.

use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};

pub struct Decomposition<'t> {
    pub seasonal: Var<'t>,
    pub trend: Var<'t>,
}

/// Split a (len, d) series into seasonal and trend parts.
pub fn decompose<'t>(x: Var<'t>, k: usize) -> Result<Decomposition<'t>> {
    let trend = x.moving_average(k)?;
    let seasonal = x.sub(trend)?;
    Ok(Decomposition { seasonal, trend })
}

/// Moving average on a raw tensor, off-tape convenience.
pub fn moving_average_raw(x: &Tensor, k: usize) -> Result<Tensor> {
    let tape = Tape::new();
    Ok(tape.constant(x.clone()).moving_average(k)?.value())
}
