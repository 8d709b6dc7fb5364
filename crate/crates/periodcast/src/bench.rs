//! Timing harness for the attention score kernels: full attention
//! (L x L score) versus the period-windowed kernel with a fixed number
//! of period windows, across sequence lengths. Kernels run raw (no tape)
//! on a single thread so the medians reflect arithmetic, not bookkeeping.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attention::{flop_count, full_attention_flop_count};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize)]
pub struct BenchResult {
    pub kernel: String,
    pub length: usize,
    pub reps: usize,
    pub median_seconds: f64,
    pub op_count: u64,
}

fn softmax_rows_inplace(scores: &mut [f64], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &mut scores[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

fn score_aggregate(rows: usize, width: usize, x: &[f64], out: &mut [f64], scores: &mut [f64]) {
    // scores = x x^T, softmax, out = scores x
    scores.iter_mut().for_each(|v| *v = 0.0);
    out.iter_mut().for_each(|v| *v = 0.0);
    let scale = 1.0 / (width as f64).sqrt();
    for i in 0..rows {
        let a = &x[i * width..(i + 1) * width];
        for j in 0..rows {
            let b = &x[j * width..(j + 1) * width];
            let mut acc = 0.0;
            for (av, bv) in a.iter().zip(b) {
                acc += av * bv;
            }
            scores[i * rows + j] = acc * scale;
        }
    }
    softmax_rows_inplace(scores, rows, rows);
    for i in 0..rows {
        let srow = &scores[i * rows..(i + 1) * rows];
        let orow = &mut out[i * width..(i + 1) * width];
        for (k, &s) in srow.iter().enumerate() {
            let xrow = &x[k * width..(k + 1) * width];
            for (ov, &xv) in orow.iter_mut().zip(xrow) {
                *ov += s * xv;
            }
        }
    }
}

/// Full attention: L x L score over rows of width d_model.
pub fn full_attention_kernel(x: &Tensor) -> Tensor {
    let (l, d) = (x.shape()[0], x.shape()[1]);
    let mut out = vec![0.0; l * d];
    let mut scores = vec![0.0; l * l];
    score_aggregate(l, d, x.data(), &mut out, &mut scores);
    Tensor::new(vec![l, d], out).expect("kernel output shape")
}

/// Period attention with the sequence reshaped into `np` windows of
/// P * d_model flattened values; the score is only np x np.
pub fn period_attention_kernel(x: &Tensor, np: usize) -> Tensor {
    let (l, d) = (x.shape()[0], x.shape()[1]);
    assert!(l % np == 0, "length {l} not divisible into {np} windows");
    let width = (l / np) * d;
    let mut out = vec![0.0; l * d];
    let mut scores = vec![0.0; np * np];
    score_aggregate(np, width, x.data(), &mut out, &mut scores);
    Tensor::new(vec![l, d], out).expect("kernel output shape")
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn time_kernel(reps: usize, mut f: impl FnMut()) -> f64 {
    for _ in 0..2 {
        f(); // warm-up, excluded
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = std::time::Instant::now();
        f();
        times.push(t0.elapsed().as_secs_f64());
    }
    median(times)
}

/// Benchmark both kernels at each length. The period kernel keeps `np`
/// windows at every length (the period grows with L), which is the
/// configuration under which its cost is linear in L.
pub fn run_bench(lengths: &[usize], d_model: usize, np: usize, reps: usize) -> Result<Vec<BenchResult>> {
    if reps < 5 {
        return Err(Error::Config(format!("reps must be >= 5, got {reps}")));
    }
    if lengths.is_empty() {
        return Err(Error::Config("no lengths given".into()));
    }
    if lengths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("lengths must be strictly ascending".into()));
    }
    if np < 1 {
        return Err(Error::Config("np must be >= 1".into()));
    }
    for &l in lengths {
        if l % np != 0 {
            return Err(Error::Config(format!("length {l} is not a multiple of np = {np}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xBE7C);
    let mut out = Vec::new();
    for &l in lengths {
        let x = Tensor::randn(&[l, d_model], 1.0, &mut rng);
        let t_full = time_kernel(reps, || {
            std::hint::black_box(full_attention_kernel(std::hint::black_box(&x)));
        });
        out.push(BenchResult {
            kernel: "full".into(),
            length: l,
            reps,
            median_seconds: t_full,
            op_count: full_attention_flop_count(l, d_model),
        });
        let t_period = time_kernel(reps, || {
            std::hint::black_box(period_attention_kernel(std::hint::black_box(&x), np));
        });
        out.push(BenchResult {
            kernel: "period".into(),
            length: l,
            reps,
            median_seconds: t_period,
            op_count: flop_count(l, l / np, d_model),
        });
    }
    Ok(out)
}

/// CSV with the stable schema `kernel,length,reps,median_seconds,op_count`.
pub fn write_csv(results: &[BenchResult], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    w.write_record(["kernel", "length", "reps", "median_seconds", "op_count"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for r in results {
        w.write_record([
            r.kernel.clone(),
            r.length.to_string(),
            r.reps.to_string(),
            format!("{}", r.median_seconds),
            r.op_count.to_string(),
        ])
        .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}
