//! Predictability screen: how well do the labels of a validation window's
//! nearest training windows (by input similarity) resemble its own label?
//! High scores mean history tends to repeat, so forecasting is plausible.

use serde::Serialize;

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::parallel::par_map;

#[derive(Clone, Debug, Serialize)]
pub struct PredictabilityReport {
    pub score: f64,
    pub k: usize,
    pub similarity: String,
    pub folds: Vec<FoldScore>,
    /// Validation pairs skipped because cosine was undefined (zero norm).
    pub skipped: usize,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FoldScore {
    pub fold: usize,
    pub score: f64,
    pub n_pairs: usize,
}

/// Cosine similarity. Computed so that cosine(v, v) is exactly 1.0.
/// Returns None when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Option<f64> {
    let mut uv = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for (a, b) in u.iter().zip(v) {
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    let den = (uu * vv).sqrt();
    if den == 0.0 || !den.is_finite() {
        return None;
    }
    Some(uv / den)
}

/// Score one validation pair against the whole training set: mean label
/// similarity over the top-`k` training windows by input similarity,
/// ties broken by lower training index.
fn pair_score(
    train: &WindowedDataset,
    x_v: &[f64],
    y_v: &[f64],
    k: usize,
) -> Option<f64> {
    // top-k by input similarity; linear scan keeps the index tie-break exact
    let mut top: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
    for t in 0..train.len() {
        let (x_t, _) = train.flat_pair(t);
        let sim = cosine(x_v, &x_t)?;
        // strictly-greater insertion preserves lower-index priority on ties
        let pos = top.partition_point(|&(_, s)| s >= sim);
        if pos < k {
            top.insert(pos, (t, sim));
            top.truncate(k);
        }
    }
    if top.is_empty() {
        return None;
    }
    let mut acc = 0.0;
    for &(t, _) in &top {
        let (_, y_t) = train.flat_pair(t);
        acc += cosine(y_v, &y_t)?;
    }
    Some(acc / top.len() as f64)
}

/// Appendix-style predictability over `folds` contiguous chronological
/// folds of the validation set. Pairs with undefined cosine are skipped
/// and counted; K must not exceed the training size.
pub fn predictability(
    train: &WindowedDataset,
    valid: &WindowedDataset,
    k: usize,
    folds: usize,
) -> Result<PredictabilityReport> {
    if k < 1 {
        return Err(Error::Config("predictability: K must be >= 1".into()));
    }
    if k > train.len() {
        return Err(Error::Config(format!(
            "predictability: K = {k} exceeds training size {}",
            train.len()
        )));
    }
    if valid.is_empty() {
        return Err(Error::Data("predictability: validation set has no windows".into()));
    }
    if folds < 1 || folds > valid.len() {
        return Err(Error::Config(format!(
            "predictability: folds = {folds} must be in 1..={}",
            valid.len()
        )));
    }
    if train.input_len != valid.input_len
        || train.horizon != valid.horizon
        || train.n_features() != valid.n_features()
    {
        return Err(Error::Shape("predictability: train/valid window shapes differ".into()));
    }

    let idx: Vec<usize> = (0..valid.len()).collect();
    let scores: Vec<Option<f64>> = par_map(&idx, |&i| {
        let (x_v, y_v) = valid.flat_pair(i);
        pair_score(train, &x_v, &y_v, k)
    });
    let skipped = scores.iter().filter(|s| s.is_none()).count();
    if skipped > 0 {
        log::warn!("predictability: skipped {skipped} validation pair(s) with zero-norm windows");
    }

    let n = valid.len();
    let mut fold_scores = Vec::with_capacity(folds);
    let mut total = 0.0;
    let mut total_n = 0usize;
    for f in 0..folds {
        let lo = f * n / folds;
        let hi = (f + 1) * n / folds;
        let vals: Vec<f64> = scores[lo..hi].iter().flatten().copied().collect();
        let fold_score = if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        total += vals.iter().sum::<f64>();
        total_n += vals.len();
        fold_scores.push(FoldScore { fold: f, score: fold_score, n_pairs: vals.len() });
    }
    if total_n == 0 {
        return Err(Error::Data("predictability: every validation pair was skipped".into()));
    }
    Ok(PredictabilityReport {
        score: total / total_n as f64,
        k,
        similarity: "cosine".into(),
        folds: fold_scores,
        skipped,
    })
}

/// Per-fold CSV with header `fold,score,n_pairs`.
pub fn write_fold_csv(report: &PredictabilityReport, path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    w.write_record(["fold", "score", "n_pairs"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for f in &report.folds {
        w.write_record([f.fold.to_string(), format!("{}", f.score), f.n_pairs.to_string()])
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}
