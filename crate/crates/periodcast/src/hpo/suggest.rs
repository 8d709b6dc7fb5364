//! Acquisition side of the search: quasi-random cold start, closed-form
//! expected improvement, and the candidate-set argmax with exclusion of
//! points too close to still-running trials.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::gpr::GprPosterior;
use super::space::SearchSpace;
use crate::error::Result;

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
/// Candidates within this unit-cube distance of a pending trial get EI 0.
pub const PENDING_EXCLUSION_RADIUS: f64 = 0.05;
const N_CANDIDATES: usize = 1024;
const N_INCUMBENT_PERTURBATIONS: usize = 32;
/// Cap on surrogate training points; the cubic Cholesky cost would
/// otherwise dominate long searches. Keeps the best quarter plus the
/// most recent completions.
const MAX_SURROGATE_POINTS: usize = 128;

/// Radical-inverse low-discrepancy point, one coordinate per prime base.
pub fn halton_point(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton supports up to {} dims", PRIMES.len());
    (0..dim)
        .map(|d| {
            let base = PRIMES[d];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index + 1; // skip the all-zeros point
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

/// How many quasi-random points to spend before the surrogate activates.
pub fn n_init(dim: usize) -> usize {
    4.max(dim + 1)
}

/// Closed-form Gaussian expected improvement for minimization:
/// EI = (threshold - mu) * Phi(z) + sigma * phi(z), z = (threshold - mu) / sigma.
pub fn expected_improvement(mu: f64, sigma: f64, threshold: f64) -> f64 {
    if sigma <= 1e-12 {
        return (threshold - mu).max(0.0);
    }
    let z = (threshold - mu) / sigma;
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    ((threshold - mu) * n.cdf(z) + sigma * n.pdf(z)).max(0.0)
}

pub struct SuggestContext<'a> {
    pub space: &'a SearchSpace,
    /// Completed trials as (unit-cube point, loss).
    pub completed: &'a [(Vec<f64>, f64)],
    /// Unit-cube points of currently running trials.
    pub pending: &'a [Vec<f64>],
    /// Monotone counter across all suggestions of one search.
    pub suggestion_index: u64,
}

/// Algorithm: below `n_init` completed trials return the next
/// low-discrepancy point; afterwards fit the surrogate and take the EI
/// argmax over a candidate set (lowest index wins ties). Surrogate
/// failures escalate jitter x10 up to 3 times, then fall back to a random
/// in-bounds point with a warning.
pub fn suggest(ctx: &SuggestContext, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dim = ctx.space.dim();
    if ctx.completed.len() < n_init(dim) {
        return snap(ctx.space, &halton_point(ctx.suggestion_index, dim));
    }
    let capped = surrogate_subset(ctx.completed);
    match fit_with_jitter(&capped) {
        Ok(posterior) => {
            let best = ctx
                .completed
                .iter()
                .map(|(_, l)| *l)
                .fold(f64::INFINITY, f64::min);
            let candidates = candidate_set(ctx, rng);
            let mut best_idx = 0usize;
            let mut best_ei = f64::NEG_INFINITY;
            for (i, c) in candidates.iter().enumerate() {
                let mut ei = {
                    let (mu, var) = posterior.predict(c);
                    expected_improvement(mu, var.sqrt(), best)
                };
                if near_pending(c, ctx.pending) {
                    ei = 0.0;
                }
                if ei > best_ei {
                    best_ei = ei;
                    best_idx = i;
                }
            }
            snap(ctx.space, &candidates[best_idx])
        }
        Err(e) => {
            log::warn!("surrogate fit failed after jitter escalation ({e}); falling back to random suggestion");
            let u: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
            snap(ctx.space, &u)
        }
    }
}

/// Snap a unit point through the concrete space and back so grid
/// dimensions land exactly on their grid (suggested H == evaluated H).
fn snap(space: &SearchSpace, u: &[f64]) -> Vec<f64> {
    space.to_unit(&space.from_unit(u))
}

fn near_pending(c: &[f64], pending: &[Vec<f64>]) -> bool {
    pending.iter().any(|p| {
        let d2: f64 = c.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
        d2.sqrt() < PENDING_EXCLUSION_RADIUS
    })
}

/// Deterministic subset for the surrogate when the history is long: the
/// best quarter of the cap by loss, then the most recent completions.
fn surrogate_subset(completed: &[(Vec<f64>, f64)]) -> Vec<(Vec<f64>, f64)> {
    if completed.len() <= MAX_SURROGATE_POINTS {
        return completed.to_vec();
    }
    let n_best = MAX_SURROGATE_POINTS / 4;
    let mut by_loss: Vec<usize> = (0..completed.len()).collect();
    by_loss.sort_by(|&a, &b| completed[a].1.partial_cmp(&completed[b].1).unwrap().then(a.cmp(&b)));
    let mut keep = vec![false; completed.len()];
    for &i in by_loss.iter().take(n_best) {
        keep[i] = true;
    }
    let mut kept = n_best;
    for i in (0..completed.len()).rev() {
        if kept == MAX_SURROGATE_POINTS {
            break;
        }
        if !keep[i] {
            keep[i] = true;
            kept += 1;
        }
    }
    (0..completed.len()).filter(|&i| keep[i]).map(|i| completed[i].clone()).collect()
}

fn fit_with_jitter(completed: &[(Vec<f64>, f64)]) -> Result<GprPosterior> {
    let x: Vec<Vec<f64>> = completed.iter().map(|(u, _)| u.clone()).collect();
    let y: Vec<f64> = completed.iter().map(|(_, l)| *l).collect();
    let mut noise = 1e-10;
    let mut last_err = None;
    for _ in 0..4 {
        match GprPosterior::fit(&x, &y, noise) {
            Ok(m) => return Ok(m),
            Err(e) => {
                last_err = Some(e);
                noise *= 10.0;
            }
        }
    }
    Err(last_err.expect("at least one attempt made"))
}

fn candidate_set(ctx: &SuggestContext, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let dim = ctx.space.dim();
    let mut out = Vec::with_capacity(N_CANDIDATES + N_INCUMBENT_PERTURBATIONS);
    let offset = ctx.suggestion_index.wrapping_mul(N_CANDIDATES as u64);
    for i in 0..N_CANDIDATES as u64 {
        out.push(snap(ctx.space, &halton_point(offset + i, dim)));
    }
    if let Some((inc, _)) = ctx
        .completed
        .iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
    {
        for _ in 0..N_INCUMBENT_PERTURBATIONS {
            let p: Vec<f64> = inc
                .iter()
                .map(|&v| (v + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0))
                .collect();
            out.push(snap(ctx.space, &p));
        }
    }
    out
}
