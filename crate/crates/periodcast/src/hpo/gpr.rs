//! Gaussian-process regression surrogate: Matérn-5/2 kernel with
//! per-dimension lengthscales, fitted by Cholesky, hyperparameters by a
//! gradient-free coordinate search on the log marginal likelihood.

use crate::error::{Error, Result};

const SQRT5: f64 = 2.23606797749979;

pub fn matern52(a: &[f64], b: &[f64], lengthscales: &[f64], signal_var: f64) -> f64 {
    let mut r2 = 0.0;
    for ((x, y), l) in a.iter().zip(b).zip(lengthscales) {
        let d = (x - y) / l;
        r2 += d * d;
    }
    let r = r2.sqrt();
    signal_var * (1.0 + SQRT5 * r + 5.0 * r2 / 3.0) * (-SQRT5 * r).exp()
}

/// Lower-triangular Cholesky factor of a symmetric matrix, row-major.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn solve_lower(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= l[i * n + k] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    x
}

fn solve_upper_t(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    // solves L^T x = b
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= l[k * n + i] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    x
}

#[derive(Clone, Debug)]
pub struct GprPosterior {
    x: Vec<Vec<f64>>,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
    y_mean: f64,
    y_std: f64,
    log_marginal: f64,
}

impl GprPosterior {
    /// Fit with fixed kernel hyperparameters (used directly in tests, and
    /// as the inner step of the marginal-likelihood search).
    pub fn fit_with_hyperparams(
        x: &[Vec<f64>],
        y: &[f64],
        lengthscales: &[f64],
        signal_var: f64,
        noise_var: f64,
    ) -> Result<Self> {
        let n = x.len();
        if n == 0 || y.len() != n {
            return Err(Error::Config("gpr fit needs matching non-empty inputs".into()));
        }
        let dim = x[0].len();
        if lengthscales.len() != dim {
            return Err(Error::Shape("lengthscale count != input dimension".into()));
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_std).collect();

        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let k = matern52(&x[i], &x[j], lengthscales, signal_var);
                gram[i * n + j] = k;
                gram[j * n + i] = k;
            }
            gram[i * n + i] += noise_var;
        }
        let chol = cholesky(&gram, n)
            .ok_or_else(|| Error::Numeric("gpr: kernel matrix not positive definite".into()))?;
        let tmp = solve_lower(&chol, n, &ys);
        let alpha = solve_upper_t(&chol, n, &tmp);

        let mut log_det = 0.0;
        for i in 0..n {
            log_det += chol[i * n + i].ln();
        }
        let fit_term: f64 = ys.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let log_marginal = -0.5 * fit_term - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

        Ok(GprPosterior {
            x: x.to_vec(),
            chol,
            alpha,
            lengthscales: lengthscales.to_vec(),
            signal_var,
            noise_var,
            y_mean,
            y_std,
            log_marginal,
        })
    }

    /// Fit with hyperparameters chosen by coordinate search on the log
    /// marginal likelihood. `noise_var` is fixed (jitter), not searched.
    pub fn fit(x: &[Vec<f64>], y: &[f64], noise_var: f64) -> Result<Self> {
        let dim = x.first().map(|p| p.len()).unwrap_or(0);
        let mut ls = vec![0.3; dim];
        let mut sv = 1.0;
        let ls_grid = [0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0];
        let sv_grid = [0.25, 0.5, 1.0, 2.0, 4.0];
        let mut best =
            GprPosterior::fit_with_hyperparams(x, y, &ls, sv, noise_var)?;
        for _sweep in 0..2 {
            for d in 0..dim {
                for &cand in &ls_grid {
                    if cand == ls[d] {
                        continue;
                    }
                    let mut trial = ls.clone();
                    trial[d] = cand;
                    if let Ok(m) = GprPosterior::fit_with_hyperparams(x, y, &trial, sv, noise_var) {
                        if m.log_marginal > best.log_marginal {
                            ls = trial;
                            best = m;
                        }
                    }
                }
            }
            for &cand in &sv_grid {
                if cand == sv {
                    continue;
                }
                if let Ok(m) = GprPosterior::fit_with_hyperparams(x, y, &ls, cand, noise_var) {
                    if m.log_marginal > best.log_marginal {
                        sv = cand;
                        best = m;
                    }
                }
            }
        }
        Ok(best)
    }

    /// Posterior mean and variance at a query point (original target scale).
    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let kstar: Vec<f64> = self
            .x
            .iter()
            .map(|xi| matern52(xi, q, &self.lengthscales, self.signal_var))
            .collect();
        let mu_s: f64 = kstar.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = solve_lower(&self.chol, n, &kstar);
        let kqq = matern52(q, q, &self.lengthscales, self.signal_var);
        let var_s = (kqq - v.iter().map(|x| x * x).sum::<f64>()).max(0.0);
        (self.y_mean + self.y_std * mu_s, var_s * self.y_std * self.y_std)
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal
    }
}
