//! Exact Gaussian-process regression with an explicit mean basis.
//!
//! The model is `y = h(x)ᵀβ + f(x) + ε` with `f ~ GP(0, σ_p² k)` and
//! `ε ~ N(0, σ²)`. `β` comes from least squares, `σ_p²` from the residual
//! variance, and `A = K + (σ²/σ_p²) I` is factored once by Cholesky.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::features::FeatureMatrix;
use crate::seed;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;
const MIN_PRIOR_VAR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `exp(−‖a−b‖²/(2ℓ²))`
    SquaredExponential,
    /// `exp(−‖a−b‖/ℓ)`
    Exponential,
}

impl Kernel {
    pub fn eval(self, a: &[f64], b: &[f64], length_scale: f64) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        match self {
            Kernel::SquaredExponential => (-d2 / (2.0 * length_scale * length_scale)).exp(),
            Kernel::Exponential => (-d2.sqrt() / length_scale).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Constant,
    Linear,
    /// Intercept, linear terms and squares (no cross terms).
    Quadratic,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::Constant, Basis::Linear, Basis::Quadratic];

    pub fn expand(self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![1.0];
        if self != Basis::Constant {
            h.extend_from_slice(x);
        }
        if self == Basis::Quadratic {
            h.extend(x.iter().map(|v| v * v));
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub kernel: Kernel,
    pub basis: Basis,
    pub standardize: bool,
    pub length_scale: f64,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub kernel: Kernel,
    pub bases: Vec<Basis>,
    pub standardize: Vec<bool>,
    /// Random (length scale, noise) draws per basis/standardize combination.
    pub samples_per_combo: usize,
    pub folds: usize,
    /// Larger training sets are subsampled to this many rows.
    pub max_rows: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::SquaredExponential,
            bases: Basis::ALL.to_vec(),
            standardize: vec![false, true],
            samples_per_combo: 8,
            folds: 5,
            max_rows: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GpModel {
    pub hyper: GpHyper,
    pub beta: Vec<f64>,
    pub prior_var: f64,
    pub noise_var: f64,
    /// Per-column (mean, sd) applied to inputs when standardizing.
    pub scaling: Option<Vec<(f64, f64)>>,
    pub jitter: f64,
    pub feature_names: Vec<String>,
    /// Mean CV RMSE of the selected configuration, when chosen by search.
    pub cv_rmse: Option<f64>,
    x: Vec<Vec<f64>>,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

fn scaling_of(rows: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let n = rows.len() as f64;
    let p = rows.first().map_or(0, |r| r.len());
    (0..p)
        .map(|j| {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let sd = if rows.len() > 1 { (rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
            (m, if sd > 1e-12 { sd } else { 1.0 })
        })
        .collect()
}

fn apply_scaling(row: &[f64], s: &Option<Vec<(f64, f64)>>) -> Vec<f64> {
    match s {
        None => row.to_vec(),
        Some(s) => row.iter().zip(s).map(|(v, (m, sd))| (v - m) / sd).collect(),
    }
}

/// Kernel matrix over `rows`.
pub fn kernel_matrix(kernel: Kernel, length_scale: f64, rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let v = kernel.eval(&rows[i], &rows[j], length_scale);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky of `a`, adding diagonal jitter from 1e-10 up to 1e-4 on failure.
fn factor(a: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok((c, 0.0));
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        let mut b = a.clone();
        for i in 0..b.nrows() {
            b[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(b) {
            log::debug!("GP factorization needed jitter {jitter:e}");
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!("GP system not positive definite after jitter up to {JITTER_MAX:e}")))
}

fn fit_rows(rows: &[Vec<f64>], y: &[f64], hyper: GpHyper, names: Vec<String>) -> Result<GpModel> {
    let n = rows.len();
    if n == 0 || n != y.len() {
        return Err(invalid(format!("GP needs matching non-empty inputs, got {n} rows and {} targets", y.len())));
    }
    if !(hyper.length_scale > 0.0 && hyper.length_scale.is_finite()) || !(hyper.noise_sd > 0.0 && hyper.noise_sd.is_finite()) {
        return Err(invalid(format!("GP length scale and noise must be positive, got {hyper:?}")));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(invalid(format!("GP targets must be finite, found {v}")));
    }
    let scaling = hyper.standardize.then(|| scaling_of(rows));
    let x: Vec<Vec<f64>> = rows.iter().map(|r| apply_scaling(r, &scaling)).collect();
    let hs: Vec<Vec<f64>> = x.iter().map(|r| hyper.basis.expand(r)).collect();
    let q = hs[0].len();
    let h = DMatrix::from_fn(n, q, |i, j| hs[i][j]);
    let yv = DVector::from_column_slice(y);
    let beta = h
        .clone()
        .svd(true, true)
        .solve(&yv, 1e-12)
        .map_err(|e| Error::Numerical(format!("basis least squares failed: {e}")))?;
    let resid = &yv - &h * &beta;
    let prior_var = (resid.norm_squared() / n as f64).max(MIN_PRIOR_VAR);
    let noise_var = hyper.noise_sd * hyper.noise_sd;
    let mut a = kernel_matrix(hyper.kernel, hyper.length_scale, &x);
    let ratio = noise_var / prior_var;
    for i in 0..n {
        a[(i, i)] += ratio;
    }
    let (chol, jitter) = factor(a)?;
    let alpha = chol.solve(&resid);
    Ok(GpModel {
        hyper,
        beta: beta.iter().copied().collect(),
        prior_var,
        noise_var,
        scaling,
        jitter,
        feature_names: names,
        cv_rmse: None,
        x,
        alpha,
        chol,
    })
}

fn matrix_rows(x: &FeatureMatrix) -> Vec<Vec<f64>> {
    (0..x.n_rows()).map(|r| x.row(r).to_vec()).collect()
}

/// Fit with fixed hyperparameters.
pub fn gp_fit_fixed(x: &FeatureMatrix, hyper: GpHyper) -> Result<GpModel> {
    fit_rows(&matrix_rows(x), x.y(), hyper, x.columns().iter().map(|c| c.name.clone()).collect())
}

impl GpModel {
    fn predict_one(&self, row: &[f64]) -> (f64, f64) {
        let xs = apply_scaling(row, &self.scaling);
        let h = self.hyper.basis.expand(&xs);
        let base: f64 = h.iter().zip(&self.beta).map(|(a, b)| a * b).sum();
        let kstar = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| self.hyper.kernel.eval(&xs, xi, self.hyper.length_scale)));
        let mean = base + kstar.dot(&self.alpha);
        let v = self.chol.solve(&kstar);
        let var = self.prior_var * (1.0 - kstar.dot(&v)).max(0.0) + self.noise_var;
        (mean, var)
    }

    /// Posterior mean and predictive variance (including noise) per row.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.n_cols() != self.feature_names.len() {
            return Err(Error::DimensionMismatch { expected: self.feature_names.len(), got: x.n_cols() });
        }
        Ok(self.predict_rows(&matrix_rows(x)))
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        rows.iter().map(|r| self.predict_one(r)).unzip()
    }

    /// Training inputs after any standardization.
    pub fn training_inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    /// Short text report: kernel, hyperparameters and basis coefficients.
    pub fn report(&self) -> String {
        let beta: Vec<String> = self.beta.iter().map(|b| b.to_string()).collect();
        format!(
            "kernel={:?} basis={:?} standardize={} length_scale={} noise_sd={} prior_var={} jitter={} beta=[{}]",
            self.hyper.kernel,
            self.hyper.basis,
            self.hyper.standardize,
            self.hyper.length_scale,
            self.hyper.noise_sd,
            self.prior_var,
            self.jitter,
            beta.join(",")
        )
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn cv_rmse(rows: &[Vec<f64>], y: &[f64], folds: &[Vec<usize>], hyper: GpHyper) -> Result<f64> {
    let mut total = 0.0;
    for test in folds {
        let mut is_test = vec![false; rows.len()];
        for &i in test {
            is_test[i] = true;
        }
        let train: Vec<usize> = (0..rows.len()).filter(|&i| !is_test[i]).collect();
        let tr_rows: Vec<Vec<f64>> = train.iter().map(|&i| rows[i].clone()).collect();
        let tr_y: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let m = fit_rows(&tr_rows, &tr_y, hyper, vec![String::new(); rows[0].len()])?;
        let te_rows: Vec<Vec<f64>> = test.iter().map(|&i| rows[i].clone()).collect();
        let (mean, _) = m.predict_rows(&te_rows);
        let se: f64 = mean.iter().zip(test).map(|(p, &i)| (p - y[i]).powi(2)).sum();
        total += (se / test.len() as f64).sqrt();
    }
    Ok(total / folds.len() as f64)
}

/// Choose basis, standardization, length scale and noise by k-fold CV, then
/// refit on every training row.
pub fn gp_fit(x: &FeatureMatrix, cfg: &GpConfig, seed: u64) -> Result<GpModel> {
    let n = x.n_rows();
    if cfg.folds < 2 {
        return Err(invalid("GP cross-validation needs at least 2 folds"));
    }
    if n < cfg.folds {
        return Err(invalid(format!("GP needs at least {} rows for {}-fold CV, got {n}", cfg.folds, cfg.folds)));
    }
    let mut rows = matrix_rows(x);
    let mut y = x.y().to_vec();
    let mut rng = seed::rng(seed);
    if n > cfg.max_rows {
        log::warn!("GP training set of {n} rows subsampled to {}", cfg.max_rows);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        idx.truncate(cfg.max_rows);
        idx.sort_unstable();
        rows = idx.iter().map(|&i| rows[i].clone()).collect();
        y = idx.iter().map(|&i| y[i]).collect();
    }
    let n = rows.len();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let folds: Vec<Vec<usize>> = (0..cfg.folds).map(|f| perm.iter().copied().skip(f).step_by(cfg.folds).collect()).collect();
    let sd_y = crate::metrics::sample_sd(&y).unwrap_or(0.0);
    let noise_hi = (10.0 * sd_y).max(1e-3);

    let mut candidates = Vec::new();
    for &basis in &cfg.bases {
        for &standardize in &cfg.standardize {
            let scaled: Vec<Vec<f64>> = {
                let s = standardize.then(|| scaling_of(&rows));
                rows.iter().map(|r| apply_scaling(r, &s)).collect()
            };
            let range = (0..scaled.first().map_or(0, |r| r.len()))
                .map(|j| {
                    let (lo, hi) = scaled.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r[j]), b.max(r[j])));
                    hi - lo
                })
                .fold(0.0, f64::max);
            let r = if range > 0.0 { range } else { 1.0 };
            for _ in 0..cfg.samples_per_combo {
                candidates.push(GpHyper {
                    kernel: cfg.kernel,
                    basis,
                    standardize,
                    length_scale: log_uniform(&mut rng, 1e-3 * r, r),
                    noise_sd: log_uniform(&mut rng, 1e-4, noise_hi),
                });
            }
        }
    }
    if candidates.is_empty() {
        return Err(invalid("GP search space is empty"));
    }
    let scores: Vec<Result<f64>> = candidates.par_iter().map(|&h| cv_rmse(&rows, &y, &folds, h)).collect();
    // Earlier (simpler) candidates win near-ties.
    let tie = 1e-9 * sd_y.max(f64::MIN_POSITIVE);
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        match s {
            Ok(s) if s.is_finite() => {
                if best.is_none_or(|(_, b)| *s < b - tie) {
                    best = Some((i, *s));
                }
            }
            Ok(_) => {}
            Err(e) => log::debug!("GP candidate {:?} skipped: {e}", candidates[i]),
        }
    }
    let (bi, score) = best.ok_or_else(|| Error::Numerical("every GP candidate failed to factor".into()))?;
    let mut model = fit_rows(&rows, &y, candidates[bi], x.columns().iter().map(|c| c.name.clone()).collect())?;
    model.cv_rmse = Some(score);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 * 0.5]).collect();
        let y = rows.iter().map(|r| 3.0 - 2.0 * r[0]).collect();
        FeatureMatrix::from_rows(&rows, y).unwrap()
    }

    #[test]
    fn linear_truth_selects_linear_basis() {
        let m = gp_fit(&line(30), &GpConfig::default(), 1).unwrap();
        assert_eq!(m.hyper.basis, Basis::Linear);
        assert!(m.cv_rmse.unwrap() < 1e-6);
    }

    #[test]
    fn fold_count_precondition() {
        assert!(gp_fit(&line(5), &GpConfig::default(), 1).is_ok());
        assert!(gp_fit(&line(4), &GpConfig::default(), 1).is_err());
    }

    #[test]
    fn far_point_reverts_to_basis_and_prior() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| (r[0]).sin()).collect();
        let x = FeatureMatrix::from_rows(&rows, y).unwrap();
        let h = GpHyper { kernel: Kernel::SquaredExponential, basis: Basis::Constant, standardize: false, length_scale: 1.0, noise_sd: 0.1 };
        let m = gp_fit_fixed(&x, h).unwrap();
        let (mean, var) = m.predict_rows(&[vec![1e3]]);
        assert!((mean[0] - m.beta[0]).abs() < 1e-12);
        assert!((var[0] - (m.prior_var + m.noise_var)).abs() < 1e-12);
    }
}
