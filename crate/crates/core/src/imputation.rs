//! Missing-value imputation.
//!
//! Continuous fields are filled with conditional means under a multivariate
//! Gaussian fitted by EM; categoricals get an explicit missing level; dates are
//! filled from the median year and median day-of-year.

use std::io::Write;

use chrono::{Datelike, NaiveDate};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::claims::{ClaimTable, ColumnValues, FieldKind, FieldRole};
use crate::error::{invalid, Error, Result};

/// Reserved level for missing categorical cells.
pub const MISSING_LEVEL: &str = "⟨MISSING⟩";

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;
/// Ridge added to the covariance, relative to `trace(Σ)/m`.
pub const DEFAULT_RIDGE: f64 = 1e-6;

/// Row-major real matrix with a per-cell missing mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl MaskedMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, missing: Vec<bool>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: values.len() });
        }
        if missing.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: missing.len() });
        }
        Ok(Self { rows, cols, values, missing })
    }

    /// Rows of optional cells; `None` is missing.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        let mut missing = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, got: r.len() });
            }
            for c in r {
                values.push(c.unwrap_or(f64::NAN));
                missing.push(c.is_none());
            }
        }
        Ok(Self { rows: rows.len(), cols, values, missing })
    }

    /// Non-finite cells are treated as missing.
    pub fn from_nan(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        let missing = values.iter().map(|v| !v.is_finite()).collect();
        Self::new(rows, cols, values, missing)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        let i = r * self.cols + c;
        (!self.missing[i]).then(|| self.values[i])
    }

    pub fn is_missing(&self, r: usize, c: usize) -> bool {
        self.missing[r * self.cols + c]
    }

    pub fn any_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    pub fn select_rows(&self, rows: &[usize]) -> MaskedMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.cols);
        let mut missing = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            values.extend_from_slice(&self.values[r * self.cols..(r + 1) * self.cols]);
            missing.extend_from_slice(&self.missing[r * self.cols..(r + 1) * self.cols]);
        }
        MaskedMatrix { rows: rows.len(), cols: self.cols, values, missing }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Convergence when the largest parameter change is below `tol · max(1, max|θ|)`.
    pub tol: f64,
    pub ridge: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { max_iter: DEFAULT_MAX_ITER, tol: DEFAULT_TOL, ridge: DEFAULT_RIDGE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Absolute ridge added to the covariance diagonal.
    pub ridge: f64,
    /// Objective (observed-data log-likelihood plus the ridge prior term) at
    /// the starting point and after every iteration.
    pub log_likelihood: Vec<f64>,
}

impl GaussianParams {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Audit dump: mean vector and covariance matrix as comma-separated text.
    pub fn write_csv<W1: Write, W2: Write>(&self, mut mean: W1, mut cov: W2) -> Result<()> {
        for v in self.mean.iter() {
            writeln!(mean, "{v}")?;
        }
        for r in 0..self.dim() {
            let row: Vec<String> = (0..self.dim()).map(|c| self.cov[(r, c)].to_string()).collect();
            writeln!(cov, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn observed_split(x: &MaskedMatrix, r: usize) -> (Vec<usize>, Vec<usize>) {
    (0..x.cols).partition(|&c| !x.is_missing(r, c))
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::Numerical("covariance block is not positive definite".into()))
}

/// Starting point: observed means and the pairwise-complete covariance
/// (falling back to its diagonal when it is not positive definite).
fn initial_params(x: &MaskedMatrix) -> (DVector<f64>, DMatrix<f64>) {
    let m = x.cols;
    let mut mean = DVector::zeros(m);
    for c in 0..m {
        let obs: Vec<f64> = (0..x.rows).filter_map(|r| x.get(r, c)).collect();
        mean[c] = obs.iter().sum::<f64>() / obs.len() as f64;
    }
    let mut cov = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let pairs: Vec<(f64, f64)> = (0..x.rows).filter_map(|r| Some((x.get(r, a)?, x.get(r, b)?))).collect();
            let v = if pairs.is_empty() {
                0.0
            } else {
                let n = pairs.len() as f64;
                let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
                let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
                pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / n
            };
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    if Cholesky::new(cov.clone() + DMatrix::identity(m, m) * 1e-12 * (1.0 + cov.trace())).is_none() {
        cov = DMatrix::from_diagonal(&cov.diagonal());
    }
    (mean, cov)
}

/// Observed-data log-likelihood plus the ridge prior term `−(n/2)·ε·tr(Σ⁻¹)`,
/// the objective the ridge-regularised EM increases monotonically.
fn objective(x: &MaskedMatrix, mean: &DVector<f64>, cov: &DMatrix<f64>, ridge: f64) -> Result<f64> {
    const LN_2PI: f64 = 1.837_877_066_409_345_3;
    let mut ll = 0.0;
    for r in 0..x.rows {
        let (obs, _) = observed_split(x, r);
        if obs.is_empty() {
            continue;
        }
        let chol = cholesky(submatrix(cov, &obs, &obs))?;
        let d = DVector::from_iterator(obs.len(), obs.iter().map(|&c| x.get(r, c).unwrap() - mean[c]));
        let sol = chol.solve(&d);
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        ll += -0.5 * (obs.len() as f64 * LN_2PI + logdet + d.dot(&sol));
    }
    let inv_trace = cholesky(cov.clone())?.inverse().trace();
    Ok(ll - 0.5 * x.rows as f64 * ridge * inv_trace)
}

/// Fit a multivariate Gaussian to partially observed rows by EM.
///
/// The M-step adds a fixed ridge `ε·I` (ε = `ridge · trace(Σ₀)/m`) so the
/// covariance stays invertible on rank-deficient slices.
pub fn em_fit(x: &MaskedMatrix, opts: &EmOptions) -> Result<GaussianParams> {
    let (n, m) = (x.rows, x.cols);
    for c in 0..m {
        let observed = (0..n).filter(|&r| !x.is_missing(r, c)).count();
        if observed < 2 {
            return Err(Error::UnobservedColumn(format!("#{c}")));
        }
    }
    if opts.max_iter == 0 {
        return Err(invalid("max_iter must be at least 1"));
    }
    let (mut mean, cov0) = initial_params(x);
    let ridge = opts.ridge * cov0.trace().max(f64::MIN_POSITIVE) / m as f64;
    let mut cov = cov0 + DMatrix::identity(m, m) * ridge;
    let mut trace = vec![objective(x, &mean, &cov, ridge)?];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        // E-step: expected sufficient statistics.
        let mut s1 = DVector::zeros(m);
        let mut s2 = DMatrix::zeros(m, m);
        for r in 0..n {
            let (obs, mis) = observed_split(x, r);
            let mut xhat = DVector::from_iterator(m, (0..m).map(|c| x.get(r, c).unwrap_or(0.0)));
            if !mis.is_empty() {
                if obs.is_empty() {
                    xhat.copy_from(&mean);
                    s2 += &cov;
                } else {
                    let chol = cholesky(submatrix(&cov, &obs, &obs))?;
                    let s_mo = submatrix(&cov, &mis, &obs);
                    let d = DVector::from_iterator(obs.len(), obs.iter().map(|&c| xhat[c] - mean[c]));
                    let cond = &s_mo * chol.solve(&d);
                    for (i, &c) in mis.iter().enumerate() {
                        xhat[c] = mean[c] + cond[i];
                    }
                    let c_mm = submatrix(&cov, &mis, &mis) - &s_mo * chol.solve(&s_mo.transpose());
                    for (i, &a) in mis.iter().enumerate() {
                        for (j, &b) in mis.iter().enumerate() {
                            s2[(a, b)] += c_mm[(i, j)];
                        }
                    }
                }
            }
            s2 += &xhat * xhat.transpose();
            s1 += &xhat;
        }
        // M-step.
        let new_mean = &s1 / n as f64;
        let mut new_cov = &s2 / n as f64 - &new_mean * new_mean.transpose() + DMatrix::identity(m, m) * ridge;
        new_cov = (&new_cov + new_cov.transpose()) * 0.5;

        let change = (&new_mean - &mean).amax().max((&new_cov - &cov).amax());
        let scale = new_mean.amax().max(new_cov.amax()).max(1.0);
        mean = new_mean;
        cov = new_cov;
        trace.push(objective(x, &mean, &cov, ridge)?);
        if change <= opts.tol * scale {
            converged = true;
            break;
        }
    }
    Ok(GaussianParams { mean, cov, iterations, converged, ridge, log_likelihood: trace })
}

/// Replace missing cells by their conditional means given the observed cells of the row.
pub fn em_impute(x: &MaskedMatrix, params: &GaussianParams) -> Result<DMatrix<f64>> {
    if params.dim() != x.cols {
        return Err(Error::DimensionMismatch { expected: params.dim(), got: x.cols });
    }
    let mut out = DMatrix::from_fn(x.rows, x.cols, |r, c| x.get(r, c).unwrap_or(f64::NAN));
    for r in 0..x.rows {
        let (obs, mis) = observed_split(x, r);
        if mis.is_empty() {
            continue;
        }
        if obs.is_empty() {
            for &c in &mis {
                out[(r, c)] = params.mean[c];
            }
            continue;
        }
        let chol = cholesky(submatrix(&params.cov, &obs, &obs))?;
        let d = DVector::from_iterator(obs.len(), obs.iter().map(|&c| out[(r, c)] - params.mean[c]));
        let cond = submatrix(&params.cov, &mis, &obs) * chol.solve(&d);
        for (i, &c) in mis.iter().enumerate() {
            out[(r, c)] = params.mean[c] + cond[i];
        }
    }
    Ok(out)
}

/// Missing categorical cells become [`MISSING_LEVEL`].
pub fn impute_categorical(values: &[String], missing: &[bool]) -> Result<Vec<String>> {
    if values.len() != missing.len() {
        return Err(Error::DimensionMismatch { expected: values.len(), got: missing.len() });
    }
    values
        .iter()
        .zip(missing)
        .map(|(v, &m)| match (m, v.as_str()) {
            (true, _) => Ok(MISSING_LEVEL.to_string()),
            (false, MISSING_LEVEL) => Err(invalid(format!("data level collides with reserved token {MISSING_LEVEL}"))),
            (false, _) => Ok(v.clone()),
        })
        .collect()
}

/// Fill value for a date column: lower median of observed years and of observed days-of-year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateFill {
    pub year: i32,
    pub day_of_year: u32,
}

impl DateFill {
    pub fn fit(values: &[NaiveDate], missing: &[bool]) -> Result<Self> {
        let mut years: Vec<i32> = Vec::new();
        let mut days: Vec<u32> = Vec::new();
        for (d, _) in values.iter().zip(missing).filter(|(_, &m)| !m) {
            years.push(d.year());
            days.push(d.ordinal());
        }
        if years.is_empty() {
            return Err(invalid("date column has no observed values"));
        }
        years.sort_unstable();
        days.sort_unstable();
        Ok(Self { year: lower_median(&years), day_of_year: lower_median(&days) })
    }

    /// The reconstructed date, with the day-of-year clamped to the year's length.
    pub fn date(&self) -> NaiveDate {
        let len = if NaiveDate::from_ymd_opt(self.year, 2, 29).is_some() { 366 } else { 365 };
        NaiveDate::from_yo_opt(self.year, self.day_of_year.clamp(1, len)).expect("clamped day-of-year is valid")
    }
}

fn lower_median<T: Copy>(sorted: &[T]) -> T {
    sorted[(sorted.len() - 1) / 2]
}

pub fn impute_dates(values: &[NaiveDate], missing: &[bool]) -> Result<Vec<NaiveDate>> {
    let fill = DateFill::fit(values, missing)?.date();
    Ok(values.iter().zip(missing).map(|(&d, &m)| if m { fill } else { d }).collect())
}

/// Imputation state fitted on the training rows of a table and applied to any rows of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableImputer {
    /// Continuous predictor columns modelled jointly by EM.
    pub em_columns: Vec<String>,
    pub gaussian: Option<GaussianParams>,
    /// Continuous predictors with too few observed training values for EM,
    /// filled with a constant instead.
    pub constant_fill: Vec<(String, f64)>,
    pub date_fill: Vec<(String, DateFill)>,
}

impl TableImputer {
    /// Fit on `train_rows`. The response is excluded from the covariance model.
    pub fn fit(table: &ClaimTable, train_rows: &[usize], opts: &EmOptions) -> Result<Self> {
        let mut em_columns = Vec::new();
        let mut constant_fill = Vec::new();
        let mut date_fill = Vec::new();
        for c in table.columns() {
            if c.field.role != FieldRole::Predictor {
                continue;
            }
            match &c.values {
                ColumnValues::Continuous(v) => {
                    let obs: Vec<f64> = train_rows.iter().filter(|&&r| !c.missing[r]).map(|&r| v[r]).collect();
                    if obs.len() >= 2 {
                        em_columns.push(c.field.name.clone());
                    } else {
                        constant_fill.push((c.field.name.clone(), obs.first().copied().unwrap_or(0.0)));
                    }
                }
                ColumnValues::Date(v) => {
                    let vals: Vec<NaiveDate> = train_rows.iter().map(|&r| v[r]).collect();
                    let mask: Vec<bool> = train_rows.iter().map(|&r| c.missing[r]).collect();
                    if let Ok(fill) = DateFill::fit(&vals, &mask) {
                        date_fill.push((c.field.name.clone(), fill));
                    }
                }
                ColumnValues::Categorical(_) => {}
            }
        }
        let gaussian = if em_columns.is_empty() {
            None
        } else {
            Some(em_fit(&continuous_block(table, &em_columns, train_rows), opts)?)
        };
        Ok(Self { em_columns, gaussian, constant_fill, date_fill })
    }

    /// Imputed copy of the whole table. Observed cells are never altered.
    pub fn apply(&self, table: &ClaimTable) -> Result<ClaimTable> {
        let mut out = table.clone();
        let all: Vec<usize> = (0..table.n_rows()).collect();
        if let Some(g) = &self.gaussian {
            let filled = em_impute(&continuous_block(table, &self.em_columns, &all), g)?;
            for (j, name) in self.em_columns.iter().enumerate() {
                let col = out.column_mut(name).expect("fitted on this schema");
                if let ColumnValues::Continuous(v) = &mut col.values {
                    for r in 0..v.len() {
                        if col.missing[r] {
                            v[r] = filled[(r, j)];
                            col.missing[r] = false;
                        }
                    }
                }
            }
        }
        for (name, fill) in &self.constant_fill {
            if let Some(col) = out.column_mut(name) {
                if let ColumnValues::Continuous(v) = &mut col.values {
                    for r in 0..v.len() {
                        if col.missing[r] {
                            v[r] = *fill;
                            col.missing[r] = false;
                        }
                    }
                }
            }
        }
        for (name, fill) in &self.date_fill {
            if let Some(col) = out.column_mut(name) {
                if let ColumnValues::Date(v) = &mut col.values {
                    let d = fill.date();
                    for r in 0..v.len() {
                        if col.missing[r] {
                            v[r] = d;
                            col.missing[r] = false;
                        }
                    }
                }
            }
        }
        let cat_names: Vec<String> = out
            .columns()
            .iter()
            .filter(|c| c.field.kind == FieldKind::Categorical && c.field.role == FieldRole::Predictor)
            .map(|c| c.field.name.clone())
            .collect();
        for name in cat_names {
            let col = out.column_mut(&name).unwrap();
            if let ColumnValues::Categorical(v) = &mut col.values {
                *v = impute_categorical(v, &col.missing)?;
                col.missing.iter_mut().for_each(|m| *m = false);
            }
        }
        Ok(out)
    }
}

fn continuous_block(table: &ClaimTable, names: &[String], rows: &[usize]) -> MaskedMatrix {
    let cols: Vec<_> = names.iter().map(|n| table.column(n).expect("column exists")).collect();
    let mut values = Vec::with_capacity(rows.len() * cols.len());
    let mut missing = Vec::with_capacity(rows.len() * cols.len());
    for &r in rows {
        for c in &cols {
            values.push(c.value_f64(r).unwrap_or(f64::NAN));
            missing.push(c.missing[r]);
        }
    }
    MaskedMatrix::new(rows.len(), cols.len(), values, missing).expect("consistent dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn complete_data_gives_sample_moments_in_one_iteration() {
        let rows: Vec<Vec<Option<f64>>> =
            vec![vec![Some(1.0), Some(2.0)], vec![Some(2.0), Some(1.0)], vec![Some(4.0), Some(7.0)]];
        let x = MaskedMatrix::from_rows(&rows).unwrap();
        let p = em_fit(&x, &EmOptions::default()).unwrap();
        assert_eq!(p.iterations, 1);
        assert!(p.converged);
        let (m0, m1) = (7.0 / 3.0, 10.0 / 3.0);
        assert!((p.mean[0] - m0).abs() < 1e-12 && (p.mean[1] - m1).abs() < 1e-12);
        let s00 = [1.0f64, 2.0, 4.0].iter().map(|v| (v - m0).powi(2)).sum::<f64>() / 3.0;
        let s01 = [(1.0, 2.0), (2.0, 1.0), (4.0, 7.0)].iter().map(|(a, b)| (a - m0) * (b - m1)).sum::<f64>() / 3.0;
        assert!((p.cov[(0, 0)] - s00).abs() < 1e-5 * s00);
        assert!((p.cov[(0, 1)] - s01).abs() < 1e-5 * s00);
    }

    #[test]
    fn univariate_missing_imputed_to_observed_mean() {
        let rows: Vec<Vec<Option<f64>>> = [Some(1.0), None, Some(5.0), None].iter().map(|v| vec![*v]).collect();
        let x = MaskedMatrix::from_rows(&rows).unwrap();
        let p = em_fit(&x, &EmOptions::default()).unwrap();
        let out = em_impute(&x, &p).unwrap();
        assert!((out[(1, 0)] - 3.0).abs() < 1e-6);
        assert!((out[(3, 0)] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn exact_line_conditional_mean() {
        // x2 = 2·x1; the row with x1 = 3 has x2 missing.
        let mut rows: Vec<Vec<Option<f64>>> = (0..8).map(|i| vec![Some(i as f64), Some(2.0 * i as f64)]).collect();
        rows.push(vec![Some(3.0), None]);
        let x = MaskedMatrix::from_rows(&rows).unwrap();
        let p = em_fit(&x, &EmOptions { tol: 1e-12, max_iter: 1000, ..Default::default() }).unwrap();
        let out = em_impute(&x, &p).unwrap();
        assert!((out[(8, 1)] - 6.0).abs() < 1e-3, "got {}", out[(8, 1)]);
    }

    #[test]
    fn fully_missing_column_is_an_error() {
        let rows: Vec<Vec<Option<f64>>> = (0..4).map(|i| vec![Some(i as f64), None]).collect();
        let x = MaskedMatrix::from_rows(&rows).unwrap();
        assert!(matches!(em_fit(&x, &EmOptions::default()), Err(Error::UnobservedColumn(c)) if c == "#1"));
    }

    #[test]
    fn impute_identity_and_fully_missing_row() {
        let rows: Vec<Vec<Option<f64>>> =
            vec![vec![Some(1.0), Some(3.0)], vec![Some(2.0), Some(1.0)], vec![Some(4.0), Some(5.0)]];
        let x = MaskedMatrix::from_rows(&rows).unwrap();
        let p = em_fit(&x, &EmOptions::default()).unwrap();
        let out = em_impute(&x, &p).unwrap();
        for r in 0..3 {
            for c in 0..2 {
                assert_eq!(out[(r, c)], x.get(r, c).unwrap());
            }
        }
        let y = MaskedMatrix::from_rows(&[vec![None, None]]).unwrap();
        let out = em_impute(&y, &p).unwrap();
        assert_eq!(out[(0, 0)], p.mean[0]);
        assert_eq!(out[(0, 1)], p.mean[1]);
        assert!(em_impute(&MaskedMatrix::from_rows(&[vec![None]]).unwrap(), &p).is_err());
    }

    #[test]
    fn categorical_missing_level() {
        let v = vec!["A".to_string(), String::new(), "B".to_string()];
        let out = impute_categorical(&v, &[false, true, false]).unwrap();
        assert_eq!(out, vec!["A", MISSING_LEVEL, "B"]);
        assert_eq!(impute_categorical(&v[..1], &[false]).unwrap(), vec!["A"]);
        assert_eq!(impute_categorical(&v, &[true; 3]).unwrap(), vec![MISSING_LEVEL; 3]);
        assert!(impute_categorical(&[MISSING_LEVEL.to_string()], &[false]).is_err());
    }

    #[test]
    fn date_medians() {
        let obs = vec![
            NaiveDate::from_yo_opt(1990, 1).unwrap(),
            NaiveDate::from_yo_opt(2000, 100).unwrap(),
            NaiveDate::from_yo_opt(2010, 200).unwrap(),
            ymd(1970, 1, 1),
        ];
        let out = impute_dates(&obs, &[false, false, false, true]).unwrap();
        assert_eq!(out[3], NaiveDate::from_yo_opt(2000, 100).unwrap());

        let out = impute_dates(&[ymd(1999, 5, 4), ymd(1970, 1, 1)], &[false, true]).unwrap();
        assert_eq!(out[1], ymd(1999, 5, 4));

        assert!(impute_dates(&[ymd(1999, 5, 4)], &[true]).is_err());
    }

    #[test]
    fn date_day_of_year_clamped() {
        // Median year 2001 (non-leap) with median day 366 (from leap-year observations).
        let fill = DateFill { year: 2001, day_of_year: 366 };
        assert_eq!(fill.date(), ymd(2001, 12, 31));
        let obs = [ymd(2001, 6, 1), ymd(2000, 12, 31), ymd(2004, 12, 31)];
        let f = DateFill::fit(&obs, &[false; 3]).unwrap();
        assert_eq!(f, DateFill { year: 2001, day_of_year: 366 });
        assert_eq!(f.date(), ymd(2001, 12, 31));
    }

    #[test]
    fn even_count_median_takes_lower_middle() {
        let f = DateFill::fit(&[ymd(2000, 1, 1), ymd(2010, 1, 1)], &[false, false]).unwrap();
        assert_eq!(f.year, 2000);
    }
}
