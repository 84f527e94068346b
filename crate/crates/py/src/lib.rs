//! Python bindings: loss-severity distributions, bias correction, metrics,
//! boosted trees and the synthetic backtest.

use floodloss::backtest::{run_windows, window_plan as plan, ExperimentConfig, WindowMode};
use floodloss::dist::{apply_quantile_map, build_quantile_map, fit_mle, ParametricDist, DEFAULT_MIN_N};
use floodloss::features::FeatureMatrix;
use floodloss::gbt::{gbt_train, GbtModel, GbtParams};
use floodloss::imputation::{em_fit, EmOptions, MaskedMatrix};
use floodloss::metrics;
use floodloss::seed;
use floodloss::synthetic::synthetic_table;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: floodloss::Error) -> PyErr {
    match e {
        floodloss::Error::Numerical(_) | floodloss::Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// A Burr XII or Weibull loss-severity law.
#[pyclass(name = "Dist", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyDist(ParametricDist);

#[pymethods]
impl PyDist {
    #[staticmethod]
    fn burr(c: f64, k: f64, scale: f64) -> PyResult<Self> {
        ParametricDist::burr(c, k, scale).map(Self).map_err(err)
    }

    #[staticmethod]
    fn weibull(shape: f64, scale: f64) -> PyResult<Self> {
        ParametricDist::weibull(shape, scale).map(Self).map_err(err)
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.0.family()
    }

    /// Parameters in declaration order: `(c, k, scale)` or `(shape, scale)`.
    #[getter]
    fn params(&self) -> Vec<f64> {
        match self.0 {
            ParametricDist::Burr { c, k, scale } => vec![c, k, scale],
            ParametricDist::Weibull { shape, scale } => vec![shape, scale],
        }
    }

    fn pdf(&self, y: f64) -> f64 {
        self.0.pdf(y)
    }

    fn cdf(&self, y: f64) -> f64 {
        self.0.cdf(y)
    }

    fn sf(&self, y: f64) -> f64 {
        self.0.sf(y)
    }

    fn quantile(&self, u: f64) -> PyResult<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(PyValueError::new_err(format!("probability must lie in [0,1], got {u}")));
        }
        Ok(self.0.quantile(u))
    }

    fn log_likelihood(&self, samples: Vec<f64>) -> f64 {
        self.0.log_likelihood(&samples)
    }

    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        self.0.sample(&mut seed::rng(seed), n)
    }

    fn __repr__(&self) -> String {
        format!("Dist({})", self.0)
    }
}

/// Maximum-likelihood Burr fit with Weibull fallback. Returns the fitted law
/// and a dict of diagnostics.
#[pyfunction]
#[pyo3(signature = (samples, min_n = DEFAULT_MIN_N))]
fn fit(py: Python<'_>, samples: Vec<f64>, min_n: usize) -> PyResult<(PyDist, Py<pyo3::types::PyDict>)> {
    let r = fit_mle(&samples, min_n).map_err(err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("fallback", r.fallback)?;
    d.set_item("log_likelihood", r.log_likelihood)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("converged", r.converged)?;
    d.set_item("zeros_shifted", r.zeros_shifted)?;
    Ok((PyDist(r.dist), d.unbind()))
}

/// Carry `values` from the `pred` law onto the `reference` law.
#[pyfunction]
fn quantile_map(pred: PyDist, reference: PyDist, values: Vec<f64>) -> Vec<f64> {
    apply_quantile_map(&build_quantile_map(pred.0, reference.0), &values)
}

#[pyfunction]
fn kl_divergence(p: PyDist, q: PyDist) -> PyResult<f64> {
    metrics::kl_divergence(&p.0, &q.0).map_err(err)
}

/// Curve-fit R² of `q`'s density against `p`'s; `None` when `p` is flat.
#[pyfunction]
fn dist_r2(p: PyDist, q: PyDist) -> PyResult<Option<f64>> {
    metrics::dist_r2(&p.0, &q.0).map_err(err)
}

/// `(D, p-value)`.
#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    metrics::ks_two_sample(&a, &b).map_err(err)
}

#[pyfunction]
fn ks_one_sample(samples: Vec<f64>, dist: PyDist) -> PyResult<(f64, f64)> {
    metrics::ks_one_sample(&samples, &dist.0).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (reference, predicted, seed = 0))]
fn discriminator_auc(reference: Vec<f64>, predicted: Vec<f64>, seed: u64) -> PyResult<f64> {
    metrics::discriminator_auc(&reference, &predicted, seed).map_err(err)
}

/// Gradient-boosted regression trees on a dense float matrix.
#[pyclass(name = "Gbt", frozen)]
struct PyGbt(GbtModel);

#[pymethods]
impl PyGbt {
    #[staticmethod]
    #[pyo3(signature = (rows, y, *, learning_rate = 0.1, max_depth = 6, rounds = 100, gamma = 0.0, lambda_ = 1.0, subsample = 1.0, colsample = 1.0, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        rows: Vec<Vec<f64>>,
        y: Vec<f64>,
        learning_rate: f64,
        max_depth: usize,
        rounds: usize,
        gamma: f64,
        lambda_: f64,
        subsample: f64,
        colsample: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let x = FeatureMatrix::from_rows(&rows, y).map_err(err)?;
        let p = GbtParams { learning_rate, max_depth, max_rounds: rounds, gamma, lambda: lambda_, subsample, colsample, ..Default::default() };
        py.detach(|| gbt_train(&x, &p, None, seed)).map(Self).map_err(err)
    }

    fn predict(&self, rows: Vec<Vec<f64>>) -> Vec<f64> {
        rows.iter().map(|r| self.0.predict_row(r)).collect()
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.0.trees.len()
    }

    /// `(feature name, share of total gain)`, largest first.
    fn feature_importance(&self) -> Vec<(String, f64)> {
        self.0.feature_importance().into_iter().map(|(_, n, v)| (n, v)).collect()
    }

    fn to_text(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.0.write(&mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// `(mean, covariance)` of a Gaussian fitted by EM; `None` marks a missing cell.
#[pyfunction]
fn em_gaussian(rows: Vec<Vec<Option<f64>>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let x = MaskedMatrix::from_rows(&rows).map_err(err)?;
    let p = em_fit(&x, &EmOptions::default()).map_err(err)?;
    let d = p.dim();
    Ok((p.mean.iter().copied().collect(), (0..d).map(|i| (0..d).map(|j| p.cov[(i, j)]).collect()).collect()))
}

/// `[(train_first, train_last, test_year), …]` for a window mode
/// (`"shifting"` or `"expanding"`).
#[pyfunction]
fn window_plan(baseline: i32, offset: i32, mode: &str, last_test_year: i32) -> PyResult<Vec<(i32, i32, i32)>> {
    let mode: WindowMode = mode.parse().map_err(err)?;
    let p = plan(baseline, offset, mode, last_test_year).map_err(err)?;
    Ok(p.iter().map(|w| (w.train_range().0, w.train_range().1, w.test_year())).collect())
}

/// Run the window protocol on the synthetic county and return the reports
/// as a JSON array. `config` holds `key = value` lines.
#[pyfunction]
#[pyo3(signature = (config = ""))]
fn backtest_synthetic(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::parse_str(config).and_then(|c| c.validate().map(|_| c)).map_err(err)?;
    let counties = if cfg.counties.is_empty() { vec!["48201".to_string()] } else { cfg.counties.clone() };
    let reports = py
        .detach(|| -> floodloss::Result<_> {
            let table = synthetic_table(&counties, cfg.synthetic_first_year, cfg.synthetic_last_year, cfg.synthetic_rows_per_year, cfg.seed)?;
            let windows = plan(cfg.baseline, cfg.offset, cfg.mode, cfg.last_test_year)?;
            Ok(run_windows(&table, &counties, &windows, &cfg, cfg.seed))
        })
        .map_err(err)?;
    serde_json::to_string(&reports).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn pyfloodloss(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDist>()?;
    m.add_class::<PyGbt>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(quantile_map, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(dist_r2, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    m.add_function(wrap_pyfunction!(ks_one_sample, m)?)?;
    m.add_function(wrap_pyfunction!(discriminator_auc, m)?)?;
    m.add_function(wrap_pyfunction!(em_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(window_plan, m)?)?;
    m.add_function(wrap_pyfunction!(backtest_synthetic, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
