//! Experiment protocols: year windows, repeated random splits and
//! leave-one-event-out, all driving one train → correct → evaluate pipeline.

pub mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::claims::{ClaimTable, COUNTY_CODE};
use crate::dist::{apply_quantile_map, build_quantile_map, fit_mle, FitReport};
use crate::error::{invalid, Error, Result};
use crate::features::{split, standardize_apply, standardize_fit, FeatureMatrix, OneHotEncoder, ScalerParams};
use crate::gbt::{gbt_train, random_search, GbtParams, SearchRanges};
use crate::gp::{gp_fit, GpConfig, GpHyper};
use crate::imputation::{EmOptions, TableImputer};
use crate::metrics::{discriminator_auc, dist_r2, kl_divergence, ks_one_sample, rmse, rmse_sigma, MetricBundle};
use crate::rainfall::{attach_rain, RainGrid};
use crate::seed;

pub use config::{ExperimentConfig, Protocol, RegressorKind, WindowMode};

pub const DEFAULT_REPEATS: usize = 30;
/// Number of features listed in a report's importance ranking.
const TOP_FEATURES: usize = 10;

/// One iteration `k` of a year-window plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowSpec {
    pub baseline: i32,
    pub offset: i32,
    pub mode: WindowMode,
    pub k: i32,
}

impl WindowSpec {
    pub fn new(baseline: i32, offset: i32, mode: WindowMode, k: i32) -> Result<Self> {
        if offset < 1 || k < 0 {
            return Err(invalid(format!("window needs offset ≥ 1 and k ≥ 0, got offset {offset}, k {k}")));
        }
        Ok(Self { baseline, offset, mode, k })
    }

    /// First and last training year, inclusive.
    pub fn train_range(&self) -> (i32, i32) {
        let delta = match self.mode {
            WindowMode::Shifting => self.k,
            WindowMode::Expanding => 0,
        };
        (self.baseline + delta, self.baseline + self.offset + self.k - 1)
    }

    pub fn test_year(&self) -> i32 {
        self.baseline + self.offset + self.k
    }

    pub fn train_years(&self) -> Vec<i32> {
        let (a, b) = self.train_range();
        (a..=b).collect()
    }

    pub fn label(&self) -> String {
        let (a, b) = self.train_range();
        format!("{} train {a}-{b} test {}", self.mode, self.test_year())
    }
}

pub fn window_plan(baseline: i32, offset: i32, mode: WindowMode, last_test_year: i32) -> Result<Vec<WindowSpec>> {
    if offset < 1 {
        return Err(invalid(format!("offset must be ≥ 1, got {offset}")));
    }
    let last_k = last_test_year - baseline - offset;
    if last_k < 0 {
        return Err(invalid(format!("empty window plan: last test year {last_test_year} precedes {}", baseline + offset)));
    }
    (0..=last_k).map(|k| WindowSpec::new(baseline, offset, mode, k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum RegressorParams {
    Gbt(GbtParams),
    Gp(GpHyper),
}

/// SHA-256 digests of everything fitted on the training rows.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrainingFingerprint {
    pub imputer: String,
    pub encoder: String,
    pub scaler: String,
    pub model: String,
    pub pred_fit: String,
    pub ref_fit: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BacktestReport {
    pub county: String,
    pub label: String,
    pub window: Option<WindowSpec>,
    pub n_train: usize,
    pub n_test: usize,
    pub regressor: Option<RegressorKind>,
    pub hyperparameters: Option<RegressorParams>,
    pub before: MetricBundle,
    /// Present only when both training fits succeeded.
    pub after: Option<MetricBundle>,
    /// Fits on training predictions and training references; these define the map.
    pub pred_fit: Option<FitReport>,
    pub ref_fit: Option<FitReport>,
    /// Fits on the test period, for reporting.
    pub test_pred_fit: Option<FitReport>,
    pub test_ref_fit: Option<FitReport>,
    pub corrected_fit: Option<FitReport>,
    pub feature_importance: Vec<(String, f64)>,
    pub flags: Vec<String>,
    pub fingerprint: Option<TrainingFingerprint>,
}

impl BacktestReport {
    pub fn test_year(&self) -> Option<i32> {
        self.window.map(|w| w.test_year())
    }

    /// The bundle a summary row reports: after correction when available.
    pub fn headline(&self) -> &MetricBundle {
        self.after.as_ref().unwrap_or(&self.before)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn digest_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(digest(serde_json::to_string(v)?.as_bytes()))
}

/// Drop rows whose response is missing.
fn with_response(table: &ClaimTable, rows: &[usize]) -> Vec<usize> {
    match table.response() {
        Some(c) => rows.iter().copied().filter(|&r| !c.missing[r] && c.value_f64(r).is_some_and(f64::is_finite)).collect(),
        None => Vec::new(),
    }
}

struct Evaluation {
    bundle: MetricBundle,
    pred_fit: Option<FitReport>,
}

fn evaluate(
    preds: &[f64],
    refs: &[f64],
    ref_fit: Option<&FitReport>,
    cfg: &ExperimentConfig,
    seed: u64,
    stage: &str,
    flags: &mut Vec<String>,
) -> Evaluation {
    let mut b = MetricBundle { n_test: refs.len(), ..Default::default() };
    b.rmse = rmse(preds, refs).ok();
    b.rmse_over_sigma = rmse_sigma(preds, refs).ok().flatten();
    if refs.len() >= 2 && b.rmse_over_sigma.is_none() {
        flags.push(format!("{stage}: reference values constant, RMSE/σ absent"));
    }
    let pred_fit = match fit_mle(preds, cfg.min_fit_samples) {
        Ok(f) => {
            if f.fallback {
                flags.push(format!("{stage}: prediction fit fell back to Weibull"));
            }
            Some(f)
        }
        Err(e) => {
            flags.push(format!("{stage}: prediction fit failed: {e}"));
            None
        }
    };
    if let Some(pf) = &pred_fit {
        if let Ok((d, p)) = ks_one_sample(preds, &pf.dist) {
            b.ks_stat = Some(d);
            b.ks_p = Some(p);
        }
        if let Some(rf) = ref_fit {
            match kl_divergence(&rf.dist, &pf.dist) {
                Ok(v) => b.kl = Some(v),
                Err(e) => flags.push(format!("{stage}: KL failed: {e}")),
            }
            match dist_r2(&rf.dist, &pf.dist) {
                Ok(v) => b.dist_r2 = v,
                Err(e) => flags.push(format!("{stage}: distributional R² failed: {e}")),
            }
        }
    }
    match discriminator_auc(refs, preds, seed) {
        Ok(v) => b.auc = Some(v),
        Err(e) => flags.push(format!("{stage}: AUC unavailable: {e}")),
    }
    Evaluation { bundle: b, pred_fit }
}

struct Trained {
    train_pred: Vec<f64>,
    test_pred: Vec<f64>,
    params: RegressorParams,
    model_digest: String,
    importance: Vec<(String, f64)>,
}

fn train_regressor(train: &FeatureMatrix, test: &FeatureMatrix, cfg: &ExperimentConfig, seed: u64) -> Result<Trained> {
    match cfg.regressor {
        RegressorKind::Gbt => {
            let model = if cfg.cycles == 0 {
                let p = GbtParams { lambda: cfg.lambda, max_rounds: cfg.rounds, patience: cfg.patience, ..Default::default() };
                gbt_train(train, &p, None, seed)?
            } else {
                let ranges = SearchRanges { lambda: cfg.lambda, rounds: cfg.rounds, patience: cfg.patience, ..Default::default() };
                random_search(train, &ranges, cfg.cycles, seed)?.model
            };
            let mut text = Vec::new();
            model.write(&mut text)?;
            Ok(Trained {
                train_pred: model.predict(train)?,
                test_pred: model.predict(test)?,
                params: RegressorParams::Gbt(model.params),
                model_digest: digest(&text),
                importance: model.feature_importance().into_iter().take(TOP_FEATURES).map(|(_, n, g)| (n, g)).collect(),
            })
        }
        RegressorKind::Gp => {
            let gcfg = GpConfig { max_rows: cfg.gp_max_rows, samples_per_combo: cfg.gp_samples, folds: cfg.gp_folds, ..Default::default() };
            let model = gp_fit(train, &gcfg, seed)?;
            Ok(Trained {
                train_pred: model.predict(train)?.0,
                test_pred: model.predict(test)?.0,
                params: RegressorParams::Gp(model.hyper),
                model_digest: digest(model.report().as_bytes()),
                importance: Vec::new(),
            })
        }
    }
}

/// Train on `train_rows` of `table` and evaluate on `test_rows`. Every fitted
/// quantity (imputer, encoder, scaler, regressor, distribution fits, quantile
/// map) sees only training rows. Failures are recorded as flags.
pub fn run_split(table: &ClaimTable, train_rows: &[usize], test_rows: &[usize], cfg: &ExperimentConfig, seed: u64) -> BacktestReport {
    let mut report = BacktestReport { regressor: Some(cfg.regressor), ..Default::default() };
    let train = with_response(table, train_rows);
    let test = with_response(table, test_rows);
    report.n_train = train.len();
    report.n_test = test.len();
    report.before.n_test = test.len();
    let dropped = train_rows.len() + test_rows.len() - train.len() - test.len();
    if dropped > 0 {
        report.flags.push(format!("dropped {dropped} rows with missing response"));
    }
    let train_set: BTreeSet<usize> = train.iter().copied().collect();
    assert!(test.iter().all(|r| !train_set.contains(r)), "test rows overlap training rows");
    if train.len() < 2 {
        report.flags.push("empty_train".into());
        return report;
    }
    if test.is_empty() {
        report.flags.push("empty_test".into());
        return report;
    }
    if let Err(e) = pipeline(table, &train, &test, cfg, seed, &mut report) {
        report.flags.push(format!("pipeline failed: {e}"));
    }
    report
}

fn pipeline(table: &ClaimTable, train: &[usize], test: &[usize], cfg: &ExperimentConfig, seed: u64, report: &mut BacktestReport) -> Result<()> {
    let imputer = TableImputer::fit(table, train, &EmOptions::default())?;
    if let Some(g) = &imputer.gaussian {
        if !g.converged {
            report.flags.push(format!("imputation EM stopped after {} iterations without converging", g.iterations));
        }
    }
    let imputed = imputer.apply(table)?;
    let encoder = OneHotEncoder::fit(&imputed, train);
    let x_train = encoder.transform(&imputed, train)?;
    let x_test = encoder.transform(&imputed, test)?;
    let train_idx: Vec<usize> = (0..train.len()).collect();
    let scaler: ScalerParams = standardize_fit(&x_train, &train_idx)?;
    let x_train = standardize_apply(&x_train, &scaler)?;
    let x_test = standardize_apply(&x_test, &scaler)?;

    let trained = train_regressor(&x_train, &x_test, cfg, seed::derive(seed, &[seed::tag("regressor")]))?;
    report.hyperparameters = Some(trained.params);
    report.feature_importance = trained.importance;
    let y_train = x_train.y();
    let y_test = x_test.y();
    // Squared-loss trees can predict below zero; losses cannot. Predictions
    // are floored at the smallest positive training loss.
    let floor = y_train.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 0.0 };
    let clamp = |v: Vec<f64>, flags: &mut Vec<String>, what: &str| {
        let n = v.iter().filter(|x| **x < floor).count();
        if n > 0 {
            flags.push(format!("{n} {what} predictions raised to the loss floor {floor}"));
        }
        v.into_iter().map(|x| x.max(floor)).collect::<Vec<f64>>()
    };
    let train_pred = clamp(trained.train_pred, &mut report.flags, "training");
    let test_pred = clamp(trained.test_pred, &mut report.flags, "test");

    let fit = |v: &[f64], what: &str, flags: &mut Vec<String>| match fit_mle(v, cfg.min_fit_samples) {
        Ok(f) => {
            if f.fallback {
                flags.push(format!("{what} fit fell back to Weibull"));
            }
            Some(f)
        }
        Err(e) => {
            flags.push(format!("{what} fit failed: {e}"));
            None
        }
    };
    report.pred_fit = fit(&train_pred, "training prediction", &mut report.flags);
    report.ref_fit = fit(y_train, "training reference", &mut report.flags);
    report.test_ref_fit = fit(y_test, "test reference", &mut report.flags);

    let before = evaluate(&test_pred, y_test, report.test_ref_fit.as_ref(), cfg, seed::derive(seed, &[seed::tag("auc"), 0]), "before", &mut report.flags);
    report.before = before.bundle;
    report.test_pred_fit = before.pred_fit;

    if let (Some(pf), Some(rf)) = (&report.pred_fit, &report.ref_fit) {
        let map = build_quantile_map(pf.dist, rf.dist);
        let corrected = apply_quantile_map(&map, &test_pred);
        let after = evaluate(&corrected, y_test, report.test_ref_fit.as_ref(), cfg, seed::derive(seed, &[seed::tag("auc"), 1]), "after", &mut report.flags);
        report.after = Some(after.bundle);
        report.corrected_fit = after.pred_fit;
    }

    report.fingerprint = Some(TrainingFingerprint {
        imputer: digest_json(&imputer)?,
        encoder: digest_json(&encoder)?,
        scaler: digest_json(&scaler)?,
        model: trained.model_digest,
        pred_fit: digest_json(&report.pred_fit)?,
        ref_fit: digest_json(&report.ref_fit)?,
    });
    Ok(())
}

/// Rows of `table` whose loss year lies in `[from, to]`.
pub fn rows_in_years(table: &ClaimTable, from: i32, to: i32) -> Vec<usize> {
    (0..table.n_rows()).filter(|&r| table.loss_year(r).is_some_and(|y| y >= from && y <= to)).collect()
}

/// Run one window of the plan on a single county's table.
pub fn run_window(table: &ClaimTable, county: &str, spec: WindowSpec, cfg: &ExperimentConfig, seed: u64) -> BacktestReport {
    let (a, b) = spec.train_range();
    let t = spec.test_year();
    let train = rows_in_years(table, a, b);
    let test = rows_in_years(table, t, t);
    let mut report = run_split(table, &train, &test, cfg, seed);
    report.county = county.to_string();
    report.label = spec.label();
    report.window = Some(spec);
    report
}

/// Attach the rain predictor when the configuration asks for it.
pub fn prepare_table(table: &ClaimTable, cfg: &ExperimentConfig, grid: Option<&RainGrid>) -> Result<ClaimTable> {
    match (cfg.rain, grid) {
        (Some(scheme), Some(g)) => attach_rain(table, g, scheme, cfg.rain_reduction),
        (Some(_), None) => Err(Error::Config("rain is enabled but no grid was loaded".into())),
        (None, _) => Ok(table.clone()),
    }
}

/// County codes present in the table, sorted.
pub fn counties_in(table: &ClaimTable) -> Vec<String> {
    let Some(c) = table.column(COUNTY_CODE) else { return vec![String::new()] };
    let Some(v) = c.categorical() else { return vec![String::new()] };
    let set: BTreeSet<&String> = v.iter().zip(&c.missing).filter(|(_, m)| !**m).map(|(s, _)| s).collect();
    set.into_iter().cloned().collect()
}

/// The table restricted to one county (the whole table when `county` is empty).
pub fn county_table(table: &ClaimTable, county: &str) -> ClaimTable {
    if county.is_empty() {
        return table.clone();
    }
    let rows: Vec<usize> = match table.column(COUNTY_CODE).and_then(|c| c.categorical().map(|v| (v, &c.missing))) {
        Some((v, m)) => (0..table.n_rows()).filter(|&r| !m[r] && v[r] == county).collect(),
        None => Vec::new(),
    };
    table.select_rows(&rows)
}

/// Every (county, window) job of the plan, run on the current rayon pool.
/// Reports come back in county-then-window order.
pub fn run_windows(table: &ClaimTable, counties: &[String], plan: &[WindowSpec], cfg: &ExperimentConfig, seed: u64) -> Vec<BacktestReport> {
    let tables: Vec<ClaimTable> = counties.iter().map(|c| county_table(table, c)).collect();
    let jobs: Vec<(usize, WindowSpec)> = (0..counties.len()).flat_map(|c| plan.iter().map(move |w| (c, *w))).collect();
    jobs.par_iter()
        .map(|&(c, w)| {
            let s = seed::derive(seed, &[seed::tag("window"), seed::tag(&counties[c]), w.k as u64, w.mode as u64]);
            run_window(&tables[c], &counties[c], w, cfg, s)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Guard the mean against rounding just outside the range.
        Some(Self { mean: mean.clamp(min, max), min, max, count: values.len() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKey {
    Rmse,
    RmseOverSigma,
    KsStat,
    KsP,
    Kl,
    DistR2,
    Auc,
}

impl MetricKey {
    pub const ALL: [MetricKey; 7] =
        [MetricKey::Rmse, MetricKey::RmseOverSigma, MetricKey::KsStat, MetricKey::KsP, MetricKey::Kl, MetricKey::DistR2, MetricKey::Auc];

    pub fn name(self) -> &'static str {
        match self {
            MetricKey::Rmse => "rmse",
            MetricKey::RmseOverSigma => "rmse_over_sigma",
            MetricKey::KsStat => "ks_stat",
            MetricKey::KsP => "ks_p",
            MetricKey::Kl => "kl",
            MetricKey::DistR2 => "dist_r2",
            MetricKey::Auc => "auc",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn get(self, b: &MetricBundle) -> Option<f64> {
        match self {
            MetricKey::Rmse => b.rmse,
            MetricKey::RmseOverSigma => b.rmse_over_sigma,
            MetricKey::KsStat => b.ks_stat,
            MetricKey::KsP => b.ks_p,
            MetricKey::Kl => b.kl,
            MetricKey::DistR2 => b.dist_r2,
            MetricKey::Auc => b.auc,
        }
    }
}

/// Mean/min/max of every metric across bundles, keyed by metric name.
pub fn summarize(bundles: &[&MetricBundle]) -> BTreeMap<String, Summary> {
    MetricKey::ALL
        .iter()
        .filter_map(|k| {
            let v: Vec<f64> = bundles.iter().filter_map(|b| k.get(b)).collect();
            Summary::of(&v).map(|s| (k.name().to_string(), s))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedSummary {
    pub reports: Vec<BacktestReport>,
    pub before: BTreeMap<String, Summary>,
    pub after: BTreeMap<String, Summary>,
}

/// `repeats` independent random 70/30 splits of the table.
pub fn repeated_split_eval(table: &ClaimTable, repeats: usize, cfg: &ExperimentConfig, seed: u64) -> Result<RepeatedSummary> {
    if repeats < 1 {
        return Err(invalid("repeats must be at least 1"));
    }
    let reports: Vec<BacktestReport> = (0..repeats)
        .into_par_iter()
        .map(|i| {
            let s = seed::derive(seed, &[seed::tag("repeat"), i as u64]);
            let (train, test) = split(table.n_rows(), 0.7, seed::derive(s, &[0]))?;
            let mut r = run_split(table, &train, &test, cfg, seed::derive(s, &[1]));
            r.label = format!("repeat {i}");
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let before = summarize(&reports.iter().map(|r| &r.before).collect::<Vec<_>>());
    let after = summarize(&reports.iter().filter_map(|r| r.after.as_ref()).collect::<Vec<_>>());
    Ok(RepeatedSummary { reports, before, after })
}

/// One report per event label: that event's rows are the test set and every
/// other labelled row trains. Rows with an empty label take part in neither.
pub fn group_loo(table: &ClaimTable, labels: &[String], cfg: &ExperimentConfig, seed: u64) -> Result<Vec<BacktestReport>> {
    if labels.len() != table.n_rows() {
        return Err(Error::DimensionMismatch { expected: table.n_rows(), got: labels.len() });
    }
    let events: BTreeSet<&String> = labels.iter().filter(|l| !l.is_empty()).collect();
    if events.len() < 2 {
        return Err(invalid(format!("leave-one-out needs at least 2 distinct event labels, found {}", events.len())));
    }
    let events: Vec<&String> = events.into_iter().collect();
    Ok(events
        .par_iter()
        .map(|ev| {
            let test: Vec<usize> = (0..labels.len()).filter(|&r| &labels[r] == *ev).collect();
            let train: Vec<usize> = (0..labels.len()).filter(|&r| !labels[r].is_empty() && &labels[r] != *ev).collect();
            let mut r = run_split(table, &train, &test, cfg, seed::derive(seed, &[seed::tag("event"), seed::tag(ev)]));
            r.label = format!("event {ev}");
            r
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Before,
    After,
}

/// `Σ(metric·n_test)/Σ n_test` over reports that all carry the metric.
pub fn weighted_aggregate(reports: &[BacktestReport], stage: Stage, key: MetricKey) -> Result<f64> {
    if reports.is_empty() {
        return Err(invalid("weighted aggregate of no reports"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for r in reports {
        let bundle = match stage {
            Stage::Before => Some(&r.before),
            Stage::After => r.after.as_ref(),
        };
        let v = bundle.and_then(|b| key.get(b)).ok_or_else(|| invalid(format!("report `{}` has no {}", r.label, key.name())))?;
        if r.n_test == 0 {
            return Err(invalid(format!("report `{}` has no test claims", r.label)));
        }
        num += v * r.n_test as f64;
        den += r.n_test as f64;
    }
    Ok(num / den)
}

/// One summary line per report: headline metrics (after correction when
/// available) followed by the same metrics before correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub county: String,
    pub test_year: Option<i32>,
    pub label: String,
    pub r2: Option<f64>,
    pub ks_p: Option<f64>,
    pub kl: Option<f64>,
    pub auc: Option<f64>,
    pub n: usize,
    pub rmse_over_sigma: Option<f64>,
    pub r2_before: Option<f64>,
    pub ks_p_before: Option<f64>,
    pub kl_before: Option<f64>,
    pub auc_before: Option<f64>,
}

impl From<&BacktestReport> for SummaryRow {
    fn from(r: &BacktestReport) -> Self {
        let h = r.headline();
        Self {
            county: r.county.clone(),
            test_year: r.test_year(),
            label: r.label.clone(),
            r2: h.dist_r2,
            ks_p: h.ks_p,
            kl: h.kl,
            auc: h.auc,
            n: r.n_test,
            rmse_over_sigma: h.rmse_over_sigma,
            r2_before: r.before.dist_r2,
            ks_p_before: r.before.ks_p,
            kl_before: r.before.kl,
            auc_before: r.before.auc,
        }
    }
}

pub fn summary_rows(reports: &[BacktestReport]) -> Vec<SummaryRow> {
    reports.iter().map(SummaryRow::from).collect()
}

/// Comma-separated summary, one row per report; absent values are empty cells.
pub fn write_summary<W: Write>(reports: &[BacktestReport], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for row in summary_rows(reports) {
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}
