//! Experiment configuration: `key = value` lines, `#` comments.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rainfall::{AggScheme, SpatialReduction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// Fixed-length training span that moves forward with the test year.
    Shifting,
    /// Training span anchored at the baseline year.
    Expanding,
}

impl FromStr for WindowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shifting" => Ok(WindowMode::Shifting),
            "expanding" => Ok(WindowMode::Expanding),
            _ => Err(Error::Config(format!("mode: expected `shifting` or `expanding`, got `{s}`"))),
        }
    }
}

impl fmt::Display for WindowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowMode::Shifting => "shifting",
            WindowMode::Expanding => "expanding",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    Gbt,
    Gp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Year windows from the window plan.
    Windows,
    /// Repeated random 70/30 splits.
    Repeated,
    /// Leave one event out.
    Loo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// County codes to evaluate; empty means every county in the table.
    pub counties: Vec<String>,
    pub baseline: i32,
    pub offset: i32,
    pub mode: WindowMode,
    pub last_test_year: i32,
    pub protocol: Protocol,
    pub regressor: RegressorKind,
    pub rain: Option<AggScheme>,
    pub rain_reduction: SpatialReduction,
    pub rain_grid: Option<PathBuf>,
    pub cycles: usize,
    pub repeats: usize,
    pub seed: u64,
    pub rounds: usize,
    pub patience: usize,
    pub lambda: f64,
    pub min_fit_samples: usize,
    pub gp_max_rows: usize,
    pub gp_samples: usize,
    pub gp_folds: usize,
    pub event_column: Option<String>,
    pub claims: Option<PathBuf>,
    pub cpi: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub jobs: usize,
    pub synthetic_rows_per_year: usize,
    pub synthetic_first_year: i32,
    pub synthetic_last_year: i32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            counties: Vec::new(),
            baseline: 2000,
            offset: 10,
            mode: WindowMode::Shifting,
            last_test_year: 2020,
            protocol: Protocol::Windows,
            regressor: RegressorKind::Gbt,
            rain: None,
            rain_reduction: SpatialReduction::Mean,
            rain_grid: None,
            cycles: 100,
            repeats: 30,
            seed: 0,
            rounds: 100,
            patience: 50,
            lambda: 1.0,
            min_fit_samples: crate::dist::DEFAULT_MIN_N,
            gp_max_rows: 20_000,
            gp_samples: 8,
            gp_folds: 5,
            event_column: None,
            claims: None,
            cpi: None,
            schema: None,
            out: None,
            jobs: 0,
            synthetic_rows_per_year: 150,
            synthetic_first_year: 2000,
            synthetic_last_year: 2020,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl ExperimentConfig {
    /// Apply one `key = value` setting. Unknown keys are errors.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "counties" => {
                self.counties = v.split(',').map(str::trim).filter(|s| !s.is_empty() && *s != "all").map(String::from).collect()
            }
            "baseline" => self.baseline = parse(key, v)?,
            "offset" => self.offset = parse(key, v)?,
            "mode" => self.mode = v.parse()?,
            "last_test_year" => self.last_test_year = parse(key, v)?,
            "protocol" => {
                self.protocol = match v {
                    "windows" => Protocol::Windows,
                    "repeated" => Protocol::Repeated,
                    "loo" => Protocol::Loo,
                    _ => return Err(Error::Config(format!("protocol: expected windows, repeated or loo, got `{v}`"))),
                }
            }
            "regressor" => {
                self.regressor = match v {
                    "gbt" => RegressorKind::Gbt,
                    "gp" => RegressorKind::Gp,
                    _ => return Err(Error::Config(format!("regressor: expected gbt or gp, got `{v}`"))),
                }
            }
            "rain" => {
                self.rain = match v {
                    "off" | "none" | "" => None,
                    s => Some(s.parse().map_err(|e| Error::Config(format!("rain: {e}")))?),
                }
            }
            "rain_reduction" => {
                self.rain_reduction = match v {
                    "mean" => SpatialReduction::Mean,
                    "sum" => SpatialReduction::Sum,
                    _ => return Err(Error::Config(format!("rain_reduction: expected mean or sum, got `{v}`"))),
                }
            }
            "rain_grid" => self.rain_grid = opt_path(v),
            "cycles" => self.cycles = parse(key, v)?,
            "repeats" => self.repeats = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "rounds" => self.rounds = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "lambda" => self.lambda = parse(key, v)?,
            "min_fit_samples" => self.min_fit_samples = parse(key, v)?,
            "gp_max_rows" => self.gp_max_rows = parse(key, v)?,
            "gp_samples" => self.gp_samples = parse(key, v)?,
            "gp_folds" => self.gp_folds = parse(key, v)?,
            "event_column" => self.event_column = (!v.is_empty()).then(|| v.to_string()),
            "claims" => self.claims = opt_path(v),
            "cpi" => self.cpi = opt_path(v),
            "schema" => self.schema = opt_path(v),
            "out" => self.out = opt_path(v),
            "jobs" => self.jobs = parse(key, v)?,
            "synthetic_rows_per_year" => self.synthetic_rows_per_year = parse(key, v)?,
            "synthetic_first_year" => self.synthetic_first_year = parse(key, v)?,
            "synthetic_last_year" => self.synthetic_last_year = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: key `{k}` given twice", i + 1)));
            }
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.offset < 1 {
            return Err(Error::Config(format!("offset must be ≥ 1, got {}", self.offset)));
        }
        if self.last_test_year < self.baseline + self.offset {
            return Err(Error::Config(format!(
                "last_test_year {} is before the first test year {}",
                self.last_test_year,
                self.baseline + self.offset
            )));
        }
        if self.repeats < 1 {
            return Err(Error::Config("repeats must be ≥ 1".into()));
        }
        if self.rounds < 1 {
            return Err(Error::Config("rounds must be ≥ 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be ≥ 0, got {}", self.lambda)));
        }
        if self.gp_folds < 2 {
            return Err(Error::Config("gp_folds must be ≥ 2".into()));
        }
        if self.rain.is_some() && self.rain_grid.is_none() {
            return Err(Error::Config("rain is enabled but rain_grid is not set".into()));
        }
        if self.protocol == Protocol::Loo && self.event_column.is_none() {
            return Err(Error::Config("protocol loo needs event_column".into()));
        }
        if self.synthetic_last_year < self.synthetic_first_year {
            return Err(Error::Config("synthetic_last_year precedes synthetic_first_year".into()));
        }
        Ok(())
    }
}
