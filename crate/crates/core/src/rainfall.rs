//! Gridded daily precipitation and the per-claim rainfall predictor.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::claims::{ClaimTable, ColumnValues, Flag, FieldSpec, FlagCode, TableColumn, DATE_OF_LOSS, LATITUDE, LONGITUDE};
use crate::error::{invalid, Error, Result};

pub const RAIN_FIELD: &str = "rain";
/// Half-width of the box around a claim, in degrees.
pub const BOX_HALF_WIDTH: f64 = 0.05;
const BOX_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggKind {
    Sum,
    Max,
}

/// Temporal aggregation over the event day and the preceding days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AggScheme {
    pub kind: AggKind,
    pub days: u32,
}

impl AggScheme {
    pub fn new(kind: AggKind, days: u32) -> Result<Self> {
        if ![3, 5, 7].contains(&days) {
            return Err(invalid(format!("rain window must be 3, 5 or 7 days, got {days}")));
        }
        Ok(Self { kind, days })
    }
}

impl Default for AggScheme {
    fn default() -> Self {
        Self { kind: AggKind::Sum, days: 3 }
    }
}

impl fmt::Display for AggScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            AggKind::Sum => "sum",
            AggKind::Max => "max",
        };
        write!(f, "{k}{}", self.days)
    }
}

impl FromStr for AggScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, days) = if let Some(d) = s.strip_prefix("sum") {
            (AggKind::Sum, d)
        } else if let Some(d) = s.strip_prefix("max") {
            (AggKind::Max, d)
        } else {
            return Err(invalid(format!("unknown rain scheme `{s}` (expected sum3/5/7 or max3/5/7)")));
        };
        let days = days.parse().map_err(|_| invalid(format!("unknown rain scheme `{s}`")))?;
        Self::new(kind, days)
    }
}

/// How the cells inside the box are combined for one day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialReduction {
    #[default]
    Mean,
    Sum,
}

/// Daily precipitation per grid cell, indexed in memory.
#[derive(Debug, Clone)]
pub struct RainGrid {
    /// Cell centres sorted by (lat, lon).
    cells: Vec<(f64, f64)>,
    values: HashMap<(usize, i32), f64>,
    first: NaiveDate,
    last: NaiveDate,
}

fn day_key(d: NaiveDate) -> i32 {
    d.num_days_from_ce()
}

impl RainGrid {
    pub fn from_records(records: impl IntoIterator<Item = (f64, f64, NaiveDate, f64)>) -> Result<Self> {
        let records: Vec<_> = records.into_iter().collect();
        if records.is_empty() {
            return Err(Error::Rain("rain grid is empty".into()));
        }
        let mut cells: Vec<(f64, f64)> = records.iter().map(|r| (r.0, r.1)).collect();
        cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        cells.dedup();
        let mut values = HashMap::with_capacity(records.len());
        let (mut first, mut last) = (records[0].2, records[0].2);
        for (lat, lon, date, mm) in records {
            if !(lat.is_finite() && lon.is_finite()) {
                return Err(Error::Rain(format!("non-finite cell coordinate ({lat}, {lon})")));
            }
            if !(mm >= 0.0 && mm.is_finite()) {
                return Err(Error::Rain(format!("precipitation must be ≥ 0, got {mm} at ({lat}, {lon}) on {date}")));
            }
            let c = cells.binary_search_by(|p| p.0.total_cmp(&lat).then(p.1.total_cmp(&lon))).expect("cell indexed");
            if values.insert((c, day_key(date)), mm).is_some() {
                return Err(Error::Rain(format!("duplicate record for ({lat}, {lon}) on {date}")));
            }
            first = first.min(date);
            last = last.max(date);
        }
        Ok(Self { cells, values, first, last })
    }

    /// Read `lat, lon, date, prcp_mm` rows (header required, any row order).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| Error::Rain(format!("rain grid is missing column `{name}`")))
        };
        let (ilat, ilon, idate, imm) = (col("lat")?, col("lon")?, col("date")?, col("prcp_mm")?);
        let mut recs = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i as u64 + 2;
            let num = |j: usize| {
                rec.get(j)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse { line, msg: format!("bad number in column {j}") })
            };
            let date = rec
                .get(idate)
                .and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok())
                .ok_or_else(|| Error::Parse { line, msg: "bad date".into() })?;
            recs.push((num(ilat)?, num(ilon)?, date, num(imm)?));
        }
        Self::from_records(recs)
    }

    pub fn coverage(&self) -> (NaiveDate, NaiveDate) {
        (self.first, self.last)
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Smallest positive spacing between distinct cell latitudes and longitudes.
    pub fn resolution(&self) -> (Option<f64>, Option<f64>) {
        let spacing = |mut v: Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v.dedup();
            v.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).min_by(f64::total_cmp)
        };
        (spacing(self.cells.iter().map(|c| c.0).collect()), spacing(self.cells.iter().map(|c| c.1).collect()))
    }

    /// Precipitation of one cell on one day, if recorded.
    pub fn get(&self, lat: f64, lon: f64, date: NaiveDate) -> Option<f64> {
        let c = self.cells.binary_search_by(|p| p.0.total_cmp(&lat).then(p.1.total_cmp(&lon))).ok()?;
        self.values.get(&(c, day_key(date))).copied()
    }

    fn cells_in_box(&self, lat: f64, lon: f64) -> Vec<usize> {
        let lo = lat - BOX_HALF_WIDTH - BOX_EPS;
        let hi = lat + BOX_HALF_WIDTH + BOX_EPS;
        let start = self.cells.partition_point(|c| c.0 < lo);
        self.cells[start..]
            .iter()
            .enumerate()
            .take_while(|(_, c)| c.0 <= hi)
            .filter(|(_, c)| (c.1 - lon).abs() <= BOX_HALF_WIDTH + BOX_EPS)
            .map(|(i, _)| start + i)
            .collect()
    }
}

/// Rainfall around `(lat, lon)` over the window ending on `date`.
pub fn aggregate_rain(grid: &RainGrid, lat: f64, lon: f64, date: NaiveDate, scheme: AggScheme, reduction: SpatialReduction) -> Result<f64> {
    let start = date - Duration::days(scheme.days as i64 - 1);
    if start < grid.first || date > grid.last {
        return Err(Error::Rain(format!(
            "window {start}..{date} is outside grid coverage {}..{}",
            grid.first, grid.last
        )));
    }
    let cells = grid.cells_in_box(lat, lon);
    if cells.is_empty() {
        return Err(Error::Rain(format!(
            "no grid cells in box [{:.4}, {:.4}] × [{:.4}, {:.4}]",
            lat - BOX_HALF_WIDTH,
            lat + BOX_HALF_WIDTH,
            lon - BOX_HALF_WIDTH,
            lon + BOX_HALF_WIDTH
        )));
    }
    let mut acc: Option<f64> = None;
    for d in start.iter_days().take(scheme.days as usize) {
        let mut total = 0.0;
        for &c in &cells {
            let v = grid.values.get(&(c, day_key(d))).ok_or_else(|| {
                let (clat, clon) = grid.cells[c];
                Error::Rain(format!("no record for cell ({clat}, {clon}) on {d}"))
            })?;
            total += v;
        }
        let daily = match reduction {
            SpatialReduction::Mean => total / cells.len() as f64,
            SpatialReduction::Sum => total,
        };
        acc = Some(match (scheme.kind, acc) {
            (_, None) => daily,
            (AggKind::Sum, Some(a)) => a + daily,
            (AggKind::Max, Some(a)) => a.max(daily),
        });
    }
    Ok(acc.expect("window has at least one day"))
}

/// Append a continuous `rain` predictor. Rows without coordinates or a loss
/// date, or whose window cannot be aggregated, get a missing cell and a flag.
pub fn attach_rain(table: &ClaimTable, grid: &RainGrid, scheme: AggScheme, reduction: SpatialReduction) -> Result<ClaimTable> {
    let n = table.n_rows();
    let get_f = |name: &str, r: usize| table.column(name).filter(|c| !c.missing[r]).and_then(|c| c.value_f64(r));
    let dates = table.column(DATE_OF_LOSS);
    let mut values = vec![f64::NAN; n];
    let mut missing = vec![true; n];
    let mut flags = Vec::new();
    for r in 0..n {
        let date = dates.filter(|c| !c.missing[r]).and_then(|c| match &c.values {
            ColumnValues::Date(v) => Some(v[r]),
            _ => None,
        });
        let (Some(lat), Some(lon), Some(date)) = (get_f(LATITUDE, r), get_f(LONGITUDE, r), date) else {
            continue;
        };
        match aggregate_rain(grid, lat, lon, date, scheme, reduction) {
            Ok(v) => {
                values[r] = v;
                missing[r] = false;
            }
            Err(e) => {
                log::debug!("row {r}: {e}");
                flags.push(Flag { row: r, field: RAIN_FIELD.into(), code: FlagCode::RainUnavailable });
            }
        }
    }
    let mut out = table.clone();
    out.push_column(TableColumn { field: FieldSpec::continuous(RAIN_FIELD).with_range(Some(0.0), None), values: ColumnValues::Continuous(values), missing })?;
    out.flags.extend(flags);
    Ok(out)
}
