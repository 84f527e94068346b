//! Claims tables in the NFIP schema: parsing, validation and the
//! preprocessing passes applied before imputation (inflation adjustment,
//! construction-date repair, month indexing).
//!
//! Ingestion never drops rows. Cells that fail coercion or range checks become
//! missing, and row-level problems are recorded as [`Flag`]s.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RESPONSE_FIELD: &str = "amountPaidOnBuildingClaim";
pub const DATE_OF_LOSS: &str = "dateOfLoss";
pub const CONSTRUCTION_DATE: &str = "originalConstructionDate";
pub const YEAR_OF_LOSS: &str = "yearOfLoss";
pub const LATITUDE: &str = "latitude";
pub const LONGITUDE: &str = "longitude";
pub const COUNTY_CODE: &str = "countyCode";

/// Default cap on repeated −100-year construction-date repairs.
pub const DEFAULT_REPAIR_CAP: u32 = 3;

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Continuous,
    Categorical,
    Date,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldRole {
    Predictor,
    Response,
    /// Carried through the pipeline (e.g. county code) but never a regressor input.
    Auxiliary,
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FieldKind::Continuous => "continuous",
            FieldKind::Categorical => "categorical",
            FieldKind::Date => "date",
        })
    }
}

impl fmt::Display for FieldRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FieldRole::Predictor => "predictor",
            FieldRole::Response => "response",
            FieldRole::Auxiliary => "auxiliary",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    pub role: FieldRole,
    pub monetary: bool,
    /// Documented categorical levels. Informational: unseen tokens are accepted.
    pub levels: Vec<String>,
    /// Inclusive numeric range for continuous fields.
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl FieldSpec {
    fn new(name: &str, kind: FieldKind, role: FieldRole) -> Self {
        Self { name: name.to_string(), kind, role, monetary: false, levels: Vec::new(), min: None, max: None }
    }

    pub fn continuous(name: &str) -> Self {
        Self::new(name, FieldKind::Continuous, FieldRole::Predictor)
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        let mut f = Self::new(name, FieldKind::Categorical, FieldRole::Predictor);
        f.levels = levels.iter().map(|s| s.to_string()).collect();
        f
    }

    pub fn date(name: &str) -> Self {
        Self::new(name, FieldKind::Date, FieldRole::Predictor)
    }

    pub fn with_role(mut self, role: FieldRole) -> Self {
        self.role = role;
        self
    }

    pub fn monetary(mut self) -> Self {
        self.monetary = true;
        self
    }

    pub fn with_range(mut self, min: Option<f64>, max: Option<f64>) -> Self {
        self.min = min;
        self.max = max;
        self
    }

    fn in_range(&self, v: f64) -> bool {
        self.min.is_none_or(|m| v >= m) && self.max.is_none_or(|m| v <= m)
    }
}

/// Field registry: name, kind, role and validation range of every known column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaRegistry {
    fields: Vec<FieldSpec>,
}

fn levels(range: std::ops::RangeInclusive<u32>) -> Vec<String> {
    range.map(|v| v.to_string()).collect()
}

impl SchemaRegistry {
    pub fn new(fields: Vec<FieldSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &fields {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate field `{}` in registry", f.name)));
            }
        }
        let responses: Vec<_> = fields.iter().filter(|f| f.role == FieldRole::Response).collect();
        match responses.as_slice() {
            [r] if r.kind == FieldKind::Continuous && r.monetary => {}
            [r] => {
                return Err(Error::Schema(format!("response field `{}` must be continuous and monetary", r.name)))
            }
            [] => return Err(Error::Schema("registry has no response field".into())),
            _ => return Err(Error::Schema("registry has more than one response field".into())),
        }
        Ok(Self { fields })
    }

    /// The NFIP claims registry: 22 discrete fields (two of them dates), the
    /// response, nine continuous predictors and the auxiliary county code.
    pub fn nfip() -> Self {
        use FieldSpec as F;
        let yn = &["Y", "N"];
        let mut fields = vec![
            F::categorical("agricultureStructureIndicator", yn),
            F::categorical("basementEnclosureCrawlspaceType", &["0", "1", "2", "3", "4"]),
            F::categorical("communityRatingSystemDiscount", &[]),
            F::categorical("condominiumIndicator", &["N", "U", "A", "H", "L", "T"]),
            F::date(DATE_OF_LOSS),
            F::categorical("elevatedBuildingIndicator", yn),
            F::categorical("elevationCertificateIndicator", yn),
            F::categorical("floodZone", &[]),
            F::categorical("houseWorship", yn),
            F::categorical("locationOfContents", &[]),
            F::categorical("numberOfFloorsInTheInsuredBuilding", &[]),
            F::categorical("stateOwnedIndicator", yn),
            F::categorical("nonProfitIndicator", yn),
            F::categorical("obstructionType", &[]),
            F::categorical("occupancyType", &["1", "2", "3", "4"]),
            F::date(CONSTRUCTION_DATE),
            F::categorical("postFIRMConstructionIndicator", yn),
            F::categorical("rateMethod", &[]),
            F::categorical("primaryResidence", yn),
            F::categorical("smallBusinessIndicatorBuilding", yn),
            F::categorical(YEAR_OF_LOSS, &[]),
            F::categorical("reportedZipcode", &[]),
            F::continuous(RESPONSE_FIELD)
                .with_role(FieldRole::Response)
                .monetary()
                .with_range(Some(0.0), None),
            F::continuous("baseFloodElevation"),
            F::continuous("elevationDifference"),
            F::continuous(LATITUDE).with_range(Some(-90.0), Some(90.0)),
            F::continuous(LONGITUDE).with_range(Some(-180.0), Some(180.0)),
            F::continuous("lowestAdjacentGrade"),
            F::continuous("lowestFloorElevation"),
            F::continuous("policyCount").with_range(Some(1.0), None),
            F::continuous("totalBuildingInsuranceCoverage").monetary().with_range(Some(0.0), None),
            F::continuous("totalContentsInsuranceCoverage").monetary().with_range(Some(0.0), None),
            F::categorical(COUNTY_CODE, &[]).with_role(FieldRole::Auxiliary),
        ];
        for f in fields.iter_mut() {
            match f.name.as_str() {
                "communityRatingSystemDiscount" => f.levels = levels(1..=10),
                "locationOfContents" => f.levels = levels(1..=7),
                "numberOfFloorsInTheInsuredBuilding" => f.levels = levels(1..=6),
                _ => {}
            }
        }
        Self::new(fields).expect("built-in registry is valid")
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn get(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn response(&self) -> &FieldSpec {
        self.fields.iter().find(|f| f.role == FieldRole::Response).expect("validated at construction")
    }

    /// Registry file: `name,kind,role,monetary,levels,min,max` with `|`-separated levels.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let mut fields = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i as u64 + 2;
            let get = |j: usize| rec.get(j).unwrap_or("");
            let bad = |msg: String| Error::Parse { line, msg };
            let kind = match get(1) {
                "continuous" => FieldKind::Continuous,
                "categorical" => FieldKind::Categorical,
                "date" => FieldKind::Date,
                other => return Err(bad(format!("unknown field kind `{other}`"))),
            };
            let role = match get(2) {
                "predictor" | "" => FieldRole::Predictor,
                "response" => FieldRole::Response,
                "auxiliary" => FieldRole::Auxiliary,
                other => return Err(bad(format!("unknown field role `{other}`"))),
            };
            let monetary = matches!(get(3), "true" | "1" | "yes");
            let levels = get(4).split('|').filter(|s| !s.is_empty()).map(str::to_string).collect();
            let num = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(format!("bad bound `{s}`")))
                }
            };
            fields.push(FieldSpec {
                name: get(0).to_string(),
                kind,
                role,
                monetary,
                levels,
                min: num(get(5))?,
                max: num(get(6))?,
            });
        }
        Self::new(fields)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["name", "kind", "role", "monetary", "levels", "min", "max"])?;
        for f in &self.fields {
            let bound = |b: Option<f64>| b.map(|v| v.to_string()).unwrap_or_default();
            wr.write_record([
                f.name.clone(),
                f.kind.to_string(),
                f.role.to_string(),
                f.monetary.to_string(),
                f.levels.join("|"),
                bound(f.min),
                bound(f.max),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Per-row values of one column. Missing cells hold a placeholder
/// (NaN, empty token, or the Unix epoch) and are identified by the mask.
#[derive(Debug, Clone)]
pub enum ColumnValues {
    Continuous(Vec<f64>),
    Categorical(Vec<String>),
    Date(Vec<NaiveDate>),
}

impl PartialEq for ColumnValues {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ColumnValues::Continuous(a), ColumnValues::Continuous(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (ColumnValues::Categorical(a), ColumnValues::Categorical(b)) => a == b,
            (ColumnValues::Date(a), ColumnValues::Date(b)) => a == b,
            _ => false,
        }
    }
}

impl ColumnValues {
    pub fn len(&self) -> usize {
        match self {
            ColumnValues::Continuous(v) => v.len(),
            ColumnValues::Categorical(v) => v.len(),
            ColumnValues::Date(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Self {
        match self {
            ColumnValues::Continuous(v) => ColumnValues::Continuous(rows.iter().map(|&r| v[r]).collect()),
            ColumnValues::Categorical(v) => ColumnValues::Categorical(rows.iter().map(|&r| v[r].clone()).collect()),
            ColumnValues::Date(v) => ColumnValues::Date(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

pub(crate) fn missing_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableColumn {
    pub field: FieldSpec,
    pub values: ColumnValues,
    pub missing: Vec<bool>,
}

impl TableColumn {
    pub fn name(&self) -> &str {
        &self.field.name
    }

    pub fn continuous(&self) -> Option<&[f64]> {
        match &self.values {
            ColumnValues::Continuous(v) => Some(v),
            _ => None,
        }
    }

    pub fn categorical(&self) -> Option<&[String]> {
        match &self.values {
            ColumnValues::Categorical(v) => Some(v),
            _ => None,
        }
    }

    pub fn dates(&self) -> Option<&[NaiveDate]> {
        match &self.values {
            ColumnValues::Date(v) => Some(v),
            _ => None,
        }
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    /// Observed value at `row`, if any.
    pub fn value_f64(&self, row: usize) -> Option<f64> {
        match &self.values {
            ColumnValues::Continuous(v) if !self.missing[row] => Some(v[row]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagCode {
    CoercionFailed,
    OutOfRange,
    LossYearMissing,
    CpiYearUncovered,
    ConstructionDateRepaired,
    RepairCapReached,
    RainUnavailable,
}

impl FlagCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FlagCode::CoercionFailed => "coercion_failed",
            FlagCode::OutOfRange => "out_of_range",
            FlagCode::LossYearMissing => "loss_year_missing",
            FlagCode::CpiYearUncovered => "cpi_year_uncovered",
            FlagCode::ConstructionDateRepaired => "construction_date_repaired",
            FlagCode::RepairCapReached => "repair_cap_reached",
            FlagCode::RainUnavailable => "rain_unavailable",
        }
    }
}

impl fmt::Display for FlagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flag {
    pub row: usize,
    pub field: String,
    pub code: FlagCode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClaimTable {
    columns: Vec<TableColumn>,
    n_rows: usize,
    pub flags: Vec<Flag>,
    /// Cells that failed kind coercion during parsing.
    pub coercion_warnings: usize,
    /// Header columns not present in the registry.
    pub ignored_columns: Vec<String>,
}

impl ClaimTable {
    pub fn new(columns: Vec<TableColumn>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, |c| c.values.len());
        let mut seen = HashSet::new();
        for c in &columns {
            if c.values.len() != n_rows || c.missing.len() != n_rows {
                return Err(Error::DimensionMismatch { expected: n_rows, got: c.values.len().max(c.missing.len()) });
            }
            if !seen.insert(c.field.name.clone()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.field.name)));
            }
        }
        Ok(Self { columns, n_rows, flags: Vec::new(), coercion_warnings: 0, ignored_columns: Vec::new() })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[TableColumn] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&TableColumn> {
        self.columns.iter().find(|c| c.field.name == name)
    }

    pub fn column_mut(&mut self, name: &str) -> Option<&mut TableColumn> {
        self.columns.iter_mut().find(|c| c.field.name == name)
    }

    pub fn response(&self) -> Option<&TableColumn> {
        self.columns.iter().find(|c| c.field.role == FieldRole::Response)
    }

    pub fn push_column(&mut self, column: TableColumn) -> Result<()> {
        if column.values.len() != self.n_rows || column.missing.len() != self.n_rows {
            return Err(Error::DimensionMismatch { expected: self.n_rows, got: column.values.len() });
        }
        if self.column(&column.field.name).is_some() {
            return Err(Error::Schema(format!("duplicate column `{}`", column.field.name)));
        }
        self.columns.push(column);
        Ok(())
    }

    /// Rows `rows` (in that order) as a new table; flags are remapped.
    pub fn select_rows(&self, rows: &[usize]) -> ClaimTable {
        let columns = self
            .columns
            .iter()
            .map(|c| TableColumn {
                field: c.field.clone(),
                values: c.values.select(rows),
                missing: rows.iter().map(|&r| c.missing[r]).collect(),
            })
            .collect();
        let mut remap = HashMap::new();
        for (new, &old) in rows.iter().enumerate() {
            remap.entry(old).or_insert(new);
        }
        let flags = self
            .flags
            .iter()
            .filter_map(|f| remap.get(&f.row).map(|&row| Flag { row, ..f.clone() }))
            .collect();
        ClaimTable {
            columns,
            n_rows: rows.len(),
            flags,
            coercion_warnings: self.coercion_warnings,
            ignored_columns: self.ignored_columns.clone(),
        }
    }

    /// Loss year per row: `yearOfLoss` when present and numeric, else the year of `dateOfLoss`.
    pub fn loss_year(&self, row: usize) -> Option<i32> {
        if let Some(c) = self.column(YEAR_OF_LOSS) {
            if !c.missing[row] {
                if let Some(y) = c.categorical().and_then(|v| v[row].parse::<i32>().ok()) {
                    return Some(y);
                }
            }
        }
        let c = self.column(DATE_OF_LOSS)?;
        if c.missing[row] {
            None
        } else {
            c.dates().map(|d| d[row].year())
        }
    }

    pub fn loss_years(&self) -> Vec<Option<i32>> {
        (0..self.n_rows).map(|r| self.loss_year(r)).collect()
    }

    /// Fraction of missing cells per column, in column order.
    pub fn missing_rates(&self) -> Vec<(String, f64)> {
        self.columns
            .iter()
            .map(|c| {
                let rate = if self.n_rows == 0 { 0.0 } else { c.missing_count() as f64 / self.n_rows as f64 };
                (c.field.name.clone(), rate)
            })
            .collect()
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    // NFIP exports carry a time suffix ("2005-08-29T00:00:00.000Z").
    let s = match s.find('T') {
        Some(10) => &s[..10],
        _ => s,
    };
    NaiveDate::parse_from_str(s, DATE_FORMAT).ok()
}

/// Parse a comma-separated claims file with a header row.
///
/// Columns are ordered as in the registry. Header names absent from the
/// registry are ignored and listed in [`ClaimTable::ignored_columns`].
pub fn parse_claims<R: Read>(reader: R, schema: &SchemaRegistry) -> Result<ClaimTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers.get(0) == Some("")) {
        // Zero-byte input: an empty table over the full registry.
        let columns = schema.fields().iter().map(|f| empty_column(f.clone(), 0)).collect();
        return ClaimTable::new(columns);
    }

    let mut seen = HashSet::new();
    let mut mapped: Vec<(usize, usize)> = Vec::new(); // (registry position, header index)
    let mut ignored = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if !seen.insert(h.to_string()) {
            return Err(Error::Schema(format!("duplicate column `{h}` in header")));
        }
        match schema.position(h) {
            Some(p) => mapped.push((p, i)),
            None => ignored.push(h.to_string()),
        }
    }
    let response = schema.response();
    if !mapped.iter().any(|&(p, _)| schema.fields()[p].name == response.name) {
        return Err(Error::Schema(format!("response column `{}` missing from header", response.name)));
    }
    mapped.sort();

    let mut columns: Vec<TableColumn> = mapped.iter().map(|&(p, _)| empty_column(schema.fields()[p].clone(), 0)).collect();
    let mut flags = Vec::new();
    let mut warnings = 0usize;
    let mut row = 0usize;
    for rec in rdr.records() {
        let rec = rec?;
        for (col, &(_, hi)) in columns.iter_mut().zip(&mapped) {
            let cell = rec.get(hi).unwrap_or("").trim();
            let mut missing = cell.is_empty();
            let field = &col.field;
            match &mut col.values {
                ColumnValues::Continuous(v) => {
                    let parsed = if missing { None } else { cell.parse::<f64>().ok().filter(|x| x.is_finite()) };
                    match parsed {
                        Some(x) if field.in_range(x) => v.push(x),
                        Some(_) => {
                            flags.push(Flag { row, field: field.name.clone(), code: FlagCode::OutOfRange });
                            missing = true;
                            v.push(f64::NAN);
                        }
                        None => {
                            if !missing {
                                warnings += 1;
                                flags.push(Flag { row, field: field.name.clone(), code: FlagCode::CoercionFailed });
                                missing = true;
                            }
                            v.push(f64::NAN);
                        }
                    }
                }
                ColumnValues::Categorical(v) => v.push(if missing { String::new() } else { cell.to_string() }),
                ColumnValues::Date(v) => match if missing { None } else { parse_date(cell) } {
                    Some(d) => v.push(d),
                    None => {
                        if !missing {
                            warnings += 1;
                            flags.push(Flag { row, field: field.name.clone(), code: FlagCode::CoercionFailed });
                            missing = true;
                        }
                        v.push(missing_date());
                    }
                },
            }
            col.missing.push(missing);
        }
        row += 1;
    }
    if warnings > 0 {
        log::warn!("{warnings} cells failed kind coercion and were marked missing");
    }
    let mut table = ClaimTable::new(columns)?;
    table.flags = flags;
    table.coercion_warnings = warnings;
    table.ignored_columns = ignored;
    Ok(table)
}

pub(crate) fn empty_column(field: FieldSpec, n: usize) -> TableColumn {
    let values = match field.kind {
        FieldKind::Continuous => ColumnValues::Continuous(vec![f64::NAN; n]),
        FieldKind::Categorical => ColumnValues::Categorical(vec![String::new(); n]),
        FieldKind::Date => ColumnValues::Date(vec![missing_date(); n]),
    };
    TableColumn { field, values, missing: vec![true; n] }
}

/// Write a table in the same comma-separated format `parse_claims` reads.
pub fn write_claims<W: Write>(table: &ClaimTable, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(table.columns.iter().map(|c| c.field.name.as_str()))?;
    for r in 0..table.n_rows {
        let rec: Vec<String> = table
            .columns
            .iter()
            .map(|c| {
                if c.missing[r] {
                    return String::new();
                }
                match &c.values {
                    ColumnValues::Continuous(v) => v[r].to_string(),
                    ColumnValues::Categorical(v) => v[r].clone(),
                    ColumnValues::Date(v) => v[r].format(DATE_FORMAT).to_string(),
                }
            })
            .collect();
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Flags sidecar: `row,field,flag`.
pub fn write_flags<W: Write>(flags: &[Flag], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["row", "field", "flag"])?;
    for f in flags {
        wr.write_record([f.row.to_string(), f.field.clone(), f.code.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Consumer price index by calendar year, with the base year amounts are expressed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpiTable {
    pub base_year: i32,
    index: BTreeMap<i32, f64>,
}

impl CpiTable {
    pub const DEFAULT_BASE_YEAR: i32 = 2020;

    pub fn new(index: BTreeMap<i32, f64>, base_year: i32) -> Result<Self> {
        if let Some((y, v)) = index.iter().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(crate::error::invalid(format!("CPI for {y} must be positive, got {v}")));
        }
        if !index.contains_key(&base_year) {
            return Err(crate::error::invalid(format!("CPI table does not cover base year {base_year}")));
        }
        Ok(Self { base_year, index })
    }

    /// Two-column `year,index` text; a non-numeric first line is treated as a header.
    pub fn from_csv<R: Read>(reader: R, base_year: i32) -> Result<Self> {
        let mut rdr =
            csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).flexible(true).from_reader(reader);
        let mut index = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i as u64 + 1;
            let (y, v) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""));
            match (y.parse::<i32>(), v.parse::<f64>()) {
                (Ok(y), Ok(v)) => {
                    index.insert(y, v);
                }
                _ if i == 0 => continue,
                _ if y.is_empty() && v.is_empty() => continue,
                _ => return Err(Error::Parse { line, msg: format!("expected `year,index`, got `{y},{v}`") }),
            }
        }
        Self::new(index, base_year)
    }

    pub fn get(&self, year: i32) -> Option<f64> {
        self.index.get(&year).copied()
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.index.keys().copied()
    }
}

/// Express every monetary column in base-year dollars: `v · CPI(base) / CPI(loss year)`.
///
/// Rows with no loss year or a year outside the CPI table keep their value and are flagged.
pub fn adjust_inflation(table: &ClaimTable, cpi: &CpiTable) -> ClaimTable {
    let mut out = table.clone();
    let base = cpi.get(cpi.base_year).expect("validated at construction");
    let years = table.loss_years();
    let monetary: Vec<usize> =
        (0..out.columns.len()).filter(|&i| out.columns[i].field.monetary && out.columns[i].continuous().is_some()).collect();
    for r in 0..table.n_rows {
        if !monetary.iter().any(|&i| !out.columns[i].missing[r]) {
            continue;
        }
        let factor = match years[r] {
            None => {
                out.flags.push(Flag { row: r, field: YEAR_OF_LOSS.into(), code: FlagCode::LossYearMissing });
                continue;
            }
            Some(y) => match cpi.get(y) {
                Some(c) => base / c,
                None => {
                    out.flags.push(Flag { row: r, field: YEAR_OF_LOSS.into(), code: FlagCode::CpiYearUncovered });
                    continue;
                }
            },
        };
        for &i in &monetary {
            let col = &mut out.columns[i];
            if let (false, ColumnValues::Continuous(v)) = (col.missing[r], &mut col.values) {
                v[r] *= factor;
            }
        }
    }
    out
}

/// Subtract 100 years from construction dates that fall after the loss date,
/// repeating up to `cap` times; rows still inconsistent after the cap are flagged.
pub fn fix_construction_dates_with_cap(table: &ClaimTable, cap: u32) -> ClaimTable {
    let mut out = table.clone();
    let (Some(loss), Some(cons_idx)) = (
        table.column(DATE_OF_LOSS).filter(|c| c.dates().is_some()).cloned(),
        out.columns.iter().position(|c| c.field.name == CONSTRUCTION_DATE && c.dates().is_some()),
    ) else {
        return out;
    };
    let loss_dates = loss.dates().unwrap();
    let mut flags = Vec::new();
    {
        let col = &mut out.columns[cons_idx];
        let ColumnValues::Date(cons) = &mut col.values else { unreachable!() };
        for r in 0..table.n_rows {
            if loss.missing[r] || col.missing[r] {
                continue;
            }
            let mut repairs = 0;
            while cons[r] > loss_dates[r] && repairs < cap {
                match cons[r].checked_sub_months(Months::new(1200)) {
                    Some(d) => cons[r] = d,
                    None => break,
                }
                repairs += 1;
            }
            if repairs > 0 {
                flags.push(Flag { row: r, field: CONSTRUCTION_DATE.into(), code: FlagCode::ConstructionDateRepaired });
            }
            if cons[r] > loss_dates[r] {
                flags.push(Flag { row: r, field: CONSTRUCTION_DATE.into(), code: FlagCode::RepairCapReached });
            }
        }
    }
    out.flags.extend(flags);
    out
}

pub fn fix_construction_dates(table: &ClaimTable) -> ClaimTable {
    fix_construction_dates_with_cap(table, DEFAULT_REPAIR_CAP)
}

/// Months since January 1960 (January 1960 is 0).
pub fn month_index(d: NaiveDate) -> i64 {
    (d.year() as i64 - 1960) * 12 + d.month0() as i64
}
