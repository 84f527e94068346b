//! Design-matrix construction: one-hot expansion of categoricals, month
//! indices for dates, train-fitted standardization and random row splits.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::claims::{month_index, ClaimTable, ColumnValues, FieldRole};
use crate::error::{invalid, Error, Result};
use crate::seed;

/// Standard deviations below this are treated as zero.
pub const DEGENERATE_SD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Indicator,
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnKind::Continuous => "continuous",
            ColumnKind::Indicator => "indicator",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub source: String,
    pub kind: ColumnKind,
}

/// Dense row-major design matrix with per-column provenance and the response.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    columns: Vec<ColumnMeta>,
    data: Vec<f64>,
    y: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<ColumnMeta>, data: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n_rows = y.len();
        if data.len() != n_rows * columns.len() {
            return Err(Error::DimensionMismatch { expected: n_rows * columns.len(), got: data.len() });
        }
        Ok(Self { n_rows, columns, data, y })
    }

    /// Matrix of continuous columns named `x0, x1, …` built from row slices.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.len());
        if rows.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: y.len(), got: rows.len() });
        }
        let mut data = Vec::with_capacity(rows.len() * p);
        for r in rows {
            if r.len() != p {
                return Err(Error::DimensionMismatch { expected: p, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        let columns = (0..p)
            .map(|j| ColumnMeta { name: format!("x{j}"), source: format!("x{j}"), kind: ColumnKind::Continuous })
            .collect();
        Self::new(columns, data, y)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[r * p..(r + 1) * p]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n_cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let p = self.n_cols();
        self.data[r * p + c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, c)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            n_rows: rows.len(),
            columns: self.columns.clone(),
            data,
            y: rows.iter().map(|&r| self.y[r]).collect(),
        }
    }

    pub fn with_y(mut self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n_rows {
            return Err(Error::DimensionMismatch { expected: self.n_rows, got: y.len() });
        }
        self.y = y;
        Ok(self)
    }

    /// Header of `name|source|kind` triplets plus a trailing `y`, then one line per row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> =
            self.columns.iter().map(|c| format!("{}|{}|{}", c.name, c.source, c.kind)).collect();
        header.push("y".into());
        wr.write_record(&header)?;
        for r in 0..self.n_rows {
            let mut rec: Vec<String> = self.row(r).iter().map(|v| v.to_string()).collect();
            rec.push(self.y[r].to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let p = headers.len().checked_sub(1).ok_or_else(|| invalid("feature matrix header is empty"))?;
        let mut columns = Vec::with_capacity(p);
        for h in headers.iter().take(p) {
            let mut parts = h.rsplitn(3, '|');
            let (kind, source, name) = (parts.next(), parts.next(), parts.next());
            let kind = match kind {
                Some("continuous") => ColumnKind::Continuous,
                Some("indicator") => ColumnKind::Indicator,
                _ => return Err(Error::Parse { line: 1, msg: format!("bad column descriptor `{h}`") }),
            };
            let (Some(name), Some(source)) = (name, source) else {
                return Err(Error::Parse { line: 1, msg: format!("bad column descriptor `{h}`") });
            };
            columns.push(ColumnMeta { name: name.into(), source: source.into(), kind });
        }
        let mut data = Vec::new();
        let mut y = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != p + 1 {
                return Err(Error::Parse { line: i as u64 + 2, msg: format!("expected {} fields", p + 1) });
            }
            for (j, cell) in rec.iter().enumerate() {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::Parse { line: i as u64 + 2, msg: format!("bad number `{cell}`") })?;
                if j < p {
                    data.push(v);
                } else {
                    y.push(v);
                }
            }
        }
        Self::new(columns, data, y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum EncodedField {
    Continuous { name: String },
    /// Date field encoded as its month index.
    Months { name: String },
    Categorical { name: String, levels: Vec<String> },
}

/// Column layout learned from a set of rows: predictor field order, then
/// categorical levels in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    fields: Vec<EncodedField>,
}

impl OneHotEncoder {
    pub fn fit(table: &ClaimTable, rows: &[usize]) -> Self {
        let mut fields = Vec::new();
        for c in table.columns().iter().filter(|c| c.field.role == FieldRole::Predictor) {
            let name = c.field.name.clone();
            fields.push(match &c.values {
                ColumnValues::Continuous(_) => EncodedField::Continuous { name },
                ColumnValues::Date(_) => EncodedField::Months { name },
                ColumnValues::Categorical(v) => {
                    let levels: BTreeSet<&String> = rows.iter().filter(|&&r| !c.missing[r]).map(|&r| &v[r]).collect();
                    EncodedField::Categorical { name, levels: levels.into_iter().cloned().collect() }
                }
            });
        }
        Self { fields }
    }

    pub fn columns(&self) -> Vec<ColumnMeta> {
        let mut out = Vec::new();
        for f in &self.fields {
            match f {
                EncodedField::Continuous { name } => {
                    out.push(ColumnMeta { name: name.clone(), source: name.clone(), kind: ColumnKind::Continuous })
                }
                EncodedField::Months { name } => out.push(ColumnMeta {
                    name: format!("{name}.months"),
                    source: name.clone(),
                    kind: ColumnKind::Continuous,
                }),
                EncodedField::Categorical { name, levels } => {
                    out.extend(levels.iter().map(|l| ColumnMeta {
                        name: format!("{name}.{l}"),
                        source: name.clone(),
                        kind: ColumnKind::Indicator,
                    }));
                }
            }
        }
        out
    }

    /// Encode `rows` of `table`. Levels unseen at fit time yield all-zero indicators;
    /// missing continuous cells become NaN; missing categorical cells are an error.
    pub fn transform(&self, table: &ClaimTable, rows: &[usize]) -> Result<FeatureMatrix> {
        let columns = self.columns();
        let p = columns.len();
        let mut data = vec![0.0; rows.len() * p];
        let mut offset = 0;
        for f in &self.fields {
            let name = match f {
                EncodedField::Continuous { name } | EncodedField::Months { name } | EncodedField::Categorical { name, .. } => name,
            };
            let col = table.column(name).ok_or_else(|| Error::Schema(format!("column `{name}` missing from table")))?;
            match (f, &col.values) {
                (EncodedField::Continuous { .. }, ColumnValues::Continuous(v)) => {
                    for (i, &r) in rows.iter().enumerate() {
                        data[i * p + offset] = if col.missing[r] { f64::NAN } else { v[r] };
                    }
                    offset += 1;
                }
                (EncodedField::Months { .. }, ColumnValues::Date(v)) => {
                    for (i, &r) in rows.iter().enumerate() {
                        data[i * p + offset] = if col.missing[r] { f64::NAN } else { month_index(v[r]) as f64 };
                    }
                    offset += 1;
                }
                (EncodedField::Categorical { levels, .. }, ColumnValues::Categorical(v)) => {
                    for (i, &r) in rows.iter().enumerate() {
                        if col.missing[r] {
                            return Err(invalid(format!("categorical `{name}` has a missing cell at row {r}; impute first")));
                        }
                        if let Ok(k) = levels.binary_search(&v[r]) {
                            data[i * p + offset + k] = 1.0;
                        }
                    }
                    offset += levels.len();
                }
                _ => return Err(Error::Schema(format!("column `{name}` changed kind since fit"))),
            }
        }
        let y = match table.response() {
            Some(c) => rows.iter().map(|&r| c.value_f64(r).unwrap_or(f64::NAN)).collect(),
            None => vec![f64::NAN; rows.len()],
        };
        FeatureMatrix::new(columns, data, y)
    }

    /// Recover the level of categorical field `field` for every row (argmax of its indicators).
    pub fn decode(&self, m: &FeatureMatrix, field: &str) -> Option<Vec<Option<String>>> {
        let mut offset = 0;
        for f in &self.fields {
            match f {
                EncodedField::Categorical { name, levels } if name == field => {
                    return Some(
                        (0..m.n_rows())
                            .map(|r| (0..levels.len()).find(|&k| m.get(r, offset + k) == 1.0).map(|k| levels[k].clone()))
                            .collect(),
                    );
                }
                EncodedField::Categorical { levels, .. } => offset += levels.len(),
                _ => offset += 1,
            }
        }
        None
    }
}

/// Encode every row with levels learned from the whole table.
pub fn one_hot(table: &ClaimTable) -> Result<FeatureMatrix> {
    let rows: Vec<usize> = (0..table.n_rows()).collect();
    OneHotEncoder::fit(table, &rows).transform(table, &rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub index: usize,
    pub mean: f64,
    pub sd: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub n_cols: usize,
    pub columns: Vec<ColumnScale>,
}

/// Mean and unbiased standard deviation of every continuous column over `train_rows`.
pub fn standardize_fit(x: &FeatureMatrix, train_rows: &[usize]) -> Result<ScalerParams> {
    if train_rows.is_empty() {
        return Err(invalid("cannot fit a scaler on an empty training set"));
    }
    let n = train_rows.len() as f64;
    let columns = x
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, m)| m.kind == ColumnKind::Continuous)
        .map(|(j, _)| {
            let mean = train_rows.iter().map(|&r| x.get(r, j)).sum::<f64>() / n;
            let ss = train_rows.iter().map(|&r| (x.get(r, j) - mean).powi(2)).sum::<f64>();
            let sd = if train_rows.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
            let degenerate = !(sd >= DEGENERATE_SD);
            ColumnScale { index: j, mean, sd: if degenerate { 0.0 } else { sd }, degenerate }
        })
        .collect();
    Ok(ScalerParams { n_cols: x.n_cols(), columns })
}

/// `(v − mean)/sd` on continuous columns; degenerate columns become 0.
pub fn standardize_apply(x: &FeatureMatrix, s: &ScalerParams) -> Result<FeatureMatrix> {
    if s.n_cols != x.n_cols() {
        return Err(Error::DimensionMismatch { expected: s.n_cols, got: x.n_cols() });
    }
    let mut out = x.clone();
    for c in &s.columns {
        if x.columns()[c.index].kind != ColumnKind::Continuous {
            return Err(Error::Schema(format!("column {} is not continuous", c.index)));
        }
        for r in 0..x.n_rows() {
            let v = if c.degenerate { 0.0 } else { (x.get(r, c.index) - c.mean) / c.sd };
            out.set(r, c.index, v);
        }
    }
    Ok(out)
}

/// Uniformly random partition of `0..n` into train (`round(ratio·n)` rows) and test.
/// Both index sets are returned sorted.
pub fn split(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(invalid(format!("split ratio must lie in (0,1), got {ratio}")));
    }
    if n < 2 {
        return Err(invalid(format!("cannot split {n} rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let k = (ratio * n as f64).round() as usize;
    let mut train = idx[..k].to_vec();
    let mut test = idx[k..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::{parse_claims, SchemaRegistry};

    fn table(csv: &str) -> ClaimTable {
        parse_claims(csv.as_bytes(), &SchemaRegistry::nfip()).unwrap()
    }

    #[test]
    fn one_hot_indicators() {
        let t = table("amountPaidOnBuildingClaim,floodZone\n1,A\n2,B\n3,A\n");
        let m = one_hot(&t).unwrap();
        assert_eq!(m.columns().iter().map(|c| c.name.as_str()).collect::<Vec<_>>(), ["floodZone.A", "floodZone.B"]);
        assert_eq!(m.column(0), vec![1.0, 0.0, 1.0]);
        assert_eq!(m.column(1), vec![0.0, 1.0, 0.0]);
        assert_eq!(m.y(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn unseen_level_is_all_zero() {
        let t = table("amountPaidOnBuildingClaim,floodZone\n1,A\n2,B\n3,C\n");
        let enc = OneHotEncoder::fit(&t, &[0, 1]);
        let m = enc.transform(&t, &[2]).unwrap();
        assert_eq!(m.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn dates_become_month_indices() {
        let t = table("amountPaidOnBuildingClaim,dateOfLoss\n1,2020-01-05\n");
        let m = one_hot(&t).unwrap();
        assert_eq!(m.columns()[0].name, "dateOfLoss.months");
        assert_eq!(m.get(0, 0), 720.0);
    }

    #[test]
    fn unimputed_categorical_is_rejected() {
        let t = table("amountPaidOnBuildingClaim,floodZone\n1,\n");
        assert!(one_hot(&t).is_err());
    }

    #[test]
    fn scaler_basic() {
        let m = FeatureMatrix::from_rows(&[vec![1.0, 7.0], vec![2.0, 7.0], vec![3.0, 7.0]], vec![0.0; 3]).unwrap();
        let s = standardize_fit(&m, &[0, 1, 2]).unwrap();
        assert_eq!(s.columns[0].mean, 2.0);
        assert_eq!(s.columns[0].sd, 1.0);
        assert!(s.columns[1].degenerate && s.columns[1].sd == 0.0);
        let z = standardize_apply(&m, &s).unwrap();
        assert_eq!(z.column(0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(z.column(1), vec![0.0; 3]);
        assert!(standardize_fit(&m, &[]).is_err());
    }

    #[test]
    fn scaler_skips_indicators() {
        let t = table("amountPaidOnBuildingClaim,floodZone,baseFloodElevation\n1,A,3\n2,B,5\n");
        let m = one_hot(&t).unwrap();
        let s = standardize_fit(&m, &[0, 1]).unwrap();
        assert_eq!(s.columns.len(), 1);
        let z = standardize_apply(&m, &s).unwrap();
        assert_eq!(z.column(0), m.column(0));
        assert_eq!(z.column(1), m.column(1));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (tr, te) = split(10, 0.7, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (7, 3));
        assert_eq!(split(10, 0.7, 3).unwrap(), (tr, te));
        assert!(split(10, 1.0, 3).is_err());
        assert!(split(10, 0.0, 3).is_err());
        assert!(split(1, 0.5, 3).is_err());
    }

    #[test]
    fn matrix_csv_round_trip() {
        let t = table("amountPaidOnBuildingClaim,floodZone,baseFloodElevation\n1,A,0.1\n2.5,B|x,-3e-9\n");
        let m = one_hot(&t).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = FeatureMatrix::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }
}
