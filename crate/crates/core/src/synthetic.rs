//! Generated data with known structure: a claims table in the NFIP schema,
//! a bias-correction pair and a nonlinear regression problem.

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, Normal, StudentT};

use crate::claims::{
    ClaimTable, ColumnValues, SchemaRegistry, TableColumn, COUNTY_CODE, DATE_OF_LOSS, LATITUDE, LONGITUDE,
    RESPONSE_FIELD, YEAR_OF_LOSS,
};
use crate::dist::ParametricDist;
use crate::error::Result;
use crate::features::{ColumnKind, ColumnMeta, FeatureMatrix};
use crate::seed;

/// Loss multiplier law of the synthetic county.
pub fn county_loss_law() -> ParametricDist {
    ParametricDist::Burr { c: 1.5, k: 2.0, scale: 1.0 }
}

const ZONES: [(&str, f64, f64); 4] = [("AE", 0.45, 1.0), ("X", 0.3, 0.35), ("VE", 0.1, 1.8), ("A", 0.15, 0.8)];
const OCCUPANCY: [(&str, f64); 4] = [("1", 1.0), ("2", 1.15), ("3", 0.9), ("4", 1.4)];

fn pick<'a, R: Rng + ?Sized>(rng: &mut R, items: &[(&'a str, f64, f64)]) -> (&'a str, f64) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(name, p, effect) in items {
        acc += p;
        if u < acc {
            return (name, effect);
        }
    }
    let last = items[items.len() - 1];
    (last.0, last.2)
}

struct Builder {
    registry: SchemaRegistry,
    cont: Vec<(&'static str, Vec<f64>, Vec<bool>)>,
    cat: Vec<(&'static str, Vec<String>, Vec<bool>)>,
    dates: Vec<NaiveDate>,
}

/// Claims for one county over `years`, `rows_per_year` each. Losses scale
/// with building coverage, fall with floor height above base flood
/// elevation, depend on flood zone and occupancy, and carry a Burr-XII
/// multiplicative noise. Some predictor cells are missing completely at
/// random and about 2% of claims are paid zero.
pub fn synthetic_county(county: &str, first_year: i32, last_year: i32, rows_per_year: usize, seed: u64) -> Result<ClaimTable> {
    let mut rng = seed::rng(seed::derive(seed, &[seed::tag(county)]));
    let law = county_loss_law();
    let normal: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let centre = {
        let h = seed::tag(county);
        (29.0 + (h % 1000) as f64 / 500.0, -95.0 - ((h >> 10) % 1000) as f64 / 500.0)
    };
    let mut b = Builder {
        registry: SchemaRegistry::nfip(),
        cont: [
            RESPONSE_FIELD,
            "baseFloodElevation",
            "elevationDifference",
            "lowestFloorElevation",
            "totalBuildingInsuranceCoverage",
            LATITUDE,
            LONGITUDE,
        ]
        .into_iter()
        .map(|n| (n, Vec::new(), Vec::new()))
        .collect(),
        cat: ["floodZone", "occupancyType", YEAR_OF_LOSS, COUNTY_CODE].into_iter().map(|n| (n, Vec::new(), Vec::new())).collect(),
        dates: Vec::new(),
    };
    for year in first_year..=last_year {
        let drift = 1.0 + 0.02 * (year - first_year) as f64;
        let jan1 = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
        for _ in 0..rows_per_year {
            let bfe = 10.0 + 4.0 * normal.sample(&mut rng);
            let diff = 3.0 * normal.sample(&mut rng);
            let lowest = bfe + diff;
            let coverage = (50_000f64.ln() + rng.random::<f64>() * (10f64).ln()).exp();
            let (zone, zone_effect) = pick(&mut rng, &ZONES);
            let occ = OCCUPANCY[rng.random_range(0..OCCUPANCY.len())];
            let lat = centre.0 + rng.random_range(-0.2..0.2);
            let lon = centre.1 + rng.random_range(-0.2..0.2);
            let day = rng.random_range(0..365);
            let exposure = 1.0 / (1.0 + (diff / 2.0).exp());
            let mean = 0.25 * coverage * exposure * zone_effect * occ.1 * drift;
            let noise = law.quantile(rng.random::<f64>());
            let paid = if rng.random::<f64>() < 0.02 { 0.0 } else { (mean * noise).min(coverage) };

            let mut push = |name: &str, v: f64, can_miss: bool, rng: &mut rand_chacha::ChaCha8Rng| {
                let m = can_miss && rng.random::<f64>() < 0.05;
                let slot = b.cont.iter_mut().find(|c| c.0 == name).expect("declared column");
                slot.1.push(if m { f64::NAN } else { v });
                slot.2.push(m);
            };
            push(RESPONSE_FIELD, paid, false, &mut rng);
            push("baseFloodElevation", bfe, true, &mut rng);
            push("elevationDifference", diff, true, &mut rng);
            push("lowestFloorElevation", lowest, true, &mut rng);
            push("totalBuildingInsuranceCoverage", coverage, false, &mut rng);
            push(LATITUDE, lat, false, &mut rng);
            push(LONGITUDE, lon, false, &mut rng);
            let zone_missing = rng.random::<f64>() < 0.03;
            for (name, v, m) in [
                ("floodZone", zone.to_string(), zone_missing),
                ("occupancyType", occ.0.to_string(), false),
                (YEAR_OF_LOSS, year.to_string(), false),
                (COUNTY_CODE, county.to_string(), false),
            ] {
                let slot = b.cat.iter_mut().find(|c| c.0 == name).expect("declared column");
                slot.1.push(if m { String::new() } else { v });
                slot.2.push(m);
            }
            b.dates.push(jan1 + Duration::days(day));
        }
    }
    let n = b.dates.len();
    let mut columns = Vec::new();
    for (name, v, m) in b.cont {
        columns.push(TableColumn { field: b.registry.get(name).expect("registry field").clone(), values: ColumnValues::Continuous(v), missing: m });
    }
    for (name, v, m) in b.cat {
        columns.push(TableColumn { field: b.registry.get(name).expect("registry field").clone(), values: ColumnValues::Categorical(v), missing: m });
    }
    columns.push(TableColumn {
        field: b.registry.get(DATE_OF_LOSS).expect("registry field").clone(),
        values: ColumnValues::Date(b.dates),
        missing: vec![false; n],
    });
    ClaimTable::new(columns)
}

/// Several counties stacked into one table.
pub fn synthetic_table(counties: &[String], first_year: i32, last_year: i32, rows_per_year: usize, seed: u64) -> Result<ClaimTable> {
    let parts: Vec<ClaimTable> = counties
        .iter()
        .map(|c| synthetic_county(c, first_year, last_year, rows_per_year, seed))
        .collect::<Result<_>>()?;
    let mut columns: Vec<TableColumn> = parts[0].columns().to_vec();
    for p in &parts[1..] {
        for c in columns.iter_mut() {
            let other = p.column(c.name()).expect("same layout");
            c.missing.extend_from_slice(&other.missing);
            match (&mut c.values, &other.values) {
                (ColumnValues::Continuous(a), ColumnValues::Continuous(b)) => a.extend_from_slice(b),
                (ColumnValues::Categorical(a), ColumnValues::Categorical(b)) => a.extend_from_slice(b),
                (ColumnValues::Date(a), ColumnValues::Date(b)) => a.extend_from_slice(b),
                _ => unreachable!("same layout"),
            }
        }
    }
    ClaimTable::new(columns)
}

/// Reference law of the bias-correction fixture.
pub fn bias_reference() -> ParametricDist {
    ParametricDist::Burr { c: 1.2, k: 4.0, scale: 1e4 }
}

/// Law the predictions are pushed onto.
pub fn bias_distortion() -> ParametricDist {
    ParametricDist::Weibull { shape: 2.0, scale: 4_000.0 }
}

/// `(references, predictions)` where predictions are the references carried
/// through the reference CDF and the inverse Weibull CDF: a monotone
/// distortion with a Weibull marginal.
pub fn bias_fixture(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let r = bias_reference();
    let w = bias_distortion();
    let refs = r.sample(&mut seed::rng(seed), n);
    let preds = refs.iter().map(|&y| w.quantile_log_sf(r.log_sf(y))).collect();
    (refs, preds)
}

/// Regression problem with five continuous inputs, two categorical inputs
/// (one-hot) and Student-t noise with 3 degrees of freedom.
pub fn nonlinear_fixture(n: usize, seed: u64) -> Result<FeatureMatrix> {
    let mut rng = seed::rng(seed);
    let noise = StudentT::new(3.0).expect("valid dof");
    let levels_a = [("a0", 0.0), ("a1", 3.0), ("a2", -2.0), ("a3", 1.0)];
    let levels_b = [("b0", 0.0), ("b1", 4.0), ("b2", -4.0)];
    let mut columns: Vec<ColumnMeta> = (0..5)
        .map(|j| ColumnMeta { name: format!("x{j}"), source: format!("x{j}"), kind: ColumnKind::Continuous })
        .collect();
    for (src, levels) in [("cat_a", &levels_a[..]), ("cat_b", &levels_b[..])] {
        for (l, _) in levels {
            columns.push(ColumnMeta { name: format!("{src}.{l}"), source: src.into(), kind: ColumnKind::Indicator });
        }
    }
    let p = columns.len();
    let mut data = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        let a = rng.random_range(0..levels_a.len());
        let b = rng.random_range(0..levels_b.len());
        let signal = 10.0 * (std::f64::consts::PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
            + levels_a[a].1
            + levels_b[b].1;
        y.push(signal + noise.sample(&mut rng));
        data.extend_from_slice(&x);
        data.extend((0..levels_a.len()).map(|k| if k == a { 1.0 } else { 0.0 }));
        data.extend((0..levels_b.len()).map(|k| if k == b { 1.0 } else { 0.0 }));
    }
    FeatureMatrix::new(columns, data, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn county_shape() {
        let t = synthetic_county("48201", 2000, 2001, 50, 1).unwrap();
        assert_eq!(t.n_rows(), 100);
        assert_eq!(t.loss_year(0), Some(2000));
        assert_eq!(t.loss_year(99), Some(2001));
        let y = t.response().unwrap().continuous().unwrap();
        assert!(y.iter().all(|v| *v >= 0.0));
        assert_eq!(synthetic_county("48201", 2000, 2001, 50, 1).unwrap(), t);
    }

    #[test]
    fn stacked_counties() {
        let t = synthetic_table(&["1".into(), "2".into()], 2000, 2000, 10, 3).unwrap();
        assert_eq!(t.n_rows(), 20);
        assert_eq!(t.column(COUNTY_CODE).unwrap().categorical().unwrap()[15], "2");
    }

    #[test]
    fn bias_fixture_is_monotone_distortion() {
        let (r, p) = bias_fixture(500, 2);
        let mut idx: Vec<usize> = (0..r.len()).collect();
        idx.sort_by(|&a, &b| r[a].total_cmp(&r[b]));
        assert!(idx.windows(2).all(|w| p[w[0]] <= p[w[1]]));
    }

    #[test]
    fn nonlinear_fixture_layout() {
        let m = nonlinear_fixture(10, 1).unwrap();
        assert_eq!(m.n_cols(), 12);
        for r in 0..10 {
            assert_eq!(m.row(r)[5..9].iter().sum::<f64>(), 1.0);
            assert_eq!(m.row(r)[9..].iter().sum::<f64>(), 1.0);
        }
    }
}
