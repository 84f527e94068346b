use chrono::{Months, NaiveDate};
use floodloss::claims::{
    adjust_inflation, fix_construction_dates, month_index, parse_claims, write_claims, ColumnValues, CpiTable, FlagCode,
    SchemaRegistry, CONSTRUCTION_DATE, DATE_OF_LOSS, RESPONSE_FIELD,
};
use floodloss::imputation::{em_fit, em_impute, EmOptions, MaskedMatrix};
use floodloss::seed;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::BTreeMap;

fn date_strategy() -> impl Strategy<Value = NaiveDate> {
    (1900i32..2100, 1u32..=12, 1u32..=28).prop_map(|(y, m, d)| NaiveDate::from_ymd_opt(y, m, d).unwrap())
}

type Row = (Option<f64>, Option<f64>, Option<usize>, Option<NaiveDate>);

fn row_strategy() -> impl Strategy<Value = Row> {
    (
        proptest::option::of(0.0f64..1e7),
        proptest::option::of(-1e3f64..1e3),
        proptest::option::of(0usize..3),
        proptest::option::of(date_strategy()),
    )
}

fn csv_of(rows: &[Row]) -> String {
    let zones = ["AE", "X", "VE"];
    let mut s = format!("{RESPONSE_FIELD},baseFloodElevation,floodZone,{DATE_OF_LOSS}\n");
    for (a, b, z, d) in rows {
        let f = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        s += &format!(
            "{},{},{},{}\n",
            f(a),
            f(b),
            z.map(|i| zones[i]).unwrap_or(""),
            d.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default()
        );
    }
    s
}

/// Months counted by stepping a calendar forward one month at a time.
fn months_by_stepping(d: NaiveDate) -> i64 {
    let key = |x: NaiveDate| (x.format("%Y").to_string().parse::<i64>().unwrap(), x.format("%m").to_string().parse::<i64>().unwrap());
    let target = key(d);
    let mut cur = NaiveDate::from_ymd_opt(1960, 1, 1).unwrap();
    let mut n = 0i64;
    if d >= cur {
        while key(cur) != target {
            cur = cur + Months::new(1);
            n += 1;
        }
    } else {
        while key(cur) != target {
            cur = cur - Months::new(1);
            n -= 1;
        }
    }
    n
}

#[test]
fn month_index_agrees_with_calendar_stepping() {
    for (y, m, d) in [(1960, 1, 15), (1960, 2, 1), (2020, 1, 1), (1959, 12, 31), (1999, 7, 4), (1901, 3, 3)] {
        let date = NaiveDate::from_ymd_opt(y, m, d).unwrap();
        assert_eq!(month_index(date), months_by_stepping(date), "{date}");
    }
    assert_eq!(month_index(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()), 720);
}

#[test]
fn inflation_identity_when_cpi_flat() {
    let t = parse_claims(csv_of(&[(Some(10.0), None, None, None)]).as_bytes(), &SchemaRegistry::nfip()).unwrap();
    let src = format!("{RESPONSE_FIELD},yearOfLoss,totalBuildingInsuranceCoverage\n100,2001,5000\n0,2005,\n7.25,2020,1\n");
    let t2 = parse_claims(src.as_bytes(), &SchemaRegistry::nfip()).unwrap();
    let flat = CpiTable::new((1990..=2020).map(|y| (y, 250.0)).collect::<BTreeMap<_, _>>(), 2020).unwrap();
    let once = adjust_inflation(&t2, &flat);
    assert_eq!(once.columns(), t2.columns());
    assert_eq!(adjust_inflation(&once, &flat).columns(), t2.columns());
    assert_eq!(t.n_rows(), 1);
}

#[test]
fn em_recovers_gaussian_truth() {
    let n = 10_000;
    let mu = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let l = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.6, 0.8, 0.0, -0.3, 0.4, 1.2]);
    let sigma = &l * l.transpose();
    let mut rng = seed::rng(2024);
    let rows: Vec<Vec<Option<f64>>> = (0..n)
        .map(|_| {
            let z = DVector::from_iterator(3, (0..3).map(|_| StandardNormal.sample(&mut rng)));
            let x = &mu + &l * z;
            (0..3).map(|c| if rng.random::<f64>() < 0.2 { None } else { Some(x[c]) }).collect()
        })
        .collect();
    let p = em_fit(&MaskedMatrix::from_rows(&rows).unwrap(), &EmOptions { max_iter: 500, tol: 1e-9, ..Default::default() }).unwrap();
    assert!(p.converged);
    // Complete-case counts give a conservative Monte Carlo standard error.
    let n_obs = 0.8 * n as f64;
    for a in 0..3 {
        let se = (sigma[(a, a)] / n_obs).sqrt();
        assert!((p.mean[a] - mu[a]).abs() < 3.0 * se, "mean {a}: {} vs {}", p.mean[a], mu[a]);
        for b in 0..3 {
            let n_pair = 0.64 * n as f64;
            let se = ((sigma[(a, a)] * sigma[(b, b)] + sigma[(a, b)].powi(2)) / n_pair).sqrt();
            assert!((p.cov[(a, b)] - sigma[(a, b)]).abs() < 3.0 * se, "cov {a}{b}: {} vs {}", p.cov[(a, b)], sigma[(a, b)]);
        }
    }
    let eig = p.cov.clone().symmetric_eigenvalues();
    assert!(eig.iter().all(|e| *e > -1e-8));
}

/// Observed-data Gaussian log-likelihood with the ridge prior term, computed
/// through explicit inverses and determinants.
fn objective_oracle(rows: &[Vec<Option<f64>>], mean: &DVector<f64>, cov: &DMatrix<f64>, ridge: f64) -> f64 {
    let mut ll = 0.0;
    for r in rows {
        let obs: Vec<usize> = (0..r.len()).filter(|&c| r[c].is_some()).collect();
        if obs.is_empty() {
            continue;
        }
        let s = DMatrix::from_fn(obs.len(), obs.len(), |i, j| cov[(obs[i], obs[j])]);
        let d = DVector::from_iterator(obs.len(), obs.iter().map(|&c| r[c].unwrap() - mean[c]));
        let q = (d.transpose() * s.clone().try_inverse().unwrap() * &d)[0];
        ll += -0.5 * (obs.len() as f64 * (2.0 * std::f64::consts::PI).ln() + s.determinant().ln() + q);
    }
    ll - 0.5 * rows.len() as f64 * ridge * cov.clone().try_inverse().unwrap().trace()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn em_objective_never_decreases(seed_v in 0u64..1_000_000, m in 1usize..5, n in 8usize..60, miss in 0.0f64..0.4) {
        let mut rng = seed::rng(seed_v);
        let mix: Vec<f64> = (0..m * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rows: Vec<Vec<Option<f64>>> = (0..n)
            .map(|i| {
                let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
                (0..m)
                    .map(|c| {
                        let v: f64 = (0..m).map(|k| mix[c * m + k] * z[k]).sum::<f64>() + c as f64;
                        // Keep the first two rows complete so every column has observations.
                        if i >= 2 && rng.random::<f64>() < miss { None } else { Some(v) }
                    })
                    .collect()
            })
            .collect();
        let p = em_fit(&MaskedMatrix::from_rows(&rows).unwrap(), &EmOptions::default()).unwrap();
        let tr = &p.log_likelihood;
        prop_assert_eq!(tr.len(), p.iterations + 1);
        for w in tr.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
        let oracle = objective_oracle(&rows, &p.mean, &p.cov, p.ridge);
        prop_assert!((oracle - tr[tr.len() - 1]).abs() <= 1e-7 * oracle.abs().max(1.0));

        // Imputation leaves observed cells alone and is idempotent.
        let x = MaskedMatrix::from_rows(&rows).unwrap();
        let filled = em_impute(&x, &p).unwrap();
        for (r, row) in rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    prop_assert_eq!(filled[(r, c)], *v);
                }
            }
        }
        let complete = MaskedMatrix::from_nan(n, m, (0..n).flat_map(|r| (0..m).map(move |c| (r, c))).map(|(r, c)| filled[(r, c)]).collect()).unwrap();
        prop_assert_eq!(em_impute(&complete, &p).unwrap(), filled);
    }

    #[test]
    fn csv_round_trip(rows in proptest::collection::vec(row_strategy(), 0..30)) {
        let reg = SchemaRegistry::nfip();
        let t = parse_claims(csv_of(&rows).as_bytes(), &reg).unwrap();
        prop_assert_eq!(t.n_rows(), rows.len());
        let amount = t.column(RESPONSE_FIELD).unwrap();
        for (r, row) in rows.iter().enumerate() {
            prop_assert_eq!(amount.value_f64(r), row.0);
            prop_assert_eq!(amount.missing[r], row.0.is_none());
        }
        let mut buf = Vec::new();
        write_claims(&t, &mut buf).unwrap();
        let back = parse_claims(buf.as_slice(), &reg).unwrap();
        prop_assert_eq!(back.columns(), t.columns());
    }

    #[test]
    fn month_index_monotone_and_additive(a in date_strategy(), b in date_strategy()) {
        if a < b {
            prop_assert!(month_index(a) <= month_index(b));
        }
        prop_assert_eq!(month_index(a + Months::new(12)), month_index(a) + 12);
        let next_month = NaiveDate::from_ymd_opt(a.format("%Y").to_string().parse().unwrap(), a.format("%m").to_string().parse().unwrap(), 1).unwrap() + Months::new(1);
        prop_assert!(month_index(next_month) > month_index(a));
    }

    #[test]
    fn repaired_construction_never_after_loss(pairs in proptest::collection::vec((date_strategy(), 1800i32..2400, 1u32..=12), 1..20)) {
        let mut s = format!("{RESPONSE_FIELD},{DATE_OF_LOSS},{CONSTRUCTION_DATE}\n");
        for (loss, y, m) in &pairs {
            s += &format!("1,{},{y:04}-{m:02}-15\n", loss.format("%Y-%m-%d"));
        }
        let t = fix_construction_dates(&parse_claims(s.as_bytes(), &SchemaRegistry::nfip()).unwrap());
        let loss = t.column(DATE_OF_LOSS).unwrap();
        let cons = t.column(CONSTRUCTION_DATE).unwrap();
        let (ColumnValues::Date(l), ColumnValues::Date(c)) = (&loss.values, &cons.values) else { panic!() };
        for r in 0..t.n_rows() {
            let capped = t.flags.iter().any(|f| f.row == r && f.code == FlagCode::RepairCapReached);
            if !loss.missing[r] && !cons.missing[r] && !capped {
                prop_assert!(c[r] <= l[r]);
            }
        }
    }
}
