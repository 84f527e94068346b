use floodloss::claims::{parse_claims, SchemaRegistry};
use floodloss::features::{one_hot, standardize_apply, standardize_fit, ColumnKind, FeatureMatrix, OneHotEncoder};
use floodloss::gbt::{gbt_train, GbtModel, GbtParams, Node};
use floodloss::imputation::{EmOptions, TableImputer};
use floodloss::seed;
use proptest::prelude::*;
use rand::Rng;

/// Best single split by trying every boundary between adjacent distinct
/// values of every feature. Returns `(feature, threshold, gain, left rows)`.
fn exhaustive_stump(rows: &[Vec<f64>], r: &[f64], lambda: f64) -> Option<(usize, f64, f64, Vec<usize>)> {
    let score = |idx: &[usize]| {
        let s: f64 = idx.iter().map(|&i| r[i]).sum();
        s * s / (idx.len() as f64 + lambda)
    };
    let all: Vec<usize> = (0..r.len()).collect();
    let parent = score(&all);
    let mut best: Option<(usize, f64, f64, Vec<usize>)> = None;
    let mut tied = false;
    for f in 0..rows[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|x| x[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<usize> = all.iter().copied().filter(|&i| rows[i][f] < t).collect();
            let right: Vec<usize> = all.iter().copied().filter(|&i| rows[i][f] >= t).collect();
            let g = 0.5 * (score(&left) + score(&right) - parent);
            match &best {
                Some(b) if g < b.2 => {}
                Some(b) if g == b.2 => tied = true,
                _ => {
                    tied = false;
                    best = Some((f, t, g, left));
                }
            }
        }
    }
    if tied {
        return None;
    }
    best
}

fn exact(max_depth: usize, lambda: f64) -> GbtParams {
    GbtParams { learning_rate: 1.0, gamma: 0.0, lambda, max_depth, max_rounds: 1, subsample: 1.0, colsample: 1.0, patience: 50 }
}

/// Regularized objective recomputed from the fitted trees.
fn objective(m: &GbtModel, x: &FeatureMatrix) -> f64 {
    let p = m.params;
    let loss: f64 = (0..x.n_rows()).map(|r| (x.y()[r] - m.predict_row(x.row(r))).powi(2)).sum::<f64>() * 0.5;
    let penalty: f64 = m
        .trees
        .iter()
        .map(|t| {
            let leaves: Vec<f64> = t.nodes.iter().filter_map(|n| if let Node::Leaf { weight } = n { Some(*weight) } else { None }).collect();
            p.gamma * leaves.len() as f64 + 0.5 * p.lambda * leaves.iter().map(|w| (p.learning_rate * w).powi(2)).sum::<f64>()
        })
        .sum();
    loss + penalty
}

fn random_matrix(n: usize, p: usize, seed_v: u64) -> FeatureMatrix {
    let mut rng = seed::rng(seed_v);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let y = rows.iter().map(|r| (3.0 * r[0]).sin() + r[1 % p] * r[1 % p] + 0.3 * rng.random::<f64>()).collect();
    FeatureMatrix::from_rows(&rows, y).unwrap()
}

#[test]
fn zero_training_rmse_unconstrained() {
    let x = random_matrix(200, 3, 5);
    let p = GbtParams { learning_rate: 1.0, gamma: 0.0, lambda: 0.0, max_depth: 64, max_rounds: 5, subsample: 1.0, colsample: 1.0, patience: 50 };
    let m = gbt_train(&x, &p, None, 1).unwrap();
    let pred = m.predict(&x).unwrap();
    let worst = pred.iter().zip(x.y()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = x.y().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // Zero up to the rounding of `base + leaf`.
    assert!(worst <= 2.0 * f64::EPSILON * scale, "max residual {worst}");
}

#[test]
fn random_search_trials_are_logged() {
    let x = random_matrix(300, 4, 9);
    let ranges = floodloss::gbt::SearchRanges { rounds: 20, patience: 5, ..Default::default() };
    let r = floodloss::gbt::random_search(&x, &ranges, 6, 3).unwrap();
    assert_eq!(r.trials.len(), 6);
    let min = r.trials.iter().map(|t| t.val_rmse).fold(f64::INFINITY, f64::min);
    assert_eq!(r.best_score, min);
    let again = floodloss::gbt::random_search(&x, &ranges, 6, 3).unwrap();
    assert_eq!(again.model, r.model);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Integer targets with an integer mean and quarter-grid inputs keep every
    /// sum and midpoint exact, so the comparison can be bitwise.
    #[test]
    fn stump_matches_exhaustive_oracle(
        raw in proptest::collection::vec((0i32..12, 0i32..12, -20i32..20), 4..40),
        lambda in prop_oneof![Just(0.0), Just(1.0), Just(2.5)],
    ) {
        let n = raw.len() as i64;
        let mut y: Vec<i64> = raw.iter().map(|t| t.2 as i64).collect();
        let rem = y.iter().sum::<i64>().rem_euclid(n);
        y[0] -= rem;
        let rows: Vec<Vec<f64>> = raw.iter().map(|t| vec![t.0 as f64 / 4.0, t.1 as f64 / 4.0]).collect();
        let yf: Vec<f64> = y.iter().map(|v| *v as f64).collect();
        let x = FeatureMatrix::from_rows(&rows, yf.clone()).unwrap();
        let base = y.iter().sum::<i64>() as f64 / n as f64;
        let resid: Vec<f64> = yf.iter().map(|v| v - base).collect();
        let oracle = exhaustive_stump(&rows, &resid, lambda);
        prop_assume!(oracle.as_ref().is_some_and(|o| o.2 > 0.0));
        let (f, t, g, left) = oracle.unwrap();

        let m = gbt_train(&x, &exact(1, lambda), None, 0).unwrap();
        prop_assert_eq!(m.base, base);
        prop_assert_eq!(m.trees.len(), 1);
        let sl: f64 = left.iter().map(|&i| resid[i]).sum();
        let sr: f64 = resid.iter().sum::<f64>() - sl;
        let nl = left.len() as f64;
        let expected = vec![
            Node::Split { feature: f, threshold: t, left: 1, right: 2, gain: g },
            Node::Leaf { weight: sl / (nl + lambda) },
            Node::Leaf { weight: sr / (n as f64 - nl + lambda) },
        ];
        prop_assert_eq!(&m.trees[0].nodes, &expected);
    }

    #[test]
    fn boosting_objective_strictly_decreases(seed_v in 0u64..10_000, depth in 1usize..6, gamma in 0.0f64..2.0, lambda in 0.0f64..3.0, sub in 0.3f64..1.0) {
        let x = random_matrix(120, 3, seed_v);
        let p = GbtParams { learning_rate: 0.3, gamma, lambda, max_depth: depth, max_rounds: 25, subsample: sub, colsample: 1.0, patience: 50 };
        let m = gbt_train(&x, &p, None, seed_v).unwrap();
        prop_assert_eq!(m.objective.len(), m.trees.len() + 1);
        for w in m.objective.windows(2) {
            prop_assert!(w[1] < w[0]);
        }
        let recomputed = objective(&m, &x);
        let last = m.objective[m.objective.len() - 1];
        prop_assert!((recomputed - last).abs() <= 1e-9 * last.abs().max(1.0), "{} vs {}", recomputed, last);
        for t in &m.trees {
            prop_assert!(t.depth() <= depth);
            prop_assert!(t.n_leaves() >= 1);
        }
    }

    /// Every row takes part in threshold selection (no row subsampling), so no
    /// training value lies strictly between two adjacent candidates.
    #[test]
    fn invariant_under_monotone_feature_transform(seed_v in 0u64..10_000, depth in 1usize..5, col in 0.4f64..1.0) {
        let x = random_matrix(100, 3, seed_v);
        let p = GbtParams { learning_rate: 0.5, gamma: 0.0, lambda: 1.0, max_depth: depth, max_rounds: 10, subsample: 1.0, colsample: col, patience: 50 };
        let mut z = x.clone();
        for r in 0..z.n_rows() {
            let v = z.get(r, 1);
            z.set(r, 1, (2.0 * v).exp() + 7.0);
        }
        let a = gbt_train(&x, &p, None, seed_v).unwrap();
        let b = gbt_train(&z, &p, None, seed_v).unwrap();
        prop_assert_eq!(a.predict(&x).unwrap(), b.predict(&z).unwrap());
        prop_assert_eq!(a.trees.len(), b.trees.len());
    }

    #[test]
    fn invariant_under_row_order(seed_v in 0u64..10_000, depth in 1usize..5) {
        let x = random_matrix(80, 3, seed_v);
        let p = GbtParams { learning_rate: 0.5, gamma: 0.0, lambda: 1.0, max_depth: depth, max_rounds: 8, subsample: 1.0, colsample: 1.0, patience: 50 };
        let perm: Vec<usize> = (0..80).rev().collect();
        let xp = x.select_rows(&perm);
        let a = gbt_train(&x, &p, None, 1).unwrap().predict(&x).unwrap();
        let b = gbt_train(&xp, &p, None, 2).unwrap().predict(&x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-9 * (1.0 + u.abs()));
        }
    }
}

const TABLE: &str = "amountPaidOnBuildingClaim,floodZone,occupancyType,baseFloodElevation,yearOfLoss\n\
10,AE,1,3.5,2001\n20,X,2,,2001\n30,VE,1,4.0,2002\n40,AE,,1.0,2003\n50,,4,2.0,2003\n";

#[test]
fn one_hot_columns_reconstruct_levels() {
    let t = parse_claims(TABLE.as_bytes(), &SchemaRegistry::nfip()).unwrap();
    let all: Vec<usize> = (0..t.n_rows()).collect();
    let imp = TableImputer::fit(&t, &all, &EmOptions::default()).unwrap().apply(&t).unwrap();
    let m = one_hot(&imp).unwrap();
    let enc = OneHotEncoder::fit(&imp, &all);
    for field in ["floodZone", "occupancyType", "yearOfLoss"] {
        let decoded = enc.decode(&m, field).unwrap();
        let truth = imp.column(field).unwrap().categorical().unwrap();
        for r in 0..t.n_rows() {
            assert_eq!(decoded[r].as_deref(), Some(truth[r].as_str()), "{field} row {r}");
        }
        let cols: Vec<usize> = (0..m.n_cols()).filter(|&c| m.columns()[c].source == field).collect();
        for r in 0..t.n_rows() {
            assert_eq!(cols.iter().map(|&c| m.get(r, c)).sum::<f64>(), 1.0);
        }
    }
    assert!(m.columns().iter().filter(|c| c.kind == ColumnKind::Indicator).all(|c| c.name.contains('.')));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardized_train_columns_have_unit_moments(seed_v in 0u64..10_000, n in 5usize..60) {
        let x = random_matrix(n, 3, seed_v);
        let train: Vec<usize> = (0..n).filter(|r| r % 3 != 0).collect();
        let s = standardize_fit(&x, &train).unwrap();
        let z = standardize_apply(&x, &s).unwrap();
        for c in 0..3 {
            let v: Vec<f64> = train.iter().map(|&r| z.get(r, c)).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((var - 1.0).abs() < 1e-10);
        }
        // Perturbing non-training rows leaves the scaler untouched.
        let mut x2 = x.clone();
        for r in (0..n).filter(|r| r % 3 == 0) {
            x2.set(r, 0, 1e9);
        }
        prop_assert_eq!(standardize_fit(&x2, &train).unwrap(), s);
    }
}
