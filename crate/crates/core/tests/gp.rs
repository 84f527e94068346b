use floodloss::features::FeatureMatrix;
use floodloss::gp::{gp_fit, gp_fit_fixed, kernel_matrix, Basis, GpConfig, GpHyper, Kernel};
use floodloss::seed;
use proptest::prelude::*;
use rand::Rng;

/// Solve `a·x = b` by Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

fn se(a: &[f64], b: &[f64], l: f64) -> f64 {
    (-a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / (2.0 * l * l)).exp()
}

fn basis(b: Basis, x: &[f64]) -> Vec<f64> {
    let mut h = vec![1.0];
    if b != Basis::Constant {
        h.extend_from_slice(x);
    }
    if b == Basis::Quadratic {
        h.extend(x.iter().map(|v| v * v));
    }
    h
}

fn sample(n: usize, p: usize, seed_v: u64) -> FeatureMatrix {
    let mut rng = seed::rng(seed_v);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    let y = rows.iter().map(|r| 2.0 + r[0] - 0.5 * r[p - 1] * r[p - 1] + (2.0 * r[0]).sin() + 0.1 * rng.random::<f64>()).collect();
    FeatureMatrix::from_rows(&rows, y).unwrap()
}

/// Posterior mean and variance from scratch: least-squares basis weights by
/// the normal equations, then dense solves against `K + (σ²/σ_p²)I`.
fn dense_posterior(x: &FeatureMatrix, h: GpHyper, queries: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = x.n_rows();
    let rows: Vec<Vec<f64>> = (0..n).map(|r| x.row(r).to_vec()).collect();
    let hs: Vec<Vec<f64>> = rows.iter().map(|r| basis(h.basis, r)).collect();
    let q = hs[0].len();
    let hth: Vec<Vec<f64>> = (0..q).map(|a| (0..q).map(|b| hs.iter().map(|r| r[a] * r[b]).sum()).collect()).collect();
    let hty: Vec<f64> = (0..q).map(|a| hs.iter().zip(x.y()).map(|(r, y)| r[a] * y).sum()).collect();
    let beta = gauss_solve(hth, hty);
    let resid: Vec<f64> = (0..n).map(|i| x.y()[i] - hs[i].iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()).collect();
    let prior = resid.iter().map(|r| r * r).sum::<f64>() / n as f64;
    let ratio = h.noise_sd * h.noise_sd / prior;
    let a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| se(&rows[i], &rows[j], h.length_scale) + if i == j { ratio } else { 0.0 }).collect()).collect();
    let alpha = gauss_solve(a.clone(), resid);
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for qx in queries {
        let ks: Vec<f64> = rows.iter().map(|r| se(qx, r, h.length_scale)).collect();
        let hb: f64 = basis(h.basis, qx).iter().zip(&beta).map(|(a, b)| a * b).sum();
        means.push(hb + ks.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>());
        let v = gauss_solve(a.clone(), ks.clone());
        let quad: f64 = ks.iter().zip(&v).map(|(a, b)| a * b).sum();
        vars.push(prior * (1.0 - quad).max(0.0) + h.noise_sd * h.noise_sd);
    }
    (means, vars, beta)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn cached_factorization_matches_dense_solve() {
    for (n, p, b) in [(40, 2, Basis::Linear), (120, 3, Basis::Quadratic), (200, 2, Basis::Constant)] {
        let x = sample(n, p, n as u64);
        let hyper = GpHyper { kernel: Kernel::SquaredExponential, basis: b, standardize: false, length_scale: 0.7, noise_sd: 0.2 };
        let m = gp_fit_fixed(&x, hyper).unwrap();
        assert_eq!(m.jitter, 0.0);
        let queries: Vec<Vec<f64>> = sample(15, p, 999).iter_rows();
        let (mo, vo, beta) = dense_posterior(&x, hyper, &queries);
        let (mm, vm) = m.predict_rows(&queries);
        for i in 0..queries.len() {
            assert!(rel(mm[i], mo[i]) < 1e-8, "mean {i}: {} vs {}", mm[i], mo[i]);
            assert!(rel(vm[i], vo[i]) < 1e-8, "var {i}: {} vs {}", vm[i], vo[i]);
        }
        for (a, b) in m.beta.iter().zip(&beta) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()));
        }
    }
}

trait Rows {
    fn iter_rows(&self) -> Vec<Vec<f64>>;
}

impl Rows for FeatureMatrix {
    fn iter_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows()).map(|r| self.row(r).to_vec()).collect()
    }
}

#[test]
fn interpolates_at_noise_floor() {
    let x = sample(60, 2, 4);
    let y = x.y();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64).sqrt();
    let hyper = GpHyper { kernel: Kernel::SquaredExponential, basis: Basis::Linear, standardize: true, length_scale: 0.8, noise_sd: 1e-6 * sd };
    let m = gp_fit_fixed(&x, hyper).unwrap();
    let (pred, var) = m.predict(&x).unwrap();
    for i in 0..x.n_rows() {
        assert!((pred[i] - y[i]).abs() < 1e-3 * sd, "row {i}: {} vs {} (jitter {})", pred[i], y[i], m.jitter);
        assert!(var[i] >= m.noise_var);
    }
}

#[test]
fn searched_fit_is_deterministic_and_useful() {
    let x = sample(150, 2, 8);
    let cfg = GpConfig { samples_per_combo: 3, ..Default::default() };
    let a = gp_fit(&x, &cfg, 5).unwrap();
    let b = gp_fit(&x, &cfg, 5).unwrap();
    assert_eq!(a.report(), b.report());
    let y = x.y();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64).sqrt();
    assert!(a.cv_rmse.unwrap() < sd);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_matrices_are_psd(seed_v in 0u64..10_000, n in 2usize..40, l in 0.05f64..5.0, exp in any::<bool>()) {
        let rows = sample(n, 3, seed_v).iter_rows();
        let kernel = if exp { Kernel::Exponential } else { Kernel::SquaredExponential };
        let k = kernel_matrix(kernel, l, &rows);
        prop_assert_eq!(k.clone(), k.transpose());
        let eig = k.symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|e| *e > -1e-10 * n as f64), "{:?}", eig);
    }
}
