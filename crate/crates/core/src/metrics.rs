//! Pointwise and distributional skill measures.

use serde::{Deserialize, Serialize};

use crate::dist::ParametricDist;
use crate::error::{invalid, Error, Result};
use crate::features::{split, ColumnKind, ColumnMeta, FeatureMatrix};
use crate::gbt::{gbt_train, GbtParams};
use crate::quadrature::{integrate_positive, DEFAULT_REL_TOL};
use crate::seed;

/// Series terms smaller than this end the Kolmogorov sum.
const SERIES_EPS: f64 = 1e-10;
/// Probability mass cut from each end of the integration domain.
const LOWER_TAIL: f64 = 1e-10;
const UPPER_TAIL: f64 = 1e-6;
const DOMAIN_FLOOR: f64 = 1e-12;
/// Negative KL estimates down to this are quadrature noise and clamp to zero.
const KL_NOISE: f64 = 1e-6;
const MIN_VARIATION: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricBundle {
    pub rmse: Option<f64>,
    pub rmse_over_sigma: Option<f64>,
    pub ks_stat: Option<f64>,
    pub ks_p: Option<f64>,
    pub kl: Option<f64>,
    pub dist_r2: Option<f64>,
    pub auc: Option<f64>,
    pub n_test: usize,
}

pub fn rmse(y_pred: &[f64], y_ref: &[f64]) -> Result<f64> {
    if y_pred.len() != y_ref.len() {
        return Err(Error::DimensionMismatch { expected: y_ref.len(), got: y_pred.len() });
    }
    if y_ref.is_empty() {
        return Err(invalid("RMSE of empty vectors"));
    }
    Ok((y_pred.iter().zip(y_ref).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y_ref.len() as f64).sqrt())
}

/// Sample standard deviation with the n−1 denominator.
pub fn sample_sd(y: &[f64]) -> Option<f64> {
    if y.len() < 2 {
        return None;
    }
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    Some((y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// RMSE divided by the standard deviation of `y_ref`; `None` when that is zero.
pub fn rmse_sigma(y_pred: &[f64], y_ref: &[f64]) -> Result<Option<f64>> {
    let e = rmse(y_pred, y_ref)?;
    if y_ref.len() < 2 {
        return Err(invalid("RMSE/σ needs at least two reference values"));
    }
    let sd = sample_sd(y_ref).unwrap_or(0.0);
    if sd > 0.0 {
        Ok(Some(e / sd))
    } else {
        log::warn!("reference values are constant; RMSE/σ undefined");
        Ok(None)
    }
}

/// Survival function of the Kolmogorov distribution, `P(K > t)`.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.18 {
        // Complementary theta-function form; converges fast for small t.
        let c = -std::f64::consts::PI.powi(2) / (8.0 * t * t);
        let mut s = 0.0;
        for j in 1.. {
            let term = ((2 * j - 1) as f64).powi(2) * c;
            let v = term.exp();
            s += v;
            if v < SERIES_EPS * s.max(f64::MIN_POSITIVE) || j > 100 {
                break;
            }
        }
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / t * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let v = (-2.0 * (j * j) as f64 * t * t).exp();
        s += if j % 2 == 1 { v } else { -v };
        if v < SERIES_EPS {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Largest gap between the empirical CDF of `samples` and `dist`, with its
/// asymptotic p-value.
pub fn ks_one_sample(samples: &[f64], dist: &ParametricDist) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(invalid("K-S test needs at least one sample"));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &y) in s.iter().enumerate() {
        let f = dist.cdf(y);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok((d, kolmogorov_sf(n.sqrt() * d)))
}

/// Two-sample K-S statistic and asymptotic p-value with effective size `nm/(n+m)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("two-sample K-S test needs non-empty samples"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    Ok((d, kolmogorov_sf(ne.sqrt() * d)))
}

/// Shared integration domain for a pair of distributions.
pub fn domain(p: &ParametricDist, q: &ParametricDist) -> (f64, f64) {
    let lo = p.quantile(LOWER_TAIL).min(q.quantile(LOWER_TAIL)).max(DOMAIN_FLOOR);
    let hi = p.quantile(1.0 - UPPER_TAIL).max(q.quantile(1.0 - UPPER_TAIL));
    (lo, hi.max(lo))
}

/// Kullback–Leibler divergence `∫ p ln(p/q)` of the fitted densities.
pub fn kl_divergence(p: &ParametricDist, q: &ParametricDist) -> Result<f64> {
    let (lo, hi) = domain(p, q);
    let quad = integrate_positive(
        |y| {
            let lp = p.ln_pdf(y);
            if lp == f64::NEG_INFINITY {
                return 0.0;
            }
            let lq = q.ln_pdf(y);
            lp.exp() * (lp - lq)
        },
        lo,
        hi,
        DEFAULT_REL_TOL,
    )
    .map_err(|e| Error::Numerical(format!("KL({p} ‖ {q}) on [{lo:.4e}, {hi:.4e}]: {e}")))?;
    if quad.value < -KL_NOISE {
        return Err(Error::Numerical(format!(
            "KL({p} ‖ {q}) came out at {:.3e}, below the quadrature noise floor",
            quad.value
        )));
    }
    Ok(quad.value.max(0.0))
}

/// `1 − ∫(p−q)² / ∫(p−μ)²` over `[lo, hi]`, with `μ` the mean value of `p` on
/// that interval. `None` when `p` has no variation there.
pub fn r2_functions<P: Fn(f64) -> f64, Q: Fn(f64) -> f64>(p: P, q: Q, lo: f64, hi: f64) -> Result<Option<f64>> {
    let mass = integrate_positive(&p, lo, hi, DEFAULT_REL_TOL)?.value;
    let mu = mass / (hi - lo);
    let s_r = integrate_positive(|y| (p(y) - q(y)).powi(2), lo, hi, DEFAULT_REL_TOL)?.value;
    let s_v = integrate_positive(|y| (p(y) - mu).powi(2), lo, hi, DEFAULT_REL_TOL)?.value;
    if s_v < MIN_VARIATION {
        log::warn!("reference density has no variation on [{lo}, {hi}]; distributional R² undefined");
        return Ok(None);
    }
    Ok(Some(1.0 - s_r / s_v))
}

pub fn dist_r2(p: &ParametricDist, q: &ParametricDist) -> Result<Option<f64>> {
    let (lo, hi) = domain(p, q);
    r2_functions(|y| p.pdf(y), |y| q.pdf(y), lo, hi)
}

/// Area under the ROC curve of `scores` for binary `labels` (true = positive),
/// by the rank-sum statistic with average ranks for ties.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: scores.len() });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(invalid("AUC needs both classes"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Parameters of the boosted classifier used by [`discriminator_auc`].
pub fn discriminator_params() -> GbtParams {
    GbtParams { learning_rate: 0.1, max_depth: 3, max_rounds: 100, ..Default::default() }
}

/// How well a boosted-tree regressor on the value alone separates predicted
/// samples (label 1) from reference samples (label 0): held-out AUC after a
/// stratified 70/30 split. Values near 0.5 mean the two are indistinguishable.
///
/// Both classes are split with the same seed. For paired inputs of equal
/// length (a prediction and its own reference) a value and its counterpart
/// then land on the same side; split apart, the classifier would score each
/// held-out value by its twin's training label and report AUC below 0.5.
pub fn discriminator_auc(ref_samples: &[f64], pred_samples: &[f64], seed: u64) -> Result<f64> {
    if ref_samples.len() < 2 || pred_samples.len() < 2 {
        return Err(invalid("discriminator needs at least two samples per class"));
    }
    let (r_tr, r_te) = split(ref_samples.len(), 0.7, seed::derive(seed, &[0]))?;
    let (p_tr, p_te) = split(pred_samples.len(), 0.7, seed::derive(seed, &[0]))?;
    let build = |r: &[usize], p: &[usize]| {
        let mut data = Vec::with_capacity(r.len() + p.len());
        let mut y = Vec::with_capacity(r.len() + p.len());
        data.extend(r.iter().map(|&i| ref_samples[i]));
        y.extend(std::iter::repeat_n(0.0, r.len()));
        data.extend(p.iter().map(|&i| pred_samples[i]));
        y.extend(std::iter::repeat_n(1.0, p.len()));
        let meta = vec![ColumnMeta { name: "value".into(), source: "value".into(), kind: ColumnKind::Continuous }];
        FeatureMatrix::new(meta, data, y)
    };
    let train = build(&r_tr, &p_tr)?;
    let test = build(&r_te, &p_te)?;
    let model = gbt_train(&train, &discriminator_params(), None, seed::derive(seed, &[2]))?;
    let scores = model.predict(&test)?;
    let labels: Vec<bool> = test.y().iter().map(|&v| v == 1.0).collect();
    auc(&scores, &labels)
}
