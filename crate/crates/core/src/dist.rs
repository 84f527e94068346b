//! Burr-XII and Weibull loss distributions, maximum-likelihood fitting with a
//! Weibull fallback, and the CDF-matching quantile map.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::optim::{golden_section, nelder_mead, SimplexOptions};

pub const DEFAULT_MIN_N: usize = 30;
pub const PARAM_LOWER: f64 = 1e-6;
pub const PARAM_UPPER: f64 = 1e6;
/// Zeros are replaced by this fraction of the median positive sample.
pub const ZERO_SHIFT: f64 = 1e-6;
const MAX_ITER: usize = 2000;
/// Fraction of the largest samples used for the tail slope of the start point.
const TAIL_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ParametricDist {
    Burr { c: f64, k: f64, scale: f64 },
    Weibull { shape: f64, scale: f64 },
}

fn check(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

/// ln(1 + eᶻ) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 35.0 {
        z + (-z).exp()
    } else {
        z.exp().ln_1p()
    }
}

impl ParametricDist {
    pub fn burr(c: f64, k: f64, scale: f64) -> Result<Self> {
        check("c", c)?;
        check("k", k)?;
        check("scale", scale)?;
        Ok(ParametricDist::Burr { c, k, scale })
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        check("shape", shape)?;
        check("scale", scale)?;
        Ok(ParametricDist::Weibull { shape, scale })
    }

    pub fn family(&self) -> &'static str {
        match self {
            ParametricDist::Burr { .. } => "burr",
            ParametricDist::Weibull { .. } => "weibull",
        }
    }

    pub fn scale(&self) -> f64 {
        match *self {
            ParametricDist::Burr { scale, .. } | ParametricDist::Weibull { scale, .. } => scale,
        }
    }

    /// ln S(y); the survival function is computed in log form throughout.
    pub fn log_sf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        match *self {
            ParametricDist::Burr { c, k, scale } => -k * softplus(c * (y / scale).ln()),
            ParametricDist::Weibull { shape, scale } => -(y / scale).powf(shape),
        }
    }

    pub fn sf(&self, y: f64) -> f64 {
        self.log_sf(y).exp()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        -self.log_sf(y).exp_m1()
    }

    pub fn ln_pdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            ParametricDist::Burr { c, k, scale } => {
                let lz = (y / scale).ln();
                (c * k / scale).ln() + (c - 1.0) * lz - (k + 1.0) * softplus(c * lz)
            }
            ParametricDist::Weibull { shape, scale } => {
                let lz = (y / scale).ln();
                (shape / scale).ln() + (shape - 1.0) * lz - (shape * lz).exp()
            }
        }
    }

    pub fn pdf(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        if y == 0.0 {
            // Limits at the origin: finite only for unit shape exponents.
            return match *self {
                ParametricDist::Burr { c, k, scale } if c == 1.0 => k / scale,
                ParametricDist::Weibull { shape, scale } if shape == 1.0 => 1.0 / scale,
                ParametricDist::Burr { c, .. } if c > 1.0 => 0.0,
                ParametricDist::Weibull { shape, .. } if shape > 1.0 => 0.0,
                _ => f64::INFINITY,
            };
        }
        self.ln_pdf(y).exp()
    }

    /// Inverse of [`log_sf`](Self::log_sf). Accurate in both tails, including
    /// where `S` itself underflows.
    pub fn quantile_log_sf(&self, ls: f64) -> f64 {
        if ls.is_nan() || ls > 0.0 {
            return f64::NAN;
        }
        if ls == 0.0 {
            return 0.0;
        }
        if ls == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        match *self {
            ParametricDist::Burr { c, k, scale } => {
                let h = -ls / k;
                if h > 700.0 {
                    // ln(eʰ − 1) = h + ln(1 − e⁻ʰ)
                    scale * ((h + (-(-h).exp()).ln_1p()) / c).exp()
                } else {
                    scale * h.exp_m1().powf(1.0 / c)
                }
            }
            ParametricDist::Weibull { shape, scale } => scale * (-ls).powf(1.0 / shape),
        }
    }

    /// Inverse of the survival function: the `y` with `S(y) = s`.
    pub fn quantile_sf(&self, s: f64) -> f64 {
        if !(0.0..=1.0).contains(&s) {
            return f64::NAN;
        }
        self.quantile_log_sf(s.ln())
    }

    pub fn quantile(&self, u: f64) -> f64 {
        if !(0.0..=1.0).contains(&u) {
            return f64::NAN;
        }
        self.quantile_log_sf((-u).ln_1p())
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        samples.iter().map(|&y| self.ln_pdf(y)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.quantile(rng.random::<f64>())).collect()
    }

    /// One-line text form: `burr c k scale` or `weibull shape scale`.
    pub fn to_line(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ParametricDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParametricDist::Burr { c, k, scale } => write!(f, "burr {c} {k} {scale}"),
            ParametricDist::Weibull { shape, scale } => write!(f, "weibull {shape} {scale}"),
        }
    }
}

impl FromStr for ParametricDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let num = |t: &str| t.parse::<f64>().map_err(|_| invalid(format!("bad number `{t}` in `{s}`")));
        match parts.as_slice() {
            ["burr", c, k, l] => Self::burr(num(c)?, num(k)?, num(l)?),
            ["weibull", k, l] => Self::weibull(num(k)?, num(l)?),
            _ => Err(invalid(format!("cannot parse distribution `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub dist: ParametricDist,
    /// The Burr fit failed and `dist` is the Weibull fallback.
    pub fallback: bool,
    pub log_likelihood: f64,
    /// Burr log-likelihood at the starting point of the simplex search.
    pub start_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Number of zero samples replaced before fitting.
    pub zeros_shifted: usize,
}

impl FitReport {
    /// `dist params… fallback log_likelihood`, e.g. `burr 2 3 1 false -1234.5`.
    pub fn to_line(&self) -> String {
        format!("{} {} {}", self.dist, self.fallback, self.log_likelihood)
    }
}

/// Starting point for the Burr search: scale at the median, `c` from the
/// log-log slope of the empirical survival tail, `k = 1`.
pub fn burr_start(sorted: &[f64]) -> (f64, f64, f64) {
    let n = sorted.len();
    let median = sorted[(n - 1) / 2];
    let m = ((n as f64 * TAIL_FRACTION).ceil() as usize).clamp(3.min(n), n);
    let pts: Vec<(f64, f64)> = (n - m..n)
        .map(|i| (sorted[i].ln(), ((n - i) as f64 - 0.5).ln() - (n as f64).ln()))
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let c = if sxx > 0.0 { -sxy / sxx } else { 1.0 };
    let c = if c.is_finite() { c.clamp(0.1, 50.0) } else { 1.0 };
    (c, 1.0, median)
}

fn prepare(samples: &[f64], min_n: usize) -> Result<(Vec<f64>, usize)> {
    if samples.len() < min_n {
        return Err(invalid(format!("need at least {min_n} samples to fit, got {}", samples.len())));
    }
    if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(invalid(format!("non-finite sample {v}")));
    }
    if let Some(v) = samples.iter().find(|&&v| v < 0.0) {
        return Err(invalid(format!("negative sample {v}")));
    }
    let mut pos: Vec<f64> = samples.iter().copied().filter(|&v| v > 0.0).collect();
    if pos.is_empty() {
        return Err(invalid("all samples are zero"));
    }
    pos.sort_by(f64::total_cmp);
    let shift = ZERO_SHIFT * pos[(pos.len() - 1) / 2];
    let zeros = samples.len() - pos.len();
    let mut out: Vec<f64> = samples.iter().map(|&v| if v > 0.0 { v } else { shift }).collect();
    out.sort_by(f64::total_cmp);
    Ok((out, zeros))
}

/// Burr-XII log-likelihood of `x` (already divided by a reference scale).
fn burr_ll(x_ln: &[f64], c: f64, k: f64, lam: f64) -> f64 {
    let n = x_ln.len() as f64;
    let ll = lam.ln();
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &lx in x_ln {
        let lz = lx - ll;
        s1 += lz;
        s2 += softplus(c * lz);
    }
    n * (c.ln() + k.ln() - ll) + (c - 1.0) * s1 - (k + 1.0) * s2
}

/// Weibull profile log-likelihood at shape `k`, with the closed-form scale.
fn weibull_profile(x_ln: &[f64], k: f64) -> (f64, f64) {
    let n = x_ln.len() as f64;
    // Subtract the max before exponentiating to keep x^k in range.
    let mx = x_ln.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = x_ln.iter().map(|&l| (k * (l - mx)).exp()).sum();
    let ln_lam = mx + (s / n).ln() / k;
    let sum_ln: f64 = x_ln.iter().sum();
    let ll = n * k.ln() - n * k * ln_lam + (k - 1.0) * sum_ln - n;
    (ll, ln_lam.exp())
}

/// Weibull maximum likelihood: golden-section search on ln(shape) with the
/// scale profiled out.
pub fn fit_weibull(samples: &[f64], min_n: usize) -> Result<FitReport> {
    let (x, zeros) = prepare(samples, min_n)?;
    let median = x[(x.len() - 1) / 2];
    let x_ln: Vec<f64> = x.iter().map(|v| (v / median).ln()).collect();
    let (lo, hi) = (PARAM_LOWER.ln(), PARAM_UPPER.ln());
    // Narrow the bracket to where the profile is finite and rising/falling.
    let (t, _, it) = golden_section(|t| -weibull_profile(&x_ln, t.exp()).0, -7.0, 7.0, 1e-10, 500);
    let t = t.clamp(lo, hi);
    let k = t.exp();
    let (_, lam) = weibull_profile(&x_ln, k);
    let dist = ParametricDist::weibull(k, lam * median)?;
    let interior = t > -7.0 + 1e-6 && t < 7.0 - 1e-6;
    Ok(FitReport {
        dist,
        fallback: false,
        log_likelihood: dist.log_likelihood(&x),
        start_log_likelihood: f64::NAN,
        iterations: it,
        converged: interior,
        zeros_shifted: zeros,
    })
}

/// Burr-XII maximum likelihood by Nelder–Mead in log-parameters. When the
/// search fails (iteration cap, simplex collapse, or a parameter at its bound)
/// a Weibull is fitted instead and `fallback` is set.
pub fn fit_mle(samples: &[f64], min_n: usize) -> Result<FitReport> {
    let (x, zeros) = prepare(samples, min_n)?;
    let median = x[(x.len() - 1) / 2];
    let x_ln: Vec<f64> = x.iter().map(|v| (v / median).ln()).collect();
    let (c0, k0, lam0) = burr_start(&x);
    let start = [c0.ln(), k0.ln(), (lam0 / median).ln()];
    let nll = |p: &[f64]| -burr_ll(&x_ln, p[0].exp(), p[1].exp(), p[2].exp());
    let start_ll = -nll(&start) - x.len() as f64 * median.ln();
    let opts = SimplexOptions {
        max_iter: MAX_ITER,
        lower: PARAM_LOWER.ln(),
        upper: PARAM_UPPER.ln(),
        ..Default::default()
    };
    let r = nelder_mead(nll, &start, opts);
    let at_bound = r.x.iter().any(|&v| (v - opts.lower).abs() < 1e-6 || (opts.upper - v).abs() < 1e-6);
    if r.converged && !at_bound {
        let dist = ParametricDist::burr(r.x[0].exp(), r.x[1].exp(), r.x[2].exp() * median)?;
        return Ok(FitReport {
            dist,
            fallback: false,
            log_likelihood: dist.log_likelihood(&x),
            start_log_likelihood: start_ll,
            iterations: r.iterations,
            converged: true,
            zeros_shifted: zeros,
        });
    }
    log::debug!(
        "Burr fit failed (converged={}, collapsed={}, at_bound={at_bound}); falling back to Weibull",
        r.converged,
        r.collapsed
    );
    let mut w = fit_weibull(samples, min_n)?;
    w.fallback = true;
    w.start_log_likelihood = start_ll;
    w.iterations += r.iterations;
    Ok(w)
}

/// Maps predicted values onto the reference distribution by matching CDFs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileMap {
    pub source: ParametricDist,
    pub target: ParametricDist,
}

pub fn build_quantile_map(pred: ParametricDist, reference: ParametricDist) -> QuantileMap {
    QuantileMap { source: pred, target: reference }
}

impl QuantileMap {
    /// `target.quantile(source.cdf(y))`, evaluated on the log-survival scale so
    /// that neither tail loses precision.
    pub fn map(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        self.target.quantile_log_sf(self.source.log_sf(y))
    }
}

pub fn apply_quantile_map(map: &QuantileMap, y: &[f64]) -> Vec<f64> {
    y.iter().map(|&v| map.map(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn burr_hand_values() {
        let d = ParametricDist::burr(1.0, 1.0, 1.0).unwrap();
        assert_eq!(d.cdf(0.0), 0.0);
        assert!((d.cdf(1.0) - 0.5).abs() < 1e-15);
        assert!((d.quantile(0.5) - 1.0).abs() < 1e-15);
        // pdf = 1/(1+y)^2
        assert!((d.pdf(1.0) - 0.25).abs() < 1e-15);
        assert_eq!(d.pdf(0.0), 1.0);
    }

    #[test]
    fn weibull_hand_values() {
        let d = ParametricDist::weibull(1.0, 2.0).unwrap();
        assert!((d.quantile(0.5) - 2.0 * 2f64.ln()).abs() < 1e-14);
        assert_eq!(d.pdf(0.0), 0.5);
        for k in [0.5, 1.0, 3.0] {
            let d = ParametricDist::weibull(k, 3.0).unwrap();
            assert!((d.cdf(3.0) - (1.0 - (-1f64).exp())).abs() < 1e-15);
        }
        let d = ParametricDist::weibull(2.0, 1.5).unwrap();
        let y: f64 = 0.7;
        let direct = (2.0 / 1.5) * (y / 1.5) * (-(y / 1.5).powi(2)).exp();
        assert!(rel(d.pdf(y), direct) < 1e-14);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ParametricDist::burr(0.0, 1.0, 1.0).is_err());
        assert!(ParametricDist::burr(1.0, f64::NAN, 1.0).is_err());
        assert!(ParametricDist::weibull(1.0, -1.0).is_err());
    }

    #[test]
    fn quantile_cdf_round_trip_across_magnitudes() {
        let dists = [
            ParametricDist::burr(2.0, 3.0, 1.0).unwrap(),
            ParametricDist::burr(0.99, 10.42, 444_293.0).unwrap(),
            ParametricDist::burr(6.18, 0.47, 31_832.9).unwrap(),
            ParametricDist::weibull(1.5, 2.0).unwrap(),
            ParametricDist::weibull(0.4, 1e4).unwrap(),
        ];
        for d in dists {
            let s = d.scale();
            for e in -3..=3 {
                let y = s * 10f64.powi(e);
                let back = d.quantile_log_sf(d.log_sf(y));
                assert!(rel(back, y) < 1e-9, "{d} y={y} back={back}");
                if d.sf(y) > 1e-6 {
                    let back = d.quantile(d.cdf(y));
                    assert!(rel(back, y) < 1e-9, "{d} y={y} back={back}");
                }
            }
        }
    }

    #[test]
    fn text_round_trip() {
        for d in [ParametricDist::burr(0.1, 2.5e-3, 44.0).unwrap(), ParametricDist::weibull(1.0 / 3.0, 7.0).unwrap()] {
            assert_eq!(d.to_line().parse::<ParametricDist>().unwrap(), d);
        }
        assert!("gamma 1 2".parse::<ParametricDist>().is_err());
    }

    #[test]
    fn identity_and_scale_maps() {
        let p = ParametricDist::burr(1.7, 2.2, 5.0).unwrap();
        let m = build_quantile_map(p, p);
        for i in 1..=100 {
            let y = 0.1 * i as f64;
            assert!(rel(m.map(y), y) < 1e-9);
        }
        let q = ParametricDist::burr(1.7, 2.2, 10.0).unwrap();
        let m = build_quantile_map(p, q);
        for i in 1..=100 {
            let y = 0.37 * i as f64;
            assert!(rel(m.map(y), 2.0 * y) < 1e-9);
        }
        assert_eq!(m.map(0.0), 0.0);
    }

    #[test]
    fn fit_errors() {
        assert!(fit_mle(&[1.0; 10], 30).is_err());
        let mut v = vec![1.0; 40];
        v[3] = f64::INFINITY;
        assert!(fit_mle(&v, 30).is_err());
    }

    #[test]
    fn fit_recovers_weibull_family() {
        let truth = ParametricDist::weibull(1.5, 2.0).unwrap();
        let x = truth.sample(&mut seed::rng(7), 5000);
        let w = fit_weibull(&x, 30).unwrap();
        let ParametricDist::Weibull { shape, scale } = w.dist else { panic!() };
        assert!(rel(shape, 1.5) < 0.05 && rel(scale, 2.0) < 0.05, "{w:?}");
    }

    #[test]
    fn zeros_are_shifted() {
        let truth = ParametricDist::burr(2.0, 2.0, 100.0).unwrap();
        let mut x = truth.sample(&mut seed::rng(1), 200);
        x[0] = 0.0;
        x[1] = 0.0;
        let r = fit_mle(&x, 30).unwrap();
        assert_eq!(r.zeros_shifted, 2);
        assert!(r.log_likelihood.is_finite());
    }
}
