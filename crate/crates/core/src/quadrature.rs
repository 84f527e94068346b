//! Adaptive Simpson integration. Integrals over positive half-lines are
//! carried out in `t = ln y`, which keeps heavy tails and near-zero
//! singularities of claim-size densities tractable.

use crate::error::{Error, Result};

pub const DEFAULT_REL_TOL: f64 = 1e-8;
const INITIAL_PANELS: usize = 64;
const MAX_DEPTH: u32 = 48;
const MAX_EVALS: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Estimate of the integral of |f|, the scale the tolerance is relative to.
    pub abs_value: f64,
    pub evaluations: usize,
}

struct State<'a, F: Fn(f64) -> f64> {
    f: &'a F,
    evals: usize,
}

fn simpson(a: f64, fa: f64, fm: f64, b: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    st: &mut State<'_, F>,
    a: f64,
    fa: f64,
    m: f64,
    fm: f64,
    b: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = (st.f)(lm);
    let frm = (st.f)(rm);
    st.evals += 2;
    if !flm.is_finite() || !frm.is_finite() {
        return Err(Error::Numerical(format!("integrand not finite near t = {lm:.6e} .. {rm:.6e}")));
    }
    let left = simpson(a, fa, flm, m, fm);
    let right = simpson(m, fm, frm, b, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a) <= f64::EPSILON * (1.0 + a.abs().max(b.abs())) * 16.0 {
        return Ok(left + right + delta / 15.0);
    }
    if depth >= MAX_DEPTH || st.evals >= MAX_EVALS {
        return Err(Error::Numerical(format!(
            "adaptive Simpson did not converge on [{a:.6e}, {b:.6e}] after {} evaluations (error estimate {:.3e}, tolerance {:.3e})",
            st.evals,
            delta.abs() / 15.0,
            tol
        )));
    }
    let l = recurse(st, a, fa, lm, flm, m, fm, left, tol / 2.0, depth + 1)?;
    let r = recurse(st, m, fm, rm, frm, b, fb, right, tol / 2.0, depth + 1)?;
    Ok(l + r)
}

/// Integrate `f` over `[a, b]` to a tolerance of `rel_tol` times the integral of `|f|`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<Quadrature> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::Numerical(format!("invalid integration interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(Quadrature { value: 0.0, abs_value: 0.0, evaluations: 0 });
    }
    let n = INITIAL_PANELS;
    let h = (b - a) / n as f64;
    let xs: Vec<f64> = (0..=2 * n).map(|i| if i == 2 * n { b } else { a + 0.5 * h * i as f64 }).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    if let Some(i) = fs.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("integrand not finite at t = {:.6e}", xs[i])));
    }
    let mut coarse = Vec::with_capacity(n);
    let mut abs_est = 0.0;
    for p in 0..n {
        let (i0, i1, i2) = (2 * p, 2 * p + 1, 2 * p + 2);
        coarse.push(simpson(xs[i0], fs[i0], fs[i1], xs[i2], fs[i2]));
        abs_est += (xs[i2] - xs[i0]) / 6.0 * (fs[i0].abs() + 4.0 * fs[i1].abs() + fs[i2].abs());
    }
    let tol = (rel_tol * abs_est).max(f64::MIN_POSITIVE);
    let mut st = State { f: &f, evals: fs.len() };
    let mut total = 0.0;
    for p in 0..n {
        let (i0, i1, i2) = (2 * p, 2 * p + 1, 2 * p + 2);
        total += recurse(&mut st, xs[i0], fs[i0], xs[i1], fs[i1], xs[i2], fs[i2], coarse[p], tol / n as f64, 0)?;
    }
    Ok(Quadrature { value: total, abs_value: abs_est, evaluations: st.evals })
}

/// Integrate `g(y)` over `[lo, hi] ⊂ (0, ∞)` through the substitution `y = eᵗ`.
pub fn integrate_positive<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, rel_tol: f64) -> Result<Quadrature> {
    if !(lo > 0.0) || !(hi >= lo) {
        return Err(Error::Numerical(format!("invalid positive interval [{lo}, {hi}]")));
    }
    integrate(
        |t| {
            let y = t.exp();
            let v = g(y);
            if v == 0.0 {
                0.0
            } else {
                v * y
            }
        },
        lo.ln(),
        hi.ln(),
        rel_tol,
    )
}
