//! Derivative-free minimizers used by the distribution fits.

/// Outcome of a Nelder–Mead run.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The simplex became degenerate (flat) before the function values agreed.
    pub collapsed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_iter: usize,
    /// Spread of function values across the simplex, relative to `1 + |f_best|`.
    pub f_tol: f64,
    /// Largest vertex distance from the best vertex.
    pub x_tol: f64,
    pub initial_step: f64,
    /// Lower and upper bounds per coordinate; points are projected onto the box.
    pub lower: f64,
    pub upper: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_iter: 2000, f_tol: 1e-12, x_tol: 1e-9, initial_step: 0.25, lower: f64::NEG_INFINITY, upper: f64::INFINITY }
    }
}

fn project(x: &mut [f64], lo: f64, hi: f64) {
    for v in x {
        *v = v.clamp(lo, hi);
    }
}

/// |det(edges)| / (max edge length)^d; zero for a flat simplex.
fn flatness(pts: &[Vec<f64>]) -> f64 {
    let d = pts[0].len();
    let mut m: Vec<Vec<f64>> = pts[1..].iter().map(|p| p.iter().zip(&pts[0]).map(|(a, b)| a - b).collect()).collect();
    let scale = m.iter().map(|e| e.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let mut det = 1.0;
    for c in 0..d {
        let piv = (c..d).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        if m[piv][c] == 0.0 {
            return 0.0;
        }
        m.swap(c, piv);
        det *= m[c][c];
        for r in c + 1..d {
            let k = m[r][c] / m[c][c];
            for j in c..d {
                m[r][j] -= k * m[c][j];
            }
        }
    }
    det.abs() / scale.powi(d as i32)
}

/// Minimize `f` starting from `x0`. After a first convergence the simplex is
/// rebuilt around the best point once, which guards against false convergence;
/// both passes share the iteration budget.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: SimplexOptions) -> Simplex {
    let d = x0.len();
    let mut start = x0.to_vec();
    project(&mut start, opts.lower, opts.upper);
    let mut iterations = 0;
    let mut result = None;
    for pass in 0..2 {
        let r = nm_pass(&mut f, &start, opts, &mut iterations, d);
        let done = !r.converged || pass == 1;
        start = r.x.clone();
        result = Some(r);
        if done {
            break;
        }
    }
    let mut r = result.expect("at least one pass");
    r.iterations = iterations;
    r
}

fn nm_pass<F: FnMut(&[f64]) -> f64>(f: &mut F, x0: &[f64], opts: SimplexOptions, iterations: &mut usize, d: usize) -> Simplex {
    let eval = |f: &mut F, x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut p = x0.to_vec();
        let step = if p[i] + opts.initial_step <= opts.upper { opts.initial_step } else { -opts.initial_step };
        p[i] += step;
        project(&mut p, opts.lower, opts.upper);
        pts.push(p);
    }
    let mut fv: Vec<f64> = pts.iter().map(|p| eval(f, p)).collect();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    loop {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        fv = order.iter().map(|&i| fv[i]).collect();

        let spread = (fv[d] - fv[0]).abs();
        let size = pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let f_ok = spread <= opts.f_tol * (1.0 + fv[0].abs());
        if f_ok && size <= opts.x_tol {
            return Simplex { x: pts[0].clone(), f: fv[0], iterations: *iterations, converged: true, collapsed: false };
        }
        if !f_ok && size > 0.0 && flatness(&pts) < 1e-14 {
            return Simplex { x: pts[0].clone(), f: fv[0], iterations: *iterations, converged: false, collapsed: true };
        }
        if *iterations >= opts.max_iter {
            return Simplex { x: pts[0].clone(), f: fv[0], iterations: *iterations, converged: false, collapsed: false };
        }
        *iterations += 1;

        let centroid: Vec<f64> = (0..d).map(|j| pts[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| {
            let mut p: Vec<f64> = (0..d).map(|j| centroid[j] + t * (pts[d][j] - centroid[j])).collect();
            project(&mut p, opts.lower, opts.upper);
            p
        };
        let xr = along(-alpha);
        let fr = eval(f, &xr);
        if fr < fv[0] {
            let xe = along(-alpha * gamma);
            let fe = eval(f, &xe);
            if fe < fr {
                pts[d] = xe;
                fv[d] = fe;
            } else {
                pts[d] = xr;
                fv[d] = fr;
            }
            continue;
        }
        if fr < fv[d - 1] {
            pts[d] = xr;
            fv[d] = fr;
            continue;
        }
        let (xc, fc) = if fr < fv[d] {
            let xc = along(-alpha * rho);
            let fc = eval(f, &xc);
            (xc, fc)
        } else {
            let xc = along(rho);
            let fc = eval(f, &xc);
            (xc, fc)
        };
        if fc < fv[d].min(fr) {
            pts[d] = xc;
            fv[d] = fc;
            continue;
        }
        for i in 1..=d {
            let mut p: Vec<f64> = (0..d).map(|j| pts[0][j] + sigma * (pts[i][j] - pts[0][j])).collect();
            project(&mut p, opts.lower, opts.upper);
            fv[i] = eval(f, &p);
            pts[i] = p;
        }
    }
}

/// Golden-section minimization of a unimodal `f` on `[a, b]`.
/// Returns `(x, f(x), iterations)`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> (f64, f64, usize) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut it = 0;
    while (b - a).abs() > tol && it < max_iter {
        it += 1;
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc, it)
    } else {
        (d, fd, it)
    }
}
