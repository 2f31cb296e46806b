//! Independent numerical oracles shared by the integration tests. Nothing
//! here calls into the library's linear algebra.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 50)
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Multivariate normal log density via nalgebra's own Cholesky.
pub fn mvn_log_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let chol = cov.clone().cholesky().expect("oracle covariance is PD");
    let r = x - mean;
    let sol = chol.solve(&r);
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (r.dot(&sol) + logdet + x.len() as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Conditional of the `free` coordinates of `N(mean, cov)` given the
/// `fixed` coordinates equal `values`, by the covariance-form formulas.
pub fn mvn_condition(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    free: &[usize],
    fixed: &[usize],
    values: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let pick = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |i, j| cov[(rows[i], cols[j])]);
    let s11 = pick(free, free);
    let s12 = pick(free, fixed);
    let s22 = pick(fixed, fixed);
    let m1 = DVector::from_iterator(free.len(), free.iter().map(|&i| mean[i]));
    let m2 = DVector::from_iterator(fixed.len(), fixed.iter().map(|&i| mean[i]));
    let s22inv = s22.try_inverse().expect("conditioning block invertible");
    let gain = &s12 * s22inv;
    (m1 + &gain * (values - m2), s11 - gain * s12.transpose())
}

/// `σ² exp(−λ ‖u − v‖²)` evaluated from scratch.
pub fn sqexp(variance: f64, decay: f64, u: &[f64], v: &[f64]) -> f64 {
    let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
    variance * (-decay * d2).exp()
}

pub fn gram(variance: f64, decay: f64, pts: &[[f64; 2]]) -> DMatrix<f64> {
    DMatrix::from_fn(pts.len(), pts.len(), |i, j| sqexp(variance, decay, &pts[i], &pts[j]))
}

/// Batch-means standard error of the mean of a correlated series.
pub fn batch_se(xs: &[f64], batches: usize) -> f64 {
    let b = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(b).map(|c| c.iter().sum::<f64>() / b as f64).collect();
    let m = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    (var / means.len() as f64).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Joint mean and covariance of the stacked latent vector `x(·,0..=T)`
/// (time-major) of the linear recursion `x_t = β₀ + β₁ x_{t−1} + η_t`,
/// built as `x = A w + c` with `w` the independent initial layer and
/// innovations.
pub fn linear_latent_joint(
    mu0: &[f64],
    sigma0: &DMatrix<f64>,
    sigma_eta: &DMatrix<f64>,
    b0: f64,
    b1: f64,
    t_max: usize,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = mu0.len();
    let dim = n * (t_max + 1);
    let mut a = DMatrix::zeros(dim, dim);
    let mut c = DVector::zeros(dim);
    for t in 0..=t_max {
        for s in 0..=t {
            let coef = b1.powi((t - s) as i32);
            for i in 0..n {
                a[(t * n + i, s * n + i)] = coef;
            }
        }
        for i in 0..n {
            c[t * n + i] = if t == 0 { mu0[i] } else { b0 + b1 * c[(t - 1) * n + i] };
        }
    }
    let mut w = DMatrix::zeros(dim, dim);
    for t in 0..=t_max {
        let block = if t == 0 { sigma0 } else { sigma_eta };
        w.view_mut((t * n, t * n), (n, n)).copy_from(block);
    }
    let cov = &a * w * a.transpose();
    (c, cov)
}
