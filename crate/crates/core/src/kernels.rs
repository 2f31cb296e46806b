//! Isotropic covariance kernels, Gram matrices and the symmetric factorization
//! every density in the crate is built on.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative diagonal jitter applied to every Gram matrix unless overridden.
pub const DEFAULT_JITTER: f64 = 1e-8;

/// An isotropic covariance function, expressed through the squared distance
/// between its two arguments.
pub trait IsotropicKernel {
    /// Covariance at squared distance `d2`.
    fn cov_sqdist(&self, d2: f64) -> f64;

    /// Covariance at zero distance.
    fn variance(&self) -> f64;
}

/// Squared-exponential kernel `σ² exp(−λ‖u − v‖²)`.
///
/// A variance of exactly zero is allowed so that the degenerate linear
/// sub-models (no random component in `f` or `g`) can be expressed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub variance: f64,
    pub decay: f64,
}

impl KernelParams {
    pub fn new(variance: f64, decay: f64) -> Result<Self> {
        let kp = KernelParams { variance, decay };
        kp.validate()?;
        Ok(kp)
    }

    /// Builds from a standard deviation rather than a variance.
    pub fn from_sd(sd: f64, decay: f64) -> Result<Self> {
        Self::new(sd * sd, decay)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "kernel variance must be finite and nonnegative, got {}",
                self.variance
            )));
        }
        if !(self.decay.is_finite() && self.decay > 0.0) {
            return Err(Error::InvalidInput(format!(
                "kernel decay must be finite and positive, got {}",
                self.decay
            )));
        }
        Ok(())
    }

    /// Covariance between two scalars.
    #[inline]
    pub fn cov_scalar(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        self.cov_sqdist(d * d)
    }

    /// Covariance between two planar points.
    #[inline]
    pub fn cov_planar(&self, a: &[f64; 2], b: &[f64; 2]) -> f64 {
        self.cov_sqdist(sqdist(a, b))
    }
}

impl IsotropicKernel for KernelParams {
    #[inline]
    fn cov_sqdist(&self, d2: f64) -> f64 {
        if d2 == 0.0 {
            self.variance
        } else {
            self.variance * (-self.decay * d2).exp()
        }
    }

    fn variance(&self) -> f64 {
        self.variance
    }
}

#[inline]
pub(crate) fn sqdist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Evaluates the squared-exponential kernel between two points of equal
/// dimension.
pub fn eval_sqexp(kp: &KernelParams, u: &[f64], v: &[f64]) -> Result<f64> {
    kp.validate()?;
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::InvalidInput(format!(
            "kernel arguments must share a positive dimension ({} vs {})",
            u.len(),
            v.len()
        )));
    }
    if u.iter().chain(v).any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("non-finite kernel argument".into()));
    }
    Ok(kp.cov_sqdist(sqdist(u, v)))
}

/// Lower-triangular Cholesky factor stored row-major.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    n: usize,
    l: Vec<f64>,
}

impl CholeskyFactor {
    /// Factorizes a symmetric positive-definite matrix. Only the lower
    /// triangle of `a` is read.
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::InvalidInput("factorization needs a square matrix".into()));
        }
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let (head, tail) = l.split_at_mut(j * n);
            let row_j = &mut tail[..n];
            for k in 0..j {
                let row_k = &head[k * n..k * n + k + 1];
                let s: f64 = row_j[..k].iter().zip(&row_k[..k]).map(|(x, y)| x * y).sum();
                row_j[k] = (a[(j, k)] - s) / row_k[k];
            }
            let d = a[(j, j)] - row_j[..j].iter().map(|x| x * x).sum::<f64>();
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::IllConditioned {
                    context: format!("{n}x{n} factorization"),
                    pivot: d,
                    index: j,
                });
            }
            row_j[j] = d.sqrt();
        }
        Ok(CholeskyFactor { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    /// The factor as a dense lower-triangular matrix.
    pub fn lower(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| if j <= i { self.at(i, j) } else { 0.0 })
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.at(i, i).ln()).sum::<f64>()
    }

    /// Solves `L z = b` in place.
    pub fn forward_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(x, y)| x * y).sum();
            b[i] = (b[i] - s) / self.at(i, i);
        }
    }

    /// Solves `Lᵀ x = z` in place.
    pub fn backward_in_place(&self, z: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            z[i] /= self.at(i, i);
            let xi = z[i];
            let row = &self.l[i * n..i * n + i];
            for (zk, lik) in z[..i].iter_mut().zip(row) {
                *zk -= lik * xi;
            }
        }
    }

    /// `A⁻¹ b` for a single right-hand side.
    pub fn solve_slice(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_in_place(&mut x);
        self.backward_in_place(&mut x);
        x
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.solve_slice(b.as_slice()))
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        for mut col in out.column_iter_mut() {
            let x = self.solve_slice(col.as_slice());
            col.copy_from_slice(&x);
        }
        out
    }

    /// `bᵀ A⁻¹ b`.
    pub fn quad_form(&self, b: &[f64]) -> f64 {
        let mut z = b.to_vec();
        self.forward_in_place(&mut z);
        z.iter().map(|v| v * v).sum()
    }

    /// `L z`, used to turn iid standard normals into correlated draws.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                self.l[i * n..i * n + i + 1]
                    .iter()
                    .zip(z)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve_mat(&DMatrix::identity(self.n, self.n))
    }

    /// Log density of `N(0, A)` at `resid`.
    pub fn gaussian_log_density(&self, resid: &[f64]) -> f64 {
        -0.5 * (self.n as f64 * LN_2PI + self.logdet() + self.quad_form(resid))
    }
}

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A symmetric kernel matrix with its diagonal jitter and Cholesky factor.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub jitter: f64,
    factor: CholeskyFactor,
}

impl GramMatrix {
    /// Adds `jitter` to the diagonal of an already symmetric matrix and
    /// factorizes it.
    pub fn from_symmetric(mut entries: DMatrix<f64>, jitter: f64) -> Result<Self> {
        if !(jitter.is_finite() && jitter >= 0.0) {
            return Err(Error::InvalidInput(format!("jitter must be nonnegative, got {jitter}")));
        }
        for i in 0..entries.nrows() {
            entries[(i, i)] += jitter;
        }
        let factor = CholeskyFactor::new(&entries)?;
        Ok(GramMatrix {
            entries,
            jitter,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    pub fn into_parts(self) -> (DMatrix<f64>, CholeskyFactor) {
        (self.entries, self.factor)
    }
}

/// Fills a symmetric matrix from a covariance callback, evaluating each pair
/// once and mirroring it.
pub(crate) fn symmetric_from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = f(i, j);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Gram matrix of a kernel over `points`, with `jitter` added to the diagonal.
pub fn gram<P: AsRef<[f64]>>(kp: &KernelParams, points: &[P], jitter: f64) -> Result<GramMatrix> {
    kp.validate()?;
    if points.is_empty() {
        return Err(Error::InvalidInput("gram matrix needs at least one point".into()));
    }
    let dim = points[0].as_ref().len();
    for p in points {
        let p = p.as_ref();
        if p.len() != dim || p.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(
                "gram points must be finite and of equal dimension".into(),
            ));
        }
    }
    let m = symmetric_from_fn(points.len(), |i, j| {
        kp.cov_sqdist(sqdist(points[i].as_ref(), points[j].as_ref()))
    });
    GramMatrix::from_symmetric(m, jitter)
}

/// Solves `G X = rhs` and returns `X` together with `log det G`.
pub fn chol_solve_logdet(g: &GramMatrix, rhs: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if rhs.nrows() != g.dim() {
        return Err(Error::InvalidInput(format!(
            "right-hand side has {} rows, matrix is {}x{}",
            rhs.nrows(),
            g.dim(),
            g.dim()
        )));
    }
    Ok((g.factor.solve_mat(rhs), g.factor.logdet()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eval_at_zero_distance_is_variance() {
        let kp = KernelParams::new(1.0, 6.25).unwrap();
        assert_eq!(eval_sqexp(&kp, &[0.3, -1.2], &[0.3, -1.2]).unwrap(), 1.0);
    }

    #[test]
    fn eval_hand_value() {
        let kp = KernelParams::new(2.0, 0.5).unwrap();
        // squared distance 2
        let v = eval_sqexp(&kp, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(v, 2.0 * (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(v, 0.735_758_882_342_885, epsilon = 1e-12);
    }

    #[test]
    fn eval_rejects_non_finite() {
        let kp = KernelParams::new(1.0, 1.0).unwrap();
        assert!(matches!(
            eval_sqexp(&kp, &[f64::NAN], &[0.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(eval_sqexp(&kp, &[0.0, 1.0], &[0.0]).is_err());
        assert!(KernelParams::new(1.0, 0.0).is_err());
        assert!(KernelParams::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn gram_single_point() {
        let kp = KernelParams::new(4.0, 1.0).unwrap();
        let g = gram(&kp, &[[0.5, 0.5]], 0.0).unwrap();
        assert_eq!(g.entries, DMatrix::from_element(1, 1, 4.0));
    }

    #[test]
    fn gram_duplicate_points_with_jitter() {
        let kp = KernelParams::new(1.0, 3.0).unwrap();
        let g = gram(&kp, &[[0.1, 0.2], [0.1, 0.2]], 1e-8).unwrap();
        assert_eq!(g.entries[(0, 0)], 1.0 + 1e-8);
        assert_eq!(g.entries[(1, 1)], 1.0 + 1e-8);
        assert_eq!(g.entries[(0, 1)], 1.0);
        assert_eq!(g.entries[(1, 0)], 1.0);
    }

    #[test]
    fn gram_duplicates_without_jitter_fail_with_pivot() {
        let kp = KernelParams::new(1.0, 3.0).unwrap();
        match gram(&kp, &[[0.1, 0.2], [0.1, 0.2]], 0.0) {
            Err(Error::IllConditioned { pivot, index, .. }) => {
                assert_eq!(index, 1);
                assert!(pivot <= 0.0);
            }
            other => panic!("expected ill-conditioned error, got {other:?}"),
        }
    }

    #[test]
    fn gram_eigenvalues_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<[f64; 2]> = (0..5)
            .map(|_| [rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0])
            .collect();
        let kp = KernelParams::new(1.0, 1.0).unwrap();
        let g = gram(&kp, &pts, 1e-8).unwrap();
        let eig = nalgebra::SymmetricEigen::new(g.entries.clone());
        assert!(eig.eigenvalues.iter().all(|&e| e > 0.0), "{:?}", eig.eigenvalues);
    }

    #[test]
    fn solve_identity() {
        let g = GramMatrix::from_symmetric(DMatrix::identity(3, 3), 0.0).unwrap();
        let rhs = DMatrix::from_column_slice(3, 1, &[1.5, -2.0, 7.0]);
        let (x, ld) = chol_solve_logdet(&g, &rhs).unwrap();
        assert_eq!(x, rhs);
        assert_eq!(ld, 0.0);
    }

    #[test]
    fn solve_diag_two() {
        let g = GramMatrix::from_symmetric(DMatrix::from_diagonal_element(2, 2, 2.0), 0.0).unwrap();
        let rhs = DMatrix::from_column_slice(2, 1, &[2.0, 4.0]);
        let (x, ld) = chol_solve_logdet(&g, &rhs).unwrap();
        assert_relative_eq!(x[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(x[(1, 0)], 2.0, epsilon = 1e-15);
        assert_relative_eq!(ld, 2.0 * 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(ld, 1.386_294_361_119_890_6, epsilon = 1e-12);
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn solve_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(4, &mut rng);
        let g = GramMatrix::from_symmetric(a.clone(), 0.0).unwrap();
        let rhs = DMatrix::from_fn(4, 2, |_, _| rng.random::<f64>());
        let (x, ld) = chol_solve_logdet(&g, &rhs).unwrap();
        let inv = a.clone().try_inverse().unwrap();
        let oracle = &inv * &rhs;
        assert!((&x - &oracle).norm() / oracle.norm() < 1e-10);
        assert_relative_eq!(ld, a.determinant().ln(), max_relative = 1e-10);
    }

    #[test]
    fn non_pd_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            GramMatrix::from_symmetric(m, 0.0),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn lower_times_transpose_reproduces_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_spd(6, &mut rng);
        let f = CholeskyFactor::new(&a).unwrap();
        let l = f.lower();
        assert!((&l * l.transpose() - &a).norm() < 1e-12);
        let z = [0.3, -0.1, 1.0, 0.0, 2.0, -1.0];
        let lz = f.mul_lower(&z);
        let oracle = &l * DVector::from_column_slice(&z);
        for (a, b) in lz.iter().zip(oracle.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }
    }

    proptest! {
        #[test]
        fn eval_is_symmetric(u in prop::array::uniform2(-5.0f64..5.0), v in prop::array::uniform2(-5.0f64..5.0),
                             var in 0.01f64..10.0, decay in 0.01f64..10.0) {
            let kp = KernelParams::new(var, decay).unwrap();
            let a = eval_sqexp(&kp, &u, &v).unwrap();
            prop_assert_eq!(a, eval_sqexp(&kp, &v, &u).unwrap());
            prop_assert!(a > 0.0 || sqdist(&u, &v) * decay > 700.0);
            prop_assert!(a <= var);
        }

        #[test]
        fn eval_is_monotone_in_distance(r1 in 0.0f64..3.0, r2 in 0.0f64..3.0, decay in 0.01f64..10.0) {
            let kp = KernelParams::new(1.3, decay).unwrap();
            let (near, far) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(eval_sqexp(&kp, &[0.0], &[near]).unwrap() >= eval_sqexp(&kp, &[0.0], &[far]).unwrap());
        }

        #[test]
        fn gram_is_bit_symmetric_and_inverts(seed in 0u64..500, n in 1usize..=10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0]).collect();
            let kp = KernelParams::new(0.5 + rng.random::<f64>(), 0.5 + rng.random::<f64>()).unwrap();
            let g = gram(&kp, &pts, 1e-3).unwrap();
            for i in 0..n { for j in 0..n {
                prop_assert_eq!(g.entries[(i, j)].to_bits(), g.entries[(j, i)].to_bits());
            }}
            let (inv, _) = chol_solve_logdet(&g, &DMatrix::identity(n, n)).unwrap();
            let oracle = g.entries.clone().try_inverse().unwrap();
            prop_assert!((&inv - &oracle).norm() / oracle.norm() < 1e-10);
        }
    }
}
