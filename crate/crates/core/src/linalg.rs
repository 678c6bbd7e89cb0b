//! Internal dense linear algebra helpers.
//!
//! Everything here operates on symmetric positive (semi-)definite systems
//! of desk scale. Solves go through a lower-triangular Cholesky factor
//! that supports O(n^2) rank-one extension; explicit inverses are never
//! formed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::CoreError;
use crate::Result;

/// Jitter levels tried, in order, when a factorization fails.
pub(crate) const JITTER_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct CholFactor {
    l: DMatrix<f64>,
}

impl CholFactor {
    /// Factors `a`, escalating diagonal jitter on failure when `jitter` is set.
    ///
    /// Without jitter, a failed factorization reports the matrix as
    /// ill-conditioned together with an eigenvalue-based condition estimate.
    pub fn new(a: &DMatrix<f64>, jitter: bool, context: &str) -> Result<Self> {
        debug_assert_eq!(a.nrows(), a.ncols());
        if a.nrows() == 0 {
            return Ok(CholFactor {
                l: DMatrix::zeros(0, 0),
            });
        }
        if let Some(l) = cholesky_lower(a) {
            return Ok(CholFactor { l });
        }
        if jitter {
            for &eps in JITTER_LADDER.iter() {
                let mut shifted = a.clone();
                for k in 0..a.nrows() {
                    shifted[(k, k)] += eps;
                }
                if let Some(l) = cholesky_lower(&shifted) {
                    return Ok(CholFactor { l });
                }
            }
        }
        Err(CoreError::IllConditioned {
            context: context.to_string(),
            condition_estimate: condition_estimate(a),
        })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Solves `L x = b` in place.
    pub fn forward_solve(&self, b: &mut DVector<f64>) {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let mut s = b[i];
            for j in 0..i {
                s -= self.l[(i, j)] * b[j];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solves `L^T x = b` in place.
    pub fn backward_solve(&self, b: &mut DVector<f64>) {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in (i + 1)..n {
                s -= self.l[(j, i)] * b[j];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solves `(L L^T) x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.forward_solve(&mut x);
        self.backward_solve(&mut x);
        x
    }

    /// Squared norm of `L^{-1} b`, i.e. the quadratic form `b^T (L L^T)^{-1} b`.
    pub fn quad_form(&self, b: &DVector<f64>) -> f64 {
        let mut x = b.clone();
        self.forward_solve(&mut x);
        x.norm_squared()
    }

    /// `L^{-1} b` as a fresh vector.
    pub fn half_solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.forward_solve(&mut x);
        x
    }

    /// Log-determinant of the factored matrix.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    /// Extends the factor by one row/column of the underlying matrix.
    ///
    /// `cross` is the new off-diagonal column and `diag` the new diagonal
    /// entry. Runs in O(n^2); the extended factor matches a from-scratch
    /// factorization of the bordered matrix.
    pub fn extend(&mut self, cross: &DVector<f64>, diag: f64, context: &str) -> Result<()> {
        let n = self.dim();
        debug_assert_eq!(cross.len(), n);
        let w = self.half_solve(cross);
        let mut pivot = diag - w.norm_squared();
        if pivot <= 0.0 {
            // Same escalation policy as the dense path.
            for &eps in JITTER_LADDER.iter() {
                if pivot + eps > 0.0 {
                    pivot += eps;
                    break;
                }
            }
        }
        if pivot <= 0.0 {
            return Err(CoreError::IllConditioned {
                context: context.to_string(),
                condition_estimate: f64::INFINITY,
            });
        }
        let mut grown = DMatrix::zeros(n + 1, n + 1);
        grown.view_mut((0, 0), (n, n)).copy_from(&self.l);
        for j in 0..n {
            grown[(n, j)] = w[j];
        }
        grown[(n, n)] = pivot.sqrt();
        self.l = grown;
        Ok(())
    }
}

/// Plain lower Cholesky; `None` when a pivot is not strictly positive.
fn cholesky_lower(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::linalg::Cholesky::new(a.clone()).map(|c| c.l())
}

/// Ratio of extreme absolute eigenvalues, for error reporting only.
pub(crate) fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let eig = nalgebra::linalg::SymmetricEigen::new(a.clone());
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &v in eig.eigenvalues.iter() {
        let m = v.abs();
        lo = lo.min(m);
        hi = hi.max(m);
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Draws an m x r matrix with orthonormal columns, Haar-distributed on the
/// Stiefel manifold, via QR of a Gaussian ensemble with sign correction.
pub fn sample_stiefel_uniform<R: Rng + ?Sized>(m: usize, r: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(r <= m, "frame rank exceeds ambient dimension");
    let g = DMatrix::from_fn(m, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let rr = qr.r();
    for k in 0..r {
        if rr[(k, k)] < 0.0 {
            for i in 0..m {
                q[(i, k)] = -q[(i, k)];
            }
        }
    }
    q
}

/// Orthonormal basis of the orthogonal complement of span(w), by modified
/// Gram-Schmidt over the identity columns with one re-orthogonalization
/// pass. `w` must have orthonormal columns.
pub(crate) fn orthonormal_complement(w: &DMatrix<f64>) -> DMatrix<f64> {
    let m = w.nrows();
    let k = w.ncols();
    let target = m - k;
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(target);
    for cand in 0..m {
        if basis.len() == target {
            break;
        }
        let mut v = DVector::zeros(m);
        v[cand] = 1.0;
        for _ in 0..2 {
            for j in 0..k {
                let col = w.column(j);
                let proj = col.dot(&v);
                v -= proj * DVector::from_column_slice(col.as_slice());
            }
            for b in &basis {
                let proj = b.dot(&v);
                v -= proj * b;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
    }
    assert_eq!(
        basis.len(),
        target,
        "complement basis incomplete; input likely not orthonormal"
    );
    DMatrix::from_fn(m, target, |i, j| basis[j][i])
}

/// Type-7 quantile (linear interpolation) of pre-sorted data.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Natural log of the gamma function (Lanczos, g = 7, 9 terms).
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return pi.ln() - (pi * x).sin().abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Log volume of the Stiefel manifold of m x r orthonormal frames.
///
/// Vol = 2^r pi^{mr/2} / Gamma_r(m/2), with Gamma_r the multivariate
/// gamma function.
pub(crate) fn ln_stiefel_volume(m: usize, r: usize) -> f64 {
    let pi = std::f64::consts::PI;
    let mut ln_multigamma = (r * (r - 1)) as f64 / 4.0 * pi.ln();
    for j in 0..r {
        ln_multigamma += ln_gamma(m as f64 / 2.0 - j as f64 / 2.0);
    }
    r as f64 * 2f64.ln() + (m * r) as f64 / 2.0 * pi.ln() - ln_multigamma
}

/// Log density of the Inverse-Gamma(shape, rate) distribution at `x`.
pub(crate) fn ig_log_density(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

/// One Inverse-Gamma(shape, rate) draw via the reciprocal of a Gamma draw.
pub(crate) fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    use rand_distr::{Distribution, Gamma};
    let g = Gamma::new(shape, 1.0 / rate).expect("gamma parameters");
    1.0 / g.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        &g * g.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn factor_solve_matches_direct_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = random_spd(6, &mut rng);
            let b = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
            let f = CholFactor::new(&a, false, "test").unwrap();
            let x = f.solve(&b);
            let residual = (&a * &x - &b).norm();
            assert!(residual < 1e-9, "residual {residual}");
            assert_relative_eq!(f.quad_form(&b), b.dot(&x), max_relative = 1e-10);
        }
    }

    #[test]
    fn extension_matches_fresh_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_spd(7, &mut rng);
        let small = a.view((0, 0), (6, 6)).into_owned();
        let mut f = CholFactor::new(&small, false, "test").unwrap();
        let cross = DVector::from_fn(6, |i, _| a[(6, i)]);
        f.extend(&cross, a[(6, 6)], "test").unwrap();
        let fresh = CholFactor::new(&a, false, "test").unwrap();
        assert_relative_eq!(f.log_det(), fresh.log_det(), max_relative = 1e-10);
        let recon = f.lower() * f.lower().transpose();
        assert!((recon - &a).norm() < 1e-9);
    }

    #[test]
    fn log_det_matches_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(5, &mut rng);
        let f = CholFactor::new(&a, false, "test").unwrap();
        let eig = nalgebra::linalg::SymmetricEigen::new(a);
        let direct: f64 = eig.eigenvalues.iter().map(|v| v.ln()).sum();
        assert_relative_eq!(f.log_det(), direct, max_relative = 1e-10);
    }

    #[test]
    fn singular_matrix_without_jitter_reports_condition() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = CholFactor::new(&a, false, "test").unwrap_err();
        match err {
            CoreError::IllConditioned {
                condition_estimate, ..
            } => assert!(condition_estimate > 1e12),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn jitter_recovers_singular_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = CholFactor::new(&a, true, "test").unwrap();
        assert_eq!(f.dim(), 2);
    }

    #[test]
    fn stiefel_draw_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = sample_stiefel_uniform(8, 3, &mut rng);
        let gram = q.transpose() * &q;
        assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = sample_stiefel_uniform(7, 2, &mut rng);
        let c = orthonormal_complement(&w);
        assert_eq!(c.ncols(), 5);
        assert!((c.transpose() * &c - DMatrix::identity(5, 5)).norm() < 1e-10);
        assert!((w.transpose() * &c).norm() < 1e-10);
    }

    #[test]
    fn quantile_type7_hand_values() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        assert_relative_eq!(quantile_type7(&xs, 0.25), 1.75);
        assert_relative_eq!(quantile_type7(&xs, 0.75), 5.0);
        assert_relative_eq!(quantile_type7(&xs, 0.0), 1.0);
        assert_relative_eq!(quantile_type7(&xs, 1.0), 8.0);
    }

    #[test]
    fn ln_gamma_matches_known_values() {
        assert_relative_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(ln_gamma(5.0), 24f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(
            ln_gamma(0.5),
            std::f64::consts::PI.sqrt().ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn inverse_gamma_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (shape, rate) = (9.0, 10.0);
        let n = 200_000;
        let mean: f64 =
            (0..n).map(|_| sample_inverse_gamma(shape, rate, &mut rng)).sum::<f64>() / n as f64;
        // E[X] = rate / (shape - 1) = 1.25; generous MC tolerance.
        assert!((mean - 1.25).abs() < 0.01, "mean {mean}");
    }
}
