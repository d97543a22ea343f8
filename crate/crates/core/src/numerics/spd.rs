use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};

/// Diagonal jitter added before factorizing a covariance matrix.
pub const JITTER: f64 = 1e-12;

/// `xᵀ S x`.
pub fn spd_quadratic_form(s: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    check_dim(s.nrows(), x.len())?;
    check_dim(s.ncols(), x.len())?;
    Ok(x.dot(&(s * x)))
}

/// Replaces `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Cholesky factor of `s + JITTER·I`, or `None` when `s` is not (numerically)
/// positive semidefinite.
pub fn cholesky_jittered(s: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let mut m = s.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += JITTER;
    }
    Cholesky::new(m)
}

pub fn is_positive_semidefinite(s: &DMatrix<f64>) -> bool {
    s.is_square() && cholesky_jittered(s).is_some()
}

/// Inverse of a symmetric positive-definite matrix via Cholesky. No jitter:
/// callers that need the inverse need the exact one.
pub fn spd_inverse(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(s.clone()).ok_or(Error::NotPositiveDefinite)?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn log_det_spd(s: &DMatrix<f64>) -> Result<f64> {
    let chol = Cholesky::new(s.clone()).ok_or(Error::NotPositiveDefinite)?;
    Ok(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// `s − k kᵀ / scale`, symmetrized. The rank-one covariance downdate shared by
/// every belief update.
pub fn outer_downdate(s: &DMatrix<f64>, k: &DVector<f64>, scale: f64) -> DMatrix<f64> {
    let mut out = s - (k * k.transpose()) / scale;
    symmetrize(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn quadratic_form_identity() {
        let s = DMatrix::identity(3, 3);
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(spd_quadratic_form(&s, &x).unwrap(), 14.0);
        assert_eq!(spd_quadratic_form(&s, &DVector::zeros(3)).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_form_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let s = random_spd(5, &mut rng);
            let x = DVector::from_fn(5, |_, _| rng.random_range(-2.0..2.0));
            let mut naive = 0.0;
            for i in 0..5 {
                for j in 0..5 {
                    naive += x[i] * s[(i, j)] * x[j];
                }
            }
            let q = spd_quadratic_form(&s, &x).unwrap();
            assert!((q - naive).abs() <= 1e-12 * naive.abs().max(1.0));
            assert!(q >= 0.0);
        }
    }

    #[test]
    fn quadratic_form_dimension_error() {
        let s = DMatrix::identity(3, 3);
        let x = DVector::zeros(2);
        assert_eq!(
            spd_quadratic_form(&s, &x),
            Err(Error::Dimension {
                expected: 3,
                found: 2
            })
        );
    }

    #[test]
    fn inverse_and_log_det() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_spd(4, &mut rng);
        let inv = spd_inverse(&s).unwrap();
        let prod = &s * &inv;
        assert!((prod - DMatrix::identity(4, 4)).amax() < 1e-10);
        let det = s.clone().determinant();
        assert!((log_det_spd(&s).unwrap() - det.ln()).abs() < 1e-10);
    }

    #[test]
    fn psd_check() {
        assert!(is_positive_semidefinite(&DMatrix::zeros(3, 3)));
        let mut m = DMatrix::identity(2, 2);
        m[(0, 0)] = -1.0;
        assert!(!is_positive_semidefinite(&m));
        assert_eq!(spd_inverse(&m), Err(Error::NotPositiveDefinite));
    }
}
