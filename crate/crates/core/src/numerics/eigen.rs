use nalgebra::linalg::{Cholesky, SymmetricEigen};

use super::{reconstruct_with, ComplexMatrix, ComplexVector, EigenDecomposition, HermitianMatrix, C64};
use crate::error::{Error, Result};

const EIG_MAX_SWEEPS_PER_DIM: usize = 1_000;

/// Eigen-decomposition of a Hermitian matrix, eigenvalues descending.
///
/// Each eigenvector's phase is fixed so that its first largest-modulus
/// component is real and positive, which makes the output a deterministic
/// function of the input.
pub fn hermitian_eig(m: &HermitianMatrix) -> Result<EigenDecomposition> {
    let n = m.dim();
    let eig = SymmetricEigen::try_new(
        m.as_matrix().clone(),
        f64::EPSILON,
        EIG_MAX_SWEEPS_PER_DIM * n.max(1),
    )
    .ok_or_else(|| Error::NumericalFailure("Hermitian eigen-iteration did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let pivot = col
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |best, (i, z)| if z.norm() > best.1 { (i, z.norm()) } else { best })
            .0;
        let phase = if col[pivot].norm() > 0.0 {
            col[pivot].conj() / col[pivot].norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..n {
            vectors[(i, dst)] = col[i] * phase;
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite eigenvalue".into()));
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Principal square root of a positive semidefinite Hermitian matrix.
///
/// Eigenvalues in `[-1e-12 λ_max, 0)` are clamped to zero; anything more
/// negative is rejected.
pub fn hermitian_sqrt(m: &HermitianMatrix) -> Result<HermitianMatrix> {
    let eig = hermitian_eig(m)?;
    let lambda_max = eig.values[0].max(0.0);
    let floor = -1e-12 * lambda_max;
    let min = eig.min_value();
    if min < floor || (lambda_max == 0.0 && min < 0.0) {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    let roots: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0).sqrt()).collect();
    reconstruct_with(&eig.vectors, &roots)
}

/// Solves `m x = b` through a Cholesky factorization.
pub fn solve_hermitian(m: &HermitianMatrix, b: &ComplexVector) -> Result<ComplexVector> {
    if b.len() != m.dim() {
        return Err(Error::InvalidInput(format!(
            "right-hand side has length {}, matrix is {}x{}",
            b.len(),
            m.dim(),
            m.dim()
        )));
    }
    let chol = cholesky(m)?;
    Ok(chol.solve(b))
}

/// Inverse of a positive definite Hermitian matrix.
pub fn hermitian_inverse(m: &HermitianMatrix) -> Result<HermitianMatrix> {
    let chol = cholesky(m)?;
    HermitianMatrix::from_matrix(chol.inverse())
}

pub(crate) fn cholesky(m: &HermitianMatrix) -> Result<Cholesky<C64, nalgebra::Dyn>> {
    let chol = Cholesky::new(m.as_matrix().clone())
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    // the complex square root never fails, so non-positive pivots show up as
    // non-real or non-positive diagonal entries of the factor
    let l = chol.l_dirty();
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if !(d.re > 0.0) || d.im.abs() > 1e-12 * d.re || !d.re.is_finite() {
            return Err(Error::NotPositiveDefinite(format!("pivot {i} is {d}")));
        }
    }
    Ok(chol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::max_abs;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> HermitianMatrix {
        HermitianMatrix::from_upper_fn(n, |i, j| {
            if i == j {
                C64::new(rng.random_range(-2.0..2.0), 0.0)
            } else {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            }
        })
        .unwrap()
    }

    fn random_pd(n: usize, rng: &mut impl Rng) -> HermitianMatrix {
        let a = ComplexMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        HermitianMatrix::from_matrix(&a * a.adjoint())
            .unwrap()
            .add_diagonal(0.1)
    }

    fn unitary_defect(u: &ComplexMatrix) -> f64 {
        let n = u.nrows();
        max_abs(&(u.adjoint() * u - ComplexMatrix::identity(n, n)))
    }

    #[test]
    fn identity_eigenvalues() {
        let eig = hermitian_eig(&HermitianMatrix::identity(3)).unwrap();
        for v in &eig.values {
            assert!((v - 1.0).abs() < 1e-15);
        }
        assert!(unitary_defect(&eig.vectors) < 1e-12);
    }

    #[test]
    fn diagonal_eigenvalues_sorted_descending() {
        let m = HermitianMatrix::from_real_diagonal(&[-1.0, 2.0]).unwrap();
        let eig = hermitian_eig(&m).unwrap();
        assert_eq!(eig.values, vec![2.0, -1.0]);
        // eigenvector of 2 is e_2, of -1 is e_1
        assert!((eig.vectors[(1, 0)].norm() - 1.0).abs() < 1e-15);
        assert!((eig.vectors[(0, 1)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn deterministic_for_identical_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_hermitian(9, &mut rng);
        let a = hermitian_eig(&m).unwrap();
        let b = hermitian_eig(&m.clone()).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn sqrt_of_simple_matrices() {
        let s = hermitian_sqrt(&HermitianMatrix::identity(4)).unwrap();
        assert!(max_abs(&(s.as_matrix() - ComplexMatrix::identity(4, 4))) < 1e-14);
        let s = hermitian_sqrt(&HermitianMatrix::from_real_diagonal(&[4.0, 9.0]).unwrap()).unwrap();
        assert!((s.get(0, 0).re - 2.0).abs() < 1e-14);
        assert!((s.get(1, 1).re - 3.0).abs() < 1e-14);
        assert!(s.get(0, 1).norm() < 1e-14);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = HermitianMatrix::from_real_diagonal(&[1.0, -0.1]).unwrap();
        assert!(matches!(
            hermitian_sqrt(&m),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn sqrt_clamps_rounding_negatives() {
        let m = HermitianMatrix::from_real_diagonal(&[1.0, -1e-14]).unwrap();
        let s = hermitian_sqrt(&m).unwrap();
        assert_eq!(s.get(1, 1).re, 0.0);
    }

    #[test]
    fn solve_trivial_systems() {
        let b = ComplexVector::from_vec(vec![C64::new(1.0, 2.0), C64::new(-3.0, 0.5)]);
        let x = solve_hermitian(&HermitianMatrix::identity(2), &b).unwrap();
        assert!((x - &b).norm() < 1e-15);
        let m = HermitianMatrix::from_real_diagonal(&[2.0, 4.0]).unwrap();
        let b = ComplexVector::from_vec(vec![C64::new(2.0, 0.0), C64::new(4.0, 0.0)]);
        let x = solve_hermitian(&m, &b).unwrap();
        assert!((x[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((x[1] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn solve_random_pd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = random_pd(17, &mut rng);
        let b = ComplexVector::from_fn(17, |_, _| C64::new(rng.random(), rng.random()));
        let x = solve_hermitian(&m, &b).unwrap();
        let resid = (m.as_matrix() * &x - &b).norm();
        assert!(resid <= 1e-9 * m.max_abs() * x.norm());
    }

    #[test]
    fn solve_rejects_indefinite() {
        let m = HermitianMatrix::from_real_diagonal(&[1.0, -1.0]).unwrap();
        let b = ComplexVector::from_element(2, C64::new(1.0, 0.0));
        assert!(matches!(
            solve_hermitian(&m, &b),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn eig_round_trip_and_trace(seed in any::<u64>(), n in 1usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_hermitian(n, &mut rng);
            let eig = hermitian_eig(&m).unwrap();
            prop_assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(unitary_defect(&eig.vectors) <= 1e-10);
            let back = eig.reconstruct().unwrap();
            let scale = m.max_abs().max(f64::MIN_POSITIVE);
            prop_assert!(max_abs(&(back.as_matrix() - m.as_matrix())) <= 1e-9 * scale);
            let sum: f64 = eig.values.iter().sum();
            let trace = m.trace();
            let abs_sum: f64 = eig.values.iter().map(|v| v.abs()).sum();
            prop_assert!((sum - trace).abs() <= 1e-10 * abs_sum.max(1e-300));
        }

        #[test]
        fn sqrt_squares_back_and_commutes(seed in any::<u64>(), n in 1usize..18) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_pd(n, &mut rng);
            let s = hermitian_sqrt(&m).unwrap();
            let scale = m.max_abs();
            let sq = s.as_matrix() * s.as_matrix();
            prop_assert!(max_abs(&(sq - m.as_matrix())) <= 1e-9 * scale);
            let comm = s.as_matrix() * m.as_matrix() - m.as_matrix() * s.as_matrix();
            prop_assert!(max_abs(&comm) <= 1e-9 * scale * scale);
            let eig = hermitian_eig(&s).unwrap();
            prop_assert!(eig.min_value() >= -1e-12 * eig.max_value());
        }
    }
}
