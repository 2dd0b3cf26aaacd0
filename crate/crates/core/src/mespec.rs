//! Toeplitz reconstruction with the Maximum Entropy spectrum of a sample
//! matrix.
//!
//! The normalized first column of `R̂⁻¹` is read as a prediction polynomial
//! `W(z) = Σ w_k z^k`. Its zeros inside the unit disk are reflected to
//! `1/conj(z)`, which leaves `|W|` on the unit circle unchanged, and the
//! resulting minimum-phase polynomial is the first column of a Toeplitz
//! inverse given by the Gohberg–Semencul formula.

use crate::error::{Error, Result};
use crate::numerics::{
    cholesky, eval_poly, hermitian_eig, hermitian_inverse, poly_roots, reconstruct_with,
    solve_hermitian, ComplexMatrix, ComplexVector, HermitianMatrix, C64,
};
use crate::toeplitzify::{redundancy_average, ToeplitzLags};
use crate::toiep::TargetSpectrum;

/// Half-width of the annulus around the unit circle treated as degenerate.
pub const BOUNDARY_EPS: f64 = 1e-8;

/// Relative tolerance on the Toeplitz structure of the dense inverse.
const TOEPLITZ_TOL: f64 = 1e-7;

/// Polynomial in ascending powers with its zeros classified against the
/// unit circle.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionPolynomial {
    pub coeffs: Vec<C64>,
    /// Zeros with `|z| < 1 − ε`.
    pub roots_inside: Vec<C64>,
    /// All remaining zeros.
    pub roots_outside: Vec<C64>,
    pub epsilon: f64,
    /// `e₁ᵀ R̂⁻¹ e₁` of the matrix the polynomial came from (1 if unknown).
    pub normalizer: f64,
}

impl PredictionPolynomial {
    pub fn from_coeffs(coeffs: Vec<C64>, normalizer: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidInput("empty polynomial".into()));
        }
        let roots = if coeffs.len() < 2 {
            Vec::new()
        } else {
            poly_roots(&coeffs)?
        };
        let (roots_inside, roots_outside) =
            roots.into_iter().partition(|z| z.norm() < 1.0 - BOUNDARY_EPS);
        Ok(Self {
            coeffs,
            roots_inside,
            roots_outside,
            epsilon: BOUNDARY_EPS,
            normalizer,
        })
    }

    pub fn degree_bound(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn inside_count(&self) -> usize {
        self.roots_inside.len()
    }

    /// Zeros within `ε` of the unit circle.
    pub fn boundary_roots(&self) -> Vec<C64> {
        self.roots_outside
            .iter()
            .copied()
            .filter(|z| (z.norm() - 1.0).abs() <= self.epsilon)
            .collect()
    }

    pub fn has_boundary_root(&self) -> bool {
        !self.boundary_roots().is_empty()
    }

    pub fn eval(&self, z: C64) -> C64 {
        eval_poly(&self.coeffs, z)
    }

    /// `|W(e^{iω})|`.
    pub fn magnitude(&self, omega: f64) -> f64 {
        self.eval(C64::from_polar(1.0, omega)).norm()
    }

    /// Maximum Entropy power spectrum `1 / (r |W(e^{iω})|²)` with
    /// `r = e₁ᵀ R̂⁻¹ e₁`.
    pub fn me_power(&self, omega: f64) -> f64 {
        1.0 / (self.normalizer * self.magnitude(omega).powi(2))
    }
}

/// `w = R̂⁻¹e₁ / (e₁ᵀR̂⁻¹e₁)`, so `w₀ = 1`.
pub fn prediction_vector(sample: &HermitianMatrix) -> Result<PredictionPolynomial> {
    let n = sample.dim();
    let mut e1 = ComplexVector::zeros(n);
    e1[0] = C64::new(1.0, 0.0);
    let x = solve_hermitian(sample, &e1)?;
    let r = x[0].re;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::NotPositiveDefinite(format!("e₁ᵀR̂⁻¹e₁ = {r}")));
    }
    let mut w: Vec<C64> = x.iter().map(|z| z / r).collect();
    w[0] = C64::new(1.0, 0.0);
    PredictionPolynomial::from_coeffs(w, r)
}

/// Divides by `(z − a)` via Horner deflation from the top coefficient.
fn deflate(coeffs: &[C64], a: C64) -> Vec<C64> {
    let d = coeffs.len() - 1;
    let mut q = vec![C64::new(0.0, 0.0); d];
    let mut acc = coeffs[d];
    for k in (0..d).rev() {
        q[k] = acc;
        acc = coeffs[k] + a * acc;
    }
    q
}

/// Multiplies by `(1 − conj(a) z)`.
fn times_reflected(coeffs: &[C64], a: C64) -> Vec<C64> {
    let ca = a.conj();
    let mut out = vec![C64::new(0.0, 0.0); coeffs.len() + 1];
    for (k, &c) in coeffs.iter().enumerate() {
        out[k] += c;
        out[k + 1] -= ca * c;
    }
    out
}

/// Reflects every zero inside the unit disk to `1/conj(z)` and rotates the
/// result so that `P(0)` is real and positive.
///
/// `|P(e^{iω})| = |W(e^{iω})|` on the unit circle and, for `W(0) = 1`,
/// `P(0) = Π |z_n|⁻¹`.
pub fn minimum_phase_flip(w: &PredictionPolynomial) -> Result<PredictionPolynomial> {
    let boundary = w.boundary_roots();
    if !boundary.is_empty() {
        return Err(Error::DegenerateSpectrum(format!(
            "{} zero(s) within {:e} of the unit circle",
            boundary.len(),
            w.epsilon
        )));
    }
    if w.roots_inside.is_empty() {
        return Ok(w.clone());
    }
    let degree = w.roots_inside.len() + w.roots_outside.len();
    let mut coeffs: Vec<C64> = w.coeffs[..=degree].to_vec();
    let mut inside = w.roots_inside.clone();
    inside.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    for &z in &inside {
        coeffs = times_reflected(&deflate(&coeffs, z), z);
    }
    coeffs.resize(w.coeffs.len(), C64::new(0.0, 0.0));
    let p0 = coeffs[0];
    if p0.norm() == 0.0 {
        return Err(Error::NumericalFailure("flipped polynomial vanishes at 0".into()));
    }
    let rot = p0.conj() / p0.norm();
    for c in &mut coeffs {
        *c *= rot;
    }
    coeffs[0] = C64::new(coeffs[0].re, 0.0);

    let mut roots_outside = w.roots_outside.clone();
    roots_outside.extend(inside.iter().map(|z| C64::new(1.0, 0.0) / z.conj()));
    Ok(PredictionPolynomial {
        coeffs,
        roots_inside: Vec::new(),
        roots_outside,
        epsilon: w.epsilon,
        normalizer: w.normalizer,
    })
}

fn lower_toeplitz(col: &[C64]) -> ComplexMatrix {
    let n = col.len();
    ComplexMatrix::from_fn(n, n, |i, j| if i >= j { col[i - j] } else { C64::new(0.0, 0.0) })
}

/// Gohberg–Semencul inverse `(1/p₀)(L Lᴴ − M Mᴴ)` of the Toeplitz matrix
/// whose inverse has first column `p`.
///
/// `L` is lower-triangular Toeplitz with first column `(p₀, …, p_{n−1})` and
/// `M` lower-triangular Toeplitz with first column
/// `(0, conj(p_{n−1}), …, conj(p₁))`.
pub fn gohberg_semencul_inverse(p: &PredictionPolynomial) -> Result<HermitianMatrix> {
    if !p.roots_inside.is_empty() {
        return Err(Error::InvalidInput(format!(
            "polynomial has {} zero(s) inside the unit disk",
            p.roots_inside.len()
        )));
    }
    let p0 = p.coeffs[0];
    if !(p0.re > 0.0) || p0.im.abs() > 1e-12 * p0.re {
        return Err(Error::InvalidInput(format!("leading value {p0} is not real positive")));
    }
    let n = p.coeffs.len();
    let l = lower_toeplitz(&p.coeffs);
    let mut mcol = vec![C64::new(0.0, 0.0); n];
    for k in 1..n {
        mcol[k] = p.coeffs[n - k].conj();
    }
    let m = lower_toeplitz(&mcol);
    let inv = (&l * l.adjoint() - &m * m.adjoint()) / C64::new(p0.re, 0.0);
    let inv = HermitianMatrix::from_matrix(inv)?;
    if cholesky(&inv).is_err() {
        let eig = hermitian_eig(&inv)?;
        return Err(Error::NumericalFailure(format!(
            "Gohberg–Semencul inverse is not positive definite (eigenvalues {:e} .. {:e})",
            eig.min_value(),
            eig.max_value()
        )));
    }
    Ok(inv)
}

/// Intermediate results of [`reconstruct_toeplitz_detailed`].
#[derive(Debug, Clone)]
pub struct MeReconstruction {
    pub matrix: HermitianMatrix,
    pub lags: ToeplitzLags,
    pub prediction: PredictionPolynomial,
    /// Flipped polynomial scaled to the first column of the output inverse.
    pub inverse_column: PredictionPolynomial,
    /// Largest deviation from Toeplitz structure before averaging, relative.
    pub toeplitz_deviation: f64,
}

/// Largest entry deviation from the diagonal means, relative to `max|m|`.
fn toeplitz_deviation(m: &HermitianMatrix) -> f64 {
    let avg = redundancy_average(m);
    let n = m.dim();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m.get(i, j) - avg.lag(j - i)).norm());
        }
    }
    dev / m.max_abs()
}

/// Hermitian Toeplitz matrix with the same Maximum Entropy spectrum as the
/// positive definite `sample`.
pub fn reconstruct_toeplitz(sample: &HermitianMatrix) -> Result<HermitianMatrix> {
    Ok(reconstruct_toeplitz_detailed(sample)?.matrix)
}

pub fn reconstruct_toeplitz_detailed(sample: &HermitianMatrix) -> Result<MeReconstruction> {
    let prediction = prediction_vector(sample)?;
    let flipped = minimum_phase_flip(&prediction)?;
    // scale so that p₀ / |P|² equals 1 / (r |W|²)
    let alpha = prediction.normalizer * flipped.coeffs[0].re;
    let inverse_column = PredictionPolynomial {
        coeffs: flipped.coeffs.iter().map(|c| c * alpha).collect(),
        roots_inside: Vec::new(),
        roots_outside: flipped.roots_outside.clone(),
        epsilon: flipped.epsilon,
        normalizer: 1.0,
    };
    let inv = gohberg_semencul_inverse(&inverse_column)?;
    let dense = hermitian_inverse(&inv)?;
    let deviation = toeplitz_deviation(&dense);
    if !(deviation <= TOEPLITZ_TOL) {
        return Err(Error::NumericalFailure(format!(
            "reconstructed inverse deviates from Toeplitz structure by {deviation:e}"
        )));
    }
    let lags = redundancy_average(&dense);
    let matrix = lags.to_matrix()?;
    Ok(MeReconstruction {
        matrix,
        lags,
        prediction,
        inverse_column,
        toeplitz_deviation: deviation,
    })
}

/// `U diag(new) Uᴴ` with `U` the eigenvectors of `sample`, both spectra
/// paired in descending order.
pub fn replace_eigenvalues(sample: &HermitianMatrix, new_spectrum: &TargetSpectrum) -> Result<HermitianMatrix> {
    if new_spectrum.dim() != sample.dim() {
        return Err(Error::InvalidInput(format!(
            "spectrum of length {} for dimension {}",
            new_spectrum.dim(),
            sample.dim()
        )));
    }
    let eig = hermitian_eig(sample)?;
    reconstruct_with(&eig.vectors, new_spectrum.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::max_abs;
    use crate::sampling::{draw_snapshots, sample_covariance};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn grid(m: usize) -> impl Iterator<Item = f64> {
        (0..m).map(move |k| 2.0 * PI * k as f64 / m as f64)
    }

    /// p.d. Toeplitz matrix from a random positive spectral density.
    fn random_pd_toeplitz(n: usize, seed: u64) -> ToeplitzLags {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms: Vec<(f64, f64)> = (0..4)
            .map(|_| (rng.random_range(0.1..2.0), rng.random_range(-PI..PI)))
            .collect();
        let floor = rng.random_range(0.01..0.3);
        let lags = (1..n)
            .map(|k| terms.iter().map(|&(p, f)| C64::from_polar(p, -f * k as f64)).sum())
            .collect();
        let t0 = terms.iter().map(|t| t.0).sum::<f64>() + floor;
        ToeplitzLags::new(t0, lags)
    }

    fn random_sample(n: usize, seed: u64) -> HermitianMatrix {
        let cov = random_pd_toeplitz(n, seed).to_matrix().unwrap();
        sample_covariance(&draw_snapshots(&cov, 3 * n, seed ^ 7).unwrap())
            .unwrap()
            .matrix
    }

    #[test]
    fn identity_prediction_is_trivial() {
        let w = prediction_vector(&HermitianMatrix::identity(4)).unwrap();
        assert_eq!(w.coeffs[0], c(1.0));
        assert!(w.coeffs[1..].iter().all(|z| z.norm() == 0.0));
        assert_eq!(w.inside_count(), 0);
        assert!(w.roots_outside.is_empty());
        assert_eq!(reconstruct_toeplitz(&HermitianMatrix::identity(4)).unwrap(), HermitianMatrix::identity(4));
    }

    #[test]
    fn toeplitz_inputs_are_minimum_phase() {
        for seed in 0..100 {
            let n = 2 + (seed as usize % 11);
            let t = random_pd_toeplitz(n, seed).to_matrix().unwrap();
            let w = prediction_vector(&t).unwrap();
            assert_eq!(w.inside_count(), 0, "seed {seed}");
        }
    }

    #[test]
    fn flip_hand_case() {
        let w = PredictionPolynomial::from_coeffs(vec![c(1.0), c(-2.0)], 1.0).unwrap();
        assert_eq!(w.inside_count(), 1);
        let p = minimum_phase_flip(&w).unwrap();
        assert!((p.coeffs[0] - c(2.0)).norm() < 1e-14);
        assert!((p.coeffs[1] - c(-1.0)).norm() < 1e-14);
        for om in grid(64) {
            assert!((p.magnitude(om) - w.magnitude(om)).abs() < 1e-14);
        }
    }

    #[test]
    fn flip_without_inside_roots_is_identity() {
        let w = PredictionPolynomial::from_coeffs(vec![c(1.0), c(-0.5)], 1.0).unwrap();
        assert_eq!(minimum_phase_flip(&w).unwrap(), w);
    }

    #[test]
    fn boundary_root_is_degenerate() {
        let w = PredictionPolynomial::from_coeffs(vec![c(1.0), C64::new(0.0, -1.0)], 1.0).unwrap();
        assert!(w.has_boundary_root());
        assert!(matches!(minimum_phase_flip(&w), Err(Error::DegenerateSpectrum(_))));
    }

    #[test]
    fn gohberg_semencul_hand_case() {
        let p = PredictionPolynomial::from_coeffs(vec![c(2.0), c(-1.0)], 1.0).unwrap();
        let inv = gohberg_semencul_inverse(&p).unwrap();
        let want = [[2.0, -1.0], [-1.0, 2.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((inv.get(i, j) - c(want[i][j])).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn gohberg_semencul_white_case() {
        let mut coeffs = vec![c(0.0); 5];
        coeffs[0] = c(1.0);
        let p = PredictionPolynomial::from_coeffs(coeffs, 1.0).unwrap();
        assert_eq!(gohberg_semencul_inverse(&p).unwrap(), HermitianMatrix::identity(5));
    }

    #[test]
    fn gohberg_semencul_rejects_bad_inputs() {
        let p = PredictionPolynomial::from_coeffs(vec![c(1.0), c(-2.0)], 1.0).unwrap();
        assert!(gohberg_semencul_inverse(&p).is_err());
        let p = PredictionPolynomial::from_coeffs(vec![c(-1.0), c(0.2)], 1.0).unwrap();
        assert!(gohberg_semencul_inverse(&p).is_err());
    }

    #[test]
    fn gohberg_semencul_first_column_is_prediction() {
        for seed in 0..20 {
            let t = random_pd_toeplitz(9, seed).to_matrix().unwrap();
            let w = prediction_vector(&t).unwrap();
            let scaled = PredictionPolynomial {
                coeffs: w.coeffs.iter().map(|z| z * w.normalizer).collect(),
                normalizer: 1.0,
                ..w.clone()
            };
            let inv = gohberg_semencul_inverse(&scaled).unwrap();
            let mut e1 = ComplexVector::zeros(9);
            e1[0] = c(1.0);
            let x = solve_hermitian(&t, &e1).unwrap();
            for k in 0..9 {
                assert!((inv.get(k, 0) - x[k]).norm() < 1e-9 * x[0].norm());
            }
            let prod = inv.as_matrix() * t.as_matrix();
            let eye = ComplexMatrix::identity(9, 9);
            assert!(max_abs(&(prod - eye)) < 1e-8);
        }
    }

    #[test]
    fn sample_matrices_usually_have_inside_roots() {
        let hits = (0..20)
            .filter(|&s| prediction_vector(&random_sample(17, s)).unwrap().inside_count() > 0)
            .count();
        assert!(hits > 10, "{hits} of 20");
    }

    #[test]
    fn reconstruction_preserves_me_spectrum() {
        for seed in 0..30 {
            let r = random_sample(12, seed);
            let out = reconstruct_toeplitz_detailed(&r).unwrap();
            assert!(cholesky(&out.matrix).is_ok());
            let w_out = prediction_vector(&out.matrix).unwrap();
            assert_eq!(w_out.inside_count(), 0);
            for om in grid(512) {
                let a = out.prediction.me_power(om);
                let b = w_out.me_power(om);
                assert!((a - b).abs() <= 1e-6 * a, "seed {seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn replace_eigenvalues_cases() {
        let r = random_sample(6, 3);
        let eig = hermitian_eig(&r).unwrap();
        let same = replace_eigenvalues(&r, &TargetSpectrum::new(eig.values.clone()).unwrap()).unwrap();
        assert!(max_abs(&(same.as_matrix() - r.as_matrix())) < 1e-10 * r.max_abs());
        let two = replace_eigenvalues(&HermitianMatrix::identity(3), &TargetSpectrum::new(vec![2.0; 3]).unwrap()).unwrap();
        assert!(max_abs(&(two.as_matrix() - ComplexMatrix::identity(3, 3) * c(2.0))) < 1e-15);
        let new = TargetSpectrum::new(vec![6.0, 5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
        let out = replace_eigenvalues(&r, &new).unwrap();
        let got = hermitian_eig(&out).unwrap().values;
        for (a, b) in got.iter().zip(new.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(replace_eigenvalues(&r, &TargetSpectrum::new(vec![1.0]).unwrap()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn flip_preserves_magnitude(seed in any::<u64>(), degree in 1usize..16) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut coeffs: Vec<C64> = (0..=degree)
                .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            coeffs[0] = c(1.0);
            let w = PredictionPolynomial::from_coeffs(coeffs, 1.0).unwrap();
            prop_assume!(!w.has_boundary_root());
            let p = minimum_phase_flip(&w).unwrap();
            let beta: f64 = w.roots_inside.iter().map(|z| 1.0 / z.norm()).product();
            prop_assert!(p.coeffs[0].im == 0.0);
            prop_assert!(p.coeffs[0].re >= 1.0 - 1e-12);
            prop_assert!((p.coeffs[0].re - beta).abs() <= 1e-8 * beta);
            let check = PredictionPolynomial::from_coeffs(p.coeffs.clone(), 1.0).unwrap();
            prop_assert_eq!(check.inside_count(), 0);
            for om in grid(512) {
                let a = w.magnitude(om);
                prop_assert!((p.magnitude(om) - a).abs() <= 1e-8 * a.max(1e-300));
            }
        }

        #[test]
        fn toeplitz_inputs_are_fixed_points(seed in any::<u64>(), n in 2usize..=17) {
            let t = random_pd_toeplitz(n, seed).to_matrix().unwrap();
            let out = reconstruct_toeplitz(&t).unwrap();
            prop_assert!(max_abs(&(out.as_matrix() - t.as_matrix())) <= 1e-8 * t.max_abs().max(1.0));
            let again = reconstruct_toeplitz(&out).unwrap();
            prop_assert!(max_abs(&(again.as_matrix() - out.as_matrix())) <= 1e-8 * t.max_abs().max(1.0));
        }

        #[test]
        fn reconstruction_is_positive_definite(seed in any::<u64>(), n in 2usize..=17) {
            let r = random_sample(n, seed);
            let out = reconstruct_toeplitz(&r).unwrap();
            prop_assert!(cholesky(&out).is_ok());
            prop_assert!(hermitian_eig(&out).unwrap().min_value() > 0.0);
        }
    }
}
