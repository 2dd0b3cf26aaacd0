//! Redundancy averaging, diagonal-loading rectification and the sample-size
//! advisor.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::{hermitian_eig, HermitianMatrix, C64};

/// Lag sequence of a Hermitian Toeplitz matrix.
///
/// The induced matrix has `t0` on the diagonal and lag `t_k` on the k-th
/// superdiagonal, i.e. `M[i][i+k] = t_k` and `M[i+k][i] = conj(t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzLags {
    t0: f64,
    lags: Vec<C64>,
}

impl ToeplitzLags {
    /// `lags` holds `t_1 .. t_{n-1}`.
    pub fn new(t0: f64, lags: Vec<C64>) -> Self {
        Self { t0, lags }
    }

    pub fn from_polar(t0: f64, moduli: &[f64], phases: &[f64]) -> Result<Self> {
        if moduli.len() != phases.len() {
            return Err(Error::InvalidInput(format!(
                "{} moduli but {} phases",
                moduli.len(),
                phases.len()
            )));
        }
        if moduli.iter().any(|&m| !(m >= 0.0)) {
            return Err(Error::InvalidInput("lag moduli must be non-negative".into()));
        }
        let lags = moduli
            .iter()
            .zip(phases)
            .map(|(&m, &p)| C64::from_polar(m, p))
            .collect();
        Ok(Self { t0, lags })
    }

    pub fn dim(&self) -> usize {
        self.lags.len() + 1
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// `t_k` for `k >= 1`.
    pub fn lags(&self) -> &[C64] {
        &self.lags
    }

    /// `t_k` for any `k` in `0..n`.
    pub fn lag(&self, k: usize) -> C64 {
        if k == 0 {
            C64::new(self.t0, 0.0)
        } else {
            self.lags[k - 1]
        }
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.lags.iter().map(|z| z.norm()).collect()
    }

    /// Lag phases in `(-π, π]`.
    pub fn phases(&self) -> Vec<f64> {
        self.lags.iter().map(|z| wrap_phase(z.arg())).collect()
    }

    pub fn trace(&self) -> f64 {
        self.dim() as f64 * self.t0
    }

    pub fn to_matrix(&self) -> Result<HermitianMatrix> {
        HermitianMatrix::from_upper_fn(self.dim(), |i, j| self.lag(j - i))
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    if p <= -PI {
        p += 2.0 * PI;
    }
    p
}

/// Diagonal-loaded and trace-renormalized Toeplitz estimate.
#[derive(Debug, Clone)]
pub struct RectifiedEstimate {
    pub matrix: HermitianMatrix,
    pub lags: ToeplitzLags,
    pub loading: f64,
    pub scale: f64,
}

/// Replaces every diagonal of `r` by its mean.
///
/// `t_k` is the mean of the superdiagonal `r[j][j+k]`; the subdiagonals are
/// the conjugates by Hermitian symmetry. The mean is accumulated as an offset
/// from the first element so that constant diagonals are reproduced exactly.
pub fn redundancy_average(r: &HermitianMatrix) -> ToeplitzLags {
    let n = r.dim();
    let diag_mean = |k: usize| -> C64 {
        let first = r.get(0, k);
        let offset: C64 = (1..n - k).map(|j| r.get(j, j + k) - first).sum();
        first + offset / (n - k) as f64
    };
    let t0 = diag_mean(0).re;
    let lags = (1..n).map(diag_mean).collect();
    ToeplitzLags { t0, lags }
}

/// `scale · (ra + loading · I)` with `loading = λ* + max(0, −λ_min(ra))` and
/// `scale = tr(ra) / (tr(ra) + n · loading)`, so the trace is unchanged.
pub fn rectify_loading(ra: &ToeplitzLags, lambda_star: f64) -> Result<RectifiedEstimate> {
    if !(lambda_star > 0.0 && lambda_star.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "target minimum eigenvalue must be positive, got {lambda_star}"
        )));
    }
    let trace = ra.trace();
    if !(trace > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "redundancy-averaged trace is {trace}"
        )));
    }
    let n = ra.dim() as f64;
    let lambda_min = hermitian_eig(&ra.to_matrix()?)?.min_value();
    let loading = lambda_star + (-lambda_min).max(0.0);
    let scale = trace / (trace + n * loading);

    let lags = ToeplitzLags {
        t0: scale * (ra.t0 + loading),
        lags: ra.lags.iter().map(|&z| z * scale).collect(),
    };
    let matrix = lags.to_matrix()?;
    Ok(RectifiedEstimate {
        matrix,
        lags,
        loading,
        scale,
    })
}

/// Smallest `T` with `n / (T λ_min²) ≤ 1`, i.e. `ceil(n / λ_min²)`.
pub fn min_sample_size(n: usize, lambda_min: f64) -> Result<u64> {
    if !(lambda_min > 0.0 && lambda_min.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "minimum eigenvalue must be positive, got {lambda_min}"
        )));
    }
    let raw = n as f64 / (lambda_min * lambda_min);
    // absorb representation error of decimal inputs such as 1e-4
    let nearest = raw.round();
    let value = if (raw - nearest).abs() <= 1e-9 * raw { nearest } else { raw.ceil() };
    if value > u64::MAX as f64 {
        return Err(Error::InvalidInput("sample size overflows u64".into()));
    }
    Ok(value as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{max_abs, ComplexMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> HermitianMatrix {
        HermitianMatrix::from_upper_fn(n, |i, j| {
            if i == j {
                C64::new(rng.random_range(0.0..3.0), 0.0)
            } else {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            }
        })
        .unwrap()
    }

    #[test]
    fn hand_diagonal_average() {
        let mut m = ComplexMatrix::zeros(2, 2);
        m[(0, 0)] = C64::new(2.0, 0.0);
        m[(0, 1)] = C64::new(1.0, 1.0);
        m[(1, 0)] = C64::new(1.0, -1.0);
        m[(1, 1)] = C64::new(4.0, 0.0);
        let lags = redundancy_average(&HermitianMatrix::from_matrix(m).unwrap());
        assert_eq!(lags.t0(), 3.0);
        assert_eq!(lags.lag(1), C64::new(1.0, 1.0));
        let induced = lags.to_matrix().unwrap();
        assert_eq!(induced.get(0, 0).re, 3.0);
        assert_eq!(induced.get(1, 1).re, 3.0);
        assert_eq!(induced.get(0, 1), C64::new(1.0, 1.0));
        assert_eq!(induced.get(1, 0), C64::new(1.0, -1.0));
    }

    #[test]
    fn toeplitz_input_is_fixed_point() {
        let lags = ToeplitzLags::new(
            2.0,
            vec![C64::new(0.3, -0.7), C64::new(0.1, 0.2), C64::new(-0.05, 0.0)],
        );
        let m = lags.to_matrix().unwrap();
        let again = redundancy_average(&m);
        assert_eq!(again, lags);
        assert_eq!(again.to_matrix().unwrap(), m);
    }

    #[test]
    fn polar_round_trip() {
        let lags = ToeplitzLags::from_polar(1.0, &[0.5, 0.0, 2.0], &[PI, 0.3, -1.0]).unwrap();
        let m = lags.moduli();
        let p = lags.phases();
        assert!((m[0] - 0.5).abs() < 1e-15 && (m[2] - 2.0).abs() < 1e-15);
        assert!((p[0] - PI).abs() < 1e-15);
        assert!((p[2] + 1.0).abs() < 1e-15);
        assert!(ToeplitzLags::from_polar(1.0, &[-0.1], &[0.0]).is_err());
    }

    #[test]
    fn wrap_phase_range() {
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(0.25) - 0.25).abs() < 1e-15);
        assert!((wrap_phase(-0.25 - 4.0 * PI) + 0.25).abs() < 1e-12);
    }

    #[test]
    fn loading_on_pd_input() {
        let lags = ToeplitzLags::new(1.0, vec![C64::new(0.2, 0.1)]);
        let rect = rectify_loading(&lags, 1e-3).unwrap();
        assert_eq!(rect.loading, 1e-3);
        assert!((rect.scale - 2.0 / (2.0 + 2e-3)).abs() < 1e-15);
        assert!((rect.matrix.trace() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn loading_on_indefinite_input() {
        // eigenvalues t0 ± |t1| = 2.24474, -0.24474
        let lags = ToeplitzLags::new(1.0, vec![C64::new(1.24474, 0.0)]);
        let rect = rectify_loading(&lags, 0.000117).unwrap();
        assert!((rect.loading - 0.244857).abs() < 1e-12);
        let eig = hermitian_eig(&rect.matrix).unwrap();
        assert!((eig.min_value() - rect.scale * 0.000117).abs() < 1e-12);
        assert!((rect.matrix.trace() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn loading_identity_is_identity() {
        let lags = ToeplitzLags::new(1.0, vec![C64::new(0.0, 0.0); 4]);
        let rect = rectify_loading(&lags, 0.3).unwrap();
        assert!(max_abs(&(rect.matrix.as_matrix() - ComplexMatrix::identity(5, 5))) < 1e-15);
    }

    #[test]
    fn loading_rejects_bad_inputs() {
        let lags = ToeplitzLags::new(0.0, vec![C64::new(0.1, 0.0)]);
        assert!(matches!(
            rectify_loading(&lags, 0.1),
            Err(Error::DegenerateInput(_))
        ));
        let lags = ToeplitzLags::new(1.0, vec![]);
        assert!(rectify_loading(&lags, 0.0).is_err());
    }

    #[test]
    fn sample_size_advisor() {
        assert_eq!(min_sample_size(17, 1e-4).unwrap(), 1_700_000_000);
        assert_eq!(min_sample_size(17, 1e-2).unwrap(), 170_000);
        assert_eq!(min_sample_size(1, 1.0).unwrap(), 1);
        assert_eq!(min_sample_size(3, 2.0).unwrap(), 1);
        assert!(min_sample_size(17, 0.0).is_err());
        assert!(min_sample_size(17, -1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn averaging_is_idempotent_and_trace_preserving(seed in any::<u64>(), n in 1usize..24) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_hermitian(n, &mut rng);
            let once = redundancy_average(&r);
            let induced = once.to_matrix().unwrap();
            let twice = redundancy_average(&induced);
            prop_assert_eq!(&twice, &once);
            let tr = r.trace();
            prop_assert!((induced.trace() - tr).abs() <= 4.0 * f64::EPSILON * n as f64 * tr.abs().max(1.0));
            for i in 1..n {
                for j in 1..n {
                    prop_assert_eq!(induced.get(i, j), induced.get(i - 1, j - 1));
                }
            }
        }

        #[test]
        fn rectified_is_pd_and_trace_preserving(seed in any::<u64>(), n in 2usize..16, lstar in 1e-6f64..1e-1) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ra = redundancy_average(&random_hermitian(n, &mut rng));
            let rect = rectify_loading(&ra, lstar).unwrap();
            let eig = hermitian_eig(&rect.matrix).unwrap();
            prop_assert!(eig.min_value() > 0.0);
            prop_assert!((rect.matrix.trace() - ra.trace()).abs() <= 1e-10 * ra.trace());
        }
    }
}
