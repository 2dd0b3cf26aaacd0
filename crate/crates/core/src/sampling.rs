//! Seeded circular complex Gaussian snapshots and the sample covariance.
//!
//! Every random stream is a ChaCha8 generator keyed by a 64-bit seed.
//! Monte Carlo trials use [`derive_seed`] so trial `k` of a run always sees
//! the same stream regardless of how trials are scheduled across threads.
//! Gaussian variates come from Box–Muller on the generator's uniform output.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{hermitian_sqrt, ComplexMatrix, HermitianMatrix, C64};

/// Snapshots are generated and accumulated in column blocks of this width so
/// the materialized and streaming paths perform identical arithmetic.
const BLOCK: usize = 1024;

/// `n × t` snapshot matrix; column `k` is the snapshot `X_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub data: ComplexMatrix,
    pub seed: u64,
}

impl SnapshotSet {
    pub fn new(data: ComplexMatrix, seed: u64) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(Error::InvalidInput("snapshot set must be non-empty".into()));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("snapshot set has non-finite entries".into()));
        }
        Ok(Self { data, seed })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }
}

/// Unstructured maximum-likelihood covariance estimate `(1/t) Σ X X^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    pub matrix: HermitianMatrix,
    pub t: usize,
}

/// Mixes a run seed and a trial index into an independent stream seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream of `CN(0, 1)` variates: real and imaginary parts are independent
/// `N(0, 1/2)`.
pub struct ComplexGaussian {
    rng: ChaCha8Rng,
}

impl ComplexGaussian {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform on `(0, 1]` with 53 random bits.
    fn uniform(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11;
        (bits + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn sample(&mut self) -> C64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt() * FRAC_1_SQRT_2;
        let angle = 2.0 * PI * u2;
        C64::new(radius * angle.cos(), radius * angle.sin())
    }

    fn fill(&mut self, m: &mut ComplexMatrix) {
        // column-major order: one snapshot after another
        for z in m.iter_mut() {
            *z = self.sample();
        }
    }
}

/// Colors white snapshots with a fixed covariance square root. Reuse one
/// source across Monte Carlo trials to factor the covariance once.
#[derive(Debug, Clone)]
pub struct SnapshotSource {
    root: HermitianMatrix,
}

impl SnapshotSource {
    pub fn new(cov: &HermitianMatrix) -> Result<Self> {
        Ok(Self {
            root: hermitian_sqrt(cov)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.root.dim()
    }

    fn for_each_block(&self, t: usize, seed: u64, mut f: impl FnMut(usize, ComplexMatrix)) {
        let n = self.dim();
        let mut gen = ComplexGaussian::new(seed);
        let mut start = 0;
        while start < t {
            let width = BLOCK.min(t - start);
            let mut white = ComplexMatrix::zeros(n, width);
            gen.fill(&mut white);
            f(start, self.root.as_matrix() * white);
            start += width;
        }
    }

    pub fn draw(&self, t: usize, seed: u64) -> Result<SnapshotSet> {
        check_count(t)?;
        let mut data = ComplexMatrix::zeros(self.dim(), t);
        self.for_each_block(t, seed, |start, block| {
            data.columns_mut(start, block.ncols()).copy_from(&block);
        });
        SnapshotSet::new(data, seed)
    }

    /// Same result as `sample_covariance(&self.draw(t, seed))`, bit for bit,
    /// without holding all snapshots in memory.
    pub fn sample_covariance(&self, t: usize, seed: u64) -> Result<SampleCovariance> {
        check_count(t)?;
        let n = self.dim();
        let mut acc = ComplexMatrix::zeros(n, n);
        self.for_each_block(t, seed, |_, block| accumulate(&mut acc, &block));
        finish(acc, t)
    }
}

fn check_count(t: usize) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidInput("snapshot count must be at least 1".into()));
    }
    Ok(())
}

fn accumulate(acc: &mut ComplexMatrix, block: &ComplexMatrix) {
    *acc += block * block.adjoint();
}

fn finish(acc: ComplexMatrix, t: usize) -> Result<SampleCovariance> {
    let matrix = HermitianMatrix::from_matrix(acc.map(|z| z / t as f64))?;
    Ok(SampleCovariance { matrix, t })
}

/// Draws `t` snapshots `cov^{1/2} ξ` with `ξ ~ CN(0, I)`.
pub fn draw_snapshots(cov: &HermitianMatrix, t: usize, seed: u64) -> Result<SnapshotSet> {
    SnapshotSource::new(cov)?.draw(t, seed)
}

/// `(1/t) Σ_k X_k X_k^H`, symmetrized.
pub fn sample_covariance(x: &SnapshotSet) -> Result<SampleCovariance> {
    let n = x.dim();
    let t = x.len();
    let mut acc = ComplexMatrix::zeros(n, n);
    let mut start = 0;
    while start < t {
        let width = BLOCK.min(t - start);
        accumulate(&mut acc, &x.data.columns(start, width).into_owned());
        start += width;
    }
    finish(acc, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{hermitian_eig, max_abs};
    use crate::rmt::mp_support;

    #[test]
    fn zero_covariance_gives_zero_snapshots() {
        let zero = HermitianMatrix::from_matrix(ComplexMatrix::zeros(3, 3)).unwrap();
        let x = draw_snapshots(&zero, 10, 1).unwrap();
        assert!(x.data.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn single_snapshot_is_rank_one() {
        let data = ComplexMatrix::from_column_slice(
            3,
            1,
            &[C64::new(1.0, 0.5), C64::new(-0.2, 1.0), C64::new(0.0, 2.0)],
        );
        let s = sample_covariance(&SnapshotSet::new(data.clone(), 0).unwrap()).unwrap();
        assert_eq!(s.t, 1);
        let want = &data * data.adjoint();
        assert!(max_abs(&(want - s.matrix.as_matrix())) < 1e-15);
        let eig = hermitian_eig(&s.matrix).unwrap();
        assert!(eig.values[1].abs() < 1e-14 && eig.values[2].abs() < 1e-14);
    }

    #[test]
    fn orthogonal_snapshots() {
        let data = ComplexMatrix::identity(2, 2);
        let s = sample_covariance(&SnapshotSet::new(data, 0).unwrap()).unwrap();
        assert_eq!(s.matrix.get(0, 0).re, 0.5);
        assert_eq!(s.matrix.get(1, 1).re, 0.5);
        assert_eq!(s.matrix.get(0, 1).norm(), 0.0);
    }

    #[test]
    fn rejects_zero_count() {
        assert!(draw_snapshots(&HermitianMatrix::identity(2), 0, 1).is_err());
    }

    #[test]
    fn propagates_indefinite_covariance() {
        let cov = HermitianMatrix::from_real_diagonal(&[1.0, -1.0]).unwrap();
        assert!(matches!(
            draw_snapshots(&cov, 4, 1),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn reproducible_bitwise() {
        let cov = HermitianMatrix::from_upper_fn(4, |i, j| {
            if i == j { C64::new(2.0, 0.0) } else { C64::new(0.3, 0.1 * (j - i) as f64) }
        })
        .unwrap();
        let a = draw_snapshots(&cov, 2500, 42).unwrap();
        let b = draw_snapshots(&cov, 2500, 42).unwrap();
        assert_eq!(a, b);
        let c = draw_snapshots(&cov, 2500, 43).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn streaming_covariance_matches_materialized() {
        let cov = HermitianMatrix::from_upper_fn(5, |i, j| {
            if i == j { C64::new(1.0, 0.0) } else { C64::new(0.2, -0.1) }
        })
        .unwrap();
        let source = SnapshotSource::new(&cov).unwrap();
        for t in [1, 7, 1024, 2049] {
            let direct = source.sample_covariance(t, 9).unwrap();
            let via = sample_covariance(&source.draw(t, 9).unwrap()).unwrap();
            assert_eq!(direct, via);
        }
    }

    #[test]
    fn unit_complex_normal_moments() {
        let mut g = ComplexGaussian::new(5);
        let m = 200_000;
        let mut re2 = 0.0;
        let mut im2 = 0.0;
        let mut cross = 0.0;
        for _ in 0..m {
            let z = g.sample();
            re2 += z.re * z.re;
            im2 += z.im * z.im;
            cross += z.re * z.im;
        }
        let m = m as f64;
        // each second moment has standard deviation ~ 0.5 * sqrt(2/m)
        let tol = 5.0 * 0.5 * (2.0 / m).sqrt();
        assert!((re2 / m - 0.5).abs() < tol);
        assert!((im2 / m - 0.5).abs() < tol);
        assert!((cross / m).abs() < tol);
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: Vec<u64> = (0..1000).map(|k| derive_seed(7, k)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }

    #[test]
    fn law_of_large_numbers_identity() {
        let n = 17;
        let t = 100_000;
        let s = draw_snapshots(&HermitianMatrix::identity(n), t, 11)
            .map(|x| sample_covariance(&x).unwrap())
            .unwrap();
        let diff = s.matrix.as_matrix() - ComplexMatrix::identity(n, n);
        let rel = diff.norm() / (n as f64).sqrt();
        assert!(rel <= 0.02, "relative Frobenius error {rel}");
    }

    #[test]
    fn mean_of_sample_covariance_is_unbiased() {
        let cov = HermitianMatrix::from_upper_fn(4, |i, j| {
            if i == j { C64::new(1.0, 0.0) } else { C64::new(0.4, 0.3) * 0.5_f64.powi((j - i) as i32) }
        })
        .unwrap();
        let t = 50;
        let trials = 200;
        let source = SnapshotSource::new(&cov).unwrap();
        let mut mean = ComplexMatrix::zeros(4, 4);
        for k in 0..trials {
            mean += source.sample_covariance(t, derive_seed(3, k)).unwrap().matrix.as_matrix();
        }
        mean /= C64::new(trials as f64, 0.0);
        let err = max_abs(&(mean - cov.as_matrix()));
        assert!(err <= 4.0 / ((trials * t as u64) as f64).sqrt(), "max error {err}");
    }

    #[test]
    fn white_sample_spectrum_within_marchenko_pastur_support() {
        let n = 40;
        let t = 400;
        let s = SnapshotSource::new(&HermitianMatrix::identity(n))
            .unwrap()
            .sample_covariance(t, 77)
            .unwrap();
        let eig = hermitian_eig(&s.matrix).unwrap();
        let (lo, hi) = mp_support(n as f64 / t as f64).unwrap();
        // finite-size edge fluctuations are O(t^{-2/3})
        assert!(eig.max_value() < hi * 1.15);
        assert!(eig.min_value() > lo * 0.7);
        let inside = eig.values.iter().filter(|&&v| v >= lo && v <= hi).count();
        assert!(inside as f64 >= 0.85 * n as f64);
    }
}
