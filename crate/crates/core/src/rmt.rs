//! Random-matrix eigenvalue machinery: consistent (Mestre-type) corrected
//! eigenvalues and Marchenko–Pastur utilities.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Contiguous clusters of eigenvalue indices in ascending order. Cluster `m`
/// covers `sizes[m]` consecutive eigenvalues.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubspacePartition {
    sizes: Vec<usize>,
}

impl SubspacePartition {
    pub fn from_sizes(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidInput(
                "partition needs at least one cluster and no empty clusters".into(),
            ));
        }
        Ok(Self { sizes })
    }

    /// Every eigenvalue in its own cluster.
    pub fn singletons(n: usize) -> Result<Self> {
        Self::from_sizes(vec![1; n])
    }

    /// The `noise_dim` smallest eigenvalues form one cluster, every larger
    /// eigenvalue is a singleton.
    pub fn noise_and_singletons(n: usize, noise_dim: usize) -> Result<Self> {
        if noise_dim > n {
            return Err(Error::InvalidInput(format!(
                "noise dimension {noise_dim} exceeds {n}"
            )));
        }
        let mut sizes = Vec::with_capacity(n);
        if noise_dim > 0 {
            sizes.push(noise_dim);
        }
        sizes.extend(std::iter::repeat_n(1, n - noise_dim));
        Self::from_sizes(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Index ranges of the clusters, ascending.
    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.sizes.iter().scan(0, |start, &k| {
            let r = *start..*start + k;
            *start += k;
            Some(r)
        })
    }
}

/// Output of [`mestre_correct`].
#[derive(Debug, Clone)]
pub struct RmtCorrection {
    /// Sample eigenvalues, ascending.
    pub sample_values: Vec<f64>,
    /// Interlacing roots, ascending.
    pub mu: Vec<f64>,
    /// One corrected eigenvalue per cluster, in partition order.
    pub corrected: Vec<f64>,
    pub partition: SubspacePartition,
}

impl RmtCorrection {
    /// Corrected value repeated over each cluster, ascending order.
    pub fn expanded_ascending(&self) -> Vec<f64> {
        self.partition
            .ranges()
            .zip(&self.corrected)
            .flat_map(|(r, &g)| std::iter::repeat_n(g, r.len()))
            .collect()
    }

    /// Corrected spectrum in descending order, ready as a target spectrum.
    pub fn expanded_descending(&self) -> Vec<f64> {
        let mut v = self.expanded_ascending();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    /// Smallest corrected eigenvalue.
    pub fn smallest(&self) -> f64 {
        self.corrected.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Consistent eigenvalue correction for `t` snapshots.
///
/// The roots `μ̂` of `Σ_k λ̂_k / (λ̂_k − μ) = t` are the eigenvalues of the
/// rank-one downdate `diag(λ̂) − (1/t) √λ̂ √λ̂ᵀ`. Each cluster `K_m` then gets
/// `γ_m = (t / |K_m|) Σ_{k∈K_m} (λ̂_k − μ̂_k)`.
pub fn mestre_correct(
    lambda_hat: &[f64],
    t: usize,
    partition: &SubspacePartition,
) -> Result<RmtCorrection> {
    let n = lambda_hat.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty spectrum".into()));
    }
    if t <= n {
        return Err(Error::UnsupportedRegime(format!(
            "need more snapshots than dimensions (t = {t}, n = {n})"
        )));
    }
    if lambda_hat.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidInput("sample eigenvalues must be finite and non-negative".into()));
    }
    if lambda_hat.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("sample eigenvalues must be ascending".into()));
    }
    if partition.total() != n {
        return Err(Error::InvalidInput(format!(
            "partition covers {} eigenvalues, spectrum has {n}",
            partition.total()
        )));
    }

    let tf = t as f64;
    let roots: Vec<f64> = lambda_hat.iter().map(|l| l.sqrt()).collect();
    let downdate = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { lambda_hat[i] } else { 0.0 };
        d - roots[i] * roots[j] / tf
    });
    let eig = SymmetricEigen::try_new(downdate, f64::EPSILON, 1000 * n)
        .ok_or_else(|| Error::NumericalFailure("rank-one downdate eigensolver failed".into()))?;
    let mut mu: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    mu.sort_by(f64::total_cmp);
    // enforce interlacing against rounding: μ̂_k ≤ λ̂_k and μ̂_k ≥ λ̂_{k-1}
    for k in 0..n {
        mu[k] = mu[k].min(lambda_hat[k]);
        if k > 0 {
            mu[k] = mu[k].max(lambda_hat[k - 1]);
        }
    }

    let corrected = partition
        .ranges()
        .map(|r| {
            let size = r.len() as f64;
            tf / size * r.map(|k| lambda_hat[k] - mu[k]).sum::<f64>()
        })
        .collect();

    Ok(RmtCorrection {
        sample_values: lambda_hat.to_vec(),
        mu,
        corrected,
        partition: partition.clone(),
    })
}

/// Marchenko–Pastur law for aspect ratio `β = N/T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpLaw {
    pub beta: f64,
    pub support: (f64, f64),
}

impl MpLaw {
    pub fn new(beta: f64) -> Result<Self> {
        Ok(Self {
            beta,
            support: mp_support(beta)?,
        })
    }

    pub fn from_dims(n: usize, t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidInput("snapshot count must be positive".into()));
        }
        Self::new(n as f64 / t as f64)
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        mp_density(x, self.beta)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.support.0 && x <= self.support.1
    }
}

/// Marchenko–Pastur support `((1 − √β)², (1 + √β)²)` for `β = N/T`.
pub fn mp_support(beta: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidInput(format!("ratio must lie in (0, 1], got {beta}")));
    }
    let s = beta.sqrt();
    Ok(((1.0 - s).powi(2), (1.0 + s).powi(2)))
}

/// Marchenko–Pastur density `√((x − a)⁺ (b − x)⁺) / (2π β x)`.
pub fn mp_density(x: f64, beta: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidInput(format!("density argument must be positive, got {x}")));
    }
    let (lo, hi) = mp_support(beta)?;
    let inner = (x - lo).max(0.0) * (hi - x).max(0.0);
    Ok(inner.sqrt() / (2.0 * PI * beta * x))
}
