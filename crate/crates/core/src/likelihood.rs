//! Sphericity likelihood ratios, the true-matrix null distribution and
//! noise-subspace order selection.
//!
//! All ratios are handled as natural logarithms.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{check_same_dim, cholesky, hermitian_eig, HermitianMatrix};
use crate::sampling::{derive_seed, SampleCovariance, SnapshotSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrKind {
    Regular,
    Spiked { m_signal: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodReport {
    /// Natural log of the ratio; `-inf` when the sample covariance is singular.
    pub log_lr: f64,
    pub n: usize,
    pub t: usize,
    pub kind: LrKind,
    pub singular: bool,
}

impl LikelihoodReport {
    pub fn lr(&self) -> f64 {
        self.log_lr.exp()
    }
}

/// `Σ log g − d · log(mean g)` for positive `g`.
fn log_flatness(g: &[f64]) -> f64 {
    let d = g.len() as f64;
    let mean = g.iter().sum::<f64>() / d;
    let sum_log: f64 = g.iter().map(|x| x.ln()).sum();
    (sum_log - d * mean.ln()).min(0.0)
}

/// Regular sphericity ratio `det(R̂ C⁻¹) / [(1/n) tr(R̂ C⁻¹)]ⁿ` of a
/// candidate `C` against a sample covariance.
pub fn sphericity(candidate: &HermitianMatrix, sample: &SampleCovariance) -> Result<LikelihoodReport> {
    let n = candidate.dim();
    check_same_dim(n, sample.matrix.dim())?;
    let chol = cholesky(candidate)?;
    let l = chol.l();
    let a = l
        .solve_lower_triangular(sample.matrix.as_matrix())
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let w = l
        .solve_lower_triangular(&a.adjoint())
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let g = hermitian_eig(&HermitianMatrix::from_matrix(w)?)?.values;
    let g_max = g[0];
    let singular = !(g_max > 0.0) || g[n - 1] <= n as f64 * f64::EPSILON * g_max;
    let log_lr = if singular { f64::NEG_INFINITY } else { log_flatness(&g) };
    Ok(LikelihoodReport {
        log_lr,
        n,
        t: sample.t,
        kind: LrKind::Regular,
        singular,
    })
}

/// Spiked sphericity ratio over the `n − m_signal` noise eigenvectors `û` of
/// the candidate: `Π q / (mean q)^{n−m}` with `q_j = û_jᴴ R̂ û_j`.
pub fn spiked_sphericity(
    candidate: &HermitianMatrix,
    m_signal: usize,
    sample: &SampleCovariance,
) -> Result<LikelihoodReport> {
    let n = candidate.dim();
    check_same_dim(n, sample.matrix.dim())?;
    if m_signal >= n {
        return Err(Error::InvalidInput(format!(
            "signal dimension {m_signal} leaves no noise subspace in dimension {n}"
        )));
    }
    let eig = hermitian_eig(candidate)?;
    let q: Vec<f64> = (m_signal..n)
        .map(|k| sample.matrix.quadratic_form(&eig.vector(k)))
        .collect();
    if let Some((i, &v)) = q.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::DegenerateProjection {
            index: m_signal + i,
            value: v,
        });
    }
    Ok(LikelihoodReport {
        log_lr: log_flatness(&q),
        n,
        t: sample.t,
        kind: LrKind::Spiked { m_signal },
        singular: false,
    })
}

/// Sorted null sample of regular sphericity log-LRs of the true matrix.
///
/// The distribution depends on `(n, t)` only, so it is sampled with the
/// identity as the true matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePdf {
    pub n: usize,
    pub t: usize,
    pub trials: usize,
    pub seed: u64,
    /// Finite log-LRs, ascending.
    pub values: Vec<f64>,
    /// Trials whose sample covariance was singular.
    pub excluded: usize,
}

impl ReferencePdf {
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidInput(format!("quantile level {alpha} outside [0, 1]")));
        }
        if self.values.is_empty() {
            return Err(Error::DegenerateInput("reference sample is empty".into()));
        }
        Ok(sorted_quantile(&self.values, alpha))
    }

    pub fn median(&self) -> Result<f64> {
        self.quantile(0.5)
    }

    /// Fraction of the null sample at or below `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        self.values.partition_point(|&v| v <= x) as f64 / self.values.len() as f64
    }

    pub fn cache_file_name(n: usize, t: usize, trials: usize, seed: u64) -> String {
        format!("refpdf_n{n}_t{t}_trials{trials}_seed{seed}.txt")
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "reference_pdf n={} t={} trials={} seed={} excluded={}\n",
            self.n, self.t, self.trials, self.seed, self.excluded
        );
        for v in &self.values {
            writeln!(s, "{v:.16e}").expect("writing to a String");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "header", "empty file"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("reference_pdf") {
            return Err(Error::parse(1, "header", "expected `reference_pdf`"));
        }
        let mut get = |key: &str| -> Result<u64> {
            let tok = fields
                .next()
                .ok_or_else(|| Error::parse(1, key, "missing"))?;
            let value = tok
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| Error::parse(1, key, format!("expected `{key}=`, found `{tok}`")))?;
            value
                .parse()
                .map_err(|_| Error::parse(1, key, format!("not an integer: `{value}`")))
        };
        let n = get("n")? as usize;
        let t = get("t")? as usize;
        let trials = get("trials")? as usize;
        let seed = get("seed")?;
        let excluded = get("excluded")? as usize;
        let mut values = Vec::with_capacity(trials);
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| Error::parse(i + 1, "value", format!("not a number: `{line}`")))?;
            values.push(v);
        }
        if values.len() + excluded != trials {
            return Err(Error::parse(
                1,
                "trials",
                format!("{} values and {excluded} excluded for {trials} trials", values.len()),
            ));
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::parse(1, "value", "values are not sorted ascending"));
        }
        Ok(Self {
            n,
            t,
            trials,
            seed,
            values,
            excluded,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

/// Linear interpolation between order statistics of an ascending sample.
pub fn sorted_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let pos = alpha * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Null distribution of the regular sphericity log-LR for `trials` white
/// `n`-dimensional sample covariances of `t` snapshots.
pub fn reference_sphericity(n: usize, t: usize, trials: usize, seed: u64) -> Result<ReferencePdf> {
    if n == 0 || t == 0 || trials == 0 {
        return Err(Error::InvalidInput("n, t and trials must be positive".into()));
    }
    let identity = HermitianMatrix::identity(n);
    let source = SnapshotSource::new(&identity)?;
    let outcomes: Vec<Result<f64>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let r = source.sample_covariance(t, derive_seed(seed, k as u64))?;
            Ok(sphericity(&identity, &r)?.log_lr)
        })
        .collect();
    let mut values = Vec::with_capacity(trials);
    let mut excluded = 0;
    for o in outcomes {
        let v = o?;
        if v.is_finite() {
            values.push(v);
        } else {
            excluded += 1;
        }
    }
    values.sort_by(f64::total_cmp);
    Ok(ReferencePdf {
        n,
        t,
        trials,
        seed,
        values,
        excluded,
    })
}

/// Loads the null pdf from `dir` if cached, otherwise builds and stores it.
pub fn cached_reference_sphericity(
    dir: &Path,
    n: usize,
    t: usize,
    trials: usize,
    seed: u64,
) -> Result<ReferencePdf> {
    let path: PathBuf = dir.join(ReferencePdf::cache_file_name(n, t, trials, seed));
    if path.exists() {
        let pdf = ReferencePdf::read(&path)?;
        if pdf.n == n && pdf.t == t && pdf.trials == trials && pdf.seed == seed {
            return Ok(pdf);
        }
    }
    let pdf = reference_sphericity(n, t, trials, seed)?;
    fs::create_dir_all(dir)?;
    pdf.write(&path)?;
    Ok(pdf)
}

/// Null pdfs for every candidate noise dimension `d = 1..n−1` at a fixed
/// snapshot count.
#[derive(Debug, Clone)]
pub struct NullLibrary {
    pub t: usize,
    pdfs: Vec<ReferencePdf>,
}

impl NullLibrary {
    pub fn build(n: usize, t: usize, trials: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput("order selection needs n ≥ 2".into()));
        }
        let pdfs = (1..n)
            .map(|d| reference_sphericity(d, t, trials, derive_seed(seed, d as u64)))
            .collect::<Result<_>>()?;
        Ok(Self { t, pdfs })
    }

    pub fn from_pdfs(pdfs: Vec<ReferencePdf>) -> Result<Self> {
        let t = pdfs.first().map(|p| p.t).unwrap_or(0);
        for (i, p) in pdfs.iter().enumerate() {
            if p.n != i + 1 || p.t != t {
                return Err(Error::InvalidInput(format!(
                    "null pdf {i} has (n, t) = ({}, {}), expected ({}, {t})",
                    p.n,
                    p.t,
                    i + 1
                )));
            }
        }
        Ok(Self { t, pdfs })
    }

    /// Null pdf for noise dimension `d`.
    pub fn get(&self, d: usize) -> Option<&ReferencePdf> {
        d.checked_sub(1).and_then(|i| self.pdfs.get(i))
    }

    pub fn max_dim(&self) -> usize {
        self.pdfs.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionTest {
    pub noise_dim: usize,
    pub log_lr: f64,
    pub threshold: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSelection {
    /// Selected noise dimension, 0 when nothing was accepted.
    pub noise_dim: usize,
    pub no_flat_subspace: bool,
    /// One entry per tested dimension, from `n − 1` downward.
    pub tests: Vec<DimensionTest>,
}

/// Largest noise dimension `d` whose flatness ratio over the `d` smallest
/// sample eigenvalues lies at or above the `alpha`-quantile of its null.
pub fn select_noise_dim(
    sample_eigs: &[f64],
    t: usize,
    nulls: &NullLibrary,
    alpha: f64,
) -> Result<NoiseSelection> {
    let n = sample_eigs.len();
    if n < 2 {
        return Err(Error::InvalidInput("order selection needs n ≥ 2".into()));
    }
    if sample_eigs.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidInput("sample eigenvalues must be descending".into()));
    }
    if nulls.t != t {
        return Err(Error::InvalidInput(format!(
            "null library built for t = {}, asked for t = {t}",
            nulls.t
        )));
    }
    let mut tests = Vec::with_capacity(n - 1);
    for d in (1..n).rev() {
        let null = nulls.get(d).ok_or_else(|| {
            Error::InvalidInput(format!("no null pdf for noise dimension {d}"))
        })?;
        let threshold = null.quantile(alpha)?;
        let tail = &sample_eigs[n - d..];
        let log_lr = if tail.iter().all(|&v| v > 0.0) {
            log_flatness(tail)
        } else {
            f64::NEG_INFINITY
        };
        let accepted = log_lr >= threshold;
        tests.push(DimensionTest {
            noise_dim: d,
            log_lr,
            threshold,
            accepted,
        });
        if accepted {
            return Ok(NoiseSelection {
                noise_dim: d,
                no_flat_subspace: false,
                tests,
            });
        }
    }
    Ok(NoiseSelection {
        noise_dim: 0,
        no_flat_subspace: true,
        tests,
    })
}
