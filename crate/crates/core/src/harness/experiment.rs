//! Monte Carlo experiment driver.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{Estimator, ExperimentConfig, Metric, SpectrumSource};
use super::histogram::{emit_histogram, Histogram};
use super::io::write_matrix;
use crate::error::{Error, Result};
use crate::likelihood::{select_noise_dim, sorted_quantile, sphericity, spiked_sphericity, NullLibrary};
use crate::mespec::{reconstruct_toeplitz, replace_eigenvalues};
use crate::numerics::{hermitian_eig, HermitianMatrix};
use crate::rmt::{mestre_correct, RmtCorrection, SubspacePartition};
use crate::sampling::{derive_seed, SampleCovariance, SnapshotSource};
use crate::toeplitzify::{rectify_loading, redundancy_average};
use crate::toiep::{solve, TargetSpectrum};

/// Number of smallest estimate eigenvalues kept per record.
pub const SMALLEST: usize = 4;

/// Metrics of one estimator stage in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub estimator: Estimator,
    /// Smallest eigenvalues of the estimate, ascending (NaN-padded).
    pub smallest: [f64; SMALLEST],
    /// `‖T̂ − T‖₂` against the true matrix.
    pub spectral_norm_error: f64,
    pub log_lr: f64,
    pub spiked_log_lr: f64,
    /// Noise dimension used by the eigenvalue correction (0 if none).
    pub noise_dim: usize,
    /// Stage wall time in microseconds (0 unless timings are recorded).
    pub elapsed_us: u64,
    /// Failure message when the stage did not produce an estimate.
    pub error: Option<String>,
}

impl TrialRecord {
    fn failed(trial: usize, estimator: Estimator, noise_dim: usize, err: &Error) -> Self {
        Self {
            trial,
            estimator,
            smallest: [f64::NAN; SMALLEST],
            spectral_norm_error: f64::NAN,
            log_lr: f64::NAN,
            spiked_log_lr: f64::NAN,
            noise_dim,
            elapsed_us: 0,
            error: Some(err.to_string()),
        }
    }

    pub fn lambda_min(&self) -> f64 {
        self.smallest[0]
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Per-trial inputs shared by every stage of a chain.
pub struct ChainInputs<'a> {
    pub sample: &'a SampleCovariance,
    pub truth: Option<&'a HermitianMatrix>,
    pub correction: Result<RmtCorrection>,
    pub noise_dim: usize,
}

/// Shared, trial-independent state of an experiment.
pub struct ChainContext<'a> {
    pub config: &'a ExperimentConfig,
    pub nulls: Option<NullLibrary>,
}

impl<'a> ChainContext<'a> {
    pub fn new(config: &'a ExperimentConfig) -> Result<Self> {
        let n = config.scenario.dim();
        let needs_correction = config
            .chain
            .iter()
            .any(|e| matches!(e, Estimator::RaLoading | Estimator::RaToiep | Estimator::MeReplace(SpectrumSource::Rmt)));
        let nulls = if needs_correction && config.noise_dim.is_none() && n >= 2 {
            Some(NullLibrary::build(n, config.t, config.null_trials, derive_seed(config.seed, u64::MAX))?)
        } else {
            None
        };
        Ok(Self { config, nulls })
    }

    /// Noise-order selection and eigenvalue correction of a sample.
    pub fn prepare<'s>(&self, sample: &'s SampleCovariance, truth: Option<&'s HermitianMatrix>) -> Result<ChainInputs<'s>> {
        let n = sample.matrix.dim();
        let eig = hermitian_eig(&sample.matrix)?;
        let noise_dim = match (self.config.noise_dim, &self.nulls) {
            (Some(d), _) => d,
            (None, Some(nulls)) => select_noise_dim(&eig.values, sample.t, nulls, self.config.alpha)?.noise_dim,
            (None, None) => 0,
        };
        let mut ascending: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
        ascending.reverse();
        let correction = SubspacePartition::noise_and_singletons(n, noise_dim)
            .and_then(|p| mestre_correct(&ascending, sample.t, &p));
        Ok(ChainInputs {
            sample,
            truth,
            correction,
            noise_dim,
        })
    }

    /// Estimate produced by one stage.
    pub fn estimate(&self, stage: Estimator, inputs: &ChainInputs<'_>) -> Result<HermitianMatrix> {
        let sample = inputs.sample;
        let correction = || -> Result<&RmtCorrection> {
            inputs.correction.as_ref().map_err(|e| Error::DegenerateInput(format!("eigenvalue correction failed: {e}")))
        };
        match stage {
            Estimator::True => inputs
                .truth
                .cloned()
                .ok_or_else(|| Error::InvalidInput("no true matrix available".into())),
            Estimator::Sample => Ok(sample.matrix.clone()),
            Estimator::Ra => redundancy_average(&sample.matrix).to_matrix(),
            Estimator::RaLoading => {
                let ra = redundancy_average(&sample.matrix);
                Ok(rectify_loading(&ra, correction()?.smallest())?.matrix)
            }
            Estimator::RaToiep => {
                let c = correction()?;
                let ra = redundancy_average(&sample.matrix);
                let loaded = rectify_loading(&ra, c.smallest())?;
                let target = TargetSpectrum::new(c.expanded_descending())?;
                let opts = self.config.toiep.options(self.config.spiked_noise_dim);
                Ok(solve(&loaded.lags, &target, sample, inputs.truth, &opts)?.matrix().clone())
            }
            Estimator::Me => reconstruct_toeplitz(&sample.matrix),
            Estimator::MeReplace(source) => {
                let me = reconstruct_toeplitz(&sample.matrix)?;
                let values = match source {
                    SpectrumSource::Rmt => correction()?.expanded_descending(),
                    SpectrumSource::True => {
                        let truth = inputs
                            .truth
                            .ok_or_else(|| Error::InvalidInput("no true matrix available".into()))?;
                        hermitian_eig(truth)?.values
                    }
                };
                replace_eigenvalues(&me, &TargetSpectrum::new(values)?)
            }
        }
    }

    /// Metrics of an estimate.
    pub fn evaluate(
        &self,
        trial: usize,
        stage: Estimator,
        estimate: &HermitianMatrix,
        inputs: &ChainInputs<'_>,
    ) -> Result<TrialRecord> {
        let cfg = self.config;
        let n = estimate.dim();
        let mut smallest = [f64::NAN; SMALLEST];
        if cfg.records(Metric::Eigenvalues) {
            let values = hermitian_eig(estimate)?.values;
            for (slot, v) in smallest.iter_mut().zip(values.iter().rev()) {
                *slot = *v;
            }
        }
        let spectral_norm_error = match (cfg.records(Metric::SpectralNorm), inputs.truth) {
            (true, Some(truth)) => estimate.difference(truth)?.spectral_norm()?,
            _ => f64::NAN,
        };
        // indefinite estimates have no regular ratio
        let log_lr = if cfg.records(Metric::LogLr) {
            sphericity(estimate, inputs.sample).map_or(f64::NAN, |r| r.log_lr)
        } else {
            f64::NAN
        };
        let spiked_log_lr = if cfg.records(Metric::SpikedLogLr) {
            let noise = cfg.spiked_noise_dim.min(n);
            spiked_sphericity(estimate, n - noise, inputs.sample).map_or(f64::NAN, |r| r.log_lr)
        } else {
            f64::NAN
        };
        Ok(TrialRecord {
            trial,
            estimator: stage,
            smallest,
            spectral_norm_error,
            log_lr,
            spiked_log_lr,
            noise_dim: inputs.noise_dim,
            elapsed_us: 0,
            error: None,
        })
    }
}

/// Records and optional stage matrices of one trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub records: Vec<TrialRecord>,
    pub matrices: Vec<(Estimator, HermitianMatrix)>,
}

fn run_trial(ctx: &ChainContext<'_>, source: &SnapshotSource, truth: &HermitianMatrix, trial: usize) -> TrialOutcome {
    let cfg = ctx.config;
    let mut records = Vec::with_capacity(cfg.chain.len());
    let mut matrices = Vec::new();
    let sample = source.sample_covariance(cfg.t, derive_seed(cfg.seed, trial as u64));
    let sample = match sample {
        Ok(s) => s,
        Err(e) => {
            records.extend(cfg.chain.iter().map(|&st| TrialRecord::failed(trial, st, 0, &e)));
            return TrialOutcome { records, matrices };
        }
    };
    let inputs = match ctx.prepare(&sample, Some(truth)) {
        Ok(i) => i,
        Err(e) => {
            records.extend(cfg.chain.iter().map(|&st| TrialRecord::failed(trial, st, 0, &e)));
            return TrialOutcome { records, matrices };
        }
    };
    for &stage in &cfg.chain {
        let start = Instant::now();
        let result = ctx
            .estimate(stage, &inputs)
            .and_then(|m| ctx.evaluate(trial, stage, &m, &inputs).map(|r| (m, r)));
        let elapsed = start.elapsed().as_micros() as u64;
        match result {
            Ok((m, mut r)) => {
                if cfg.output.record_timings {
                    r.elapsed_us = elapsed;
                }
                if cfg.output.dump_matrices {
                    matrices.push((stage, m));
                }
                records.push(r);
            }
            Err(e) => records.push(TrialRecord::failed(trial, stage, inputs.noise_dim, &e)),
        }
    }
    TrialOutcome { records, matrices }
}

/// Distribution summary of one metric over the successful trials.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub count: usize,
    pub median: f64,
    pub q05: f64,
    pub q25: f64,
    pub q75: f64,
    pub q95: f64,
    pub histogram: Histogram,
}

impl MetricSummary {
    pub fn of(values: &[f64], bins: usize) -> Result<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        let q = |a: f64| if v.is_empty() { f64::NAN } else { sorted_quantile(&v, a) };
        Ok(Self {
            count: v.len(),
            median: q(0.5),
            q05: q(0.05),
            q25: q(0.25),
            q75: q(0.75),
            q95: q(0.95),
            histogram: emit_histogram(&v, bins)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub trials: usize,
    pub failures: usize,
    /// Fraction of successful trials with `λ_min < 0`.
    pub negative_fraction: f64,
    pub smallest: Vec<MetricSummary>,
    pub spectral_norm_error: MetricSummary,
    pub log_lr: MetricSummary,
    pub spiked_log_lr: MetricSummary,
    /// Medians in the linear domain.
    pub median_lr: f64,
    pub median_spiked_lr: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub true_matrix: HermitianMatrix,
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<EstimatorSummary>,
    /// Stage matrices per trial when dumping is enabled.
    pub matrices: Vec<Vec<(Estimator, HermitianMatrix)>>,
}

impl ExperimentResult {
    pub fn summary(&self, e: Estimator) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.estimator == e)
    }

    pub fn records_for(&self, e: Estimator) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(move |r| r.estimator == e)
    }
}

pub fn summarize(records: &[TrialRecord], chain: &[Estimator], bins: usize) -> Result<Vec<EstimatorSummary>> {
    chain
        .iter()
        .map(|&e| {
            let rs: Vec<&TrialRecord> = records.iter().filter(|r| r.estimator == e).collect();
            let ok: Vec<&TrialRecord> = rs.iter().copied().filter(|r| r.ok()).collect();
            let col = |f: &dyn Fn(&TrialRecord) -> f64| -> Vec<f64> { ok.iter().map(|r| f(r)).collect() };
            let mins: Vec<f64> = col(&|r| r.lambda_min()).into_iter().filter(|v| v.is_finite()).collect();
            let negative_fraction = if mins.is_empty() {
                f64::NAN
            } else {
                mins.iter().filter(|&&v| v < 0.0).count() as f64 / mins.len() as f64
            };
            let smallest = (0..SMALLEST)
                .map(|k| MetricSummary::of(&col(&|r| r.smallest[k]), bins))
                .collect::<Result<_>>()?;
            let log_lr = MetricSummary::of(&col(&|r| r.log_lr), bins)?;
            let spiked_log_lr = MetricSummary::of(&col(&|r| r.spiked_log_lr), bins)?;
            Ok(EstimatorSummary {
                estimator: e,
                trials: rs.len(),
                failures: rs.len() - ok.len(),
                negative_fraction,
                smallest,
                spectral_norm_error: MetricSummary::of(&col(&|r| r.spectral_norm_error), bins)?,
                median_lr: log_lr.median.exp(),
                median_spiked_lr: spiked_log_lr.median.exp(),
                log_lr,
                spiked_log_lr,
            })
        })
        .collect()
}

/// Runs every trial of `config`; trial `k` uses `derive_seed(seed, k)` and
/// records are ordered by trial index, so the output does not depend on
/// the worker count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let run = || -> Result<ExperimentResult> {
        let truth = config.scenario.covariance()?;
        let source = SnapshotSource::new(&truth)?;
        let ctx = ChainContext::new(config)?;
        let outcomes: Vec<TrialOutcome> = (0..config.trials)
            .into_par_iter()
            .map(|k| run_trial(&ctx, &source, &truth, k))
            .collect();
        let mut records = Vec::with_capacity(config.trials * config.chain.len());
        let mut matrices = Vec::new();
        for o in outcomes {
            records.extend(o.records);
            if config.output.dump_matrices {
                matrices.push(o.matrices);
            }
        }
        let summaries = summarize(&records, &config.chain, config.bins)?;
        Ok(ExperimentResult {
            config: config.clone(),
            true_matrix: truth,
            records,
            summaries,
            matrices,
        })
    };
    match config.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::InvalidInput(format!("cannot build worker pool: {e}")))?
            .install(run),
        None => run(),
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trials_csv<W: Write>(records: &[TrialRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["trial".to_string(), "estimator".to_string()];
    header.extend((1..=SMALLEST).map(|k| format!("lambda_{k}")));
    header.extend(
        ["spectral_norm_error", "log_lr", "spiked_log_lr", "noise_dim", "elapsed_us", "error"]
            .map(String::from),
    );
    out.write_record(&header)?;
    for r in records {
        let mut row = vec![r.trial.to_string(), r.estimator.to_string()];
        row.extend(r.smallest.iter().map(|&v| fmt(v)));
        row.push(fmt(r.spectral_norm_error));
        row.push(fmt(r.log_lr));
        row.push(fmt(r.spiked_log_lr));
        row.push(r.noise_dim.to_string());
        row.push(r.elapsed_us.to_string());
        row.push(r.error.clone().unwrap_or_default());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(summaries: &[EstimatorSummary], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["estimator", "metric", "count", "failures", "median", "q05", "q25", "q75", "q95", "negative_fraction"])?;
    for s in summaries {
        let mut metrics: Vec<(String, &MetricSummary)> = s
            .smallest
            .iter()
            .enumerate()
            .map(|(k, m)| (format!("lambda_{}", k + 1), m))
            .collect();
        metrics.push(("spectral_norm_error".into(), &s.spectral_norm_error));
        metrics.push(("log_lr".into(), &s.log_lr));
        metrics.push(("spiked_log_lr".into(), &s.spiked_log_lr));
        for (name, m) in metrics {
            out.write_record([
                s.estimator.to_string(),
                name,
                m.count.to_string(),
                s.failures.to_string(),
                fmt(m.median),
                fmt(m.q05),
                fmt(m.q25),
                fmt(m.q75),
                fmt(m.q95),
                fmt(s.negative_fraction),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes `trials.csv`, `summary.csv`, one histogram CSV per estimator and
/// metric, the true matrix and (if dumped) every stage matrix into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_trials_csv(&result.records, fs::File::create(dir.join("trials.csv"))?)?;
    write_summary_csv(&result.summaries, fs::File::create(dir.join("summary.csv"))?)?;
    for s in &result.summaries {
        let slug = s.estimator.slug();
        for (k, m) in s.smallest.iter().enumerate() {
            m.histogram
                .write_csv(fs::File::create(dir.join(format!("hist_{slug}_lambda_{}.csv", k + 1)))?)?;
        }
        for (name, m) in [
            ("spectral_norm_error", &s.spectral_norm_error),
            ("log_lr", &s.log_lr),
            ("spiked_log_lr", &s.spiked_log_lr),
        ] {
            m.histogram
                .write_csv(fs::File::create(dir.join(format!("hist_{slug}_{name}.csv")))?)?;
        }
    }
    write_matrix(&dir.join("true_matrix.txt"), &result.true_matrix)?;
    if !result.matrices.is_empty() {
        let mdir = dir.join("matrices");
        fs::create_dir_all(&mdir)?;
        for (trial, stages) in result.matrices.iter().enumerate() {
            for (e, m) in stages {
                write_matrix(&mdir.join(format!("trial{trial:05}_{}.txt", e.slug())), m)?;
            }
        }
    }
    fs::write(dir.join("config.toml"), result.config.to_toml_string()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{IdentityScenario, Scenario};
    use crate::models::ClutterScenario;

    fn small_clutter(trials: usize) -> ExperimentConfig {
        let mut s = ClutterScenario::reference();
        s.n = 8;
        let mut cfg = ExperimentConfig::new(Scenario::Clutter(s), 40);
        cfg.trials = trials;
        cfg.seed = 5;
        cfg.null_trials = 100;
        cfg.toiep.max_iterations = 20;
        cfg.chain = Estimator::ALL.to_vec();
        cfg
    }

    #[test]
    fn identity_smoke_case() {
        let mut cfg = ExperimentConfig::new(Scenario::Identity(IdentityScenario { n: 3 }), 10);
        cfg.trials = 1;
        cfg.chain = vec![Estimator::Me, Estimator::True];
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.records.len(), 2);
        let source = SnapshotSource::new(&HermitianMatrix::identity(3)).unwrap();
        let sample = source.sample_covariance(10, derive_seed(0, 0)).unwrap();
        let want = sphericity(&HermitianMatrix::identity(3), &sample).unwrap().log_lr;
        let truth = out.records_for(Estimator::True).next().unwrap();
        assert_eq!(truth.log_lr, want);
        assert_eq!(truth.spectral_norm_error, 0.0);
        let me = out.records_for(Estimator::Me).next().unwrap();
        assert!(me.ok());
        assert!(me.log_lr <= 0.0);
    }

    #[test]
    fn every_stage_runs() {
        let out = run_experiment(&small_clutter(4)).unwrap();
        assert_eq!(out.records.len(), 4 * Estimator::ALL.len());
        for r in &out.records {
            assert!(r.ok(), "{}: {:?}", r.estimator, r.error);
        }
        let sample = out.summary(Estimator::Sample).unwrap();
        assert!(sample.log_lr.median.abs() < 1e-12);
        assert_eq!(out.summaries.len(), Estimator::ALL.len());
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let mut a = small_clutter(6);
        a.threads = Some(1);
        let mut b = a.clone();
        b.threads = Some(4);
        let ra = run_experiment(&a).unwrap();
        let rb = run_experiment(&b).unwrap();
        assert_eq!(format!("{:?}", ra.records), format!("{:?}", rb.records));
        assert_eq!(format!("{:?}", ra.summaries), format!("{:?}", rb.summaries));
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        // t ≤ n makes the eigenvalue correction impossible
        let mut cfg = small_clutter(2);
        cfg.t = 6;
        cfg.noise_dim = Some(2);
        cfg.chain = vec![Estimator::Ra, Estimator::RaLoading];
        let out = run_experiment(&cfg).unwrap();
        let loading: Vec<_> = out.records_for(Estimator::RaLoading).collect();
        assert!(loading.iter().all(|r| !r.ok()));
        assert!(out.records_for(Estimator::Ra).all(|r| r.ok()));
        assert_eq!(out.summary(Estimator::RaLoading).unwrap().failures, 2);
    }

    #[test]
    fn summary_medians_ignore_order() {
        let out = run_experiment(&small_clutter(5)).unwrap();
        let mut reversed = out.records.clone();
        reversed.reverse();
        let s = summarize(&reversed, &out.config.chain, out.config.bins).unwrap();
        assert_eq!(format!("{s:?}"), format!("{:?}", out.summaries));
    }

    #[test]
    fn outputs_are_written() {
        let mut cfg = small_clutter(2);
        cfg.chain = vec![Estimator::Ra, Estimator::Me];
        cfg.output.dump_matrices = true;
        let out = run_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&out, dir.path()).unwrap();
        let trials = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
        assert_eq!(trials.lines().count(), 1 + 4);
        assert!(trials.starts_with("trial,estimator,lambda_1"));
        assert!(dir.path().join("summary.csv").exists());
        assert!(dir.path().join("hist_ra_lambda_1.csv").exists());
        assert!(dir.path().join("matrices/trial00001_me.txt").exists());
        let back = ExperimentConfig::read(&dir.path().join("config.toml")).unwrap();
        assert_eq!(back, cfg);
    }
}
