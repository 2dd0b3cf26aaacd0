use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use toepcov::harness::config::{Estimator, ExperimentConfig, Scenario};
use toepcov::harness::experiment::{write_trials_csv, ChainContext, TrialRecord};
use toepcov::harness::io::{format_hermitian, parse_complex, parse_hermitian};
use toepcov::harness::{read_matrix, run_experiment, write_matrix, write_outputs};
use toepcov::likelihood::{cached_reference_sphericity, sphericity, spiked_sphericity, LikelihoodReport};
use toepcov::mespec::reconstruct_toeplitz_detailed;
use toepcov::models::ClutterScenario;
use toepcov::numerics::hermitian_eig;
use toepcov::sampling::{derive_seed, sample_covariance, SampleCovariance, SnapshotSet, SnapshotSource};
use toepcov::toeplitzify::{rectify_loading, redundancy_average};
use toepcov::toiep::{solve, write_history_csv, TargetSpectrum};
use toepcov::{Error, HermitianMatrix, Result};

#[derive(Parser, Debug)]
#[command(name = "toepcov", version, about = "Toeplitz covariance estimation experiments")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured trial count.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the scenario's true covariance matrix.
    Model,
    /// Run the Monte Carlo experiment described by the configuration.
    Simulate,
    /// Run the configured estimator chain on one snapshot or sample-covariance file.
    Estimate {
        /// `complex_matrix` snapshot file or `hermitian_matrix` sample covariance.
        #[arg(long)]
        input: PathBuf,
        /// Snapshot count behind a sample-covariance input.
        #[arg(long)]
        t: Option<usize>,
    },
    /// Toeplitz matrix sharing the Maximum Entropy spectrum of a matrix file.
    Reconstruct {
        #[arg(long)]
        input: PathBuf,
    },
    /// Refine the loaded estimate of one sample toward corrected eigenvalues.
    Toiep {
        /// Sample covariance to use instead of a fresh draw.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Overrides the configured iteration limit.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Sphericity likelihood ratios of a candidate against a sample covariance.
    Lr {
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long)]
        sample: PathBuf,
        /// Snapshot count behind the sample covariance.
        #[arg(long)]
        t: usize,
        /// Noise-subspace size of the spiked ratio.
        #[arg(long, default_value_t = 4)]
        noise_dim: usize,
    },
    /// Build (or load from the cache directory) a null sphericity pdf.
    Refpdf {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        t: usize,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::read(path)?,
        None => ExperimentConfig::new(Scenario::Clutter(ClutterScenario::reference()), 85),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> Result<PathBuf> {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.dir.clone()))
        .ok_or_else(|| Error::InvalidInput("an output directory is required (--out)".into()))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.6e}")
    }
}

fn model(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    emit(&format_hermitian(&cfg.scenario.covariance()?), cli.out.as_deref())
}

fn simulate(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let result = run_experiment(&cfg)?;
    write_outputs(&result, &dir)?;
    println!(
        "{:<18} {:>7} {:>8} {:>13} {:>13} {:>13} {:>13}",
        "estimator", "trials", "failed", "P(lmin<0)", "median lmin", "median logLR", "median spiked"
    );
    for s in &result.summaries {
        println!(
            "{:<18} {:>7} {:>8} {:>13} {:>13} {:>13} {:>13}",
            s.estimator.to_string(),
            s.trials,
            s.failures,
            fmt_value(s.negative_fraction),
            fmt_value(s.smallest[0].median),
            fmt_value(s.log_lr.median),
            fmt_value(s.spiked_log_lr.median),
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn read_sample(path: &Path, t: Option<usize>, fallback_t: Option<usize>, seed: u64) -> Result<SampleCovariance> {
    let text = fs::read_to_string(path)?;
    if text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .is_some_and(|l| l.starts_with("complex_matrix"))
    {
        let x = SnapshotSet::new(parse_complex(&text)?, seed)?;
        if let Some(t) = t {
            if t != x.len() {
                return Err(Error::InvalidInput(format!("--t {t} but the file holds {} snapshots", x.len())));
            }
        }
        return sample_covariance(&x);
    }
    let matrix = parse_hermitian(&text)?;
    let t = t
        .or(fallback_t)
        .ok_or_else(|| Error::InvalidInput("a sample-covariance input needs --t".into()))?;
    Ok(SampleCovariance { matrix, t })
}

fn estimate(cli: &Cli, input: &Path, t: Option<usize>) -> Result<()> {
    let mut cfg = load_config(cli)?;
    let sample = read_sample(input, t, cli.config.as_ref().map(|_| cfg.t), cfg.seed)?;
    let n = sample.matrix.dim();
    cfg.t = sample.t;
    // the scenario is the reference only when explicitly configured
    let truth = match &cli.config {
        Some(_) if cfg.scenario.dim() == n => Some(cfg.scenario.covariance()?),
        Some(_) => {
            return Err(Error::InvalidInput(format!(
                "scenario dimension {} does not match the input dimension {n}",
                cfg.scenario.dim()
            )))
        }
        None => None,
    };
    if truth.is_none() {
        cfg.chain.retain(|e| !matches!(e, Estimator::True));
        cfg.scenario = Scenario::Identity(toepcov::harness::config::IdentityScenario { n });
    }
    let dir = out_dir(cli, Some(&cfg))?;
    fs::create_dir_all(&dir)?;
    let ctx = ChainContext::new(&cfg)?;
    let inputs = ctx.prepare(&sample, truth.as_ref())?;
    let mut records: Vec<TrialRecord> = Vec::new();
    for &stage in &cfg.chain {
        match ctx.estimate(stage, &inputs).and_then(|m| ctx.evaluate(0, stage, &m, &inputs).map(|r| (m, r))) {
            Ok((m, r)) => {
                write_matrix(&dir.join(format!("{}.txt", stage.slug())), &m)?;
                println!(
                    "{:<18} lmin {:>13}  logLR {:>13}  spiked {:>13}",
                    stage.to_string(),
                    fmt_value(r.lambda_min()),
                    fmt_value(r.log_lr),
                    fmt_value(r.spiked_log_lr)
                );
                records.push(r);
            }
            Err(e) => {
                println!("{:<18} failed: {e}", stage.to_string());
                records.push(TrialRecord {
                    trial: 0,
                    estimator: stage,
                    smallest: [f64::NAN; 4],
                    spectral_norm_error: f64::NAN,
                    log_lr: f64::NAN,
                    spiked_log_lr: f64::NAN,
                    noise_dim: inputs.noise_dim,
                    elapsed_us: 0,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    write_trials_csv(&records, fs::File::create(dir.join("estimates.csv"))?)?;
    println!("noise dimension {}; wrote {}", inputs.noise_dim, dir.display());
    Ok(())
}

fn reconstruct(cli: &Cli, input: &Path) -> Result<()> {
    let r = reconstruct_toeplitz_detailed(&read_matrix(input)?)?;
    emit(&format_hermitian(&r.matrix), cli.out.as_deref())?;
    eprintln!(
        "prediction roots inside the unit circle: {}; Toeplitz deviation {:.3e}",
        r.prediction.inside_count(),
        r.toeplitz_deviation
    );
    Ok(())
}

fn toiep(cli: &Cli, input: Option<&Path>, iterations: Option<usize>) -> Result<()> {
    let mut cfg = load_config(cli)?;
    if let Some(k) = iterations {
        cfg.toiep.max_iterations = k;
    }
    cfg.chain = vec![Estimator::RaToiep];
    let truth = cfg.scenario.covariance()?;
    let sample = match input {
        Some(path) => SampleCovariance {
            matrix: read_matrix(path)?,
            t: cfg.t,
        },
        None => SnapshotSource::new(&truth)?.sample_covariance(cfg.t, derive_seed(cfg.seed, 0))?,
    };
    let dir = out_dir(cli, Some(&cfg))?;
    fs::create_dir_all(&dir)?;
    let ctx = ChainContext::new(&cfg)?;
    let inputs = ctx.prepare(&sample, Some(&truth))?;
    let correction = inputs.correction.as_ref().map_err(|e| Error::DegenerateInput(e.to_string()))?;
    let loaded = rectify_loading(&redundancy_average(&sample.matrix), correction.smallest())?;
    let target = TargetSpectrum::new(correction.expanded_descending())?;
    let opts = cfg.toiep.options(cfg.spiked_noise_dim.min(sample.matrix.dim()));
    let state = solve(&loaded.lags, &target, &sample, Some(&truth), &opts)?;
    write_history_csv(&state.history, fs::File::create(dir.join("convergence.csv"))?)?;
    write_matrix(&dir.join("initial.txt"), &loaded.matrix)?;
    write_matrix(&dir.join("final.txt"), state.matrix())?;
    let first = &state.history[0];
    let last = state.history.last().expect("history holds the initial state");
    let best = state
        .history
        .iter()
        .filter(|h| h.spiked_log_lr.is_finite())
        .max_by(|a, b| a.spiked_log_lr.total_cmp(&b.spiked_log_lr));
    println!("noise dimension {}", inputs.noise_dim);
    println!("iterations {}", state.iteration);
    println!("eigen distance {:.6} -> {:.6}", first.eigen_distance, last.eigen_distance);
    println!("spiked log-LR {:.4} -> {:.4}", first.spiked_log_lr, last.spiked_log_lr);
    if let Some(b) = best {
        println!("best spiked log-LR {:.4} at iteration {}", b.spiked_log_lr, b.iteration);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn print_report(label: &str, r: &LikelihoodReport) {
    println!("{label:<8} log_lr {:>14.6e}  lr {:>14.6e}{}", r.log_lr, r.lr(), if r.singular { "  (singular)" } else { "" });
}

fn lr(candidate: &Path, sample: &Path, t: usize, noise_dim: usize) -> Result<()> {
    let candidate: HermitianMatrix = read_matrix(candidate)?;
    let sample = SampleCovariance {
        matrix: read_matrix(sample)?,
        t,
    };
    let n = candidate.dim();
    if noise_dim == 0 || noise_dim > n {
        return Err(Error::InvalidInput(format!("noise dimension must lie in 1..={n}")));
    }
    print_report("regular", &sphericity(&candidate, &sample)?);
    print_report("spiked", &spiked_sphericity(&candidate, n - noise_dim, &sample)?);
    let values = hermitian_eig(&candidate)?.values;
    println!("candidate lmin {:.6e}", values[values.len() - 1]);
    Ok(())
}

fn refpdf(cli: &Cli, n: usize, t: usize) -> Result<()> {
    let trials = cli.trials.unwrap_or(1000);
    let seed = cli.seed.unwrap_or(0);
    let dir = cli
        .out
        .clone()
        .ok_or_else(|| Error::InvalidInput("a cache directory is required (--out)".into()))?;
    let pdf = cached_reference_sphericity(&dir, n, t, trials, seed)?;
    println!("n {n} t {t} trials {trials} seed {seed} excluded {}", pdf.excluded);
    for alpha in [0.01, 0.05, 0.5, 0.95] {
        println!("q{alpha:<5} {:.6e}", pdf.quantile(alpha)?);
    }
    println!("wrote {}", dir.join(toepcov::likelihood::ReferencePdf::cache_file_name(n, t, trials, seed)).display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("cannot build worker pool: {e}")))?;
    }
    match &cli.command {
        Command::Model => model(cli),
        Command::Simulate => simulate(cli),
        Command::Estimate { input, t } => estimate(cli, input, *t),
        Command::Reconstruct { input } => reconstruct(cli, input),
        Command::Toiep { input, iterations } => toiep(cli, input.as_deref(), *iterations),
        Command::Lr {
            candidate,
            sample,
            t,
            noise_dim,
        } => lr(candidate, sample, *t, *noise_dim),
        Command::Refpdf { n, t } => refpdf(cli, *n, *t),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
