//! TOML experiment configuration.
//!
//! ```toml
//! t = 85
//! trials = 1000
//! seed = 7
//! chain = ["true", "ra", "ra+loading", "me"]
//!
//! [scenario]
//! kind = "clutter"
//! n = 17
//! w1 = 0.2
//! w2 = 0.1
//! theta_o_deg = 20.0
//! spacing_ratio = 0.5
//! noise_power = 1e-4
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{clutter_covariance, plane_wave_covariance, ClutterScenario, PlaneWaveScenario};
use crate::numerics::HermitianMatrix;
use crate::toiep::ToiepOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Clutter(ClutterScenario),
    PlaneWave(PlaneWaveScenario),
    Identity(IdentityScenario),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityScenario {
    pub n: usize,
}

impl Scenario {
    pub fn dim(&self) -> usize {
        match self {
            Scenario::Clutter(s) => s.n,
            Scenario::PlaneWave(s) => s.n,
            Scenario::Identity(s) => s.n,
        }
    }

    pub fn covariance(&self) -> Result<HermitianMatrix> {
        match self {
            Scenario::Clutter(s) => clutter_covariance(s),
            Scenario::PlaneWave(s) => plane_wave_covariance(s),
            Scenario::Identity(s) => {
                if s.n == 0 {
                    return Err(Error::InvalidInput("identity dimension must be positive".into()));
                }
                Ok(HermitianMatrix::identity(s.n))
            }
        }
    }
}

/// Where the replacement spectrum of `me+replace(..)` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumSource {
    /// Corrected sample eigenvalues.
    Rmt,
    /// Eigenvalues of the true matrix.
    True,
}

/// One estimator stage evaluated per trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Estimator {
    /// The true matrix itself, as a reference.
    True,
    /// The sample covariance.
    Sample,
    Ra,
    RaLoading,
    RaToiep,
    Me,
    MeReplace(SpectrumSource),
}

impl Estimator {
    pub const ALL: [Estimator; 8] = [
        Estimator::True,
        Estimator::Sample,
        Estimator::Ra,
        Estimator::RaLoading,
        Estimator::RaToiep,
        Estimator::Me,
        Estimator::MeReplace(SpectrumSource::Rmt),
        Estimator::MeReplace(SpectrumSource::True),
    ];

    /// File-name friendly label.
    pub fn slug(&self) -> String {
        self.to_string()
            .replace('+', "_")
            .replace(['(', ')'], "_")
            .trim_end_matches('_')
            .to_string()
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::True => "true",
            Estimator::Sample => "sample",
            Estimator::Ra => "ra",
            Estimator::RaLoading => "ra+loading",
            Estimator::RaToiep => "ra+toiep",
            Estimator::Me => "me",
            Estimator::MeReplace(SpectrumSource::Rmt) => "me+replace(rmt)",
            Estimator::MeReplace(SpectrumSource::True) => "me+replace(true)",
        })
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let key: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        Estimator::ALL
            .iter()
            .copied()
            .find(|e| e.to_string() == key)
            .ok_or_else(|| {
                let names: Vec<String> = Estimator::ALL.iter().map(|e| e.to_string()).collect();
                format!("unknown estimator `{s}`, expected one of {}", names.join(", "))
            })
    }
}

impl TryFrom<String> for Estimator {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<Estimator> for String {
    fn from(e: Estimator) -> String {
        e.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Eigenvalues,
    SpectralNorm,
    LogLr,
    SpikedLogLr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToiepSettings {
    pub max_iterations: usize,
    pub step_cap: f64,
    pub stall_tolerance: f64,
    pub stage_switch_tolerance: f64,
    pub line_search: bool,
}

impl Default for ToiepSettings {
    fn default() -> Self {
        let o = ToiepOptions::default();
        Self {
            max_iterations: o.max_iterations,
            step_cap: o.step_cap,
            stall_tolerance: o.stall_tolerance,
            stage_switch_tolerance: o.stage_switch_tolerance,
            line_search: o.line_search,
        }
    }
}

impl ToiepSettings {
    pub fn options(&self, spiked_noise_dim: usize) -> ToiepOptions {
        ToiepOptions {
            max_iterations: self.max_iterations,
            step_cap: self.step_cap,
            stall_tolerance: self.stall_tolerance,
            stage_switch_tolerance: self.stage_switch_tolerance,
            line_search: self.line_search,
            spiked_noise_dim,
            ..ToiepOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Write every stage's matrix of every trial.
    pub dump_matrices: bool,
    /// Record wall-clock stage timings (makes trial records run-dependent).
    pub record_timings: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub t: usize,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::chain")]
    pub chain: Vec<Estimator>,
    #[serde(default = "defaults::metrics")]
    pub metrics: Vec<Metric>,
    /// Quantile level of the noise-order acceptance test.
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::bins")]
    pub bins: usize,
    /// Fixed noise-cluster size for the eigenvalue correction; selected per
    /// trial when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_dim: Option<usize>,
    /// Noise-subspace size of the spiked likelihood ratio (capped at `n`).
    #[serde(default = "defaults::spiked_noise_dim")]
    pub spiked_noise_dim: usize,
    /// Trials per null pdf used by order selection.
    #[serde(default = "defaults::null_trials")]
    pub null_trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub toiep: ToiepSettings,
    #[serde(default)]
    pub output: OutputSettings,
}

mod defaults {
    use super::{Estimator, Metric};

    pub fn trials() -> usize {
        1000
    }
    pub fn chain() -> Vec<Estimator> {
        vec![Estimator::True, Estimator::Ra, Estimator::RaLoading, Estimator::Me]
    }
    pub fn metrics() -> Vec<Metric> {
        vec![Metric::Eigenvalues, Metric::SpectralNorm, Metric::LogLr, Metric::SpikedLogLr]
    }
    pub fn alpha() -> f64 {
        0.05
    }
    pub fn bins() -> usize {
        50
    }
    pub fn spiked_noise_dim() -> usize {
        4
    }
    pub fn null_trials() -> usize {
        1000
    }
}

impl ExperimentConfig {
    /// Defaults around a scenario and snapshot count.
    pub fn new(scenario: Scenario, t: usize) -> Self {
        Self {
            scenario,
            t,
            trials: defaults::trials(),
            seed: 0,
            chain: defaults::chain(),
            metrics: defaults::metrics(),
            alpha: defaults::alpha(),
            bins: defaults::bins(),
            noise_dim: None,
            spiked_noise_dim: defaults::spiked_noise_dim(),
            null_trials: defaults::null_trials(),
            threads: None,
            toiep: ToiepSettings::default(),
            output: OutputSettings::default(),
        }
    }

    pub fn records(&self, m: Metric) -> bool {
        self.metrics.contains(&m)
    }

    /// Checks cross-field invariants; errors name the offending field.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let n = self.scenario.dim();
        if n == 0 {
            return Err(("n", "dimension must be positive".into()));
        }
        if self.t == 0 {
            return Err(("t", "snapshot count must be positive".into()));
        }
        if self.trials == 0 {
            return Err(("trials", "at least one trial is required".into()));
        }
        if self.chain.is_empty() {
            return Err(("chain", "estimator chain is empty".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if self.bins == 0 {
            return Err(("bins", "at least one bin is required".into()));
        }
        if let Some(d) = self.noise_dim {
            if d > n {
                return Err(("noise_dim", format!("{d} exceeds the dimension {n}")));
            }
        }
        if self.spiked_noise_dim == 0 {
            return Err(("spiked_noise_dim", "must be positive".into()));
        }
        if self.null_trials == 0 {
            return Err(("null_trials", "at least one null trial is required".into()));
        }
        if self.threads == Some(0) {
            return Err(("threads", "worker count must be positive".into()));
        }
        if !(self.toiep.step_cap > 0.0) {
            return Err(("step_cap", "must be positive".into()));
        }
        self.scenario
            .covariance()
            .map(|_| ())
            .map_err(|e| ("scenario", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|(field, msg)| Error::parse(0, field, msg))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
        cfg.check()
            .map_err(|(field, msg)| Error::parse(line_of_key(text, field), field, msg))?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(format!("cannot serialize config: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

/// 1-based line of the first `key = ...` assignment, 0 if absent.
fn line_of_key(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            l.trim_start()
                .strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(0, |i| i + 1)
}

fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let message = e.message().to_string();
    let line = e
        .span()
        .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    let quoted = message
        .split('`')
        .nth(1)
        .filter(|_| message.contains("field"))
        .map(str::to_string);
    let field = quoted.unwrap_or_else(|| {
        text.lines()
            .nth(line.saturating_sub(1))
            .and_then(|l| l.split_once('='))
            .map(|(k, _)| k.trim().to_string())
            .unwrap_or_else(|| "document".into())
    });
    Error::parse(line, field, message)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
t = 85
trials = 10
seed = 3
chain = ["ra", "ra+loading", "me+replace(rmt)"]

[scenario]
kind = "clutter"
n = 17
w1 = 0.2
w2 = 0.1
theta_o_deg = 20.0
spacing_ratio = 0.5
noise_power = 1e-4
"#;

    #[test]
    fn parses_basic_config() {
        let cfg = ExperimentConfig::from_toml_str(BASIC).unwrap();
        assert_eq!(cfg.t, 85);
        assert_eq!(cfg.trials, 10);
        assert_eq!(cfg.scenario.dim(), 17);
        assert_eq!(
            cfg.chain,
            vec![Estimator::Ra, Estimator::RaLoading, Estimator::MeReplace(SpectrumSource::Rmt)]
        );
        assert_eq!(cfg.bins, 50);
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.spiked_noise_dim, 4);
        assert_eq!(cfg.toiep.max_iterations, 5000);
    }

    #[test]
    fn round_trips_through_text() {
        let mut cfg = ExperimentConfig::from_toml_str(BASIC).unwrap();
        cfg.noise_dim = Some(5);
        cfg.output.dir = Some("out".into());
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        cfg.write(&path).unwrap();
        assert_eq!(ExperimentConfig::read(&path).unwrap(), cfg);
    }

    #[test]
    fn other_scenarios_parse() {
        let text = "t = 10\n[scenario]\nkind = \"identity\"\nn = 3\n";
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.scenario.covariance().unwrap(), HermitianMatrix::identity(3));
        let text = "t = 10\n[scenario]\nkind = \"plane_wave\"\nn = 4\nangles_deg = [0.0, 30.0]\npowers = [1.0, 2.0]\nspacing_ratio = 0.5\nnoise_power = 0.1\n";
        assert_eq!(ExperimentConfig::from_toml_str(text).unwrap().scenario.dim(), 4);
    }

    fn parse_err(text: &str) -> (usize, String) {
        match ExperimentConfig::from_toml_str(text) {
            Err(Error::Parse { line, field, .. }) => (line, field),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let (_, field) = parse_err(&format!("{BASIC}bogus = 1\n"));
        assert_eq!(field, "bogus");
        let (line, field) = parse_err(&BASIC.replace("t = 85", "t = 85\nsnapshots = 3"));
        assert_eq!(field, "snapshots");
        assert!(line > 0);
        let (_, field) = parse_err(&BASIC.replace("w1 = 0.2", "w1 = 0.2\nw3 = 0.1"));
        assert_eq!(field, "w3");
    }

    #[test]
    fn bad_values_name_the_field() {
        let (line, field) = parse_err(&BASIC.replace("trials = 10", "trials = 0"));
        assert_eq!((line, field.as_str()), (3, "trials"));
        let (line, field) = parse_err(&BASIC.replace("t = 85", "t = \"many\""));
        assert_eq!((line, field.as_str()), (2, "t"));
        let (_, field) = parse_err(&BASIC.replace("\"ra\",", "\"rx\","));
        assert_eq!(field, "chain");
        let (_, field) = parse_err(&BASIC.replace("t = 85\n", ""));
        assert_eq!(field, "t");
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(e.to_string().parse::<Estimator>().unwrap(), e);
        }
        assert_eq!(Estimator::MeReplace(SpectrumSource::Rmt).slug(), "me_replace_rmt");
        assert_eq!(" me + replace( true )".parse::<Estimator>().unwrap(), Estimator::MeReplace(SpectrumSource::True));
        assert!("ra+foo".parse::<Estimator>().is_err());
    }
}
