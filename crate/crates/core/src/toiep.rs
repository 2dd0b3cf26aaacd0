//! Alternating first-order Newton refinement of a Hermitian Toeplitz matrix
//! toward a prescribed spectrum.
//!
//! The iterate is parametrized by `t_0` (never modified), the lag moduli and
//! the lag phases. A phase stage adjusts the `n − 1` phases with the moduli
//! fixed; a moduli stage adjusts the `n − 1` moduli with the phases fixed.
//! Each step solves the linearized eigenvalue equations `Λ* ≈ Λ + B δ` in the
//! least-squares sense, with eigenvalues paired in descending order.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::likelihood::{sphericity, spiked_sphericity};
use crate::numerics::{hermitian_eig, EigenDecomposition, HermitianMatrix, C64};
use crate::sampling::SampleCovariance;
use crate::toeplitzify::{wrap_phase, ToeplitzLags};

const RIDGE: f64 = 1e-12;
const SINGULAR_RELATIVE: f64 = 1e-10;
const DEGENERATE_GAP: f64 = 1e-10;

/// Target eigenvalues, descending and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpectrum {
    values: Vec<f64>,
}

impl TargetSpectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty target spectrum".into()));
        }
        if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("target eigenvalues must be positive".into()));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput("target eigenvalues must be descending".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `‖Λ − Λ*‖₂` with both spectra descending.
    pub fn distance(&self, values: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(values)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct ToiepOptions {
    pub max_iterations: usize,
    /// Largest allowed `|δ_k|` (radians for phases, lag units for moduli).
    pub step_cap: f64,
    /// Stop once `‖Λ − Λ*‖₂` falls to this value.
    pub stall_tolerance: f64,
    /// Switch stage when one step improves the distance by less than this
    /// fraction of its current value.
    pub stage_switch_tolerance: f64,
    pub line_search: bool,
    /// Smallest step scale tried by the line search.
    pub min_step_scale: f64,
    /// Noise-subspace size used for the spiked likelihood trace.
    pub spiked_noise_dim: usize,
}

impl Default for ToiepOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            step_cap: 0.05,
            stall_tolerance: 1e-10,
            stage_switch_tolerance: 1e-4,
            line_search: true,
            min_step_scale: 1e-6,
            spiked_noise_dim: 4,
        }
    }
}

impl ToiepOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_cap > 0.0) {
            return Err(Error::InvalidInput("step cap must be positive".into()));
        }
        if !(self.min_step_scale > 0.0 && self.min_step_scale <= 1.0) {
            return Err(Error::InvalidInput("minimum step scale must lie in (0, 1]".into()));
        }
        if !(self.stall_tolerance >= 0.0) || !(self.stage_switch_tolerance >= 0.0) {
            return Err(Error::InvalidInput("tolerances must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Phase,
    Moduli,
}

impl Stage {
    pub fn other(self) -> Self {
        match self {
            Stage::Phase => Stage::Moduli,
            Stage::Moduli => Stage::Phase,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Phase => "phase",
            Stage::Moduli => "moduli",
        })
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub stage: Stage,
    pub eigen_distance: f64,
    pub log_lr: f64,
    pub spiked_log_lr: f64,
    /// `‖T − reference‖₂`, NaN without a reference matrix.
    pub spectral_norm_error: f64,
}

/// Current iterate of the refinement.
#[derive(Debug, Clone)]
pub struct NewtonState {
    t0: f64,
    moduli: Vec<f64>,
    phases: Vec<f64>,
    lags: ToeplitzLags,
    matrix: HermitianMatrix,
    pub eig: EigenDecomposition,
    pub iteration: usize,
    pub history: Vec<HistoryEntry>,
}

impl NewtonState {
    pub fn new(initial: &ToeplitzLags) -> Result<Self> {
        if initial.dim() < 2 {
            return Err(Error::InvalidInput("refinement needs n ≥ 2".into()));
        }
        Self::from_parts(initial.t0(), initial.moduli(), initial.phases(), 0, Vec::new())
    }

    fn from_parts(
        t0: f64,
        moduli: Vec<f64>,
        phases: Vec<f64>,
        iteration: usize,
        history: Vec<HistoryEntry>,
    ) -> Result<Self> {
        let lags = ToeplitzLags::from_polar(t0, &moduli, &phases)?;
        let matrix = lags.to_matrix()?;
        let eig = hermitian_eig(&matrix)?;
        Ok(Self {
            t0,
            moduli,
            phases,
            lags,
            matrix,
            eig,
            iteration,
            history,
        })
    }

    pub fn lags(&self) -> &ToeplitzLags {
        &self.lags
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn moduli(&self) -> &[f64] {
        &self.moduli
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn dim(&self) -> usize {
        self.moduli.len() + 1
    }

    pub fn distance(&self, target: &TargetSpectrum) -> f64 {
        target.distance(&self.eig.values)
    }

    fn scale(&self) -> f64 {
        self.t0.abs() + self.moduli.iter().sum::<f64>()
    }
}

/// Result of a single stage step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: NewtonState,
    /// Whether the iterate changed.
    pub accepted: bool,
    /// Step scale `c` actually applied (0 when rejected).
    pub scale: f64,
}

/// `c_k(u) = Σ_j conj(u_j) u_{j+k}` for `k = 1..n−1`.
fn lag_correlations(u: &[C64]) -> Vec<C64> {
    let n = u.len();
    (1..n)
        .map(|k| (0..n - k).map(|j| u[j].conj() * u[j + k]).sum())
        .collect()
}

/// Phase sensitivity `B[m][k−1] = ∂λ_m/∂ψ_k = −2 Im(t_k c_k(u_m))`.
pub fn phase_sensitivity(lags: &ToeplitzLags, eig: &EigenDecomposition) -> DMatrix<f64> {
    let n = eig.dim();
    let mut b = DMatrix::zeros(n, n - 1);
    for m in 0..n {
        let c = lag_correlations(&eig.vector(m));
        for k in 1..n {
            b[(m, k - 1)] = -2.0 * (lags.lag(k) * c[k - 1]).im;
        }
    }
    b
}

/// Modulus sensitivity `Ḃ[m][k−1] = ∂λ_m/∂|t_k| = 2 Re(e^{iψ_k} c_k(u_m))`.
pub fn moduli_sensitivity(phases: &[f64], eig: &EigenDecomposition) -> DMatrix<f64> {
    let n = eig.dim();
    let mut b = DMatrix::zeros(n, n - 1);
    for m in 0..n {
        let c = lag_correlations(&eig.vector(m));
        for k in 1..n {
            b[(m, k - 1)] = 2.0 * (C64::from_polar(1.0, phases[k - 1]) * c[k - 1]).re;
        }
    }
    b
}

/// Ridge-regularized least-squares solution of `B δ ≈ r`.
fn least_squares(b: &DMatrix<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
    let mut normal = b.transpose() * b;
    let p = normal.nrows();
    let ridge = RIDGE * normal.trace() / b.nrows() as f64;
    for i in 0..p {
        normal[(i, i)] += ridge;
    }
    let chol = normal.cholesky().ok_or(Error::SingularSensitivity)?;
    Ok(chol.solve(&(b.transpose() * r)))
}

fn min_gap(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| (w[0] - w[1]).abs())
        .fold(f64::INFINITY, f64::min)
}

fn step(state: &NewtonState, target: &TargetSpectrum, opts: &ToiepOptions, stage: Stage) -> Result<StepOutcome> {
    opts.validate()?;
    let n = state.dim();
    if target.dim() != n {
        return Err(Error::InvalidInput(format!(
            "target has {} eigenvalues, iterate has dimension {n}",
            target.dim()
        )));
    }
    let residual = DVector::from_iterator(
        n,
        target.values().iter().zip(&state.eig.values).map(|(a, b)| a - b),
    );
    if residual.iter().all(|&r| r == 0.0) {
        return Ok(StepOutcome {
            state: state.clone(),
            accepted: false,
            scale: 0.0,
        });
    }

    let b = match stage {
        Stage::Phase => phase_sensitivity(&state.lags, &state.eig),
        Stage::Moduli => moduli_sensitivity(&state.phases, &state.eig),
    };
    if b.norm() <= SINGULAR_RELATIVE * state.scale() {
        return Err(Error::SingularSensitivity);
    }
    let delta = least_squares(&b, &residual)?;
    let largest = delta.amax();
    if largest == 0.0 || !largest.is_finite() {
        return Err(Error::SingularSensitivity);
    }

    let mut c = (opts.step_cap / largest).min(1.0);
    if min_gap(&state.eig.values) < DEGENERATE_GAP * state.eig.max_value().abs() {
        c *= 0.5;
    }
    let current = state.distance(target);
    let apply = |c: f64| -> Result<NewtonState> {
        let (moduli, phases) = match stage {
            Stage::Phase => (
                state.moduli.clone(),
                state
                    .phases
                    .iter()
                    .zip(delta.iter())
                    .map(|(&p, &d)| wrap_phase(p + c * d))
                    .collect(),
            ),
            Stage::Moduli => (
                state
                    .moduli
                    .iter()
                    .zip(delta.iter())
                    .map(|(&m, &d)| (m + c * d).max(0.0))
                    .collect(),
                state.phases.clone(),
            ),
        };
        NewtonState::from_parts(state.t0, moduli, phases, state.iteration, state.history.clone())
    };

    if !opts.line_search {
        let next = apply(c)?;
        return Ok(StepOutcome {
            state: next,
            accepted: true,
            scale: c,
        });
    }
    while c >= opts.min_step_scale {
        let next = apply(c)?;
        if next.distance(target) < current {
            return Ok(StepOutcome {
                state: next,
                accepted: true,
                scale: c,
            });
        }
        c *= 0.5;
    }
    Ok(StepOutcome {
        state: state.clone(),
        accepted: false,
        scale: 0.0,
    })
}

/// One least-squares update of the lag phases.
pub fn phase_step(state: &NewtonState, target: &TargetSpectrum, opts: &ToiepOptions) -> Result<StepOutcome> {
    step(state, target, opts, Stage::Phase)
}

/// One least-squares update of the lag moduli (clamped at zero).
pub fn moduli_step(state: &NewtonState, target: &TargetSpectrum, opts: &ToiepOptions) -> Result<StepOutcome> {
    step(state, target, opts, Stage::Moduli)
}

fn record(
    state: &NewtonState,
    stage: Stage,
    target: &TargetSpectrum,
    sample: &SampleCovariance,
    reference: Option<&HermitianMatrix>,
    opts: &ToiepOptions,
) -> HistoryEntry {
    let n = state.dim();
    let log_lr = sphericity(&state.matrix, sample)
        .map(|r| r.log_lr)
        .unwrap_or(f64::NAN);
    let noise = opts.spiked_noise_dim.clamp(1, n);
    let spiked_log_lr = spiked_sphericity(&state.matrix, n - noise, sample)
        .map(|r| r.log_lr)
        .unwrap_or(f64::NAN);
    let spectral_norm_error = reference
        .and_then(|r| state.matrix.difference(r).ok())
        .and_then(|d| d.spectral_norm().ok())
        .unwrap_or(f64::NAN);
    HistoryEntry {
        iteration: state.iteration,
        stage,
        eigen_distance: state.distance(target),
        log_lr,
        spiked_log_lr,
        spectral_norm_error,
    }
}

/// Alternating phase and moduli refinement from `initial` toward `target`.
///
/// The history holds the initial iterate (iteration 0) and one entry per
/// iteration. A stage is abandoned when its step is rejected, reports a
/// singular sensitivity, or improves the distance by less than
/// `stage_switch_tolerance` relative; the run stops early when neither
/// stage can make progress.
pub fn solve(
    initial: &ToeplitzLags,
    target: &TargetSpectrum,
    sample: &SampleCovariance,
    reference: Option<&HermitianMatrix>,
    opts: &ToiepOptions,
) -> Result<NewtonState> {
    opts.validate()?;
    if target.dim() != initial.dim() {
        return Err(Error::InvalidInput(format!(
            "target has {} eigenvalues, initial matrix has dimension {}",
            target.dim(),
            initial.dim()
        )));
    }
    let mut state = NewtonState::new(initial)?;
    let mut stage = Stage::Phase;
    let entry = record(&state, stage, target, sample, reference, opts);
    state.history.push(entry);

    let mut failed_stages = 0;
    while state.iteration < opts.max_iterations {
        let before = state.distance(target);
        if before <= opts.stall_tolerance {
            break;
        }
        let outcome = match step(&state, target, opts, stage) {
            Ok(o) => Some(o),
            Err(Error::SingularSensitivity) => None,
            Err(e) => return Err(e),
        };
        let progressed = match outcome {
            Some(o) if o.accepted => {
                let history = std::mem::take(&mut state.history);
                state = o.state;
                state.history = history;
                true
            }
            _ => false,
        };
        state.iteration += 1;
        let entry = record(&state, stage, target, sample, reference, opts);
        state.history.push(entry);

        let after = state.distance(target);
        if !progressed {
            failed_stages += 1;
            if failed_stages >= 2 {
                break;
            }
            stage = stage.other();
        } else {
            failed_stages = 0;
            if before - after < opts.stage_switch_tolerance * before {
                stage = stage.other();
            }
        }
    }
    Ok(state)
}

/// Writes the convergence trace as CSV.
pub fn write_history_csv<W: Write>(history: &[HistoryEntry], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "iteration",
        "stage",
        "eigen_distance",
        "log_lr",
        "spiked_log_lr",
        "spectral_norm_error",
    ])?;
    for h in history {
        out.write_record([
            h.iteration.to_string(),
            h.stage.to_string(),
            format!("{:.16e}", h.eigen_distance),
            format!("{:.16e}", h.log_lr),
            format!("{:.16e}", h.spiked_log_lr),
            format!("{:.16e}", h.spectral_norm_error),
        ])?;
    }
    out.flush()?;
    Ok(())
}
