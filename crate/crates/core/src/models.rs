//! Ground-truth Toeplitz covariance scenarios.
//!
//! Both scenarios are built from a lag vector, so the emitted matrices are
//! exactly Toeplitz: entry `(i, j)` depends only on `j - i`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{HermitianMatrix, C64};
use crate::toeplitzify::ToeplitzLags;

/// HF over-the-horizon radar clutter: a wide sinc band plus a half-power
/// narrower band steered to `theta_o_deg`, over a white noise floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterScenario {
    pub n: usize,
    pub w1: f64,
    pub w2: f64,
    pub theta_o_deg: f64,
    pub spacing_ratio: f64,
    pub noise_power: f64,
}

impl ClutterScenario {
    /// `N = 17, W1 = 0.2, W2 = 0.1, θo = 20°, d/λ = 0.5, σ² = 1e-4`.
    pub fn reference() -> Self {
        Self {
            n: 17,
            w1: 0.2,
            w2: 0.1,
            theta_o_deg: 20.0,
            spacing_ratio: 0.5,
            noise_power: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("clutter dimension must be positive".into()));
        }
        check_bandwidth(self.w1)?;
        check_bandwidth(self.w2)?;
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise power must be positive, got {}",
                self.noise_power
            )));
        }
        if !self.theta_o_deg.is_finite() || !self.spacing_ratio.is_finite() {
            return Err(Error::InvalidInput("non-finite steering parameters".into()));
        }
        Ok(())
    }

    pub fn lags(&self) -> Result<ToeplitzLags> {
        self.validate()?;
        let phase_step = steering_phase_step(self.spacing_ratio, self.theta_o_deg);
        let lags = (1..self.n)
            .map(|k| {
                let steer = C64::from_polar(1.0, -phase_step * k as f64);
                C64::new(sinc_lag(self.w1, k), 0.0) + steer * (0.5 * sinc_lag(self.w2, k))
            })
            .collect();
        Ok(ToeplitzLags::new(
            2.0 * self.w1 + 0.5 * 2.0 * self.w2 + self.noise_power,
            lags,
        ))
    }
}

/// Independent plane waves on a uniform linear array over white noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneWaveScenario {
    pub n: usize,
    pub angles_deg: Vec<f64>,
    pub powers: Vec<f64>,
    pub spacing_ratio: f64,
    pub noise_power: f64,
}

impl PlaneWaveScenario {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("array dimension must be positive".into()));
        }
        if self.angles_deg.len() != self.powers.len() {
            return Err(Error::InvalidInput(format!(
                "{} angles but {} powers",
                self.angles_deg.len(),
                self.powers.len()
            )));
        }
        if self.angles_deg.len() >= self.n {
            return Err(Error::InvalidInput(format!(
                "{} sources do not fit a {}-element array",
                self.angles_deg.len(),
                self.n
            )));
        }
        if self.powers.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidInput("source powers must be positive".into()));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(Error::InvalidInput("noise power must be positive".into()));
        }
        Ok(())
    }

    pub fn lags(&self) -> Result<ToeplitzLags> {
        self.validate()?;
        let steps: Vec<f64> = self
            .angles_deg
            .iter()
            .map(|&a| steering_phase_step(self.spacing_ratio, a))
            .collect();
        let lags = (1..self.n)
            .map(|k| {
                steps
                    .iter()
                    .zip(&self.powers)
                    .map(|(&s, &p)| C64::from_polar(p, -s * k as f64))
                    .sum()
            })
            .collect();
        let t0 = self.noise_power + self.powers.iter().sum::<f64>();
        Ok(ToeplitzLags::new(t0, lags))
    }
}

fn check_bandwidth(w: f64) -> Result<()> {
    if !(w > 0.0 && w <= 0.5) {
        return Err(Error::InvalidInput(format!(
            "bandwidth must lie in (0, 0.5], got {w}"
        )));
    }
    Ok(())
}

/// Inter-element phase increment `2π (d/λ) sin θ`.
fn steering_phase_step(spacing_ratio: f64, angle_deg: f64) -> f64 {
    2.0 * PI * spacing_ratio * angle_deg.to_radians().sin()
}

/// `sin(2π w k) / (π k)`, with the removable singularity at `k = 0` set to `2w`.
fn sinc_lag(w: f64, k: usize) -> f64 {
    if k == 0 {
        2.0 * w
    } else {
        let k = k as f64;
        (2.0 * PI * w * k).sin() / (PI * k)
    }
}

/// Real symmetric Toeplitz matrix `[sin(2πw(i−j)) / (π(i−j))]`.
pub fn sinc_matrix(n: usize, w: f64) -> Result<HermitianMatrix> {
    check_bandwidth(w)?;
    if n == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    let lags = (1..n).map(|k| C64::new(sinc_lag(w, k), 0.0)).collect();
    ToeplitzLags::new(sinc_lag(w, 0), lags).to_matrix()
}

/// `sinc(W1) + ½ D(θo) sinc(W2) D(θo)^H + σ² I`.
pub fn clutter_covariance(s: &ClutterScenario) -> Result<HermitianMatrix> {
    s.lags()?.to_matrix()
}

/// `σ² I + A D A^H` with steering vectors `a(θ)_k = exp(i 2π (d/λ) k sin θ)`.
pub fn plane_wave_covariance(s: &PlaneWaveScenario) -> Result<HermitianMatrix> {
    s.lags()?.to_matrix()
}
