//! Shot-noise-limited magnetometer sensitivity under UDD.
//!
//! For a telegraph signal switching in sync with the pulses the probe picks
//! up the full phase `γ B τ`, giving `η(τ) = exp[Σ(Γ_k τ)^{2k+2}] / (C γ √τ)`.
//! Controlled AC signals lose a factor π/2, randomly fluctuating fields a
//! factor `2Θ_ext`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{NoiseEnvironment, PhysicalConstants};
use crate::coherence::udd_model;
use crate::dephasing::DephasingModel;
use crate::error::{domain, Error, Result};
use crate::numeric::bisect_increasing;

/// Pulse counts over which `f_e` is calibrated when none is configured.
pub const DEFAULT_BOUND_RANGE: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    /// Readout efficiency C, in (0, 1].
    pub readout: f64,
    /// Probe gyromagnetic ratio (rad s⁻¹ T⁻¹).
    pub gamma: f64,
    /// π-pulse duration (s); zero for ideal instantaneous pulses.
    pub pulse_width: f64,
    /// Fractional contrast lost per pulse.
    pub pulse_error: f64,
    /// Prefactor of the analytic upper bound; calibrated when `None`.
    pub f_e: Option<f64>,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            readout: 1.0,
            gamma: PhysicalConstants::CODATA.gamma_e,
            pulse_width: 0.0,
            pulse_error: 0.01,
            f_e: None,
        }
    }
}

impl MeasurementConfig {
    /// Instantaneous, error-free pulses.
    pub fn ideal() -> Self {
        Self {
            pulse_error: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.readout > 0.0 && self.readout <= 1.0) {
            return Err(domain(format!(
                "readout efficiency must lie in (0, 1], got {}",
                self.readout
            )));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(domain(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.pulse_width.is_finite() && self.pulse_width >= 0.0) {
            return Err(domain(format!(
                "pulse width must be non-negative, got {}",
                self.pulse_width
            )));
        }
        if !(0.0..1.0).contains(&self.pulse_error) {
            return Err(domain(format!(
                "pulse error must lie in [0, 1), got {}",
                self.pulse_error
            )));
        }
        if let Some(f_e) = self.f_e {
            if !(f_e.is_finite() && f_e > 0.0) {
                return Err(domain(format!("f_e must be positive, got {f_e}")));
            }
        }
        Ok(())
    }

    /// Rabi frequency of a π rotation lasting `pulse_width`.
    pub fn rabi_frequency(&self) -> Option<f64> {
        (self.pulse_width > 0.0).then(|| PI / self.pulse_width)
    }
}

/// Kind of signal being detected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Mode {
    /// Square wave switching in sync with the pulses.
    Telegraph,
    /// Sinusoid with nodes on the pulses.
    Ac,
    /// Random field with fluctuation-regime number `theta_ext`.
    Fluctuating { theta_ext: f64 },
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Telegraph => "telegraph",
            Mode::Ac => "ac",
            Mode::Fluctuating { .. } => "fluctuating",
        }
    }

    /// Factor relative to the telegraph sensitivity.
    pub fn factor(&self) -> Result<f64> {
        match *self {
            Mode::Telegraph => Ok(1.0),
            Mode::Ac => Ok(PI / 2.0),
            Mode::Fluctuating { theta_ext } => {
                if !(theta_ext >= 1.0) {
                    return Err(Error::Regime(format!(
                        "fluctuating-field sensitivity needs theta_ext >= 1, got {theta_ext}"
                    )));
                }
                Ok(2.0 * theta_ext)
            }
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    /// `telegraph`, `ac`, or `fluctuating:<theta_ext>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "telegraph" | "ts" => Ok(Mode::Telegraph),
            "ac" => Ok(Mode::Ac),
            _ => {
                let theta = s
                    .strip_prefix("fluctuating:")
                    .ok_or_else(|| domain(format!("unknown mode {s:?}")))?;
                let theta_ext = theta
                    .parse::<f64>()
                    .map_err(|_| domain(format!("bad theta_ext in {s:?}")))?;
                Ok(Mode::Fluctuating { theta_ext })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub pulses: usize,
    /// Interrogation time (s).
    pub tau: f64,
    /// Sensitivity (T Hz^-1/2), including `penalty`.
    pub eta: f64,
    pub mode: Mode,
    /// Multiplicative pulse-imperfection factor, ≥ 1.
    pub penalty: f64,
}

/// Telegraph sensitivity for a given dephasing model.
pub fn eta_for_model(model: &DephasingModel, tau: f64, cfg: &MeasurementConfig) -> f64 {
    (model.decay_exponent(tau) - (cfg.readout * cfg.gamma * tau.sqrt()).ln()).exp()
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(domain(format!(
            "interrogation time must be positive, got {tau}"
        )))
    }
}

/// `η_ts` under `udd(n)` at interrogation time `tau`.
pub fn eta_telegraph(
    n: usize,
    tau: f64,
    env: &NoiseEnvironment,
    cfg: &MeasurementConfig,
) -> Result<f64> {
    check_tau(tau)?;
    cfg.validate()?;
    let model = udd_model(n, env, cfg.gamma)?;
    Ok(eta_for_model(&model, tau, cfg))
}

/// `(π/2) η_ts`.
pub fn eta_ac(n: usize, tau: f64, env: &NoiseEnvironment, cfg: &MeasurementConfig) -> Result<f64> {
    Ok(PI / 2.0 * eta_telegraph(n, tau, env, cfg)?)
}

/// `2 Θ_ext η_ts`, valid for `Θ_ext ≥ 1`.
pub fn eta_fluctuating(
    n: usize,
    tau: f64,
    env: &NoiseEnvironment,
    theta_ext: f64,
    cfg: &MeasurementConfig,
) -> Result<f64> {
    let factor = Mode::Fluctuating { theta_ext }.factor()?;
    Ok(factor * eta_telegraph(n, tau, env, cfg)?)
}

/// Sensitivity in any mode.
pub fn eta_in_mode(
    n: usize,
    tau: f64,
    env: &NoiseEnvironment,
    mode: Mode,
    cfg: &MeasurementConfig,
) -> Result<f64> {
    let factor = mode.factor()?;
    Ok(factor * eta_telegraph(n, tau, env, cfg)?)
}

/// Motional-narrowing decay rate `½ γ² σ_ext² τ_ext` of a fast external field.
pub fn gamma_ext(sigma_ext: f64, tau_ext: f64, cfg: &MeasurementConfig) -> Result<f64> {
    if !(sigma_ext.is_finite() && sigma_ext >= 0.0) {
        return Err(domain(format!(
            "sigma_ext must be non-negative, got {sigma_ext}"
        )));
    }
    check_tau(tau_ext)?;
    Ok(0.5 * cfg.gamma * cfg.gamma * sigma_ext * sigma_ext * tau_ext)
}

/// Optimal interrogation time when only the order-`order` rate `rate` acts:
/// the stationary point of `τ^{-1/2} exp[(Γτ)^{2s+2}]`,
/// `τ* = Γ⁻¹ (4s+4)^{-1/(2s+2)}`.
pub fn leading_order_optimum(rate: f64, order: usize) -> f64 {
    let p = (2 * order + 2) as f64;
    (2.0 * p).powf(-1.0 / p) / rate
}

/// Minimizes [`eta_for_model`] over `τ ∈ (0, τ_c]`. Returns `(τ*, η*)`.
///
/// `ln η` is convex in `ln τ`, with derivative `Σ(2k+2)(Γ_k τ)^{2k+2} − ½`;
/// the stationary point is bracketed above by the leading-order optimum of
/// the lowest retained rate.
pub fn optimal_tau_for_model(model: &DephasingModel, cfg: &MeasurementConfig) -> (f64, f64) {
    let ceiling = model.tau_c();
    let stationarity = |t: f64| model.log_derivative(t) - 0.5;
    let tau = match model.rates().first() {
        Some(lead) => {
            let seed = leading_order_optimum(lead.value, lead.order).min(ceiling);
            if stationarity(seed) <= 0.0 {
                seed
            } else {
                bisect_increasing(stationarity, 0.0, seed, 1e-13).unwrap_or(seed)
            }
        }
        None => ceiling,
    };
    (tau, eta_for_model(model, tau, cfg))
}

/// Optimal interrogation time and telegraph sensitivity under `udd(n)`.
pub fn optimal_tau(
    n: usize,
    env: &NoiseEnvironment,
    cfg: &MeasurementConfig,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    let model = udd_model(n, env, cfg.gamma)?;
    Ok(optimal_tau_for_model(&model, cfg))
}

/// Smallest `f_e` for which the analytic bound dominates the optimized
/// sensitivity at every pulse count in `1..=n_max`.
pub fn calibrate_fe(env: &NoiseEnvironment, cfg: &MeasurementConfig, n_max: usize) -> Result<f64> {
    if n_max == 0 {
        return Err(domain("calibration range must include n = 1"));
    }
    let theta = env.theta(cfg.gamma);
    let scale = cfg.readout * cfg.gamma;
    let values = (1..=n_max)
        .into_par_iter()
        .map(|n| {
            let (_, eta) = optimal_tau(n, env, cfg)?;
            Ok((scale * eta).powi(2) * theta.powf(1.0 / n as f64))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.into_iter().fold(0.0, f64::max))
}

/// `η₊ = (1/Cγ) √(f_e Θ^{-1/n})`.
pub fn eta_upper_bound(n: usize, env: &NoiseEnvironment, cfg: &MeasurementConfig) -> Result<f64> {
    if n == 0 {
        return Err(domain("upper bound is undefined for n = 0"));
    }
    cfg.validate()?;
    let f_e = match cfg.f_e {
        Some(f) => f,
        None => calibrate_fe(env, cfg, DEFAULT_BOUND_RANGE.max(n))?,
    };
    let theta = env.theta(cfg.gamma);
    Ok((f_e * theta.powf(-1.0 / n as f64)).sqrt() / (cfg.readout * cfg.gamma))
}

/// Worsening of the sensitivity from `n` imperfect pulses:
/// `(1-ε)^{-(n+1)} [1 + (n+1)/4 (√π γ σ₀ / Ω)⁴]` with `Ω = π / t_π`.
pub fn pulse_penalty(n: usize, env: &NoiseEnvironment, cfg: &MeasurementConfig) -> f64 {
    let count = (n + 1) as f64;
    let contrast = (1.0 - cfg.pulse_error).powf(-count);
    let finite_width = match cfg.rabi_frequency() {
        Some(omega) => {
            let x = PI.sqrt() * cfg.gamma * env.sigma0 / omega;
            1.0 + count / 4.0 * x.powi(4)
        }
        None => 1.0,
    };
    contrast * finite_width
}

/// Optimized sensitivity for every pulse count in `0..=n_max`.
pub fn sensitivity_sweep(
    env: &NoiseEnvironment,
    cfg: &MeasurementConfig,
    mode: Mode,
    n_max: usize,
    with_penalty: bool,
) -> Result<Vec<SensitivityPoint>> {
    cfg.validate()?;
    let factor = mode.factor()?;
    (0..=n_max)
        .into_par_iter()
        .map(|n| {
            let (tau, eta) = optimal_tau(n, env, cfg)?;
            let penalty = if with_penalty {
                pulse_penalty(n, env, cfg)
            } else {
                1.0
            };
            Ok(SensitivityPoint {
                pulses: n,
                tau,
                eta: factor * eta * penalty,
                mode,
                penalty,
            })
        })
        .collect()
}

/// Pulse count minimizing `penalty(n) · η*(n)` over `0..=n_max`.
pub fn optimize_pulses(
    env: &NoiseEnvironment,
    cfg: &MeasurementConfig,
    n_max: usize,
) -> Result<SensitivityPoint> {
    if n_max == 0 {
        return Err(domain("n_max must be at least 1"));
    }
    let sweep = sensitivity_sweep(env, cfg, Mode::Telegraph, n_max, true)?;
    Ok(sweep
        .into_iter()
        .min_by(|a, b| a.eta.total_cmp(&b.eta))
        .expect("sweep is non-empty"))
}
