//! Noise-environment parameters of a dilute nuclear-spin bath.
//!
//! The internal field seen by the probe spin is treated as a zero-mean
//! Gaussian process with RMS strength `sigma0` and correlation time `tau_c`.
//! Within `t < tau_c / √2` it is expanded as a Taylor series
//! `B(t) = Σ a_j t^j` whose coefficients are independent normal variables
//! with standard deviations `σ_j`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Physical constants needed to evaluate the bath formulas, in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Electron gyromagnetic ratio (rad s⁻¹ T⁻¹).
    pub gamma_e: f64,
    /// ¹³C gyromagnetic ratio (rad s⁻¹ T⁻¹).
    pub gamma_c: f64,
    /// μ₀ / 4π (T² m³ J⁻¹).
    pub mu0_over_4pi: f64,
    /// Reduced Planck constant (J s).
    pub hbar: f64,
    /// Nuclear magneton (J T⁻¹).
    pub mu_n: f64,
    /// ¹³C nuclear g-factor.
    pub g_c: f64,
    /// Number density of carbon atoms in diamond (m⁻³).
    pub n_carbon: f64,
}

impl PhysicalConstants {
    /// CODATA 2018 values, with the carbon density of diamond
    /// (3.52 g cm⁻³ at 12 g mol⁻¹).
    pub const CODATA: Self = Self {
        gamma_e: 1.760_859_630_23e11,
        gamma_c: 6.728_284e7,
        mu0_over_4pi: 1.000_000_000_55e-7,
        hbar: 1.054_571_817e-34,
        mu_n: 5.050_783_746_1e-27,
        g_c: 1.404_823_6,
        n_carbon: 1.77e29,
    };

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gamma_e", self.gamma_e),
            ("gamma_c", self.gamma_c),
            ("mu0_over_4pi", self.mu0_over_4pi),
            ("hbar", self.hbar),
            ("mu_n", self.mu_n),
            ("g_c", self.g_c),
            ("n_carbon", self.n_carbon),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(domain(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA
    }
}

/// Rule for the standard deviation `σ_j` of the order-`j` Taylor coefficient.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaModel {
    /// `σ_j = σ₀ / τ_c^j`.
    #[default]
    PowerLaw,
    /// Exact coefficient statistics of a squared-exponential correlation
    /// `σ₀² exp(-s² / 2τ_c²)`: `σ_j = σ₀ √((2j-1)!!) / (j! τ_c^j)`.
    SquaredExponential,
}

/// RMS strength and correlation time of a Gaussian magnetic environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseEnvironment {
    /// RMS field strength σ₀ (T).
    pub sigma0: f64,
    /// Correlation time τ_c (s).
    pub tau_c: f64,
    /// Isotope fraction the environment was derived from, if any.
    pub concentration: Option<f64>,
    pub sigma_model: SigmaModel,
}

impl NoiseEnvironment {
    /// An environment given directly by its field strength and correlation
    /// time. `sigma0 = 0` is allowed and describes a noiseless field.
    pub fn new(sigma0: f64, tau_c: f64) -> Result<Self> {
        if !(sigma0.is_finite() && sigma0 >= 0.0) {
            return Err(domain(format!("sigma0 must be non-negative, got {sigma0}")));
        }
        if !(tau_c.is_finite() && tau_c > 0.0) {
            return Err(domain(format!("tau_c must be positive, got {tau_c}")));
        }
        Ok(Self {
            sigma0,
            tau_c,
            concentration: None,
            sigma_model: SigmaModel::default(),
        })
    }

    pub fn with_sigma_model(mut self, model: SigmaModel) -> Self {
        self.sigma_model = model;
        self
    }

    /// Fluctuation-regime number `Θ = 1 / (γ σ₀ τ_c)`. `Θ ≫ 1` is a fast
    /// (motionally narrowed) bath, `Θ ≪ 1` a quasi-static one.
    pub fn theta(&self, gamma: f64) -> f64 {
        1.0 / (gamma * self.sigma0 * self.tau_c)
    }

    /// Standard deviation of the order-`j` Taylor coefficient (T s⁻ʲ).
    pub fn sigma_taylor(&self, j: usize) -> f64 {
        if j == 0 {
            return self.sigma0;
        }
        self.ln_sigma_taylor(j).exp()
    }

    /// `ln σ_j`, finite for every `j` as long as `sigma0 > 0`.
    pub fn ln_sigma_taylor(&self, j: usize) -> f64 {
        let jf = j as f64;
        let base = self.sigma0.ln() - jf * self.tau_c.ln();
        match self.sigma_model {
            SigmaModel::PowerLaw => base,
            SigmaModel::SquaredExponential => {
                // (2j-1)!! = (2j)! / (2^j j!)
                let ln_double_factorial = ln_factorial(2 * j) - jf * 2f64.ln() - ln_factorial(j);
                base + 0.5 * ln_double_factorial - ln_factorial(j)
            }
        }
    }

    /// Upper end of the window in which the Taylor expansion is trusted.
    pub fn taylor_window(&self) -> f64 {
        self.tau_c / 2f64.sqrt()
    }
}

/// Free function form of [`NoiseEnvironment::theta`].
pub fn theta(env: &NoiseEnvironment, gamma: f64) -> f64 {
    env.theta(gamma)
}

/// Free function form of [`NoiseEnvironment::sigma_taylor`].
pub fn sigma_taylor(env: &NoiseEnvironment, j: usize) -> f64 {
    env.sigma_taylor(j)
}

/// Bath parameters of a diamond lattice with the given ¹³C fraction.
///
/// `σ₀ = √(2π/3) (μ₀/4π) n_c g_c μ_N` and
/// `τ_c = √(6/π) (4πħ/μ₀) / (n_c g_c² μ_N²)` with `n_c = fraction · n_carbon`.
pub fn bath_from_concentration(
    fraction: f64,
    constants: &PhysicalConstants,
) -> Result<NoiseEnvironment> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(domain(format!(
            "isotope fraction must lie in (0, 1], got {fraction}"
        )));
    }
    constants.validate()?;
    let c = constants;
    let n_c = fraction * c.n_carbon;
    let sigma0 = (2.0 * PI / 3.0).sqrt() * c.mu0_over_4pi * n_c * c.g_c * c.mu_n;
    let tau_c =
        (6.0 / PI).sqrt() * (c.hbar / c.mu0_over_4pi) / (n_c * c.g_c * c.g_c * c.mu_n * c.mu_n);
    Ok(NoiseEnvironment {
        sigma0,
        tau_c,
        concentration: Some(fraction),
        sigma_model: SigmaModel::default(),
    })
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}
