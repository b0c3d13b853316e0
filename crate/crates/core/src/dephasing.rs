//! Dephasing rates and envelopes in the Taylor (quasi-static) regime.
//!
//! Each Taylor coefficient `a_j ~ N(0, σ_j²)` contributes an independent
//! factor `exp[-(Γ_j t)^{2j+2}]` with
//! `Γ_j = (γ σ_j / (√2 (j+1)))^{1/(j+1)}`. A pulse sequence rescales
//! `σ_j ↦ |λ_j| σ_j`, removing every order it cancels.

use serde::{Deserialize, Serialize};

use crate::bath::NoiseEnvironment;
use crate::error::{domain, Result};
use crate::numeric::log_sum_exp;
use crate::sequences::{PulseSequence, DEFAULT_TOLERANCE};

/// Hard cap on the number of retained orders.
pub const MAX_RETAINED_ORDERS: usize = 64;

/// Terms `(Γ_k t)^{2k+2}` below this are dropped by [`Truncation::Auto`].
pub const TRUNCATION_THRESHOLD: f64 = 1e-18;

/// `Γ_j` for a coefficient with standard deviation `sigma_j`.
pub fn gamma_rate(sigma_j: f64, j: usize, gamma: f64) -> f64 {
    if sigma_j <= 0.0 {
        return 0.0;
    }
    (gamma * sigma_j / (std::f64::consts::SQRT_2 * (j + 1) as f64)).powf(1.0 / (j + 1) as f64)
}

fn ln_gamma_rate(ln_sigma_j: f64, j: usize, gamma: f64) -> f64 {
    let k = (j + 1) as f64;
    (gamma.ln() + ln_sigma_j - 0.5 * 2f64.ln() - k.ln()) / k
}

/// How many Taylor orders a model keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Keep every order up to and including this one.
    Order(usize),
    /// Keep orders until `(Γ_k t_max)^{2k+2}` falls below
    /// [`TRUNCATION_THRESHOLD`].
    Auto { t_max: f64 },
}

/// One retained order and its rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub order: usize,
    /// Γ_k (s⁻¹).
    pub value: f64,
    ln_value: f64,
}

impl Rate {
    /// `(Γ_k t)^{2k+2}`, evaluated in log space.
    pub fn term(&self, t: f64) -> f64 {
        self.ln_term(t).exp()
    }

    fn ln_term(&self, t: f64) -> f64 {
        (2 * self.order + 2) as f64 * (self.ln_value + t.ln())
    }
}

/// Envelope `Π_k exp[-(Γ_k t)^{2k+2}]` over a contiguous band of orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DephasingModel {
    rates: Vec<Rate>,
    start_order: usize,
    truncation_order: usize,
    tau_c: f64,
    pulses: usize,
}

impl DephasingModel {
    /// Free-induction model (no pulses).
    pub fn free_induction(
        env: &NoiseEnvironment,
        gamma: f64,
        truncation: Truncation,
    ) -> Result<Self> {
        modified_model(&PulseSequence::free(1.0)?, env, gamma, truncation)
    }

    /// A model from explicit rates `Γ_k` for orders `start_order, start_order+1, …`.
    pub fn from_rates(start_order: usize, rates: &[f64], tau_c: f64) -> Result<Self> {
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(domain("rates must be finite and non-negative"));
        }
        let retained = rates
            .iter()
            .enumerate()
            .filter(|(_, r)| **r > 0.0)
            .map(|(i, &r)| Rate {
                order: start_order + i,
                value: r,
                ln_value: r.ln(),
            })
            .collect();
        Ok(Self {
            rates: retained,
            start_order,
            truncation_order: start_order + rates.len().saturating_sub(1),
            tau_c,
            pulses: 0,
        })
    }

    pub fn rates(&self) -> &[Rate] {
        &self.rates
    }

    /// Γ_k for a given order, zero if the order is cancelled or not retained.
    pub fn rate(&self, order: usize) -> f64 {
        self.rates
            .iter()
            .find(|r| r.order == order)
            .map_or(0.0, |r| r.value)
    }

    pub fn start_order(&self) -> usize {
        self.start_order
    }

    pub fn truncation_order(&self) -> usize {
        self.truncation_order
    }

    pub fn tau_c(&self) -> f64 {
        self.tau_c
    }

    /// Number of π pulses in the sequence the model was built from.
    pub fn pulses(&self) -> usize {
        self.pulses
    }

    /// `Σ_k (Γ_k t)^{2k+2}`; the envelope is `exp(-decay_exponent(t))`.
    pub fn decay_exponent(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.rates.iter().map(|r| r.term(t)).sum()
    }

    /// `ln Σ_k (Γ_k t)^{2k+2}`, finite even where the sum itself overflows.
    pub fn ln_decay_exponent(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        log_sum_exp(self.rates.iter().map(|r| r.ln_term(t)))
    }

    /// `Σ_k (2k+2)(Γ_k t)^{2k+2}`, i.e. `t · d/dt decay_exponent(t)`.
    pub fn log_derivative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.rates
            .iter()
            .map(|r| (2 * r.order + 2) as f64 * r.term(t))
            .sum()
    }

    pub fn envelope(&self, t: f64) -> f64 {
        (-self.decay_exponent(t)).exp()
    }

    /// Envelope keeping only the lowest retained order.
    pub fn leading_order_envelope(&self, t: f64) -> f64 {
        match self.rates.first() {
            Some(r) if t > 0.0 => (-r.term(t)).exp(),
            _ => 1.0,
        }
    }

    /// The same model with every order above `order` removed.
    pub fn truncated(&self, order: usize) -> Self {
        let mut out = self.clone();
        out.rates.retain(|r| r.order <= order);
        out.truncation_order = order.min(self.truncation_order);
        out
    }
}

/// Rates under a pulse sequence: `σ_j ↦ |λ_j| σ_j`, orders with `λ_j = 0`
/// omitted, starting one past the sequence's cancellation order.
pub fn modified_model(
    seq: &PulseSequence,
    env: &NoiseEnvironment,
    gamma: f64,
    truncation: Truncation,
) -> Result<DephasingModel> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(domain(format!(
            "gyromagnetic ratio must be positive, got {gamma}"
        )));
    }
    let start_order = seq
        .suppression_order(DEFAULT_TOLERANCE)
        .map_or(0, |order| order + 1);
    let last_allowed = start_order + MAX_RETAINED_ORDERS - 1;
    let (last, t_max) = match truncation {
        Truncation::Order(order) => {
            if order < start_order {
                return Err(domain(format!(
                    "truncation order {order} is below the first unsuppressed order {start_order}"
                )));
            }
            (order.min(last_allowed), None)
        }
        Truncation::Auto { t_max } => {
            if !(t_max.is_finite() && t_max > 0.0) {
                return Err(domain(format!("t_max must be positive, got {t_max}")));
            }
            (last_allowed, Some(t_max))
        }
    };

    let mut rates = Vec::new();
    let mut truncation_order = last;
    if env.sigma0 > 0.0 {
        for order in start_order..=last {
            let lambda = seq.lambda_factor(order).abs();
            if lambda < DEFAULT_TOLERANCE {
                continue;
            }
            let ln_value = ln_gamma_rate(env.ln_sigma_taylor(order) + lambda.ln(), order, gamma);
            let rate = Rate {
                order,
                value: ln_value.exp(),
                ln_value,
            };
            let negligible = t_max.is_some_and(|t| rate.term(t) < TRUNCATION_THRESHOLD);
            rates.push(rate);
            if negligible {
                truncation_order = order;
                break;
            }
        }
    }
    Ok(DephasingModel {
        rates,
        start_order,
        truncation_order,
        tau_c: env.tau_c,
        pulses: seq.len(),
    })
}

/// Free function form of [`DephasingModel::envelope`].
pub fn envelope(model: &DephasingModel, t: f64) -> f64 {
    model.envelope(t)
}

/// Free function form of [`DephasingModel::leading_order_envelope`].
pub fn leading_order_envelope(model: &DephasingModel, t: f64) -> f64 {
    model.leading_order_envelope(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{bath_from_concentration, PhysicalConstants};
    use crate::sequences::{hahn, udd};
    use approx::assert_relative_eq;

    const GAMMA_E: f64 = PhysicalConstants::CODATA.gamma_e;

    fn bath(fraction: f64) -> NoiseEnvironment {
        bath_from_concentration(fraction, &PhysicalConstants::CODATA).unwrap()
    }

    #[test]
    fn free_induction_rate() {
        let gamma0 = gamma_rate(2e-6, 0, GAMMA_E);
        assert!((gamma0 / 2.5e5 - 1.0).abs() < 0.02, "{gamma0}");
        let t2_star = 1.0 / gamma0;
        assert!((t2_star / 4e-6 - 1.0).abs() < 0.05);
        assert_eq!(gamma_rate(0.0, 3, GAMMA_E), 0.0);
    }

    #[test]
    fn rate_scaling_law() {
        for j in 0..6 {
            let base = gamma_rate(1e-5, j, GAMMA_E);
            let scaled = gamma_rate(3e-5, j, GAMMA_E);
            assert_relative_eq!(
                scaled / base,
                3f64.powf(1.0 / (j + 1) as f64),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn hahn_rate_natural_bath() {
        let env = bath(0.011);
        let model =
            modified_model(&hahn(1.0).unwrap(), &env, GAMMA_E, Truncation::Order(8)).unwrap();
        assert_eq!(model.start_order(), 1);
        let g1 = model.rate(1);
        assert_relative_eq!(
            g1,
            gamma_rate(0.5 * env.sigma0 / env.tau_c, 1, GAMMA_E),
            max_relative = 1e-12
        );
        assert!((g1 / 2.1e3 - 1.0).abs() < 0.05, "Γ1 = {g1}");
        assert!((1.0 / g1 / 480e-6 - 1.0).abs() < 0.05);
    }

    #[test]
    fn hahn_rate_depleted_bath() {
        let env = bath(0.003);
        let model =
            modified_model(&hahn(1.0).unwrap(), &env, GAMMA_E, Truncation::Order(8)).unwrap();
        let t2 = 1.0 / model.rate(1);
        assert!((t2 / 1.5e-3 - 1.0).abs() < 0.2, "T2 = {t2}");
    }

    #[test]
    fn udd_removes_low_orders() {
        let env = bath(0.011);
        for n in 1..10 {
            let model = modified_model(
                &udd(n + 1, 1.0).unwrap(),
                &env,
                GAMMA_E,
                Truncation::Order(n + 12),
            )
            .unwrap();
            assert_eq!(model.start_order(), n + 1);
            for k in 0..=n {
                assert_eq!(model.rate(k), 0.0);
            }
            assert!(model.rate(n + 1) > 0.0);
        }
    }

    #[test]
    fn truncation_below_start_is_rejected() {
        let env = bath(0.011);
        let err = modified_model(&udd(4, 1.0).unwrap(), &env, GAMMA_E, Truncation::Order(2));
        assert!(matches!(err, Err(crate::Error::Domain(_))));
    }

    #[test]
    fn auto_truncation_stops_at_threshold() {
        let env = bath(0.011);
        let t_max = 1e-4;
        let model = modified_model(
            &hahn(1.0).unwrap(),
            &env,
            GAMMA_E,
            Truncation::Auto { t_max },
        )
        .unwrap();
        let last = model.rates().last().unwrap();
        assert!(last.term(t_max) < TRUNCATION_THRESHOLD);
        assert!(model.rates().len() < MAX_RETAINED_ORDERS);
        for r in &model.rates()[..model.rates().len() - 1] {
            assert!(r.term(t_max) >= TRUNCATION_THRESHOLD);
        }

        let near_ceiling = modified_model(
            &hahn(1.0).unwrap(),
            &env,
            GAMMA_E,
            Truncation::Auto { t_max: env.tau_c },
        )
        .unwrap();
        assert_eq!(near_ceiling.rates().len(), MAX_RETAINED_ORDERS);
    }

    #[test]
    fn envelope_basics() {
        let model = DephasingModel::from_rates(2, &[1e3], 1.0).unwrap();
        assert_eq!(model.envelope(0.0), 1.0);
        assert_relative_eq!(model.envelope(1e-3), (-1f64).exp(), max_relative = 1e-14);
        assert_eq!(model.envelope(1e-3), model.leading_order_envelope(1e-3));
    }

    #[test]
    fn hahn_envelope_at_echo_time() {
        let env = bath(0.011);
        let model =
            modified_model(&hahn(1.0).unwrap(), &env, GAMMA_E, Truncation::Order(40)).unwrap();
        let t = 1.0 / model.rate(1);
        assert!((model.envelope(t) - (-1f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn leading_order_bounds_full_envelope() {
        let env = bath(0.011);
        let model =
            modified_model(&udd(3, 1.0).unwrap(), &env, GAMMA_E, Truncation::Order(30)).unwrap();
        for i in 1..50 {
            let t = env.tau_c * i as f64 / 50.0;
            let full = model.envelope(t);
            let lead = model.leading_order_envelope(t);
            assert!(lead >= full);
            if full > 0.0 {
                assert!(lead / full <= 1.0 / full * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn higher_orders_matter_near_correlation_time() {
        let env = bath(0.011);
        for n in [3, 5, 8] {
            let model = modified_model(
                &udd(n, 1.0).unwrap(),
                &env,
                GAMMA_E,
                Truncation::Order(n + 40),
            )
            .unwrap();
            let t = 0.9 * env.tau_c;
            let full = model.decay_exponent(t);
            let lead = model.rates()[0].term(t);
            assert!(full > 1.5 * lead, "n = {n}: full {full}, leading {lead}");
        }
    }

    #[test]
    fn rates_decrease_with_order() {
        let env = bath(0.011);
        let model = DephasingModel::free_induction(&env, GAMMA_E, Truncation::Order(30)).unwrap();
        for pair in model.rates().windows(2) {
            assert!(pair[1].value <= pair[0].value);
        }
    }

    #[test]
    fn noiseless_bath_has_no_rates() {
        let env = NoiseEnvironment::new(0.0, 1e-3).unwrap();
        let model = DephasingModel::free_induction(&env, GAMMA_E, Truncation::Order(5)).unwrap();
        assert!(model.rates().is_empty());
        assert_eq!(model.envelope(1.0), 1.0);
    }
}
