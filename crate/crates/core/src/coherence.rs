//! Coherence times: the instant at which the total decay exponent reaches one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::NoiseEnvironment;
use crate::dephasing::{modified_model, DephasingModel, Truncation};
use crate::error::{domain, Result};
use crate::numeric::bisect_increasing;
use crate::sequences::udd;

/// Relative width of the final bisection bracket.
pub const ROOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherencePoint {
    pub pulses: usize,
    /// Coherence time (s), never above the bath correlation time.
    pub t2: f64,
    /// Set when the root lies beyond the correlation time and was clamped.
    pub capped: bool,
}

/// Solves `Σ_k (Γ_k t)^{2k+2} = 1` for `t`, clamped to the bath correlation
/// time. Dephasing beyond `τ_c` is irreversible loss to the bath, so
/// decoupling cannot push the coherence time past it.
pub fn coherence_time(model: &DephasingModel) -> CoherencePoint {
    let tau_c = model.tau_c();
    let capped = CoherencePoint {
        pulses: model.pulses(),
        t2: tau_c,
        capped: true,
    };
    if model.rates().is_empty() {
        return capped;
    }
    // ln Σ (Γ_k t)^{2k+2} is increasing in t and crosses zero at the root;
    // working with the logarithm keeps the stiff high-order terms finite.
    let upper = 10.0 * tau_c;
    let root = bisect_increasing(|t| model.ln_decay_exponent(t), 0.0, upper, ROOT_TOLERANCE);
    match root {
        Some(t) if t <= tau_c => CoherencePoint {
            pulses: model.pulses(),
            t2: t,
            capped: false,
        },
        _ => capped,
    }
}

/// Coherence time under `udd(n)` for each requested pulse count.
pub fn coherence_curve(
    pulse_counts: &[usize],
    env: &NoiseEnvironment,
    gamma: f64,
) -> Result<Vec<CoherencePoint>> {
    if pulse_counts.is_empty() {
        return Err(domain("at least one pulse count is required"));
    }
    pulse_counts
        .par_iter()
        .map(|&n| {
            let model = udd_model(n, env, gamma)?;
            Ok(coherence_time(&model))
        })
        .collect()
}

/// Dephasing model under `udd(n)` with orders retained out to `τ_c`.
pub fn udd_model(n: usize, env: &NoiseEnvironment, gamma: f64) -> Result<DephasingModel> {
    modified_model(
        &udd(n, env.tau_c)?,
        env,
        gamma,
        Truncation::Auto { t_max: env.tau_c },
    )
}
