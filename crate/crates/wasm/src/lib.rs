//! Browser bindings. Each export returns a JSON document for the page to plot.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nvdd::coherence::udd_model;
use nvdd::sensitivity::sensitivity_sweep;
use nvdd::{
    bath_from_concentration, coherence_curve, MeasurementConfig, Mode, NoiseEnvironment,
    PhysicalConstants,
};
use serde_json::json;
use wasm_bindgen::prelude::*;

const GAMMA_E: f64 = PhysicalConstants::CODATA.gamma_e;

fn bath(concentration: f64) -> Result<NoiseEnvironment, String> {
    bath_from_concentration(concentration, &PhysicalConstants::CODATA).map_err(|e| e.to_string())
}

/// Envelopes under udd(n) for each entry of `pulses`, on `points` times
/// spanning `[0, t_max_ratio · τ_c]`.
pub fn envelope_json(
    concentration: f64,
    pulses: &[u32],
    t_max_ratio: f64,
    points: usize,
) -> Result<String, String> {
    let env = bath(concentration)?;
    if !(t_max_ratio > 0.0) || !(2..=10_000).contains(&points) {
        return Err("need t_max_ratio > 0 and 2..=10000 points".into());
    }
    let t_max = t_max_ratio * env.tau_c;
    let times: Vec<f64> = (0..points)
        .map(|i| t_max * i as f64 / (points - 1) as f64)
        .collect();
    let mut curves = Vec::with_capacity(pulses.len());
    for &n in pulses {
        let model = udd_model(n as usize, &env, GAMMA_E).map_err(|e| e.to_string())?;
        let values: Vec<f64> = times.iter().map(|&t| model.envelope(t)).collect();
        curves.push(json!({ "pulses": n, "values": values }));
    }
    Ok(json!({
        "tau_c": env.tau_c,
        "sigma0": env.sigma0,
        "times": times,
        "curves": curves,
    })
    .to_string())
}

/// Coherence time for udd(1..=n_max).
pub fn coherence_json(concentration: f64, n_max: u32) -> Result<String, String> {
    let env = bath(concentration)?;
    let counts: Vec<usize> = (1..=n_max as usize).collect();
    let curve = coherence_curve(&counts, &env, GAMMA_E).map_err(|e| e.to_string())?;
    Ok(json!({ "tau_c": env.tau_c, "points": curve }).to_string())
}

/// Optimized sensitivity for n = 0..=n_max, with and without pulse penalties.
pub fn sensitivity_json(
    concentration: f64,
    readout: f64,
    pulse_width: f64,
    pulse_error: f64,
    mode: &str,
    n_max: u32,
) -> Result<String, String> {
    let env = bath(concentration)?;
    let mode: Mode = mode.parse().map_err(|e: nvdd::Error| e.to_string())?;
    let cfg = MeasurementConfig {
        readout,
        pulse_width,
        pulse_error,
        ..MeasurementConfig::default()
    };
    let sweep = |penalty| {
        sensitivity_sweep(&env, &cfg, mode, n_max as usize, penalty).map_err(|e| e.to_string())
    };
    let (ideal, real) = (sweep(false)?, sweep(true)?);
    let best = real
        .iter()
        .min_by(|a, b| a.eta.total_cmp(&b.eta))
        .map(|p| p.pulses);
    Ok(json!({ "ideal": ideal, "penalized": real, "best": best }).to_string())
}

#[wasm_bindgen]
pub fn envelopes(
    concentration: f64,
    pulses: Vec<u32>,
    t_max_ratio: f64,
    points: usize,
) -> Result<String, JsValue> {
    envelope_json(concentration, &pulses, t_max_ratio, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn coherence(concentration: f64, n_max: u32) -> Result<String, JsValue> {
    coherence_json(concentration, n_max).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sensitivity(
    concentration: f64,
    readout: f64,
    pulse_width: f64,
    pulse_error: f64,
    mode: &str,
    n_max: u32,
) -> Result<String, JsValue> {
    sensitivity_json(
        concentration,
        readout,
        pulse_width,
        pulse_error,
        mode,
        n_max,
    )
    .map_err(|e| JsValue::from_str(&e))
}
