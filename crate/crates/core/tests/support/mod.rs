//! Property checks shared by the property suite and the acceptance runner.
#![allow(dead_code)]

use nvdd::coherence::{coherence_time, udd_model};
use nvdd::montecarlo::{mc_envelope, McOptions, NoiseKind};
use nvdd::sensitivity::eta_for_model;
use nvdd::sequences::udd;
use nvdd::{
    bath_from_concentration, MeasurementConfig, NoiseEnvironment, PhysicalConstants, PulseSequence,
    SequenceFamily,
};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const GAMMA_E: f64 = PhysicalConstants::CODATA.gamma_e;

pub type Check = std::result::Result<(), TestCaseError>;

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Log-uniform positive value in `[lo, hi]`.
pub fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..=hi.ln()).prop_map(f64::exp)
}

/// Arbitrary schedule: strictly increasing interior pulse fractions.
pub fn custom_sequence() -> impl Strategy<Value = PulseSequence> {
    (
        log_uniform(1e-6, 1e3),
        prop::collection::btree_set(1u32..1_000_000, 0..16),
    )
        .prop_map(|(tau, set)| {
            let times = set.into_iter().map(|k| tau * k as f64 / 1e6).collect();
            PulseSequence::custom(tau, times).expect("interior increasing pulses")
        })
}

pub fn lambda_matches_residual(seq: &PulseSequence, j: usize) -> Check {
    let (lambda, residual) = (seq.lambda_factor(j), seq.moment_residual(j));
    prop_assert!(
        (lambda - residual).abs() <= 1e-10,
        "j = {j}: lambda {lambda} vs residual {residual}"
    );
    Ok(())
}

pub fn udd_is_time_symmetric(n: usize, tau: f64) -> Check {
    let seq = udd(n, tau).unwrap();
    let times = seq.pulse_times();
    for k in 0..n {
        let sum = times[k] + times[n - 1 - k];
        prop_assert!(
            (sum - tau).abs() <= 4.0 * f64::EPSILON * tau,
            "n = {n}, k = {k}: {sum} vs {tau}"
        );
    }
    Ok(())
}

/// Inputs for the `1/(Cγ)` scaling check.
#[derive(Debug, Clone)]
pub struct ScalingCase {
    pub n: usize,
    pub fraction: f64,
    pub tau_ratio: f64,
    pub readout: f64,
    pub readout_scaled: f64,
    pub gamma_scale: f64,
}

pub fn scaling_case() -> impl Strategy<Value = ScalingCase> {
    (
        0usize..30,
        log_uniform(1e-3, 5e-2),
        log_uniform(1e-3, 1.0),
        0.01f64..=1.0,
        0.01f64..=1.0,
        log_uniform(0.1, 10.0),
    )
        .prop_map(
            |(n, fraction, tau_ratio, readout, readout_scaled, gamma_scale)| ScalingCase {
                n,
                fraction,
                tau_ratio,
                readout,
                readout_scaled,
                gamma_scale,
            },
        )
}

/// Changing `C → C'` and `γ → cγ` with `γσ` held fixed (so the decay is
/// unchanged) multiplies η by `C/(C' c)`.
pub fn sensitivity_scales_inversely(case: &ScalingCase) -> Check {
    let env = bath_from_concentration(case.fraction, &PhysicalConstants::CODATA).unwrap();
    let scaled_env = NoiseEnvironment::new(env.sigma0 / case.gamma_scale, env.tau_c).unwrap();
    let base = MeasurementConfig {
        readout: case.readout,
        ..MeasurementConfig::ideal()
    };
    let scaled = MeasurementConfig {
        readout: case.readout_scaled,
        gamma: GAMMA_E * case.gamma_scale,
        ..base
    };
    let model = udd_model(case.n, &env, base.gamma).unwrap();
    let tau = case.tau_ratio * coherence_time(&model).t2;
    let eta = eta_for_model(&model, tau, &base);
    let eta_scaled = eta_for_model(
        &udd_model(case.n, &scaled_env, scaled.gamma).unwrap(),
        tau,
        &scaled,
    );
    let expected = eta * case.readout / (case.readout_scaled * case.gamma_scale);
    prop_assert!(
        rel_diff(eta_scaled, expected) <= 1e-12,
        "{eta_scaled} vs {expected}"
    );
    Ok(())
}

/// Small ensemble run on a short grid.
#[derive(Debug, Clone)]
pub struct McCase {
    pub seed: u64,
    pub kind: NoiseKind,
    pub n_traj: usize,
    pub chunk: usize,
    pub family: SequenceFamily,
}

pub fn mc_case() -> impl Strategy<Value = McCase> {
    (
        any::<u64>(),
        prop_oneof![Just(NoiseKind::Ou), Just(NoiseKind::SmoothGaussian)],
        1000usize..1200,
        1usize..400,
        prop_oneof![
            Just(SequenceFamily::Free),
            Just(SequenceFamily::Hahn),
            (1usize..6).prop_map(SequenceFamily::Udd),
        ],
    )
        .prop_map(|(seed, kind, n_traj, chunk, family)| McCase {
            seed,
            kind,
            n_traj,
            chunk,
            family,
        })
}

fn mc_env() -> NoiseEnvironment {
    NoiseEnvironment::new(1.0, 1.0).unwrap()
}

const MC_GRID: [f64; 4] = [0.0, 0.05, 0.1, 0.2];

pub fn mc_is_deterministic(case: &McCase) -> Check {
    let opts = McOptions::new(case.n_traj, case.seed).with_dt(0.01);
    let run = || mc_envelope(&case.family, &mc_env(), case.kind, 10.0, &MC_GRID, &opts).unwrap();
    let (a, b) = (run(), run());
    prop_assert_eq!(&a, &b);
    prop_assert_eq!(a.envelope[0], 1.0);
    for (d, se) in a.envelope.iter().zip(&a.stderr) {
        prop_assert!(d.abs() <= 1.0 + 3.0 * se);
    }
    Ok(())
}

pub fn mc_partition_invariant(case: &McCase) -> Check {
    let base = McOptions::new(case.n_traj, case.seed).with_dt(0.01);
    let run = |opts: McOptions| {
        mc_envelope(&case.family, &mc_env(), case.kind, 10.0, &MC_GRID, &opts).unwrap()
    };
    let serial = run(base.with_chunk_size(case.n_traj));
    let split = run(base.with_chunk_size(case.chunk));
    for (s, p) in serial.envelope.iter().zip(&split.envelope) {
        prop_assert!((s - p).abs() <= 1e-12 * s.abs().max(1e-300), "{s} vs {p}");
    }
    Ok(())
}
