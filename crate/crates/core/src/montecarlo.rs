//! Monte Carlo phase accumulation along sampled classical noise paths.
//!
//! This module shares no code with the analytic envelopes. It samples field
//! trajectories, integrates `φ = γ ∫ f(s) B(s) ds` with the trapezoidal rule
//! (pulse instants snapped to the sampling grid) and averages `cos φ`.
//!
//! Two noise kinds are provided. Ornstein–Uhlenbeck paths (correlation
//! `σ₀² e^{-|s|/τ_c}`) are rough and model motional narrowing. Smooth paths
//! have the squared-exponential correlation `σ₀² e^{-s²/2τ_c²}` and admit a
//! Taylor expansion, matching the quasi-static picture.
//!
//! Path `i` of a run draws from its own ChaCha stream keyed by `(seed, i)`,
//! and ensemble sums are accumulated in fixed chunks with compensated
//! summation, so results do not depend on thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bath::NoiseEnvironment;
use crate::error::{domain, Error, Result};
use crate::numeric::CompensatedSum;
use crate::sequences::{PulseSequence, SequenceFamily};

/// Finest allowed ratio `dt / τ_c`.
pub const MAX_DT_FRACTION: f64 = 0.01;

/// Fourier modes per smooth trajectory.
pub const SPECTRAL_MODES: usize = 64;

/// Minimum ensemble size accepted by [`mc_envelope`].
pub const MIN_TRAJECTORIES: usize = 1000;

/// Paths per accumulation chunk.
pub const DEFAULT_CHUNK: usize = 256;

/// Longest path, in samples, a run may allocate.
pub const MAX_SAMPLES: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Ornstein–Uhlenbeck, sampled with its exact one-step transition.
    Ou,
    /// Squared-exponential Gaussian process, sampled spectrally.
    SmoothGaussian,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ou" => Ok(NoiseKind::Ou),
            "smooth" | "smooth_gaussian" => Ok(NoiseKind::SmoothGaussian),
            _ => Err(domain(format!("unknown noise kind {s:?}"))),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseKind::Ou => "ou",
            NoiseKind::SmoothGaussian => "smooth_gaussian",
        })
    }
}

/// A sampled field path `B(i · dt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<f64>,
    pub kind: NoiseKind,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        self.dt * (self.samples.len() - 1) as f64
    }
}

/// RNG for path `index` of a run seeded with `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn sample_count(env: &NoiseEnvironment, dt: f64, t_max: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(domain(format!("dt must be positive, got {dt}")));
    }
    if dt > MAX_DT_FRACTION * env.tau_c * (1.0 + 1e-12) {
        return Err(Error::Resolution(format!(
            "dt = {dt:e} s exceeds tau_c / 100 = {:e} s; refine the time step",
            MAX_DT_FRACTION * env.tau_c
        )));
    }
    if !(t_max > dt) {
        return Err(domain(format!("t_max = {t_max} must exceed dt = {dt}")));
    }
    let steps = (t_max / dt).round();
    if steps >= MAX_SAMPLES as f64 {
        return Err(Error::Resource(format!(
            "{steps:e} samples per path exceeds the limit of {MAX_SAMPLES}"
        )));
    }
    Ok(steps as usize + 1)
}

fn fill_ou(env: &NoiseEnvironment, dt: f64, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let rho = (-dt / env.tau_c).exp();
    let kick = env.sigma0 * (1.0 - rho * rho).sqrt();
    let mut x = env.sigma0 * rng.sample::<f64, _>(StandardNormal);
    for slot in out.iter_mut() {
        *slot = x;
        x = rho * x + kick * rng.sample::<f64, _>(StandardNormal);
    }
}

/// `B(t) = Σ_m A_m cos ω_m t + B_m sin ω_m t` with `A_m, B_m ~ N(0, σ₀²/M)`
/// and `ω_m` drawn from the m-th equal-probability stratum of `N(0, 1/τ_c²)`.
/// Averaged over the strata the covariance is exactly `σ₀² e^{-s²/2τ_c²}`.
fn fill_smooth(env: &NoiseEnvironment, dt: f64, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    const REANCHOR: usize = 512;
    let normal = Normal::standard();
    let amp = env.sigma0 / (SPECTRAL_MODES as f64).sqrt();
    out.fill(0.0);
    for m in 0..SPECTRAL_MODES {
        let u: f64 = Open01.sample(rng);
        let omega = normal.inverse_cdf((m as f64 + u) / SPECTRAL_MODES as f64) / env.tau_c;
        let a = amp * rng.sample::<f64, _>(StandardNormal);
        let b = amp * rng.sample::<f64, _>(StandardNormal);
        let (step_s, step_c) = (omega * dt).sin_cos();
        let (mut s, mut c) = (0.0, 1.0);
        for (i, slot) in out.iter_mut().enumerate() {
            if i % REANCHOR == 0 {
                (s, c) = (omega * dt * i as f64).sin_cos();
            }
            *slot += a * c + b * s;
            (c, s) = (c * step_c - s * step_s, s * step_c + c * step_s);
        }
    }
}

fn fill(kind: NoiseKind, env: &NoiseEnvironment, dt: f64, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    match kind {
        NoiseKind::Ou => fill_ou(env, dt, rng, out),
        NoiseKind::SmoothGaussian => fill_smooth(env, dt, rng, out),
    }
}

/// Stationary OU path with variance `σ₀²` and correlation time `τ_c`.
pub fn sample_ou(env: &NoiseEnvironment, dt: f64, t_max: f64, seed: u64) -> Result<Trajectory> {
    sample(NoiseKind::Ou, env, dt, t_max, seed)
}

/// Smooth stationary Gaussian path with squared-exponential correlation of
/// length `τ_c` and variance `σ₀²`.
pub fn sample_smooth(env: &NoiseEnvironment, dt: f64, t_max: f64, seed: u64) -> Result<Trajectory> {
    sample(NoiseKind::SmoothGaussian, env, dt, t_max, seed)
}

pub fn sample(
    kind: NoiseKind,
    env: &NoiseEnvironment,
    dt: f64,
    t_max: f64,
    seed: u64,
) -> Result<Trajectory> {
    let n = sample_count(env, dt, t_max)?;
    let mut samples = vec![0.0; n];
    fill(kind, env, dt, &mut path_rng(seed, 0), &mut samples);
    Ok(Trajectory { dt, samples, kind })
}

/// Running trapezoidal integral: `out[i] = ∫₀^{i·dt} B`.
fn cumulative_integral(samples: &[f64], dt: f64, out: &mut Vec<f64>) {
    out.clear();
    out.reserve(samples.len());
    let mut acc = 0.0;
    out.push(0.0);
    for pair in samples.windows(2) {
        acc += 0.5 * dt * (pair[0] + pair[1]);
        out.push(acc);
    }
}

/// Grid indices bounding the constant-sign segments of `seq`.
fn segment_bounds(seq: &PulseSequence, dt: f64) -> Vec<usize> {
    let mut bounds = Vec::with_capacity(seq.len() + 2);
    bounds.push(0);
    bounds.extend(seq.pulse_times().iter().map(|t| (t / dt).round() as usize));
    bounds.push((seq.total_time() / dt).round() as usize);
    bounds
}

fn phase_from_integral(integral: &[f64], bounds: &[usize], gamma: f64) -> f64 {
    let mut sign = 1.0;
    let mut acc = 0.0;
    for w in bounds.windows(2) {
        acc += sign * (integral[w[1]] - integral[w[0]]);
        sign = -sign;
    }
    gamma * acc
}

/// Phase `γ ∫₀^τ f(s) B(s) ds` picked up along one trajectory.
pub fn accumulated_phase(traj: &Trajectory, seq: &PulseSequence, gamma: f64) -> Result<f64> {
    if seq.total_time() > traj.duration() * (1.0 + 1e-12) {
        return Err(domain(format!(
            "sequence window {} s exceeds trajectory length {} s",
            seq.total_time(),
            traj.duration()
        )));
    }
    let mut integral = Vec::new();
    cumulative_integral(&traj.samples, traj.dt, &mut integral);
    Ok(phase_from_integral(
        &integral,
        &segment_bounds(seq, traj.dt),
        gamma,
    ))
}

/// Ensemble-averaged envelope `⟨cos φ(t)⟩` with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub times: Vec<f64>,
    pub envelope: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_traj: usize,
    pub seed: u64,
    pub kind: NoiseKind,
    pub dt: f64,
}

/// Controls for an ensemble run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub n_traj: usize,
    pub seed: u64,
    /// Sampling step; defaults to `min(τ_c/100, t_min/64)`.
    pub dt: Option<f64>,
    /// Paths per accumulation chunk. Results are identical for any thread
    /// count; different chunk sizes agree to rounding.
    pub chunk_size: usize,
}

impl McOptions {
    pub fn new(n_traj: usize, seed: u64) -> Self {
        Self {
            n_traj,
            seed,
            dt: None,
            chunk_size: DEFAULT_CHUNK,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Self {
        self.chunk_size = chunk_size;
        self
    }
}

#[derive(Clone)]
struct Moments {
    sum: Vec<CompensatedSum>,
    sum_sq: Vec<CompensatedSum>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self {
            sum: vec![CompensatedSum::default(); len],
            sum_sq: vec![CompensatedSum::default(); len],
        }
    }

    fn merge(&mut self, other: &Moments) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            a.merge(b);
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            a.merge(b);
        }
    }
}

/// Empirical envelope for a family of sequences over a grid of window
/// lengths, using `opts.n_traj` independent paths.
pub fn mc_envelope(
    family: &SequenceFamily,
    env: &NoiseEnvironment,
    kind: NoiseKind,
    gamma: f64,
    t_grid: &[f64],
    opts: &McOptions,
) -> Result<McEstimate> {
    if opts.n_traj < MIN_TRAJECTORIES {
        return Err(Error::Precondition(format!(
            "at least {MIN_TRAJECTORIES} trajectories are required, got {}",
            opts.n_traj
        )));
    }
    if opts.chunk_size == 0 {
        return Err(domain("chunk size must be positive"));
    }
    if t_grid.is_empty() || t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(domain("time grid must be non-empty and non-negative"));
    }
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    if t_max <= 0.0 {
        return Err(domain("time grid must contain a positive time"));
    }
    let t_min = t_grid
        .iter()
        .copied()
        .filter(|t| *t > 0.0)
        .fold(f64::INFINITY, f64::min);
    let dt = opts
        .dt
        .unwrap_or_else(|| (MAX_DT_FRACTION * env.tau_c).min(t_min / 64.0));
    let n_samples = sample_count(env, dt, t_max)?;

    // Snapped segment boundaries for every window, computed once.
    let layouts: Vec<Option<Vec<usize>>> = t_grid
        .iter()
        .map(|&t| {
            if t > 0.0 {
                family.at(t).map(|seq| Some(segment_bounds(&seq, dt)))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;

    let n_points = t_grid.len();
    let chunks: Vec<(usize, usize)> = (0..opts.n_traj)
        .step_by(opts.chunk_size)
        .map(|start| (start, (start + opts.chunk_size).min(opts.n_traj)))
        .collect();

    let partials: Vec<Moments> = chunks
        .par_iter()
        .map(|&(start, end)| {
            let mut moments = Moments::new(n_points);
            let mut path = vec![0.0; n_samples];
            let mut integral = Vec::with_capacity(n_samples);
            for index in start..end {
                let mut rng = path_rng(opts.seed, index as u64);
                fill(kind, env, dt, &mut rng, &mut path);
                cumulative_integral(&path, dt, &mut integral);
                for (p, layout) in layouts.iter().enumerate() {
                    let c = match layout {
                        Some(bounds) => phase_from_integral(&integral, bounds, gamma).cos(),
                        None => 1.0,
                    };
                    moments.sum[p].add(c);
                    moments.sum_sq[p].add(c * c);
                }
            }
            moments
        })
        .collect();

    let mut total = Moments::new(n_points);
    for part in &partials {
        total.merge(part);
    }

    let n = opts.n_traj as f64;
    let mut envelope = Vec::with_capacity(n_points);
    let mut stderr = Vec::with_capacity(n_points);
    for p in 0..n_points {
        let mean = total.sum[p].value() / n;
        let var = ((total.sum_sq[p].value() - n * mean * mean) / (n - 1.0)).max(0.0);
        envelope.push(mean);
        stderr.push((var / n).sqrt());
    }
    Ok(McEstimate {
        times: t_grid.to_vec(),
        envelope,
        stderr,
        n_traj: opts.n_traj,
        seed: opts.seed,
        kind,
        dt,
    })
}

/// Exponential decay rate fitted to an empirical envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Fitted rate (s⁻¹).
    pub rate: f64,
    /// One-sigma statistical uncertainty of `rate`.
    pub stderr: f64,
    pub estimate: McEstimate,
}

/// Points in the fit window of [`mc_fast_field_rate`].
pub const FIT_POINTS: usize = 24;

/// Fits `exp(-Γ t)` to the OU envelope of a fast external field observed
/// through `family`. The fit spans `t ∈ [0.5, 2] Θ_ext² τ_ext`, around the
/// motional-narrowing decay scale. Starting later would let segments shorter
/// than `τ_ext` (the outer gaps of many-pulse UDD) bend the log-envelope.
pub fn mc_fast_field_rate(
    sigma_ext: f64,
    tau_ext: f64,
    family: &SequenceFamily,
    gamma: f64,
    opts: &McOptions,
) -> Result<RateFit> {
    let env = NoiseEnvironment::new(sigma_ext, tau_ext)?;
    let theta = env.theta(gamma);
    if !(theta > 5.0) {
        return Err(Error::Regime(format!(
            "fast-field fit needs theta_ext > 5, got {theta:.3}"
        )));
    }
    let scale = if sigma_ext > 0.0 {
        theta * theta * tau_ext
    } else {
        1e4 * tau_ext
    };
    let times: Vec<f64> = (0..FIT_POINTS)
        .map(|i| scale * (0.5 + 1.5 * i as f64 / (FIT_POINTS - 1) as f64))
        .collect();
    let opts = McOptions {
        dt: Some(opts.dt.unwrap_or(MAX_DT_FRACTION * tau_ext)),
        ..*opts
    };
    let estimate = mc_envelope(family, &env, NoiseKind::Ou, gamma, &times, &opts)?;
    if sigma_ext == 0.0 {
        return Ok(RateFit {
            rate: 0.0,
            stderr: 0.0,
            estimate,
        });
    }
    let (rate, stderr) = fit_exponential(&estimate)?;
    Ok(RateFit {
        rate,
        stderr,
        estimate,
    })
}

/// Weighted least squares of `ln D` against `t`; returns `(-slope, σ_slope)`.
fn fit_exponential(est: &McEstimate) -> Result<(f64, f64)> {
    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    let mut swxx = 0.0;
    let mut swxy = 0.0;
    let mut points = Vec::new();
    for ((&t, &d), &se) in est.times.iter().zip(&est.envelope).zip(&est.stderr) {
        if d <= 3.0 * se || d <= 0.0 {
            return Err(Error::Regime(format!(
                "envelope at t = {t:e} s is lost in the noise ({d:.3e} ± {se:.1e})"
            )));
        }
        let y = d.ln();
        let w = if se > 0.0 { (d / se).powi(2) } else { 1e12 };
        sw += w;
        swx += w * t;
        swy += w * y;
        swxx += w * t * t;
        swxy += w * t * y;
        points.push((t, y, w));
    }
    let det = sw * swxx - swx * swx;
    if !(det > 0.0) {
        return Err(Error::Regime("degenerate fit window".into()));
    }
    let slope = (sw * swxy - swx * swy) / det;
    let intercept = (swxx * swy - swx * swxy) / det;

    let mean_y = swy / sw;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for &(t, y, w) in &points {
        ss_res += w * (y - intercept - slope * t).powi(2);
        ss_tot += w * (y - mean_y).powi(2);
    }
    if ss_tot > 0.0 && ss_res / ss_tot > 1e-2 {
        return Err(Error::Regime(format!(
            "envelope is not exponential (R² = {:.4})",
            1.0 - ss_res / ss_tot
        )));
    }
    Ok((-slope, (sw / det).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::PhysicalConstants;
    use crate::sequences::udd;

    const GAMMA_E: f64 = PhysicalConstants::CODATA.gamma_e;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        (
            mean,
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0),
        )
    }

    #[test]
    fn resolution_is_enforced() {
        let env = NoiseEnvironment::new(1e-6, 1e-3).unwrap();
        assert!(matches!(
            sample_ou(&env, 2e-5, 1e-3, 1),
            Err(Error::Resolution(_))
        ));
        assert!(matches!(
            sample_smooth(&env, 2e-5, 1e-3, 1),
            Err(Error::Resolution(_))
        ));
        assert!(sample_ou(&env, 1e-5, 1e-3, 1).is_ok());
        assert!(sample_ou(&env, 1e-5, 1e-5, 1).is_err());
        assert!(matches!(
            sample_ou(&env, 1e-12, 1e-3, 1),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn seeded_paths_are_reproducible() {
        let env = NoiseEnvironment::new(1e-6, 1e-3).unwrap();
        for kind in [NoiseKind::Ou, NoiseKind::SmoothGaussian] {
            let a = sample(kind, &env, 1e-5, 1e-3, 42).unwrap();
            let b = sample(kind, &env, 1e-5, 1e-3, 42).unwrap();
            let c = sample(kind, &env, 1e-5, 1e-3, 43).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.samples, c.samples);
            assert_eq!(a.samples.len(), 101);
        }
    }

    #[test]
    fn silent_environment_gives_zero_paths() {
        let env = NoiseEnvironment::new(0.0, 1e-3).unwrap();
        for kind in [NoiseKind::Ou, NoiseKind::SmoothGaussian] {
            let path = sample(kind, &env, 1e-5, 1e-3, 7).unwrap();
            assert!(path.samples.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn ou_autocorrelation_at_one_correlation_time() {
        let env = NoiseEnvironment::new(1.0, 1.0).unwrap();
        let n = 100_000;
        let mut products = Vec::with_capacity(n);
        let mut squares = Vec::with_capacity(n);
        let mut path = vec![0.0; 101];
        for i in 0..n {
            fill_ou(&env, 0.01, &mut path_rng(9, i as u64), &mut path);
            products.push(path[0] * path[100]);
            squares.push(path[100] * path[100]);
        }
        let (cov, var_cov) = mean_var(&products);
        let se = (var_cov / n as f64).sqrt();
        assert!((cov - (-1f64).exp()).abs() < 3.0 * se, "{cov} ± {se}");
        let (var, var_var) = mean_var(&squares);
        assert!((var - 1.0).abs() < 3.0 * (var_var / n as f64).sqrt());
    }

    #[test]
    fn smooth_marginal_and_lag_covariance() {
        let env = NoiseEnvironment::new(1.0, 1.0).unwrap();
        let n = 20_000;
        let mut sq = Vec::with_capacity(n);
        let mut lag = Vec::with_capacity(n);
        let mut path = vec![0.0; 101];
        for i in 0..n {
            fill_smooth(&env, 0.01, &mut path_rng(3, i as u64), &mut path);
            sq.push(path[50] * path[50]);
            lag.push(path[0] * path[100]);
        }
        let (var, vv) = mean_var(&sq);
        assert!((var - 1.0).abs() < 3.0 * (vv / n as f64).sqrt(), "{var}");
        let (cov, vc) = mean_var(&lag);
        assert!(
            (cov - (-0.5f64).exp()).abs() < 3.0 * (vc / n as f64).sqrt(),
            "{cov}"
        );
    }

    /// Variance of a least-squares slope over a window of `w` samples at the
    /// start of each path.
    fn slope_variance(kind: NoiseKind, dt: f64, w: usize, n: usize) -> f64 {
        let env = NoiseEnvironment::new(1.0, 1.0).unwrap();
        let mut path = vec![0.0; w];
        let xs: Vec<f64> = (0..w).map(|i| i as f64 * dt).collect();
        let xm = xs.iter().sum::<f64>() / w as f64;
        let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
        let slopes: Vec<f64> = (0..n)
            .map(|i| {
                fill(kind, &env, dt, &mut path_rng(11, i as u64), &mut path);
                xs.iter().zip(&path).map(|(x, y)| (x - xm) * y).sum::<f64>() / sxx
            })
            .collect();
        mean_var(&slopes).1
    }

    #[test]
    fn smooth_slopes_are_stable_rough_slopes_are_not() {
        let smooth: Vec<f64> = [4e-3, 2e-3, 1e-3]
            .iter()
            .map(|&dt| slope_variance(NoiseKind::SmoothGaussian, dt, 10, 4000))
            .collect();
        for v in &smooth {
            assert!((v - 1.0).abs() < 0.15, "smooth slope variance {v}");
        }
        let rough: Vec<f64> = [4e-3, 2e-3, 1e-3]
            .iter()
            .map(|&dt| slope_variance(NoiseKind::Ou, dt, 10, 4000))
            .collect();
        assert!(
            rough[1] > 1.5 * rough[0] && rough[2] > 1.5 * rough[1],
            "{rough:?}"
        );
    }

    #[test]
    fn linear_drift_cancelled_by_two_pulses() {
        let dt = 1e-3;
        let samples: Vec<f64> = (0..=1000).map(|i| 3.5 * i as f64 * dt).collect();
        let traj = Trajectory {
            dt,
            samples,
            kind: NoiseKind::SmoothGaussian,
        };
        let seq = udd(2, 1.0).unwrap();
        assert!(accumulated_phase(&traj, &seq, 1e3).unwrap().abs() < 1e-9);
        let free = PulseSequence::free(1.0).unwrap();
        assert!((accumulated_phase(&traj, &free, 1.0).unwrap() - 1.75).abs() < 1e-12);
        let too_long = PulseSequence::free(2.0).unwrap();
        assert!(accumulated_phase(&traj, &too_long, 1.0).is_err());
    }

    #[test]
    fn static_field_is_refocused() {
        let env = NoiseEnvironment::new(2e-6, 1e3).unwrap();
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 * 2e-6).collect();
        let est = mc_envelope(
            &SequenceFamily::Hahn,
            &env,
            NoiseKind::SmoothGaussian,
            GAMMA_E,
            &grid,
            &McOptions::new(2000, 5).with_dt(1e-7),
        )
        .unwrap();
        for (d, se) in est.envelope.iter().zip(&est.stderr) {
            assert!((d - 1.0).abs() <= 3.0 * se + 1e-9, "{d} ± {se}");
        }
    }

    #[test]
    fn free_induction_matches_gaussian_decay() {
        let env = NoiseEnvironment::new(2e-6, 1e-2).unwrap();
        let gamma0 = GAMMA_E * env.sigma0 / 2f64.sqrt();
        let grid: Vec<f64> = (0..=8).map(|i| i as f64 * 1e-6).collect();
        let est = mc_envelope(
            &SequenceFamily::Free,
            &env,
            NoiseKind::SmoothGaussian,
            GAMMA_E,
            &grid,
            &McOptions::new(20_000, 8).with_dt(1e-7),
        )
        .unwrap();
        assert_eq!(est.envelope[0], 1.0);
        assert_eq!(est.stderr[0], 0.0);
        for ((t, d), se) in grid.iter().zip(&est.envelope).zip(&est.stderr) {
            let expected = (-(gamma0 * t).powi(2)).exp();
            assert!(
                (d - expected).abs() <= 3.0 * se + 2e-3,
                "t = {t}: {d} vs {expected}"
            );
        }
    }

    #[test]
    fn ou_motional_narrowing_rate() {
        // Var ∫B = 2σ²τ t for t ≫ τ, so ⟨cos φ⟩ decays at γ²σ²τ.
        let tau = 1e-6;
        let theta = 10.0;
        let sigma = 1.0 / (theta * GAMMA_E * tau);
        let fit = mc_fast_field_rate(
            sigma,
            tau,
            &SequenceFamily::Free,
            GAMMA_E,
            &McOptions::new(20_000, 1),
        )
        .unwrap();
        let exact = GAMMA_E * GAMMA_E * sigma * sigma * tau;
        assert!(
            (fit.rate / exact - 1.0).abs() < 0.05,
            "{} vs {exact}",
            fit.rate
        );
    }

    #[test]
    fn fast_field_preconditions() {
        let opts = McOptions::new(1000, 1);
        let tau = 1e-6;
        let slow_sigma = 1.0 / (2.0 * GAMMA_E * tau);
        assert!(matches!(
            mc_fast_field_rate(slow_sigma, tau, &SequenceFamily::Free, GAMMA_E, &opts),
            Err(Error::Regime(_))
        ));
        let silent = mc_fast_field_rate(0.0, tau, &SequenceFamily::Free, GAMMA_E, &opts).unwrap();
        assert_eq!(silent.rate, 0.0);
    }

    #[test]
    fn ensemble_size_precondition() {
        let env = NoiseEnvironment::new(1e-6, 1e-3).unwrap();
        let err = mc_envelope(
            &SequenceFamily::Free,
            &env,
            NoiseKind::Ou,
            GAMMA_E,
            &[1e-4],
            &McOptions::new(999, 1),
        );
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn stderr_shrinks_with_ensemble_size() {
        let env = NoiseEnvironment::new(2e-6, 1e-2).unwrap();
        let grid = [3e-6, 5e-6];
        let run = |n| {
            mc_envelope(
                &SequenceFamily::Free,
                &env,
                NoiseKind::Ou,
                GAMMA_E,
                &grid,
                &McOptions::new(n, 2).with_dt(1e-7),
            )
            .unwrap()
        };
        let (small, large) = (run(4000), run(16_000));
        for (a, b) in small.stderr.iter().zip(&large.stderr) {
            let ratio = a / b;
            assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
        }
    }
}
