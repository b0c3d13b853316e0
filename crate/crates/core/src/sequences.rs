//! π-pulse schedules and their moment-cancellation properties.
//!
//! Every instantaneous π pulse flips the sign with which the field enters the
//! accumulated phase, so a schedule is fully described by its switching
//! function `f(t) = ±1`. A Taylor term `a_m t^m` of the field contributes
//! `a_m ∫₀^τ f(t) t^m dt` to the phase; normalized by `τ^{m+1}/(m+1)` this is
//! the residual `r_m`, which is also the factor `λ_m` multiplying `a_m`.
//!
//! All APIs count pulses: `udd(n)` has `n` pulses and cancels orders
//! `0..n-1`.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Residuals below this magnitude count as cancelled.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Deepest CDD recursion accepted by [`cdd`].
pub const MAX_CDD_LEVEL: usize = 20;

/// Which generator produced a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceLabel {
    /// No pulses (free induction / Ramsey).
    Free,
    Hahn,
    Udd(usize),
    Cdd(usize),
    Custom,
}

impl fmt::Display for SequenceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SequenceLabel::Free => write!(f, "free"),
            SequenceLabel::Hahn => write!(f, "hahn"),
            SequenceLabel::Udd(n) => write!(f, "udd({n})"),
            SequenceLabel::Cdd(l) => write!(f, "cdd({l})"),
            SequenceLabel::Custom => write!(f, "custom"),
        }
    }
}

impl FromStr for SequenceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let arg = |prefix: &str| -> Option<Result<usize>> {
            s.strip_prefix(prefix)
                .and_then(|rest| rest.strip_suffix(')'))
                .map(|n| {
                    n.parse::<usize>()
                        .map_err(|_| domain(format!("bad sequence label {s:?}")))
                })
        };
        match s {
            "free" => Ok(SequenceLabel::Free),
            "hahn" => Ok(SequenceLabel::Hahn),
            "custom" => Ok(SequenceLabel::Custom),
            _ => {
                if let Some(n) = arg("udd(") {
                    Ok(SequenceLabel::Udd(n?))
                } else if let Some(l) = arg("cdd(") {
                    Ok(SequenceLabel::Cdd(l?))
                } else {
                    Err(domain(format!("unknown sequence label {s:?}")))
                }
            }
        }
    }
}

/// Ordered π-pulse instants inside an interrogation window `(0, total_time)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    total_time: f64,
    pulse_times: Vec<f64>,
    label: SequenceLabel,
}

impl PulseSequence {
    /// A schedule from explicit pulse times, which must be strictly
    /// increasing and interior to the window.
    pub fn custom(total_time: f64, pulse_times: Vec<f64>) -> Result<Self> {
        Self::with_label(total_time, pulse_times, SequenceLabel::Custom)
    }

    fn with_label(total_time: f64, pulse_times: Vec<f64>, label: SequenceLabel) -> Result<Self> {
        check_window(total_time)?;
        let mut prev = 0.0;
        for &t in &pulse_times {
            if !(t > prev && t < total_time) {
                return Err(domain(format!(
                    "pulse times must be strictly increasing inside (0, {total_time}); got {t} after {prev}"
                )));
            }
            prev = t;
        }
        Ok(Self {
            total_time,
            pulse_times,
            label,
        })
    }

    /// No pulses over a window of length `tau`.
    pub fn free(tau: f64) -> Result<Self> {
        Self::with_label(tau, Vec::new(), SequenceLabel::Free)
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn pulse_times(&self) -> &[f64] {
        &self.pulse_times
    }

    pub fn label(&self) -> SequenceLabel {
        self.label
    }

    pub fn len(&self) -> usize {
        self.pulse_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulse_times.is_empty()
    }

    /// Pulse instants as fractions of the window.
    pub fn fractions(&self) -> impl Iterator<Item = f64> + '_ {
        self.pulse_times.iter().map(move |t| t / self.total_time)
    }

    /// The same schedule stretched to a new window length.
    pub fn rescaled(&self, total_time: f64) -> Result<Self> {
        check_window(total_time)?;
        let k = total_time / self.total_time;
        Ok(Self {
            total_time,
            pulse_times: self.pulse_times.iter().map(|t| t * k).collect(),
            label: self.label,
        })
    }

    /// Sign of the switching function at `t`: `(-1)^(pulses at or before t)`.
    pub fn switching_function(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.total_time).contains(&t) {
            return Err(domain(format!(
                "t = {t} lies outside the window [0, {}]",
                self.total_time
            )));
        }
        let flips = self.pulse_times.partition_point(|&p| p <= t);
        Ok(if flips % 2 == 0 { 1.0 } else { -1.0 })
    }

    /// Normalized moment `(m+1)/τ^{m+1} ∫₀^τ f(t) t^m dt`, evaluated segment by
    /// segment of the switching function. Zero means the order-`m` Taylor
    /// term of the field is cancelled; free evolution gives `+1`.
    pub fn moment_residual(&self, m: usize) -> f64 {
        let power = m as i32 + 1;
        let mut sign = 1.0;
        let mut start = 0.0_f64;
        let mut acc = 0.0;
        for x in self.fractions().chain(std::iter::once(1.0)) {
            acc += sign * (x.powi(power) - start.powi(power));
            start = x;
            sign = -sign;
        }
        acc
    }

    /// Factor `λ_j` multiplying the Taylor coefficient `a_j`:
    /// `2 Σ_k (-1)^{k-1} (τ_k/τ)^{j+1} + (-1)^P`. Algebraically identical to
    /// [`moment_residual`](Self::moment_residual) but summed over pulses.
    pub fn lambda_factor(&self, j: usize) -> f64 {
        let power = j as i32 + 1;
        let signed: f64 = self
            .fractions()
            .enumerate()
            .map(|(k, x)| {
                if k % 2 == 0 {
                    x.powi(power)
                } else {
                    -x.powi(power)
                }
            })
            .sum();
        let tail = if self.len().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        2.0 * signed + tail
    }

    /// Largest `n` with `|r_m| < tol` for every `m ≤ n`, or `None` when even
    /// the static term survives.
    pub fn suppression_order(&self, tol: f64) -> Option<usize> {
        // P pulses give P free parameters; scan a little past that.
        let limit = self.len() + 8;
        let mut order = None;
        for m in 0..=limit {
            if self.moment_residual(m).abs() < tol {
                order = Some(m);
            } else {
                break;
            }
        }
        order
    }

    /// Serialize as a plain-text schedule: two header lines carrying
    /// `total_time_s` and `label`, then `index,time_s` rows. Numbers use 17
    /// significant digits, so the round trip is exact.
    pub fn to_schedule(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# total_time_s {:.16e}\n", self.total_time));
        out.push_str(&format!("# label {}\n", self.label));
        out.push_str("index,time_s\n");
        for (k, t) in self.pulse_times.iter().enumerate() {
            out.push_str(&format!("{},{:.16e}\n", k + 1, t));
        }
        out
    }

    /// Parse the format written by [`to_schedule`](Self::to_schedule).
    pub fn from_schedule(text: &str) -> Result<Self> {
        let mut total_time = None;
        let mut label = SequenceLabel::Custom;
        let mut times = Vec::new();
        let mut seen_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            let err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let mut parts = meta.trim().splitn(2, char::is_whitespace);
                let key = parts.next().unwrap_or_default();
                let value = parts.next().unwrap_or_default().trim();
                match key {
                    "total_time_s" => {
                        total_time = Some(
                            value
                                .parse::<f64>()
                                .map_err(|e| err(format!("bad total_time_s: {e}")))?,
                        )
                    }
                    "label" => label = value.parse().map_err(|e: Error| err(e.to_string()))?,
                    _ => {}
                }
                continue;
            }
            if !seen_header {
                if line != "index,time_s" {
                    return Err(err(format!("expected column header, found {line:?}")));
                }
                seen_header = true;
                continue;
            }
            let (index, time) = line
                .split_once(',')
                .ok_or_else(|| err("expected `index,time_s`".into()))?;
            let index: usize = index
                .trim()
                .parse()
                .map_err(|e| err(format!("bad index: {e}")))?;
            if index != times.len() + 1 {
                return Err(err(format!(
                    "expected index {}, found {index}",
                    times.len() + 1
                )));
            }
            times.push(
                time.trim()
                    .parse::<f64>()
                    .map_err(|e| err(format!("bad time: {e}")))?,
            );
        }
        let total_time = total_time.ok_or(Error::Parse {
            line: 0,
            message: "missing `# total_time_s` header".into(),
        })?;
        Self::with_label(total_time, times, label)
    }
}

/// `n`-pulse Uhrig sequence with pulses at `τ sin²(πk / (2n+2))`. `n = 0`
/// yields free evolution.
pub fn udd(n: usize, tau: f64) -> Result<PulseSequence> {
    check_window(tau)?;
    if n == 0 {
        return PulseSequence::free(tau);
    }
    let denom = (2 * n + 2) as f64;
    let lower = |k: usize| tau * (PI * k as f64 / denom).sin().powi(2);
    // Mirror the second half so the schedule is exactly symmetric.
    let times = (1..=n)
        .map(|k| match (2 * k).cmp(&(n + 1)) {
            Ordering::Less => lower(k),
            Ordering::Equal => 0.5 * tau,
            Ordering::Greater => tau - lower(n + 1 - k),
        })
        .collect();
    Ok(PulseSequence {
        total_time: tau,
        pulse_times: times,
        label: SequenceLabel::Udd(n),
    })
}

/// Spin echo: one pulse at `τ/2`.
pub fn hahn(tau: f64) -> Result<PulseSequence> {
    check_window(tau)?;
    Ok(PulseSequence {
        total_time: tau,
        pulse_times: vec![tau / 2.0],
        label: SequenceLabel::Hahn,
    })
}

/// Concatenated decoupling: `C_l = C_{l-1} · π · C_{l-1} · π` with `C_0` free
/// evolution. Coincident pulses annihilate pairwise and a pulse landing on
/// the end of the window only flips the readout frame, so it is dropped.
pub fn cdd(level: usize, tau: f64) -> Result<PulseSequence> {
    check_window(tau)?;
    if level == 0 {
        return Err(domain("CDD level must be at least 1"));
    }
    if level > MAX_CDD_LEVEL {
        return Err(Error::Resource(format!(
            "CDD level {level} exceeds the cap of {MAX_CDD_LEVEL}"
        )));
    }
    // Work in units of τ: every instant is a dyadic rational, so coincident
    // pulses compare exactly.
    let mut raw = Vec::with_capacity(1 << (level + 1));
    concatenate(level, 0.0, 1.0, &mut raw);
    raw.sort_by(|a, b| a.total_cmp(b));

    let mut fractions = Vec::new();
    let mut i = 0;
    while i < raw.len() {
        let mut j = i;
        while j < raw.len() && raw[j] == raw[i] {
            j += 1;
        }
        if (j - i) % 2 == 1 && raw[i] < 1.0 {
            fractions.push(raw[i]);
        }
        i = j;
    }
    Ok(PulseSequence {
        total_time: tau,
        pulse_times: fractions.into_iter().map(|x| x * tau).collect(),
        label: SequenceLabel::Cdd(level),
    })
}

fn concatenate(level: usize, start: f64, width: f64, out: &mut Vec<f64>) {
    if level == 0 {
        return;
    }
    let half = width / 2.0;
    concatenate(level - 1, start, half, out);
    out.push(start + half);
    concatenate(level - 1, start + half, half, out);
    out.push(start + width);
}

fn check_window(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(domain(format!(
            "interrogation time must be positive, got {tau}"
        )))
    }
}

/// Free function form of [`PulseSequence::moment_residual`].
pub fn moment_residual(seq: &PulseSequence, m: usize) -> f64 {
    seq.moment_residual(m)
}

/// Free function form of [`PulseSequence::lambda_factor`].
pub fn lambda_factor(seq: &PulseSequence, j: usize) -> f64 {
    seq.lambda_factor(j)
}

/// Free function form of [`PulseSequence::suppression_order`].
pub fn suppression_order(seq: &PulseSequence, tol: f64) -> Option<usize> {
    seq.suppression_order(tol)
}

/// Free function form of [`PulseSequence::switching_function`].
pub fn switching_function(seq: &PulseSequence, t: f64) -> Result<f64> {
    seq.switching_function(t)
}

/// Left-hand side of the UDD cancellation identity,
/// `2 Σ_{k=1}^{n+1} (-1)^{k-1} sin^{2m}(πk / (2n+4))`, for any `n` and `m`.
pub fn identity_lhs(n: usize, m: usize) -> f64 {
    let denom = (2 * n + 4) as f64;
    let sum: f64 = (1..=n + 1)
        .map(|k| {
            let s = (PI * k as f64 / denom).sin().powi(2 * m as i32);
            if k % 2 == 1 {
                s
            } else {
                -s
            }
        })
        .sum();
    2.0 * sum
}

/// Checks `identity_lhs(n, m) = (-1)^n` to within `1e-10`. The identity only
/// holds for `1 ≤ m ≤ n + 1`; other exponents are rejected.
pub fn verify_identity(n: usize, m: usize) -> Result<bool> {
    if m == 0 || m > n + 1 {
        return Err(Error::Precondition(format!(
            "identity requires 1 <= m <= n + 1, got n = {n}, m = {m}"
        )));
    }
    let rhs = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok((identity_lhs(n, m) - rhs).abs() <= 1e-10)
}

/// Moment residuals, cancellation order and `λ_j` factors of one schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppressionReport {
    pub residuals: Vec<f64>,
    pub order: Option<usize>,
    pub lambda: Vec<f64>,
}

impl SuppressionReport {
    /// Evaluate orders `0..=max_order`.
    pub fn evaluate(seq: &PulseSequence, max_order: usize, tol: f64) -> Self {
        Self {
            residuals: (0..=max_order).map(|m| seq.moment_residual(m)).collect(),
            order: seq.suppression_order(tol),
            lambda: (0..=max_order).map(|j| seq.lambda_factor(j)).collect(),
        }
    }
}

/// A rule producing a schedule for any window length, so that the same
/// protocol can be evaluated across a grid of interrogation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceFamily {
    Free,
    Hahn,
    Udd(usize),
    Cdd(usize),
    /// Pulse instants given as fractions of the window.
    Custom(Vec<f64>),
}

impl SequenceFamily {
    pub fn at(&self, tau: f64) -> Result<PulseSequence> {
        match self {
            SequenceFamily::Free => PulseSequence::free(tau),
            SequenceFamily::Hahn => hahn(tau),
            SequenceFamily::Udd(n) => udd(*n, tau),
            SequenceFamily::Cdd(l) => cdd(*l, tau),
            SequenceFamily::Custom(fractions) => {
                PulseSequence::custom(tau, fractions.iter().map(|x| x * tau).collect())
            }
        }
    }
}
