//! Spin-qubit dephasing in a slowly fluctuating magnetic environment, its
//! suppression by Uhrig dynamic decoupling (UDD), and the resulting
//! shot-noise-limited sensitivity of an NV-centre magnetometer.
//!
//! The crate is split by concern:
//!
//! * [`bath`] derives the RMS field, correlation time and Taylor-coefficient
//!   statistics of a dilute ¹³C nuclear-spin bath.
//! * [`sequences`] generates Hahn, UDD and CDD π-pulse schedules and
//!   evaluates their moment-cancellation properties.
//! * [`dephasing`] turns a bath and a schedule into a product of stretched
//!   exponentials.
//! * [`coherence`] solves for coherence times.
//! * [`sensitivity`] computes and optimizes magnetometer sensitivity.
//! * [`montecarlo`] is an independent stochastic oracle that integrates the
//!   qubit phase along sampled noise trajectories.
//!
//! ```
//! use nvdd::coherence::udd_model;
//! use nvdd::sensitivity::optimize_pulses;
//! use nvdd::{bath_from_concentration, coherence_time, MeasurementConfig, PhysicalConstants};
//!
//! let constants = PhysicalConstants::CODATA;
//! let env = bath_from_concentration(0.011, &constants)?;
//!
//! let t2 = coherence_time(&udd_model(4, &env, constants.gamma_e)?);
//! assert!(t2.t2 < env.tau_c);
//!
//! let cfg = MeasurementConfig { pulse_width: 50e-9, ..MeasurementConfig::default() };
//! let best = optimize_pulses(&env, &cfg, 40)?;
//! assert!(best.pulses > 1 && best.tau <= env.tau_c);
//! # Ok::<(), nvdd::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bath;
pub mod coherence;
pub mod dephasing;
mod error;
pub mod montecarlo;
pub mod numeric;
pub mod sensitivity;
pub mod sequences;

pub use bath::{bath_from_concentration, NoiseEnvironment, PhysicalConstants, SigmaModel};
pub use coherence::{coherence_curve, coherence_time, CoherencePoint};
pub use dephasing::{gamma_rate, modified_model, DephasingModel, Truncation};
pub use error::{Error, Result};
pub use sensitivity::{MeasurementConfig, Mode, SensitivityPoint};
pub use sequences::{PulseSequence, SequenceFamily, SequenceLabel, SuppressionReport};
