//! Small-gain stability certificates for delayed cascades of scalar monotone
//! stages closed by an inhibitory feedback `u = mu / (1 + k x_n)`.
//!
//! The library has two halves that check each other:
//!
//! * the certificate side ([`stage`], [`gains`], [`certify`]) computes, for a
//!   chosen input floor `u_bar`, Lipschitz constants of the inverse
//!   steady-state maps along the cascade and turns them into a feedback-gain
//!   bound that holds for arbitrary delays;
//! * the simulation side ([`dde`], [`signals`]) integrates the delayed loop
//!   with a fixed-step method of steps and measures the asymptotic amplitude
//!   of the trajectory tail, so certified gains can be validated and the
//!   oscillatory regime beyond them located.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F64` aliases below are what the CLI uses.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod cli;
pub mod dde;
mod error;
pub mod gains;
mod scalar;
pub mod signals;
pub mod stage;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use certify::{Certificate, HopfBracket, LinearizedStage};
pub use dde::{CascadeModel, SimConfig, Simulation};
pub use gains::LinearGain;
pub use signals::{AmplitudeEstimate, SampledSignal};
pub use stage::{RationalStage, StageInterval};

pub type StageF64 = RationalStage<f64>;
pub type StageF32 = RationalStage<f32>;
pub type IntervalF64 = StageInterval<f64>;
pub type GainF64 = LinearGain<f64>;
pub type SignalF64 = SampledSignal<f64>;
pub type CascadeF64 = CascadeModel<f64>;
pub type SimConfigF64 = SimConfig<f64>;
pub type CertificateF64 = Certificate<f64>;
