//! Channel-model fitting toolkit for vehicular RSSI datasets.
//!
//! The crate covers the full chain from raw `(distance, RSSI)` records to a
//! statistical comparison of fading families:
//!
//! * [`tworay`] — deterministic two-ray ground-reflection path loss,
//! * [`pathloss`] — pairwise-difference estimation of `(eps_r, gamma)` with a
//!   regression baseline,
//! * [`dists`] — alpha-mu and Nakagami-m distributions (densities, CDFs,
//!   samplers, Nakagami ML fit),
//! * [`logmoment`] — log-moment alpha-mu estimators on dB residuals,
//! * [`hyptest`] — K-S, Anderson-Darling, F, t and Wilcoxon tests,
//! * [`pipeline`] — the end-to-end comparison harness and report writer,
//! * [`synth`] — ground-truth scenario synthesizer for known-answer tests.
//!
//! Scalar-valued math is generic over [`real::Real`]; samplers, estimators
//! working on data slices and the pipeline are `f64`. The usual entry points
//! are the `f64` aliases re-exported at the crate root.

pub mod config;
pub mod dists;
pub mod error;
pub mod hyptest;
pub mod logmoment;
pub mod mathkit;
pub mod pathloss;
pub mod pipeline;
pub mod real;
pub mod synth;
pub mod tworay;

pub use error::{Error, Result};
pub use pipeline::records::{ResidualRecord, RssiRecord};
pub use real::Real;

/// alpha-mu parameter triple over `f64`.
pub type AlphaMuParams = dists::AlphaMu<f64>;
/// alpha-mu parameter triple over `f32`.
pub type AlphaMuParams32 = dists::AlphaMu<f32>;
/// Nakagami-m parameter pair over `f64`.
pub type NakagamiParams = dists::Nakagami<f64>;
/// Nakagami-m parameter pair over `f32`.
pub type NakagamiParams32 = dists::Nakagami<f32>;
/// Two-ray path-loss parameter bundle over `f64`.
pub type TwoRay = tworay::TwoRayParams<f64>;

/// dB-of-amplitude scale constant `A = 20 / ln 10`.
pub const DB_SCALE: f64 = 20.0 / std::f64::consts::LN_10;
