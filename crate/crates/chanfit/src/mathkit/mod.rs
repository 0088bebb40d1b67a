//! Special functions and random-variate primitives shared by the estimators
//! and distribution families.

mod rng;
mod special;

pub use rng::{gamma_variate, RngStream, RNG_ALGORITHM};
pub use special::{digamma, ln_gamma, reg_lower_inc_gamma, tetragamma, trigamma};
