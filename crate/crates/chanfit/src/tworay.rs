//! Two-ray ground-reflection path loss (the deterministic large-scale term).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Magnitude below which the two-ray interference term is treated as a null.
const DEEP_NULL_EPS: f64 = 1e-12;

/// Path-loss parameter bundle: exponent, ground permittivity, carrier and
/// antenna heights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoRayParams<T> {
    pub gamma: T,
    pub eps_r: T,
    pub freq_hz: T,
    pub h_t: T,
    pub h_r: T,
}

impl<T: Real> TwoRayParams<T> {
    pub fn new(gamma: T, eps_r: T, freq_hz: T, h_t: T, h_r: T) -> Result<Self> {
        if !(gamma > T::zero()) {
            return Err(Error::domain("two-ray: gamma must be > 0"));
        }
        if !(eps_r >= T::one()) {
            return Err(Error::domain("two-ray: eps_r must be >= 1"));
        }
        if !(freq_hz > T::zero() && h_t > T::zero() && h_r > T::zero()) {
            return Err(Error::domain("two-ray: freq_hz, h_t, h_r must be > 0"));
        }
        Ok(Self { gamma, eps_r, freq_hz, h_t, h_r })
    }

    pub fn wavelength_m(&self) -> T {
        T::lit(SPEED_OF_LIGHT) / self.freq_hz
    }

    pub fn with_gamma(self, gamma: T) -> Self {
        Self { gamma, ..self }
    }

    pub fn with_eps_r(self, eps_r: T) -> Self {
        Self { eps_r, ..self }
    }
}

/// Ray geometry for one transmitter-receiver separation.
#[derive(Clone, Copy, Debug)]
pub struct LinkGeometry<T> {
    pub d: T,
    pub d_los: T,
    pub d_ref: T,
    pub sin_theta: T,
    pub cos_theta: T,
}

impl<T: Real> LinkGeometry<T> {
    pub fn new(d: T, h_t: T, h_r: T) -> Result<Self> {
        if !(d > T::zero()) {
            return Err(Error::domain(format!("link geometry: d must be > 0, got {d}")));
        }
        let d_los = (d * d + (h_t - h_r) * (h_t - h_r)).sqrt();
        let d_ref = (d * d + (h_t + h_r) * (h_t + h_r)).sqrt();
        Ok(Self {
            d,
            d_los,
            d_ref,
            sin_theta: (h_t + h_r) / d_ref,
            cos_theta: d / d_ref,
        })
    }
}

/// Perpendicular-polarization ground reflection coefficient.
pub fn reflection_coeff<T: Real>(geom: &LinkGeometry<T>, eps_r: T) -> Result<T> {
    let radicand = eps_r - geom.cos_theta * geom.cos_theta;
    if radicand < T::zero() {
        return Err(Error::domain(format!("reflection_coeff: negative radicand for eps_r {eps_r}")));
    }
    let root = radicand.sqrt();
    Ok((geom.sin_theta - root) / (geom.sin_theta + root))
}

/// Phase difference of the direct and reflected rays, in radians (<= 0).
pub fn phase_diff<T: Real>(geom: &LinkGeometry<T>, lambda_m: T) -> Result<T> {
    if !(lambda_m > T::zero()) {
        return Err(Error::domain("phase_diff: lambda must be > 0"));
    }
    let two_pi = T::lit(std::f64::consts::TAU);
    Ok(two_pi * (geom.d_los - geom.d_ref) / lambda_m)
}

/// Two-ray path loss in dB at ground distance `d`.
///
/// The exponent applies to the whole bracketed expression, interference term
/// included. A vanishing interference magnitude is reported as a numerical
/// deep-null condition instead of an infinite loss.
pub fn path_loss_db<T: Real>(d: T, p: &TwoRayParams<T>) -> Result<T> {
    let geom = LinkGeometry::new(d, p.h_t, p.h_r)?;
    let lambda = p.wavelength_m();
    let refl = reflection_coeff(&geom, p.eps_r)?;
    let phi = phase_diff(&geom, lambda)?;
    let re = T::one() + refl * phi.cos();
    let im = refl * phi.sin();
    let mag = (re * re + im * im).sqrt();
    if mag < T::lit(DEEP_NULL_EPS) {
        return Err(Error::Numerical(format!(
            "deep two-ray null at d = {} m",
            num_traits::cast::<T, f64>(d).unwrap_or(f64::NAN)
        )));
    }
    let four_pi = T::lit(4.0 * std::f64::consts::PI);
    Ok(T::lit(10.0) * p.gamma * (four_pi * d / lambda / mag).log10())
}

/// Deterministic mean received power: `ptx - path_loss` (fading excluded).
pub fn mean_rx_power_dbm<T: Real>(d: T, ptx_dbm: T, p: &TwoRayParams<T>) -> Result<T> {
    Ok(ptx_dbm - path_loss_db(d, p)?)
}
