//! The alpha-mu and Nakagami-m fading families: densities in linear and dB
//! domain, CDFs, moments, gamma-transform samplers and Nakagami ML fitting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathkit::{digamma, gamma_variate, ln_gamma, reg_lower_inc_gamma, trigamma};
use crate::real::Real;

/// Shape floor below which a Nakagami fit is flagged (textbook support starts
/// at 0.5 but field fits below it do occur).
pub const NAKAGAMI_M_FLOOR: f64 = 0.05;
const NAKAGAMI_M_FLAG: f64 = 0.5;

/// alpha-mu parameter triple: nonlinearity exponent, cluster parameter and
/// the alpha-root-mean scale of `X^alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaMu<T> {
    pub alpha: T,
    pub mu: T,
    pub omega: T,
}

impl<T: Real> AlphaMu<T> {
    pub fn new(alpha: T, mu: T, omega: T) -> Result<Self> {
        if !(alpha > T::zero() && mu > T::zero() && omega > T::zero()) {
            return Err(Error::domain(format!(
                "alpha-mu: all parameters must be > 0, got ({alpha}, {mu}, {omega})"
            )));
        }
        Ok(Self { alpha, mu, omega })
    }

    /// Density of the linear envelope at `x > 0`.
    pub fn pdf(&self, x: T) -> Result<T> {
        if !(x > T::zero()) {
            return Err(Error::domain(format!("alpha-mu pdf: x must be > 0, got {x}")));
        }
        let Self { alpha, mu, omega } = *self;
        let ln_f = alpha.ln() + mu * mu.ln() + (alpha * mu - T::one()) * x.ln()
            - alpha * mu * omega.ln()
            - ln_gamma(mu)?
            - mu * (x / omega).powf(alpha);
        Ok(ln_f.exp())
    }

    /// Density of `L = 20 log10 X` at `l` dB (support is all reals).
    pub fn log_pdf_db(&self, l: T) -> Result<T> {
        let Self { alpha, mu, omega } = *self;
        let a = T::db_scale();
        let ln_f = -a.ln() + alpha.ln() + mu * mu.ln() - alpha * mu * omega.ln() - ln_gamma(mu)?
            + alpha * mu * l / a
            - mu * (alpha * l / a).exp() / omega.powf(alpha);
        Ok(ln_f.exp())
    }

    /// CDF of the linear envelope.
    pub fn cdf(&self, x: T) -> Result<T> {
        if !(x >= T::zero()) {
            return Err(Error::domain(format!("alpha-mu cdf: x must be >= 0, got {x}")));
        }
        if x == T::zero() {
            return Ok(T::zero());
        }
        reg_lower_inc_gamma(self.mu, self.mu * (x / self.omega).powf(self.alpha))
    }

    /// CDF of the dB envelope `L = 20 log10 X`.
    pub fn cdf_db(&self, l: T) -> Result<T> {
        self.cdf(T::lit(10.0).powf(l / T::lit(20.0)))
    }

    /// Raw moment `E[X^k] = Omega^k Gamma(mu + k/alpha) / (mu^{k/alpha} Gamma(mu))`.
    pub fn moment(&self, k: T) -> Result<T> {
        let shift = self.mu + k / self.alpha;
        if !(shift > T::zero()) {
            return Err(Error::domain(format!("alpha-mu moment: mu + k/alpha must be > 0, got {shift}")));
        }
        let ln_m = k * self.omega.ln() + ln_gamma(shift)? - (k / self.alpha) * self.mu.ln()
            - ln_gamma(self.mu)?;
        Ok(ln_m.exp())
    }

    /// Closed-form mean of the dB envelope:
    /// `(A/alpha)(psi(mu) - ln mu) + 20 log10 Omega`.
    pub fn mean_db(&self) -> Result<T> {
        let a = T::db_scale();
        Ok(a / self.alpha * (digamma(self.mu)? - self.mu.ln()) + a * self.omega.ln())
    }

    /// Closed-form central dB moments `(A/alpha)^2 psi'(mu)` and
    /// `(A/alpha)^3 psi''(mu)`.
    pub fn central_db_moments(&self) -> Result<(T, T)> {
        let s = T::db_scale() / self.alpha;
        Ok((s * s * trigamma(self.mu)?, s * s * s * crate::mathkit::tetragamma(self.mu)?))
    }
}

impl AlphaMu<f64> {
    /// Draws one linear-envelope variate via the gamma transform
    /// `X = Omega (G/mu)^{1/alpha}`, `G ~ Gamma(mu, 1)`.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let g = gamma_variate(rng, self.mu)?;
        Ok(self.omega * (g / self.mu).powf(1.0 / self.alpha))
    }

    /// Draws `n` i.i.d. linear-envelope variates.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::domain("alpha-mu sample: n must be >= 1"));
        }
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    /// Draws `n` variates converted to dB (`20 log10 X`).
    pub fn sample_db<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<f64>> {
        Ok(self.sample(rng, n)?.into_iter().map(|x| 20.0 * x.log10()).collect())
    }
}

/// Nakagami-m parameter pair: shape and spread `omega = E[X^2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nakagami<T> {
    pub m: T,
    pub omega_pow: T,
}

impl<T: Real> Nakagami<T> {
    pub fn new(m: T, omega_pow: T) -> Result<Self> {
        if !(m >= T::lit(NAKAGAMI_M_FLOOR)) {
            return Err(Error::domain(format!("nakagami: m must be >= {NAKAGAMI_M_FLOOR}, got {m}")));
        }
        if !(omega_pow > T::zero()) {
            return Err(Error::domain(format!("nakagami: omega must be > 0, got {omega_pow}")));
        }
        Ok(Self { m, omega_pow })
    }

    /// The same point of the alpha-mu family: `(alpha, mu, Omega) = (2, m, sqrt(omega))`.
    pub fn as_alpha_mu(&self) -> AlphaMu<T> {
        AlphaMu { alpha: T::lit(2.0), mu: self.m, omega: self.omega_pow.sqrt() }
    }

    pub fn pdf(&self, x: T) -> Result<T> {
        if !(x > T::zero()) {
            return Err(Error::domain(format!("nakagami pdf: x must be > 0, got {x}")));
        }
        let Self { m, omega_pow: w } = *self;
        let ln_f = T::lit(2.0).ln() + m * m.ln() + (T::lit(2.0) * m - T::one()) * x.ln()
            - m * w.ln()
            - ln_gamma(m)?
            - m * x * x / w;
        Ok(ln_f.exp())
    }

    pub fn cdf(&self, x: T) -> Result<T> {
        if !(x >= T::zero()) {
            return Err(Error::domain(format!("nakagami cdf: x must be >= 0, got {x}")));
        }
        if x == T::zero() {
            return Ok(T::zero());
        }
        reg_lower_inc_gamma(self.m, self.m * x * x / self.omega_pow)
    }

    /// CDF of the dB envelope.
    pub fn cdf_db(&self, l: T) -> Result<T> {
        self.as_alpha_mu().cdf_db(l)
    }
}

impl Nakagami<f64> {
    /// Draws one variate via `X = sqrt(omega G / m)`, `G ~ Gamma(m, 1)`.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let g = gamma_variate(rng, self.m)?;
        Ok((self.omega_pow * g / self.m).sqrt())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::domain("nakagami sample: n must be >= 1"));
        }
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    pub fn sample_db<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<f64>> {
        Ok(self.sample(rng, n)?.into_iter().map(|x| 20.0 * x.log10()).collect())
    }
}

/// Result of a Nakagami ML fit.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NakagamiFit {
    pub params: Nakagami<f64>,
    /// Set when the fitted shape lies below the textbook 0.5 floor.
    pub low_shape: bool,
    pub iterations: usize,
}

/// Maximum-likelihood Nakagami fit on the linear envelope.
///
/// `omega = mean(x^2)`; the shape solves `ln m - psi(m) = Delta` with
/// `Delta = ln mean(x^2) - mean(ln x^2)`, by Newton started from the
/// closed-form approximation, with a bisection fallback on `[1e-2, 1e3]`.
pub fn nakagami_ml_fit(samples: &[f64], max_iter: usize, tol: f64) -> Result<NakagamiFit> {
    if samples.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "nakagami fit needs >= 10 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::domain("nakagami fit: all samples must be > 0"));
    }
    let n = samples.len() as f64;
    let mean_sq = samples.iter().map(|x| x * x).sum::<f64>() / n;
    let mean_ln_sq = samples.iter().map(|x| 2.0 * x.ln()).sum::<f64>() / n;
    let delta = mean_sq.ln() - mean_ln_sq;
    if !(delta > 0.0) {
        return Err(Error::Numerical(format!(
            "nakagami fit: degenerate log-spread (Delta = {delta})"
        )));
    }

    let g = |m: f64| -> Result<f64> { Ok(m.ln() - digamma(m)? - delta) };
    let mut m = (6.0 - 2.0 * delta + (delta * delta + 24.0 * delta).sqrt()) / (12.0 * delta);
    m = m.clamp(1e-2, 1e3);
    let (mut lo, mut hi) = (1e-2, 1e3);
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..max_iter {
        iterations += 1;
        let gv = g(m)?;
        if gv.abs() <= tol {
            converged = true;
            break;
        }
        // g is decreasing in m
        if gv > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
        let deriv = 1.0 / m - trigamma(m)?;
        let step = gv / deriv;
        let next = m - step;
        m = if next.is_finite() && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    if !converged && g(m)?.abs() > tol {
        return Err(Error::Numerical(format!(
            "nakagami fit: shape solve did not converge in {max_iter} iterations"
        )));
    }
    let m = m.max(NAKAGAMI_M_FLOOR);
    Ok(NakagamiFit {
        params: Nakagami { m, omega_pow: mean_sq },
        low_shape: m < NAKAGAMI_M_FLAG,
        iterations,
    })
}
