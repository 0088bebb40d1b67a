//! Log-moment alpha-mu parameter estimators operating on dB-domain fading
//! residuals: central moments -> tau -> mu -> alpha -> Omega.

use serde::{Deserialize, Serialize};

use crate::dists::AlphaMu;
use crate::error::{Error, Result};
use crate::mathkit::trigamma;
use crate::AlphaMuParams;
use crate::DB_SCALE;

/// Default minimum bin population for a fit (third-moment stability).
pub const DEFAULT_SAMPLE_FLOOR: usize = 30;

/// Empirical mean and 2nd/3rd central moments of a dB sample set.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LogMoments {
    pub mean_db: f64,
    pub m2: f64,
    pub m3: f64,
    pub n: usize,
}

/// Tau statistic with its domain flag (valid alpha-mu data has tau < -1/2).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TauHat {
    pub value: f64,
    pub in_domain: bool,
}

/// Which branch of the piecewise mu estimator produced the value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MuBranch {
    /// tau <= -2.85: tau^2 + 1/2
    Quadratic,
    /// -2.85 < tau <= -0.6: quartic polynomial
    Quartic,
    /// -0.6 < tau < -0.5: cubic polynomial
    Cubic,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MuHat {
    pub value: f64,
    pub branch: MuBranch,
    /// Set when the polynomial dipped non-positive and was clamped.
    pub clamped: bool,
}

/// Fit diagnostics recorded alongside the recovered parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub tau: f64,
    pub branch: MuBranch,
    pub mu_clamped: bool,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AlphaMuFit {
    pub params: AlphaMuParams,
    pub diagnostics: FitDiagnostics,
}

/// Structured outcome of a bin fit: a tau-domain failure is data, not a crash.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum AlphaMuFitResult {
    Fit(AlphaMuFit),
    Unfittable { tau: Option<f64>, reason: String },
}

impl AlphaMuFitResult {
    pub fn fit(&self) -> Option<&AlphaMuFit> {
        match self {
            AlphaMuFitResult::Fit(f) => Some(f),
            AlphaMuFitResult::Unfittable { .. } => None,
        }
    }
}

/// Mean and 2nd/3rd central moments in one stable pass (subtract mean, then
/// power sums; plain biased 1/n normalization matching the expectation form).
pub fn central_log_moments(samples_db: &[f64]) -> Result<LogMoments> {
    central_log_moments_with_floor(samples_db, DEFAULT_SAMPLE_FLOOR)
}

pub fn central_log_moments_with_floor(samples_db: &[f64], floor: usize) -> Result<LogMoments> {
    if samples_db.len() < floor {
        return Err(Error::InsufficientData(format!(
            "central moments need >= {floor} samples, got {}",
            samples_db.len()
        )));
    }
    let n = samples_db.len() as f64;
    let mean = samples_db.iter().sum::<f64>() / n;
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    for &l in samples_db {
        let d = l - mean;
        s2 += d * d;
        s3 += d * d * d;
    }
    Ok(LogMoments { mean_db: mean, m2: s2 / n, m3: s3 / n, n: samples_db.len() })
}

/// `tau = m2^{3/2} / m3`; negative for valid alpha-mu data.
pub fn tau_hat(m: &LogMoments) -> Result<TauHat> {
    if m.m3 == 0.0 {
        return Err(Error::Numerical("tau: third central moment is zero".into()));
    }
    let value = m.m2.powf(1.5) / m.m3;
    Ok(TauHat { value, in_domain: value < -0.5 })
}

/// Piecewise inversion of tau -> mu.
pub fn mu_hat(tau: f64) -> Result<MuHat> {
    if !(tau < -0.5) {
        return Err(Error::domain(format!("mu estimator: tau must be < -0.5, got {tau}")));
    }
    let (raw, branch) = if tau <= -2.85 {
        (tau * tau + 0.5, MuBranch::Quadratic)
    } else if tau <= -0.6 {
        let t2 = tau * tau;
        (
            -0.0773 * t2 * t2 - 0.6046 * t2 * tau - 0.7949 * t2 - 2.4675 * tau - 0.9208,
            MuBranch::Quartic,
        )
    } else {
        let t2 = tau * tau;
        (
            -132.8995 * t2 * tau - 232.0659 * t2 - 137.6303 * tau - 27.3616,
            MuBranch::Cubic,
        )
    };
    let clamped = raw <= 0.0;
    Ok(MuHat { value: if clamped { 1e-6 } else { raw }, branch, clamped })
}

/// `alpha = A sqrt(psi'(mu) / m2)`.
pub fn alpha_hat(mu: f64, m2: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::domain(format!("alpha estimator: mu must be > 0, got {mu}")));
    }
    if !(m2 > 0.0) {
        return Err(Error::domain(format!("alpha estimator: m2 must be > 0, got {m2}")));
    }
    Ok(DB_SCALE * (trigamma(mu)? / m2).sqrt())
}

/// `Omega = (E[exp(alpha l / A)])^{1/alpha}`, evaluated with shifted
/// exponentials so large dB values cannot overflow.
pub fn omega_hat(samples_db: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::domain(format!("omega estimator: alpha must be > 0, got {alpha}")));
    }
    if samples_db.is_empty() {
        return Err(Error::InsufficientData("omega estimator: empty sample set".into()));
    }
    let l_max = samples_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = samples_db.len() as f64;
    let mean_shifted =
        samples_db.iter().map(|&l| (alpha * (l - l_max) / DB_SCALE).exp()).sum::<f64>() / n;
    Ok((l_max / DB_SCALE + mean_shifted.ln() / alpha).exp())
}

/// Full estimator chain on dB residuals.
pub fn fit_alphamu(samples_db: &[f64]) -> Result<AlphaMuFitResult> {
    fit_alphamu_with_floor(samples_db, DEFAULT_SAMPLE_FLOOR)
}

pub fn fit_alphamu_with_floor(samples_db: &[f64], floor: usize) -> Result<AlphaMuFitResult> {
    let moments = central_log_moments_with_floor(samples_db, floor)?;
    let tau = match tau_hat(&moments) {
        Ok(t) => t,
        Err(_) => {
            return Ok(AlphaMuFitResult::Unfittable {
                tau: None,
                reason: "zero third central moment".into(),
            })
        }
    };
    if !tau.in_domain {
        return Ok(AlphaMuFitResult::Unfittable {
            tau: Some(tau.value),
            reason: format!("tau = {:.4} outside (-inf, -0.5)", tau.value),
        });
    }
    let mu = mu_hat(tau.value)?;
    let alpha = alpha_hat(mu.value, moments.m2)?;
    let omega = omega_hat(samples_db, alpha)?;
    let params = AlphaMu::new(alpha, mu.value, omega)?;
    Ok(AlphaMuFitResult::Fit(AlphaMuFit {
        params,
        diagnostics: FitDiagnostics {
            tau: tau.value,
            branch: mu.branch,
            mu_clamped: mu.clamped,
            n: moments.n,
        },
    }))
}
