//! Polygamma functions, log-gamma and the regularized incomplete gamma.
//!
//! The polygamma family is evaluated by upward recurrence until the argument
//! exceeds a shift threshold, then by the Bernoulli-number asymptotic series.
//! This keeps the absolute error below 1e-12 over `[1e-3, 1e6]` without any
//! table lookup.

use crate::error::{Error, Result};
use crate::real::Real;

const SHIFT: f64 = 10.0;

/// psi(x), the logarithmic derivative of the gamma function.
pub fn digamma<T: Real>(x: T) -> Result<T> {
    if !(x > T::zero()) {
        return Err(Error::domain(format!("digamma: x must be > 0, got {x}")));
    }
    let mut x = x;
    let mut acc = T::zero();
    while x < T::lit(SHIFT) {
        acc -= x.recip();
        x += T::one();
    }
    // psi(x) ~ ln x - 1/(2x) - sum B_2k / (2k x^2k)
    let inv2 = (x * x).recip();
    let mut series = T::zero();
    for &c in [
        1.0 / 12.0,
        -1.0 / 120.0,
        1.0 / 252.0,
        -1.0 / 240.0,
        1.0 / 132.0,
        -691.0 / 32760.0,
        1.0 / 12.0,
    ]
    .iter()
    .rev()
    {
        series = (series + T::lit(c)) * inv2;
    }
    Ok(acc + x.ln() - (T::lit(2.0) * x).recip() - series)
}

/// psi'(x), strictly positive and decreasing on x > 0.
pub fn trigamma<T: Real>(x: T) -> Result<T> {
    if !(x > T::zero()) {
        return Err(Error::domain(format!("trigamma: x must be > 0, got {x}")));
    }
    let mut x = x;
    let mut acc = T::zero();
    while x < T::lit(SHIFT) {
        acc += (x * x).recip();
        x += T::one();
    }
    // psi'(x) ~ 1/x + 1/(2x^2) + sum B_2k x^{-2k-1}
    let inv = x.recip();
    let inv2 = inv * inv;
    let mut series = T::zero();
    for &c in [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
    ]
    .iter()
    .rev()
    {
        series = (series + T::lit(c)) * inv2;
    }
    Ok(acc + inv + inv2 * T::lit(0.5) + series * inv)
}

/// psi''(x), strictly negative on x > 0.
pub fn tetragamma<T: Real>(x: T) -> Result<T> {
    if !(x > T::zero()) {
        return Err(Error::domain(format!("tetragamma: x must be > 0, got {x}")));
    }
    let mut x = x;
    let mut acc = T::zero();
    while x < T::lit(SHIFT) {
        acc -= T::lit(2.0) / (x * x * x);
        x += T::one();
    }
    // psi''(x) ~ -1/x^2 - 1/x^3 - sum (2k+1) B_2k x^{-2k-2}
    let inv = x.recip();
    let inv2 = inv * inv;
    let mut series = T::zero();
    for &c in [
        3.0 / 6.0,
        -5.0 / 30.0,
        7.0 / 42.0,
        -9.0 / 30.0,
        55.0 / 66.0,
        -13.0 * 691.0 / 2730.0,
        15.0 * 7.0 / 6.0,
    ]
    .iter()
    .rev()
    {
        series = (series + T::lit(c)) * inv2;
    }
    Ok(acc - inv2 - inv2 * inv - series * inv2)
}

/// ln Gamma(x) by the Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma<T: Real>(x: T) -> Result<T> {
    if !(x > T::zero()) {
        return Err(Error::domain(format!("ln_gamma: x must be > 0, got {x}")));
    }
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    let z = x - T::one();
    let mut acc = T::lit(0.999_999_999_999_809_93);
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += T::lit(c) / (z + T::lit(i as f64 + 1.0));
    }
    let t = z + T::lit(7.5);
    let half_ln_2pi = T::lit(0.918_938_533_204_672_7);
    Ok(half_ln_2pi + (z + T::lit(0.5)) * t.ln() - t + acc.ln())
}

/// Regularized lower incomplete gamma P(a, x).
///
/// Series expansion for `x < a + 1`, Lentz continued fraction otherwise.
pub fn reg_lower_inc_gamma<T: Real>(a: T, x: T) -> Result<T> {
    if !(a > T::zero()) {
        return Err(Error::domain(format!("reg_lower_inc_gamma: a must be > 0, got {a}")));
    }
    if !(x >= T::zero()) {
        return Err(Error::domain(format!("reg_lower_inc_gamma: x must be >= 0, got {x}")));
    }
    if x == T::zero() {
        return Ok(T::zero());
    }
    let ln_pre = a * x.ln() - x - ln_gamma(a)?;
    let eps = T::epsilon();
    if x < a + T::one() {
        let mut ap = a;
        let mut del = a.recip();
        let mut sum = del;
        for _ in 0..500 {
            ap += T::one();
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * eps {
                break;
            }
        }
        Ok((sum * ln_pre.exp()).min(T::one()))
    } else {
        let fpmin = T::min_positive_value() / eps;
        let mut b = x + T::one() - a;
        let mut c = fpmin.recip();
        let mut d = b.recip();
        let mut h = d;
        for i in 1..500 {
            let an = -T::lit(i as f64) * (T::lit(i as f64) - a);
            b += T::lit(2.0);
            d = an * d + b;
            if d.abs() < fpmin {
                d = fpmin;
            }
            c = b + an / c;
            if c.abs() < fpmin {
                c = fpmin;
            }
            d = d.recip();
            let del = d * c;
            h *= del;
            if (del - T::one()).abs() < eps {
                break;
            }
        }
        let q = ln_pre.exp() * h;
        Ok((T::one() - q).max(T::zero()))
    }
}
