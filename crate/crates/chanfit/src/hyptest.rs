//! Hypothesis-testing battery: one/two-sample K-S, Anderson-Darling
//! normality, F-test for variance equality, unpaired t-test, and the
//! Wilcoxon rank-sum test.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erf;

use crate::error::{Error, Result};

/// Result of a Kolmogorov-Smirnov test.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KsResult {
    pub d_stat: f64,
    pub p_value: f64,
    pub n_effective: f64,
    /// `pass` iff `p_value > significance`.
    pub pass: bool,
    pub significance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestMethod {
    AndersonDarling,
    FTest,
    TTest,
    Wilcoxon,
}

/// Generic test result; `h = 1` iff `p_value <= significance`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub h: u8,
    pub method: TestMethod,
    pub significance: f64,
    /// Set when the inputs were degenerate (e.g. zero variance).
    pub degenerate: bool,
}

impl TestResult {
    fn new(statistic: f64, p_value: f64, method: TestMethod, significance: f64) -> Self {
        let p = p_value.clamp(0.0, 1.0);
        Self { statistic, p_value: p, h: (p <= significance) as u8, method, significance, degenerate: false }
    }
}

/// Right-continuous empirical CDF: sorted unique support with cumulative
/// levels.
#[derive(Clone, Debug)]
pub struct EmpiricalCdf {
    pub support: Vec<f64>,
    pub levels: Vec<f64>,
    pub n: usize,
}

pub fn empirical_cdf(samples: &[f64]) -> Result<EmpiricalCdf> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("empirical_cdf: empty sample set".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    let mut support = Vec::new();
    let mut levels = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[j + 1] == xs[i] {
            j += 1;
        }
        support.push(xs[i]);
        levels.push((j + 1) as f64 / n as f64);
        i = j + 1;
    }
    Ok(EmpiricalCdf { support, levels, n })
}

impl EmpiricalCdf {
    /// F_E(x) = (1/n) #{x_i <= x}.
    pub fn eval(&self, x: f64) -> f64 {
        match self.support.partition_point(|&s| s <= x) {
            0 => 0.0,
            k => self.levels[k - 1],
        }
    }
}

/// Survival function of the Kolmogorov distribution, Q(t) = P(K > t).
///
/// Alternating exponential series for large t; Jacobi-theta form for small t
/// where the alternating series converges slowly. Terms accumulate until
/// below 1e-10 (capped at 100 terms).
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.18 {
        // Q(t) = 1 - (sqrt(2 pi)/t) sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 t^2))
        let mut s = 0.0;
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * t * t);
        for k in 1..=100u32 {
            let q = (2 * k - 1) as f64;
            let term = (-q * q * c).exp();
            s += term;
            if term < 1e-10 {
                break;
            }
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / t * s).clamp(0.0, 1.0)
    } else {
        // Q(t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2)
        let mut s = 0.0;
        let mut sign = 1.0;
        for k in 1..=100u32 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * t * t).exp();
            s += sign * term;
            if term < 1e-10 {
                break;
            }
            sign = -sign;
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// One-sample K-S test of `samples` against a continuous hypothesized CDF.
///
/// D is evaluated at the step discontinuities only: for sorted samples,
/// max over i of max(|F(x_i) - i/n|, |F(x_i) - (i-1)/n|).
pub fn ks_one_sample<F>(samples: &[f64], cdf: F, significance: f64) -> Result<KsResult>
where
    F: Fn(f64) -> f64,
{
    if samples.is_empty() {
        return Err(Error::InsufficientData("ks_one_sample: empty sample set".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::domain(format!("ks_one_sample: cdf({x}) = {f} outside [0,1]")));
        }
        let hi = (i + 1) as f64 / n;
        let lo = i as f64 / n;
        d = d.max((f - hi).abs()).max((f - lo).abs());
    }
    let p = kolmogorov_sf(n.sqrt() * d);
    Ok(KsResult { d_stat: d, p_value: p, n_effective: n, pass: p > significance, significance })
}

/// Two-sample K-S: D = sup |F_a - F_b| over the merged support, effective
/// size n_a n_b / (n_a + n_b).
pub fn ks_two_sample(a: &[f64], b: &[f64], significance: f64) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("ks_two_sample: empty sample set".into()));
    }
    let fa = empirical_cdf(a)?;
    let fb = empirical_cdf(b)?;
    let mut d: f64 = 0.0;
    for &x in fa.support.iter().chain(fb.support.iter()) {
        d = d.max((fa.eval(x) - fb.eval(x)).abs());
    }
    let n_eff = (fa.n * fb.n) as f64 / (fa.n + fb.n) as f64;
    let p = kolmogorov_sf(n_eff.sqrt() * d);
    Ok(KsResult { d_stat: d, p_value: p, n_effective: n_eff, pass: p > significance, significance })
}

/// Standard normal CDF.
fn phi(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Anderson-Darling normality test with estimated mean/variance
/// (D'Agostino-Stephens small-sample adjustment and p-value formula).
pub fn anderson_darling_normal(samples: &[f64], significance: f64) -> Result<TestResult> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::InsufficientData(format!("anderson_darling: need >= 8 samples, got {n}")));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if var == 0.0 {
        return Err(Error::Numerical("anderson_darling: zero sample variance".into()));
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut s = 0.0;
    for i in 0..n {
        let p_lo = phi(z[i]).clamp(1e-300, 1.0 - 1e-16);
        let p_hi = (1.0 - phi(z[n - 1 - i])).clamp(1e-300, 1.0 - 1e-16);
        s += (2 * i + 1) as f64 * (p_lo.ln() + p_hi.ln());
    }
    let a2 = -nf - s / nf;
    let a2_star = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let p = if a2_star >= 0.6 {
        (1.2937 - 5.709 * a2_star + 0.0186 * a2_star * a2_star).exp()
    } else if a2_star > 0.34 {
        (0.9177 - 4.279 * a2_star - 1.38 * a2_star * a2_star).exp()
    } else if a2_star > 0.2 {
        1.0 - (-8.318 + 42.796 * a2_star - 59.938 * a2_star * a2_star).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a2_star - 223.73 * a2_star * a2_star).exp()
    };
    Ok(TestResult::new(a2_star, p, TestMethod::AndersonDarling, significance))
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// CDF of the F distribution with (d1, d2) degrees of freedom.
fn f_cdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    beta_reg(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))
}

/// Two-tailed F-test of variance equality: F = s_a^2 / s_b^2.
pub fn f_test_var(a: &[f64], b: &[f64], significance: f64) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData("f_test_var: need >= 2 samples per side".into()));
    }
    let va = sample_variance(a);
    let vb = sample_variance(b);
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Numerical("f_test_var: zero sample variance".into()));
    }
    let f = va / vb;
    let d1 = (a.len() - 1) as f64;
    let d2 = (b.len() - 1) as f64;
    let lower = f_cdf(f, d1, d2);
    let p = (2.0 * lower.min(1.0 - lower)).min(1.0);
    Ok(TestResult::new(f, p, TestMethod::FTest, significance))
}

/// Two-tailed p-value for a t statistic with `dof` degrees of freedom.
fn t_sf_two_tailed(t: f64, dof: f64) -> f64 {
    beta_reg(dof / 2.0, 0.5, dof / (dof + t * t))
}

/// Pooled-variance unpaired two-sample t-test, two-tailed.
pub fn t_test_unpaired(a: &[f64], b: &[f64], significance: f64) -> Result<TestResult> {
    let (na, nb) = (a.len(), b.len());
    if na < 2 || nb < 2 {
        return Err(Error::InsufficientData("t_test_unpaired: need >= 2 samples per side".into()));
    }
    let (naf, nbf) = (na as f64, nb as f64);
    let ma = a.iter().sum::<f64>() / naf;
    let mb = b.iter().sum::<f64>() / nbf;
    let dof = naf + nbf - 2.0;
    let pooled = ((naf - 1.0) * sample_variance(a) + (nbf - 1.0) * sample_variance(b)) / dof;
    if pooled == 0.0 {
        // all points identical within each sample
        let mut r = if ma == mb {
            TestResult::new(0.0, 1.0, TestMethod::TTest, significance)
        } else {
            TestResult::new(f64::INFINITY * (ma - mb).signum(), 0.0, TestMethod::TTest, significance)
        };
        r.degenerate = true;
        return Ok(r);
    }
    let t = (ma - mb) / (pooled * (1.0 / naf + 1.0 / nbf)).sqrt();
    Ok(TestResult::new(t, t_sf_two_tailed(t, dof), TestMethod::TTest, significance))
}

/// Midranks of the merged sample; returns (ranks_a_sum, tie group sizes, midranks).
fn midrank_sum(a: &[f64], b: &[f64]) -> (f64, Vec<usize>, Vec<f64>) {
    // merged (value, is_a) sorted by value
    let mut merged: Vec<(f64, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    merged.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    let n = merged.len();
    let mut w = 0.0;
    let mut ties = Vec::new();
    let mut midranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && merged[j + 1].0 == merged[i].0 {
            j += 1;
        }
        let rank = (i + 1 + j + 1) as f64 / 2.0;
        for (k, m) in merged.iter().enumerate().take(j + 1).skip(i) {
            midranks[k] = rank;
            if m.1 {
                w += rank;
            }
        }
        ties.push(j + 1 - i);
        i = j + 1;
    }
    (w, ties, midranks)
}

/// Exact two-sided p: enumerate all size-n_a subsets of the midranks and count
/// rank sums at least as far from the mean as observed.
fn wilcoxon_exact_p(midranks: &[f64], na: usize, w_obs: f64) -> f64 {
    let n = midranks.len();
    let mu = na as f64 * midranks.iter().sum::<f64>() / n as f64;
    let dev = (w_obs - mu).abs();
    let mut extreme: u64 = 0;
    let mut total: u64 = 0;
    // iterative combination walk over index subsets
    fn rec(midranks: &[f64], start: usize, left: usize, sum: f64, mu: f64, dev: f64, extreme: &mut u64, total: &mut u64) {
        if left == 0 {
            *total += 1;
            if (sum - mu).abs() >= dev - 1e-12 {
                *extreme += 1;
            }
            return;
        }
        if midranks.len() - start < left {
            return;
        }
        rec(midranks, start + 1, left - 1, sum + midranks[start], mu, dev, extreme, total);
        rec(midranks, start + 1, left, sum, mu, dev, extreme, total);
    }
    rec(midranks, 0, na, 0.0, mu, dev, &mut extreme, &mut total);
    extreme as f64 / total as f64
}

/// Wilcoxon rank-sum test with midranks; exact enumeration for
/// n_a + n_b <= 20, else tie-corrected normal approximation with 0.5
/// continuity correction. Two-sided.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64], significance: f64) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("wilcoxon: empty sample set".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let (w, ties, midranks) = midrank_sum(a, b);
    if n <= 20 {
        let p = wilcoxon_exact_p(&midranks, na, w);
        return Ok(TestResult::new(w, p, TestMethod::Wilcoxon, significance));
    }
    let (naf, nbf, nf) = (na as f64, nb as f64, n as f64);
    let mu = naf * (nf + 1.0) / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = naf * nbf / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        // all observations identical
        let mut r = TestResult::new(w, 1.0, TestMethod::Wilcoxon, significance);
        r.degenerate = true;
        return Ok(r);
    }
    let z = ((w - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let p = 2.0 * (1.0 - phi(z));
    Ok(TestResult::new(w, p, TestMethod::Wilcoxon, significance))
}
