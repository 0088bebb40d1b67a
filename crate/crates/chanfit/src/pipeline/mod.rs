//! End-to-end orchestration: residual binning, per-bin family fits, sample
//! regeneration, the repeated K-S pass-count harness and the family
//! comparison report.

pub mod records;
pub mod report;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dists::{nakagami_ml_fit, NakagamiFit};
use crate::error::{Error, Result};
use crate::hyptest::{
    anderson_darling_normal, f_test_var, ks_two_sample, t_test_unpaired, wilcoxon_rank_sum,
    TestResult,
};
use crate::logmoment::{fit_alphamu_with_floor, AlphaMuFit, AlphaMuFitResult};
use crate::mathkit::{RngStream, RNG_ALGORITHM};
use crate::pipeline::records::ResidualRecord;

/// Default minimum bin population for a per-bin fit.
pub const FIT_SAMPLE_FLOOR: usize = 30;
/// Stream offset separating the Nakagami repetition streams from alpha-mu's.
pub const NAKAGAMI_STREAM_BASE: u64 = 10_000;
/// Fit-bin sizes of the standard comparison table, in metres.
pub const STANDARD_FIT_BINS_M: [f64; 8] = [5.0, 10.0, 20.0, 40.0, 80.0, 100.0, 200.0, 400.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    AlphaMu,
    Nakagami,
}

impl Family {
    pub fn label(&self) -> &'static str {
        match self {
            Family::AlphaMu => "alpha-mu",
            Family::Nakagami => "nakagami",
        }
    }

    /// Repetition `r` draws from stream `base + r`.
    pub fn stream_base(&self) -> u64 {
        match self {
            Family::AlphaMu => 0,
            Family::Nakagami => NAKAGAMI_STREAM_BASE,
        }
    }
}

/// Per-bin fit outcome; failures are data, not errors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum FitOutcome {
    AlphaMu(AlphaMuFit),
    Nakagami(NakagamiFit),
    Insufficient,
    Unfittable { tau: Option<f64>, reason: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BinFit {
    pub bin_lo_m: f64,
    pub bin_hi_m: f64,
    pub n: usize,
    pub family: Family,
    pub outcome: FitOutcome,
}

impl BinFit {
    pub fn fitted(&self) -> bool {
        matches!(self.outcome, FitOutcome::AlphaMu(_) | FitOutcome::Nakagami(_))
    }
}

/// Pass counts of the repeated regeneration K-S harness.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PassCountSequence {
    pub family: Family,
    pub rep_counts: Vec<u32>,
    pub eval_bin_m: f64,
    /// Evaluation bins actually tested (>= 2 field points, covered by a
    /// successful fit).
    pub n_eval_bins: usize,
    /// Evaluation bins excluded from the denominator.
    pub skipped_eval_bins: usize,
}

impl PassCountSequence {
    pub fn mean(&self) -> f64 {
        if self.rep_counts.is_empty() {
            return f64::NAN;
        }
        self.rep_counts.iter().map(|&c| c as f64).sum::<f64>() / self.rep_counts.len() as f64
    }
}

/// One comparison-table row. Exactly one of `t_test` / `wilcoxon` is
/// populated unless the row is degenerate or underpowered.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub fit_bin_m: f64,
    pub mean_pass_alphamu: f64,
    pub mean_pass_nakagami: f64,
    pub n_eval_bins: usize,
    pub ad_alphamu: Option<TestResult>,
    pub ad_nakagami: Option<TestResult>,
    pub f_test: Option<TestResult>,
    pub t_test: Option<TestResult>,
    pub wilcoxon: Option<TestResult>,
    pub underpowered: bool,
    pub no_difference: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportMeta {
    pub master_seed: u64,
    pub reps: usize,
    pub eval_bin_m: f64,
    pub significance_bin: f64,
    pub significance_comparison: f64,
    pub rng_algorithm: String,
    pub tool_version: String,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub meta: ReportMeta,
    pub rows: Vec<ComparisonRow>,
}

/// Fits one family per contiguous bin of width `fit_bin_m` covering
/// `[0, ceil(max d / width) * width)`. Empty or under-populated bins are
/// marked insufficient.
pub fn fit_bins(residuals: &[ResidualRecord], fit_bin_m: f64, family: Family) -> Result<Vec<BinFit>> {
    fit_bins_with_floor(residuals, fit_bin_m, family, FIT_SAMPLE_FLOOR)
}

pub fn fit_bins_with_floor(
    residuals: &[ResidualRecord],
    fit_bin_m: f64,
    family: Family,
    floor: usize,
) -> Result<Vec<BinFit>> {
    if residuals.is_empty() {
        return Err(Error::InsufficientData("fit_bins: no residuals".into()));
    }
    if !(fit_bin_m > 0.0) {
        return Err(Error::domain("fit_bins: bin width must be > 0"));
    }
    let max_d = residuals.iter().map(|r| r.distance_m).fold(0.0, f64::max);
    let n_bins = (max_d / fit_bin_m).ceil().max(1.0) as usize;
    let mut by_bin: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for r in residuals {
        let idx = ((r.distance_m / fit_bin_m).floor() as usize).min(n_bins - 1);
        by_bin[idx].push(r.g_db);
    }
    Ok(by_bin
        .into_par_iter()
        .enumerate()
        .map(|(i, g)| {
            let n = g.len();
            let outcome = if n < floor.max(1) {
                FitOutcome::Insufficient
            } else {
                match family {
                    Family::AlphaMu => match fit_alphamu_with_floor(&g, floor) {
                        Ok(AlphaMuFitResult::Fit(f)) => FitOutcome::AlphaMu(f),
                        Ok(AlphaMuFitResult::Unfittable { tau, reason }) => {
                            FitOutcome::Unfittable { tau, reason }
                        }
                        Err(e) => FitOutcome::Unfittable { tau: None, reason: e.to_string() },
                    },
                    Family::Nakagami => {
                        let lin: Vec<f64> = g.iter().map(|l| 10f64.powf(l / 20.0)).collect();
                        match nakagami_ml_fit(&lin, 100, 1e-10) {
                            Ok(f) => FitOutcome::Nakagami(f),
                            Err(e) => FitOutcome::Unfittable { tau: None, reason: e.to_string() },
                        }
                    }
                }
            };
            BinFit {
                bin_lo_m: i as f64 * fit_bin_m,
                bin_hi_m: (i + 1) as f64 * fit_bin_m,
                n,
                family,
                outcome,
            }
        })
        .collect())
}

/// Draws exactly `n` dB samples from a successful bin fit.
pub fn regenerate<R: Rng + ?Sized>(fit: &BinFit, rng: &mut R, n: usize) -> Result<Vec<f64>> {
    match &fit.outcome {
        FitOutcome::AlphaMu(f) => f.params.sample_db(rng, n),
        FitOutcome::Nakagami(f) => f.params.sample_db(rng, n),
        FitOutcome::Insufficient | FitOutcome::Unfittable { .. } => Err(Error::InsufficientData(
            format!("regenerate: bin [{}, {}) has no fit", fit.bin_lo_m, fit.bin_hi_m),
        )),
    }
}

/// Precomputed evaluation layout shared by all repetitions.
struct EvalLayout {
    /// Field dB residuals grouped by fit bin, in canonical order.
    field_by_fit_bin: Vec<Vec<f64>>,
    /// For each fit bin, the eligible-eval-bin slot of each sample
    /// (usize::MAX = sample feeds no eligible evaluation bin).
    slot_by_fit_bin: Vec<Vec<usize>>,
    /// Field samples per eligible evaluation slot.
    field_by_slot: Vec<Vec<f64>>,
    skipped: usize,
}

fn build_eval_layout(
    residuals: &[ResidualRecord],
    bin_fits: &[BinFit],
    fit_bin_m: f64,
    eval_bin_m: f64,
) -> EvalLayout {
    use std::collections::BTreeMap;
    // canonical sample order: (eval bin, distance, g)
    let mut samples: Vec<(usize, f64, f64)> = residuals
        .iter()
        .map(|r| ((r.distance_m / eval_bin_m).floor() as usize, r.distance_m, r.g_db))
        .collect();
    samples.sort_by(|a, b| {
        (a.0, a.1, a.2).partial_cmp(&(b.0, b.1, b.2)).expect("finite residuals")
    });

    let mut eval_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &(e, _, _) in &samples {
        *eval_counts.entry(e).or_insert(0) += 1;
    }
    let eligible_eval = |e: usize| -> bool {
        if eval_counts.get(&e).copied().unwrap_or(0) < 2 {
            return false;
        }
        let fit_idx = ((e as f64 * eval_bin_m) / fit_bin_m).floor() as usize;
        bin_fits.get(fit_idx).map(BinFit::fitted).unwrap_or(false)
    };
    let slots: BTreeMap<usize, usize> = eval_counts
        .keys()
        .filter(|&&e| eligible_eval(e))
        .enumerate()
        .map(|(slot, &e)| (e, slot))
        .collect();
    let skipped = eval_counts.len() - slots.len();

    let n_fit = bin_fits.len();
    let mut field_by_fit_bin = vec![Vec::new(); n_fit];
    let mut slot_by_fit_bin = vec![Vec::new(); n_fit];
    let mut field_by_slot = vec![Vec::new(); slots.len()];
    for &(e, d, g) in &samples {
        let fit_idx = ((d / fit_bin_m).floor() as usize).min(n_fit.saturating_sub(1));
        let slot = slots.get(&e).copied().unwrap_or(usize::MAX);
        field_by_fit_bin[fit_idx].push(g);
        slot_by_fit_bin[fit_idx].push(slot);
        if slot != usize::MAX {
            field_by_slot[slot].push(g);
        }
    }
    EvalLayout { field_by_fit_bin, slot_by_fit_bin, field_by_slot, skipped }
}

/// Repeated-regeneration K-S harness: per repetition, regenerate every
/// fitted bin's samples, slice them into evaluation bins alongside the
/// field data and count the bins whose two-sample K-S passes.
///
/// Repetition `r` draws from `RngStream(master_seed, family base + r)`;
/// repetitions run in parallel, bins sequentially within a repetition, so
/// the result is schedule-invariant.
pub fn ks_pass_sequence(
    residuals: &[ResidualRecord],
    bin_fits: &[BinFit],
    reps: usize,
    eval_bin_m: f64,
    significance: f64,
    master_seed: u64,
) -> Result<PassCountSequence> {
    if residuals.is_empty() || bin_fits.is_empty() {
        return Err(Error::InsufficientData("ks_pass_sequence: empty inputs".into()));
    }
    if reps == 0 {
        return Err(Error::domain("ks_pass_sequence: reps must be >= 1"));
    }
    let family = bin_fits[0].family;
    let fit_bin_m = bin_fits[0].bin_hi_m - bin_fits[0].bin_lo_m;
    let layout = build_eval_layout(residuals, bin_fits, fit_bin_m, eval_bin_m);
    let n_slots = layout.field_by_slot.len();

    let rep_counts: Result<Vec<u32>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(master_seed, family.stream_base() + r).rng();
            let mut regen_by_slot: Vec<Vec<f64>> =
                layout.field_by_slot.iter().map(|v| Vec::with_capacity(v.len())).collect();
            for (fit_idx, fit) in bin_fits.iter().enumerate() {
                let n_bin = layout.field_by_fit_bin[fit_idx].len();
                if n_bin == 0 || !fit.fitted() {
                    continue;
                }
                let draws = regenerate(fit, &mut rng, n_bin)?;
                for (g, &slot) in draws.into_iter().zip(&layout.slot_by_fit_bin[fit_idx]) {
                    if slot != usize::MAX {
                        regen_by_slot[slot].push(g);
                    }
                }
            }
            let mut passes = 0u32;
            for slot in 0..n_slots {
                let ks = ks_two_sample(
                    &layout.field_by_slot[slot],
                    &regen_by_slot[slot],
                    significance,
                )?;
                if ks.pass {
                    passes += 1;
                }
            }
            Ok(passes)
        })
        .collect();

    Ok(PassCountSequence {
        family,
        rep_counts: rep_counts?,
        eval_bin_m,
        n_eval_bins: n_slots,
        skipped_eval_bins: layout.skipped,
    })
}

/// Table-row branch logic: A-D normality on both sequences; if both look
/// normal, F-test for equal variances; if variances agree, pooled t-test;
/// any other path takes the Wilcoxon rank-sum test.
pub fn compare_families(
    seq_alphamu: &PassCountSequence,
    seq_nakagami: &PassCountSequence,
    fit_bin_m: f64,
    significance: f64,
) -> Result<ComparisonRow> {
    if seq_alphamu.rep_counts.len() != seq_nakagami.rep_counts.len() {
        return Err(Error::domain(format!(
            "compare_families: sequence lengths differ ({} vs {})",
            seq_alphamu.rep_counts.len(),
            seq_nakagami.rep_counts.len()
        )));
    }
    let a: Vec<f64> = seq_alphamu.rep_counts.iter().map(|&c| c as f64).collect();
    let b: Vec<f64> = seq_nakagami.rep_counts.iter().map(|&c| c as f64).collect();
    let mut row = ComparisonRow {
        fit_bin_m,
        mean_pass_alphamu: seq_alphamu.mean(),
        mean_pass_nakagami: seq_nakagami.mean(),
        n_eval_bins: seq_alphamu.n_eval_bins.max(seq_nakagami.n_eval_bins),
        ad_alphamu: None,
        ad_nakagami: None,
        f_test: None,
        t_test: None,
        wilcoxon: None,
        underpowered: a.len() < 8,
        no_difference: false,
    };
    if row.underpowered {
        return Ok(row);
    }
    if a == b {
        // identical sequences: nothing to test
        row.no_difference = true;
        return Ok(row);
    }
    // zero-variance sequences break A-D; treat as non-normal
    let ad_a = anderson_darling_normal(&a, significance).ok();
    let ad_b = anderson_darling_normal(&b, significance).ok();
    row.ad_alphamu = ad_a;
    row.ad_nakagami = ad_b;
    let both_normal = matches!((ad_a, ad_b), (Some(x), Some(y)) if x.h == 0 && y.h == 0);
    if both_normal {
        match f_test_var(&a, &b, significance) {
            Ok(f) => {
                row.f_test = Some(f);
                if f.h == 0 {
                    row.t_test = Some(t_test_unpaired(&a, &b, significance)?);
                } else {
                    row.wilcoxon = Some(wilcoxon_rank_sum(&a, &b, significance)?);
                }
            }
            Err(_) => {
                row.wilcoxon = Some(wilcoxon_rank_sum(&a, &b, significance)?);
            }
        }
    } else {
        row.wilcoxon = Some(wilcoxon_rank_sum(&a, &b, significance)?);
    }
    Ok(row)
}

/// Options of a full comparison run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareOptions {
    pub fit_bin_sizes_m: Vec<f64>,
    pub reps: usize,
    pub eval_bin_m: f64,
    pub significance_bin: f64,
    pub significance_comparison: f64,
    pub master_seed: u64,
    pub sample_floor: usize,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            fit_bin_sizes_m: STANDARD_FIT_BINS_M.to_vec(),
            reps: 100,
            eval_bin_m: 1.0,
            significance_bin: 0.01,
            significance_comparison: 0.05,
            master_seed: 0,
            sample_floor: FIT_SAMPLE_FLOOR,
        }
    }
}

/// Everything a comparison run produces, for reporting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareOutput {
    pub report: ComparisonReport,
    /// Per fit-bin size: (size, alpha-mu fits, Nakagami fits).
    pub bin_fits: Vec<(f64, Vec<BinFit>, Vec<BinFit>)>,
    /// Per fit-bin size: (size, alpha-mu sequence, Nakagami sequence).
    pub sequences: Vec<(f64, PassCountSequence, PassCountSequence)>,
}

/// Full comparison across all configured fit-bin sizes.
pub fn run_comparison(residuals: &[ResidualRecord], opts: &CompareOptions) -> Result<CompareOutput> {
    if residuals.is_empty() {
        return Err(Error::InsufficientData("run_comparison: no residuals".into()));
    }
    let mut rows = Vec::new();
    let mut bin_fits = Vec::new();
    let mut sequences = Vec::new();
    for &size in &opts.fit_bin_sizes_m {
        let fits_am = fit_bins_with_floor(residuals, size, Family::AlphaMu, opts.sample_floor)?;
        let fits_nk = fit_bins_with_floor(residuals, size, Family::Nakagami, opts.sample_floor)?;
        let seq_am = ks_pass_sequence(
            residuals,
            &fits_am,
            opts.reps,
            opts.eval_bin_m,
            opts.significance_bin,
            opts.master_seed,
        )?;
        let seq_nk = ks_pass_sequence(
            residuals,
            &fits_nk,
            opts.reps,
            opts.eval_bin_m,
            opts.significance_bin,
            opts.master_seed,
        )?;
        rows.push(compare_families(&seq_am, &seq_nk, size, opts.significance_comparison)?);
        bin_fits.push((size, fits_am, fits_nk));
        sequences.push((size, seq_am, seq_nk));
    }
    let report = ComparisonReport {
        meta: ReportMeta {
            master_seed: opts.master_seed,
            reps: opts.reps,
            eval_bin_m: opts.eval_bin_m,
            significance_bin: opts.significance_bin,
            significance_comparison: opts.significance_comparison,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            notes: sequences
                .iter()
                .map(|(s, a, n)| {
                    format!(
                        "{s} m bins: {} eval bins, {} skipped (alpha-mu) / {} eval bins, {} skipped (nakagami)",
                        a.n_eval_bins, a.skipped_eval_bins, n.n_eval_bins, n.skipped_eval_bins
                    )
                })
                .collect(),
        },
        rows,
    };
    Ok(CompareOutput { report, bin_fits, sequences })
}

/// Adds uniform U(-q/2, q/2) jitter to quantized residuals (optional
/// preprocessing before one-sample GOF against continuous CDFs).
pub fn dequantize_jitter(
    residuals: &mut [ResidualRecord],
    quant_db: f64,
    stream: RngStream,
) -> Result<()> {
    if !(quant_db > 0.0) {
        return Err(Error::domain("dequantize_jitter: quant_db must be > 0"));
    }
    let mut rng = stream.rng();
    for r in residuals.iter_mut() {
        r.g_db += (rng.gen::<f64>() - 0.5) * quant_db;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::AlphaMu;

    /// Residuals drawn from a constant alpha-mu truth over [0, d_max).
    fn synth_residuals(
        truth: &AlphaMu<f64>,
        n: usize,
        d_max: f64,
        seed: u64,
    ) -> Vec<ResidualRecord> {
        let mut rng = RngStream::new(seed, 0).rng();
        let g = truth.sample_db(&mut rng, n).unwrap();
        g.into_iter()
            .enumerate()
            .map(|(i, g_db)| ResidualRecord {
                distance_m: (i as f64 + 0.5) * d_max / n as f64,
                g_db,
            })
            .collect()
    }

    #[test]
    fn fit_bins_partitioning() {
        let truth = AlphaMu::new(2.0, 1.5, 1.0).unwrap();
        let res = synth_residuals(&truth, 40_000, 400.0, 1);
        let fits = fit_bins(&res, 40.0, Family::AlphaMu).unwrap();
        assert_eq!(fits.len(), 10);
        assert_eq!(fits.iter().map(|f| f.n).sum::<usize>(), 40_000);
        for f in &fits {
            match &f.outcome {
                FitOutcome::AlphaMu(fit) => {
                    assert!((fit.params.alpha - 2.0).abs() < 0.4, "alpha {}", fit.params.alpha);
                    assert!((fit.params.mu - 1.5).abs() < 0.4, "mu {}", fit.params.mu);
                }
                other => panic!("expected fit, got {other:?}"),
            }
        }
    }

    #[test]
    fn fit_bins_insufficient_bin() {
        // leave bin [40, 80) empty
        let truth = AlphaMu::new(2.0, 1.0, 1.0).unwrap();
        let mut res = synth_residuals(&truth, 2000, 40.0, 2);
        res.extend(synth_residuals(&truth, 2000, 40.0, 3).into_iter().map(|mut r| {
            r.distance_m += 80.0;
            r
        }));
        let fits = fit_bins(&res, 40.0, Family::AlphaMu).unwrap();
        assert_eq!(fits.len(), 3);
        assert!(fits[0].fitted());
        assert!(matches!(fits[1].outcome, FitOutcome::Insufficient));
        assert!(fits[2].fitted());
    }

    #[test]
    fn fit_bins_nakagami() {
        let truth = crate::dists::Nakagami::new(1.3, 1.0).unwrap();
        let res = synth_residuals(&truth.as_alpha_mu(), 30_000, 100.0, 5);
        let fits = fit_bins(&res, 50.0, Family::Nakagami).unwrap();
        for f in fits {
            match f.outcome {
                FitOutcome::Nakagami(fit) => {
                    assert!((fit.params.m - 1.3).abs() < 0.1, "m {}", fit.params.m)
                }
                other => panic!("expected nakagami fit, got {other:?}"),
            }
        }
    }

    #[test]
    fn regenerate_count_and_determinism() {
        let truth = AlphaMu::new(2.0, 1.2, 1.0).unwrap();
        let res = synth_residuals(&truth, 2000, 40.0, 7);
        let fits = fit_bins(&res, 40.0, Family::AlphaMu).unwrap();
        let a = regenerate(&fits[0], &mut RngStream::new(9, 0).rng(), 250).unwrap();
        assert_eq!(a.len(), 250);
        let b = regenerate(&fits[0], &mut RngStream::new(9, 0).rng(), 250).unwrap();
        assert_eq!(a, b);

        let empty = BinFit {
            bin_lo_m: 0.0,
            bin_hi_m: 40.0,
            n: 0,
            family: Family::AlphaMu,
            outcome: FitOutcome::Insufficient,
        };
        assert!(regenerate(&empty, &mut RngStream::new(9, 1).rng(), 10).is_err());
    }

    #[test]
    fn pass_sequence_identity_field() {
        // if the "regenerated" set equals the field set, every bin passes:
        // emulate by checking D = 0 gives pass at any significance
        let field = [1.0, 2.0, 3.0];
        let ks = ks_two_sample(&field, &field, 0.01).unwrap();
        assert!(ks.pass && ks.d_stat == 0.0);
    }

    #[test]
    fn pass_sequence_calibrated_on_truth() {
        let truth = AlphaMu::new(2.0, 1.5, 1.0).unwrap();
        let res = synth_residuals(&truth, 100_000, 100.0, 11);
        let fits = fit_bins(&res, 100.0, Family::AlphaMu).unwrap();
        let seq = ks_pass_sequence(&res, &fits, 20, 1.0, 0.01, 42).unwrap();
        assert_eq!(seq.rep_counts.len(), 20);
        assert!(seq.n_eval_bins >= 99, "{} eval bins", seq.n_eval_bins);
        let frac = seq.mean() / seq.n_eval_bins as f64;
        assert!(frac >= 0.9, "mean pass fraction {frac}");
        for &c in &seq.rep_counts {
            assert!(c as usize <= seq.n_eval_bins);
        }
    }

    #[test]
    fn pass_sequence_favors_true_family() {
        // strongly non-Nakagami truth: alpha-mu fits beat Nakagami fits
        let truth = AlphaMu::new(3.2, 1.1, 1.0).unwrap();
        let res = synth_residuals(&truth, 150_000, 50.0, 13);
        let fits_am = fit_bins(&res, 50.0, Family::AlphaMu).unwrap();
        let fits_nk = fit_bins(&res, 50.0, Family::Nakagami).unwrap();
        let seq_am = ks_pass_sequence(&res, &fits_am, 20, 1.0, 0.01, 42).unwrap();
        let seq_nk = ks_pass_sequence(&res, &fits_nk, 20, 1.0, 0.01, 42).unwrap();
        assert!(
            seq_am.mean() > seq_nk.mean(),
            "alpha-mu {} vs nakagami {}",
            seq_am.mean(),
            seq_nk.mean()
        );
    }

    #[test]
    fn pass_sequence_deterministic_across_threads() {
        let truth = AlphaMu::new(2.5, 1.0, 1.0).unwrap();
        let res = synth_residuals(&truth, 20_000, 40.0, 17);
        let fits = fit_bins(&res, 40.0, Family::AlphaMu).unwrap();
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool8 = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let a = pool1.install(|| ks_pass_sequence(&res, &fits, 10, 1.0, 0.01, 5)).unwrap();
        let b = pool8.install(|| ks_pass_sequence(&res, &fits, 10, 1.0, 0.01, 5)).unwrap();
        assert_eq!(a.rep_counts, b.rep_counts);
    }

    #[test]
    fn sparse_eval_bins_are_skipped() {
        let truth = AlphaMu::new(2.0, 1.0, 1.0).unwrap();
        let mut res = synth_residuals(&truth, 5000, 20.0, 19);
        // a lone point far out: its 1-m bin has < 2 samples
        res.push(ResidualRecord { distance_m: 35.5, g_db: 0.0 });
        let fits = fit_bins(&res, 40.0, Family::AlphaMu).unwrap();
        let seq = ks_pass_sequence(&res, &fits, 5, 1.0, 0.01, 3).unwrap();
        assert!(seq.skipped_eval_bins >= 1);
        assert_eq!(seq.n_eval_bins, 20);
    }

    #[test]
    fn compare_row_branches() {
        use rand_distr::{Distribution, Normal};
        let mk_seq = |vals: Vec<u32>| PassCountSequence {
            family: Family::AlphaMu,
            rep_counts: vals,
            eval_bin_m: 1.0,
            n_eval_bins: 400,
            skipped_eval_bins: 0,
        };
        // constructed normal sequences with equal variance, distinct means
        let dist_a = Normal::<f64>::new(300.0, 5.0).unwrap();
        let dist_b = Normal::<f64>::new(250.0, 5.0).unwrap();
        let mut rng = RngStream::new(2, 0).rng();
        let a = mk_seq((0..100).map(|_| dist_a.sample(&mut rng).round().max(0.0) as u32).collect());
        let b = mk_seq((0..100).map(|_| dist_b.sample(&mut rng).round().max(0.0) as u32).collect());
        let row = compare_families(&a, &b, 5.0, 0.05).unwrap();
        assert_eq!(row.ad_alphamu.unwrap().h, 0);
        assert_eq!(row.ad_nakagami.unwrap().h, 0);
        assert_eq!(row.f_test.unwrap().h, 0);
        let t = row.t_test.expect("t branch");
        assert_eq!(t.h, 1);
        assert!(row.wilcoxon.is_none());

        // grossly non-normal second sequence forces the Wilcoxon branch
        let mut vals = vec![10u32; 95];
        vals.extend([390, 391, 392, 393, 394]);
        let c = mk_seq(vals);
        let row = compare_families(&a, &c, 10.0, 0.05).unwrap();
        assert_eq!(row.ad_nakagami.unwrap().h, 1);
        assert!(row.t_test.is_none());
        assert!(row.wilcoxon.is_some());

        // identical constant sequences: degenerate, no test performed
        let d = mk_seq(vec![100; 100]);
        let row = compare_families(&d, &d.clone(), 20.0, 0.05).unwrap();
        assert!(row.no_difference);
        assert!(row.t_test.is_none() && row.wilcoxon.is_none());

        // single-rep sequences are underpowered
        let row = compare_families(&mk_seq(vec![5]), &mk_seq(vec![7]), 40.0, 0.05).unwrap();
        assert!(row.underpowered);

        // length mismatch is an error
        assert!(compare_families(&mk_seq(vec![1, 2]), &mk_seq(vec![1]), 5.0, 0.05).is_err());
    }

    #[test]
    fn branch_exclusivity_across_random_rows() {
        let mut rng = RngStream::new(31, 0).rng();
        for _ in 0..50 {
            let a = PassCountSequence {
                family: Family::AlphaMu,
                rep_counts: (0..50).map(|_| rng.gen_range(0..400)).collect(),
                eval_bin_m: 1.0,
                n_eval_bins: 400,
                skipped_eval_bins: 0,
            };
            let b = PassCountSequence {
                family: Family::Nakagami,
                rep_counts: (0..50).map(|_| rng.gen_range(0..400)).collect(),
                ..a.clone()
            };
            let row = compare_families(&a, &b, 5.0, 0.05).unwrap();
            let populated = row.t_test.is_some() as u8 + row.wilcoxon.is_some() as u8;
            assert_eq!(populated, 1, "exactly one final test per row");
        }
    }

    #[test]
    fn run_comparison_end_to_end_small() {
        let truth = AlphaMu::new(3.2, 1.1, 1.0).unwrap();
        let res = synth_residuals(&truth, 60_000, 40.0, 23);
        let opts = CompareOptions {
            fit_bin_sizes_m: vec![20.0, 40.0],
            reps: 10,
            master_seed: 9,
            ..CompareOptions::default()
        };
        let out = run_comparison(&res, &opts).unwrap();
        assert_eq!(out.report.rows.len(), 2);
        assert_eq!(out.bin_fits.len(), 2);
        assert_eq!(out.sequences.len(), 2);
        for row in &out.report.rows {
            assert!(row.mean_pass_alphamu >= row.mean_pass_nakagami);
        }
    }

    #[test]
    fn jitter_dequantize() {
        let mut res: Vec<ResidualRecord> =
            (0..1000).map(|i| ResidualRecord { distance_m: 1.0, g_db: (i % 7) as f64 }).collect();
        let orig: Vec<f64> = res.iter().map(|r| r.g_db).collect();
        dequantize_jitter(&mut res, 1.0, RngStream::new(1, 0)).unwrap();
        for (r, o) in res.iter().zip(&orig) {
            assert!((r.g_db - o).abs() <= 0.5);
        }
        assert!(res.iter().zip(&orig).any(|(r, o)| r.g_db != *o));
        assert!(dequantize_jitter(&mut res, 0.0, RngStream::new(1, 0)).is_err());
    }
}
