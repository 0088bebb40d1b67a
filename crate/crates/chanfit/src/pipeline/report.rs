//! Report emission: structured JSON, the human-readable comparison table
//! and plot-data CSVs (parameter curves, pass-count sequences, mean bars,
//! per-bin box/GOF summaries).

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::hyptest::{ks_one_sample, TestResult};
use crate::pipeline::records::ResidualRecord;
use crate::pipeline::{BinFit, CompareOutput, ComparisonReport, FitOutcome};

/// Formats a value with 4 significant digits.
pub fn sig4(x: f64) -> String {
    if x == 0.0 {
        return "0.000".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-3..6).contains(&mag) {
        return format!("{x:.3e}");
    }
    let decimals = (3 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Formats a p-value in scientific notation (4 significant digits).
pub fn sci_p(p: f64) -> String {
    format!("{p:.3e}")
}

fn cell(t: &Option<TestResult>) -> String {
    match t {
        Some(t) => format!("{}/{}", t.h, sci_p(t.p_value)),
        None => "-".into(),
    }
}

/// Renders the comparison table as fixed-width text. Cells of branches not
/// taken are blank ("-").
pub fn render_table(report: &ComparisonReport) -> String {
    let mut out = String::new();
    out.push_str("STATISTICAL COMPARISON OF K-S PASS-COUNT SEQUENCES\n");
    out.push_str(&format!(
        "reps = {}, eval bin = {} m, bin significance = {}, comparison significance = {}\n\n",
        report.meta.reps,
        report.meta.eval_bin_m,
        report.meta.significance_bin,
        report.meta.significance_comparison
    ));
    out.push_str(&format!(
        "{:>8} | {:>14} | {:>14} | {:>14} | {:>14} | {:>14} | {:>10} | {:>10}\n",
        "bin (m)", "A-D alpha-mu", "A-D nakagami", "F-test", "t-test", "Wilcoxon", "mean a-mu", "mean nak"
    ));
    out.push_str(&"-".repeat(120));
    out.push('\n');
    for row in &report.rows {
        let note = if row.underpowered {
            " (underpowered)"
        } else if row.no_difference {
            " (no difference)"
        } else {
            ""
        };
        out.push_str(&format!(
            "{:>8} | {:>14} | {:>14} | {:>14} | {:>14} | {:>14} | {:>10} | {:>10}{}\n",
            sig4(row.fit_bin_m),
            cell(&row.ad_alphamu),
            cell(&row.ad_nakagami),
            cell(&row.f_test),
            cell(&row.t_test),
            cell(&row.wilcoxon),
            sig4(row.mean_pass_alphamu),
            sig4(row.mean_pass_nakagami),
            note,
        ));
    }
    out
}

/// Type-7 (linear interpolation) quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Box summary with 1.5 IQR whiskers clipped to the data (the usual
/// "~99.3% coverage on normal data" rule).
#[derive(Clone, Copy, Debug)]
pub struct BoxSummary {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
}

pub fn box_summary(values: &[f64]) -> Result<BoxSummary> {
    if values.is_empty() {
        return Err(Error::InsufficientData("box_summary: no values".into()));
    }
    let mut xs = values.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q1 = quantile(&xs, 0.25);
    let median = quantile(&xs, 0.5);
    let q3 = quantile(&xs, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let whisker_lo = xs.iter().cloned().find(|&x| x >= lo_fence).unwrap_or(xs[0]);
    let whisker_hi = xs.iter().cloned().rev().find(|&x| x <= hi_fence).unwrap_or(xs[xs.len() - 1]);
    Ok(BoxSummary { q1, median, q3, whisker_lo, whisker_hi })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::Io(format!("create {}: {e}", path.display())))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::Io(format!("write {}: {e}", path.display())))
}

fn param_rows(fits: &[BinFit]) -> String {
    let mut s = String::new();
    for f in fits {
        let center = 0.5 * (f.bin_lo_m + f.bin_hi_m);
        match &f.outcome {
            FitOutcome::AlphaMu(fit) => s.push_str(&format!(
                "{},{},{},{},{},fit,{},{}\n",
                center, f.n, fit.params.alpha, fit.params.mu, fit.params.omega,
                fit.diagnostics.tau, fit.diagnostics.mu_clamped,
            )),
            FitOutcome::Nakagami(fit) => s.push_str(&format!(
                "{},{},{},{},,fit,,{}\n",
                center, f.n, fit.params.m, fit.params.omega_pow, fit.low_shape,
            )),
            FitOutcome::Insufficient => {
                s.push_str(&format!("{},{},,,,insufficient,,\n", center, f.n))
            }
            FitOutcome::Unfittable { tau, .. } => s.push_str(&format!(
                "{},{},,,,unfittable,{},\n",
                center,
                f.n,
                tau.map(|t| t.to_string()).unwrap_or_default(),
            )),
        }
    }
    s
}

/// One-sample K-S GOF p-value of the bin's field residuals against the
/// fitted dB CDF; empty when the bin has no fit.
fn gof_p(fit: &BinFit, g_db: &[f64], significance: f64) -> Option<f64> {
    if g_db.is_empty() {
        return None;
    }
    let ks = match &fit.outcome {
        FitOutcome::AlphaMu(f) => {
            let p = f.params;
            ks_one_sample(g_db, move |l| p.cdf_db(l).unwrap_or(f64::NAN).clamp(0.0, 1.0), significance)
        }
        FitOutcome::Nakagami(f) => {
            let p = f.params;
            ks_one_sample(g_db, move |l| p.cdf_db(l).unwrap_or(f64::NAN).clamp(0.0, 1.0), significance)
        }
        _ => return None,
    };
    ks.ok().map(|k| k.p_value)
}

/// Writes all report artifacts into `out_dir`: `report.json`, `table1.txt`
/// and `plots/*.csv`. Returns the created paths. Deterministic for a given
/// `CompareOutput` (no timestamps).
pub fn emit_report(
    out: &CompareOutput,
    residuals: &[ResidualRecord],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let plots = out_dir.join("plots");
    std::fs::create_dir_all(&plots)
        .map_err(|e| Error::Io(format!("create {}: {e}", plots.display())))?;
    let mut written = Vec::new();

    let json_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&out.report)
        .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
    write_file(&json_path, &json)?;
    written.push(json_path);

    let table_path = out_dir.join("table1.txt");
    write_file(&table_path, &render_table(&out.report))?;
    written.push(table_path);

    // parameter curves per fit-bin size and family
    for (size, fits_am, fits_nk) in &out.bin_fits {
        let p = plots.join(format!("params_alphamu_{size}m.csv"));
        write_file(
            &p,
            &format!(
                "bin_center_m,n,alpha,mu,omega,status,tau,flag\n{}",
                param_rows(fits_am)
            ),
        )?;
        written.push(p);
        let p = plots.join(format!("params_nakagami_{size}m.csv"));
        write_file(
            &p,
            &format!("bin_center_m,n,m,omega_pow,unused,status,tau,low_shape\n{}", param_rows(fits_nk)),
        )?;
        written.push(p);
    }

    // pass-count sequences
    for (size, seq_am, seq_nk) in &out.sequences {
        let p = plots.join(format!("pass_counts_{size}m.csv"));
        let mut body = String::from("rep,alphamu_pass,nakagami_pass\n");
        for (i, (a, n)) in seq_am.rep_counts.iter().zip(&seq_nk.rep_counts).enumerate() {
            body.push_str(&format!("{i},{a},{n}\n"));
        }
        write_file(&p, &body)?;
        written.push(p);
    }

    // mean bars
    let p = plots.join("mean_pass.csv");
    let mut body = String::from("fit_bin_m,alphamu_mean,nakagami_mean,n_eval_bins\n");
    for (size, a, n) in &out.sequences {
        body.push_str(&format!("{size},{},{},{}\n", a.mean(), n.mean(), a.n_eval_bins.max(n.n_eval_bins)));
    }
    write_file(&p, &body)?;
    written.push(p);

    // per-bin residual box summaries + GOF columns
    let sig = out.report.meta.significance_bin;
    for (size, fits_am, fits_nk) in &out.bin_fits {
        let p = plots.join(format!("box_gof_{size}m.csv"));
        let mut body =
            String::from("bin_lo_m,bin_hi_m,n,q1,median,q3,whisker_lo,whisker_hi,ks_p_alphamu,ks_p_nakagami\n");
        for (i, fit) in fits_am.iter().enumerate() {
            let g: Vec<f64> = residuals
                .iter()
                .filter(|r| r.distance_m >= fit.bin_lo_m && r.distance_m < fit.bin_hi_m)
                .map(|r| r.g_db)
                .collect();
            if g.is_empty() {
                continue;
            }
            let b = box_summary(&g)?;
            let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            body.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                fit.bin_lo_m,
                fit.bin_hi_m,
                g.len(),
                b.q1,
                b.median,
                b.q3,
                b.whisker_lo,
                b.whisker_hi,
                fmt_opt(gof_p(fit, &g, sig)),
                fmt_opt(fits_nk.get(i).and_then(|f| gof_p(f, &g, sig))),
            ));
        }
        write_file(&p, &body)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::AlphaMu;
    use crate::mathkit::RngStream;
    use crate::pipeline::{run_comparison, CompareOptions, ComparisonReport, ReportMeta};

    #[test]
    fn sig4_formatting() {
        assert_eq!(sig4(2.0), "2.000");
        assert_eq!(sig4(123.456), "123.5");
        assert_eq!(sig4(0.012345), "0.01235");
        assert_eq!(sig4(0.0), "0.000");
        assert!(sig4(1.3496e-140).contains('e'));
        assert_eq!(sci_p(1.3496e-140), "1.350e-140");
    }

    #[test]
    fn quantiles_and_whiskers() {
        let b = box_summary(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(b.median, 3.0);
        assert_eq!(b.q1, 2.0);
        assert_eq!(b.q3, 4.0);
        assert_eq!(b.whisker_lo, 1.0);
        assert_eq!(b.whisker_hi, 5.0);
        assert!(box_summary(&[]).is_err());
    }

    #[test]
    fn whisker_rule_coverage_on_normal() {
        use rand_distr::{Distribution, Normal};
        // whiskers at 1.5 IQR cover ~99.3% of normal draws
        let dist = Normal::new(0.0, 1.0).unwrap();
        let mut rng = RngStream::new(77, 0).rng();
        let xs: Vec<f64> = (0..100_000).map(|_| dist.sample(&mut rng)).collect();
        let b = box_summary(&xs).unwrap();
        let inside = xs.iter().filter(|&&x| x >= b.whisker_lo && x <= b.whisker_hi).count();
        let cover = inside as f64 / xs.len() as f64;
        assert!((0.98..=1.0).contains(&cover), "coverage {cover}");
    }

    #[test]
    fn empty_report_renders_metadata_only() {
        let report = ComparisonReport {
            meta: ReportMeta {
                master_seed: 1,
                reps: 0,
                eval_bin_m: 1.0,
                significance_bin: 0.01,
                significance_comparison: 0.05,
                rng_algorithm: "x".into(),
                tool_version: "0".into(),
                notes: vec![],
            },
            rows: vec![],
        };
        let table = render_table(&report);
        assert!(table.contains("reps = 0"));
        let json = serde_json::to_string(&report).unwrap();
        let back: ComparisonReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.rows.len(), 0);
    }

    #[test]
    fn full_emit_round_trip() {
        let truth = AlphaMu::new(2.5, 1.2, 1.0).unwrap();
        let mut rng = RngStream::new(41, 0).rng();
        let g = truth.sample_db(&mut rng, 30_000).unwrap();
        let residuals: Vec<ResidualRecord> = g
            .into_iter()
            .enumerate()
            .map(|(i, g_db)| ResidualRecord {
                distance_m: (i as f64 + 0.5) * 40.0 / 30_000.0,
                g_db,
            })
            .collect();
        let opts = CompareOptions {
            fit_bin_sizes_m: vec![40.0],
            reps: 8,
            master_seed: 3,
            ..CompareOptions::default()
        };
        let out = run_comparison(&residuals, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&out, &residuals, dir.path()).unwrap();
        assert!(files.iter().all(|f| f.exists()));
        // report.json re-parses
        let body = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        let back: ComparisonReport = serde_json::from_str(&body).unwrap();
        assert_eq!(back.rows.len(), 1);
        // table mentions the bin size
        let table = std::fs::read_to_string(dir.path().join("table1.txt")).unwrap();
        assert!(table.contains("40.00"));
        // plot CSVs have headers and data
        let params = std::fs::read_to_string(dir.path().join("plots/params_alphamu_40m.csv")).unwrap();
        assert!(params.starts_with("bin_center_m,"));
        assert!(params.lines().count() >= 2);
        let pass = std::fs::read_to_string(dir.path().join("plots/pass_counts_40m.csv")).unwrap();
        assert_eq!(pass.lines().count(), 9);
        // emission is deterministic
        let dir2 = tempfile::tempdir().unwrap();
        emit_report(&out, &residuals, dir2.path()).unwrap();
        let a = std::fs::read(dir.path().join("report.json")).unwrap();
        let b = std::fs::read(dir2.path().join("report.json")).unwrap();
        assert_eq!(a, b);
    }
}
