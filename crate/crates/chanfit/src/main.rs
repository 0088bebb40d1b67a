//! Command-line frontend: synth -> fit-pathloss -> fit-fading -> compare ->
//! report, each emitting a reproducibility manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use chanfit::config::RunConfig;
use chanfit::error::{Error, Result};
use chanfit::mathkit::{RngStream, RNG_ALGORITHM};
use chanfit::pathloss::{
    bin_average_rssi, histogram_mode, pairwise_eps_r, pairwise_gamma, regression_fit,
    ModeEstimate, RegressionFit,
};
use chanfit::pipeline::records::{extract_residuals, load_rssi_csv, write_rssi_csv};
use chanfit::pipeline::report::emit_report;
use chanfit::pipeline::{dequantize_jitter, fit_bins_with_floor, run_comparison, ComparisonReport, Family};
use chanfit::synth::generate;

/// Stream index reserved for the optional dequantization jitter.
const JITTER_STREAM: u64 = 900_000;

#[derive(Parser)]
#[command(name = "chanfit", version, about = "Two-ray path-loss and fading-model fitting toolkit")]
struct Cli {
    /// Worker thread cap (does not affect results).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scenario CSV.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate (eps_r, gamma) by the pairwise mode method plus regression.
    FitPathloss {
        csv: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit alpha-mu and Nakagami parameters per distance bin.
    FitFading {
        csv: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Fit-bin size in metres (default: all configured sizes).
        #[arg(long)]
        bin_size: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Undo 1 dB quantization with uniform jitter before fitting.
        #[arg(long)]
        jitter_dequantize: bool,
    },
    /// Full family comparison: fits, 100-repetition K-S harness, report.
    Compare {
        csv: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
        /// Comparison-level significance override.
        #[arg(long)]
        significance: Option<f64>,
        #[arg(long)]
        jitter_dequantize: bool,
    },
    /// Re-render the human-readable table from an existing report.json.
    Report {
        json: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config_digest: Option<String>,
    input_digests: BTreeMap<String, String>,
    master_seed: Option<u64>,
    tool_version: String,
    rng_algorithm: String,
    timestamp_utc: String,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::Io(format!("read {}: {e}", path.display())))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    config: Option<&Path>,
    inputs: &[&Path],
    master_seed: Option<u64>,
) -> Result<()> {
    let mut input_digests = BTreeMap::new();
    for p in inputs {
        input_digests.insert(p.display().to_string(), sha256_file(p)?);
    }
    let manifest = RunManifest {
        command: command.to_string(),
        config_digest: config.map(sha256_file).transpose()?,
        input_digests,
        master_seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        rng_algorithm: RNG_ALGORITHM.to_string(),
        timestamp_utc: chrono::Utc::now().to_rfc3339(),
    };
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
    std::fs::write(out_dir.join("manifest.json"), body)
        .map_err(|e| Error::Io(format!("write manifest: {e}")))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io(format!("create {}: {e}", path.display())))
}

#[derive(Serialize)]
struct PathlossOutput {
    eps_r_mode: ModeEstimate,
    gamma_mode: ModeEstimate,
    regression: RegressionFit,
    gamma_pairs_skipped: usize,
    eps_root_count: usize,
    gamma_value_count: usize,
}

fn hist_csv(mode: &ModeEstimate) -> String {
    let mut s = String::from("bin_center,frequency\n");
    for (c, f) in &mode.histogram {
        s.push_str(&format!("{c},{f}\n"));
    }
    s
}

fn cmd_synth(cfg: &RunConfig, seed: Option<u64>, out: &Path, config_path: Option<&Path>) -> Result<()> {
    ensure_dir(out)?;
    let scenario = cfg.scenario(seed)?;
    let records = generate(&scenario)?;
    let csv = out.join("data.csv");
    write_rssi_csv(&csv, &records)?;
    write_manifest(out, "synth", config_path, &[&csv], Some(scenario.master_seed))?;
    println!("wrote {} records to {}", records.len(), csv.display());
    Ok(())
}

fn cmd_fit_pathloss(cfg: &RunConfig, csv: &Path, out: &Path, config_path: Option<&Path>) -> Result<()> {
    ensure_dir(out)?;
    let load = load_rssi_csv(csv)?;
    if !load.malformed.is_empty() {
        eprintln!("warning: {} malformed rows skipped", load.malformed.len());
    }
    let d_max = cfg.fit_range_max_m()?;
    let records: Vec<_> =
        load.records.into_iter().filter(|r| r.distance_m <= d_max).collect();
    let series = bin_average_rssi(&records, cfg.pathloss.avg_bin_width_m)?;
    let tworay = cfg.tworay()?;
    let pl = &cfg.pathloss;

    // stage 1: gamma fixed, eps_r from the pairwise root histogram mode
    let roots = pairwise_eps_r(&series, pl.gamma_init, &tworay, pl.pair_max_sep_m, pl.eps_search)?;
    if roots.is_empty() {
        return Err(Error::Numerical("no eps_r roots found in the search range".into()));
    }
    let eps_r_mode = histogram_mode(&roots, pl.mode_bin_width)?;

    // stage 2: eps_r fixed at the mode, gamma closed-form per pair
    let gamma_cap = pl.gamma_pair_max_sep_m.unwrap_or(f64::INFINITY);
    let gammas = pairwise_gamma(&series, eps_r_mode.value, &tworay, gamma_cap)?;
    let gamma_mode = histogram_mode(&gammas.values, pl.mode_bin_width)?;

    // regression baseline
    let ptx = cfg.resolved_ptx_dbm()?;
    let regression = regression_fit(&series, &tworay, ptx, pl.regression_gamma, pl.regression_eps)?;

    let result = PathlossOutput {
        eps_root_count: roots.len(),
        gamma_value_count: gammas.values.len(),
        gamma_pairs_skipped: gammas.skipped,
        eps_r_mode,
        gamma_mode,
        regression,
    };
    let body = serde_json::to_string_pretty(&result)
        .map_err(|e| Error::Format(format!("pathloss serialization: {e}")))?;
    std::fs::write(out.join("pathloss.json"), body)
        .map_err(|e| Error::Io(format!("write pathloss.json: {e}")))?;
    let plots = out.join("plots");
    ensure_dir(&plots)?;
    std::fs::write(plots.join("eps_r_hist.csv"), hist_csv(&result.eps_r_mode))
        .map_err(|e| Error::Io(format!("write eps_r_hist.csv: {e}")))?;
    std::fs::write(plots.join("gamma_hist.csv"), hist_csv(&result.gamma_mode))
        .map_err(|e| Error::Io(format!("write gamma_hist.csv: {e}")))?;
    write_manifest(out, "fit-pathloss", config_path, &[csv], None)?;
    println!(
        "eps_r mode {:.4}, gamma mode {:.4}, regression ({:.4}, {:.4}) mse {:.3e}",
        result.eps_r_mode.value,
        result.gamma_mode.value,
        result.regression.gamma,
        result.regression.eps_r,
        result.regression.mse
    );
    Ok(())
}

fn residuals_from_csv(
    cfg: &RunConfig,
    csv: &Path,
    jitter: bool,
    seed: Option<u64>,
) -> Result<Vec<chanfit::ResidualRecord>> {
    let load = load_rssi_csv(csv)?;
    if !load.malformed.is_empty() {
        eprintln!("warning: {} malformed rows skipped", load.malformed.len());
    }
    let tworay = cfg.tworay()?;
    let extract = extract_residuals(
        &load.records,
        &tworay,
        cfg.resolved_ptx_dbm()?,
        cfg.resolved_d_max_m()?,
    )?;
    if extract.dropped_deep_null + extract.dropped_out_of_range > 0 {
        eprintln!(
            "dropped {} out-of-range and {} deep-null records",
            extract.dropped_out_of_range, extract.dropped_deep_null
        );
    }
    let mut residuals = extract.residuals;
    if jitter {
        let q = cfg.quant_db.unwrap_or(1.0);
        let master = seed.unwrap_or(cfg.master_seed);
        dequantize_jitter(&mut residuals, q, RngStream::new(master, JITTER_STREAM))?;
    }
    Ok(residuals)
}

fn cmd_fit_fading(
    cfg: &RunConfig,
    csv: &Path,
    out: &Path,
    bin_size: Option<f64>,
    seed: Option<u64>,
    jitter: bool,
    config_path: Option<&Path>,
) -> Result<()> {
    ensure_dir(out)?;
    let residuals = residuals_from_csv(cfg, csv, jitter, seed)?;
    let sizes = match bin_size {
        Some(s) => vec![s],
        None => cfg.compare.fit_bin_sizes_m.clone(),
    };
    for size in sizes {
        let am = fit_bins_with_floor(&residuals, size, Family::AlphaMu, cfg.compare.sample_floor)?;
        let nk = fit_bins_with_floor(&residuals, size, Family::Nakagami, cfg.compare.sample_floor)?;
        let body = serde_json::to_string_pretty(&(am, nk))
            .map_err(|e| Error::Format(format!("fit serialization: {e}")))?;
        std::fs::write(out.join(format!("fading_fits_{size}m.json")), body)
            .map_err(|e| Error::Io(format!("write fits: {e}")))?;
    }
    write_manifest(out, "fit-fading", config_path, &[csv], seed.or(Some(cfg.master_seed)))?;
    Ok(())
}

fn cmd_compare(
    cfg: &RunConfig,
    csv: &Path,
    out: &Path,
    seed: Option<u64>,
    reps: Option<usize>,
    significance: Option<f64>,
    jitter: bool,
    config_path: Option<&Path>,
) -> Result<()> {
    ensure_dir(out)?;
    let residuals = residuals_from_csv(cfg, csv, jitter, seed)?;
    let mut opts = cfg.compare_options(seed, reps);
    if let Some(s) = significance {
        opts.significance_comparison = s;
    }
    let result = run_comparison(&residuals, &opts)?;
    emit_report(&result, &residuals, out)?;
    write_manifest(out, "compare", config_path, &[csv], Some(opts.master_seed))?;
    println!("{}", chanfit::pipeline::report::render_table(&result.report));
    Ok(())
}

fn cmd_report(json: &Path, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let body = std::fs::read_to_string(json)
        .map_err(|e| Error::Io(format!("read {}: {e}", json.display())))?;
    let report: ComparisonReport =
        serde_json::from_str(&body).map_err(|e| Error::Format(format!("parse {}: {e}", json.display())))?;
    let table = chanfit::pipeline::report::render_table(&report);
    std::fs::write(out.join("table1.txt"), &table)
        .map_err(|e| Error::Io(format!("write table1.txt: {e}")))?;
    write_manifest(out, "report", None, &[json], None)?;
    print!("{table}");
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // ignore the error if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.cmd {
        Cmd::Synth { config, seed, out } => {
            let cfg = load_config(config.as_deref())?;
            cmd_synth(&cfg, *seed, out, config.as_deref())
        }
        Cmd::FitPathloss { csv, config, out } => {
            let cfg = load_config(config.as_deref())?;
            cmd_fit_pathloss(&cfg, csv, out, config.as_deref())
        }
        Cmd::FitFading { csv, config, out, bin_size, seed, jitter_dequantize } => {
            let cfg = load_config(config.as_deref())?;
            cmd_fit_fading(&cfg, csv, out, *bin_size, *seed, *jitter_dequantize, config.as_deref())
        }
        Cmd::Compare { csv, config, out, seed, reps, significance, jitter_dequantize } => {
            let cfg = load_config(config.as_deref())?;
            cmd_compare(&cfg, csv, out, *seed, *reps, *significance, *jitter_dequantize, config.as_deref())
        }
        Cmd::Report { json, out } => cmd_report(json, out),
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical(_) => 3,
        _ => 2,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            // ensure `--help` output mentions the binary even on odd kinds
            if code != 0 {
                let _ = Cli::command();
            }
            std::process::exit(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}
