//! RSSI / residual record types and CSV ingestion.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tworay::{path_loss_db, TwoRayParams};

/// One received packet: ground distance and reported power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RssiRecord {
    pub distance_m: f64,
    pub rssi_dbm: f64,
    pub source_tag: Option<String>,
}

/// One fading residual: `g = rssi - (ptx - L(d))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub distance_m: f64,
    pub g_db: f64,
}

/// CSV parse outcome; `malformed` lists rejected rows as (line number,
/// reason). Loading fails outright when more than 1% of data rows are bad.
#[derive(Clone, Debug)]
pub struct CsvLoad {
    pub records: Vec<RssiRecord>,
    pub malformed: Vec<(usize, String)>,
}

/// Reads the documented CSV format: header `distance_m,rssi_dbm[,source_tag]`,
/// UTF-8, one record per line.
pub fn load_rssi_csv(path: &Path) -> Result<CsvLoad> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("open {}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(h))) => h,
        Some((_, Err(e))) => return Err(Error::Io(format!("read {}: {e}", path.display()))),
        None => return Err(Error::Format("empty file: missing header".into())),
    };
    let cols: Vec<&str> = header.trim().split(',').collect();
    let has_tag = match cols.as_slice() {
        ["distance_m", "rssi_dbm"] => false,
        ["distance_m", "rssi_dbm", "source_tag"] => true,
        _ => return Err(Error::Format(format!("unexpected header: {header:?}"))),
    };

    let mut records = Vec::new();
    let mut malformed = Vec::new();
    let mut data_rows = 0usize;
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::Io(format!("read {}: {e}", path.display())))?;
        let lineno = idx + 1; // 1-based, header is line 1
        if line.trim().is_empty() {
            continue;
        }
        data_rows += 1;
        let parts: Vec<&str> = line.split(',').collect();
        let expected = if has_tag { 3 } else { 2 };
        if parts.len() != expected {
            malformed.push((lineno, format!("expected {expected} fields, got {}", parts.len())));
            continue;
        }
        let d: f64 = match parts[0].trim().parse() {
            Ok(v) => v,
            Err(_) => {
                malformed.push((lineno, format!("bad distance {:?}", parts[0])));
                continue;
            }
        };
        let r: f64 = match parts[1].trim().parse() {
            Ok(v) => v,
            Err(_) => {
                malformed.push((lineno, format!("bad rssi {:?}", parts[1])));
                continue;
            }
        };
        if !(d.is_finite() && d > 0.0) {
            malformed.push((lineno, format!("distance must be finite and > 0, got {d}")));
            continue;
        }
        if !r.is_finite() {
            malformed.push((lineno, format!("rssi must be finite, got {r}")));
            continue;
        }
        let tag = if has_tag {
            let t = parts[2].trim();
            (!t.is_empty()).then(|| t.to_string())
        } else {
            None
        };
        records.push(RssiRecord { distance_m: d, rssi_dbm: r, source_tag: tag });
    }
    if data_rows > 0 && malformed.len() * 100 > data_rows {
        let preview: Vec<String> =
            malformed.iter().take(5).map(|(l, m)| format!("line {l}: {m}")).collect();
        return Err(Error::Format(format!(
            "{} of {} rows malformed (> 1%): {}",
            malformed.len(),
            data_rows,
            preview.join("; ")
        )));
    }
    Ok(CsvLoad { records, malformed })
}

/// Writes records in the same format `load_rssi_csv` reads. f64 values use
/// the shortest round-trip decimal form, so a write-read cycle is bit-exact.
pub fn write_rssi_csv(path: &Path, records: &[RssiRecord]) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::Io(format!("create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    let has_tag = records.iter().any(|r| r.source_tag.is_some());
    let io = |e: std::io::Error| Error::Io(format!("write {}: {e}", path.display()));
    if has_tag {
        writeln!(w, "distance_m,rssi_dbm,source_tag").map_err(io)?;
        for r in records {
            writeln!(w, "{},{},{}", r.distance_m, r.rssi_dbm, r.source_tag.as_deref().unwrap_or(""))
                .map_err(io)?;
        }
    } else {
        writeln!(w, "distance_m,rssi_dbm").map_err(io)?;
        for r in records {
            writeln!(w, "{},{}", r.distance_m, r.rssi_dbm).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Residual extraction outcome with drop accounting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualExtract {
    pub residuals: Vec<ResidualRecord>,
    pub dropped_out_of_range: usize,
    pub dropped_deep_null: usize,
}

/// Subtracts the deterministic prediction: `g = rssi - (ptx - L(d))`.
/// Records beyond `d_max_m` are dropped; deep-null distances are excluded
/// and counted.
pub fn extract_residuals(
    records: &[RssiRecord],
    p: &TwoRayParams<f64>,
    ptx_dbm: f64,
    d_max_m: f64,
) -> Result<ResidualExtract> {
    let mut residuals = Vec::with_capacity(records.len());
    let mut dropped_out_of_range = 0;
    let mut dropped_deep_null = 0;
    for r in records {
        if r.distance_m > d_max_m {
            dropped_out_of_range += 1;
            continue;
        }
        match path_loss_db(r.distance_m, p) {
            Ok(loss) => residuals.push(ResidualRecord {
                distance_m: r.distance_m,
                g_db: r.rssi_dbm - (ptx_dbm - loss),
            }),
            Err(Error::Numerical(_)) => dropped_deep_null += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(ResidualExtract { residuals, dropped_out_of_range, dropped_deep_null })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathkit::RngStream;
    use rand::Rng;

    fn params() -> TwoRayParams<f64> {
        TwoRayParams::new(2.0, 1.01, 5.9e9, 1.61, 1.61).unwrap()
    }

    #[test]
    fn csv_basic_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "distance_m,rssi_dbm\n10.5,-60\n20.25,-70.5\n").unwrap();
        let load = load_rssi_csv(&path).unwrap();
        assert_eq!(load.records.len(), 2);
        assert!(load.malformed.is_empty());
        assert_eq!(load.records[0], RssiRecord { distance_m: 10.5, rssi_dbm: -60.0, source_tag: None });
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let mut body = String::from("distance_m,rssi_dbm\n");
        for i in 0..300 {
            body.push_str(&format!("{},-60\n", i + 1));
        }
        body.push_str("-5,-60\n"); // negative distance
        body.push_str("abc,-60\n"); // unparseable
        std::fs::write(&path, &body).unwrap();
        let load = load_rssi_csv(&path).unwrap();
        assert_eq!(load.records.len(), 300);
        assert_eq!(load.malformed.len(), 2);
        assert!(load.malformed[0].1.contains("finite and > 0"));

        // > 1% malformed fails hard
        std::fs::write(&path, "distance_m,rssi_dbm\n1,-60\nbad,-60\n").unwrap();
        assert!(load_rssi_csv(&path).is_err());

        std::fs::write(&path, "wrong,header\n").unwrap();
        assert!(load_rssi_csv(&path).is_err());
        assert!(load_rssi_csv(&dir.path().join("missing.csv")).is_err());
    }

    #[test]
    fn csv_write_read_bit_exact_large() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("big.csv");
        let mut rng = RngStream::new(1, 0).rng();
        let records: Vec<RssiRecord> = (0..1_000_000)
            .map(|_| RssiRecord {
                distance_m: rng.gen::<f64>() * 400.0 + 1e-3,
                rssi_dbm: -rng.gen::<f64>() * 100.0,
                source_tag: None,
            })
            .collect();
        write_rssi_csv(&path, &records).unwrap();
        let load = load_rssi_csv(&path).unwrap();
        assert_eq!(load.records.len(), records.len());
        for (a, b) in records.iter().zip(&load.records) {
            assert_eq!(a.distance_m.to_bits(), b.distance_m.to_bits());
            assert_eq!(a.rssi_dbm.to_bits(), b.rssi_dbm.to_bits());
        }
    }

    #[test]
    fn csv_tag_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tagged.csv");
        let records = vec![
            RssiRecord { distance_m: 1.0, rssi_dbm: -50.0, source_tag: Some("a-b".into()) },
            RssiRecord { distance_m: 2.0, rssi_dbm: -51.0, source_tag: None },
        ];
        write_rssi_csv(&path, &records).unwrap();
        let load = load_rssi_csv(&path).unwrap();
        assert_eq!(load.records, records);
    }

    #[test]
    fn residuals_on_curve_and_range_cut() {
        let p = params();
        let ptx = 18.0;
        let on_curve = RssiRecord {
            distance_m: 100.0,
            rssi_dbm: ptx - path_loss_db(100.0, &p).unwrap(),
            source_tag: None,
        };
        let far = RssiRecord { distance_m: 450.0, rssi_dbm: -80.0, source_tag: None };
        let out = extract_residuals(&[on_curve, far], &p, ptx, 400.0).unwrap();
        assert_eq!(out.residuals.len(), 1);
        assert!(out.residuals[0].g_db.abs() < 1e-12);
        assert_eq!(out.dropped_out_of_range, 1);
    }

    #[test]
    fn residual_means_match_generator() {
        use crate::synth::{gen_touchstone, ScenarioConfig};
        let mut cfg = ScenarioConfig::touchstone(23);
        cfg.quant_db = 0.0;
        cfg.censor_dbm = f64::NEG_INFINITY;
        cfg.d_max_m = 200.0;
        cfg.duration_s = 2000.0;
        let recs = gen_touchstone(&cfg).unwrap();
        let out = extract_residuals(&recs, &cfg.tworay, cfg.ptx_dbm, 200.0).unwrap();
        // fading is emitted de-meaned, so per 40-m bin the residual mean ~ 0
        for lo in [40.0, 80.0, 120.0] {
            let g: Vec<f64> = out
                .residuals
                .iter()
                .filter(|r| r.distance_m >= lo && r.distance_m < lo + 40.0)
                .map(|r| r.g_db)
                .collect();
            assert!(g.len() > 1000);
            let fam = cfg.fading_at(lo + 20.0).unwrap();
            let mean = g.iter().sum::<f64>() / g.len() as f64;
            let sd = fam.central_db_moments().unwrap().0.sqrt();
            let tol = 3.0 * sd / (g.len() as f64).sqrt();
            assert!(mean.abs() < tol, "bin {lo}: {mean}");
        }
    }
}
