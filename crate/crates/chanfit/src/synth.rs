//! Ground-truth scenario synthesizer: touchstone (one moving transmitter,
//! one fixed receiver) and the 400-car grid, with per-packet fading,
//! dB quantization and receiver censoring.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dists::AlphaMu;
use crate::error::{Error, Result};
use crate::mathkit::RngStream;
use crate::tworay::{path_loss_db, TwoRayParams};
use crate::RssiRecord;

/// Sentinel RSSI assigned where the deterministic model hits a deep null;
/// always removed by censoring.
pub const DEEP_NULL_RSSI_DBM: f64 = -400.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    Touchstone,
    FourHundredCar,
}

/// Which directed Tx->Rx pairs emit packets in the 400-car scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PairFilter {
    /// Every pair within range (the full campaign).
    #[default]
    All,
    /// Only pairs where at least one endpoint is a moving vehicle; cuts the
    /// static-static bulk whose distances sit on cart-spacing multiples.
    MoverInvolved,
}

/// One piece of the piecewise-constant fading profile: parameters applying
/// to distances in (previous hi, `range_hi_m`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FadingPiece {
    pub range_hi_m: f64,
    pub alpha: f64,
    pub mu: f64,
    pub omega: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub ptx_dbm: f64,
    pub tworay: TwoRayParams<f64>,
    pub tx_rate_hz: f64,
    pub speed_kmh: f64,
    pub cart_spacing_m: f64,
    pub fading_profile: Vec<FadingPiece>,
    /// Replace fading draws by exactly 0 dB (deterministic curve).
    pub fading_bypass: bool,
    pub censor_dbm: f64,
    /// 0 disables quantization.
    pub quant_db: f64,
    pub duration_s: f64,
    pub master_seed: u64,
    /// Pairs farther apart than this emit nothing (400-car).
    pub d_max_m: f64,
    pub pair_filter: PairFilter,
}

/// Default three-piece profile spanning the plausible fading range.
pub fn default_fading_profile() -> Vec<FadingPiece> {
    vec![
        FadingPiece { range_hi_m: 100.0, alpha: 2.5, mu: 1.8, omega: 1.0 },
        FadingPiece { range_hi_m: 250.0, alpha: 3.0, mu: 1.2, omega: 1.0 },
        FadingPiece { range_hi_m: 1500.0, alpha: 1.8, mu: 0.8, omega: 1.0 },
    ]
}

impl ScenarioConfig {
    /// Touchstone defaults: 22 km/h out-and-back to 1400 m, 10 Hz, 18 dBm,
    /// gamma = 2, eps_r = 1.01.
    pub fn touchstone(master_seed: u64) -> Self {
        Self {
            kind: ScenarioKind::Touchstone,
            ptx_dbm: 18.0,
            tworay: TwoRayParams::new(2.0, 1.01, 5.9e9, 1.61, 1.61).unwrap(),
            tx_rate_hz: 10.0,
            speed_kmh: 22.0,
            cart_spacing_m: 75.0,
            fading_profile: default_fading_profile(),
            fading_bypass: false,
            censor_dbm: -94.0,
            quant_db: 1.0,
            duration_s: 2.0 * 1400.0 / (22.0 / 3.6), // one out-and-back lap
            master_seed,
            d_max_m: 1400.0,
            pair_filter: PairFilter::All,
        }
    }

    /// 400-car defaults: 20 dBm, gamma = 2.1, 65 carts x 6 transceivers at
    /// 75 m plus 4 movers x 2 transceivers.
    pub fn four_hundred_car(master_seed: u64) -> Self {
        Self {
            kind: ScenarioKind::FourHundredCar,
            ptx_dbm: 20.0,
            tworay: TwoRayParams::new(2.1, 1.01, 5.9e9, 1.61, 1.61).unwrap(),
            tx_rate_hz: 10.0,
            speed_kmh: 22.0,
            cart_spacing_m: 75.0,
            fading_profile: default_fading_profile(),
            fading_bypass: false,
            censor_dbm: -94.0,
            quant_db: 1.0,
            duration_s: 60.0,
            master_seed,
            d_max_m: 400.0,
            pair_filter: PairFilter::All,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tx_rate_hz > 0.0 && self.speed_kmh > 0.0 && self.cart_spacing_m > 0.0) {
            return Err(Error::domain("scenario: rates, speed and spacing must be > 0"));
        }
        if !(self.duration_s > 0.0 && self.d_max_m > 0.0) {
            return Err(Error::domain("scenario: duration and d_max must be > 0"));
        }
        if self.quant_db < 0.0 {
            return Err(Error::domain("scenario: quant_db must be >= 0"));
        }
        let mut prev = 0.0;
        if self.fading_profile.is_empty() && !self.fading_bypass {
            return Err(Error::domain("scenario: empty fading profile without bypass"));
        }
        for piece in &self.fading_profile {
            if piece.range_hi_m <= prev {
                return Err(Error::domain("scenario: fading profile ranges must increase"));
            }
            AlphaMu::new(piece.alpha, piece.mu, piece.omega)?;
            prev = piece.range_hi_m;
        }
        Ok(())
    }

    /// Profile piece covering distance `d` (the last piece extends to
    /// infinity).
    pub fn fading_at(&self, d: f64) -> Result<AlphaMu<f64>> {
        let piece = self
            .fading_profile
            .iter()
            .find(|p| d <= p.range_hi_m)
            .or_else(|| self.fading_profile.last())
            .ok_or_else(|| Error::domain("scenario: empty fading profile"))?;
        AlphaMu::new(piece.alpha, piece.mu, piece.omega)
    }
}

/// Quantize (round half away from zero to the nearest `quant_db` multiple,
/// skipped when `quant_db` = 0), then drop records strictly below
/// `censor_dbm`.
pub fn censor_quantize(records: Vec<RssiRecord>, censor_dbm: f64, quant_db: f64) -> Vec<RssiRecord> {
    records
        .into_iter()
        .filter_map(|mut r| {
            if quant_db > 0.0 {
                // f64::round rounds half away from zero
                r.rssi_dbm = (r.rssi_dbm / quant_db).round() * quant_db;
            }
            (r.rssi_dbm >= censor_dbm).then_some(r)
        })
        .collect()
}

/// One synthesized packet at distance `d`; fading drawn from the stream.
fn packet_rssi(cfg: &ScenarioConfig, d: f64, stream: RngStream) -> Result<f64> {
    let loss = match path_loss_db(d, &cfg.tworay) {
        Ok(l) => l,
        Err(Error::Numerical(_)) => return Ok(DEEP_NULL_RSSI_DBM),
        Err(e) => return Err(e),
    };
    let g_db = if cfg.fading_bypass {
        0.0
    } else {
        // de-meaned in dB so the fading adds no distance-dependent offset to
        // the mean curve, regardless of the active profile piece
        let fam = cfg.fading_at(d)?;
        20.0 * fam.sample_one(&mut stream.rng())?.log10() - fam.mean_db()?
    };
    Ok(cfg.ptx_dbm - loss + g_db)
}

/// Touchstone run: d(t) sweeps 0 -> 1400 m -> 0 at constant speed; one
/// record per packet, censored/quantized.
pub fn gen_touchstone(cfg: &ScenarioConfig) -> Result<Vec<RssiRecord>> {
    cfg.validate()?;
    let v = cfg.speed_kmh / 3.6;
    let turn_m = cfg.d_max_m;
    let n_packets = (cfg.duration_s * cfg.tx_rate_hz).floor() as u64;
    let raw: Result<Vec<Option<RssiRecord>>> = (0..n_packets)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 / cfg.tx_rate_hz;
            // triangle wave between 0 and the turn distance
            let phase = (v * t) % (2.0 * turn_m);
            let d = if phase <= turn_m { phase } else { 2.0 * turn_m - phase };
            if d < 1.0 {
                return Ok(None); // too close for the ray model
            }
            let rssi = packet_rssi(cfg, d, RngStream::new(cfg.master_seed, k))?;
            Ok(Some(RssiRecord { distance_m: d, rssi_dbm: rssi, source_tag: None }))
        })
        .collect();
    Ok(censor_quantize(raw?.into_iter().flatten().collect(), cfg.censor_dbm, cfg.quant_db))
}

const CARTS: usize = 65;
const TRANSCEIVERS_PER_CART: usize = 6;
const MOVERS: usize = 4;
const TRANSCEIVERS_PER_MOVER: usize = 2;

/// Node count in the 400-car scenario.
pub const N_NODES_400CAR: usize = CARTS * TRANSCEIVERS_PER_CART + MOVERS * TRANSCEIVERS_PER_MOVER;

/// Position of node `id` at time `t` on the 1-D track.
fn node_position(id: usize, t: f64, cfg: &ScenarioConfig) -> f64 {
    let static_nodes = CARTS * TRANSCEIVERS_PER_CART;
    if id < static_nodes {
        (id / TRANSCEIVERS_PER_CART) as f64 * cfg.cart_spacing_m
    } else {
        // movers follow each other at cart spacing, driving along the track
        let mover = (id - static_nodes) / TRANSCEIVERS_PER_MOVER;
        cfg.speed_kmh / 3.6 * t - mover as f64 * cfg.cart_spacing_m
    }
}

fn is_mover(id: usize) -> bool {
    id >= CARTS * TRANSCEIVERS_PER_CART
}

/// 400-car run: every directed in-range pair (subject to the pair filter)
/// emits one packet per time step; censored/quantized.
pub fn gen_400car(cfg: &ScenarioConfig) -> Result<Vec<RssiRecord>> {
    cfg.validate()?;
    let n_steps = (cfg.duration_s * cfg.tx_rate_hz).floor() as u64;
    let n = N_NODES_400CAR;
    let per_step: Result<Vec<Vec<RssiRecord>>> = (0..n_steps)
        .into_par_iter()
        .map(|step| {
            let t = step as f64 / cfg.tx_rate_hz;
            let pos: Vec<f64> = (0..n).map(|id| node_position(id, t, cfg)).collect();
            let mut out = Vec::new();
            for tx in 0..n {
                for rx in 0..n {
                    if tx == rx {
                        continue;
                    }
                    if cfg.pair_filter == PairFilter::MoverInvolved
                        && !is_mover(tx)
                        && !is_mover(rx)
                    {
                        continue;
                    }
                    let d = (pos[tx] - pos[rx]).abs();
                    if d <= 0.0 || d > cfg.d_max_m {
                        continue;
                    }
                    let pair_index = (tx * n + rx) as u64;
                    let stream = RngStream::new(cfg.master_seed, (pair_index << 32) | step);
                    let rssi = packet_rssi(cfg, d, stream)?;
                    out.push(RssiRecord { distance_m: d, rssi_dbm: rssi, source_tag: None });
                }
            }
            Ok(out)
        })
        .collect();
    Ok(censor_quantize(per_step?.into_iter().flatten().collect(), cfg.censor_dbm, cfg.quant_db))
}

/// Dispatch on the configured scenario kind.
pub fn generate(cfg: &ScenarioConfig) -> Result<Vec<RssiRecord>> {
    match cfg.kind {
        ScenarioKind::Touchstone => gen_touchstone(cfg),
        ScenarioKind::FourHundredCar => gen_400car(cfg),
    }
}
