//! TOML run configuration shared by all CLI commands.
//!
//! Every field is optional; unset values resolve to the scenario-kind
//! defaults (touchstone: 18 dBm, gamma 2, out-and-back to 1400 m; 400-car:
//! 20 dBm, gamma 2.1, 400 m range). Unknown keys are rejected by name.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathloss::GridSpec;
use crate::pipeline::CompareOptions;
use crate::synth::{FadingPiece, PairFilter, ScenarioConfig, ScenarioKind};
use crate::TwoRay;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub master_seed: u64,
    /// "touchstone" or "400car".
    pub scenario_kind: Option<String>,
    pub ptx_dbm: Option<f64>,
    pub d_max_m: Option<f64>,
    pub duration_s: Option<f64>,
    pub quant_db: Option<f64>,
    pub censor_dbm: Option<f64>,
    pub speed_kmh: Option<f64>,
    pub tx_rate_hz: Option<f64>,
    pub cart_spacing_m: Option<f64>,
    pub fading_bypass: Option<bool>,
    /// "all" or "mover".
    pub pair_filter: Option<String>,
    pub fading_profile: Option<Vec<FadingPiece>>,
    pub gamma: Option<f64>,
    pub eps_r: Option<f64>,
    pub freq_hz: Option<f64>,
    pub h_t: Option<f64>,
    pub h_r: Option<f64>,
    pub pathloss: PathlossSection,
    pub compare: CompareSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathlossSection {
    pub avg_bin_width_m: f64,
    /// Pair-separation cap of the eps_r stage.
    pub pair_max_sep_m: f64,
    /// Pair-separation cap of the gamma stage; unset means all pairs
    /// (the exponent stage benefits from long baselines).
    pub gamma_pair_max_sep_m: Option<f64>,
    pub mode_bin_width: f64,
    pub gamma_init: f64,
    pub eps_search: GridSpec,
    pub regression_gamma: GridSpec,
    pub regression_eps: GridSpec,
    /// Upper distance cut of the path-loss fit (defaults to d_max).
    pub fit_range_max_m: Option<f64>,
}

impl Default for PathlossSection {
    fn default() -> Self {
        Self {
            avg_bin_width_m: 1.0,
            pair_max_sep_m: 50.0,
            gamma_pair_max_sep_m: None,
            mode_bin_width: 0.01,
            gamma_init: 2.0,
            eps_search: GridSpec { lo: 1.0, hi: 30.0, step: 0.001 },
            regression_gamma: GridSpec { lo: 1.0, hi: 3.0, step: 0.01 },
            regression_eps: GridSpec { lo: 1.0, hi: 2.0, step: 0.005 },
            fit_range_max_m: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub fit_bin_sizes_m: Vec<f64>,
    pub reps: usize,
    pub eval_bin_m: f64,
    pub significance_bin: f64,
    pub significance_comparison: f64,
    pub sample_floor: usize,
}

impl Default for CompareSection {
    fn default() -> Self {
        let d = CompareOptions::default();
        Self {
            fit_bin_sizes_m: d.fit_bin_sizes_m,
            reps: d.reps,
            eval_bin_m: d.eval_bin_m,
            significance_bin: d.significance_bin,
            significance_comparison: d.significance_comparison,
            sample_floor: d.sample_floor,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("read {}: {e}", path.display())))?;
        toml::from_str(&body).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn kind(&self) -> Result<ScenarioKind> {
        match self.scenario_kind.as_deref().unwrap_or("touchstone") {
            "touchstone" => Ok(ScenarioKind::Touchstone),
            "400car" => Ok(ScenarioKind::FourHundredCar),
            other => Err(Error::Format(format!(
                "scenario_kind must be \"touchstone\" or \"400car\", got {other:?}"
            ))),
        }
    }

    fn kind_defaults(&self) -> Result<ScenarioConfig> {
        Ok(match self.kind()? {
            ScenarioKind::Touchstone => ScenarioConfig::touchstone(self.master_seed),
            ScenarioKind::FourHundredCar => ScenarioConfig::four_hundred_car(self.master_seed),
        })
    }

    /// Fully resolved scenario (config values over kind defaults).
    pub fn scenario(&self, seed_override: Option<u64>) -> Result<ScenarioConfig> {
        let mut cfg = self.kind_defaults()?;
        cfg.master_seed = seed_override.unwrap_or(self.master_seed);
        if let Some(v) = self.ptx_dbm {
            cfg.ptx_dbm = v;
        }
        if let Some(v) = self.d_max_m {
            cfg.d_max_m = v;
        }
        if let Some(v) = self.duration_s {
            cfg.duration_s = v;
        }
        if let Some(v) = self.quant_db {
            cfg.quant_db = v;
        }
        if let Some(v) = self.censor_dbm {
            cfg.censor_dbm = v;
        }
        if let Some(v) = self.speed_kmh {
            cfg.speed_kmh = v;
        }
        if let Some(v) = self.tx_rate_hz {
            cfg.tx_rate_hz = v;
        }
        if let Some(v) = self.cart_spacing_m {
            cfg.cart_spacing_m = v;
        }
        if let Some(v) = self.fading_bypass {
            cfg.fading_bypass = v;
        }
        if let Some(p) = &self.fading_profile {
            cfg.fading_profile = p.clone();
        }
        cfg.pair_filter = match self.pair_filter.as_deref() {
            None | Some("all") => PairFilter::All,
            Some("mover") => PairFilter::MoverInvolved,
            Some(other) => {
                return Err(Error::Format(format!(
                    "pair_filter must be \"all\" or \"mover\", got {other:?}"
                )))
            }
        };
        cfg.tworay = self.tworay()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Two-ray parameters (config values over kind defaults).
    pub fn tworay(&self) -> Result<TwoRay> {
        let d = self.kind_defaults()?.tworay;
        TwoRay::new(
            self.gamma.unwrap_or(d.gamma),
            self.eps_r.unwrap_or(d.eps_r),
            self.freq_hz.unwrap_or(d.freq_hz),
            self.h_t.unwrap_or(d.h_t),
            self.h_r.unwrap_or(d.h_r),
        )
    }

    pub fn resolved_ptx_dbm(&self) -> Result<f64> {
        Ok(self.ptx_dbm.unwrap_or(self.kind_defaults()?.ptx_dbm))
    }

    pub fn resolved_d_max_m(&self) -> Result<f64> {
        Ok(self.d_max_m.unwrap_or(self.kind_defaults()?.d_max_m))
    }

    /// Range cut of the path-loss fit.
    pub fn fit_range_max_m(&self) -> Result<f64> {
        match self.pathloss.fit_range_max_m {
            Some(v) => Ok(v),
            None => self.resolved_d_max_m(),
        }
    }

    pub fn compare_options(&self, seed_override: Option<u64>, reps_override: Option<usize>) -> CompareOptions {
        CompareOptions {
            fit_bin_sizes_m: self.compare.fit_bin_sizes_m.clone(),
            reps: reps_override.unwrap_or(self.compare.reps),
            eval_bin_m: self.compare.eval_bin_m,
            significance_bin: self.compare.significance_bin,
            significance_comparison: self.compare.significance_comparison,
            master_seed: seed_override.unwrap_or(self.master_seed),
            sample_floor: self.compare.sample_floor,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_per_kind() {
        let cfg = RunConfig::default();
        let sc = cfg.scenario(None).unwrap();
        assert_eq!(sc.ptx_dbm, 18.0);
        assert_eq!(sc.tworay.gamma, 2.0);

        let cfg: RunConfig = toml::from_str("scenario_kind = \"400car\"").unwrap();
        let sc = cfg.scenario(None).unwrap();
        assert_eq!(sc.ptx_dbm, 20.0);
        assert_eq!(sc.tworay.gamma, 2.1);
        assert_eq!(cfg.resolved_d_max_m().unwrap(), 400.0);
    }

    #[test]
    fn overrides_apply() {
        let cfg: RunConfig = toml::from_str(
            "master_seed = 5\nptx_dbm = 10.0\ngamma = 2.4\n\n[compare]\nreps = 7\n",
        )
        .unwrap();
        let sc = cfg.scenario(None).unwrap();
        assert_eq!(sc.ptx_dbm, 10.0);
        assert_eq!(sc.tworay.gamma, 2.4);
        assert_eq!(sc.master_seed, 5);
        let opts = cfg.compare_options(Some(9), None);
        assert_eq!(opts.reps, 7);
        assert_eq!(opts.master_seed, 9);
    }

    #[test]
    fn unknown_key_named_in_error() {
        let err = toml::from_str::<RunConfig>("not_a_key = 1").unwrap_err();
        assert!(err.to_string().contains("not_a_key"));
        let err = toml::from_str::<RunConfig>("[pathloss]\nbogus = 2").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn bad_enums_rejected() {
        let cfg: RunConfig = toml::from_str("scenario_kind = \"boat\"").unwrap();
        assert!(cfg.kind().is_err());
        let cfg: RunConfig = toml::from_str("pair_filter = \"every\"").unwrap();
        assert!(cfg.scenario(None).is_err());
    }

    #[test]
    fn fading_profile_round_trip() {
        let cfg: RunConfig = toml::from_str(
            "[[fading_profile]]\nrange_hi_m = 400.0\nalpha = 3.2\nmu = 1.1\nomega = 1.0\n",
        )
        .unwrap();
        let sc = cfg.scenario(None).unwrap();
        assert_eq!(sc.fading_profile.len(), 1);
        assert_eq!(sc.fading_profile[0].alpha, 3.2);
    }
}
