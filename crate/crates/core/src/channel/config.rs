use serde::{Deserialize, Serialize};

use super::SystemConfig;
use crate::error::{Error, Result};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// N=4, K=2, L=2.
    Desk,
    /// N=10, K=4, L=4.
    Paper,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::Config(format!("unknown preset {s:?}"))),
        }
    }

    pub fn config(self) -> SystemConfig {
        let (n, k, l) = match self {
            Preset::Desk => (4, 2, 2),
            Preset::Paper => (10, 4, 4),
        };
        SystemConfig {
            n_antennas: n,
            n_zones: 2,
            users_per_zone: k,
            n_uplink: l,
            cell_radius_m: 100.0,
            zone_boundaries_m: vec![10.0, 50.0, 100.0],
            p_bs_max: dbm_to_watts(38.0),
            p_ul_max: vec![dbm_to_watts(18.0); l],
            noise_power: dbm_to_watts(-104.0),
            rho_sq: db_to_linear(-90.0),
            rate_threshold_dl: std::f64::consts::LN_2,
            rate_threshold_ul: std::f64::consts::LN_2,
            rician_factor_db: 5.0,
            tolerance: 1e-3,
            max_iters: 100,
        }
    }

    /// Monte Carlo grid `(topologies, realizations)`.
    pub fn grid(self) -> (usize, usize) {
        match self {
            Preset::Desk => (20, 10),
            Preset::Paper => (1000, 500),
        }
    }
}

/// Flat key/value configuration in report units (dBm, dB, bits/s/Hz).
///
/// Every key is optional; missing keys fall back to the preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n_antennas: Option<usize>,
    pub n_zones: Option<usize>,
    pub users_per_zone: Option<usize>,
    pub n_uplink: Option<usize>,
    pub cell_radius_m: Option<f64>,
    pub zone_boundaries_m: Option<Vec<f64>>,
    pub p_bs_max_dbm: Option<f64>,
    pub p_ul_max_dbm: Option<f64>,
    pub noise_power_dbm: Option<f64>,
    pub rho_sq_db: Option<f64>,
    pub rate_threshold_dl_bits: Option<f64>,
    pub rate_threshold_ul_bits: Option<f64>,
    pub rician_factor_db: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_iters: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn resolve(&self, preset: Preset) -> Result<SystemConfig> {
        let mut c = preset.config();
        if let Some(v) = self.n_antennas {
            c.n_antennas = v;
        }
        if let Some(v) = self.n_zones {
            c.n_zones = v;
        }
        if let Some(v) = self.users_per_zone {
            c.users_per_zone = v;
        }
        if let Some(v) = self.n_uplink {
            c.n_uplink = v;
        }
        if let Some(v) = self.cell_radius_m {
            c.cell_radius_m = v;
        }
        if let Some(v) = &self.zone_boundaries_m {
            c.zone_boundaries_m = v.clone();
        }
        if let Some(v) = self.p_bs_max_dbm {
            c.p_bs_max = dbm_to_watts(v);
        }
        let p_ul = self.p_ul_max_dbm.map(dbm_to_watts).unwrap_or(c.p_ul_max[0]);
        c.p_ul_max = vec![p_ul; c.n_uplink];
        if let Some(v) = self.noise_power_dbm {
            c.noise_power = dbm_to_watts(v);
        }
        if let Some(v) = self.rho_sq_db {
            c.rho_sq = db_to_linear(v);
        }
        if let Some(v) = self.rate_threshold_dl_bits {
            c.rate_threshold_dl = v * std::f64::consts::LN_2;
        }
        if let Some(v) = self.rate_threshold_ul_bits {
            c.rate_threshold_ul = v * std::f64::consts::LN_2;
        }
        if let Some(v) = self.rician_factor_db {
            c.rician_factor_db = v;
        }
        if let Some(v) = self.tolerance {
            c.tolerance = v;
        }
        if let Some(v) = self.max_iters {
            c.max_iters = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_defaults_mirror_simulation_table() {
        let c = Preset::Desk.config();
        c.validate().unwrap();
        assert!((c.p_bs_max - 6.309_573_444_801_933).abs() < 1e-12);
        assert!((c.p_ul_max[0] - 0.063_095_734_448_019_33).abs() < 1e-15);
        assert!((linear_to_db(c.noise_power) + 134.0).abs() < 1e-9);
        assert!((c.rho_sq - 1e-9).abs() < 1e-21);
    }

    #[test]
    fn file_overrides_preset() {
        let f = ConfigFile::parse("n_antennas = 6\np_bs_max_dbm = 30.0\nrate_threshold_dl_bits = 2.0\n").unwrap();
        let c = f.resolve(Preset::Desk).unwrap();
        assert_eq!(c.n_antennas, 6);
        assert!((c.p_bs_max - 1.0).abs() < 1e-12);
        assert!((c.rate_threshold_dl - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!(ConfigFile::parse("bogus = 1").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let f = ConfigFile::parse("zone_boundaries_m = [10.0, 60.0, 50.0]").unwrap();
        assert!(f.resolve(Preset::Desk).is_err());
        let f = ConfigFile::parse("rho_sq_db = 0.0").unwrap();
        assert!(f.resolve(Preset::Desk).is_err());
    }
}
