//! Cell topologies and random channel realizations.

mod config;
mod dump;

pub use config::{db_to_linear, dbm_to_watts, linear_to_db, ConfigFile, Preset};
pub use dump::{parse_channel_dump, write_channel_dump};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::rng::{stream, Domain, Rng};

/// UE-UE distances below this are clamped before applying the path-loss law.
pub const MIN_UE_UE_DISTANCE_M: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    pub n_antennas: usize,
    pub n_zones: usize,
    pub users_per_zone: usize,
    pub n_uplink: usize,
    pub cell_radius_m: f64,
    /// `n_zones + 1` radii; zone `i` spans `[b[i], b[i+1]]` and `b[0]` is the exclusion radius.
    pub zone_boundaries_m: Vec<f64>,
    pub p_bs_max: f64,
    pub p_ul_max: Vec<f64>,
    pub noise_power: f64,
    pub rho_sq: f64,
    /// nats/s/Hz
    pub rate_threshold_dl: f64,
    /// nats/s/Hz
    pub rate_threshold_ul: f64,
    pub rician_factor_db: f64,
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Preset::Desk.config()
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_antennas == 0 || self.n_zones == 0 || self.users_per_zone == 0 || self.n_uplink == 0 {
            return bad("N, Z, K and L must be positive");
        }
        if self.zone_boundaries_m.len() != self.n_zones + 1 {
            return bad("zone_boundaries_m must hold n_zones + 1 radii");
        }
        if self.zone_boundaries_m[0] <= 0.0 {
            return bad("exclusion radius must be positive");
        }
        if self.zone_boundaries_m.windows(2).any(|w| w[1] <= w[0]) {
            return bad("zone boundaries must be strictly increasing");
        }
        if *self.zone_boundaries_m.last().unwrap() > self.cell_radius_m + 1e-9 {
            return bad("zone boundaries exceed the cell radius");
        }
        if self.p_ul_max.len() != self.n_uplink {
            return bad("p_ul_max must have one entry per uplink user");
        }
        if !(self.p_bs_max > 0.0) || self.p_ul_max.iter().any(|&p| !(p > 0.0)) || !(self.noise_power > 0.0) {
            return bad("powers must be positive");
        }
        if !(0.0..1.0).contains(&self.rho_sq) {
            return bad("rho_sq must lie in [0, 1)");
        }
        if !(self.rate_threshold_dl >= 0.0) || !(self.rate_threshold_ul >= 0.0) {
            return bad("rate thresholds must be nonnegative");
        }
        if !(self.tolerance > 0.0) || self.max_iters == 0 {
            return bad("tolerance and max_iters must be positive");
        }
        Ok(())
    }

    pub fn n_dl(&self) -> usize {
        self.n_zones * self.users_per_zone
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkKind {
    BsUser,
    UeUe,
}

pub fn pathloss_db(kind: LinkKind, distance_km: f64) -> Result<f64> {
    if !(distance_km > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {distance_km}")));
    }
    Ok(match kind {
        LinkKind::BsUser => 103.8 + 20.9 * distance_km.log10(),
        LinkKind::UeUe => 145.4 + 37.5 * distance_km.log10(),
    })
}

pub fn path_gain(kind: LinkKind, distance_km: f64) -> Result<f64> {
    Ok(db_to_linear(-pathloss_db(kind, distance_km)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    /// `(zone, [x, y])`, ordered zone-major.
    pub dl_positions: Vec<(usize, [f64; 2])>,
    pub ul_positions: Vec<[f64; 2]>,
}

impl Topology {
    pub fn dl_position(&self, zone: usize, k: usize, users_per_zone: usize) -> [f64; 2] {
        self.dl_positions[zone * users_per_zone + k].1
    }
}

fn radius(p: [f64; 2]) -> f64 {
    p[0].hypot(p[1])
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn uniform_in_annulus(rng: &mut Rng, r_in: f64, r_out: f64) -> [f64; 2] {
    let u: f64 = rng.random();
    let r = (r_in * r_in + u * (r_out * r_out - r_in * r_in)).sqrt();
    let theta = rng.random::<f64>() * std::f64::consts::TAU;
    [r * theta.cos(), r * theta.sin()]
}

pub fn place_users(config: &SystemConfig, seed: u64) -> Result<Topology> {
    config.validate()?;
    let mut rng = stream(seed, Domain::Topology, 0, 0);
    let b = &config.zone_boundaries_m;
    let mut dl_positions = Vec::with_capacity(config.n_dl());
    for zone in 0..config.n_zones {
        for _ in 0..config.users_per_zone {
            dl_positions.push((zone, uniform_in_annulus(&mut rng, b[zone], b[zone + 1])));
        }
    }
    let ul_positions = (0..config.n_uplink)
        .map(|_| uniform_in_annulus(&mut rng, b[0], config.cell_radius_m))
        .collect();
    Ok(Topology { dl_positions, ul_positions })
}

/// Checks every user against its annulus; returns the first offender.
pub fn check_topology(topology: &Topology, config: &SystemConfig) -> Result<()> {
    let b = &config.zone_boundaries_m;
    let tol = 1e-9;
    for (i, &(zone, p)) in topology.dl_positions.iter().enumerate() {
        let r = radius(p);
        if r < b[zone] - tol || r > b[zone + 1] + tol {
            return Err(Error::Config(format!("DL user {i} at {r} m outside zone {zone}")));
        }
    }
    for (l, &p) in topology.ul_positions.iter().enumerate() {
        let r = radius(p);
        if r < b[0] - tol || r > config.cell_radius_m + tol {
            return Err(Error::Config(format!("UL user {l} at {r} m outside the cell")));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    pub n_antennas: usize,
    /// `h_dl[zone][k]`
    pub h_dl: Vec<Vec<CVec>>,
    pub h_ul: Vec<CVec>,
    pub g_si: CMat,
    /// `g_cci[l][zone][k]`
    pub g_cci: Vec<Vec<Vec<Complex64>>>,
    pub rho_sq: f64,
    pub noise_power: f64,
}

impl ChannelSet {
    pub fn n_zones(&self) -> usize {
        self.h_dl.len()
    }

    pub fn users_per_zone(&self) -> usize {
        self.h_dl.first().map_or(0, |z| z.len())
    }

    pub fn n_uplink(&self) -> usize {
        self.h_ul.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_antennas;
        let k = self.users_per_zone();
        let finite = |v: &CVec| v.iter().all(|x| x.re.is_finite() && x.im.is_finite());
        for zone in &self.h_dl {
            if zone.len() != k || zone.iter().any(|h| h.len() != n || !finite(h)) {
                return Err(Error::Dimension("downlink channels".into()));
            }
        }
        if self.h_ul.iter().any(|h| h.len() != n || !finite(h)) {
            return Err(Error::Dimension("uplink channels".into()));
        }
        if self.g_si.nrows() != n || self.g_si.ncols() != n {
            return Err(Error::Dimension("self-interference matrix".into()));
        }
        if self.g_cci.len() != self.n_uplink()
            || self.g_cci.iter().any(|z| z.len() != self.n_zones() || z.iter().any(|u| u.len() != k))
        {
            return Err(Error::Dimension("co-channel interference gains".into()));
        }
        if !(self.noise_power > 0.0) {
            return Err(Error::Config("noise power must be positive".into()));
        }
        Ok(())
    }
}

fn cn_vector(rng: &mut Rng, n: usize, amplitude: f64) -> CVec {
    let s = amplitude * std::f64::consts::FRAC_1_SQRT_2;
    DVector::from_fn(n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(s * re, s * im)
    })
}

/// Rician matrix with unit average power per entry and an all-ones LOS part.
pub fn rician_matrix(rng: &mut Rng, n: usize, k_factor_db: f64) -> CMat {
    let k = db_to_linear(k_factor_db);
    let los = (k / (k + 1.0)).sqrt();
    let nlos = (1.0 / (k + 1.0)).sqrt();
    let scatter = cn_vector(rng, n * n, nlos);
    CMat::from_fn(n, n, |r, c| Complex64::new(los, 0.0) + scatter[r * n + c])
}

pub fn draw_channels(topology: &Topology, config: &SystemConfig, seed: u64) -> Result<ChannelSet> {
    config.validate()?;
    check_topology(topology, config)?;
    let mut rng = stream(seed, Domain::Channel, 0, 0);
    let n = config.n_antennas;
    let k = config.users_per_zone;
    let mut h_dl = vec![Vec::with_capacity(k); config.n_zones];
    for &(zone, p) in &topology.dl_positions {
        let gain = path_gain(LinkKind::BsUser, radius(p) / 1000.0)?;
        h_dl[zone].push(cn_vector(&mut rng, n, gain.sqrt()));
    }
    let mut h_ul = Vec::with_capacity(config.n_uplink);
    for &p in &topology.ul_positions {
        let gain = path_gain(LinkKind::BsUser, radius(p) / 1000.0)?;
        h_ul.push(cn_vector(&mut rng, n, gain.sqrt()));
    }
    let g_si = rician_matrix(&mut rng, n, config.rician_factor_db);
    let mut g_cci = Vec::with_capacity(config.n_uplink);
    for &ul in &topology.ul_positions {
        let mut per_zone = vec![Vec::with_capacity(k); config.n_zones];
        for &(zone, dl) in &topology.dl_positions {
            let d = distance(ul, dl).max(MIN_UE_UE_DISTANCE_M);
            let gain = path_gain(LinkKind::UeUe, d / 1000.0)?;
            per_zone[zone].push(cn_vector(&mut rng, 1, gain.sqrt())[0]);
        }
        g_cci.push(per_zone);
    }
    Ok(ChannelSet { n_antennas: n, h_dl, h_ul, g_si, g_cci, rho_sq: config.rho_sq, noise_power: config.noise_power })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pathloss_examples() {
        assert!((pathloss_db(LinkKind::BsUser, 1.0).unwrap() - 103.8).abs() < 1e-12);
        assert!((pathloss_db(LinkKind::BsUser, 0.1).unwrap() - 82.9).abs() < 1e-12);
        assert!((pathloss_db(LinkKind::UeUe, 0.1).unwrap() - 107.9).abs() < 1e-12);
        assert!(pathloss_db(LinkKind::UeUe, 0.0).is_err());
        assert!(pathloss_db(LinkKind::BsUser, -1.0).is_err());
    }

    #[test]
    fn placement_is_deterministic_and_respects_zones() {
        let cfg = SystemConfig::default();
        let a = place_users(&cfg, 7).unwrap();
        let b = place_users(&cfg, 7).unwrap();
        assert_eq!(a, b);
        for seed in 0..200 {
            let t = place_users(&cfg, seed).unwrap();
            check_topology(&t, &cfg).unwrap();
            for &(zone, p) in &t.dl_positions {
                let r = radius(p);
                if zone == 0 {
                    assert!((10.0..=50.0).contains(&r));
                } else {
                    assert!((50.0..=100.0).contains(&r));
                }
            }
        }
    }

    #[test]
    fn channels_are_bit_identical_for_same_seed() {
        let cfg = SystemConfig::default();
        let t = place_users(&cfg, 3).unwrap();
        assert_eq!(draw_channels(&t, &cfg, 11).unwrap(), draw_channels(&t, &cfg, 11).unwrap());
        assert_ne!(draw_channels(&t, &cfg, 11).unwrap(), draw_channels(&t, &cfg, 12).unwrap());
    }

    #[test]
    fn fading_power_matches_path_gain() {
        let mut rng = stream(1, Domain::Property, 0, 0);
        let gain = 10f64.powf(-8.29);
        let n = 4;
        let draws = 10_000;
        let mean: f64 = (0..draws).map(|_| cn_vector(&mut rng, n, gain.sqrt()).norm_squared() / n as f64).sum::<f64>()
            / draws as f64;
        assert!((mean / gain - 1.0).abs() < 0.05, "ratio {}", mean / gain);
        let unit: f64 = (0..draws).map(|_| cn_vector(&mut rng, 1, 1.0)[0].norm_sqr()).sum::<f64>() / draws as f64;
        assert!((0.97..=1.03).contains(&unit));
    }

    #[test]
    fn rician_factor_split() {
        let mut rng = stream(2, Domain::Property, 0, 0);
        let n = 4;
        let reps = 3000;
        let k = db_to_linear(5.0);
        let los = k / (k + 1.0);
        let mut scatter = 0.0;
        for _ in 0..reps {
            let g = rician_matrix(&mut rng, n, 5.0);
            scatter += g.iter().map(|x| (x - Complex64::new(los.sqrt(), 0.0)).norm_sqr()).sum::<f64>();
        }
        scatter /= (reps * n * n) as f64;
        let ratio = los / scatter;
        assert!((ratio / 10f64.powf(0.5) - 1.0).abs() < 0.03, "ratio {ratio}");
    }

    proptest! {
        #[test]
        fn path_gain_decreases(d in 0.001f64..2.0, step in 1e-4f64..1.0) {
            for kind in [LinkKind::BsUser, LinkKind::UeUe] {
                prop_assert!(path_gain(kind, d + step).unwrap() < path_gain(kind, d).unwrap());
            }
        }

        #[test]
        fn topology_respects_annuli(seed in any::<u64>()) {
            let cfg = SystemConfig::default();
            let t = place_users(&cfg, seed).unwrap();
            prop_assert!(check_topology(&t, &cfg).is_ok());
            prop_assert!(t.ul_positions.iter().all(|&p| radius(p) >= 10.0 - 1e-9));
        }
    }
}
