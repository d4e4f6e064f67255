//! Exact downlink/uplink SINRs and rates for a fixed operating point.
//!
//! Rates are natural-log (nats/s/Hz); divide by `ln 2` for bits.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::association::{Association, AssociationTensor, DecodingOrder, PairingMatrix};
use crate::channel::{ChannelSet, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{add_outer, inner, ln_det_hpd, solve_hpd, CMat, CVec};

/// Beamformers `w[zone][k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Beamformers {
    pub w: Vec<Vec<CVec>>,
}

impl Beamformers {
    pub fn zeros(n_zones: usize, k: usize, n: usize) -> Self {
        Beamformers { w: vec![vec![CVec::zeros(n); k]; n_zones] }
    }

    /// Each beam points along its user's channel; total power `power` split evenly.
    pub fn matched(ch: &ChannelSet, power: f64) -> Self {
        let count = (ch.n_zones() * ch.users_per_zone()) as f64;
        let amp = (power / count).sqrt();
        let w = ch
            .h_dl
            .iter()
            .map(|zone| zone.iter().map(|h| h * Complex64::new(amp / h.norm().max(f64::MIN_POSITIVE), 0.0)).collect())
            .collect();
        Beamformers { w }
    }

    pub fn total_power(&self) -> f64 {
        self.w.iter().flatten().map(|v| v.norm_squared()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CVec> {
        self.w.iter().flatten()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Beamformers { w: self.w.iter().map(|z| z.iter().map(|v| v * Complex64::new(s, 0.0)).collect()).collect() }
    }
}

/// How inner users treat the outer-zone signals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DlModel {
    /// Paired outer signal removed by SIC; outer SINR limited by the SIC stage.
    Noma,
    /// Every other beam is interference; no SIC stage.
    NoSic,
}

fn gain(h: &CVec, w: &CVec) -> f64 {
    inner(h, w).norm_sqr()
}

/// `sum_l p_l^2 |g_{l, zone k}|^2`
pub fn cci(ch: &ChannelSet, p: &[f64], zone: usize, k: usize) -> f64 {
    ch.g_cci.iter().zip(p).map(|(g, &pl)| pl * pl * g[zone][k].norm_sqr()).sum()
}

fn check_two_zone(ch: &ChannelSet, w: &Beamformers, p: &[f64], kk: usize) -> Result<()> {
    if ch.n_zones() != 2 || w.w.len() != 2 {
        return Err(Error::Dimension("closed-form rates need two zones".into()));
    }
    if ch.users_per_zone() != kk || w.w.iter().any(|z| z.len() != kk) {
        return Err(Error::Dimension("pairing size differs from users per zone".into()));
    }
    if p.len() != ch.n_uplink() {
        return Err(Error::Dimension("one uplink power per uplink user".into()));
    }
    Ok(())
}

/// Inner-user interference-plus-noise with per-pair weights `1 - alpha_kj`
/// on the outer beams (relaxed weights allowed).
pub fn inner_interference(ch: &ChannelSet, w: &Beamformers, p: &[f64], alpha: &DMatrix<f64>, k: usize) -> f64 {
    let h = &ch.h_dl[0][k];
    let kk = ch.users_per_zone();
    let mut s = ch.noise_power + cci(ch, p, 0, k);
    for k2 in (0..kk).filter(|&k2| k2 != k) {
        s += gain(h, &w.w[0][k2]);
    }
    for j in 0..kk {
        s += (1.0 - alpha[(k, j)]) * gain(h, &w.w[1][j]);
    }
    s
}

/// Interference-plus-noise when inner user `k` decodes outer user `j`'s message.
pub fn sic_interference(ch: &ChannelSet, w: &Beamformers, p: &[f64], k: usize, j: usize) -> f64 {
    let h = &ch.h_dl[0][k];
    let kk = ch.users_per_zone();
    let mut s = ch.noise_power + cci(ch, p, 0, k);
    for k2 in 0..kk {
        s += gain(h, &w.w[0][k2]);
    }
    for j2 in (0..kk).filter(|&j2| j2 != j) {
        s += gain(h, &w.w[1][j2]);
    }
    s
}

/// Interference-plus-noise at outer user `j` decoding its own message.
pub fn outer_interference(ch: &ChannelSet, w: &Beamformers, p: &[f64], j: usize) -> f64 {
    let h = &ch.h_dl[1][j];
    let kk = ch.users_per_zone();
    let mut s = ch.noise_power + cci(ch, p, 1, j);
    for k in 0..kk {
        s += gain(h, &w.w[0][k]);
    }
    for j2 in (0..kk).filter(|&j2| j2 != j) {
        s += gain(h, &w.w[1][j2]);
    }
    s
}

/// SINRs `[zone][k]` for the two-zone model with a binary pairing.
pub fn dl_sinrs(ch: &ChannelSet, w: &Beamformers, p: &[f64], pairing: &PairingMatrix, model: DlModel) -> Result<Vec<Vec<f64>>> {
    let kk = pairing.size();
    check_two_zone(ch, w, p, kk)?;
    if !pairing.violations().is_empty() {
        return Err(Error::NotBinary);
    }
    let alpha = match model {
        DlModel::Noma => pairing.0.clone(),
        DlModel::NoSic => DMatrix::zeros(kk, kk),
    };
    let inner_users = (0..kk)
        .map(|k| gain(&ch.h_dl[0][k], &w.w[0][k]) / inner_interference(ch, w, p, &alpha, k))
        .collect();
    let outer_users = (0..kk)
        .map(|j| {
            let own = gain(&ch.h_dl[1][j], &w.w[1][j]) / outer_interference(ch, w, p, j);
            match model {
                DlModel::NoSic => own,
                DlModel::Noma => {
                    let k = pairing.partner_of_outer(j).expect("validated permutation");
                    let sic = gain(&ch.h_dl[0][k], &w.w[1][j]) / sic_interference(ch, w, p, k, j);
                    own.min(sic)
                }
            }
        })
        .collect();
    Ok(vec![inner_users, outer_users])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DlUser {
    pub zone: usize,
    pub index: usize,
}

pub fn dl_rate(ch: &ChannelSet, w: &Beamformers, p: &[f64], pairing: &PairingMatrix, user: DlUser) -> Result<f64> {
    let s = dl_sinrs(ch, w, p, pairing, DlModel::Noma)?;
    let v = s.get(user.zone).and_then(|z| z.get(user.index)).ok_or_else(|| Error::Dimension("no such user".into()))?;
    Ok(v.ln_1p())
}

/// SINR of any zone's user under a general cluster tensor.
pub fn dl_sinr_general(ch: &ChannelSet, w: &Beamformers, p: &[f64], t: &AssociationTensor, user: DlUser) -> Result<f64> {
    let z_count = t.n_zones();
    let kk = t.users_per_zone();
    if ch.n_zones() != z_count || w.w.len() != z_count || ch.users_per_zone() != kk {
        return Err(Error::Dimension("tensor and channel shapes differ".into()));
    }
    let (i, k) = (user.zone, user.index);
    if i >= z_count || k >= kk {
        return Err(Error::Dimension("no such user".into()));
    }
    let mut best = f64::INFINITY;
    for z in 0..=i {
        let t_zi = t.ua_matrix(z, i);
        let j = (0..kk).find(|&j| t_zi[(j, k)] == 1).expect("permutation tensor");
        let h = &ch.h_dl[z][j];
        let mut theta = ch.noise_power + cci(ch, p, z, j);
        for z2 in 0..=i {
            for j2 in 0..kk {
                if (z2, j2) != (i, k) {
                    theta += gain(h, &w.w[z2][j2]);
                }
            }
        }
        for i2 in i + 1..z_count {
            let t_zi2 = t.ua_matrix(z, i2);
            for k2 in 0..kk {
                theta += (1 - t_zi2[(j, k2)]) as f64 * gain(h, &w.w[i2][k2]);
            }
        }
        best = best.min(gain(h, &w.w[i][k]) / theta);
    }
    Ok(best)
}

pub fn dl_rate_general(ch: &ChannelSet, w: &Beamformers, p: &[f64], t: &AssociationTensor, user: DlUser) -> Result<f64> {
    Ok(dl_sinr_general(ch, w, p, t, user)?.ln_1p())
}

/// Self-interference plus noise covariance `rho^2 sum G^H w w^H G + sigma^2 I`.
pub fn si_noise_covariance(ch: &ChannelSet, w: &Beamformers) -> CMat {
    let n = ch.n_antennas;
    let mut phi = CMat::identity(n, n) * Complex64::new(ch.noise_power, 0.0);
    if ch.rho_sq > 0.0 {
        let gh = ch.g_si.adjoint();
        for v in w.iter() {
            add_outer(&mut phi, &(&gh * v), ch.rho_sq);
        }
    }
    phi
}

/// Interference covariance seen when decoding uplink user `l`, with
/// (possibly relaxed) order weights `beta[(l, m)]`.
pub fn ul_covariance(ch: &ChannelSet, w: &Beamformers, p: &[f64], beta: &DMatrix<f64>, l: usize) -> CMat {
    let mut psi = si_noise_covariance(ch, w);
    for (m, h) in ch.h_ul.iter().enumerate() {
        let wgt = beta[(l, m)] * p[m] * p[m];
        if m != l && wgt != 0.0 {
            add_outer(&mut psi, h, wgt);
        }
    }
    psi
}

pub fn ul_sinr_weighted(ch: &ChannelSet, w: &Beamformers, p: &[f64], beta: &DMatrix<f64>, l: usize) -> Result<f64> {
    let psi = ul_covariance(ch, w, p, beta, l);
    let h = &ch.h_ul[l];
    let x = solve_hpd(&psi, h)?;
    Ok(p[l] * p[l] * inner(h, &x).re)
}

fn check_ul(ch: &ChannelSet, p: &[f64], order: &DecodingOrder) -> Result<()> {
    if p.len() != ch.n_uplink() || order.size() != ch.n_uplink() {
        return Err(Error::Dimension("uplink sizes differ".into()));
    }
    if !order.violations().is_empty() {
        return Err(Error::NotBinary);
    }
    Ok(())
}

pub fn ul_rate(ch: &ChannelSet, w: &Beamformers, p: &[f64], order: &DecodingOrder, l: usize) -> Result<f64> {
    check_ul(ch, p, order)?;
    Ok(ul_sinr_weighted(ch, w, p, &order.0, l)?.ln_1p())
}

pub fn ul_rates(ch: &ChannelSet, w: &Beamformers, p: &[f64], order: &DecodingOrder) -> Result<Vec<f64>> {
    check_ul(ch, p, order)?;
    (0..ch.n_uplink()).map(|l| Ok(ul_sinr_weighted(ch, w, p, &order.0, l)?.ln_1p())).collect()
}

/// `ln det(I + Phi^{-1} sum_m p_m^2 h_m h_m^H)`, independent of decoding order.
pub fn ul_sum_rate_oracle(ch: &ChannelSet, w: &Beamformers, p: &[f64]) -> Result<f64> {
    let phi = si_noise_covariance(ch, w);
    let mut total = phi.clone();
    for (h, &pm) in ch.h_ul.iter().zip(p) {
        add_outer(&mut total, h, pm * pm);
    }
    Ok(ln_det_hpd(&total)? - ln_det_hpd(&phi)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    /// `dl[zone][k]`, nats/s/Hz
    pub dl: Vec<Vec<f64>>,
    pub ul: Vec<f64>,
    pub dl_sum: f64,
    pub ul_sum: f64,
    pub total: f64,
    pub qos_dl: Vec<Vec<bool>>,
    pub qos_ul: Vec<bool>,
}

/// Slack, in nats, when comparing a rate to its threshold.
pub const QOS_TOL: f64 = 1e-5;

impl RateReport {
    pub fn from_rates(dl: Vec<Vec<f64>>, ul: Vec<f64>, r_dl: f64, r_ul: f64) -> Self {
        let dl_sum = dl.iter().flatten().sum();
        let ul_sum = ul.iter().sum();
        let qos_dl = dl.iter().map(|z| z.iter().map(|&r| r >= r_dl - QOS_TOL).collect()).collect();
        let qos_ul = ul.iter().map(|&r| r >= r_ul - QOS_TOL).collect();
        RateReport { dl, ul, dl_sum, ul_sum, total: dl_sum + ul_sum, qos_dl, qos_ul }
    }

    pub fn qos_ok(&self) -> bool {
        self.qos_dl.iter().flatten().all(|&b| b) && self.qos_ul.iter().all(|&b| b)
    }

    /// Downlink-to-uplink rate ratio; infinite when the uplink carries nothing.
    pub fn durr(&self) -> f64 {
        if self.ul_sum > 0.0 {
            self.dl_sum / self.ul_sum
        } else {
            f64::INFINITY
        }
    }

    pub fn min_dl(&self) -> f64 {
        self.dl.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_ul(&self) -> f64 {
        self.ul.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn total_se_with(
    ch: &ChannelSet,
    w: &Beamformers,
    p: &[f64],
    assoc: &Association,
    r_dl: f64,
    r_ul: f64,
    model: DlModel,
) -> Result<RateReport> {
    let dl = dl_sinrs(ch, w, p, &assoc.pairing, model)?
        .into_iter()
        .map(|z| z.into_iter().map(f64::ln_1p).collect())
        .collect();
    let ul = ul_rates(ch, w, p, &assoc.order)?;
    Ok(RateReport::from_rates(dl, ul, r_dl, r_ul))
}

pub fn total_se_and_qos(ch: &ChannelSet, w: &Beamformers, p: &[f64], assoc: &Association, config: &SystemConfig) -> Result<RateReport> {
    total_se_with(ch, w, p, assoc, config.rate_threshold_dl, config.rate_threshold_ul, DlModel::Noma)
}

pub fn nats_to_bits(x: f64) -> f64 {
    x / std::f64::consts::LN_2
}

pub fn bits_to_nats(x: f64) -> f64 {
    x * std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::enumerate_associations;
    use crate::channel::{draw_channels, place_users};
    use crate::rng::{stream, Domain};
    use itertools::Itertools;
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn instance(seed: u64, cfg: &SystemConfig) -> ChannelSet {
        draw_channels(&place_users(cfg, seed).unwrap(), cfg, seed).unwrap()
    }

    fn random_point(ch: &ChannelSet, cfg: &SystemConfig, seed: u64) -> (Beamformers, Vec<f64>) {
        let mut rng = stream(seed, Domain::Property, 3, 3);
        let mut w = Beamformers::zeros(ch.n_zones(), ch.users_per_zone(), ch.n_antennas);
        for v in w.w.iter_mut().flatten() {
            for x in v.iter_mut() {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *x = Complex64::new(re, im);
            }
        }
        let s = (cfg.p_bs_max * rng.random::<f64>() / w.total_power()).sqrt();
        let w = w.scaled(s);
        let p = cfg.p_ul_max.iter().map(|&pm| pm.sqrt() * rng.random::<f64>()).collect();
        (w, p)
    }

    /// Scalar re-derivation of the two-zone formulas, written directly from the
    /// model definitions with explicit loops over every beam.
    fn oracle_dl(ch: &ChannelSet, w: &Beamformers, p: &[f64], perm: &[usize]) -> Vec<Vec<f64>> {
        let kk = perm.len();
        let g = |h: &CVec, v: &CVec| -> f64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..h.len() {
                acc += h[n].conj() * v[n];
            }
            acc.norm_sqr()
        };
        let cci = |zone: usize, k: usize| -> f64 {
            (0..p.len()).map(|l| p[l] * p[l] * ch.g_cci[l][zone][k].norm_sqr()).sum()
        };
        let mut inner_r = vec![0.0; kk];
        let mut outer_r = vec![0.0; kk];
        for k in 0..kk {
            let h = &ch.h_dl[0][k];
            let mut den = ch.noise_power + cci(0, k);
            for k2 in 0..kk {
                if k2 != k {
                    den += g(h, &w.w[0][k2]);
                }
            }
            for j in 0..kk {
                if perm[k] != j {
                    den += g(h, &w.w[1][j]);
                }
            }
            inner_r[k] = (1.0 + g(h, &w.w[0][k]) / den).ln();
        }
        for j in 0..kk {
            let k = perm.iter().position(|&x| x == j).unwrap();
            let h1 = &ch.h_dl[0][k];
            let h2 = &ch.h_dl[1][j];
            let mut d1 = ch.noise_power + cci(0, k);
            let mut d2 = ch.noise_power + cci(1, j);
            for k2 in 0..kk {
                d1 += g(h1, &w.w[0][k2]);
                d2 += g(h2, &w.w[0][k2]);
            }
            for j2 in 0..kk {
                if j2 != j {
                    d1 += g(h1, &w.w[1][j2]);
                    d2 += g(h2, &w.w[1][j2]);
                }
            }
            let s = (g(h1, &w.w[1][j]) / d1).min(g(h2, &w.w[1][j]) / d2);
            outer_r[j] = (1.0 + s).ln();
        }
        vec![inner_r, outer_r]
    }

    #[test]
    fn dl_rates_match_scalar_oracle() {
        let cfg = SystemConfig::default();
        for seed in 0..20 {
            let ch = instance(seed, &cfg);
            let (w, p) = random_point(&ch, &cfg, seed);
            for perm in (0..2).permutations(2) {
                let pairing = PairingMatrix::from_permutation(&perm);
                let want = oracle_dl(&ch, &w, &p, &perm);
                for zone in 0..2 {
                    for k in 0..2 {
                        let got = dl_rate(&ch, &w, &p, &pairing, DlUser { zone, index: k }).unwrap();
                        assert!((got - want[zone][k]).abs() <= 1e-12 * want[zone][k].abs().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn rates_reject_relaxed_association() {
        let cfg = SystemConfig::default();
        let ch = instance(1, &cfg);
        let (w, p) = random_point(&ch, &cfg, 1);
        let relaxed = PairingMatrix::uniform(2);
        assert!(matches!(dl_rate(&ch, &w, &p, &relaxed, DlUser { zone: 0, index: 0 }), Err(Error::NotBinary)));
        let o = DecodingOrder(DMatrix::from_element(2, 2, 0.5));
        assert!(matches!(ul_rate(&ch, &w, &p, &o, 0), Err(Error::NotBinary)));
    }

    #[test]
    fn single_user_without_interference() {
        // one antenna, one user, no uplink power, no SI: SINR = |h w|^2 / sigma^2
        let cfg = SystemConfig::default();
        let mut ch = instance(2, &cfg);
        ch.rho_sq = 0.0;
        let w = Beamformers::matched(&ch, cfg.p_bs_max);
        let p = vec![0.0; ch.n_uplink()];
        let mut w_single = Beamformers::zeros(2, 2, ch.n_antennas);
        w_single.w[0][0] = w.w[0][0].clone();
        let got = dl_rate(&ch, &w_single, &p, &PairingMatrix::identity(2), DlUser { zone: 0, index: 0 }).unwrap();
        let want = (1.0 + inner(&ch.h_dl[0][0], &w.w[0][0]).norm_sqr() / ch.noise_power).ln();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn general_tensor_reproduces_two_zone_rates() {
        let cfg = SystemConfig::default();
        for seed in 0..10 {
            let ch = instance(seed, &cfg);
            let (w, p) = random_point(&ch, &cfg, seed + 100);
            for a in enumerate_associations(2, 1).unwrap() {
                let t = AssociationTensor::from_pairing(&a.pairing).unwrap();
                for zone in 0..2 {
                    for k in 0..2 {
                        let u = DlUser { zone, index: k };
                        let x = dl_rate(&ch, &w, &p, &a.pairing, u).unwrap();
                        let y = dl_rate_general(&ch, &w, &p, &t, u).unwrap();
                        assert!((x - y).abs() <= 1e-12 * x.max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn durr_example() {
        let r = RateReport::from_rates(vec![vec![4.0], vec![2.0]], vec![1.0, 2.0], 0.0, 0.0);
        assert!((r.durr() - 2.0).abs() < 1e-15);
        assert_eq!(r.total, 9.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn ul_sum_is_order_invariant(seed in any::<u64>(), l in 2usize..4) {
            let mut cfg = SystemConfig::default();
            cfg.n_uplink = l;
            cfg.p_ul_max = vec![cfg.p_ul_max[0]; l];
            let ch = instance(seed, &cfg);
            let (w, p) = random_point(&ch, &cfg, seed);
            let oracle = ul_sum_rate_oracle(&ch, &w, &p).unwrap();
            for seq in (0..l).permutations(l) {
                let o = DecodingOrder::from_sequence(&seq);
                let s: f64 = ul_rates(&ch, &w, &p, &o).unwrap().iter().sum();
                prop_assert!((s - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "{} vs {}", s, oracle);
            }
        }

        #[test]
        fn rates_are_nonnegative_and_finite(seed in any::<u64>()) {
            let cfg = SystemConfig::default();
            let ch = instance(seed, &cfg);
            let (w, p) = random_point(&ch, &cfg, seed ^ 1);
            for a in enumerate_associations(2, 2).unwrap() {
                let r = total_se_and_qos(&ch, &w, &p, &a, &cfg).unwrap();
                prop_assert!(r.dl.iter().flatten().chain(r.ul.iter()).all(|x| x.is_finite() && *x >= 0.0));
            }
        }

        #[test]
        fn zero_beam_means_zero_rate(seed in any::<u64>()) {
            let cfg = SystemConfig::default();
            let ch = instance(seed, &cfg);
            let (mut w, p) = random_point(&ch, &cfg, seed ^ 2);
            w.w[0][1] = CVec::zeros(ch.n_antennas);
            let r = dl_rate(&ch, &w, &p, &PairingMatrix::identity(2), DlUser { zone: 0, index: 1 }).unwrap();
            prop_assert_eq!(r, 0.0);
        }
    }
}
