//! Convex subproblems solved at each outer iteration.
//!
//! Everything here works on a [`Instance`]: channels rescaled so that noise
//! power and every power budget equal one. SINRs are unchanged by the
//! rescaling, and the conic solver sees well-conditioned data.

mod builder;

pub use builder::{build_program, Counts, Layout, Objective, ProgramOptions, Subproblem};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::association::{round_and_project, Association, PairingMatrix};
use crate::channel::{ChannelSet, SystemConfig};
use crate::conic::SolverSettings;
use crate::error::{Error, Result};
use crate::linalg::{inner, CVec};
use crate::rates::{
    inner_interference, outer_interference, sic_interference, total_se_with, Beamformers, DlModel, RateReport,
};
use crate::surrogate::{relaxed_dl_sinrs, rotate_to_real, LSE_SHARPNESS, PAIRING_EPS, TRUST_DELTA};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    pub pairing_eps: f64,
    pub lse_sharpness: f64,
    pub trust_delta: f64,
    /// Absolute objective change (nats) declaring convergence.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Cap on feasibility-restoration (eta) iterations.
    pub max_init_iters: usize,
    pub init_retries: usize,
    /// Iterations spent in each of the two relaxed initialization stages.
    pub init_stage_iters: usize,
    /// Floor applied to product-majorant references.
    pub majorant_floor: f64,
    pub solver: SolverSettings,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            pairing_eps: PAIRING_EPS,
            lse_sharpness: LSE_SHARPNESS,
            trust_delta: TRUST_DELTA,
            tolerance: 1e-3,
            max_iters: 100,
            max_init_iters: 30,
            init_retries: 5,
            init_stage_iters: 10,
            majorant_floor: 1e-8,
            solver: SolverSettings::default(),
        }
    }
}

impl SolverParams {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        SolverParams { tolerance: cfg.tolerance, max_iters: cfg.max_iters, ..SolverParams::default() }
    }
}

/// A problem instance in normalized units.
#[derive(Clone, Debug)]
pub struct Instance {
    /// Noise power 1, BS budget 1, every uplink budget 1.
    pub ch: ChannelSet,
    pub physical: ChannelSet,
    pub w_scale: f64,
    pub p_scale: Vec<f64>,
    pub r_dl: f64,
    pub r_ul: f64,
    pub n: usize,
    pub k: usize,
    pub l: usize,
}

impl Instance {
    pub fn new(physical: &ChannelSet, cfg: &SystemConfig) -> Result<Self> {
        physical.validate()?;
        if physical.n_zones() != 2 {
            return Err(Error::Config("the optimizer supports exactly two zones".into()));
        }
        if cfg.p_ul_max.len() != physical.n_uplink() {
            return Err(Error::Dimension("one uplink budget per uplink user".into()));
        }
        if !(cfg.p_bs_max > 0.0) || cfg.p_ul_max.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Config("power budgets must be positive".into()));
        }
        let sigma = physical.noise_power.sqrt();
        let w_scale = cfg.p_bs_max.sqrt();
        let p_scale: Vec<f64> = cfg.p_ul_max.iter().map(|p| p.sqrt()).collect();
        let cw = Complex64::new(w_scale / sigma, 0.0);
        let h_dl = physical.h_dl.iter().map(|z| z.iter().map(|h| h * cw).collect()).collect();
        let h_ul = physical.h_ul.iter().zip(&p_scale).map(|(h, s)| h * Complex64::new(s / sigma, 0.0)).collect();
        let g_cci = physical
            .g_cci
            .iter()
            .zip(&p_scale)
            .map(|(per_zone, s)| per_zone.iter().map(|u| u.iter().map(|g| g * (s / sigma)).collect()).collect())
            .collect();
        let ch = ChannelSet {
            n_antennas: physical.n_antennas,
            h_dl,
            h_ul,
            g_si: &physical.g_si * cw,
            g_cci,
            rho_sq: physical.rho_sq,
            noise_power: 1.0,
        };
        Ok(Instance {
            n: physical.n_antennas,
            k: physical.users_per_zone(),
            l: physical.n_uplink(),
            ch,
            physical: physical.clone(),
            w_scale,
            p_scale,
            r_dl: cfg.rate_threshold_dl,
            r_ul: cfg.rate_threshold_ul,
        })
    }

    pub fn to_physical(&self, w: &Beamformers, p: &[f64]) -> (Beamformers, Vec<f64>) {
        (w.scaled(self.w_scale), p.iter().zip(&self.p_scale).map(|(a, b)| a * b).collect())
    }

    pub fn to_normalized(&self, w: &Beamformers, p: &[f64]) -> (Beamformers, Vec<f64>) {
        (w.scaled(1.0 / self.w_scale), p.iter().zip(&self.p_scale).map(|(a, b)| a / b).collect())
    }

    pub fn report(&self, it: &Iterate, assoc: &Association, model: DlModel) -> Result<RateReport> {
        total_se_with(&self.ch, &it.w, &it.p, assoc, self.r_dl, self.r_ul, model)
    }
}

/// Operating point, relaxed or binary, in normalized units.
#[derive(Clone, Debug, PartialEq)]
pub struct Iterate {
    pub w: Beamformers,
    pub p: Vec<f64>,
    pub alpha: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    /// `[inner users..., outer users...]`
    pub omega: Vec<f64>,
    pub mu: DMatrix<f64>,
    pub nu: Vec<f64>,
}

impl Iterate {
    pub fn new(w: Beamformers, p: Vec<f64>, assoc: &Association) -> Self {
        let k = assoc.pairing.size();
        let l = assoc.order.size();
        Iterate {
            w,
            p,
            alpha: assoc.pairing.0.clone(),
            beta: assoc.order.0.clone(),
            omega: vec![1.0; 2 * k],
            mu: DMatrix::zeros(k, k),
            nu: vec![0.0; l],
        }
    }

    /// Matched beams at `0.9` of the budget and half-amplitude uplink powers.
    pub fn matched_start(inst: &Instance, assoc: &Association) -> Self {
        Iterate::new(Beamformers::matched(&inst.ch, 0.9), vec![0.5; inst.l], assoc)
    }

    pub fn association(&self) -> Association {
        Association::new(PairingMatrix(self.alpha.clone()), crate::association::DecodingOrder(self.beta.clone()))
    }

    pub fn rounded(&self) -> Association {
        let a = self.association();
        round_and_project(&a.pairing, &a.order)
    }

    /// Largest `|v^2 - v|` over pairing and order entries.
    pub fn binary_gap(&self) -> f64 {
        self.alpha.iter().chain(self.beta.iter()).fold(0.0_f64, |m, &v| m.max((v * v - v).abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// Pairing and order are decision variables in `[0, 1]`.
    Relaxed,
    /// Pairing and order are fixed binary matrices.
    Fixed(DlModel),
}

fn gain(h: &CVec, w: &CVec) -> f64 {
    inner(h, w).norm_sqr()
}

/// Makes the surrogate constraints tight at `it`: rotates each beam so its own
/// link gain is real, sets the product-majorant auxiliaries to their squares and
/// each `omega` to the reciprocal model SINR.
pub fn refresh(inst: &Instance, it: &mut Iterate, family: Family, dl: bool, eps: f64) -> Result<()> {
    let ch = &inst.ch;
    let k = inst.k;
    for z in 0..2 {
        for u in 0..k {
            it.w.w[z][u] = rotate_to_real(&ch.h_dl[z][u], &it.w.w[z][u]);
        }
    }
    for kk in 0..k {
        for j in 0..k {
            it.mu[(kk, j)] = gain(&ch.h_dl[0][kk], &it.w.w[1][j]);
        }
    }
    for (nu, p) in it.nu.iter_mut().zip(&it.p) {
        *nu = p * p;
    }
    if !dl {
        return Ok(());
    }
    let sinr = match family {
        Family::Relaxed => relaxed_dl_sinrs(ch, &it.w, &it.p, &it.alpha, eps),
        Family::Fixed(model) => fixed_dl_sinrs(inst, it, model),
    };
    for (z, zone) in sinr.iter().enumerate() {
        for (u, &s) in zone.iter().enumerate() {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::DegenerateReference(format!("zero link gain for user ({z}, {u})")));
            }
            it.omega[z * k + u] = 1.0 / s;
        }
    }
    Ok(())
}

/// Exact SINRs for a binary pairing stored in the iterate.
fn fixed_dl_sinrs(inst: &Instance, it: &Iterate, model: DlModel) -> Vec<Vec<f64>> {
    let ch = &inst.ch;
    let k = inst.k;
    let alpha = match model {
        DlModel::Noma => it.alpha.clone(),
        DlModel::NoSic => DMatrix::zeros(k, k),
    };
    let inner_users = (0..k).map(|u| gain(&ch.h_dl[0][u], &it.w.w[0][u]) / inner_interference(ch, &it.w, &it.p, &alpha, u)).collect();
    let outer_users = (0..k)
        .map(|j| {
            let own = gain(&ch.h_dl[1][j], &it.w.w[1][j]) / outer_interference(ch, &it.w, &it.p, j);
            match model {
                DlModel::NoSic => own,
                DlModel::Noma => match (0..k).find(|&u| it.alpha[(u, j)] > 0.5) {
                    Some(u) => own.min(gain(&ch.h_dl[0][u], &it.w.w[1][j]) / sic_interference(ch, &it.w, &it.p, u, j)),
                    None => own,
                },
            }
        })
        .collect();
    vec![inner_users, outer_users]
}

#[cfg(test)]
mod tests;
