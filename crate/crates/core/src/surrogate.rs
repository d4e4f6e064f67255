//! Concave minorants and convex majorants used to build the convex subproblems.
//!
//! Each surrogate is tangent to its target at the reference point and bounds it
//! globally from the safe side.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{inner, psd_factor_rows, row_apply, solve_hpd, CVec};
use crate::rates::{inner_interference, outer_interference, sic_interference, ul_covariance, Beamformers};

/// Small offset keeping `|h^H w|^2 / (alpha + eps)` finite at `alpha = 0`.
pub const PAIRING_EPS: f64 = 1e-3;
/// Smoothing sharpness of the log-sum-exp absolute value.
pub const LSE_SHARPNESS: f64 = 20.0;
/// Trust-region floor on linearized channel gains.
pub const TRUST_DELTA: f64 = 1e-6;
/// Relative eigenvalue clipping threshold when factoring PSD matrices.
pub const EIG_CLIP: f64 = 1e-10;

/// Coefficients `(A, B)` of the tangent `A + B omega` to `ln(1 + 1/omega)`.
pub fn log_minorant(omega_ref: f64) -> Result<(f64, f64)> {
    if !(omega_ref > 0.0) || !omega_ref.is_finite() {
        return Err(Error::Domain(format!("omega reference must be positive, got {omega_ref}")));
    }
    let a = (1.0 / omega_ref).ln_1p() + 1.0 / (omega_ref + 1.0);
    let b = -1.0 / (omega_ref * (omega_ref + 1.0));
    Ok((a, b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinearizationKind {
    /// Inner user's own link, real-part form after phase rotation.
    InnerOwn,
    /// Outer user's own link, real-part form after phase rotation.
    OuterOwn,
    /// SIC link at an inner user, divided by `alpha + eps`.
    PairedSic,
    /// SIC link for a fixed pairing, complex form.
    FixedSic,
}

/// Affine-in-`(w, alpha)` minorant of `|h^H w|^2` (or `|h^H w|^2/(alpha+eps)`).
///
/// `value = 2 Re(conj(z) h^H w) / d - |z|^2 (alpha + eps) / d^2` for the
/// pairing-weighted kind with `d = alpha_ref + eps`; otherwise
/// `value = 2 Re(conj(z) h^H w) - |z|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadLinearization {
    pub kind: LinearizationKind,
    pub z: Complex64,
    pub denom: f64,
    pub eps: f64,
}

impl QuadLinearization {
    /// Coefficient multiplying `h^H w` inside `Re(.)`: value has the term `2 Re(conj(z) h^H w) / d`.
    pub fn gain_coeff(&self) -> Complex64 {
        self.z.conj() * (2.0 / self.denom)
    }

    /// Constant part, and coefficient on alpha (zero unless pairing-weighted).
    pub fn affine_rest(&self) -> (f64, f64) {
        let z2 = self.z.norm_sqr();
        match self.kind {
            LinearizationKind::PairedSic => {
                let d2 = self.denom * self.denom;
                (-z2 * self.eps / d2, -z2 / d2)
            }
            _ => (-z2, 0.0),
        }
    }

    pub fn value(&self, h: &CVec, w: &CVec, alpha: f64) -> f64 {
        let (c0, ca) = self.affine_rest();
        (self.gain_coeff() * inner(h, w)).re + c0 + ca * alpha
    }
}

/// Rotates `w` by a unit phase so that `h^H w` is real and nonnegative.
pub fn rotate_to_real(h: &CVec, w: &CVec) -> CVec {
    let x = inner(h, w);
    if x.norm() == 0.0 {
        return w.clone();
    }
    w * (x.conj() / x.norm())
}

pub fn linearize_quadratic(h: &CVec, w_ref: &CVec, kind: LinearizationKind, alpha_ref: f64, eps: f64) -> Result<QuadLinearization> {
    let x = inner(h, w_ref);
    match kind {
        LinearizationKind::InnerOwn | LinearizationKind::OuterOwn => {
            if !(x.re > 0.0) {
                return Err(Error::DegenerateReference("own-link gain must have positive real part".into()));
            }
            Ok(QuadLinearization { kind, z: Complex64::new(x.re, 0.0), denom: 1.0, eps })
        }
        LinearizationKind::FixedSic => {
            if x.norm() == 0.0 {
                return Err(Error::DegenerateReference("zero effective channel".into()));
            }
            Ok(QuadLinearization { kind, z: x, denom: 1.0, eps })
        }
        LinearizationKind::PairedSic => {
            if x.norm() == 0.0 {
                return Err(Error::DegenerateReference("zero effective channel".into()));
            }
            if !(alpha_ref + eps > 0.0) {
                return Err(Error::Domain("alpha + eps must be positive".into()));
            }
            Ok(QuadLinearization { kind, z: x, denom: alpha_ref + eps, eps })
        }
    }
}

/// Coefficients `(cx, cz)` of the convex majorant `cx x^2 + cz z^2 >= x z`,
/// tight at the reference. References are floored to keep the ratio finite.
pub fn product_majorant(x_ref: f64, z_ref: f64, floor: f64) -> (f64, f64) {
    let x = x_ref.max(floor);
    let z = z_ref.max(floor);
    (z / (2.0 * x), x / (2.0 * z))
}

/// Minorant of one uplink user's rate, concave in `(w, p)`:
/// `a_tilde + lin p_l - Phi(w, p)` with
/// `Phi = p_l^2 Lambda_l + sum_{m != l} beta_lm p_m^2 Lambda_m + rho^2 sum ||F G^H w||^2 + noise_trace`.
#[derive(Clone, Debug)]
pub struct UlMinorant {
    pub user: usize,
    pub sinr_ref: f64,
    pub a_tilde: f64,
    pub lin: f64,
    pub lambda: Vec<f64>,
    /// Rows of `F` with `Xi = F^H F`.
    pub xi_rows: Vec<CVec>,
    pub rho_sq: f64,
    pub noise_trace: f64,
}

impl UlMinorant {
    /// Coefficient vectors `q_r` with `(F G^H w)_r = sum_n q_rn w_n`.
    pub fn si_rows(&self, ch: &ChannelSet) -> Vec<CVec> {
        let gc = ch.g_si.map(|x| x.conj());
        self.xi_rows.iter().map(|r| &gc * r).collect()
    }

    pub fn phi(&self, ch: &ChannelSet, w: &Beamformers, p: &[f64], beta: &DMatrix<f64>) -> f64 {
        let l = self.user;
        p[l] * p[l] * self.lambda[l] + self.noise_trace + self.phi_others(ch, w, p, beta)
    }

    /// `Phi` without the user's own term and the noise trace.
    pub fn phi_others(&self, ch: &ChannelSet, w: &Beamformers, p: &[f64], beta: &DMatrix<f64>) -> f64 {
        let l = self.user;
        let mut s = 0.0;
        for (m, &lam) in self.lambda.iter().enumerate() {
            if m != l {
                s += beta[(l, m)] * p[m] * p[m] * lam;
            }
        }
        if self.rho_sq > 0.0 {
            for q in self.si_rows(ch) {
                for v in w.iter() {
                    s += self.rho_sq * row_apply(&q, v).norm_sqr();
                }
            }
        }
        s
    }

    pub fn value(&self, ch: &ChannelSet, w: &Beamformers, p: &[f64], beta: &DMatrix<f64>) -> f64 {
        self.a_tilde + self.lin * p[self.user] - self.phi(ch, w, p, beta)
    }
}

/// `Xi = Psi^{-1} - (p^2 h h^H + Psi)^{-1}` in closed rank-one form.
pub fn ul_xi(ch: &ChannelSet, w: &Beamformers, p: &[f64], beta: &DMatrix<f64>, l: usize) -> Result<(crate::linalg::CMat, CVec, f64)> {
    let psi = ul_covariance(ch, w, p, beta, l);
    let h = &ch.h_ul[l];
    let x = solve_hpd(&psi, h)?;
    let gamma = p[l] * p[l] * inner(h, &x).re;
    let s = p[l] * p[l] / (1.0 + gamma);
    let mut xi = crate::linalg::CMat::zeros(h.len(), h.len());
    crate::linalg::add_outer(&mut xi, &x, s);
    Ok((xi, x, gamma))
}

pub fn ul_minorant(ch: &ChannelSet, w: &Beamformers, p: &[f64], beta: &DMatrix<f64>, l: usize) -> Result<UlMinorant> {
    let (xi, x, gamma) = ul_xi(ch, w, p, beta, l)?;
    let xi_rows = psd_factor_rows(&xi, EIG_CLIP)?;
    let lambda = ch.h_ul.iter().map(|hm| inner(hm, &(&xi * hm)).re.max(0.0)).collect();
    let noise_trace = ch.noise_power * xi.diagonal().iter().map(|d| d.re).sum::<f64>();
    let lin = 2.0 * p[l] * inner(&ch.h_ul[l], &x).re;
    Ok(UlMinorant {
        user: l,
        sinr_ref: gamma,
        a_tilde: gamma.ln_1p() - gamma,
        lin,
        lambda,
        xi_rows,
        rho_sq: ch.rho_sq,
        noise_trace,
    })
}

/// Concave lower bound on an uplink user's MMSE-SIC SINR
/// `gamma = p_l^2 h^H Psi^{-1} h`, from the tangent of the jointly convex
/// matrix-fractional function at `(p_ref, Psi_ref)`:
/// `gamma >= 2 p_ref a p_l - p_ref^2 x^H Psi x` with `x = Psi_ref^{-1} h`, `a = h^H x`.
/// Linear in the user's own amplitude, so large power steps stay admissible.
#[derive(Clone, Debug)]
pub struct UlSinrMinorant {
    pub user: usize,
    pub sinr_ref: f64,
    pub p_ref: f64,
    pub a: f64,
    /// `p_ref^2 |x^H h_m|^2` per uplink user
    pub lambda: Vec<f64>,
    /// `G x`: the SI term is `rho^2 p_ref^2 sum_u |(G x)^H w_u|^2`
    pub si_vec: CVec,
    /// `p_ref^2 sigma^2 ||x||^2`
    pub noise_term: f64,
    pub rho_sq: f64,
}

/// Amplitude floor for the expansion point; a silent user would make the
/// tangent identically zero.
pub const UL_REF_FLOOR: f64 = 1e-6;

impl UlSinrMinorant {
    /// Weighted interference part `p_ref^2 x^H (Psi - sigma^2 I) x`.
    pub fn interference(&self, w: &Beamformers, p: &[f64], beta: &DMatrix<f64>) -> f64 {
        let l = self.user;
        let mut s = 0.0;
        for (m, &lam) in self.lambda.iter().enumerate() {
            if m != l {
                s += beta[(l, m)] * p[m] * p[m] * lam;
            }
        }
        if self.rho_sq > 0.0 {
            let pr2 = self.p_ref * self.p_ref;
            for v in w.iter() {
                s += self.rho_sq * pr2 * inner(&self.si_vec, v).norm_sqr();
            }
        }
        s
    }

    pub fn value(&self, w: &Beamformers, p: &[f64], beta: &DMatrix<f64>) -> f64 {
        2.0 * self.p_ref * self.a * p[self.user] - self.noise_term - self.interference(w, p, beta)
    }
}

pub fn ul_sinr_minorant(ch: &ChannelSet, w: &Beamformers, p: &[f64], beta: &DMatrix<f64>, l: usize) -> Result<UlSinrMinorant> {
    let psi = ul_covariance(ch, w, p, beta, l);
    let h = &ch.h_ul[l];
    let x = solve_hpd(&psi, h)?;
    let a = inner(h, &x).re;
    let p_ref = p[l].abs().max(UL_REF_FLOOR);
    let pr2 = p_ref * p_ref;
    Ok(UlSinrMinorant {
        user: l,
        sinr_ref: pr2 * a,
        p_ref,
        a,
        lambda: ch.h_ul.iter().map(|hm| pr2 * inner(&x, hm).norm_sqr()).collect(),
        si_vec: &ch.g_si * &x,
        noise_term: pr2 * ch.noise_power * crate::linalg::norm_sqr(&x),
        rho_sq: ch.rho_sq,
    })
}

/// Smooth approximation of `|s|`, shifted to vanish at zero.
pub fn f_lse(s: f64, omega: f64) -> f64 {
    let a = s.abs();
    a + (-2.0 * omega * a).exp().ln_1p() / omega - std::f64::consts::LN_2 / omega
}

/// `(f_lse(s_ref), f_lse'(s_ref))`
pub fn lse_linearization(s_ref: f64, omega: f64) -> (f64, f64) {
    (f_lse(s_ref, omega), (omega * s_ref).tanh())
}

/// Largest value the smoothed separation can be required to reach at
/// integer-spaced row sums.
pub fn lse_target(omega: f64) -> f64 {
    1.0 - std::f64::consts::LN_2 / omega
}

/// `rho (v^2 - v)`: zero at binary points, negative in between.
pub fn penalty_value(v: f64, rho: f64) -> f64 {
    rho * (v * v - v)
}

/// Tangent of [`penalty_value`] at `v_ref`, evaluated at `v`.
pub fn penalty_linearized(v: f64, v_ref: f64, rho: f64) -> f64 {
    rho * ((2.0 * v_ref - 1.0) * v - v_ref * v_ref)
}

/// Smallest penalty weight making every near-binary point preferable, for
/// objective spread `gap` over `n` relaxed entries at distance `eps` from binary.
pub fn penalty_bound(eps: f64, n: usize, gap: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) || n == 0 || !(gap >= 0.0) {
        return Err(Error::Domain("need 0 < eps < 1, n > 0, gap >= 0".into()));
    }
    Ok(gap / (n as f64 * eps * (1.0 - eps)))
}

/// SINRs `[zone][k]` of the relaxed two-zone model: inner users see outer beams
/// weighted by `1 - alpha`, outer users are limited by every inner user's
/// `|h^H w|^2 / (alpha + eps)` SIC term.
pub fn relaxed_dl_sinrs(ch: &ChannelSet, w: &Beamformers, p: &[f64], alpha: &DMatrix<f64>, eps: f64) -> Vec<Vec<f64>> {
    let kk = ch.users_per_zone();
    let g = |h: &CVec, v: &CVec| inner(h, v).norm_sqr();
    let inner_users = (0..kk).map(|k| g(&ch.h_dl[0][k], &w.w[0][k]) / inner_interference(ch, w, p, alpha, k)).collect();
    let outer_users = (0..kk)
        .map(|j| {
            let own = g(&ch.h_dl[1][j], &w.w[1][j]) / outer_interference(ch, w, p, j);
            (0..kk).fold(own, |acc, k| {
                acc.min(g(&ch.h_dl[0][k], &w.w[1][j]) / ((alpha[(k, j)] + eps) * sic_interference(ch, w, p, k, j)))
            })
        })
        .collect();
    vec![inner_users, outer_users]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::DecodingOrder;
    use crate::channel::{draw_channels, place_users, SystemConfig};
    use crate::linalg::{inverse_hpd, CMat};
    use crate::rates::ul_sinr_weighted;
    use crate::rng::{stream, Domain};
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn cvec(rng: &mut crate::rng::Rng, n: usize, s: f64) -> CVec {
        CVec::from_fn(n, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(s * re, s * im)
        })
    }

    #[test]
    fn log_minorant_example() {
        let (a, b) = log_minorant(1.0).unwrap();
        assert!((a - (2f64.ln() + 0.5)).abs() < 1e-12);
        assert!((b + 0.5).abs() < 1e-12);
        assert!((a + b - 2f64.ln()).abs() < 1e-12);
        assert!(log_minorant(0.0).is_err());
        assert!(log_minorant(-1.0).is_err());
    }

    #[test]
    fn log_minorant_tangent_and_below() {
        let mut rng = stream(1, Domain::Property, 0, 0);
        for _ in 0..10_000 {
            let w0 = 10f64.powf(rng.random::<f64>() * 8.0 - 4.0);
            let (a, b) = log_minorant(w0).unwrap();
            let f = |x: f64| (1.0 / x).ln_1p();
            assert!((a + b * w0 - f(w0)).abs() <= 1e-8 * f(w0).max(1.0));
            let x = 10f64.powf(rng.random::<f64>() * 8.0 - 4.0);
            assert!(a + b * x <= f(x) + 1e-9 * f(x).max(1.0));
        }
    }

    #[test]
    fn quadratic_linearizations_tangent_and_below() {
        let mut rng = stream(2, Domain::Property, 0, 0);
        let n = 4;
        for _ in 0..10_000 {
            let h = cvec(&mut rng, n, 1.0);
            let w_ref = rotate_to_real(&h, &cvec(&mut rng, n, 1.0));
            let w = cvec(&mut rng, n, 2.0);
            let exact = |v: &CVec| inner(&h, v).norm_sqr();
            for kind in [LinearizationKind::InnerOwn, LinearizationKind::FixedSic] {
                let q = linearize_quadratic(&h, &w_ref, kind, 0.0, PAIRING_EPS).unwrap();
                assert!((q.value(&h, &w_ref, 0.0) - exact(&w_ref)).abs() <= 1e-8 * exact(&w_ref).max(1.0));
                assert!(q.value(&h, &w, 0.0) <= exact(&w) + 1e-9 * exact(&w).max(1.0));
            }
            let a_ref: f64 = rng.random();
            let a: f64 = rng.random();
            let q = linearize_quadratic(&h, &w_ref, LinearizationKind::PairedSic, a_ref, PAIRING_EPS).unwrap();
            let target = |v: &CVec, al: f64| exact(v) / (al + PAIRING_EPS);
            let t0 = target(&w_ref, a_ref);
            assert!((q.value(&h, &w_ref, a_ref) - t0).abs() <= 1e-8 * t0.max(1.0));
            let t = target(&w, a);
            assert!(q.value(&h, &w, a) <= t + 1e-9 * t.max(1.0));
        }
    }

    #[test]
    fn pairing_weighted_example() {
        // alpha_ref = 1, eps = 1e-3, |h^H w_ref|^2 = 4 -> value at reference = 4 / 1.001
        let h = CVec::from_vec(vec![Complex64::new(1.0, 0.0)]);
        let w = CVec::from_vec(vec![Complex64::new(2.0, 0.0)]);
        let q = linearize_quadratic(&h, &w, LinearizationKind::PairedSic, 1.0, 1e-3).unwrap();
        assert!((q.value(&h, &w, 1.0) - 3.996_003_996).abs() < 1e-8);
    }

    #[test]
    fn degenerate_reference_rejected() {
        let h = CVec::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let w = CVec::from_vec(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]);
        for kind in [LinearizationKind::InnerOwn, LinearizationKind::FixedSic, LinearizationKind::PairedSic] {
            assert!(matches!(linearize_quadratic(&h, &w, kind, 0.5, 1e-3), Err(Error::DegenerateReference(_))));
        }
    }

    #[test]
    fn product_majorant_bounds() {
        let mut rng = stream(3, Domain::Property, 0, 0);
        for _ in 0..10_000 {
            let (x0, z0) = (rng.random::<f64>() + 1e-3, rng.random::<f64>() * 5.0 + 1e-3);
            let (cx, cz) = product_majorant(x0, z0, 1e-9);
            assert!((cx * x0 * x0 + cz * z0 * z0 - x0 * z0).abs() < 1e-10);
            let (x, z) = (rng.random::<f64>(), rng.random::<f64>() * 5.0);
            assert!(cx * x * x + cz * z * z >= x * z - 1e-12);
        }
        let (cx, cz) = product_majorant(0.5, 2.0, 1e-9);
        assert!((cx * 0.25 + cz * 4.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lse_examples() {
        assert!((f_lse(1.0, 10.0) - 0.930_69).abs() < 1e-5);
        assert!(f_lse(1.0, 10.0) <= 1.0);
        assert!(f_lse(0.0, 20.0).abs() < 1e-15);
        let (v, d) = lse_linearization(0.3, 20.0);
        assert!((d - (6.0f64).tanh()).abs() < 1e-15);
        assert!((v - f_lse(0.3, 20.0)).abs() < 1e-15);
    }

    #[test]
    fn lse_linearization_is_minorant() {
        let mut rng = stream(4, Domain::Property, 0, 0);
        for _ in 0..10_000 {
            let s0 = rng.random::<f64>() * 6.0 - 3.0;
            let s = rng.random::<f64>() * 6.0 - 3.0;
            let (v, d) = lse_linearization(s0, LSE_SHARPNESS);
            assert!(v + d * (s - s0) <= f_lse(s, LSE_SHARPNESS) + 1e-12);
            assert!(f_lse(s, LSE_SHARPNESS) <= s.abs());
        }
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(penalty_value(0.0, 10.0), 0.0);
        assert_eq!(penalty_value(1.0, 10.0), 0.0);
        assert!((penalty_value(0.5, 500.0) + 125.0).abs() < 1e-12);
        assert!((penalty_linearized(0.5, 0.5, 500.0) + 125.0).abs() < 1e-12);
        let b = penalty_bound(1e-2, 20, 10.0).unwrap();
        assert!((b - 50.505_050_5).abs() < 1e-6);
        assert!(penalty_bound(0.0, 20, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn penalty_linearization_is_minorant(v in 0.0f64..1.0, v0 in 0.0f64..1.0, rho in 0.1f64..1e4) {
            prop_assert!(penalty_linearized(v, v0, rho) <= penalty_value(v, rho) + 1e-9 * rho);
            prop_assert!((penalty_linearized(v0, v0, rho) - penalty_value(v0, rho)).abs() <= 1e-9 * rho);
            prop_assert!(penalty_value(v, rho) <= 0.0);
        }

        #[test]
        fn penalty_bound_scales_inversely(e1 in 1e-4f64..0.4, gap in 0.1f64..100.0) {
            let e2 = e1 / 10.0;
            let r = penalty_bound(e2, 10, gap).unwrap() / penalty_bound(e1, 10, gap).unwrap();
            prop_assert!((r - 10.0 * (1.0 - e1) / (1.0 - e2)).abs() < 1e-9);
        }
    }

    fn ul_setup(seed: u64, rho_zero: bool) -> (ChannelSet, Beamformers, Vec<f64>, DMatrix<f64>) {
        let cfg = SystemConfig::default();
        let mut ch = draw_channels(&place_users(&cfg, seed).unwrap(), &cfg, seed).unwrap();
        if rho_zero {
            ch.rho_sq = 0.0;
        }
        let w = Beamformers::matched(&ch, cfg.p_bs_max * 0.5);
        let p: Vec<f64> = cfg.p_ul_max.iter().map(|x| x.sqrt() * 0.5).collect();
        (ch, w, p, DecodingOrder::from_sequence(&[1, 0]).0)
    }

    #[test]
    fn xi_matches_difference_of_inverses() {
        for seed in 0..10 {
            let (ch, w, p, beta) = ul_setup(seed, false);
            for l in 0..2 {
                let (xi, _, _) = ul_xi(&ch, &w, &p, &beta, l).unwrap();
                let psi = ul_covariance(&ch, &w, &p, &beta, l);
                let mut full = psi.clone();
                crate::linalg::add_outer(&mut full, &ch.h_ul[l], p[l] * p[l]);
                let want: CMat = inverse_hpd(&psi).unwrap() - inverse_hpd(&full).unwrap();
                assert!((&xi - &want).norm() <= 1e-6 * want.norm(), "{} vs {}", (&xi - &want).norm(), want.norm());
            }
        }
    }

    #[test]
    fn ul_minorant_tangent() {
        for seed in 0..20 {
            let (ch, w, p, beta) = ul_setup(seed, false);
            for l in 0..2 {
                let m = ul_minorant(&ch, &w, &p, &beta, l).unwrap();
                let exact = ul_sinr_weighted(&ch, &w, &p, &beta, l).unwrap().ln_1p();
                assert!((m.value(&ch, &w, &p, &beta) - exact).abs() <= 1e-8 * exact.max(1.0));
            }
        }
    }

    #[test]
    fn ul_minorant_dominated_single_user_no_si() {
        // one uplink user, no residual SI, 100 random perturbations
        let cfg = SystemConfig { n_uplink: 1, p_ul_max: vec![SystemConfig::default().p_ul_max[0]], ..SystemConfig::default() };
        let mut ch = draw_channels(&place_users(&cfg, 8).unwrap(), &cfg, 8).unwrap();
        ch.rho_sq = 0.0;
        let w = Beamformers::matched(&ch, cfg.p_bs_max);
        let p = vec![cfg.p_ul_max[0].sqrt() * 0.5];
        let beta = DMatrix::zeros(1, 1);
        let m = ul_minorant(&ch, &w, &p, &beta, 0).unwrap();
        let mut rng = stream(6, Domain::Property, 0, 0);
        for _ in 0..100 {
            let q = vec![cfg.p_ul_max[0].sqrt() * rng.random::<f64>()];
            let exact = ul_sinr_weighted(&ch, &w, &q, &beta, 0).unwrap().ln_1p();
            assert!(m.value(&ch, &w, &q, &beta) <= exact + 1e-9 * exact.max(1.0));
        }
    }

    #[test]
    fn ul_sinr_minorant_tangent() {
        for seed in 0..20 {
            let (ch, w, p, beta) = ul_setup(seed, seed % 2 == 0);
            for l in 0..2 {
                let m = ul_sinr_minorant(&ch, &w, &p, &beta, l).unwrap();
                let exact = ul_sinr_weighted(&ch, &w, &p, &beta, l).unwrap();
                assert!((m.value(&w, &p, &beta) - exact).abs() <= 1e-8 * exact.max(1.0));
                assert!((m.sinr_ref - exact).abs() <= 1e-8 * exact.max(1.0));
            }
        }
    }

    #[test]
    fn ul_sinr_minorant_dominated() {
        let mut rng = stream(9, Domain::Property, 0, 0);
        let mut checked = 0;
        for seed in 0..20 {
            let (ch, w, p, _) = ul_setup(seed, false);
            let beta_ref = DMatrix::from_fn(2, 2, |r, c| if r == c { 0.0 } else { rng.random::<f64>() });
            for l in 0..2 {
                let m = ul_sinr_minorant(&ch, &w, &p, &beta_ref, l).unwrap();
                for _ in 0..250 {
                    let mut w2 = w.clone();
                    for v in w2.w.iter_mut().flatten() {
                        *v += cvec(&mut rng, v.len(), v.norm());
                    }
                    let q: Vec<f64> = p.iter().map(|x| x * 2.0 * rng.random::<f64>()).collect();
                    let b = DMatrix::from_fn(2, 2, |r, c| if r == c { 0.0 } else { rng.random::<f64>() });
                    let exact = ul_sinr_weighted(&ch, &w2, &q, &b, l).unwrap();
                    assert!(m.value(&w2, &q, &b) <= exact + 1e-8 * exact.max(1.0));
                    checked += 1;
                }
            }
        }
        assert_eq!(checked, 10_000);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn ul_minorant_dominated(seed in any::<u64>(), scale in 0.0f64..1.5) {
            let (ch, w, p, beta) = ul_setup(seed % 50, false);
            let mut rng = stream(seed, Domain::Property, 7, 0);
            let l = (seed % 2) as usize;
            let m = ul_minorant(&ch, &w, &p, &beta, l).unwrap();
            let mut w2 = w.clone();
            for v in w2.w.iter_mut().flatten() {
                *v += cvec(&mut rng, v.len(), scale * v.norm() / 2.0);
            }
            let q: Vec<f64> = p.iter().map(|x| x * 2.0 * rng.random::<f64>()).collect();
            let exact = ul_sinr_weighted(&ch, &w2, &q, &beta, l).unwrap().ln_1p();
            prop_assert!(m.value(&ch, &w2, &q, &beta) <= exact + 1e-8 * exact.max(1.0));
        }
    }
}
