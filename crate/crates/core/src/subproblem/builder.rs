use crate::conic::{ConicProgram, LinExpr};
use crate::error::Result;
use crate::linalg::CVec;
use crate::rates::DlModel;
use crate::surrogate::{
    f_lse, linearize_quadratic, log_minorant, lse_linearization, lse_target, product_majorant, ul_sinr_minorant,
    LinearizationKind, QuadLinearization, UlSinrMinorant,
};

use super::{Family, Instance, Iterate, SolverParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    SumRate,
    Downlink,
    Uplink,
    /// Maximize the smallest QoS margin.
    Eta,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProgramOptions {
    pub family: Family,
    pub objective: Objective,
    /// Penalty weight on `v^2 - v` for free pairing/order entries.
    pub penalty: Option<f64>,
    pub fix_alpha: bool,
    pub fix_beta: bool,
    pub dl: bool,
    pub ul: bool,
}

impl ProgramOptions {
    pub fn relaxed(objective: Objective) -> Self {
        ProgramOptions { family: Family::Relaxed, objective, penalty: None, fix_alpha: false, fix_beta: false, dl: true, ul: true }
    }

    pub fn fixed(model: DlModel, objective: Objective) -> Self {
        ProgramOptions { family: Family::Fixed(model), ..ProgramOptions::relaxed(objective) }
    }
}

/// Variable offsets. Beams are stored user-major (inner users first), each
/// complex coordinate as an adjacent (re, im) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub w: usize,
    pub p: usize,
    pub omega: usize,
    pub ul_gain: usize,
    pub ul_omega: usize,
    pub alpha: Option<usize>,
    pub lambda: Option<usize>,
    pub mu: Option<usize>,
    pub beta: Option<usize>,
    pub nu: Option<usize>,
    pub eta: Option<usize>,
}

impl Layout {
    pub fn w_re(&self, user: usize, coord: usize) -> usize {
        self.w + 2 * (user * self.n + coord)
    }

    fn mat(&self, base: Option<usize>, r: usize, c: usize, cols: usize) -> usize {
        base.expect("block present") + r * cols + c
    }

    pub fn alpha(&self, r: usize, c: usize) -> usize {
        self.mat(self.alpha, r, c, self.k)
    }

    pub fn lambda(&self, r: usize, c: usize) -> usize {
        self.mat(self.lambda, r, c, self.k)
    }

    pub fn mu(&self, r: usize, c: usize) -> usize {
        self.mat(self.mu, r, c, self.k)
    }

    pub fn beta(&self, r: usize, c: usize) -> usize {
        self.mat(self.beta, r, c, self.l)
    }

    pub fn nu(&self, m: usize) -> usize {
        self.nu.expect("block present") + m
    }

    /// `sum_n c_n w_{user,n}` as (real, imaginary) affine expressions.
    pub fn combine(&self, c: &CVec, user: usize) -> (LinExpr, LinExpr) {
        let mut re = LinExpr::zero();
        let mut im = LinExpr::zero();
        for (n, v) in c.iter().enumerate() {
            let x = self.w_re(user, n);
            re.push(x, v.re);
            re.push(x + 1, -v.im);
            im.push(x, v.im);
            im.push(x + 1, v.re);
        }
        (re, im)
    }

    /// `h^H w_user`
    pub fn hw(&self, h: &CVec, user: usize) -> (LinExpr, LinExpr) {
        self.combine(&h.map(|x| x.conj()), user)
    }
}

/// Symbol and constraint-group tallies in the standard complexity accounting:
/// complex beam coordinates count once, box bounds count twice per entry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub symbols: usize,
    pub constraints: usize,
}

#[derive(Clone, Debug)]
pub struct Subproblem {
    pub program: ConicProgram,
    pub layout: Layout,
    pub counts: Counts,
    pub options: ProgramOptions,
    /// Objective without the penalty term.
    pub rate_objective: LinExpr,
    /// Penalty linearization without its weight.
    pub penalty_shape: LinExpr,
    pub ul_minorants: Vec<UlSinrMinorant>,
    /// `(label, expression)` of every QoS row before the eta shift.
    pub qos: Vec<(String, LinExpr)>,
}

fn quad_expr(q: &QuadLinearization, hw: &(LinExpr, LinExpr), alpha_var: Option<usize>) -> LinExpr {
    let g = q.gain_coeff();
    let (c0, ca) = q.affine_rest();
    let mut e = hw.0.clone() * g.re + hw.1.clone() * (-g.im) + c0;
    if let Some(a) = alpha_var {
        e.push(a, ca);
    }
    e
}

fn push_pair(xs: &mut Vec<LinExpr>, pair: (LinExpr, LinExpr)) {
    xs.push(pair.0);
    xs.push(pair.1);
}

/// `x y <= e^2 - a` with `e = (s x + y / s) / 2` and `a` the tangent of
/// `(s x - y / s)^2 / 4`; tight at `(x0, y0)` for any `s > 0`, which is chosen
/// to balance the two factors.
fn bilinear_majorant(x: usize, y: usize, x0: f64, y0: f64) -> (LinExpr, LinExpr) {
    let s = (y0.max(1e-6) / x0.max(1e-6)).sqrt();
    let entry = (LinExpr::term(x, s) + LinExpr::term(y, 1.0 / s)) * 0.5;
    let d0 = s * x0 - y0 / s;
    let d = LinExpr::term(x, s) + LinExpr::term(y, -1.0 / s) + (-d0);
    let affine = (d * (2.0 * d0) + d0 * d0) * 0.25;
    (entry, affine)
}

/// Builds the convex program around a refreshed iterate (see [`super::refresh`]).
pub fn build_program(inst: &Instance, it: &Iterate, opts: ProgramOptions, params: &SolverParams) -> Result<Subproblem> {
    let (n, k, l) = (inst.n, inst.k, inst.l);
    let ch = &inst.ch;
    let relaxed = opts.family == Family::Relaxed;
    let eps = params.pairing_eps;
    let delta = params.trust_delta;
    let floor = params.majorant_floor;
    let mut prog = ConicProgram::new();
    let mut counts = Counts::default();

    let inf = f64::INFINITY;
    let w = prog.add_vars("w", 4 * k * n, -inf, inf, 1.0);
    if !opts.dl {
        for i in w..w + 4 * k * n {
            prog.fix(i, 0.0);
        }
    }
    let (p_lo, p_hi) = if relaxed { (-inf, inf) } else { (0.0, 1.0) };
    let p = prog.add_vars("p", l, p_lo, p_hi, 1.0);
    if !opts.ul {
        for m in 0..l {
            prog.fix(p + m, 0.0);
        }
    } else if !relaxed {
        // nonnegativity and the per-user budget
        counts.constraints += 2 * l;
    }
    let omega = prog.add_vars("omega", 2 * k, -inf, inf, 1.0);
    for u in 0..2 * k {
        prog.scale[omega + u] = it.omega[u].max(1e-12);
        if !opts.dl {
            prog.fix(omega + u, 1.0);
        }
    }
    // auxiliary uplink SINR lower bounds and their reciprocals
    let ul_gain = prog.add_vars("ul_gain", l, -inf, inf, 1.0);
    let ul_omega = prog.add_vars("ul_omega", l, -inf, inf, 1.0);
    if !opts.ul {
        for m in 0..l {
            prog.fix(ul_gain + m, 1.0);
            prog.fix(ul_omega + m, 1.0);
        }
    }
    counts.symbols += 2 * k * n + 2 * k + l;

    let mut layout = Layout { n, k, l, w, p, omega, ul_gain, ul_omega, alpha: None, lambda: None, mu: None, beta: None, nu: None, eta: None };
    if relaxed {
        let a = prog.add_vars("alpha", k * k, 0.0, 1.0, 1.0);
        let lam = prog.add_vars("lambda", k * k, -inf, inf, 1.0);
        let mu = prog.add_vars("mu", k * k, 0.0, inf, 1.0);
        let b = prog.add_vars("beta", l * l, 0.0, 1.0, 1.0);
        let nu = prog.add_vars("nu", l, 0.0, 1.0, 1.0);
        layout.alpha = Some(a);
        layout.lambda = Some(lam);
        layout.mu = Some(mu);
        layout.beta = Some(b);
        layout.nu = Some(nu);
        for r in 0..k {
            for c in 0..k {
                prog.scale[layout.mu(r, c)] = it.mu[(r, c)].max(1e-6);
                if opts.fix_alpha {
                    prog.fix(layout.alpha(r, c), it.alpha[(r, c)]);
                }
            }
        }
        for r in 0..l {
            prog.scale[layout.nu(r)] = it.nu[r].max(1e-6);
            for c in 0..l {
                if r == c {
                    prog.fix(layout.beta(r, c), 0.0);
                } else if opts.fix_beta {
                    prog.fix(layout.beta(r, c), it.beta[(r, c)]);
                }
            }
        }
        counts.symbols += 3 * k * k + l * l + l;
    }
    if opts.objective == Objective::Eta {
        layout.eta = Some(prog.add_vars("eta", 1, -inf, inf, 1.0));
    }
    let eta_expr = || layout.eta.map_or(LinExpr::zero(), LinExpr::var);
    let mut qos = Vec::new();

    // Downlink.
    let mut dl_sum = LinExpr::zero();
    if opts.dl {
        let all_w: Vec<LinExpr> = (w..w + 4 * k * n).map(LinExpr::var).collect();
        prog.add_soc("power budget", LinExpr::constant(1.0), all_w);
        counts.constraints += 1;

        let cci_terms = |xs: &mut Vec<LinExpr>, zone: usize, user: usize| {
            if opts.ul {
                for m in 0..l {
                    xs.push(LinExpr::term(p + m, ch.g_cci[m][zone][user].norm()));
                }
            }
        };

        for u in 0..k {
            let h = &ch.h_dl[0][u];
            let own = linearize_quadratic(h, &it.w.w[0][u], LinearizationKind::InnerOwn, 0.0, eps)?;
            let g = quad_expr(&own, &layout.hw(h, u), None);
            prog.add_ge(format!("trust inner {u}"), g.clone() + (-delta));
            let mut xs = Vec::new();
            for u2 in (0..k).filter(|&u2| u2 != u) {
                push_pair(&mut xs, layout.hw(h, u2));
            }
            cci_terms(&mut xs, 0, u);
            for j in 0..k {
                match opts.family {
                    Family::Relaxed => {
                        let (cl, cm) = product_majorant(1.0 - it.alpha[(u, j)], it.mu[(u, j)], floor);
                        xs.push(LinExpr::term(layout.lambda(u, j), cl.sqrt()));
                        xs.push(LinExpr::term(layout.mu(u, j), cm.sqrt()));
                    }
                    Family::Fixed(DlModel::Noma) if it.alpha[(u, j)] > 0.5 => {}
                    Family::Fixed(_) => push_pair(&mut xs, layout.hw(h, k + j)),
                }
            }
            xs.push(LinExpr::constant(1.0));
            let g_ref = own.z.norm_sqr();
            prog.add_rotated(format!("sinr inner {u}"), LinExpr::var(omega + u), g, xs, it.omega[u], g_ref);
            counts.constraints += 2;
        }

        for j in 0..k {
            let h2 = &ch.h_dl[1][j];
            let own = linearize_quadratic(h2, &it.w.w[1][j], LinearizationKind::OuterOwn, 0.0, eps)?;
            let g = quad_expr(&own, &layout.hw(h2, k + j), None);
            prog.add_ge(format!("trust outer {j}"), g.clone() + (-delta));
            let mut xs = Vec::new();
            for u in 0..k {
                push_pair(&mut xs, layout.hw(h2, u));
            }
            for j2 in (0..k).filter(|&j2| j2 != j) {
                push_pair(&mut xs, layout.hw(h2, k + j2));
            }
            cci_terms(&mut xs, 1, j);
            xs.push(LinExpr::constant(1.0));
            prog.add_rotated(format!("sinr outer {j}"), LinExpr::var(omega + k + j), g, xs, it.omega[k + j], own.z.norm_sqr());
            counts.constraints += 2;

            let sic_users: Vec<usize> = match opts.family {
                Family::Relaxed => (0..k).collect(),
                Family::Fixed(DlModel::Noma) => (0..k).filter(|&u| it.alpha[(u, j)] > 0.5).collect(),
                Family::Fixed(DlModel::NoSic) => Vec::new(),
            };
            for u in sic_users {
                let h1 = &ch.h_dl[0][u];
                let (q, alpha_var, g_ref) = if relaxed {
                    let q = linearize_quadratic(h1, &it.w.w[1][j], LinearizationKind::PairedSic, it.alpha[(u, j)], eps)?;
                    let r = q.z.norm_sqr() / q.denom;
                    (q, Some(layout.alpha(u, j)), r)
                } else {
                    let q = linearize_quadratic(h1, &it.w.w[1][j], LinearizationKind::FixedSic, 0.0, eps)?;
                    let r = q.z.norm_sqr();
                    (q, None, r)
                };
                let g = quad_expr(&q, &layout.hw(h1, k + j), alpha_var);
                prog.add_ge(format!("trust sic {u}->{j}"), g.clone() + (-delta));
                let mut xs = Vec::new();
                for u2 in 0..k {
                    push_pair(&mut xs, layout.hw(h1, u2));
                }
                for j2 in (0..k).filter(|&j2| j2 != j) {
                    push_pair(&mut xs, layout.hw(h1, k + j2));
                }
                cci_terms(&mut xs, 0, u);
                xs.push(LinExpr::constant(1.0));
                prog.add_rotated(format!("sinr sic {u}->{j}"), LinExpr::var(omega + k + j), g, xs, it.omega[k + j], g_ref);
                counts.constraints += 2;
            }
        }

        for u in 0..2 * k {
            let (a, b) = log_minorant(it.omega[u])?;
            let r = LinExpr::term(omega + u, b) + a;
            let label = format!("qos dl {u}");
            prog.add_ge(label.clone(), r.clone() + (-inst.r_dl) - eta_expr());
            qos.push((label, r.clone() + (-inst.r_dl)));
            dl_sum = dl_sum + r;
            counts.constraints += 1;
        }
    }

    // Uplink.
    let mut ul_sum = LinExpr::zero();
    let mut minorants = Vec::new();
    if opts.ul {
        for m in 0..l {
            let mn = ul_sinr_minorant(ch, &it.w, &it.p, &it.beta, m)?;
            let pr = mn.p_ref;
            // weighted interference <= 2 p_ref a p_m - noise - g_m
            let mut xs = Vec::new();
            let mut lin_part = LinExpr::zero();
            for m2 in (0..l).filter(|&m2| m2 != m) {
                let lam = mn.lambda[m2];
                if lam <= 0.0 {
                    continue;
                }
                if relaxed {
                    let (entry, affine) = bilinear_majorant(layout.beta(m, m2), layout.nu(m2), it.beta[(m, m2)], it.nu[m2]);
                    xs.push(entry * lam.sqrt());
                    lin_part = lin_part + affine * lam;
                } else if it.beta[(m, m2)] > 0.5 {
                    xs.push(LinExpr::term(p + m2, lam.sqrt()));
                }
            }
            if opts.dl && ch.rho_sq > 0.0 {
                let c = ch.rho_sq.sqrt() * pr;
                for u in 0..2 * k {
                    let (re, im) = layout.hw(&mn.si_vec, u);
                    xs.push(re * c);
                    xs.push(im * c);
                }
            }
            let gain_ref = mn.sinr_ref.max(1e-12);
            prog.scale[ul_gain + m] = gain_ref;
            prog.scale[ul_omega + m] = 1.0 / gain_ref;
            let u = LinExpr::term(p + m, 2.0 * pr * mn.a) - LinExpr::var(ul_gain + m) + (-mn.noise_term) + lin_part;
            let u_ref = mn.interference(&it.w, &it.p, &it.beta).max(1e-9 * gain_ref);
            prog.add_rotated(format!("ul interference {m}"), u, LinExpr::constant(1.0), xs, u_ref, 1.0);
            prog.add_rotated(
                format!("ul sinr {m}"),
                LinExpr::var(ul_omega + m),
                LinExpr::var(ul_gain + m),
                vec![LinExpr::constant(1.0)],
                1.0 / gain_ref,
                gain_ref,
            );
            let (a, b) = log_minorant(1.0 / gain_ref)?;
            let r = LinExpr::term(ul_omega + m, b) + a;
            let label = format!("qos ul {m}");
            prog.add_ge(label.clone(), r.clone() + (-inst.r_ul) - eta_expr());
            qos.push((label, r.clone() + (-inst.r_ul)));
            ul_sum = ul_sum + r;
            counts.constraints += 1;
            minorants.push(mn);
        }
    }

    // Relaxed association constraints.
    let mut shape = LinExpr::zero();
    if relaxed {
        counts.constraints += 2 * k * k;
        if !opts.fix_alpha {
            for r in 0..k {
                let mut row = LinExpr::constant(-1.0);
                let mut col = LinExpr::constant(-1.0);
                for c in 0..k {
                    row.push(layout.alpha(r, c), 1.0);
                    col.push(layout.alpha(c, r), 1.0);
                }
                prog.add_eq(format!("pair row {r}"), row);
                prog.add_eq(format!("pair col {r}"), col);
            }
        }
        counts.constraints += 2 * k;
        for r in 0..k {
            for c in 0..k {
                prog.add_eq(
                    format!("lambda {r},{c}"),
                    LinExpr::var(layout.lambda(r, c)) + LinExpr::var(layout.alpha(r, c)) + (-1.0),
                );
                let (re, im) = layout.hw(&ch.h_dl[0][r], k + c);
                prog.add_rotated(
                    format!("mu {r},{c}"),
                    LinExpr::var(layout.mu(r, c)),
                    LinExpr::constant(1.0),
                    vec![re, im],
                    it.mu[(r, c)].max(1e-6),
                    1.0,
                );
                if opts.penalty.is_some() && !opts.fix_alpha {
                    let v0 = it.alpha[(r, c)];
                    shape = shape + LinExpr::term(layout.alpha(r, c), 2.0 * v0 - 1.0) + (-v0 * v0);
                }
            }
        }
        counts.constraints += 2 * k * k;

        counts.constraints += 2 * l * l + l;
        let target = lse_target(params.lse_sharpness);
        for a in 0..l {
            for b in a + 1..l {
                counts.constraints += 2;
                if opts.fix_beta {
                    continue;
                }
                prog.add_eq(
                    format!("order pair {a},{b}"),
                    LinExpr::var(layout.beta(a, b)) + LinExpr::var(layout.beta(b, a)) + (-1.0),
                );
                let s_ref: f64 = (0..l).map(|c| it.beta[(a, c)] - it.beta[(b, c)]).sum();
                let (f0, d) = lse_linearization(s_ref, params.lse_sharpness);
                let theta = target.min(f_lse(s_ref, params.lse_sharpness));
                let mut s = LinExpr::constant(f0 - d * s_ref - theta);
                for c in 0..l {
                    s.push(layout.beta(a, c), d);
                    s.push(layout.beta(b, c), -d);
                }
                prog.add_ge(format!("order separation {a},{b}"), s);
                if opts.penalty.is_some() {
                    for (x, y) in [(a, b), (b, a)] {
                        let v0 = it.beta[(x, y)];
                        shape = shape + LinExpr::term(layout.beta(x, y), 2.0 * v0 - 1.0) + (-v0 * v0);
                    }
                }
            }
        }
        for m in 0..l {
            prog.add_rotated(
                format!("nu {m}"),
                LinExpr::var(layout.nu(m)),
                LinExpr::constant(1.0),
                vec![LinExpr::var(p + m)],
                it.nu[m].max(1e-6),
                1.0,
            );
        }
        counts.constraints += 2 * l;
    }

    let rate_objective = match opts.objective {
        Objective::SumRate => dl_sum + ul_sum,
        Objective::Downlink => dl_sum,
        Objective::Uplink => ul_sum,
        Objective::Eta => eta_expr(),
    }
    .compact();
    let penalty_shape = shape.compact();
    prog.objective = match (opts.penalty, opts.objective) {
        (Some(rho), o) if o != Objective::Eta => (rate_objective.clone() + penalty_shape.clone() * rho).compact(),
        _ => rate_objective.clone(),
    };

    Ok(Subproblem { program: prog, layout, counts, options: opts, rate_objective, penalty_shape, ul_minorants: minorants, qos })
}

impl Subproblem {
    /// Stacks an iterate into the program's variable vector.
    pub fn encode(&self, it: &Iterate) -> Vec<f64> {
        let lay = &self.layout;
        let (k, l) = (lay.k, lay.l);
        let mut x = vec![0.0; self.program.n_vars];
        for (u, v) in it.w.iter().enumerate() {
            for (c, val) in v.iter().enumerate() {
                x[lay.w_re(u, c)] = val.re;
                x[lay.w_re(u, c) + 1] = val.im;
            }
        }
        for m in 0..l {
            x[lay.p + m] = it.p[m];
        }
        for u in 0..2 * k {
            x[lay.omega + u] = it.omega[u];
        }
        for mn in &self.ul_minorants {
            let g = mn.value(&it.w, &it.p, &it.beta);
            x[lay.ul_gain + mn.user] = g;
            x[lay.ul_omega + mn.user] = 1.0 / g;
        }
        if lay.alpha.is_some() {
            for r in 0..k {
                for c in 0..k {
                    x[lay.alpha(r, c)] = it.alpha[(r, c)];
                    x[lay.lambda(r, c)] = 1.0 - it.alpha[(r, c)];
                    x[lay.mu(r, c)] = it.mu[(r, c)];
                }
            }
            for r in 0..l {
                x[lay.nu(r)] = it.nu[r];
                for c in 0..l {
                    x[lay.beta(r, c)] = it.beta[(r, c)];
                }
            }
        }
        if let Some(e) = lay.eta {
            x[e] = self.qos.iter().map(|(_, q)| q.eval(&x)).fold(f64::INFINITY, f64::min);
            if !x[e].is_finite() {
                x[e] = 0.0;
            }
        }
        x
    }

    /// Reads an iterate back from a solution vector; `base` supplies anything
    /// the program does not carry.
    pub fn decode(&self, x: &[f64], base: &Iterate) -> Iterate {
        let lay = &self.layout;
        let (k, l) = (lay.k, lay.l);
        let mut it = base.clone();
        for (u, v) in it.w.w.iter_mut().flatten().enumerate() {
            for c in 0..lay.n {
                v[c] = num_complex::Complex64::new(x[lay.w_re(u, c)], x[lay.w_re(u, c) + 1]);
            }
        }
        for m in 0..l {
            it.p[m] = x[lay.p + m].abs().min(1.0);
        }
        if self.options.dl {
            for u in 0..2 * k {
                it.omega[u] = x[lay.omega + u];
            }
        }
        if lay.alpha.is_some() {
            for r in 0..k {
                for c in 0..k {
                    it.alpha[(r, c)] = x[lay.alpha(r, c)].clamp(0.0, 1.0);
                    it.mu[(r, c)] = x[lay.mu(r, c)];
                }
            }
            for r in 0..l {
                it.nu[r] = x[lay.nu(r)];
                for c in 0..l {
                    it.beta[(r, c)] = if r == c { 0.0 } else { x[lay.beta(r, c)].clamp(0.0, 1.0) };
                }
            }
        }
        it
    }

    pub fn eta(&self, x: &[f64]) -> Option<f64> {
        self.layout.eta.map(|e| x[e])
    }
}
