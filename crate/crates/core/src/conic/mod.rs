//! Solver-agnostic conic programs: linear objective (maximized), affine
//! equality and inequality rows, second-order cones and variable bounds.

mod clarabel_backend;
mod dump;

pub use clarabel_backend::ClarabelBackend;
pub use dump::dump_program;

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        LinExpr::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { terms: Vec::new(), constant: c }
    }

    pub fn var(i: usize) -> Self {
        LinExpr { terms: vec![(i, 1.0)], constant: 0.0 }
    }

    pub fn term(i: usize, c: f64) -> Self {
        LinExpr { terms: vec![(i, c)], constant: 0.0 }
    }

    pub fn push(&mut self, i: usize, c: f64) {
        if c != 0.0 {
            self.terms.push((i, c));
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    /// `|constant| + sum |c_i x_i|`, the magnitude used to normalize residuals.
    pub fn magnitude(&self, x: &[f64]) -> f64 {
        self.constant.abs() + self.terms.iter().map(|&(i, c)| (c * x[i]).abs()).sum::<f64>()
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.constant *= s;
        for t in &mut self.terms {
            t.1 *= s;
        }
        self
    }

    /// Merges duplicate indices and drops zero coefficients.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (i, c) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        LinExpr { terms: out, constant: self.constant }
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
        self
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: LinExpr) -> LinExpr {
        self + rhs.scaled(-1.0)
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(self, s: f64) -> LinExpr {
        self.scaled(s)
    }
}

impl Add<f64> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, c: f64) -> LinExpr {
        self.constant += c;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub label: String,
    pub expr: LinExpr,
}

/// `||entries[1..]|| <= entries[0]`
#[derive(Clone, Debug, PartialEq)]
pub struct Cone {
    pub label: String,
    pub entries: Vec<LinExpr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConicProgram {
    pub n_vars: usize,
    /// Maximized.
    pub objective: LinExpr,
    /// `expr == 0`
    pub eq: Vec<Row>,
    /// `expr >= 0`
    pub ge: Vec<Row>,
    pub cones: Vec<Cone>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Typical magnitude of each variable; backends may solve in `x / scale`.
    pub scale: Vec<f64>,
    pub blocks: Vec<VarBlock>,
}

impl ConicProgram {
    pub fn new() -> Self {
        ConicProgram::default()
    }

    pub fn add_vars(&mut self, name: &str, len: usize, lo: f64, hi: f64, scale: f64) -> usize {
        let start = self.n_vars;
        self.n_vars += len;
        self.lower.extend(std::iter::repeat_n(lo, len));
        self.upper.extend(std::iter::repeat_n(hi, len));
        self.scale.extend(std::iter::repeat_n(scale, len));
        self.blocks.push(VarBlock { name: name.to_string(), start, len });
        start
    }

    pub fn block(&self, name: &str) -> Option<&VarBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn fix(&mut self, i: usize, value: f64) {
        self.lower[i] = value;
        self.upper[i] = value;
    }

    pub fn add_eq(&mut self, label: impl Into<String>, expr: LinExpr) {
        self.eq.push(Row { label: label.into(), expr: expr.compact() });
    }

    pub fn add_ge(&mut self, label: impl Into<String>, expr: LinExpr) {
        self.ge.push(Row { label: label.into(), expr: expr.compact() });
    }

    pub fn add_soc(&mut self, label: impl Into<String>, t: LinExpr, xs: Vec<LinExpr>) {
        let mut entries = vec![t.compact()];
        entries.extend(xs.into_iter().map(LinExpr::compact));
        self.cones.push(Cone { label: label.into(), entries });
    }

    /// `||xs||^2 <= u v` with `u, v >= 0`. The references are typical values of
    /// `u` and `v`; they balance the two sides without changing the set.
    pub fn add_rotated(&mut self, label: impl Into<String>, u: LinExpr, v: LinExpr, xs: Vec<LinExpr>, u_ref: f64, v_ref: f64) {
        let ok = |r: f64| r.is_finite() && r > 0.0;
        let (c, norm) = if ok(u_ref) && ok(v_ref) {
            ((v_ref / u_ref).sqrt(), 1.0 / (u_ref * v_ref).sqrt())
        } else {
            (1.0, 1.0)
        };
        let cu = u * c;
        let vc = v * (1.0 / c);
        let t = (cu.clone() + vc.clone()) * norm;
        let d = (cu - vc) * norm;
        let mut entries = vec![d];
        entries.extend(xs.into_iter().map(|x| x * (2.0 * norm)));
        self.add_soc(label, t, entries);
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    /// Largest normalized constraint violation at `x` (zero when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for r in &self.eq {
            worst = worst.max(r.expr.eval(x).abs() / (1.0 + r.expr.magnitude(x)));
        }
        for r in &self.ge {
            worst = worst.max((-r.expr.eval(x)).max(0.0) / (1.0 + r.expr.magnitude(x)));
        }
        for c in &self.cones {
            let t = c.entries[0].eval(x);
            let n = c.entries[1..].iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
            let mag: f64 = c.entries.iter().map(|e| e.magnitude(x)).sum();
            worst = worst.max((n - t).max(0.0) / (1.0 + mag));
        }
        for i in 0..self.n_vars {
            let lo = (self.lower[i] - x[i]).max(0.0) / (1.0 + self.lower[i].abs());
            let hi = (x[i] - self.upper[i]).max(0.0) / (1.0 + self.upper[i].abs());
            worst = worst.max(lo).max(hi);
        }
        worst
    }

    /// Labels of rows or cones violated by more than `tol` at `x`.
    pub fn violated(&self, x: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for r in &self.eq {
            if r.expr.eval(x).abs() / (1.0 + r.expr.magnitude(x)) > tol {
                out.push(r.label.clone());
            }
        }
        for r in &self.ge {
            if (-r.expr.eval(x)) / (1.0 + r.expr.magnitude(x)) > tol {
                out.push(r.label.clone());
            }
        }
        for c in &self.cones {
            let t = c.entries[0].eval(x);
            let n = c.entries[1..].iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
            let mag: f64 = c.entries.iter().map(|e| e.magnitude(x)).sum();
            if (n - t) / (1.0 + mag) > tol {
                out.push(c.label.clone());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars;
        if self.lower.len() != n || self.upper.len() != n || self.scale.len() != n {
            return Err(Error::Dimension("bound vectors must match the variable count".into()));
        }
        let check = |e: &LinExpr| e.constant.is_finite() && e.terms.iter().all(|&(i, c)| i < n && c.is_finite());
        let rows_ok = self.eq.iter().chain(self.ge.iter()).all(|r| check(&r.expr));
        let cones_ok = self.cones.iter().all(|c| c.entries.len() >= 2 && c.entries.iter().all(check));
        if !check(&self.objective) || !rows_ok || !cones_ok {
            return Err(Error::Dimension("expression references an unknown variable or is not finite".into()));
        }
        if (0..n).any(|i| self.lower[i] > self.upper[i] || !(self.scale[i] > 0.0) || self.lower[i].is_nan() || self.upper[i].is_nan()) {
            return Err(Error::Dimension("inconsistent variable bounds or scale".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Feasible point from a stalled solve; optimality not certified.
    Inaccurate,
    Infeasible,
    NumericalFailure,
    IterationLimit,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Inaccurate => "inaccurate",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalFailure => "numerical_failure",
            SolveStatus::IterationLimit => "iteration_limit",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub iterations: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub tol_feas: f64,
    pub max_iter: u32,
    /// Normalized residual above which a reported optimum is rejected.
    pub accept_violation: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol_gap_abs: 1e-8, tol_gap_rel: 1e-8, tol_feas: 1e-8, max_iter: 200, accept_violation: 1e-5 }
    }
}

pub trait ConicBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, program: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution>;
}

pub fn solve(program: &ConicProgram) -> Result<ConicSolution> {
    ClarabelBackend.solve(program, &SolverSettings::default())
}
