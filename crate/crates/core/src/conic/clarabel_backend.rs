use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::{ConicBackend, ConicProgram, ConicSolution, LinExpr, SolveStatus, SolverSettings};
use crate::error::{Error, Result};

/// Interior-point backend. Solves in scaled variables `x / scale` with each
/// row and cone normalized to unit largest coefficient.
#[derive(Clone, Copy, Debug, Default)]
pub struct ClarabelBackend;

struct Assembly {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    m: usize,
}

impl Assembly {
    /// Appends the block `s = expr` (so `A = -coef`, `b = constant`) scaled by `f`.
    fn push(&mut self, e: &LinExpr, scale: &[f64], f: f64) {
        for &(i, c) in &e.terms {
            self.rows.push(self.m);
            self.cols.push(i);
            self.vals.push(-c * scale[i] * f);
        }
        self.b.push(e.constant * f);
        self.m += 1;
    }

    fn push_eq(&mut self, e: &LinExpr, scale: &[f64], f: f64) {
        // zero cone: A x + s = b with s = 0 means coef x = -constant
        for &(i, c) in &e.terms {
            self.rows.push(self.m);
            self.cols.push(i);
            self.vals.push(c * scale[i] * f);
        }
        self.b.push(-e.constant * f);
        self.m += 1;
    }
}

fn row_factor(exprs: &[&LinExpr], scale: &[f64]) -> f64 {
    let mut m = 0.0_f64;
    for e in exprs {
        m = m.max(e.constant.abs());
        for &(i, c) in &e.terms {
            m = m.max((c * scale[i]).abs());
        }
    }
    if m > 0.0 && m.is_finite() {
        1.0 / m
    } else {
        1.0
    }
}

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, prog: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution> {
        prog.validate()?;
        let n = prog.n_vars;
        let sc = &prog.scale;
        let mut asm = Assembly { rows: Vec::new(), cols: Vec::new(), vals: Vec::new(), b: Vec::new(), m: 0 };
        let mut cones = Vec::new();

        let mut n_zero = 0;
        for r in &prog.eq {
            asm.push_eq(&r.expr, sc, row_factor(&[&r.expr], sc));
            n_zero += 1;
        }
        for i in 0..n {
            if prog.lower[i] == prog.upper[i] {
                asm.push_eq(&(LinExpr::var(i) + (-prog.lower[i])), sc, 1.0 / sc[i].max(prog.lower[i].abs()).max(1e-300));
                n_zero += 1;
            }
        }
        if n_zero > 0 {
            cones.push(SupportedConeT::ZeroConeT(n_zero));
        }

        let mut n_pos = 0;
        for r in &prog.ge {
            asm.push(&r.expr, sc, row_factor(&[&r.expr], sc));
            n_pos += 1;
        }
        for i in 0..n {
            if prog.lower[i] == prog.upper[i] {
                continue;
            }
            if prog.lower[i].is_finite() {
                let e = LinExpr::var(i) + (-prog.lower[i]);
                asm.push(&e, sc, row_factor(&[&e], sc));
                n_pos += 1;
            }
            if prog.upper[i].is_finite() {
                let e = LinExpr::constant(prog.upper[i]) - LinExpr::var(i);
                asm.push(&e, sc, row_factor(&[&e], sc));
                n_pos += 1;
            }
        }
        if n_pos > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(n_pos));
        }

        for c in &prog.cones {
            let refs: Vec<&LinExpr> = c.entries.iter().collect();
            let f = row_factor(&refs, sc);
            for e in &c.entries {
                asm.push(e, sc, f);
            }
            cones.push(SupportedConeT::SecondOrderConeT(c.entries.len()));
        }

        let a = CscMatrix::new_from_triplets(asm.m, n, asm.rows, asm.cols, asm.vals);
        let p = CscMatrix::zeros((n, n));
        let mut q = vec![0.0; n];
        for &(i, c) in &prog.objective.clone().compact().terms {
            q[i] = -c * sc[i];
        }
        let qmax = q.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let qf = if qmax > 0.0 { 1.0 / qmax } else { 1.0 };
        for v in &mut q {
            *v *= qf;
        }

        let s = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_gap_abs(settings.tol_gap_abs)
            .tol_gap_rel(settings.tol_gap_rel)
            .tol_feas(settings.tol_feas)
            .max_iter(settings.max_iter)
            .build()
            .map_err(|e| Error::Numerical(format!("solver settings: {e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &asm.b, &cones, s)
            .map_err(|e| Error::Numerical(format!("solver setup: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let x: Vec<f64> = sol.x.iter().zip(sc).map(|(v, s)| v * s).collect();
        let objective = prog.objective_value(&x);
        let max_violation = prog.max_violation(&x);
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                if max_violation <= settings.accept_violation {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::NumericalFailure
                }
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::InsufficientProgress if max_violation <= settings.accept_violation => SolveStatus::Inaccurate,
            SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::IterationLimit,
            _ => SolveStatus::NumericalFailure,
        };
        Ok(ConicSolution { status, x, objective, max_violation, iterations: sol.iterations })
    }
}
