use crate::association::{Association, PairingMatrix};
use crate::conic::{ConicBackend, SolveStatus};
use crate::error::{Error, Result};
use crate::rates::{Beamformers, DlModel};
use crate::rng::Rng;
use crate::subproblem::{build_program, refresh, Family, Instance, Iterate, Objective, ProgramOptions, SolverParams, Subproblem};

use super::{PenaltySchedule, Phase, RunStatus, TraceEntry};

/// Margin below which a QoS row counts as met when restoring feasibility.
const ETA_SLACK: f64 = 1e-9;
/// Smallest eta gain per feasibility iteration before giving up.
const ETA_STALL: f64 = 1e-7;
/// Relative drop below the expansion point at which a solve is discarded.
const REJECT_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum LoopEnd {
    Converged,
    MaxIters,
    /// Binary gap fell below the freeze threshold.
    Frozen,
    Failure(String),
}

impl LoopEnd {
    pub fn status(&self) -> RunStatus {
        match self {
            LoopEnd::Converged | LoopEnd::Frozen => RunStatus::Converged,
            LoopEnd::MaxIters => RunStatus::MaxIters,
            LoopEnd::Failure(_) => RunStatus::SubproblemFailure,
        }
    }
}

/// Runs convex solves and records the trace.
pub struct Engine<'a> {
    pub inst: &'a Instance,
    pub params: &'a SolverParams,
    pub backend: &'a dyn ConicBackend,
    pub trace: Vec<TraceEntry>,
    /// Solves whose point was discarded for falling below the expansion point.
    pub rejected: usize,
    segment: usize,
}

struct Prepared {
    it: Iterate,
    sp: Subproblem,
    x0: Vec<f64>,
}

impl<'a> Engine<'a> {
    pub fn new(inst: &'a Instance, params: &'a SolverParams, backend: &'a dyn ConicBackend) -> Self {
        Engine { inst, params, backend, trace: Vec::new(), rejected: 0, segment: 0 }
    }

    /// Appends another engine's trace, renumbering iterations and segments.
    pub fn absorb(&mut self, trace: Vec<TraceEntry>, rejected: usize) {
        self.rejected += rejected;
        let it0 = self.trace.len();
        let seg0 = self.segment;
        let mut max_seg = seg0;
        for mut e in trace {
            e.iteration += it0;
            e.segment += seg0;
            max_seg = max_seg.max(e.segment);
            self.trace.push(e);
        }
        self.segment = max_seg;
    }

    fn prepare(&self, it: &Iterate, opts: ProgramOptions) -> Result<Prepared> {
        let mut it = it.clone();
        refresh(self.inst, &mut it, opts.family, opts.dl, self.params.pairing_eps)?;
        let sp = build_program(self.inst, &it, opts, self.params)?;
        let x0 = sp.encode(&it);
        Ok(Prepared { it, sp, x0 })
    }

    fn snapshot_se(&self, it: &Iterate, opts: ProgramOptions) -> f64 {
        let (assoc, model) = match opts.family {
            Family::Relaxed => (it.rounded(), DlModel::Noma),
            Family::Fixed(m) => (it.association(), m),
        };
        self.inst.report(it, &assoc, model).map_or(f64::NAN, |r| {
            (if opts.dl { r.dl_sum } else { 0.0 }) + if opts.ul { r.ul_sum } else { 0.0 }
        })
    }

    /// Solves one program; returns the new point and its objective, or `None`
    /// when the solver's point is worse than the expansion point.
    fn solve(&mut self, p: Prepared, phase: Phase) -> std::result::Result<Option<(Iterate, f64)>, String> {
        let reference = p.sp.program.objective_value(&p.x0);
        let residual = p.sp.program.max_violation(&p.x0);
        let sol = self.backend.solve(&p.sp.program, &self.params.solver).map_err(|e| e.to_string())?;
        if !matches!(sol.status, SolveStatus::Optimal | SolveStatus::Inaccurate) {
            return Err(format!("conic solver: {}", sol.status.as_str()));
        }
        let floor = reference - REJECT_SLACK * reference.abs().max(1.0);
        let surrogate = p.sp.program.objective_value(&sol.x);
        if surrogate < floor {
            self.rejected += 1;
            return Ok(None);
        }
        let opts = p.sp.options;
        // the same program family rebuilt at the new point is tight there, so
        // its reference value is the true objective
        let q = self.prepare(&p.sp.decode(&sol.x, &p.it), opts).map_err(|e| e.to_string())?;
        let objective = q.sp.program.objective_value(&q.x0);
        // an inexact solve can overstate the surrogate; keep the old point then
        if objective < floor {
            self.rejected += 1;
            return Ok(None);
        }
        let next = q.it;
        self.trace.push(TraceEntry {
            iteration: self.trace.len() + 1,
            phase,
            segment: self.segment,
            objective,
            surrogate,
            reference,
            u_inf: if opts.family == Family::Relaxed { next.binary_gap() } else { 0.0 },
            rho: opts.penalty,
            exact_se: self.snapshot_se(&next, opts),
            residual,
        });
        Ok(Some((next, objective)))
    }

    /// Maximizes the smallest QoS margin until every QoS row holds.
    pub fn restore_feasibility(&mut self, it: Iterate, mut opts: ProgramOptions) -> Result<Iterate> {
        opts.objective = Objective::Eta;
        opts.penalty = None;
        self.segment += 1;
        let mut it = it;
        let mut last = f64::NEG_INFINITY;
        for _ in 0..self.params.max_init_iters {
            let p = self.prepare(&it, opts)?;
            let eta = p.sp.eta(&p.x0).unwrap_or(0.0);
            if eta >= -ETA_SLACK {
                return Ok(p.it);
            }
            if eta < last + ETA_STALL {
                return Err(Error::Infeasible(format!("smallest QoS margin stalled at {eta:.3e} ({})", binding_row(&p))));
            }
            last = eta;
            let row = binding_row(&p);
            match self.solve(p, Phase::Feasibility).map_err(Error::Numerical)? {
                Some((next, _)) => it = next,
                None => return Err(Error::Infeasible(format!("smallest QoS margin stalled at {eta:.3e} ({})", row))),
            }
        }
        let p = self.prepare(&it, opts)?;
        match p.sp.eta(&p.x0) {
            Some(eta) if eta < -ETA_SLACK => Err(Error::Infeasible(format!("smallest QoS margin {eta:.3e} after the iteration cap"))),
            _ => Ok(p.it),
        }
    }

    /// Successive convex iterations. Without a schedule, keeps the penalty in
    /// `opts` fixed and stops once the objective changes by less than the
    /// tolerance; with one, stops when the binary gap drops below `freeze`
    /// (if given).
    pub fn ascend(
        &mut self,
        it: Iterate,
        mut opts: ProgramOptions,
        schedule: Option<&dyn PenaltySchedule>,
        freeze: Option<f64>,
        max_iters: usize,
        phase: Phase,
    ) -> (Iterate, LoopEnd) {
        self.segment += 1;
        let mut it = it;
        let mut prev: Option<f64> = None;
        for kappa in 1..=max_iters {
            if let Some(s) = schedule {
                opts.penalty = Some(s.rho(kappa));
            }
            let p = match self.prepare(&it, opts) {
                Ok(p) => p,
                Err(e) => return (it, LoopEnd::Failure(e.to_string())),
            };
            let start = prev.unwrap_or_else(|| p.sp.program.objective_value(&p.x0));
            let (next, objective) = match self.solve(p, phase) {
                Ok(Some(v)) => v,
                Ok(None) => return (it, LoopEnd::Converged),
                Err(e) => return (it, LoopEnd::Failure(e)),
            };
            it = next;
            if let Some(th) = freeze {
                if it.binary_gap() < th {
                    return (it, LoopEnd::Frozen);
                }
            }
            if schedule.is_none() && (objective - start).abs() < self.params.tolerance {
                return (it, LoopEnd::Converged);
            }
            prev = Some(objective);
        }
        (it, LoopEnd::MaxIters)
    }

    /// Feasibility restoration followed by sum-rate iterations at a fixed
    /// binary association.
    pub fn fixed_pipeline(&mut self, it: Iterate, opts: ProgramOptions, max_iters: usize) -> (Iterate, RunStatus, Option<String>) {
        let it = match self.restore_feasibility(it.clone(), opts) {
            Ok(v) => v,
            Err(e) => return (it, RunStatus::InfeasibleInit, Some(e.to_string())),
        };
        let (it, end) = self.ascend(it, opts, None, None, max_iters, Phase::PowerControl);
        let note = match &end {
            LoopEnd::Failure(e) => Some(e.clone()),
            _ => None,
        };
        (it, end.status(), note)
    }

    /// Two-stage relaxed start from a random decoding order: restore QoS with
    /// the order fixed, improve the downlink side with the order fixed, then
    /// the uplink side with the pairing fixed.
    /// Two-stage start for the relaxed schemes. `rho` adds the penalty at a
    /// constant weight to both stages.
    pub fn relaxed_start(&mut self, rng: &mut Rng, rho: Option<f64>) -> Result<Iterate> {
        let (k, l) = (self.inst.k, self.inst.l);
        let mut last_err = Error::Infeasible("no attempts".into());
        for _ in 0..self.params.init_retries.max(1) {
            let order = Association::random(k, l, rng).order;
            let assoc = Association::new(PairingMatrix::uniform(k), order);
            let it = Iterate::matched_start(self.inst, &assoc);
            let mut fix_beta = ProgramOptions::relaxed(Objective::SumRate);
            fix_beta.fix_beta = true;
            fix_beta.penalty = rho;
            let it = match self.restore_feasibility(it, fix_beta) {
                Ok(v) => v,
                Err(e) => {
                    last_err = e;
                    continue;
                }
            };
            let stages = self.params.init_stage_iters;
            let (it, end) = self.ascend(it, fix_beta, None, None, stages, Phase::Warmup);
            if let LoopEnd::Failure(e) = end {
                last_err = Error::Numerical(e);
                continue;
            }
            let mut fix_alpha = ProgramOptions::relaxed(Objective::SumRate);
            fix_alpha.fix_alpha = true;
            fix_alpha.penalty = rho;
            let (it, end) = self.ascend(it, fix_alpha, None, None, stages, Phase::Warmup);
            if let LoopEnd::Failure(e) = end {
                last_err = Error::Numerical(e);
                continue;
            }
            return Ok(it);
        }
        Err(last_err)
    }
}

/// Label of the QoS row with the smallest margin at the expansion point.
fn binding_row(p: &Prepared) -> String {
    p.sp.qos
        .iter()
        .map(|(label, e)| (label, e.eval(&p.x0)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map_or_else(String::new, |(label, v)| format!("{label}: {v:.3e}"))
}

#[derive(Clone, Debug)]
pub enum InitKind {
    /// Relaxed schemes: random decoding order, uniform pairing.
    Relaxed,
    /// Fixed association with the given downlink model.
    Fixed(Association, DlModel),
}

/// A QoS-feasible starting point, or [`Error::Infeasible`].
pub fn initialize(inst: &Instance, params: &SolverParams, backend: &dyn ConicBackend, kind: InitKind, rng: &mut Rng) -> Result<Iterate> {
    let mut engine = Engine::new(inst, params, backend);
    match kind {
        InitKind::Relaxed => engine.relaxed_start(rng, None),
        InitKind::Fixed(assoc, model) => {
            let it = Iterate::matched_start(inst, &assoc);
            engine.restore_feasibility(it, ProgramOptions::fixed(model, Objective::SumRate))
        }
    }
}

/// Beam and power refinement at a fixed binary association, starting from
/// `(w, p)` in normalized units.
pub fn post_process(
    engine: &mut Engine,
    assoc: &Association,
    w: Beamformers,
    p: Vec<f64>,
    model: DlModel,
    max_iters: usize,
) -> (Iterate, RunStatus, Option<String>) {
    let it = Iterate::new(w, p, assoc);
    engine.fixed_pipeline(it, ProgramOptions::fixed(model, Objective::SumRate), max_iters)
}
