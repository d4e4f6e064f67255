//! Outer iterative schemes behind a common [`Scheme`] trait, selected by name
//! through a [`Registry`].

mod engine;
mod schedule;
mod schemes;

pub use engine::{initialize, post_process, Engine, InitKind, LoopEnd};
pub use schedule::{parse_schedule, Constant, Geometric, PenaltySchedule};
pub use schemes::{FdConventional, FdNomaRua, HdNoma, IcaBfs, IcaCr, IcaCrPf};

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use crate::association::Association;
use crate::channel::{ChannelSet, SystemConfig};
use crate::conic::{ClarabelBackend, ConicBackend};
use crate::error::{Error, Result};
use crate::rates::{Beamformers, DlModel, RateReport};
use crate::subproblem::SolverParams;

/// `||u||_inf` below which the penalized scheme freezes its association.
pub const FREEZE_THRESHOLD: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RunStatus {
    Converged,
    InfeasibleInit,
    MaxIters,
    SubproblemFailure,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::InfeasibleInit => "infeasible_init",
            RunStatus::MaxIters => "max_iters",
            RunStatus::SubproblemFailure => "subproblem_failure",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "converged" => RunStatus::Converged,
            "infeasible_init" => RunStatus::InfeasibleInit,
            "max_iters" => RunStatus::MaxIters,
            "subproblem_failure" => RunStatus::SubproblemFailure,
            _ => return Err(Error::Parse(format!("unknown status `{s}`"))),
        })
    }

    /// The less favorable of two statuses.
    pub fn worst(self, other: RunStatus) -> RunStatus {
        self.max(other)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Smallest-QoS-margin maximization.
    Feasibility,
    /// Relaxed initialization stages.
    Warmup,
    Relaxed,
    /// Fixed association: beams and powers only.
    PowerControl,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Feasibility => "feasibility",
            Phase::Warmup => "warmup",
            Phase::Relaxed => "relaxed",
            Phase::PowerControl => "power_control",
        }
    }
}

/// One convex solve.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    /// 1-based over the whole run.
    pub iteration: usize,
    pub phase: Phase,
    /// Consecutive solves of one program family share a segment; the
    /// objective is monotone within a segment.
    pub segment: usize,
    /// Program objective, penalty included, at the new point with every
    /// surrogate re-expanded there; equals the relaxed (or fixed) objective.
    pub objective: f64,
    /// Optimal value of the convex program.
    pub surrogate: f64,
    /// Program objective at the expansion point.
    pub reference: f64,
    /// Largest `|v^2 - v|` over pairing and order entries of the new point.
    pub u_inf: f64,
    pub rho: Option<f64>,
    /// Exact SE (nats) with the association rounded to binary.
    pub exact_se: f64,
    /// Largest normalized constraint residual of the expansion point.
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub association: Association,
    /// Physical units.
    pub beamformers: Beamformers,
    /// Uplink amplitudes; the transmit power is the square.
    pub powers: Vec<f64>,
    pub report: RateReport,
    pub model: DlModel,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub scheme: String,
    pub status: RunStatus,
    /// Nats/s/Hz; zero without a solution.
    pub final_se: f64,
    pub solution: Option<Solution>,
    pub trace: Vec<TraceEntry>,
    /// Associations attempted (brute force) or 1.
    pub attempts: usize,
    /// Associations skipped for infeasible initialization.
    pub skipped: usize,
    /// Solves discarded for returning a point below their expansion point.
    pub rejected: usize,
    pub wallclock: Duration,
    pub note: Option<String>,
}

impl RunResult {
    pub fn infeasible(scheme: &str, reason: impl Into<String>) -> Self {
        RunResult {
            scheme: scheme.to_string(),
            status: RunStatus::InfeasibleInit,
            final_se: 0.0,
            solution: None,
            trace: Vec::new(),
            attempts: 1,
            skipped: 0,
            rejected: 0,
            wallclock: Duration::ZERO,
            note: Some(reason.into()),
        }
    }

    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn qos_ok(&self) -> bool {
        self.solution.as_ref().is_some_and(|s| s.report.qos_ok())
    }

    /// Converged with every QoS target met.
    pub fn feasible(&self) -> bool {
        self.status == RunStatus::Converged && self.qos_ok()
    }

    /// SE counted towards averages: zero unless the run converged or hit the
    /// iteration cap with every QoS target met.
    pub fn effective_se(&self) -> f64 {
        if matches!(self.status, RunStatus::Converged | RunStatus::MaxIters) && self.qos_ok() {
            self.final_se
        } else {
            0.0
        }
    }

    pub fn durr(&self) -> f64 {
        self.solution.as_ref().map_or(f64::NAN, |s| s.report.durr())
    }
}

/// Everything a scheme needs for one channel realization.
#[derive(Clone)]
pub struct RunContext<'a> {
    pub channels: &'a ChannelSet,
    pub config: &'a SystemConfig,
    pub params: SolverParams,
    pub seed: u64,
    pub schedule: Arc<dyn PenaltySchedule>,
    pub backend: Arc<dyn ConicBackend>,
}

impl<'a> RunContext<'a> {
    pub fn new(channels: &'a ChannelSet, config: &'a SystemConfig, seed: u64) -> Self {
        RunContext {
            channels,
            config,
            params: SolverParams::from_config(config),
            seed,
            schedule: Arc::new(Geometric::default()),
            backend: Arc::new(ClarabelBackend),
        }
    }
}

pub trait Scheme: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, ctx: &RunContext) -> Result<RunResult>;
}

/// Name-keyed scheme table.
#[derive(Clone)]
pub struct Registry {
    schemes: BTreeMap<&'static str, Arc<dyn Scheme>>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry { schemes: BTreeMap::new() }
    }

    pub fn register(&mut self, scheme: Arc<dyn Scheme>) {
        self.schemes.insert(scheme.name(), scheme);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Scheme>> {
        self.schemes.get(name).cloned().ok_or_else(|| {
            Error::Config(format!("unknown scheme `{name}` (known: {})", self.names().join(", ")))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.schemes.keys().copied().collect()
    }
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Registry::empty();
        r.register(Arc::new(IcaCr));
        r.register(Arc::new(IcaCrPf));
        r.register(Arc::new(IcaBfs));
        r.register(Arc::new(FdNomaRua));
        r.register(Arc::new(HdNoma));
        r.register(Arc::new(FdConventional));
        r
    }
}

/// Checks that no solve ends below its expansion point (true objective and
/// surrogate optimum), and that the objective never drops between solves of
/// a segment without penalty, each up to `rel` (relative). Returns the first
/// offending iteration.
pub fn trace_monotone(trace: &[TraceEntry], rel: f64) -> std::result::Result<(), usize> {
    let slack = |a: f64, b: f64| rel * a.abs().max(b.abs()).max(1.0);
    for (i, e) in trace.iter().enumerate() {
        if e.objective < e.reference - slack(e.objective, e.reference) || e.surrogate < e.reference - slack(e.surrogate, e.reference) {
            return Err(e.iteration);
        }
        if let Some(prev) = i.checked_sub(1).map(|j| &trace[j]) {
            if prev.segment == e.segment && e.rho.is_none() && e.objective < prev.objective - slack(e.objective, prev.objective) {
                return Err(e.iteration);
            }
        }
    }
    Ok(())
}
