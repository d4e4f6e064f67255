use std::time::Instant;

use rayon::prelude::*;

use crate::association::{enumerate_associations, Association};
use crate::error::Result;
use crate::rates::{total_se_with, Beamformers, DlModel, RateReport};
use crate::rng::{stream, Domain, Rng};
use crate::subproblem::{Instance, Iterate, Objective, ProgramOptions};

use super::engine::{post_process, Engine, LoopEnd};
use super::{Phase, RunContext, RunResult, RunStatus, Scheme, Solution, TraceEntry, FREEZE_THRESHOLD};

pub const ICA_CR: &str = "ica_cr";
pub const ICA_CR_PF: &str = "ica_cr_pf";
pub const ICA_BFS: &str = "ica_bfs";
pub const FD_NOMA_RUA: &str = "fd_noma_rua";
pub const HD_NOMA: &str = "hd_noma";
pub const FD_CONVENTIONAL: &str = "fd_conventional";

fn scheme_rng(ctx: &RunContext, id: u64) -> Rng {
    stream(ctx.seed, Domain::Algorithm, id, 0)
}

fn instance(ctx: &RunContext, name: &str) -> Result<std::result::Result<Instance, RunResult>> {
    if !(ctx.config.p_bs_max > 0.0) {
        return Ok(Err(RunResult::infeasible(name, "no downlink power budget")));
    }
    Instance::new(ctx.channels, ctx.config).map(Ok)
}

struct Outcome {
    it: Iterate,
    assoc: Association,
    model: DlModel,
    status: RunStatus,
    note: Option<String>,
}

fn exact_report(inst: &Instance, it: &Iterate, assoc: &Association, model: DlModel) -> Result<(Beamformers, Vec<f64>, RateReport)> {
    let (w, p) = inst.to_physical(&it.w, &it.p);
    let report = total_se_with(&inst.physical, &w, &p, assoc, inst.r_dl, inst.r_ul, model)?;
    Ok((w, p, report))
}

fn finish(name: &str, inst: &Instance, o: Outcome, trace: Vec<TraceEntry>, start: Instant) -> Result<RunResult> {
    let (beamformers, powers, report) = exact_report(inst, &o.it, &o.assoc, o.model)?;
    Ok(RunResult {
        scheme: name.to_string(),
        status: o.status,
        final_se: report.total,
        solution: Some(Solution { association: o.assoc, beamformers, powers, report, model: o.model }),
        trace,
        attempts: 1,
        skipped: 0,
        rejected: 0,
        wallclock: start.elapsed(),
        note: o.note,
    })
}

fn infeasible_with_trace(name: &str, reason: String, trace: Vec<TraceEntry>, start: Instant) -> RunResult {
    let mut r = RunResult::infeasible(name, reason);
    r.trace = trace;
    r.wallclock = start.elapsed();
    r
}

fn join_notes(a: Option<String>, b: Option<String>) -> Option<String> {
    match (a, b) {
        (Some(a), Some(b)) => Some(format!("{a}; {b}")),
        (a, b) => a.or(b),
    }
}

/// Relaxed iterations, rounding, then fixed-association refinement.
fn relaxed_scheme(ctx: &RunContext, name: &str, penalized: bool) -> Result<RunResult> {
    let start = Instant::now();
    let inst = match instance(ctx, name)? {
        Ok(i) => i,
        Err(r) => return Ok(r),
    };
    let params = &ctx.params;
    let mut engine = Engine::new(&inst, params, ctx.backend.as_ref());
    let mut rng = scheme_rng(ctx, 1);
    let init_rho = penalized.then(|| ctx.schedule.rho(1));
    let it = match engine.relaxed_start(&mut rng, init_rho) {
        Ok(it) => it,
        Err(e) => {
            let mut r = infeasible_with_trace(name, e.to_string(), engine.trace, start);
            r.rejected = engine.rejected;
            return Ok(r);
        }
    };
    let opts = ProgramOptions::relaxed(Objective::SumRate);
    let used_before = engine.trace.len();
    let (it, end) = if penalized {
        engine.ascend(it, opts, Some(ctx.schedule.as_ref()), Some(FREEZE_THRESHOLD), params.max_iters, Phase::Relaxed)
    } else {
        engine.ascend(it, opts, None, None, params.max_iters, Phase::Relaxed)
    };
    let used = engine.trace.len() - used_before;
    let assoc = it.rounded();
    let budget = if penalized { params.max_iters.saturating_sub(used).max(1) } else { params.max_iters };
    let (refined, post_status, post_note) = post_process(&mut engine, &assoc, it.w.clone(), it.p.clone(), DlModel::Noma, budget);
    let mut note = match &end {
        LoopEnd::Failure(e) => Some(format!("relaxed phase: {e}")),
        _ => None,
    };
    let (final_it, status) = if post_status == RunStatus::InfeasibleInit {
        note = join_notes(note, post_note.map(|e| format!("fixed-association refinement: {e}")));
        (Iterate::new(it.w, it.p, &assoc), end.status())
    } else {
        note = join_notes(note, post_note);
        (refined, end.status().worst(post_status))
    };
    let outcome = Outcome { it: final_it, assoc, model: DlModel::Noma, status, note };
    let rejected = engine.rejected;
    let mut r = finish(name, &inst, outcome, engine.trace, start)?;
    r.rejected = rejected;
    Ok(r)
}

/// Continuous relaxation of pairing and decoding order.
#[derive(Clone, Copy, Debug, Default)]
pub struct IcaCr;

impl Scheme for IcaCr {
    fn name(&self) -> &'static str {
        ICA_CR
    }

    fn run(&self, ctx: &RunContext) -> Result<RunResult> {
        relaxed_scheme(ctx, ICA_CR, false)
    }
}

/// Continuous relaxation with a penalty pushing pairing and order to binary.
#[derive(Clone, Copy, Debug, Default)]
pub struct IcaCrPf;

impl Scheme for IcaCrPf {
    fn name(&self) -> &'static str {
        ICA_CR_PF
    }

    fn run(&self, ctx: &RunContext) -> Result<RunResult> {
        relaxed_scheme(ctx, ICA_CR_PF, true)
    }
}

/// Runs the fixed-association pipeline from a matched start.
fn fixed_run(ctx: &RunContext, inst: &Instance, opts: ProgramOptions, it: Iterate) -> (Iterate, RunStatus, Option<String>, Vec<TraceEntry>, usize) {
    let mut engine = Engine::new(inst, &ctx.params, ctx.backend.as_ref());
    let (it, status, note) = engine.fixed_pipeline(it, opts, ctx.params.max_iters);
    (it, status, note, engine.trace, engine.rejected)
}

/// Exhaustive search over every pairing and decoding order.
#[derive(Clone, Copy, Debug, Default)]
pub struct IcaBfs;

impl Scheme for IcaBfs {
    fn name(&self) -> &'static str {
        ICA_BFS
    }

    fn run(&self, ctx: &RunContext) -> Result<RunResult> {
        let start = Instant::now();
        let inst = match instance(ctx, ICA_BFS)? {
            Ok(i) => i,
            Err(r) => return Ok(r),
        };
        let assocs = enumerate_associations(inst.k, inst.l)?;
        let opts = ProgramOptions::fixed(DlModel::Noma, Objective::SumRate);
        let runs: Vec<_> = assocs
            .par_iter()
            .map(|a| {
                let it = Iterate::matched_start(&inst, a);
                fixed_run(ctx, &inst, opts, it)
            })
            .collect();
        let mut engine = Engine::new(&inst, &ctx.params, ctx.backend.as_ref());
        let mut best: Option<(bool, f64, usize)> = None;
        let mut skipped = 0;
        let mut finals = Vec::with_capacity(runs.len());
        for (idx, (it, status, note, trace, rejected)) in runs.into_iter().enumerate() {
            engine.absorb(trace, rejected);
            if status == RunStatus::InfeasibleInit {
                skipped += 1;
                finals.push(None);
                continue;
            }
            let (_, _, report) = exact_report(&inst, &it, &assocs[idx], DlModel::Noma)?;
            let key = (report.qos_ok(), report.total, idx);
            if best.is_none_or(|b| (key.0, key.1) > (b.0, b.1)) {
                best = Some(key);
            }
            finals.push(Some((it, status, note)));
        }
        let attempts = assocs.len();
        let Some((_, _, idx)) = best else {
            let mut r = infeasible_with_trace(ICA_BFS, "every association failed to initialize".into(), engine.trace, start);
            r.attempts = attempts;
            r.skipped = skipped;
            r.rejected = engine.rejected;
            return Ok(r);
        };
        let (it, status, note) = finals.swap_remove(idx).expect("best association has a run");
        let outcome = Outcome { it, assoc: assocs[idx].clone(), model: DlModel::Noma, status, note };
        let rejected = engine.rejected;
        let mut r = finish(ICA_BFS, &inst, outcome, engine.trace, start)?;
        r.rejected = rejected;
        r.attempts = attempts;
        r.skipped = skipped;
        Ok(r)
    }
}

fn random_association_scheme(ctx: &RunContext, name: &str, id: u64, model: DlModel, label: Option<&str>) -> Result<RunResult> {
    let start = Instant::now();
    let inst = match instance(ctx, name)? {
        Ok(i) => i,
        Err(r) => return Ok(r),
    };
    let assoc = Association::random(inst.k, inst.l, &mut scheme_rng(ctx, id));
    let it = Iterate::matched_start(&inst, &assoc);
    let (it, status, note, trace, rejected) = fixed_run(ctx, &inst, ProgramOptions::fixed(model, Objective::SumRate), it);
    let label = label.map(str::to_string);
    if status == RunStatus::InfeasibleInit {
        let mut r = infeasible_with_trace(name, note.unwrap_or_default(), trace, start);
        r.note = join_notes(label, r.note);
        r.rejected = rejected;
        return Ok(r);
    }
    let mut r = finish(name, &inst, Outcome { it, assoc, model, status, note: join_notes(label, note) }, trace, start)?;
    r.rejected = rejected;
    Ok(r)
}

/// Full-duplex NOMA with a uniformly random association.
#[derive(Clone, Copy, Debug, Default)]
pub struct FdNomaRua;

impl Scheme for FdNomaRua {
    fn name(&self) -> &'static str {
        FD_NOMA_RUA
    }

    fn run(&self, ctx: &RunContext) -> Result<RunResult> {
        random_association_scheme(ctx, FD_NOMA_RUA, 2, DlModel::Noma, None)
    }
}

/// Full duplex without downlink SIC: every other downlink beam is
/// interference. Uplink SIC keeps a random order.
#[derive(Clone, Copy, Debug, Default)]
pub struct FdConventional;

pub const FD_CONVENTIONAL_LABEL: &str = "reinterpreted baseline: downlink SIC disabled";

impl Scheme for FdConventional {
    fn name(&self) -> &'static str {
        FD_CONVENTIONAL
    }

    fn run(&self, ctx: &RunContext) -> Result<RunResult> {
        random_association_scheme(ctx, FD_CONVENTIONAL, 3, DlModel::NoSic, Some(FD_CONVENTIONAL_LABEL))
    }
}

/// Half duplex: downlink-only and uplink-only problems with a random
/// association; the reported SE is the mean of the two.
#[derive(Clone, Copy, Debug, Default)]
pub struct HdNoma;

impl Scheme for HdNoma {
    fn name(&self) -> &'static str {
        HD_NOMA
    }

    fn run(&self, ctx: &RunContext) -> Result<RunResult> {
        let start = Instant::now();
        let inst = match instance(ctx, HD_NOMA)? {
            Ok(i) => i,
            Err(r) => return Ok(r),
        };
        let assoc = Association::random(inst.k, inst.l, &mut scheme_rng(ctx, 4));
        let base = ProgramOptions::fixed(DlModel::Noma, Objective::SumRate);

        let dl_opts = ProgramOptions { ul: false, ..base };
        let dl_start = Iterate::new(Beamformers::matched(&inst.ch, 0.9), vec![0.0; inst.l], &assoc);
        let (dl_it, dl_status, dl_note, dl_trace, dl_rej) = fixed_run(ctx, &inst, dl_opts, dl_start);

        let ul_opts = ProgramOptions { dl: false, ..base };
        let ul_start = Iterate::new(Beamformers::zeros(2, inst.k, inst.n), vec![0.5; inst.l], &assoc);
        let (ul_it, ul_status, ul_note, ul_trace, ul_rej) = fixed_run(ctx, &inst, ul_opts, ul_start);

        let mut engine = Engine::new(&inst, &ctx.params, ctx.backend.as_ref());
        engine.absorb(dl_trace, dl_rej);
        engine.absorb(ul_trace, ul_rej);
        let note = join_notes(dl_note.map(|n| format!("downlink: {n}")), ul_note.map(|n| format!("uplink: {n}")));
        if dl_status == RunStatus::InfeasibleInit || ul_status == RunStatus::InfeasibleInit {
            let mut r = infeasible_with_trace(HD_NOMA, note.unwrap_or_default(), engine.trace, start);
            r.rejected = engine.rejected;
            return Ok(r);
        }
        let (w, _, dl_report) = exact_report(&inst, &dl_it, &assoc, DlModel::Noma)?;
        let (_, p, ul_report) = exact_report(&inst, &ul_it, &assoc, DlModel::Noma)?;
        let report = RateReport::from_rates(dl_report.dl, ul_report.ul, inst.r_dl, inst.r_ul);
        Ok(RunResult {
            scheme: HD_NOMA.to_string(),
            status: dl_status.worst(ul_status),
            final_se: report.total / 2.0,
            solution: Some(Solution { association: assoc, beamformers: w, powers: p, report, model: DlModel::Noma }),
            trace: engine.trace,
            attempts: 1,
            skipped: 0,
            rejected: engine.rejected,
            wallclock: start.elapsed(),
            note,
        })
    }
}
