use super::*;
use crate::association::DecodingOrder;
use crate::channel::{draw_channels, place_users, Preset};
use crate::conic::{solve, SolveStatus};
use crate::rates::ul_sinr_weighted;

fn instance(n: usize, k: usize, l: usize, seed: u64) -> Instance {
    let mut cfg = Preset::Desk.config();
    cfg.n_antennas = n;
    cfg.users_per_zone = k;
    cfg.n_uplink = l;
    cfg.p_ul_max = vec![cfg.p_ul_max[0]; l];
    let topo = place_users(&cfg, seed).unwrap();
    let ch = draw_channels(&topo, &cfg, seed).unwrap();
    let mut inst = Instance::new(&ch, &cfg).unwrap();
    // thresholds are irrelevant to the surrogate algebra and would make matched starts infeasible
    inst.r_dl = 0.0;
    inst.r_ul = 0.0;
    inst
}

fn prepared(inst: &Instance, assoc: &Association, family: Family, params: &SolverParams) -> Iterate {
    let mut it = Iterate::matched_start(inst, assoc);
    refresh(inst, &mut it, family, true, params.pairing_eps).unwrap();
    it
}

fn relaxed_exact_sum(inst: &Instance, it: &Iterate, eps: f64) -> f64 {
    let dl: f64 = relaxed_dl_sinrs(&inst.ch, &it.w, &it.p, &it.alpha, eps).iter().flatten().map(|s| s.ln_1p()).sum();
    let ul: f64 = (0..inst.l).map(|m| ul_sinr_weighted(&inst.ch, &it.w, &it.p, &it.beta, m).unwrap().ln_1p()).sum();
    dl + ul
}

fn seq(l: usize) -> Vec<usize> {
    (0..l).collect()
}

#[test]
fn complexity_counts_match_closed_forms() {
    let params = SolverParams::default();
    for n in 2..=8 {
        for k in 1..=3 {
            for l in 1..=3 {
                let inst = instance(n, k, l, (n * 100 + k * 10 + l) as u64);
                let assoc = Association::new(PairingMatrix::identity(k), DecodingOrder::from_sequence(&seq(l)));
                let it = prepared(&inst, &assoc, Family::Relaxed, &params);
                let mut opts = ProgramOptions::relaxed(Objective::SumRate);
                opts.penalty = Some(1.0);
                let sp = build_program(&inst, &it, opts, &params).unwrap();
                let sym3 = 2 * k * (n + 1) + l;
                let con3 = 8 * k + 3 * l + 1;
                assert_eq!(sp.counts.symbols, sym3 + 3 * k * k + l * l + l, "N={n} K={k} L={l}");
                assert_eq!(sp.counts.constraints, con3 + 6 * k * k + 3 * l * l, "N={n} K={k} L={l}");

                let it = prepared(&inst, &assoc, Family::Fixed(DlModel::Noma), &params);
                let sp = build_program(&inst, &it, ProgramOptions::fixed(DlModel::Noma, Objective::SumRate), &params).unwrap();
                assert_eq!(sp.counts, Counts { symbols: sym3, constraints: con3 }, "N={n} K={k} L={l}");
            }
        }
    }
}

#[test]
fn relaxed_program_is_tight_and_feasible_at_the_iterate() {
    let params = SolverParams::default();
    for seed in 0..5 {
        let inst = instance(4, 2, 3, seed);
        let mut assoc = Association::new(PairingMatrix::uniform(2), DecodingOrder::from_sequence(&[2, 0, 1]));
        if seed % 2 == 0 {
            assoc.pairing = PairingMatrix::from_permutation(&[1, 0]);
        }
        let it = prepared(&inst, &assoc, Family::Relaxed, &params);
        let sp = build_program(&inst, &it, ProgramOptions::relaxed(Objective::SumRate), &params).unwrap();
        let x = sp.encode(&it);
        let exact = relaxed_exact_sum(&inst, &it, params.pairing_eps);
        let model = sp.rate_objective.eval(&x);
        assert!((model - exact).abs() <= 1e-6 * exact.max(1.0), "seed {seed}: {model} vs {exact}");
        let viol = sp.program.max_violation(&x);
        assert!(viol <= 1e-7, "seed {seed}: {:?}", sp.program.violated(&x, 1e-7));
    }
}

#[test]
fn fixed_program_is_tight_and_feasible_at_the_iterate() {
    let params = SolverParams::default();
    for model in [DlModel::Noma, DlModel::NoSic] {
        for seed in 0..4 {
            let inst = instance(4, 2, 2, 10 + seed);
            let assoc = Association::new(PairingMatrix::from_permutation(&[1, 0]), DecodingOrder::from_sequence(&[1, 0]));
            let it = prepared(&inst, &assoc, Family::Fixed(model), &params);
            let sp = build_program(&inst, &it, ProgramOptions::fixed(model, Objective::SumRate), &params).unwrap();
            let x = sp.encode(&it);
            let exact = inst.report(&it, &assoc, model).unwrap().total;
            let value = sp.rate_objective.eval(&x);
            assert!((value - exact).abs() <= 1e-6 * exact.max(1.0), "{model:?} seed {seed}: {value} vs {exact}");
            assert!(sp.program.max_violation(&x) <= 1e-7, "{:?}", sp.program.violated(&x, 1e-7));
        }
    }
}

#[test]
fn qos_rows_equal_rate_margins_at_the_iterate() {
    let params = SolverParams::default();
    let mut inst = instance(4, 2, 2, 3);
    inst.r_dl = 0.5;
    inst.r_ul = 0.25;
    let assoc = Association::new(PairingMatrix::from_permutation(&[0, 1]), DecodingOrder::from_sequence(&[0, 1]));
    let it = prepared(&inst, &assoc, Family::Fixed(DlModel::Noma), &params);
    let sp = build_program(&inst, &it, ProgramOptions::fixed(DlModel::Noma, Objective::Eta), &params).unwrap();
    let x = sp.encode(&it);
    let report = inst.report(&it, &assoc, DlModel::Noma).unwrap();
    let rates: Vec<f64> = report.dl.iter().flatten().copied().chain(report.ul.iter().copied()).collect();
    assert_eq!(rates.len(), sp.qos.len());
    for ((label, row), r) in sp.qos.iter().zip(&rates) {
        let expect = if label.contains("ul") { r - inst.r_ul } else { r - inst.r_dl };
        assert!((row.eval(&x) - expect).abs() < 1e-7, "{label}");
    }
    let min = rates.iter().enumerate().map(|(i, r)| r - if i < 4 { inst.r_dl } else { inst.r_ul }).fold(f64::INFINITY, f64::min);
    assert!((sp.eta(&x).unwrap() - min).abs() < 1e-7);
}

#[test]
fn solved_surrogate_never_exceeds_the_exact_objective() {
    let params = SolverParams::default();
    for seed in 0..3 {
        let inst = instance(4, 2, 2, 20 + seed);
        let assoc = Association::new(PairingMatrix::from_permutation(&[1, 0]), DecodingOrder::from_sequence(&[0, 1]));
        let it = prepared(&inst, &assoc, Family::Fixed(DlModel::Noma), &params);
        let opts = ProgramOptions::fixed(DlModel::Noma, Objective::SumRate);
        let sp = build_program(&inst, &it, opts, &params).unwrap();
        let sol = solve(&sp.program).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed}");
        let next = sp.decode(&sol.x, &it);
        let surrogate = sp.rate_objective.eval(&sol.x);
        let exact = inst.report(&next, &assoc, DlModel::Noma).unwrap().total;
        let before = inst.report(&it, &assoc, DlModel::Noma).unwrap().total;
        assert!(surrogate <= exact + 1e-6, "seed {seed}: {surrogate} > {exact}");
        assert!(exact >= before - 1e-6, "seed {seed}: {exact} < {before}");
    }
}

#[test]
fn relaxed_solution_respects_the_minorant() {
    let params = SolverParams::default();
    let inst = instance(4, 2, 2, 7);
    let assoc = Association::new(PairingMatrix::uniform(2), DecodingOrder::from_sequence(&[1, 0]));
    let mut it = prepared(&inst, &assoc, Family::Relaxed, &params);
    let mut opts = ProgramOptions::relaxed(Objective::SumRate);
    opts.penalty = Some(1.0);
    for _ in 0..3 {
        let sp = build_program(&inst, &it, opts, &params).unwrap();
        let sol = solve(&sp.program).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let mut next = sp.decode(&sol.x, &it);
        refresh(&inst, &mut next, Family::Relaxed, true, params.pairing_eps).unwrap();
        let surrogate = sp.rate_objective.eval(&sol.x);
        let exact = relaxed_exact_sum(&inst, &next, params.pairing_eps);
        assert!(surrogate <= exact + 1e-5 * exact.max(1.0), "{surrogate} > {exact}");
        it = next;
    }
}

#[test]
fn instance_round_trips_physical_units() {
    let inst = instance(3, 2, 2, 1);
    let w = Beamformers::matched(&inst.ch, 0.5);
    let p = vec![0.3, 0.7];
    let (wp, pp) = inst.to_physical(&w, &p);
    let (w2, p2) = inst.to_normalized(&wp, &pp);
    for (a, b) in w.iter().zip(w2.iter()) {
        assert!((a - b).norm() < 1e-12);
    }
    for (a, b) in p.iter().zip(&p2) {
        assert!((a - b).abs() < 1e-12);
    }
    let assoc = Association::new(PairingMatrix::identity(2), DecodingOrder::from_sequence(&[0, 1]));
    let it = Iterate::new(w, p, &assoc);
    let norm = inst.report(&it, &assoc, DlModel::Noma).unwrap();
    let phys = total_se_with(&inst.physical, &wp, &pp, &assoc, inst.r_dl, inst.r_ul, DlModel::Noma).unwrap();
    assert!((norm.total - phys.total).abs() < 1e-9 * phys.total.max(1.0));
}
