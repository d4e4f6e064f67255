//! Parameter sweeps over Monte Carlo cells, result CSVs, summaries and
//! per-iteration traces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{parse_schedule, Registry, RunContext, RunResult, RunStatus, TraceEntry};
use crate::channel::{dbm_to_watts, db_to_linear, draw_channels, place_users, ConfigFile, Preset, SystemConfig};
use crate::error::{Error, Result};
use crate::rates::nats_to_bits;
use crate::rng::{stream, Domain};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// dBm
    PBsMax,
    NAntennas,
    /// dB
    RhoSq,
    /// bits/s/Hz, applied to downlink and uplink alike
    RateThreshold,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::PBsMax => "p_bs_max",
            SweepAxis::NAntennas => "n_antennas",
            SweepAxis::RhoSq => "rho_sq",
            SweepAxis::RateThreshold => "rate_threshold",
        }
    }

    pub fn apply(self, cfg: &mut SystemConfig, value: f64) -> Result<()> {
        match self {
            SweepAxis::PBsMax => cfg.p_bs_max = dbm_to_watts(value),
            SweepAxis::NAntennas => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("antenna count must be a positive integer, got {value}")));
                }
                cfg.n_antennas = value as usize;
            }
            SweepAxis::RhoSq => cfg.rho_sq = db_to_linear(value),
            SweepAxis::RateThreshold => {
                cfg.rate_threshold_dl = value * std::f64::consts::LN_2;
                cfg.rate_threshold_ul = value * std::f64::consts::LN_2;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// TOML experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_preset")]
    pub preset: String,
    /// Overrides on top of the preset.
    #[serde(default)]
    pub config: ConfigFile,
    pub sweep: Sweep,
    pub schemes: Vec<String>,
    pub n_topologies: usize,
    pub n_realizations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Penalty schedule for `ica_cr_pf`, e.g. `"geometric:3"`.
    #[serde(default)]
    pub penalty: Option<String>,
}

fn default_preset() -> String {
    "desk".into()
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::Config("scheme list is empty".into()));
        }
        let reg = Registry::default();
        for s in &self.schemes {
            reg.get(s)?;
        }
        if self.n_topologies == 0 || self.n_realizations == 0 {
            return Err(Error::Config("topology and realization counts must be positive".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::Config("sweep has no values".into()));
        }
        if self.sweep.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        if let Some(p) = &self.penalty {
            parse_schedule(p)?;
        }
        for &v in &self.sweep.values {
            self.config_at(v)?;
        }
        Ok(())
    }

    pub fn base_config(&self) -> Result<SystemConfig> {
        self.config.resolve(Preset::parse(&self.preset)?)
    }

    /// Configuration at one sweep value, validated.
    pub fn config_at(&self, value: f64) -> Result<SystemConfig> {
        let mut cfg = self.base_config()?;
        self.sweep.axis.apply(&mut cfg, value)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Seeds of one Monte Carlo cell: topologies are shared across sweep values.
pub fn cell_seeds(seed: u64, topology: usize, realization: usize) -> (u64, u64) {
    let topo = stream(seed, Domain::Topology, topology as u64, 0).random();
    let chan = stream(seed, Domain::Channel, topology as u64, realization as u64).random();
    (topo, chan)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub topology: usize,
    pub realization: usize,
    pub scheme: String,
    pub se_bits: f64,
    pub durr: f64,
    pub qos_pass: bool,
    pub status: String,
    pub iterations: usize,
}

impl ResultRow {
    pub fn feasible(&self) -> bool {
        self.status == RunStatus::Converged.as_str() && self.qos_pass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub sweep_value: f64,
    pub topology: usize,
    pub realization: usize,
    pub scheme: String,
    pub wallclock_s: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
}

fn run_cell(spec: &ExperimentSpec, reg: &Registry, value: f64, t: usize, r: usize) -> Result<Vec<(ResultRow, TimingRow)>> {
    let cfg = spec.config_at(value)?;
    let (topo_seed, chan_seed) = cell_seeds(spec.seed, t, r);
    let topo = place_users(&cfg, topo_seed)?;
    let ch = draw_channels(&topo, &cfg, chan_seed)?;
    let mut ctx = RunContext::new(&ch, &cfg, chan_seed);
    if let Some(p) = &spec.penalty {
        ctx.schedule = parse_schedule(p)?;
    }
    spec.schemes
        .iter()
        .map(|name| {
            let res = reg.get(name)?.run(&ctx)?;
            Ok((row_of(value, t, r, &res), TimingRow {
                sweep_value: value,
                topology: t,
                realization: r,
                scheme: name.clone(),
                wallclock_s: res.wallclock.as_secs_f64(),
            }))
        })
        .collect()
}

fn row_of(value: f64, t: usize, r: usize, res: &RunResult) -> ResultRow {
    ResultRow {
        sweep_value: value,
        topology: t,
        realization: r,
        scheme: res.scheme.clone(),
        se_bits: nats_to_bits(res.final_se),
        durr: res.durr(),
        qos_pass: res.qos_ok(),
        status: res.status.as_str().to_string(),
        iterations: res.iterations(),
    }
}

/// Runs every sweep value x topology x realization x scheme. Cells run in
/// parallel on the current rayon pool; rows come back in a fixed order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let reg = Registry::default();
    let cells: Vec<(usize, usize, usize)> = (0..spec.sweep.values.len())
        .flat_map(|v| (0..spec.n_topologies).flat_map(move |t| (0..spec.n_realizations).map(move |r| (v, t, r))))
        .collect();
    let results: Vec<_> = cells
        .par_iter()
        .map(|&(v, t, r)| run_cell(spec, &reg, spec.sweep.values[v], t, r).map(|rows| ((v, t, r), rows)))
        .collect::<Result<_>>()?;
    let mut results = results;
    results.sort_by_key(|(k, _)| *k);
    let mut out = ExperimentOutput::default();
    for (_, rows) in results {
        for (row, timing) in rows {
            out.rows.push(row);
            out.timings.push(timing);
        }
    }
    Ok(out)
}

fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub const RESULT_HEADER: [&str; 9] =
    ["sweep_value", "topology", "realization", "scheme", "se_bits", "durr", "qos_pass", "status", "iterations"];

pub fn results_csv(rows: &[ResultRow]) -> Result<String> {
    to_csv(rows, &RESULT_HEADER)
}

pub fn timings_csv(rows: &[TimingRow]) -> Result<String> {
    to_csv(rows, &["sweep_value", "topology", "realization", "scheme", "wallclock_s"])
}

/// Parses a results CSV; errors name the offending line.
pub fn parse_results(text: &str) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Parse(format!("line 1: {e}")))?.clone();
    if header.iter().ne(RESULT_HEADER.iter().copied()) {
        return Err(Error::Parse(format!("line 1: expected header {}", RESULT_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse(format!("line {line}: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: ResultRow = rec.deserialize(Some(&header)).map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        if RunStatus::parse(&row.status).is_err() {
            return Err(Error::Parse(format!("line {line}: unknown status `{}`", row.status)));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub sweep_value: f64,
    pub scheme: String,
    pub runs: usize,
    pub mean_se_bits: f64,
    /// `100 (bfs - scheme) / bfs`; absent without `ica_bfs` rows.
    pub loss_vs_bfs_pct: Option<f64>,
    /// Share of runs that converged with every QoS target met.
    pub feasibility_rate: f64,
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    // keyed by the value's bit pattern so equal sweep values group exactly
    let mut groups: BTreeMap<(u64, String), (f64, Vec<&ResultRow>)> = BTreeMap::new();
    let mut order: Vec<(u64, String)> = Vec::new();
    for r in rows {
        let key = (r.sweep_value.to_bits(), r.scheme.clone());
        let g = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (r.sweep_value, Vec::new())
        });
        g.1.push(r);
    }
    let means: BTreeMap<(u64, String), f64> = groups
        .iter()
        .map(|(k, (_, rs))| (k.clone(), rs.iter().map(|r| r.se_bits).sum::<f64>() / rs.len() as f64))
        .collect();
    order
        .into_iter()
        .map(|key| {
            let (value, rs) = &groups[&key];
            let mean = means[&key];
            let loss = means.get(&(key.0, "ica_bfs".to_string())).and_then(|&b| (b != 0.0).then(|| 100.0 * (b - mean) / b));
            SummaryRow {
                sweep_value: *value,
                scheme: key.1.clone(),
                runs: rs.len(),
                mean_se_bits: mean,
                loss_vs_bfs_pct: loss,
                feasibility_rate: rs.iter().filter(|r| r.feasible()).count() as f64 / rs.len() as f64,
            }
        })
        .collect()
}

/// `x` with `digits` significant digits, trailing zeros trimmed.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    let s = if (-4..digits as i32).contains(&e) {
        let decimals = (digits as i32 - 1 - e).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // rounding may carry into a new digit (9.999995 -> 10.00000)
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{:.*e}", digits - 1, x);
        let (m, exp) = s.split_once('e').expect("exponent form");
        let m = if m.contains('.') { m.trim_end_matches('0').trim_end_matches('.') } else { m };
        format!("{m}e{exp}")
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

pub const SUMMARY_HEADER: &str = "sweep_value,scheme,runs,mean_se_bits,loss_vs_bfs_pct,feasibility_rate";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let loss = r.loss_vs_bfs_pct.map(|v| fmt_sig(v, 6)).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_sig(r.sweep_value, 6),
            r.scheme,
            r.runs,
            fmt_sig(r.mean_se_bits, 6),
            loss,
            fmt_sig(r.feasibility_rate, 6)
        );
    }
    out
}

/// Aggregate table of a results CSV.
pub fn emit_summary(results_csv: &str) -> Result<String> {
    Ok(summary_csv(&summarize(&parse_results(results_csv)?)))
}

pub const TRACE_HEADER: &str = "iteration,phase,segment,objective_nats,surrogate_nats,exact_se_nats,u_inf,rho";

pub fn trace_csv(trace: &[TraceEntry]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for e in trace {
        let rho = e.rho.map(|r| format!("{r}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            e.iteration,
            e.phase.as_str(),
            e.segment,
            e.objective,
            e.surrogate,
            e.exact_se,
            e.u_inf,
            rho
        );
    }
    out
}

/// One realization's run of `scheme` with the penalty base `a` (`rho = a^k`).
pub fn trace_convergence(cfg: &SystemConfig, scheme: &str, penalty_base: f64, seed: u64) -> Result<RunResult> {
    if !matches!(scheme, "ica_cr" | "ica_cr_pf") {
        return Err(Error::Config(format!("traces are recorded for ica_cr and ica_cr_pf, not `{scheme}`")));
    }
    if !(penalty_base > 1.0) {
        return Err(Error::Config(format!("penalty base must exceed 1, got {penalty_base}")));
    }
    cfg.validate()?;
    let (topo_seed, chan_seed) = cell_seeds(seed, 0, 0);
    let ch = draw_channels(&place_users(cfg, topo_seed)?, cfg, chan_seed)?;
    let mut ctx = RunContext::new(&ch, cfg, chan_seed);
    ctx.schedule = parse_schedule(&format!("geometric:{penalty_base}"))?;
    Registry::default().get(scheme)?.run(&ctx)
}

pub fn total_wallclock(timings: &[TimingRow]) -> Duration {
    Duration::from_secs_f64(timings.iter().map(|t| t.wallclock_s).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: f64, scheme: &str, se: f64, status: &str, qos: bool) -> ResultRow {
        ResultRow {
            sweep_value: v,
            topology: 0,
            realization: 0,
            scheme: scheme.into(),
            se_bits: se,
            durr: 1.0,
            qos_pass: qos,
            status: status.into(),
            iterations: 3,
        }
    }

    #[test]
    fn sig_digits() {
        assert_eq!(fmt_sig(44.418523, 6), "44.4185");
        assert_eq!(fmt_sig(0.5, 6), "0.5");
        assert_eq!(fmt_sig(100.0, 6), "100");
        assert_eq!(fmt_sig(9.9999996, 6), "10");
        assert_eq!(fmt_sig(1234567.0, 6), "1.23457e6");
        assert_eq!(fmt_sig(-0.000012345678, 6), "-1.23457e-5");
        assert_eq!(fmt_sig(0.0, 6), "0");
    }

    #[test]
    fn summary_single_row_equals_row() {
        let rows = vec![row(38.0, "hd_noma", 12.5, "converged", true)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mean_se_bits, 12.5);
        assert_eq!(s[0].feasibility_rate, 1.0);
        assert_eq!(s[0].loss_vs_bfs_pct, None);
    }

    #[test]
    fn loss_and_feasibility() {
        let rows = vec![
            row(1.0, "ica_bfs", 10.0, "converged", true),
            row(1.0, "ica_bfs", 20.0, "converged", true),
            row(1.0, "ica_cr", 9.0, "converged", true),
            row(1.0, "ica_cr", 18.0, "max_iters", true),
            row(1.0, "hd_noma", 0.0, "infeasible_init", false),
            row(1.0, "hd_noma", 5.0, "converged", false),
        ];
        let s = summarize(&rows);
        let get = |n: &str| s.iter().find(|r| r.scheme == n).unwrap();
        assert_eq!(get("ica_bfs").loss_vs_bfs_pct, Some(0.0));
        assert!((get("ica_cr").loss_vs_bfs_pct.unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(get("ica_cr").feasibility_rate, 0.5);
        assert_eq!(get("hd_noma").feasibility_rate, 0.0);
    }

    #[test]
    fn results_round_trip() {
        let rows = vec![row(0.5, "ica_cr", 1.0 / 3.0, "converged", true), row(4.0, "hd_noma", f64::NAN, "infeasible_init", false)];
        let text = results_csv(&rows).unwrap();
        let back = parse_results(&text).unwrap();
        assert_eq!(back[0], rows[0]);
        assert!(back[1].durr.is_finite() || back[1].durr.is_nan());
        assert_eq!(back[1].status, "infeasible_init");
    }

    #[test]
    fn parse_errors_name_the_line() {
        let mut text = results_csv(&[row(1.0, "ica_cr", 1.0, "converged", true)]).unwrap();
        text.push_str("1.0,0,0,ica_cr,not-a-number,1,true,converged,3\n");
        let err = parse_results(&text).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = parse_results("a,b\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        let mut text = results_csv(&[]).unwrap();
        text.push_str("1.0,0,0,ica_cr,1.0,1,true,exploded,3\n");
        assert!(parse_results(&text).unwrap_err().to_string().contains("line 2"));
    }

    #[test]
    fn spec_validation() {
        let ok = r#"
            schemes = ["hd_noma"]
            n_topologies = 1
            n_realizations = 1
            [sweep]
            axis = "p_bs_max"
            values = [38.0]
        "#;
        let spec = ExperimentSpec::parse(ok).unwrap();
        assert_eq!(spec.preset, "desk");
        assert!(ExperimentSpec::parse(&ok.replace("[\"hd_noma\"]", "[]")).is_err());
        assert!(ExperimentSpec::parse(&ok.replace("[\"hd_noma\"]", "[\"nope\"]")).is_err());
        assert!(ExperimentSpec::parse(&ok.replace("n_topologies = 1", "n_topologies = 0")).is_err());
        assert!(ExperimentSpec::parse(&ok.replace("p_bs_max", "bandwidth")).is_err());
        let ants = ok.replace("p_bs_max", "n_antennas").replace("38.0", "2.5");
        assert!(ExperimentSpec::parse(&ants).is_err());
    }

    #[test]
    fn axes_apply() {
        let mut cfg = Preset::Desk.config();
        SweepAxis::RateThreshold.apply(&mut cfg, 2.0).unwrap();
        assert!((cfg.rate_threshold_ul - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        SweepAxis::RhoSq.apply(&mut cfg, -100.0).unwrap();
        assert!((cfg.rho_sq - 1e-10).abs() < 1e-25);
        SweepAxis::PBsMax.apply(&mut cfg, 30.0).unwrap();
        assert!((cfg.p_bs_max - 1.0).abs() < 1e-12);
        SweepAxis::NAntennas.apply(&mut cfg, 6.0).unwrap();
        assert_eq!(cfg.n_antennas, 6);
    }

    #[test]
    fn hd_only_experiment_has_one_row_and_is_deterministic() {
        let spec = ExperimentSpec::parse(
            r#"
            schemes = ["hd_noma"]
            n_topologies = 1
            n_realizations = 1
            seed = 5
            [sweep]
            axis = "rate_threshold"
            values = [0.5]
        "#,
        )
        .unwrap();
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        let text = results_csv(&a.rows).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text, results_csv(&b.rows).unwrap());
    }
}
