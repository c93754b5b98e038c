use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use age_metrics_core::analytic;
use age_metrics_core::optimizer::{self, Evaluator, FreeParam, Grid, SweepSpec};
use age_metrics_core::oracle::{self, build_chain, stationary, Limits};
use age_metrics_core::rng::replication_seed;
use age_metrics_core::simulator::{
    self, SlotRecord, TraceRecorder, DEFAULT_QUEUE_CAP, TRACE_LIMIT,
};
use age_metrics_core::verify::{self, VerifyConfig};
use age_metrics_core::{
    AgeStats, AnalyticError, Metric, OptimizeError, OracleError, ParamError, ScenarioParams,
    SimConfig, SimError, VerifyError,
};
use serde::{Deserialize, Serialize};

use crate::args::{
    ChainArgs, EvalArgs, EvaluatorArg, Format, OptimizeArgs, RerunArgs, SimulateArgs, SweepArgs,
    VerifyArgs,
};
use crate::manifest::{sidecar_path, RunManifest};
use crate::CliError;

pub const SIM_HEADER: &str = "scenario,lambda1,lambda2,horizon,seed,mean_aoi,ci_aoi,mean_aoa,ci_aoa,mean_aoai,ci_aoai,actuation_rate,nonstationary";

/// `NA(reason)` with separators that would break a CSV cell replaced.
pub fn na(reason: &str) -> String {
    let clean: String = reason
        .chars()
        .map(|c| {
            if matches!(c, ',' | '\n' | '\r' | '"') {
                ';'
            } else {
                c
            }
        })
        .collect();
    format!("NA({clean})")
}

/// Shortest round-trip form, switching to exponent notation for very small
/// or very large magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else if v.is_finite() {
        format!("{v:e}")
    } else {
        na("non-finite")
    }
}

fn opt(v: Option<f64>, missing: &str) -> String {
    v.map(num).unwrap_or_else(|| na(missing))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", p.display()))),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())
                .and_then(|_| so.flush())
                .map_err(|e| CliError::Runtime(e.to_string()))
        }
    }
}

fn write_manifest(out: Option<&Path>, m: &RunManifest) -> Result<(), CliError> {
    if let Some(p) = out {
        let side = sidecar_path(p);
        m.write(&side)
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", side.display())))?;
    }
    Ok(())
}

impl From<ParamError> for CliError {
    fn from(e: ParamError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Param(_) | SimError::Config(_) => CliError::Usage(e.to_string()),
            SimError::QueueOverflow { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<OptimizeError> for CliError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::Param(_) | OptimizeError::Grid(_) | OptimizeError::Undefined { .. } => {
                CliError::Usage(e.to_string())
            }
            OptimizeError::Analytic(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Param(_) | OracleError::Limits(_) | OracleError::Unstable { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Param(_) | VerifyError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<AnalyticError> for CliError {
    fn from(e: AnalyticError) -> Self {
        match e {
            AnalyticError::Param(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// What a simulate manifest records, enough to rerun it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateParameters {
    pub config: SimConfig,
    pub reps: usize,
    pub format: String,
    pub trace: bool,
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let params = ScenarioParams::new(args.scenario, args.l1, args.l2)?;
    let mut cfg = SimConfig::new(params, args.horizon, args.seed).with_batches(args.batches);
    if let Some(w) = args.warmup {
        cfg = cfg.with_warmup(w);
    }
    let cap = match args.queue_cap {
        Some(c) => c as usize,
        None if params.is_nonstationary() => args.horizon as usize,
        None => DEFAULT_QUEUE_CAP,
    };
    cfg = cfg.with_queue_cap(cap);
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    if args.trace.is_some() && args.reps != 1 {
        return Err(CliError::Usage("--trace needs --reps 1".into()));
    }
    let p = SimulateParameters {
        config: cfg,
        reps: args.reps,
        format: match args.format {
            Format::Csv => "csv".into(),
            Format::Json => "json".into(),
        },
        trace: args.trace.is_some(),
    };
    run_simulation(&p, args.out.as_deref(), args.trace.as_deref())
}

pub fn rerun(args: RerunArgs) -> Result<(), CliError> {
    let m = RunManifest::read(&args.manifest)
        .map_err(|e| CliError::Usage(format!("reading {}: {e}", args.manifest.display())))?;
    if m.command != "simulate" {
        return Err(CliError::Usage(format!(
            "cannot rerun a `{}` manifest",
            m.command
        )));
    }
    let mut p: SimulateParameters = serde_json::from_value(m.parameters)
        .map_err(|e| CliError::Usage(format!("malformed manifest parameters: {e}")))?;
    p.trace = false;
    run_simulation(&p, args.out.as_deref(), None)
}

fn run_simulation(
    p: &SimulateParameters,
    out: Option<&Path>,
    trace: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = &p.config;
    let stats = if let Some(path) = trace {
        let mut rec = TraceRecorder::new(TRACE_LIMIT.min(cfg.horizon));
        let stats = simulator::simulate_with(cfg, &mut rec)?;
        write_trace(path, &rec.records)?;
        stats
    } else {
        simulator::replicate(cfg, p.reps)?
    };
    let text = match p.format.as_str() {
        "json" => {
            let mut s = serde_json::to_string_pretty(&SimJson {
                config: cfg,
                reps: p.reps,
                stats,
            })
            .expect("stats serialize");
            s.push('\n');
            s
        }
        _ => format!("{SIM_HEADER}\n{}\n", sim_row(cfg, &stats)),
    };
    emit(out, &text)?;
    let seeds = (0..p.reps as u64)
        .map(|r| replication_seed(cfg.seed, r))
        .collect();
    let params = serde_json::to_value(p).expect("parameters serialize");
    write_manifest(
        out,
        &RunManifest::new("simulate", params, seeds, &["simulation"]),
    )
}

#[derive(Serialize)]
struct SimJson<'a> {
    config: &'a SimConfig,
    reps: usize,
    stats: AgeStats,
}

pub fn sim_row(cfg: &SimConfig, s: &AgeStats) -> String {
    let p = cfg.params;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        p.scenario,
        p.lambda1,
        p.lambda2,
        cfg.horizon,
        cfg.seed,
        num(s.mean_aoi),
        num(s.ci_aoi),
        num(s.mean_aoa),
        num(s.ci_aoa),
        num(s.mean_aoai),
        num(s.ci_aoai),
        num(s.actuation_rate),
        s.nonstationary
    )
}

fn write_trace(path: &Path, records: &[SlotRecord]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Runtime(format!("writing {}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(
        w,
        "slot,arrival,opportunity,actuated,aoi,aoa,aoai,queue_len,battery"
    )
    .map_err(io)?;
    for r in records {
        let battery = r
            .battery
            .map(|b| (b as u8).to_string())
            .unwrap_or_else(|| na("no battery"));
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.slot,
            r.events.arrival as u8,
            r.events.opportunity as u8,
            r.actuated as u8,
            r.ages.aoi,
            r.ages.aoa,
            r.ages.aoai,
            r.queue_len,
            battery
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let params = ScenarioParams::new(args.scenario, args.l1, args.l2)?;
    let metrics = args
        .metric
        .map(|m| vec![m])
        .unwrap_or_else(|| Metric::ALL.to_vec());
    let mut text = String::from("scenario,lambda1,lambda2,metric,value,near_instability\n");
    for m in metrics {
        let (value, flag) = match analytic::evaluate(&params, m) {
            Ok(e) => (num(e.value), e.near_instability.to_string()),
            Err(AnalyticError::Unstable { .. }) => (na("unstable"), "false".into()),
            Err(e) => return Err(e.into()),
        };
        writeln!(
            text,
            "{},{},{},{},{},{}",
            params.scenario, params.lambda1, params.lambda2, m, value, flag
        )
        .unwrap();
    }
    emit(args.out.as_deref(), &text)?;
    let manifest = RunManifest::new(
        "eval",
        serde_json::json!({ "params": params, "metric": args.metric }),
        vec![],
        &["analytic"],
    );
    write_manifest(args.out.as_deref(), &manifest)
}

/// Returns whether every comparison passed.
pub fn verify(args: VerifyArgs) -> Result<bool, CliError> {
    if args.theorem3 {
        let (l1, l2) = (args.l1.unwrap_or_default(), args.l2.unwrap_or_default());
        let c = verify::check_queue_patterns(l1, l2, args.hmax)?;
        let text = format!(
            "lambda1,lambda2,hmax,patterns,class_spread,gamma_error,level_error,queue_error,pass\n{},{},{},{},{},{},{},{},{}\n",
            c.lambda1,
            c.lambda2,
            c.h_max,
            c.patterns,
            num(c.class_spread),
            num(c.gamma_error),
            num(c.level_error),
            num(c.queue_error),
            c.pass
        );
        emit(args.out.as_deref(), &text)?;
        let manifest = RunManifest::new(
            "verify",
            serde_json::to_value(&c).unwrap(),
            vec![],
            &["analytic", "oracle"],
        );
        write_manifest(args.out.as_deref(), &manifest)?;
        eprintln!(
            "pattern-equivalence spread {:e}: {}",
            c.class_spread,
            if c.pass { "pass" } else { "FAIL" }
        );
        return Ok(c.pass);
    }

    let grid = Grid::new(args.grid.start, args.grid.stop, args.grid.step)?.points();
    let (oracle_tol, rel_tol) = match args.tol {
        Some(t) => (t, t),
        None => (args.oracle_tol, args.rel_tol),
    };
    let defaults = VerifyConfig::default();
    let cfg = VerifyConfig {
        scenarios: if args.scenarios.is_empty() {
            defaults.scenarios.clone()
        } else {
            args.scenarios.clone()
        },
        metrics: if args.metrics.is_empty() {
            defaults.metrics.clone()
        } else {
            args.metrics.clone()
        },
        lambda1: grid.clone(),
        lambda2: grid,
        slots: args.slots,
        seed: args.seed,
        oracle: !args.no_oracle,
        simulation: !args.no_sim,
        oracle_tol,
        rel_tol,
        ..defaults
    };
    let report = verify::run(&cfg)?;

    let mut text = String::from(
        "scenario,metric,lambda1,lambda2,analytic,oracle,oracle_bound,sim_mean,sim_ci,rel_error,in_ci,pass\n",
    );
    for c in &report.comparisons {
        let oracle_missing = c.oracle_note.as_deref().unwrap_or("not run");
        let sim_missing = if cfg.simulation { "no run" } else { "not run" };
        writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            c.scenario,
            c.metric,
            c.lambda1,
            c.lambda2,
            num(c.analytic),
            opt(c.oracle, oracle_missing),
            opt(c.oracle_bound, oracle_missing),
            opt(c.sim_mean, sim_missing),
            opt(c.sim_ci, sim_missing),
            opt(c.rel_error, sim_missing),
            c.in_nominal_ci
                .map(|b| b.to_string())
                .unwrap_or_else(|| na(sim_missing)),
            c.pass
        )
        .unwrap();
    }
    emit(args.out.as_deref(), &text)?;
    let seeds = if cfg.simulation {
        vec![cfg.seed]
    } else {
        vec![]
    };
    let manifest = RunManifest::new(
        "verify",
        serde_json::to_value(&cfg).unwrap(),
        seeds,
        &["analytic", "oracle", "simulation"],
    );
    write_manifest(args.out.as_deref(), &manifest)?;

    let failed = report.comparisons.iter().filter(|c| !c.pass).count();
    eprintln!(
        "{} comparisons, {failed} failed; {} of {} simulated means outside their 95% CI (at most {} expected by chance)",
        report.comparisons.len(),
        report.nominal_misses,
        report.sim_checks,
        report.allowed_misses
    );
    Ok(report.pass)
}

pub fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let free = if args.fix.which == 1 {
        FreeParam::Lambda2
    } else {
        FreeParam::Lambda1
    };
    let grid = Grid::new(args.grid.start, args.grid.stop, args.grid.step)?;
    let evaluator = match args.evaluator {
        EvaluatorArg::Analytic => Evaluator::Analytic,
        EvaluatorArg::Oracle => Evaluator::Oracle,
        EvaluatorArg::Simulation => Evaluator::Simulation {
            horizon: args.horizon,
            warmup: simulator::DEFAULT_WARMUP.min(args.horizon / 10),
            seed: args.seed,
            reps: args.reps.max(1),
            queue_cap: args.horizon as usize,
        },
    };
    let spec = SweepSpec {
        scenario: args.scenario,
        metric: args.metric,
        free,
        fixed: args.fix.value,
        grid,
        evaluator,
    };
    let curve = optimizer::sweep(&spec)?;

    let free_name = if free == FreeParam::Lambda1 {
        "lambda1"
    } else {
        "lambda2"
    };
    let mut text = String::from("scenario,metric,free,fixed,param,value,uncertainty\n");
    for c in &curve {
        let (value, unc) = match (&c.value, &c.error) {
            (Some(v), _) => (num(*v), opt(c.uncertainty, "exact")),
            (None, e) => {
                let reason = na(e.as_deref().unwrap_or("failed"));
                (reason.clone(), reason)
            }
        };
        writeln!(
            text,
            "{},{},{},{},{},{},{}",
            spec.scenario, spec.metric, free_name, spec.fixed, c.param, value, unc
        )
        .unwrap();
    }
    emit(args.out.as_deref(), &text)?;

    let values: Vec<f64> = curve.iter().filter_map(|c| c.value).collect();
    if values.len() >= 3 {
        let threshold = if matches!(evaluator, Evaluator::Simulation { .. }) {
            optimizer::noise_threshold(&curve)
        } else {
            0.0
        };
        let nm = optimizer::detect_nonmonotonicity(&values, threshold);
        eprintln!("nonmonotone={} argmin_index={}", nm.detected, nm.argmin);
    }
    let (provenance, seeds) = match evaluator {
        Evaluator::Analytic => ("analytic", vec![]),
        Evaluator::Oracle => ("oracle", vec![]),
        Evaluator::Simulation { seed, reps, .. } => (
            "simulation",
            (0..reps as u64)
                .map(|r| replication_seed(seed, r))
                .collect(),
        ),
    };
    let manifest = RunManifest::new(
        "sweep",
        serde_json::to_value(spec).unwrap(),
        seeds,
        &[provenance],
    );
    write_manifest(args.out.as_deref(), &manifest)
}

#[derive(Serialize)]
struct OptimizeOutput {
    #[serde(flatten)]
    report: optimizer::OptimumReport,
    nonmonotone: bool,
}

pub fn optimize(args: OptimizeArgs) -> Result<(), CliError> {
    if args.fix.which != 2 {
        return Err(CliError::Usage(
            "optimize searches over lambda1; fix lambda2 with --fix l2=<v>".into(),
        ));
    }
    let report = optimizer::minimize_lambda1(args.scenario, args.metric, args.fix.value, args.tol)?;
    let values: Vec<f64> = report.curve.iter().map(|c| c.1).collect();
    let nonmonotone = optimizer::detect_nonmonotonicity(&values, 0.0).detected;
    if let Some(path) = &args.curve {
        let mut text = String::from("lambda1,value\n");
        for (x, v) in &report.curve {
            writeln!(text, "{},{}", x, num(*v)).unwrap();
        }
        emit(Some(path), &text)?;
    }
    let out = OptimizeOutput {
        report,
        nonmonotone,
    };
    let mut text = serde_json::to_string_pretty(&out).expect("report serializes");
    text.push('\n');
    emit(args.out.as_deref(), &text)?;
    let manifest = RunManifest::new(
        "optimize",
        serde_json::json!({
            "scenario": args.scenario, "metric": args.metric, "lambda2": args.fix.value, "tol": args.tol
        }),
        vec![],
        &["analytic"],
    );
    write_manifest(args.out.as_deref(), &manifest)
}

pub fn chain(args: ChainArgs) -> Result<(), CliError> {
    let params = ScenarioParams::new(age_metrics_core::ScenarioTag::InfFcfs, args.l1, args.l2)?;
    let auto = Limits::auto(args.chain, &params);
    let mut limits = Limits::new(
        args.max_age.unwrap_or(auto.max_age),
        args.max_queue.unwrap_or(auto.max_queue),
        args.max_head.unwrap_or(auto.max_head),
    );
    limits.state_budget = auto.state_budget;
    let spec = build_chain(args.chain, &params, &limits)?;
    let mut buf = Vec::new();
    spec.write_csv(&mut buf)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    emit(
        args.out.as_deref(),
        std::str::from_utf8(&buf).expect("ascii"),
    )?;
    if let Some(path) = &args.stationary {
        let result = stationary(&spec, oracle::DEFAULT_TOL, oracle::DEFAULT_MAX_ITERS)?;
        let mut buf = Vec::new();
        spec.write_stationary_csv(&result, &mut buf)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        emit(Some(path), std::str::from_utf8(&buf).expect("ascii"))?;
        eprintln!(
            "states={} leaked_mass={:e} iterations={}",
            spec.len(),
            result.leaked_mass,
            result.iterations
        );
    }
    let manifest = RunManifest::new(
        "chain",
        serde_json::json!({ "chain": args.chain, "lambda1": args.l1, "lambda2": args.l2, "limits": limits }),
        vec![],
        &["oracle"],
    );
    write_manifest(args.out.as_deref(), &manifest)
}
