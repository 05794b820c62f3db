//! Command-line front end: `check`, `converge` and `simulate`.
//!
//! Exit codes: 0 pass, 2 configuration error, 3 check or tolerance failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use crate::config::{random_masses, ConfigError, Quantity, RunConfig, SimCase};
use crate::error::Error;
use crate::kernel::FunctionOnX;
use crate::lab::{self, Audit, ConvergenceReport};
use crate::measures::{Hypothesis, SmoothMeasure, DEFAULT_KATO_TOL};
use crate::model::Model;
use crate::pathsim;
use crate::potential;
use crate::report::{self, WriteError};
use crate::timechange::{exact_fdd, laplace_residual, ExtensionKind, LAPLACE_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FAILED: i32 = 3;

/// Resolvent identity gate on the chain (induced sup norm).
pub const RESOLVENT_TOL_CHAIN: f64 = 1e-10;
/// Same gate on the interval, relative to the probe norm.
pub const RESOLVENT_TOL_INTERVAL: f64 = 1e-8;
/// Exact zero for degenerate inputs.
pub const DEGENERACY_TOL: f64 = 1e-14;
pub const LIPSCHITZ_SLACK: f64 = 1e-12;
pub const Z_GATE: f64 = 4.0;

#[derive(Debug, Parser)]
#[command(
    name = "tclab",
    version,
    about = "Time-change laboratory: structural checks, convergence experiments, Monte Carlo cross-validation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structural invariants of every configured measure.
    Check(RunArgs),
    /// Convergence experiments; one CSV per experiment and a JSON summary.
    Converge(RunArgs),
    /// Monte Carlo estimates against exact values.
    Simulate(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long = "n-max")]
    pub n_max: Option<usize>,
    /// `T:points`, e.g. `5:50`.
    #[arg(long = "grid-t", value_parser = parse_grid_t)]
    pub grid_t: Option<(f64, usize)>,
    /// Comma-separated rates, e.g. `1,2,5`.
    #[arg(long = "grid-alpha", value_delimiter = ',')]
    pub grid_alpha: Option<Vec<f64>>,
}

fn parse_grid_t(s: &str) -> Result<(f64, usize), String> {
    let (t, p) = s
        .split_once(':')
        .ok_or_else(|| format!("expected T:points, got {s:?}"))?;
    let t: f64 = t
        .trim()
        .parse()
        .map_err(|e| format!("bad T in {s:?}: {e}"))?;
    let p: usize = p
        .trim()
        .parse()
        .map_err(|e| format!("bad point count in {s:?}: {e}"))?;
    Ok((t, p))
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Write(#[from] WriteError),
    #[error("computation failed: {0}")]
    Compute(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            _ => EXIT_FAILED,
        }
    }
}

/// Load the config, apply the command-line overrides, and validate again.
pub fn resolve(args: &RunArgs) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(n) = args.n_max {
        cfg.grids.n_max = n;
        for e in &mut cfg.experiments {
            e.n_max = Some(n);
        }
    }
    if let Some((t, p)) = args.grid_t {
        cfg.grids.t_max = t;
        cfg.grids.t_points = p;
    }
    if let Some(a) = &args.grid_alpha {
        cfg.grids.alphas = a.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

type CommandFn = fn(&RunConfig) -> Result<bool, CliError>;

pub fn run(cli: Cli) -> i32 {
    let (args, f): (&RunArgs, CommandFn) = match &cli.command {
        Command::Check(a) => (a, cmd_check),
        Command::Converge(a) => (a, cmd_converge),
        Command::Simulate(a) => (a, cmd_simulate),
    };
    let cfg = match resolve(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match f(&cfg) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub measure: String,
    pub check: String,
    /// `None` when the check does not apply to this backend or measure.
    pub ok: Option<bool>,
    pub detail: serde_json::Value,
}

#[derive(Debug, Serialize)]
struct CheckReport<'a> {
    config: &'a RunConfig,
    checks: Vec<CheckEntry>,
    passed: bool,
}

fn entry<T: Serialize>(measure: &str, check: &str, ok: Option<bool>, detail: &T) -> CheckEntry {
    CheckEntry {
        measure: measure.into(),
        check: check.into(),
        ok,
        detail: serde_json::to_value(detail).unwrap_or(serde_json::Value::Null),
    }
}

/// Unsupported checks are recorded as not applicable; other errors fail the check.
fn record<T: Serialize>(
    out: &mut Vec<CheckEntry>,
    measure: &str,
    check: &str,
    r: crate::error::Result<T>,
    ok: impl FnOnce(&T) -> bool,
) {
    match r {
        Ok(v) => {
            let pass = ok(&v);
            out.push(entry(measure, check, Some(pass), &v));
        }
        Err(Error::Unsupported(msg)) => out.push(entry(measure, check, None, &msg)),
        Err(e) => out.push(entry(measure, check, Some(false), &e.to_string())),
    }
}

/// A function vanishing on the fine support but not identically, if one exists.
fn off_support_function(
    model: &Model,
    ops: &dyn crate::timechange::TimeChangedOperators,
) -> crate::error::Result<Option<FunctionOnX>> {
    let support = ops.support();
    if support.is_full() {
        return Ok(None);
    }
    match model {
        Model::Chain(c) => {
            let v = DVector::from_fn(
                c.len(),
                |i, _| if support.contains_state(i) { 0.0 } else { 1.0 },
            );
            Ok(Some(FunctionOnX::on_states(v)))
        }
        Model::Diffusion(d) => {
            if ops.measure().is_atomic() {
                let k = ops.measure().atoms().len();
                Ok(Some(
                    ops.extend(&DVector::zeros(k), ExtensionKind::Alternate)?,
                ))
            } else {
                let v = DVector::from_iterator(
                    d.grid_size(),
                    d.nodes().map(|x| {
                        if support.contains(x) {
                            0.0
                        } else {
                            x.min(1.0 - x)
                        }
                    }),
                );
                Ok(Some(FunctionOnX::on_grid(
                    v,
                    crate::kernel::FunctionClass::C0,
                )))
            }
        }
    }
}

#[derive(Debug, Serialize)]
struct Degeneracy {
    resolvent_sup: Vec<f64>,
    semigroup_sup: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct Lipschitz {
    worst_excess: f64,
}

/// Structural checks of one measure.
pub fn check_measure(
    cfg: &RunConfig,
    model: &Model,
    name: &str,
    mu: &SmoothMeasure,
) -> Vec<CheckEntry> {
    let mut out = Vec::new();
    let alphas = &cfg.check.alphas;
    let tol = match model {
        Model::Chain(_) => RESOLVENT_TOL_CHAIN,
        Model::Diffusion(_) => RESOLVENT_TOL_INTERVAL,
    };
    let mut pairs = Vec::new();
    for (i, a) in alphas.iter().enumerate() {
        for b in &alphas[i..] {
            pairs.push((*a, *b));
        }
    }
    let res: crate::error::Result<Vec<_>> = pairs
        .iter()
        .map(|(a, b)| potential::resolvent_equation_residual(model, mu, *a, *b))
        .collect();
    record(&mut out, name, "resolvent_equation", res, |v| {
        v.iter().all(|r| r.residual < tol && r.contraction_ok)
    });
    record(
        &mut out,
        name,
        "kato",
        model.is_green_kato(mu, DEFAULT_KATO_TOL),
        |k| k.kato,
    );
    let ops = match model.operators(mu) {
        Ok(o) => o,
        Err(e) => {
            out.push(entry(name, "operators", Some(false), &e.to_string()));
            return out;
        }
    };
    record(
        &mut out,
        name,
        "trace_validation",
        ops.trace().map(|t| t.validation_residual),
        |r| *r <= crate::timechange::VALIDATION_TOL,
    );
    let degenerate = off_support_function(model, ops.as_ref()).and_then(|u| match u {
        None => Err(Error::Unsupported("fine support is the whole space".into())),
        Some(u) => {
            let resolvent_sup = [0.5, 1.0, 2.0, 10.0]
                .iter()
                .map(|a| Ok(ops.resolvent(*a, &u)?.sup_norm()))
                .collect::<crate::error::Result<Vec<_>>>()?;
            let semigroup_sup = match [0.5, 1.0, 2.0]
                .iter()
                .map(|t| Ok(ops.semigroup(*t, &u)?.sup_norm()))
                .collect()
            {
                Ok(v) => v,
                Err(Error::Unsupported(_)) => Vec::new(),
                Err(e) => return Err(e),
            };
            Ok(Degeneracy {
                resolvent_sup,
                semigroup_sup,
            })
        }
    });
    record(&mut out, name, "degeneracy", degenerate, |d| {
        d.resolvent_sup
            .iter()
            .chain(&d.semigroup_sup)
            .all(|v| *v <= DEGENERACY_TOL)
    });
    // The limit is uniform only on C_0; on the interval the constant has a boundary layer.
    let (probe, limit_alphas) = match model {
        Model::Chain(_) => (model.constant(1.0), vec![1.0, 10.0, 1e2, 1e3, 1e4, 1e6]),
        Model::Diffusion(d) => (
            d.sample(
                |x| (std::f64::consts::PI * x).sin(),
                crate::kernel::FunctionClass::C0,
            ),
            vec![1.0, 10.0, 1e2, 1e3, 1e4],
        ),
    };
    record(
        &mut out,
        name,
        "strong_limit",
        potential::strong_limit_check(model, mu, &probe, &limit_alphas),
        |r| r.decreasing && r.envelope_ok,
    );
    let positive: Vec<f64> = alphas.iter().copied().filter(|a| *a > 0.0).collect();
    record(
        &mut out,
        name,
        "kernel_range",
        potential::kernel_range_check(model, mu, &positive),
        |r| r.passed(),
    );
    record(
        &mut out,
        name,
        "range_identity",
        potential::range_identity_check(model, mu, 1.0),
        |r| r.passed,
    );
    record(
        &mut out,
        name,
        "complete_maximum_principle",
        potential::cmp_check(model, mu, cfg.check.cmp_trials, cfg.seed),
        |r| r.violations == 0 && r.sub_markov_ok,
    );
    record(
        &mut out,
        name,
        "normality",
        potential::normality_check(model, mu),
        |r| r.consistent,
    );
    let probes = potential::probe_functions(model);
    let laplace = [1.0, 2.0, 5.0]
        .iter()
        .map(|a| {
            probes.iter().try_fold(0.0_f64, |m, u| {
                Ok(m.max(laplace_residual(ops.as_ref(), *a, u)?))
            })
        })
        .collect::<crate::error::Result<Vec<f64>>>();
    record(&mut out, name, "integrated_laplace", laplace, |v| {
        v.iter().all(|r| *r < LAPLACE_TOL)
    });
    let times = lab::time_grid(cfg.grids.t_max, cfg.grids.t_points).expect("validated");
    let lipschitz = integrated_lipschitz(ops.as_ref(), &probes, &times);
    record(&mut out, name, "integrated_lipschitz", lipschitz, |l| {
        l.worst_excess <= LIPSCHITZ_SLACK
    });
    out
}

/// `||S_t u - S_s u|| - |t - s| ||u||` on consecutive grid points and against `t = 0`.
fn integrated_lipschitz(
    ops: &dyn crate::timechange::TimeChangedOperators,
    probes: &[FunctionOnX],
    times: &[f64],
) -> crate::error::Result<Lipschitz> {
    let mut worst = f64::NEG_INFINITY;
    for u in probes {
        let s: Vec<FunctionOnX> = times
            .iter()
            .map(|t| ops.integrated(*t, u))
            .collect::<crate::error::Result<_>>()?;
        for i in 0..times.len() {
            for j in [0, i.saturating_sub(1)] {
                let d = s[i].sub(&s[j]).sup_norm() - (times[i] - times[j]).abs() * u.sup_norm();
                worst = worst.max(d);
            }
        }
    }
    Ok(Lipschitz {
        worst_excess: worst,
    })
}

pub fn cmd_check(cfg: &RunConfig) -> Result<bool, CliError> {
    let model = cfg.model().map_err(ConfigError::from)?;
    let names: Vec<String> = if cfg.check.measures.is_empty() {
        cfg.measures.keys().cloned().collect()
    } else {
        cfg.check.measures.clone()
    };
    let mut measures = Vec::new();
    for n in &names {
        measures.push((n.clone(), cfg.measure(&model, n)?));
    }
    if let Model::Chain(c) = &model {
        for (k, m) in random_masses(c.len(), cfg.seed, cfg.check.random_measures)
            .into_iter()
            .enumerate()
        {
            measures.push((format!("random_{k}"), SmoothMeasure::chain(m)?));
        }
    }
    let mut checks = Vec::new();
    for (n, mu) in &measures {
        checks.extend(check_measure(cfg, &model, n, mu));
    }
    let passed = checks.iter().all(|c| c.ok != Some(false));
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            let status = match c.ok {
                Some(true) => "pass",
                Some(false) => "FAIL",
                None => "n/a",
            };
            vec![c.measure.clone(), c.check.clone(), status.to_string()]
        })
        .collect();
    print!("{}", report::table(&["measure", "check", "status"], &rows));
    report::ensure_dir(&cfg.output)?;
    report::write_json(
        &cfg.output.join("check_report.json"),
        &CheckReport {
            config: cfg,
            checks,
            passed,
        },
    )?;
    println!("{}", if passed { "check: pass" } else { "check: FAIL" });
    Ok(passed)
}

#[derive(Debug, Serialize)]
pub struct SlopeEntry {
    pub test_id: String,
    pub param: String,
    pub slope: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct VerdictEntry {
    pub test_id: String,
    pub param: String,
    pub converges: bool,
    pub bound_ok: Option<bool>,
    pub subsequence_only: bool,
    pub final_error: f64,
}

#[derive(Debug, Serialize)]
pub struct HypothesisSummary {
    pub kato_ok: bool,
    pub vague_ok: bool,
    pub potential_ok: bool,
    pub declared: Vec<Hypothesis>,
}

#[derive(Debug, Serialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub theorem: String,
    pub status: &'static str,
    pub error: Option<String>,
    pub hypothesis_ok: bool,
    pub hypothesis: Option<HypothesisSummary>,
    pub slopes: Vec<SlopeEntry>,
    pub verdicts: Vec<VerdictEntry>,
    pub audits: Vec<Audit>,
    pub notes: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
struct ConvergeSummary<'a> {
    config: &'a RunConfig,
    experiments: Vec<ExperimentSummary>,
    passed: bool,
}

fn summarize(r: &ConvergenceReport) -> ExperimentSummary {
    ExperimentSummary {
        name: r.experiment.clone(),
        theorem: r.theorem.clone(),
        status: if r.passed { "passed" } else { "failed" },
        error: None,
        hypothesis_ok: r.hypothesis_ok,
        hypothesis: Some(HypothesisSummary {
            kato_ok: r.hypothesis.kato_ok,
            vague_ok: r.hypothesis.vague_ok,
            potential_ok: r.hypothesis.potential_ok,
            declared: r.hypothesis.declared.clone(),
        }),
        slopes: r
            .curves
            .iter()
            .map(|c| SlopeEntry {
                test_id: c.test_id.clone(),
                param: c.param.clone(),
                slope: c.slope,
            })
            .collect(),
        verdicts: r
            .curves
            .iter()
            .map(|c| VerdictEntry {
                test_id: c.test_id.clone(),
                param: c.param.clone(),
                converges: c.converges,
                bound_ok: c.bound_ok,
                subsequence_only: c.subsequence.is_some(),
                final_error: c.errors.last().copied().unwrap_or(f64::NAN),
            })
            .collect(),
        audits: r.audits.clone(),
        notes: r.notes.clone(),
        passed: r.passed,
    }
}

/// File-system-safe experiment name.
fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn cmd_converge(cfg: &RunConfig) -> Result<bool, CliError> {
    let model = cfg.model().map_err(ConfigError::from)?;
    report::ensure_dir(&cfg.output)?;
    let mut summaries = Vec::new();
    let mut table = Vec::new();
    for e in &cfg.experiments {
        let spec = cfg.experiment(&model, e)?;
        let path = cfg.output.join(format!("{}.csv", file_stem(&e.name)));
        let summary = match lab::run(&spec) {
            Ok(r) => {
                report::write_rows(&path, &r.rows())?;
                summarize(&r)
            }
            Err(err) => {
                let hypothesis = matches!(err, Error::HypothesisFailed(_) | Error::ModeMismatch(_));
                let rows: Vec<lab::ReportRow> = spec
                    .ns
                    .iter()
                    .map(|n| lab::ReportRow {
                        n: *n,
                        theorem: spec.theorem.name(),
                        test_id: "-".into(),
                        param: "-".into(),
                        sup_error: f64::NAN,
                        hypothesis_ok: false,
                    })
                    .collect();
                report::write_rows(&path, &rows)?;
                ExperimentSummary {
                    name: e.name.clone(),
                    theorem: spec.theorem.name(),
                    status: if hypothesis {
                        "hypothesis_failed"
                    } else {
                        "error"
                    },
                    error: Some(err.to_string()),
                    hypothesis_ok: false,
                    hypothesis: None,
                    slopes: Vec::new(),
                    verdicts: Vec::new(),
                    audits: Vec::new(),
                    notes: Vec::new(),
                    passed: false,
                }
            }
        };
        let slope = summary
            .slopes
            .first()
            .and_then(|s| s.slope)
            .map_or("-".to_string(), |s| format!("{s:.3}"));
        table.push(vec![
            summary.name.clone(),
            summary.theorem.clone(),
            summary.status.to_string(),
            slope,
        ]);
        summaries.push(summary);
    }
    let passed = summaries.iter().all(|s| s.passed);
    print!(
        "{}",
        report::table(&["experiment", "theorem", "status", "slope"], &table)
    );
    report::write_json(
        &cfg.output.join("converge_summary.json"),
        &ConvergeSummary {
            config: cfg,
            experiments: summaries,
            passed,
        },
    )?;
    Ok(passed)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimRow {
    pub quantity: String,
    pub exact: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub z: f64,
    pub paths: usize,
    pub truncated: usize,
}

impl SimRow {
    fn new(quantity: String, exact: f64, e: &pathsim::Estimate) -> Self {
        Self {
            quantity,
            exact,
            estimate: e.mean,
            stderr: e.stderr,
            z: e.z_score(exact),
            paths: e.paths,
            truncated: e.truncated,
        }
    }

    pub fn passed(&self) -> bool {
        self.z.abs() <= Z_GATE
    }
}

#[derive(Debug, Serialize)]
struct SimulateReport<'a> {
    config: &'a RunConfig,
    rows: Vec<SimRow>,
    passed: bool,
}

/// Exact value and Monte Carlo estimate(s) for one case.
pub fn simulate_case(
    cfg: &RunConfig,
    model: &Model,
    case: &SimCase,
    paths: usize,
) -> Result<Vec<SimRow>, CliError> {
    let Model::Chain(chain) = model else {
        return Err(ConfigError::Invalid(
            "simulation is available on the chain backend only".into(),
        )
        .into());
    };
    let mc = cfg.mc_config(paths);
    let mu = cfg.measure(model, &case.measure)?;
    let masses = mu.masses().expect("chain measure").clone();
    let ops = model.operators(&mu)?;
    let x = case.state;
    let fname = case.function.clone().unwrap_or_default();
    let label = |q: &str, p: String| format!("{q}[{},{},x={}{p}]", case.measure, fname, x);
    Ok(match case.quantity {
        Quantity::Semigroup => {
            let u = cfg.function(model, &fname)?;
            let exact = ops.semigroup(case.t, &u)?.values()[x];
            let e = pathsim::mc_semigroup(chain, &masses, case.t, u.values(), x, &mc)?;
            vec![SimRow::new(
                label("semigroup", format!(",t={}", case.t)),
                exact,
                &e,
            )]
        }
        Quantity::Resolvent => {
            let u = cfg.function(model, &fname)?;
            let exact = ops.resolvent(case.alpha, &u)?.values()[x];
            let e = pathsim::mc_resolvent(chain, &masses, case.alpha, u.values(), x, &mc)?;
            let p = format!(",alpha={}", case.alpha);
            vec![
                SimRow::new(label("resolvent_clock", p.clone()), exact, &e.clock),
                SimRow::new(label("resolvent_pcaf", p.clone()), exact, &e.pcaf),
                SimRow::new(label("resolvent_difference", p), 0.0, &e.difference),
            ]
        }
        Quantity::Apotential => {
            let u = cfg.function(model, &fname)?;
            let exact = potential::potential_apply(model, &mu, case.alpha, &u)?.values()[x];
            let e = pathsim::mc_apotential(chain, &masses, case.alpha, u.values(), x, &mc)?;
            vec![SimRow::new(
                label("apotential", format!(",alpha={}", case.alpha)),
                exact,
                &e,
            )]
        }
        Quantity::Fdd => {
            let init_name = case.init.clone().unwrap_or_else(|| case.measure.clone());
            let init = cfg.measure(model, &init_name)?;
            let fns: Vec<FunctionOnX> = case
                .functions
                .iter()
                .map(|f| cfg.function(model, f))
                .collect::<Result<_, _>>()?;
            let exact = exact_fdd(ops.as_ref(), &init, &case.times, &fns)?;
            let vals: Vec<DVector<f64>> = fns.iter().map(|f| f.values().clone()).collect();
            let e = pathsim::mc_fdd(
                chain,
                init.masses().expect("chain measure"),
                &masses,
                &case.times,
                &vals,
                &mc,
            )?;
            let q = format!(
                "fdd[{},init={},times={:?},fns={}]",
                case.measure,
                init_name,
                case.times,
                case.functions.join("/")
            );
            vec![SimRow::new(q, exact, &e)]
        }
    })
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<bool, CliError> {
    let model = cfg.model().map_err(ConfigError::from)?;
    let sim = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("config has no simulate section".into()))?;
    let mut rows = Vec::new();
    for case in &sim.cases {
        rows.extend(simulate_case(cfg, &model, case, sim.paths)?);
    }
    let passed = rows.iter().all(SimRow::passed);
    let shown: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.quantity.clone(),
                format!("{:.6e}", r.exact),
                format!("{:.6e}", r.estimate),
                format!("{:.2e}", r.stderr),
                format!("{:.2}", r.z),
            ]
        })
        .collect();
    print!(
        "{}",
        report::table(&["quantity", "exact", "estimate", "stderr", "z"], &shown)
    );
    report::ensure_dir(&cfg.output)?;
    report::write_csv(&cfg.output.join("simulate.csv"), &rows)?;
    report::write_json(
        &cfg.output.join("simulate_report.json"),
        &SimulateReport {
            config: cfg,
            rows,
            passed,
        },
    )?;
    Ok(passed)
}

/// Entry point for the binary.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
