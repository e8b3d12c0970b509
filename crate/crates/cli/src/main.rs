use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use stochsym::detgen::{self, DeterminingSystem};
use stochsym::dsl::{parse_candidate, parse_system, Candidate};
use stochsym::expr::{parse_expr, Scope, Symbol};
use stochsym::kpz::{self, KpzChain, KpzCheck};
use stochsym::mcsim::{self, McCandidate, SimConfig};
use stochsym::model::{fokker_planck_of, ItoSystem};
use stochsym::solve::{self, Ansatz, Generator, Which};
use stochsym::verify::{self, CheckKind, Verdict, VerificationReport, VerifyError};

const SCHEMA: u64 = 1;

/// Symmetries of Itô stochastic differential equations.
///
/// Output is JSON on stdout. Exit codes: 0 success or symmetry, 1 not a
/// symmetry or failed comparison, 2 bad input, 3 inconclusive, 4 runtime
/// failure.
#[derive(Parser)]
#[command(name = "stochsym", version)]
struct Cli {
    /// Emit JSON (the only output format; accepted for scripts).
    #[arg(long, global = true)]
    json: bool,
    /// Seed for all random sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Family-wise significance level of statistical comparisons.
    #[arg(long, global = true, default_value_t = 0.01)]
    significance: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SystemKind {
    Spatial,
    Projectable,
    Fp,
    W,
    Discrete,
}

impl From<SystemKind> for CheckKind {
    fn from(k: SystemKind) -> Self {
        match k {
            SystemKind::Spatial => CheckKind::Spatial,
            SystemKind::Projectable => CheckKind::Projectable,
            SystemKind::Fp => CheckKind::Fp,
            SystemKind::W => CheckKind::W,
            SystemKind::Discrete => CheckKind::Discrete,
        }
    }
}

#[derive(Args)]
struct SimArgs {
    /// Initial point, comma separated; zeros by default.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    t0: f64,
    #[arg(long, default_value_t = 1.0)]
    t1: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    /// Number of recorded intervals between t0 and t1.
    #[arg(long, default_value_t = 4)]
    slices: usize,
    /// Numeric parameter value, `name=value`; repeatable.
    #[arg(long = "param")]
    params: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fokker–Planck coefficients of a system.
    DeriveFp { file: PathBuf },
    /// Determining equations, for a candidate or for generic unknowns.
    Detsys {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "projectable")]
        system: SystemKind,
        #[arg(long)]
        candidate: Option<PathBuf>,
    },
    /// Checks a candidate against a system.
    Check {
        file: PathBuf,
        candidate: PathBuf,
        #[arg(long, value_enum, default_value = "projectable")]
        system: SystemKind,
    },
    /// Symmetries within a polynomial ansatz.
    Solve {
        file: PathBuf,
        #[arg(long, default_value_t = 1)]
        degree: u32,
        /// Comma-separated functions of t; `polyK` means 1, t, .., t^K.
        #[arg(long)]
        time_basis: Option<String>,
        /// Rate c adding exp(c t), exp(-c t), t exp(c t) to the default basis.
        #[arg(long = "rate", allow_hyphen_values = true)]
        rates: Vec<String>,
        /// Also search constant noise rotations.
        #[arg(long = "with-B")]
        with_b: bool,
        /// Keep the requested degree even when the noise forces affine xi.
        #[arg(long)]
        no_degree_cap: bool,
    },
    /// Euler–Maruyama ensemble; summary as JSON, samples optionally as binary.
    Simulate {
        file: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        /// Write the ensemble in the flat binary layout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo comparison of ensembles.
    McCheck {
        file: PathBuf,
        /// Push the ensemble through this candidate.
        #[arg(long, conflicts_with_all = ["against", "time_shift"])]
        candidate: Option<PathBuf>,
        /// Compare with another system started from the same point.
        #[arg(long, conflicts_with = "time_shift")]
        against: Option<PathBuf>,
        /// Compare with the same system started this much later.
        #[arg(long)]
        time_shift: Option<f64>,
        /// Size of a continuous candidate's finite step.
        #[arg(long, default_value_t = 1e-2)]
        epsilon: f64,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Symmetry checks of the discretized KPZ equation.
    Kpz {
        #[arg(long, default_value_t = 8)]
        sites: usize,
        /// Coefficient of the discrete Laplacian; symbolic if omitted.
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<String>,
        /// Coefficient of the squared gradient; symbolic if omitted.
        #[arg(long, allow_hyphen_values = true)]
        beta: Option<String>,
        /// time-shift, h-shift, site-shift, inversion:M or h-inversion.
        #[arg(long)]
        check: String,
        /// Also run the check through the general determining equations.
        #[arg(long)]
        cross_check: bool,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 4,
        }
    }
}

fn input<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Input(format!("{context}: {e}"))
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(input(&path.display().to_string()))
}

fn load_system(path: &Path) -> Result<ItoSystem, CliError> {
    parse_system(&read(path)?).map_err(input(&path.display().to_string()))
}

fn load_candidate(path: &Path, sys: &ItoSystem) -> Result<Candidate, CliError> {
    parse_candidate(&read(path)?, sys).map_err(input(&path.display().to_string()))
}

fn with_schema(mut v: Value) -> Value {
    if let Value::Object(map) = &mut v {
        map.insert("schema".into(), json!(SCHEMA));
    }
    v
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Symmetry => 0,
        Verdict::NotSymmetry => 1,
        Verdict::Inconclusive => 3,
    }
}

struct Output {
    value: Value,
    code: u8,
}

fn cmd_derive_fp(file: &Path) -> Result<Output, CliError> {
    let sys = load_system(file)?;
    let fp = fokker_planck_of(&sys).map_err(input("diffusion"))?;
    Ok(Output { value: json!({ "system": sys.name, "fokker_planck": fp.to_json() }), code: 0 })
}

fn cmd_detsys(file: &Path, kind: SystemKind, candidate: Option<&Path>) -> Result<Output, CliError> {
    let sys = load_system(file)?;
    let bad = input("determining system");
    let ds: DeterminingSystem = match candidate {
        Some(path) => {
            let c = load_candidate(path, &sys)?;
            match kind {
                SystemKind::Spatial => detgen::detsys_spatial(&sys, &c.vector_field(&sys).map_err(bad)?.xi),
                SystemKind::Projectable => detgen::detsys_projectable(&sys, &c.vector_field(&sys).map_err(bad)?),
                SystemKind::Fp => {
                    let fp = fokker_planck_of(&sys).map_err(bad)?;
                    let vf = c.vector_field(&sys).map_err(input("candidate"))?;
                    let vf = if vf.beta.is_none() { verify::extend_to_fp(&vf, &sys.vars).map_err(runtime)? } else { vf };
                    detgen::detsys_fp(&fp, &vf)
                }
                SystemKind::W => detgen::detsys_w(&sys, &c.w_symmetry(&sys).map_err(bad)?),
                SystemKind::Discrete => detgen::detsys_discrete(&sys, &c.discrete_map(&sys).map_err(bad)?),
            }
        }
        None => match kind {
            SystemKind::Spatial => detgen::detsys_spatial(&sys, &detgen::generic_field(&sys, false).0.xi),
            SystemKind::Projectable => {
                let (g, u) = detgen::generic_field(&sys, false);
                detgen::detsys_projectable_with(&sys, &g, &u)
            }
            SystemKind::Fp => {
                let fp = fokker_planck_of(&sys).map_err(bad)?;
                let (g, u) = detgen::generic_field(&sys, true);
                detgen::detsys_fp_with(&fp, &g, &u)
            }
            SystemKind::W => {
                let (g, u) = detgen::generic_w(&sys);
                detgen::detsys_w_with(&sys, &g, &u)
            }
            SystemKind::Discrete => {
                let (g, u) = detgen::generic_discrete(&sys);
                detgen::detsys_discrete_with(&sys, &g, &u)
            }
        },
    }
    .map_err(input("determining system"))?;
    Ok(Output { value: ds.to_json(), code: 0 })
}

fn check_candidate(sys: &ItoSystem, c: &Candidate, kind: SystemKind) -> Result<VerificationReport, CliError> {
    verify::check_candidate(sys, c, kind.into()).map_err(|e| match e {
        VerifyError::Model(_) | VerifyError::Precondition(_) => CliError::Input(format!("candidate: {e}")),
        other => CliError::Runtime(other.to_string()),
    })
}

fn cmd_check(file: &Path, candidate: &Path, kind: SystemKind) -> Result<Output, CliError> {
    let sys = load_system(file)?;
    let c = load_candidate(candidate, &sys)?;
    let report = check_candidate(&sys, &c, kind)?;
    let mut value = report.to_json();
    if let Some(name) = &c.name {
        value["candidate"] = json!(name);
    }
    Ok(Output { code: verdict_code(report.overall), value })
}

fn cmd_solve(
    file: &Path,
    degree: u32,
    time_basis: Option<&str>,
    rates: &[String],
    with_b: bool,
    no_degree_cap: bool,
) -> Result<Output, CliError> {
    let sys = load_system(file)?;
    let scope = sys.scope();
    let basis = match time_basis {
        Some(spec) => Ansatz::parse_basis(spec, &scope, &sys.time).map_err(input("--time-basis"))?,
        None => {
            let rates = rates
                .iter()
                .map(|r| parse_expr(r, &scope).map_err(input("--rate")))
                .collect::<Result<Vec<_>, _>>()?;
            Ansatz::default_basis(&sys.time, &rates)
        }
    };
    let mut ansatz = Ansatz::new(degree, basis, with_b, &sys.time).map_err(input("--time-basis"))?;
    ansatz.degree_cap = !no_degree_cap;
    let which = if with_b { Which::W } else { Which::Projectable };
    let result = solve::solve_ansatz(&sys, &ansatz, which).map_err(runtime)?;
    let mut value = result.to_json(&sys);
    value["system"] = json!(sys.name);
    value["hessian_constraint"] = serde_json::to_value(solve::xi_second_derivative_constraint(&sys)).map_err(runtime)?;
    let fields: Vec<_> = result.generators.iter().map(Generator::field).collect();
    if !with_b {
        value["closure"] = serde_json::to_value(solve::commutator_closure(&fields, &sys.vars, &sys.time))
            .map_err(runtime)?;
    }
    Ok(Output { value, code: 0 })
}

fn numeric_system(sys: &ItoSystem, params: &[String]) -> Result<ItoSystem, CliError> {
    let mut values = Vec::new();
    for p in params {
        let (name, v) = p.split_once('=').ok_or_else(|| CliError::Input(format!("--param '{p}' is not name=value")))?;
        let v: f64 = v.trim().parse().map_err(input("--param"))?;
        values.push((Symbol::new(name.trim()), v));
    }
    mcsim::with_numeric_params(sys, &values).map_err(input("--param"))
}

fn sim_setup(sys: &ItoSystem, sim: &SimArgs, seed: u64) -> Result<(ItoSystem, Vec<f64>, SimConfig), CliError> {
    let numeric = numeric_system(sys, &sim.params)?;
    let x0 = match &sim.x0 {
        Some(s) => s
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(input("--x0")))
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![0.0; sys.n()],
    };
    let cfg = SimConfig { t0: sim.t0, t1: sim.t1, dt: sim.dt, n_paths: sim.paths, seed, slices: sim.slices };
    Ok((numeric, x0, cfg))
}

fn mc_error(e: mcsim::McError) -> CliError {
    match e {
        mcsim::McError::Eval(_) | mcsim::McError::Config(_) | mcsim::McError::Unsupported(_) => {
            CliError::Input(e.to_string())
        }
        other => CliError::Runtime(other.to_string()),
    }
}

fn cmd_simulate(file: &Path, sim: &SimArgs, out: Option<&Path>, seed: u64) -> Result<Output, CliError> {
    let sys = load_system(file)?;
    let (numeric, x0, cfg) = sim_setup(&sys, sim, seed)?;
    let ens = mcsim::euler_maruyama(&numeric, &x0, &cfg).map_err(mc_error)?;
    if let Some(path) = out {
        let f = fs::File::create(path).map_err(input(&path.display().to_string()))?;
        ens.write_binary(std::io::BufWriter::new(f)).map_err(runtime)?;
    }
    let slices: Vec<Value> = (0..ens.times.len())
        .map(|k| {
            let moments: Vec<Value> = (0..ens.n)
                .map(|i| {
                    let (mean, var) = ens.moments(k, i);
                    json!({ "var": sys.vars[i].name(), "mean": mean, "variance": var })
                })
                .collect();
            json!({ "t": ens.times[k], "moments": moments })
        })
        .collect();
    let value = json!({
        "system": sys.name,
        "n_paths": ens.n_paths,
        "dt": ens.dt,
        "seed": ens.seed,
        "slices": slices,
        "output": out.map(|p| p.display().to_string()),
    });
    Ok(Output { value, code: 0 })
}

struct McArgs<'a> {
    candidate: Option<&'a Path>,
    against: Option<&'a Path>,
    time_shift: Option<f64>,
    epsilon: f64,
}

fn cmd_mc_check(file: &Path, mc: McArgs, sim: &SimArgs, seed: u64, significance: f64) -> Result<Output, CliError> {
    let sys = load_system(file)?;
    let (numeric, x0, cfg) = sim_setup(&sys, sim, seed)?;
    let report = if let Some(path) = mc.candidate {
        let c = load_candidate(path, &sys)?;
        let cand = if c.phi.is_empty() {
            let field = c.vector_field(&numeric).map_err(input("candidate"))?;
            McCandidate::Field { field, epsilon: mc.epsilon }
        } else {
            McCandidate::Discrete(c.discrete_map(&numeric).map_err(input("candidate"))?)
        };
        let numeric_cand = match cand {
            McCandidate::Field { mut field, epsilon } => {
                let sub = param_values(&sim.params)?;
                field.tau = field.tau.subs(&sub);
                field.xi = field.xi.iter().map(|e| e.subs(&sub)).collect();
                McCandidate::Field { field, epsilon }
            }
            d => d,
        };
        mcsim::validate_symmetry_mc(&numeric, &numeric_cand, &x0, &cfg, significance).map_err(mc_error)?
    } else if let Some(other) = mc.against {
        let other_sys = numeric_system(&load_system(other)?, &sim.params)?;
        let a = mcsim::euler_maruyama(&numeric, &x0, &cfg).map_err(mc_error)?;
        let b_cfg = SimConfig { seed: seed ^ mcsim::FRESH_SEED, ..cfg };
        let b = mcsim::euler_maruyama(&other_sys, &x0, &b_cfg).map_err(mc_error)?;
        mcsim::compare_ensembles(&a, &b, significance).map_err(mc_error)?
    } else if let Some(shift) = mc.time_shift {
        mcsim::compare_time_shift(&numeric, &x0, shift, &cfg, significance).map_err(mc_error)?
    } else {
        return Err(CliError::Input("give one of --candidate, --against or --time-shift".into()));
    };
    let mut value = report.to_json();
    value["system"] = json!(sys.name);
    Ok(Output { code: if report.pass { 0 } else { 1 }, value })
}

fn param_values(params: &[String]) -> Result<std::collections::BTreeMap<Symbol, stochsym::expr::Expr>, CliError> {
    params
        .iter()
        .map(|p| {
            let (name, v) = p.split_once('=').ok_or_else(|| CliError::Input(format!("--param '{p}' is not name=value")))?;
            let e = parse_expr(v.trim(), &Scope::permissive()).map_err(input("--param"))?;
            Ok((Symbol::new(name.trim()), e))
        })
        .collect()
}

fn cmd_kpz(
    sites: usize,
    alpha: Option<&str>,
    beta: Option<&str>,
    check: &str,
    cross_check: bool,
) -> Result<Output, CliError> {
    let coeff = |v: Option<&str>, name: &str| -> Result<_, CliError> {
        match v {
            Some(s) => parse_expr(s, &Scope::permissive()).map_err(input(name)),
            None => Ok(stochsym::expr::Expr::var(name)),
        }
    };
    let chain = KpzChain::new(sites, coeff(alpha, "alpha")?, coeff(beta, "beta")?).map_err(input("--sites"))?;
    let which: KpzCheck = check.parse().map_err(input("--check"))?;
    let report = kpz::run_check(&chain, which).map_err(runtime)?;
    let mut value = json!({
        "sites": sites,
        "alpha": chain.alpha.to_string(),
        "beta": chain.beta.to_string(),
        "check": check,
        "verdict": report.overall,
        "failing": report.failing().collect::<Vec<_>>(),
    });
    if cross_check {
        let general = kpz::run_check_general(&chain, which).map_err(runtime)?;
        value["general_verdict"] = json!(general.overall);
        value["agree"] = json!(general.overall == report.overall);
    }
    Ok(Output { code: verdict_code(report.overall), value })
}

fn run(cli: &Cli) -> Result<Output, CliError> {
    match &cli.command {
        Command::DeriveFp { file } => cmd_derive_fp(file),
        Command::Detsys { file, system, candidate } => cmd_detsys(file, *system, candidate.as_deref()),
        Command::Check { file, candidate, system } => cmd_check(file, candidate, *system),
        Command::Solve { file, degree, time_basis, rates, with_b, no_degree_cap } => {
            cmd_solve(file, *degree, time_basis.as_deref(), rates, *with_b, *no_degree_cap)
        }
        Command::Simulate { file, sim, out } => cmd_simulate(file, sim, out.as_deref(), cli.seed),
        Command::McCheck { file, candidate, against, time_shift, epsilon, sim } => {
            let mc = McArgs {
                candidate: candidate.as_deref(),
                against: against.as_deref(),
                time_shift: *time_shift,
                epsilon: *epsilon,
            };
            cmd_mc_check(file, mc, sim, cli.seed, cli.significance)
        }
        Command::Kpz { sites, alpha, beta, check, cross_check } => {
            cmd_kpz(*sites, alpha.as_deref(), beta.as_deref(), check, *cross_check)
        }
    }
}

fn emit(value: Value) {
    let text = serde_json::to_string_pretty(&with_schema(value)).expect("JSON output");
    // A closed pipe (e.g. `| head`) is not an error worth reporting.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            emit(out.value);
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            emit(json!({ "error": e.to_string() }));
            ExitCode::from(e.code())
        }
    }
}
