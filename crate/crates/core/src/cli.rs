//! Command-line interface.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical error, 4 validation
//! failure, 5 infeasible resources.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::allocator::solve_system;
use crate::error::Error;
use crate::harness::{run_sweep, validate_scenario, Scenario, SweepVariable, Testbed};
use crate::outage::op_surface;
use crate::scenario_file::{load_scenario, ScenarioDocument, ScenarioError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_INFEASIBLE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "far-relay", version, about = "Outage analysis and resource allocation for fluid-antenna relay uplinks")]
pub struct Cli {
    /// Worker threads (default: all cores). Does not change any output.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Write CSV to this file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// AF/DF outage probabilities and the selected scheme over a power grid.
    OpSurface(OpSurfaceArgs),
    /// Copula CDF and outage probabilities against Monte Carlo.
    Validate(ValidateArgs),
    /// Powers, schemes and bandwidths of one fading realization.
    Optimize(OptimizeArgs),
    /// Benchmark sum rates over the scenario's sweep section.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct OpSurfaceArgs {
    pub scenario: PathBuf,
    /// User power range in watts, `LO:HI` (default: p_user_max/100 to p_user_max).
    #[arg(long, value_name = "LO:HI")]
    pub pu_range: Option<String>,
    /// Relay power range in watts, `LO:HI` (default: p_relay_max/100 to p_relay_max).
    #[arg(long, value_name = "LO:HI")]
    pub pr_range: Option<String>,
    /// Points per axis.
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// Rate threshold in bit/s/Hz (default: the scenario's).
    #[arg(long)]
    pub xi: Option<f64>,
    /// One-based user whose link budget is used.
    #[arg(long, default_value_t = 1)]
    pub user: usize,
    /// Space points geometrically instead of linearly.
    #[arg(long)]
    pub log: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub scenario: PathBuf,
    /// Monte Carlo samples per comparison.
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: usize,
    /// CDF levels between 0.1 and 5.
    #[arg(long, default_value_t = 20)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    pub scenario: PathBuf,
    /// Fading realization (trial index) to optimize for.
    #[arg(long, default_value_t = 0)]
    pub trial: u64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub scenario: PathBuf,
    /// Per value and scheme: mean, standard error and infeasible-trial count.
    #[arg(long)]
    pub summary: bool,
}

/// A failed command: exit code and message for stderr.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numerical(_) => EXIT_NUMERICAL,
            Error::InfeasibleBandwidth(_) | Error::InfeasiblePower(_) => EXIT_INFEASIBLE,
            Error::Domain(_) | Error::Feasibility(_) | Error::Invariant(_) => EXIT_INPUT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        let code = match &e {
            ScenarioError::Model { source, .. } => CliError::from(source.clone()).code,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Formats a float with nine significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.8e}")
}

fn parse_range(flag: &str, text: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::input(format!("--{flag} expects LO:HI with 0 <= LO <= HI, got `{text}`"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn axis(lo: f64, hi: f64, steps: usize, log: bool) -> Result<Vec<f64>, CliError> {
    if steps == 1 {
        return Ok(vec![lo]);
    }
    if log && lo <= 0.0 {
        return Err(CliError::input("--log needs a positive lower bound"));
    }
    let last = (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| {
            let f = i as f64 / last;
            if i + 1 == steps {
                hi
            } else if log {
                lo * (hi / lo).powf(f)
            } else {
                lo + (hi - lo) * f
            }
        })
        .collect())
}

fn load(path: &Path) -> Result<ScenarioDocument, CliError> {
    Ok(load_scenario(path)?)
}

fn op_surface_csv(a: &OpSurfaceArgs) -> Result<String, CliError> {
    let doc = load(&a.scenario)?;
    let sc = &doc.scenario;
    if a.user == 0 || a.user > sc.users.len() {
        return Err(CliError::input(format!(
            "--user must lie in 1..={}, got {}",
            sc.users.len(),
            a.user
        )));
    }
    if a.steps == 0 {
        return Err(CliError::input("--steps must be at least 1"));
    }
    let u = sc.users[a.user - 1];
    let pu = match &a.pu_range {
        Some(t) => parse_range("pu-range", t)?,
        None => (u.p_user_max / 100.0, u.p_user_max),
    };
    let pr = match &a.pr_range {
        Some(t) => parse_range("pr-range", t)?,
        None => (u.p_relay_max / 100.0, u.p_relay_max),
    };
    let xi = a.xi.unwrap_or(sc.xi);
    if !(xi.is_finite() && xi > 0.0) {
        return Err(CliError::input(format!("--xi must be positive, got {xi}")));
    }
    let pus = axis(pu.0, pu.1, a.steps, a.log)?;
    let prs = axis(pr.0, pr.1, a.steps, a.log)?;
    let points: Vec<(f64, f64)> = pus.iter().flat_map(|&p| prs.iter().map(move |&r| (p, r))).collect();
    let corr = sc.correlation_matrix()?;
    let surface = op_surface(&points, xi, &u.budget, &corr, &sc.mvn)?;
    let mut out = String::from("p_user_w,p_relay_w,xi,op_af,op_df,selection\n");
    for p in surface {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(p.p_user),
            fmt_f64(p.p_relay),
            fmt_f64(p.xi),
            fmt_f64(p.result.op_af),
            fmt_f64(p.result.op_df),
            p.result.selection
        );
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn validate_csv(a: &ValidateArgs) -> Result<(String, bool), CliError> {
    let doc = load(&a.scenario)?;
    let rows = validate_scenario(&doc.scenario, a.trials, a.points)?;
    let mut out = String::from("kind,user,p_user_w,p_relay_w,x,analytic,empirical,std_err,pass\n");
    for r in &rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.kind.name(),
            r.user.map(|u| u.to_string()).unwrap_or_default(),
            opt(r.p_user),
            opt(r.p_relay),
            opt(r.x),
            fmt_f64(r.analytic),
            fmt_f64(r.empirical),
            fmt_f64(r.std_err),
            r.pass
        );
    }
    Ok((out, rows.iter().all(|r| r.pass)))
}

fn optimize_csv(a: &OptimizeArgs) -> Result<String, CliError> {
    let doc = load(&a.scenario)?;
    let sc: &Scenario = &doc.scenario;
    let bed = Testbed::new(sc.clone())?;
    let gains = bed.fading(a.trial, false);
    let r = solve_system(&sc.users, sc.xi, sc.total_bw, &gains)?;
    let mut out =
        String::from("kind,user,p_user_w,p_relay_w,bandwidth_hz,scheme,snr,rate_bps,lead_user,sum_rate_bps,feasible\n");
    for (k, u) in r.users.iter().enumerate() {
        let _ = writeln!(
            out,
            "user,{},{},{},{},{},{},{},,,",
            k + 1,
            fmt_f64(u.p_user),
            fmt_f64(u.p_relay),
            fmt_f64(u.bandwidth),
            u.scheme,
            fmt_f64(u.snr),
            fmt_f64(u.rate)
        );
    }
    let _ = writeln!(out, "summary,,,,,,,,{},{},{}", r.lead + 1, fmt_f64(r.sum_rate), r.feasible);
    Ok(out)
}

fn sweep_csv(a: &SweepArgs) -> Result<String, CliError> {
    let doc = load(&a.scenario)?;
    let spec = doc
        .sweep
        .ok_or_else(|| CliError::input("scenario has no `sweep` section"))?;
    let table = run_sweep(&doc.scenario, &spec)?;
    let value = |v: f64| {
        if table.variable == SweepVariable::RelayPowerMax {
            fmt_f64(v)
        } else {
            format!("{}", v as u64)
        }
    };
    let mut out = String::new();
    if a.summary {
        out.push_str("sweep_value,scheme,mean_sum_rate_bps,std_err_bps,feasible_trials,excluded_trials\n");
        for s in &table.summaries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                value(s.value),
                s.scheme,
                fmt_f64(s.mean),
                fmt_f64(s.std_err),
                s.feasible_trials,
                s.excluded_trials
            );
        }
    } else {
        out.push_str("sweep_value,scheme,trial,sum_rate_bps,feasible\n");
        for r in &table.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                value(r.value),
                r.scheme,
                r.trial,
                fmt_f64(r.sum_rate),
                r.feasible
            );
        }
    }
    Ok(out)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::input(format!("cannot write output: {e}")))
        }
    }
}

/// Runs a parsed command and returns its exit code.
pub fn execute(cli: &Cli) -> Result<i32, CliError> {
    let (text, code) = match &cli.command {
        Command::OpSurface(a) => (op_surface_csv(a)?, EXIT_OK),
        Command::Validate(a) => {
            let (text, pass) = validate_csv(a)?;
            (text, if pass { EXIT_OK } else { EXIT_VALIDATION })
        }
        Command::Optimize(a) => (optimize_csv(a)?, EXIT_OK),
        Command::Sweep(a) => (sweep_csv(a)?, EXIT_OK),
    };
    emit(cli.out.as_deref(), &text)?;
    if code == EXIT_VALIDATION {
        eprintln!("validation failed: copula and Monte Carlo disagree beyond the budget");
    }
    Ok(code)
}

/// Parses `args`, runs the command in a pool of the requested size and
/// reports errors on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    if cli.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return EXIT_INPUT;
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_NUMERICAL;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
