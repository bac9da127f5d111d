//! Monte Carlo checks of the copula model, benchmark schemes and parameter
//! sweeps.
//!
//! Trial `t` of user `k` draws its fading from substream `(t << 16) | k` of
//! the scenario seed. The FAS and TAS receivers share that stream, and since
//! port 0 of a FAS draw consumes the same normals as the single TAS port, the
//! two are compared under common random numbers.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::allocator::{
    allocate_bandwidth, optimize_powers, rate, scheme_region, snr_for, solve_system, AllocationResult,
    PowerDecision, SnrTriple, UserConfig,
};
use crate::channel::{sample_best_gain_sq, CorrelationMatrix, PortGrid};
use crate::error::{Error, Result};
use crate::mvncdf::MvnConfig;
use crate::outage::{
    best_gain_cdf_batch, outage_probabilities, outage_threshold, LinkBudget, OutageQuery, Scheme,
};
use crate::stream::{derive_seed, substream};

/// Minimum number of samples for the empirical estimators.
pub const MIN_EMPIRICAL_TRIALS: usize = 10_000;
const BLOCK: usize = 4096;
const USER_BITS: u32 = 16;
const POWER_SEED_SALT: u64 = 0x706f_7765_72;

fn fading_stream(trial: u64, user: usize) -> u64 {
    (trial << USER_BITS) | user as u64
}

/// Multi-user system together with the Monte Carlo settings.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Users ordered by increasing average channel gain.
    pub users: Vec<UserConfig>,
    pub grid: PortGrid,
    /// Total bandwidth in Hz.
    pub total_bw: f64,
    /// Outage rate threshold in bit/s/Hz.
    pub xi: f64,
    pub seed: u64,
    pub trials: usize,
    /// Replaces the grid-derived port correlation when present.
    pub correlation: Option<CorrelationMatrix>,
    pub mvn: MvnConfig,
}

impl Scenario {
    pub fn new(users: Vec<UserConfig>, grid: PortGrid, total_bw: f64, xi: f64, seed: u64, trials: usize) -> Result<Self> {
        let s = Self {
            users,
            grid,
            total_bw,
            xi,
            seed,
            trials,
            correlation: None,
            mvn: MvnConfig::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users.is_empty() {
            return Err(Error::domain("scenario needs at least one user"));
        }
        if self.users.len() >= 1 << USER_BITS {
            return Err(Error::domain("too many users"));
        }
        if self.trials == 0 {
            return Err(Error::domain("scenario needs at least one trial"));
        }
        if !(self.total_bw.is_finite() && self.total_bw > 0.0) {
            return Err(Error::domain(format!("total bandwidth must be positive, got {}", self.total_bw)));
        }
        if !(self.xi.is_finite() && self.xi > 0.0) {
            return Err(Error::domain(format!("rate threshold must be positive, got {}", self.xi)));
        }
        if let Some(c) = &self.correlation {
            if c.dim() != self.grid.num_ports() {
                return Err(Error::Invariant(format!(
                    "correlation override is {}x{} but the grid has {} ports",
                    c.dim(),
                    c.dim(),
                    self.grid.num_ports()
                )));
            }
        }
        self.mvn.validate()
    }

    pub fn c_th(&self) -> f64 {
        outage_threshold(self.xi)
    }

    /// Port correlation used for the FAS receivers.
    pub fn correlation_matrix(&self) -> Result<CorrelationMatrix> {
        match &self.correlation {
            Some(c) => Ok(c.clone()),
            None => CorrelationMatrix::from_grid(&self.grid),
        }
    }

    /// Defaults of the reference setup: four users on a 4x4 grid spanning one
    /// wavelength, 5 MHz, -120 dBm noise and a 0.5 Mbit/s threshold.
    pub fn paper_default() -> Self {
        let noise = dbm_to_watts(-120.0);
        let users = (1..=4)
            .map(|k| {
                let k = k as f64;
                let lb = LinkBudget::new(
                    db_to_linear(-112.0 + 2.0 * k),
                    db_to_linear(-135.0 + 2.0 * k),
                    db_to_linear(-105.0 + 2.0 * k),
                    noise,
                    noise,
                )
                .expect("positive gains");
                UserConfig::with_derived_min(lb, 0.1, 0.1, 0.5e6, 0.1).expect("feasible defaults")
            })
            .collect();
        Self::new(users, PortGrid::new(4, 4, 1.0, 1.0).expect("valid grid"), 5e6, 0.1, 2024, 100)
            .expect("valid defaults")
    }
}

/// `10^(dB / 10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `10^((dBm - 30) / 10)` watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

/// One row of an empirical CDF table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalPoint {
    pub x: f64,
    pub cdf: f64,
    /// Binomial standard error.
    pub std_err: f64,
}

/// Sample mean of an event indicator and its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalEstimate {
    pub value: f64,
    pub std_err: f64,
}

fn binomial(hits: usize, n: usize) -> EmpiricalEstimate {
    let p = hits as f64 / n as f64;
    EmpiricalEstimate {
        value: p,
        std_err: (p * (1.0 - p) / n as f64).sqrt(),
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_EMPIRICAL_TRIALS {
        return Err(Error::domain(format!(
            "empirical estimates need at least {MIN_EMPIRICAL_TRIALS} trials, got {trials}"
        )));
    }
    Ok(())
}

/// Counts, over `trials` best-gain draws, how many satisfy each predicate.
/// Block `b` of samples uses substream `b` of `seed`.
fn count_events(corr: &CorrelationMatrix, trials: usize, seed: u64, events: &(impl Fn(f64, &mut [usize]) + Sync), width: usize) -> Vec<usize> {
    let blocks = trials.div_ceil(BLOCK);
    let partial: Vec<Vec<usize>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut counts = vec![0usize; width];
            let mut rng = substream(seed, b as u64);
            let n = BLOCK.min(trials - b * BLOCK);
            for _ in 0..n {
                events(sample_best_gain_sq(corr, &mut rng), &mut counts);
            }
            counts
        })
        .collect();
    partial.into_iter().fold(vec![0; width], |mut acc, c| {
        acc.iter_mut().zip(c).for_each(|(a, v)| *a += v);
        acc
    })
}

/// Empirical CDF of the best-port squared gain at each level in `xs`.
pub fn empirical_best_gain_cdf(corr: &CorrelationMatrix, xs: &[f64], trials: usize, seed: u64) -> Result<Vec<EmpiricalPoint>> {
    check_trials(trials)?;
    let counts = count_events(
        corr,
        trials,
        seed,
        &|g, counts: &mut [usize]| {
            for (c, &x) in counts.iter_mut().zip(xs) {
                *c += (g <= x) as usize;
            }
        },
        xs.len(),
    );
    Ok(xs
        .iter()
        .zip(counts)
        .map(|(&x, hits)| {
            let e = binomial(hits, trials);
            EmpiricalPoint {
                x,
                cdf: e.value,
                std_err: e.std_err,
            }
        })
        .collect())
}

/// Fraction of sampled user->relay gains for which `scheme` is in outage,
/// with mean SNRs on the user->BS and relay->BS links.
pub fn empirical_outage(
    q: &OutageQuery,
    lb: &LinkBudget,
    corr: &CorrelationMatrix,
    scheme: Scheme,
    trials: usize,
    seed: u64,
) -> Result<EmpiricalEstimate> {
    check_trials(trials)?;
    if !q.is_feasible(lb) {
        return Ok(EmpiricalEstimate {
            value: 1.0,
            std_err: 0.0,
        });
    }
    let c_th = q.c_th();
    let counts = count_events(
        corr,
        trials,
        seed,
        &|g, counts: &mut [usize]| {
            let snr = snr_for(scheme, q.p_user, q.p_relay, &SnrTriple::instantaneous(lb, g));
            counts[0] += (snr < c_th) as usize;
        },
        1,
    );
    Ok(binomial(counts[0], trials))
}

/// Reference and benchmark resource-allocation schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchScheme {
    /// Optimized powers and bandwidth with fluid-antenna relays.
    Proposed,
    /// Same optimization with single-port relays.
    Tas,
    /// Optimized powers, equal bandwidth shares.
    AvgBandwidth,
    /// Uniformly random powers, optimized bandwidth.
    RandomPower,
}

impl BenchScheme {
    pub const ALL: [BenchScheme; 4] = [
        BenchScheme::Proposed,
        BenchScheme::Tas,
        BenchScheme::AvgBandwidth,
        BenchScheme::RandomPower,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchScheme::Proposed => "proposed",
            BenchScheme::Tas => "tas",
            BenchScheme::AvgBandwidth => "avg_bandwidth",
            BenchScheme::RandomPower => "random_power",
        }
    }
}

impl fmt::Display for BenchScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchScheme::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown scheme `{s}`")))
    }
}

/// Result of one benchmark trial. Infeasible trials carry zero rates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub sum_rate: f64,
    pub rates: Vec<f64>,
    pub feasible: bool,
    /// Failing constraint of an infeasible trial.
    pub reason: Option<String>,
    pub allocation: Option<AllocationResult>,
}

impl TrialOutcome {
    fn from_result(k: usize, r: Result<AllocationResult>) -> Result<Self> {
        match r {
            Ok(a) => Ok(Self {
                sum_rate: a.sum_rate,
                rates: a.users.iter().map(|u| u.rate).collect(),
                feasible: true,
                reason: None,
                allocation: Some(a),
            }),
            Err(e) if e.is_infeasible() => Ok(Self {
                sum_rate: 0.0,
                rates: vec![0.0; k],
                feasible: false,
                reason: Some(e.to_string()),
                allocation: None,
            }),
            Err(e) => Err(e),
        }
    }
}

/// Scenario with its correlation matrices built once.
#[derive(Debug, Clone)]
pub struct Testbed {
    scenario: Scenario,
    fas: CorrelationMatrix,
    tas: CorrelationMatrix,
}

impl Testbed {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let fas = scenario.correlation_matrix()?;
        let tas = CorrelationMatrix::identity(1)?;
        Ok(Self { scenario, fas, tas })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Best-port squared gain of every user in `trial`.
    pub fn fading(&self, trial: u64, single_port: bool) -> Vec<f64> {
        let corr = if single_port { &self.tas } else { &self.fas };
        (0..self.scenario.users.len())
            .map(|k| sample_best_gain_sq(corr, &mut substream(self.scenario.seed, fading_stream(trial, k))))
            .collect()
    }

    pub fn run(&self, scheme: BenchScheme, trial: u64) -> Result<TrialOutcome> {
        let sc = &self.scenario;
        let k = sc.users.len();
        let result = match scheme {
            BenchScheme::Proposed => solve_system(&sc.users, sc.xi, sc.total_bw, &self.fading(trial, false)),
            BenchScheme::Tas => solve_system(&sc.users, sc.xi, sc.total_bw, &self.fading(trial, true)),
            BenchScheme::AvgBandwidth => self.equal_bandwidth(trial),
            BenchScheme::RandomPower => self.random_powers(trial),
        };
        TrialOutcome::from_result(k, result)
    }

    fn optimized_decisions(&self, gains: &[f64]) -> Result<Vec<PowerDecision>> {
        let c_th = self.scenario.c_th();
        self.scenario
            .users
            .iter()
            .zip(gains)
            .map(|(u, &g)| optimize_powers(u, c_th, &SnrTriple::instantaneous(&u.budget, g)))
            .collect()
    }

    fn equal_bandwidth(&self, trial: u64) -> Result<AllocationResult> {
        let sc = &self.scenario;
        let decisions = self.optimized_decisions(&self.fading(trial, false))?;
        let share = sc.total_bw / sc.users.len() as f64;
        for (k, (d, u)) in decisions.iter().zip(&sc.users).enumerate() {
            if rate(share, d.snr) < u.rate_min {
                return Err(Error::InfeasibleBandwidth(format!(
                    "user {k} reaches {} bit/s on an equal share, needs {}",
                    rate(share, d.snr),
                    u.rate_min
                )));
            }
        }
        let lead = decisions
            .iter()
            .enumerate()
            .fold(0, |b, (k, d)| if d.snr > decisions[b].snr { k } else { b });
        Ok(AllocationResult::assemble(&decisions, &vec![share; decisions.len()], lead, true))
    }

    fn random_powers(&self, trial: u64) -> Result<AllocationResult> {
        let sc = &self.scenario;
        let c_th = sc.c_th();
        let gains = self.fading(trial, false);
        let power_seed = derive_seed(sc.seed, POWER_SEED_SALT);
        let decisions = sc
            .users
            .iter()
            .zip(&gains)
            .enumerate()
            .map(|(k, (u, &g))| {
                u.check_guard(c_th)?;
                let mut rng = substream(power_seed, fading_stream(trial, k));
                let pu = rng.random_range(u.p_user_min..=u.p_user_max);
                let pr = rng.random_range(u.p_relay_min..=u.p_relay_max);
                let s = SnrTriple::instantaneous(&u.budget, g);
                let scheme = scheme_region(pu, pr, c_th, s.gamma_ub, s.gamma_rb)?;
                Ok(PowerDecision {
                    p_user: pu,
                    p_relay: pr,
                    scheme,
                    snr: snr_for(scheme, pu, pr, &s),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let snrs: Vec<f64> = decisions.iter().map(|d| d.snr).collect();
        let mins: Vec<f64> = sc.users.iter().map(|u| u.rate_min).collect();
        let plan = allocate_bandwidth(&snrs, &mins, sc.total_bw)?;
        Ok(AllocationResult::assemble(&decisions, &plan.bandwidth, plan.lead, true))
    }
}

/// One trial of one benchmark scheme.
pub fn run_benchmark(scenario: &Scenario, scheme: BenchScheme, trial: u64) -> Result<TrialOutcome> {
    Testbed::new(scenario.clone())?.run(scheme, trial)
}

/// Swept scenario parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// Keeps the first `v` users.
    NumUsers,
    /// `v x v` port grid over the same aperture.
    NumPorts,
    /// Relay power limit of every user, watts; minimum powers are re-derived.
    RelayPowerMax,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::NumUsers => "num_users",
            SweepVariable::NumPorts => "num_ports",
            SweepVariable::RelayPowerMax => "relay_power_max",
        }
    }

    pub fn is_integer(self) -> bool {
        !matches!(self, SweepVariable::RelayPowerMax)
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepVariable::NumUsers, SweepVariable::NumPorts, SweepVariable::RelayPowerMax]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown sweep variable `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub schemes: Vec<BenchScheme>,
}

impl SweepSpec {
    pub fn new(variable: SweepVariable, values: Vec<f64>, schemes: Vec<BenchScheme>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("sweep needs at least one value"));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("sweep values must be strictly increasing"));
        }
        if schemes.is_empty() {
            return Err(Error::domain("sweep needs at least one scheme"));
        }
        for &v in &values {
            let ok = if variable.is_integer() {
                v >= 1.0 && v.fract() == 0.0 && v < 65536.0
            } else {
                v.is_finite() && v > 0.0
            };
            if !ok {
                return Err(Error::domain(format!("invalid {} value {v}", variable.name())));
            }
        }
        Ok(Self {
            variable,
            values,
            schemes,
        })
    }
}

/// Scenario with the swept parameter set to `value`.
pub fn scenario_at(base: &Scenario, variable: SweepVariable, value: f64) -> Result<Scenario> {
    let mut sc = base.clone();
    match variable {
        SweepVariable::NumUsers => {
            let k = value as usize;
            if k > base.users.len() {
                return Err(Error::domain(format!(
                    "sweep asks for {k} users but the scenario defines {}",
                    base.users.len()
                )));
            }
            sc.users.truncate(k);
        }
        SweepVariable::NumPorts => {
            let n = value as usize;
            sc.grid = PortGrid::new(n, n, base.grid.w1(), base.grid.w2())?;
            sc.correlation = None;
        }
        SweepVariable::RelayPowerMax => {
            sc.users = base
                .users
                .iter()
                .map(|u| UserConfig::with_derived_min(u.budget, u.p_user_max, value, u.rate_min, base.xi))
                .collect::<Result<_>>()?;
        }
    }
    sc.validate()?;
    Ok(sc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub scheme: BenchScheme,
    pub trial: usize,
    pub sum_rate: f64,
    pub feasible: bool,
}

/// Mean sum rate over feasible trials; infeasible trials are counted apart.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub value: f64,
    pub scheme: BenchScheme,
    pub mean: f64,
    pub std_err: f64,
    pub feasible_trials: usize,
    pub excluded_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub variable: SweepVariable,
    pub rows: Vec<SweepRow>,
    pub summaries: Vec<SweepSummary>,
}

/// Mean and standard error of the mean; exactly zero spread for constant samples.
pub fn mean_and_std_err(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 || xs.iter().all(|&x| x == xs[0]) {
        return (if n == 1 { xs[0] } else { mean }, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Every `value x scheme x trial` combination, in that nesting order.
pub fn run_sweep(base: &Scenario, spec: &SweepSpec) -> Result<SweepTable> {
    let beds = spec
        .values
        .iter()
        .map(|&v| Testbed::new(scenario_at(base, spec.variable, v)?))
        .collect::<Result<Vec<_>>>()?;
    let trials = base.trials;
    let per_value = spec.schemes.len() * trials;
    let rows = (0..spec.values.len() * per_value)
        .into_par_iter()
        .map(|i| {
            let (vi, rest) = (i / per_value, i % per_value);
            let (si, trial) = (rest / trials, rest % trials);
            let scheme = spec.schemes[si];
            let out = beds[vi].run(scheme, trial as u64)?;
            Ok(SweepRow {
                value: spec.values[vi],
                scheme,
                trial,
                sum_rate: out.sum_rate,
                feasible: out.feasible,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries = rows
        .chunks(trials)
        .map(|chunk| {
            let ok: Vec<f64> = chunk.iter().filter(|r| r.feasible).map(|r| r.sum_rate).collect();
            let (mean, std_err) = mean_and_std_err(&ok);
            SweepSummary {
                value: chunk[0].value,
                scheme: chunk[0].scheme,
                mean,
                std_err,
                feasible_trials: ok.len(),
                excluded_trials: chunk.len() - ok.len(),
            }
        })
        .collect();
    Ok(SweepTable {
        variable: spec.variable,
        rows,
        summaries,
    })
}

/// Quantity compared in a validation row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationKind {
    Cdf,
    OpAf,
    OpDf,
}

impl ValidationKind {
    pub fn name(self) -> &'static str {
        match self {
            ValidationKind::Cdf => "cdf",
            ValidationKind::OpAf => "op_af",
            ValidationKind::OpDf => "op_df",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub kind: ValidationKind,
    /// One-based user index of outage rows.
    pub user: Option<usize>,
    pub p_user: Option<f64>,
    pub p_relay: Option<f64>,
    /// Gain level of CDF rows.
    pub x: Option<f64>,
    pub analytic: f64,
    pub empirical: f64,
    pub std_err: f64,
    pub pass: bool,
}

/// Absolute disagreement allowed between copula and Monte Carlo values.
pub const VALIDATION_BUDGET: f64 = 0.05;
const VALIDATION_X_RANGE: (f64, f64) = (0.1, 5.0);

/// Copula CDF at `points` levels in `[0.1, 5]` and both OPs of every user at
/// the maximum and the geometric-mid powers, each against `trials` samples.
pub fn validate_scenario(sc: &Scenario, trials: usize, points: usize) -> Result<Vec<ValidationRow>> {
    if points == 0 {
        return Err(Error::domain("validation needs at least one level"));
    }
    let corr = sc.correlation_matrix()?;
    let (lo, hi) = VALIDATION_X_RANGE;
    let xs: Vec<f64> = if points == 1 {
        vec![lo]
    } else {
        (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
    };
    let copula = best_gain_cdf_batch(&xs, &corr, &sc.mvn)?;
    let empirical = empirical_best_gain_cdf(&corr, &xs, trials, derive_seed(sc.seed, 0))?;
    let mut rows: Vec<ValidationRow> = copula
        .iter()
        .zip(&empirical)
        .map(|(c, e)| ValidationRow {
            kind: ValidationKind::Cdf,
            user: None,
            p_user: None,
            p_relay: None,
            x: Some(e.x),
            analytic: c.value,
            empirical: e.cdf,
            std_err: e.std_err,
            pass: (c.value - e.cdf).abs() <= VALIDATION_BUDGET,
        })
        .collect();

    for (k, u) in sc.users.iter().enumerate() {
        let powers = [
            (u.p_user_max, u.p_relay_max),
            ((u.p_user_min * u.p_user_max).sqrt(), (u.p_relay_min * u.p_relay_max).sqrt()),
        ];
        for (j, &(pu, pr)) in powers.iter().enumerate() {
            let q = OutageQuery::new(pu, pr, sc.xi)?;
            let cfg = sc.mvn.with_seed(derive_seed(sc.mvn.seed, (k * powers.len() + j) as u64));
            let analytic = outage_probabilities(&q, &u.budget, &corr, &cfg)?;
            let seed = derive_seed(sc.seed, 1 + (k * powers.len() + j) as u64);
            for (kind, scheme, value) in [
                (ValidationKind::OpAf, Scheme::Af, analytic.op_af),
                (ValidationKind::OpDf, Scheme::Df, analytic.op_df),
            ] {
                let e = empirical_outage(&q, &u.budget, &corr, scheme, trials, seed)?;
                rows.push(ValidationRow {
                    kind,
                    user: Some(k + 1),
                    p_user: Some(pu),
                    p_relay: Some(pr),
                    x: None,
                    analytic: value,
                    empirical: e.value,
                    std_err: e.std_err,
                    pass: (value - e.value).abs() <= VALIDATION_BUDGET.max(3.0 * e.std_err),
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_scenario(trials: usize) -> Scenario {
        let mut sc = Scenario::paper_default();
        sc.trials = trials;
        sc
    }

    #[test]
    fn empirical_cdf_examples() {
        let one = CorrelationMatrix::identity(1).unwrap();
        let e = empirical_best_gain_cdf(&one, &[2f64.ln()], 100_000, 3).unwrap()[0];
        assert!((e.cdf - 0.5).abs() <= 3.0 * e.std_err, "{e:?}");

        let four = CorrelationMatrix::identity(4).unwrap();
        let e = empirical_best_gain_cdf(&four, &[1.0], 100_000, 3).unwrap()[0];
        let exact = (1.0 - (-1f64).exp()).powi(4);
        assert_abs_diff_eq!(exact, 0.159_661_3, epsilon = 1e-7);
        assert!((e.cdf - exact).abs() <= 3.0 * e.std_err, "{e:?}");

        assert!(empirical_best_gain_cdf(&one, &[1.0], 9_999, 3).is_err());
    }

    #[test]
    fn empirical_outage_deterministic_branches() {
        let lb = LinkBudget::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let corr = CorrelationMatrix::identity(4).unwrap();
        let q = OutageQuery::new(0.1, 0.1, 0.5).unwrap();
        let e = empirical_outage(&q, &lb, &corr, Scheme::Af, 10_000, 1).unwrap();
        assert_eq!((e.value, e.std_err), (1.0, 0.0));
        let q = OutageQuery::new(2.0, 0.1, 0.5).unwrap();
        let e = empirical_outage(&q, &lb, &corr, Scheme::Af, 10_000, 1).unwrap();
        assert_eq!((e.value, e.std_err), (0.0, 0.0));
    }

    #[test]
    fn empirical_outage_matches_copula_at_interior_point() {
        let lb = LinkBudget::new(1.0, 0.2, 1.0, 1.0, 1.0).unwrap();
        let corr = CorrelationMatrix::from_grid(&PortGrid::new(2, 2, 1.0, 1.0).unwrap()).unwrap();
        let q = OutageQuery::new(1.0, 2.0, 0.5).unwrap();
        let a = outage_probabilities(&q, &lb, &corr, &MvnConfig::default()).unwrap();
        for (scheme, op) in [(Scheme::Af, a.op_af), (Scheme::Df, a.op_df)] {
            let e = empirical_outage(&q, &lb, &corr, scheme, 200_000, 9).unwrap();
            assert!((op - e.value).abs() <= 0.05f64.max(3.0 * e.std_err), "{scheme}: {op} vs {e:?}");
        }
    }

    #[test]
    fn empirical_is_reproducible() {
        let corr = CorrelationMatrix::from_grid(&PortGrid::new(3, 3, 1.0, 1.0).unwrap()).unwrap();
        let xs = [0.5, 1.0, 2.0];
        let a = empirical_best_gain_cdf(&corr, &xs, 20_000, 5).unwrap();
        let b = empirical_best_gain_cdf(&corr, &xs, 20_000, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn std_err_shrinks_with_trials() {
        let corr = CorrelationMatrix::identity(1).unwrap();
        let a = empirical_best_gain_cdf(&corr, &[1.0], 40_000, 1).unwrap()[0].std_err;
        let b = empirical_best_gain_cdf(&corr, &[1.0], 80_000, 1).unwrap()[0].std_err;
        let ratio = a / b;
        assert!((ratio - 2f64.sqrt()).abs() < 0.2 * 2f64.sqrt(), "{ratio}");
    }

    #[test]
    fn tas_equals_proposed_on_single_port_grid() {
        let mut sc = small_scenario(10);
        sc.grid = PortGrid::single();
        let bed = Testbed::new(sc).unwrap();
        for t in 0..10 {
            assert_eq!(
                bed.run(BenchScheme::Proposed, t).unwrap(),
                bed.run(BenchScheme::Tas, t).unwrap()
            );
        }
    }

    #[test]
    fn equal_bandwidth_never_beats_proposed() {
        let bed = Testbed::new(small_scenario(50)).unwrap();
        for t in 0..50 {
            let p = bed.run(BenchScheme::Proposed, t).unwrap();
            let a = bed.run(BenchScheme::AvgBandwidth, t).unwrap();
            assert!(a.sum_rate <= p.sum_rate, "trial {t}: {} > {}", a.sum_rate, p.sum_rate);
        }
    }

    #[test]
    fn fas_gain_dominates_tas_gain() {
        let bed = Testbed::new(small_scenario(1)).unwrap();
        for t in 0..200 {
            let fas = bed.fading(t, false);
            let tas = bed.fading(t, true);
            assert!(fas.iter().zip(&tas).all(|(f, s)| f >= s));
        }
    }

    #[test]
    fn benchmark_outcomes_are_consistent() {
        let sc = small_scenario(1);
        for scheme in BenchScheme::ALL {
            let out = run_benchmark(&sc, scheme, 3).unwrap();
            assert!(out.feasible, "{scheme}: {:?}", out.reason);
            assert_abs_diff_eq!(out.rates.iter().sum::<f64>(), out.sum_rate, epsilon = 1e-6);
            let alloc = out.allocation.unwrap();
            alloc.audit(&sc.users, sc.total_bw).unwrap();
        }
    }

    #[test]
    fn infeasible_trials_are_data() {
        let mut sc = small_scenario(4);
        for u in &mut sc.users {
            u.rate_min = 1e9;
        }
        for scheme in BenchScheme::ALL {
            let out = run_benchmark(&sc, scheme, 0).unwrap();
            assert!(!out.feasible);
            assert_eq!(out.sum_rate, 0.0);
            assert!(out.reason.unwrap().starts_with("INFEASIBLE"));
        }
        let spec = SweepSpec::new(SweepVariable::NumUsers, vec![2.0], vec![BenchScheme::Proposed]).unwrap();
        let table = run_sweep(&sc, &spec).unwrap();
        assert_eq!(table.summaries[0].excluded_trials, 4);
        assert_eq!(table.summaries[0].feasible_trials, 0);
    }

    #[test]
    fn sweep_layout_and_determinism() {
        let sc = small_scenario(5);
        let spec = SweepSpec::new(SweepVariable::NumUsers, vec![1.0, 2.0, 3.0, 4.0], BenchScheme::ALL.to_vec()).unwrap();
        let a = run_sweep(&sc, &spec).unwrap();
        assert_eq!(a.rows.len(), 4 * 4 * 5);
        assert_eq!(a.summaries.len(), 16);
        assert_eq!((a.rows[6].value, a.rows[6].scheme, a.rows[6].trial), (1.0, BenchScheme::Tas, 1));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_sweep(&sc, &spec).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_spec_validation() {
        let all = BenchScheme::ALL.to_vec();
        assert!(SweepSpec::new(SweepVariable::NumPorts, vec![], all.clone()).is_err());
        assert!(SweepSpec::new(SweepVariable::NumPorts, vec![2.0, 1.0], all.clone()).is_err());
        assert!(SweepSpec::new(SweepVariable::NumPorts, vec![1.5], all.clone()).is_err());
        assert!(SweepSpec::new(SweepVariable::RelayPowerMax, vec![0.0], all.clone()).is_err());
        assert!(SweepSpec::new(SweepVariable::NumPorts, vec![1.0], vec![]).is_err());
        assert!("bogus".parse::<SweepVariable>().is_err());
        assert_eq!("random_power".parse::<BenchScheme>().unwrap(), BenchScheme::RandomPower);
        let spec = SweepSpec::new(SweepVariable::NumUsers, vec![9.0], all).unwrap();
        assert!(run_sweep(&small_scenario(1), &spec).is_err());
    }

    #[test]
    fn constant_samples_have_zero_spread() {
        assert_eq!(mean_and_std_err(&[0.1, 0.1, 0.1]).1, 0.0);
        let (m, s) = mean_and_std_err(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    #[test]
    fn unit_conversions() {
        assert_abs_diff_eq!(dbm_to_watts(-120.0), 1e-15, epsilon = 1e-28);
        assert_abs_diff_eq!(dbm_to_watts(30.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(db_to_linear(-110.0), 1e-11, epsilon = 1e-24);
    }
}
