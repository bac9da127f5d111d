//! SNR and rate model, closed-form bandwidth allocation and per-user power
//! control for the sum-rate problem.
//!
//! Power control and scheme choice use mean SNRs for the user->BS and
//! relay->BS links and the instantaneous best-port gain for user->relay.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::outage::{outage_threshold, LinkBudget, Scheme};

/// Whether the user->relay entry of an [`SnrTriple`] is a mean or a realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnrProvenance {
    Mean,
    Instantaneous,
}

/// SNRs normalized by transmit power (per watt).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrTriple {
    pub gamma_ub: f64,
    pub gamma_ur: f64,
    pub gamma_rb: f64,
    pub ur_provenance: SnrProvenance,
}

impl SnrTriple {
    pub fn new(gamma_ub: f64, gamma_ur: f64, gamma_rb: f64, ur_provenance: SnrProvenance) -> Result<Self> {
        for v in [gamma_ub, gamma_ur, gamma_rb] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!("normalized SNRs must be finite and nonnegative, got {v}")));
            }
        }
        Ok(Self {
            gamma_ub,
            gamma_ur,
            gamma_rb,
            ur_provenance,
        })
    }

    /// All three links at their means.
    pub fn mean(lb: &LinkBudget) -> Self {
        Self {
            gamma_ub: lb.mean_gamma_ub(),
            gamma_ur: lb.gamma_ur(1.0),
            gamma_rb: lb.mean_gamma_rb(),
            ur_provenance: SnrProvenance::Mean,
        }
    }

    /// Mean user->BS and relay->BS SNRs with a realized user->relay gain.
    pub fn instantaneous(lb: &LinkBudget, gain_sq: f64) -> Self {
        Self {
            gamma_ub: lb.mean_gamma_ub(),
            gamma_ur: lb.gamma_ur(gain_sq),
            gamma_rb: lb.mean_gamma_rb(),
            ur_provenance: SnrProvenance::Instantaneous,
        }
    }
}

/// End-to-end SNR of amplify-and-forward with maximal-ratio combining.
pub fn snr_af(p_user: f64, p_relay: f64, s: &SnrTriple) -> f64 {
    let direct = p_user * s.gamma_ub;
    let first = p_user * s.gamma_ur;
    let second = p_relay * s.gamma_rb;
    if first == 0.0 || second == 0.0 {
        return direct;
    }
    direct + first * second / (first + second + 1.0)
}

/// End-to-end SNR of decode-and-forward.
pub fn snr_df(p_user: f64, p_relay: f64, s: &SnrTriple) -> f64 {
    (p_user * s.gamma_ub + p_relay * s.gamma_rb).min(p_user * s.gamma_ur)
}

pub fn snr_for(scheme: Scheme, p_user: f64, p_relay: f64, s: &SnrTriple) -> f64 {
    match scheme {
        Scheme::Af => snr_af(p_user, p_relay, s),
        Scheme::Df => snr_df(p_user, p_relay, s),
    }
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

/// Half-duplex rate `b/2 * log2(1 + snr)` in bit/s.
pub fn rate(bandwidth: f64, snr: f64) -> f64 {
    0.5 * bandwidth * log2_1p(snr)
}

/// Which scheme the OP-minimizing rule picks at a power pair, from mean SNRs.
///
/// AF iff `(C^2 + C) / ((C + 1) u + u r) <= 1` with `u = p_user * mean_ub`
/// and `r = p_relay * mean_rb`.
pub fn scheme_region(p_user: f64, p_relay: f64, c_th: f64, mean_ub: f64, mean_rb: f64) -> Result<Scheme> {
    let u = p_user * mean_ub;
    let r = p_relay * mean_rb;
    if !(u + r >= c_th) {
        return Err(Error::domain(format!(
            "mean SNR sum {} is below the outage threshold {c_th}",
            u + r
        )));
    }
    if c_th * c_th + c_th <= (c_th + 1.0) * u + u * r {
        Ok(Scheme::Af)
    } else {
        Ok(Scheme::Df)
    }
}

/// SNR under the scheme the selection rule picks at `(p_user, p_relay)`.
pub fn selection_aware_snr(p_user: f64, p_relay: f64, c_th: f64, s: &SnrTriple) -> Result<f64> {
    let scheme = scheme_region(p_user, p_relay, c_th, s.gamma_ub, s.gamma_rb)?;
    Ok(snr_for(scheme, p_user, p_relay, s))
}

/// Per-user power box, rate requirement and link budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserConfig {
    pub budget: LinkBudget,
    pub p_user_max: f64,
    pub p_relay_max: f64,
    pub p_user_min: f64,
    pub p_relay_min: f64,
    /// Minimum rate in bit/s.
    pub rate_min: f64,
}

/// Smallest `t` in `(0, 1]` with `t * (pu_max * gb_ub + pr_max * gb_rb) >= C`.
pub fn min_power_scale(budget: &LinkBudget, p_user_max: f64, p_relay_max: f64, c_th: f64) -> Result<f64> {
    let guard = |t: f64| (t * p_user_max) * budget.mean_gamma_ub() + (t * p_relay_max) * budget.mean_gamma_rb();
    let mut t = c_th / (p_user_max * budget.mean_gamma_ub() + p_relay_max * budget.mean_gamma_rb());
    while t <= 1.0 && guard(t) < c_th {
        t = t.next_up();
    }
    if !(t <= 1.0) {
        return Err(Error::InfeasiblePower(format!(
            "maximum powers reach mean SNR {} below the threshold {c_th}",
            guard(1.0)
        )));
    }
    Ok(t)
}

impl UserConfig {
    /// Explicit power box.
    pub fn new(
        budget: LinkBudget,
        p_user_max: f64,
        p_relay_max: f64,
        p_user_min: f64,
        p_relay_min: f64,
        rate_min: f64,
    ) -> Result<Self> {
        for (name, v) in [("p_user_max", p_user_max), ("p_relay_max", p_relay_max)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, lo, hi) in [
            ("p_user_min", p_user_min, p_user_max),
            ("p_relay_min", p_relay_min, p_relay_max),
        ] {
            if !(lo >= 0.0 && lo <= hi) {
                return Err(Error::domain(format!("{name} must lie in [0, {hi}], got {lo}")));
            }
        }
        if !(rate_min.is_finite() && rate_min >= 0.0) {
            return Err(Error::domain(format!("rate_min must be finite and nonnegative, got {rate_min}")));
        }
        Ok(Self {
            budget,
            p_user_max,
            p_relay_max,
            p_user_min,
            p_relay_min,
            rate_min,
        })
    }

    /// Minimum powers scaled down from the maxima by [`min_power_scale`].
    pub fn with_derived_min(
        budget: LinkBudget,
        p_user_max: f64,
        p_relay_max: f64,
        rate_min: f64,
        xi: f64,
    ) -> Result<Self> {
        let base = Self::new(budget, p_user_max, p_relay_max, 0.0, 0.0, rate_min)?;
        let t = min_power_scale(&budget, p_user_max, p_relay_max, outage_threshold(xi))?;
        Ok(Self {
            p_user_min: t * p_user_max,
            p_relay_min: t * p_relay_max,
            ..base
        })
    }

    pub fn check_guard(&self, c_th: f64) -> Result<()> {
        let reach = self.p_user_min * self.budget.mean_gamma_ub() + self.p_relay_min * self.budget.mean_gamma_rb();
        if reach >= c_th {
            Ok(())
        } else {
            Err(Error::InfeasiblePower(format!(
                "minimum powers reach mean SNR {reach} below the threshold {c_th}"
            )))
        }
    }
}

/// Powers, scheme and resulting SNR chosen for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerDecision {
    pub p_user: f64,
    pub p_relay: f64,
    pub scheme: Scheme,
    pub snr: f64,
}

impl PowerDecision {
    fn at(p_user: f64, p_relay: f64, scheme: Scheme, s: &SnrTriple) -> Self {
        Self {
            p_user,
            p_relay,
            scheme,
            snr: snr_for(scheme, p_user, p_relay, s),
        }
    }
}

const SWEEP_POINTS: usize = 256;
const GOLDEN_ITERS: usize = 200;

/// Maximizes the DF SNR over the power box restricted to the DF side of the
/// selection boundary, `(C + 1) u + u r <= C^2 + C`.
pub fn solve_df_subproblem(cfg: &UserConfig, c_th: f64, s: &SnrTriple) -> Result<PowerDecision> {
    let k = c_th * c_th + c_th;
    let (g_ub, g_rb) = (s.gamma_ub, s.gamma_rb);
    let cap = |pr: f64| {
        if g_ub == 0.0 {
            f64::INFINITY
        } else {
            k / ((c_th + 1.0 + pr * g_rb) * g_ub)
        }
    };
    let inside = |pu: f64, pr: f64| (c_th + 1.0) * pu * g_ub + pu * g_ub * pr * g_rb <= k;
    let best_user_power = |pr: f64| {
        let mut pu = cfg.p_user_max.min(cap(pr));
        while pu > cfg.p_user_min && !inside(pu, pr) {
            pu = pu.next_down();
        }
        pu
    };
    let feasible = |pr: f64| {
        let pu = best_user_power(pr);
        pu >= cfg.p_user_min && inside(pu, pr)
    };

    let lo = cfg.p_relay_min;
    if !feasible(lo) {
        return Err(Error::domain("DF side of the selection boundary misses the power box"));
    }
    let mut hi = cfg.p_relay_max;
    if !feasible(hi) {
        hi = if cfg.p_user_min > 0.0 && g_rb > 0.0 {
            ((k / (cfg.p_user_min * g_ub) - (c_th + 1.0)) / g_rb).clamp(lo, cfg.p_relay_max)
        } else {
            lo
        };
        while hi > lo && !feasible(hi) {
            hi = hi.next_down();
        }
        if !feasible(hi) {
            hi = lo;
        }
    }

    let objective = |pr: f64| snr_df(best_user_power(pr), pr, s);
    let point = |pr: f64| (pr, objective(pr));

    let mut best = point(lo);
    let consider = |cand: (f64, f64), best: &mut (f64, f64)| {
        if cand.1 >= best.1 {
            *best = cand;
        }
    };
    let mut sweep_best = 0usize;
    let mut sweep_val = f64::NEG_INFINITY;
    let step = (hi - lo) / (SWEEP_POINTS - 1) as f64;
    let node = |i: usize| if i + 1 >= SWEEP_POINTS { hi } else { (lo + step * i as f64).min(hi) };
    for i in 0..SWEEP_POINTS {
        let v = objective(node(i));
        if v >= sweep_val {
            sweep_val = v;
            sweep_best = i;
        }
    }
    consider(point(node(sweep_best)), &mut best);
    consider(golden_max(&objective, node(sweep_best.saturating_sub(1)), node(sweep_best + 1)), &mut best);
    consider(point(hi), &mut best);

    let pr = best.0;
    Ok(PowerDecision::at(best_user_power(pr), pr, Scheme::Df, s))
}

/// Golden-section search for the maximum of a unimodal function on `[a, b]`.
fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if b - a <= f64::EPSILON * b.abs().max(a.abs()) {
            break;
        }
        if fc < fd {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        } else {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Moves a DF-side point strictly off the selection boundary by shrinking a power.
fn strictly_df(cfg: &UserConfig, c_th: f64, s: &SnrTriple, p_user: f64, p_relay: f64) -> Option<(f64, f64)> {
    let region = |pu: f64, pr: f64| scheme_region(pu, pr, c_th, s.gamma_ub, s.gamma_rb).ok();
    if region(p_user, p_relay) == Some(Scheme::Df) {
        return Some((p_user, p_relay));
    }
    for exp in (4..=15).rev() {
        let shrink = 1.0 - 10f64.powi(-exp);
        let pu = p_user * shrink;
        if pu >= cfg.p_user_min && region(pu, p_relay) == Some(Scheme::Df) {
            return Some((pu, p_relay));
        }
        let pr = p_relay * shrink;
        if pr >= cfg.p_relay_min && region(p_user, pr) == Some(Scheme::Df) {
            return Some((p_user, pr));
        }
    }
    None
}

/// Powers and scheme maximizing the user's SNR under the OP-minimizing
/// selection rule.
pub fn optimize_powers(cfg: &UserConfig, c_th: f64, s: &SnrTriple) -> Result<PowerDecision> {
    cfg.check_guard(c_th)?;
    let (pu_max, pr_max) = (cfg.p_user_max, cfg.p_relay_max);
    if scheme_region(pu_max, pr_max, c_th, s.gamma_ub, s.gamma_rb)? == Scheme::Df {
        return Ok(PowerDecision::at(pu_max, pr_max, Scheme::Df, s));
    }
    let at_max_af = PowerDecision::at(pu_max, pr_max, Scheme::Af, s);
    let u_min = cfg.p_user_min * s.gamma_ub;
    let c_tilde = (c_th * c_th + c_th) / ((c_th + 1.0) * u_min + u_min * cfg.p_relay_min * s.gamma_rb);
    if c_tilde < 1.0 {
        return Ok(at_max_af);
    }
    let df = match solve_df_subproblem(cfg, c_th, s) {
        Ok(df) => df,
        Err(Error::Domain(_)) => return Ok(at_max_af),
        Err(e) => return Err(e),
    };
    match strictly_df(cfg, c_th, s, df.p_user, df.p_relay) {
        Some((pu, pr)) => {
            let cand = PowerDecision::at(pu, pr, Scheme::Df, s);
            Ok(if cand.snr > at_max_af.snr { cand } else { at_max_af })
        }
        None => Ok(at_max_af),
    }
}

/// Bandwidth split and the index of the user receiving the residual.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthPlan {
    pub bandwidth: Vec<f64>,
    pub lead: usize,
}

/// Gives every user but the strongest exactly its minimum-rate bandwidth and
/// the strongest user the rest.
pub fn allocate_bandwidth(snrs: &[f64], rate_mins: &[f64], total_bw: f64) -> Result<BandwidthPlan> {
    if snrs.is_empty() || snrs.len() != rate_mins.len() {
        return Err(Error::domain(format!(
            "need matching nonempty SNR and rate vectors, got {} and {}",
            snrs.len(),
            rate_mins.len()
        )));
    }
    if !(total_bw.is_finite() && total_bw > 0.0) {
        return Err(Error::domain(format!("total bandwidth must be positive, got {total_bw}")));
    }
    for (k, (&g, &r)) in snrs.iter().zip(rate_mins).enumerate() {
        if !(g.is_finite() && g >= 0.0) || !(r.is_finite() && r >= 0.0) {
            return Err(Error::domain(format!("user {k}: invalid SNR {g} or rate {r}")));
        }
        if g == 0.0 && r > 0.0 {
            return Err(Error::InfeasibleBandwidth(format!(
                "user {k} has zero SNR but needs {r} bit/s"
            )));
        }
    }
    let lead = snrs
        .iter()
        .enumerate()
        .fold(0, |best, (k, &g)| if g > snrs[best] { k } else { best });

    let mut bandwidth = vec![0.0; snrs.len()];
    for (k, b) in bandwidth.iter_mut().enumerate() {
        if k == lead || rate_mins[k] == 0.0 {
            continue;
        }
        let mut need = 2.0 * rate_mins[k] / log2_1p(snrs[k]);
        while rate(need, snrs[k]) < rate_mins[k] {
            need = need.next_up();
        }
        *b = need;
    }
    let others: f64 = bandwidth.iter().sum();
    bandwidth[lead] = total_bw - others;
    while bandwidth.iter().sum::<f64>() > total_bw {
        bandwidth[lead] = bandwidth[lead].next_down();
    }
    let residual = bandwidth[lead];
    if residual < 0.0 || rate(residual, snrs[lead]) < rate_mins[lead] {
        return Err(Error::InfeasibleBandwidth(format!(
            "user {lead} keeps {residual} Hz but needs {} Hz",
            2.0 * rate_mins[lead] / log2_1p(snrs[lead])
        )));
    }
    Ok(BandwidthPlan { bandwidth, lead })
}

/// Allocation of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserAllocation {
    pub p_user: f64,
    pub p_relay: f64,
    pub bandwidth: f64,
    pub scheme: Scheme,
    pub snr: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub users: Vec<UserAllocation>,
    /// User receiving the residual bandwidth.
    pub lead: usize,
    pub sum_rate: f64,
    pub feasible: bool,
}

impl AllocationResult {
    /// Combines per-user power decisions with a bandwidth split.
    pub fn assemble(decisions: &[PowerDecision], bandwidth: &[f64], lead: usize, feasible: bool) -> Self {
        let users: Vec<UserAllocation> = decisions
            .iter()
            .zip(bandwidth)
            .map(|(d, &b)| UserAllocation {
                p_user: d.p_user,
                p_relay: d.p_relay,
                bandwidth: b,
                scheme: d.scheme,
                snr: d.snr,
                rate: rate(b, d.snr),
            })
            .collect();
        let sum_rate = users.iter().map(|u| u.rate).sum();
        Self {
            users,
            lead,
            sum_rate,
            feasible,
        }
    }

    /// Checks every constraint of the sum-rate problem as an exact inequality.
    pub fn audit(&self, configs: &[UserConfig], total_bw: f64) -> Result<()> {
        if configs.len() != self.users.len() {
            return Err(Error::Invariant("user count mismatch".into()));
        }
        let used: f64 = self.users.iter().map(|u| u.bandwidth).sum();
        if used > total_bw {
            return Err(Error::Invariant(format!("bandwidth {used} exceeds {total_bw}")));
        }
        for (k, (u, c)) in self.users.iter().zip(configs).enumerate() {
            if u.bandwidth < 0.0 {
                return Err(Error::Invariant(format!("user {k}: negative bandwidth")));
            }
            if !(c.p_user_min <= u.p_user && u.p_user <= c.p_user_max)
                || !(c.p_relay_min <= u.p_relay && u.p_relay <= c.p_relay_max)
            {
                return Err(Error::Invariant(format!("user {k}: powers outside the box")));
            }
            if u.rate != rate(u.bandwidth, u.snr) {
                return Err(Error::Invariant(format!("user {k}: rate inconsistent with bandwidth")));
            }
            if self.feasible && u.rate < c.rate_min {
                return Err(Error::Invariant(format!("user {k}: rate {} below {}", u.rate, c.rate_min)));
            }
        }
        Ok(())
    }
}

fn name_user(k: usize, e: Error) -> Error {
    match e {
        Error::InfeasiblePower(m) => Error::InfeasiblePower(format!("user {k}: {m}")),
        other => other,
    }
}

/// Per-user power control followed by the bandwidth split.
///
/// `ur_gains[k]` is the realized best-port squared gain of user `k`.
pub fn solve_system(users: &[UserConfig], xi: f64, total_bw: f64, ur_gains: &[f64]) -> Result<AllocationResult> {
    if users.is_empty() || users.len() != ur_gains.len() {
        return Err(Error::domain(format!(
            "need one gain per user, got {} users and {} gains",
            users.len(),
            ur_gains.len()
        )));
    }
    let c_th = outage_threshold(xi);
    let decisions = users
        .iter()
        .zip(ur_gains)
        .enumerate()
        .map(|(k, (cfg, &g))| {
            optimize_powers(cfg, c_th, &SnrTriple::instantaneous(&cfg.budget, g)).map_err(|e| name_user(k, e))
        })
        .collect::<Result<Vec<_>>>()?;
    let snrs: Vec<f64> = decisions.iter().map(|d| d.snr).collect();
    let mins: Vec<f64> = users.iter().map(|u| u.rate_min).collect();
    let plan = allocate_bandwidth(&snrs, &mins, total_bw)?;
    Ok(AllocationResult::assemble(&decisions, &plan.bandwidth, plan.lead, true))
}
