//! Outage probabilities of amplify-and-forward and decode-and-forward relaying
//! and the OP-minimizing choice between them.
//!
//! The relay knows only mean SNRs of the user->BS and relay->BS links; the
//! randomness enters through the best-port gain of the user->relay link.
//! Its distribution is approximated with a Gaussian copula over the
//! exponential port marginals, coupled by the port correlation matrix.

use rayon::prelude::*;
use std::fmt;

use crate::channel::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::mvncdf::{mvn_cdf_batch, std_normal_quantile, MvnConfig, MvnEstimate};
use crate::stream::derive_seed;

/// Clamp applied to the marginal CDF before the normal quantile.
const MARGINAL_CLAMP: f64 = 1e-12;

/// Large-scale gains and noise powers of one user/relay pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// User -> relay large-scale gain (linear).
    pub alpha_ur: f64,
    /// User -> BS large-scale gain (linear).
    pub alpha_ub: f64,
    /// Relay -> BS large-scale gain (linear).
    pub alpha_rb: f64,
    /// Noise power at the relay, watts.
    pub sigma2_relay: f64,
    /// Noise power at the BS, watts.
    pub sigma2_bs: f64,
}

impl LinkBudget {
    pub fn new(alpha_ur: f64, alpha_ub: f64, alpha_rb: f64, sigma2_relay: f64, sigma2_bs: f64) -> Result<Self> {
        let lb = Self {
            alpha_ur,
            alpha_ub,
            alpha_rb,
            sigma2_relay,
            sigma2_bs,
        };
        for (name, v) in [
            ("alpha_ur", alpha_ur),
            ("alpha_ub", alpha_ub),
            ("alpha_rb", alpha_rb),
            ("sigma2_relay", sigma2_relay),
            ("sigma2_bs", sigma2_bs),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(lb)
    }

    /// Mean user -> BS SNR per watt.
    pub fn mean_gamma_ub(&self) -> f64 {
        self.alpha_ub / self.sigma2_bs
    }

    /// Mean relay -> BS SNR per watt.
    pub fn mean_gamma_rb(&self) -> f64 {
        self.alpha_rb / self.sigma2_bs
    }

    /// User -> relay SNR per watt for a given squared port gain.
    pub fn gamma_ur(&self, gain_sq: f64) -> f64 {
        self.alpha_ur * gain_sq / self.sigma2_relay
    }
}

/// SNR threshold `2^(2 xi) - 1` of a half-duplex link with rate threshold `xi`.
pub fn outage_threshold(xi: f64) -> f64 {
    (2.0 * xi * std::f64::consts::LN_2).exp_m1()
}

/// Transmit powers and rate threshold at which outage is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageQuery {
    pub p_user: f64,
    pub p_relay: f64,
    /// Rate threshold in bit/s/Hz.
    pub xi: f64,
}

impl OutageQuery {
    pub fn new(p_user: f64, p_relay: f64, xi: f64) -> Result<Self> {
        if !(p_user.is_finite() && p_user >= 0.0 && p_relay.is_finite() && p_relay >= 0.0) {
            return Err(Error::domain(format!(
                "powers must be finite and nonnegative, got ({p_user}, {p_relay})"
            )));
        }
        if !(xi.is_finite() && xi > 0.0) {
            return Err(Error::domain(format!("rate threshold must be positive, got {xi}")));
        }
        Ok(Self { p_user, p_relay, xi })
    }

    pub fn c_th(&self) -> f64 {
        outage_threshold(self.xi)
    }

    /// Mean SNR the BS can collect from both hops, `p_u gb_ub + p_r gb_rb`.
    pub fn mean_snr_sum(&self, lb: &LinkBudget) -> f64 {
        self.p_user * lb.mean_gamma_ub() + self.p_relay * lb.mean_gamma_rb()
    }

    /// Strictly above the threshold; the boundary counts as outage-certain.
    pub fn is_feasible(&self, lb: &LinkBudget) -> bool {
        self.mean_snr_sum(lb) > self.c_th()
    }
}

/// Relaying scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Af,
    Df,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Af => "AF",
            Scheme::Df => "DF",
        })
    }
}

/// Outcome of the OP-minimizing rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Selection {
    Af,
    Df,
    /// Outage is certain whichever scheme is used.
    Infeasible,
}

impl Selection {
    pub fn scheme(self) -> Option<Scheme> {
        match self {
            Selection::Af => Some(Scheme::Af),
            Selection::Df => Some(Scheme::Df),
            Selection::Infeasible => None,
        }
    }
}

impl From<Scheme> for Selection {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Af => Selection::Af,
            Scheme::Df => Selection::Df,
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selection::Af => f.write_str("AF"),
            Selection::Df => f.write_str("DF"),
            Selection::Infeasible => f.write_str("INFEASIBLE"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageResult {
    pub op_af: f64,
    pub op_df: f64,
    pub selection: Selection,
    /// Integration error bound on each OP (0 for deterministic branches).
    pub est_error: f64,
}

/// Squared-gain level below which the AF end-to-end SNR misses the threshold.
///
/// Negative values mean the direct link alone already meets the threshold.
pub fn xi_af(q: &OutageQuery, lb: &LinkBudget) -> Result<f64> {
    if q.p_user <= 0.0 {
        return Err(Error::domain("AF gain threshold needs positive user power"));
    }
    let c = q.c_th();
    let u = q.p_user * lb.mean_gamma_ub();
    let r = q.p_relay * lb.mean_gamma_rb();
    let margin = u + r - c;
    if margin <= 0.0 {
        return Err(Error::Feasibility(format!(
            "mean SNR sum {} does not exceed threshold {c}",
            u + r
        )));
    }
    Ok(lb.sigma2_relay * (r + 1.0) * (c - u) / (lb.alpha_ur * q.p_user * margin))
}

/// Squared-gain level below which the first DF hop cannot be decoded.
pub fn xi_df(q: &OutageQuery, lb: &LinkBudget) -> Result<f64> {
    if q.p_user <= 0.0 {
        return Err(Error::domain("DF gain threshold needs positive user power"));
    }
    Ok(lb.sigma2_relay * q.c_th() / (lb.alpha_ur * q.p_user))
}

fn gain_limits(x: f64, dim: usize) -> Result<Vec<f64>> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(format!("gain level must be nonnegative, got {x}")));
    }
    if x == 0.0 {
        return Ok(vec![f64::NEG_INFINITY; dim]);
    }
    if x == f64::INFINITY {
        return Ok(vec![f64::INFINITY; dim]);
    }
    let marginal = (-(-x).exp_m1()).clamp(MARGINAL_CLAMP, 1.0 - MARGINAL_CLAMP);
    Ok(vec![std_normal_quantile(marginal)?; dim])
}

/// Copula estimate of `P(max_l |h_l|^2 <= x)` at several levels, sharing
/// quadrature points so that the estimates are ordered like the levels.
pub fn best_gain_cdf_batch(xs: &[f64], corr: &CorrelationMatrix, config: &MvnConfig) -> Result<Vec<MvnEstimate>> {
    let limits = xs
        .iter()
        .map(|&x| gain_limits(x, corr.dim()))
        .collect::<Result<Vec<_>>>()?;
    mvn_cdf_batch(corr, &limits, config)
}

/// Copula estimate of `P(max_l |h_l|^2 <= x)`.
pub fn best_gain_cdf(x: f64, corr: &CorrelationMatrix, config: &MvnConfig) -> Result<f64> {
    Ok(best_gain_cdf_batch(&[x], corr, config)?[0].value)
}

/// AF and DF outage probabilities and the scheme with the lower one
/// (ties go to AF).
///
/// When both estimates round to the same value (deep in either tail) the
/// selection still follows the exact ordering of the two gain levels.
pub fn outage_probabilities(
    q: &OutageQuery,
    lb: &LinkBudget,
    corr: &CorrelationMatrix,
    config: &MvnConfig,
) -> Result<OutageResult> {
    if !q.is_feasible(lb) {
        return Ok(OutageResult {
            op_af: 1.0,
            op_df: 1.0,
            selection: Selection::Infeasible,
            est_error: 0.0,
        });
    }
    if q.p_user == 0.0 {
        // Nothing reaches the relay or the BS from the user.
        return Ok(OutageResult {
            op_af: 1.0,
            op_df: 1.0,
            selection: Selection::Af,
            est_error: 0.0,
        });
    }
    let af_level = xi_af(q, lb)?.max(0.0);
    let df_level = xi_df(q, lb)?;
    let est = best_gain_cdf_batch(&[af_level, df_level], corr, config)?;
    let (op_af, op_df) = (est[0].value, est[1].value);
    // The copula CDF is strictly increasing, so comparing its arguments is the
    // exact form of `op_df >= op_af`; it stays exact where both saturate.
    let selection = if df_level >= af_level {
        Selection::Af
    } else {
        Selection::Df
    };
    Ok(OutageResult {
        op_af,
        op_df,
        selection,
        est_error: est[0].est_error.max(est[1].est_error),
    })
}

/// One cell of an outage surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub p_user: f64,
    pub p_relay: f64,
    pub xi: f64,
    pub result: OutageResult,
}

/// Outage probabilities over a list of `(p_user, p_relay)` pairs.
///
/// Point `i` integrates with seed `derive_seed(config.seed, i)`.
pub fn op_surface(
    points: &[(f64, f64)],
    xi: f64,
    lb: &LinkBudget,
    corr: &CorrelationMatrix,
    config: &MvnConfig,
) -> Result<Vec<SurfacePoint>> {
    if points.is_empty() {
        return Err(Error::domain("outage surface needs at least one power pair"));
    }
    points
        .par_iter()
        .enumerate()
        .map(|(i, &(p_user, p_relay))| {
            let q = OutageQuery::new(p_user, p_relay, xi)?;
            let cfg = config.with_seed(derive_seed(config.seed, i as u64));
            Ok(SurfacePoint {
                p_user,
                p_relay,
                xi,
                result: outage_probabilities(&q, lb, corr, &cfg)?,
            })
        })
        .collect()
}
