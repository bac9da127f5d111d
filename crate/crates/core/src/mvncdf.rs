//! Multivariate normal CDF for correlation matrices.
//!
//! `P(Z_1 <= b_1, ..., Z_n <= b_n)` with `Z ~ N(0, J)` is computed by the
//! separation-of-variables transform: after a Cholesky factorization with
//! probability-ordered pivoting, the probability becomes an integral over the
//! `(n-1)`-dimensional unit cube of a smooth product of univariate normal
//! CDFs. That integral is estimated with randomly shifted Richtmyer lattice
//! points (square roots of the primes as generator), periodized with the
//! tent transform. The spread across independent shifts gives the error
//! estimate.

use rand::Rng;
use rayon::prelude::*;
use libm::erfc;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::channel::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::stream::substream;

/// Independent random shifts of the lattice.
const NUM_SHIFTS: usize = 10;
/// Lattice points per shift in the first pass.
const INITIAL_POINTS: usize = 256;
/// Width of the reported error band, in standard errors of the shift mean.
const ERROR_SIGMAS: f64 = 3.0;
/// Pivots below this are treated as deterministic (singular) directions.
const DEGENERATE_PIVOT: f64 = 1e-12;

/// Accuracy and randomization of the integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnConfig {
    /// Requested absolute error, in `(0, 0.1]`.
    pub target_abs_error: f64,
    /// Upper bound on integrand evaluations.
    pub max_samples: usize,
    /// Seed of the lattice shifts.
    pub seed: u64,
}

impl Default for MvnConfig {
    fn default() -> Self {
        Self {
            target_abs_error: 1e-4,
            max_samples: 2_000_000,
            seed: 0,
        }
    }
}

impl MvnConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_abs_error > 0.0 && self.target_abs_error <= 0.1) {
            return Err(Error::domain(format!(
                "target_abs_error must lie in (0, 0.1], got {}",
                self.target_abs_error
            )));
        }
        if self.max_samples == 0 {
            return Err(Error::domain("max_samples must be positive"));
        }
        Ok(())
    }
}

/// One orthant-type probability to evaluate.
#[derive(Debug, Clone)]
pub struct MvnProblem<'a> {
    pub corr: &'a CorrelationMatrix,
    /// Upper integration limits in standard-normal units. `+inf` drops a
    /// coordinate; any `-inf` makes the probability zero.
    pub upper_limits: Vec<f64>,
    pub config: MvnConfig,
}

/// Integration result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnEstimate {
    pub value: f64,
    /// Estimated absolute error (three standard errors across shifts).
    pub est_error: f64,
    pub samples_used: usize,
    /// False when `max_samples` ran out before the target error was met.
    pub converged: bool,
}

impl MvnEstimate {
    fn exact(value: f64) -> Self {
        Self {
            value,
            est_error: 0.0,
            samples_used: 0,
            converged: true,
        }
    }
}

/// Evaluates `Phi_J(upper_limits)`.
pub fn mvn_cdf(problem: &MvnProblem<'_>) -> Result<MvnEstimate> {
    let mut out = mvn_cdf_batch(
        problem.corr,
        std::slice::from_ref(&problem.upper_limits),
        &problem.config,
    )?;
    Ok(out.pop().expect("one limit set in, one estimate out"))
}

/// Evaluates `Phi_J` at several limit vectors using one variable ordering and
/// the same quadrature points for all of them.
///
/// Sharing points makes the estimates strongly positively correlated, so
/// differences between them are resolved far below the individual error.
/// The ordering is chosen from the first limit vector that is not trivially
/// zero.
pub fn mvn_cdf_batch(
    corr: &CorrelationMatrix,
    limit_sets: &[Vec<f64>],
    config: &MvnConfig,
) -> Result<Vec<MvnEstimate>> {
    config.validate()?;
    let n = corr.dim();
    for limits in limit_sets {
        if limits.len() != n {
            return Err(Error::domain(format!(
                "{} upper limits given for a {n}-dimensional distribution",
                limits.len()
            )));
        }
        if limits.iter().any(|b| b.is_nan()) {
            return Err(Error::domain("upper limit is NaN"));
        }
    }

    let mut results: Vec<Option<MvnEstimate>> = limit_sets
        .iter()
        .map(|b| {
            b.iter()
                .any(|&x| x == f64::NEG_INFINITY)
                .then(|| MvnEstimate::exact(0.0))
        })
        .collect();
    let live: Vec<usize> = (0..limit_sets.len())
        .filter(|&k| results[k].is_none())
        .collect();
    if live.is_empty() {
        return Ok(results.into_iter().map(Option::unwrap).collect());
    }

    // Coordinates unbounded in every live set integrate out to one.
    let active: Vec<usize> = (0..n)
        .filter(|&i| live.iter().any(|&k| limit_sets[k][i] < f64::INFINITY))
        .collect();
    if active.is_empty() {
        for &k in &live {
            results[k] = Some(MvnEstimate::exact(1.0));
        }
        return Ok(results.into_iter().map(Option::unwrap).collect());
    }

    let sub: Vec<Vec<f64>> = active
        .iter()
        .map(|&i| active.iter().map(|&k| corr.get(i, k)).collect())
        .collect();
    let reference: Vec<f64> = active.iter().map(|&i| limit_sets[live[0]][i]).collect();
    let factor = OrderedFactor::new(sub, &reference);
    let limits: Vec<Vec<f64>> = live
        .iter()
        .map(|&k| {
            factor
                .order
                .iter()
                .map(|&j| limit_sets[k][active[j]])
                .collect()
        })
        .collect();

    let estimates = integrate(&factor, &limits, config);
    for (&k, est) in live.iter().zip(estimates) {
        results[k] = Some(est);
    }
    Ok(results.into_iter().map(Option::unwrap).collect())
}

/// Cholesky factor of a permuted correlation matrix, pivoting at each step on
/// the variable with the smallest conditional probability of staying below
/// its limit.
struct OrderedFactor {
    dim: usize,
    /// Row-major lower triangle, `lower[i][k]` for `k < i`.
    lower: Vec<Vec<f64>>,
    diag: Vec<f64>,
    /// `order[i]` is the original coordinate placed at position `i`.
    order: Vec<usize>,
}

impl OrderedFactor {
    fn new(mut c: Vec<Vec<f64>>, limits: &[f64]) -> Self {
        let m = c.len();
        let mut b = limits.to_vec();
        let mut order: Vec<usize> = (0..m).collect();
        let mut lower = vec![vec![0.0; m]; m];
        let mut diag = vec![0.0; m];
        let mut y = vec![0.0; m];

        for i in 0..m {
            let mut best = (i, f64::INFINITY, 0.0);
            for j in i..m {
                let var = c[j][j] - (0..i).map(|k| lower[j][k] * lower[j][k]).sum::<f64>();
                let mean: f64 = (0..i).map(|k| lower[j][k] * y[k]).sum();
                let sd = var.max(0.0).sqrt();
                let z = if sd > DEGENERATE_PIVOT {
                    (b[j] - mean) / sd
                } else if b[j] >= mean {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                };
                let p = std_normal_cdf(z);
                if p < best.1 {
                    best = (j, p, z);
                }
            }
            let (j, _, z) = best;
            if j != i {
                c.swap(i, j);
                for row in c.iter_mut() {
                    row.swap(i, j);
                }
                lower.swap(i, j);
                b.swap(i, j);
                order.swap(i, j);
            }
            let var = c[i][i] - (0..i).map(|k| lower[i][k] * lower[i][k]).sum::<f64>();
            let sd = var.max(0.0).sqrt();
            if sd > DEGENERATE_PIVOT {
                diag[i] = sd;
                for r in (i + 1)..m {
                    let dot: f64 = (0..i).map(|k| lower[r][k] * lower[i][k]).sum();
                    lower[r][i] = (c[r][i] - dot) / sd;
                }
                y[i] = truncated_mean(z);
            } else {
                diag[i] = 0.0;
                for row in lower.iter_mut().skip(i + 1) {
                    row[i] = 0.0;
                }
                y[i] = 0.0;
            }
        }
        Self {
            dim: m,
            lower,
            diag,
            order,
        }
    }

    /// Separation-of-variables integrand at `w` (length `dim - 1`).
    fn integrand(&self, limits: &[f64], w: &[f64], y: &mut [f64]) -> f64 {
        let mut f = 1.0;
        for i in 0..self.dim {
            let row = &self.lower[i];
            let s: f64 = (0..i).map(|k| row[k] * y[k]).sum();
            let d = self.diag[i];
            let e = if d > 0.0 {
                std_normal_cdf((limits[i] - s) / d)
            } else if limits[i] >= s {
                1.0
            } else {
                0.0
            };
            f *= e;
            if f == 0.0 {
                return 0.0;
            }
            if i + 1 < self.dim {
                y[i] = if d > 0.0 {
                    quantile_unchecked((w[i] * e).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
                } else {
                    0.0
                };
            }
        }
        f
    }
}

/// Mean of a standard normal truncated to `(-inf, z]`.
fn truncated_mean(z: f64) -> f64 {
    if z == f64::INFINITY {
        return 0.0;
    }
    let p = std_normal_cdf(z);
    if p > 1e-300 {
        -std_normal_pdf(z) / p
    } else {
        z
    }
}

fn integrate(factor: &OrderedFactor, limits: &[Vec<f64>], config: &MvnConfig) -> Vec<MvnEstimate> {
    let dims = factor.dim.saturating_sub(1);
    let sets = limits.len();
    if dims == 0 {
        // One active coordinate: the integrand is constant.
        let mut y = [0.0];
        return limits
            .iter()
            .map(|b| MvnEstimate::exact(factor.integrand(b, &[], &mut y)))
            .collect();
    }

    let generator: Vec<f64> = first_primes(dims)
        .into_iter()
        .map(|p| (p as f64).sqrt().fract())
        .collect();
    let shifts: Vec<Vec<f64>> = (0..NUM_SHIFTS)
        .map(|s| {
            let mut rng = substream(config.seed, s as u64);
            (0..dims).map(|_| rng.random::<f64>()).collect()
        })
        .collect();

    let mut sums = vec![vec![0.0; sets]; NUM_SHIFTS];
    let mut done = 0usize;
    let mut target = INITIAL_POINTS.min((config.max_samples / NUM_SHIFTS).max(1));
    loop {
        let partial: Vec<Vec<f64>> = shifts
            .par_iter()
            .map(|shift| {
                let mut acc = vec![0.0; sets];
                let mut w = vec![0.0; dims];
                let mut y = vec![0.0; factor.dim];
                for i in (done + 1)..=target {
                    for (d, wd) in w.iter_mut().enumerate() {
                        let u = (i as f64 * generator[d] + shift[d]).fract();
                        *wd = (2.0 * u - 1.0).abs();
                    }
                    for (a, b) in acc.iter_mut().zip(limits) {
                        *a += factor.integrand(b, &w, &mut y);
                    }
                }
                acc
            })
            .collect();
        for (total, part) in sums.iter_mut().zip(partial) {
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
        }
        done = target;

        let estimates: Vec<MvnEstimate> = (0..sets)
            .map(|k| {
                let means: Vec<f64> = sums.iter().map(|s| s[k] / done as f64).collect();
                let mean = means.iter().sum::<f64>() / NUM_SHIFTS as f64;
                let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>()
                    / (NUM_SHIFTS - 1) as f64;
                MvnEstimate {
                    value: mean.clamp(0.0, 1.0),
                    est_error: ERROR_SIGMAS * (var / NUM_SHIFTS as f64).sqrt(),
                    samples_used: done * NUM_SHIFTS,
                    converged: false,
                }
            })
            .collect();
        let ok = estimates
            .iter()
            .all(|e| e.est_error <= config.target_abs_error);
        let next = target * 2;
        if ok || next * NUM_SHIFTS > config.max_samples {
            return estimates
                .into_iter()
                .map(|e| MvnEstimate {
                    converged: e.est_error <= config.target_abs_error,
                    ..e
                })
                .collect();
        }
        target = next;
    }
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes
            .iter()
            .take_while(|&&p| p * p <= candidate)
            .all(|&p| candidate % p != 0)
        {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile `sqrt(2) * erfinv(2u - 1)` for `u` in `(0, 1)`.
pub fn std_normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!(
            "normal quantile needs u in (0, 1), got {u}"
        )));
    }
    Ok(quantile_unchecked(u))
}

/// Wichura's AS 241 (PPND16) rational approximations, relative accuracy
/// about 1e-16 across the whole open interval.
fn quantile_unchecked(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&AS241_A, r) / poly(&AS241_B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        poly(&AS241_C, r) / poly(&AS241_D, r)
    } else {
        r -= 5.0;
        poly(&AS241_E, r) / poly(&AS241_F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Horner evaluation, coefficients in ascending order.
fn poly(coeffs: &[f64; 8], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

const AS241_A: [f64; 8] = [
    3.387_132_872_796_366_608,
    133.141_667_891_784_377_45,
    1_971.590_950_306_551_442_7,
    13_731.693_765_509_461_125,
    45_921.953_931_549_871_457,
    67_265.770_927_008_700_853,
    33_430.575_583_588_128_105,
    2_509.080_928_730_122_672_7,
];
const AS241_B: [f64; 8] = [
    1.0,
    42.313_330_701_600_911_252,
    687.187_007_492_057_908_3,
    5_394.196_021_424_751_107_7,
    21_213.794_301_586_595_867,
    39_307.895_800_092_710_61,
    28_729.085_735_721_942_674,
    5_226.495_278_852_854_561,
];
const AS241_C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    0.241_780_725_177_450_611_77,
    0.022_723_844_989_269_184_583_3,
    7.745_450_142_783_414_076_4e-4,
];
const AS241_D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    0.689_767_334_985_100_004_55,
    0.148_103_976_427_480_074_59,
    0.015_198_666_563_616_457_196_6,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const AS241_E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    0.296_560_571_828_504_891_23,
    0.026_532_189_526_576_123_093,
    0.001_242_660_947_388_078_438_6,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const AS241_F: [f64; 8] = [
    1.0,
    0.599_832_206_555_887_937_69,
    0.136_929_880_922_735_805_31,
    0.014_875_361_290_850_614_852_5,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];
