//! Fluid-antenna port geometry, spatial correlation and channel sampling.
//!
//! A fluid antenna exposes `N = n1 * n2` candidate ports laid out on a
//! rectangular aperture of `w1 x w2` wavelengths. Port gains are unit-variance
//! circularly-symmetric complex Gaussians whose correlation follows the
//! isotropic-scattering kernel `j0(2 pi d)`, `d` being the port distance in
//! wavelengths. The receiver always switches to the strongest port.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Diagonal loadings tried, in order, when the correlation matrix is not
/// numerically positive definite.
const JITTER_LADDER: [f64; 8] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Maximum entrywise error tolerated between `L * L^T` and the matrix it factors.
const FACTOR_TOLERANCE: f64 = 1e-10;

/// Port layout of a two-dimensional fluid antenna.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortGrid {
    n1: usize,
    n2: usize,
    w1: f64,
    w2: f64,
}

impl PortGrid {
    /// `n1 x n2` ports spread over an aperture of `w1 x w2` wavelengths.
    pub fn new(n1: usize, n2: usize, w1: f64, w2: f64) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::domain(format!(
                "port counts must be positive, got {n1}x{n2}"
            )));
        }
        if !(w1.is_finite() && w1 >= 0.0 && w2.is_finite() && w2 >= 0.0) {
            return Err(Error::domain(format!(
                "apertures must be finite and nonnegative, got {w1}x{w2}"
            )));
        }
        Ok(Self { n1, n2, w1, w2 })
    }

    /// A single fixed antenna.
    pub fn single() -> Self {
        Self {
            n1: 1,
            n2: 1,
            w1: 0.0,
            w2: 0.0,
        }
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn w1(&self) -> f64 {
        self.w1
    }

    pub fn w2(&self) -> f64 {
        self.w2
    }

    /// Total number of ports.
    pub fn num_ports(&self) -> usize {
        self.n1 * self.n2
    }

    /// Maps the one-based port coordinate `(n1_idx, n2_idx)` to its one-based
    /// linear index `(n1_idx - 1) * n2 + n2_idx`.
    pub fn port_index(&self, n1_idx: usize, n2_idx: usize) -> Result<usize> {
        self.check_coords(n1_idx, n2_idx)?;
        Ok((n1_idx - 1) * self.n2 + n2_idx)
    }

    /// Inverse of [`port_index`](Self::port_index).
    pub fn port_coords(&self, index: usize) -> Result<(usize, usize)> {
        if index == 0 || index > self.num_ports() {
            return Err(Error::domain(format!(
                "port index {index} outside 1..={}",
                self.num_ports()
            )));
        }
        let zero = index - 1;
        Ok((zero / self.n2 + 1, zero % self.n2 + 1))
    }

    /// Correlation between ports `a` and `b` given as one-based coordinates.
    ///
    /// A dimension holding a single port contributes no offset.
    pub fn spatial_correlation(&self, a: (usize, usize), b: (usize, usize)) -> Result<f64> {
        self.check_coords(a.0, a.1)?;
        self.check_coords(b.0, b.1)?;
        let d1 = axis_offset(a.0, b.0, self.n1, self.w1);
        let d2 = axis_offset(a.1, b.1, self.n2, self.w2);
        Ok(sinc_j0(2.0 * PI * (d1 * d1 + d2 * d2).sqrt()))
    }

    fn check_coords(&self, n1_idx: usize, n2_idx: usize) -> Result<()> {
        if n1_idx == 0 || n1_idx > self.n1 || n2_idx == 0 || n2_idx > self.n2 {
            return Err(Error::domain(format!(
                "port ({n1_idx}, {n2_idx}) outside grid {}x{}",
                self.n1, self.n2
            )));
        }
        Ok(())
    }
}

fn axis_offset(i: usize, j: usize, n: usize, w: f64) -> f64 {
    if n == 1 {
        return 0.0;
    }
    i.abs_diff(j) as f64 * w / (n - 1) as f64
}

/// Zeroth-order spherical Bessel function of the first kind, `sin(x) / x`.
pub fn sinc_j0(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Spatial correlation matrix `J` of a port set together with a lower
/// Cholesky factor `L`, `J = L * L^T`.
///
/// The stored entries are the (possibly diagonally loaded) matrix that `L`
/// factors; loading is renormalized so the diagonal stays exactly one.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    entries: DMatrix<f64>,
    factor: DMatrix<f64>,
    jitter: f64,
}

impl CorrelationMatrix {
    /// Builds `J` from the port geometry.
    pub fn from_grid(grid: &PortGrid) -> Result<Self> {
        let n = grid.num_ports();
        let mut j = DMatrix::<f64>::identity(n, n);
        for a in 0..n {
            let pa = grid.port_coords(a + 1)?;
            for b in (a + 1)..n {
                let pb = grid.port_coords(b + 1)?;
                let rho = grid.spatial_correlation(pa, pb)?;
                j[(a, b)] = rho;
                j[(b, a)] = rho;
            }
        }
        Self::factorize(j)
    }

    /// Validates and factors a user-supplied correlation matrix.
    pub fn from_entries(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::Invariant(format!(
                "correlation matrix must be square and nonempty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        for i in 0..n {
            let d = entries[(i, i)];
            if (d - 1.0).abs() > 1e-12 {
                return Err(Error::Invariant(format!(
                    "correlation diagonal must be 1, entry ({i}, {i}) is {d}"
                )));
            }
            for k in 0..n {
                let v = entries[(i, k)];
                if !v.is_finite() || v.abs() > 1.0 + 1e-12 {
                    return Err(Error::Invariant(format!(
                        "correlation entry ({i}, {k}) = {v} outside [-1, 1]"
                    )));
                }
                if (v - entries[(k, i)]).abs() > 1e-12 {
                    return Err(Error::Invariant(format!(
                        "correlation matrix not symmetric at ({i}, {k})"
                    )));
                }
            }
        }
        let mut j = entries;
        for i in 0..n {
            j[(i, i)] = 1.0;
            for k in 0..i {
                let v = 0.5 * (j[(i, k)] + j[(k, i)]);
                j[(i, k)] = v.clamp(-1.0, 1.0);
                j[(k, i)] = v.clamp(-1.0, 1.0);
            }
        }
        Self::factorize(j)
    }

    /// Independent ports.
    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("correlation dimension must be positive"));
        }
        Self::factorize(DMatrix::identity(n, n))
    }

    fn factorize(raw: DMatrix<f64>) -> Result<Self> {
        let n = raw.nrows();
        for &eps in JITTER_LADDER.iter() {
            let loaded = if eps == 0.0 {
                raw.clone()
            } else {
                (&raw + DMatrix::<f64>::identity(n, n) * eps) / (1.0 + eps)
            };
            let mut loaded = loaded;
            for i in 0..n {
                loaded[(i, i)] = 1.0;
            }
            let Some(chol) = loaded.clone().cholesky() else {
                continue;
            };
            let factor = chol.l();
            let rebuilt = &factor * factor.transpose();
            let err = (&rebuilt - &loaded).amax();
            if err <= FACTOR_TOLERANCE {
                return Ok(Self {
                    entries: loaded,
                    factor,
                    jitter: eps,
                });
            }
        }
        let min_eig = raw.clone().symmetric_eigenvalues().min();
        Err(Error::Numerical(format!(
            "correlation matrix ({n}x{n}) not factorizable after diagonal loading up to {:e}; \
             smallest eigenvalue {min_eig:e}",
            JITTER_LADDER[JITTER_LADDER.len() - 1]
        )))
    }

    /// Number of ports.
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Matrix entries (unit diagonal).
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Lower-triangular factor `L`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Diagonal loading that was needed to factor the matrix (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.entries[(i, k)]
    }

    /// Relabels the ports: port `i` of the result is port `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.dim();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::domain("permutation does not match matrix dimension"));
        }
        let j = DMatrix::from_fn(n, n, |a, b| self.entries[(perm[a], perm[b])]);
        Self::factorize(j)
    }
}

/// One draw of the port gains of a fluid antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Normalized complex gain of every port.
    pub port_gains: Vec<Complex64>,
    /// Zero-based index of the strongest port (smallest index on ties).
    pub best_port: usize,
    /// Squared magnitude of the strongest port gain.
    pub best_gain_sq: f64,
}

impl ChannelRealization {
    /// Wraps a gain vector, selecting the strongest port.
    pub fn from_gains(port_gains: Vec<Complex64>) -> Self {
        let (best_port, best_gain_sq) = strongest_port(&port_gains);
        Self {
            port_gains,
            best_port,
            best_gain_sq,
        }
    }
}

fn strongest_port(gains: &[Complex64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (l, h) in gains.iter().enumerate() {
        let p = h.norm_sqr();
        if p > best.1 {
            best = (l, p);
        }
    }
    best
}

/// Draws `h = L g` with `g` i.i.d. standard circularly-symmetric complex
/// Gaussians, so every port is `CN(0, 1)` and `E[h h^H] = J`.
///
/// Standard normals are consumed in port order, real part first, so the gain
/// of port 0 depends only on the first two draws of `rng`.
pub fn sample_realization<R: Rng + ?Sized>(corr: &CorrelationMatrix, rng: &mut R) -> ChannelRealization {
    let n = corr.dim();
    let g: Vec<Complex64> = (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * FRAC_1_SQRT_2
        })
        .collect();
    let l = corr.factor();
    let gains = (0..n)
        .map(|row| {
            (0..=row).fold(Complex64::new(0.0, 0.0), |acc, col| acc + g[col] * l[(row, col)])
        })
        .collect();
    ChannelRealization::from_gains(gains)
}

/// Squared magnitude of the strongest port only; avoids keeping the gain vector.
pub fn sample_best_gain_sq<R: Rng + ?Sized>(corr: &CorrelationMatrix, rng: &mut R) -> f64 {
    sample_realization(corr, rng).best_gain_sq
}
