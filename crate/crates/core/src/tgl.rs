//! Toeplitz graphical lasso solved by ADMM.
//!
//! Minimises `-log det Θ + tr(SΘ) + (λ / m) Σ_{i≠j} |Θ_ij|` over symmetric
//! block-Toeplitz `Θ`, where `m` is the number of samples behind `S`.
//!
//! The splitting is `Θ = Z` with `Θ` carrying the smooth log-det and trace
//! terms and `Z` carrying the Toeplitz constraint and the ℓ1 penalty; `U` is
//! the scaled dual variable.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SticcError};
use crate::model::{log_det_pd, max_asymmetry, ToeplitzPrecision};

/// One cluster's M-step problem.
#[derive(Debug, Clone)]
pub struct TglProblem {
    pub covariance: DMatrix<f64>,
    pub lam: f64,
    pub member_count: usize,
    pub radius: usize,
    pub dim: usize,
}

impl TglProblem {
    pub fn new(covariance: DMatrix<f64>, lam: f64, member_count: usize, radius: usize, dim: usize) -> Result<Self> {
        let n = radius * dim;
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(SticcError::Dimension { expected: n, actual: covariance.nrows() });
        }
        if !(lam >= 0.0 && lam.is_finite()) {
            return Err(SticcError::Parameter(format!("lambda must be finite and >= 0, got {lam}")));
        }
        if member_count == 0 {
            return Err(SticcError::Parameter("member count must be positive".into()));
        }
        let asym = max_asymmetry(&covariance);
        if asym > 1e-9 * covariance.amax().max(1.0) {
            return Err(SticcError::NotSymmetric(asym));
        }
        Ok(Self { covariance, lam, member_count, radius, dim })
    }

    pub fn width(&self) -> usize {
        self.radius * self.dim
    }

    /// Objective value at `theta`; `+inf` when `theta` is not positive definite.
    pub fn objective(&self, theta: &DMatrix<f64>) -> f64 {
        tgl_objective(theta, &self.covariance, self.lam, self.member_count)
    }
}

/// `-log det Θ + tr(SΘ) + (λ/m) Σ_{i≠j} |Θ_ij|`.
pub fn tgl_objective(theta: &DMatrix<f64>, s: &DMatrix<f64>, lam: f64, member_count: usize) -> f64 {
    let Ok(ld) = log_det_pd(theta) else {
        return f64::INFINITY;
    };
    let n = theta.nrows();
    let mut trace = 0.0;
    let mut l1 = 0.0;
    for i in 0..n {
        for j in 0..n {
            trace += s[(i, j)] * theta[(j, i)];
            if i != j {
                l1 += theta[(i, j)].abs();
            }
        }
    }
    -ld + trace + lam / member_count as f64 * l1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    /// Initial penalty parameter.
    pub rho: f64,
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Rebalance `rho` when one residual dominates the other by 10x.
    pub adaptive_rho: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self { rho: 1.0, max_iter: 1000, eps_abs: 1e-7, eps_rel: 1e-7, adaptive_rho: true }
    }
}

impl AdmmConfig {
    fn validate(&self) -> Result<()> {
        let ok = [self.rho, self.eps_abs, self.eps_rel].iter().all(|v| *v > 0.0 && v.is_finite()) && self.max_iter > 0;
        if ok {
            Ok(())
        } else {
            Err(SticcError::Parameter(format!("invalid ADMM configuration {self:?}")))
        }
    }
}

/// ADMM iterate, usable as a warm start for a later solve of a similar problem.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub theta: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub u: DMatrix<f64>,
    /// Penalty parameter that `u` is scaled by.
    pub rho: f64,
}

impl AdmmState {
    pub fn identity(n: usize) -> Self {
        Self { theta: DMatrix::identity(n, n), z: DMatrix::identity(n, n), u: DMatrix::zeros(n, n), rho: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct TglSolution {
    pub precision: ToeplitzPrecision,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub state: AdmmState,
}

/// Solves from the identity start `Θ = Z = I, U = 0`.
pub fn solve(problem: &TglProblem, cfg: &AdmmConfig) -> Result<TglSolution> {
    solve_from(problem, cfg, AdmmState::identity(problem.width()))
}

/// Solves from a given ADMM state.
pub fn solve_from(problem: &TglProblem, cfg: &AdmmConfig, start: AdmmState) -> Result<TglSolution> {
    cfg.validate()?;
    let n = problem.width();
    if start.z.nrows() != n || start.u.nrows() != n {
        return Err(SticcError::Dimension { expected: n, actual: start.z.nrows() });
    }
    let s = regularized(&problem.covariance);
    let mut rho = cfg.rho;
    let AdmmState { mut theta, mut z, mut u, rho: start_rho } = start;
    if start_rho > 0.0 && start_rho != rho {
        u *= start_rho / rho;
    }
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=cfg.max_iter {
        iterations = it;
        theta = theta_update(&z, &u, &s, rho)?;
        let z_prev = std::mem::replace(
            &mut z,
            z_update(&(&theta + &u), problem.lam, problem.member_count, rho, problem.radius, problem.dim),
        );
        let gap = &theta - &z;
        u += &gap;
        primal = gap.norm();
        dual = rho * (&z - &z_prev).norm();
        let eps_pri = n as f64 * cfg.eps_abs + cfg.eps_rel * theta.norm().max(z.norm());
        let eps_dual = n as f64 * cfg.eps_abs + cfg.eps_rel * rho * u.norm();
        if primal <= eps_pri && dual <= eps_dual {
            converged = true;
            break;
        }
        if cfg.adaptive_rho {
            if primal > 10.0 * dual && rho < 1e6 {
                rho *= 2.0;
                u /= 2.0;
            } else if dual > 10.0 * primal && rho > 1e-6 {
                rho /= 2.0;
                u *= 2.0;
            }
        }
    }

    let precision = ToeplitzPrecision::from_first_block_column(&make_pd(&z), problem.dim)?;
    Ok(TglSolution { precision, iterations, converged, primal_residual: primal, dual_residual: dual, state: AdmmState { theta, z, u, rho } })
}

/// Adds a small ridge when `s` has no Cholesky factor.
fn regularized(s: &DMatrix<f64>) -> DMatrix<f64> {
    if s.clone().cholesky().is_some() {
        return s.clone();
    }
    let n = s.nrows();
    let scale = s.trace() / n as f64;
    let ridge = 1e-6 * if scale > 0.0 { scale } else { 1.0 };
    s + DMatrix::identity(n, n) * ridge
}

/// Shifts the diagonal of a block-Toeplitz matrix until it is positive
/// definite. The shift keeps the matrix block-Toeplitz.
fn make_pd(z: &DMatrix<f64>) -> DMatrix<f64> {
    if z.clone().cholesky().is_some() {
        return z.clone();
    }
    let n = z.nrows();
    let min_eig = z.clone().symmetric_eigenvalues().min();
    let mut shift = (-min_eig).max(0.0) + 1e-8 * z.amax().max(1e-8);
    loop {
        let shifted = z + DMatrix::identity(n, n) * shift;
        if shifted.clone().cholesky().is_some() {
            return shifted;
        }
        shift *= 2.0;
    }
}

/// Proximal step for `-log det Θ + tr(SΘ) + (ρ/2)||Θ - Z + U||²`.
///
/// With `(Z - U) - S/ρ = Q diag(d) Qᵀ` the minimiser is
/// `Q diag((d + sqrt(d² + 4/ρ)) / 2) Qᵀ`.
pub fn theta_update(z: &DMatrix<f64>, u: &DMatrix<f64>, s: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>> {
    if !(rho > 0.0) {
        return Err(SticcError::Parameter(format!("rho must be positive, got {rho}")));
    }
    let n = z.nrows();
    for m in [z, u, s] {
        if m.nrows() != n || m.ncols() != n {
            return Err(SticcError::Dimension { expected: n, actual: m.nrows() });
        }
    }
    let target = z - u - s / rho;
    let asym = max_asymmetry(&target);
    if asym > 1e-8 * target.amax().max(1.0) {
        return Err(SticcError::NotSymmetric(asym));
    }
    let target = (&target + target.transpose()) * 0.5;
    let eig = target.symmetric_eigen();
    let four_over_rho = 4.0 / rho;
    let mapped = eig.eigenvalues.map(|d| {
        let root = (d * d + four_over_rho).sqrt();
        // avoid cancellation for strongly negative d
        if d >= 0.0 {
            0.5 * (d + root)
        } else {
            0.5 * four_over_rho / (root - d)
        }
    });
    let q = &eig.eigenvectors;
    let theta = q * DMatrix::from_diagonal(&mapped) * q.transpose();
    Ok((&theta + theta.transpose()) * 0.5)
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Proximal step for the block-Toeplitz constraint plus the ℓ1 penalty.
///
/// Every set of entries that the block-Toeplitz symmetric layout forces to
/// be equal is replaced by its average; off-diagonal sets are then
/// soft-thresholded by `λ / (m ρ)`. Diagonal entries are only averaged.
pub fn z_update(
    theta_plus_u: &DMatrix<f64>,
    lam: f64,
    member_count: usize,
    rho: f64,
    radius: usize,
    dim: usize,
) -> DMatrix<f64> {
    let n = radius * dim;
    debug_assert_eq!(theta_plus_u.nrows(), n);
    let v = theta_plus_u;
    let thresh = lam / (member_count.max(1) as f64 * rho);
    let mut z = DMatrix::zeros(n, n);

    for offset in 0..radius {
        let copies = radius - offset;
        for i in 0..dim {
            for j in 0..dim {
                if offset == 0 && j < i {
                    continue;
                }
                // entries of block (b + offset, b) at (i, j), and their mirror
                let mut sum = 0.0;
                for b in 0..copies {
                    let (r, c) = ((b + offset) * dim + i, b * dim + j);
                    sum += v[(r, c)] + v[(c, r)];
                }
                let avg = sum / (2 * copies) as f64;
                let val = if offset == 0 && i == j { avg } else { soft_threshold(avg, thresh) };
                for b in 0..copies {
                    let (r, c) = ((b + offset) * dim + i, b * dim + j);
                    z[(r, c)] = val;
                    z[(c, r)] = val;
                }
            }
        }
    }
    z
}
