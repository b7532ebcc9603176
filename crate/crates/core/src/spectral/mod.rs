//! The transfer operator `P_θ g(x) = E[|Mx|^θ g(M·x)]` on the simplex and
//! its spectral triple `(λ(θ), r_θ, l_θ)`.
//!
//! `P_θ` is discretized on a [`SimplexGrid`] with piecewise-linear
//! interpolation; every row of the resulting matrix is nonnegative, so power
//! iteration keeps iterates positive. For `θ = 1` linear functions
//! `x ↦ (u, x)` are mapped to linear functions, hence the discretization is
//! exact for `r_1`.

mod grid;
mod operator;

pub use grid::{SimplexGrid, Stencil};
pub use operator::DiscreteOperator;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matprod::ScaledProduct;
use crate::model::EnvDistribution;
use crate::stats::{run_replicas, Estimate};

pub const DEFAULT_TOL: f64 = 1e-13;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Step of the central difference for `Λ′`.
pub const DEFAULT_H: f64 = 1e-3;
/// `r_θ` below this on any node marks the solution as corrupted.
pub const MIN_R: f64 = 1e-12;

/// Default nodes per edge for a given number of types.
pub fn default_grid(p: usize) -> usize {
    match p {
        1 => 1,
        2 => 200,
        _ => 60,
    }
}

/// `P_θ g` at the grid nodes.
pub fn apply_p(env: &EnvDistribution, theta: f64, grid: &SimplexGrid, g: &[f64]) -> Result<Vec<f64>> {
    if g.len() != grid.len() {
        return Err(Error::Dimension {
            expected: grid.len(),
            got: g.len(),
        });
    }
    Ok(DiscreteOperator::build(env, theta, grid)?.apply(g))
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralSolution {
    pub theta: f64,
    pub lambda: f64,
    /// `r_θ` at the nodes, normalized so that `Σ l·r = 1`.
    pub r_values: Vec<f64>,
    /// `l_θ` as node weights summing to one.
    pub l_weights: Vec<f64>,
    pub grid: SimplexGrid,
    pub iterations: usize,
    /// `max_x |P_θ r − λ r| / λ`
    pub residual: f64,
    /// `|l P_θ − λ l|_1 / λ`
    pub adjoint_residual: f64,
}

impl SpectralSolution {
    /// Interpolated `r_θ(x)`.
    pub fn r(&self, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.r_values, x)
    }

    pub fn log_lambda(&self) -> f64 {
        self.lambda.ln()
    }

    pub fn min_r(&self) -> f64 {
        self.r_values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn rayleigh(l: &[f64], ar: &[f64], r: &[f64]) -> f64 {
    let num: f64 = l.iter().zip(ar).map(|(a, b)| a * b).sum();
    let den: f64 = l.iter().zip(r).map(|(a, b)| a * b).sum();
    num / den
}

fn right_residual(ar: &[f64], r: &[f64], lambda: f64) -> f64 {
    ar.iter()
        .zip(r)
        .map(|(a, b)| (a - lambda * b).abs())
        .fold(0.0, f64::max)
        / lambda
}

fn left_residual(la: &[f64], l: &[f64], lambda: f64) -> f64 {
    la.iter().zip(l).map(|(a, b)| (a - lambda * b).abs()).sum::<f64>() / lambda
}

/// Perron triple of the discretized `P_θ` by simultaneous left/right power
/// iteration. Right iterates are normalized by their maximum, left iterates
/// by their total mass; `λ` is the Rayleigh quotient `l·(Ar) / l·r`.
pub fn solve(env: &EnvDistribution, theta: f64, resolution: usize, tol: f64, max_iter: usize) -> Result<SpectralSolution> {
    if !(theta > 0.0) {
        return Err(Error::input("theta", format!("θ = {theta} must be positive")));
    }
    let grid = SimplexGrid::new(env.p(), resolution)?;
    let op = DiscreteOperator::build(env, theta, &grid)?;
    let n = grid.len();
    let mut r = vec![1.0; n];
    let mut l = vec![1.0 / n as f64; n];
    let mut lambda_prev = f64::NAN;
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let ar = op.apply(&r);
        let la = op.apply_adjoint(&l);
        let lambda = rayleigh(&l, &ar, &r);
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Degenerate(format!("Rayleigh quotient {lambda}")));
        }
        residual = right_residual(&ar, &r, lambda);
        let adj = left_residual(&la, &l, lambda);
        let converged = (lambda - lambda_prev).abs() <= tol * lambda && residual <= tol && adj <= tol;
        if converged {
            return finish(theta, grid, &op, r, l, iter);
        }
        let rmax = ar.iter().copied().fold(0.0, f64::max);
        r = ar.iter().map(|v| v / rmax).collect();
        let lsum: f64 = la.iter().sum();
        l = la.iter().map(|v| v / lsum).collect();
        lambda_prev = lambda;
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

fn finish(theta: f64, grid: SimplexGrid, op: &DiscreteOperator, r: Vec<f64>, l: Vec<f64>, iterations: usize) -> Result<SpectralSolution> {
    let dot: f64 = l.iter().zip(&r).map(|(a, b)| a * b).sum();
    let r: Vec<f64> = r.iter().map(|v| v / dot).collect();
    let ar = op.apply(&r);
    let la = op.apply_adjoint(&l);
    let lambda = rayleigh(&l, &ar, &r);
    let sol = SpectralSolution {
        theta,
        lambda,
        residual: right_residual(&ar, &r, lambda),
        adjoint_residual: left_residual(&la, &l, lambda),
        r_values: r,
        l_weights: l,
        grid,
        iterations,
    };
    if !(sol.min_r() >= MIN_R) {
        return Err(Error::CorruptedSolution(format!("min r = {:e}", sol.min_r())));
    }
    Ok(sol)
}

/// [`solve`] with the default tolerance and iteration cap.
pub fn solve_default(env: &EnvDistribution, theta: f64, resolution: usize) -> Result<SpectralSolution> {
    solve(env, theta, resolution, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// `(E ||M_n···M_1||^θ)^{1/n}` by Monte Carlo; biased for finite `n`.
pub fn lambda_subadditive_mc(env: &EnvDistribution, theta: f64, n: usize, reps: usize, seed: u64) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::input("n", "horizon must be positive"));
    }
    if reps == 0 {
        return Err(Error::input("reps", "at least one replica is required"));
    }
    let logs: Vec<f64> = run_replicas(seed, reps, |rng| {
        let mut prod = ScaledProduct::identity(env.p());
        for _ in 0..n {
            let e = env.sample_index(rand::Rng::random::<f64>(rng));
            prod.push_left(env.atom(e).mean());
        }
        theta * prod.log_op_norm()
    });
    // mean of exp(logs), factored through the maximum.
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logs.iter().map(|v| (v - top).exp()).collect();
    let est = Estimate::from_samples(&scaled);
    let log_mean = est.mean.ln() + top;
    let value = (log_mean / n as f64).exp();
    // d/dm m^{1/n} = m^{1/n} / (n m)
    let std_error = value * est.std_error / (n as f64 * est.mean);
    Ok(Estimate { mean: value, std_error })
}

/// Central difference `(Λ(θ+h) − Λ(θ−h)) / 2h` of `Λ = log λ`.
pub fn lambda_prime(env: &EnvDistribution, theta: f64, h: f64, resolution: usize) -> Result<f64> {
    if !(theta - h > 0.0) {
        return Err(Error::input("h", format!("θ − h = {} must be positive", theta - h)));
    }
    let up = solve_default(env, theta + h, resolution)?.log_lambda();
    let down = solve_default(env, theta - h, resolution)?.log_lambda();
    Ok((up - down) / (2.0 * h))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Subcriticality {
    pub lambda1: f64,
    pub lambda_prime1: f64,
    pub strongly_subcritical: bool,
}

/// `λ(1)`, `Λ′(1)` and whether `Λ′(1) < 0`. With finitely many atoms every
/// `θ > 0` lies in the interior of the moment set.
pub fn subcriticality_check(env: &EnvDistribution, resolution: usize) -> Result<Subcriticality> {
    let lambda1 = solve_default(env, 1.0, resolution)?.lambda;
    let lambda_prime1 = lambda_prime(env, 1.0, DEFAULT_H, resolution)?;
    Ok(Subcriticality {
        lambda1,
        lambda_prime1,
        strongly_subcritical: lambda_prime1 < 0.0,
    })
}
