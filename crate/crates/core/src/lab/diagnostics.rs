use rand::Rng;
use serde::Serialize;

use crate::error::Error;
use crate::genfun::{check_iteration_identity, check_psi_bound, fk_bounds, EnvSequence};
use crate::linalg::{basis, Matrix};
use crate::matprod::{hennion_decompose, lyapunov, AmbientSampler};
use crate::model::{check_conditions, ConditionReport, EnvDistribution, DEFAULT_EPSILON};
use crate::spectral::{lambda_prime, solve_default, SpectralSolution, DEFAULT_H};
use crate::stats::{run_replicas, Estimate, ReplicaRng};
use crate::tilt::{check_consistency, check_total_mass, psi_series, step_distribution, TiltedSampler, MAX_DEFECT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

/// Outcome of one family of checks. `worst` is the value closest to (or
/// beyond) its limit; `skipped` counts cases where the check is undefined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Section {
    pub status: Status,
    pub cases: usize,
    pub skipped: usize,
    pub worst: Option<f64>,
    pub limit: Option<f64>,
    pub note: String,
}

impl Section {
    fn not_applicable(note: impl Into<String>) -> Self {
        Self {
            status: Status::NotApplicable,
            cases: 0,
            skipped: 0,
            worst: None,
            limit: None,
            note: note.into(),
        }
    }

    fn from_values(values: &[Option<f64>], limit: f64, note: &str) -> Self {
        let worst = values.iter().flatten().copied().fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        });
        let skipped = values.iter().filter(|v| v.is_none()).count();
        let pass = values.iter().flatten().all(|&v| v <= limit);
        Self {
            status: if pass { Status::Pass } else { Status::Fail },
            cases: values.len(),
            skipped,
            worst,
            limit: Some(limit),
            note: note.to_string(),
        }
    }

    pub fn is_failure(&self) -> bool {
        self.status == Status::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovSection {
    pub status: Status,
    /// Under the ambient law.
    pub ambient: Option<f64>,
    pub ambient_std_error: Option<f64>,
    /// Under the tilt at `θ = 1`; should match `Λ′(1)`.
    pub tilted: Option<f64>,
    pub tilted_std_error: Option<f64>,
    pub lambda_prime1: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub conditions: ConditionReport,
    pub lambda1: Option<f64>,
    pub lambda_prime1: Option<f64>,
    pub psi_bound: Section,
    pub iteration_identity: Section,
    pub furstenberg_kesten: Section,
    pub total_mass: Section,
    pub consistency: Section,
    pub step_normalization: Section,
    pub hennion: Section,
    pub lyapunov: LyapunovSection,
    pub psi_series: Section,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsOptions {
    /// Random cases per sweep.
    pub cases: usize,
    /// Longest sequence in the identity sweep.
    pub identity_n: usize,
    /// Longest product in the Furstenberg–Kesten sweep.
    pub fk_n: usize,
    /// Longest horizon for exhaustive total-mass checks.
    pub mass_n: usize,
    pub hennion_lag: usize,
    pub lyapunov_n: usize,
    pub lyapunov_reps: usize,
    pub psi_k: usize,
    pub grid: Option<usize>,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            cases: 1000,
            identity_n: 10,
            fk_n: 30,
            mass_n: 6,
            hennion_lag: 30,
            lyapunov_n: 200,
            lyapunov_reps: 1000,
            psi_k: 100,
            grid: None,
        }
    }
}

pub const IDENTITY_TOL: f64 = 1e-9;
pub const HENNION_TOL: f64 = 1e-8;
/// Relative tolerance between the tilted Lyapunov exponent and `Λ′(1)`.
pub const LYAPUNOV_REL_TOL: f64 = 0.05;

fn random_point(p: usize, rng: &mut ReplicaRng) -> Vec<f64> {
    (0..p).map(|_| rng.random::<f64>()).collect()
}

fn random_weights(p: usize, rng: &mut ReplicaRng) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..p).map(|_| if rng.random::<f64>() < 0.25 { 0.0 } else { rng.random() }).collect())
        .collect();
    let a = Matrix::from_rows(&rows);
    if a.l1() > 0.0 {
        a
    } else {
        Matrix::identity(p)
    }
}

fn mass_limit(p: usize) -> f64 {
    if p == 1 {
        1e-10
    } else {
        1e-6
    }
}

/// Runs every bound, identity and convergence check on `env` and collects
/// the outcomes; failures are reported, not raised.
pub fn diagnostics(env: &EnvDistribution, opts: &DiagnosticsOptions, seed: u64) -> DiagnosticsReport {
    let p = env.p();
    let conditions = check_conditions(env, DEFAULT_EPSILON);

    // ψ-bound: ψ / (γ p² T) must stay within [0, 1].
    let psi_values = run_replicas(seed, opts.cases, |rng| {
        let atom = env.atom(rng.random_range(0..env.len()));
        let a = random_weights(p, rng);
        let s = random_point(p, rng);
        check_psi_bound(atom, &a, &s).ok().map(|c| match (c.pass, c.bound > 0.0) {
            (false, _) => f64::INFINITY,
            (true, true) => (c.psi / c.bound).min(1.0),
            (true, false) => 0.0,
        })
    });
    let psi_bound = Section::from_values(&psi_values, 1.0, "ψ / (γp²T) over random (atom, a, s)");

    let identity_values = run_replicas(seed ^ 1, opts.cases, |rng| {
        let n = rng.random_range(0..=opts.identity_n);
        let seq = EnvSequence::sample(env, n, rng);
        let s = random_point(p, rng);
        let i = rng.random_range(0..p);
        check_iteration_identity(env, &seq, i, &s).ok().map(|c| c.residual)
    });
    let iteration_identity = Section::from_values(&identity_values, IDENTITY_TOL, "relative residual of the harmonic-mean identity");

    let furstenberg_kesten = if env.gamma().is_finite() {
        let values = run_replicas(seed ^ 2, opts.cases, |rng| {
            let n = rng.random_range(1..=opts.fk_n.max(1));
            let seq = EnvSequence::sample(env, n, rng);
            let s = random_point(p, rng);
            let i = rng.random_range(0..p);
            fk_bounds(env, &seq, i, &s)
                .ok()
                .map(|b| if b.pass { 0.0 } else { 1.0 })
        });
        Section::from_values(&values, 0.0, "count of ratios outside [Δ(s)/(p²γ²), γ²p²]")
    } else {
        Section::not_applicable("some mean matrix has a zero entry")
    };

    let hennion = if env.atoms().iter().all(|a| a.mean().is_positive()) {
        let values = run_replicas(seed ^ 3, opts.cases.div_ceil(10), |rng| {
            let seq = EnvSequence::sample(env, opts.hennion_lag, rng);
            hennion_decompose(env, &seq, 1).ok().map(|d| d.residual)
        });
        Section::from_values(&values, HENNION_TOL, "rank-one residual of L_{n,N}/||L_{n,N}|| at the largest lag")
    } else {
        Section::not_applicable("some mean matrix has a zero entry")
    };

    let grid = opts.grid.unwrap_or_else(|| crate::spectral::default_grid(p));
    let spec = if p <= 3 {
        solve_default(env, 1.0, grid)
    } else {
        Err(Error::NotApplicable(format!("transfer operator needs p ≤ 3, got {p}")))
    };
    let lambda_prime1 = spec.as_ref().ok().and_then(|_| lambda_prime(env, 1.0, DEFAULT_H, grid).ok());
    let ambient = lyapunov(env, &AmbientSampler { env }, opts.lyapunov_n, opts.lyapunov_reps, seed ^ 4).ok();

    let (total_mass, consistency, step_normalization, lyap, psi) = match &spec {
        Ok(spec) => spectral_sections(env, spec, opts, seed, lambda_prime1, ambient),
        Err(e) => {
            let note = format!("no spectral solution: {e}");
            (
                Section::not_applicable(&note),
                Section::not_applicable(&note),
                Section::not_applicable(&note),
                LyapunovSection {
                    status: Status::NotApplicable,
                    ambient: ambient.map(|a| a.mean),
                    ambient_std_error: ambient.map(|a| a.std_error),
                    tilted: None,
                    tilted_std_error: None,
                    lambda_prime1: None,
                    note: note.clone(),
                },
                Section::not_applicable(&note),
            )
        }
    };

    let sections = [
        &psi_bound,
        &iteration_identity,
        &furstenberg_kesten,
        &total_mass,
        &consistency,
        &step_normalization,
        &hennion,
        &psi,
    ];
    let pass = !sections.iter().any(|s| s.is_failure()) && lyap.status != Status::Fail;
    DiagnosticsReport {
        conditions,
        lambda1: spec.as_ref().ok().map(|s| s.lambda),
        lambda_prime1,
        psi_bound,
        iteration_identity,
        furstenberg_kesten,
        total_mass,
        consistency,
        step_normalization,
        hennion,
        lyapunov: lyap,
        psi_series: psi,
        pass,
    }
}

fn spectral_sections(
    env: &EnvDistribution,
    spec: &SpectralSolution,
    opts: &DiagnosticsOptions,
    seed: u64,
    lambda_prime1: Option<f64>,
    ambient: Option<Estimate>,
) -> (Section, Section, Section, LyapunovSection, Section) {
    let p = env.p();
    let limit = mass_limit(p);
    let mass: Vec<Option<f64>> = (0..=opts.mass_n).map(|n| check_total_mass(env, spec, n).ok()).collect();
    let total_mass = Section::from_values(&mass, limit, "|E p_n(x, L_{n,1}) − 1| over grid nodes, θ = 1");
    let cons: Vec<Option<f64>> = (0..opts.mass_n).map(|n| check_consistency(env, spec, n).ok()).collect();
    let consistency = Section::from_values(&cons, limit, "|E p_{n+1}(x, M m) − p_n(x, m)| over grid nodes, θ = 1");

    let defects: Vec<Option<f64>> = spec
        .grid
        .nodes()
        .iter()
        .map(|x| Some(step_distribution(x, env, spec).map_or(f64::INFINITY, |d| d.defect())))
        .collect();
    let step_normalization = Section::from_values(&defects, MAX_DEFECT, "raw defect of the tilted step law at grid nodes");

    let x0 = basis(p, 0);
    let sampler = TiltedSampler { env, spec, x0: x0.clone() };
    let tilted = lyapunov(env, &sampler, opts.lyapunov_n, opts.lyapunov_reps, seed ^ 5).ok();
    let status = match (tilted, lambda_prime1) {
        (Some(t), Some(d)) => {
            let tol = (LYAPUNOV_REL_TOL * d.abs()).max(3.0 * t.std_error).max(1e-12);
            if (t.mean - d).abs() <= tol {
                Status::Pass
            } else {
                Status::Fail
            }
        }
        _ => Status::NotApplicable,
    };
    let lyap = LyapunovSection {
        status,
        ambient: ambient.map(|a| a.mean),
        ambient_std_error: ambient.map(|a| a.std_error),
        tilted: tilted.map(|t| t.mean),
        tilted_std_error: tilted.map(|t| t.std_error),
        lambda_prime1,
        note: "tilted exponent against Λ′(1) within 5% or 3 s.e.".into(),
    };

    let tails = run_replicas(seed ^ 6, opts.cases.div_ceil(10), |rng| {
        psi_series(env, spec, &x0, opts.psi_k, rng).ok().map(|s| {
            let monotone = s.partial_sums.windows(2).all(|w| w[1] >= w[0]) && s.partial_sums.iter().all(|v| v.is_finite());
            (monotone, s.tail_increment().unwrap_or(0.0))
        })
    });
    let monotone = tails.iter().flatten().all(|t| t.0);
    let worst = tails.iter().flatten().map(|t| t.1).fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let psi = Section {
        status: if monotone { Status::Pass } else { Status::Fail },
        cases: tails.len(),
        skipped: tails.iter().filter(|t| t.is_none()).count(),
        worst,
        limit: None,
        note: format!("largest increment ||L_(k−1,1)|| T_k at k = {} along tilted paths", opts.psi_k),
    };
    (total_mass, consistency, step_normalization, lyap, psi)
}
