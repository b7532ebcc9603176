//! Exponential change of measure driven by the direction chain.
//!
//! Under the tilt at `θ` the environment sequence is a Markov chain on atoms
//! steered by the direction `x_k = M_k·x_{k−1}`: from `x` the next atom is
//! `e` with probability `prob_e w_θ(x, M_e)`, where
//! `w_θ(x, m) = |mx|^θ r_θ(m·x) / (λ(θ) r_θ(x))`. The product of the one-step
//! weights telescopes to the density `p_n^θ(x_0, L_{n,1})`.
//!
//! On a grid the weights only sum to one up to the interpolation error, so
//! the sampler renormalizes each step and keeps the normalizers. Estimators
//! multiply them back in and stay unbiased for the ambient law.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::genfun::{EnvSequence, DEFAULT_BUDGET};
use crate::linalg::{basis, l1};
use crate::matprod::{ScaledProduct, SequenceSampler};
use crate::model::{EnvAtom, EnvDistribution};
use crate::spectral::SpectralSolution;
use crate::stats::{run_replicas, Estimate, ReplicaRng};

/// Largest tolerated `|Σ_e prob_e w_θ(x, M_e) − 1|` before renormalizing.
pub const MAX_DEFECT: f64 = 1e-3;

fn check_env(env: &EnvDistribution, spec: &SpectralSolution) -> Result<()> {
    if env.p() != spec.grid.p() {
        return Err(Error::Dimension {
            expected: spec.grid.p(),
            got: env.p(),
        });
    }
    Ok(())
}

fn r_at(spec: &SpectralSolution, x: &[f64]) -> Result<f64> {
    let r = spec.r(x);
    if !(r > 0.0) {
        return Err(Error::CorruptedSolution(format!("r({x:?}) = {r}")));
    }
    Ok(r)
}

fn check_direction(x: &[f64], p: usize) -> Result<()> {
    if x.len() != p {
        return Err(Error::Dimension { expected: p, got: x.len() });
    }
    if x.iter().any(|&v| !(v >= 0.0)) || (l1(x) - 1.0).abs() > 1e-12 {
        return Err(Error::input("x", format!("{x:?} is not on the simplex")));
    }
    Ok(())
}

/// One move of the direction chain: `|Mx|`, `M·x` and `w_θ(x, M)`.
#[derive(Debug, Clone)]
struct Move {
    norm: f64,
    next: Vec<f64>,
    weight: f64,
}

fn step_move(x: &[f64], r_x: f64, atom: &EnvAtom, spec: &SpectralSolution) -> Result<Move> {
    let y = atom.mean().mul_vec(x);
    let norm = l1(&y);
    if !(norm > 0.0) {
        return Err(Error::Degenerate(format!("M x = 0 at x = {x:?}")));
    }
    let next: Vec<f64> = y.iter().map(|v| v / norm).collect();
    let weight = norm.powf(spec.theta) * r_at(spec, &next)? / (spec.lambda * r_x);
    Ok(Move { norm, next, weight })
}

/// `w_θ(x, M_atom) = |Mx|^θ r_θ(M·x) / (λ(θ) r_θ(x))`.
pub fn weight(x: &[f64], atom: &EnvAtom, spec: &SpectralSolution) -> Result<f64> {
    check_direction(x, spec.grid.p())?;
    Ok(step_move(x, r_at(spec, x)?, atom, spec)?.weight)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDistribution {
    /// Renormalized `q_e(x)`.
    pub probs: Vec<f64>,
    /// `Σ_e prob_e w_θ(x, M_e)` before renormalization.
    pub raw_sum: f64,
}

impl StepDistribution {
    pub fn defect(&self) -> f64 {
        (self.raw_sum - 1.0).abs()
    }
}

fn moves(x: &[f64], env: &EnvDistribution, spec: &SpectralSolution) -> Result<(Vec<Move>, f64)> {
    let r_x = r_at(spec, x)?;
    let moves = env.iter().map(|(atom, _)| step_move(x, r_x, atom, spec)).collect::<Result<Vec<_>>>()?;
    let raw_sum: f64 = moves.iter().zip(env.probs()).map(|(m, q)| q * m.weight).sum();
    let defect = (raw_sum - 1.0).abs();
    if defect > MAX_DEFECT {
        return Err(Error::DiscretizationTooCoarse {
            defect,
            limit: MAX_DEFECT,
        });
    }
    Ok((moves, raw_sum))
}

/// `q_e(x) = prob_e w_θ(x, M_e)`, renormalized; the raw total is kept.
pub fn step_distribution(x: &[f64], env: &EnvDistribution, spec: &SpectralSolution) -> Result<StepDistribution> {
    check_env(env, spec)?;
    check_direction(x, env.p())?;
    let (moves, raw_sum) = moves(x, env, spec)?;
    let probs = moves.iter().zip(env.probs()).map(|(m, q)| q * m.weight / raw_sum).collect();
    Ok(StepDistribution { probs, raw_sum })
}

#[derive(Debug, Clone, Serialize)]
pub struct TiltedPath {
    pub atom_indices: EnvSequence,
    /// `x_0, ..., x_n`
    pub directions: Vec<Vec<f64>>,
    /// `Σ_k log w_θ(x_{k−1}, M_k) = log p_n^θ(x_0, L_{n,1})`
    pub log_density: f64,
    /// `Σ_k log Z_k`, the per-step normalizers divided out by the sampler.
    pub log_normalizer: f64,
    /// `log |L_{n,1} x_0|`
    pub log_norm: f64,
    /// Largest raw normalization defect met along the path.
    pub max_defect: f64,
    pub theta: f64,
}

impl TiltedPath {
    pub fn len(&self) -> usize {
        self.atom_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atom_indices.is_empty()
    }
}

/// Incremental state of one tilted path.
struct Walker<'a> {
    env: &'a EnvDistribution,
    spec: &'a SpectralSolution,
    x: Vec<f64>,
    log_density: f64,
    log_normalizer: f64,
    log_norm: f64,
    max_defect: f64,
}

impl<'a> Walker<'a> {
    fn new(env: &'a EnvDistribution, spec: &'a SpectralSolution, x0: &[f64]) -> Result<Self> {
        check_env(env, spec)?;
        check_direction(x0, env.p())?;
        Ok(Self {
            env,
            spec,
            x: x0.to_vec(),
            log_density: 0.0,
            log_normalizer: 0.0,
            log_norm: 0.0,
            max_defect: 0.0,
        })
    }

    /// Draws the next atom and moves the direction.
    fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        let (mut moves, raw_sum) = moves(&self.x, self.env, self.spec)?;
        let target = rng.random::<f64>() * raw_sum;
        let mut acc = 0.0;
        let mut pick = moves.len() - 1;
        for (e, (m, q)) in moves.iter().zip(self.env.probs()).enumerate() {
            acc += q * m.weight;
            if target < acc {
                pick = e;
                break;
            }
        }
        let chosen = moves.swap_remove(pick);
        self.log_density += chosen.weight.ln();
        self.log_normalizer += raw_sum.ln();
        self.log_norm += chosen.norm.ln();
        self.max_defect = self.max_defect.max((raw_sum - 1.0).abs());
        self.x = chosen.next;
        Ok(pick)
    }
}

/// Draws `n` atoms from the tilted chain started at `x0`.
pub fn sample_path<R: Rng + ?Sized>(
    env: &EnvDistribution,
    spec: &SpectralSolution,
    x0: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<TiltedPath> {
    let mut walker = Walker::new(env, spec, x0)?;
    let mut atoms = Vec::with_capacity(n);
    let mut directions = Vec::with_capacity(n + 1);
    directions.push(x0.to_vec());
    for _ in 0..n {
        atoms.push(walker.advance(rng)?);
        directions.push(walker.x.clone());
    }
    Ok(TiltedPath {
        atom_indices: EnvSequence::new(atoms),
        directions,
        log_density: walker.log_density,
        log_normalizer: walker.log_normalizer,
        log_norm: walker.log_norm,
        max_defect: walker.max_defect,
        theta: spec.theta,
    })
}

/// Tilted environment sequences started from a fixed direction.
pub struct TiltedSampler<'a> {
    pub env: &'a EnvDistribution,
    pub spec: &'a SpectralSolution,
    pub x0: Vec<f64>,
}

impl SequenceSampler for TiltedSampler<'_> {
    fn sample_sequence(&self, n: usize, rng: &mut ReplicaRng) -> Result<EnvSequence> {
        Ok(sample_path(self.env, self.spec, &self.x0, n, rng)?.atom_indices)
    }
}

/// `log p_n^θ(x, L_{n,1})` along `seq` with the direction kept normalized.
fn log_density_along(env: &EnvDistribution, spec: &SpectralSolution, x0: &[f64], seq: &[usize]) -> Result<f64> {
    let mut x = x0.to_vec();
    let mut log_norm = 0.0;
    for &e in seq {
        let y = env.atom(e).mean().mul_vec(&x);
        let norm = l1(&y);
        if !(norm > 0.0) {
            return Err(Error::Degenerate(format!("M x = 0 at x = {x:?}")));
        }
        log_norm += norm.ln();
        x = y.iter().map(|v| v / norm).collect();
    }
    Ok(spec.theta * log_norm - seq.len() as f64 * spec.lambda.ln() + r_at(spec, &x)?.ln() - r_at(spec, x0)?.ln())
}

/// `p_n^θ(x_0, L_{n,1}) = |L x_0|^θ / λ^n · r(L·x_0) / r(x_0)`.
pub fn density(x0: &[f64], env: &EnvDistribution, seq: &EnvSequence, spec: &SpectralSolution) -> Result<f64> {
    check_env(env, spec)?;
    check_direction(x0, env.p())?;
    seq.validate(env)?;
    Ok(log_density_along(env, spec, x0, seq.as_slice())?.exp())
}

/// Depth-first walk over all sequences of length `n` from `x0`, calling
/// `leaf(x_n, log|L x_0|, ambient probability)`.
fn enumerate<F>(env: &EnvDistribution, x: &[f64], log_norm: f64, prob: f64, depth: usize, leaf: &mut F) -> Result<()>
where
    F: FnMut(&[f64], f64, f64) -> Result<()>,
{
    if depth == 0 {
        return leaf(x, log_norm, prob);
    }
    for (atom, q) in env.iter() {
        let y = atom.mean().mul_vec(x);
        let norm = l1(&y);
        if !(norm > 0.0) {
            return Err(Error::Degenerate(format!("M x = 0 at x = {x:?}")));
        }
        let next: Vec<f64> = y.iter().map(|v| v / norm).collect();
        enumerate(env, &next, log_norm + norm.ln(), prob * q, depth - 1, leaf)?;
    }
    Ok(())
}

fn check_budget(env: &EnvDistribution, spec: &SpectralSolution, n: usize) -> Result<()> {
    let needed = (env.len() as u128).saturating_pow(n as u32).saturating_mul(spec.grid.len() as u128);
    if needed > DEFAULT_BUDGET as u128 {
        return Err(Error::BudgetExceeded {
            needed,
            budget: DEFAULT_BUDGET,
        });
    }
    Ok(())
}

/// `max_x |E[p_n^θ(x, L_{n,1})] − 1|` over the grid nodes `x`, by exhaustive
/// enumeration of the `|atoms|^n` sequences.
pub fn check_total_mass(env: &EnvDistribution, spec: &SpectralSolution, n: usize) -> Result<f64> {
    check_env(env, spec)?;
    check_budget(env, spec, n)?;
    let log_lambda_n = n as f64 * spec.lambda.ln();
    let mut worst: f64 = 0.0;
    for x0 in spec.grid.nodes() {
        let r0 = r_at(spec, x0)?;
        let mut total = 0.0;
        enumerate(env, x0, 0.0, 1.0, n, &mut |x, log_norm, prob| {
            total += prob * (spec.theta * log_norm - log_lambda_n).exp() * r_at(spec, x)? / r0;
            Ok(())
        })?;
        worst = worst.max((total - 1.0).abs());
    }
    Ok(worst)
}

/// `max |E[p_{n+1}^θ(x, M m)] − p_n^θ(x, m)|` over grid nodes `x` and all
/// length-`n` sequences `m`, averaging exhaustively over the last atom.
pub fn check_consistency(env: &EnvDistribution, spec: &SpectralSolution, n: usize) -> Result<f64> {
    check_env(env, spec)?;
    check_budget(env, spec, n + 1)?;
    let log_lambda = spec.lambda.ln();
    let theta = spec.theta;
    let mut worst: f64 = 0.0;
    for x0 in spec.grid.nodes() {
        let r0 = r_at(spec, x0)?;
        enumerate(env, x0, 0.0, 1.0, n, &mut |x, log_norm, _| {
            let p_n = (theta * log_norm - n as f64 * log_lambda).exp() * r_at(spec, x)? / r0;
            let mut next = 0.0;
            for (atom, q) in env.iter() {
                let y = atom.mean().mul_vec(x);
                let norm = l1(&y);
                let proj: Vec<f64> = y.iter().map(|v| v / norm).collect();
                let log_w = theta * (log_norm + norm.ln()) - (n + 1) as f64 * log_lambda;
                next += q * log_w.exp() * r_at(spec, &proj)? / r0;
            }
            worst = worst.max((next - p_n).abs());
            Ok(())
        })?;
    }
    Ok(worst)
}

/// Per-path importance-sampling integrands for `E[1 − F^i_{n,0}(s)]`.
///
/// Every path is drawn once up to the largest horizon and reused for all
/// horizons and all points `s`, so the columns are coupled.
#[derive(Debug, Clone)]
pub struct IsSamples {
    pub horizons: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    reps: usize,
    /// `[rep][horizon][point]`, flattened.
    values: Vec<f64>,
    pub max_defect: f64,
}

impl IsSamples {
    pub fn reps(&self) -> usize {
        self.reps
    }

    /// Integrands of one `(horizon, point)` cell across replicas.
    pub fn column(&self, h: usize, s: usize) -> Vec<f64> {
        let stride = self.horizons.len() * self.points.len();
        let offset = h * self.points.len() + s;
        (0..self.reps).map(|k| self.values[k * stride + offset]).collect()
    }

    pub fn estimate(&self, h: usize, s: usize) -> Estimate {
        Estimate::from_samples(&self.column(h, s))
    }
}

/// Tilted-path samples of
/// `λ^n r(e_i) Π_k Z_k (1 − F^i_{n,0}(s)) / (|L_{n,1} e_i| r(L_{n,1}·e_i))`,
/// whose mean is `E[1 − F^i_{n,0}(s)]` under the ambient law.
pub fn is_samples(
    env: &EnvDistribution,
    spec: &SpectralSolution,
    i: usize,
    horizons: &[usize],
    points: &[Vec<f64>],
    reps: usize,
    seed: u64,
) -> Result<IsSamples> {
    check_env(env, spec)?;
    if spec.theta != 1.0 {
        return Err(Error::NotApplicable(format!(
            "survival estimator needs the tilt at θ = 1, got {}",
            spec.theta
        )));
    }
    let p = env.p();
    if i >= p {
        return Err(Error::input("i", format!("type {i} out of range (p = {p})")));
    }
    if reps == 0 {
        return Err(Error::input("reps", "at least one replica is required"));
    }
    for (k, s) in points.iter().enumerate() {
        if s.len() != p {
            return Err(Error::Dimension { expected: p, got: s.len() });
        }
        if let Some(j) = s.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::input(format!("s[{k}][{j}]"), format!("{} outside [0, 1]", s[j])));
        }
    }
    let n_max = horizons.iter().copied().max().unwrap_or(0);
    let x0 = basis(p, i);
    let log_r0 = r_at(spec, &x0)?.ln();
    let log_lambda = spec.lambda.ln();

    let rows = run_replicas(seed, reps, |rng| -> Result<(Vec<f64>, f64)> {
        let mut walker = Walker::new(env, spec, &x0)?;
        let mut state: Vec<(Vec<f64>, Vec<f64>)> =
            points.iter().map(|s| (s.clone(), s.iter().map(|v| 1.0 - v).collect())).collect();
        let mut row = vec![0.0; horizons.len() * points.len()];
        let mut record = |n: usize, walker: &Walker, state: &[(Vec<f64>, Vec<f64>)]| -> Result<()> {
            let log_scale = n as f64 * log_lambda + log_r0 + walker.log_normalizer
                - walker.log_norm
                - r_at(spec, &walker.x)?.ln();
            for (h, _) in horizons.iter().enumerate().filter(|(_, &m)| m == n) {
                for (k, (_, u)) in state.iter().enumerate() {
                    row[h * points.len() + k] = (u[i].ln() + log_scale).exp();
                }
            }
            Ok(())
        };
        record(0, &walker, &state)?;
        for n in 1..=n_max {
            let e = walker.advance(rng)?;
            // F_{n,0} = F_n ∘ F_{n−1,0}: the new atom is the outermost map.
            for (s, u) in state.iter_mut() {
                env.atom(e).apply_in_place(s, u);
            }
            record(n, &walker, &state)?;
        }
        Ok((row, walker.max_defect))
    });
    let mut values = Vec::with_capacity(reps * horizons.len() * points.len());
    let mut max_defect: f64 = 0.0;
    for row in rows {
        let (row, defect) = row?;
        values.extend(row);
        max_defect = max_defect.max(defect);
    }
    Ok(IsSamples {
        horizons: horizons.to_vec(),
        points: points.to_vec(),
        reps,
        values,
        max_defect,
    })
}

/// Importance-sampling estimate of `E[1 − F^i_{n,0}(s)]` from `reps` tilted
/// paths started at `e_i`; at `s = 0` this is the survival probability.
pub fn is_survival(
    env: &EnvDistribution,
    spec: &SpectralSolution,
    i: usize,
    n: usize,
    reps: usize,
    seed: u64,
    s: &[f64],
) -> Result<Estimate> {
    Ok(is_samples(env, spec, i, &[n], &[s.to_vec()], reps, seed)?.estimate(0, 0))
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiSeries {
    /// `S_0 = 1, S_1, ..., S_{K_max}`
    pub partial_sums: Vec<f64>,
    /// `S_K − S_{K−1}` for `K = 1..=K_max`.
    pub increments: Vec<f64>,
}

impl PsiSeries {
    pub fn tail_increment(&self) -> Option<f64> {
        self.increments.last().copied()
    }
}

/// `S_K = 1 + Σ_{k ≤ K} ||L_{k−1,1}|| T_k` along one tilted path from `x0`.
pub fn psi_series<R: Rng + ?Sized>(
    env: &EnvDistribution,
    spec: &SpectralSolution,
    x0: &[f64],
    k_max: usize,
    rng: &mut R,
) -> Result<PsiSeries> {
    let path = sample_path(env, spec, x0, k_max, rng)?;
    let mut prod = ScaledProduct::identity(env.p());
    let mut partial_sums = Vec::with_capacity(k_max + 1);
    let mut increments = Vec::with_capacity(k_max);
    let mut sum = 1.0;
    partial_sums.push(sum);
    for e in path.atom_indices.iter() {
        let atom = env.atom(e);
        let inc = prod.log_op_norm().exp() * atom.t_value();
        sum += inc;
        increments.push(inc);
        partial_sums.push(sum);
        prod.push_left(atom.mean());
    }
    Ok(PsiSeries {
        partial_sums,
        increments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genfun::{compose_with_complement, exact_complement, exact_survival, Order};
    use crate::model::OffspringLaw;
    use crate::presets::{env_a, env_b, env_c, env_identity};
    use crate::spectral::solve_default;
    use crate::stats::replica_rng;

    fn spec_a(theta: f64) -> SpectralSolution {
        solve_default(&env_a(), theta, 1).unwrap()
    }

    #[test]
    fn scalar_weights() {
        let env = env_a();
        let spec = spec_a(1.0);
        let wa = weight(&[1.0], env.atom(0), &spec).unwrap();
        let wb = weight(&[1.0], env.atom(1), &spec).unwrap();
        assert!((wa - 1.0 / 0.6875).abs() < 1e-15);
        assert!((wb - 0.375 / 0.6875).abs() < 1e-15);
        let q = step_distribution(&[1.0], &env, &spec).unwrap();
        assert!((q.probs[0] - 8.0 / 11.0).abs() < 1e-15);
        assert!((q.probs[1] - 3.0 / 11.0).abs() < 1e-15);
        assert!(q.defect() < 1e-12);
    }

    #[test]
    fn identity_atom_has_unit_weight() {
        let env = env_identity();
        for theta in [0.5, 1.0, 3.0] {
            let spec = solve_default(&env, theta, 30).unwrap();
            for x in [[1.0, 0.0], [0.3, 0.7]] {
                assert!((weight(&x, env.atom(0), &spec).unwrap() - 1.0).abs() < 1e-12);
            }
            let q = step_distribution(&[0.5, 0.5], &env, &spec).unwrap();
            assert_eq!(q.probs.len(), 1);
            assert!((q.probs[0] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn small_theta_is_nearly_untilted() {
        let env = env_b();
        let spec = solve_default(&env, 1e-6, 200).unwrap();
        let q = step_distribution(&[0.4, 0.6], &env, &spec).unwrap();
        for (a, b) in q.probs.iter().zip(env.probs()) {
            assert!((a - b).abs() < 1e-5, "{q:?}");
        }
    }

    #[test]
    fn density_examples() {
        let env = env_a();
        let spec = spec_a(1.0);
        assert_eq!(density(&[1.0], &env, &EnvSequence::empty(), &spec).unwrap(), 1.0);
        let d = density(&[1.0], &env, &EnvSequence::new(vec![0, 1]), &spec).unwrap();
        assert!((d - 0.375 / (0.6875 * 0.6875)).abs() < 1e-14);
    }

    #[test]
    fn empty_path() {
        let env = env_b();
        let spec = solve_default(&env, 1.0, 50).unwrap();
        let path = sample_path(&env, &spec, &[1.0, 0.0], 0, &mut replica_rng(1, 0)).unwrap();
        assert!(path.is_empty());
        assert_eq!(path.log_density, 0.0);
        assert_eq!(path.directions, vec![vec![1.0, 0.0]]);
    }

    #[test]
    fn path_density_factorizes() {
        for (env, k) in [(env_b(), 200), (env_c(), 30)] {
            for theta in [0.7, 1.0, 2.0] {
                let spec = solve_default(&env, theta, k).unwrap();
                let x0 = basis(env.p(), 0);
                for rep in 0..20 {
                    let path = sample_path(&env, &spec, &x0, 60, &mut replica_rng(5, rep)).unwrap();
                    let direct = log_density_along(&env, &spec, &x0, path.atom_indices.as_slice()).unwrap();
                    assert!((direct - path.log_density).abs() < 1e-9 * direct.abs().max(1.0));
                    for x in &path.directions {
                        assert!((l1(x) - 1.0).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn scalar_total_mass_and_consistency() {
        let env = env_a();
        let spec = spec_a(1.0);
        assert_eq!(check_total_mass(&env, &spec, 0).unwrap(), 0.0);
        assert!(check_total_mass(&env, &spec, 1).unwrap() < 1e-15);
        assert!(check_consistency(&env, &spec, 0).unwrap() < 1e-15);
        for n in 2..=6 {
            assert!(check_total_mass(&env, &spec, n).unwrap() < 1e-10);
            assert!(check_consistency(&env, &spec, n).unwrap() < 1e-10);
        }
    }

    #[test]
    fn two_type_total_mass_at_theta_one() {
        let env = env_b();
        let spec = solve_default(&env, 1.0, 200).unwrap();
        for n in 0..=5 {
            assert!(check_total_mass(&env, &spec, n).unwrap() < 1e-10);
            assert!(check_consistency(&env, &spec, n).unwrap() < 1e-10);
        }
    }

    #[test]
    fn two_type_total_mass_off_theta_one_is_interpolation_limited() {
        let env = env_b();
        let spec = solve_default(&env, 2.0, 200).unwrap();
        assert!(check_total_mass(&env, &spec, 4).unwrap() < 1e-4);
    }

    #[test]
    fn budget_is_checked() {
        let env = env_b();
        let spec = solve_default(&env, 1.0, 200).unwrap();
        assert!(matches!(check_total_mass(&env, &spec, 30), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn scalar_frequencies_match_tilt() {
        let env = env_a();
        let spec = spec_a(1.0);
        let counts = run_replicas(3, 20_000, |rng| {
            let path = sample_path(&env, &spec, &[1.0], 50, rng).unwrap();
            path.atom_indices.iter().filter(|&e| e == 0).count() as f64 / 50.0
        });
        let est = Estimate::from_samples(&counts);
        assert!(est.z_score(8.0 / 11.0) < 3.0, "{est:?}");
    }

    #[test]
    fn single_path_integrand_is_exact_for_deterministic_sequence() {
        // A one-atom environment makes the tilted path deterministic, so the
        // estimator has no variance.
        let law = OffspringLaw::new(2, vec![(vec![0, 0], 0.4), (vec![1, 1], 0.3), (vec![2, 0], 0.3)], "l").unwrap();
        let law2 = OffspringLaw::new(2, vec![(vec![0, 0], 0.5), (vec![0, 1], 0.25), (vec![1, 1], 0.25)], "l").unwrap();
        let env = EnvDistribution::deterministic(EnvAtom::from_laws(vec![law, law2]).unwrap());
        let spec = solve_default(&env, 1.0, 200).unwrap();
        let seq = EnvSequence::new(vec![0; 7]);
        let (_, u) = compose_with_complement(&env, &seq, &[0.0, 0.0], Order::Backward).unwrap();
        for i in 0..2 {
            let est = is_survival(&env, &spec, i, 7, 10, 1, &[0.0, 0.0]).unwrap();
            assert!((est.mean - u[i]).abs() < 1e-12 * u[i], "{} vs {}", est.mean, u[i]);
            assert!(est.std_error < 1e-12 * u[i]);
        }
    }

    #[test]
    fn is_matches_exact_small_n() {
        let env = env_a();
        let spec = spec_a(1.0);
        let samples = is_samples(&env, &spec, 0, &[0, 1, 2, 5], &[vec![0.0], vec![0.5], vec![1.0]], 20_000, 17).unwrap();
        assert_eq!(samples.estimate(0, 0).mean, 1.0);
        for (h, &n) in samples.horizons.iter().enumerate() {
            let exact = exact_survival(&env, 0, n).unwrap();
            let est = samples.estimate(h, 0);
            assert!(est.z_score(exact) < 4.0, "n={n}: {est:?} vs {exact}");
            let half = exact_complement(&env, 0, n, &[0.5], DEFAULT_BUDGET).unwrap();
            assert!(samples.estimate(h, 1).z_score(half) < 4.0);
            assert_eq!(samples.estimate(h, 2).mean, 0.0);
        }
        let env = env_b();
        let spec = solve_default(&env, 1.0, 200).unwrap();
        for i in 0..2 {
            let est = is_survival(&env, &spec, i, 6, 20_000, 4, &[0.0, 0.0]).unwrap();
            let exact = exact_survival(&env, i, 6).unwrap();
            assert!(est.z_score(exact) < 4.0, "{est:?} vs {exact}");
        }
    }

    #[test]
    fn survival_estimator_rejects_other_tilts() {
        let env = env_a();
        assert!(matches!(
            is_survival(&env, &spec_a(2.0), 0, 3, 10, 0, &[0.0]),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn psi_series_basics() {
        let env = env_a();
        let spec = spec_a(1.0);
        let s0 = psi_series(&env, &spec, &[1.0], 0, &mut replica_rng(0, 0)).unwrap();
        assert_eq!(s0.partial_sums, vec![1.0]);
        let s = psi_series(&env, &spec, &[1.0], 100, &mut replica_rng(0, 1)).unwrap();
        assert!(s.partial_sums.windows(2).all(|w| w[1] >= w[0]));
        assert!(s.tail_increment().unwrap() <= 1e-8);
        // the first increment is T_1 times the norm of the identity
        let t = [1.0, 0.25 / (0.375 * 0.375)];
        assert!(t.contains(&s.increments[0]));
    }
}
