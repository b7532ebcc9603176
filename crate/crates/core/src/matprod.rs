//! Products of random mean matrices: right products `R_k = M_1···M_k`, left
//! products `L_{n,k} = M_n···M_k`, rank-one asymptotics and Lyapunov
//! exponents.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::genfun::EnvSequence;
use crate::linalg::{l1, Matrix};
use crate::model::EnvDistribution;
use crate::stats::{run_replicas, Estimate, ReplicaRng};

/// Products are renormalized by their operator norm every this many factors.
pub const RESCALE_EVERY: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    /// Maximum column sum.
    pub op_norm: f64,
    /// Sum of entries.
    pub l1: f64,
}

pub fn norms(m: &Matrix) -> Norms {
    Norms {
        op_norm: m.op_norm(),
        l1: m.l1(),
    }
}

/// Right products along a fixed environment sequence.
#[derive(Debug, Clone)]
pub struct MatrixPath {
    seq: EnvSequence,
    means: Vec<Matrix>,
    right: Vec<Matrix>,
}

impl MatrixPath {
    pub fn seq(&self) -> &EnvSequence {
        &self.seq
    }

    pub fn len(&self) -> usize {
        self.seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }

    /// `M_k`, 1-based.
    pub fn mean(&self, k: usize) -> &Matrix {
        &self.means[k - 1]
    }

    /// `R_k = M_1···M_k`, `R_0 = Id`.
    pub fn right(&self, k: usize) -> &Matrix {
        &self.right[k]
    }

    pub fn right_products(&self) -> &[Matrix] {
        &self.right
    }

    /// `L_{n,k} = M_n···M_k` for `1 <= k <= n + 1`, with `L_{n,n+1} = Id`.
    pub fn left(&self, n: usize, k: usize) -> Matrix {
        assert!(k >= 1 && k <= n + 1 && n <= self.len());
        let p = self.right[0].dim();
        (k..=n).fold(Matrix::identity(p), |acc, j| &self.means[j - 1] * &acc)
    }
}

pub fn products(env: &EnvDistribution, seq: &EnvSequence) -> Result<MatrixPath> {
    seq.validate(env)?;
    let means: Vec<Matrix> = seq.iter().map(|e| env.atom(e).mean().clone()).collect();
    let mut right = Vec::with_capacity(means.len() + 1);
    right.push(Matrix::identity(env.p()));
    for m in &means {
        let next = right.last().unwrap() * m;
        right.push(next);
    }
    Ok(MatrixPath {
        seq: seq.clone(),
        means,
        right,
    })
}

/// Matrix product carried as `matrix · exp(log_scale)` so that long
/// subcritical products neither underflow nor overflow.
#[derive(Debug, Clone)]
pub struct ScaledProduct {
    matrix: Matrix,
    log_scale: f64,
    factors: usize,
}

impl ScaledProduct {
    pub fn identity(p: usize) -> Self {
        Self {
            matrix: Matrix::identity(p),
            log_scale: 0.0,
            factors: 0,
        }
    }

    /// Replaces the product `L` by `m · L`.
    pub fn push_left(&mut self, m: &Matrix) {
        self.matrix = m * &self.matrix;
        self.bump();
    }

    /// Replaces the product `R` by `R · m`.
    pub fn push_right(&mut self, m: &Matrix) {
        self.matrix = &self.matrix * m;
        self.bump();
    }

    fn bump(&mut self) {
        self.factors += 1;
        if self.factors % RESCALE_EVERY == 0 {
            let n = self.matrix.op_norm();
            if n > 0.0 && n.is_finite() {
                self.matrix.scale_in_place(1.0 / n);
                self.log_scale += n.ln();
            }
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    /// `log ||product||`.
    pub fn log_op_norm(&self) -> f64 {
        self.matrix.op_norm().ln() + self.log_scale
    }

    /// The product itself (may underflow for long subcritical products).
    pub fn to_matrix(&self) -> Matrix {
        self.matrix.scaled(self.log_scale.exp())
    }
}

/// `L/||L||` compared with the rank-one matrix built from its column and row
/// sums.
#[derive(Debug, Clone, Serialize)]
pub struct RankOneDecomposition {
    /// `λ_n(N) = ||L_{n,N}||`.
    pub scale: f64,
    /// Direction of `L·1`.
    pub v: Vec<f64>,
    /// Direction of `1ᵀL`.
    pub u: Vec<f64>,
    /// `|| L/||L|| − (v⊗u)/||v⊗u|| ||`.
    pub residual: f64,
}

/// Rank-one decomposition of `L_{n,N} = M_n···M_N` along `seq` (`n = seq.len()`,
/// `start = N`, 1-based).
pub fn hennion_decompose(
    env: &EnvDistribution,
    seq: &EnvSequence,
    start: usize,
) -> Result<RankOneDecomposition> {
    seq.validate(env)?;
    let n = seq.len();
    if start == 0 || start > n + 1 {
        return Err(Error::input("start", format!("N = {start} outside 1..={}", n + 1)));
    }
    let mut prod = ScaledProduct::identity(env.p());
    for k in start..=n {
        let m = env.atom(seq[k - 1]).mean();
        if !m.is_positive() {
            return Err(Error::NotApplicable(format!(
                "mean matrix of atom {} has a zero entry",
                seq[k - 1]
            )));
        }
        prod.push_left(m);
    }
    rank_one(prod.matrix(), prod.log_scale())
}

fn rank_one(m: &Matrix, log_scale: f64) -> Result<RankOneDecomposition> {
    let p = m.dim();
    let norm = m.op_norm();
    if !(norm > 0.0) {
        return Err(Error::NotApplicable("zero product".into()));
    }
    let ones = vec![1.0; p];
    let col = m.mul_vec(&ones);
    let row = m.vec_mul(&ones);
    let (cn, rn) = (l1(&col), l1(&row));
    let v: Vec<f64> = col.iter().map(|x| x / cn).collect();
    let u: Vec<f64> = row.iter().map(|x| x / rn).collect();
    let vu = Matrix::outer(&v, &u);
    let vu = vu.scaled(1.0 / vu.op_norm());
    let residual = m.scaled(1.0 / norm).sub(&vu).op_norm();
    Ok(RankOneDecomposition {
        scale: norm * log_scale.exp(),
        v,
        u,
        residual,
    })
}

/// Source of environment sequences for [`lyapunov`].
pub trait SequenceSampler: Sync {
    fn sample_sequence(&self, n: usize, rng: &mut ReplicaRng) -> Result<EnvSequence>;
}

/// I.i.d. atoms drawn from the environment weights.
#[derive(Debug, Clone, Copy)]
pub struct AmbientSampler<'a> {
    pub env: &'a EnvDistribution,
}

impl SequenceSampler for AmbientSampler<'_> {
    fn sample_sequence(&self, n: usize, rng: &mut ReplicaRng) -> Result<EnvSequence> {
        Ok(EnvSequence::sample(self.env, n, rng))
    }
}

/// `log ||L_{n,1}|| / n` along one sequence.
pub fn log_norm_rate(env: &EnvDistribution, seq: &EnvSequence) -> Result<f64> {
    let mut prod = ScaledProduct::identity(env.p());
    for e in seq.iter() {
        prod.push_left(env.atom(e).mean());
    }
    let v = prod.log_op_norm();
    if !v.is_finite() {
        return Err(Error::Degenerate("product has zero norm".into()));
    }
    Ok(v / seq.len() as f64)
}

/// Averages `log ||L_{n,1}|| / n` over `reps` sequences from `sampler`.
pub fn lyapunov<S: SequenceSampler>(
    env: &EnvDistribution,
    sampler: &S,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::input("n", "horizon must be positive"));
    }
    let rates = run_replicas(seed, reps, |rng| {
        sampler
            .sample_sequence(n, rng)
            .and_then(|seq| log_norm_rate(env, &seq))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_samples(&rates))
}

/// `max/min` entry ratio of a product; the H3 consequence used for the
/// Furstenberg–Kesten bounds says this is at most `γ² p`.
pub fn product_entry_ratio(m: &Matrix) -> f64 {
    m.entry_ratio()
}

/// `min_{x ∈ S_+} |M x| / ||M||`, attained at a vertex of the simplex.
pub fn min_simplex_gain(m: &Matrix) -> f64 {
    let norm = m.op_norm();
    (0..m.dim())
        .map(|j| m.column(j).iter().sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        / norm
}
