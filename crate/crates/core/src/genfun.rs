//! Exact generating-function engine.
//!
//! Compositions are carried as pairs `(s, 1 − s)`; every complement is
//! produced by [`OffspringLaw::eval_with_complement`](crate::model::OffspringLaw::eval_with_complement),
//! so survival probabilities and `ψ` keep full relative precision even when
//! `1 − F(s)` is tiny.

use std::ops::Index;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::matprod::ScaledProduct;
use crate::model::{EnvAtom, EnvDistribution};
use crate::stats::KahanSum;

/// Default cap on the number of environment sequences enumerated exactly.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Atom indices of generations `1..=n` (stored 0-based: `seq[0]` drives
/// generation 1).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct EnvSequence(Vec<usize>);

impl EnvSequence {
    pub fn new(atoms: Vec<usize>) -> Self {
        Self(atoms)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// I.i.d. draw of `n` atoms from the environment weights.
    pub fn sample<R: Rng + ?Sized>(env: &EnvDistribution, n: usize, rng: &mut R) -> Self {
        Self((0..n).map(|_| env.sample_index(rng.random())).collect())
    }

    pub fn validate(&self, env: &EnvDistribution) -> Result<()> {
        match self.0.iter().position(|&e| e >= env.len()) {
            Some(k) => Err(Error::input(
                format!("seq[{k}]"),
                format!("atom index {} out of range (environment has {})", self.0[k], env.len()),
            )),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Ambient probability of the sequence, `Π_k prob(atom_k)`.
    pub fn weight(&self, env: &EnvDistribution) -> f64 {
        self.iter().map(|e| env.prob(e)).product()
    }
}

impl Index<usize> for EnvSequence {
    type Output = usize;
    fn index(&self, k: usize) -> &usize {
        &self.0[k]
    }
}

impl From<Vec<usize>> for EnvSequence {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    /// `F_{0,n} = F_1 ∘ F_2 ∘ ··· ∘ F_n`
    Forward,
    /// `F_{n,0} = F_n ∘ F_{n−1} ∘ ··· ∘ F_1`
    Backward,
}

fn check_point(p: usize, s: &[f64]) -> Result<()> {
    if s.len() != p {
        return Err(Error::Dimension {
            expected: p,
            got: s.len(),
        });
    }
    if let Some(j) = s.iter().position(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::input(format!("s[{j}]"), format!("{} outside [0, 1]", s[j])));
    }
    Ok(())
}

/// Composition as `(value, complement)` vectors.
pub fn compose_with_complement(
    env: &EnvDistribution,
    seq: &EnvSequence,
    s: &[f64],
    order: Order,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_point(env.p(), s)?;
    seq.validate(env)?;
    let mut x = s.to_vec();
    let mut u: Vec<f64> = s.iter().map(|v| 1.0 - v).collect();
    // The innermost map is applied first.
    match order {
        Order::Forward => seq.iter().rev().for_each(|e| env.atom(e).apply_in_place(&mut x, &mut u)),
        Order::Backward => seq.iter().for_each(|e| env.atom(e).apply_in_place(&mut x, &mut u)),
    }
    Ok((x, u))
}

/// `F_{0,n}(s)` (forward) or `F_{n,0}(s)` (backward); the empty sequence
/// returns `s`.
pub fn compose(env: &EnvDistribution, seq: &EnvSequence, s: &[f64], order: Order) -> Result<Vec<f64>> {
    compose_with_complement(env, seq, s, order).map(|(x, _)| x)
}

/// `E[F_{0,n}(s)]` and `E[1 − F_{0,n}(s)]` for every starting type, by
/// exhaustive enumeration of the `|atoms|^n` environment sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactExpectation {
    pub value: Vec<f64>,
    pub complement: Vec<f64>,
    pub sequences: u64,
}

pub fn sequence_count(env: &EnvDistribution, n: usize) -> u128 {
    (env.len() as u128).saturating_pow(n as u32)
}

/// Enumerates all sequences of length `n` depth-first, innermost map first,
/// so each node reuses its parent's partial composition. The visiting order
/// is lexicographic in `(atom_n, ..., atom_1)`; shards (one per choice of
/// `atom_n`) are summed separately and combined in shard order.
pub fn exact_expectation(
    env: &EnvDistribution,
    n: usize,
    s: &[f64],
    budget: u64,
) -> Result<ExactExpectation> {
    check_point(env.p(), s)?;
    let needed = sequence_count(env, n);
    if needed > budget as u128 {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let p = env.p();
    let u: Vec<f64> = s.iter().map(|v| 1.0 - v).collect();
    if n == 0 {
        return Ok(ExactExpectation {
            value: s.to_vec(),
            complement: u,
            sequences: 1,
        });
    }
    let shards: Vec<(Vec<KahanSum>, Vec<KahanSum>)> = (0..env.len())
        .into_par_iter()
        .map(|e| {
            let mut acc = (vec![KahanSum::new(); p], vec![KahanSum::new(); p]);
            let mut x = s.to_vec();
            let mut c = u.clone();
            env.atom(e).apply_in_place(&mut x, &mut c);
            descend(env, n - 1, env.prob(e), &x, &c, &mut acc);
            acc
        })
        .collect();
    let mut value = vec![KahanSum::new(); p];
    let mut complement = vec![KahanSum::new(); p];
    for (v, c) in shards {
        for k in 0..p {
            value[k].add(v[k].value());
            complement[k].add(c[k].value());
        }
    }
    Ok(ExactExpectation {
        value: value.iter().map(KahanSum::value).collect(),
        complement: complement.iter().map(KahanSum::value).collect(),
        sequences: needed as u64,
    })
}

fn descend(
    env: &EnvDistribution,
    remaining: usize,
    weight: f64,
    x: &[f64],
    c: &[f64],
    acc: &mut (Vec<KahanSum>, Vec<KahanSum>),
) {
    if remaining == 0 {
        for k in 0..x.len() {
            acc.0[k].add(weight * x[k]);
            acc.1[k].add(weight * c[k]);
        }
        return;
    }
    for (atom, q) in env.iter() {
        let mut x2 = x.to_vec();
        let mut c2 = c.to_vec();
        atom.apply_in_place(&mut x2, &mut c2);
        descend(env, remaining - 1, weight * q, &x2, &c2, acc);
    }
}

fn check_type(env: &EnvDistribution, i: usize) -> Result<()> {
    if i >= env.p() {
        return Err(Error::input("i", format!("type {i} out of range (p = {})", env.p())));
    }
    Ok(())
}

/// `P(|Z_n| > 0 | Z_0 = e_i) = E[1 − F^i_{0,n}(0)]`.
pub fn exact_survival(env: &EnvDistribution, i: usize, n: usize) -> Result<f64> {
    exact_survival_with_budget(env, i, n, DEFAULT_BUDGET)
}

pub fn exact_survival_with_budget(env: &EnvDistribution, i: usize, n: usize, budget: u64) -> Result<f64> {
    check_type(env, i)?;
    let zero = vec![0.0; env.p()];
    Ok(exact_expectation(env, n, &zero, budget)?.complement[i])
}

/// `E[s^{Z_n} | Z_0 = e_i] = E[F^i_{0,n}(s)]`.
pub fn exact_pgf(env: &EnvDistribution, i: usize, n: usize, s: &[f64]) -> Result<f64> {
    check_type(env, i)?;
    Ok(exact_expectation(env, n, s, DEFAULT_BUDGET)?.value[i])
}

/// `E[1 − F^i_{0,n}(s)]`, computed without cancellation.
pub fn exact_complement(env: &EnvDistribution, i: usize, n: usize, s: &[f64], budget: u64) -> Result<f64> {
    check_type(env, i)?;
    Ok(exact_expectation(env, n, s, budget)?.complement[i])
}

/// `A(s) = {j : s^j < 1}` and `Δ(s) = min_{j ∈ A(s)} (1 − s^j)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportGap {
    pub active: Vec<usize>,
    pub delta: f64,
}

impl SupportGap {
    pub fn new(s: &[f64]) -> Result<Self> {
        let active: Vec<usize> = (0..s.len()).filter(|&j| s[j] < 1.0).collect();
        if active.is_empty() {
            return Err(Error::Domain("Δ(s) is undefined at s = 1".into()));
        }
        let delta = active.iter().map(|&j| 1.0 - s[j]).fold(f64::INFINITY, f64::min);
        Ok(Self { active, delta })
    }
}

fn nonneg_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ψ_{f,a}(s) = |a| / |a(1 − f(s))| − |a| / |a m (1 − s)|`.
pub fn psi(atom: &EnvAtom, a: &Matrix, s: &[f64]) -> Result<f64> {
    check_point(atom.p(), s)?;
    let u: Vec<f64> = s.iter().map(|v| 1.0 - v).collect();
    psi_with_complement(atom, a, s, &u)
}

/// [`psi`] at a point given together with its complement `u = 1 − s`.
pub fn psi_with_complement(atom: &EnvAtom, a: &Matrix, s: &[f64], u: &[f64]) -> Result<f64> {
    if a.dim() != atom.p() {
        return Err(Error::Dimension {
            expected: atom.p(),
            got: a.dim(),
        });
    }
    if !a.is_nonnegative() {
        return Err(Error::input("a", "matrix must be nonnegative"));
    }
    if u.iter().all(|&v| v <= 0.0) {
        return Err(Error::Domain("ψ is not evaluated at s = 1".into()));
    }
    let evals = atom.eval_with_complement(s, u);
    let c: Vec<f64> = evals.iter().map(|e| e.complement).collect();
    let g: Vec<f64> = evals.iter().map(|e| e.gap).collect();
    // m(1 − s) = (1 − f(s)) + gap, both nonnegative.
    let mu: Vec<f64> = c.iter().zip(&g).map(|(x, y)| x + y).collect();
    let norm_a = a.l1();
    let ac: f64 = a.mul_vec(&c).iter().sum();
    let amu: f64 = a.mul_vec(&mu).iter().sum();
    let ag: f64 = a.mul_vec(&g).iter().sum();
    if !(norm_a > 0.0) || !(ac > 0.0) || !(amu > 0.0) {
        return Err(Error::Degenerate(format!(
            "ψ denominators vanish: |a| = {norm_a}, |a(1−f)| = {ac}, |am(1−s)| = {amu}"
        )));
    }
    let value = norm_a * ag / (ac * amu);
    debug_assert!(value >= 0.0, "ψ must be nonnegative, got {value}");
    Ok(value)
}

/// `ψ_{f,a}` for `a` whose only nonzero row is `row` (a row vector), which
/// is how `a_i R` appears in the iteration identity. Returns `ψ / |a|`.
fn psi_row_over_norm(atom: &EnvAtom, row: &[f64], s: &[f64], u: &[f64]) -> Option<f64> {
    let evals = atom.eval_with_complement(s, u);
    let c: Vec<f64> = evals.iter().map(|e| e.complement).collect();
    let g: Vec<f64> = evals.iter().map(|e| e.gap).collect();
    let rc = nonneg_dot(row, &c);
    let rg = nonneg_dot(row, &g);
    let rmu = rc + rg;
    (rc > 0.0 && rmu > 0.0).then(|| rg / (rc * rmu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiBoundCheck {
    pub psi: f64,
    /// `γ p² T` with the atom's own entry ratio.
    pub bound: f64,
    pub pass: bool,
}

pub const PSI_BOUND_SLACK: f64 = 1e-12;

pub fn check_psi_bound(atom: &EnvAtom, a: &Matrix, s: &[f64]) -> Result<PsiBoundCheck> {
    let value = psi(atom, a, s)?;
    let p = atom.p() as f64;
    // linear atoms have ψ ≡ 0, even when γ = ∞
    let t = atom.t_value();
    let bound = if t == 0.0 { 0.0 } else { atom.gamma() * p * p * t };
    Ok(PsiBoundCheck {
        psi: value,
        bound,
        pass: value >= 0.0 && value <= bound + PSI_BOUND_SLACK,
    })
}

/// Both sides of
/// `1/(1 − F^i_{0,n}(s)) = 1/|a_i R_n (1 − s)| + Σ_k ψ_{F_k, a_i R_{k−1}}(F_{k,n}(s)) / |a_i R_{k−1}|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs| / lhs`
    pub residual: f64,
    pub leading: f64,
    /// Summand `k = 1..=n` at index `k − 1`.
    pub terms: Vec<f64>,
}

pub fn check_iteration_identity(
    env: &EnvDistribution,
    seq: &EnvSequence,
    i: usize,
    s: &[f64],
) -> Result<IdentityCheck> {
    check_point(env.p(), s)?;
    check_type(env, i)?;
    seq.validate(env)?;
    if s.iter().all(|&v| v >= 1.0) {
        return Err(Error::Domain("identity is not evaluated at s = 1".into()));
    }
    let n = seq.len();
    let p = env.p();

    // F_{k,n}(s) for k = n, n−1, ..., 0, with complements.
    let mut points = vec![(Vec::new(), Vec::new()); n + 1];
    let mut x = s.to_vec();
    let mut c: Vec<f64> = s.iter().map(|v| 1.0 - v).collect();
    points[n] = (x.clone(), c.clone());
    for k in (1..=n).rev() {
        env.atom(seq[k - 1]).apply_in_place(&mut x, &mut c);
        points[k - 1] = (x.clone(), c.clone());
    }
    let survival = points[0].1[i];
    if !(survival > 0.0) {
        return Err(Error::Degenerate("1 − F^i_{0,n}(s) vanishes".into()));
    }
    let lhs = 1.0 / survival;

    // Rows e_i R_k, k = 0..=n.
    let mut row = crate::linalg::basis(p, i);
    let mut terms = Vec::with_capacity(n);
    for k in 1..=n {
        let atom = env.atom(seq[k - 1]);
        let (ref y, ref uy) = points[k];
        let term = psi_row_over_norm(atom, &row, y, uy).ok_or_else(|| {
            Error::Degenerate(format!("vanishing ψ denominator at k = {k}"))
        })?;
        terms.push(term);
        row = atom.mean().vec_mul(&row);
    }
    let lead_den = nonneg_dot(&row, &points[n].1);
    if !(lead_den > 0.0) {
        return Err(Error::Degenerate(format!("|a_i R_{n}(1 − s)| vanishes")));
    }
    let leading = 1.0 / lead_den;
    let mut sum = KahanSum::new();
    sum.add(leading);
    terms.iter().for_each(|&t| sum.add(t));
    let rhs = sum.value();
    Ok(IdentityCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs() / lhs,
        leading,
        terms,
    })
}

/// Furstenberg–Kesten sandwich for `|e_i L_{n,1}(1 − s)| / |L_{n,1} e_i|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FkBounds {
    /// `Δ(s) / (p² γ²)`
    pub lower: f64,
    pub ratio: f64,
    /// `γ² p²`
    pub upper: f64,
    pub pass: bool,
}

/// Relative rounding allowance on both Furstenberg–Kesten bounds.
pub const FK_SLACK: f64 = 1e-12;

pub fn fk_bounds(env: &EnvDistribution, seq: &EnvSequence, i: usize, s: &[f64]) -> Result<FkBounds> {
    check_point(env.p(), s)?;
    check_type(env, i)?;
    seq.validate(env)?;
    let gap = SupportGap::new(s)?;
    let gamma = env.gamma();
    if !gamma.is_finite() {
        return Err(Error::NotApplicable("some mean matrix has a zero entry (γ = ∞)".into()));
    }
    let mut prod = ScaledProduct::identity(env.p());
    for e in seq.iter() {
        prod.push_left(env.atom(e).mean());
    }
    let l = prod.matrix();
    let u: Vec<f64> = s.iter().map(|v| 1.0 - v).collect();
    let num = nonneg_dot(l.row(i), &u);
    let den: f64 = l.column(i).iter().sum();
    let ratio = num / den;
    let p2 = (env.p() * env.p()) as f64;
    let lower = gap.delta / (p2 * gamma * gamma);
    let upper = gamma * gamma * p2;
    Ok(FkBounds {
        lower,
        ratio,
        upper,
        // the scalar case attains the lower bound; allow for rounding
        pass: lower * (1.0 - FK_SLACK) <= ratio && ratio <= upper * (1.0 + FK_SLACK),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OffspringLaw;
    use crate::presets::{env_a, env_b};

    fn scalar_atom(pts: &[(u32, f64)]) -> EnvAtom {
        let law = OffspringLaw::new(1, pts.iter().map(|&(z, q)| (vec![z], q)).collect(), "law").unwrap();
        EnvAtom::from_laws(vec![law]).unwrap()
    }

    #[test]
    fn empty_composition_is_identity() {
        let env = env_b();
        let s = [0.3, 0.7];
        assert_eq!(compose(&env, &EnvSequence::empty(), &s, Order::Forward).unwrap(), s.to_vec());
        assert_eq!(compose(&env, &EnvSequence::empty(), &s, Order::Backward).unwrap(), s.to_vec());
    }

    #[test]
    fn scalar_hand_iterations() {
        let env = env_a();
        let aa = compose(&env, &EnvSequence::new(vec![0, 0]), &[0.0], Order::Forward).unwrap();
        assert!((aa[0] - 0.625).abs() < 1e-15);
        let ba = compose(&env, &EnvSequence::new(vec![1, 0]), &[0.0], Order::Forward).unwrap();
        assert!((ba[0] - 0.84375).abs() < 1e-15);
        // Backward order applies atom 1 first.
        let ab = compose(&env, &EnvSequence::new(vec![0, 1]), &[0.0], Order::Backward).unwrap();
        assert!((ab[0] - 0.84375).abs() < 1e-15);
    }

    #[test]
    fn compose_rejects_bad_input() {
        let env = env_a();
        assert!(compose(&env, &EnvSequence::new(vec![2]), &[0.0], Order::Forward).is_err());
        assert!(compose(&env, &EnvSequence::new(vec![0]), &[1.5], Order::Forward).is_err());
        assert!(compose(&env, &EnvSequence::new(vec![0]), &[0.5, 0.5], Order::Forward).is_err());
    }

    #[test]
    fn exact_survival_anchor_values() {
        let env = env_a();
        assert_eq!(exact_survival(&env, 0, 0).unwrap(), 1.0);
        assert!((exact_survival(&env, 0, 1).unwrap() - 0.375).abs() < 1e-15);
        assert!((exact_survival(&env, 0, 2).unwrap() - 0.208984375).abs() < 1e-15);
    }

    #[test]
    fn exact_pgf_anchor_values() {
        let env = env_a();
        assert!((exact_pgf(&env, 0, 1, &[0.5]).unwrap() - 0.734375).abs() < 1e-15);
        assert_eq!(exact_pgf(&env, 0, 0, &[0.3]).unwrap(), 0.3);
        assert!((exact_pgf(&env, 0, 3, &[1.0]).unwrap() - 1.0).abs() < 1e-15);
        let b = env_b();
        assert_eq!(exact_pgf(&b, 1, 0, &[0.2, 0.7]).unwrap(), 0.7);
    }

    #[test]
    fn budget_is_enforced() {
        let env = env_a();
        let err = exact_survival_with_budget(&env, 0, 11, 1024).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { needed: 2048, .. }));
        assert_eq!(err.exit_code(), 3);
        assert!(exact_survival_with_budget(&env, 0, 10, 1024).is_ok());
    }

    #[test]
    fn enumeration_matches_per_sequence_sum() {
        let env = env_b();
        let n = 4;
        let s = [0.2, 0.6];
        let exact = exact_expectation(&env, n, &s, DEFAULT_BUDGET).unwrap();
        let mut brute = [0.0; 2];
        for code in 0..16usize {
            let seq = EnvSequence::new((0..n).map(|k| (code >> k) & 1).collect());
            let w = seq.weight(&env);
            let f = compose(&env, &seq, &s, Order::Forward).unwrap();
            for k in 0..2 {
                brute[k] += w * f[k];
            }
        }
        for k in 0..2 {
            assert!((exact.value[k] - brute[k]).abs() < 1e-14);
            assert!((exact.complement[k] - (1.0 - brute[k])).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_atom_with_zero_entries_meets_bound() {
        let law = |z: Vec<u32>| OffspringLaw::new(2, vec![(z, 1.0)], "law").unwrap();
        let atom = EnvAtom::from_laws(vec![law(vec![1, 0]), law(vec![0, 0])]).unwrap();
        assert!(atom.gamma().is_infinite());
        let c = check_psi_bound(&atom, &Matrix::identity(2), &[0.3, 0.8]).unwrap();
        assert_eq!((c.psi, c.bound), (0.0, 0.0));
        assert!(c.pass);
    }

    #[test]
    fn psi_closed_forms() {
        let sq = scalar_atom(&[(2, 1.0)]);
        let one = Matrix::identity(1);
        assert!((psi(&sq, &one, &[0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((psi(&sq, &one, &[0.5]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        for m in [0.25, 0.6, 1.0] {
            let lin = if m == 1.0 {
                scalar_atom(&[(1, 1.0)])
            } else {
                scalar_atom(&[(0, 1.0 - m), (1, m)])
            };
            for s in [0.0, 0.3, 0.99] {
                assert_eq!(psi(&lin, &one, &[s]).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn psi_domain_errors() {
        let sq = scalar_atom(&[(2, 1.0)]);
        let one = Matrix::identity(1);
        assert!(matches!(psi(&sq, &one, &[1.0]), Err(Error::Domain(_))));
        assert!(matches!(psi(&sq, &Matrix::zeros(1), &[0.5]), Err(Error::Degenerate(_))));
        let dead = scalar_atom(&[(0, 1.0)]);
        assert!(matches!(psi(&dead, &one, &[0.5]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn psi_bound_is_tight_for_squaring() {
        let sq = scalar_atom(&[(2, 1.0)]);
        let chk = check_psi_bound(&sq, &Matrix::identity(1), &[0.0]).unwrap();
        assert_eq!(chk.psi, 0.5);
        assert_eq!(chk.bound, 0.5);
        assert!(chk.pass);
        let lin = scalar_atom(&[(0, 0.5), (1, 0.5)]);
        let chk = check_psi_bound(&lin, &Matrix::identity(1), &[0.2]).unwrap();
        assert!(chk.pass && chk.psi == 0.0);
    }

    #[test]
    fn one_step_identity_is_definition_of_psi() {
        let env = env_b();
        for e in 0..2 {
            for i in 0..2 {
                let chk = check_iteration_identity(&env, &EnvSequence::new(vec![e]), i, &[0.1, 0.4]).unwrap();
                assert!(chk.residual <= 1e-12, "{chk:?}");
            }
        }
    }

    #[test]
    fn scalar_two_step_identity_by_hand() {
        // seq (a, b), s = 0: 1 − F_{0,2}(0) = 1 − f_a(f_b(0)) = 0.21875.
        let env = env_a();
        let chk = check_iteration_identity(&env, &EnvSequence::new(vec![0, 1]), 0, &[0.0]).unwrap();
        assert!((chk.lhs - 1.0 / 0.21875).abs() < 1e-12);
        // Leading term 1/(m_a m_b) and the two ψ terms, computed by hand:
        // ψ_{f_b}(0) = 1/0.25 − 1/0.375, coefficient 1/|R_1| = 1/m_a = 1;
        // ψ_{f_a}(0.75) = 1/(1 − 0.78125) − 1/0.25, coefficient 1.
        let lead = 1.0 / 0.375;
        let t1 = 1.0 / (1.0 - 0.78125) - 1.0 / 0.25;
        let t2 = 1.0 / 0.25 - 1.0 / 0.375;
        assert!((chk.leading - lead).abs() < 1e-12);
        assert!((chk.terms[0] - t1).abs() < 1e-12);
        assert!((chk.terms[1] - t2).abs() < 1e-12);
        assert!(chk.residual <= 1e-12);
    }

    #[test]
    fn row_extraction_matches_full_matrix_product() {
        let env = env_b();
        let r = &(env.atom(0).mean() * env.atom(1).mean()) * env.atom(0).mean();
        let a = &Matrix::unit_diag(2, 1) * &r;
        let s = [0.35, 0.8];
        let u = [0.65, 0.2];
        let atom = env.atom(1);
        let full = psi(atom, &a, &s).unwrap();
        let row = r.row(1).to_vec();
        let by_row = psi_row_over_norm(atom, &row, &s, &u).unwrap() * row.iter().sum::<f64>();
        assert!(((full - by_row) / full).abs() < 1e-14);
    }

    #[test]
    fn support_gap() {
        let g = SupportGap::new(&[0.2, 1.0, 0.9]).unwrap();
        assert_eq!(g.active, vec![0, 2]);
        assert!((g.delta - 0.1).abs() < 1e-15);
        assert!(SupportGap::new(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn fk_scalar_and_identity_cases() {
        let env = env_a();
        // γ = 1, p = 1: Δ(s) = 1 − s = ratio, upper = 1.
        let chk = fk_bounds(&env, &EnvSequence::new(vec![0, 1, 1]), 0, &[0.3]).unwrap();
        assert!((chk.ratio - 0.7).abs() < 1e-15 && (chk.lower - 0.7).abs() < 1e-15);
        assert!(chk.pass);
        let b = env_b();
        let chk = fk_bounds(&b, &EnvSequence::empty(), 0, &[0.4, 0.1]).unwrap();
        assert!((chk.ratio - 0.6).abs() < 1e-15 && chk.pass);
        let chk = fk_bounds(&b, &EnvSequence::new(vec![0, 1, 0, 0, 1]), 1, &[0.0, 0.0]).unwrap();
        assert!(chk.pass, "{chk:?}");
        let id = crate::presets::env_identity();
        assert!(matches!(
            fk_bounds(&id, &EnvSequence::new(vec![0]), 0, &[0.0, 0.0]),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn extinction_is_monotone_along_nesting() {
        let env = env_b();
        let seq = EnvSequence::new(vec![0, 0, 1, 0, 1, 1, 0, 0]);
        for i in 0..2 {
            let mut prev = 0.0;
            for n in 0..=seq.len() {
                let sub = EnvSequence::new(seq.as_slice()[..n].to_vec());
                let q = compose(&env, &sub, &[0.0, 0.0], Order::Forward).unwrap()[i];
                assert!(q >= prev);
                prev = q;
            }
        }
    }

    #[test]
    fn forward_and_backward_expectations_coincide() {
        for env in [env_a(), env_b()] {
            let p = env.p();
            let zero = vec![0.0; p];
            for n in 0..=6 {
                let count = env.len().pow(n as u32);
                let mut fwd = vec![0.0; p];
                let mut bwd = vec![0.0; p];
                for code in 0..count {
                    let seq = EnvSequence::new(
                        (0..n).map(|k| (code / env.len().pow(k as u32)) % env.len()).collect(),
                    );
                    let w = seq.weight(&env);
                    let (_, cf) = compose_with_complement(&env, &seq, &zero, Order::Forward).unwrap();
                    let (_, cb) = compose_with_complement(&env, &seq, &zero, Order::Backward).unwrap();
                    for k in 0..p {
                        fwd[k] += w * cf[k];
                        bwd[k] += w * cb[k];
                    }
                }
                for k in 0..p {
                    assert!((fwd[k] - bwd[k]).abs() <= 1e-15 * fwd[k].max(1.0), "n={n}");
                }
            }
        }
    }
}
