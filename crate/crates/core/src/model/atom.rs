use super::law::{OffspringLaw, PgfEval};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// One support point of the environment: a generating function
/// `f = (f^1, ..., f^p)` given by `p` offspring laws, with its moment data.
#[derive(Debug, Clone)]
pub struct EnvAtom {
    laws: Vec<OffspringLaw>,
    mean: Matrix,
    hessians: Vec<Matrix>,
    t_value: f64,
    gamma: f64,
}

impl EnvAtom {
    /// Builds an atom from one law per parent type and derives `M`, `B(k)`,
    /// `T` and the entry ratio `γ`.
    pub fn from_laws(laws: Vec<OffspringLaw>) -> Result<Self> {
        let p = laws.len();
        if p == 0 {
            return Err(Error::input("laws", "an atom needs at least one law"));
        }
        for (k, law) in laws.iter().enumerate() {
            if law.p() != p {
                return Err(Error::input(
                    format!("laws[{k}]"),
                    format!("law has {} types, atom has {p}", law.p()),
                ));
            }
        }
        let mut mean = Matrix::zeros(p);
        for (i, law) in laws.iter().enumerate() {
            for (j, mij) in law.mean().into_iter().enumerate() {
                mean[(i, j)] = mij;
            }
        }
        let hessians: Vec<Matrix> = laws.iter().map(OffspringLaw::hessian).collect();
        let norm = mean.op_norm();
        let t_value = if norm > 0.0 {
            hessians.iter().map(Matrix::op_norm).sum::<f64>() / (norm * norm)
        } else {
            f64::INFINITY
        };
        let gamma = mean.entry_ratio();
        Ok(Self {
            laws,
            mean,
            hessians,
            t_value,
            gamma,
        })
    }

    pub fn p(&self) -> usize {
        self.laws.len()
    }

    pub fn laws(&self) -> &[OffspringLaw] {
        &self.laws
    }

    /// `M^{ij} = E[type-j children of a type-i parent]`.
    pub fn mean(&self) -> &Matrix {
        &self.mean
    }

    /// `B(k)`, the Hessian of `f^k` at `1`.
    pub fn hessian(&self, k: usize) -> &Matrix {
        &self.hessians[k]
    }

    pub fn hessians(&self) -> &[Matrix] {
        &self.hessians
    }

    /// `T = Σ_k ||B(k)|| / ||M||²`.
    pub fn t_value(&self) -> f64 {
        self.t_value
    }

    /// `max M^{ij} / min M^{ij}`, infinite if some entry vanishes.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `f(s)` as a vector.
    pub fn pgf(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.laws.iter().map(|l| l.pgf(s)).collect()
    }

    /// Coordinatewise [`OffspringLaw::eval_with_complement`].
    pub fn eval_with_complement(&self, s: &[f64], u: &[f64]) -> Vec<PgfEval> {
        self.laws
            .iter()
            .map(|l| l.eval_with_complement(s, u))
            .collect()
    }

    /// Applies `f` to `(s, 1 - s)` in place.
    pub fn apply_in_place(&self, s: &mut [f64], u: &mut [f64]) {
        let evals = self.eval_with_complement(s, u);
        for (k, e) in evals.into_iter().enumerate() {
            s[k] = e.value;
            u[k] = e.complement;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(p: usize, pts: &[(&[u32], f64)]) -> OffspringLaw {
        OffspringLaw::new(p, pts.iter().map(|(z, q)| (z.to_vec(), *q)).collect(), "law").unwrap()
    }

    #[test]
    fn two_type_moments() {
        let l1 = law(2, &[(&[0, 0], 0.7), (&[1, 1], 0.3)]);
        let l2 = law(2, &[(&[0, 0], 0.5), (&[1, 0], 0.3), (&[0, 1], 0.2)]);
        let atom = EnvAtom::from_laws(vec![l1, l2]).unwrap();
        let m = Matrix::from_rows(&[vec![0.3, 0.3], vec![0.3, 0.2]]);
        assert!(atom.mean().max_abs_diff(&m) < 1e-12);
        let b1 = Matrix::from_rows(&[vec![0.0, 0.3], vec![0.3, 0.0]]);
        assert!(atom.hessian(0).max_abs_diff(&b1) < 1e-12);
        assert_eq!(atom.hessian(1), &Matrix::zeros(2));
        assert!((atom.gamma() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn scalar_moments() {
        let atom = EnvAtom::from_laws(vec![law(1, &[(&[0], 0.5), (&[2], 0.5)])]).unwrap();
        assert_eq!(atom.mean()[(0, 0)], 1.0);
        assert_eq!(atom.hessian(0)[(0, 0)], 1.0);
        assert_eq!(atom.t_value(), 1.0);
    }

    #[test]
    fn hessians_are_symmetric_and_nonnegative() {
        let l1 = law(3, &[(&[0, 0, 0], 0.2), (&[2, 1, 0], 0.5), (&[0, 3, 1], 0.3)]);
        let l2 = law(3, &[(&[1, 1, 1], 1.0)]);
        let l3 = law(3, &[(&[0, 0, 4], 0.5), (&[1, 0, 0], 0.5)]);
        let atom = EnvAtom::from_laws(vec![l1, l2, l3]).unwrap();
        for b in atom.hessians() {
            assert_eq!(b, &b.transpose());
            assert!(b.is_nonnegative());
        }
        let expect_t = atom.hessians().iter().map(Matrix::op_norm).sum::<f64>()
            / atom.mean().op_norm().powi(2);
        assert_eq!(atom.t_value(), expect_t);
    }

    #[test]
    fn mismatched_law_dimension_is_rejected() {
        let err = EnvAtom::from_laws(vec![law(2, &[(&[0, 0], 1.0)])]).unwrap_err();
        assert!(err.to_string().contains("laws[0]"));
    }
}
