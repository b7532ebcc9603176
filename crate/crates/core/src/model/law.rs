use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Probabilities of a law or mixture must sum to one within this tolerance.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Value of a generating function together with quantities that are
/// evaluated without cancellation from the complement `u = 1 - s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgfEval {
    /// `f(s)`
    pub value: f64,
    /// `1 - f(s)`
    pub complement: f64,
    /// `m·(1 - s) - (1 - f(s)) >= 0`, the convexity gap of `f` along `1 - s`.
    pub gap: f64,
}

/// Finitely supported offspring law on `Z_+^p` for one parent type.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw {
    p: usize,
    support: Vec<(Vec<u32>, f64)>,
    cumulative: Vec<f64>,
}

impl OffspringLaw {
    /// Validates and builds a law. `path` prefixes error locations.
    pub fn new(p: usize, support: Vec<(Vec<u32>, f64)>, path: &str) -> Result<Self> {
        if p == 0 {
            return Err(Error::input(path, "number of types must be positive"));
        }
        if support.is_empty() {
            return Err(Error::input(path, "empty support"));
        }
        for (k, (z, prob)) in support.iter().enumerate() {
            if z.len() != p {
                return Err(Error::input(
                    format!("{path}[{k}].z"),
                    format!("expected {p} coordinates, got {}", z.len()),
                ));
            }
            if !(*prob > 0.0 && *prob <= 1.0) {
                return Err(Error::input(
                    format!("{path}[{k}].p"),
                    format!("probability {prob} outside (0, 1]"),
                ));
            }
            if support[..k].iter().any(|(w, _)| w == z) {
                return Err(Error::input(format!("{path}[{k}].z"), "duplicate support point"));
            }
        }
        let total: f64 = support.iter().map(|(_, q)| q).sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::input(path, format!("probabilities sum to {total}")));
        }
        let mut acc = 0.0;
        let cumulative = support
            .iter()
            .map(|(_, q)| {
                acc += q;
                acc
            })
            .collect();
        Ok(Self {
            p,
            support,
            cumulative,
        })
    }

    /// Law putting mass one on `z`.
    pub fn point_mass(z: Vec<u32>) -> Self {
        let p = z.len();
        Self::new(p, vec![(z, 1.0)], "law").expect("point mass is a valid law")
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn support(&self) -> &[(Vec<u32>, f64)] {
        &self.support
    }

    /// `Σ_z P(z) Π_j (s^j)^{z^j}` with `0^0 = 1`.
    pub fn pgf(&self, s: &[f64]) -> Result<f64> {
        if s.len() != self.p {
            return Err(Error::Dimension {
                expected: self.p,
                got: s.len(),
            });
        }
        Ok(self
            .support
            .iter()
            .map(|(z, q)| q * z.iter().zip(s).map(|(&k, &x)| x.powi(k as i32)).product::<f64>())
            .sum())
    }

    /// Evaluates `f` at `s` given both `s` and `u = 1 - s`.
    ///
    /// `1 - s^z` is accumulated factor by factor as
    /// `c_{m+1} = c_m + u_m P_m`, `P_{m+1} = P_m (1 - u_m)`, so the complement
    /// and the convexity gap are sums of nonnegative terms and keep full
    /// relative precision when `s` is close to `1`.
    pub fn eval_with_complement(&self, s: &[f64], u: &[f64]) -> PgfEval {
        debug_assert_eq!(s.len(), self.p);
        let mut value = 0.0;
        let mut complement = 0.0;
        let mut gap = 0.0;
        for (z, q) in &self.support {
            let mut prod = 1.0;
            let mut c = 0.0;
            let mut g = 0.0;
            for (j, &k) in z.iter().enumerate() {
                for _ in 0..k {
                    g += u[j] * c;
                    c += u[j] * prod;
                    prod *= s[j];
                }
            }
            value += q * prod;
            complement += q * c;
            gap += q * g;
        }
        PgfEval {
            value,
            complement,
            gap,
        }
    }

    /// Mean offspring vector, `E[X^j]`.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.p];
        for (z, q) in &self.support {
            for (mj, &k) in m.iter_mut().zip(z) {
                *mj += q * k as f64;
            }
        }
        m
    }

    /// Second factorial moments: `E[X^i X^j]` off the diagonal and
    /// `E[X^i (X^i - 1)]` on it, i.e. the Hessian of the PGF at `1`.
    pub fn hessian(&self) -> Matrix {
        let mut b = Matrix::zeros(self.p);
        for (z, q) in &self.support {
            for i in 0..self.p {
                for j in 0..self.p {
                    let zi = z[i] as f64;
                    let zj = z[j] as f64;
                    b[(i, j)] += q * if i == j { zi * (zi - 1.0) } else { zi * zj };
                }
            }
        }
        b
    }

    /// Inverse-CDF draw: index of the support point for a uniform `u ∈ [0,1)`.
    pub fn sample_index(&self, u: f64) -> usize {
        let target = u * self.cumulative[self.cumulative.len() - 1];
        self.cumulative
            .partition_point(|&c| c <= target)
            .min(self.support.len() - 1)
    }

    pub fn point(&self, idx: usize) -> &[u32] {
        &self.support[idx].0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(p: usize, pts: &[(&[u32], f64)]) -> OffspringLaw {
        OffspringLaw::new(p, pts.iter().map(|(z, q)| (z.to_vec(), *q)).collect(), "law").unwrap()
    }

    #[test]
    fn pgf_examples() {
        let l = law(2, &[(&[2, 0], 1.0)]);
        assert_eq!(l.pgf(&[0.5, 0.3]).unwrap(), 0.25);
        let l = law(2, &[(&[0, 0], 0.5), (&[1, 1], 0.5)]);
        assert!((l.pgf(&[0.4, 0.5]).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(l.pgf(&[1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(l.pgf(&[0.5]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_to_the_zero_is_one() {
        let l = law(2, &[(&[0, 3], 1.0)]);
        assert_eq!(l.pgf(&[0.0, 0.5]).unwrap(), 0.125);
    }

    #[test]
    fn rejects_bad_laws() {
        assert!(OffspringLaw::new(2, vec![], "x").is_err());
        assert!(OffspringLaw::new(2, vec![(vec![1], 1.0)], "x").is_err());
        assert!(OffspringLaw::new(1, vec![(vec![1], 0.5), (vec![1], 0.5)], "x").is_err());
        assert!(OffspringLaw::new(1, vec![(vec![1], 0.5), (vec![2], 0.4)], "x").is_err());
        let err = OffspringLaw::new(2, vec![(vec![1, 0], 0.5), (vec![1], 0.5)], "laws[0]").unwrap_err();
        assert!(err.to_string().contains("laws[0][1].z"), "{err}");
    }

    #[test]
    fn complement_matches_direct_evaluation() {
        let l = law(2, &[(&[0, 0], 0.2), (&[2, 1], 0.5), (&[0, 3], 0.3)]);
        let s = [0.3, 0.8];
        let u = [0.7, 0.2];
        let e = l.eval_with_complement(&s, &u);
        let f = l.pgf(&s).unwrap();
        assert!((e.value - f).abs() < 1e-15);
        assert!((e.complement - (1.0 - f)).abs() < 1e-15);
        let m = l.mean();
        let lin = m[0] * u[0] + m[1] * u[1];
        assert!((e.gap - (lin - (1.0 - f))).abs() < 1e-14);
    }

    #[test]
    fn complement_keeps_relative_precision_near_one() {
        let l = law(1, &[(&[0], 0.5), (&[2], 0.5)]);
        let u = 1e-12;
        let e = l.eval_with_complement(&[1.0 - u], &[u]);
        // 1 - f(1-u) = u - u^2/2
        let exact = u - u * u / 2.0;
        assert!(((e.complement - exact) / exact).abs() < 1e-14);
        assert!(((e.gap - u * u / 2.0) / (u * u / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn inverse_cdf_hits_every_point() {
        let l = law(1, &[(&[0], 0.25), (&[1], 0.5), (&[2], 0.25)]);
        assert_eq!(l.sample_index(0.0), 0);
        assert_eq!(l.sample_index(0.2499), 0);
        assert_eq!(l.sample_index(0.25), 1);
        assert_eq!(l.sample_index(0.7499), 1);
        assert_eq!(l.sample_index(0.75), 2);
        assert_eq!(l.sample_index(0.999_999), 2);
    }
}
