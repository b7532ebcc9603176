use super::grid::SimplexGrid;
use crate::error::{Error, Result};
use crate::linalg::l1;
use crate::model::EnvDistribution;

/// `P_θ` restricted to grid functions: row `x` holds the nonnegative weights
/// `prob_e |M_e x|^θ · stencil(M_e · x)`.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    rows: Vec<Vec<(usize, f64)>>,
}

impl DiscreteOperator {
    pub fn build(env: &EnvDistribution, theta: f64, grid: &SimplexGrid) -> Result<Self> {
        if env.p() != grid.p() {
            return Err(Error::Dimension {
                expected: grid.p(),
                got: env.p(),
            });
        }
        let rows = grid
            .nodes()
            .iter()
            .map(|x| {
                let mut row: Vec<(usize, f64)> = Vec::new();
                for (e, (atom, q)) in env.iter().enumerate() {
                    let y = atom.mean().mul_vec(x);
                    let norm = l1(&y);
                    if !(norm > 0.0) {
                        return Err(Error::Degenerate(format!("M x = 0 for atom {e} at x = {x:?}")));
                    }
                    let proj: Vec<f64> = y.iter().map(|v| v / norm).collect();
                    let c = q * norm.powf(theta);
                    for (j, w) in grid.locate(&proj).iter() {
                        if w == 0.0 {
                            continue;
                        }
                        match row.iter_mut().find(|(k, _)| *k == j) {
                            Some(slot) => slot.1 += c * w,
                            None => row.push((j, c * w)),
                        }
                    }
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `(A g)(x)`
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * g[j]).sum())
            .collect()
    }

    /// `(l A)(y)`, the adjoint action on measures.
    pub fn apply_adjoint(&self, l: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                out[j] += l[i] * w;
            }
        }
        out
    }
}
