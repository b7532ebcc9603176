use serde::Serialize;

use crate::error::{Error, Result};

/// Piecewise-linear interpolation stencil: at most three nodes with
/// nonnegative weights summing to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    idx: [usize; 3],
    w: [f64; 3],
    len: usize,
}

impl Stencil {
    fn one(i: usize) -> Self {
        Self {
            idx: [i, 0, 0],
            w: [1.0, 0.0, 0.0],
            len: 1,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len).map(|k| (self.idx[k], self.w[k]))
    }
}

/// Nodes on `S_+ = {x ≥ 0 : |x| = 1}` for `p ≤ 3`.
///
/// * `p = 1`: the single point `1`;
/// * `p = 2`: `K` uniform nodes `(t, 1 − t)`, `t = i/(K − 1)`;
/// * `p = 3`: the barycentric grid with `K` nodes per edge, `K(K+1)/2` nodes,
///   each grid square split into a lower and an upper triangle.
#[derive(Debug, Clone, Serialize)]
pub struct SimplexGrid {
    p: usize,
    resolution: usize,
    nodes: Vec<Vec<f64>>,
}

impl SimplexGrid {
    pub fn new(p: usize, resolution: usize) -> Result<Self> {
        let nodes = match p {
            1 => vec![vec![1.0]],
            2 | 3 if resolution < 2 => {
                return Err(Error::input("grid", "need at least 2 nodes per edge"));
            }
            2 => {
                let h = (resolution - 1) as f64;
                (0..resolution)
                    .map(|i| {
                        let t = i as f64 / h;
                        vec![t, 1.0 - t]
                    })
                    .collect()
            }
            3 => {
                let k = resolution - 1;
                let h = k as f64;
                let mut nodes = Vec::with_capacity(resolution * (resolution + 1) / 2);
                for i in 0..=k {
                    for j in 0..=(k - i) {
                        let (a, b) = (i as f64 / h, j as f64 / h);
                        nodes.push(vec![a, b, ((k - i - j) as f64 / h).max(0.0)]);
                    }
                }
                nodes
            }
            _ => {
                return Err(Error::input(
                    "p",
                    format!("simplex grid supports p ≤ 3, got {p}; use the Monte Carlo estimator"),
                ))
            }
        };
        Ok(Self {
            p,
            resolution: if p == 1 { 1 } else { resolution },
            nodes,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i]
    }

    /// Index of barycentric node `(i, j)`; row `i` holds `K − i` nodes.
    fn tri_index(&self, i: usize, j: usize) -> usize {
        let k = self.resolution - 1;
        i * (k + 1) - i * i.saturating_sub(1) / 2 + j
    }

    /// Interpolation stencil of a point `y ∈ S_+`. Points on a cell boundary
    /// go to the cell with the lower index.
    pub fn locate(&self, y: &[f64]) -> Stencil {
        debug_assert_eq!(y.len(), self.p);
        match self.p {
            1 => Stencil::one(0),
            2 => {
                let h = (self.resolution - 1) as f64;
                let a = (y[0] * h).clamp(0.0, h);
                let i = (a.floor() as usize).min(self.resolution - 2);
                let f = (a - i as f64).clamp(0.0, 1.0);
                Stencil {
                    idx: [i, i + 1, 0],
                    w: [1.0 - f, f, 0.0],
                    len: 2,
                }
            }
            _ => {
                let k = self.resolution - 1;
                let h = k as f64;
                let mut a = (y[0] * h).clamp(0.0, h);
                let mut b = (y[1] * h).clamp(0.0, h);
                if a + b > h {
                    let t = h / (a + b);
                    a *= t;
                    b *= t;
                }
                let i = (a.floor() as usize).min(k);
                let j = (b.floor() as usize).min(k - i);
                if i + j == k {
                    return Stencil::one(self.tri_index(i, j));
                }
                let fa = a - i as f64;
                let fb = b - j as f64;
                if fa + fb <= 1.0 || i + j + 2 > k {
                    Stencil {
                        idx: [self.tri_index(i, j), self.tri_index(i + 1, j), self.tri_index(i, j + 1)],
                        w: [(1.0 - fa - fb).max(0.0), fa, fb],
                        len: 3,
                    }
                } else {
                    Stencil {
                        idx: [
                            self.tri_index(i + 1, j + 1),
                            self.tri_index(i + 1, j),
                            self.tri_index(i, j + 1),
                        ],
                        w: [fa + fb - 1.0, 1.0 - fb, 1.0 - fa],
                        len: 3,
                    }
                }
            }
        }
    }

    /// Piecewise-linear interpolation of node values at `y`.
    pub fn interpolate(&self, values: &[f64], y: &[f64]) -> f64 {
        self.locate(y).iter().map(|(i, w)| w * values[i]).sum()
    }
}
