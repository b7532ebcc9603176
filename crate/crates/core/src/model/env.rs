use std::path::Path;

use serde::{Deserialize, Serialize};

use super::atom::EnvAtom;
use super::law::{OffspringLaw, PROB_SUM_TOL};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Finitely supported law of the random generating function `F`.
#[derive(Debug, Clone)]
pub struct EnvDistribution {
    p: usize,
    atoms: Vec<EnvAtom>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl EnvDistribution {
    pub fn new(atoms: Vec<(EnvAtom, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::input("atoms", "environment needs at least one atom"));
        }
        let p = atoms[0].0.p();
        for (k, (atom, prob)) in atoms.iter().enumerate() {
            if atom.p() != p {
                return Err(Error::input(
                    format!("atoms[{k}].laws"),
                    format!("atom has {} types, expected {p}", atom.p()),
                ));
            }
            if !(*prob > 0.0 && *prob <= 1.0) {
                return Err(Error::input(
                    format!("atoms[{k}].prob"),
                    format!("probability {prob} outside (0, 1]"),
                ));
            }
        }
        let total: f64 = atoms.iter().map(|(_, q)| q).sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::input("atoms", format!("atom probabilities sum to {total}")));
        }
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|(_, q)| {
                acc += q;
                acc
            })
            .collect();
        let (atoms, probs) = atoms.into_iter().unzip();
        Ok(Self {
            p,
            atoms,
            probs,
            cumulative,
        })
    }

    /// Environment with a single atom.
    pub fn deterministic(atom: EnvAtom) -> Self {
        Self::new(vec![(atom, 1.0)]).expect("single atom with probability one")
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[EnvAtom] {
        &self.atoms
    }

    pub fn atom(&self, e: usize) -> &EnvAtom {
        &self.atoms[e]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, e: usize) -> f64 {
        self.probs[e]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EnvAtom, f64)> {
        self.atoms.iter().zip(self.probs.iter().copied())
    }

    /// Atom index for a uniform draw `u ∈ [0, 1)`.
    pub fn sample_index(&self, u: f64) -> usize {
        let target = u * self.cumulative[self.cumulative.len() - 1];
        self.cumulative
            .partition_point(|&c| c <= target)
            .min(self.atoms.len() - 1)
    }

    /// `E[M]`.
    pub fn expected_mean(&self) -> Matrix {
        let mut out = Matrix::zeros(self.p);
        for (atom, q) in self.iter() {
            for i in 0..self.p {
                for j in 0..self.p {
                    out[(i, j)] += q * atom.mean()[(i, j)];
                }
            }
        }
        out
    }

    /// Largest entry ratio over all atoms.
    pub fn gamma(&self) -> f64 {
        self.atoms.iter().map(EnvAtom::gamma).fold(1.0, f64::max)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: EnvFile = serde_json::from_str(s)?;
        file.into_env()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_file(&self) -> EnvFile {
        EnvFile {
            p: self.p,
            atoms: self
                .iter()
                .map(|(atom, prob)| AtomFile {
                    prob,
                    laws: atom
                        .laws()
                        .iter()
                        .map(|law| {
                            law.support()
                                .iter()
                                .map(|(z, p)| SupportFile { z: z.clone(), p: *p })
                                .collect()
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// On-disk environment:
/// `{"p": int, "atoms": [{"prob": float, "laws": [[{"z": [..], "p": float}, ..] × p]}]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnvFile {
    pub p: usize,
    pub atoms: Vec<AtomFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AtomFile {
    pub prob: f64,
    pub laws: Vec<Vec<SupportFile>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SupportFile {
    pub z: Vec<u32>,
    pub p: f64,
}

impl EnvFile {
    pub fn into_env(self) -> Result<EnvDistribution> {
        if self.p == 0 {
            return Err(Error::input("p", "number of types must be positive"));
        }
        if self.atoms.is_empty() {
            return Err(Error::input("atoms", "environment needs at least one atom"));
        }
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for (a, atom) in self.atoms.into_iter().enumerate() {
            if atom.laws.len() != self.p {
                return Err(Error::input(
                    format!("atoms[{a}].laws"),
                    format!("expected {} laws, got {}", self.p, atom.laws.len()),
                ));
            }
            let laws = atom
                .laws
                .into_iter()
                .enumerate()
                .map(|(k, law)| {
                    OffspringLaw::new(
                        self.p,
                        law.into_iter().map(|s| (s.z, s.p)).collect(),
                        &format!("atoms[{a}].laws[{k}]"),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            atoms.push((EnvAtom::from_laws(laws)?, atom.prob));
        }
        EnvDistribution::new(atoms)
    }
}
