use serde::Serialize;

use crate::error::{Error, Result};
use crate::genfun::{exact_expectation, sequence_count, DEFAULT_BUDGET};
use crate::model::EnvDistribution;
use crate::simulate::{conditional_empirical, ConditionalOutcome};
use crate::spectral::SpectralSolution;
use crate::stats::ratio_estimate;
use crate::tilt::is_samples;

use super::survival::{csv_error, finish_csv};
use super::{fmt_f64, Method};

/// Offset between the seed of the tilted paths and the seed of the direct
/// simulations, so the two cross-checks do not share random streams.
const MC_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiRow {
    pub method: Method,
    pub n: usize,
    pub s: Vec<f64>,
    /// `1 − E[1 − F^i(s)] / E[1 − F^i(0)]`
    pub phi: f64,
    pub std_error: f64,
}

/// Estimates of the conditional generating function
/// `Φ_n(s) = E[s^{Z_n} | |Z_n| > 0]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiEstimate {
    pub p: usize,
    pub rows: Vec<PhiRow>,
}

impl PhiEstimate {
    pub fn get(&self, method: Method, n: usize, s: &[f64]) -> Option<&PhiRow> {
        self.rows.iter().find(|r| r.method == method && r.n == n && r.s == s)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["method".to_string(), "n".to_string()];
        header.extend((1..=self.p).map(|j| format!("s{j}")));
        header.extend(["phi".to_string(), "std_error".to_string()]);
        w.write_record(&header).map_err(csv_error)?;
        for r in &self.rows {
            let mut rec = vec![r.method.as_str().to_string(), r.n.to_string()];
            rec.extend(r.s.iter().map(|&v| fmt_f64(v)));
            rec.extend([fmt_f64(r.phi), fmt_f64(r.std_error)]);
            w.write_record(&rec).map_err(csv_error)?;
        }
        finish_csv(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiSchedule {
    /// Exact rows for `n = 1..=exact_max` within the enumeration budget.
    pub exact_max: usize,
    /// Importance-sampling rows for `n = 1..=is_max`.
    pub is_max: usize,
    pub reps: usize,
    /// Direct-simulation rows for `n = 1..=mc_max`.
    pub mc_max: usize,
    pub mc_reps: usize,
    pub budget: u64,
}

impl Default for PhiSchedule {
    fn default() -> Self {
        Self {
            exact_max: 10,
            is_max: 40,
            reps: 100_000,
            mc_max: 5,
            mc_reps: 100_000,
            budget: DEFAULT_BUDGET,
        }
    }
}

fn validate_points(p: usize, points: &[Vec<f64>]) -> Result<()> {
    for (k, s) in points.iter().enumerate() {
        if s.len() != p {
            return Err(Error::Dimension { expected: p, got: s.len() });
        }
        if let Some(j) = s.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::input(format!("s[{k}][{j}]"), format!("{} outside [0, 1]", s[j])));
        }
        if s.iter().all(|&v| v == 1.0) {
            return Err(Error::input(format!("s[{k}]"), "s = 1 is excluded"));
        }
    }
    Ok(())
}

/// `Φ̂_n(s)` for every point and horizon of the schedule. The tilted
/// estimator evaluates numerator and denominator on the same paths.
pub fn phi_estimate(
    env: &EnvDistribution,
    spec: &SpectralSolution,
    i: usize,
    points: &[Vec<f64>],
    schedule: &PhiSchedule,
    seed: u64,
) -> Result<PhiEstimate> {
    let p = env.p();
    validate_points(p, points)?;
    if i >= p {
        return Err(Error::input("type", format!("type {i} out of range (p = {p})")));
    }
    let zero = vec![0.0; p];
    let mut rows = Vec::new();

    for n in 1..=schedule.exact_max {
        if sequence_count(env, n) > schedule.budget as u128 {
            break;
        }
        let den = exact_expectation(env, n, &zero, schedule.budget)?.complement[i];
        for s in points {
            let num = exact_expectation(env, n, s, schedule.budget)?.complement[i];
            rows.push(PhiRow {
                method: Method::Exact,
                n,
                s: s.clone(),
                phi: 1.0 - num / den,
                std_error: 0.0,
            });
        }
    }

    if schedule.is_max > 0 {
        let horizons: Vec<usize> = (1..=schedule.is_max).collect();
        let mut all = vec![zero.clone()];
        all.extend(points.iter().cloned());
        let samples = is_samples(env, spec, i, &horizons, &all, schedule.reps, seed)?;
        for (h, &n) in horizons.iter().enumerate() {
            let den = samples.column(h, 0);
            for (k, s) in points.iter().enumerate() {
                let r = ratio_estimate(&samples.column(h, k + 1), &den);
                rows.push(PhiRow {
                    method: Method::Is,
                    n,
                    s: s.clone(),
                    phi: 1.0 - r.mean,
                    std_error: r.std_error,
                });
            }
        }
    }

    for n in 1..=schedule.mc_max {
        let law = match conditional_empirical(env, i, n, schedule.mc_reps, seed.wrapping_add(MC_SEED_OFFSET))? {
            ConditionalOutcome::Law(law) => law,
            ConditionalOutcome::NoSurvivors { .. } => continue,
        };
        for s in points {
            let est = law.pgf(s);
            rows.push(PhiRow {
                method: Method::Mc,
                n,
                s: s.clone(),
                phi: est.mean,
                std_error: est.std_error,
            });
        }
    }
    Ok(PhiEstimate { p, rows })
}

/// Distances from `s = 1` visited by [`properness_probe`].
pub const PROPERNESS_GAPS: [f64; 3] = [1e-1, 1e-2, 1e-3];

/// Tilted estimates of `Φ_n((1 − δ)·1)` at one horizon. A proper limit law
/// pushes them towards 1 as `δ` shrinks; this is only a statistical probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProperProbe {
    pub n: usize,
    pub rows: Vec<PhiRow>,
}

pub fn properness_probe(
    env: &EnvDistribution,
    spec: &SpectralSolution,
    i: usize,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<ProperProbe> {
    let p = env.p();
    let mut all = vec![vec![0.0; p]];
    all.extend(PROPERNESS_GAPS.iter().map(|d| vec![1.0 - d; p]));
    let samples = is_samples(env, spec, i, &[n], &all, reps, seed)?;
    let den = samples.column(0, 0);
    let rows = (1..all.len())
        .map(|k| {
            let r = ratio_estimate(&samples.column(0, k), &den);
            PhiRow {
                method: Method::Is,
                n,
                s: all[k].clone(),
                phi: 1.0 - r.mean,
                std_error: r.std_error,
            }
        })
        .collect();
    Ok(ProperProbe { n, rows })
}
