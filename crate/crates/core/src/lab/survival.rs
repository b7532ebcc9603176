use serde::Serialize;

use crate::error::{Error, Result};
use crate::genfun::{exact_survival_with_budget, sequence_count, DEFAULT_BUDGET};
use crate::model::EnvDistribution;
use crate::spectral::SpectralSolution;
use crate::stats::Estimate;
use crate::tilt::is_samples;

use super::{fmt_f64, Method};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalRow {
    pub n: usize,
    pub p_n: f64,
    pub method: Method,
    pub std_error: f64,
    /// `P_n / λ^n(1)`
    pub ratio: f64,
    /// `log P_n − n Λ(1)`
    pub log_excess: f64,
}

/// Survival probabilities against the `λ^n(1)` scale. Exact rows come first,
/// then importance-sampling rows; `n` increases within each method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub lambda1: f64,
    pub rows: Vec<SurvivalRow>,
}

pub const SURVIVAL_HEADER: [&str; 7] = ["n", "p_n", "method", "std_error", "ratio", "log_excess", "lambda1"];

impl SurvivalCurve {
    pub fn new(lambda1: f64) -> Self {
        Self {
            lambda1,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, n: usize, method: Method, est: Estimate) {
        let log_excess = est.mean.ln() - n as f64 * self.lambda1.ln();
        self.rows.push(SurvivalRow {
            n,
            p_n: est.mean,
            method,
            std_error: est.std_error,
            ratio: log_excess.exp(),
            log_excess,
        });
    }

    pub fn rows_of(&self, method: Method) -> impl Iterator<Item = &SurvivalRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn row(&self, method: Method, n: usize) -> Option<&SurvivalRow> {
        self.rows_of(method).find(|r| r.n == n)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SURVIVAL_HEADER).map_err(csv_error)?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                fmt_f64(r.p_n),
                r.method.as_str().to_string(),
                fmt_f64(r.std_error),
                fmt_f64(r.ratio),
                fmt_f64(r.log_excess),
                fmt_f64(self.lambda1),
            ])
            .map_err(csv_error)?;
        }
        finish_csv(w)
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalSchedule {
    /// Exact rows for `n = 0..=exact_max`, while enumeration fits `budget`.
    pub exact_max: usize,
    /// Importance-sampling rows for `n = 1..=is_max`.
    pub is_max: usize,
    pub reps: usize,
    pub budget: u64,
}

impl Default for SurvivalSchedule {
    fn default() -> Self {
        Self {
            exact_max: 10,
            is_max: 60,
            reps: 100_000,
            budget: DEFAULT_BUDGET,
        }
    }
}

/// `P(|Z_n| > 0 | Z_0 = e_i)` by enumeration for small `n` and by the tilted
/// estimator with shared paths for the whole importance-sampling range.
pub fn survival_curve(
    env: &EnvDistribution,
    spec: &SpectralSolution,
    i: usize,
    schedule: &SurvivalSchedule,
    seed: u64,
) -> Result<SurvivalCurve> {
    let mut curve = SurvivalCurve::new(spec.lambda);
    for n in 0..=schedule.exact_max {
        if sequence_count(env, n) > schedule.budget as u128 {
            break;
        }
        let p = exact_survival_with_budget(env, i, n, schedule.budget)?;
        curve.push(n, Method::Exact, Estimate { mean: p, std_error: 0.0 });
    }
    if schedule.is_max > 0 {
        let horizons: Vec<usize> = (1..=schedule.is_max).collect();
        let samples = is_samples(env, spec, i, &horizons, &[vec![0.0; env.p()]], schedule.reps, seed)?;
        for (h, &n) in horizons.iter().enumerate() {
            curve.push(n, Method::Is, samples.estimate(h, 0));
        }
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CFit {
    pub c: f64,
    pub std_error: f64,
    pub window: usize,
    pub n_first: usize,
    pub n_last: usize,
}

/// Mean of `P_n / λ^n(1)` over the last `window` importance-sampling rows.
/// The uncertainty is the mean of the rows' standard errors, which does not
/// shrink under averaging because the rows share their paths.
pub fn fit_c(curve: &SurvivalCurve, window: usize) -> Result<CFit> {
    if window == 0 {
        return Err(Error::input("window", "must be positive"));
    }
    let rows: Vec<&SurvivalRow> = curve.rows_of(Method::Is).collect();
    if rows.len() < window {
        return Err(Error::WindowTooLarge {
            window,
            available: rows.len(),
        });
    }
    let tail = &rows[rows.len() - window..];
    let w = window as f64;
    let c = tail.iter().map(|r| r.ratio).sum::<f64>() / w;
    let std_error = tail
        .iter()
        .map(|r| r.std_error * (-(r.n as f64) * curve.lambda1.ln()).exp())
        .sum::<f64>()
        / w;
    if !(c > 0.0) {
        return Err(Error::Degenerate(format!("fitted constant {c} is not positive")));
    }
    Ok(CFit {
        c,
        std_error,
        window,
        n_first: tail[0].n,
        n_last: tail[window - 1].n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::env_a;
    use crate::spectral::solve_default;

    #[test]
    fn synthetic_curve_fits_exactly() {
        let lambda: f64 = 0.6875;
        let mut curve = SurvivalCurve::new(lambda);
        for n in 1..=20 {
            curve.push(n, Method::Is, Estimate { mean: 3.0 * lambda.powi(n as i32), std_error: 0.0 });
        }
        let fit = fit_c(&curve, 10).unwrap();
        assert!((fit.c - 3.0).abs() < 1e-12);
        assert_eq!(fit.std_error, 0.0);
        assert_eq!((fit.n_first, fit.n_last), (11, 20));
    }

    #[test]
    fn exact_only_curve_has_no_window() {
        let mut curve = SurvivalCurve::new(0.5);
        curve.push(1, Method::Exact, Estimate { mean: 0.5, std_error: 0.0 });
        assert!(matches!(fit_c(&curve, 10), Err(Error::WindowTooLarge { window: 10, available: 0 })));
        assert!(fit_c(&curve, 0).is_err());
    }

    #[test]
    fn anchor_rows_and_csv() {
        let env = env_a();
        let spec = solve_default(&env, 1.0, 1).unwrap();
        let schedule = SurvivalSchedule {
            exact_max: 3,
            is_max: 4,
            reps: 2000,
            budget: DEFAULT_BUDGET,
        };
        let curve = survival_curve(&env, &spec, 0, &schedule, 5).unwrap();
        assert_eq!(curve.row(Method::Exact, 0).unwrap().p_n, 1.0);
        assert_eq!(curve.row(Method::Exact, 1).unwrap().p_n, 0.375);
        assert_eq!(curve.row(Method::Exact, 2).unwrap().p_n, 0.208984375);
        assert!(curve.rows_of(Method::Exact).all(|r| r.std_error == 0.0));
        let csv = curve.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "n,p_n,method,std_error,ratio,log_excess,lambda1");
        assert_eq!(lines.next().unwrap(), "0,1,exact,0,1,0,0.6875");
        assert_eq!(csv.lines().count(), 1 + 4 + 4);
    }
}
