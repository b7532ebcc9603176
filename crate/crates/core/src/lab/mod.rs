//! Experiments and the command-line front end: survival curves against the
//! `λ^n(1)` scale, the constant `c^i`, the conditional generating function
//! `Φ_i`, and a consolidated diagnostics report.

pub mod cli;
mod diagnostics;
mod phi;
mod survival;

pub use diagnostics::{
    diagnostics, DiagnosticsOptions, DiagnosticsReport, LyapunovSection, Section, Status, HENNION_TOL, IDENTITY_TOL,
    LYAPUNOV_REL_TOL,
};
pub use phi::{phi_estimate, properness_probe, PhiEstimate, PhiRow, PhiSchedule, ProperProbe, PROPERNESS_GAPS};
pub use survival::{fit_c, survival_curve, CFit, SurvivalCurve, SurvivalRow, SurvivalSchedule, SURVIVAL_HEADER};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Is,
    Mc,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Is => "is",
            Method::Mc => "mc",
        }
    }
}

/// Shortest representation that parses back to the same value, in
/// exponent form outside `[1e-4, 1e15)`; independent of locale.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else if x != 0.0 && !(1e-4..1e15).contains(&x.abs()) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}
