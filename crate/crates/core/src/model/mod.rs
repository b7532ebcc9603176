//! Environments: offspring laws, environment atoms and their moment data,
//! finite environment mixtures, and the structural conditions H0–H4.

mod atom;
mod conditions;
mod env;
mod law;

pub use atom::EnvAtom;
pub use conditions::{
    check_conditions, Check, ConditionReport, IrreducibilityCheck, MomentCheck, RatioCheck,
    DEFAULT_EPSILON,
};
pub use env::{AtomFile, EnvDistribution, EnvFile, SupportFile};
pub use law::{OffspringLaw, PgfEval, PROB_SUM_TOL};

/// Evaluates the generating function of `law` at `s`.
pub fn pgf_eval(law: &OffspringLaw, s: &[f64]) -> crate::Result<f64> {
    law.pgf(s)
}

/// Derives the moment data of the atom made of `laws`.
pub fn derive_moments(laws: Vec<OffspringLaw>) -> crate::Result<EnvAtom> {
    EnvAtom::from_laws(laws)
}
