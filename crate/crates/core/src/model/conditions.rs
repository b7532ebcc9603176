use serde::Serialize;

use super::env::EnvDistribution;

/// Default `ε` in the H4 moment `E[||M|| |log T|^{1+ε}]`.
pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub pass: bool,
    pub note: String,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct IrreducibilityCheck {
    pub pass: bool,
    /// Only the sufficient criterion "every mean matrix is strictly positive"
    /// is tested; a failure does not disprove strong irreducibility.
    pub sufficient_only: bool,
    pub failing_atoms: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RatioCheck {
    pub pass: bool,
    /// Global entry ratio bound, absent when some mean matrix has a zero entry.
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MomentCheck {
    pub pass: bool,
    /// `E[||M|| |log T|^{1+ε}]` when every atom has `T > 0`.
    pub moment: Option<f64>,
    pub zero_t_atoms: Vec<usize>,
}

/// Outcome of the structural conditions H0–H4 on the environment law.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ConditionReport {
    pub h0: Check,
    pub h1: Check,
    pub h2: IrreducibilityCheck,
    pub h3: RatioCheck,
    pub h4: MomentCheck,
    pub epsilon_used: f64,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.h0.pass && self.h1.pass && self.h2.pass && self.h3.pass && self.h4.pass
    }

    /// Names of the failing conditions, in order.
    pub fn failures(&self) -> Vec<&'static str> {
        [
            ("h0", self.h0.pass),
            ("h1", self.h1.pass),
            ("h2", self.h2.pass),
            ("h3", self.h3.pass),
            ("h4", self.h4.pass),
        ]
        .into_iter()
        .filter(|(_, ok)| !ok)
        .map(|(name, _)| name)
        .collect()
    }
}

pub fn check_conditions(env: &EnvDistribution, epsilon: f64) -> ConditionReport {
    let zero_norm: Vec<usize> = env
        .atoms()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.mean().op_norm() <= 0.0)
        .map(|(k, _)| k)
        .collect();
    let h0 = Check {
        pass: zero_norm.is_empty(),
        note: if zero_norm.is_empty() {
            "||M|| > 0 for every atom".into()
        } else {
            format!("||M|| = 0 for atoms {zero_norm:?}")
        },
    };

    let h1 = Check {
        pass: true,
        note: "finite support: E||M||^θ < ∞ for all θ > 0".into(),
    };

    let failing_atoms: Vec<usize> = env
        .atoms()
        .iter()
        .enumerate()
        .filter(|(_, a)| !a.mean().is_positive())
        .map(|(k, _)| k)
        .collect();
    let h2 = IrreducibilityCheck {
        pass: failing_atoms.is_empty(),
        sufficient_only: true,
        failing_atoms,
    };

    let gamma = env.gamma();
    let h3 = RatioCheck {
        pass: gamma.is_finite(),
        gamma: gamma.is_finite().then_some(gamma),
    };

    let zero_t_atoms: Vec<usize> = env
        .atoms()
        .iter()
        .enumerate()
        .filter(|(_, a)| !(a.t_value() > 0.0 && a.t_value().is_finite()))
        .map(|(k, _)| k)
        .collect();
    let moment = zero_t_atoms.is_empty().then(|| {
        env.iter()
            .map(|(a, q)| q * a.mean().op_norm() * a.t_value().ln().abs().powf(1.0 + epsilon))
            .sum()
    });
    let h4 = MomentCheck {
        pass: zero_t_atoms.is_empty(),
        moment,
        zero_t_atoms,
    };

    ConditionReport {
        h0,
        h1,
        h2,
        h3,
        h4,
        epsilon_used: epsilon,
    }
}
