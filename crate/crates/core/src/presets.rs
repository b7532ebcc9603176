//! Reference environments shipped with the crate (see `data/`).

use crate::model::EnvDistribution;

pub const ENV_A_JSON: &str = include_str!("../data/env_a.json");
pub const ENV_B_JSON: &str = include_str!("../data/env_b.json");
pub const ENV_C_JSON: &str = include_str!("../data/env_c.json");
pub const ENV_IDENTITY_JSON: &str = include_str!("../data/env_identity.json");
pub const ENV_LINEAR_JSON: &str = include_str!("../data/env_linear.json");
pub const ENV_SUPERCRITICAL_JSON: &str = include_str!("../data/env_supercritical.json");

/// Single-type environment: `f_a(s) = (1 + s²)/2` and
/// `f_b(s) = 3/4 + s/8 + s²/8`, each with probability 1/2.
pub fn env_a() -> EnvDistribution {
    EnvDistribution::from_json_str(ENV_A_JSON).expect("bundled environment parses")
}

/// Two-type environment with strictly positive mean matrices
/// `[[0.6, 0.4], [0.5, 0.5]]` and `[[0.2, 0.1], [0.1, 0.2]]`.
pub fn env_b() -> EnvDistribution {
    EnvDistribution::from_json_str(ENV_B_JSON).expect("bundled environment parses")
}

/// Three-type environment with strictly positive mean matrices.
pub fn env_c() -> EnvDistribution {
    EnvDistribution::from_json_str(ENV_C_JSON).expect("bundled environment parses")
}

/// Every particle has exactly one child of its own type; `M = Id`.
pub fn env_identity() -> EnvDistribution {
    EnvDistribution::from_json_str(ENV_IDENTITY_JSON).expect("bundled environment parses")
}

/// Contains an atom whose laws are all linear (`T = 0`).
pub fn env_linear() -> EnvDistribution {
    EnvDistribution::from_json_str(ENV_LINEAR_JSON).expect("bundled environment parses")
}

/// Single-type environment with mean 2 almost surely.
pub fn env_supercritical() -> EnvDistribution {
    EnvDistribution::from_json_str(ENV_SUPERCRITICAL_JSON).expect("bundled environment parses")
}
