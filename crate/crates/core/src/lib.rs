//! Multitype branching processes in random environment.
//!
//! The crate covers the full pipeline for strongly subcritical processes:
//!
//! * [`model`]: finitely supported environments, mean matrices, Hessians,
//!   and the structural conditions H0–H4;
//! * [`simulate`]: forward simulation of the population vector;
//! * [`genfun`]: exact generating-function compositions, exhaustive survival
//!   probabilities, the `ψ` correction and its bounds;
//! * [`matprod`]: products of random mean matrices, rank-one asymptotics and
//!   Lyapunov exponents;
//! * [`spectral`]: the projective transfer operator `P_θ` discretized on the
//!   simplex and its spectral triple `(λ(θ), r_θ, l_θ)`;
//! * [`tilt`]: the exponential change of measure, the tilted environment
//!   sampler and the importance-sampling survival estimator;
//! * [`lab`]: experiment drivers behind the `bprelab` CLI.

pub mod error;
pub mod genfun;
pub mod lab;
pub mod linalg;
pub mod matprod;
pub mod model;
pub mod presets;
pub mod simulate;
pub mod spectral;
pub mod stats;
pub mod tilt;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use model::{EnvAtom, EnvDistribution, OffspringLaw};
