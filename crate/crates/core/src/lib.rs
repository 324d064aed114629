//! Simulation laboratory for the regularized N-particle approximation of
//! the Vlasov-Poisson-Fokker-Planck system: mollified Coulomb kernels with
//! closed-form evaluation, exact mean-field convolutions for analytic
//! densities, coupled stochastic dynamics on shared noise, Wasserstein
//! distances between empirical measures, and the sweep harness that fits
//! the scaling laws.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod kernels;
pub mod measures;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod special;
pub mod stats;
pub mod vec3;

pub use error::{Error, Result};
pub use scalar::Real;

/// Default precision for the CLI and the acceptance suite.
pub type Scalar = f64;
pub type Vec3 = vec3::Vector3<Scalar>;
pub type KernelConfig = kernels::KernelConfig<Scalar>;
pub type PhaseState = dynamics::PhaseState<Scalar>;
pub type SimParams = dynamics::SimParams<Scalar>;
pub type DensityModel = fields::DensityModel<Scalar>;
pub type VelocityModel = fields::VelocityModel<Scalar>;
pub type EmpiricalMeasure = measures::EmpiricalMeasure<Scalar>;
pub type GreenEval = stats::GreenEval<Scalar>;
