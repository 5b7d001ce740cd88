//! Smallest conic singular value `min { |A x| : x in K, |x| = 1 }` of a
//! matrix over a polyhedral cone.
//!
//! The solver ascends the Lagrangian dual
//! `theta(u) = min_{|x|=1} 1/2 |Ax|^2 + <u, x>` over the polar cone with a
//! quasi-Newton method, certifies the result with the duality gap, and falls
//! back to an exact or local primal search when the gap does not close.
//!
//! ```
//! use conic_sv::{solve, ConeH64, SolveOptions};
//! use nalgebra::DMatrix;
//!
//! let a = DMatrix::<f64>::identity(3, 3);
//! let res = solve(&a, &ConeH64::nonnegative_orthant(3), &SolveOptions::default()).unwrap();
//! assert!((res.sigma_min - 1.0).abs() < 1e-12);
//! ```

pub mod cones;
pub mod dual;
pub mod error;
pub mod gridapp;
pub mod io;
mod linalg;
pub mod nnqp;
pub mod oracle;
pub mod primal;
pub mod rng;
mod scalar;
pub mod sphere_qp;

pub use cones::{left_inverses, member_g, member_h, polar_g, polar_h, project_g, project_h, ConeG, ConeH};
pub use dual::{solve, ConicSvResult, PrimalSource, SolveOptions, StepRule, StopReason};
pub use error::{Error, Result};
pub use oracle::{grid_oracle, pg_oracle, sphere_qp_scan, OracleMethod, OracleResult};
pub use rng::Sampler;
pub use scalar::Scalar;
pub use sphere_qp::{decompose_gram, dual_value, secular_root, solve_sphere_qp, SpectralDecomposition};

pub type ConeH64 = ConeH<f64>;
pub type ConeG64 = ConeG<f64>;
pub type ConeH32 = ConeH<f32>;
pub type ConeG32 = ConeG<f32>;
pub type ConicSvResult64 = ConicSvResult<f64>;
pub type ConicSvResult32 = ConicSvResult<f32>;
pub type SolveOptions64 = SolveOptions<f64>;
pub type SolveOptions32 = SolveOptions<f32>;
pub type Spectral64 = SpectralDecomposition<f64>;
pub type Spectral32 = SpectralDecomposition<f32>;
