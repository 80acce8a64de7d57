//! Performance-boosting controllers for stable nonlinear discrete-time
//! systems.
//!
//! The numerical core is generic over [`Scalar`], so the same rollout code
//! evaluates losses in `f64` and records gradients on the tape. The
//! aliases below fix the scalar for callers that only need values.

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod imc;
pub mod l2ops;
pub mod linalg;
pub mod losses;
pub mod plants;
pub mod scalar;
pub mod scenario;
pub mod signals;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Signal = signals::Signal<f64>;
pub type Trajectory = imc::Trajectory<f64>;
pub type Operator = l2ops::Operator<f64>;
pub type Ren = l2ops::Ren<f64>;
pub type Mat = linalg::Mat<f64>;
pub type RnnDirect = baselines::RnnDirect<f64>;
/// Boosted controller around the point-mass model.
pub type BoostedController<'a> = imc::ImcController<&'a plants::PointMassParams, Operator, f64>;
/// Gradient-recording scalar.
pub type GradScalar = autodiff::Var;
