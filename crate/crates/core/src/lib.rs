//! Recovery of origin-destination traffic matrices from link-load
//! measurements.
//!
//! Each time interval is solved independently (in chronological order) as a
//! regularized nuclear-norm problem
//!
//! ```text
//! min ||X||_* + rho1 ||X - X_prev||_F^2 + rho2 ||X - X_week||_F^2
//! s.t. R vec(X) = L,  P_Omega(X) = 0,  X >= 0
//! ```
//!
//! whose dual is solved by a Schur-complement based semi-proximal ADMM with
//! closed-form block updates. The crate also ships the Gravity and
//! Tomo-Gravity baselines, cross-validated hyperparameter tuning, a
//! synthetic instance generator and the `slrr` command line tool.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod operators;
pub mod solver;
pub mod tensor_store;
pub mod tuning;

use std::fmt::{Debug, Display, LowerExp};
use std::str::FromStr;

pub use error::{Error, Result};

/// Floating point scalar the solver stack is generic over.
///
/// `FromStr`/`Display` are required so that instance files round-trip
/// bit-exactly in the chosen precision.
pub trait Real:
    nalgebra::RealField
    + Copy
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + FromStr
    + Display
    + LowerExp
    + Debug
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

pub use baselines::{
    gravity_estimate, recover_baseline, tomo_gravity, Baseline, GravityPrior, TomoGravityOutcome,
};
pub use operators::{IntervalMask, RoutingOperator};
pub use solver::{
    recover_sequence, solve_interval, IntervalProblem, IntervalSolution, PriorMode,
    RecoveryReport, SolverParams, SolverState,
};
pub use tensor_store::{
    RoutingMatrix, SparsityMask, SynthConfig, TomographyInstance, TrafficTensor,
};
pub use tuning::{CvKind, CvPlan, CvResult, Candidate};

/// Dense matrix with the default scalar.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense vector with the default scalar.
pub type Vector = nalgebra::DVector<f64>;
/// Problem instance with the default scalar.
pub type Instance = TomographyInstance<f64>;
/// Traffic tensor with the default scalar.
pub type Traffic = TrafficTensor<f64>;
/// Routing operator with the default scalar.
pub type Operator = RoutingOperator<f64>;
/// Solver parameters with the default scalar.
pub type Params = SolverParams<f64>;
/// Single precision instance.
pub type Instance32 = TomographyInstance<f32>;
/// Single precision solver parameters.
pub type Params32 = SolverParams<f32>;
