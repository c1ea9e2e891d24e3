//! Semi-proximal ADMM for the per-interval dual problem and the
//! chronological multi-interval driver.

mod interval;
mod params;
mod problem;
mod residuals;
mod sequence;
mod updates;

pub use interval::{
    clamp_estimate, solve_interval, solve_interval_observed, IntervalSolution, SweepObserver,
    SweepStep,
};
pub use params::{PriorMode, QStep, SolverParams};
pub use problem::{IntervalProblem, SolverState};
pub use residuals::{kkt_residuals, trace_to_csv, Residuals};
pub use sequence::{interval_prior, recover_sequence, IntervalReport, RecoveryReport};
pub use updates::{
    augmented_lagrangian, gamma, multiplier_step, update_g, update_q, update_u, update_v,
    update_w,
};

use nalgebra::DMatrix;

use crate::operators::nuclear_norm;
use crate::{lit, Real};

/// Primal objective `||X||_* + alpha ||X - A||_F^2`.
pub fn primal_objective<T: Real>(x: &DMatrix<T>, problem: &IntervalProblem<'_, T>) -> T {
    nuclear_norm(x) + (x - problem.prior()).norm_squared() * problem.alpha()
}

/// Dual objective in minimization form,
/// `||W - 2 alpha A||_F^2 / (4 alpha) - <Q, L>`.
pub fn dual_objective<T: Real>(state: &SolverState<T>, problem: &IntervalProblem<'_, T>) -> T {
    let alpha = problem.alpha();
    let shifted = &state.w - problem.prior() * (alpha * lit(2.0));
    shifted.norm_squared() / (alpha * lit(4.0)) - state.q.dot(problem.loads())
}

/// Value of the Lagrangian dual function at `state`, which lower-bounds the
/// primal optimum: `alpha ||A||_F^2 - dual_objective`.
pub fn dual_value<T: Real>(state: &SolverState<T>, problem: &IntervalProblem<'_, T>) -> T {
    problem.prior().norm_squared() * problem.alpha() - dual_objective(state, problem)
}
