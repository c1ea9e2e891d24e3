use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::updates::gamma_of;
use super::{IntervalProblem, SolverState};
use crate::error::Result;
use crate::operators::{project_mask, project_nonneg, project_spectral_ball};
use crate::Real;

/// Relative KKT residuals; `eta` is their maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals<T: Real> {
    /// Link equations `||R vec X - L|| / (1 + ||L||)`.
    pub p1: T,
    /// Sparsity `||P_Omega X|| / (1 + ||X||)`.
    pub p2: T,
    /// Dual constraint `||Gamma|| / (1 + ||G||)`.
    pub d: T,
    /// Distance of `V` to the nonnegative orthant.
    pub v: T,
    /// Distance of `G` to the spectral unit ball.
    pub g: T,
    pub eta: T,
}

impl<T: Real> Residuals<T> {
    fn from_parts(p1: T, p2: T, d: T, v: T, g: T) -> Self {
        let eta = p1.max(p2).max(d).max(v).max(g);
        Self { p1, p2, d, v, g, eta }
    }
}

/// All five residuals, with an SVD for the `G` term.
pub fn kkt_residuals<T: Real>(state: &SolverState<T>, problem: &IntervalProblem<'_, T>) -> Result<Residuals<T>> {
    let aq = problem.operator().adjoint(&state.q);
    let gam = gamma_of(problem.mask(), &state.u, &state.v, &state.w, &aq, &state.g);
    let g_dist = (&state.g - project_spectral_ball(&state.g)?).norm();
    Ok(residuals_with(state, problem, &gam, g_dist))
}

/// Residuals from a precomputed `Gamma` and `||G - P_B(G)||`.
pub(crate) fn residuals_with<T: Real>(
    state: &SolverState<T>,
    problem: &IntervalProblem<'_, T>,
    gam: &DMatrix<T>,
    g_dist: T,
) -> Residuals<T> {
    let one = T::one();
    let loads = problem.loads();
    let p1 = (problem.operator().forward(&state.x) - loads).norm() / (one + loads.norm());
    let x_norm = state.x.norm();
    let p2 = project_mask(&state.x, problem.mask()).norm() / (one + x_norm);
    let g_norm = state.g.norm();
    let d = gam.norm() / (one + g_norm);
    let v = (&state.v - project_nonneg(&state.v)).norm() / (one + state.v.norm());
    let g = g_dist / (one + g_norm);
    Residuals::from_parts(p1, p2, d, v, g)
}

/// `iter,eta_p1,eta_p2,eta_d,eta_v,eta_g,eta` lines, 1-based iterations.
pub fn trace_to_csv<T: Real>(trace: &[Residuals<T>]) -> String {
    let mut out = String::from("iter,eta_p1,eta_p2,eta_d,eta_v,eta_g,eta\n");
    for (k, r) in trace.iter().enumerate() {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            k + 1,
            r.p1,
            r.p2,
            r.d,
            r.v,
            r.g,
            r.eta
        )
        .unwrap();
    }
    out
}
