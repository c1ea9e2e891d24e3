//! Closed-form minimizers of the block subproblems of the augmented
//! Lagrangian
//!
//! ```text
//! L_beta = -<Q, L> + |W - 2 alpha A|^2 / (4 alpha) + <X, Gamma> + beta/2 |Gamma|^2
//! Gamma  = P_Omega(U) + V + W + A*(Q) - G
//! ```
//!
//! with `V >= 0`, `||G||_2 <= 1`, the semi-proximal term `I - P_Omega` on
//! `U`, either `lambda_max I - R R^T` or `delta I` on `Q` (see [`QStep`]), and
//! none on `V`, `W`, `G`.
//!
//! The `*_step` kernels take the adjoint `A*(Q)` precomputed so the sweep
//! can reuse it; the public `update_*` wrappers work from a [`SolverState`].

use nalgebra::{DMatrix, DVector};

use super::{IntervalProblem, QStep, SolverState};
use crate::error::Result;
use crate::operators::{project_mask, spectral_ball_with_norm, IntervalMask, RoutingOperator};
use crate::{lit, Real};

#[allow(clippy::too_many_arguments)]
pub(crate) fn u_step<T: Real>(
    mask: &IntervalMask,
    u_old: &DMatrix<T>,
    aq: &DMatrix<T>,
    v: &DMatrix<T>,
    w: &DMatrix<T>,
    g: &DMatrix<T>,
    x: &DMatrix<T>,
    beta: T,
) -> DMatrix<T> {
    let mut out = u_old.clone();
    for (n, o) in out.iter_mut().enumerate() {
        if mask.contains_od(n) {
            *o = -v[n] - aq[n] - w[n] + g[n] - x[n] / beta;
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn q_step<T: Real>(
    op: &RoutingOperator<T>,
    loads: &DVector<T>,
    mask: &IntervalMask,
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    w: &DMatrix<T>,
    g: &DMatrix<T>,
    x: &DMatrix<T>,
    anchor: &DVector<T>,
    beta: T,
    mode: QStep,
) -> DVector<T> {
    let rest = v + project_mask(u, mask) + w - g;
    let mismatch = op.forward(x) - loads;
    let rhs = op.forward(&rest) + mismatch / beta;
    match mode {
        QStep::Linearized => (rhs - op.h_q() * anchor) / (-op.lambda_max()),
        QStep::Factored => op.solve_shifted_gram(&(anchor * op.gram_shift() - rhs)),
    }
}

pub(crate) fn v_step<T: Real>(
    mask: &IntervalMask,
    u: &DMatrix<T>,
    aq: &DMatrix<T>,
    w: &DMatrix<T>,
    g: &DMatrix<T>,
    x: &DMatrix<T>,
    beta: T,
) -> DMatrix<T> {
    let pu = project_mask(u, mask);
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        let c = aq[(i, j)] + pu[(i, j)] + w[(i, j)] - g[(i, j)];
        (-c - x[(i, j)] / beta).max(T::zero())
    })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn w_step<T: Real>(
    prior: &DMatrix<T>,
    alpha: T,
    mask: &IntervalMask,
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    aq: &DMatrix<T>,
    g: &DMatrix<T>,
    x: &DMatrix<T>,
    beta: T,
) -> DMatrix<T> {
    let coupling = v + aq + project_mask(u, mask) - g;
    let denom = T::one() / (alpha * lit(2.0)) + beta;
    (prior - x - coupling * beta) / denom
}

/// Returns the projection and the top singular value of its argument.
pub(crate) fn g_step<T: Real>(
    mask: &IntervalMask,
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    aq: &DMatrix<T>,
    w: &DMatrix<T>,
    x: &DMatrix<T>,
    beta: T,
) -> Result<(DMatrix<T>, T)> {
    spectral_ball_with_norm(&g_argument(mask, u, v, aq, w, x, beta))
}

/// `V + A*(Q) + P_Omega(U) + W + X / beta`, the point projected by the `G`
/// update. The `+X/beta` sign follows from the `-<X, G>` term of the
/// augmented Lagrangian.
pub(crate) fn g_argument<T: Real>(
    mask: &IntervalMask,
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    aq: &DMatrix<T>,
    w: &DMatrix<T>,
    x: &DMatrix<T>,
    beta: T,
) -> DMatrix<T> {
    v + aq + project_mask(u, mask) + w + x / beta
}

pub(crate) fn gamma_of<T: Real>(
    mask: &IntervalMask,
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    w: &DMatrix<T>,
    aq: &DMatrix<T>,
    g: &DMatrix<T>,
) -> DMatrix<T> {
    project_mask(u, mask) + v + w + aq - g
}

/// `U` update: `P_Omega(-V - A*Q - W + G - X/beta) + P_{Omega^C}(U_old)`.
pub fn update_u<T: Real>(state: &SolverState<T>, problem: &IntervalProblem<'_, T>, beta: T) -> DMatrix<T> {
    let aq = problem.operator().adjoint(&state.q);
    u_step(problem.mask(), &state.u, &aq, &state.v, &state.w, &state.g, &state.x, beta)
}

/// `Q` update with proximal anchor `anchor`. With `r = R vec(V + P_Omega U
/// + W - G) + (R vec X - L) / beta`:
///
/// * `Linearized`: `-(r - H_Q anchor) / lambda_max`, `H_Q = lambda_max I - R R^T`;
/// * `Factored`: `(R R^T + delta I)^{-1} (delta anchor - r)`.
pub fn update_q<T: Real>(
    state: &SolverState<T>,
    problem: &IntervalProblem<'_, T>,
    beta: T,
    anchor: &DVector<T>,
    mode: QStep,
) -> DVector<T> {
    q_step(
        problem.operator(),
        problem.loads(),
        problem.mask(),
        &state.u,
        &state.v,
        &state.w,
        &state.g,
        &state.x,
        anchor,
        beta,
        mode,
    )
}

/// `V` update: `max(0, -(A*Q + P_Omega U + W - G) - X/beta)`.
pub fn update_v<T: Real>(state: &SolverState<T>, problem: &IntervalProblem<'_, T>, beta: T) -> DMatrix<T> {
    let aq = problem.operator().adjoint(&state.q);
    v_step(problem.mask(), &state.u, &aq, &state.w, &state.g, &state.x, beta)
}

/// `W` update: `(A - X - beta (V + A*Q + P_Omega U - G)) / (1/(2 alpha) + beta)`.
pub fn update_w<T: Real>(state: &SolverState<T>, problem: &IntervalProblem<'_, T>, beta: T) -> DMatrix<T> {
    let aq = problem.operator().adjoint(&state.q);
    w_step(
        problem.prior(),
        problem.alpha(),
        problem.mask(),
        &state.u,
        &state.v,
        &aq,
        &state.g,
        &state.x,
        beta,
    )
}

/// `G` update: projection of `V + A*Q + P_Omega U + W + X/beta` onto the
/// spectral unit ball.
pub fn update_g<T: Real>(
    state: &SolverState<T>,
    problem: &IntervalProblem<'_, T>,
    beta: T,
) -> Result<DMatrix<T>> {
    let aq = problem.operator().adjoint(&state.q);
    Ok(g_step(problem.mask(), &state.u, &state.v, &aq, &state.w, &state.x, beta)?.0)
}

/// Dual constraint residual `Gamma = P_Omega(U) + V + W + A*(Q) - G`.
pub fn gamma<T: Real>(state: &SolverState<T>, problem: &IntervalProblem<'_, T>) -> DMatrix<T> {
    let aq = problem.operator().adjoint(&state.q);
    gamma_of(problem.mask(), &state.u, &state.v, &state.w, &aq, &state.g)
}

/// `X + tau beta Gamma`.
pub fn multiplier_step<T: Real>(
    state: &SolverState<T>,
    problem: &IntervalProblem<'_, T>,
    beta: T,
    tau: T,
) -> DMatrix<T> {
    &state.x + gamma(state, problem) * (tau * beta)
}

/// Smooth part of the augmented Lagrangian at `state` (the indicator terms
/// for `V >= 0` and `||G||_2 <= 1` are left to the caller).
pub fn augmented_lagrangian<T: Real>(state: &SolverState<T>, problem: &IntervalProblem<'_, T>, beta: T) -> T {
    let alpha = problem.alpha();
    let gam = gamma(state, problem);
    let shifted = &state.w - problem.prior() * (alpha * lit(2.0));
    -state.q.dot(problem.loads()) + shifted.norm_squared() / (alpha * lit(4.0))
        + state.x.dot(&gam)
        + gam.norm_squared() * beta * lit(0.5)
}
