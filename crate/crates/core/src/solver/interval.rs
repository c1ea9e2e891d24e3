use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use super::residuals::{kkt_residuals, residuals_with, Residuals};
use super::updates::{gamma_of, g_step, q_step, u_step, v_step, w_step};
use super::{IntervalProblem, SolverParams, SolverState};
use crate::error::{Error, Result};
use crate::operators::project_nonneg;
use crate::{lit, Real};

/// Growth of `eta` over its running minimum that aborts the run.
const DIVERGENCE_FACTOR: f64 = 1e6;

/// Relative drop of the best `eta` that resets the stall window.
const STALL_PROGRESS: f64 = 0.99;

/// One block update of the sweep, in the order they are performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepStep {
    UHalf,
    QHalf,
    V,
    Q,
    U,
    WHalf,
    G,
    W,
    Multiplier,
}

/// Receives every block update as it happens.
pub trait SweepObserver {
    fn on_step(&mut self, iter: usize, step: SweepStep);
}

impl SweepObserver for () {
    fn on_step(&mut self, _: usize, _: SweepStep) {}
}

impl SweepObserver for Vec<SweepStep> {
    fn on_step(&mut self, _: usize, step: SweepStep) {
        self.push(step);
    }
}

/// Result of one interval solve.
#[derive(Debug, Clone)]
pub struct IntervalSolution<T: Real> {
    /// Clamped (or raw, per params) traffic estimate.
    pub estimate: DMatrix<T>,
    /// The multiplier `X`: the final iterate when converged, otherwise the
    /// iterate with the smallest `eta`.
    pub raw: DMatrix<T>,
    pub state: SolverState<T>,
    /// Residuals after every iteration (empty unless `record_trace`).
    pub trace: Vec<Residuals<T>>,
    /// Residuals of the final iterate.
    pub residuals: Residuals<T>,
    pub converged: bool,
    /// Ended by the stall window rather than by tolerance or `max_iter`.
    pub stalled: bool,
    pub iterations: usize,
    pub beta: T,
    pub elapsed: Duration,
}

/// Runs the semi-proximal ADMM on one interval.
pub fn solve_interval<T: Real>(
    problem: &IntervalProblem<'_, T>,
    params: &SolverParams<T>,
) -> Result<IntervalSolution<T>> {
    solve_interval_observed(problem, params, &mut ())
}

/// [`solve_interval`] reporting each block update to `observer`.
///
/// Each iteration performs, from zero initial blocks:
///
/// ```text
/// U^{k+1/2}  (anchor U^k)        Q^{k+1/2} (anchor Q^k)
/// V^{k+1}                        Q^{k+1}   (anchor Q^{k+1/2})
/// U^{k+1}    (anchor U^{k+1/2})
/// W^{k+1/2}  G^{k+1}  W^{k+1}
/// X^{k+1} = X^k + tau beta Gamma
/// ```
pub fn solve_interval_observed<T: Real, O: SweepObserver>(
    problem: &IntervalProblem<'_, T>,
    params: &SolverParams<T>,
    observer: &mut O,
) -> Result<IntervalSolution<T>> {
    params.validate()?;
    let start = Instant::now();
    let op = problem.operator();
    let (s, m) = (op.nodes(), op.links());
    let mask = problem.mask();
    let loads = problem.loads();
    let prior = problem.prior();
    let alpha = problem.alpha();
    let beta = params.effective_beta(loads);
    let step = params.tau * beta;

    let mut st = SolverState::zeros(s, m);
    let mut aq = DMatrix::zeros(s, s);
    let mut trace = Vec::new();
    let mut best: Option<(T, DMatrix<T>)> = None;
    let mut min_eta = T::max_value().expect("bounded scalar");
    let mut converged = false;
    let mut stalled = false;
    let mut stall_ref = min_eta;
    let mut stall_since = 0;

    for it in 1..=params.max_iter {
        let u_half = u_step(mask, &st.u, &aq, &st.v, &st.w, &st.g, &st.x, beta);
        observer.on_step(it, SweepStep::UHalf);
        let q_half = q_step(op, loads, mask, &u_half, &st.v, &st.w, &st.g, &st.x, &st.q, beta, params.q_step);
        observer.on_step(it, SweepStep::QHalf);
        let aq_half = op.adjoint(&q_half);
        let v = v_step(mask, &u_half, &aq_half, &st.w, &st.g, &st.x, beta);
        observer.on_step(it, SweepStep::V);
        let q = q_step(op, loads, mask, &u_half, &v, &st.w, &st.g, &st.x, &q_half, beta, params.q_step);
        observer.on_step(it, SweepStep::Q);
        aq = op.adjoint(&q);
        let u = u_step(mask, &u_half, &aq, &v, &st.w, &st.g, &st.x, beta);
        observer.on_step(it, SweepStep::U);

        let w_half = w_step(prior, alpha, mask, &u, &v, &aq, &st.g, &st.x, beta);
        observer.on_step(it, SweepStep::WHalf);
        let (g, _) = g_step(mask, &u, &v, &aq, &w_half, &st.x, beta).map_err(|e| Error::Divergence {
            iteration: it,
            reason: e.to_string(),
        })?;
        observer.on_step(it, SweepStep::G);
        let w = w_step(prior, alpha, mask, &u, &v, &aq, &g, &st.x, beta);
        observer.on_step(it, SweepStep::W);

        let gam = gamma_of(mask, &u, &v, &w, &aq, &g);
        let x = &st.x + &gam * step;
        observer.on_step(it, SweepStep::Multiplier);

        st = SolverState { u, q, v, w, g, x, iter: it };
        if !st.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                reason: "non-finite block".into(),
            });
        }
        // G was just projected onto the ball, so its distance to it is zero
        let res = residuals_with(&st, problem, &gam, T::zero());
        if !res.eta.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                reason: "non-finite residual".into(),
            });
        }
        if params.record_trace {
            trace.push(res);
        }
        if res.eta < params.epsilon {
            converged = true;
            break;
        }
        if res.eta > min_eta * lit(DIVERGENCE_FACTOR) {
            return Err(Error::Divergence {
                iteration: it,
                reason: format!("eta {:e} grew past 1e6 x its minimum {:e}", res.eta, min_eta),
            });
        }
        if res.eta < min_eta {
            min_eta = res.eta;
            best = Some((res.eta, st.x.clone()));
        }
        if min_eta < stall_ref * lit(STALL_PROGRESS) {
            stall_ref = min_eta;
            stall_since = it;
        } else if params.stall_window > 0 && it - stall_since >= params.stall_window {
            stalled = true;
            break;
        }
    }

    let raw = match (&best, converged) {
        (Some((_, x)), false) => x.clone(),
        _ => st.x.clone(),
    };
    let residuals = kkt_residuals(&st, problem)?;
    let estimate = if params.clamp_output {
        clamp_estimate(&raw, problem)
    } else {
        raw.clone()
    };
    Ok(IntervalSolution {
        estimate,
        raw,
        iterations: st.iter,
        state: st,
        trace,
        residuals,
        converged,
        stalled,
        beta,
        elapsed: start.elapsed(),
    })
}

/// `max(X, 0)` with masked entries set to zero.
pub fn clamp_estimate<T: Real>(x: &DMatrix<T>, problem: &IntervalProblem<'_, T>) -> DMatrix<T> {
    let mut out = project_nonneg(x);
    for (n, v) in out.iter_mut().enumerate() {
        if problem.mask().contains_od(n) {
            *v = T::zero();
        }
    }
    out
}
