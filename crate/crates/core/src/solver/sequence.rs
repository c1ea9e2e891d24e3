use std::time::Duration;

use nalgebra::{DMatrix, DVector};

use super::residuals::Residuals;
use super::{solve_interval, IntervalProblem, PriorMode, SolverParams};
use crate::baselines::gravity_estimate;
use crate::error::Result;
use crate::operators::RoutingOperator;
use crate::tensor_store::{TomographyInstance, TrafficTensor};
use crate::Real;

/// Per-interval diagnostics of a chronological recovery.
#[derive(Debug, Clone)]
pub struct IntervalReport<T: Real> {
    /// 0-based interval.
    pub interval: usize,
    pub iterations: usize,
    pub converged: bool,
    pub stalled: bool,
    pub residuals: Residuals<T>,
    pub trace: Vec<Residuals<T>>,
    pub alpha: T,
    pub beta: T,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct RecoveryReport<T: Real> {
    pub intervals: Vec<IntervalReport<T>>,
    /// Unclamped multipliers, one per interval.
    pub raw: Vec<DMatrix<T>>,
}

impl<T: Real> RecoveryReport<T> {
    /// 0-based intervals that hit `max_iter`.
    pub fn unconverged(&self) -> Vec<usize> {
        self.intervals
            .iter()
            .filter(|r| !r.converged)
            .map(|r| r.interval)
            .collect()
    }

    pub fn total_elapsed(&self) -> Duration {
        self.intervals.iter().map(|r| r.elapsed).sum()
    }
}

/// Prior `A` and weight `alpha` for an interval given which estimates are
/// available.
///
/// With neither prior (first interval) the Gravity estimate stands in and
/// `alpha = rho1 + rho2`. With only the previous interval, `Transfer` keeps
/// `alpha = rho1 + rho2` and `A = X_prev`, while `Drop` uses `alpha = rho1`
/// (falling back to `Transfer` when `rho1 = 0`).
pub fn interval_prior<T: Real>(
    params: &SolverParams<T>,
    x_bar: Option<&DMatrix<T>>,
    x_hat: Option<&DMatrix<T>>,
    gravity: impl FnOnce() -> DMatrix<T>,
) -> (DMatrix<T>, T) {
    let (rho1, rho2) = (params.rho1, params.rho2);
    let alpha = rho1 + rho2;
    match (x_bar, x_hat) {
        (Some(bar), Some(hat)) => ((bar * rho1 + hat * rho2) / alpha, alpha),
        (Some(bar), None) => match params.prior_mode {
            PriorMode::Drop if rho1 > T::zero() => (bar.clone(), rho1),
            _ => (bar.clone(), alpha),
        },
        (None, Some(hat)) => match params.prior_mode {
            PriorMode::Drop if rho2 > T::zero() => (hat.clone(), rho2),
            _ => (hat.clone(), alpha),
        },
        (None, None) => (gravity(), alpha),
    }
}

/// Recovers every interval in chronological order, feeding each estimate
/// forward as the continuity prior and, `period` intervals later, as the
/// periodicity prior.
pub fn recover_sequence<T: Real>(
    instance: &TomographyInstance<T>,
    params: &SolverParams<T>,
    period: Option<usize>,
) -> Result<(TrafficTensor<T>, RecoveryReport<T>)> {
    params.validate()?;
    let operator = RoutingOperator::new(instance.routing().clone())?;
    recover_with_operator(instance, &operator, params, period)
}

fn recover_with_operator<T: Real>(
    instance: &TomographyInstance<T>,
    operator: &RoutingOperator<T>,
    params: &SolverParams<T>,
    period: Option<usize>,
) -> Result<(TrafficTensor<T>, RecoveryReport<T>)> {
    let t = instance.intervals();
    let period = period.filter(|&p| p >= 1);
    let mut estimates: Vec<DMatrix<T>> = Vec::with_capacity(t);
    let mut raw = Vec::with_capacity(t);
    let mut reports = Vec::with_capacity(t);

    for k in 0..t {
        let loads = DVector::from_iterator(
            instance.links(),
            instance.link_loads().column(k).iter().copied(),
        );
        let x_bar = k.checked_sub(1).map(|p| &estimates[p]);
        let x_hat = period.and_then(|p| k.checked_sub(p)).map(|p| &estimates[p]);
        let (prior, alpha) = interval_prior(params, x_bar, x_hat, || {
            gravity_estimate(&loads, operator)
        });
        let problem = IntervalProblem::new(operator, loads, instance.mask().interval(k), prior, alpha)?;
        let sol = solve_interval(&problem, params)?;
        reports.push(IntervalReport {
            interval: k,
            iterations: sol.iterations,
            converged: sol.converged,
            stalled: sol.stalled,
            residuals: sol.residuals,
            trace: sol.trace,
            alpha,
            beta: sol.beta,
            elapsed: sol.elapsed,
        });
        raw.push(sol.raw);
        estimates.push(sol.estimate);
    }

    // the tensor holds volumes, so unclamped runs still drop negative
    // entries here; the raw multipliers stay in the report
    let tensor = if params.clamp_output {
        TrafficTensor::new(instance.nodes(), estimates)?
    } else {
        TrafficTensor::new(
            instance.nodes(),
            estimates.iter().map(|x| x.map(|v| v.max(T::zero()))).collect(),
        )?
    };
    Ok((
        tensor,
        RecoveryReport {
            intervals: reports,
            raw,
        },
    ))
}
