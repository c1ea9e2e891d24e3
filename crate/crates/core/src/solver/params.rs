use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::{lit, Real};

/// What to do with a missing temporal prior (previous interval or one
/// period ago).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorMode {
    /// Give the missing prior's weight to the available one; `alpha` stays
    /// `rho1 + rho2`.
    #[default]
    Transfer,
    /// Drop the missing prior's weight and recompute `alpha`.
    Drop,
}

/// Semi-proximal term of the `Q` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QStep {
    /// `beta delta I` with a tiny `delta`: an (almost) exact block
    /// minimization through a cached Cholesky factor of `R R^T + delta I`.
    #[default]
    Factored,
    /// `beta (lambda_max I - R R^T)`: a diagonal solve, no factorization.
    Linearized,
}

/// Model weights and ADMM settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams<T: Real> {
    /// Continuity weight (previous interval).
    pub rho1: T,
    /// Periodicity weight (one period ago).
    pub rho2: T,
    /// Augmented Lagrangian penalty.
    pub beta: T,
    /// Multiplier step length, in `(0, (1 + sqrt 5) / 2)`.
    pub tau: T,
    /// KKT tolerance on the max residual.
    pub epsilon: T,
    pub max_iter: usize,
    /// Stop early once the best `eta` has improved by less than 1% over this
    /// many iterations (typical of inconsistent link loads); 0 never stops.
    pub stall_window: usize,
    pub prior_mode: PriorMode,
    pub q_step: QStep,
    /// Return `max(X, 0)` with masked entries zeroed instead of the raw
    /// multiplier.
    pub clamp_output: bool,
    /// Multiply `beta` by `||L|| / M` when the loads are far from unit scale.
    pub scale_beta: bool,
    /// Keep the per-iteration residual trace.
    pub record_trace: bool,
}

impl<T: Real> Default for SolverParams<T> {
    fn default() -> Self {
        Self {
            rho1: lit(0.5),
            rho2: lit(0.5),
            beta: lit(0.1),
            tau: lit(1.618),
            epsilon: lit(1e-6),
            max_iter: 5000,
            stall_window: 500,
            prior_mode: PriorMode::Transfer,
            q_step: QStep::Factored,
            clamp_output: true,
            scale_beta: true,
            record_trace: true,
        }
    }
}

/// Lower and upper edge of the load scale treated as "unit".
const UNIT_SCALE: (f64, f64) = (1e-2, 1e2);

impl<T: Real> SolverParams<T> {
    pub fn golden_bound() -> T {
        (T::one() + lit::<T>(5.0).sqrt()) * lit(0.5)
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: T| v.is_finite() && v >= T::zero();
        if !finite_nonneg(self.rho1) || !finite_nonneg(self.rho2) {
            return Err(Error::InvalidParams(format!(
                "rho1 = {}, rho2 = {} must be finite and >= 0",
                self.rho1, self.rho2
            )));
        }
        if self.rho1 + self.rho2 <= T::zero() {
            return Err(Error::InvalidParams("rho1 + rho2 must be positive".into()));
        }
        if !(self.beta.is_finite() && self.beta > T::zero()) {
            return Err(Error::InvalidParams(format!("beta = {} must be > 0", self.beta)));
        }
        if !(self.tau > T::zero() && self.tau < Self::golden_bound()) {
            return Err(Error::InvalidParams(format!(
                "tau = {} outside (0, (1+sqrt 5)/2)",
                self.tau
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > T::zero()) {
            return Err(Error::InvalidParams(format!(
                "epsilon = {} must be > 0",
                self.epsilon
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParams("max_iter must be >= 1".into()));
        }
        Ok(())
    }

    pub fn alpha(&self) -> T {
        self.rho1 + self.rho2
    }

    /// Penalty actually used for loads `l`.
    pub fn effective_beta(&self, loads: &DVector<T>) -> T {
        if !self.scale_beta || loads.is_empty() {
            return self.beta;
        }
        let scale = loads.norm() / lit(loads.len() as f64);
        if scale > T::zero() && (scale < lit(UNIT_SCALE.0) || scale > lit(UNIT_SCALE.1)) {
            self.beta * scale
        } else {
            self.beta
        }
    }
}
