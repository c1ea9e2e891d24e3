use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::operators::{IntervalMask, RoutingOperator};
use crate::Real;

/// One interval of the recovery: loads, zero set and aggregate prior
/// `A = (rho1 X_prev + rho2 X_week) / (rho1 + rho2)` with weight
/// `alpha = rho1 + rho2`.
#[derive(Debug, Clone)]
pub struct IntervalProblem<'a, T: Real> {
    operator: &'a RoutingOperator<T>,
    loads: DVector<T>,
    mask: IntervalMask,
    prior: DMatrix<T>,
    alpha: T,
}

impl<'a, T: Real> IntervalProblem<'a, T> {
    pub fn new(
        operator: &'a RoutingOperator<T>,
        loads: DVector<T>,
        mask: IntervalMask,
        prior: DMatrix<T>,
        alpha: T,
    ) -> Result<Self> {
        let s = operator.nodes();
        if loads.len() != operator.links() {
            return Err(Error::Dimension(format!(
                "{} loads for {} links",
                loads.len(),
                operator.links()
            )));
        }
        if mask.nodes() != s || prior.shape() != (s, s) {
            return Err(Error::Dimension(format!(
                "mask/prior do not match {s} nodes"
            )));
        }
        if prior.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("prior has non-finite entries".into()));
        }
        if !(alpha.is_finite() && alpha > T::zero()) {
            return Err(Error::InvalidParams(format!("alpha = {alpha} must be > 0")));
        }
        Ok(Self {
            operator,
            loads,
            mask,
            prior,
            alpha,
        })
    }

    /// Builds the problem from both temporal priors.
    pub fn from_priors(
        operator: &'a RoutingOperator<T>,
        loads: DVector<T>,
        mask: IntervalMask,
        x_bar: &DMatrix<T>,
        x_hat: &DMatrix<T>,
        rho1: T,
        rho2: T,
    ) -> Result<Self> {
        let alpha = rho1 + rho2;
        let prior = (x_bar * rho1 + x_hat * rho2) / alpha;
        Self::new(operator, loads, mask, prior, alpha)
    }

    pub fn operator(&self) -> &'a RoutingOperator<T> {
        self.operator
    }

    pub fn loads(&self) -> &DVector<T> {
        &self.loads
    }

    pub fn mask(&self) -> &IntervalMask {
        &self.mask
    }

    pub fn prior(&self) -> &DMatrix<T> {
        &self.prior
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn nodes(&self) -> usize {
        self.operator.nodes()
    }
}

/// Dual blocks and primal multiplier of one ADMM run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState<T: Real> {
    /// Sparsity multiplier, supported on the mask.
    pub u: DMatrix<T>,
    /// Link-constraint multiplier.
    pub q: DVector<T>,
    /// Nonnegativity multiplier, `V >= 0`.
    pub v: DMatrix<T>,
    /// Quadratic coupling block.
    pub w: DMatrix<T>,
    /// Spectral block, `||G||_2 <= 1`.
    pub g: DMatrix<T>,
    /// Multiplier of the dual constraint: the traffic estimate.
    pub x: DMatrix<T>,
    pub iter: usize,
}

impl<T: Real> SolverState<T> {
    pub fn zeros(nodes: usize, links: usize) -> Self {
        let z = DMatrix::zeros(nodes, nodes);
        Self {
            u: z.clone(),
            q: DVector::zeros(links),
            v: z.clone(),
            w: z.clone(),
            g: z.clone(),
            x: z,
            iter: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.u, &self.v, &self.w, &self.g, &self.x]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
            && self.q.iter().all(|v| v.is_finite())
    }
}
