//! Linear algebra of the recovery model: the routing map `X -> R vec(X)`,
//! its adjoint, the Gram operator `sum_j R_j R_j^T`, and the projections
//! used by the block updates.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::tensor_store::RoutingMatrix;
use crate::{lit, Real};

pub use crate::tensor_store::IntervalMask;

const POWER_TOL: f64 = 1e-8;
const POWER_SAFETY: f64 = 1e-6;
const POWER_MAX_ITER: usize = 100_000;
/// Relative size of the proximal shift `delta` in the factored `Q` step.
const GRAM_SHIFT: f64 = 1e-8;

/// Routing map with its cached Gram matrix and spectral bound.
#[derive(Debug, Clone)]
pub struct RoutingOperator<T: Real> {
    routing: RoutingMatrix,
    gram: DMatrix<T>,
    lambda_max: T,
    h_q: DMatrix<T>,
    shift: T,
    shifted_gram: Cholesky<T, Dyn>,
}

impl<T: Real> RoutingOperator<T> {
    pub fn new(routing: RoutingMatrix) -> Result<Self> {
        let m = routing.links();
        let mut gram = DMatrix::<T>::zeros(m, m);
        for n in 0..routing.od_pairs() {
            let links = routing.od_links(n);
            for &a in links {
                for &b in links {
                    gram[(a, b)] += T::one();
                }
            }
        }
        let lambda_max = estimate_lambda_max(&gram)?;
        let mut h_q = -gram.clone();
        for d in 0..m {
            h_q[(d, d)] += lambda_max;
        }
        let (shift, shifted_gram) = factor_shifted(&gram, lambda_max)?;
        Ok(Self {
            routing,
            gram,
            lambda_max,
            h_q,
            shift,
            shifted_gram,
        })
    }

    pub fn routing(&self) -> &RoutingMatrix {
        &self.routing
    }

    pub fn nodes(&self) -> usize {
        self.routing.nodes()
    }

    pub fn links(&self) -> usize {
        self.routing.links()
    }

    /// `sum_j R_j R_j^T = R R^T`.
    pub fn gram(&self) -> &DMatrix<T> {
        &self.gram
    }

    /// Upper bound on the largest eigenvalue of the Gram matrix.
    pub fn lambda_max(&self) -> T {
        self.lambda_max
    }

    /// `lambda_max I - gram`, positive semidefinite.
    pub fn h_q(&self) -> &DMatrix<T> {
        &self.h_q
    }

    /// The small `delta > 0` of the factored `Q` step.
    pub fn gram_shift(&self) -> T {
        self.shift
    }

    /// Solves `(R R^T + delta I) q = rhs`.
    pub fn solve_shifted_gram(&self, rhs: &DVector<T>) -> DVector<T> {
        self.shifted_gram.solve(rhs)
    }

    /// `q = sum_j R_j X e_j = R vec(X)`.
    pub fn forward_map(&self, x: &DMatrix<T>) -> Result<DVector<T>> {
        let s = self.nodes();
        if x.shape() != (s, s) {
            return Err(Error::Dimension(format!(
                "forward map expects {s}x{s}, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        Ok(self.forward(x))
    }

    pub(crate) fn forward(&self, x: &DMatrix<T>) -> DVector<T> {
        DVector::from_vec(self.routing.apply(x.as_slice()))
    }

    /// `Y = sum_j R_j^T q e_j^T`: column `j` of `Y` is `R_j^T q`.
    pub fn adjoint_map(&self, q: &DVector<T>) -> Result<DMatrix<T>> {
        if q.len() != self.links() {
            return Err(Error::Dimension(format!(
                "adjoint map expects {} links, got {}",
                self.links(),
                q.len()
            )));
        }
        Ok(self.adjoint(q))
    }

    pub(crate) fn adjoint(&self, q: &DVector<T>) -> DMatrix<T> {
        let s = self.nodes();
        DMatrix::from_fn(s, s, |i, j| {
            self.routing
                .od_links(j * s + i)
                .iter()
                .fold(T::zero(), |acc, &m| acc + q[m])
        })
    }
}

/// Cholesky factor of `gram + delta I` with `delta` a tiny multiple of
/// `lambda_max`, raised until the factorization succeeds (the Gram matrix is
/// singular when links share OD sets).
fn factor_shifted<T: Real>(gram: &DMatrix<T>, lambda_max: T) -> Result<(T, Cholesky<T, Dyn>)> {
    let mut rel = lit::<T>(GRAM_SHIFT).max(T::default_epsilon() * lit(100.0));
    for _ in 0..8 {
        let shift = rel * lambda_max.max(T::one());
        let mut shifted = gram.clone();
        for d in 0..shifted.nrows() {
            shifted[(d, d)] += shift;
        }
        if let Some(ch) = Cholesky::new(shifted) {
            return Ok((shift, ch));
        }
        rel *= lit(100.0);
    }
    Err(Error::Numeric("could not factor the shifted Gram matrix".into()))
}

/// Upper bound for the largest eigenvalue of a symmetric PSD matrix.
///
/// Power iteration from the normalized all-ones vector until the eigen
/// residual `||G v - rho v||` drops below `1e-8 rho`, then inflated by
/// `1 + 1e-6`.
pub fn estimate_lambda_max<T: Real>(gram: &DMatrix<T>) -> Result<T> {
    let m = gram.nrows();
    if gram.ncols() != m {
        return Err(Error::Dimension(format!(
            "gram is {}x{}",
            gram.nrows(),
            gram.ncols()
        )));
    }
    if m == 0 {
        return Ok(T::zero());
    }
    let scale = gram.amax();
    let sym_tol = scale * lit(1e-12);
    for a in 0..m {
        for b in 0..a {
            if (gram[(a, b)] - gram[(b, a)]).abs() > sym_tol {
                return Err(Error::Validation(format!(
                    "gram not symmetric at ({}, {})",
                    a + 1,
                    b + 1
                )));
            }
        }
    }
    if scale == T::zero() {
        return Ok(T::zero());
    }

    let tol: T = lit(POWER_TOL);
    let mut v = DVector::from_element(m, T::one() / lit::<T>(m as f64).sqrt());
    let mut rho = T::zero();
    for _ in 0..POWER_MAX_ITER {
        let w = gram * &v;
        rho = v.dot(&w);
        let residual = (&w - &v * rho).norm();
        let norm = w.norm();
        if norm == T::zero() {
            break;
        }
        if residual <= tol * rho {
            break;
        }
        v = w / norm;
    }
    Ok(rho * (T::one() + lit(POWER_SAFETY)))
}

/// `P_Omega(X)`: keeps masked entries, zeroes the rest.
pub fn project_mask<T: Real>(x: &DMatrix<T>, mask: &IntervalMask) -> DMatrix<T> {
    let mut out = x.clone();
    for (v, &z) in out.iter_mut().zip(mask.flags()) {
        if !z {
            *v = T::zero();
        }
    }
    out
}

/// `P_{Omega^C}(X)`: zeroes masked entries.
pub fn project_mask_complement<T: Real>(x: &DMatrix<T>, mask: &IntervalMask) -> DMatrix<T> {
    let mut out = x.clone();
    for (v, &z) in out.iter_mut().zip(mask.flags()) {
        if z {
            *v = T::zero();
        }
    }
    out
}

/// Elementwise `max(X, 0)`.
pub fn project_nonneg<T: Real>(x: &DMatrix<T>) -> DMatrix<T> {
    x.map(|v| v.max(T::zero()))
}

/// Projection onto the spectral-norm unit ball: `U min(Sigma, I) V^T`.
///
/// Computed as `X - sum_{sigma_i > 1} (sigma_i - 1) u_i v_i^T`, which returns
/// `X` untouched when it already lies in the ball.
pub fn project_spectral_ball<T: Real>(x: &DMatrix<T>) -> Result<DMatrix<T>> {
    Ok(spectral_ball_with_norm(x)?.0)
}

/// Side length from which the ball projection works from the eigenpairs of
/// `X^T X` rather than a full SVD.
const EIGEN_ROUTE_MIN_DIM: usize = 48;

/// Projection together with the largest singular value of the input.
pub(crate) fn spectral_ball_with_norm<T: Real>(x: &DMatrix<T>) -> Result<(DMatrix<T>, T)> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in spectral projection".into()));
    }
    if x.nrows().min(x.ncols()) >= EIGEN_ROUTE_MIN_DIM {
        spectral_ball_eigen(x)
    } else {
        spectral_ball_svd(x)
    }
}

fn spectral_ball_svd<T: Real>(x: &DMatrix<T>) -> Result<(DMatrix<T>, T)> {
    let svd = x
        .clone()
        .try_svd_unordered(true, true, T::default_epsilon(), 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma = &svd.singular_values;
    let top = sigma.iter().fold(T::zero(), |a, &b| a.max(b));
    let above: Vec<usize> = (0..sigma.len()).filter(|&k| sigma[k] > T::one()).collect();
    if above.is_empty() {
        return Ok((x.clone(), top));
    }
    let mut left = u.select_columns(above.iter());
    for (c, &k) in above.iter().enumerate() {
        left.column_mut(c).scale_mut(sigma[k] - T::one());
    }
    let right = v_t.select_rows(above.iter());
    let mut out = x.clone();
    out.gemm(-T::one(), &left, &right, T::one());
    Ok((out, top))
}

/// With `X^T X = V diag(sigma^2) V^T`, `(sigma - 1) u v^T = (1 - 1/sigma) X v v^T`,
/// so only the right singular vectors above one are needed. Runs in `f64`
/// on faer, whose dense kernels beat nalgebra's at this size.
fn spectral_ball_eigen<T: Real>(x: &DMatrix<T>) -> Result<(DMatrix<T>, T)> {
    let to_f64 = |v: T| v.to_f64().expect("finite scalar");
    let xf = Mat::<f64>::from_fn(x.nrows(), x.ncols(), |i, j| to_f64(x[(i, j)]));
    let gram = xf.transpose() * &xf;
    let eig = gram
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::Numeric("eigendecomposition did not converge".into()))?;
    let lam = eig.S().column_vector();
    let top = (0..lam.nrows()).fold(0.0f64, |a, k| a.max(lam[k])).sqrt();
    let above: Vec<usize> = (0..lam.nrows()).filter(|&k| lam[k] > 1.0).collect();
    if above.is_empty() {
        return Ok((x.clone(), lit(top)));
    }
    let basis = eig.U();
    let right = Mat::<f64>::from_fn(x.ncols(), above.len(), |i, c| basis[(i, above[c])]);
    let mut left = &xf * &right;
    for (c, &k) in above.iter().enumerate() {
        let shrink = 1.0 - 1.0 / lam[k].sqrt();
        left.col_mut(c).iter_mut().for_each(|v| *v *= shrink);
    }
    let out = xf - left * right.transpose();
    Ok((DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| lit(out[(i, j)])), lit(top)))
}

/// Spectral norm via SVD.
pub fn spectral_norm<T: Real>(x: &DMatrix<T>) -> T {
    x.clone()
        .singular_values_unordered()
        .iter()
        .fold(T::zero(), |a, &b| a.max(b))
}

/// Nuclear norm via SVD.
pub fn nuclear_norm<T: Real>(x: &DMatrix<T>) -> T {
    x.clone()
        .singular_values_unordered()
        .iter()
        .fold(T::zero(), |a, &b| a + b)
}
