//! Reference estimators: the rank-1 Gravity model fitted to link loads and
//! its Tomo-Gravity refinement by KL projection onto the link equations.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::operators::RoutingOperator;
use crate::tensor_store::{TomographyInstance, TrafficTensor};
use crate::{lit, Real};

const GRAVITY_SWEEPS: usize = 200;
const GRAVITY_TOL: f64 = 1e-10;
const NNLS_SWEEPS: usize = 2000;
const NNLS_TOL: f64 = 1e-13;

pub const TOMO_GRAVITY_ITERS: usize = 500;
pub const TOMO_GRAVITY_TOL: f64 = 1e-6;

/// Per-node ingress/egress totals of a gravity model.
#[derive(Debug, Clone, PartialEq)]
pub struct GravityPrior<T: Real> {
    pub out_totals: DVector<T>,
    pub in_totals: DVector<T>,
    pub total: T,
}

impl<T: Real> GravityPrior<T> {
    /// Builds a prior, rescaling `in_totals` so both margins share one total.
    pub fn balanced(out_totals: DVector<T>, mut in_totals: DVector<T>) -> Self {
        let total = out_totals.sum();
        let in_sum = in_totals.sum();
        if in_sum > T::zero() {
            in_totals *= total / in_sum;
        }
        Self {
            out_totals,
            in_totals,
            total,
        }
    }

    /// `out in^T / total`, or zero when `total = 0`.
    pub fn estimate(&self) -> DMatrix<T> {
        let s = self.out_totals.len();
        if self.total <= T::zero() {
            return DMatrix::zeros(s, s);
        }
        &self.out_totals * self.in_totals.transpose() / self.total
    }

    /// Fits node totals to link loads: alternating nonnegative least squares
    /// on `L = R vec(a b^T)`, then `out = a sum(b)`, `in = b sum(a)`.
    pub fn fit(loads: &DVector<T>, operator: &RoutingOperator<T>) -> Self {
        let s = operator.nodes();
        let zero = || Self::balanced(DVector::zeros(s), DVector::zeros(s));
        if loads.iter().all(|&v| v <= T::zero()) {
            return zero();
        }
        let routing = operator.routing();
        let m = operator.links();
        let mut a = DVector::from_element(s, T::one());
        let mut b = DVector::from_element(s, T::one());
        let mut prev = DMatrix::<T>::zeros(s, s);
        for _ in 0..GRAVITY_SWEEPS {
            // design for a with b fixed: column i = sum_j b_j R[:, (i, j)]
            let mut design = DMatrix::zeros(m, s);
            for n in 0..s * s {
                let (i, j) = (n % s, n / s);
                for &link in routing.od_links(n) {
                    design[(link, i)] += b[j];
                }
            }
            a = nnls_from(&design, loads, a);
            let mut design = DMatrix::zeros(m, s);
            for n in 0..s * s {
                let (i, j) = (n % s, n / s);
                for &link in routing.od_links(n) {
                    design[(link, j)] += a[i];
                }
            }
            b = nnls_from(&design, loads, b);

            let x = &a * b.transpose();
            let change = (&x - &prev).norm();
            let scale = x.norm();
            prev = x;
            if scale == T::zero() || change <= lit::<T>(GRAVITY_TOL) * scale {
                break;
            }
        }
        let (sa, sb) = (a.sum(), b.sum());
        if sa <= T::zero() || sb <= T::zero() {
            return zero();
        }
        Self::balanced(a * sb, b * sa)
    }
}

/// Rank-1 Gravity estimate of one interval's traffic from its link loads.
pub fn gravity_estimate<T: Real>(loads: &DVector<T>, operator: &RoutingOperator<T>) -> DMatrix<T> {
    GravityPrior::fit(loads, operator).estimate()
}

/// Nonnegative least squares `min ||A x - b||, x >= 0`.
pub fn nnls<T: Real>(a: &DMatrix<T>, b: &DVector<T>) -> DVector<T> {
    nnls_from(a, b, DVector::zeros(a.ncols()))
}

/// Cyclic coordinate descent on the normal equations, warm started at `x`.
/// Stops once every projected gradient entry is below a relative tolerance.
fn nnls_from<T: Real>(a: &DMatrix<T>, b: &DVector<T>, mut x: DVector<T>) -> DVector<T> {
    let gram = a.transpose() * a;
    let rhs = a.transpose() * b;
    x.apply(|v| *v = v.max(T::zero()));
    // grad = gram x - rhs, kept current as coordinates move
    let mut grad = &gram * &x - &rhs;
    let tol = lit::<T>(NNLS_TOL) * (T::one() + rhs.amax());
    for _ in 0..NNLS_SWEEPS {
        let mut worst = T::zero();
        for i in 0..x.len() {
            let h = gram[(i, i)];
            if h <= T::zero() {
                continue;
            }
            let proj = if x[i] > T::zero() { grad[i].abs() } else { (-grad[i]).max(T::zero()) };
            worst = worst.max(proj);
            let next = (x[i] - grad[i] / h).max(T::zero());
            let delta = next - x[i];
            if delta != T::zero() {
                grad.axpy(delta, &gram.column(i), T::one());
                x[i] = next;
            }
        }
        if worst <= tol {
            break;
        }
    }
    x
}

/// Output of [`tomo_gravity`].
#[derive(Debug, Clone)]
pub struct TomoGravityOutcome<T: Real> {
    pub estimate: DMatrix<T>,
    pub iterations: usize,
    /// `max |R vec X - L| / (1 + max L)` over the links that were not skipped.
    pub mismatch: T,
    pub converged: bool,
    /// 0-based links with positive load but no prior mass (infeasible).
    pub skipped_links: Vec<usize>,
}

/// KL refinement of a prior towards the link equations by multiplicative
/// iterative scaling: each link's OD entries are rescaled by
/// measured/modeled load, cycling over links. Zero prior entries stay zero.
pub fn tomo_gravity<T: Real>(
    loads: &DVector<T>,
    operator: &RoutingOperator<T>,
    prior: &DMatrix<T>,
    iters: usize,
    tol: T,
) -> Result<TomoGravityOutcome<T>> {
    let s = operator.nodes();
    if prior.shape() != (s, s) || loads.len() != operator.links() {
        return Err(Error::Dimension("prior or loads do not match the routing".into()));
    }
    if prior.iter().any(|&v| !v.is_finite() || v < T::zero()) {
        return Err(Error::Validation("Tomo-Gravity prior must be finite and >= 0".into()));
    }
    let routing = operator.routing();
    let mut x = prior.clone();
    let skipped_links: Vec<usize> = (0..operator.links())
        .filter(|&m| {
            loads[m] > T::zero() && routing.link_ods(m).iter().all(|&n| x[n] == T::zero())
        })
        .collect();
    let active: Vec<usize> = (0..operator.links())
        .filter(|m| skipped_links.binary_search(m).is_err())
        .collect();
    let scale = T::one() + loads.amax();
    let mismatch_of = |x: &DMatrix<T>| {
        active.iter().fold(T::zero(), |acc, &m| {
            let modeled = routing.link_ods(m).iter().fold(T::zero(), |a, &n| a + x[n]);
            acc.max((modeled - loads[m]).abs())
        }) / scale
    };

    let mut mismatch = mismatch_of(&x);
    let mut iterations = 0;
    while mismatch >= tol && iterations < iters {
        for &m in &active {
            let ods = routing.link_ods(m);
            let modeled = ods.iter().fold(T::zero(), |a, &n| a + x[n]);
            if modeled > T::zero() {
                let ratio = loads[m] / modeled;
                for &n in ods {
                    x[n] *= ratio;
                }
            }
        }
        iterations += 1;
        mismatch = mismatch_of(&x);
    }
    Ok(TomoGravityOutcome {
        estimate: x,
        iterations,
        mismatch,
        converged: mismatch < tol,
        skipped_links,
    })
}

/// Which reference estimator [`recover_baseline`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Gravity,
    TomoGravity,
}

/// Per-interval bookkeeping of [`recover_baseline`].
#[derive(Debug, Clone)]
pub struct BaselineInterval<T: Real> {
    /// Scaling sweeps; always 0 for plain Gravity.
    pub iterations: usize,
    pub converged: bool,
    pub mismatch: T,
    pub elapsed: Duration,
}

/// Runs a baseline on every interval. Masked OD pairs are zeroed in the
/// Gravity estimate, which Tomo-Gravity then keeps at zero.
pub fn recover_baseline<T: Real>(
    instance: &TomographyInstance<T>,
    method: Baseline,
) -> Result<(TrafficTensor<T>, Vec<BaselineInterval<T>>)> {
    let op = RoutingOperator::new(instance.routing().clone())?;
    let mut slices = Vec::with_capacity(instance.intervals());
    let mut info = Vec::with_capacity(instance.intervals());
    for k in 0..instance.intervals() {
        let start = Instant::now();
        let loads = DVector::from_iterator(
            instance.links(),
            instance.link_loads().column(k).iter().copied(),
        );
        let mask = instance.mask().interval(k);
        let mut x = gravity_estimate(&loads, &op);
        for (n, v) in x.iter_mut().enumerate() {
            if mask.contains_od(n) {
                *v = T::zero();
            }
        }
        let mut entry = BaselineInterval {
            iterations: 0,
            converged: true,
            mismatch: T::zero(),
            elapsed: Duration::ZERO,
        };
        if method == Baseline::TomoGravity {
            let out = tomo_gravity(&loads, &op, &x, TOMO_GRAVITY_ITERS, lit(TOMO_GRAVITY_TOL))?;
            entry.iterations = out.iterations;
            entry.converged = out.converged;
            entry.mismatch = out.mismatch;
            x = out.estimate;
        }
        entry.elapsed = start.elapsed();
        slices.push(x);
        info.push(entry);
    }
    Ok((TrafficTensor::new(instance.nodes(), slices)?, info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_store::RoutingMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_loads_give_zero() {
        let op = RoutingOperator::<f64>::new(RoutingMatrix::identity(3)).unwrap();
        assert_eq!(gravity_estimate(&DVector::zeros(9), &op), DMatrix::zeros(3, 3));
    }

    #[test]
    fn estimate_from_totals() {
        let prior = GravityPrior::<f64>::balanced(
            DVector::from_vec(vec![3.0, 1.0]),
            DVector::from_vec(vec![2.0, 2.0]),
        );
        assert_eq!(prior.total, 4.0);
        let expect = DMatrix::from_row_slice(2, 2, &[1.5, 1.5, 0.5, 0.5]);
        assert!((prior.estimate() - expect).norm() < 1e-15);
    }

    #[test]
    fn balancing_matches_sums() {
        let prior = GravityPrior::<f64>::balanced(
            DVector::from_vec(vec![3.0, 1.0]),
            DVector::from_vec(vec![1.0, 1.0, 3.0]),
        );
        assert!((prior.out_totals.sum() - prior.in_totals.sum()).abs() <= 1e-12 * prior.total);
    }

    #[test]
    fn recovers_rank_one_under_identity_routing() {
        let out = DVector::from_vec(vec![5.0, 2.0, 1.0]);
        let inn = DVector::from_vec(vec![1.0, 4.0, 3.0]);
        let truth = &out * inn.transpose() / out.sum();
        let op = RoutingOperator::new(RoutingMatrix::identity(3)).unwrap();
        let loads = DVector::from_column_slice(truth.as_slice());
        let est = gravity_estimate(&loads, &op);
        assert!((est - &truth).norm() <= 1e-6 * truth.norm());
    }

    #[test]
    fn gravity_is_rank_one_and_nonneg() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let routing = RoutingMatrix::from_entries(
            7,
            3,
            (0..7).flat_map(|m| [(m, m), (m, (m + 3) % 9)]).collect::<Vec<_>>(),
        )
        .unwrap();
        let op = RoutingOperator::<f64>::new(routing).unwrap();
        for _ in 0..5 {
            let loads = DVector::from_fn(7, |_, _| rng.random_range(0.0..5.0));
            let est = gravity_estimate(&loads, &op);
            assert!(est.iter().all(|&v| v >= 0.0));
            let sv = est.clone().singular_values();
            assert!(sv[1] <= 1e-9 * sv[0].max(1e-300), "{sv}");
        }
    }

    #[test]
    fn nnls_matches_unconstrained_when_positive() {
        let a = DMatrix::<f64>::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = nnls(&a, &b);
        assert!((x - DVector::from_vec(vec![1.0, 2.0])).norm() < 1e-10);
        // negative unconstrained optimum is clipped to the boundary
        let b = DVector::from_vec(vec![-1.0, 2.0, 1.0]);
        let x = nnls(&a, &b);
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 1.5).abs() < 1e-10);
    }

    #[test]
    fn tomo_gravity_fixed_point() {
        let op = RoutingOperator::new(RoutingMatrix::identity(2)).unwrap();
        let prior = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let loads = DVector::from_column_slice(prior.as_slice());
        let out = tomo_gravity(&loads, &op, &prior, 500, 1e-6).unwrap();
        assert_eq!(out.estimate, prior);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn tomo_gravity_single_link_scaling() {
        // S = 2, one link carrying OD 2 only; the other link carries OD 1
        let routing = RoutingMatrix::from_entries(2, 2, [(0, 1), (1, 0)]).unwrap();
        let op = RoutingOperator::new(routing).unwrap();
        let mut prior = DMatrix::zeros(2, 2);
        prior[(1, 0)] = 2.0;
        prior[(0, 0)] = 1.0;
        let loads = DVector::from_vec(vec![5.0, 1.0]);
        let out = tomo_gravity(&loads, &op, &prior, 500, 1e-6).unwrap();
        assert_eq!(out.estimate[(1, 0)], 5.0);
        assert!(out.converged);
    }

    #[test]
    fn tomo_gravity_reaches_tolerance_and_keeps_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let s = 3;
        let routing = RoutingMatrix::from_entries(
            6,
            s,
            (0..6).flat_map(|m| [(m, m), (m, m + 3)]).collect::<Vec<_>>(),
        )
        .unwrap();
        let op = RoutingOperator::<f64>::new(routing).unwrap();
        let truth = DMatrix::from_fn(s, s, |_, _| rng.random_range(0.5..3.0));
        let loads = op.forward_map(&truth).unwrap();
        let mut prior = DMatrix::from_element(s, s, 1.0);
        prior[(2, 2)] = 0.0;
        let out = tomo_gravity(&loads, &op, &prior, 500, 1e-6).unwrap();
        assert!(out.converged);
        assert_eq!(out.estimate[(2, 2)], 0.0);
        assert!(out.estimate.iter().all(|&v| v >= 0.0));
        let resid = (op.forward_map(&out.estimate).unwrap() - &loads).amax();
        assert!(resid / (1.0 + loads.amax()) <= 1e-6);
    }

    #[test]
    fn tomo_gravity_skips_unsupported_links() {
        let routing = RoutingMatrix::from_entries(2, 2, [(0, 1), (1, 0)]).unwrap();
        let op = RoutingOperator::new(routing).unwrap();
        let mut prior = DMatrix::zeros(2, 2);
        prior[(0, 0)] = 1.0;
        let loads = DVector::from_vec(vec![5.0, 2.0]);
        let out = tomo_gravity(&loads, &op, &prior, 50, 1e-6).unwrap();
        assert_eq!(out.skipped_links, vec![0]);
        assert_eq!(out.estimate[(0, 0)], 2.0);
        assert_eq!(out.estimate[(1, 0)], 0.0);
    }
}
