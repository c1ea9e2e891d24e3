//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slrr::{IntervalMask, IntervalProblem, RoutingMatrix, RoutingOperator, SolverState};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random binary routing where every link carries at least one OD pair.
pub fn random_routing(rng: &mut ChaCha8Rng, s: usize, m: usize) -> RoutingMatrix {
    let n = s * s;
    let mut entries = Vec::new();
    for link in 0..m {
        let forced = rng.random_range(0..n);
        for od in 0..n {
            if od == forced || rng.random_bool(0.3) {
                entries.push((link, od));
            }
        }
    }
    RoutingMatrix::from_entries(m, s, entries).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

pub fn random_mask(rng: &mut ChaCha8Rng, s: usize, p: f64) -> IntervalMask {
    IntervalMask::from_od_flags(s, (0..s * s).map(|_| rng.random_bool(p)).collect())
}

/// A random solver state with all blocks populated.
pub fn random_state(rng: &mut ChaCha8Rng, s: usize, m: usize) -> SolverState<f64> {
    let mut st = SolverState::zeros(s, m);
    st.u = random_matrix(rng, s, s, 1.0);
    st.q = random_vector(rng, m, 1.0);
    st.v = random_matrix(rng, s, s, 1.0);
    st.w = random_matrix(rng, s, s, 1.0);
    st.g = random_matrix(rng, s, s, 0.3);
    st.x = random_matrix(rng, s, s, 1.0);
    st
}

/// Dense `A*(q)`: entry `(i, j)` is `sum_m R[m, j S + i] q_m`.
pub fn dense_adjoint(r: &DMatrix<f64>, q: &DVector<f64>, s: usize) -> DMatrix<f64> {
    let v = r.transpose() * q;
    DMatrix::from_column_slice(s, s, v.as_slice())
}

/// Dense-matrix evaluation of the augmented Lagrangian
/// `-<Q,L> + |W - 2aA|^2/(4a) + <X,Gamma> + b/2 |Gamma|^2`.
pub struct DenseLagrangian {
    pub r: DMatrix<f64>,
    pub s: usize,
    pub loads: DVector<f64>,
    pub omega: DMatrix<f64>,
    pub prior: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl DenseLagrangian {
    pub fn new(problem: &IntervalProblem<'_, f64>, beta: f64) -> Self {
        let s = problem.nodes();
        let omega = DMatrix::from_fn(s, s, |i, j| {
            if problem.mask().contains(i, j) {
                1.0
            } else {
                0.0
            }
        });
        Self {
            r: problem.operator().routing().to_dense(),
            s,
            loads: problem.loads().clone(),
            omega,
            prior: problem.prior().clone(),
            alpha: problem.alpha(),
            beta,
        }
    }

    pub fn gamma(&self, st: &SolverState<f64>) -> DMatrix<f64> {
        st.u.component_mul(&self.omega) + &st.v + &st.w + dense_adjoint(&self.r, &st.q, self.s) - &st.g
    }

    pub fn value(&self, st: &SolverState<f64>) -> f64 {
        let gam = self.gamma(st);
        let shifted = &st.w - &self.prior * (2.0 * self.alpha);
        -st.q.dot(&self.loads)
            + shifted.norm_squared() / (4.0 * self.alpha)
            + st.x.dot(&gam)
            + 0.5 * self.beta * gam.norm_squared()
    }
}

/// Gradient and Hessian of a quadratic `f` on `R^n` recovered from function
/// values by polarization around zero (exact for quadratics up to rounding).
pub fn quadratic_model(f: &dyn Fn(&DVector<f64>) -> f64, n: usize) -> (DVector<f64>, DMatrix<f64>) {
    let f0 = f(&DVector::zeros(n));
    let e = |i: usize| {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v
    };
    let plus: Vec<f64> = (0..n).map(|i| f(&e(i))).collect();
    let minus: Vec<f64> = (0..n).map(|i| f(&(-e(i)))).collect();
    let grad = DVector::from_fn(n, |i, _| 0.5 * (plus[i] - minus[i]));
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        hess[(i, i)] = plus[i] + minus[i] - 2.0 * f0;
        for j in 0..i {
            let fij = f(&(e(i) + e(j)));
            let h = fij - plus[i] - plus[j] + f0;
            hess[(i, j)] = h;
            hess[(j, i)] = h;
        }
    }
    (grad, hess)
}

/// Minimizer of a strictly convex quadratic given by function values.
pub fn quadratic_argmin(f: &dyn Fn(&DVector<f64>) -> f64, n: usize) -> DVector<f64> {
    let (g, h) = quadratic_model(f, n);
    h.lu().solve(&(-g)).expect("nonsingular Hessian")
}

/// Spectral-ball projection through the Jordan-Wielandt matrix
/// `[[0, Z], [Z^T, 0]]`, whose eigenpairs `(+sigma, [u; v]/sqrt 2)` give the
/// singular triplets of `Z`.
pub fn jw_project(z: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = z.shape();
    let mut jw = DMatrix::zeros(r + c, r + c);
    jw.view_mut((0, r), (r, c)).copy_from(z);
    jw.view_mut((r, 0), (c, r)).copy_from(&z.transpose());
    let eig = SymmetricEigen::new(jw);
    let mut out = z.clone();
    for k in 0..r + c {
        let sigma = eig.eigenvalues[k];
        if sigma > 1.0 {
            let vec = eig.eigenvectors.column(k);
            let u = vec.rows(0, r) * 2f64.sqrt();
            let v = vec.rows(r, c) * 2f64.sqrt();
            out -= (u * v.transpose()) * (sigma - 1.0);
        }
    }
    out
}

pub fn identity_operator(s: usize) -> RoutingOperator<f64> {
    RoutingOperator::new(RoutingMatrix::identity(s)).unwrap()
}

/// Frobenius distance between each closed-form block update and its
/// independent oracle, on one random `S = 4`, `M = 6` state.
#[derive(Debug, Clone, Copy)]
pub struct UpdateErrors {
    pub u: f64,
    pub q: f64,
    pub v: f64,
    pub w: f64,
    pub g: f64,
    pub x: f64,
}

impl UpdateErrors {
    pub fn max(&self) -> f64 {
        [self.u, self.q, self.v, self.w, self.g, self.x]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn unvec(v: &DVector<f64>, s: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(s, s, v.as_slice())
}

pub fn update_errors(seed: u64) -> UpdateErrors {
    use slrr::solver::{
        multiplier_step, update_g, update_q, update_u, update_v, update_w, QStep,
    };

    let (s, m) = (4, 6);
    let n = s * s;
    let mut rng = rng(seed);
    let routing = random_routing(&mut rng, s, m);
    let op = RoutingOperator::new(routing).unwrap();
    let loads = random_vector(&mut rng, m, 3.0).map(f64::abs);
    let mask = random_mask(&mut rng, s, 0.4);
    let prior = random_matrix(&mut rng, s, s, 2.0).map(f64::abs);
    let alpha = rng.random_range(0.1..3.0);
    let beta = rng.random_range(0.2..5.0);
    let tau = rng.random_range(0.5..1.6);
    let problem = IntervalProblem::new(&op, loads, mask, prior, alpha).unwrap();
    let st = random_state(&mut rng, s, m);
    let lag = DenseLagrangian::new(&problem, beta);

    // U: Lagrangian plus beta/2 |(I - P_Omega)(U - U_old)|^2
    let u_oracle = quadratic_argmin(
        &|z| {
            let mut t = st.clone();
            t.u = unvec(z, s);
            let off = (&t.u - &st.u).component_mul(&lag.omega.map(|o| 1.0 - o));
            lag.value(&t) + 0.5 * beta * off.norm_squared()
        },
        n,
    );
    let u = (update_u(&st, &problem, beta) - unvec(&u_oracle, s)).norm();

    // Q: Lagrangian plus 1/2 |Q - anchor|^2 in the metric beta H, with
    // H = lambda I - R R^T (linearized) or delta I (factored)
    let anchor = random_vector(&mut rng, m, 1.0);
    let mut q = 0.0f64;
    for (mode, h) in [
        (
            QStep::Linearized,
            DMatrix::identity(m, m) * op.lambda_max() - &lag.r * lag.r.transpose(),
        ),
        (QStep::Factored, DMatrix::identity(m, m) * op.gram_shift()),
    ] {
        let oracle = quadratic_argmin(
            &|z| {
                let mut t = st.clone();
                t.q = z.clone();
                let d = z - &anchor;
                lag.value(&t) + 0.5 * beta * d.dot(&(&h * &d))
            },
            m,
        );
        q = q.max((update_q(&st, &problem, beta, &anchor, mode) - oracle).norm());
    }

    // V: separable; each entry minimizes a 1-D quadratic over [0, inf)
    let v_new = update_v(&st, &problem, beta);
    let mut v_err = 0.0f64;
    for k in 0..n {
        let f = |t: f64| {
            let mut c = st.clone();
            c.v[k] = t;
            lag.value(&c)
        };
        let (f0, fp, fm) = (f(0.0), f(1.0), f(-1.0));
        let (slope, curv) = (0.5 * (fp - fm), fp + fm - 2.0 * f0);
        let best = (-slope / curv).max(0.0);
        v_err = v_err.hypot(v_new[k] - best);
    }
    // off-diagonal curvature must vanish for the per-entry oracle to be exact
    let (_, hv) = quadratic_model(
        &|z| {
            let mut t = st.clone();
            t.v = unvec(z, s);
            lag.value(&t)
        },
        n,
    );
    let off_diag = (&hv - DMatrix::from_diagonal(&hv.diagonal())).amax();
    v_err = v_err.max(off_diag);

    // W: plain quadratic
    let w_oracle = quadratic_argmin(
        &|z| {
            let mut t = st.clone();
            t.w = unvec(z, s);
            lag.value(&t)
        },
        n,
    );
    let w = (update_w(&st, &problem, beta) - unvec(&w_oracle, s)).norm();

    // G: isotropic Hessian, so the constrained minimizer is the ball
    // projection of the unconstrained one
    let g_free = quadratic_argmin(
        &|z| {
            let mut t = st.clone();
            t.g = unvec(z, s);
            lag.value(&t)
        },
        n,
    );
    let g = (update_g(&st, &problem, beta).unwrap() - jw_project(&unvec(&g_free, s))).norm();

    let x_oracle = &st.x + lag.gamma(&st) * (tau * beta);
    let x = (multiplier_step(&st, &problem, beta, tau) - x_oracle).norm();

    UpdateErrors {
        u,
        q,
        v: v_err,
        w,
        g,
        x,
    }
}
