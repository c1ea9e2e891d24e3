//! Cross-validated choice of `(rho1, rho2, beta)` over held-out link rows,
//! and the NMAE accuracy metrics.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::solver::{recover_sequence, SolverParams};
use crate::tensor_store::{SparsityMask, TomographyInstance, TrafficTensor};
use crate::{lit, Real};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_TEST_RATIO: f64 = 0.02;
pub const DEFAULT_REPEATS: usize = 50;
pub const DEFAULT_CANDIDATES: usize = 50;
pub const RHO_RANGE: (f64, f64) = (1e-4, 1e2);
pub const BETA_RANGE: (f64, f64) = (1e-2, 1e2);

/// One hyperparameter triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<T: Real> {
    pub rho1: T,
    pub rho2: T,
    pub beta: T,
}

impl<T: Real> Candidate<T> {
    /// `base` with this candidate's weights and penalty.
    pub fn apply(&self, base: &SolverParams<T>) -> SolverParams<T> {
        SolverParams {
            rho1: self.rho1,
            rho2: self.rho2,
            beta: self.beta,
            ..*base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CvKind {
    KFold { k: usize },
    MonteCarlo { test_ratio: f64, repeats: usize },
}

impl Default for CvKind {
    fn default() -> Self {
        CvKind::KFold { k: DEFAULT_FOLDS }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan<T: Real> {
    pub kind: CvKind,
    pub seed: u64,
    pub candidates: Vec<Candidate<T>>,
}

impl<T: Real> CvPlan<T> {
    /// The held-out link groups of this plan for `links` links (0-based).
    pub fn test_sets(&self, links: usize) -> Result<Vec<Vec<usize>>> {
        match self.kind {
            CvKind::KFold { k } => kfold_split(links, k, self.seed),
            CvKind::MonteCarlo { test_ratio, repeats } => {
                monte_carlo_split(links, test_ratio, repeats, self.seed)
            }
        }
    }
}

/// Absolute test-load error of one fold and the test loads it is
/// normalized by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldScore<T: Real> {
    pub abs_error: T,
    pub denominator: T,
}

#[derive(Debug, Clone)]
pub struct CvResult<T: Real> {
    /// Every candidate with its `N_CV` (`+inf` when no fold could be scored).
    pub per_candidate: Vec<(Candidate<T>, T)>,
    pub best: Candidate<T>,
    pub best_score: T,
    /// Candidates x folds absolute errors; `None` for skipped folds.
    pub per_fold_errors: Vec<Vec<Option<T>>>,
}

/// Seeded random partition of `0..links` into `k` groups whose sizes differ
/// by at most one (the larger groups first). Each group is sorted.
pub fn kfold_split(links: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > links {
        return Err(Error::InvalidParams(format!(
            "fold count {k} must lie in [2, {links}]"
        )));
    }
    let mut perm: Vec<usize> = (0..links).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (links / k, links % k);
    let mut groups = Vec::with_capacity(k);
    let mut start = 0;
    for g in 0..k {
        let len = base + usize::from(g < extra);
        let mut group = perm[start..start + len].to_vec();
        group.sort_unstable();
        groups.push(group);
        start += len;
    }
    Ok(groups)
}

/// `repeats` seeded random test sets of `ceil(test_ratio * links)` links
/// (at least one, at most `links - 1`).
pub fn monte_carlo_split(
    links: usize,
    test_ratio: f64,
    repeats: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if !(test_ratio > 0.0 && test_ratio < 1.0) {
        return Err(Error::InvalidParams(format!(
            "test ratio {test_ratio} must lie in (0, 1)"
        )));
    }
    if repeats == 0 || links < 2 {
        return Err(Error::InvalidParams(
            "Monte-Carlo CV needs at least one repeat and two links".into(),
        ));
    }
    let size = ((test_ratio * links as f64).ceil() as usize).clamp(1, links - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..links).collect();
    Ok((0..repeats)
        .map(|_| {
            perm.shuffle(&mut rng);
            let mut set = perm[..size].to_vec();
            set.sort_unstable();
            set
        })
        .collect())
}

/// Trains on all links outside `test` and scores the predicted loads of
/// the `test` links over every interval.
pub fn cv_score<T: Real>(
    instance: &TomographyInstance<T>,
    params: &SolverParams<T>,
    period: Option<usize>,
    test: &[usize],
) -> Result<FoldScore<T>> {
    let m = instance.links();
    if test.is_empty() || test.len() >= m || test.iter().any(|&l| l >= m) {
        return Err(Error::InvalidParams(
            "test set must be a nonempty proper subset of the links".into(),
        ));
    }
    let train: Vec<usize> = (0..m).filter(|l| !test.contains(l)).collect();
    if instance.nodes() > train.len() + 1 {
        return Err(Error::FoldInfeasible(format!(
            "{} training links for {} nodes",
            train.len(),
            instance.nodes()
        )));
    }
    let reduced = instance.select_links(&train)?;
    let (estimate, _) = recover_sequence(&reduced, params, period)?;
    Ok(score_test_links(instance, &estimate, test))
}

fn score_test_links<T: Real>(
    instance: &TomographyInstance<T>,
    estimate: &TrafficTensor<T>,
    test: &[usize],
) -> FoldScore<T> {
    let routing = instance.routing();
    let loads = instance.link_loads();
    let mut abs_error = T::zero();
    let mut denominator = T::zero();
    for (k, slice) in estimate.slices().iter().enumerate() {
        for &l in test {
            let predicted = routing
                .link_ods(l)
                .iter()
                .fold(T::zero(), |acc, &n| acc + slice[n]);
            abs_error += (predicted - loads[(l, k)]).abs();
            denominator += loads[(l, k)];
        }
    }
    FoldScore {
        abs_error,
        denominator,
    }
}

/// Pooled `N_CV`: summed absolute test errors over summed test loads of the
/// scored folds. For a full K-fold partition the denominator is the sum of
/// all loads.
pub fn n_cv<T: Real>(folds: &[FoldScore<T>]) -> Result<T> {
    let (num, den) = folds.iter().fold((T::zero(), T::zero()), |(a, b), f| {
        (a + f.abs_error, b + f.denominator)
    });
    if den <= T::zero() {
        return Err(Error::UndefinedMetric("N_CV has a zero denominator".into()));
    }
    Ok(num / den)
}

/// Scores every candidate (in parallel) and picks the lowest `N_CV`,
/// breaking ties by candidate order. A candidate whose folds are all
/// infeasible or whose solver diverges scores `+inf`.
pub fn tune<T: Real>(
    instance: &TomographyInstance<T>,
    plan: &CvPlan<T>,
    base: &SolverParams<T>,
    period: Option<usize>,
) -> Result<CvResult<T>> {
    if plan.candidates.is_empty() {
        return Err(Error::InvalidParams("no CV candidates".into()));
    }
    let base = SolverParams {
        record_trace: false,
        ..*base
    };
    for c in &plan.candidates {
        c.apply(&base).validate()?;
    }
    let folds = plan.test_sets(instance.links())?;

    let scored: Vec<(T, Vec<Option<T>>)> = plan
        .candidates
        .par_iter()
        .map(|c| -> Result<(T, Vec<Option<T>>)> {
            let params = c.apply(&base);
            let mut kept = Vec::new();
            let mut row = Vec::with_capacity(folds.len());
            for fold in &folds {
                match cv_score(instance, &params, period, fold) {
                    Ok(score) => {
                        row.push(Some(score.abs_error));
                        kept.push(score);
                    }
                    Err(Error::FoldInfeasible(_)) => row.push(None),
                    Err(Error::Divergence { .. }) => {
                        return Ok((infinity(), vec![None; folds.len()]));
                    }
                    Err(e) => return Err(e),
                }
            }
            let score = if kept.is_empty() {
                infinity()
            } else {
                n_cv(&kept).unwrap_or_else(|_| infinity())
            };
            Ok((score, row))
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (idx, (score, _)) in scored.iter().enumerate() {
        if *score < scored[best].0 {
            best = idx;
        }
    }
    Ok(CvResult {
        per_candidate: plan
            .candidates
            .iter()
            .zip(&scored)
            .map(|(c, (s, _))| (*c, *s))
            .collect(),
        best: plan.candidates[best],
        best_score: scored[best].0,
        per_fold_errors: scored.into_iter().map(|(_, row)| row).collect(),
    })
}

fn infinity<T: Real>() -> T {
    lit::<T>(f64::INFINITY)
}

/// `count` candidates with `rho1, rho2` log-uniform on [`RHO_RANGE`] and
/// `beta` log-uniform on [`BETA_RANGE`].
pub fn generate_candidates<T: Real>(count: usize, seed: u64) -> Vec<Candidate<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |(lo, hi): (f64, f64)| -> T {
        lit(rng.random_range(lo.ln()..=hi.ln()).exp())
    };
    (0..count)
        .map(|_| Candidate {
            rho1: draw(RHO_RANGE),
            rho2: draw(RHO_RANGE),
            beta: draw(BETA_RANGE),
        })
        .collect()
}

/// Per-interval `(sum |est - truth|, sum truth)` over unmasked entries.
pub fn nmae_parts<T: Real>(
    estimate: &TrafficTensor<T>,
    truth: &TrafficTensor<T>,
    mask: &SparsityMask,
) -> Result<Vec<(T, T)>> {
    if estimate.nodes() != truth.nodes() || estimate.intervals() != truth.intervals() {
        return Err(Error::Dimension(format!(
            "estimate is {}x{}x{}, truth is {}x{}x{}",
            estimate.nodes(),
            estimate.nodes(),
            estimate.intervals(),
            truth.nodes(),
            truth.nodes(),
            truth.intervals()
        )));
    }
    if mask.nodes() != truth.nodes() {
        return Err(Error::Dimension("mask node count differs from truth".into()));
    }
    Ok(estimate
        .slices()
        .iter()
        .zip(truth.slices())
        .enumerate()
        .map(|(k, (est, tru))| slice_parts(est, tru, &mask.interval(k)))
        .collect())
}

fn slice_parts<T: Real>(
    est: &DMatrix<T>,
    tru: &DMatrix<T>,
    mask: &crate::operators::IntervalMask,
) -> (T, T) {
    est.iter()
        .zip(tru.iter())
        .enumerate()
        .filter(|(n, _)| !mask.contains_od(*n))
        .fold((T::zero(), T::zero()), |(num, den), (_, (&e, &t))| {
            (num + (e - t).abs(), den + t)
        })
}

/// `sum |est - truth| / sum truth` over entries outside the mask.
pub fn nmae<T: Real>(
    estimate: &TrafficTensor<T>,
    truth: &TrafficTensor<T>,
    mask: &SparsityMask,
) -> Result<T> {
    let (num, den) = nmae_parts(estimate, truth, mask)?
        .into_iter()
        .fold((T::zero(), T::zero()), |(a, b), (n, d)| (a + n, b + d));
    if den <= T::zero() {
        return Err(Error::UndefinedMetric(
            "truth has no traffic outside the mask".into(),
        ));
    }
    Ok(num / den)
}

/// NMAE of each interval; `None` where the interval's truth is zero.
pub fn per_interval_nmae<T: Real>(
    estimate: &TrafficTensor<T>,
    truth: &TrafficTensor<T>,
    mask: &SparsityMask,
) -> Result<Vec<Option<T>>> {
    Ok(nmae_parts(estimate, truth, mask)?
        .into_iter()
        .map(|(n, d)| (d > T::zero()).then(|| n / d))
        .collect())
}
