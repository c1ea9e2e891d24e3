use nalgebra::DMatrix;

use super::{SparsityMask, TrafficTensor};
use crate::error::{Error, Result};
use crate::Real;

/// Masks the `floor(p N / 100)` OD pairs with the smallest total volume over
/// all intervals. Ties go to the lower OD index.
pub fn apply_sparsity_protocol<T: Real>(truth: &TrafficTensor<T>, percent: f64) -> Result<SparsityMask> {
    if !(0.0..100.0).contains(&percent) {
        return Err(Error::InvalidParams(format!(
            "sparsity percent {percent} outside [0, 100)"
        )));
    }
    let s = truth.nodes();
    let n = s * s;
    let count = (percent * n as f64 / 100.0 + 1e-9).floor() as usize;
    let totals = truth.od_totals();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps index order among equal totals
    order.sort_by(|&a, &b| totals[a].partial_cmp(&totals[b]).expect("finite totals"));
    SparsityMask::new(s, order[..count].iter().map(|&od| (od % s, od / s)), [])
}

/// Output of [`repair_anomalies`].
#[derive(Debug, Clone, PartialEq)]
pub struct Repaired<T: Real> {
    pub loads: DMatrix<T>,
    /// 0-based intervals that were flagged and replaced.
    pub flagged: Vec<usize>,
}

/// Replaces anomalous intervals of an `M x T` link-load matrix.
///
/// An interval is anomalous when its column norm exceeds
/// `threshold_factor` times the median column norm. Each run of anomalous
/// intervals between two clean intervals is linearly interpolated; runs
/// touching either end copy the nearest clean column.
pub fn repair_anomalies<T: Real>(loads: &DMatrix<T>, threshold_factor: T) -> Result<Repaired<T>> {
    let t = loads.ncols();
    if t < 3 {
        return Err(Error::Repair(format!("need at least 3 intervals, got {t}")));
    }
    if threshold_factor <= T::one() {
        return Err(Error::Repair(format!(
            "threshold factor {threshold_factor} must exceed 1"
        )));
    }
    let norms: Vec<T> = loads.column_iter().map(|c| c.norm()).collect();
    let mut sorted = norms.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite norms"));
    let median = if t % 2 == 1 {
        sorted[t / 2]
    } else {
        (sorted[t / 2 - 1] + sorted[t / 2]) * crate::lit(0.5)
    };
    let threshold = threshold_factor * median;
    let bad: Vec<bool> = norms.iter().map(|&v| v > threshold).collect();
    if bad.iter().all(|&b| b) {
        return Err(Error::Repair("every interval is anomalous".into()));
    }

    let mut repaired = loads.clone();
    let mut k = 0;
    while k < t {
        if !bad[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < t && bad[k] {
            k += 1;
        }
        let (left, right) = (start.checked_sub(1), (k < t).then_some(k));
        for run in start..k {
            let col = match (left, right) {
                (Some(a), Some(b)) => {
                    let w: T = crate::lit((run - a) as f64 / (b - a) as f64);
                    loads.column(a) * (T::one() - w) + loads.column(b) * w
                }
                (Some(a), None) => loads.column(a).into_owned(),
                (None, Some(b)) => loads.column(b).into_owned(),
                (None, None) => unreachable!("at least one clean interval"),
            };
            repaired.set_column(run, &col);
        }
    }
    let flagged = (0..t).filter(|&k| bad[k]).collect();
    Ok(Repaired {
        loads: repaired,
        flagged,
    })
}
