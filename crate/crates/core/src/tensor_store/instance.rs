use nalgebra::DMatrix;

use super::{RoutingMatrix, SparsityMask};
use crate::error::{Error, Result};
use crate::Real;

/// `S x S x T` nonnegative traffic volumes, one matrix per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficTensor<T: Real> {
    nodes: usize,
    slices: Vec<DMatrix<T>>,
}

impl<T: Real> TrafficTensor<T> {
    pub fn new(nodes: usize, slices: Vec<DMatrix<T>>) -> Result<Self> {
        for (k, slice) in slices.iter().enumerate() {
            if slice.shape() != (nodes, nodes) {
                return Err(Error::Dimension(format!(
                    "slice {} is {}x{}, expected {nodes}x{nodes}",
                    k + 1,
                    slice.nrows(),
                    slice.ncols()
                )));
            }
            if let Some(v) = slice.iter().find(|v| !v.is_finite() || **v < T::zero()) {
                return Err(Error::Validation(format!(
                    "slice {} holds invalid volume {v}",
                    k + 1
                )));
            }
        }
        Ok(Self { nodes, slices })
    }

    pub fn zeros(nodes: usize, intervals: usize) -> Self {
        Self {
            nodes,
            slices: vec![DMatrix::zeros(nodes, nodes); intervals],
        }
    }

    /// Builds a tensor from an `N x T` matrix whose row `n` is OD index `n`
    /// under column stacking.
    pub fn from_od_matrix(nodes: usize, od: &DMatrix<T>) -> Result<Self> {
        if od.nrows() != nodes * nodes {
            return Err(Error::Dimension(format!(
                "{} OD rows, expected {}",
                od.nrows(),
                nodes * nodes
            )));
        }
        let slices = od
            .column_iter()
            .map(|col| DMatrix::from_column_slice(nodes, nodes, col.as_slice()))
            .collect();
        Self::new(nodes, slices)
    }

    /// `N x T` matrix with one column-stacked slice per column.
    pub fn to_od_matrix(&self) -> DMatrix<T> {
        let n = self.nodes * self.nodes;
        let mut od = DMatrix::zeros(n, self.slices.len());
        for (k, slice) in self.slices.iter().enumerate() {
            od.column_mut(k).copy_from_slice(slice.as_slice());
        }
        od
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn intervals(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, k: usize) -> &DMatrix<T> {
        &self.slices[k]
    }

    pub fn slices(&self) -> &[DMatrix<T>] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<DMatrix<T>> {
        self.slices
    }

    /// Sets every masked entry to zero.
    pub fn apply_mask(&mut self, mask: &SparsityMask) {
        for (k, slice) in self.slices.iter_mut().enumerate() {
            let view = mask.interval(k);
            for (v, &z) in slice.iter_mut().zip(view.flags()) {
                if z {
                    *v = T::zero();
                }
            }
        }
    }

    /// Total volume per 0-based OD index over all intervals.
    pub fn od_totals(&self) -> Vec<T> {
        let mut totals = vec![T::zero(); self.nodes * self.nodes];
        for slice in &self.slices {
            for (t, &v) in totals.iter_mut().zip(slice.iter()) {
                *t += v;
            }
        }
        totals
    }
}

/// A validated network tomography problem.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographyInstance<T: Real> {
    routing: RoutingMatrix,
    link_loads: DMatrix<T>,
    mask: SparsityMask,
    truth: Option<TrafficTensor<T>>,
}

impl<T: Real> TomographyInstance<T> {
    /// Validates and assembles an instance.
    ///
    /// Requires `S <= M + 1`. Over-complete routing (`M + 1 >= N`, e.g. the
    /// identity) is accepted, see [`Self::is_overdetermined`].
    pub fn new(
        routing: RoutingMatrix,
        link_loads: DMatrix<T>,
        mask: SparsityMask,
        truth: Option<TrafficTensor<T>>,
    ) -> Result<Self> {
        let (s, m) = (routing.nodes(), routing.links());
        if s > m + 1 {
            return Err(Error::Validation(format!(
                "scale relation violated: S = {s} > M + 1 = {}",
                m + 1
            )));
        }
        if link_loads.nrows() != m {
            return Err(Error::Dimension(format!(
                "link loads have {} rows, routing has {m} links",
                link_loads.nrows()
            )));
        }
        let t = link_loads.ncols();
        if t == 0 {
            return Err(Error::Dimension("no intervals".into()));
        }
        if let Some(((row, col), v)) = link_loads
            .iter()
            .enumerate()
            .map(|(idx, v)| ((idx % m, idx / m), v))
            .find(|(_, v)| !v.is_finite() || **v < T::zero())
        {
            return Err(Error::Validation(format!(
                "link {} interval {} has invalid load {v}",
                row + 1,
                col + 1
            )));
        }
        if mask.nodes() != s {
            return Err(Error::Dimension(format!(
                "mask is for {} nodes, routing for {s}",
                mask.nodes()
            )));
        }
        if let Some(k) = mask.max_interval().filter(|&k| k >= t) {
            return Err(Error::Range(format!(
                "mask references interval {} of {t}",
                k + 1
            )));
        }
        if let Some(truth) = &truth {
            if truth.nodes() != s || truth.intervals() != t {
                return Err(Error::Dimension(format!(
                    "truth is {}x{}x{}, expected {s}x{s}x{t}",
                    truth.nodes(),
                    truth.nodes(),
                    truth.intervals()
                )));
            }
            for (k, slice) in truth.slices().iter().enumerate() {
                let view = mask.interval(k);
                if let Some(n) = (0..s * s).find(|&n| view.contains_od(n) && slice[n] != T::zero()) {
                    return Err(Error::Validation(format!(
                        "truth entry ({}, {}, {}) is masked but nonzero",
                        n % s + 1,
                        n / s + 1,
                        k + 1
                    )));
                }
            }
        }
        Ok(Self {
            routing,
            link_loads,
            mask,
            truth,
        })
    }

    pub fn routing(&self) -> &RoutingMatrix {
        &self.routing
    }

    pub fn link_loads(&self) -> &DMatrix<T> {
        &self.link_loads
    }

    pub fn mask(&self) -> &SparsityMask {
        &self.mask
    }

    pub fn truth(&self) -> Option<&TrafficTensor<T>> {
        self.truth.as_ref()
    }

    pub fn nodes(&self) -> usize {
        self.routing.nodes()
    }

    pub fn links(&self) -> usize {
        self.routing.links()
    }

    pub fn od_pairs(&self) -> usize {
        self.routing.od_pairs()
    }

    pub fn intervals(&self) -> usize {
        self.link_loads.ncols()
    }

    /// True when `M + 1 >= N`, i.e. the strict scale relation does not hold
    /// because the links alone may pin down the traffic.
    pub fn is_overdetermined(&self) -> bool {
        self.links() + 1 >= self.od_pairs()
    }

    /// Same problem with the link loads replaced.
    pub fn with_link_loads(&self, link_loads: DMatrix<T>) -> Result<Self> {
        Self::new(
            self.routing.clone(),
            link_loads,
            self.mask.clone(),
            self.truth.clone(),
        )
    }

    /// Same problem with a different mask; truth entries newly masked are
    /// zeroed.
    pub fn with_mask(&self, mask: SparsityMask) -> Result<Self> {
        let truth = self.truth.clone().map(|mut t| {
            t.apply_mask(&mask);
            t
        });
        Self::new(self.routing.clone(), self.link_loads.clone(), mask, truth)
    }

    /// The instance observed only on the given links (0-based, in order).
    pub fn select_links(&self, keep: &[usize]) -> Result<Self> {
        let routing = self.routing.select_links(keep)?;
        let loads = self.link_loads.select_rows(keep.iter());
        Self::new(routing, loads, self.mask.clone(), self.truth.clone())
    }
}
