use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::Real;

/// Binary `M x N` routing matrix stored as sparse adjacency lists.
///
/// Column `n` (0-based) is OD pair `(n % S, n / S)`, so block `R_j` is the
/// column range `j*S .. (j+1)*S`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingMatrix {
    nodes: usize,
    link_ods: Vec<Vec<usize>>,
    od_links: Vec<Vec<usize>>,
}

impl RoutingMatrix {
    /// Builds a routing matrix from 0-based `(link, od)` one-entries.
    pub fn from_entries<I>(links: usize, nodes: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let n = nodes * nodes;
        let mut link_ods = vec![Vec::new(); links];
        let mut od_links = vec![Vec::new(); n];
        for (m, od) in entries {
            if m >= links || od >= n {
                return Err(Error::Range(format!(
                    "routing entry ({}, {}) outside {links} x {n}",
                    m + 1,
                    od + 1
                )));
            }
            link_ods[m].push(od);
            od_links[od].push(m);
        }
        for (m, ods) in link_ods.iter_mut().enumerate() {
            ods.sort_unstable();
            if ods.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Validation(format!(
                    "duplicate routing entry on link {}",
                    m + 1
                )));
            }
        }
        for links in &mut od_links {
            links.sort_unstable();
        }
        let routing = Self {
            nodes,
            link_ods,
            od_links,
        };
        routing.validate()?;
        Ok(routing)
    }

    /// Builds a routing matrix from a dense matrix whose entries must be 0 or 1.
    pub fn from_dense<T: Real>(dense: &DMatrix<T>, nodes: usize) -> Result<Self> {
        if dense.ncols() != nodes * nodes {
            return Err(Error::Dimension(format!(
                "routing has {} columns, expected {}",
                dense.ncols(),
                nodes * nodes
            )));
        }
        let mut entries = Vec::new();
        for m in 0..dense.nrows() {
            for n in 0..dense.ncols() {
                let v = dense[(m, n)];
                if v == T::one() {
                    entries.push((m, n));
                } else if v != T::zero() {
                    return Err(Error::Validation(format!(
                        "routing entry ({}, {}) = {v} is not binary",
                        m + 1,
                        n + 1
                    )));
                }
            }
        }
        Self::from_entries(dense.nrows(), nodes, entries)
    }

    /// `N x N` identity routing: every OD pair is measured by its own link.
    pub fn identity(nodes: usize) -> Self {
        let n = nodes * nodes;
        Self::from_entries(n, nodes, (0..n).map(|k| (k, k))).expect("identity routing is valid")
    }

    fn validate(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(Error::Validation("routing matrix has no nodes".into()));
        }
        if let Some(m) = self.link_ods.iter().position(Vec::is_empty) {
            return Err(Error::Validation(format!(
                "link {} routes no OD pair",
                m + 1
            )));
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn links(&self) -> usize {
        self.link_ods.len()
    }

    pub fn od_pairs(&self) -> usize {
        self.nodes * self.nodes
    }

    /// Sorted 0-based OD indices carried by link `m`.
    pub fn link_ods(&self, m: usize) -> &[usize] {
        &self.link_ods[m]
    }

    /// Sorted 0-based links traversed by OD pair `n`.
    pub fn od_links(&self, n: usize) -> &[usize] {
        &self.od_links[n]
    }

    pub fn get(&self, m: usize, n: usize) -> bool {
        self.link_ods[m].binary_search(&n).is_ok()
    }

    pub fn nnz(&self) -> usize {
        self.link_ods.iter().map(Vec::len).sum()
    }

    /// All one-entries as 0-based `(link, od)` pairs, link-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.link_ods
            .iter()
            .enumerate()
            .flat_map(|(m, ods)| ods.iter().map(move |&n| (m, n)))
    }

    /// `R v` for a column-stacked vector `v` of length `N`.
    pub fn apply<T: Real>(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.od_pairs());
        self.link_ods
            .iter()
            .map(|ods| ods.iter().fold(T::zero(), |acc, &n| acc + v[n]))
            .collect()
    }

    pub fn to_dense<T: Real>(&self) -> DMatrix<T> {
        let mut dense = DMatrix::zeros(self.links(), self.od_pairs());
        for (m, n) in self.entries() {
            dense[(m, n)] = T::one();
        }
        dense
    }

    /// Block `R_j` (0-based `j`), the `M x S` column slice for destination `j`.
    pub fn block<T: Real>(&self, j: usize) -> DMatrix<T> {
        let s = self.nodes;
        let mut block = DMatrix::zeros(self.links(), s);
        for (m, ods) in self.link_ods.iter().enumerate() {
            for &n in ods.iter().filter(|&&n| n / s == j) {
                block[(m, n % s)] = T::one();
            }
        }
        block
    }

    /// Routing restricted to the given links, in the given order.
    pub fn select_links(&self, keep: &[usize]) -> Result<Self> {
        let entries = keep
            .iter()
            .enumerate()
            .flat_map(|(new, &old)| self.link_ods[old].iter().map(move |&n| (new, n)));
        Self::from_entries(keep.len(), self.nodes, entries.collect::<Vec<_>>())
    }
}
