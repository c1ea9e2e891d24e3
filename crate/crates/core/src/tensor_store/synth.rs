use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};

use super::{apply_sparsity_protocol, RoutingMatrix, SparsityMask, TomographyInstance, TrafficTensor};
use crate::error::{Error, Result};
use crate::Real;

/// Knobs of [`synthesize_instance`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub nodes: usize,
    /// Average node degree; the topology gets about `avg_degree * S / 2`
    /// bidirectional links, each contributing two directed links.
    pub avg_degree: f64,
    pub intervals: usize,
    pub rank: usize,
    /// Fraction of OD pairs zeroed by the sparsity protocol.
    pub zero_fraction: f64,
    /// Relative magnitude of the multiplicative noise on link loads.
    pub noise_level: f64,
    pub seed: u64,
    /// Length of one cycle of the smooth traffic profile, in intervals.
    pub period: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            nodes: 6,
            avg_degree: 3.0,
            intervals: 24,
            rank: 2,
            zero_fraction: 0.0,
            noise_level: 0.0,
            seed: 0,
            period: 24,
        }
    }
}

/// Random connected graph: a random spanning tree plus random extra edges.
/// Edges are returned sorted as `(a, b)` with `a < b`.
fn random_topology(rng: &mut ChaCha8Rng, s: usize, edges: usize) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..s).collect();
    order.shuffle(rng);
    let mut set = BTreeSet::new();
    for idx in 1..s {
        let other = order[rng.random_range(0..idx)];
        let (a, b) = (order[idx].min(other), order[idx].max(other));
        set.insert((a, b));
    }
    let mut spare: Vec<(usize, usize)> = (0..s)
        .flat_map(|a| (a + 1..s).map(move |b| (a, b)))
        .filter(|e| !set.contains(e))
        .collect();
    spare.shuffle(rng);
    for e in spare.into_iter().take(edges.saturating_sub(set.len())) {
        set.insert(e);
    }
    set.into_iter().collect()
}

/// Hop-count shortest-path routing over directed links `a->b`, `b->a` per
/// edge (link ids in edge order). BFS visits neighbours in ascending node
/// order and keeps the first parent found, so ties go to lower indices.
fn shortest_path_routing(s: usize, edges: &[(usize, usize)]) -> Result<RoutingMatrix> {
    let mut adj = vec![Vec::new(); s];
    for (e, &(a, b)) in edges.iter().enumerate() {
        adj[a].push((b, 2 * e));
        adj[b].push((a, 2 * e + 1));
    }
    for nbrs in &mut adj {
        nbrs.sort_unstable();
    }
    let mut entries = Vec::new();
    for src in 0..s {
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; s];
        let mut seen = vec![false; s];
        seen[src] = true;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for &(v, link) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some((u, link));
                    queue.push_back(v);
                }
            }
        }
        for dst in (0..s).filter(|&d| d != src) {
            if !seen[dst] {
                return Err(Error::Generation("topology is disconnected".into()));
            }
            let od = dst * s + src;
            let mut at = dst;
            while let Some((prev, link)) = parent[at] {
                entries.push((link, od));
                at = prev;
            }
        }
    }
    RoutingMatrix::from_entries(2 * edges.len(), s, entries)
}

/// Generates a synthetic instance with ground truth.
///
/// Traffic in interval `k` is `sum_c w_c(k) p_c q_c^T` with lognormal
/// nonnegative factors and smooth periodic weights `w_c > 0`, so each slice
/// has rank at most `rank`. The smallest `zero_fraction` of OD pairs are
/// then zeroed and link loads are `R vec(X)` times `1 + noise * xi`.
pub fn synthesize_instance<T: Real>(cfg: &SynthConfig) -> Result<TomographyInstance<T>> {
    let s = cfg.nodes;
    if s < 2 {
        return Err(Error::InvalidParams(format!("need at least 2 nodes, got {s}")));
    }
    if !(0.0..1.0).contains(&cfg.zero_fraction) {
        return Err(Error::InvalidParams(format!(
            "zero fraction {} outside [0, 1)",
            cfg.zero_fraction
        )));
    }
    if cfg.rank == 0 || cfg.rank > s {
        return Err(Error::InvalidParams(format!(
            "rank {} outside 1..={s}",
            cfg.rank
        )));
    }
    if cfg.intervals == 0 || cfg.period == 0 {
        return Err(Error::InvalidParams("intervals and period must be positive".into()));
    }
    if !(cfg.noise_level >= 0.0 && cfg.avg_degree > 0.0) {
        return Err(Error::InvalidParams("noise must be >= 0 and degree > 0".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = s * s;
    // 2E + 1 < N keeps the routing strictly underdetermined
    let max_edges = ((n - 2) / 2).min(s * (s - 1) / 2);
    let mut edges_wanted = ((cfg.avg_degree * s as f64 / 2.0).round() as usize).clamp(s - 1, max_edges);
    let routing = loop {
        let edges = random_topology(&mut rng, s, edges_wanted);
        let routing = shortest_path_routing(s, &edges)?;
        if s <= routing.links() + 1 {
            break routing;
        }
        if edges_wanted >= max_edges {
            return Err(Error::Generation(format!(
                "cannot reach S <= M + 1 with {s} nodes"
            )));
        }
        edges_wanted += 1;
    };

    let factor = LogNormal::new(0.0, 0.75).expect("valid lognormal");
    let left: Vec<Vec<f64>> = (0..cfg.rank)
        .map(|_| (0..s).map(|_| factor.sample(&mut rng)).collect())
        .collect();
    let right: Vec<Vec<f64>> = (0..cfg.rank)
        .map(|_| (0..s).map(|_| factor.sample(&mut rng)).collect())
        .collect();
    let phases: Vec<f64> = (0..cfg.rank).map(|_| rng.random_range(0.0..1.0)).collect();
    let two_pi = 2.0 * std::f64::consts::PI;

    let slices = (0..cfg.intervals)
        .map(|k| {
            let weights: Vec<f64> = phases
                .iter()
                .map(|&ph| {
                    let x = k as f64 / cfg.period as f64 + ph;
                    1.0 + 0.5 * (two_pi * x).sin() + 0.15 * (2.0 * two_pi * x).cos()
                })
                .collect();
            DMatrix::from_fn(s, s, |i, j| {
                let v: f64 = (0..cfg.rank)
                    .map(|c| weights[c] * left[c][i] * right[c][j])
                    .sum();
                T::from_f64(v).expect("representable volume")
            })
        })
        .collect();
    let mut truth = TrafficTensor::new(s, slices)?;
    let mask = if cfg.zero_fraction > 0.0 {
        apply_sparsity_protocol(&truth, cfg.zero_fraction * 100.0)?
    } else {
        SparsityMask::empty(s)
    };
    truth.apply_mask(&mask);

    let mut loads = DMatrix::zeros(routing.links(), cfg.intervals);
    for (k, slice) in truth.slices().iter().enumerate() {
        let clean = routing.apply(slice.as_slice());
        for (m, v) in clean.into_iter().enumerate() {
            loads[(m, k)] = if cfg.noise_level > 0.0 {
                let xi: f64 = rng.sample(StandardNormal);
                let scale = (1.0 + cfg.noise_level * xi).max(0.0);
                v * T::from_f64(scale).expect("representable")
            } else {
                v
            };
        }
    }

    TomographyInstance::new(routing, loads, mask, Some(truth))
}
