//! Coarsening of a clustering into few clusters, and the vertex-splitting
//! reduction that turns a double-edged graph into an ordinary signed graph.

use serde::{Deserialize, Serialize};

use crate::error::{contract, invalid, Result};
use crate::graph::{Clustering, Edge, Sign, SignedGraph};

/// Smallest `k` with `k⁴ ≥ n`, i.e. `⌈n^{1/4}⌉` without rounding trouble.
pub fn default_k_prime(n: usize) -> usize {
    let mut k = 1usize;
    while k.pow(4) < n {
        k += 1;
    }
    k
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarsenReport {
    pub k_prime: usize,
    pub k_before: usize,
    pub k_after: usize,
    /// Input cluster ids merged together, one list per bin.
    pub bins: Vec<Vec<usize>>,
    /// `Σ_bins C(bin_size, 2) · W`: an upper bound on the extra disagreement
    /// caused by the merges.
    pub merge_cost_bound: f64,
}

/// Keeps clusters of size at least `n / k'` and packs the smaller ones
/// first-fit-decreasing into bins holding at most `2n / k'` vertices, each bin
/// becoming one cluster. Inputs with at most `k'` clusters come back as is.
///
/// There are at most `k'` large clusters. First fit leaves at most one bin
/// half full or less, so there are at most `k' + 1` bins and the result has
/// at most `2k' + 1` clusters.
pub fn coarsen(c: &Clustering, n: usize, k_prime: usize, w_max: f64) -> Result<(Clustering, CoarsenReport)> {
    if k_prime == 0 {
        return Err(invalid("k' must be at least 1"));
    }
    if c.n() != n {
        return Err(contract(format!("clustering covers {} vertices, expected {n}", c.n())));
    }
    if !(w_max.is_finite() && w_max >= 0.0) {
        return Err(invalid(format!("max edge weight must be finite and non-negative, got {w_max}")));
    }
    let k_before = c.k();
    if k_before <= k_prime {
        let report = CoarsenReport { k_prime, k_before, k_after: k_before, bins: Vec::new(), merge_cost_bound: 0.0 };
        return Ok((c.clone(), report));
    }
    let sizes = c.sizes();
    // integer forms of size >= n/k' and load <= 2n/k'
    let is_large = |s: usize| s * k_prime >= n;
    let fits = |load: usize| load * k_prime <= 2 * n;
    let mut small: Vec<usize> = (0..k_before).filter(|&id| !is_large(sizes[id])).collect();
    small.sort_by_key(|&id| (std::cmp::Reverse(sizes[id]), id));
    let mut bins: Vec<Vec<usize>> = Vec::new();
    let mut loads: Vec<usize> = Vec::new();
    for id in small {
        match loads.iter().position(|&l| fits(l + sizes[id])) {
            Some(b) => {
                bins[b].push(id);
                loads[b] += sizes[id];
            }
            None => {
                bins.push(vec![id]);
                loads.push(sizes[id]);
            }
        }
    }
    let mut relabel: Vec<usize> = (0..k_before).collect();
    for bin in &bins {
        for &id in bin {
            relabel[id] = bin[0];
        }
    }
    let labels: Vec<usize> = c.labels().iter().map(|&l| relabel[l]).collect();
    let out = Clustering::from_labels(&labels);
    let merge_cost_bound = loads.iter().map(|&s| (s * s.saturating_sub(1) / 2) as f64).sum::<f64>() * w_max;
    let report = CoarsenReport { k_prime, k_before, k_after: out.k(), bins, merge_cost_bound };
    Ok((out, report))
}

/// Pairing between a graph's vertices and their two copies in the split
/// graph: `v` becomes `v⁺ = 2v` and `v⁻ = 2v + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMap {
    pub n: usize,
}

impl SplitMap {
    pub fn plus(&self, v: usize) -> usize {
        2 * v
    }

    pub fn minus(&self, v: usize) -> usize {
        2 * v + 1
    }

    /// The clustering of the split graph that keeps each `v⁺, v⁻` together
    /// in the cluster of `v`.
    pub fn lift(&self, c: &Clustering) -> Result<Clustering> {
        if c.n() != self.n {
            return Err(contract(format!("clustering covers {} vertices, expected {}", c.n(), self.n)));
        }
        let labels: Vec<usize> = (0..2 * self.n).map(|x| c.label(x / 2)).collect();
        Ok(Clustering::from_labels(&labels))
    }
}

/// Weight of the coupling edges: one more than the total weight of `h`, so
/// breaking any coupling costs more than every other edge together.
pub fn coupling_weight(h: &SignedGraph) -> f64 {
    1.0 + h.total_weight()
}

/// Rewires positive edges between `+` copies and negative edges between `−`
/// copies, and ties each `v⁺` to `v⁻` with a positive edge of weight
/// [`coupling_weight`].
pub fn split_transform(h: &SignedGraph) -> Result<(SignedGraph, SplitMap)> {
    let n = h.n();
    let map = SplitMap { n };
    let m = coupling_weight(h);
    let mut edges: Vec<Edge> = (0..n).map(|v| Edge::new(map.plus(v), map.minus(v), Sign::Pos, m)).collect();
    h.for_each_pair(|u, v, w| {
        if w.pos > 0.0 {
            edges.push(Edge::new(map.plus(u), map.plus(v), Sign::Pos, w.pos));
        }
        if w.neg > 0.0 {
            edges.push(Edge::new(map.minus(u), map.minus(v), Sign::Neg, w.neg));
        }
    });
    let g = SignedGraph::from_edges(2 * n, edges, false)?;
    Ok((g, map))
}

/// Maps a clustering of the split graph back: `v` joins the cluster of `v⁺`,
/// and when `v⁻` sits elsewhere the two clusters are merged.
pub fn unsplit(c: &Clustering, map: &SplitMap) -> Result<Clustering> {
    if c.n() != 2 * map.n {
        return Err(contract(format!("clustering covers {} vertices, split graph has {}", c.n(), 2 * map.n)));
    }
    let mut parent: Vec<usize> = (0..c.k()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for v in 0..map.n {
        let a = find(&mut parent, c.label(map.plus(v)));
        let b = find(&mut parent, c.label(map.minus(v)));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let labels: Vec<usize> = (0..map.n).map(|v| find(&mut parent, c.label(map.plus(v)))).collect();
    Ok(Clustering::from_labels(&labels))
}
