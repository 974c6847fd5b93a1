//! Non-private correlation-clustering solvers: an exact branch-and-bound
//! oracle over restricted growth strings, randomized pivot, and local search.
//!
//! For every pair, `cost(same) + cost(split)` equals the pair's total weight,
//! so `agr = total − err` and both objectives share their optimizers. The
//! objective therefore only changes how results are reported.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{agreement, disagreement, Clustering, SignedGraph};
use crate::rng::stream;

/// Default vertex limit of the exact oracle (Bell(12) ≈ 4.2M partitions).
pub const EXACT_MAX_N: usize = 12;

/// Ceiling for a raised `exact_limit`. Branch and bound stays fast above the
/// default only on graphs where it prunes well, such as split graphs whose
/// coupling edges rule out most partitions.
pub const EXACT_HARD_MAX_N: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    MinDis,
    MaxAgr,
}

impl Objective {
    /// Objective value of `c` on `g`.
    pub fn value(self, c: &Clustering, g: &SignedGraph) -> Result<f64> {
        match self {
            Objective::MinDis => disagreement(c, g),
            Objective::MaxAgr => agreement(c, g),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub objective: Objective,
    pub max_clusters: Option<usize>,
    pub seed: u64,
    pub max_passes: usize,
    pub restarts: usize,
    /// The exact oracle refuses larger graphs, and `solve` dispatches to it
    /// up to this many vertices.
    pub exact_limit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            objective: Objective::MinDis,
            max_clusters: None,
            seed: 0,
            max_passes: 50,
            restarts: 8,
            exact_limit: EXACT_MAX_N,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_clusters == Some(0) {
            return Err(invalid("max_clusters must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(invalid("restarts must be at least 1"));
        }
        if self.exact_limit > EXACT_HARD_MAX_N {
            return Err(invalid(format!("exact_limit may not exceed {EXACT_HARD_MAX_N}")));
        }
        Ok(())
    }
}

/// Dense form of the disagreement objective: `err(C) = base + Σ d(u, v)`
/// over pairs inside a cluster, with `d = neg − pos` and `base = Σ pos`.
pub(crate) struct CostMatrix {
    n: usize,
    d: Vec<f64>,
    base: f64,
}

impl CostMatrix {
    pub(crate) fn new(g: &SignedGraph) -> CostMatrix {
        let n = g.n();
        let mut d = vec![0.0; n * n];
        let mut base = 0.0;
        g.for_each_pair(|u, v, w| {
            d[u * n + v] = w.neg - w.pos;
            d[v * n + u] = w.neg - w.pos;
            base += w.pos;
        });
        CostMatrix { n, d, base }
    }

    #[inline]
    pub(crate) fn d(&self, u: usize, v: usize) -> f64 {
        self.d[u * self.n + v]
    }

    pub(crate) fn base(&self) -> f64 {
        self.base
    }

    pub(crate) fn err_of_labels(&self, labels: &[usize]) -> f64 {
        let mut err = self.base;
        for v in 0..self.n {
            for u in 0..v {
                if labels[u] == labels[v] {
                    err += self.d(u, v);
                }
            }
        }
        err
    }
}

fn tolerance(g: &SignedGraph) -> f64 {
    1e-9 * (1.0 + g.total_weight())
}

/// Globally optimal clustering by depth-first branch and bound over
/// restricted growth strings. Among optima the lexicographically smallest
/// string wins, because the search visits strings in that order and only
/// replaces the incumbent on strict improvement.
pub fn solve_exact(g: &SignedGraph, cfg: &SolverConfig) -> Result<Clustering> {
    cfg.validate()?;
    let n = g.n();
    if n > cfg.exact_limit {
        return Err(Error::Refusal(format!(
            "exact solver enumerates all partitions and is limited to n <= {}, got n = {n}",
            cfg.exact_limit
        )));
    }
    if n == 0 {
        return Ok(Clustering::from_labels(&[]));
    }
    let m = CostMatrix::new(g);
    // rest[i]: lower bound on the contribution of all pairs (u, v) with v >= i
    let mut rest = vec![0.0; n + 1];
    for v in (0..n).rev() {
        let row: f64 = (0..v).map(|u| m.d(u, v).min(0.0)).sum();
        rest[v] = rest[v + 1] + row;
    }
    let cap = cfg.max_clusters.unwrap_or(n).min(n);
    let mut search = Search {
        m: &m,
        rest,
        cap,
        tol: tolerance(g),
        labels: vec![0; n],
        best: f64::INFINITY,
        best_labels: vec![0; n],
    };
    search.dfs(1, 1, m.base());
    Ok(Clustering::from_labels(&search.best_labels))
}

struct Search<'a> {
    m: &'a CostMatrix,
    rest: Vec<f64>,
    cap: usize,
    tol: f64,
    labels: Vec<usize>,
    best: f64,
    best_labels: Vec<usize>,
}

impl Search<'_> {
    fn dfs(&mut self, i: usize, blocks: usize, partial: f64) {
        let n = self.labels.len();
        if i == n {
            if partial < self.best - self.tol {
                self.best = partial;
                self.best_labels.copy_from_slice(&self.labels);
            }
            return;
        }
        if partial + self.rest[i] > self.best + self.tol {
            return;
        }
        let top = blocks.min(self.cap - 1);
        for c in 0..=top {
            let mut add = 0.0;
            for u in 0..i {
                if self.labels[u] == c {
                    add += self.m.d(u, i);
                }
            }
            self.labels[i] = c;
            self.dfs(i + 1, blocks.max(c + 1), partial + add);
        }
    }
}

/// KwikCluster: repeatedly pick a uniformly random remaining vertex as pivot
/// and cluster it with its remaining positive neighbours. A pair counts as
/// positive when its net weight `pos − neg` is strictly positive.
pub fn pivot_kwikcluster<R: Rng + ?Sized>(g: &SignedGraph, rng: &mut R) -> Clustering {
    let n = g.n();
    let mut positive = vec![false; n * n];
    g.for_each_pair(|u, v, w| {
        if w.net() > 0.0 {
            positive[u * n + v] = true;
            positive[v * n + u] = true;
        }
    });
    // A uniform permutation picks each next pivot uniformly among the
    // vertices that are still unclustered.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    for &p in &order {
        if labels[p] != usize::MAX {
            continue;
        }
        labels[p] = next;
        for v in 0..n {
            if labels[v] == usize::MAX && positive[p * n + v] {
                labels[v] = next;
            }
        }
        next += 1;
    }
    Clustering::from_labels(&labels)
}

/// Outcome of [`local_search_traced`]: the final clustering and the
/// disagreement after every pass (first entry is the start).
#[derive(Clone, Debug)]
pub struct LocalSearchTrace {
    pub clustering: Clustering,
    pub errors: Vec<f64>,
}

/// Single-vertex-move local search. Each pass visits the vertices in order
/// and moves each to its best cluster (an existing one or a new singleton)
/// when that strictly lowers the disagreement.
pub fn local_search(g: &SignedGraph, start: &Clustering, cfg: &SolverConfig) -> Result<Clustering> {
    local_search_traced(g, start, cfg).map(|t| t.clustering)
}

pub fn local_search_traced(g: &SignedGraph, start: &Clustering, cfg: &SolverConfig) -> Result<LocalSearchTrace> {
    cfg.validate()?;
    let m = CostMatrix::new(g);
    let errors = vec![disagreement(start, g)?];
    Ok(local_search_dense(&m, start, cfg, tolerance(g), errors))
}

fn local_search_dense(
    m: &CostMatrix,
    start: &Clustering,
    cfg: &SolverConfig,
    tol: f64,
    mut errors: Vec<f64>,
) -> LocalSearchTrace {
    let n = m.n;
    let mut labels = start.labels().to_vec();
    let mut sizes = vec![0usize; n];
    for &l in &labels {
        sizes[l] += 1;
    }
    let mut nonempty = start.k();
    let cap = cfg.max_clusters.unwrap_or(n);
    // s[v * n + c] = Σ_{u in cluster c, u != v} d(u, v)
    let mut s = vec![0.0; n * n];
    for v in 0..n {
        for u in 0..n {
            if u != v {
                s[v * n + labels[u]] += m.d(u, v);
            }
        }
    }
    for _ in 0..cfg.max_passes {
        let mut moved = false;
        for v in 0..n {
            let a = labels[v];
            let here = s[v * n + a];
            let mut best_delta = 0.0;
            let mut best_target = None;
            for c in 0..n {
                if c != a && sizes[c] > 0 {
                    let delta = s[v * n + c] - here;
                    if delta < best_delta - tol {
                        best_delta = delta;
                        best_target = Some(c);
                    }
                }
            }
            if sizes[a] > 1 && nonempty < cap && -here < best_delta - tol {
                best_target = sizes.iter().position(|&z| z == 0);
            }
            let Some(b) = best_target else { continue };
            if sizes[b] == 0 {
                nonempty += 1;
            }
            sizes[a] -= 1;
            sizes[b] += 1;
            if sizes[a] == 0 {
                nonempty -= 1;
            }
            labels[v] = b;
            for u in 0..n {
                if u != v {
                    let duv = m.d(u, v);
                    s[u * n + a] -= duv;
                    s[u * n + b] += duv;
                }
            }
            moved = true;
        }
        if !moved {
            break;
        }
        errors.push(m.err_of_labels(&labels));
    }
    LocalSearchTrace { clustering: Clustering::from_labels(&labels), errors }
}

/// Keeps the `k − 1` largest clusters and merges the rest into one, so the
/// result has at most `k` clusters.
pub fn cap_clusters(c: &Clustering, k: usize) -> Clustering {
    if c.k() <= k {
        return c.clone();
    }
    let sizes = c.sizes();
    let mut order: Vec<usize> = (0..c.k()).collect();
    order.sort_by_key(|&id| (std::cmp::Reverse(sizes[id]), id));
    let mut relabel = vec![k - 1; c.k()];
    for (rank, &id) in order.iter().take(k - 1).enumerate() {
        relabel[id] = rank;
    }
    let labels: Vec<usize> = c.labels().iter().map(|&l| relabel[l]).collect();
    Clustering::from_labels(&labels)
}

/// Dispatcher: the exact oracle for small graphs, otherwise the best of
/// `restarts` pivot + local-search runs. Restarts run in parallel on
/// independent streams; ties go to the canonically smallest clustering.
pub fn solve(g: &SignedGraph, cfg: &SolverConfig) -> Result<Clustering> {
    cfg.validate()?;
    let n = g.n();
    if n <= cfg.exact_limit {
        return solve_exact(g, cfg);
    }
    let m = CostMatrix::new(g);
    let tol = tolerance(g);
    let runs: Vec<(f64, Clustering)> = (0..cfg.restarts as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(cfg.seed, r);
            let mut start = pivot_kwikcluster(g, &mut rng);
            if let Some(k) = cfg.max_clusters {
                start = cap_clusters(&start, k);
            }
            let e0 = m.err_of_labels(start.labels());
            let out = local_search_dense(&m, &start, cfg, tol, vec![e0]).clustering;
            (m.err_of_labels(out.labels()), out)
        })
        .collect();
    let best = runs
        .into_iter()
        .min_by(|a, b| {
            if (a.0 - b.0).abs() <= tol {
                a.1.cmp(&b.1)
            } else {
                a.0.total_cmp(&b.0)
            }
        })
        .expect("at least one restart");
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, Sign};
    use crate::rng::seeded;

    fn random_graph(n: usize, seed: u64) -> SignedGraph {
        let mut rng = seeded(seed);
        SignedGraph::complete_unweighted(n, |_, _| if rng.gen_bool(0.5) { Sign::Pos } else { Sign::Neg })
    }

    fn brute_force(g: &SignedGraph, k: Option<usize>) -> (f64, Clustering) {
        let mut best = (f64::INFINITY, Clustering::singletons(g.n()));
        crate::partitions::for_each_partition(g.n(), k, |a, _| {
            let c = Clustering::from_labels(a);
            let e = disagreement(&c, g).unwrap();
            if e < best.0 {
                best = (e, c);
            }
        });
        best
    }

    #[test]
    fn triangle_optimum_is_one() {
        let g = SignedGraph::from_edges(
            3,
            [Edge::unit(0, 1, Sign::Pos), Edge::unit(0, 2, Sign::Pos), Edge::unit(1, 2, Sign::Neg)],
            false,
        )
        .unwrap();
        let c = solve_exact(&g, &SolverConfig::default()).unwrap();
        assert_eq!(disagreement(&c, &g).unwrap(), 1.0);
        // three optima tie at 1; the single cluster has the smallest string
        assert_eq!(c.labels(), &[0, 0, 0]);
    }

    #[test]
    fn all_positive_gives_one_cluster() {
        let g = SignedGraph::complete_unweighted(7, |_, _| Sign::Pos);
        let c = solve_exact(&g, &SolverConfig::default()).unwrap();
        assert_eq!(c.k(), 1);
        assert_eq!(disagreement(&c, &g).unwrap(), 0.0);
        let p = pivot_kwikcluster(&g, &mut seeded(3));
        assert_eq!(p.k(), 1);
    }

    #[test]
    fn path_with_middle_negative() {
        let g = SignedGraph::from_edges(
            4,
            [Edge::unit(0, 1, Sign::Pos), Edge::unit(1, 2, Sign::Neg), Edge::unit(2, 3, Sign::Pos)],
            false,
        )
        .unwrap();
        let c = solve_exact(&g, &SolverConfig::default()).unwrap();
        assert_eq!(disagreement(&c, &g).unwrap(), 0.0);
        assert!(c.same_cluster(0, 1) && c.same_cluster(2, 3) && !c.same_cluster(1, 2));
    }

    #[test]
    fn exact_matches_brute_force_with_and_without_cap() {
        for seed in 0..30 {
            let g = random_graph(7, seed);
            for k in [None, Some(1), Some(2), Some(3)] {
                let cfg = SolverConfig { max_clusters: k, ..Default::default() };
                let c = solve_exact(&g, &cfg).unwrap();
                let (best, first) = brute_force(&g, k);
                assert_eq!(disagreement(&c, &g).unwrap(), best);
                assert_eq!(c, first, "tie-break must pick the smallest string");
                assert!(c.k() <= k.unwrap_or(7));
            }
        }
    }

    #[test]
    fn exact_handles_weights_and_parallel_edges() {
        let mut rng = seeded(5);
        for _ in 0..20 {
            let mut edges = Vec::new();
            for u in 0..6 {
                for v in u + 1..6 {
                    if rng.gen_bool(0.6) {
                        edges.push(Edge::new(u, v, Sign::Pos, rng.gen_range(0.0..3.0)));
                    }
                    if rng.gen_bool(0.6) {
                        edges.push(Edge::new(u, v, Sign::Neg, rng.gen_range(0.0..3.0)));
                    }
                }
            }
            let g = SignedGraph::from_edges(6, edges, true).unwrap();
            let c = solve_exact(&g, &SolverConfig::default()).unwrap();
            let (best, _) = brute_force(&g, None);
            assert!((disagreement(&c, &g).unwrap() - best).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_refuses_large_graphs() {
        let g = random_graph(13, 1);
        let e = solve_exact(&g, &SolverConfig::default()).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn all_negative_pivot_gives_singletons() {
        let g = SignedGraph::complete_unweighted(9, |_, _| Sign::Neg);
        for seed in 0..10 {
            let c = pivot_kwikcluster(&g, &mut seeded(seed));
            assert_eq!(c.k(), 9);
            assert_eq!(disagreement(&c, &g).unwrap(), 0.0);
        }
    }

    #[test]
    fn pivot_output_is_a_partition() {
        let mut rng = seeded(99);
        for i in 0..10_000 {
            let n = 1 + i % 15;
            let g = random_graph(n, i as u64);
            let c = pivot_kwikcluster(&g, &mut rng);
            assert_eq!(c.n(), n);
            let total: usize = c.sizes().iter().sum();
            assert_eq!(total, n);
            assert!(c.sizes().iter().all(|&s| s > 0));
        }
    }

    #[test]
    fn local_search_keeps_optimum_and_never_worsens() {
        let cfg = SolverConfig::default();
        for seed in 0..40 {
            let g = random_graph(9, seed);
            let opt = solve_exact(&g, &cfg).unwrap();
            let after = local_search(&g, &opt, &cfg).unwrap();
            assert_eq!(disagreement(&after, &g).unwrap(), disagreement(&opt, &g).unwrap());
            let start = pivot_kwikcluster(&g, &mut seeded(seed));
            let trace = local_search_traced(&g, &start, &cfg).unwrap();
            for w in trace.errors.windows(2) {
                assert!(w[1] <= w[0], "pass increased error: {:?}", trace.errors);
            }
            assert!(disagreement(&trace.clustering, &g).unwrap() >= disagreement(&opt, &g).unwrap());
        }
    }

    #[test]
    fn restricted_local_search_respects_cap() {
        for seed in 0..30 {
            let g = random_graph(20, seed);
            for k in 1..4 {
                let cfg = SolverConfig { max_clusters: Some(k), ..Default::default() };
                let start = cap_clusters(&pivot_kwikcluster(&g, &mut seeded(seed)), k);
                let c = local_search(&g, &start, &cfg).unwrap();
                assert!(c.k() <= k);
                let s = solve(&g, &cfg).unwrap();
                assert!(s.k() <= k);
            }
        }
    }

    #[test]
    fn single_cluster_cap() {
        let g = random_graph(30, 4);
        let cfg = SolverConfig { max_clusters: Some(1), ..Default::default() };
        let c = solve(&g, &cfg).unwrap();
        assert_eq!(c, Clustering::one_cluster(30));
        let neg = g.edges().iter().filter(|e| e.sign == Sign::Neg).count() as f64;
        assert_eq!(disagreement(&c, &g).unwrap(), neg);
    }

    #[test]
    fn small_graphs_dispatch_to_exact() {
        let cfg = SolverConfig::default();
        for seed in 0..10 {
            let g = random_graph(10, seed);
            assert_eq!(solve(&g, &cfg).unwrap(), solve_exact(&g, &cfg).unwrap());
        }
    }

    #[test]
    fn objectives_share_optimizers() {
        for seed in 0..100 {
            let g = random_graph(9, 1000 + seed);
            let a = solve(&g, &SolverConfig { objective: Objective::MinDis, ..Default::default() }).unwrap();
            let b = solve(&g, &SolverConfig { objective: Objective::MaxAgr, ..Default::default() }).unwrap();
            assert_eq!(a, b);
            let total = g.total_weight();
            assert_eq!(Objective::MaxAgr.value(&b, &g).unwrap(), total - Objective::MinDis.value(&a, &g).unwrap());
        }
    }

    #[test]
    fn heuristic_solve_is_deterministic() {
        let g = random_graph(40, 8);
        let cfg = SolverConfig { seed: 17, ..Default::default() };
        assert_eq!(solve(&g, &cfg).unwrap(), solve(&g, &cfg).unwrap());
    }

    #[test]
    fn heuristic_never_beats_oracle() {
        for seed in 0..50 {
            let g = random_graph(10, 500 + seed);
            let cfg = SolverConfig { exact_limit: 0, seed, ..Default::default() };
            let h = solve(&g, &cfg).unwrap();
            assert!(solve_exact(&g, &cfg).is_err());
            let opt = solve_exact(&g, &SolverConfig::default()).unwrap();
            assert!(disagreement(&h, &g).unwrap() >= disagreement(&opt, &g).unwrap());
        }
    }
}
