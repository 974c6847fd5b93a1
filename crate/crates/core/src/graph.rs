//! Signed graphs, clusterings and the objective arithmetic built on them.
//!
//! A [`SignedGraph`] stores, for every unordered vertex pair, a non-negative
//! positive weight and a non-negative negative weight. Ordinary signed graphs
//! carry at most one of the two per pair; released weighted graphs may carry
//! both (`allows_parallel`). Complete graphs use a dense triangular array,
//! everything else a sorted sparse map.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{contract, invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Pos,
    #[serde(rename = "-")]
    Neg,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Pos => 1.0,
            Sign::Neg => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Pos => Sign::Neg,
            Sign::Neg => Sign::Pos,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Pos => '+',
            Sign::Neg => '-',
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Weights carried by one unordered pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairWeight {
    pub pos: f64,
    pub neg: f64,
}

impl PairWeight {
    pub const EMPTY: PairWeight = PairWeight { pos: 0.0, neg: 0.0 };

    pub fn of(sign: Sign, weight: f64) -> PairWeight {
        match sign {
            Sign::Pos => PairWeight { pos: weight, neg: 0.0 },
            Sign::Neg => PairWeight { pos: 0.0, neg: weight },
        }
    }

    /// Signed net weight `pos - neg`.
    pub fn net(&self) -> f64 {
        self.pos - self.neg
    }

    pub fn is_empty(&self) -> bool {
        self.pos == 0.0 && self.neg == 0.0
    }

    pub fn total(&self) -> f64 {
        self.pos + self.neg
    }

    /// Cost this pair contributes to the disagreement.
    #[inline]
    pub fn cost(&self, same_cluster: bool) -> f64 {
        if same_cluster {
            self.neg
        } else {
            self.pos
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub sign: Sign,
    pub weight: f64,
}

impl Edge {
    pub fn new(u: usize, v: usize, sign: Sign, weight: f64) -> Edge {
        Edge { u, v, sign, weight }
    }

    pub fn unit(u: usize, v: usize, sign: Sign) -> Edge {
        Edge::new(u, v, sign, 1.0)
    }
}

/// Number of unordered pairs on `n` vertices.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Index of the pair `{u, v}` in row-major upper-triangular order.
#[inline]
pub fn pair_index(n: usize, u: usize, v: usize) -> usize {
    let (a, b) = if u < v { (u, v) } else { (v, u) };
    debug_assert!(a != b && b < n);
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

/// All unordered pairs `(u, v)`, `u < v`, in [`pair_index`] order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |u| (u + 1..n).map(move |v| (u, v)))
}

#[derive(Clone, Debug, PartialEq)]
enum Storage {
    Dense(Vec<PairWeight>),
    Sparse(BTreeMap<(usize, usize), PairWeight>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignedGraph {
    n: usize,
    storage: Storage,
    complete: bool,
    parallel_ok: bool,
    unweighted: bool,
}

impl SignedGraph {
    /// Builds a graph from an edge list. Zero-weight edges are dropped, so an
    /// absent pair and a weight-0 pair are the same thing.
    pub fn from_edges<I>(n: usize, edges: I, parallel_ok: bool) -> Result<SignedGraph>
    where
        I: IntoIterator<Item = Edge>,
    {
        let mut map: BTreeMap<(usize, usize), PairWeight> = BTreeMap::new();
        for e in edges {
            if e.u >= n || e.v >= n {
                return Err(contract(format!("edge ({}, {}) out of range for n = {n}", e.u, e.v)));
            }
            if e.u == e.v {
                return Err(contract(format!("self-loop at vertex {}", e.u)));
            }
            if !e.weight.is_finite() || e.weight < 0.0 {
                return Err(contract(format!(
                    "edge ({}, {}) has weight {}; weights must be finite and non-negative",
                    e.u, e.v, e.weight
                )));
            }
            if e.weight == 0.0 {
                continue;
            }
            let key = (e.u.min(e.v), e.u.max(e.v));
            let slot = map.entry(key).or_default();
            let (this, other) = match e.sign {
                Sign::Pos => (&mut slot.pos, slot.neg),
                Sign::Neg => (&mut slot.neg, slot.pos),
            };
            if *this != 0.0 {
                return Err(contract(format!("pair {key:?} listed twice with sign {}", e.sign)));
            }
            if other != 0.0 && !parallel_ok {
                return Err(contract(format!(
                    "pair {key:?} carries both signs but parallel edges are not allowed"
                )));
            }
            *this = e.weight;
        }
        Ok(Self::from_map(n, map, parallel_ok))
    }

    fn from_map(n: usize, map: BTreeMap<(usize, usize), PairWeight>, parallel_ok: bool) -> SignedGraph {
        let complete = n >= 2 && map.len() == pair_count(n);
        let unweighted = map
            .values()
            .all(|w| (w.pos == 0.0 || w.pos == 1.0) && (w.neg == 0.0 || w.neg == 1.0) && !(w.pos > 0.0 && w.neg > 0.0));
        let storage = if complete {
            Storage::Dense(map.into_values().collect())
        } else {
            Storage::Sparse(map)
        };
        SignedGraph { n, storage, complete, parallel_ok, unweighted }
    }

    /// Complete unweighted graph with the sign of `{u, v}` given by `sign(u, v)`
    /// (called with `u < v`).
    pub fn complete_unweighted(n: usize, mut sign: impl FnMut(usize, usize) -> Sign) -> SignedGraph {
        let dense: Vec<PairWeight> = pairs(n).map(|(u, v)| PairWeight::of(sign(u, v), 1.0)).collect();
        SignedGraph {
            n,
            complete: n >= 2,
            storage: Storage::Dense(dense),
            parallel_ok: false,
            unweighted: true,
        }
    }

    /// Graph from a dense per-pair weight array in [`pair_index`] order.
    pub fn from_pair_weights(n: usize, weights: Vec<PairWeight>, parallel_ok: bool) -> Result<SignedGraph> {
        if weights.len() != pair_count(n) {
            return Err(contract(format!(
                "expected {} pair weights for n = {n}, got {}",
                pair_count(n),
                weights.len()
            )));
        }
        let mut map = BTreeMap::new();
        for ((u, v), w) in pairs(n).zip(weights) {
            if !(w.pos.is_finite() && w.neg.is_finite()) || w.pos < 0.0 || w.neg < 0.0 {
                return Err(contract(format!("pair ({u}, {v}) has invalid weights {w:?}")));
            }
            if w.pos > 0.0 && w.neg > 0.0 && !parallel_ok {
                return Err(contract(format!("pair ({u}, {v}) carries both signs")));
            }
            if !w.is_empty() {
                map.insert((u, v), w);
            }
        }
        Ok(Self::from_map(n, map, parallel_ok))
    }

    pub fn empty(n: usize) -> SignedGraph {
        Self::from_map(n, BTreeMap::new(), false)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn allows_parallel(&self) -> bool {
        self.parallel_ok
    }

    /// Every present edge has weight exactly 1 and no pair carries both signs.
    pub fn is_unweighted(&self) -> bool {
        self.unweighted
    }

    pub fn pair(&self, u: usize, v: usize) -> PairWeight {
        if u == v || u >= self.n || v >= self.n {
            return PairWeight::EMPTY;
        }
        match &self.storage {
            Storage::Dense(d) => d[pair_index(self.n, u, v)],
            Storage::Sparse(m) => m.get(&(u.min(v), u.max(v))).copied().unwrap_or_default(),
        }
    }

    /// Calls `f(u, v, weights)` for every non-empty pair, `u < v`, in
    /// [`pair_index`] order.
    pub fn for_each_pair(&self, mut f: impl FnMut(usize, usize, PairWeight)) {
        match &self.storage {
            Storage::Dense(d) => {
                let mut i = 0;
                for u in 0..self.n {
                    for v in u + 1..self.n {
                        let w = d[i];
                        i += 1;
                        if !w.is_empty() {
                            f(u, v, w);
                        }
                    }
                }
            }
            Storage::Sparse(m) => {
                for (&(u, v), &w) in m {
                    f(u, v, w);
                }
            }
        }
    }

    /// Edge list; a pair carrying both signs yields two edges.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        self.for_each_pair(|u, v, w| {
            if w.pos > 0.0 {
                out.push(Edge::new(u, v, Sign::Pos, w.pos));
            }
            if w.neg > 0.0 {
                out.push(Edge::new(u, v, Sign::Neg, w.neg));
            }
        });
        out
    }

    pub fn edge_count(&self) -> usize {
        let mut m = 0;
        self.for_each_pair(|_, _, w| m += (w.pos > 0.0) as usize + (w.neg > 0.0) as usize);
        m
    }

    pub fn total_weight(&self) -> f64 {
        let mut t = 0.0;
        self.for_each_pair(|_, _, w| t += w.total());
        t
    }

    pub fn max_weight(&self) -> f64 {
        let mut m: f64 = 0.0;
        self.for_each_pair(|_, _, w| m = m.max(w.pos).max(w.neg));
        m
    }

    /// Dense copy of all pair weights in [`pair_index`] order.
    pub fn pair_weights(&self) -> Vec<PairWeight> {
        match &self.storage {
            Storage::Dense(d) => d.clone(),
            Storage::Sparse(m) => {
                let mut out = vec![PairWeight::EMPTY; pair_count(self.n)];
                for (&(u, v), &w) in m {
                    out[pair_index(self.n, u, v)] = w;
                }
                out
            }
        }
    }

    /// Weights of the positive edges as a channel (0 where absent).
    pub fn positive_channel(&self) -> WeightedChannel {
        self.channel(Sign::Pos)
    }

    pub fn negative_channel(&self) -> WeightedChannel {
        self.channel(Sign::Neg)
    }

    pub fn channel(&self, sign: Sign) -> WeightedChannel {
        let mut ch = WeightedChannel::zeros(self.n);
        self.for_each_pair(|u, v, w| {
            let x = match sign {
                Sign::Pos => w.pos,
                Sign::Neg => w.neg,
            };
            if x != 0.0 {
                ch.set(u, v, x);
            }
        });
        ch
    }

    /// The same graph with the sign of pair `{u, v}` flipped (weight kept).
    /// Used to build neighboring inputs.
    pub fn with_flipped(&self, u: usize, v: usize) -> Result<SignedGraph> {
        check_vertex(self.n, u)?;
        check_vertex(self.n, v)?;
        let mut w = self.pair_weights();
        let i = pair_index(self.n, u, v);
        w[i] = PairWeight { pos: w[i].neg, neg: w[i].pos };
        let g = SignedGraph::from_pair_weights(self.n, w, self.parallel_ok)?;
        Ok(g)
    }
}

fn check_vertex(n: usize, v: usize) -> Result<()> {
    if v >= n {
        Err(contract(format!("vertex {v} out of range for n = {n}")))
    } else {
        Ok(())
    }
}

/// A partition of `0..n`, stored in canonical form: labels form a restricted
/// growth string (the first vertex of each cluster, in vertex order, gets the
/// next unused id). Equal partitions therefore compare equal, and the derived
/// ordering is lexicographic on the canonical string.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Clustering {
    labels: Vec<usize>,
    k: usize,
}

impl Clustering {
    /// Canonicalizes an arbitrary labelling.
    pub fn from_labels(labels: &[usize]) -> Clustering {
        let mut map: BTreeMap<usize, usize> = BTreeMap::new();
        let mut out = Vec::with_capacity(labels.len());
        for &l in labels {
            let next = map.len();
            out.push(*map.entry(l).or_insert(next));
        }
        let k = map.len();
        Clustering { labels: out, k }
    }

    /// Builds a clustering from explicit clusters that must cover `0..n`
    /// exactly once.
    pub fn from_clusters(n: usize, clusters: &[Vec<usize>]) -> Result<Clustering> {
        let mut labels = vec![usize::MAX; n];
        for (id, c) in clusters.iter().enumerate() {
            for &v in c {
                check_vertex(n, v)?;
                if labels[v] != usize::MAX {
                    return Err(contract(format!("vertex {v} appears in two clusters")));
                }
                labels[v] = id;
            }
        }
        if let Some(v) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(contract(format!("vertex {v} is not assigned")));
        }
        Ok(Clustering::from_labels(&labels))
    }

    pub fn one_cluster(n: usize) -> Clustering {
        Clustering { labels: vec![0; n], k: usize::from(n > 0) }
    }

    pub fn singletons(n: usize) -> Clustering {
        Clustering { labels: (0..n).collect(), k: n }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn label(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn same_cluster(&self, u: usize, v: usize) -> bool {
        self.labels[u] == self.labels[v]
    }

    /// Clusters as sorted vertex lists, indexed by cluster id.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (v, &l) in self.labels.iter().enumerate() {
            out[l].push(v);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

impl fmt::Display for Clustering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .clusters()
            .iter()
            .map(|c| {
                let vs: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                format!("{{{}}}", vs.join(","))
            })
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<PrivacyParams> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(invalid(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(PrivacyParams { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<PrivacyParams> {
        Self::new(epsilon, 0.0)
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }

    pub fn require_pure(&self) -> Result<()> {
        if self.is_pure() {
            Ok(())
        } else {
            Err(invalid(format!("this mechanism is pure-DP; delta must be 0, got {}", self.delta)))
        }
    }

    /// Even split of the budget between two mechanisms run in sequence.
    pub fn halved(&self) -> PrivacyParams {
        PrivacyParams { epsilon: self.epsilon / 2.0, delta: self.delta / 2.0 }
    }
}

/// Real-valued weight per unordered pair; values may be negative. Stored
/// densely in [`pair_index`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedChannel {
    n: usize,
    weights: Vec<f64>,
}

impl WeightedChannel {
    pub fn zeros(n: usize) -> WeightedChannel {
        WeightedChannel { n, weights: vec![0.0; pair_count(n)] }
    }

    pub fn from_vec(n: usize, weights: Vec<f64>) -> Result<WeightedChannel> {
        if weights.len() != pair_count(n) {
            return Err(contract(format!(
                "channel for n = {n} needs {} entries, got {}",
                pair_count(n),
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(contract(format!("channel entry {i} is not finite")));
        }
        Ok(WeightedChannel { n, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.weights[pair_index(self.n, u, v)]
    }

    pub fn set(&mut self, u: usize, v: usize, w: f64) {
        let i = pair_index(self.n, u, v);
        self.weights[i] = w;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Entry-wise `self - other`.
    pub fn difference(&self, other: &WeightedChannel) -> Result<WeightedChannel> {
        if self.n != other.n {
            return Err(contract(format!("channel sizes differ: {} vs {}", self.n, other.n)));
        }
        let weights = self.weights.iter().zip(&other.weights).map(|(a, b)| a - b).collect();
        Ok(WeightedChannel { n: self.n, weights })
    }
}

fn check_same_n(c: &Clustering, g: &SignedGraph) -> Result<()> {
    if c.n() != g.n() {
        Err(contract(format!("clustering covers {} vertices but graph has {}", c.n(), g.n())))
    } else {
        Ok(())
    }
}

/// Total weight of positive edges cut by `c` plus negative edges kept inside
/// a cluster.
pub fn disagreement(c: &Clustering, g: &SignedGraph) -> Result<f64> {
    check_same_n(c, g)?;
    if g.is_unweighted() {
        // Integer counting keeps the unweighted identities bit-exact.
        let mut count: u64 = 0;
        g.for_each_pair(|u, v, w| {
            let same = c.same_cluster(u, v);
            count += u64::from((same && w.neg > 0.0) || (!same && w.pos > 0.0));
        });
        return Ok(count as f64);
    }
    let mut err = 0.0;
    g.for_each_pair(|u, v, w| err += w.cost(c.same_cluster(u, v)));
    Ok(err)
}

/// Total weight of positive edges inside clusters plus negative edges across.
pub fn agreement(c: &Clustering, g: &SignedGraph) -> Result<f64> {
    check_same_n(c, g)?;
    if g.is_unweighted() {
        let mut count: u64 = 0;
        g.for_each_pair(|u, v, w| {
            let same = c.same_cluster(u, v);
            count += u64::from((same && w.pos > 0.0) || (!same && w.neg > 0.0));
        });
        return Ok(count as f64);
    }
    let mut agr = 0.0;
    g.for_each_pair(|u, v, w| agr += w.cost(!c.same_cluster(u, v)));
    Ok(agr)
}

/// Weight of `sign`-edges over unordered pairs `{u, v}` with `u ∈ s, v ∈ t`
/// or `u ∈ t, v ∈ s`, each pair counted once. With `s == t` this is the total
/// `sign`-weight inside the set.
pub fn signed_cut_weight(g: &SignedGraph, s: &[usize], t: &[usize], sign: Sign) -> Result<f64> {
    let n = g.n();
    let mut in_s = vec![false; n];
    let mut in_t = vec![false; n];
    for &v in s {
        check_vertex(n, v)?;
        in_s[v] = true;
    }
    for &v in t {
        check_vertex(n, v)?;
        in_t[v] = true;
    }
    let mut total = 0.0;
    g.for_each_pair(|u, v, w| {
        if (in_s[u] && in_t[v]) || (in_t[u] && in_s[v]) {
            total += match sign {
                Sign::Pos => w.pos,
                Sign::Neg => w.neg,
            };
        }
    });
    Ok(total)
}

/// `Σ_e |σ_e w_e − σ'_e w'_e|`, summed per (pair, sign) so that graphs with
/// parallel edges are handled too. For graphs without parallel edges this is
/// the same as comparing signed net weights pair by pair.
pub fn neighbor_distance(g: &SignedGraph, h: &SignedGraph) -> Result<f64> {
    if g.n() != h.n() {
        return Err(contract(format!("vertex sets differ: {} vs {}", g.n(), h.n())));
    }
    let a = g.pair_weights();
    let b = h.pair_weights();
    Ok(a.iter().zip(&b).map(|(x, y)| (x.pos - y.pos).abs() + (x.neg - y.neg).abs()).sum())
}

/// Splits `g` into its positive and its negative edges, both on the full
/// vertex set.
pub fn split_signs(g: &SignedGraph) -> (SignedGraph, SignedGraph) {
    let mut plus = BTreeMap::new();
    let mut minus = BTreeMap::new();
    g.for_each_pair(|u, v, w| {
        if w.pos > 0.0 {
            plus.insert((u, v), PairWeight::of(Sign::Pos, w.pos));
        }
        if w.neg > 0.0 {
            minus.insert((u, v), PairWeight::of(Sign::Neg, w.neg));
        }
    });
    (SignedGraph::from_map(g.n(), plus, false), SignedGraph::from_map(g.n(), minus, false))
}
