//! Cut sums over vertex-set pairs and cut-distance estimation.
//!
//! For sets `S, T ⊆ V` the cut sum of a pair-indexed array `x` is
//! `Σ x_{uv}` over unordered pairs with `u ∈ S, v ∈ T` or `u ∈ T, v ∈ S`,
//! each pair counted once. `S` and `T` may overlap.

use rand::Rng;

use crate::error::{contract, invalid, Result};
use crate::graph::{pair_count, WeightedChannel};

const IN_S: u8 = 1;
const IN_T: u8 = 2;

/// Whether a pair whose endpoints have membership classes `a`, `b` is
/// counted.
#[inline]
fn counted(a: u8, b: u8) -> bool {
    (a & IN_S != 0 && b & IN_T != 0) || (a & IN_T != 0 && b & IN_S != 0)
}

/// Row offsets for triangular pair indexing: `index(u, v) = off[u] + v` for
/// `u < v`.
#[derive(Clone, Debug)]
pub struct PairIndexer {
    n: usize,
    off: Vec<isize>,
}

impl PairIndexer {
    pub fn new(n: usize) -> PairIndexer {
        let off = (0..n)
            .map(|u| (u * (2 * n - u - 1) / 2) as isize - u as isize - 1)
            .collect();
        PairIndexer { n, off }
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        debug_assert!(u < v && v < self.n);
        (self.off[u] + v as isize) as usize
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `off[u]` such that `index(u, v) = off[u] + v`; may be negative.
    #[inline]
    pub fn row_base(&self, u: usize) -> isize {
        self.off[u]
    }
}

/// A pair of vertex sets `(S, T)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SetPair {
    n: usize,
    // (vertex, class) for vertices in S ∪ T, ascending by vertex
    members: Vec<(u32, u8)>,
}

impl SetPair {
    pub fn new(n: usize, s: &[usize], t: &[usize]) -> Result<SetPair> {
        let mut class = vec![0u8; n];
        for &v in s {
            if v >= n {
                return Err(contract(format!("vertex {v} out of range for n = {n}")));
            }
            class[v] |= IN_S;
        }
        for &v in t {
            if v >= n {
                return Err(contract(format!("vertex {v} out of range for n = {n}")));
            }
            class[v] |= IN_T;
        }
        Ok(Self::from_classes(&class))
    }

    fn from_classes(class: &[u8]) -> SetPair {
        let members = class
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(v, &c)| (v as u32, c))
            .collect();
        SetPair { n: class.len(), members }
    }

    /// `({u}, {v})`: covers exactly the pair `{u, v}`.
    pub fn singleton(n: usize, u: usize, v: usize) -> SetPair {
        let mut class = vec![0u8; n];
        class[u] |= IN_S;
        class[v] |= IN_T;
        Self::from_classes(&class)
    }

    /// Every vertex joins `S` and `T` independently with probability 1/2.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SetPair {
        let class: Vec<u8> = (0..n).map(|_| rng.gen_range(0..4u8)).collect();
        Self::from_classes(&class)
    }

    /// `(S, V ∖ S)` for a uniformly random `S`.
    pub fn random_cut<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SetPair {
        let class: Vec<u8> = (0..n).map(|_| if rng.gen::<bool>() { IN_S } else { IN_T }).collect();
        Self::from_classes(&class)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> Vec<usize> {
        self.members.iter().filter(|m| m.1 & IN_S != 0).map(|m| m.0 as usize).collect()
    }

    pub fn t(&self) -> Vec<usize> {
        self.members.iter().filter(|m| m.1 & IN_T != 0).map(|m| m.0 as usize).collect()
    }

    fn classes(&self) -> Vec<u8> {
        let mut c = vec![0u8; self.n];
        for &(v, k) in &self.members {
            c[v as usize] = k;
        }
        c
    }

    pub fn covers(&self, u: usize, v: usize) -> bool {
        let find = |x: usize| {
            self.members
                .binary_search_by_key(&(x as u32), |m| m.0)
                .map(|i| self.members[i].1)
                .unwrap_or(0)
        };
        u != v && counted(find(u), find(v))
    }

    /// Calls `f(pair_index)` for every covered pair.
    #[inline]
    pub fn for_each_pair(&self, ix: &PairIndexer, mut f: impl FnMut(usize)) {
        let m = &self.members;
        for i in 0..m.len() {
            let (u, cu) = m[i];
            for &(v, cv) in &m[i + 1..] {
                if counted(cu, cv) {
                    f(ix.index(u as usize, v as usize));
                }
            }
        }
    }

    pub fn pair_count(&self) -> usize {
        let mut c = [0usize; 4];
        for &(_, k) in &self.members {
            c[k as usize] += 1;
        }
        let (s, t, b) = (c[1], c[2], c[3]);
        // S-only × T-only, S-only × both, T-only × both, both × both
        s * t + s * b + t * b + b * b.saturating_sub(1) / 2
    }

    pub fn sum(&self, ix: &PairIndexer, x: &[f64]) -> f64 {
        let mut total = 0.0;
        self.for_each_pair(ix, |i| total += x[i]);
        total
    }
}

/// Symmetric dense matrix view of a pair-indexed array, for row access.
struct RowMatrix {
    n: usize,
    m: Vec<f64>,
}

impl RowMatrix {
    fn new(n: usize, x: &[f64]) -> RowMatrix {
        let mut m = vec![0.0; n * n];
        let mut i = 0;
        for u in 0..n {
            for v in u + 1..n {
                m[u * n + v] = x[i];
                m[v * n + u] = x[i];
                i += 1;
            }
        }
        RowMatrix { n, m }
    }

    fn row(&self, u: usize) -> &[f64] {
        &self.m[u * self.n..(u + 1) * self.n]
    }
}

/// Local search over `(S, T)` that moves one vertex at a time between the
/// four membership classes, maximizing `direction * cut_sum`. Returns the
/// local optimum and its (signed) cut sum.
pub fn greedy_ascent(x: &[f64], n: usize, start: &SetPair, direction: f64, max_sweeps: usize) -> (SetPair, f64) {
    let mat = RowMatrix::new(n, x);
    let value = start.sum(&PairIndexer::new(n), x);
    greedy_ascent_matrix(&mat, start, value, direction, max_sweeps)
}

fn greedy_ascent_matrix(
    mat: &RowMatrix,
    start: &SetPair,
    start_value: f64,
    direction: f64,
    max_sweeps: usize,
) -> (SetPair, f64) {
    let n = mat.n;
    let mut class = start.classes();
    let mut value = start_value;
    let tol = 1e-12 * (1.0 + value.abs());
    for _ in 0..max_sweeps {
        let mut improved = false;
        for u in 0..n {
            let mut r = [0.0f64; 4];
            for (v, &d) in mat.row(u).iter().enumerate() {
                if v != u {
                    r[class[v] as usize] += d;
                }
            }
            let contrib = |c: u8| (0..4u8).filter(|&k| counted(c, k)).map(|k| r[k as usize]).sum::<f64>();
            let here = contrib(class[u]);
            let mut best = (class[u], 0.0);
            for c in 0..4u8 {
                let gain = direction * (contrib(c) - here);
                if gain > best.1 + tol {
                    best = (c, gain);
                }
            }
            if best.0 != class[u] {
                value += contrib(best.0) - here;
                class[u] = best.0;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    (SetPair::from_classes(&class), value)
}

/// Set pairs read off the sign patterns of the two leading eigenvectors of
/// the symmetric matrix of `x` (power iteration with deflation). For an
/// eigenvector `v` with positive part `P` and negative part `N` the
/// candidates are `(P, P)`, `(N, N)` and `(P, N)`.
fn spectral_candidates<R: Rng + ?Sized>(mat: &RowMatrix, iterations: usize, rng: &mut R) -> Vec<SetPair> {
    let n = mat.n;
    let mut found: Vec<Vec<f64>> = Vec::new();
    let mut out = Vec::new();
    for _ in 0..2 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..iterations {
            for f in &found {
                let dot: f64 = v.iter().zip(f).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(f).for_each(|(a, b)| *a -= dot * b);
            }
            let mut w: Vec<f64> = (0..n).map(|u| mat.row(u).iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
            let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            w.iter_mut().for_each(|a| *a /= norm);
            v = w;
        }
        let pos: Vec<usize> = (0..n).filter(|&u| v[u] > 0.0).collect();
        let neg: Vec<usize> = (0..n).filter(|&u| v[u] < 0.0).collect();
        for (s, t) in [(&pos, &pos), (&neg, &neg), (&pos, &neg)] {
            if let Ok(sp) = SetPair::new(n, s, t) {
                out.push(sp);
            }
        }
        found.push(v);
    }
    out
}

/// Searches for set pairs with large `|cut_sum(x)|`: spectral candidates and
/// the given `starts`, each polished by greedy ascent in the direction of its
/// sign. Returns distinct local optima sorted by decreasing magnitude; the
/// witness values here keep their sign.
pub fn cut_search<R: Rng + ?Sized>(x: &[f64], n: usize, starts: &[SetPair], rng: &mut R) -> Vec<CutWitness> {
    let ix = PairIndexer::new(n);
    let mat = RowMatrix::new(n, x);
    let mut cands = spectral_candidates(&mat, 30, rng);
    cands.extend_from_slice(starts);
    let mut out: Vec<CutWitness> = Vec::new();
    for sp in cands {
        let val = sp.sum(&ix, x);
        let dirs: &[f64] = if val > 0.0 { &[1.0] } else if val < 0.0 { &[-1.0] } else { &[1.0, -1.0] };
        for &dir in dirs {
            let (pair, value) = greedy_ascent_matrix(&mat, &sp, val, dir, 30);
            if pair.pair_count() > 0 && !out.iter().any(|w| w.pair == pair) {
                out.push(CutWitness { value, pair });
            }
        }
    }
    out.sort_by(|a, b| b.value.abs().total_cmp(&a.value.abs()));
    out
}

/// Largest cut-sum magnitude found, with the set pair that attains it.
#[derive(Clone, Debug)]
pub struct CutWitness {
    pub value: f64,
    pub pair: SetPair,
}

/// Exact `max_{S,T} |cut_sum(x)|` by enumerating all `4^n` set pairs
/// (Gray-code order over `T`). Refuses `n > 12`.
pub fn exact_max_cut_sum(x: &[f64], n: usize) -> Result<CutWitness> {
    if n > 12 {
        return Err(crate::error::Error::Refusal(format!(
            "exact cut enumeration is limited to n <= 12 (got {n})"
        )));
    }
    if x.len() != pair_count(n) {
        return Err(contract("array length does not match n"));
    }
    let mat = RowMatrix::new(n, x);
    let full = if n == 0 { 0 } else { (1u32 << n) - 1 };
    let mut best = (0.0f64, 0u32, 0u32);
    for s in 0..=full {
        let mut t = 0u32;
        let mut value = 0.0f64;
        for step in 1..=full {
            let xv = step.trailing_zeros() as usize;
            let bit = 1u32 << xv;
            let t_without = t & !bit;
            let x_in_s = s & bit != 0;
            let newly = s & !(if x_in_s { t_without } else { 0 }) & !bit;
            let row = mat.row(xv);
            let mut delta = 0.0;
            let mut m = newly;
            while m != 0 {
                let v = m.trailing_zeros() as usize;
                delta += row[v];
                m &= m - 1;
            }
            if t & bit == 0 {
                value += delta;
            } else {
                value -= delta;
            }
            t ^= bit;
            if value.abs() > best.0 {
                best = (value.abs(), s, t);
            }
        }
    }
    let to_vec = |m: u32| (0..n).filter(|&v| m >> v & 1 == 1).collect::<Vec<_>>();
    let pair = SetPair::new(n, &to_vec(best.1), &to_vec(best.2))?;
    Ok(CutWitness { value: best.0, pair })
}

/// Exact cut distance between two channels (small `n` only).
pub fn exact_cut_distance(a: &WeightedChannel, b: &WeightedChannel) -> Result<f64> {
    let d = a.difference(b)?;
    Ok(exact_max_cut_sum(d.as_slice(), d.n())?.value)
}

/// Lower bound on the cut distance `max_{S,T} |a(S,T) − b(S,T)|`.
///
/// The candidate family is every singleton pair `({u}, {v})`, `samples`
/// random `(S, T)`, and `samples` random cuts `(S, V ∖ S)`; the best
/// candidate then seeds a greedy ascent in both directions. When
/// `samples >= 4^n` the whole family fits in the budget and the exact
/// maximum is returned instead.
pub fn sampled_cut_distance<R: Rng + ?Sized>(
    a: &WeightedChannel,
    b: &WeightedChannel,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    Ok(sampled_cut_witness(a, b, samples, rng)?.value)
}

pub fn sampled_cut_witness<R: Rng + ?Sized>(
    a: &WeightedChannel,
    b: &WeightedChannel,
    samples: usize,
    rng: &mut R,
) -> Result<CutWitness> {
    if samples == 0 {
        return Err(invalid("sampled cut distance needs at least one sample"));
    }
    let d = a.difference(b)?;
    let n = d.n();
    if n <= 12 && (samples as u128) >= 1u128 << (2 * n) {
        return exact_max_cut_sum(d.as_slice(), n);
    }
    max_cut_sum_search(d.as_slice(), n, samples, rng)
}

/// Sampling-plus-ascent search for a large `|cut_sum(x)|`.
pub fn max_cut_sum_search<R: Rng + ?Sized>(x: &[f64], n: usize, samples: usize, rng: &mut R) -> Result<CutWitness> {
    let ix = PairIndexer::new(n);
    let mut best = CutWitness { value: 0.0, pair: SetPair::new(n, &[], &[])? };
    let mut i = 0;
    for u in 0..n {
        for v in u + 1..n {
            if x[i].abs() > best.value {
                best = CutWitness { value: x[i].abs(), pair: SetPair::singleton(n, u, v) };
            }
            i += 1;
        }
    }
    let mut best_sample: Option<(f64, SetPair)> = None;
    for j in 0..2 * samples {
        let sp = if j % 2 == 0 { SetPair::random(n, rng) } else { SetPair::random_cut(n, rng) };
        let val = sp.sum(&ix, x);
        if best_sample.as_ref().is_none_or(|b| val.abs() > b.0.abs()) {
            best_sample = Some((val, sp));
        }
    }
    if let Some((val, sp)) = best_sample {
        if val.abs() > best.value {
            best = CutWitness { value: val.abs(), pair: sp.clone() };
        }
        let mat = RowMatrix::new(n, x);
        for dir in [1.0, -1.0] {
            let (p, v) = greedy_ascent_matrix(&mat, &sp, val, dir, 50);
            if v.abs() > best.value {
                best = CutWitness { value: v.abs(), pair: p };
            }
        }
    }
    Ok(best)
}
