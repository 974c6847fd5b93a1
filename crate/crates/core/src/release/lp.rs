//! Box-constrained cut fitting.
//!
//! Finds `x ∈ [lo, hi]^pairs` that approximately minimizes
//! `λ = max_{c, t} |x(c) − target_t(c)|`, where `c` ranges over a family of
//! set pairs (plus every single pair) and `x(c)` is the cut sum of `x` over
//! `c`. The solver is projected subgradient descent on the max violation:
//! each step takes the most violated constraint and moves every covered
//! entry by `(mid_c − x(c)) / |c|` times a damping factor, clamping to the
//! box. `mid_c` is the midpoint of the constraint's targets, where its own
//! violation is smallest.
//!
//! Evaluating every constraint is `O(|family| n²)`, so the family is only
//! rescanned once per epoch of `refresh` steps; within an epoch the `active`
//! most violated constraints are tracked exactly and the damping is
//! `1/√epoch`.
//!
//! A random family only pins down sums over unstructured sets. Structured
//! deviations (for instance the bias that clamping to the box leaves along
//! the input's own cluster structure) are invisible to it, so each rescan
//! also runs a separation search (leading eigenvectors of the residual plus
//! greedy ascent). Separated set pairs enter as slab constraints
//! `|x(c) − mid_c| ≤ slab`, where `slab` is the cut norm the same search
//! finds on pure noise of the release's known scale. The true graph meets
//! these slabs up to search error, so projecting onto their boundary removes
//! structured bias without fitting x to the noise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cuts::{cut_search, PairIndexer, SetPair};

/// A set pair compiled for fast cut sums: per member, the sorted partners
/// with a larger vertex id.
#[derive(Clone, Debug)]
pub(crate) struct Compiled {
    rows: Vec<(u32, u8)>,
    // partner lists keyed by member class: 1 -> T∪B, 2 -> S∪B, 3 -> S∪T∪B
    lists: [Vec<u32>; 4],
    pub size: usize,
}

impl Compiled {
    pub fn new(sp: &SetPair) -> Compiled {
        let n = sp.n();
        let s = sp.s();
        let t = sp.t();
        let mut class = vec![0u8; n];
        for &v in &s {
            class[v] |= 1;
        }
        for &v in &t {
            class[v] |= 2;
        }
        let by = |pred: &dyn Fn(u8) -> bool| -> Vec<u32> {
            (0..n).filter(|&v| class[v] != 0 && pred(class[v])).map(|v| v as u32).collect()
        };
        let lists = [
            Vec::new(),
            by(&|c| c & 2 != 0),
            by(&|c| c & 1 != 0),
            by(&|_| true),
        ];
        let rows = (0..n).filter(|&v| class[v] != 0).map(|v| (v as u32, class[v])).collect();
        Compiled { rows, lists, size: sp.pair_count() }
    }

    #[inline]
    fn for_each_run(&self, ix: &PairIndexer, mut f: impl FnMut(&[u32], isize)) {
        for &(u, c) in &self.rows {
            let list = &self.lists[c as usize];
            let start = list.partition_point(|&v| v <= u);
            if start < list.len() {
                f(&list[start..], ix.row_base(u as usize));
            }
        }
    }

    pub fn sum(&self, ix: &PairIndexer, x: &[f64]) -> f64 {
        let mut total = 0.0;
        self.for_each_run(ix, |vs, base| {
            for &v in vs {
                total += x[(base + v as isize) as usize];
            }
        });
        total
    }

    fn shift(&self, ix: &PairIndexer, x: &mut [f64], delta: f64, lo: f64, hi: f64) {
        self.for_each_run(ix, |vs, base| {
            for &v in vs {
                let e = &mut x[(base + v as isize) as usize];
                *e = (*e + delta).clamp(lo, hi);
            }
        });
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub iterations: usize,
    pub refresh: usize,
    pub active: usize,
    /// Slab constraints added by separation per epoch; 0 disables separation.
    pub separation_rounds: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { iterations: 2000, refresh: 50, active: 32, separation_rounds: 4 }
    }
}

struct Constraint {
    pair: SetPair,
    compiled: Compiled,
    mid: f64,
    half: f64,
    /// Allowed violation: 0 for family constraints, the slab for separated
    /// ones.
    slack: f64,
}

impl Constraint {
    fn new(sp: &SetPair, ix: &PairIndexer, targets: &[&[f64]], slack: f64) -> Constraint {
        let compiled = Compiled::new(sp);
        let (lo, hi) = bounds(targets.iter().map(|t| compiled.sum(ix, t)));
        Constraint { pair: sp.clone(), compiled, mid: 0.5 * (lo + hi), half: 0.5 * (hi - lo), slack }
    }

    /// (excess over the allowed violation, signed offset from the midpoint)
    fn excess(&self, ix: &PairIndexer, x: &[f64]) -> (f64, f64) {
        let off = self.compiled.sum(ix, x) - self.mid;
        (off.abs() + self.half - self.slack, off)
    }

    /// Offset from the midpoint that a projection aims for.
    fn aim(&self, off: f64) -> f64 {
        off.signum() * (self.slack - self.half).max(0.0)
    }
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)))
}

/// Entry-wise midpoints and half-gaps of the targets.
fn entry_bounds(targets: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    (0..targets[0].len())
        .map(|i| {
            let (a, b) = bounds(targets.iter().map(|t| t[i]));
            (0.5 * (a + b), 0.5 * (b - a))
        })
        .unzip()
}

/// Largest single-pair violation as (violation, index, offset).
fn singleton_max(x: &[f64], mid: &[f64], half: &[f64]) -> (f64, usize, f64) {
    let mut best = (0.0, 0, 0.0);
    for (i, &xi) in x.iter().enumerate() {
        let off = xi - mid[i];
        let viol = off.abs() + half[i];
        if viol > best.0 {
            best = (viol, i, off);
        }
    }
    best
}

pub(crate) struct FitOutcome {
    pub x: Vec<f64>,
    /// Largest violation over the family and single pairs (slab constraints
    /// contribute their excess over the slab).
    pub train_violation: f64,
}

/// Runs the solver from `init`. `slab` enables separation; see the module
/// notes.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fit<R: Rng + ?Sized>(
    n: usize,
    targets: &[&[f64]],
    (lo, hi): (f64, f64),
    init: Vec<f64>,
    family: &[SetPair],
    slab: Option<f64>,
    opts: &FitOptions,
    rng: &mut R,
) -> FitOutcome {
    let ix = PairIndexer::new(n);
    let (emid, ehalf) = entry_bounds(targets);
    let mut cons: Vec<Constraint> = family.iter().map(|sp| Constraint::new(sp, &ix, targets, 0.0)).collect();
    let mut x: Vec<f64> = init.into_iter().map(|v| v.clamp(lo, hi)).collect();

    let scan = |x: &[f64], cons: &[Constraint]| -> Vec<(f64, usize)> {
        let mut ex: Vec<(f64, usize)> = cons.iter().enumerate().map(|(i, c)| (c.excess(&ix, x).0, i)).collect();
        ex.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        ex
    };
    let score = |ex: &[(f64, usize)], x: &[f64]| ex.first().map_or(0.0, |e| e.0).max(singleton_max(x, &emid, &ehalf).0);

    let mut best_x = x.clone();
    let mut best_val = f64::INFINITY;
    let tol = 1e-12 * (1.0 + x.len() as f64);
    let refresh = opts.refresh.max(1);
    let epochs = opts.iterations.div_ceil(refresh).max(1);

    for epoch in 1..=epochs {
        let mut ex = scan(&x, &cons);
        let val = score(&ex, &x);
        if val < best_val {
            best_val = val;
            best_x.clone_from(&x);
        }
        if best_val <= tol {
            break;
        }

        if let (Some(slab), true) = (slab, opts.separation_rounds > 0) {
            let resid: Vec<f64> = x.iter().zip(&emid).map(|(a, b)| a - b).collect();
            let mut starts: Vec<SetPair> = ex.iter().take(2).map(|e| cons[e.1].pair.clone()).collect();
            starts.push(SetPair::random(n, rng));
            let found = cut_search(&resid, n, &starts, rng);
            for w in found.into_iter().take(opts.separation_rounds) {
                let c = Constraint::new(&w.pair, &ix, targets, slab);
                let (e, off) = c.excess(&ix, &x);
                if e <= 0.0 {
                    continue;
                }
                // the incumbent was scored without this constraint
                best_val = best_val.max(c.excess(&ix, &best_x).0);
                c.compiled.shift(&ix, &mut x, (c.aim(off) - off) / c.compiled.size as f64, lo, hi);
                ex.push((e, cons.len()));
                cons.push(c);
            }
            ex.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        }
        let active: Vec<usize> = ex.iter().take(opts.active).map(|e| e.1).collect();

        let damp = 1.0 / (epoch as f64).sqrt();
        for _ in 0..refresh {
            let mut pick: Option<(f64, f64, Option<usize>)> = None;
            for &ci in &active {
                let (e, off) = cons[ci].excess(&ix, &x);
                if pick.is_none_or(|p| e > p.0) {
                    pick = Some((e, off, Some(ci)));
                }
            }
            let (sv, si, soff) = singleton_max(&x, &emid, &ehalf);
            if pick.is_none_or(|p| sv > p.0) {
                pick = Some((sv, soff, None));
            }
            let Some((e, off, which)) = pick else { break };
            if e <= tol {
                break;
            }
            match which {
                Some(ci) => {
                    let c = &cons[ci];
                    let delta = (c.aim(off) - off) / c.compiled.size.max(1) as f64 * damp;
                    c.compiled.shift(&ix, &mut x, delta, lo, hi);
                }
                None => x[si] = (x[si] - off * damp).clamp(lo, hi),
            }
        }
    }
    let val = score(&scan(&x, &cons), &x);
    if val < best_val {
        best_val = val;
        best_x = x;
    }
    FitOutcome { x: best_x, train_violation: best_val }
}

/// The cut norm that the separation search finds on `draws` independent
/// noise arrays from `noise`, averaged. Depends only on public parameters.
pub(crate) fn calibrate_slab<R: Rng + ?Sized>(
    n: usize,
    draws: usize,
    mut noise: impl FnMut(&mut R) -> f64,
    rng: &mut R,
) -> f64 {
    let m = n * n.saturating_sub(1) / 2;
    let mut total = 0.0;
    for _ in 0..draws.max(1) {
        let z: Vec<f64> = (0..m).map(|_| noise(rng)).collect();
        let start = SetPair::random(n, rng);
        total += cut_search(&z, n, &[start], rng).first().map_or(0.0, |w| w.value.abs());
    }
    total / draws.max(1) as f64
}

/// Largest violation of `x` against `targets` over `family` and every
/// single pair.
pub(crate) fn max_violation(n: usize, x: &[f64], targets: &[&[f64]], family: &[SetPair]) -> f64 {
    let ix = PairIndexer::new(n);
    let (emid, ehalf) = entry_bounds(targets);
    let single = if x.is_empty() { 0.0 } else { singleton_max(x, &emid, &ehalf).0 };
    family
        .iter()
        .map(|sp| Constraint::new(sp, &ix, targets, 0.0).excess(&ix, x).0)
        .fold(single, f64::max)
}

/// `budget` uniformly random set pairs followed by `budget` random cuts.
pub(crate) fn sample_family<R: Rng + ?Sized>(n: usize, budget: usize, rng: &mut R) -> Vec<SetPair> {
    let mut out = Vec::with_capacity(2 * budget);
    for _ in 0..budget {
        out.push(SetPair::random(n, rng));
    }
    for _ in 0..budget {
        out.push(SetPair::random_cut(n, rng));
    }
    out
}
