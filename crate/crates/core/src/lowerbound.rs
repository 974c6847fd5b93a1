//! Path instances, distance codes, and the packing demonstration behind the
//! linear lower bound on the additive error of private clustering.

use std::collections::BTreeSet;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, invalid, Error, Result};
use crate::exp_mech::{exponential_mechanism, exponential_mechanism_with_sensitivity};
use crate::graph::{disagreement, Clustering, Edge, PrivacyParams, Sign, SignedGraph};
use crate::partitions::for_each_partition;
use crate::rng::{stream, DetRng};
use crate::solvers::Objective;

/// Longest sign vector the code search handles.
pub const CODE_MAX_N: usize = 40;

/// The packing bound `αβn/(4ε)` is only claimed for `ε` up to this value.
pub const PACKING_MAX_EPSILON: f64 = 0.2;

/// Edge weight `α / (2ε)` that turns the packing bound on weighted paths
/// into an `Ω(n/ε)` error.
pub fn weighted_lambda(alpha: f64, epsilon: f64) -> Result<f64> {
    if !(alpha > 0.0 && epsilon > 0.0 && alpha.is_finite() && epsilon.is_finite()) {
        return Err(invalid(format!("alpha and epsilon must be positive, got {alpha} and {epsilon}")));
    }
    Ok(alpha / (2.0 * epsilon))
}

/// True when no clustering of the unit-weight paths has error below the
/// good-set radius `βn/2` on two different codewords at once, so the good
/// sets `B_σ` are pairwise disjoint. Brute force; `n <= 11`.
pub fn good_sets_disjoint(codebook: &Codebook) -> Result<bool> {
    let patterns = path_patterns(codebook.n)?;
    let radius = codebook.beta * codebook.n as f64 / 2.0;
    for (i, a) in codebook.vectors.iter().enumerate() {
        for b in &codebook.vectors[..i] {
            if (min_max_error(&patterns, a, b)? as f64) < radius {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SignVector(pub Vec<Sign>);

impl SignVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Bit `i` set when entry `i` is positive.
    pub fn from_bits(n: usize, bits: u64) -> SignVector {
        SignVector((0..n).map(|i| if bits >> i & 1 == 1 { Sign::Pos } else { Sign::Neg }).collect())
    }

    pub fn bits(&self) -> u64 {
        self.0.iter().enumerate().fold(0, |acc, (i, s)| acc | (u64::from(*s == Sign::Pos) << i))
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SignVector {
        SignVector((0..n).map(|_| if rng.gen_bool(0.5) { Sign::Pos } else { Sign::Neg }).collect())
    }

    /// `+`/`-` string, e.g. `+-+`.
    pub fn symbols(&self) -> String {
        self.0.iter().map(|s| s.symbol()).collect()
    }
}

pub fn hamming(a: &SignVector, b: &SignVector) -> Result<usize> {
    if a.len() != b.len() {
        return Err(contract(format!("sign vectors have lengths {} and {}", a.len(), b.len())));
    }
    Ok(a.0.iter().zip(&b.0).filter(|(x, y)| x != y).count())
}

/// Path `v_0 … v_n` whose edge `(v_{i−1}, v_i)` has sign `σ_i` and weight λ.
pub fn path_graph(sigma: &SignVector, lambda: f64) -> Result<SignedGraph> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid(format!("edge weight must be positive, got {lambda}")));
    }
    let edges = sigma.0.iter().enumerate().map(|(i, &s)| Edge::new(i, i + 1, s, lambda));
    SignedGraph::from_edges(sigma.len() + 1, edges, false)
}

/// Zero-error clustering of the path: maximal runs of positive edges.
pub fn optimal_path_clustering(sigma: &SignVector) -> Clustering {
    let mut labels = Vec::with_capacity(sigma.len() + 1);
    let mut current = 0;
    labels.push(current);
    for s in &sigma.0 {
        if *s == Sign::Neg {
            current += 1;
        }
        labels.push(current);
    }
    Clustering::from_labels(&labels)
}

/// `⌈d / 2⌉` for the Hamming distance `d`: no clustering has fewer
/// disagreements than this on both unit-weight paths at once.
pub fn pairwise_confusion_bound(sigma: &SignVector, sigma_prime: &SignVector) -> Result<usize> {
    Ok(hamming(sigma, sigma_prime)?.div_ceil(2))
}

/// Every "same cluster" pattern of the path's consecutive vertex pairs,
/// obtained by enumerating all partitions of the `n + 1` path vertices.
/// Errors on a path depend on a clustering only through this pattern.
pub fn path_patterns(n: usize) -> Result<Vec<u64>> {
    if n > 11 {
        return Err(Error::Refusal(format!("brute force over paths is limited to n <= 11, got {n}")));
    }
    let mut seen = BTreeSet::new();
    for_each_partition(n + 1, None, |a, _| {
        let mut bits = 0u64;
        for i in 0..n {
            if a[i] == a[i + 1] {
                bits |= 1 << i;
            }
        }
        seen.insert(bits);
    });
    Ok(seen.into_iter().collect())
}

/// `min_C max(err(C, P(σ)), err(C, P(σ′)))` at unit weight, by brute force
/// over the patterns from [`path_patterns`].
pub fn min_max_error(patterns: &[u64], sigma: &SignVector, sigma_prime: &SignVector) -> Result<usize> {
    hamming(sigma, sigma_prime)?;
    // a consecutive pair disagrees exactly when "same cluster" != "positive"
    let a = sigma.bits();
    let b = sigma_prime.bits();
    Ok(patterns
        .iter()
        .map(|&s| ((s ^ a).count_ones().max((s ^ b).count_ones())) as usize)
        .min()
        .unwrap_or(0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub n: usize,
    pub beta: f64,
    pub min_distance: usize,
    pub vectors: Vec<SignVector>,
    pub target: usize,
    /// False when the sample budget ran out before `target` codewords.
    pub reached_target: bool,
    pub samples_used: u64,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Rate `α` with `|A| = 2^{αn}`.
    pub fn alpha(&self) -> f64 {
        if self.n == 0 || self.vectors.is_empty() {
            return 0.0;
        }
        (self.vectors.len() as f64).log2() / self.n as f64
    }

    /// Smallest pairwise distance, checked over all pairs.
    pub fn verified_min_distance(&self) -> Option<usize> {
        let mut best = None;
        for i in 0..self.vectors.len() {
            for j in 0..i {
                let d = (self.vectors[i].bits() ^ self.vectors[j].bits()).count_ones() as usize;
                best = Some(best.map_or(d, |b: usize| b.min(d)));
            }
        }
        best
    }
}

/// Randomized greedy code: draw uniform vectors and keep those at distance
/// at least `max(⌈βn⌉, 1)` from every kept vector. Stops at `target`
/// codewords or after `budget` draws.
pub fn brute_force_code<R: Rng + ?Sized>(
    n: usize,
    beta: f64,
    target: usize,
    rng: &mut R,
    budget: u64,
) -> Result<Codebook> {
    if n == 0 || n > CODE_MAX_N {
        return Err(Error::Refusal(format!("code search supports 1 <= n <= {CODE_MAX_N}, got {n}")));
    }
    if !(0.0..0.5).contains(&beta) {
        return Err(invalid(format!("relative distance must lie in [0, 1/2), got {beta}")));
    }
    // distinct codewords are required even when β n rounds to 0
    let min_distance = ((beta * n as f64).ceil() as usize).max(1);
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut kept: Vec<u64> = Vec::new();
    let mut samples = 0;
    while kept.len() < target && samples < budget {
        samples += 1;
        let x = rng.gen::<u64>() & mask;
        if kept.iter().all(|&y| (x ^ y).count_ones() as usize >= min_distance) {
            kept.push(x);
        }
    }
    Ok(Codebook {
        n,
        beta,
        min_distance,
        reached_target: kept.len() >= target,
        vectors: kept.into_iter().map(|b| SignVector::from_bits(n, b)).collect(),
        target,
        samples_used: samples,
    })
}

/// Anything that maps a private graph to a clustering.
pub trait ClusteringMechanism: Send + Sync {
    fn name(&self) -> String;
    fn cluster(&self, g: &SignedGraph, params: &PrivacyParams, rng: &mut DetRng) -> Result<Clustering>;
}

/// The exponential mechanism as a [`ClusteringMechanism`]. With no explicit
/// sensitivity it accepts unweighted graphs only.
#[derive(Clone, Debug, Default)]
pub struct ExpMechanism {
    pub sensitivity: Option<f64>,
}

impl ClusteringMechanism for ExpMechanism {
    fn name(&self) -> String {
        "exp-mech".into()
    }

    fn cluster(&self, g: &SignedGraph, params: &PrivacyParams, rng: &mut DetRng) -> Result<Clustering> {
        match self.sensitivity {
            None => exponential_mechanism(g, params, Objective::MinDis, rng),
            Some(s) => exponential_mechanism_with_sensitivity(g, params, Objective::MinDis, s, rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackingRow {
    pub codeword: usize,
    pub sigma: String,
    pub mean_err: f64,
    pub frac_in_b: f64,
    pub theory_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackingReport {
    pub mechanism: String,
    pub n: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub repetitions: usize,
    /// Runs with error below `λβn/2` land in the good set `B_σ`.
    pub radius: f64,
    /// `α β n / (4ε)`, the error level the packing argument forces.
    pub theory_bound: f64,
    /// Whether `ε <= 0.2`, the range in which the bound is claimed.
    pub bound_applies: bool,
    pub rows: Vec<PackingRow>,
}

impl PackingReport {
    pub fn mean_error(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.mean_err).sum::<f64>() / self.rows.len() as f64
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs `mechanism` `repetitions` times on the path of every codeword. Each
/// codeword gets its own stream derived from `seed`, so rows can be
/// computed in parallel and still reproduce.
pub fn packing_experiment(
    mechanism: &dyn ClusteringMechanism,
    params: &PrivacyParams,
    lambda: f64,
    codebook: &Codebook,
    repetitions: usize,
    seed: u64,
) -> Result<PackingReport> {
    if repetitions == 0 {
        return Err(invalid("repetitions must be at least 1"));
    }
    let n = codebook.n;
    let radius = lambda * codebook.beta * n as f64 / 2.0;
    let theory_bound = codebook.alpha() * codebook.beta * n as f64 / (4.0 * params.epsilon);
    let rows = codebook
        .vectors
        .par_iter()
        .enumerate()
        .map(|(i, sigma)| {
            let g = path_graph(sigma, lambda)?;
            let mut rng = stream(seed, i as u64);
            let mut total = 0.0;
            let mut inside = 0usize;
            for _ in 0..repetitions {
                let c = mechanism.cluster(&g, params, &mut rng)?;
                let err = disagreement(&c, &g)?;
                total += err;
                inside += usize::from(err < radius);
            }
            Ok(PackingRow {
                codeword: i,
                sigma: sigma.symbols(),
                mean_err: total / repetitions as f64,
                frac_in_b: inside as f64 / repetitions as f64,
                theory_bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PackingReport {
        mechanism: mechanism.name(),
        n,
        epsilon: params.epsilon,
        lambda,
        alpha: codebook.alpha(),
        beta: codebook.beta,
        repetitions,
        radius,
        theory_bound,
        bound_applies: params.epsilon <= PACKING_MAX_EPSILON,
        rows,
    })
}
