//! Exponential mechanism over all partitions, for small graphs.
//!
//! Outcome `C` gets log-weight `−ε · err(C, G) / (2Δ)`. Since
//! `agr = total − err`, the MaxAgr form `+ε · agr / (2Δ)` differs only by a
//! constant and yields the same distribution, so one code path serves both.
//! On unweighted inputs a sign flip moves `err` by at most 1, so `Δ = 1`.
//! Weighted inputs need an explicit sensitivity: a change of signed weight
//! with L1 norm 2 can move `err` by up to 2.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{contract, invalid, Error, Result};
use crate::graph::{Clustering, PrivacyParams, SignedGraph};
use crate::partitions::{bell, RestrictedGrowth};
use crate::solvers::{CostMatrix, Objective};

/// Largest graph the sampler enumerates.
pub const SAMPLER_MAX_N: usize = 12;
/// Largest graph for which the full distribution is materialized.
pub const DISTRIBUTION_MAX_N: usize = 10;

fn check(g: &SignedGraph, params: &PrivacyParams, limit: usize, sensitivity: f64) -> Result<()> {
    params.require_pure()?;
    if !(sensitivity.is_finite() && sensitivity > 0.0) {
        return Err(invalid(format!("sensitivity must be positive, got {sensitivity}")));
    }
    if g.n() > limit {
        return Err(Error::Refusal(format!(
            "exponential mechanism enumerates Bell(n) partitions and is limited to n <= {limit}, got n = {}",
            g.n()
        )));
    }
    Ok(())
}

fn unit_sensitivity(g: &SignedGraph) -> Result<f64> {
    if !g.is_unweighted() {
        return Err(contract(
            "the default exponential mechanism takes unweighted graphs; pass an explicit sensitivity for weighted ones",
        ));
    }
    Ok(1.0)
}

/// Log-weights of all partitions in restricted-growth order.
fn log_weights(g: &SignedGraph, epsilon: f64, sensitivity: f64) -> Vec<f64> {
    let m = CostMatrix::new(g);
    let scale = -epsilon / (2.0 * sensitivity);
    let mut out = Vec::with_capacity(bell(g.n()) as usize);
    let mut it = RestrictedGrowth::new(g.n(), None);
    while it.advance() {
        out.push(scale * m.err_of_labels(it.current()));
    }
    out
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn nth_partition(n: usize, index: usize) -> Clustering {
    let mut it = RestrictedGrowth::new(n, None);
    for _ in 0..=index {
        it.advance();
    }
    Clustering::from_labels(it.current())
}

/// Samples a clustering with probability proportional to
/// `exp(−ε · err / 2)`. Requires an unweighted graph and pure ε-DP.
pub fn exponential_mechanism<R: Rng + ?Sized>(
    g: &SignedGraph,
    params: &PrivacyParams,
    objective: Objective,
    rng: &mut R,
) -> Result<Clustering> {
    let sensitivity = unit_sensitivity(g)?;
    exponential_mechanism_with_sensitivity(g, params, objective, sensitivity, rng)
}

pub fn exponential_mechanism_with_sensitivity<R: Rng + ?Sized>(
    g: &SignedGraph,
    params: &PrivacyParams,
    _objective: Objective,
    sensitivity: f64,
    rng: &mut R,
) -> Result<Clustering> {
    check(g, params, SAMPLER_MAX_N, sensitivity)?;
    let lw = log_weights(g, params.epsilon, sensitivity);
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = lw.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut index = weights.len() - 1;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            index = i;
            break;
        }
        u -= w;
    }
    Ok(nth_partition(g.n(), index))
}

/// Every partition with its log-probability, in restricted-growth order.
pub fn exact_log_distribution(
    g: &SignedGraph,
    params: &PrivacyParams,
    objective: Objective,
) -> Result<Vec<(Clustering, f64)>> {
    let sensitivity = unit_sensitivity(g)?;
    exact_log_distribution_with_sensitivity(g, params, objective, sensitivity)
}

pub fn exact_log_distribution_with_sensitivity(
    g: &SignedGraph,
    params: &PrivacyParams,
    _objective: Objective,
    sensitivity: f64,
) -> Result<Vec<(Clustering, f64)>> {
    check(g, params, DISTRIBUTION_MAX_N, sensitivity)?;
    let lw = log_weights(g, params.epsilon, sensitivity);
    let z = log_sum_exp(&lw);
    let mut it = RestrictedGrowth::new(g.n(), None);
    let mut out = Vec::with_capacity(lw.len());
    for x in lw {
        it.advance();
        out.push((Clustering::from_labels(it.current()), x - z));
    }
    Ok(out)
}

/// Output distribution of [`exponential_mechanism`] as probabilities.
pub fn exact_output_distribution(
    g: &SignedGraph,
    params: &PrivacyParams,
    objective: Objective,
) -> Result<BTreeMap<Clustering, f64>> {
    Ok(exact_log_distribution(g, params, objective)?.into_iter().map(|(c, lp)| (c, lp.exp())).collect())
}

/// `max_C |ln P_G(C) − ln P_H(C)|` over all outcomes.
pub fn max_log_ratio(g: &SignedGraph, h: &SignedGraph, params: &PrivacyParams) -> Result<f64> {
    let a = exact_log_distribution(g, params, Objective::MinDis)?;
    let b = exact_log_distribution(h, params, Objective::MinDis)?;
    if a.len() != b.len() {
        return Err(contract("graphs have different vertex counts"));
    }
    Ok(a.iter().zip(&b).map(|((_, x), (_, y))| (x - y).abs()).fold(0.0, f64::max))
}

/// Exact `E[err]` of the mechanism's output.
pub fn expected_error(g: &SignedGraph, params: &PrivacyParams) -> Result<f64> {
    let m = CostMatrix::new(g);
    let dist = exact_log_distribution(g, params, Objective::MinDis)?;
    Ok(dist.iter().map(|(c, lp)| lp.exp() * m.err_of_labels(c.labels())).sum())
}
