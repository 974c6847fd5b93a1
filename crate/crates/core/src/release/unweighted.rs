//! ε-DP release of unweighted complete signed graphs.
//!
//! Each sign channel receives independent Laplace noise on every pair, the
//! two noisy channels are merged into fractional labels `x ∈ [0,1]` by a
//! cut-fitting LP, and `x` is rounded to a signed graph. Only the Laplace
//! step sees the input graph; merging and rounding take the noisy channels
//! alone.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lp::{self, FitOptions};
use super::{AuditReport, ReleaseOutput};
use crate::error::{contract, invalid, Result};
use crate::graph::{PairWeight, PrivacyParams, SignedGraph, WeightedChannel};
use crate::laplace;
use crate::rng::stream;

/// Noise applied by [`laplace_release`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Noise {
    Laplace { scale: f64 },
    /// Returns the input unchanged. Not private; for pipeline tests only.
    ZeroNonPrivate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceReleaseOutput {
    pub channel: WeightedChannel,
    /// 0 for the non-private zero-noise mode.
    pub noise_scale: f64,
    /// Release seed; the positive channel uses its stream 1 and the
    /// negative channel stream 2.
    pub seed: Option<u64>,
}

pub fn laplace_release<R: Rng + ?Sized>(
    channel: &WeightedChannel,
    noise: Noise,
    rng: &mut R,
) -> Result<LaplaceReleaseOutput> {
    let mut out = channel.clone();
    let scale = match noise {
        Noise::ZeroNonPrivate => 0.0,
        Noise::Laplace { scale } => {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(invalid(format!("noise scale must be positive and finite, got {scale}")));
            }
            for w in out.as_mut_slice() {
                *w += laplace::sample(rng, scale);
            }
            scale
        }
    };
    Ok(LaplaceReleaseOutput { channel: out, noise_scale: scale, seed: None })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MergeStrategy {
    #[default]
    SampledLp,
    PerEdge,
}

impl MergeStrategy {
    pub fn tag(self) -> &'static str {
        match self {
            MergeStrategy::SampledLp => "sampled-lp",
            MergeStrategy::PerEdge => "per-edge",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeConfig {
    pub strategy: MergeStrategy,
    /// Random set pairs (and, separately, random cuts) in the training
    /// family. `None` means `4n`.
    pub constraint_budget: Option<usize>,
    pub iterations: usize,
    /// Size of the fresh audit sample; `None` means the training budget.
    pub audit_budget: Option<usize>,
    /// Greedy separation searches per active-set refresh.
    pub separation_rounds: usize,
    /// Separated cuts may sit this fraction of the simulated noise cut
    /// norm away from the target. Below 1 the fit also absorbs part of the
    /// noise, but it removes more of the bias the clamped start carries.
    pub slab_factor: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        let fit = FitOptions::default();
        MergeConfig {
            strategy: MergeStrategy::SampledLp,
            constraint_budget: None,
            iterations: fit.iterations,
            audit_budget: None,
            separation_rounds: fit.separation_rounds,
            slab_factor: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeSolution {
    /// Pair-indexed fractional labels in `[0, 1]`.
    pub x: WeightedChannel,
    /// Largest violation on the held-out audit sample (and single pairs).
    pub lambda: f64,
    /// Largest violation on the training family.
    pub train_lambda: f64,
    pub strategy: MergeStrategy,
    pub audit: AuditReport,
}

fn per_edge(wplus: &[f64], wminus: &[f64]) -> Vec<f64> {
    wplus
        .iter()
        .zip(wminus)
        .map(|(p, m)| ((p + 1.0 - m) / 2.0).clamp(0.0, 1.0))
        .collect()
}

/// Fits fractional labels to the two noisy channels. `noise_scale` is the
/// public Laplace scale the channels were released with (0 if noiseless); it
/// calibrates the slab used for separated constraints. The audit sample is
/// drawn from its own stream so the reported λ is measured on constraints
/// the solver never saw.
pub fn solve_merge_lp<R: Rng + ?Sized>(
    wplus: &WeightedChannel,
    wminus: &WeightedChannel,
    noise_scale: f64,
    cfg: &MergeConfig,
    rng: &mut R,
) -> Result<MergeSolution> {
    let n = wplus.n();
    if wminus.n() != n {
        return Err(contract(format!("channel sizes differ: {} vs {}", n, wminus.n())));
    }
    let budget = cfg.constraint_budget.unwrap_or(4 * n);
    let strategy = if budget == 0 { MergeStrategy::PerEdge } else { cfg.strategy };
    let p = wplus.as_slice();
    // x must match W⁺ and 1 − x must match W⁻, i.e. x must match 1 − W⁻.
    let comp: Vec<f64> = wminus.as_slice().iter().map(|w| 1.0 - w).collect();
    let targets: [&[f64]; 2] = [p, &comp];
    let init = per_edge(p, wminus.as_slice());

    let (x, train_lambda) = match strategy {
        MergeStrategy::PerEdge => {
            let v = lp::max_violation(n, &init, &targets, &[]);
            (init, v)
        }
        MergeStrategy::SampledLp => {
            let family = lp::sample_family(n, budget, rng);
            let opts = FitOptions {
                iterations: cfg.iterations,
                separation_rounds: cfg.separation_rounds,
                ..FitOptions::default()
            };
            // the midpoint target carries (Lap(b) − Lap(b)) / 2 per pair
            let slab = (noise_scale > 0.0).then(|| {
                lp::calibrate_slab(n, 3, |r| 0.5 * (laplace::sample(r, noise_scale) - laplace::sample(r, noise_scale)), rng)
            });
            let slab = slab.map(|s| s * cfg.slab_factor);
            let out = lp::fit(n, &targets, (0.0, 1.0), init, &family, slab, &opts, rng);
            (out.x, out.train_violation)
        }
    };

    let audit_seed: u64 = rng.gen();
    let audit_budget = cfg.audit_budget.unwrap_or(budget.max(1));
    let audit = audit_fit(n, &x, &targets, audit_budget, audit_seed);
    Ok(MergeSolution {
        x: WeightedChannel::from_vec(n, x)?,
        lambda: audit.lambda,
        train_lambda,
        strategy,
        audit,
    })
}

/// Maximum violation of `x` over a fresh sample of `budget` set pairs plus
/// `budget` cuts plus all single pairs.
pub(crate) fn audit_fit(n: usize, x: &[f64], targets: &[&[f64]], budget: usize, seed: u64) -> AuditReport {
    let family = lp::sample_family(n, budget, &mut stream(seed, 0));
    let lambda = lp::max_violation(n, x, targets, &family);
    AuditReport { lambda, constraints_checked: family.len() + x.len(), seed }
}

/// Labels each pair positive with probability `x_e`, independently.
pub fn round_to_signed<R: Rng + ?Sized>(x: &MergeSolution, rng: &mut R) -> SignedGraph {
    let n = x.x.n();
    let w = x
        .x
        .as_slice()
        .iter()
        .map(|&p| if rng.gen::<f64>() < p { PairWeight { pos: 1.0, neg: 0.0 } } else { PairWeight { pos: 0.0, neg: 1.0 } })
        .collect();
    SignedGraph::from_pair_weights(n, w, false).expect("rounded labels form a complete unit graph")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    #[default]
    Laplace,
    /// Skips the noise entirely. Not private.
    ZeroNonPrivate,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnweightedConfig {
    pub merge: MergeConfig,
    pub noise: NoiseMode,
}

#[derive(Clone, Debug)]
pub struct UnweightedRelease {
    pub graph: SignedGraph,
    pub output: ReleaseOutput,
    pub plus: LaplaceReleaseOutput,
    pub minus: LaplaceReleaseOutput,
    pub merge: MergeSolution,
}

/// Releases `g`. Draws one seed from `rng` and derives independent streams
/// for the two channels, the merge and the rounding from it, so the
/// recorded seed reproduces the release.
pub fn release_unweighted<R: Rng + ?Sized>(
    g: &SignedGraph,
    params: PrivacyParams,
    cfg: &UnweightedConfig,
    rng: &mut R,
) -> Result<UnweightedRelease> {
    if !g.is_complete() || !g.is_unweighted() || g.allows_parallel() {
        return Err(contract("unweighted release needs a complete unweighted graph"));
    }
    params.require_pure()?;
    let seed: u64 = rng.gen();
    let noise = match cfg.noise {
        NoiseMode::Laplace => Noise::Laplace { scale: 2.0 / params.epsilon },
        NoiseMode::ZeroNonPrivate => Noise::ZeroNonPrivate,
    };
    let mut plus = laplace_release(&g.positive_channel(), noise, &mut stream(seed, 1))?;
    let mut minus = laplace_release(&g.negative_channel(), noise, &mut stream(seed, 2))?;
    plus.seed = Some(seed);
    minus.seed = Some(seed);
    release_from_channels(plus, minus, params, cfg, seed)
}

/// The post-processing half of [`release_unweighted`]: everything after the
/// noisy channels exist. Takes no graph.
pub fn release_from_channels(
    plus: LaplaceReleaseOutput,
    minus: LaplaceReleaseOutput,
    params: PrivacyParams,
    cfg: &UnweightedConfig,
    seed: u64,
) -> Result<UnweightedRelease> {
    let merge = solve_merge_lp(&plus.channel, &minus.channel, plus.noise_scale, &cfg.merge, &mut stream(seed, 3))?;
    let graph = round_to_signed(&merge, &mut stream(seed, 4));
    let private = cfg.noise == NoiseMode::Laplace;
    let output = ReleaseOutput {
        mechanism: if private { "laplace-unweighted".into() } else { "zero-noise-test".into() },
        epsilon: params.epsilon,
        delta: params.delta,
        noise_scale: plus.noise_scale,
        // each channel alone has sensitivity 1 at scale 2/ε
        channel_epsilon: params.epsilon / 2.0,
        channel_delta: 0.0,
        postprocess: merge.strategy.tag().into(),
        audit: Some(merge.audit.clone()),
        private,
        seed,
    };
    Ok(UnweightedRelease { graph, output, plus, minus, merge })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{pair_count, Sign};
    use crate::rng::seeded;

    fn sol(x: Vec<f64>, n: usize) -> MergeSolution {
        MergeSolution {
            x: WeightedChannel::from_vec(n, x).unwrap(),
            lambda: 0.0,
            train_lambda: 0.0,
            strategy: MergeStrategy::PerEdge,
            audit: AuditReport { lambda: 0.0, constraints_checked: 0, seed: 0 },
        }
    }

    #[test]
    fn single_edge_laplace_mean_and_variance() {
        let b = 1.0;
        let ch = WeightedChannel::from_vec(2, vec![1.0]).unwrap();
        let mut rng = seeded(3);
        let draws: Vec<f64> = (0..20_000)
            .map(|_| laplace_release(&ch, Noise::Laplace { scale: b }, &mut rng).unwrap().channel.as_slice()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 1.0).abs() <= 4.0 * b / (20_000f64).sqrt(), "mean {mean}");
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!((var / (2.0 * b * b) - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn zero_noise_is_identity_and_bad_scale_rejected() {
        let ch = WeightedChannel::from_vec(3, vec![1.0, 0.0, 1.0]).unwrap();
        let out = laplace_release(&ch, Noise::ZeroNonPrivate, &mut seeded(0)).unwrap();
        assert_eq!(out.channel, ch);
        for s in [0.0, -1.0, f64::NAN] {
            let e = laplace_release(&ch, Noise::Laplace { scale: s }, &mut seeded(0)).unwrap_err();
            assert_eq!(e.exit_code(), 2);
        }
    }

    #[test]
    fn noiseless_channels_give_exact_labels() {
        let g = SignedGraph::complete_unweighted(15, |u, v| if (u + v) % 3 == 0 { Sign::Pos } else { Sign::Neg });
        let sol = solve_merge_lp(&g.positive_channel(), &g.negative_channel(), 0.0, &MergeConfig::default(), &mut seeded(1)).unwrap();
        assert_eq!(sol.x, g.positive_channel());
        assert_eq!(sol.lambda, 0.0);
    }

    #[test]
    fn one_pair_lp() {
        let p = WeightedChannel::from_vec(2, vec![0.7]).unwrap();
        let m = WeightedChannel::from_vec(2, vec![0.3]).unwrap();
        for strategy in [MergeStrategy::PerEdge, MergeStrategy::SampledLp] {
            let cfg = MergeConfig { strategy, ..MergeConfig::default() };
            let sol = solve_merge_lp(&p, &m, 1.0, &cfg, &mut seeded(2)).unwrap();
            assert!((sol.x.as_slice()[0] - 0.7).abs() < 1e-12);
            assert!(sol.lambda < 1e-12);
        }
    }

    #[test]
    fn zero_budget_falls_back_to_per_edge() {
        let p = WeightedChannel::from_vec(4, vec![0.2, 1.4, -0.3, 0.5, 0.9, 0.1]).unwrap();
        let m = WeightedChannel::from_vec(4, vec![0.9, -0.2, 0.4, 0.5, 0.3, 1.2]).unwrap();
        let cfg = MergeConfig { constraint_budget: Some(0), ..MergeConfig::default() };
        let sol = solve_merge_lp(&p, &m, 1.0, &cfg, &mut seeded(2)).unwrap();
        assert_eq!(sol.strategy, MergeStrategy::PerEdge);
        assert_eq!(sol.x.as_slice(), per_edge(p.as_slice(), m.as_slice()).as_slice());
    }

    #[test]
    fn rounding_extremes() {
        let n = 9;
        let ones = round_to_signed(&sol(vec![1.0; pair_count(n)], n), &mut seeded(5));
        assert!(ones.pair_weights().iter().all(|w| w.pos == 1.0 && w.neg == 0.0));
        let zeros = round_to_signed(&sol(vec![0.0; pair_count(n)], n), &mut seeded(5));
        assert!(zeros.pair_weights().iter().all(|w| w.neg == 1.0 && w.pos == 0.0));
    }

    #[test]
    fn rounding_half_concentrates() {
        let n = 60;
        let bound = 4.0 * (1770f64).sqrt() / 2.0;
        let mut inside = 0;
        for seed in 0..1000 {
            let g = round_to_signed(&sol(vec![0.5; 1770], n), &mut seeded(seed));
            let pos = g.pair_weights().iter().filter(|w| w.pos > 0.0).count() as f64;
            if (pos - 885.0).abs() <= bound {
                inside += 1;
            }
        }
        assert!(inside >= 990, "{inside}/1000");
    }

    #[test]
    fn zero_noise_release_is_identity() {
        let g = SignedGraph::complete_unweighted(20, |u, v| if u % 4 == v % 4 { Sign::Pos } else { Sign::Neg });
        let cfg = UnweightedConfig { noise: NoiseMode::ZeroNonPrivate, ..UnweightedConfig::default() };
        let rel = release_unweighted(&g, PrivacyParams::pure(1.0).unwrap(), &cfg, &mut seeded(8)).unwrap();
        assert_eq!(rel.graph, g);
        assert!(!rel.output.private);
    }

    #[test]
    fn rejects_incomplete_or_weighted_or_approximate() {
        let g = SignedGraph::empty(4);
        let e = release_unweighted(&g, PrivacyParams::pure(1.0).unwrap(), &UnweightedConfig::default(), &mut seeded(0)).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let c = SignedGraph::complete_unweighted(4, |_, _| Sign::Pos);
        let e = release_unweighted(&c, PrivacyParams::new(1.0, 0.1).unwrap(), &UnweightedConfig::default(), &mut seeded(0)).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn release_is_reproducible() {
        let g = SignedGraph::complete_unweighted(25, |u, v| if (u * v) % 5 == 1 { Sign::Pos } else { Sign::Neg });
        let p = PrivacyParams::pure(0.5).unwrap();
        let a = release_unweighted(&g, p, &UnweightedConfig::default(), &mut seeded(4)).unwrap();
        let b = release_unweighted(&g, p, &UnweightedConfig::default(), &mut seeded(4)).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.merge.lambda, b.merge.lambda);
        assert_eq!(a.output.noise_scale, 4.0);
    }
}
