//! Release of weighted, possibly incomplete signed graphs.
//!
//! The graph is split into its positive and negative channels, each channel
//! is released by a [`CutReleaser`] engine with half the budget, and the two
//! non-negative outputs are recombined into a graph that may carry one edge
//! of each sign per pair.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::lp::{self, FitOptions};
use super::unweighted::audit_fit;
use super::{AuditReport, ReleaseOutput};
use crate::error::{contract, invalid, Result};
use crate::graph::{PairWeight, PrivacyParams, Sign, SignedGraph, WeightedChannel};
use crate::laplace;
use crate::rng::stream;

/// A signed graph in which each pair may carry one positive and one
/// negative edge ([`SignedGraph::allows_parallel`] is true).
pub type DoubleEdgedGraph = SignedGraph;

/// One released channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRelease {
    /// Non-negative released weights.
    pub channel: WeightedChannel,
    pub noise_scale: f64,
    pub audit: Option<AuditReport>,
}

/// A mechanism releasing one non-negative weighted channel so that cut
/// weights are approximately preserved.
pub trait CutReleaser: Send + Sync {
    fn name(&self) -> String;

    /// Rejects budgets outside the engine's admissible range.
    fn check_params(&self, params: PrivacyParams) -> Result<()>;

    /// Releases `channel` under `params`. Output weights must be finite and
    /// non-negative.
    fn release(&self, channel: &WeightedChannel, params: PrivacyParams, rng: &mut dyn RngCore) -> Result<ChannelRelease>;

    /// High-probability bound on the cut distance between input and output
    /// for a channel on `n` vertices with `m` edges.
    fn advertised_error(&self, n: usize, m: usize, params: PrivacyParams) -> f64;

    fn is_private(&self) -> bool {
        true
    }
}

/// How the Laplace engine maps the noisy channel back to non-negative
/// weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PostProcess {
    /// Entry-wise `max(0, w)`.
    Clip,
    /// Non-negative weights fitted to the noisy channel's sums over a sampled
    /// family of set pairs, starting from the clipped channel.
    CutProjection { constraint_budget: Option<usize>, iterations: usize },
}

impl Default for PostProcess {
    fn default() -> Self {
        PostProcess::CutProjection { constraint_budget: None, iterations: FitOptions::default().iterations }
    }
}

/// Per-pair Laplace noise of scale `2/ε` (channel L1 sensitivity 2) followed
/// by non-negative post-processing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LaplaceEngine {
    pub post: PostProcess,
}

impl CutReleaser for LaplaceEngine {
    fn name(&self) -> String {
        "laplace".into()
    }

    fn check_params(&self, params: PrivacyParams) -> Result<()> {
        if !(params.epsilon > 0.0 && params.epsilon.is_finite()) {
            return Err(invalid("laplace engine needs a positive finite epsilon"));
        }
        Ok(())
    }

    fn release(&self, channel: &WeightedChannel, params: PrivacyParams, rng: &mut dyn RngCore) -> Result<ChannelRelease> {
        self.check_params(params)?;
        let n = channel.n();
        let scale = 2.0 / params.epsilon;
        let noisy: Vec<f64> = channel.as_slice().iter().map(|w| w + laplace::sample(rng, scale)).collect();
        let clipped: Vec<f64> = noisy.iter().map(|w| w.max(0.0)).collect();
        let target: [&[f64]; 1] = [&noisy];
        let (x, budget) = match &self.post {
            PostProcess::Clip => (clipped, 4 * n),
            PostProcess::CutProjection { constraint_budget, iterations } => {
                let budget = constraint_budget.unwrap_or(4 * n);
                if budget == 0 {
                    (clipped, 4 * n)
                } else {
                    let family = lp::sample_family(n, budget, rng);
                    let opts = FitOptions { iterations: *iterations, ..FitOptions::default() };
                    let slab = lp::calibrate_slab(n, 3, |r| laplace::sample(r, scale), rng);
                    let out = lp::fit(n, &target, (0.0, f64::INFINITY), clipped, &family, Some(slab), &opts, rng);
                    (out.x, budget)
                }
            }
        };
        let audit = audit_fit(n, &x, &target, budget.max(1), rng.gen());
        Ok(ChannelRelease { channel: WeightedChannel::from_vec(n, x)?, noise_scale: scale, audit: Some(audit) })
    }

    /// Union bound over the `4^n` set pairs for a sum of at most `n²/2`
    /// Laplace variables, doubled to cover the post-processing residual.
    fn advertised_error(&self, n: usize, _m: usize, params: PrivacyParams) -> f64 {
        let b = 2.0 / params.epsilon;
        2.0 * (2.0 * 4f64.ln()).sqrt() * b * (n as f64).powf(1.5)
    }
}

/// Returns its input unchanged. Not private; for pipeline tests only.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ZeroNoiseEngine;

impl CutReleaser for ZeroNoiseEngine {
    fn name(&self) -> String {
        "zero-noise-test".into()
    }

    fn check_params(&self, _params: PrivacyParams) -> Result<()> {
        Ok(())
    }

    fn release(&self, channel: &WeightedChannel, _params: PrivacyParams, _rng: &mut dyn RngCore) -> Result<ChannelRelease> {
        Ok(ChannelRelease { channel: channel.clone(), noise_scale: 0.0, audit: None })
    }

    fn advertised_error(&self, _n: usize, _m: usize, _params: PrivacyParams) -> f64 {
        0.0
    }

    fn is_private(&self) -> bool {
        false
    }
}

/// Engines addressable by name: `laplace`, `zero-noise-test`, and
/// `external:<name>` for registered plug-ins.
#[derive(Clone, Default)]
pub struct EngineRegistry {
    external: BTreeMap<String, Arc<dyn CutReleaser>>,
}

impl EngineRegistry {
    pub fn new() -> EngineRegistry {
        EngineRegistry::default()
    }

    pub fn register(&mut self, name: &str, engine: Arc<dyn CutReleaser>) {
        self.external.insert(name.to_string(), engine);
    }

    pub fn resolve(&self, key: &str) -> Result<Arc<dyn CutReleaser>> {
        match key {
            "laplace" => Ok(Arc::new(LaplaceEngine::default())),
            "laplace-clip" => Ok(Arc::new(LaplaceEngine { post: PostProcess::Clip })),
            "zero-noise-test" => Ok(Arc::new(ZeroNoiseEngine)),
            other => match other.strip_prefix("external:") {
                Some(name) => self
                    .external
                    .get(name)
                    .cloned()
                    .ok_or_else(|| invalid(format!("no external engine registered as `{name}`"))),
                None => Err(invalid(format!("unknown release engine `{other}`"))),
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct WeightedRelease {
    pub graph: DoubleEdgedGraph,
    pub output: ReleaseOutput,
    pub plus: ChannelRelease,
    pub minus: ChannelRelease,
}

/// Releases `g` with `engine`, spending half of `params` on each channel.
pub fn release_weighted<R: Rng + ?Sized>(
    g: &SignedGraph,
    params: PrivacyParams,
    engine: &dyn CutReleaser,
    rng: &mut R,
) -> Result<WeightedRelease> {
    let half = params.halved();
    engine.check_params(half)?;
    let seed: u64 = rng.gen();
    let plus = engine.release(&g.positive_channel(), half, &mut stream(seed, 1))?;
    let minus = engine.release(&g.negative_channel(), half, &mut stream(seed, 2))?;
    let graph = union_channels(&plus.channel, &minus.channel)?;
    let audit = match (&plus.audit, &minus.audit) {
        (Some(a), Some(b)) => Some(if a.lambda >= b.lambda { a.clone() } else { b.clone() }),
        (a, b) => a.clone().or_else(|| b.clone()),
    };
    let output = ReleaseOutput {
        mechanism: engine.name(),
        epsilon: params.epsilon,
        delta: params.delta,
        noise_scale: plus.noise_scale,
        channel_epsilon: half.epsilon,
        channel_delta: half.delta,
        postprocess: "per-engine".into(),
        audit,
        private: engine.is_private(),
        seed,
    };
    Ok(WeightedRelease { graph, output, plus, minus })
}

/// Combines released channels into one graph: the positive channel's weight
/// becomes the pair's `+` edge and the negative channel's its `−` edge.
pub fn union_channels(plus: &WeightedChannel, minus: &WeightedChannel) -> Result<DoubleEdgedGraph> {
    let n = plus.n();
    if minus.n() != n {
        return Err(contract(format!("channel sizes differ: {} vs {}", n, minus.n())));
    }
    let w: Vec<PairWeight> = plus
        .as_slice()
        .iter()
        .zip(minus.as_slice())
        .map(|(&p, &m)| PairWeight { pos: p, neg: m })
        .collect();
    if w.iter().any(|pw| pw.pos < 0.0 || pw.neg < 0.0) {
        return Err(contract("released channel has a negative weight"));
    }
    let g = SignedGraph::from_pair_weights(n, w, true)?;
    debug_assert!(g.edges().iter().all(|e| e.weight > 0.0 && matches!(e.sign, Sign::Pos | Sign::Neg)));
    Ok(g)
}
