//! Instance generators, the release → solve → coarsen pipeline, and the
//! experiment matrix runner with CSV / JSON-lines output.
//!
//! The private input only enters a pipeline through [`PrivateGraph`], which
//! hands it out once for the release and once more, labelled, for the
//! evaluation of the final clustering. Everything between those two reads
//! sees the released graph only.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edgelist::read_edge_list;
use crate::error::{invalid, Error, Result};
use crate::exp_mech::exponential_mechanism;
use crate::graph::{agreement, disagreement, pairs, Clustering, Edge, PrivacyParams, Sign, SignedGraph};
use crate::lowerbound::{optimal_path_clustering, path_graph, ClusteringMechanism, SignVector};
use crate::release::unweighted::{release_unweighted, MergeConfig, MergeStrategy, NoiseMode, UnweightedConfig};
use crate::release::weighted::{release_weighted, EngineRegistry};
use crate::rng::{derive, seeded, stream, DetRng};
use crate::solvers::{pivot_kwikcluster, solve, solve_exact, Objective, SolverConfig, EXACT_HARD_MAX_N};
use crate::transforms::{coarsen, default_k_prime, split_transform, unsplit, CoarsenReport};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceKind {
    #[default]
    Planted,
    RandomSigns,
    Path,
    WeightedRandom,
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceSpec {
    pub kind: InstanceKind,
    pub n: usize,
    /// Planted cluster count.
    pub k: usize,
    /// Planted sign-flip probability.
    pub p: f64,
    /// `weighted-random`: chance that each pair carries an edge of a given
    /// sign (drawn independently for both signs).
    pub density: f64,
    /// `weighted-random`: weights are uniform on `(0, max_weight]`;
    /// `path`: the common edge weight.
    pub max_weight: f64,
    pub seed: u64,
    /// Edge-list file for `file` instances.
    pub file: Option<PathBuf>,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        InstanceSpec {
            kind: InstanceKind::Planted,
            n: 50,
            k: 4,
            p: 0.05,
            density: 0.5,
            max_weight: 1.0,
            seed: 0,
            file: None,
        }
    }
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kind != InstanceKind::File && self.n < 2 {
            return Err(invalid(format!("instances need n >= 2, got {}", self.n)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(invalid(format!("flip probability must lie in [0, 1], got {}", self.p)));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(invalid(format!("density must lie in [0, 1], got {}", self.density)));
        }
        if self.kind == InstanceKind::Planted && (self.k == 0 || self.k > self.n) {
            return Err(invalid(format!("planted k must lie in 1..=n, got {}", self.k)));
        }
        if !(self.max_weight.is_finite() && self.max_weight > 0.0) {
            return Err(invalid(format!("max_weight must be positive, got {}", self.max_weight)));
        }
        if self.kind == InstanceKind::File && self.file.is_none() {
            return Err(invalid("file instances need a `file` path"));
        }
        Ok(())
    }

    /// Short human-readable label used in records.
    pub fn descriptor(&self) -> String {
        match self.kind {
            InstanceKind::Planted => format!("planted(n={},k={},p={},seed={})", self.n, self.k, self.p, self.seed),
            InstanceKind::RandomSigns => format!("random-signs(n={},seed={})", self.n, self.seed),
            InstanceKind::Path => format!("path(n={},w={},seed={})", self.n, self.max_weight, self.seed),
            InstanceKind::WeightedRandom => format!(
                "weighted-random(n={},density={},max_weight={},seed={})",
                self.n, self.density, self.max_weight, self.seed
            ),
            InstanceKind::File => {
                format!("file({})", self.file.as_deref().map(|p| p.display().to_string()).unwrap_or_default())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub graph: SignedGraph,
    /// The planted clustering, or the zero-error clustering of a path.
    pub truth: Option<Clustering>,
}

/// Cluster of vertex `v` in the planted partition: contiguous blocks whose
/// sizes differ by at most one.
pub fn planted_label(v: usize, n: usize, k: usize) -> usize {
    v * k / n
}

pub fn generate_instance(spec: &InstanceSpec) -> Result<Instance> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let n = spec.n;
    match spec.kind {
        InstanceKind::Planted => {
            let labels: Vec<usize> = (0..n).map(|v| planted_label(v, n, spec.k)).collect();
            let graph = SignedGraph::complete_unweighted(n, |u, v| {
                let agree = if labels[u] == labels[v] { Sign::Pos } else { Sign::Neg };
                if rng.gen::<f64>() < spec.p {
                    agree.flip()
                } else {
                    agree
                }
            });
            Ok(Instance { graph, truth: Some(Clustering::from_labels(&labels)) })
        }
        InstanceKind::RandomSigns => {
            let graph =
                SignedGraph::complete_unweighted(n, |_, _| if rng.gen_bool(0.5) { Sign::Pos } else { Sign::Neg });
            Ok(Instance { graph, truth: None })
        }
        InstanceKind::Path => {
            let sigma = SignVector::random(n - 1, &mut rng);
            let graph = path_graph(&sigma, spec.max_weight)?;
            Ok(Instance { graph, truth: Some(optimal_path_clustering(&sigma)) })
        }
        InstanceKind::WeightedRandom => {
            let mut edges = Vec::new();
            for (u, v) in pairs(n) {
                for sign in [Sign::Pos, Sign::Neg] {
                    if rng.gen::<f64>() < spec.density {
                        // (0, max] rather than [0, max): zero weights would vanish
                        let w = spec.max_weight * (1.0 - rng.gen::<f64>());
                        edges.push(Edge::new(u, v, sign, w));
                    }
                }
            }
            Ok(Instance { graph: SignedGraph::from_edges(n, edges, true)?, truth: None })
        }
        InstanceKind::File => {
            let path = spec.file.as_ref().expect("validated");
            let graph = read_edge_list(BufReader::new(File::open(path)?))?;
            Ok(Instance { graph, truth: None })
        }
    }
}

/// The private input of a pipeline. Reads are counted per purpose, and a
/// test can arrange for the stored graph to be swapped for another one right
/// after the release read: a pipeline whose later stages still consulted the
/// input would then change its output.
pub struct PrivateGraph {
    graph: Mutex<SignedGraph>,
    swap_after_release: Mutex<Option<SignedGraph>>,
    n: usize,
    release_reads: AtomicUsize,
    eval_reads: AtomicUsize,
}

impl PrivateGraph {
    pub fn new(g: SignedGraph) -> PrivateGraph {
        let n = g.n();
        PrivateGraph {
            graph: Mutex::new(g),
            swap_after_release: Mutex::new(None),
            n,
            release_reads: AtomicUsize::new(0),
            eval_reads: AtomicUsize::new(0),
        }
    }

    /// Like [`PrivateGraph::new`], but after the first release read the
    /// stored graph is replaced by `replacement`.
    pub fn with_swap_after_release(g: SignedGraph, replacement: SignedGraph) -> PrivateGraph {
        let p = PrivateGraph::new(g);
        *p.swap_after_release.lock().unwrap() = Some(replacement);
        p
    }

    /// The vertex count is public.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn read_for_release(&self) -> SignedGraph {
        self.release_reads.fetch_add(1, Ordering::SeqCst);
        let mut g = self.graph.lock().unwrap();
        let out = g.clone();
        if let Some(r) = self.swap_after_release.lock().unwrap().take() {
            *g = r;
        }
        out
    }

    /// Read used only to score the final clustering. Records built from it
    /// carry `nonprivate_eval = true`.
    pub fn read_for_evaluation(&self) -> SignedGraph {
        self.eval_reads.fetch_add(1, Ordering::SeqCst);
        self.graph.lock().unwrap().clone()
    }

    pub fn release_reads(&self) -> usize {
        self.release_reads.load(Ordering::SeqCst)
    }

    pub fn eval_reads(&self) -> usize {
        self.eval_reads.load(Ordering::SeqCst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Exact oracle for small graphs, otherwise pivot plus local search.
    Auto,
    Exact,
    Pivot,
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SolverKind::Auto),
            "exact" => Ok(SolverKind::Exact),
            "pivot" => Ok(SolverKind::Pivot),
            other => Err(invalid(format!("unknown solver `{other}` (expected auto, exact or pivot)"))),
        }
    }
}

impl SolverKind {
    pub fn tag(self) -> &'static str {
        match self {
            SolverKind::Auto => "auto",
            SolverKind::Exact => "exact",
            SolverKind::Pivot => "pivot",
        }
    }
}

/// Release mechanisms a pipeline can start with.
///
/// * `unweighted-lp`, `unweighted-per-edge`: two-channel Laplace release of
///   a complete unweighted graph, merged by the sampled LP or per edge.
/// * `unweighted-zero`: the same without noise (not private).
/// * `laplace`, `laplace-clip`, `zero-noise-test`, `external:<name>`:
///   weighted release through an engine of the [`EngineRegistry`].
/// * `exp-mech`: the exponential mechanism, which outputs a clustering
///   directly.
/// * `none`: solve the input itself (not private).
pub fn is_unweighted_mechanism(name: &str) -> bool {
    matches!(name, "unweighted-lp" | "unweighted-per-edge" | "unweighted-zero")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSpec {
    pub mechanism: String,
    pub solver: SolverKind,
    /// Coarsen the solver output to about `k'` clusters.
    pub coarsen: bool,
    /// `None` means `⌈n^{1/4}⌉`.
    pub k_prime: Option<usize>,
    /// Solve on the vertex-split graph and map back.
    pub split: bool,
    pub max_clusters: Option<usize>,
    pub objective: Objective,
    pub restarts: usize,
    pub max_passes: usize,
    /// Exact-oracle limit; `None` means 12, or 16 on split graphs (whose
    /// coupling edges keep the search small).
    pub exact_limit: Option<usize>,
    pub merge: MergeConfig,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        let s = SolverConfig::default();
        PipelineSpec {
            mechanism: "unweighted-lp".into(),
            solver: SolverKind::Auto,
            coarsen: false,
            k_prime: None,
            split: false,
            max_clusters: None,
            objective: s.objective,
            restarts: s.restarts,
            max_passes: s.max_passes,
            exact_limit: None,
            merge: MergeConfig::default(),
        }
    }
}

impl PipelineSpec {
    /// Release, solve, then coarsen: the pipeline for complete unweighted
    /// graphs.
    pub fn unweighted() -> PipelineSpec {
        PipelineSpec { coarsen: true, ..Default::default() }
    }

    /// Weighted release with `engine`, then solve on the split graph.
    pub fn weighted(engine: &str) -> PipelineSpec {
        PipelineSpec { mechanism: engine.into(), split: true, ..Default::default() }
    }

    pub fn label(&self) -> String {
        let mut s = format!("{}/{}", self.mechanism, self.solver.tag());
        if self.split {
            s.push_str("/split");
        }
        if self.coarsen {
            s.push_str("/coarsen");
        }
        s
    }

    fn solver_config(&self, seed: u64, split: bool) -> SolverConfig {
        let default_limit = if split { 16 } else { SolverConfig::default().exact_limit };
        SolverConfig {
            objective: self.objective,
            max_clusters: self.max_clusters,
            seed,
            max_passes: self.max_passes,
            restarts: self.restarts,
            exact_limit: self.exact_limit.unwrap_or(default_limit).min(EXACT_HARD_MAX_N),
        }
    }
}

/// One row of experiment output. Fields that depend on the private input
/// (`err`, `agr`, `total_weight`, `planted_cost`, the η estimates) come
/// from the evaluation read and are marked by `nonprivate_eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub cell: usize,
    pub rep: usize,
    pub instance: String,
    pub n: usize,
    pub pipeline: String,
    pub mechanism: String,
    pub solver: String,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub err: Option<f64>,
    pub agr: Option<f64>,
    pub total_weight: Option<f64>,
    pub k_out: Option<usize>,
    /// Disagreement of the planted clustering on the input.
    pub planted_cost: Option<f64>,
    /// Disagreement of the output on the released graph.
    pub err_on_release: Option<f64>,
    /// `|err(C, H) − err(C, G)|` for the output clustering.
    pub eta_output: Option<f64>,
    /// The same deviation for the planted clustering.
    pub eta_planted: Option<f64>,
    pub audit_lambda: Option<f64>,
    pub coarsen_k_before: Option<usize>,
    pub coarsen_k_after: Option<usize>,
    pub coarsen_bound: Option<f64>,
    pub private: Option<bool>,
    pub nonprivate_eval: bool,
    pub wall_ms: Option<u64>,
    pub error: Option<String>,
}

impl ExperimentRecord {
    fn blank(cell: usize, rep: usize, instance: String, n: usize, spec: &PipelineSpec, params: &PrivacyParams, seed: u64) -> Self {
        ExperimentRecord {
            cell,
            rep,
            instance,
            n,
            pipeline: spec.label(),
            mechanism: spec.mechanism.clone(),
            solver: spec.solver.tag().into(),
            epsilon: params.epsilon,
            delta: params.delta,
            seed,
            err: None,
            agr: None,
            total_weight: None,
            k_out: None,
            planted_cost: None,
            err_on_release: None,
            eta_output: None,
            eta_planted: None,
            audit_lambda: None,
            coarsen_k_before: None,
            coarsen_k_after: None,
            coarsen_bound: None,
            private: None,
            nonprivate_eval: false,
            wall_ms: None,
            error: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub clustering: Clustering,
    pub record: ExperimentRecord,
    /// The released graph, when the mechanism produces one.
    pub released: Option<SignedGraph>,
    pub coarsen: Option<CoarsenReport>,
}

/// Options for one pipeline run that do not affect its result.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub instance: String,
    pub cell: usize,
    pub rep: usize,
    pub timing: bool,
}

fn solve_with(kind: SolverKind, h: &SignedGraph, cfg: &SolverConfig) -> Result<Clustering> {
    match kind {
        SolverKind::Auto => solve(h, cfg),
        SolverKind::Exact => solve_exact(h, cfg),
        SolverKind::Pivot => Ok(pivot_kwikcluster(h, &mut stream(cfg.seed, 0))),
    }
}

/// Releases the input, clusters the released graph, optionally coarsens,
/// and scores the result on the input. Release randomness comes from
/// stream 0 of `seed` and solver randomness from a seed derived from it,
/// so the whole outcome is a function of `(input, params, spec, seed)`.
pub fn run_pipeline(
    g: &PrivateGraph,
    params: &PrivacyParams,
    spec: &PipelineSpec,
    truth: Option<&Clustering>,
    seed: u64,
    registry: &EngineRegistry,
    opts: &RunOptions,
) -> Result<PipelineOutcome> {
    let started = Instant::now();
    let n = g.n();
    let mut record = ExperimentRecord::blank(opts.cell, opts.rep, opts.instance.clone(), n, spec, params, seed);
    let mut release_rng = stream(seed, 0);
    let solver_seed = derive(seed, &[1]);

    // Release stage: the only access to the input before evaluation.
    let (released, direct, private) = match spec.mechanism.as_str() {
        name if is_unweighted_mechanism(name) => {
            let cfg = UnweightedConfig {
                merge: MergeConfig {
                    strategy: if name == "unweighted-per-edge" { MergeStrategy::PerEdge } else { spec.merge.strategy },
                    ..spec.merge.clone()
                },
                noise: if name == "unweighted-zero" { NoiseMode::ZeroNonPrivate } else { NoiseMode::Laplace },
            };
            let r = release_unweighted(&g.read_for_release(), *params, &cfg, &mut release_rng)?;
            record.audit_lambda = Some(r.merge.lambda);
            (Some(r.graph), None, r.output.private)
        }
        "exp-mech" => {
            let c = exponential_mechanism(&g.read_for_release(), params, spec.objective, &mut release_rng)?;
            (None, Some(c), true)
        }
        "none" => (Some(g.read_for_release()), None, false),
        engine => {
            let engine = registry.resolve(engine)?;
            let r = release_weighted(&g.read_for_release(), *params, engine.as_ref(), &mut release_rng)?;
            record.audit_lambda = r.output.audit.as_ref().map(|a| a.lambda);
            (Some(r.graph), None, r.output.private)
        }
    };
    record.private = Some(private);

    // Solve stage: sees the released graph only.
    let mut clustering = match (&released, direct) {
        (_, Some(c)) => c,
        (Some(h), None) if spec.split => {
            let (hs, map) = split_transform(h)?;
            let c = solve_with(spec.solver, &hs, &spec.solver_config(solver_seed, true))?;
            unsplit(&c, &map)?
        }
        (Some(h), None) => solve_with(spec.solver, h, &spec.solver_config(solver_seed, false))?,
        (None, None) => unreachable!("every mechanism yields a graph or a clustering"),
    };
    let mut report = None;
    if spec.coarsen {
        let k_prime = spec.k_prime.unwrap_or_else(|| default_k_prime(n));
        let w = released.as_ref().map_or(1.0, |h| h.max_weight());
        let (c, r) = coarsen(&clustering, n, k_prime, w)?;
        record.coarsen_k_before = Some(r.k_before);
        record.coarsen_k_after = Some(r.k_after);
        record.coarsen_bound = Some(r.merge_cost_bound);
        clustering = c;
        report = Some(r);
    }

    // Evaluation: an explicitly labelled read of the input.
    let truth_graph = g.read_for_evaluation();
    let err = disagreement(&clustering, &truth_graph)?;
    let agr = agreement(&clustering, &truth_graph)?;
    record.nonprivate_eval = true;
    record.err = Some(err);
    record.agr = Some(agr);
    record.total_weight = Some(truth_graph.total_weight());
    record.k_out = Some(clustering.k());
    if let Some(t) = truth {
        record.planted_cost = Some(disagreement(t, &truth_graph)?);
    }
    if let Some(h) = &released {
        let on_h = disagreement(&clustering, h)?;
        record.err_on_release = Some(on_h);
        record.eta_output = Some((on_h - err).abs());
        if let Some(t) = truth {
            record.eta_planted = Some((disagreement(t, h)? - disagreement(t, &truth_graph)?).abs());
        }
    }
    if opts.timing {
        record.wall_ms = Some(started.elapsed().as_millis() as u64);
    }
    Ok(PipelineOutcome { clustering, record, released, coarsen: report })
}

/// A pipeline as a [`ClusteringMechanism`], for the packing experiment.
pub struct PipelineMechanism {
    pub spec: PipelineSpec,
    pub registry: EngineRegistry,
}

impl ClusteringMechanism for PipelineMechanism {
    fn name(&self) -> String {
        self.spec.label()
    }

    fn cluster(&self, g: &SignedGraph, params: &PrivacyParams, rng: &mut DetRng) -> Result<Clustering> {
        let pg = PrivateGraph::new(g.clone());
        let seed = rng.gen();
        Ok(run_pipeline(&pg, params, &self.spec, None, seed, &self.registry, &RunOptions::default())?.clustering)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" => Ok(OutputFormat::Jsonl),
            other => Err(invalid(format!("unknown format `{other}` (expected csv or jsonl)"))),
        }
    }
}

/// Writes `records`; CSV output starts with a header line when `header`.
pub fn write_records<W: Write>(records: &[ExperimentRecord], format: OutputFormat, header: bool, mut w: W) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut out = csv::WriterBuilder::new().has_headers(header).from_writer(&mut w);
            for r in records {
                out.serialize(r)?;
            }
            out.flush()?;
        }
        OutputFormat::Jsonl => {
            for r in records {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(format: OutputFormat, r: R) -> Result<Vec<ExperimentRecord>> {
    match format {
        OutputFormat::Csv => {
            let mut rd = csv::Reader::from_reader(r);
            rd.deserialize().map(|x| x.map_err(Error::from)).collect()
        }
        OutputFormat::Jsonl => BufReader::new(r)
            .lines()
            .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
            .map(|l| Ok(serde_json::from_str(&l?)?))
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub instances: Vec<InstanceSpec>,
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub delta: f64,
    pub pipelines: Vec<PipelineSpec>,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Record wall-clock time. Off by default because it makes output
    /// differ between otherwise identical runs.
    #[serde(default)]
    pub timing: bool,
}

fn one() -> usize {
    1
}

impl MatrixConfig {
    pub fn from_toml(text: &str) -> Result<MatrixConfig> {
        let cfg: MatrixConfig = toml::from_str(text)?;
        if cfg.repetitions == 0 {
            return Err(invalid("repetitions must be at least 1"));
        }
        for &e in &cfg.epsilons {
            PrivacyParams::new(e, cfg.delta)?;
        }
        Ok(cfg)
    }

    pub fn cell_count(&self) -> usize {
        self.instances.len() * self.epsilons.len() * self.pipelines.len()
    }

    /// `(instance, epsilon, pipeline)` indices of cell `c`; pipelines vary
    /// fastest.
    pub fn cell(&self, c: usize) -> (usize, usize, usize) {
        let p = self.pipelines.len();
        let e = self.epsilons.len();
        (c / (e * p), (c / p) % e, c % p)
    }

    /// Mechanism seed of `(cell, rep)`.
    pub fn seed(&self, cell: usize, rep: usize) -> u64 {
        derive(self.master_seed, &[cell as u64, rep as u64])
    }
}

/// Runs one `(cell, rep)` job. Failures become a record carrying the error
/// message, so one bad cell does not stop the matrix.
pub fn run_cell(cfg: &MatrixConfig, cell: usize, rep: usize, registry: &EngineRegistry) -> ExperimentRecord {
    let (i, e, p) = cfg.cell(cell);
    let spec = &cfg.instances[i];
    let pipeline = &cfg.pipelines[p];
    let seed = cfg.seed(cell, rep);
    let params = PrivacyParams { epsilon: cfg.epsilons[e], delta: cfg.delta };
    let opts = RunOptions { instance: spec.descriptor(), cell, rep, timing: cfg.timing };
    let outcome = generate_instance(spec).and_then(|inst| {
        let pg = PrivateGraph::new(inst.graph);
        run_pipeline(&pg, &params, pipeline, inst.truth.as_ref(), seed, registry, &opts)
    });
    match outcome {
        Ok(o) => o.record,
        Err(err) => {
            let mut r = ExperimentRecord::blank(cell, rep, opts.instance, spec.n, pipeline, &params, seed);
            r.error = Some(err.to_string());
            r
        }
    }
}

/// Drops a trailing partial line left by an interrupted writer and returns
/// the records already complete on disk.
fn recover(path: &Path, format: OutputFormat) -> Result<Vec<ExperimentRecord>> {
    let mut f = OpenOptions::new().read(true).write(true).open(path)?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if keep < bytes.len() {
        f.set_len(keep as u64)?;
        f.seek(SeekFrom::Start(keep as u64))?;
    }
    read_records(format, &bytes[..keep])
}

/// Where matrix records go.
pub struct MatrixSink<'a> {
    pub path: &'a Path,
    pub format: OutputFormat,
    /// Keep records already in the file and run only the missing jobs.
    pub resume: bool,
}

/// Runs every `(cell, rep)` job of the matrix. Jobs run in parallel in
/// batches; each batch is written in job order before the next starts, so
/// the file always holds a prefix of the full output and a resumed run
/// produces the same bytes as an uninterrupted one.
pub fn run_matrix(
    cfg: &MatrixConfig,
    sink: Option<MatrixSink<'_>>,
    registry: &EngineRegistry,
) -> Result<Vec<ExperimentRecord>> {
    let jobs: Vec<(usize, usize)> =
        (0..cfg.cell_count()).flat_map(|c| (0..cfg.repetitions).map(move |r| (c, r))).collect();
    let mut done: Vec<ExperimentRecord> = Vec::new();
    let mut writer: Option<(File, OutputFormat, bool)> = None;
    if let Some(s) = sink {
        let existing = if s.resume && s.path.exists() { recover(s.path, s.format)? } else { Vec::new() };
        let file = if s.resume && s.path.exists() {
            OpenOptions::new().append(true).open(s.path)?
        } else {
            File::create(s.path)?
        };
        let needs_header = file.metadata()?.len() == 0;
        done = existing;
        writer = Some((file, s.format, needs_header));
    }
    let finished: std::collections::BTreeSet<(usize, usize)> = done.iter().map(|r| (r.cell, r.rep)).collect();
    let pending: Vec<(usize, usize)> = jobs.into_iter().filter(|j| !finished.contains(j)).collect();
    let batch = (rayon::current_num_threads() * 2).max(1);
    for chunk in pending.chunks(batch) {
        let records: Vec<ExperimentRecord> = chunk.par_iter().map(|&(c, r)| run_cell(cfg, c, r, registry)).collect();
        if let Some((file, format, header)) = writer.as_mut() {
            write_records(&records, *format, *header, &mut *file)?;
            *header = false;
        }
        done.extend(records);
    }
    done.sort_by_key(|r| (r.cell, r.rep));
    Ok(done)
}
