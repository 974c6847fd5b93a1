//! `dpcc`: private correlation clustering from the command line.
//!
//! Exit codes: 0 on success, 2 for contract violations and bad input,
//! 3 when a request exceeds a size limit, 1 for I/O failures.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;

use dpcc::edgelist::{read_edge_list, write_edge_list};
use dpcc::error::{Error, Result};
use dpcc::exp_mech::max_log_ratio;
use dpcc::experiments::{
    generate_instance, is_unweighted_mechanism, run_matrix, run_pipeline, write_records, InstanceKind, InstanceSpec,
    MatrixConfig, MatrixSink, OutputFormat, PipelineMechanism, PipelineSpec, PrivateGraph, RunOptions, SolverKind,
};
use dpcc::graph::{disagreement, pairs, Clustering, PrivacyParams, Sign, SignedGraph};
use dpcc::lowerbound::{brute_force_code, packing_experiment, ClusteringMechanism, ExpMechanism};
use dpcc::release::unweighted::{release_unweighted, MergeConfig, MergeStrategy, NoiseMode, UnweightedConfig};
use dpcc::release::weighted::{release_weighted, EngineRegistry};
use dpcc::release::ReleaseOutput;
use dpcc::rng::{derive, seeded, stream};
use dpcc::cuts::sampled_cut_distance;
use dpcc::solvers::{pivot_kwikcluster, solve, solve_exact, SolverConfig, EXACT_HARD_MAX_N};
use dpcc::transforms::{coarsen, default_k_prime, split_transform, unsplit};

#[derive(Parser)]
#[command(name = "dpcc", version, about = "Differentially private correlation clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Jsonl => OutputFormat::Jsonl,
        }
    }
}

/// Flags shared by every subcommand; each uses the ones that apply.
#[derive(Args, Clone, Debug)]
struct Common {
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input edge list (or matrix TOML for `matrix`).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output path; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Release mechanism, e.g. unweighted-lp, unweighted-per-edge, laplace,
    /// laplace-clip, zero-noise-test, exp-mech, none.
    #[arg(long)]
    mechanism: Option<String>,
    /// auto, exact or pivot.
    #[arg(long, default_value = "auto")]
    solver: String,
    /// Cluster-count cap.
    #[arg(long)]
    k: Option<usize>,
}

impl Common {
    fn params(&self) -> Result<PrivacyParams> {
        PrivacyParams::new(self.epsilon, self.delta)
    }

    fn solver(&self) -> Result<SolverKind> {
        self.solver.parse()
    }

    fn read_graph(&self) -> Result<SignedGraph> {
        let path = self.input.as_ref().ok_or_else(|| Error::InvalidParameter("--input is required".into()))?;
        read_edge_list(BufReader::new(File::open(path)?))
    }

    fn writer(&self) -> Result<Box<dyn Write>> {
        open_output(self.output.as_deref())
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Instance generator flags.
#[derive(Args, Clone, Debug)]
struct GenArgs {
    #[arg(long, value_enum, default_value_t = Kind::Planted)]
    kind: Kind,
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// Planted cluster count.
    #[arg(long = "planted-k", default_value_t = 4)]
    planted_k: usize,
    /// Planted flip probability.
    #[arg(long, default_value_t = 0.05)]
    p: f64,
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    #[arg(long, default_value_t = 1.0)]
    max_weight: f64,
    /// Instance seed (defaults to --seed).
    #[arg(long)]
    instance_seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Planted,
    RandomSigns,
    Path,
    WeightedRandom,
}

impl GenArgs {
    fn spec(&self, seed: u64) -> InstanceSpec {
        InstanceSpec {
            kind: match self.kind {
                Kind::Planted => InstanceKind::Planted,
                Kind::RandomSigns => InstanceKind::RandomSigns,
                Kind::Path => InstanceKind::Path,
                Kind::WeightedRandom => InstanceKind::WeightedRandom,
            },
            n: self.n,
            k: self.planted_k,
            p: self.p,
            density: self.density,
            max_weight: self.max_weight,
            seed: self.instance_seed.unwrap_or(seed),
            file: None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance as an edge list.
    Generate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        gen: GenArgs,
        /// Also write the planted clustering (one label per line).
        #[arg(long)]
        truth_output: Option<PathBuf>,
    },
    /// Release a private synthetic graph.
    Release {
        #[command(flatten)]
        common: Common,
        /// Release metadata as JSON; standard error when absent.
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Cluster a (released) graph without further privacy cost.
    Cluster {
        #[command(flatten)]
        common: Common,
        /// Solve on the vertex-split graph.
        #[arg(long)]
        split: bool,
        /// Coarsen the result to about k' clusters.
        #[arg(long)]
        coarsen: bool,
        #[arg(long)]
        k_prime: Option<usize>,
    },
    /// Release, cluster, and score against the input.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long)]
        split: bool,
        #[arg(long)]
        coarsen: bool,
        #[arg(long)]
        k_prime: Option<usize>,
        /// Record wall-clock time.
        #[arg(long)]
        timing: bool,
    },
    /// Run an experiment matrix described by a TOML file.
    Matrix {
        #[command(flatten)]
        common: Common,
        /// Matrix TOML (alternative to --input).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Keep records already in --output and run only the missing ones.
        #[arg(long)]
        resume: bool,
    },
    /// Check the exponential mechanism's privacy bound exactly on random
    /// graphs and every single-edge flip.
    VerifyDp {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        instances: usize,
    },
    /// Packing experiment on path instances built from a distance code.
    Lowerbound {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        #[arg(long, default_value_t = 16)]
        target: usize,
        #[arg(long, default_value_t = 1_000_000)]
        budget: u64,
        /// Common edge weight of the paths.
        #[arg(long, default_value_t = 1.0, conflicts_with = "weighted_lambda")]
        lambda: f64,
        /// Use the weight alpha / (2 epsilon) from the code rate instead.
        #[arg(long)]
        weighted_lambda: bool,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
    },
    /// Estimate the cut distance between two graphs, channel by channel.
    AuditCuts {
        #[command(flatten)]
        common: Common,
        /// Graph to compare with --input.
        #[arg(long)]
        compare: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dpcc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate { common, gen, truth_output } => {
            let inst = generate_instance(&gen.spec(common.seed))?;
            write_edge_list(&inst.graph, common.writer()?)?;
            if let (Some(path), Some(t)) = (truth_output, inst.truth) {
                write_labels(&t, OutputFormat::Csv, open_output(Some(&path))?)?;
            }
            Ok(())
        }
        Command::Release { common, meta } => {
            let g = common.read_graph()?;
            let params = common.params()?;
            let mechanism = common.mechanism.clone().unwrap_or_else(|| default_mechanism(&g).into());
            let mut rng = seeded(common.seed);
            let (h, output): (SignedGraph, ReleaseOutput) = if is_unweighted_mechanism(&mechanism) {
                let cfg = unweighted_config(&mechanism);
                let r = release_unweighted(&g, params, &cfg, &mut rng)?;
                (r.graph, r.output)
            } else {
                let engine = EngineRegistry::new().resolve(&mechanism)?;
                let r = release_weighted(&g, params, engine.as_ref(), &mut rng)?;
                (r.graph, r.output)
            };
            write_edge_list(&h, common.writer()?)?;
            let text = serde_json::to_string_pretty(&output)?;
            match meta {
                Some(p) => std::fs::write(p, text + "\n")?,
                None => eprintln!("{text}"),
            }
            Ok(())
        }
        Command::Cluster { common, split, coarsen: do_coarsen, k_prime } => {
            let h = common.read_graph()?;
            let kind = common.solver()?;
            let cfg = SolverConfig {
                max_clusters: common.k,
                seed: common.seed,
                exact_limit: if split { 16 } else { SolverConfig::default().exact_limit }.min(EXACT_HARD_MAX_N),
                ..Default::default()
            };
            let solve_one = |g: &SignedGraph| match kind {
                SolverKind::Auto => solve(g, &cfg),
                SolverKind::Exact => solve_exact(g, &cfg),
                SolverKind::Pivot => Ok(pivot_kwikcluster(g, &mut stream(cfg.seed, 0))),
            };
            let mut c = if split {
                let (hs, map) = split_transform(&h)?;
                unsplit(&solve_one(&hs)?, &map)?
            } else {
                solve_one(&h)?
            };
            if do_coarsen {
                let kp = k_prime.unwrap_or_else(|| default_k_prime(h.n()));
                c = coarsen(&c, h.n(), kp, h.max_weight())?.0;
            }
            eprintln!("k = {}, err on input = {}", c.k(), disagreement(&c, &h)?);
            write_labels(&c, common.format.into(), common.writer()?)
        }
        Command::Pipeline { common, gen, split, coarsen, k_prime, timing } => {
            let params = common.params()?;
            let (g, truth, descriptor) = match &common.input {
                Some(p) => (common.read_graph()?, None, format!("file({})", p.display())),
                None => {
                    let spec = gen.spec(common.seed);
                    let inst = generate_instance(&spec)?;
                    (inst.graph, inst.truth, spec.descriptor())
                }
            };
            let mechanism = common.mechanism.clone().unwrap_or_else(|| default_mechanism(&g).into());
            let spec = PipelineSpec {
                mechanism,
                solver: common.solver()?,
                coarsen,
                k_prime,
                split,
                max_clusters: common.k,
                ..Default::default()
            };
            let opts = RunOptions { instance: descriptor, timing, ..Default::default() };
            let pg = PrivateGraph::new(g);
            let out = run_pipeline(&pg, &params, &spec, truth.as_ref(), common.seed, &EngineRegistry::new(), &opts)?;
            write_records(&[out.record], common.format.into(), true, common.writer()?)
        }
        Command::Matrix { common, config, resume } => {
            let path = config
                .or(common.input.clone())
                .ok_or_else(|| Error::InvalidParameter("--config or --input is required".into()))?;
            let cfg = MatrixConfig::from_toml(&std::fs::read_to_string(path)?)?;
            let reg = EngineRegistry::new();
            match &common.output {
                Some(out) => {
                    let sink = MatrixSink { path: out, format: common.format.into(), resume };
                    let recs = run_matrix(&cfg, Some(sink), &reg)?;
                    let failed = recs.iter().filter(|r| r.error.is_some()).count();
                    eprintln!("{} records ({} failed)", recs.len(), failed);
                }
                None => {
                    if resume {
                        return Err(Error::InvalidParameter("--resume needs --output".into()));
                    }
                    let recs = run_matrix(&cfg, None, &reg)?;
                    write_records(&recs, common.format.into(), true, common.writer()?)?;
                }
            }
            Ok(())
        }
        Command::VerifyDp { common, n, instances } => {
            let params = PrivacyParams::pure(common.epsilon)?;
            let mut worst: f64 = 0.0;
            let mut checked = 0usize;
            for i in 0..instances {
                let mut rng = stream(common.seed, i as u64);
                let g = SignedGraph::complete_unweighted(n, |_, _| if rng.gen_bool(0.5) { Sign::Pos } else { Sign::Neg });
                for (u, v) in pairs(n) {
                    worst = worst.max(max_log_ratio(&g, &g.with_flipped(u, v)?, &params)?);
                    checked += 1;
                }
            }
            let holds = worst <= common.epsilon + 1e-9;
            let summary = serde_json::json!({
                "n": n,
                "instances": instances,
                "neighbour_pairs": checked,
                "epsilon": common.epsilon,
                "max_log_ratio": worst,
                "holds": holds,
            });
            writeln!(common.writer()?, "{summary}")?;
            if holds {
                Ok(())
            } else {
                Err(Error::Contract(format!("privacy bound violated: {worst} > {}", common.epsilon)))
            }
        }
        Command::Lowerbound { common, n, beta, target, budget, lambda, weighted_lambda, repetitions } => {
            let params = PrivacyParams::pure(common.epsilon)?;
            let code = brute_force_code(n, beta, target, &mut stream(common.seed, 0), budget)?;
            if !code.reached_target {
                eprintln!("code search stopped at {} of {} codewords", code.len(), target);
            }
            let lambda = if weighted_lambda { dpcc::lowerbound::weighted_lambda(code.alpha(), common.epsilon)? } else { lambda };
            let mechanism: Box<dyn ClusteringMechanism> = match common.mechanism.as_deref().unwrap_or("exp-mech") {
                // weighted paths need the sensitivity-2 variant
                "exp-mech" => Box::new(ExpMechanism { sensitivity: (lambda != 1.0).then_some(2.0) }),
                other => Box::new(PipelineMechanism {
                    spec: PipelineSpec { mechanism: other.into(), solver: common.solver()?, ..Default::default() },
                    registry: EngineRegistry::new(),
                }),
            };
            let report = packing_experiment(mechanism.as_ref(), &params, lambda, &code, repetitions, derive(common.seed, &[1]))?;
            if !report.bound_applies {
                eprintln!("note: the packing bound is only claimed for epsilon <= 0.2");
            }
            eprintln!(
                "lambda = {}, alpha = {:.3}, radius = {}, theory bound = {:.3}, mean error = {:.3}",
                report.lambda,
                report.alpha,
                report.radius,
                report.theory_bound,
                report.mean_error()
            );
            let mut w = common.writer()?;
            match common.format {
                Format::Csv => report.write_csv(w)?,
                Format::Jsonl => {
                    for row in &report.rows {
                        serde_json::to_writer(&mut w, row)?;
                        w.write_all(b"\n")?;
                    }
                    w.flush()?;
                }
            }
            Ok(())
        }
        Command::AuditCuts { common, compare, samples } => {
            let g = common.read_graph()?;
            let h = read_edge_list(BufReader::new(File::open(compare)?))?;
            let mut rng = seeded(common.seed);
            let plus = sampled_cut_distance(&g.positive_channel(), &h.positive_channel(), samples, &mut rng)?;
            let minus = sampled_cut_distance(&g.negative_channel(), &h.negative_channel(), samples, &mut rng)?;
            let summary = serde_json::json!({
                "n": g.n(),
                "samples": samples,
                "positive_channel": plus,
                "negative_channel": minus,
                "max": plus.max(minus),
            });
            writeln!(common.writer()?, "{summary}")?;
            Ok(())
        }
    }
}

fn default_mechanism(g: &SignedGraph) -> &'static str {
    if g.is_complete() && g.is_unweighted() && !g.allows_parallel() {
        "unweighted-lp"
    } else {
        "laplace"
    }
}

fn unweighted_config(mechanism: &str) -> UnweightedConfig {
    let mut merge = MergeConfig::default();
    if mechanism == "unweighted-per-edge" {
        merge.strategy = MergeStrategy::PerEdge;
    }
    let noise = if mechanism == "unweighted-zero" { NoiseMode::ZeroNonPrivate } else { NoiseMode::Laplace };
    UnweightedConfig { merge, noise }
}

fn write_labels(c: &Clustering, format: OutputFormat, mut w: Box<dyn Write>) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            writeln!(w, "vertex,cluster")?;
            for (v, l) in c.labels().iter().enumerate() {
                writeln!(w, "{v},{l}")?;
            }
        }
        OutputFormat::Jsonl => {
            for (v, l) in c.labels().iter().enumerate() {
                writeln!(w, "{}", serde_json::json!({ "vertex": v, "cluster": l }))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
