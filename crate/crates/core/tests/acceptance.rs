//! Acceptance suite. Runs with a custom harness so that every criterion
//! prints one `PASS` or `FAIL` line even when the run succeeds. Pass
//! criterion numbers (e.g. `6 7`) as arguments to run a subset.

use std::cell::Cell;
use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::Rng;
use rayon::prelude::*;

use dpcc::cuts::{sampled_cut_distance, PairIndexer, SetPair};
use dpcc::exp_mech::{expected_error, max_log_ratio};
use dpcc::experiments::{
    generate_instance, run_matrix, run_pipeline, write_records, ExperimentRecord, InstanceKind, InstanceSpec,
    MatrixConfig, OutputFormat, PipelineSpec, PrivateGraph, RunOptions, SolverKind,
};
use dpcc::graph::{agreement, disagreement, pairs, Clustering, Edge, PrivacyParams, Sign, SignedGraph};
use dpcc::laplace;
use dpcc::lowerbound::{
    brute_force_code, good_sets_disjoint, hamming, min_max_error, optimal_path_clustering, pairwise_confusion_bound, path_graph,
    path_patterns, SignVector,
};
use dpcc::partitions::bell;
use dpcc::release::unweighted::{laplace_release, Noise};
use dpcc::release::weighted::EngineRegistry;
use dpcc::rng::{seeded, stream};
use dpcc::solvers::{pivot_kwikcluster, solve, solve_exact, SolverConfig};
use dpcc::transforms::coarsen;

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, started: Instant) -> (bool, String) {
    let t = started.elapsed();
    (t <= limit, format!("{:.1}s of {}s", t.as_secs_f64(), limit.as_secs()))
}

/// Least-squares slope of `ln y` against `ln x`.
fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

fn runner(cases: u32, seed: u8) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]))
}

fn random_signs(n: usize, seed: u64) -> SignedGraph {
    let mut rng = seeded(seed);
    SignedGraph::complete_unweighted(n, |_, _| if rng.gen_bool(0.5) { Sign::Pos } else { Sign::Neg })
}

fn planted(n: usize, k: usize, p: f64, seed: u64) -> dpcc::experiments::Instance {
    let spec = InstanceSpec { kind: InstanceKind::Planted, n, k, p, seed, ..Default::default() };
    generate_instance(&spec).unwrap()
}

/// Graph with each pair carrying an optional positive and an optional
/// negative weight, plus a clustering.
fn fuzzed_pair() -> impl Strategy<Value = (SignedGraph, Clustering, bool)> {
    (2usize..24, any::<bool>()).prop_flat_map(|(n, integer)| {
        let m = n * (n - 1) / 2;
        let weight = if integer { (1u32..=20).prop_map(f64::from).boxed() } else { (1e-3f64..1e3).boxed() };
        let slot = prop_oneof![Just(None), weight.prop_map(Some)];
        (vec((slot.clone(), slot), m), vec(0..n, n), Just(integer)).prop_map(move |(ws, labels, integer)| {
            let mut edges = Vec::new();
            for ((u, v), (p, q)) in pairs(n).zip(ws) {
                if let Some(w) = p {
                    edges.push(Edge::new(u, v, Sign::Pos, w));
                }
                if let Some(w) = q {
                    edges.push(Edge::new(u, v, Sign::Neg, w));
                }
            }
            (SignedGraph::from_edges(n, edges, true).unwrap(), Clustering::from_labels(&labels), integer)
        })
    })
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let result = runner(10_000, 1).run(&fuzzed_pair(), |(g, c, integer)| {
        let err = disagreement(&c, &g).unwrap();
        let agr = agreement(&c, &g).unwrap();
        let total = g.total_weight();
        if integer {
            prop_assert_eq!(err + agr, total);
        } else {
            prop_assert!(((err + agr) - total).abs() <= 1e-9 * total.max(1.0), "{} + {} vs {}", err, agr, total);
        }
        Ok(())
    });
    let (fast, time) = within(Duration::from_secs(10), started);
    match result {
        Ok(()) => check(fast, format!("10000 fuzzed pairs conserve weight, {time}")),
        Err(e) => Err(format!("{e}")),
    }
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let n = 10;
    let instances: Vec<SignedGraph> = (0..200u64)
        .map(|i| match i % 3 {
            0 => random_signs(n, i),
            1 => planted(n, 2 + (i as usize % 3), 0.1, i).graph,
            _ => planted(n, 3, 0.25, i).graph,
        })
        .collect();
    let rows: Vec<(f64, f64, f64)> = {
        instances
            .par_iter()
            .enumerate()
            .map(|(i, g)| {
                let opt = disagreement(&solve_exact(g, &SolverConfig::default()).unwrap(), g).unwrap();
                let mut rng = stream(1000, i as u64);
                let pivot_mean = (0..100)
                    .map(|_| disagreement(&pivot_kwikcluster(g, &mut rng), g).unwrap())
                    .sum::<f64>()
                    / 100.0;
                // exact_limit 0 forces the heuristic path of `solve`
                let cfg = SolverConfig { seed: i as u64, exact_limit: 0, ..SolverConfig::default() };
                let ls = disagreement(&solve(g, &cfg).unwrap(), g).unwrap();
                (opt, pivot_mean, ls)
            })
            .collect()
    };
    let ratio = |x: f64, opt: f64| if opt == 0.0 { if x == 0.0 { 1.0 } else { f64::INFINITY } } else { x / opt };
    let worst_pivot = rows.iter().map(|&(o, p, _)| ratio(p, o)).fold(0.0, f64::max);
    let overall_pivot = rows.iter().map(|r| r.1).sum::<f64>() / rows.iter().map(|r| r.0).sum::<f64>();
    let ls_ok = rows.iter().filter(|&&(o, _, l)| ratio(l, o) <= 1.15).count();
    let ls_frac = ls_ok as f64 / rows.len() as f64;
    let (fast, time) = within(Duration::from_secs(300), started);
    check(
        worst_pivot <= 3.0 && ls_frac >= 0.95 && fast,
        format!(
            "pivot mean ratio worst {worst_pivot:.3} per instance, {overall_pivot:.3} overall; \
             best-of-8 local search within 1.15x on {ls_ok}/200; {time}"
        ),
    )
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let mut worst = Vec::new();
    let mut ok = true;
    for eps in [0.1, 1.0, 5.0] {
        let params = PrivacyParams::pure(eps).unwrap();
        let mut m: f64 = 0.0;
        for i in 0..50 {
            let g = random_signs(5, 300 + i);
            for (u, v) in pairs(5) {
                m = m.max(max_log_ratio(&g, &g.with_flipped(u, v).unwrap(), &params).unwrap());
            }
        }
        ok &= m <= eps + 1e-9;
        worst.push(format!("eps {eps}: max log ratio {m:.6}"));
    }
    let (fast, time) = within(Duration::from_secs(120), started);
    check(ok && fast, format!("{}; 50 graphs x 10 flips each; {time}", worst.join(", ")))
}

fn criterion_4() -> Outcome {
    let started = Instant::now();
    let n = 7;
    let log_bell = (bell(n) as f64).ln();
    let corpus: Vec<SignedGraph> = (0..30u64)
        .map(|i| if i % 2 == 0 { random_signs(n, 500 + i) } else { planted(n, 2, 0.1, 500 + i).graph })
        .collect();
    let mut ok = true;
    let mut slack = Vec::new();
    for eps in [0.1, 1.0, 5.0] {
        let params = PrivacyParams::pure(eps).unwrap();
        let bound = 2.0 / eps * log_bell;
        let mut worst: f64 = 0.0;
        for g in &corpus {
            let opt = disagreement(&solve_exact(g, &SolverConfig::default()).unwrap(), g).unwrap();
            let gap = expected_error(g, &params).unwrap() - opt;
            worst = worst.max(gap / bound);
        }
        ok &= worst <= 1.0;
        slack.push(format!("eps {eps}: worst gap/bound {worst:.3}"));
    }
    let (fast, time) = within(Duration::from_secs(120), started);
    check(ok && fast, format!("{} over {} graphs; {time}", slack.join(", "), corpus.len()))
}

fn criterion_5() -> Outcome {
    let n = 12;
    let eps = 1.0;
    let scale = 2.0 / eps;
    let g = planted(n, 3, 0.1, 77).graph;
    let plus = g.positive_channel();
    let minus = g.negative_channel();
    let ix = PairIndexer::new(n);
    let mut frng = seeded(78);
    let mut family: Vec<SetPair> = (0..8).map(|_| SetPair::random(n, &mut frng)).collect();
    family.push(SetPair::singleton(n, 0, 1));
    family.push(SetPair::new(n, &(0..n).collect::<Vec<_>>(), &(0..n).collect::<Vec<_>>()).unwrap());
    let reps = 5000;
    let mut sums = vec![[0.0f64; 2]; family.len()];
    let mut sq = vec![[0.0f64; 2]; family.len()];
    for r in 0..reps {
        let hp = laplace_release(&plus, Noise::Laplace { scale }, &mut stream(79, 2 * r)).unwrap().channel;
        let hm = laplace_release(&minus, Noise::Laplace { scale }, &mut stream(79, 2 * r + 1)).unwrap().channel;
        for (j, f) in family.iter().enumerate() {
            for (c, h) in [&hp, &hm].into_iter().enumerate() {
                let x = f.sum(&ix, h.as_slice());
                sums[j][c] += x;
                sq[j][c] += x * x;
            }
        }
    }
    let mut worst_z: f64 = 0.0;
    for (j, f) in family.iter().enumerate() {
        for (c, truth) in [&plus, &minus].into_iter().enumerate() {
            let mean = sums[j][c] / reps as f64;
            let var = sq[j][c] / reps as f64 - mean * mean;
            let se = (var / reps as f64).sqrt();
            worst_z = worst_z.max((mean - f.sum(&ix, truth.as_slice())).abs() / se);
        }
    }

    // Density ratio: a unit flip moves each channel's pair weight by 1, so
    // the joint log-density ratio is bounded by 2/scale = eps everywhere.
    let mut rng = seeded(80);
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..100_000 {
        let (p, q) = (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
        let here = laplace::log_density(p - 1.0, scale) + laplace::log_density(q, scale);
        let there = laplace::log_density(p, scale) + laplace::log_density(q - 1.0, scale);
        worst_ratio = worst_ratio.max((here - there).abs());
    }
    // attained when both coordinates lie beyond the two means
    let far = (laplace::log_density(-3.0 - 1.0, scale) + laplace::log_density(5.0, scale))
        - (laplace::log_density(-3.0, scale) + laplace::log_density(5.0 - 1.0, scale));
    check(
        worst_z <= 5.0 && worst_ratio <= eps + 1e-9 && (far.abs() - eps).abs() < 1e-9,
        format!(
            "max |mean - truth| = {worst_z:.2} standard errors over {reps} releases and {} cuts x 2 channels; \
             log-density ratio sup {worst_ratio:.6} (bound {eps}, attained {:.6})",
            family.len(),
            far.abs()
        ),
    )
}

const SCALING_NS: [usize; 4] = [50, 100, 200, 400];
const SCALING_SEEDS: [u64; 4] = [1, 2, 3, 4];

struct ScalingRow {
    n: usize,
    lambda: f64,
    cut_dev: f64,
    err: f64,
    planted: f64,
}

/// Unweighted pipeline runs on planted instances (k = 4, p = 0.05) at
/// eps = 1, shared by criteria 6 and 7.
fn scaling_rows() -> &'static (Vec<ScalingRow>, Duration) {
    static ROWS: OnceLock<(Vec<ScalingRow>, Duration)> = OnceLock::new();
    ROWS.get_or_init(|| {
        let started = Instant::now();
        let params = PrivacyParams::pure(1.0).unwrap();
        let jobs: Vec<(usize, u64)> =
            SCALING_NS.iter().flat_map(|&n| SCALING_SEEDS.iter().map(move |&s| (n, s))).collect();
        let rows = jobs
            .par_iter()
            .map(|&(n, seed)| {
                let inst = planted(n, 4, 0.05, 1000 + n as u64);
                let g = inst.graph.clone();
                let pg = PrivateGraph::new(inst.graph);
                let out = run_pipeline(
                    &pg,
                    &params,
                    &PipelineSpec::unweighted(),
                    inst.truth.as_ref(),
                    seed,
                    &EngineRegistry::new(),
                    &RunOptions::default(),
                )
                .unwrap();
                let h = out.released.unwrap();
                let cut_dev =
                    sampled_cut_distance(&g.positive_channel(), &h.positive_channel(), 4 * n, &mut seeded(7)).unwrap();
                ScalingRow {
                    n,
                    lambda: out.record.audit_lambda.unwrap(),
                    cut_dev,
                    err: out.record.err.unwrap(),
                    planted: out.record.planted_cost.unwrap(),
                }
            })
            .collect();
        (rows, started.elapsed())
    })
}

fn per_n_mean(rows: &[ScalingRow], f: impl Fn(&ScalingRow) -> f64) -> Vec<(f64, f64)> {
    SCALING_NS
        .iter()
        .map(|&n| {
            let v: Vec<f64> = rows.iter().filter(|r| r.n == n).map(&f).collect();
            (n as f64, v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect()
}

fn criterion_6() -> Outcome {
    let (rows, took) = scaling_rows();
    let lam = per_n_mean(rows, |r| r.lambda);
    let dev = per_n_mean(rows, |r| r.cut_dev);
    let (s_lam, s_dev) = (loglog_slope(&lam), loglog_slope(&dev));
    let fmt = |v: &[(f64, f64)]| v.iter().map(|(n, y)| format!("{n}:{y:.0}")).collect::<Vec<_>>().join(" ");
    check(
        s_lam <= 1.8 && s_dev <= 1.8 && took.as_secs() <= 600,
        format!(
            "slope lambda {s_lam:.2} [{}], slope sampled cut deviation {s_dev:.2} [{}], {} seeds per n, {:.0}s",
            fmt(&lam),
            fmt(&dev),
            SCALING_SEEDS.len(),
            took.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Outcome {
    println!(
        "criterion 7 report: additive gap = err(C, G) - 3 * plantedCost. The multiplier 3 is the expected \
         ratio of the pivot plus local-search solver used here; a 2.06 multiplier would need an LP-rounding \
         solver that this crate does not implement."
    );
    let (rows, took) = scaling_rows();
    let raw = per_n_mean(rows, |r| r.err - 3.0 * r.planted);
    // gaps can be negative at small n; the fit uses max(gap, 1)
    let fit: Vec<(f64, f64)> = raw.iter().map(|&(n, g)| (n, g.max(1.0))).collect();
    let slope = loglog_slope(&fit);
    let gaps = raw.iter().map(|(n, g)| format!("{n}:{g:.0}")).collect::<Vec<_>>().join(" ");
    check(slope <= 1.9 && took.as_secs() <= 900, format!("gap slope {slope:.2}, raw mean gaps [{gaps}]"))
}

fn criterion_8() -> Outcome {
    let strategy = (1usize..120, 1usize..12, 0.1f64..3.0).prop_flat_map(|(n, kp, w)| {
        (Just(n), Just(kp), Just(w), vec(0..n, n), any::<u64>())
    });
    let unchanged = Cell::new(0usize);
    let merged = Cell::new(0usize);
    let result = runner(500, 8).run(&strategy, |(n, kp, w, labels, gseed)| {
        let c = Clustering::from_labels(&labels);
        let (out, rep) = coarsen(&c, n, kp, w).map_err(|e| TestCaseError::fail(e.to_string()))?;
        if c.k() <= kp {
            prop_assert_eq!(&out, &c);
            prop_assert_eq!(rep.merge_cost_bound, 0.0);
            unchanged.set(unchanged.get() + 1);
            return Ok(());
        }
        merged.set(merged.get() + 1);
        prop_assert!(out.k() <= 2 * kp + 1, "k_after {} > 2k'+1 with k' = {}", out.k(), kp);
        prop_assert_eq!(out.k(), rep.k_after);
        let sizes = c.sizes();
        // merges only: every input cluster maps into one output cluster
        for u in 0..n {
            for v in 0..n {
                if c.same_cluster(u, v) {
                    prop_assert!(out.same_cluster(u, v));
                }
            }
        }
        // large clusters are kept as they are; bins respect the capacity
        for (id, &s) in sizes.iter().enumerate() {
            if s * kp >= n {
                prop_assert!(rep.bins.iter().all(|b| !b.contains(&id)));
            }
        }
        for bin in &rep.bins {
            let load: usize = bin.iter().map(|&id| sizes[id]).sum();
            prop_assert!(load * kp <= 2 * n, "bin load {} over capacity", load);
        }
        // the extra disagreement stays under the reported bound
        let mut rng = seeded(gseed);
        let mut edges = Vec::new();
        for (u, v) in pairs(n) {
            let s = if rng.gen_bool(0.5) { Sign::Pos } else { Sign::Neg };
            edges.push(Edge::new(u, v, s, w * rng.gen::<f64>()));
        }
        let g = SignedGraph::from_edges(n, edges, false).unwrap();
        let extra = disagreement(&out, &g).unwrap() - disagreement(&c, &g).unwrap();
        prop_assert!(extra <= rep.merge_cost_bound + 1e-9, "extra {} over bound {}", extra, rep.merge_cost_bound);
        Ok(())
    });
    match result {
        Ok(()) => Ok(format!("500 cases ({} coarsened, {} returned unchanged)", merged.get(), unchanged.get())),
        Err(e) => Err(format!("{e}")),
    }
}

fn criterion_9() -> Outcome {
    let spec = PipelineSpec { solver: SolverKind::Exact, ..PipelineSpec::weighted("zero-noise-test") };
    let params = PrivacyParams::pure(1.0).unwrap();
    let results: Vec<Result<(bool, bool), String>> = (0..200u64)
        .into_par_iter()
        .map(|i| {
            let n = 2 + (i as usize % 7);
            let inst = generate_instance(&InstanceSpec {
                kind: InstanceKind::WeightedRandom,
                n,
                density: 0.3 + 0.6 * ((i % 5) as f64 / 4.0),
                max_weight: 1.0 + (i % 3) as f64,
                seed: 900 + i,
                ..Default::default()
            })
            .map_err(|e| e.to_string())?;
            let g = inst.graph;
            let direct = solve_exact(&g, &SolverConfig::default()).map_err(|e| e.to_string())?;
            let out = run_pipeline(
                &PrivateGraph::new(g.clone()),
                &params,
                &spec,
                None,
                i,
                &EngineRegistry::new(),
                &RunOptions::default(),
            )
            .map_err(|e| e.to_string())?;
            let (a, b) = (disagreement(&direct, &g).unwrap(), out.record.err.unwrap());
            Ok(((a - b).abs() <= 1e-9 * (1.0 + g.total_weight()), direct == out.clustering))
        })
        .collect();
    let mut same_cost = 0;
    let mut same_clustering = 0;
    for r in &results {
        let (c, s) = r.clone()?;
        same_cost += c as usize;
        same_clustering += s as usize;
    }
    check(
        same_cost == 200,
        format!("split/solve/unsplit matches the direct optimum on {same_cost}/200 (identical clustering on {same_clustering})"),
    )
}

fn criterion_10() -> Outcome {
    let started = Instant::now();
    let paths = (1usize..200, 0.01f64..100.0).prop_flat_map(|(m, lambda)| (vec(any::<bool>(), m), Just(lambda)));
    runner(10_000, 10)
        .run(&paths, |(bits, lambda)| {
            let sigma = SignVector(bits.into_iter().map(|b| if b { Sign::Pos } else { Sign::Neg }).collect());
            let g = path_graph(&sigma, lambda).unwrap();
            prop_assert_eq!(disagreement(&optimal_path_clustering(&sigma), &g).unwrap(), 0.0);
            Ok(())
        })
        .map_err(|e| format!("path clustering: {e}"))?;

    let mut pairs_checked = 0u64;
    for m in 1..=8 {
        let patterns = path_patterns(m).map_err(|e| e.to_string())?;
        for a in 0..1u64 << m {
            for b in 0..1u64 << m {
                let (s, t) = (SignVector::from_bits(m, a), SignVector::from_bits(m, b));
                let mm = min_max_error(&patterns, &s, &t).unwrap();
                let d = hamming(&s, &t).unwrap();
                if 2 * mm < d || mm < pairwise_confusion_bound(&s, &t).unwrap() {
                    return Err(format!("min-max error {mm} below d/2 for d = {d} at {} vs {}", s.symbols(), t.symbols()));
                }
                pairs_checked += 1;
            }
        }
    }

    let mut disjoint_codes = 0;
    for m in 2..=8 {
        for beta in [0.1, 0.25, 0.4] {
            let code = brute_force_code(m, beta, 64, &mut seeded(m as u64), 100_000).map_err(|e| e.to_string())?;
            if !good_sets_disjoint(&code).map_err(|e| e.to_string())? {
                return Err(format!("good sets overlap for the n = {m}, beta = {beta} code"));
            }
            disjoint_codes += 1;
        }
    }

    let code = brute_force_code(20, 0.1, 256, &mut seeded(11), 1_000_000).map_err(|e| e.to_string())?;
    let dmin = code.verified_min_distance().unwrap_or(0);
    let (fast, time) = within(Duration::from_secs(300), started);
    check(
        code.reached_target && code.len() >= 256 && dmin >= 2 && code.alpha() >= 0.4 && fast,
        format!(
            "10000 fuzzed paths clustered at error 0; min-max >= d/2 on all {pairs_checked} pairs with n <= 8; \
             good sets disjoint for {disjoint_codes} codes with n <= 8; \
             codebook n=20 beta=0.1: {} words, min distance {dmin}, alpha {:.3}, {} draws; {time}",
            code.len(),
            code.alpha(),
            code.samples_used
        ),
    )
}

fn serialize(records: &[ExperimentRecord]) -> (Vec<u8>, Vec<u8>) {
    let mut csv = Vec::new();
    let mut jsonl = Vec::new();
    write_records(records, OutputFormat::Csv, true, &mut csv).unwrap();
    write_records(records, OutputFormat::Jsonl, false, &mut jsonl).unwrap();
    (csv, jsonl)
}

fn criterion_11() -> Outcome {
    let params = PrivacyParams::pure(1.0).unwrap();
    let weighted = generate_instance(&InstanceSpec {
        kind: InstanceKind::WeightedRandom,
        n: 14,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let cases: Vec<(SignedGraph, Option<Clustering>, PipelineSpec)> = vec![
        { let i = planted(60, 4, 0.05, 3); (i.graph, i.truth, PipelineSpec::unweighted()) },
        { let i = planted(30, 3, 0.1, 4); (i.graph, i.truth, PipelineSpec { solver: SolverKind::Pivot, ..Default::default() }) },
        (weighted.graph.clone(), None, PipelineSpec::weighted("laplace")),
        (weighted.graph, None, PipelineSpec::weighted("laplace-clip")),
        { let i = planted(8, 2, 0.1, 6); (i.graph, i.truth, PipelineSpec { mechanism: "exp-mech".into(), ..Default::default() }) },
    ];
    let run_all = || -> Vec<ExperimentRecord> {
        cases
            .iter()
            .map(|(g, t, spec)| {
                let opts = RunOptions { instance: "fixed".into(), ..Default::default() };
                run_pipeline(&PrivateGraph::new(g.clone()), &params, spec, t.as_ref(), 42, &EngineRegistry::new(), &opts)
                    .unwrap()
                    .record
            })
            .collect()
    };
    let first = serialize(&run_all());
    let second = serialize(&run_all());
    if first != second {
        return Err("pipeline records differ between identical runs".into());
    }

    let cfg = MatrixConfig::from_toml(
        r#"
        epsilons = [0.5, 2.0]
        repetitions = 2
        master_seed = 17

        [[instances]]
        kind = "planted"
        n = 24
        seed = 1

        [[instances]]
        kind = "weighted-random"
        n = 10
        seed = 2

        [[pipelines]]
        mechanism = "unweighted-lp"
        coarsen = true

        [[pipelines]]
        mechanism = "laplace"
        split = true
        "#,
    )
    .unwrap();
    let reg = EngineRegistry::new();
    let with_threads = |t: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
        serialize(&pool.install(|| run_matrix(&cfg, None, &reg).unwrap()))
    };
    let one = with_threads(1);
    let four = with_threads(4);
    let again = with_threads(4);
    check(
        one == four && four == again,
        format!(
            "{} pipeline records and a {}-record matrix byte-identical across reruns and 1 vs 4 threads",
            cases.len(),
            cfg.cell_count() * cfg.repetitions
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "conservation", criterion_1),
        (2, "exact-oracle equivalence", criterion_2),
        (3, "exact DP of the exponential mechanism", criterion_3),
        (4, "exponential mechanism utility", criterion_4),
        (5, "Laplace release statistics", criterion_5),
        (6, "cut-deviation scaling", criterion_6),
        (7, "end-to-end gap scaling", criterion_7),
        (8, "coarsening invariants", criterion_8),
        (9, "vertex-split transparency", criterion_9),
        (10, "lower-bound suite", criterion_10),
        (11, "determinism", criterion_11),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {id} ({name}): PASS: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
