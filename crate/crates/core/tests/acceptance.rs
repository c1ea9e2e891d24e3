//! End-to-end acceptance checks. They run in order inside one test so the
//! timed ones do not share the CPU with other work, print one line each and
//! fail together at the end.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use nalgebra::DVector;
use rand::Rng;
use slrr::solver::{dual_objective, dual_value, interval_prior, primal_objective};
use slrr::tensor_store::{apply_sparsity_protocol, load_instance, synthesize_instance};
use slrr::tuning::{generate_candidates, nmae, tune, DEFAULT_CANDIDATES};
use slrr::*;

/// Outcome of one check: `None` when it was skipped.
struct Verdict {
    pass: Option<bool>,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: String) -> Self {
        Self {
            pass: Some(pass),
            detail,
        }
    }
}

fn within(start: Instant, budget: Duration) -> (bool, String) {
    let t = start.elapsed();
    (t < budget, format!("{:.2?} of {:.0?}", t, budget))
}

fn interval_loads(inst: &TomographyInstance<f64>, k: usize) -> DVector<f64> {
    DVector::from_iterator(inst.links(), inst.link_loads().column(k).iter().copied())
}

fn operator_algebra() -> Verdict {
    let start = Instant::now();
    let mut rng = rng(100);
    let mut worst_adj = 0.0f64;
    let mut worst_gram = 0.0f64;
    for _ in 0..10 {
        let s = rng.random_range(2..=8);
        let m = rng.random_range(s..=3 * s);
        let op = RoutingOperator::<f64>::new(random_routing(&mut rng, s, m)).unwrap();
        for _ in 0..10 {
            let x = random_matrix(&mut rng, s, s, 5.0);
            let q = random_vector(&mut rng, m, 5.0);
            let lhs = op.forward_map(&x).unwrap().dot(&q);
            let rhs = x.dot(&op.adjoint_map(&q).unwrap());
            worst_adj = worst_adj.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
            let composed = op.forward_map(&op.adjoint_map(&q).unwrap()).unwrap();
            let direct = op.gram() * &q;
            worst_gram = worst_gram.max((&composed - &direct).norm() / (1.0 + direct.norm()));
        }
    }
    let (fast, time) = within(start, Duration::from_secs(1));
    Verdict::new(
        worst_adj <= 1e-12 && worst_gram <= 1e-12 && fast,
        format!("adjoint {worst_adj:.1e}, gram {worst_gram:.1e}, {time}"),
    )
}

fn update_optimality() -> Verdict {
    let start = Instant::now();
    let worst = (0..20).map(|seed| update_errors(seed).max()).fold(0.0, f64::max);
    let (fast, time) = within(start, Duration::from_secs(5));
    Verdict::new(worst <= 1e-8 && fast, format!("max error {worst:.1e}, {time}"))
}

struct ConvergenceRun {
    converged: bool,
    p1: f64,
    primal: f64,
    dual_value: f64,
    dual_literal: f64,
}

fn convergence_runs() -> (Vec<ConvergenceRun>, Duration) {
    let start = Instant::now();
    let params = SolverParams {
        tau: 1.618,
        max_iter: 20_000,
        epsilon: 1e-6,
        ..SolverParams::default()
    };
    let runs = (0..10u64)
        .map(|seed| {
            let inst = synthesize_instance::<f64>(&SynthConfig {
                nodes: 6,
                intervals: 1,
                rank: 1 + seed as usize % 2,
                zero_fraction: if seed % 2 == 0 { 0.5 } else { 0.9 },
                seed,
                ..SynthConfig::default()
            })
            .unwrap();
            let op = RoutingOperator::new(inst.routing().clone()).unwrap();
            let loads = interval_loads(&inst, 0);
            let (prior, alpha) = interval_prior(&params, None, None, || gravity_estimate(&loads, &op));
            let problem = IntervalProblem::new(&op, loads, inst.mask().interval(0), prior, alpha).unwrap();
            let sol = solve_interval(&problem, &params).unwrap();
            ConvergenceRun {
                converged: sol.converged,
                p1: sol.residuals.p1,
                primal: primal_objective(&sol.estimate, &problem),
                dual_value: dual_value(&sol.state, &problem),
                dual_literal: dual_objective(&sol.state, &problem),
            }
        })
        .collect();
    (runs, start.elapsed())
}

fn convergence(runs: &[ConvergenceRun], elapsed: Duration) -> Verdict {
    let good = runs.iter().filter(|r| r.converged && r.p1 <= 1e-6).count();
    let fast = elapsed < Duration::from_secs(60);
    Verdict::new(
        good >= 9 && fast,
        format!("{good}/10 converged with p1 <= 1e-6, {elapsed:.2?} of 60s"),
    )
}

fn duality_gap(runs: &[ConvergenceRun]) -> Verdict {
    let done: Vec<&ConvergenceRun> = runs.iter().filter(|r| r.converged).collect();
    let worst = done
        .iter()
        .map(|r| (r.primal - r.dual_value).abs() / (1.0 + r.primal.abs()))
        .fold(0.0, f64::max);
    let literal: Vec<String> = done.iter().map(|r| format!("{:.4}", r.dual_literal)).collect();
    Verdict::new(
        !done.is_empty() && worst <= 1e-4,
        format!(
            "worst relative gap {worst:.1e} over {} runs; dual objective values [{}]",
            done.len(),
            literal.join(", ")
        ),
    )
}

fn determined_exactness() -> Verdict {
    let mut worst = 0.0f64;
    for s in 3..=6 {
        let synth = synthesize_instance::<f64>(&SynthConfig {
            nodes: s,
            intervals: 4,
            period: 4,
            rank: 2,
            zero_fraction: 0.3,
            seed: s as u64,
            ..SynthConfig::default()
        })
        .unwrap();
        let truth = synth.truth().unwrap().clone();
        let inst = TomographyInstance::new(
            RoutingMatrix::identity(s),
            truth.to_od_matrix(),
            synth.mask().clone(),
            Some(truth.clone()),
        )
        .unwrap();
        let (est, _) = recover_sequence(&inst, &SolverParams::default(), None).unwrap();
        worst = worst.max(nmae(&est, &truth, inst.mask()).unwrap());
    }
    Verdict::new(worst <= 1e-6, format!("worst NMAE {worst:.1e} over S = 3..6, T = 4"))
}

/// NMAE restricted to OD pairs that at least one link carries.
fn observable_nmae(est: &TrafficTensor<f64>, inst: &TomographyInstance<f64>) -> f64 {
    let truth = inst.truth().unwrap();
    let s = inst.nodes();
    let (mut err, mut total) = (0.0, 0.0);
    for k in 0..inst.intervals() {
        for n in 0..s * s {
            let (i, j) = (n % s, n / s);
            if inst.routing().od_links(n).is_empty() || inst.mask().contains(i, j, k) {
                continue;
            }
            err += (est.slice(k)[(i, j)] - truth.slice(k)[(i, j)]).abs();
            total += truth.slice(k)[(i, j)];
        }
    }
    err / total
}

/// CV-tuned SLRR, Gravity and Tomo-Gravity: NMAE over all unmasked pairs
/// and over the observable ones.
fn compare_methods(inst: &TomographyInstance<f64>, seed: u64, period: Option<usize>) -> [[f64; 2]; 3] {
    let plan = CvPlan {
        kind: CvKind::default(),
        seed,
        candidates: generate_candidates(DEFAULT_CANDIDATES, seed),
    };
    let base = SolverParams::default();
    let tuned = tune(inst, &plan, &base, period).unwrap();
    let (slrr, _) = recover_sequence(inst, &tuned.best.apply(&base), period).unwrap();
    let truth = inst.truth().unwrap();
    let score = |est: &TrafficTensor<f64>| [nmae(est, truth, inst.mask()).unwrap(), observable_nmae(est, inst)];
    let (gravity, _) = recover_baseline(inst, Baseline::Gravity).unwrap();
    let (tomo, _) = recover_baseline(inst, Baseline::TomoGravity).unwrap();
    [score(&slrr), score(&gravity), score(&tomo)]
}

fn method_ordering() -> Verdict {
    let start = Instant::now();
    let mut wins = 0;
    let mut observable_wins = 0;
    let mut rows = Vec::new();
    for seed in 0..5 {
        let inst = synthesize_instance::<f64>(&SynthConfig {
            nodes: 10,
            avg_degree: 2.5,
            intervals: 4,
            period: 4,
            rank: 2,
            zero_fraction: 0.9,
            noise_level: 0.01,
            seed: 600 + seed,
        })
        .unwrap();
        let [s, g, t] = compare_methods(&inst, seed, Some(4));
        if s[0] < g[0] && s[0] < t[0] {
            wins += 1;
        }
        if s[1] < g[1] && s[1] < t[1] {
            observable_wins += 1;
        }
        rows.push(format!("{:.3}/{:.3}/{:.3}", s[0], g[0], t[0]));
    }
    let (fast, time) = within(start, Duration::from_secs(600));
    Verdict::new(
        wins >= 4 && fast,
        format!(
            "SLRR best in {wins}/5 (SLRR/Gravity/Tomo NMAE: {}), {observable_wins}/5 on link-observable pairs, {time}",
            rows.join(", ")
        ),
    )
}

fn sparsity_trend() -> Verdict {
    let levels = [0.5, 0.7, 0.9];
    let means: Vec<f64> = levels
        .iter()
        .map(|&zf| {
            let errs: Vec<f64> = (0..5)
                .map(|seed| {
                    let inst = synthesize_instance::<f64>(&SynthConfig {
                        nodes: 8,
                        intervals: 4,
                        period: 4,
                        rank: 2,
                        zero_fraction: zf,
                        seed: 700 + seed,
                        ..SynthConfig::default()
                    })
                    .unwrap();
                    let (est, _) = recover_sequence(&inst, &SolverParams::default(), None).unwrap();
                    nmae(&est, inst.truth().unwrap(), inst.mask()).unwrap()
                })
                .collect();
            errs.iter().sum::<f64>() / errs.len() as f64
        })
        .collect();
    Verdict::new(
        means[2] < means[1] && means[1] < means[0],
        format!(
            "mean NMAE {:.4} (0.5) / {:.4} (0.7) / {:.4} (0.9)",
            means[0], means[1], means[2]
        ),
    )
}

fn abilene_reproduction(dir: Option<PathBuf>) -> Verdict {
    let Some(dir) = dir else {
        return Verdict {
            pass: None,
            detail: "SLRR_ABILENE_DIR not set".into(),
        };
    };
    let raw = load_instance::<f64>(&dir).unwrap();
    let mask = apply_sparsity_protocol(raw.truth().expect("Abilene truth"), 90.0).unwrap();
    let inst = raw.with_mask(mask).unwrap();
    let plan = CvPlan {
        kind: CvKind::default(),
        seed: 0,
        candidates: generate_candidates(DEFAULT_CANDIDATES, 0),
    };
    let base = SolverParams::default();
    // 5-minute intervals, weekly cycle
    let period = Some(2016).filter(|&p| p < inst.intervals());
    let tuned = tune(&inst, &plan, &base, period).unwrap();
    let (est, _) = recover_sequence(&inst, &tuned.best.apply(&base), period).unwrap();
    let err = nmae(&est, inst.truth().unwrap(), inst.mask()).unwrap();
    Verdict::new(err <= 0.15, format!("NMAE {err:.4} (limit 0.15) at {:?}", tuned.best))
}

/// Wall time of gravity prior plus one interval solve on a synthetic network
/// trimmed to exactly `links` links.
fn timed_solve(nodes: usize, avg_degree: f64, links: usize) -> (Duration, bool, usize) {
    let inst = synthesize_instance::<f64>(&SynthConfig {
        nodes,
        avg_degree,
        intervals: 1,
        rank: 2,
        zero_fraction: 0.9,
        seed: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    assert!(inst.links() >= links, "only {} links", inst.links());
    let keep: Vec<usize> = (0..links).collect();
    let inst = inst.select_links(&keep).unwrap();
    let op = RoutingOperator::new(inst.routing().clone()).unwrap();
    let params = SolverParams {
        epsilon: 1e-5,
        record_trace: false,
        ..SolverParams::default()
    };
    let start = Instant::now();
    let loads = interval_loads(&inst, 0);
    let (prior, alpha) = interval_prior(&params, None, None, || gravity_estimate(&loads, &op));
    let problem = IntervalProblem::new(&op, loads, inst.mask().interval(0), prior, alpha).unwrap();
    let sol = solve_interval(&problem, &params).unwrap();
    (start.elapsed(), sol.converged, sol.iterations)
}

fn runtime_envelope() -> Verdict {
    let (small, small_ok, small_it) = timed_solve(11, 3.8, 41);
    let (large, large_ok, large_it) = timed_solve(243, 2.4, 577);
    let pass = small_ok && large_ok && small < Duration::from_secs(1) && large < Duration::from_secs(60);
    Verdict::new(
        pass,
        format!(
            "S=11 M=41: {small:.2?} ({small_it} it, converged {small_ok}); \
             S=243 M=577: {large:.2?} ({large_it} it, converged {large_ok})"
        ),
    )
}

fn run_cli(args: &[&str]) {
    let mut full = vec!["slrr"];
    full.extend_from_slice(args);
    assert_eq!(slrr::cli::main_with_args(full), 0, "slrr {}", args.join(" "));
}

fn pipeline(root: &Path) {
    let inst = root.join("instance");
    let out = root.join("out");
    let (inst, out) = (inst.to_str().unwrap(), out.to_str().unwrap());
    run_cli(&[
        "generate", "--out", inst, "--S", "6", "--T", "6", "--period", "3", "--zero-fraction", "0.5",
        "--noise", "0.01", "--seed", "9",
    ]);
    run_cli(&["tune", "--instance", inst, "--out", out, "--candidates", "6", "--seed", "4", "--period", "3"]);
    run_cli(&["recover", "--instance", inst, "--out", out, "--period", "3"]);
    run_cli(&["eval", "--instance", inst, "--out", out]);
}

/// Every file below `dir` except wall-clock timings, keyed by relative path.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "timings.csv" {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn determinism() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    let differing: Vec<String> = sa
        .iter()
        .zip(&sb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    let same = sa.len() == sb.len() && differing.is_empty();
    Verdict::new(
        same,
        format!("{} files compared, differing: {:?}", sa.len(), differing),
    )
}

type Check<'a> = (&'static str, Box<dyn FnOnce() -> Verdict + 'a>);

#[test]
fn acceptance_suite() {
    let (runs, elapsed) = convergence_runs();
    let checks: Vec<Check> = vec![
        ("operator algebra", Box::new(operator_algebra)),
        ("update optimality", Box::new(update_optimality)),
        ("convergence", Box::new(|| convergence(&runs, elapsed))),
        ("duality gap", Box::new(|| duality_gap(&runs))),
        ("determined-system exactness", Box::new(determined_exactness)),
        ("method ordering", Box::new(method_ordering)),
        ("sparsity trend", Box::new(sparsity_trend)),
        (
            "Abilene reproduction",
            Box::new(|| abilene_reproduction(std::env::var_os("SLRR_ABILENE_DIR").map(PathBuf::from))),
        ),
        ("runtime envelope", Box::new(runtime_envelope)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = Vec::new();
    for (k, (name, check)) in checks.into_iter().enumerate() {
        let v = check();
        let tag = match v.pass {
            Some(true) => "PASS",
            Some(false) => {
                failed.push(format!("{} {name}", k + 1));
                "FAIL"
            }
            None => "SKIP",
        };
        println!("[{}] {name}: {tag} - {}", k + 1, v.detail);
    }
    assert!(failed.is_empty(), "failed: {}", failed.join(", "));
}
