//! The `slrr` command line: generate, repair, tune, recover and eval.
//!
//! Every command reads and writes plain CSV. Failures print a single line
//! `error kind=<kind>: <message>` on stderr and exit with status 1.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::{recover_baseline, Baseline};
use crate::error::{Error, Result};
use crate::solver::{recover_sequence, trace_to_csv, SolverParams};
use crate::tensor_store::{
    load_instance, load_traffic, repair_anomalies, save_instance, save_traffic, synthesize_instance,
    write_file, SynthConfig, LINK_LOADS,
};
use crate::tuning::{
    generate_candidates, nmae, per_interval_nmae, tune, Candidate, CvKind, CvPlan, DEFAULT_CANDIDATES,
    DEFAULT_FOLDS, DEFAULT_REPEATS, DEFAULT_TEST_RATIO,
};

pub const CV_SCORES: &str = "cv_scores.csv";
pub const BEST_PARAMS: &str = "best_params.csv";
pub const ESTIMATE: &str = "estimate.csv";
pub const TIMINGS: &str = "timings.csv";
pub const WARNINGS: &str = "warnings.csv";
pub const NMAE: &str = "nmae.csv";

#[derive(Debug, Parser)]
#[command(name = "slrr", version, about = "Traffic matrix recovery from link loads")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic instance directory.
    Generate(GenerateArgs),
    /// Replace anomalous intervals of the link loads.
    Repair(RepairArgs),
    /// Choose (rho1, rho2, beta) by cross-validation over link rows.
    Tune(TuneArgs),
    /// Estimate the traffic of every interval.
    Recover(RecoverArgs),
    /// Score an estimate against the instance's truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "S", default_value_t = 6)]
    pub nodes: usize,
    #[arg(long = "T", default_value_t = 24)]
    pub intervals: usize,
    #[arg(long, default_value_t = 2)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.0)]
    pub zero_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 3.0)]
    pub avg_degree: f64,
    /// Length of the daily/weekly cycle of the traffic profile.
    #[arg(long, default_value_t = 24)]
    pub period: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RepairArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Destination instance directory (required unless --in-place).
    #[arg(long, required_unless_present = "in_place", conflicts_with = "in_place")]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0)]
    pub threshold_factor: f64,
    /// Rewrite linkloads.csv of the input instance.
    #[arg(long)]
    pub in_place: bool,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1.618)]
    pub tau: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
    /// Intervals between a slot and the same slot one cycle earlier.
    #[arg(long)]
    pub period: Option<usize>,
}

impl SolverArgs {
    fn params(&self) -> SolverParams<f64> {
        SolverParams {
            tau: self.tau,
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            ..SolverParams::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CvKindArg {
    Kfold,
    MonteCarlo,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = CvKindArg::Kfold)]
    pub cv_kind: CvKindArg,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_TEST_RATIO)]
    pub test_ratio: f64,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    pub repeats: usize,
    /// Number of log-uniform candidates.
    #[arg(long, default_value_t = DEFAULT_CANDIDATES)]
    pub candidates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Slrr,
    Gravity,
    Tomogravity,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Slrr)]
    pub method: Method,
    /// Defaults to best_params.csv in --out when present, else 0.5.
    #[arg(long)]
    pub rho1: Option<f64>,
    #[arg(long)]
    pub rho2: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Directory holding estimate.csv; nmae.csv is written there.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit status.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error kind={}: {}", e.kind(), single_line(&e.to_string()));
            1
        }
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Repair(a) => repair(a),
        Command::Tune(a) => tune_cmd(a),
        Command::Recover(a) => recover(a),
        Command::Eval(a) => eval(a),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let cfg = SynthConfig {
        nodes: a.nodes,
        avg_degree: a.avg_degree,
        intervals: a.intervals,
        rank: a.rank,
        zero_fraction: a.zero_fraction,
        noise_level: a.noise,
        seed: a.seed,
        period: a.period,
    };
    let instance = synthesize_instance::<f64>(&cfg)?;
    save_instance(&instance, &a.out)
}

fn repair(a: &RepairArgs) -> Result<()> {
    let instance = load_instance::<f64>(&a.instance)?;
    let repaired = repair_anomalies(instance.link_loads(), a.threshold_factor)?;
    let fixed = instance.with_link_loads(repaired.loads)?;
    if a.in_place {
        write_file(&a.instance, LINK_LOADS, &crate::tensor_store::write_table(fixed.link_loads()))?;
    } else {
        let out = a.out.as_ref().expect("clap enforces --out without --in-place");
        save_instance(&fixed, out)?;
    }
    let flagged: Vec<String> = repaired.flagged.iter().map(|k| (k + 1).to_string()).collect();
    println!("repaired intervals: [{}]", flagged.join(","));
    Ok(())
}

fn tune_cmd(a: &TuneArgs) -> Result<()> {
    let instance = load_instance::<f64>(&a.instance)?;
    let kind = match a.cv_kind {
        CvKindArg::Kfold => CvKind::KFold { k: a.k },
        CvKindArg::MonteCarlo => CvKind::MonteCarlo {
            test_ratio: a.test_ratio,
            repeats: a.repeats,
        },
    };
    let plan = CvPlan {
        kind,
        seed: a.seed,
        candidates: generate_candidates(a.candidates, a.seed),
    };
    let result = tune(&instance, &plan, &a.solver.params(), a.solver.period)?;

    ensure_dir(&a.out)?;
    let mut scores = String::from("rho1,rho2,beta,n_cv\n");
    for (c, s) in &result.per_candidate {
        writeln!(scores, "{},{},{},{}", c.rho1, c.rho2, c.beta, s).unwrap();
    }
    write_file(&a.out, CV_SCORES, &scores)?;
    let b = result.best;
    write_file(
        &a.out,
        BEST_PARAMS,
        &format!("rho1,rho2,beta,n_cv\n{},{},{},{}\n", b.rho1, b.rho2, b.beta, result.best_score),
    )
}

/// Reads the single row of a `best_params.csv`.
pub fn read_best_params(path: &Path) -> Result<Candidate<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = BEST_PARAMS;
    let (line, row) = text
        .lines()
        .enumerate()
        .skip(1)
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| Error::parse(name, 2, "missing parameter row"))?;
    let fields: Vec<&str> = row.split(',').map(str::trim).collect();
    if fields.len() < 3 {
        return Err(Error::parse(name, line + 1, "expected rho1,rho2,beta"));
    }
    let num = |i: usize| -> Result<f64> {
        fields[i]
            .parse()
            .map_err(|_| Error::parse(name, line + 1, format!("bad number {:?}", fields[i])))
    };
    Ok(Candidate {
        rho1: num(0)?,
        rho2: num(1)?,
        beta: num(2)?,
    })
}

fn recover(a: &RecoverArgs) -> Result<()> {
    let instance = load_instance::<f64>(&a.instance)?;
    ensure_dir(&a.out)?;
    let mut timings = String::from("interval,iterations,converged,seconds\n");
    let mut warnings = String::from("interval,iterations,eta\n");

    let estimate = match a.method {
        Method::Slrr => {
            let tuned = a.out.join(BEST_PARAMS);
            let base = if tuned.exists() {
                read_best_params(&tuned)?
            } else {
                let d = SolverParams::<f64>::default();
                Candidate {
                    rho1: d.rho1,
                    rho2: d.rho2,
                    beta: d.beta,
                }
            };
            let params = SolverParams {
                rho1: a.rho1.unwrap_or(base.rho1),
                rho2: a.rho2.unwrap_or(base.rho2),
                beta: a.beta.unwrap_or(base.beta),
                ..a.solver.params()
            };
            let (estimate, report) = recover_sequence(&instance, &params, a.solver.period)?;
            for r in &report.intervals {
                let k = r.interval + 1;
                write_file(&a.out, &format!("residuals_{k}.csv"), &trace_to_csv(&r.trace))?;
                writeln!(
                    timings,
                    "{k},{},{},{:.6}",
                    r.iterations,
                    r.converged,
                    r.elapsed.as_secs_f64()
                )
                .unwrap();
                if !r.converged {
                    writeln!(warnings, "{k},{},{:e}", r.iterations, r.residuals.eta).unwrap();
                }
            }
            estimate
        }
        Method::Gravity | Method::Tomogravity => {
            let which = if a.method == Method::Gravity {
                Baseline::Gravity
            } else {
                Baseline::TomoGravity
            };
            let (estimate, info) = recover_baseline(&instance, which)?;
            for (k, r) in info.iter().enumerate() {
                let k = k + 1;
                writeln!(
                    timings,
                    "{k},{},{},{:.6}",
                    r.iterations,
                    r.converged,
                    r.elapsed.as_secs_f64()
                )
                .unwrap();
                if !r.converged {
                    writeln!(warnings, "{k},{},{:e}", r.iterations, r.mismatch).unwrap();
                }
            }
            estimate
        }
    };

    save_traffic(&estimate, a.out.join(ESTIMATE))?;
    write_file(&a.out, TIMINGS, &timings)?;
    write_file(&a.out, WARNINGS, &warnings)
}

fn eval(a: &EvalArgs) -> Result<()> {
    let instance = load_instance::<f64>(&a.instance)?;
    let truth = instance.truth().ok_or(Error::TruthRequired)?;
    let estimate = load_traffic::<f64>(a.out.join(ESTIMATE), instance.nodes(), instance.intervals())?;
    let global = nmae(&estimate, truth, instance.mask())?;
    let per = per_interval_nmae(&estimate, truth, instance.mask())?;
    let mut out = format!("interval,nmae\nall,{global}\n");
    for (k, v) in per.iter().enumerate() {
        match v {
            Some(v) => writeln!(out, "{},{v}", k + 1).unwrap(),
            None => writeln!(out, "{},NA", k + 1).unwrap(),
        }
    }
    write_file(&a.out, NMAE, &out)?;
    println!("nmae {global}");
    Ok(())
}
