//! `tactile`: runs simulated tactile servoing tasks, the filter study, fusion
//! benchmarks and synthetic dataset generation.

mod bench;
mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use tactile_core::filter::filter_study;
use tactile_core::sim::dataset::write_dataset_csv;
use tactile_core::sim::{generate_dataset, run_scenario, study_sequence, RunOutput, Scenario, SimError};

use config::{summary, validate_config, Job, Resolved};

#[derive(Parser)]
#[command(name = "tactile", version, about = "Tactile pose estimation and servo control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "TACTILE_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Control period override (s).
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task a config describes.
    Run {
        config: PathBuf,
        /// Independent trials with seeds seed, seed + 1, ...
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        trials: u32,
    },
    /// Filtered vs unfiltered MAE over a grid of dynamics noise levels.
    FilterStudy { config: PathBuf },
    /// Iteration counts and timings of pose fusion on random concentrated pairs.
    FusionBench {
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long, default_value_t = 10)]
        max_iterations: usize,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
    },
    /// Synthetic contact-pose dataset.
    GenDataset { config: PathBuf },
    /// Check a config and print the resolved settings.
    Validate { config: PathBuf },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Divergence(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Divergence(_) => 3,
            Failure::Other(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Divergence(m) => write!(f, "numerical divergence: {m}"),
            Failure::Other(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidScenario(m) => Failure::Config(m),
            SimError::Io(m) => Failure::Other(m),
            SimError::Csv(e) => Failure::Other(e.to_string()),
            other => Failure::Divergence(other.to_string()),
        }
    }
}

/// Files produced by a command, written only once everything succeeded.
#[derive(Default)]
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, name: String, bytes: Vec<u8>) {
        self.files.push((name, bytes));
    }

    fn write(self, dir: &Path, quiet: bool) -> Result<(), Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Other(format!("{}: {e}", dir.display())))?;
        for (name, bytes) in self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
            if !quiet {
                println!("wrote {}", path.display());
            }
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}

fn load(path: &Path, common: &Common) -> Result<Resolved, Failure> {
    let mut r = validate_config(path).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = common.seed {
        r.seed = seed;
    }
    if let Some(dt) = common.dt {
        match &mut r.job {
            Job::Scenario(sc) => {
                sc.dt = dt;
                sc.validate().map_err(|e| Failure::Config(format!("--dt: {e}")))?;
            }
            _ => return Err(Failure::Config(format!("--dt does not apply to task `{}`", r.task))),
        }
    }
    Ok(r)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let common = &cli.common;
    let outputs = match &cli.command {
        Command::Run { config, trials } => {
            let r = load(config, common)?;
            run_job(&r, *trials, common.quiet)?
        }
        Command::FilterStudy { config } => {
            let r = load(config, common)?;
            if !matches!(r.job, Job::FilterStudy { .. }) {
                return Err(Failure::Config(format!("filter-study needs task = \"filter_study\", got `{}`", r.task)));
            }
            run_job(&r, 1, common.quiet)?
        }
        Command::GenDataset { config } => {
            let r = load(config, common)?;
            if !matches!(r.job, Job::Dataset { .. }) {
                return Err(Failure::Config(format!("gen-dataset needs task = \"gen_dataset\", got `{}`", r.task)));
            }
            run_job(&r, 1, common.quiet)?
        }
        Command::FusionBench {
            pairs,
            max_iterations,
            tolerance,
        } => {
            if *pairs == 0 || *max_iterations == 0 || !(*tolerance > 0.0) {
                return Err(Failure::Config("pairs, max-iterations and tolerance must be positive".into()));
            }
            if common.dt.is_some() {
                return Err(Failure::Config("--dt does not apply to fusion-bench".into()));
            }
            let report = bench::fusion_bench(common.seed.unwrap_or(0), *pairs, *max_iterations, *tolerance)?;
            if !common.quiet {
                print!("{}", bench::render(&report));
            }
            let mut out = Outputs::default();
            out.add("fusion_bench.json".into(), to_json(&report)?);
            out
        }
        Command::Validate { config } => {
            let r = load(config, common)?;
            if !common.quiet {
                print!("{}", summary(&r));
            }
            return Ok(());
        }
    };
    outputs.write(&common.out_dir, common.quiet)
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<Vec<u8>, Failure> {
    let mut bytes = serde_json::to_vec_pretty(v).map_err(|e| Failure::Other(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn run_job(r: &Resolved, trials: u32, quiet: bool) -> Result<Outputs, Failure> {
    let mut out = Outputs::default();
    let p = &r.prefix;
    match &r.job {
        Job::Scenario(sc) => {
            let runs: Vec<RunOutput> = (0..trials)
                .into_par_iter()
                .map(|i| run_trial(sc, r.seed.wrapping_add(i as u64)))
                .collect::<Result<_, _>>()?;
            let task = &r.task;
            if trials == 1 {
                let (csv, json) = render_run(&runs[0])?;
                out.add(format!("{p}{task}_trajectory.csv"), csv);
                out.add(format!("{p}{task}_metrics.json"), json);
            } else {
                for (i, run) in runs.iter().enumerate() {
                    let (csv, json) = render_run(run)?;
                    out.add(format!("{p}{task}_trial{i:03}_trajectory.csv"), csv);
                    out.add(format!("{p}{task}_trial{i:03}_metrics.json"), json);
                }
            }
            let agg = aggregate(&runs)?;
            if !quiet {
                print_aggregate(task, &agg, runs.len());
            }
            for (i, run) in runs.iter().enumerate() {
                if let Some(why) = &run.metrics.failure {
                    eprintln!("trial {i} (seed {}): {why}", r.seed.wrapping_add(i as u64));
                }
            }
            if trials > 1 {
                let doc = json!({ "task": task, "seed": r.seed, "trials": trials, "metrics": agg });
                out.add(format!("{p}{task}_summary.json"), to_json(&doc)?);
            }
        }
        Job::FilterStudy {
            steps,
            grid,
            observation,
            spec,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
            let seq = study_sequence(*steps, spec, observation, &mut rng)?;
            let table = filter_study(&seq, grid, &mut rng).map_err(|e| Failure::from(SimError::from(e)))?;
            let mut csv = Vec::new();
            table.write_csv(&mut csv).map_err(|e| Failure::Other(e.to_string()))?;
            if !quiet {
                print!("{}", String::from_utf8_lossy(&csv));
            }
            out.add(format!("{p}filter_study.csv"), csv);
        }
        Job::Dataset { samples, spec } => {
            let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
            let rows = generate_dataset(*samples, spec, &mut rng)?;
            let mut csv = Vec::new();
            write_dataset_csv(&rows, &mut csv)?;
            if !quiet {
                println!("{} samples", rows.len());
            }
            out.add(format!("{p}dataset.csv"), csv);
        }
    }
    Ok(out)
}

fn run_trial(sc: &Scenario, seed: u64) -> Result<RunOutput, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_scenario(sc, &mut rng).map_err(|e| match Failure::from(e) {
        Failure::Divergence(m) => Failure::Divergence(format!("seed {seed}: {m}")),
        other => other,
    })
}

fn render_run(run: &RunOutput) -> Result<(Vec<u8>, Vec<u8>), Failure> {
    let mut csv = Vec::new();
    run.log.write_csv(&mut csv)?;
    let mut json = Vec::new();
    run.metrics.write_json(&mut json)?;
    json.push(b'\n');
    Ok((csv, json))
}

/// Mean and sample standard deviation of every numeric metric; counts of true flags.
fn aggregate(runs: &[RunOutput]) -> Result<BTreeMap<String, Value>, Failure> {
    let mut numbers: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut flags: BTreeMap<String, usize> = BTreeMap::new();
    for run in runs {
        let v = serde_json::to_value(&run.metrics).map_err(|e| Failure::Other(e.to_string()))?;
        let Value::Object(fields) = v else { continue };
        for (k, v) in fields {
            match v {
                Value::Number(n) => numbers.entry(k).or_default().extend(n.as_f64()),
                Value::Bool(b) => *flags.entry(k).or_default() += b as usize,
                _ => {}
            }
        }
    }
    let mut agg = BTreeMap::new();
    for (k, xs) in numbers {
        let (mean, std) = mean_std(&xs);
        agg.insert(k, json!({ "mean": mean, "std": std, "n": xs.len() }));
    }
    for (k, count) in flags {
        agg.insert(k, json!({ "true": count, "n": runs.len() }));
    }
    Ok(agg)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn print_aggregate(task: &str, agg: &BTreeMap<String, Value>, trials: usize) {
    println!("{task}: {trials} trial(s)");
    for (k, v) in agg {
        if let (Some(mean), Some(std)) = (v["mean"].as_f64(), v["std"].as_f64()) {
            println!("  {k:<24} {mean:.4} ± {std:.4}");
        } else if let Some(t) = v["true"].as_u64() {
            println!("  {k:<24} {t}/{trials}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let div = SimError::Divergence {
            t: 1.0,
            arm: "follower".into(),
            detail: "position 1e5 mm".into(),
        };
        assert_eq!(Failure::from(div).code(), 3);
        assert_eq!(Failure::from(SimError::InvalidScenario("x".into())).code(), 2);
        assert_eq!(Failure::from(SimError::Io("disk full".into())).code(), 1);
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }
}
