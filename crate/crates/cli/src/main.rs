//! `vcc`: command-line front end for the VCC co-design solver.
//!
//! Exit codes: 0 success, 2 validation error, 3 solver failure, 4 partial
//! result (some sweep rows or compared methods failed).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use vcc_core::bilevel::run_big_hype;
use vcc_core::game::dump_debug;
use vcc_core::report::{compare_methods, compute_metrics, run_method, runs_to_csv, sweep_xi, to_json, Method, REPORT_SCHEMA_VERSION};
use vcc_core::scenario::{load_scenario, save_scenario, synthetic_scenario, write_atomic, JobMixConfig, JobMixKind, SyntheticSpec};
use vcc_core::{Scenario, SolverParams};

#[derive(Parser, Debug)]
#[command(name = "vcc", version, about = "Carbon-aware VCC co-design for data-center fleets")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario JSON file.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seed for all randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON file with solver parameters merged over the scenario's.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Record wall-clock times (outputs are then no longer reproducible).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the bilevel solver.
    Solve {
        /// Also dump the game matrices in MatrixMarket format.
        #[arg(long)]
        dump_matrices: bool,
    },
    /// Run a baseline scheduler.
    Baseline {
        #[arg(long)]
        method: Method,
    },
    /// Sweep the migration price.
    Sweep {
        /// Comma-separated, nondecreasing list.
        #[arg(long, value_delimiter = ',', required = true)]
        xi: Vec<f64>,
        #[arg(long, default_value = "bilevel")]
        method: Method,
    },
    /// Run bilevel, naive and sequential on the same scenario.
    Compare,
    /// Check a scenario file.
    Validate,
    /// Write a synthetic scenario.
    Generate {
        #[arg(long, default_value = "mixed")]
        kind: JobMixKind,
        #[arg(long, default_value_t = 12)]
        dcs: usize,
        #[arg(long, default_value_t = 5)]
        horizon: usize,
        #[arg(long, default_value_t = 0.5)]
        budget: f64,
        #[arg(long, default_value_t = 12)]
        max_jobs: usize,
        /// File name inside the output directory.
        #[arg(long, default_value = "scenario.json")]
        name: String,
    },
}

/// Error tagged with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn validation(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

fn solver(error: anyhow::Error) -> Failure {
    Failure { code: 3, error }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn load(common: &Common) -> Result<Scenario, Failure> {
    let path = common
        .scenario
        .as_ref()
        .ok_or_else(|| validation(anyhow!("--scenario is required for this command")))?;
    let scenario = load_scenario(path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(validation)?;
    let Some(params_path) = &common.params else {
        return Ok(scenario);
    };
    let text = std::fs::read_to_string(params_path)
        .with_context(|| format!("reading {}", params_path.display()))
        .map_err(validation)?;
    let patch: Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", params_path.display()))
        .map_err(validation)?;
    let mut value = serde_json::to_value(&scenario.params).expect("params serialize");
    merge(&mut value, patch);
    let params: SolverParams = serde_json::from_value(value)
        .context("invalid solver parameters")
        .map_err(validation)?;
    params.validate().map_err(|e| validation(anyhow!(e)))?;
    Ok(scenario.with_params(params))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(solver)?;
    let path = dir.join(name);
    write_atomic(&path, contents.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
        .map_err(solver)?;
    Ok(path)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let common = &cli.common;
    match cli.command {
        Command::Validate => {
            let s = load(common)?;
            println!(
                "ok: {} ({} DCs, {} steps, {} jobs, total volume {})",
                s.name,
                s.dc_count(),
                s.horizon,
                s.jobs.len(),
                s.total_volume()
            );
            Ok(0)
        }
        Command::Generate {
            kind,
            dcs,
            horizon,
            budget,
            max_jobs,
            name,
        } => {
            let mut mix = JobMixConfig::new(kind, common.seed, budget);
            mix.max_jobs = max_jobs;
            let spec = SyntheticSpec::new(dcs, horizon, mix);
            let s = synthetic_scenario(&spec).map_err(|e| validation(e.into()))?;
            std::fs::create_dir_all(&common.out)
                .with_context(|| format!("creating {}", common.out.display()))
                .map_err(solver)?;
            let path = common.out.join(name);
            save_scenario(&path, &s)
                .with_context(|| format!("writing {}", path.display()))
                .map_err(solver)?;
            println!("{}", path.display());
            Ok(0)
        }
        Command::Solve { dump_matrices } => {
            let s = load(common)?;
            let out = run_big_hype(&s, common.timing).map_err(|e| solver(e.into()))?;
            let metrics = compute_metrics(&s, &out.equilibrium.y_star).map_err(|e| solver(e.into()))?;
            let report = json!({
                "schema_version": REPORT_SCHEMA_VERSION,
                "scenario": s.name,
                "xi": s.params.xi,
                "status": out.trace.status,
                "iterations": out.trace.records.len() - 1,
                "phi": out.phi,
                "x": out.x,
                "metrics": metrics,
            });
            write(&common.out, "solve.json", &to_json(&report))?;
            write(&common.out, "trace.csv", &out.trace.to_csv())?;
            if dump_matrices {
                let m = vcc_core::game::GameMatrices::assemble(&s).map_err(|e| solver(e.into()))?;
                dump_debug(&common.out.join("matrices"), &m, Some(&out.equilibrium))
                    .context("writing matrix dump")
                    .map_err(solver)?;
            }
            println!("phi = {}  carbon/volume = {}", out.phi, metrics.carbon_per_volume);
            Ok(0)
        }
        Command::Baseline { method } => {
            if method == Method::Bilevel {
                return Err(validation(anyhow!("baseline method must be naive or sequential")));
            }
            let s = load(common)?;
            let run = run_method(&s, method, common.timing);
            let ok = run.status.is_ok();
            write(&common.out, &format!("baseline_{method}.json"), &to_json(&run))?;
            write(&common.out, &format!("baseline_{method}.csv"), &runs_to_csv(std::slice::from_ref(&run)))?;
            if ok {
                Ok(0)
            } else {
                Err(solver(anyhow!("{method} baseline failed: {:?}", run.status)))
            }
        }
        Command::Sweep { xi, method } => {
            let s = load(common)?;
            let rows = sweep_xi(&s, &xi, method, common.timing).map_err(|e| validation(e.into()))?;
            write(&common.out, "sweep.csv", &runs_to_csv(&rows))?;
            let failed = rows.iter().filter(|r| !r.status.is_ok()).count();
            Ok(match failed {
                0 => 0,
                n if n == rows.len() => 3,
                _ => 4,
            })
        }
        Command::Compare => {
            let s = load(common)?;
            let report = compare_methods(&s, common.timing);
            write(&common.out, "compare.json", &to_json(&report))?;
            write(&common.out, "compare.csv", &runs_to_csv(&report.runs))?;
            let failed = report.runs.iter().filter(|r| !r.status.is_ok()).count();
            Ok(match failed {
                0 => 0,
                n if n == report.runs.len() => 3,
                _ => 4,
            })
        }
    }
}
