use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use tsn_synth::annealer::{anneal, SAParams};
use tsn_synth::exact::{solve_pipeline_exact, ExactPipelineOptions};
use tsn_synth::model::{expand_security_model, SystemModel};
use tsn_synth::schedule::{evaluate, Solution};
use tsn_synth::tesla::model_p_int;
use tsn_synth::toolkit::{
    export_gcl, generate_test_case, model_from_toml, model_to_toml, render, run_experiment, solution_from_toml,
    solution_to_toml, ExperimentRow, ExperimentSpec, RenderTarget, TestCaseSpec,
};
use tsn_synth::verify::{verify_solution, Strictness, VerifyOptions};

/// Synthesis of routes, key intervals and schedules for secure, redundant
/// TSN configurations.
#[derive(Parser)]
#[command(name = "tsn-synth", version)]
struct Cli {
    /// Seed for generation and annealing (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Wall-clock budget in seconds.
    #[arg(long, global = true)]
    budget: Option<f64>,
    /// TOML file with `[sa]`, `[testcase]` and `[experiment]` tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Generate a test case.
    Gen {
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Solve with the exact pipeline.
    SolveExact {
        model: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Solve with simulated annealing.
    SolveSa {
        model: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Write (iteration, temperature, cost, best) records here, every
        /// iteration unless `sa.trace_every` says otherwise.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check a solution; the exit code is the number of findings.
    Verify {
        model: PathBuf,
        solution: PathBuf,
        #[arg(long, value_enum, default_value = "queue")]
        strictness: StrictnessArg,
    },
    /// Write gate control lists for a verified solution.
    ExportGcl {
        model: PathBuf,
        solution: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Draw a solution as SVG.
    Render {
        model: PathBuf,
        solution: PathBuf,
        #[arg(long, value_enum, default_value = "gantt")]
        target: TargetArg,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a batch experiment and write CSV rows.
    Experiment {
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum StrictnessArg {
    Printed,
    Queue,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TargetArg {
    Gantt,
    Routes,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    sa: SAParams,
    testcase: TestCaseSpec,
    experiment: ExperimentSpec,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => toml::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.sa.seed = s;
        cfg.testcase.seed = s;
        cfg.experiment.sa.seed = s;
        for b in &mut cfg.experiment.batches {
            b.seed = s;
        }
    }
    if let Some(secs) = cli.budget {
        if !(secs.is_finite() && secs > 0.0) {
            bail!("--budget must be a positive number of seconds");
        }
        let d = Duration::from_secs_f64(secs);
        cfg.sa.time_limit = Some(d);
        cfg.experiment.sa.time_limit = Some(d);
        cfg.experiment.exact_time_limit = d;
    }
    Ok(cfg)
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => stdout(text),
    }
}

/// Writes to stdout, treating a closed pipe as success.
fn stdout(text: &str) -> Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

/// The expanded model with the key interval of `sol` bound, plus the
/// solution itself.
fn load_solved(model: &Path, solution: &Path) -> Result<(SystemModel, Solution)> {
    let m = expand_security_model(&model_from_toml(&read(model)?)?)?;
    let sol = solution_from_toml(&m, &read(solution)?)?;
    Ok((m.with_key_interval(sol.key_interval), sol))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = load_config(&cli)?;
    match &cli.verb {
        Verb::Gen { out } => {
            let m = generate_test_case(&cfg.testcase)?;
            emit(out, &model_to_toml(&m)?)?;
        }
        Verb::SolveExact { model, out } => {
            let m = model_from_toml(&read(model)?)?;
            let mut opts = ExactPipelineOptions::default();
            if let Some(secs) = cli.budget {
                opts.routing.time_limit = Duration::from_secs_f64(secs);
                opts.schedule.time_limit = Duration::from_secs_f64(secs);
            }
            let r = solve_pipeline_exact(&m, &opts)?;
            eprintln!(
                "key interval {}, routing cost {}{}, latency {}{}",
                r.solution.key_interval,
                r.routing_cost,
                if r.routes_optimal { "" } else { " (not proven optimal)" },
                r.schedule_cost,
                if r.schedule_optimal { "" } else { " (not proven optimal)" },
            );
            emit(out, &solution_to_toml(&r.model, &r.solution)?)?;
        }
        Verb::SolveSa { model, out, trace } => {
            let m = expand_security_model(&model_from_toml(&read(model)?)?)?;
            let p = model_p_int(&m)?;
            let bound = m.with_key_interval(p);
            let mut params = cfg.sa.clone();
            if trace.is_some() && params.trace_every == 0 {
                params.trace_every = 1;
            }
            let o = anneal(&bound, &params)?;
            if let Some(t) = trace {
                let lines: String = o
                    .trace
                    .iter()
                    .map(|r| format!("{} {} {} {}\n", r.iteration, r.temperature, r.cost, r.best))
                    .collect();
                fs::write(t, lines).with_context(|| format!("writing {}", t.display()))?;
            }
            let sol = o.best.to_solution(p);
            let b = evaluate(&bound, &sol);
            eprintln!(
                "key interval {p}, cost {}, {} iterations in {:.2?}, first feasible {:?}",
                o.best.cost, o.iterations, o.elapsed, o.time_to_first_feasible
            );
            if !b.feasible() {
                eprintln!("unscheduled: {:?}, overlapping: {:?}", o.infeasible_apps, o.overlapping_streams);
            }
            emit(out, &solution_to_toml(&bound, &sol)?)?;
            if !b.feasible() {
                return Ok(ExitCode::from(1));
            }
        }
        Verb::Verify { model, solution, strictness } => {
            let (m, sol) = load_solved(model, solution)?;
            let strictness = match strictness {
                StrictnessArg::Printed => Strictness::Printed,
                StrictnessArg::Queue => Strictness::Queue,
            };
            let report = verify_solution(&m, &sol, VerifyOptions { strictness, ..Default::default() });
            stdout(&report.to_string())?;
            let findings = report.violations.len() + report.unscheduled.len();
            return Ok(ExitCode::from(findings.min(125) as u8));
        }
        Verb::ExportGcl { model, solution, out } => {
            let (m, sol) = load_solved(model, solution)?;
            let text: String = export_gcl(&m, &sol)?.iter().map(|g| g.to_string()).collect();
            emit(out, &text)?;
        }
        Verb::Render { model, solution, target, out } => {
            let (m, sol) = load_solved(model, solution)?;
            let target = match target {
                TargetArg::Gantt => RenderTarget::Gantt,
                TargetArg::Routes => RenderTarget::Routes,
            };
            emit(out, &render(&m, &sol, target))?;
        }
        Verb::Experiment { out } => {
            let rows = run_experiment(&cfg.experiment)?;
            emit(out, &ExperimentRow::to_csv(&rows)?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(126)
        }
    }
}
