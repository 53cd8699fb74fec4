//! Batch runs over generated test cases with security and redundancy
//! toggles.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate_test_case, TestCaseSpec};
use crate::annealer::{anneal, SAParams};
use crate::error::Result;
use crate::exact::{solve_pipeline_exact, ExactPipelineOptions};
use crate::model::{expand_security_model, SystemModel};
use crate::routing::{bandwidth_utilization, RouteAssignment};
use crate::schedule::evaluate;
use crate::tesla::model_p_int;
use crate::verify::{verify_solution, VerifyOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Sa,
    Exact,
}

/// Which requirements are kept in a run. `Baseline` drops both.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Toggle {
    Baseline,
    Redundancy,
    Security,
    Both,
}

impl Toggle {
    pub const ALL: [Toggle; 4] = [Toggle::Baseline, Toggle::Redundancy, Toggle::Security, Toggle::Both];

    pub fn apply(self, model: &SystemModel) -> Result<SystemModel> {
        match self {
            Toggle::Baseline => model.without_security()?.without_redundancy(),
            Toggle::Redundancy => model.without_security(),
            Toggle::Security => model.without_redundancy(),
            Toggle::Both => Ok(model.clone()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub batches: Vec<TestCaseSpec>,
    /// Cases per batch; case `i` uses the batch seed plus `i`.
    pub cases: usize,
    pub engines: Vec<Engine>,
    pub toggles: Vec<Toggle>,
    pub sa: SAParams,
    /// Stop annealing at the first feasible solution.
    pub first_feasible: bool,
    pub exact_time_limit: Duration,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            batches: vec![TestCaseSpec::default()],
            cases: 1,
            engines: vec![Engine::Sa],
            toggles: Toggle::ALL.to_vec(),
            sa: SAParams::default(),
            first_feasible: true,
            exact_time_limit: Duration::from_secs(60),
        }
    }
}

/// One (case, toggle, engine) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub batch: String,
    pub case: usize,
    pub seed: u64,
    pub toggle: Toggle,
    pub engine: Engine,
    pub n_es: usize,
    pub n_sw: usize,
    pub n_streams: usize,
    pub n_tasks: usize,
    pub feasible: bool,
    pub verified: bool,
    pub cost: Option<u64>,
    pub wall_ms: u64,
    pub first_feasible_ms: Option<u64>,
    /// Mean link utilisation.
    pub bandwidth: Option<f64>,
    /// Mean end-system utilisation.
    pub cpu: Option<f64>,
}

/// Mean utilisation of links and of end-systems on a bound, expanded
/// model. Every secure copy adds one MAC computation at its sender and at
/// each receiving end-system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Utilization {
    pub bandwidth: f64,
    pub cpu: f64,
}

pub fn utilization(model: &SystemModel, routes: &RouteAssignment) -> Utilization {
    let bw = bandwidth_utilization(model, routes);
    let bandwidth = bw.values().sum::<f64>() / bw.len().max(1) as f64;
    let net = &model.network;
    let mut load = vec![0.0; net.nodes().len()];
    for t in model.task_ids() {
        load[model.task(t).es.0] += model.task(t).wcet as f64 / model.task_period(t) as f64;
    }
    for c in model.copy_ids() {
        let s = model.copy(c).stream;
        if !model.stream(s).secure {
            continue;
        }
        let period = model.stream_period(s) as f64;
        let src = model.sender_es(s);
        load[src.0] += net.hash_time(src).unwrap_or(0) as f64 / period;
        for r in model.receiver_es(s) {
            load[r.0] += net.hash_time(r).unwrap_or(0) as f64 / period;
        }
    }
    let ess: Vec<_> = net.end_systems().collect();
    let cpu = ess.iter().map(|e| load[e.0]).sum::<f64>() / ess.len().max(1) as f64;
    Utilization { bandwidth, cpu }
}

struct Job<'a> {
    batch: &'a TestCaseSpec,
    case: usize,
    toggle: Toggle,
    engine: Engine,
}

fn run_job(spec: &ExperimentSpec, job: &Job) -> Result<ExperimentRow> {
    let seed = job.batch.seed.wrapping_add(job.case as u64);
    let base = generate_test_case(&TestCaseSpec { seed, ..job.batch.clone() })?;
    let model = job.toggle.apply(&base)?;
    let started = Instant::now();
    let mut row = ExperimentRow {
        batch: job.batch.label.clone(),
        case: job.case,
        seed,
        toggle: job.toggle,
        engine: job.engine,
        n_es: model.network.end_systems().count(),
        n_sw: model.network.switches().count(),
        n_streams: model.streams().len(),
        n_tasks: model.tasks().len(),
        feasible: false,
        verified: false,
        cost: None,
        wall_ms: 0,
        first_feasible_ms: None,
        bandwidth: None,
        cpu: None,
    };
    let outcome = match job.engine {
        Engine::Sa => {
            let expanded = expand_security_model(&model)?;
            let p = model_p_int(&expanded)?;
            let bound = expanded.with_key_interval(p);
            let params = SAParams {
                seed: spec.sa.seed.wrapping_add(seed),
                target_cost: if spec.first_feasible { Some(u64::MAX) } else { spec.sa.target_cost },
                ..spec.sa.clone()
            };
            anneal(&bound, &params).map(|o| {
                row.first_feasible_ms = o.time_to_first_feasible.map(|d| d.as_millis() as u64);
                (bound, o.best.to_solution(p))
            })
        }
        Engine::Exact => {
            let mut opts = ExactPipelineOptions::default();
            opts.routing.time_limit = spec.exact_time_limit;
            opts.schedule.time_limit = spec.exact_time_limit;
            solve_pipeline_exact(&model, &opts).map(|r| {
                row.first_feasible_ms = Some(started.elapsed().as_millis() as u64);
                (r.model, r.solution)
            })
        }
    };
    row.wall_ms = started.elapsed().as_millis() as u64;
    if let Ok((bound, sol)) = outcome {
        let b = evaluate(&bound, &sol);
        row.feasible = b.feasible();
        row.cost = Some(b.total(spec.sa.a, spec.sa.b));
        row.verified = verify_solution(&bound, &sol, VerifyOptions::default()).is_ok();
        let u = utilization(&bound, &sol.routes);
        row.bandwidth = Some(u.bandwidth);
        row.cpu = Some(u.cpu);
    } else {
        row.first_feasible_ms = None;
    }
    Ok(row)
}

/// Runs every (batch, case, toggle, engine) combination in parallel and
/// returns the rows in that nesting order. Runs whose engine fails are
/// reported as infeasible rows without cost.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ExperimentRow>> {
    for b in &spec.batches {
        b.validate()?;
    }
    spec.sa.validate()?;
    let mut jobs = Vec::new();
    for batch in &spec.batches {
        for case in 0..spec.cases {
            for &toggle in &spec.toggles {
                for &engine in &spec.engines {
                    jobs.push(Job { batch, case, toggle, engine });
                }
            }
        }
    }
    jobs.par_iter().map(|j| run_job(spec, j)).collect()
}

impl ExperimentRow {
    /// Writes rows as CSV with a header line.
    pub fn to_csv(rows: &[ExperimentRow]) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| crate::Error::Export(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| crate::Error::Export(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
