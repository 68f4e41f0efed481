use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::Rng;
use rayon::prelude::*;

use super::config::HarnessConfig;
use super::grid::{expand_grid, GridEntry, MethodConfig};
use super::seeds::{derive_seed, stream, streams, RunCoordinates};
use crate::error::{Error, Result};
use crate::estimators::Program;
use crate::optimizers::{genetic_algorithm, gradient_descent, pso, Bounds, Budget, CrispEvaluator, Method, OptimizerRun};
use crate::seed::{mix_seed, rng_from, tags};

pub const TRACE_COLUMNS: [&str; 10] =
    ["method", "config_id", "macroreplication", "seed", "step", "evaluations", "wall_ms", "objective", "crisp", "best_crisp"];
const WALL_COLUMN: usize = 6;
const BEST_CRISP_COLUMN: usize = 9;

pub fn run_id(config_id: &str, macroreplication: usize) -> String {
    format!("{config_id}-m{macroreplication}")
}

/// Inverse of [`run_id`].
pub fn parse_run_id(id: &str) -> Option<(String, usize)> {
    let (config, m) = id.rsplit_once("-m")?;
    Some((config.to_string(), m.parse().ok()?))
}

/// A prepared sweep: objective, bounds, grid and crisp seed set.
pub struct Study {
    pub config: HarnessConfig,
    pub program: Box<dyn Program<f64>>,
    pub bounds: Bounds<f64>,
    pub grid: Vec<GridEntry>,
    pub crisp: CrispEvaluator,
}

impl Study {
    /// Startup checks. A simulation scenario without a readable reference
    /// file fails here, before any run starts.
    pub fn prepare(config: &HarnessConfig) -> Result<Self> {
        config.validate()?;
        let scenario = config.run.scenario;
        if scenario.needs_reference() && config.run.reference.is_none() {
            return Err(Error::InvalidConfig(format!("scenario {scenario} needs run.reference for a sweep")));
        }
        let reference = config.load_reference()?;
        let program = config.program(reference.as_ref())?;
        let master = config.run.master_seed;
        Ok(Study {
            program,
            bounds: config.bounds()?,
            grid: expand_grid(&config.sweep, master)?,
            crisp: CrispEvaluator::new(stream(master, streams::SWEEP), config.sweep.crisp_seeds),
            config: config.clone(),
        })
    }

    pub fn budget(&self) -> Budget {
        Budget {
            max_evaluations: self.config.sweep.max_evaluations,
            max_wall: self.config.sweep.max_wall_seconds.map(Duration::from_secs_f64),
        }
    }

    /// All configurations share the seed stream of a macroreplication, so
    /// configurations are compared under common random numbers.
    pub fn run_seed(&self, macroreplication: usize) -> u64 {
        derive_seed(stream(self.config.run.master_seed, streams::SWEEP), &RunCoordinates::macroreplication(macroreplication))
    }

    pub fn entry(&self, config_id: &str) -> Option<&GridEntry> {
        self.grid.iter().find(|e| e.id == config_id)
    }

    pub fn execute(&self, entry: &GridEntry, seed: u64, budget: &Budget) -> Result<OptimizerRun<f64>> {
        let prog = self.program.as_ref();
        match &entry.config {
            MethodConfig::Gd(c) => {
                let mut rng = rng_from(mix_seed(seed, &[tags::INIT]));
                let theta0: Vec<f64> =
                    self.bounds.lo.iter().zip(&self.bounds.hi).map(|(l, h)| l + (h - l) * rng.random::<f64>()).collect();
                gradient_descent(prog, c, &theta0, &self.bounds, budget, &self.crisp, seed)
            }
            MethodConfig::Pso(c) => pso(prog, c, &self.bounds, budget, &self.crisp, seed),
            MethodConfig::Ga(c) => genetic_algorithm(prog, c, &self.bounds, budget, &self.crisp, seed),
        }
    }
}

/// Trace rows as written to CSV; floats use shortest round-trip formatting.
pub fn trace_records(config_id: &str, macroreplication: usize, seed: u64, run: &OptimizerRun<f64>) -> Vec<Vec<String>> {
    run.trace
        .iter()
        .map(|r| {
            let mut rec = vec![
                run.method.name().to_string(),
                config_id.to_string(),
                macroreplication.to_string(),
                seed.to_string(),
                r.step.to_string(),
                r.evaluations.to_string(),
                format!("{:.3}", r.wall_ms),
                r.objective.map(|o| o.to_string()).unwrap_or_default(),
                r.crisp.to_string(),
                r.best_crisp.to_string(),
            ];
            rec.extend(r.incumbent.iter().map(|v| v.to_string()));
            rec
        })
        .collect()
}

pub fn trace_header(dim: usize) -> Vec<String> {
    TRACE_COLUMNS.iter().map(|s| s.to_string()).chain((0..dim).map(|i| format!("theta_{i}"))).collect()
}

pub fn write_trace(path: &Path, dim: usize, records: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trace_header(dim))?;
    for r in records {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(String::from).collect::<Vec<_>>();
    if header.len() < TRACE_COLUMNS.len() || header[..TRACE_COLUMNS.len()] != TRACE_COLUMNS {
        return Err(Error::Malformed { path: path.to_path_buf(), reason: "not a trace file".into() });
    }
    let rows = r.records().map(|rec| rec.map(|rec| rec.iter().map(String::from).collect())).collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub config_id: String,
    pub method: Method,
    pub macroreplication: usize,
    pub seed: u64,
    pub status: RunStatus,
    pub evaluations: usize,
    pub final_best_crisp: Option<f64>,
    pub trace_file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub config_id: String,
    pub hyperparameters: String,
    pub completed: usize,
    pub failed: usize,
    pub mean_final_crisp: Option<f64>,
    /// Lowest mean final crisp objective among the method's configurations.
    pub best: bool,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub output_dir: PathBuf,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

impl SweepOutcome {
    pub fn all_completed(&self) -> bool {
        self.runs.iter().all(|r| r.status == RunStatus::Completed)
    }

    pub fn failed(&self) -> usize {
        self.runs.iter().filter(|r| r.status != RunStatus::Completed).count()
    }

    pub fn best(&self, method: Method) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.method == method && r.best)
    }
}

pub fn traces_dir(output_dir: &Path) -> PathBuf {
    output_dir.join("traces")
}

/// Per-configuration summary computed from the trace files in `dir` alone:
/// the final `best_crisp` of every trace, averaged per configuration.
pub fn summarize_traces(dir: &Path, grid: &[GridEntry], failed: &HashMap<String, usize>) -> Result<Vec<SummaryRow>> {
    let mut finals: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    for path in paths {
        let (_, rows) = read_trace(&path)?;
        let Some(last) = rows.last() else { continue };
        let v: f64 = last[BEST_CRISP_COLUMN]
            .parse()
            .map_err(|_| Error::Malformed { path: path.clone(), reason: "unparsable best_crisp".into() })?;
        finals.entry(last[1].clone()).or_default().push(v);
    }
    let mut rows: Vec<SummaryRow> = grid
        .iter()
        .map(|e| {
            let f = finals.get(&e.id);
            SummaryRow {
                method: e.config.method(),
                config_id: e.id.clone(),
                hyperparameters: e.config.label(),
                completed: f.map_or(0, Vec::len),
                failed: failed.get(&e.id).copied().unwrap_or(0),
                mean_final_crisp: f.map(|v| v.iter().sum::<f64>() / v.len() as f64),
                best: false,
            }
        })
        .collect();
    let mut best: BTreeMap<Method, (usize, f64)> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        if let Some(m) = r.mean_final_crisp.filter(|m| !m.is_nan()) {
            if best.get(&r.method).is_none_or(|&(_, b)| m < b) {
                best.insert(r.method, (i, m));
            }
        }
    }
    for (i, _) in best.values() {
        rows[*i].best = true;
    }
    Ok(rows)
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "config_id", "hyperparameters", "completed", "failed", "mean_final_crisp", "best"])?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.config_id.clone(),
            r.hyperparameters.clone(),
            r.completed.to_string(),
            r.failed.to_string(),
            r.mean_final_crisp.map(|m| m.to_string()).unwrap_or_default(),
            r.best.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_configs(path: &Path, grid: &[GridEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["config_id", "method", "hyperparameters"])?;
    for e in grid {
        w.write_record([e.id.as_str(), e.config.method().name(), e.config.label().as_str()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_manifest(path: &Path, runs: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["run_id", "config_id", "method", "macroreplication", "seed", "status", "evaluations", "final_best_crisp", "error"])?;
    for r in runs {
        let (status, err) = match &r.status {
            RunStatus::Completed => ("completed", String::new()),
            RunStatus::Failed(e) => ("failed", e.clone()),
        };
        w.write_record([
            r.run_id.clone(),
            r.config_id.clone(),
            r.method.name().to_string(),
            r.macroreplication.to_string(),
            r.seed.to_string(),
            status.to_string(),
            r.evaluations.to_string(),
            r.final_best_crisp.map(|v| v.to_string()).unwrap_or_default(),
            err,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {workers} workers: {e}")))
}

/// Runs every (configuration, macroreplication) pair on a pool of
/// `run.workers` threads. Results are written by the calling thread as they
/// arrive; a failed run is recorded in the manifest and the sweep goes on.
pub fn run_sweep(config: &HarnessConfig) -> Result<SweepOutcome> {
    run_study(&Study::prepare(config)?)
}

/// [`run_sweep`] on an already prepared study.
pub fn run_study(study: &Study) -> Result<SweepOutcome> {
    let config = &study.config;
    let out = config.run.output_dir.clone();
    let traces = traces_dir(&out);
    std::fs::create_dir_all(&traces)?;
    std::fs::write(out.join("config.toml"), config.to_toml()?)?;
    write_configs(&out.join("configs.csv"), &study.grid)?;

    let jobs: Vec<(usize, usize)> =
        (0..study.grid.len()).flat_map(|e| (0..config.sweep.macroreplications).map(move |m| (e, m))).collect();
    log::info!("sweep: {} configurations x {} macroreplications", study.grid.len(), config.sweep.macroreplications);
    let pool = thread_pool(config.run.workers)?;
    let budget = study.budget();
    let dim = study.bounds.dim();
    let (tx, rx) = std::sync::mpsc::channel();
    let mut runs = Vec::with_capacity(jobs.len());
    let mut write_error = None;
    std::thread::scope(|s| {
        let jobs = &jobs;
        s.spawn(move || {
            pool.install(|| {
                jobs.par_iter().for_each_with(tx, |tx, &(e, m)| {
                    let seed = study.run_seed(m);
                    let result = study.execute(&study.grid[e], seed, &budget);
                    let _ = tx.send((e, m, seed, result));
                })
            })
        });
        for (e, m, seed, result) in rx {
            let entry = &study.grid[e];
            let id = run_id(&entry.id, m);
            let mut record = RunRecord {
                run_id: id.clone(),
                config_id: entry.id.clone(),
                method: entry.config.method(),
                macroreplication: m,
                seed,
                status: RunStatus::Completed,
                evaluations: 0,
                final_best_crisp: None,
                trace_file: None,
            };
            match result {
                Ok(run) => {
                    let path = traces.join(format!("{id}.csv"));
                    record.evaluations = run.evaluations;
                    record.final_best_crisp = run.trace.last().map(|r| r.best_crisp);
                    if let Err(err) = write_trace(&path, dim, &trace_records(&entry.id, m, seed, &run)) {
                        record.status = RunStatus::Failed(err.to_string());
                        write_error.get_or_insert(err);
                    } else {
                        record.trace_file = Some(path);
                    }
                    log::info!("run {id} done: {} evaluations, best crisp {:?}", run.evaluations, record.final_best_crisp);
                }
                Err(err) => {
                    log::error!("run {id} failed: {err}");
                    record.status = RunStatus::Failed(err.to_string());
                }
            }
            runs.push(record);
        }
    });
    if let Some(err) = write_error {
        return Err(err.context("writing traces"));
    }
    runs.sort_by(|a, b| (&a.config_id, a.macroreplication).cmp(&(&b.config_id, b.macroreplication)));
    write_manifest(&out.join("manifest.csv"), &runs)?;
    let mut failed: HashMap<String, usize> = HashMap::new();
    for r in runs.iter().filter(|r| r.status != RunStatus::Completed) {
        *failed.entry(r.config_id.clone()).or_default() += 1;
    }
    let summary = summarize_traces(&traces, &study.grid, &failed)?;
    write_summary(&out.join("summary.csv"), &summary)?;
    Ok(SweepOutcome { output_dir: out, runs, summary })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayReport {
    pub run_id: String,
    pub rows: usize,
    /// Human-readable differences; empty for an exact reproduction.
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-executes one sweep run in isolation and compares it with its trace
/// file, column by column except `wall_ms`. The evaluation budget is the
/// one the recorded run actually used, so wall-time-limited runs replay too.
pub fn replay(config: &HarnessConfig, id: &str) -> Result<ReplayReport> {
    let (config_id, m) = parse_run_id(id).ok_or_else(|| Error::InvalidConfig(format!("malformed run id {id:?}")))?;
    let path = traces_dir(&config.run.output_dir).join(format!("{id}.csv"));
    let (header, recorded) = read_trace(&path)?;
    let study = Study::prepare(config)?;
    let entry = study.entry(&config_id).ok_or_else(|| Error::InvalidConfig(format!("no configuration {config_id} in this grid")))?;
    let used: usize = recorded
        .last()
        .and_then(|r| r[5].parse().ok())
        .ok_or_else(|| Error::Malformed { path: path.clone(), reason: "empty or unparsable trace".into() })?;
    let seed = study.run_seed(m);
    let run = study.execute(entry, seed, &Budget::evaluations(used))?;
    let fresh = trace_records(&config_id, m, seed, &run);
    let mut mismatches = Vec::new();
    if fresh.len() != recorded.len() {
        mismatches.push(format!("row count: recorded {}, replayed {}", recorded.len(), fresh.len()));
    }
    for (i, (a, b)) in recorded.iter().zip(&fresh).enumerate() {
        if a.len() != b.len() {
            mismatches.push(format!("row {i}: column count {} vs {}", a.len(), b.len()));
            continue;
        }
        for (c, (x, y)) in a.iter().zip(b).enumerate() {
            if c != WALL_COLUMN && x != y {
                mismatches.push(format!("row {i} {}: recorded {x}, replayed {y}", header.get(c).map_or("?", String::as_str)));
            }
        }
    }
    Ok(ReplayReport { run_id: id.to_string(), rows: recorded.len(), mismatches })
}
