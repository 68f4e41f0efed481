use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use crowdcal::harness::{make_reference, replay, run_fidelity, run_sweep, HarnessConfig, ScenarioKind};
use crowdcal::optimizers::Method;

/// Calibrate Social Force evacuation models with branch-aware gradient
/// estimators, particle swarms and genetic algorithms.
#[derive(Debug, Parser)]
#[command(name = "crowdcal", version)]
struct Cli {
    /// TOML configuration; built-in defaults when absent.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// bottleneck, exit_selection, heaviside or quadratic.
    #[arg(long, global = true, value_parser = parse_scenario)]
    scenario: Option<ScenarioKind>,
    /// Function-evaluation budget per run.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Wall-time budget per run, seconds.
    #[arg(long, global = true)]
    wall_seconds: Option<f64>,
    /// Worker threads (0 = one per core).
    #[arg(long, short = 'j', global = true)]
    workers: Option<usize>,
    /// Master seed every run seed is derived from.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, short, global = true)]
    output_dir: Option<PathBuf>,
    /// Reference CSV to read (sweep, fidelity) or write (make-reference).
    #[arg(long, global = true)]
    reference: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Gradient-fidelity sweep over one parameter.
    Fidelity,
    /// Hyperparameter sweep with macroreplications.
    Sweep {
        #[arg(long)]
        macroreplications: Option<usize>,
    },
    /// Simulate the ground truth and write a reference file.
    MakeReference,
    /// Re-run one sweep run and compare it with its trace.
    Replay { run_id: String },
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    ScenarioKind::parse(s).ok_or_else(|| format!("unknown scenario {s:?}"))
}

impl Cli {
    fn load_config(&self) -> Result<HarnessConfig> {
        let path = match (&self.config, &self.command) {
            (Some(p), _) => Some(p.clone()),
            // a replay defaults to the configuration saved with the sweep
            (None, Command::Replay { .. }) => {
                let dir = self.output_dir.clone().unwrap_or_else(|| HarnessConfig::default().run.output_dir);
                Some(dir.join("config.toml"))
            }
            (None, _) => None,
        };
        let mut cfg = match path {
            Some(p) => HarnessConfig::load(&p)?,
            None => HarnessConfig::default(),
        };
        if let Some(s) = self.scenario {
            cfg.run.scenario = s;
        }
        if let Some(b) = self.budget {
            cfg.sweep.max_evaluations = b;
        }
        if let Some(w) = self.wall_seconds {
            cfg.sweep.max_wall_seconds = Some(w);
        }
        if let Some(w) = self.workers {
            cfg.run.workers = w;
        }
        if let Some(s) = self.seed {
            cfg.run.master_seed = s;
        }
        if let Some(d) = &self.output_dir {
            cfg.run.output_dir = d.clone();
        }
        if let Some(r) = &self.reference {
            cfg.run.reference = Some(r.clone());
        }
        if let Command::Sweep { macroreplications: Some(m) } = self.command {
            cfg.sweep.macroreplications = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = cli.load_config().context("configuration")?;
    match &cli.command {
        Command::Fidelity => {
            let out = run_fidelity(&cfg)?;
            println!("wrote {} ({} rows) and {}", out.csv.display(), out.rows.len(), out.mae_csv.display());
            println!("{:<8} {:>8} {:>14}", "estimator", "samples", "mae");
            for r in &out.mae {
                println!("{:<8} {:>8} {:>14.6e}", r.estimator.name(), r.samples, r.mae);
            }
            Ok(true)
        }
        Command::Sweep { .. } => {
            let out = run_sweep(&cfg)?;
            println!("{} runs, {} failed; results in {}", out.runs.len(), out.failed(), out.output_dir.display());
            for m in [Method::Gd, Method::Pso, Method::Ga] {
                if let Some(best) = out.best(m) {
                    println!(
                        "best {}: {} ({}) mean final crisp {}",
                        m,
                        best.config_id,
                        best.hyperparameters,
                        best.mean_final_crisp.map_or("n/a".into(), |v| format!("{v:.6}"))
                    );
                }
            }
            Ok(out.all_completed())
        }
        Command::MakeReference => {
            let (r, path) = make_reference(&cfg)?;
            println!("wrote {} reference from {} seeds to {}", r.scenario, r.seeds.len(), path.display());
            Ok(true)
        }
        Command::Replay { run_id } => {
            let report = replay(&cfg, run_id)?;
            if report.is_exact() {
                println!("{}: {} rows reproduced exactly", report.run_id, report.rows);
                Ok(true)
            } else {
                for m in report.mismatches.iter().take(20) {
                    eprintln!("{m}");
                }
                bail!("{}: {} mismatches", report.run_id, report.mismatches.len())
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some runs failed; see manifest.csv");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
