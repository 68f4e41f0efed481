use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{HarnessConfig, ReferenceMode, ScenarioKind};
use super::seeds::{derive_seed, stream, streams, RunCoordinates};
use super::sweep::thread_pool;
use crate::error::{Error, Result};
use crate::estimators::{estimate, gradient_mae, reference_gradient, EstimatorConfig, EstimatorKind};
use crate::scenarios::{make_bottleneck_reference, make_exit_reference, Reference};

pub const FIDELITY_COLUMNS: [&str; 9] = ["point", "samples", "value", "output_mean", "ipa", "dgo", "hybrid", "pgo", "reference"];

/// One sweep point at one sample count. Estimates are the swept
/// coordinate's gradient entry.
#[derive(Clone, Debug, PartialEq)]
pub struct FidelityRow {
    pub point: usize,
    pub samples: usize,
    pub value: f64,
    pub output_mean: f64,
    pub ipa: f64,
    pub dgo: f64,
    pub hybrid: f64,
    pub pgo: f64,
    pub reference: f64,
}

impl FidelityRow {
    pub fn estimate(&self, kind: EstimatorKind) -> f64 {
        match kind {
            EstimatorKind::Ipa => self.ipa,
            EstimatorKind::Dgo => self.dgo,
            EstimatorKind::Hybrid => self.hybrid,
            EstimatorKind::Pgo => self.pgo,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaeRow {
    pub estimator: EstimatorKind,
    pub samples: usize,
    pub mae: f64,
}

#[derive(Clone, Debug)]
pub struct FidelityOutcome {
    pub rows: Vec<FidelityRow>,
    pub mae: Vec<MaeRow>,
    pub csv: PathBuf,
    pub mae_csv: PathBuf,
}

impl FidelityOutcome {
    pub fn mae(&self, kind: EstimatorKind, samples: usize) -> Option<f64> {
        self.mae.iter().find(|r| r.estimator == kind && r.samples == samples).map(|r| r.mae)
    }
}

/// Sweeps one coordinate over `points` evenly spaced values and, at every
/// value and sample count, records all four estimators next to a reference
/// gradient. All estimators at one (point, samples) share a seed.
pub fn run_fidelity(config: &HarnessConfig) -> Result<FidelityOutcome> {
    config.validate()?;
    let f = &config.fidelity;
    let reference = config.load_reference()?;
    let program = config.program(reference.as_ref())?;
    let base = config.fidelity_base()?;
    let pgo_sigma = f.pgo_sigma.unwrap_or(f.sigma);
    if !(pgo_sigma > 0.0) {
        return Err(Error::InvalidConfig("PGO needs a positive smoothing (fidelity.pgo_sigma)".into()));
    }
    let analytic = f.reference == ReferenceMode::Auto && config.analytic_gradient(&base, 0.0).is_some();
    let reference_sigma = f.reference_sigma.unwrap_or(if analytic || f.sigma > 0.0 { f.sigma } else { pgo_sigma });
    if !analytic && !(reference_sigma > 0.0) {
        return Err(Error::InvalidConfig("a PGO reference needs a positive fidelity.reference_sigma".into()));
    }
    let master = stream(config.run.master_seed, streams::FIDELITY);
    let ref_master = stream(config.run.master_seed, streams::FIDELITY_REFERENCE);
    let coord = f.coordinate;
    let step = (f.hi - f.lo) / (f.points - 1) as f64;

    let pool = thread_pool(config.run.workers)?;
    let per_point: Vec<Vec<FidelityRow>> = pool.install(|| {
        (0..f.points)
            .into_par_iter()
            .map(|p| -> Result<Vec<FidelityRow>> {
                let mut theta = base.clone();
                theta[coord] = if p + 1 == f.points { f.hi } else { f.lo + step * p as f64 };
                let reference = match config.analytic_gradient(&theta, reference_sigma).filter(|_| analytic) {
                    Some(g) => g,
                    None => {
                        let seed = derive_seed(ref_master, &RunCoordinates { sample: p as u64, ..Default::default() });
                        reference_gradient(program.as_ref(), &theta, f.reference_evaluations, reference_sigma, seed)?[coord]
                    }
                };
                f.samples
                    .iter()
                    .map(|&samples| {
                        let seed = derive_seed(
                            master,
                            &RunCoordinates { microreplication: p as u64, sample: samples as u64, ..Default::default() },
                        );
                        let run = |kind: EstimatorKind| {
                            let sigma = if kind == EstimatorKind::Pgo { pgo_sigma } else { f.sigma };
                            estimate(program.as_ref(), &theta, &EstimatorConfig::new(kind, samples, sigma, seed))
                        };
                        let dgo = run(EstimatorKind::Dgo)?;
                        Ok(FidelityRow {
                            point: p,
                            samples,
                            value: theta[coord],
                            output_mean: dgo.mean_output,
                            ipa: run(EstimatorKind::Ipa)?.gradient[coord],
                            dgo: dgo.gradient[coord],
                            hybrid: run(EstimatorKind::Hybrid)?.gradient[coord],
                            pgo: run(EstimatorKind::Pgo)?.gradient[coord],
                            reference,
                        })
                    })
                    .collect()
            })
            .collect::<Result<_>>()
    })?;
    let rows: Vec<FidelityRow> = per_point.into_iter().flatten().collect();

    let mut mae = Vec::new();
    for kind in EstimatorKind::ALL {
        for &samples in &f.samples {
            let (est, refs): (Vec<f64>, Vec<f64>) =
                rows.iter().filter(|r| r.samples == samples).map(|r| (r.estimate(kind), r.reference)).unzip();
            mae.push(MaeRow { estimator: kind, samples, mae: gradient_mae(&est, &refs)? });
        }
    }

    std::fs::create_dir_all(&config.run.output_dir)?;
    let csv = config.run.output_dir.join("fidelity.csv");
    let mae_csv = config.run.output_dir.join("fidelity_mae.csv");
    write_rows(&csv, &rows)?;
    write_mae(&mae_csv, &mae)?;
    Ok(FidelityOutcome { rows, mae, csv, mae_csv })
}

fn write_rows(path: &Path, rows: &[FidelityRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(FIDELITY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.point.to_string(),
            r.samples.to_string(),
            r.value.to_string(),
            r.output_mean.to_string(),
            r.ipa.to_string(),
            r.dgo.to_string(),
            r.hybrid.to_string(),
            r.pgo.to_string(),
            r.reference.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_mae(path: &Path, rows: &[MaeRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["estimator", "samples", "mae"])?;
    for r in rows {
        w.write_record([r.estimator.name().to_string(), r.samples.to_string(), r.mae.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Seeds used for a reference of `count` replications.
pub fn reference_seeds(master: u64, count: usize) -> Vec<u64> {
    let m = stream(master, streams::REFERENCE);
    (0..count).map(|i| derive_seed(m, &RunCoordinates { microreplication: i as u64, ..Default::default() })).collect()
}

/// Simulates the ground truth and writes the reference file to
/// `run.reference`, or `<output_dir>/reference.csv` when that is unset.
pub fn make_reference(config: &HarnessConfig) -> Result<(Reference<f64>, PathBuf)> {
    config.validate()?;
    let params = config.ground_truth()?;
    let seeds = reference_seeds(config.run.master_seed, config.reference.seeds);
    let pool = thread_pool(config.run.workers)?;
    let reference = pool.install(|| match config.run.scenario {
        ScenarioKind::Bottleneck => make_bottleneck_reference(&config.bottleneck, [params[0], params[1], params[2]], &seeds),
        ScenarioKind::ExitSelection => make_exit_reference(&config.exit_selection, &params, &seeds),
        other => Err(Error::InvalidConfig(format!("scenario {other} has no reference data"))),
    })?;
    let path = config.run.reference.clone().unwrap_or_else(|| config.run.output_dir.join("reference.csv"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    reference.write(&path)?;
    Ok((reference, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::synthetic::normal_pdf;

    fn heaviside(dir: &Path, points: usize, samples: Vec<usize>) -> HarnessConfig {
        let mut cfg = HarnessConfig::default();
        cfg.run.scenario = ScenarioKind::Heaviside;
        cfg.run.output_dir = dir.to_path_buf();
        cfg.fidelity.points = points;
        cfg.fidelity.lo = -2.0;
        cfg.fidelity.hi = 2.0;
        cfg.fidelity.sigma = 0.0;
        cfg.fidelity.pgo_sigma = Some(0.1);
        cfg.fidelity.samples = samples;
        cfg
    }

    #[test]
    fn quadratic_ipa_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = heaviside(dir.path(), 11, vec![1, 10]);
        cfg.run.scenario = ScenarioKind::Quadratic;
        let out = run_fidelity(&cfg).unwrap();
        assert_eq!(out.rows.len(), 22);
        for s in [1, 10] {
            assert!(out.mae(EstimatorKind::Ipa, s).unwrap() < 1e-12);
            assert!(out.mae(EstimatorKind::Dgo, s).unwrap() < 1e-12);
        }
    }

    #[test]
    fn heaviside_ipa_mae_is_mean_reference_magnitude() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_fidelity(&heaviside(dir.path(), 21, vec![10, 1000])).unwrap();
        let mean_ref = out.rows.iter().filter(|r| r.samples == 10).map(|r| r.reference.abs()).sum::<f64>() / 21.0;
        let ipa = out.mae(EstimatorKind::Ipa, 1000).unwrap();
        assert!((ipa - mean_ref).abs() < 1e-12);
        assert!(out.mae(EstimatorKind::Dgo, 1000).unwrap() < ipa);
        assert!(out.mae(EstimatorKind::Pgo, 1000).unwrap() < ipa);
        let mid = &out.rows[2 * 10];
        assert_eq!(mid.value, 0.0);
        assert!((mid.reference + normal_pdf(0.0)).abs() < 1e-12);
        let text = std::fs::read_to_string(&out.csv).unwrap();
        assert!(text.starts_with("point,samples,value,output_mean,ipa,dgo,hybrid,pgo,reference\n"));
        assert_eq!(text.lines().count(), 43);
        assert_eq!(std::fs::read_to_string(&out.mae_csv).unwrap().lines().count(), 9);
    }

    #[test]
    fn pgo_reference_for_simulations() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = heaviside(dir.path(), 300, vec![1]);
        cfg.run.scenario = ScenarioKind::Bottleneck;
        cfg.fidelity.lo = 0.0;
        cfg.fidelity.hi = 10.0;
        cfg.fidelity.sigma = 0.001;
        cfg.fidelity.pgo_sigma = None;
        cfg.fidelity.reference_evaluations = 2;
        cfg.bottleneck.duration = 2.0;
        let out = run_fidelity(&cfg).unwrap();
        assert_eq!(out.rows.len(), 300);
        assert_eq!(out.rows[299].value, 10.0);
        assert!(out.rows.iter().all(|r| r.reference.is_finite() && r.output_mean >= 0.0));
    }

    #[test]
    fn degenerate_plans_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = heaviside(dir.path(), 5, vec![10]);
        cfg.fidelity.pgo_sigma = None;
        assert!(matches!(run_fidelity(&cfg), Err(Error::InvalidConfig(_))));
        cfg.fidelity.points = 1;
        assert!(run_fidelity(&cfg).is_err());
    }

    #[test]
    fn reference_files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = HarnessConfig::default();
        cfg.run.output_dir = dir.path().to_path_buf();
        cfg.reference.seeds = 4;
        let (r, path) = make_reference(&cfg).unwrap();
        assert_eq!(path, dir.path().join("reference.csv"));
        assert_eq!(Reference::<f64>::read(&path).unwrap(), r);
        assert_eq!(r.seeds, reference_seeds(cfg.run.master_seed, 4));
        cfg.run.scenario = ScenarioKind::Quadratic;
        assert!(make_reference(&cfg).is_err());
    }
}
