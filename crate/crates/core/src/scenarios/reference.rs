use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::bottleneck::{bottleneck_measure, simulate_bottleneck, BottleneckConfig};
use super::exit_selection::{plain_coefficients, simulate_exit_selection, ExitSelectionConfig};
use super::histogram::{Histogram20, BINS};
use crate::ad::TraceContext;
use crate::error::{Error, Result};
use crate::scalar::PlainScalar;
use crate::social_force::ForceWeights;

/// Calibration target.
#[derive(Clone, Debug, PartialEq)]
pub enum ReferenceValue<T> {
    Scalar(T),
    /// Normalized evacuation-time histogram.
    Histogram([T; BINS]),
}

/// A calibration target together with the ground truth that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference<T> {
    pub scenario: String,
    pub objective: String,
    pub parameters: Vec<T>,
    pub seeds: Vec<u64>,
    pub value: ReferenceValue<T>,
}

fn require_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok(())
}

/// Mean plain-mode measurement at `weights` over `seeds`.
pub fn make_bottleneck_reference<T: PlainScalar>(cfg: &BottleneckConfig<T>, weights: [T; 3], seeds: &[u64]) -> Result<Reference<T>> {
    require_seeds(seeds)?;
    let w = ForceWeights::new(weights[0], weights[1], weights[2]);
    let values: Vec<T> = seeds
        .par_iter()
        .map(|&s| {
            let mut ctx = TraceContext::plain();
            let world = simulate_bottleneck(cfg, &w, &mut ctx, s)?;
            bottleneck_measure(cfg, &world, &mut ctx)
        })
        .collect::<Result<_>>()?;
    let mean = values.iter().copied().sum::<T>() / T::from_usize_lossy(values.len());
    Ok(Reference {
        scenario: "bottleneck".into(),
        objective: cfg.objective.name().into(),
        parameters: weights.to_vec(),
        seeds: seeds.to_vec(),
        value: ReferenceValue::Scalar(mean),
    })
}

/// Mean normalized evacuation-time histogram at input-bin weights
/// `weights` over `seeds`.
pub fn make_exit_reference<T: PlainScalar>(cfg: &ExitSelectionConfig<T>, weights: &[T], seeds: &[u64]) -> Result<Reference<T>> {
    require_seeds(seeds)?;
    let hists: Vec<[T; BINS]> = seeds
        .par_iter()
        .map(|&s| {
            let coeffs = plain_coefficients(cfg, weights, s)?;
            simulate_exit_selection(cfg, &coeffs, &mut TraceContext::plain(), s)?.histogram.normalized()
        })
        .collect::<Result<_>>()?;
    let n = T::from_usize_lossy(hists.len());
    let mut mean = [<T as num_traits::Zero>::zero(); BINS];
    for h in &hists {
        for (m, v) in mean.iter_mut().zip(h) {
            *m += *v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(Reference {
        scenario: "exit_selection".into(),
        objective: "wasserstein".into(),
        parameters: weights.to_vec(),
        seeds: seeds.to_vec(),
        value: ReferenceValue::Histogram(mean),
    })
}

impl<T: PlainScalar> Reference<T> {
    pub fn scalar(&self) -> Result<T> {
        match self.value {
            ReferenceValue::Scalar(v) => Ok(v),
            ReferenceValue::Histogram(_) => Err(Error::InvalidConfig("reference is a histogram, expected a scalar".into())),
        }
    }

    /// The reference as an output histogram on the scenario's support.
    pub fn histogram(&self, cfg: &ExitSelectionConfig<T>) -> Result<Histogram20<T>> {
        match &self.value {
            ReferenceValue::Histogram(w) => {
                let mut h = cfg.output_histogram()?;
                h.weights = *w;
                h.normalized()?;
                Ok(h)
            }
            ReferenceValue::Scalar(_) => Err(Error::InvalidConfig("reference is a scalar, expected a histogram".into())),
        }
    }

    /// CSV with `#`-prefixed `key=value` header lines.
    pub fn to_csv_string(&self) -> String {
        let join = |v: Vec<String>| v.join(";");
        let mut s = String::new();
        let _ = writeln!(s, "# scenario={}", self.scenario);
        let _ = writeln!(s, "# objective={}", self.objective);
        let _ = writeln!(s, "# parameters={}", join(self.parameters.iter().map(|p| p.to_string()).collect()));
        let _ = writeln!(s, "# seeds={}", join(self.seeds.iter().map(|p| p.to_string()).collect()));
        match &self.value {
            ReferenceValue::Scalar(v) => {
                let _ = writeln!(s, "value\n{v}");
            }
            ReferenceValue::Histogram(w) => {
                s.push_str("bin,weight\n");
                for (k, v) in w.iter().enumerate() {
                    let _ = writeln!(s, "{k},{v}");
                }
            }
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|reason| Error::Malformed { path: path.to_path_buf(), reason })
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut scenario = None;
        let mut objective = None;
        let mut parameters = None;
        let mut seeds = None;
        for line in text.lines().filter_map(|l| l.strip_prefix('#')) {
            let Some((k, v)) = line.trim().split_once('=') else { continue };
            let list = |v: &str| v.split(';').filter(|s| !s.is_empty()).map(str::trim).map(String::from).collect::<Vec<_>>();
            match k.trim() {
                "scenario" => scenario = Some(v.trim().to_string()),
                "objective" => objective = Some(v.trim().to_string()),
                "parameters" => {
                    parameters = Some(
                        list(v)
                            .iter()
                            .map(|p| p.parse::<f64>().map(T::lit).map_err(|e| format!("parameter {p}: {e}")))
                            .collect::<std::result::Result<Vec<_>, _>>()?,
                    )
                }
                "seeds" => {
                    seeds = Some(
                        list(v)
                            .iter()
                            .map(|p| p.parse::<u64>().map_err(|e| format!("seed {p}: {e}")))
                            .collect::<std::result::Result<Vec<_>, _>>()?,
                    )
                }
                _ => {}
            }
        }
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let headers: Vec<String> = rdr.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
        let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>().map_err(|e| e.to_string())?;
        let num = |s: &str| s.trim().parse::<f64>().map(T::lit).map_err(|e| format!("value {s}: {e}"));
        let value = match headers.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
            ["value"] => {
                if rows.len() != 1 {
                    return Err(format!("expected one value row, got {}", rows.len()));
                }
                ReferenceValue::Scalar(num(&rows[0][0])?)
            }
            ["bin", "weight"] => {
                if rows.len() != BINS {
                    return Err(format!("expected {BINS} bins, got {}", rows.len()));
                }
                let mut w = [<T as num_traits::Zero>::zero(); BINS];
                for (k, r) in rows.iter().enumerate() {
                    if r[0].trim() != k.to_string() {
                        return Err(format!("bin {} out of order", &r[0]));
                    }
                    w[k] = num(&r[1])?;
                }
                ReferenceValue::Histogram(w)
            }
            other => return Err(format!("unexpected header {other:?}")),
        };
        Ok(Reference {
            scenario: scenario.ok_or("missing scenario line")?,
            objective: objective.ok_or("missing objective line")?,
            parameters: parameters.ok_or("missing parameters line")?,
            seeds: seeds.ok_or("missing seeds line")?,
            value,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::exit_selection::ExitSelectionProgram;
    use crate::scenarios::histogram::wasserstein_1d;

    #[test]
    fn bottleneck_reference_round_trips() {
        let cfg = BottleneckConfig::<f64>::default();
        let seeds: Vec<u64> = (0..100).collect();
        let r = make_bottleneck_reference(&cfg, [0.6, 5.5, 5.5], &seeds).unwrap();
        let v = r.scalar().unwrap();
        assert!(v > 2.0 && v < 28.0, "{v}");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ref.csv");
        r.write(&path).unwrap();
        assert_eq!(Reference::<f64>::read(&path).unwrap(), r);
    }

    #[test]
    fn empty_seed_set_is_rejected() {
        let cfg = BottleneckConfig::<f64>::default();
        assert!(matches!(make_bottleneck_reference(&cfg, [1.0; 3], &[]), Err(Error::InsufficientData { .. })));
        let ecfg = ExitSelectionConfig::<f64>::default();
        assert!(make_exit_reference(&ecfg, &[1.0; BINS], &[]).is_err());
    }

    #[test]
    fn exit_reference_self_fits() {
        let cfg = ExitSelectionConfig::<f64> { agents: 10, warm_up: 20.0, ..Default::default() };
        let w: Vec<f64> = (0..BINS).map(|k| 10.0 - (k as f64 - 9.0).abs()).collect();
        let r = make_exit_reference(&cfg, &w, &[7]).unwrap();
        let h = r.histogram(&cfg).unwrap();
        assert!((h.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let prog = ExitSelectionProgram { config: cfg.clone(), reference: h.clone() };
        assert_eq!(crate::estimators::evaluate_plain(&prog, &w, 7).unwrap(), 0.0);
        let text = r.to_csv_string();
        let back = Reference::<f64>::parse(&text).unwrap();
        assert_eq!(wasserstein_1d(&back.histogram(&cfg).unwrap(), &h).unwrap(), 0.0);
        assert_eq!(back.seeds, vec![7]);
    }

    #[test]
    fn missing_and_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nope.csv");
        assert!(matches!(Reference::<f64>::read(&path), Err(Error::MissingFile(_))));
        std::fs::write(&path, "# scenario=x\nfoo,bar\n1,2\n").unwrap();
        assert!(matches!(Reference::<f64>::read(&path), Err(Error::Malformed { .. })));
    }
}
