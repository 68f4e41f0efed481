use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::synthetic::{Heaviside, Quadratic};
use crate::estimators::{EstimatorKind, Program};
use crate::optimizers::{Bounds, Method};
use crate::scenarios::{BottleneckConfig, BottleneckProgram, ExitSelectionConfig, ExitSelectionProgram, Reference, BINS, MIN_BIN_WEIGHT};

/// The documented defaults. `HarnessConfig::default()` parses to the same
/// values; a unit test keeps the two in sync.
pub const DEFAULTS_TOML: &str = include_str!("../../config/defaults.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Bottleneck,
    ExitSelection,
    /// `1[theta + omega < 0]`, omega ~ N(0, noise_sd^2).
    Heaviside,
    /// `theta^2`.
    Quadratic,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] =
        [ScenarioKind::Bottleneck, ScenarioKind::ExitSelection, ScenarioKind::Heaviside, ScenarioKind::Quadratic];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Bottleneck => "bottleneck",
            ScenarioKind::ExitSelection => "exit_selection",
            ScenarioKind::Heaviside => "heaviside",
            ScenarioKind::Quadratic => "quadratic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.replace('-', "_");
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(&s))
    }

    /// Whether objectives compare against a reference file.
    pub fn needs_reference(self) -> bool {
        matches!(self, ScenarioKind::Bottleneck | ScenarioKind::ExitSelection)
    }

    pub fn dim(self) -> usize {
        match self {
            ScenarioKind::Bottleneck => 3,
            ScenarioKind::ExitSelection => BINS,
            ScenarioKind::Heaviside | ScenarioKind::Quadratic => 1,
        }
    }

    /// Ground truth used by `make-reference` and as the fixed point of
    /// fidelity sweeps when the config gives none.
    pub fn default_parameters(self) -> Vec<f64> {
        match self {
            ScenarioKind::Bottleneck => vec![1.0, 5.0, 5.0],
            ScenarioKind::ExitSelection => (0..BINS).map(|k| 10.0 - (k as f64 - 9.0).abs()).collect(),
            ScenarioKind::Heaviside | ScenarioKind::Quadratic => vec![0.0],
        }
    }

    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            ScenarioKind::Bottleneck => (0.0, 10.0),
            ScenarioKind::ExitSelection => (MIN_BIN_WEIGHT, 10.0),
            ScenarioKind::Heaviside => (-3.0, 3.0),
            ScenarioKind::Quadratic => (-10.0, 10.0),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub scenario: ScenarioKind,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 means one per core.
    pub workers: usize,
    /// Reference CSV. Required by sweeps on the simulation scenarios.
    pub reference: Option<PathBuf>,
    /// Per-coordinate search bounds; scenario defaults when absent.
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            scenario: ScenarioKind::Bottleneck,
            master_seed: 1,
            output_dir: PathBuf::from("results"),
            workers: 1,
            reference: None,
            lower: None,
            upper: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdGrid {
    pub learning_rates: Vec<f64>,
    pub estimators: Vec<EstimatorKind>,
    pub samples: Vec<usize>,
    pub sigmas: Vec<f64>,
}

impl Default for GdGrid {
    fn default() -> Self {
        GdGrid {
            learning_rates: vec![0.01, 0.1, 0.5, 1.0],
            estimators: vec![EstimatorKind::Dgo, EstimatorKind::Pgo],
            samples: vec![1, 10, 50],
            sigmas: vec![0.0, 0.01, 0.1, 0.5, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoGrid {
    pub particles: Vec<usize>,
    /// Latin-hypercube points over `(c1, c2, w)`.
    pub lhc_points: usize,
    pub c1_range: [f64; 2],
    pub c2_range: [f64; 2],
    pub w_range: [f64; 2],
    /// Ring sizes; 0 means the whole swarm.
    pub neighborhoods: Vec<usize>,
}

impl Default for PsoGrid {
    fn default() -> Self {
        PsoGrid {
            particles: vec![10, 50],
            lhc_points: 10,
            c1_range: [0.5, 2.0],
            c2_range: [0.5, 2.0],
            w_range: [0.4, 0.9],
            neighborhoods: vec![3, 6, 0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MutationKind {
    Replace,
    Additive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaGrid {
    pub population: Vec<usize>,
    pub elitism: Vec<bool>,
    pub mutations: Vec<MutationKind>,
    pub additive_sd: f64,
    pub crossover_rate: f64,
}

impl Default for GaGrid {
    fn default() -> Self {
        GaGrid {
            population: vec![10, 50],
            elitism: vec![true, false],
            mutations: vec![MutationKind::Replace, MutationKind::Additive],
            additive_sd: 0.1,
            crossover_rate: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub methods: Vec<Method>,
    pub macroreplications: usize,
    /// Program executions averaged per objective evaluation.
    pub microreplications: usize,
    /// Size of the fixed seed set for crisp incumbent evaluation.
    pub crisp_seeds: usize,
    pub max_evaluations: usize,
    pub max_wall_seconds: Option<f64>,
    pub gd: GdGrid,
    pub pso: PsoGrid,
    pub ga: GaGrid,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            methods: vec![Method::Gd, Method::Pso, Method::Ga],
            macroreplications: 20,
            microreplications: 10,
            crisp_seeds: 100,
            max_evaluations: 5000,
            max_wall_seconds: None,
            gd: GdGrid::default(),
            pso: PsoGrid::default(),
            ga: GaGrid::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceMode {
    /// Closed form where the scenario has one, PGO otherwise.
    Auto,
    Pgo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidelitySection {
    /// Index of the swept parameter.
    pub coordinate: usize,
    pub points: usize,
    pub lo: f64,
    pub hi: f64,
    /// Values of the other coordinates; scenario ground truth when absent.
    pub fixed: Option<Vec<f64>>,
    /// Smoothing for IPA, DGO and Hybrid.
    pub sigma: f64,
    /// Smoothing for PGO; `sigma` when absent.
    pub pgo_sigma: Option<f64>,
    pub samples: Vec<usize>,
    pub reference: ReferenceMode,
    pub reference_evaluations: usize,
    /// Smoothing of the reference gradient; `sigma` (or `pgo_sigma` for a
    /// PGO reference at `sigma = 0`) when absent.
    pub reference_sigma: Option<f64>,
}

impl Default for FidelitySection {
    fn default() -> Self {
        FidelitySection {
            coordinate: 0,
            points: 300,
            lo: 0.0,
            hi: 10.0,
            fixed: None,
            sigma: 0.001,
            pgo_sigma: None,
            samples: vec![10, 100, 1000],
            reference: ReferenceMode::Auto,
            reference_evaluations: 100_000,
            reference_sigma: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSection {
    /// Ground-truth parameters; scenario default when absent.
    pub parameters: Option<Vec<f64>>,
    pub seeds: usize,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        ReferenceSection { parameters: None, seeds: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeavisideSection {
    pub noise_sd: f64,
}

impl Default for HeavisideSection {
    fn default() -> Self {
        HeavisideSection { noise_sd: 1.0 }
    }
}

/// Everything a sweep, fidelity study or reference run needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub run: RunSection,
    pub sweep: SweepSection,
    pub fidelity: FidelitySection,
    pub reference: ReferenceSection,
    pub heaviside: HeavisideSection,
    pub bottleneck: BottleneckConfig<f64>,
    pub exit_selection: ExitSelectionConfig<f64>,
}

fn nonempty<T>(v: &[T], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidConfig(format!("{what} must not be empty")));
    }
    Ok(())
}

impl HarnessConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: HarnessConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| e.context(format!("loading {}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sweep;
        if s.macroreplications == 0 || s.microreplications == 0 || s.crisp_seeds == 0 {
            return Err(Error::InvalidConfig("replication and crisp seed counts must be at least 1".into()));
        }
        if s.max_wall_seconds.is_some_and(|w| !(w > 0.0)) {
            return Err(Error::InvalidConfig("max_wall_seconds must be positive".into()));
        }
        nonempty(&s.methods, "sweep.methods")?;
        nonempty(&s.gd.learning_rates, "sweep.gd.learning_rates")?;
        nonempty(&s.gd.estimators, "sweep.gd.estimators")?;
        nonempty(&s.gd.samples, "sweep.gd.samples")?;
        nonempty(&s.gd.sigmas, "sweep.gd.sigmas")?;
        nonempty(&s.pso.particles, "sweep.pso.particles")?;
        nonempty(&s.pso.neighborhoods, "sweep.pso.neighborhoods")?;
        nonempty(&s.ga.population, "sweep.ga.population")?;
        nonempty(&s.ga.elitism, "sweep.ga.elitism")?;
        nonempty(&s.ga.mutations, "sweep.ga.mutations")?;
        if s.pso.lhc_points == 0 {
            return Err(Error::InvalidConfig("sweep.pso.lhc_points must be at least 1".into()));
        }
        let f = &self.fidelity;
        if f.points < 2 {
            return Err(Error::InvalidConfig(format!("fidelity needs at least 2 sweep points, got {}", f.points)));
        }
        if !(f.lo < f.hi) {
            return Err(Error::InvalidConfig("fidelity range needs lo < hi".into()));
        }
        if f.coordinate >= self.run.scenario.dim() {
            return Err(Error::InvalidConfig(format!(
                "fidelity coordinate {} out of range for {} ({} parameters)",
                f.coordinate,
                self.run.scenario,
                self.run.scenario.dim()
            )));
        }
        nonempty(&f.samples, "fidelity.samples")?;
        if self.reference.seeds == 0 {
            return Err(Error::InvalidConfig("reference.seeds must be at least 1".into()));
        }
        self.bounds()?;
        self.bottleneck.validate()?;
        self.exit_selection.validate()?;
        Ok(())
    }

    pub fn bounds(&self) -> Result<Bounds<f64>> {
        let dim = self.run.scenario.dim();
        let (lo, hi) = self.run.scenario.default_bounds();
        let lower = self.run.lower.clone().unwrap_or_else(|| vec![lo; dim]);
        let upper = self.run.upper.clone().unwrap_or_else(|| vec![hi; dim]);
        if lower.len() != dim || upper.len() != dim {
            return Err(Error::LengthMismatch { expected: dim, got: lower.len().min(upper.len()) });
        }
        Bounds::new(lower, upper)
    }

    /// Fixed parameter vector for fidelity sweeps.
    pub fn fidelity_base(&self) -> Result<Vec<f64>> {
        let base = self.fidelity.fixed.clone().unwrap_or_else(|| self.run.scenario.default_parameters());
        if base.len() != self.run.scenario.dim() {
            return Err(Error::LengthMismatch { expected: self.run.scenario.dim(), got: base.len() });
        }
        Ok(base)
    }

    pub fn ground_truth(&self) -> Result<Vec<f64>> {
        let p = self.reference.parameters.clone().unwrap_or_else(|| self.run.scenario.default_parameters());
        if p.len() != self.run.scenario.dim() {
            return Err(Error::LengthMismatch { expected: self.run.scenario.dim(), got: p.len() });
        }
        Ok(p)
    }

    /// Reads the configured reference file, if any.
    pub fn load_reference(&self) -> Result<Option<Reference<f64>>> {
        let Some(path) = &self.run.reference else { return Ok(None) };
        let r = Reference::read(path)?;
        if r.scenario != self.run.scenario.name() {
            return Err(Error::InvalidConfig(format!(
                "reference {} is for scenario {}, not {}",
                path.display(),
                r.scenario,
                self.run.scenario
            )));
        }
        Ok(Some(r))
    }

    /// Builds the objective. Simulation scenarios take their target from
    /// `reference`; the bottleneck falls back to its configured scalar.
    pub fn program(&self, reference: Option<&Reference<f64>>) -> Result<Box<dyn Program<f64>>> {
        Ok(match self.run.scenario {
            ScenarioKind::Bottleneck => {
                let mut config = self.bottleneck.clone();
                if let Some(r) = reference {
                    if r.objective != config.objective.name() {
                        return Err(Error::InvalidConfig(format!(
                            "reference objective {} does not match configured objective {}",
                            r.objective,
                            config.objective.name()
                        )));
                    }
                    config.reference = r.scalar()?;
                }
                Box::new(BottleneckProgram { config })
            }
            ScenarioKind::ExitSelection => {
                let r = reference.ok_or_else(|| {
                    Error::InvalidConfig("exit_selection needs a reference histogram (run.reference)".into())
                })?;
                Box::new(ExitSelectionProgram { config: self.exit_selection.clone(), reference: r.histogram(&self.exit_selection)? })
            }
            ScenarioKind::Heaviside => Box::new(Heaviside { noise_sd: self.heaviside.noise_sd }),
            ScenarioKind::Quadratic => Box::new(Quadratic),
        })
    }

    /// Closed-form gradient of the smoothed objective along `coordinate`.
    pub fn analytic_gradient(&self, theta: &[f64], sigma: f64) -> Option<f64> {
        match self.run.scenario {
            ScenarioKind::Heaviside => Some(Heaviside { noise_sd: self.heaviside.noise_sd }.smoothed_gradient(theta[0], sigma)),
            ScenarioKind::Quadratic => Some(2.0 * theta[0]),
            _ => None,
        }
    }
}
