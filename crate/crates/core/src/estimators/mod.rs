//! Gradient estimators for `E[P(theta)]` of an instrumented stochastic program.
//!
//! * IPA: mean of pathwise (forward-mode) derivatives.
//! * DGO: pathwise mean plus one jump term per branch key,
//!   `(P(w+) - P(w-)) * reach * density_C(0) * dC/dtheta`.
//! * Hybrid: DGO restricted to tracked branch sites.
//! * PGO: Gaussian randomized finite differences with common random numbers.
//!
//! One function evaluation is one program execution. IPA/DGO/Hybrid run
//! `samples * microreplications` executions; PGO runs twice that.

mod kde;
pub mod synthetic;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ad::{
    constant_parameters, seed_parameters, BranchKey, BranchRegistry, Dual, Observation, TraceContext, TraceMode,
    DEFAULT_REGISTRY_CAP,
};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed::{mix_seed, rng_from, tags};

pub use kde::{kde_at_zero, sample_std, Bandwidth, KdeEstimate};

/// A stochastic program `P(omega; theta)`.
///
/// Implementations must return the same output value for the same
/// `(params values, seed)` regardless of the trace mode.
pub trait Program<T: Real>: Sync {
    fn dim(&self) -> usize;
    fn run(&self, params: &[Dual<T>], seed: u64, ctx: &mut TraceContext<T>) -> Result<Dual<T>>;
}

impl<T: Real, P: Program<T> + ?Sized> Program<T> for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn run(&self, params: &[Dual<T>], seed: u64, ctx: &mut TraceContext<T>) -> Result<Dual<T>> {
        (**self).run(params, seed, ctx)
    }
}

/// Adapts a closure into a [`Program`].
pub struct FnProgram<F> {
    dim: usize,
    f: F,
}

pub fn program_fn<T, F>(dim: usize, f: F) -> FnProgram<F>
where
    T: Real,
    F: Fn(&[Dual<T>], u64, &mut TraceContext<T>) -> Result<Dual<T>> + Sync,
{
    FnProgram { dim, f }
}

impl<T, F> Program<T> for FnProgram<F>
where
    T: Real,
    F: Fn(&[Dual<T>], u64, &mut TraceContext<T>) -> Result<Dual<T>> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn run(&self, params: &[Dual<T>], seed: u64, ctx: &mut TraceContext<T>) -> Result<Dual<T>> {
        (self.f)(params, seed, ctx)
    }
}

/// Runs the program once without derivatives.
pub fn evaluate_plain<T: Real, P: Program<T> + ?Sized>(prog: &P, theta: &[T], seed: u64) -> Result<T> {
    let mut ctx = TraceContext::plain();
    let out = prog.run(&constant_parameters(theta), seed, &mut ctx)?.value();
    if !out.is_finite() {
        return Err(Error::NonFiniteOutput { seed });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Ipa,
    Dgo,
    Hybrid,
    Pgo,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [EstimatorKind::Ipa, EstimatorKind::Dgo, EstimatorKind::Hybrid, EstimatorKind::Pgo];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Ipa => "ipa",
            EstimatorKind::Dgo => "dgo",
            EstimatorKind::Hybrid => "hybrid",
            EstimatorKind::Pgo => "pgo",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }

    fn trace_mode(self) -> TraceMode {
        match self {
            EstimatorKind::Ipa => TraceMode::Ipa,
            EstimatorKind::Dgo => TraceMode::Dgo,
            EstimatorKind::Hybrid => TraceMode::Hybrid,
            EstimatorKind::Pgo => TraceMode::Plain,
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig<T> {
    pub kind: EstimatorKind,
    /// Number of perturbation samples.
    pub samples: usize,
    /// Standard deviation of the Gaussian parameter perturbation.
    pub sigma: T,
    /// Program executions per sample (averaged for PGO, pooled otherwise).
    pub microreplications: usize,
    pub bandwidth: Bandwidth<T>,
    pub seed: u64,
    pub registry_cap: usize,
}

impl<T: Real> EstimatorConfig<T> {
    pub fn new(kind: EstimatorKind, samples: usize, sigma: T, seed: u64) -> Self {
        EstimatorConfig {
            kind,
            samples,
            sigma,
            microreplications: 1,
            bandwidth: Bandwidth::Silverman,
            seed,
            registry_cap: DEFAULT_REGISTRY_CAP,
        }
    }

    pub fn with_microreplications(mut self, m: usize) -> Self {
        self.microreplications = m;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidConfig("estimator needs at least one sample".into()));
        }
        if self.microreplications == 0 {
            return Err(Error::InvalidConfig("microreplications must be at least 1".into()));
        }
        if !(self.sigma >= T::zero()) || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("smoothing sigma must be finite and >= 0, got {}", self.sigma)));
        }
        if self.kind == EstimatorKind::Pgo && self.sigma == T::zero() {
            return Err(Error::InvalidConfig("PGO requires sigma > 0".into()));
        }
        Ok(())
    }

    /// Function evaluations one estimate consumes.
    pub fn evaluations(&self) -> usize {
        let base = self.samples * self.microreplications;
        if self.kind == EstimatorKind::Pgo {
            2 * base
        } else {
            base
        }
    }
}

/// One branch key's jump term.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchContribution<T> {
    pub key: BranchKey,
    /// `P(w+) - P(w-)`
    pub jump: T,
    pub reach_fraction: T,
    pub density_at_zero: T,
    pub condition_gradient: Vec<T>,
    pub contribution: Vec<T>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EstimateDiagnostics {
    pub registry_keys: usize,
    pub registry_truncated: bool,
    pub dropped_observations: usize,
    /// Keys skipped because every realization had the same sign or fewer
    /// than two samples reached them.
    pub single_sided_keys: usize,
    pub degenerate_densities: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate<T> {
    pub kind: EstimatorKind,
    pub gradient: Vec<T>,
    /// Mean pathwise tangent (zero for PGO).
    pub pathwise: Vec<T>,
    pub mean_output: T,
    pub contributions: Vec<BranchContribution<T>>,
    pub samples: usize,
    pub evaluations: usize,
    pub diagnostics: EstimateDiagnostics,
}

struct Execution<T> {
    output: T,
    tangent: Vec<T>,
    observations: Vec<Observation<T>>,
}

fn omega_seed(seed: u64, sample: usize, micro: usize) -> u64 {
    mix_seed(seed, &[tags::OMEGA, sample as u64, micro as u64])
}

fn perturbation<T: Real>(seed: u64, sample: usize, n: usize) -> Vec<T> {
    let mut rng = rng_from(mix_seed(seed, &[tags::PERTURB, sample as u64]));
    (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            T::lit(z)
        })
        .collect()
}

fn check_theta<T: Real, P: Program<T> + ?Sized>(prog: &P, theta: &[T]) -> Result<()> {
    if theta.len() != prog.dim() {
        return Err(Error::LengthMismatch { expected: prog.dim(), got: theta.len() });
    }
    Ok(())
}

fn perturbed<T: Real>(theta: &[T], sigma: T, seed: u64, sample: usize) -> Vec<T> {
    if sigma == T::zero() {
        return theta.to_vec();
    }
    let u = perturbation::<T>(seed, sample, theta.len());
    theta.iter().zip(&u).map(|(&t, &z)| t + sigma * z).collect()
}

/// Executes all `samples * microreplications` AD runs in parallel and
/// returns them in execution order.
fn run_ad<T: Real, P: Program<T> + ?Sized>(
    prog: &P,
    theta: &[T],
    cfg: &EstimatorConfig<T>,
    mode: TraceMode,
) -> Result<Vec<Execution<T>>> {
    let n = theta.len();
    let m = cfg.microreplications;
    let points: Vec<Vec<T>> = (0..cfg.samples).map(|s| perturbed(theta, cfg.sigma, cfg.seed, s)).collect();
    (0..cfg.samples * m)
        .into_par_iter()
        .map(|e| {
            let (s, r) = (e / m, e % m);
            let seed = omega_seed(cfg.seed, s, r);
            let params = seed_parameters(&points[s])?;
            let mut ctx = TraceContext::new(mode, e, n);
            let out = prog.run(&params, seed, &mut ctx)?;
            if !out.value().is_finite() || out.tangent().iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFiniteOutput { seed });
            }
            Ok(Execution { output: out.value(), tangent: out.gradient(n), observations: ctx.into_observations() })
        })
        .collect()
}

fn mean_of<T: Real>(execs: &[Execution<T>], n: usize) -> (T, Vec<T>) {
    let count = T::from_usize_lossy(execs.len());
    let mut grad = vec![T::zero(); n];
    let mut out = T::zero();
    for ex in execs {
        out += ex.output;
        for (g, t) in grad.iter_mut().zip(&ex.tangent) {
            *g += *t;
        }
    }
    grad.iter_mut().for_each(|g| *g /= count);
    (out / count, grad)
}

/// Pathwise-derivative estimate.
pub fn estimate_ipa<T: Real, P: Program<T> + ?Sized>(
    prog: &P,
    theta: &[T],
    cfg: &EstimatorConfig<T>,
) -> Result<GradientEstimate<T>> {
    cfg.validate()?;
    check_theta(prog, theta)?;
    if cfg.kind != EstimatorKind::Ipa {
        return Err(Error::InvalidConfig(format!("estimate_ipa called with {} config", cfg.kind)));
    }
    let execs = run_ad(prog, theta, cfg, TraceMode::Ipa)?;
    let (mean_output, pathwise) = mean_of(&execs, theta.len());
    Ok(GradientEstimate {
        kind: EstimatorKind::Ipa,
        gradient: pathwise.clone(),
        pathwise,
        mean_output,
        contributions: Vec::new(),
        samples: cfg.samples,
        evaluations: cfg.evaluations(),
        diagnostics: EstimateDiagnostics::default(),
    })
}

/// Pathwise mean plus per-branch jump terms (DGO, or Hybrid for tracked
/// sites only).
pub fn estimate_dgo<T: Real, P: Program<T> + ?Sized>(
    prog: &P,
    theta: &[T],
    cfg: &EstimatorConfig<T>,
) -> Result<GradientEstimate<T>> {
    cfg.validate()?;
    check_theta(prog, theta)?;
    if !matches!(cfg.kind, EstimatorKind::Dgo | EstimatorKind::Hybrid) {
        return Err(Error::InvalidConfig(format!("estimate_dgo called with {} config", cfg.kind)));
    }
    let n = theta.len();
    let mut execs = run_ad(prog, theta, cfg, cfg.kind.trace_mode())?;
    let (mean_output, pathwise) = mean_of(&execs, n);

    let mut registry = BranchRegistry::new(cfg.registry_cap);
    let outputs: Vec<T> = execs.iter().map(|e| e.output).collect();
    for ex in execs.iter_mut() {
        registry.merge_sample(std::mem::take(&mut ex.observations));
    }

    let mut diagnostics = EstimateDiagnostics {
        registry_keys: registry.len(),
        registry_truncated: registry.truncated(),
        dropped_observations: registry.dropped_observations(),
        ..Default::default()
    };
    let mut contributions = Vec::new();
    let total = registry.total_samples();
    for rec in registry.records() {
        // closest realization to zero on either side: smallest C >= 0, largest C < 0
        let plus = rec
            .observations
            .iter()
            .filter(|o| !o.taken)
            .min_by(|a, b| a.condition.partial_cmp(&b.condition).unwrap().then(a.sample.cmp(&b.sample)));
        let minus = rec
            .observations
            .iter()
            .filter(|o| o.taken)
            .max_by(|a, b| a.condition.partial_cmp(&b.condition).unwrap().then(b.sample.cmp(&a.sample)));
        let (Some(plus), Some(minus)) = (plus, minus) else {
            diagnostics.single_sided_keys += 1;
            continue;
        };
        let conditions: Vec<T> = rec.observations.iter().map(|o| o.condition).collect();
        let kde = kde_at_zero(&conditions, cfg.bandwidth)?;
        if kde.degenerate {
            diagnostics.degenerate_densities += 1;
        }
        let jump = outputs[plus.sample] - outputs[minus.sample];
        let reach_fraction = rec.reach_fraction(total);
        let half = T::lit(0.5);
        let condition_gradient: Vec<T> = (0..n)
            .map(|i| half * (plus.tangent.get(i).copied().unwrap_or(T::zero()) + minus.tangent.get(i).copied().unwrap_or(T::zero())))
            .collect();
        let scale = jump * reach_fraction * kde.density;
        let contribution = condition_gradient.iter().map(|&c| scale * c).collect();
        contributions.push(BranchContribution {
            key: rec.key,
            jump,
            reach_fraction,
            density_at_zero: kde.density,
            condition_gradient,
            contribution,
        });
    }

    let gradient = assemble_gradient(&pathwise, &contributions);
    Ok(GradientEstimate {
        kind: cfg.kind,
        gradient,
        pathwise,
        mean_output,
        contributions,
        samples: cfg.samples,
        evaluations: cfg.evaluations(),
        diagnostics,
    })
}

/// Pathwise mean plus the branch contributions, summed in list order.
pub fn assemble_gradient<T: Real>(pathwise: &[T], contributions: &[BranchContribution<T>]) -> Vec<T> {
    let mut g = pathwise.to_vec();
    for c in contributions {
        for (gi, ci) in g.iter_mut().zip(&c.contribution) {
            *gi += *ci;
        }
    }
    g
}

/// Randomized finite differences; the perturbed and unperturbed runs of each
/// pair share their random seeds.
pub fn estimate_pgo<T: Real, P: Program<T> + ?Sized>(
    prog: &P,
    theta: &[T],
    cfg: &EstimatorConfig<T>,
) -> Result<GradientEstimate<T>> {
    cfg.validate()?;
    check_theta(prog, theta)?;
    if cfg.kind != EstimatorKind::Pgo {
        return Err(Error::InvalidConfig(format!("estimate_pgo called with {} config", cfg.kind)));
    }
    let n = theta.len();
    let m = cfg.microreplications;
    let pairs: Vec<(T, T)> = (0..cfg.samples * m)
        .into_par_iter()
        .map(|e| {
            let (s, r) = (e / m, e % m);
            let seed = omega_seed(cfg.seed, s, r);
            let shifted = perturbed(theta, cfg.sigma, cfg.seed, s);
            Ok((evaluate_plain(prog, &shifted, seed)?, evaluate_plain(prog, theta, seed)?))
        })
        .collect::<Result<_>>()?;

    let mut gradient = vec![T::zero(); n];
    let mut base_sum = T::zero();
    let mf = T::from_usize_lossy(m);
    for s in 0..cfg.samples {
        let u = perturbation::<T>(cfg.seed, s, n);
        let mut diff = T::zero();
        for &(shifted, base) in &pairs[s * m..(s + 1) * m] {
            diff += shifted - base;
            base_sum += base;
        }
        let w = diff / mf / cfg.sigma;
        for (g, z) in gradient.iter_mut().zip(&u) {
            *g += w * *z;
        }
    }
    let sf = T::from_usize_lossy(cfg.samples);
    gradient.iter_mut().for_each(|g| *g /= sf);
    Ok(GradientEstimate {
        kind: EstimatorKind::Pgo,
        gradient,
        pathwise: vec![T::zero(); n],
        mean_output: base_sum / T::from_usize_lossy(pairs.len()),
        contributions: Vec::new(),
        samples: cfg.samples,
        evaluations: cfg.evaluations(),
        diagnostics: EstimateDiagnostics::default(),
    })
}

/// Dispatches on `cfg.kind`.
pub fn estimate<T: Real, P: Program<T> + ?Sized>(
    prog: &P,
    theta: &[T],
    cfg: &EstimatorConfig<T>,
) -> Result<GradientEstimate<T>> {
    match cfg.kind {
        EstimatorKind::Ipa => estimate_ipa(prog, theta, cfg),
        EstimatorKind::Dgo | EstimatorKind::Hybrid => estimate_dgo(prog, theta, cfg),
        EstimatorKind::Pgo => estimate_pgo(prog, theta, cfg),
    }
}

/// Large-sample PGO estimate used as ground truth in fidelity studies.
pub fn reference_gradient<T: Real, P: Program<T> + ?Sized>(
    prog: &P,
    theta: &[T],
    evaluations: usize,
    sigma: T,
    seed: u64,
) -> Result<Vec<T>> {
    let cfg = EstimatorConfig::new(EstimatorKind::Pgo, evaluations, sigma, seed);
    Ok(estimate_pgo(prog, theta, &cfg)?.gradient)
}

/// Mean absolute error between two equally long sweeps of one coordinate.
pub fn gradient_mae<T: Real>(estimates: &[T], reference: &[T]) -> Result<T> {
    if estimates.len() != reference.len() {
        return Err(Error::LengthMismatch { expected: reference.len(), got: estimates.len() });
    }
    if estimates.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let sum = estimates.iter().zip(reference).map(|(&e, &r)| (e - r).abs()).sum::<T>();
    Ok(sum / T::from_usize_lossy(estimates.len()))
}
