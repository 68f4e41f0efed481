//! Budgeted search over program parameters: projected gradient descent on
//! any gradient estimator, local-best particle swarm optimization and a
//! generational genetic algorithm.
//!
//! Every method records a trace row per step. The crisp objective of the
//! incumbent is measured over a fixed seed set outside the search budget.

mod ga;
mod gd;
mod pso;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{evaluate_plain, Program};
use crate::scalar::Real;
use crate::seed::{mix_seed, tags};

pub use ga::{genetic_algorithm, GaConfig, Mutation};
pub use gd::{gradient_descent, GdConfig};
pub use pso::{latin_hypercube, pso, Neighborhood, PsoConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gd,
    Pso,
    Ga,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Pso => "pso",
            Method::Ga => "ga",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gd" => Some(Method::Gd),
            "pso" => Some(Method::Pso),
            "ga" => Some(Method::Ga),
            _ => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Box constraints; every incumbent is clamped into them.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Real> Bounds<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::LengthMismatch { expected: lo.len().max(1), got: hi.len() });
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::InvalidConfig("bounds must be finite with lo <= hi".into()));
        }
        Ok(Bounds { lo, hi })
    }

    pub fn uniform(dim: usize, lo: T, hi: T) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn clamp(&self, x: &mut [T]) {
        for ((v, l), h) in x.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.max(*l).min(*h);
        }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.lo).zip(&self.hi).all(|((v, l), h)| v >= l && v <= h)
    }
}

/// Function-evaluation and wall-time limits. A step starts only if its
/// evaluations fit and the wall budget is not yet spent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Budget {
    pub max_evaluations: usize,
    pub max_wall: Option<Duration>,
}

impl Budget {
    pub fn evaluations(max_evaluations: usize) -> Self {
        Budget { max_evaluations, max_wall: None }
    }

    fn allows(&self, used: usize, next: usize, start: Instant) -> bool {
        used + next <= self.max_evaluations && self.max_wall.is_none_or(|w| start.elapsed() < w)
    }
}

/// Mean plain output over a fixed seed set.
#[derive(Clone, Debug, PartialEq)]
pub struct CrispEvaluator {
    pub seeds: Vec<u64>,
}

impl CrispEvaluator {
    pub fn new(master_seed: u64, count: usize) -> Self {
        CrispEvaluator { seeds: (0..count as u64).map(|i| mix_seed(master_seed, &[tags::CRISP, i])).collect() }
    }

    pub fn from_seeds(seeds: Vec<u64>) -> Self {
        CrispEvaluator { seeds }
    }

    pub fn evaluate<T: Real, P: Program<T> + ?Sized>(&self, prog: &P, theta: &[T]) -> Result<T> {
        if self.seeds.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let values: Vec<T> = self.seeds.par_iter().map(|&s| evaluate_plain(prog, theta, s)).collect::<Result<_>>()?;
        Ok(values.iter().copied().sum::<T>() / T::from_usize_lossy(values.len()))
    }
}

/// One trace row.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow<T> {
    pub step: usize,
    pub evaluations: usize,
    pub wall_ms: f64,
    /// The method's own (noisy) objective for this step, if it has one.
    pub objective: Option<T>,
    /// Crisp objective of `incumbent`.
    pub crisp: T,
    /// Smallest crisp objective seen so far.
    pub best_crisp: T,
    pub incumbent: Vec<T>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunDiagnostics {
    pub skipped_steps: usize,
    pub failed_evaluations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerRun<T> {
    pub method: Method,
    pub trace: Vec<TraceRow<T>>,
    pub evaluations: usize,
    pub best_crisp: T,
    pub best_parameters: Vec<T>,
    pub diagnostics: RunDiagnostics,
}

impl<T: Real> OptimizerRun<T> {
    pub fn final_crisp(&self) -> T {
        self.best_crisp
    }
}

/// Builds the trace, caching crisp values of unchanged incumbents.
pub(crate) struct Recorder<'a, T, P: ?Sized> {
    prog: &'a P,
    crisp: &'a CrispEvaluator,
    start: Instant,
    rows: Vec<TraceRow<T>>,
    best: Option<(T, Vec<T>)>,
    last: Option<(Vec<T>, T)>,
}

impl<'a, T: Real, P: Program<T> + ?Sized> Recorder<'a, T, P> {
    pub(crate) fn new(prog: &'a P, crisp: &'a CrispEvaluator) -> Self {
        Recorder { prog, crisp, start: Instant::now(), rows: Vec::new(), best: None, last: None }
    }

    pub(crate) fn start(&self) -> Instant {
        self.start
    }

    pub(crate) fn record(&mut self, step: usize, evaluations: usize, incumbent: &[T], objective: Option<T>) -> Result<()> {
        let wall_ms = self.start.elapsed().as_secs_f64() * 1e3;
        let crisp = match &self.last {
            Some((p, v)) if p.as_slice() == incumbent => *v,
            _ => {
                let v = self.crisp.evaluate(self.prog, incumbent)?;
                self.last = Some((incumbent.to_vec(), v));
                v
            }
        };
        if self.best.as_ref().is_none_or(|(b, _)| crisp < *b) {
            self.best = Some((crisp, incumbent.to_vec()));
        }
        let best_crisp = self.best.as_ref().map(|b| b.0).unwrap_or(crisp);
        self.rows.push(TraceRow { step, evaluations, wall_ms, objective, crisp, best_crisp, incumbent: incumbent.to_vec() });
        Ok(())
    }

    pub(crate) fn finish(self, method: Method, evaluations: usize, diagnostics: RunDiagnostics) -> OptimizerRun<T> {
        let (best_crisp, best_parameters) = self.best.unwrap_or((T::nan(), Vec::new()));
        OptimizerRun { method, trace: self.rows, evaluations, best_crisp, best_parameters, diagnostics }
    }
}

/// Seed of evaluation `(step, individual, micro)` in a population method.
pub(crate) fn evaluation_seed(seed: u64, step: usize, individual: usize, micro: usize) -> u64 {
    mix_seed(seed, &[tags::OPTIMIZER, step as u64, individual as u64, micro as u64])
}

/// Mean over `micro` plain evaluations; `None` when any of them fails.
pub(crate) fn population_fitness<T: Real, P: Program<T> + ?Sized>(
    prog: &P,
    points: &[Vec<T>],
    micro: usize,
    seed: u64,
    step: usize,
) -> Vec<Option<T>> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut sum = T::zero();
            for m in 0..micro {
                match evaluate_plain(prog, x, evaluation_seed(seed, step, i, m)) {
                    Ok(v) => sum += v,
                    Err(e) => {
                        log::debug!("evaluation {i} at step {step} failed: {e}");
                        return None;
                    }
                }
            }
            Some(sum / T::from_usize_lossy(micro))
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod testing {
    use crate::ad::Dual;
    use crate::estimators::{program_fn, FnProgram};

    /// `sum_i x_i^2`, deterministic.
    pub fn sphere(dim: usize) -> FnProgram<impl Fn(&[Dual<f64>], u64, &mut crate::ad::TraceContext<f64>) -> crate::Result<Dual<f64>> + Sync> {
        program_fn(dim, |p: &[Dual<f64>], _seed, _ctx| Ok(p.iter().map(|x| *x * *x).sum()))
    }
}
