use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{population_fitness, Bounds, Budget, CrispEvaluator, Method, OptimizerRun, Recorder, RunDiagnostics};
use crate::error::{Error, Result};
use crate::estimators::Program;
use crate::scalar::Real;
use crate::seed::{mix_seed, rng_from, tags, SimRng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mutation<T> {
    /// Replace the gene with a uniform draw over its bounds.
    Replace,
    /// Add `N(0, sd)` and clamp.
    Additive { sd: T },
}

/// Generational GA with size-2 tournaments, single-point crossover and
/// per-gene mutation probability `1 / dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaConfig<T> {
    pub population: usize,
    pub elitism: bool,
    pub mutation: Mutation<T>,
    pub crossover_rate: T,
    /// Plain evaluations averaged per fitness value.
    pub microreplications: usize,
}

impl<T: Real> GaConfig<T> {
    pub fn new(population: usize, elitism: bool, mutation: Mutation<T>) -> Self {
        GaConfig { population, elitism, mutation, crossover_rate: T::lit(0.8), microreplications: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidConfig(format!("GA needs a population of at least 2, got {}", self.population)));
        }
        if self.microreplications == 0 {
            return Err(Error::InvalidConfig("microreplications must be at least 1".into()));
        }
        if !(self.crossover_rate >= T::zero() && self.crossover_rate <= T::one()) {
            return Err(Error::InvalidConfig("crossover rate must lie in [0, 1]".into()));
        }
        if let Mutation::Additive { sd } = self.mutation {
            if !(sd >= T::zero()) || !sd.is_finite() {
                return Err(Error::InvalidConfig("mutation sd must be finite and nonnegative".into()));
            }
        }
        Ok(())
    }

    pub fn evaluations_per_step(&self) -> usize {
        self.population * self.microreplications
    }
}

fn rank<T: Real>(f: Option<T>) -> T {
    f.unwrap_or(T::infinity())
}

fn tournament<T: Real>(fitness: &[Option<T>], rng: &mut SimRng) -> usize {
    let a = rng.random_range(0..fitness.len());
    let b = rng.random_range(0..fitness.len());
    if rank(fitness[b]) < rank(fitness[a]) {
        b
    } else {
        a
    }
}

fn mutate<T: Real>(x: &mut [T], cfg: &GaConfig<T>, bounds: &Bounds<T>, rng: &mut SimRng) {
    let p = 1.0 / x.len() as f64;
    for (d, gene) in x.iter_mut().enumerate() {
        if rng.random::<f64>() >= p {
            continue;
        }
        *gene = match cfg.mutation {
            Mutation::Replace => bounds.lo[d] + (bounds.hi[d] - bounds.lo[d]) * T::lit(rng.random::<f64>()),
            Mutation::Additive { sd } => {
                let z: f64 = Normal::new(0.0, 1.0).map(|n| n.sample(rng)).unwrap_or(0.0);
                *gene + sd * T::lit(z)
            }
        };
    }
    bounds.clamp(x);
}

/// Minimizes the plain objective. The initial population is always
/// evaluated; later generations run while they fit the budget.
pub fn genetic_algorithm<T: Real, P: Program<T> + ?Sized>(
    prog: &P,
    cfg: &GaConfig<T>,
    bounds: &Bounds<T>,
    budget: &Budget,
    crisp: &CrispEvaluator,
    seed: u64,
) -> Result<OptimizerRun<T>> {
    cfg.validate()?;
    if bounds.dim() != prog.dim() {
        return Err(Error::LengthMismatch { expected: prog.dim(), got: bounds.dim() });
    }
    let n = cfg.population;
    let dim = bounds.dim();
    let mut rng = rng_from(mix_seed(seed, &[tags::OPTIMIZER, tags::INIT]));
    let mut pop: Vec<Vec<T>> = (0..n)
        .map(|_| (0..dim).map(|d| bounds.lo[d] + (bounds.hi[d] - bounds.lo[d]) * T::lit(rng.random::<f64>())).collect())
        .collect();
    let mut rec = Recorder::new(prog, crisp);
    let mut diagnostics = RunDiagnostics::default();
    let per_step = cfg.evaluations_per_step();

    let mut fitness = population_fitness(prog, &pop, cfg.microreplications, seed, 0);
    let mut used = per_step;
    diagnostics.failed_evaluations += fitness.iter().filter(|f| f.is_none()).count();
    let best_of = |f: &[Option<T>]| (0..f.len()).fold(0, |b, i| if rank(f[i]) < rank(f[b]) { i } else { b });
    let b = best_of(&fitness);
    rec.record(0, used, &pop[b], fitness[b])?;

    let mut generation = 0;
    while budget.allows(used, per_step, rec.start()) {
        generation += 1;
        let mut next: Vec<Vec<T>> = Vec::with_capacity(n);
        if cfg.elitism {
            next.push(pop[best_of(&fitness)].clone());
        }
        while next.len() < n {
            let mut a = pop[tournament(&fitness, &mut rng)].clone();
            let mut b = pop[tournament(&fitness, &mut rng)].clone();
            if dim > 1 && rng.random::<f64>() < cfg.crossover_rate.to_f64_lossy() {
                let cut = rng.random_range(1..dim);
                for d in cut..dim {
                    std::mem::swap(&mut a[d], &mut b[d]);
                }
            }
            mutate(&mut a, cfg, bounds, &mut rng);
            mutate(&mut b, cfg, bounds, &mut rng);
            next.push(a);
            if next.len() < n {
                next.push(b);
            }
        }
        pop = next;
        fitness = population_fitness(prog, &pop, cfg.microreplications, seed, generation);
        used += per_step;
        diagnostics.failed_evaluations += fitness.iter().filter(|f| f.is_none()).count();
        let b = best_of(&fitness);
        rec.record(generation, used, &pop[b], fitness[b])?;
    }
    Ok(rec.finish(Method::Ga, used, diagnostics))
}
