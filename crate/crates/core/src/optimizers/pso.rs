use rand::seq::SliceRandom;
use rand::Rng;

use super::{population_fitness, Bounds, Budget, CrispEvaluator, Method, OptimizerRun, Recorder, RunDiagnostics};
use crate::error::{Error, Result};
use crate::estimators::Program;
use crate::scalar::Real;
use crate::seed::{mix_seed, rng_from, tags};

/// Ring neighborhood size for the local best.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighborhood {
    Ring(usize),
    All,
}

impl Neighborhood {
    /// Offsets `-floor((k-1)/2) ..= ceil((k-1)/2)` around each particle.
    fn members(self, i: usize, n: usize) -> Vec<usize> {
        match self {
            Neighborhood::All => (0..n).collect(),
            Neighborhood::Ring(k) => {
                let k = k.clamp(1, n);
                let back = (k - 1) / 2;
                (0..k).map(|o| (i + n - back + o) % n).collect()
            }
        }
    }
}

/// Inertia-weight local-best PSO.
#[derive(Clone, Debug, PartialEq)]
pub struct PsoConfig<T> {
    pub particles: usize,
    /// Cognitive weight.
    pub c1: T,
    /// Social weight.
    pub c2: T,
    /// Inertia.
    pub w: T,
    pub neighborhood: Neighborhood,
    /// Plain evaluations averaged per fitness value.
    pub microreplications: usize,
}

impl<T: Real> PsoConfig<T> {
    pub fn new(particles: usize, (c1, c2, w): (T, T, T), neighborhood: Neighborhood) -> Self {
        PsoConfig { particles, c1, c2, w, neighborhood, microreplications: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::InvalidConfig(format!("PSO needs at least 2 particles, got {}", self.particles)));
        }
        if self.microreplications == 0 {
            return Err(Error::InvalidConfig("microreplications must be at least 1".into()));
        }
        if let Neighborhood::Ring(0) = self.neighborhood {
            return Err(Error::InvalidConfig("ring neighborhood must be at least 1".into()));
        }
        for v in [self.c1, self.c2, self.w] {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::InvalidConfig("PSO coefficients must be finite and nonnegative".into()));
            }
        }
        Ok(())
    }

    pub fn evaluations_per_step(&self) -> usize {
        self.particles * self.microreplications
    }
}

/// `points` samples of `ranges`, one per stratum in each coordinate.
pub fn latin_hypercube<T: Real>(points: usize, ranges: &[(T, T)], seed: u64) -> Vec<Vec<T>> {
    let mut rng = rng_from(mix_seed(seed, &[tags::INIT, 0x6c68_63]));
    let mut columns: Vec<Vec<T>> = ranges
        .iter()
        .map(|&(lo, hi)| {
            let mut strata: Vec<usize> = (0..points).collect();
            strata.shuffle(&mut rng);
            strata
                .into_iter()
                .map(|s| {
                    let u = (s as f64 + rng.random::<f64>()) / points as f64;
                    lo + (hi - lo) * T::lit(u)
                })
                .collect()
        })
        .collect();
    (0..points).map(|p| columns.iter_mut().map(|c| c[p]).collect()).collect()
}

fn better<T: Real>(a: Option<T>, b: Option<T>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x < y,
        (Some(_), None) => true,
        _ => false,
    }
}

/// Minimizes the plain objective. The initial swarm is always evaluated;
/// later steps run while their evaluations fit the budget.
pub fn pso<T: Real, P: Program<T> + ?Sized>(
    prog: &P,
    cfg: &PsoConfig<T>,
    bounds: &Bounds<T>,
    budget: &Budget,
    crisp: &CrispEvaluator,
    seed: u64,
) -> Result<OptimizerRun<T>> {
    cfg.validate()?;
    if bounds.dim() != prog.dim() {
        return Err(Error::LengthMismatch { expected: prog.dim(), got: bounds.dim() });
    }
    let n = cfg.particles;
    let dim = bounds.dim();
    let mut rng = rng_from(mix_seed(seed, &[tags::OPTIMIZER, tags::INIT]));
    let mut x: Vec<Vec<T>> = (0..n)
        .map(|_| (0..dim).map(|d| bounds.lo[d] + (bounds.hi[d] - bounds.lo[d]) * T::lit(rng.random::<f64>())).collect())
        .collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|_| {
            (0..dim)
                .map(|d| (bounds.hi[d] - bounds.lo[d]) * T::lit(0.1 * (2.0 * rng.random::<f64>() - 1.0)))
                .collect()
        })
        .collect();
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| cfg.neighborhood.members(i, n)).collect();

    let mut rec = Recorder::new(prog, crisp);
    let mut diagnostics = RunDiagnostics::default();
    let per_step = cfg.evaluations_per_step();

    let fitness = population_fitness(prog, &x, cfg.microreplications, seed, 0);
    diagnostics.failed_evaluations += fitness.iter().filter(|f| f.is_none()).count();
    let mut used = per_step;
    let mut pbest = x.clone();
    let mut pbest_f = fitness;
    let swarm_best = |pf: &[Option<T>]| (0..n).fold(0, |b, i| if better(pf[i], pf[b]) { i } else { b });
    let g = swarm_best(&pbest_f);
    rec.record(0, used, &pbest[g], pbest_f[g])?;

    let mut step = 0;
    while budget.allows(used, per_step, rec.start()) {
        step += 1;
        let lbest: Vec<usize> = neighbors
            .iter()
            .map(|nb| nb.iter().copied().fold(nb[0], |b, j| if better(pbest_f[j], pbest_f[b]) { j } else { b }))
            .collect();
        for i in 0..n {
            for d in 0..dim {
                let r1 = T::lit(rng.random::<f64>());
                let r2 = T::lit(rng.random::<f64>());
                v[i][d] = cfg.w * v[i][d] + cfg.c1 * r1 * (pbest[i][d] - x[i][d]) + cfg.c2 * r2 * (pbest[lbest[i]][d] - x[i][d]);
                x[i][d] = x[i][d] + v[i][d];
            }
            bounds.clamp(&mut x[i]);
        }
        let fitness = population_fitness(prog, &x, cfg.microreplications, seed, step);
        used += per_step;
        for i in 0..n {
            match fitness[i] {
                None => diagnostics.failed_evaluations += 1,
                f if better(f, pbest_f[i]) => {
                    pbest[i] = x[i].clone();
                    pbest_f[i] = f;
                }
                _ => {}
            }
        }
        let g = swarm_best(&pbest_f);
        rec.record(step, used, &pbest[g], pbest_f[g])?;
    }
    Ok(rec.finish(Method::Pso, used, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::testing::sphere;

    fn crisp() -> CrispEvaluator {
        CrispEvaluator::new(0, 1)
    }

    #[test]
    fn ring_members() {
        assert_eq!(Neighborhood::Ring(3).members(0, 10), vec![9, 0, 1]);
        assert_eq!(Neighborhood::Ring(6).members(0, 10), vec![8, 9, 0, 1, 2, 3]);
        assert_eq!(Neighborhood::Ring(6).members(2, 4), vec![1, 2, 3, 0]);
        assert_eq!(Neighborhood::All.members(3, 4), vec![0, 1, 2, 3]);
    }

    #[test]
    fn latin_hypercube_fills_every_stratum() {
        let pts = latin_hypercube(10, &[(0.0, 1.0), (2.0, 4.0)], 3);
        assert_eq!(pts.len(), 10);
        for (d, (lo, hi)) in [(0.0f64, 1.0f64), (2.0, 4.0)].iter().enumerate() {
            let mut strata: Vec<usize> = pts.iter().map(|p| ((p[d] - lo) / (hi - lo) * 10.0).floor() as usize).collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn sphere_converges() {
        let bounds = Bounds::uniform(3, -5.0, 5.0).unwrap();
        let cfg = PsoConfig::new(50, (1.49618, 1.49618, 0.7298), Neighborhood::Ring(3));
        let mut best: Vec<f64> = (0..20)
            .map(|s| pso(&sphere(3), &cfg, &bounds, &Budget::evaluations(50 * 201), &crisp(), s).unwrap().best_crisp)
            .collect();
        best.sort_by(f64::total_cmp);
        assert!(best[10] < 1e-3, "median {}", best[10]);
    }

    #[test]
    fn global_topology_shares_one_best() {
        let bounds = Bounds::uniform(2, -1.0, 1.0).unwrap();
        let pf: Vec<Option<f64>> = vec![Some(3.0), Some(1.0), None, Some(2.0)];
        let nb = Neighborhood::All;
        let lbest: Vec<usize> =
            (0..4).map(|i| nb.members(i, 4).into_iter().fold(0, |b, j| if better(pf[j], pf[b]) { j } else { b })).collect();
        assert_eq!(lbest, vec![1; 4]);
        assert_eq!(bounds.dim(), 2);
    }

    #[test]
    fn tiny_budget_returns_initial_best() {
        let bounds = Bounds::uniform(3, -5.0, 5.0).unwrap();
        let cfg = PsoConfig::new(10, (1.5, 1.5, 0.7), Neighborhood::All);
        let run = pso(&sphere(3), &cfg, &bounds, &Budget::evaluations(1), &crisp(), 4).unwrap();
        assert_eq!(run.trace.len(), 1);
        assert_eq!(run.evaluations, 10);
    }

    #[test]
    fn accounting_bounds_and_determinism() {
        let bounds = Bounds::uniform(3, 0.0, 10.0).unwrap();
        let mut cfg = PsoConfig::new(10, (2.0, 2.0, 0.9), Neighborhood::Ring(6));
        cfg.microreplications = 2;
        let run = pso(&sphere(3), &cfg, &bounds, &Budget::evaluations(205), &crisp(), 8).unwrap();
        assert_eq!(run.trace.len(), 10);
        for (k, row) in run.trace.iter().enumerate() {
            assert_eq!(row.evaluations, 20 * (k + 1));
            assert!(bounds.contains(&row.incumbent));
        }
        assert!(run.trace.windows(2).all(|w| w[1].best_crisp <= w[0].best_crisp));
        let again = pso(&sphere(3), &cfg, &bounds, &Budget::evaluations(205), &crisp(), 8).unwrap();
        assert_eq!(run.best_parameters, again.best_parameters);
        assert!(PsoConfig::new(1, (1.0, 1.0, 0.5), Neighborhood::All).validate().is_err());
    }
}
