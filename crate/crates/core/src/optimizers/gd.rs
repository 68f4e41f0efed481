use super::{Bounds, Budget, CrispEvaluator, Method, OptimizerRun, Recorder, RunDiagnostics};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorConfig, Program};
use crate::scalar::Real;
use crate::seed::{mix_seed, tags};

/// Plain projected gradient descent. The estimator seed is re-derived for
/// every step from the run seed.
#[derive(Clone, Debug, PartialEq)]
pub struct GdConfig<T> {
    pub learning_rate: T,
    pub estimator: EstimatorConfig<T>,
}

impl<T: Real> GdConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        self.estimator.validate()
    }

    /// Evaluations charged per step.
    pub fn evaluations_per_step(&self) -> usize {
        self.estimator.evaluations()
    }
}

/// `theta <- clamp(theta - lr * g)` until the budget is spent. A failed or
/// non-finite estimate skips the update but is still charged.
pub fn gradient_descent<T: Real, P: Program<T> + ?Sized>(
    prog: &P,
    cfg: &GdConfig<T>,
    theta0: &[T],
    bounds: &Bounds<T>,
    budget: &Budget,
    crisp: &CrispEvaluator,
    seed: u64,
) -> Result<OptimizerRun<T>> {
    cfg.validate()?;
    if theta0.len() != prog.dim() || bounds.dim() != prog.dim() {
        return Err(Error::LengthMismatch { expected: prog.dim(), got: theta0.len() });
    }
    let mut theta = theta0.to_vec();
    bounds.clamp(&mut theta);
    let per_step = cfg.evaluations_per_step();
    let mut rec = Recorder::new(prog, crisp);
    let mut diagnostics = RunDiagnostics::default();
    let mut used = 0;
    rec.record(0, used, &theta, None)?;
    let mut step = 0;
    while budget.allows(used, per_step, rec.start()) {
        step += 1;
        let est_cfg = cfg.estimator.clone().with_seed(mix_seed(seed, &[tags::OPTIMIZER, step as u64]));
        used += per_step;
        let objective = match estimate(prog, &theta, &est_cfg) {
            Ok(est) if est.gradient.iter().all(|g| g.is_finite()) => {
                for (t, g) in theta.iter_mut().zip(&est.gradient) {
                    *t -= cfg.learning_rate * *g;
                }
                bounds.clamp(&mut theta);
                Some(est.mean_output)
            }
            Ok(_) => {
                log::warn!("step {step}: non-finite gradient, update skipped");
                diagnostics.skipped_steps += 1;
                None
            }
            Err(e) => {
                log::warn!("step {step}: estimator failed ({e}), update skipped");
                diagnostics.skipped_steps += 1;
                diagnostics.failed_evaluations += 1;
                None
            }
        };
        rec.record(step, used, &theta, objective)?;
    }
    Ok(rec.finish(Method::Gd, used, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::synthetic::{Heaviside, Quadratic};
    use crate::estimators::{EstimatorKind, Program};

    fn crisp() -> CrispEvaluator {
        CrispEvaluator::new(0, 4)
    }

    #[test]
    fn quadratic_contracts_geometrically() {
        let cfg = GdConfig { learning_rate: 0.1, estimator: EstimatorConfig::new(EstimatorKind::Ipa, 1, 0.0, 0) };
        let bounds = Bounds::uniform(1, -10.0, 10.0).unwrap();
        let run = gradient_descent(&Quadratic, &cfg, &[1.0], &bounds, &Budget::evaluations(10), &crisp(), 1).unwrap();
        assert_eq!(run.trace.len(), 11);
        for row in &run.trace {
            let expected = 0.8f64.powi(row.step as i32);
            assert!((row.incumbent[0] - expected).abs() < 1e-12);
            assert_eq!(row.evaluations, row.step);
        }
        assert!(run.trace.windows(2).all(|w| w[1].crisp < w[0].crisp));
    }

    #[test]
    fn zero_learning_rate_is_rejected() {
        let cfg = GdConfig { learning_rate: 0.0, estimator: EstimatorConfig::new(EstimatorKind::Ipa, 1, 0.0, 0) };
        let bounds = Bounds::uniform(1, -1.0, 1.0).unwrap();
        let r = gradient_descent(&Quadratic, &cfg, &[1.0], &bounds, &Budget::evaluations(10), &crisp(), 1);
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn budget_accounting_is_exact() {
        for (kind, sigma, per) in [(EstimatorKind::Ipa, 0.0, 30), (EstimatorKind::Dgo, 0.0, 30), (EstimatorKind::Pgo, 0.1, 60)] {
            let est = EstimatorConfig::new(kind, 10, sigma, 0).with_microreplications(3);
            let cfg = GdConfig { learning_rate: 0.1, estimator: est };
            let bounds = Bounds::uniform(1, -3.0, 3.0).unwrap();
            let run = gradient_descent(&Heaviside::standard(), &cfg, &[0.0], &bounds, &Budget::evaluations(1000), &crisp(), 2).unwrap();
            for w in run.trace.windows(2) {
                assert_eq!(w[1].evaluations - w[0].evaluations, per, "{kind}");
                assert!(w[1].best_crisp <= w[0].best_crisp);
            }
            assert!(run.evaluations <= 1000 && run.evaluations + per > 1000);
        }
    }

    #[test]
    fn incumbents_stay_in_bounds() {
        let cfg = GdConfig { learning_rate: 5.0, estimator: EstimatorConfig::new(EstimatorKind::Ipa, 1, 0.0, 0) };
        let bounds = Bounds::uniform(1, 0.5, 2.0).unwrap();
        let run = gradient_descent(&Quadratic, &cfg, &[1.5], &bounds, &Budget::evaluations(20), &crisp(), 1).unwrap();
        assert!(run.trace.iter().all(|r| bounds.contains(&r.incumbent)));
        assert_eq!(run.trace.last().unwrap().incumbent, vec![0.5]);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let est = EstimatorConfig::new(EstimatorKind::Pgo, 20, 0.1, 0);
        let cfg = GdConfig { learning_rate: 0.5, estimator: est };
        let bounds = Bounds::uniform(1, -3.0, 3.0).unwrap();
        let a = gradient_descent(&Heaviside::standard(), &cfg, &[0.0], &bounds, &Budget::evaluations(400), &crisp(), 9).unwrap();
        let b = gradient_descent(&Heaviside::standard(), &cfg, &[0.0], &bounds, &Budget::evaluations(400), &crisp(), 9).unwrap();
        let strip = |r: &OptimizerRun<f64>| r.trace.iter().map(|t| (t.step, t.evaluations, t.crisp, t.incumbent.clone())).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn failing_estimates_are_skipped_and_charged() {
        let prog = crate::estimators::program_fn(1, |p: &[crate::ad::Dual<f64>], seed, _ctx| {
            if seed % 2 == 0 { Ok(p[0] * p[0]) } else { Err(Error::NonFiniteOutput { seed }) }
        });
        let cfg = GdConfig { learning_rate: 0.1, estimator: EstimatorConfig::new(EstimatorKind::Ipa, 4, 0.0, 0) };
        let bounds = Bounds::uniform(1, -3.0, 3.0).unwrap();
        let crisp = CrispEvaluator::from_seeds(vec![0, 2]);
        let run = gradient_descent(&prog, &cfg, &[1.0], &bounds, &Budget::evaluations(40), &crisp, 5).unwrap();
        assert_eq!(run.evaluations, 40);
        assert_eq!(run.diagnostics.skipped_steps, 10);
        assert!(run.trace.iter().all(|r| r.incumbent == vec![1.0]));
        assert_eq!(prog.dim(), 1);
    }

    #[test]
    fn dgo_descends_the_heaviside_expectation() {
        // E[P](theta) = Phi(-theta); its minimum over [-3, 3] is Phi(-3)
        let phi = |x: f64| 0.5 * (1.0 + libm_erf(x / std::f64::consts::SQRT_2));
        let min = phi(-3.0);
        let mut finals = Vec::new();
        for macro_rep in 0..20 {
            let est = EstimatorConfig::new(EstimatorKind::Dgo, 100, 0.1, 0);
            let cfg = GdConfig { learning_rate: 0.5, estimator: est };
            let bounds = Bounds::uniform(1, -3.0, 3.0).unwrap();
            let run = gradient_descent(&Heaviside::standard(), &cfg, &[0.0], &bounds, &Budget::evaluations(6000), &crisp(), macro_rep).unwrap();
            finals.push(phi(-run.trace.last().unwrap().incumbent[0]));
        }
        finals.sort_by(f64::total_cmp);
        let median = 0.5 * (finals[9] + finals[10]);
        assert!(median - min < 0.05, "median {median} vs min {min}");
    }

    /// Abramowitz-Stegun 7.1.26, |error| < 1.5e-7.
    fn libm_erf(x: f64) -> f64 {
        let t = 1.0 / (1.0 + 0.3275911 * x.abs());
        let y = 1.0 - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t + 0.254829592) * t * (-x * x).exp();
        y.copysign(x)
    }
}
