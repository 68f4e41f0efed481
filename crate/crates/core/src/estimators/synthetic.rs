//! Small analytic programs with known gradients, used as oracles by the
//! test suites and as cheap targets for fidelity sweeps.

use rand::Rng;
use rand_distr::StandardNormal;

use super::Program;
use crate::ad::{BranchSite, Dual, TraceContext};
use crate::error::Result;
use crate::scalar::Real;
use crate::seed::{mix_seed, rng_from};

const STEP_SITE: BranchSite = BranchSite::tracked(0x4845_4156);
const SECOND_SITE: BranchSite = BranchSite::tracked(0x5345_434f);
const UNTRACKED_SITE: BranchSite = BranchSite::passthrough(0x554e_5452);

/// Standard normal draw number `k` for a seed.
pub fn normal_draw(seed: u64, k: u64) -> f64 {
    rng_from(mix_seed(seed, &[k])).sample(StandardNormal)
}

fn indicator<T: Real>(b: bool) -> Dual<T> {
    Dual::constant(if b { T::one() } else { T::zero() })
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(theta, omega) = 1[theta + noise_sd * omega < 0]`, omega ~ N(0, 1).
///
/// `d/dtheta E[P] = -phi(theta / sd) / sd`.
#[derive(Clone, Copy, Debug)]
pub struct Heaviside {
    pub noise_sd: f64,
}

impl Heaviside {
    pub fn standard() -> Self {
        Heaviside { noise_sd: 1.0 }
    }

    pub fn omega(seed: u64) -> f64 {
        normal_draw(seed, 0)
    }

    /// Exact gradient of the expectation after Gaussian smoothing with `sigma`.
    pub fn smoothed_gradient(&self, theta: f64, sigma: f64) -> f64 {
        let sd = (self.noise_sd * self.noise_sd + sigma * sigma).sqrt();
        -normal_pdf(theta / sd) / sd
    }
}

impl<T: Real> Program<T> for Heaviside {
    fn dim(&self) -> usize {
        1
    }
    fn run(&self, p: &[Dual<T>], seed: u64, ctx: &mut TraceContext<T>) -> Result<Dual<T>> {
        let w = T::lit(self.noise_sd * Self::omega(seed));
        Ok(indicator(ctx.traced_less_than(STEP_SITE, p[0] + w)?))
    }
}

/// `P(theta) = theta^2`, deterministic.
#[derive(Clone, Copy, Debug)]
pub struct Quadratic;

impl<T: Real> Program<T> for Quadratic {
    fn dim(&self) -> usize {
        1
    }
    fn run(&self, p: &[Dual<T>], _seed: u64, _ctx: &mut TraceContext<T>) -> Result<Dual<T>> {
        Ok(p[0] * p[0])
    }
}

/// `P(theta, omega) = theta * omega`, omega ~ N(0, 1).
#[derive(Clone, Copy, Debug)]
pub struct LinearNoise;

impl LinearNoise {
    pub fn omega(seed: u64) -> f64 {
        normal_draw(seed, 0)
    }
}

impl<T: Real> Program<T> for LinearNoise {
    fn dim(&self) -> usize {
        1
    }
    fn run(&self, p: &[Dual<T>], seed: u64, _ctx: &mut TraceContext<T>) -> Result<Dual<T>> {
        Ok(p[0] * T::lit(Self::omega(seed)))
    }
}

/// `P(theta) = slope . theta`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub slope: Vec<f64>,
}

impl<T: Real> Program<T> for Linear {
    fn dim(&self) -> usize {
        self.slope.len()
    }
    fn run(&self, p: &[Dual<T>], _seed: u64, _ctx: &mut TraceContext<T>) -> Result<Dual<T>> {
        Ok(p.iter().zip(&self.slope).map(|(&x, &s)| x * T::lit(s)).sum())
    }
}

/// Branch-free noisy program in two parameters.
#[derive(Clone, Copy, Debug)]
pub struct SmoothNoise;

impl<T: Real> Program<T> for SmoothNoise {
    fn dim(&self) -> usize {
        2
    }
    fn run(&self, p: &[Dual<T>], seed: u64, _ctx: &mut TraceContext<T>) -> Result<Dual<T>> {
        let w = T::lit(normal_draw(seed, 0));
        Ok(p[0].sin() * (p[1] * w).exp() + p[1] * p[1])
    }
}

/// `P = 1[theta + w1 < 0] + 1[theta + w2 < 0]`, two sequential branches.
///
/// `d/dtheta E[P] = -2 phi(theta)`.
#[derive(Clone, Copy, Debug)]
pub struct TwoBranch;

impl<T: Real> Program<T> for TwoBranch {
    fn dim(&self) -> usize {
        1
    }
    fn run(&self, p: &[Dual<T>], seed: u64, ctx: &mut TraceContext<T>) -> Result<Dual<T>> {
        let a = ctx.traced_less_than(STEP_SITE, p[0] + T::lit(normal_draw(seed, 0)))?;
        let b = ctx.traced_less_than(SECOND_SITE, p[0] + T::lit(normal_draw(seed, 1)))?;
        Ok(indicator::<T>(a) + indicator(b))
    }
}

/// One tracked and one passthrough branch.
#[derive(Clone, Copy, Debug)]
pub struct TrackedAndUntracked;

impl<T: Real> Program<T> for TrackedAndUntracked {
    fn dim(&self) -> usize {
        1
    }
    fn run(&self, p: &[Dual<T>], seed: u64, ctx: &mut TraceContext<T>) -> Result<Dual<T>> {
        let a = ctx.traced_less_than(UNTRACKED_SITE, p[0] + T::lit(normal_draw(seed, 0)))?;
        let b = ctx.traced_less_than(STEP_SITE, p[0] + T::lit(normal_draw(seed, 1)))?;
        Ok(indicator::<T>(a) + indicator(b))
    }
}
