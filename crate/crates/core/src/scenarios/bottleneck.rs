use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ad::{BranchSite, Dual, TraceContext};
use crate::error::{Error, Result};
use crate::estimators::Program;
use crate::scalar::{AdScalar, Real};
use crate::seed::{mix_seed, rng_from};
use crate::social_force::{AgentState, ForceParams, ForceWeights, Vec2, Wall, World};

/// Tracked evacuation test `door_x - x < 0`, indexed by agent.
pub const SITE_EVACUATED: BranchSite = BranchSite::tracked(0x424e_0001);

const PLACEMENT_TAG: u64 = 0x706c_6163_65;
const PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BottleneckObjective {
    /// Squared error of the mean final horizontal position.
    PositionFit,
    /// Squared error of the number of agents past the door.
    EvacCountFit,
}

impl BottleneckObjective {
    pub fn name(self) -> &'static str {
        match self {
            BottleneckObjective::PositionFit => "position_fit",
            BottleneckObjective::EvacCountFit => "evac_count_fit",
        }
    }
}

/// Square arena split by a vertical wall with one door; agents start on the
/// left and head for a goal on the right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct BottleneckConfig<T> {
    pub agents: usize,
    pub arena: T,
    pub door_width: T,
    pub duration: T,
    pub dt: T,
    pub objective: BottleneckObjective,
    pub reference: T,
    /// Start region `[x0, x1] x [y0, y1]`.
    pub spawn_min: [T; 2],
    pub spawn_max: [T; 2],
    pub min_separation: T,
    pub forces: ForceParams<T>,
}

impl<T: Real> Default for BottleneckConfig<T> {
    fn default() -> Self {
        BottleneckConfig {
            agents: 3,
            arena: T::lit(30.0),
            door_width: T::lit(4.0),
            duration: T::lit(20.0),
            dt: T::lit(0.1),
            objective: BottleneckObjective::PositionFit,
            reference: T::zero(),
            spawn_min: [T::lit(2.0), T::lit(3.0)],
            spawn_max: [T::lit(12.0), T::lit(27.0)],
            min_separation: T::lit(0.6),
            forces: ForceParams::default(),
        }
    }
}

impl<T: Real> BottleneckConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.forces.validate()?;
        if !(self.arena > T::zero() && self.door_width > T::zero() && self.door_width < self.arena) {
            return Err(Error::InvalidConfig("bottleneck geometry must satisfy 0 < door_width < arena".into()));
        }
        if !(self.dt > T::zero()) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        self.steps()?;
        let (lo, hi) = (self.spawn_min, self.spawn_max);
        if !(lo[0] < hi[0] && lo[1] < hi[1] && lo[0] > T::zero() && hi[0] < self.door_x() && lo[1] > T::zero() && hi[1] < self.arena) {
            return Err(Error::InvalidConfig("spawn region must lie inside the left half".into()));
        }
        Ok(())
    }

    /// Number of steps; `duration / dt` must be integral.
    pub fn steps(&self) -> Result<usize> {
        integral_ratio(self.duration, self.dt, "duration")
    }

    pub fn door_x(&self) -> T {
        self.arena * T::lit(0.5)
    }

    fn door_y(&self) -> T {
        self.arena * T::lit(0.5)
    }

    pub fn walls(&self) -> Result<Vec<Wall<T>>> {
        let (a, z) = (self.arena, T::zero());
        let (x, y) = (self.door_x(), self.door_y());
        let half = self.door_width * T::lit(0.5);
        Ok(vec![
            Wall::new((z, z), (a, z))?,
            Wall::new((a, z), (a, a))?,
            Wall::new((a, a), (z, a))?,
            Wall::new((z, a), (z, z))?,
            Wall::new((x, z), (x, y - half))?,
            Wall::new((x, y + half), (x, a))?,
        ])
    }

    fn waypoint(&self) -> Vec2<T> {
        Vec2 { x: self.door_x() + T::one(), y: self.door_y() }
    }

    fn final_goal(&self) -> Vec2<T> {
        Vec2 { x: self.arena - T::lit(2.0), y: self.door_y() }
    }
}

pub(crate) fn integral_ratio<T: Real>(span: T, dt: T, what: &str) -> Result<usize> {
    let r = span / dt;
    let n = r.round();
    if !(n >= T::zero()) || (r - n).abs() > T::lit(1e-9) * n.max(T::one()) {
        return Err(Error::InvalidConfig(format!("{what} {span} is not a multiple of dt {dt}")));
    }
    Ok(n.to_usize().unwrap_or(0))
}

/// Seeded start positions with a minimum pairwise separation.
pub fn initial_positions<T: Real>(cfg: &BottleneckConfig<T>, seed: u64) -> Result<Vec<Vec2<T>>> {
    let mut rng = rng_from(mix_seed(seed, &[PLACEMENT_TAG]));
    let (lo, hi) = (cfg.spawn_min.map(|v| v.to_f64_lossy()), cfg.spawn_max.map(|v| v.to_f64_lossy()));
    let sep = cfg.min_separation.to_f64_lossy();
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(cfg.agents);
    for _ in 0..cfg.agents {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let p = (rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1]));
            if out.iter().all(|q| (p.0 - q.0).hypot(p.1 - q.1) >= sep) {
                out.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InvalidConfig(format!("cannot place {} agents with separation {sep}", cfg.agents)));
        }
    }
    Ok(out.into_iter().map(|(x, y)| Vec2 { x: T::lit(x), y: T::lit(y) }).collect())
}

/// Final world state of one bottleneck run.
pub fn simulate_bottleneck<S: AdScalar>(
    cfg: &BottleneckConfig<S::Base>,
    weights: &ForceWeights<S>,
    ctx: &mut TraceContext<S::Base>,
    seed: u64,
) -> Result<World<S>> {
    cfg.validate()?;
    let mut world = World::new(cfg.walls()?, cfg.forces.clone(), cfg.dt)?;
    let waypoint = cfg.waypoint();
    let goal = cfg.final_goal();
    let door_x = cfg.door_x();
    for p in initial_positions(cfg, seed)? {
        world.spawn(AgentState::at_rest(Vec2::constant(p.x, p.y), waypoint, &cfg.forces));
    }
    for _ in 0..cfg.steps()? {
        world.step(weights, ctx)?;
        let mut switched = false;
        for a in world.agents.iter_mut() {
            if a.goal == waypoint && a.position.x.value() > door_x {
                a.goal = goal;
                switched = true;
            }
        }
        if switched {
            world.touch();
        }
    }
    Ok(world)
}

/// Raw measurement the objective compares against the reference: mean final
/// x, or the number of agents past the door.
pub fn bottleneck_measure<S: AdScalar>(
    cfg: &BottleneckConfig<S::Base>,
    world: &World<S>,
    ctx: &mut TraceContext<S::Base>,
) -> Result<S> {
    if world.agents.is_empty() {
        return Ok(S::zero());
    }
    match cfg.objective {
        BottleneckObjective::PositionFit => {
            let mut sum = S::zero();
            for a in &world.agents {
                sum += a.position.x;
            }
            Ok(sum / S::Base::from_usize_lossy(world.agents.len()))
        }
        BottleneckObjective::EvacCountFit => {
            let door = S::constant(cfg.door_x());
            let mut count = S::Base::zero();
            for (i, a) in world.agents.iter().enumerate() {
                if ctx.traced_less_than(SITE_EVACUATED.at(i as u32), door - a.position.x)? {
                    count += S::Base::one();
                }
            }
            Ok(S::constant(count))
        }
    }
}

/// `(measure - reference)^2`.
pub fn run_bottleneck<S: AdScalar>(
    cfg: &BottleneckConfig<S::Base>,
    weights: &ForceWeights<S>,
    ctx: &mut TraceContext<S::Base>,
    seed: u64,
) -> Result<S> {
    let mut inner = || -> Result<S> {
        let world = simulate_bottleneck(cfg, weights, ctx, seed)?;
        let m = bottleneck_measure(cfg, &world, ctx)?;
        Ok((m - cfg.reference).square())
    };
    inner().map_err(|e| e.context(format!("bottleneck scenario (seed {seed:#x})")))
}

/// The bottleneck objective as a 3-parameter program over the force weights.
#[derive(Clone, Debug)]
pub struct BottleneckProgram<T> {
    pub config: BottleneckConfig<T>,
}

impl<T: Real> Program<T> for BottleneckProgram<T> {
    fn dim(&self) -> usize {
        3
    }

    fn run(&self, params: &[Dual<T>], seed: u64, ctx: &mut TraceContext<T>) -> Result<Dual<T>> {
        let weights = ForceWeights::from_slice(params)?;
        run_bottleneck(&self.config, &weights, ctx, seed)
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::TraceMode;
    use crate::estimators::{estimate, evaluate_plain, EstimatorConfig, EstimatorKind};

    fn anchor() -> ForceWeights<f64> {
        ForceWeights::new(0.6, 5.5, 5.5)
    }

    #[test]
    fn empty_crowd_gives_squared_reference() {
        for objective in [BottleneckObjective::PositionFit, BottleneckObjective::EvacCountFit] {
            let cfg = BottleneckConfig { agents: 0, reference: 4.0, objective, ..Default::default() };
            let v = run_bottleneck(&cfg, &anchor(), &mut TraceContext::plain(), 1).unwrap();
            assert_eq!(v, 16.0);
        }
    }

    #[test]
    fn self_fit_is_zero() {
        for objective in [BottleneckObjective::PositionFit, BottleneckObjective::EvacCountFit] {
            let mut cfg = BottleneckConfig::<f64> { agents: 10, objective, ..Default::default() };
            let world = simulate_bottleneck(&cfg, &anchor(), &mut TraceContext::plain(), 9).unwrap();
            cfg.reference = bottleneck_measure(&cfg, &world, &mut TraceContext::plain()).unwrap();
            assert_eq!(run_bottleneck(&cfg, &anchor(), &mut TraceContext::plain(), 9).unwrap(), 0.0);
        }
    }

    #[test]
    fn agents_pass_the_door() {
        let cfg = BottleneckConfig::<f64> { agents: 10, objective: BottleneckObjective::EvacCountFit, ..Default::default() };
        let world = simulate_bottleneck(&cfg, &ForceWeights::new(1.0, 1.0, 1.0), &mut TraceContext::plain(), 3).unwrap();
        let count = bottleneck_measure(&cfg, &world, &mut TraceContext::plain()).unwrap();
        assert!(count >= 1.0, "no agent passed the door");
        for a in &world.agents {
            let p = a.position;
            assert!(p.x > 0.0 && p.x < 30.0 && p.y > 0.0 && p.y < 30.0, "{p:?}");
        }
    }

    #[test]
    fn placement_respects_separation() {
        let cfg = BottleneckConfig::<f64> { agents: 10, ..Default::default() };
        let ps = initial_positions(&cfg, 77).unwrap();
        for (i, p) in ps.iter().enumerate() {
            assert!(p.x >= 2.0 && p.x <= 12.0 && p.y >= 3.0 && p.y <= 27.0);
            for q in &ps[..i] {
                assert!((p.x - q.x).hypot(p.y - q.y) >= 0.6);
            }
        }
        assert_eq!(ps, initial_positions(&cfg, 77).unwrap());
        let crowded = BottleneckConfig::<f64> { agents: 5000, min_separation: 2.0, ..Default::default() };
        assert!(initial_positions(&crowded, 1).is_err());
    }

    #[test]
    fn invalid_duration_is_rejected() {
        let cfg = BottleneckConfig::<f64> { duration: 20.05, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn evac_count_registers_one_site_per_agent() {
        let cfg = BottleneckConfig::<f64> { agents: 3, objective: BottleneckObjective::EvacCountFit, ..Default::default() };
        let prog = BottleneckProgram { config: cfg };
        let params = crate::ad::seed_parameters(&[0.6, 5.5, 5.5]).unwrap();
        let mut ctx = TraceContext::new(TraceMode::Hybrid, 0, 3);
        prog.run(&params, 4, &mut ctx).unwrap();
        assert_eq!(ctx.observations().len(), 3);
        let ids: Vec<u32> = ctx.observations().iter().map(|o| o.key.site.index()).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn position_fit_tangents_match_finite_differences() {
        let cfg = BottleneckConfig::<f64> { agents: 3, reference: 10.0, ..Default::default() };
        let prog = BottleneckProgram { config: cfg };
        let theta = [0.6, 5.5, 5.5];
        let params = crate::ad::seed_parameters(&theta).unwrap();
        let out = prog.run(&params, 11, &mut TraceContext::plain()).unwrap();
        let h = 1e-5;
        for k in 0..3 {
            let (mut up, mut down) = (theta, theta);
            up[k] += h;
            down[k] -= h;
            let fd = (evaluate_plain(&prog, &up, 11).unwrap() - evaluate_plain(&prog, &down, 11).unwrap()) / (2.0 * h);
            let ad = out.partial(k);
            assert!((ad - fd).abs() <= 1e-3 * fd.abs().max(1e-3), "param {k}: {ad} vs {fd}");
        }
    }

    #[test]
    fn estimators_run_on_the_scenario() {
        let cfg = BottleneckConfig::<f64> { agents: 3, objective: BottleneckObjective::EvacCountFit, reference: 2.0, ..Default::default() };
        let prog = BottleneckProgram { config: cfg };
        for kind in EstimatorKind::ALL {
            let est = estimate(&prog, &[0.6, 5.5, 5.5], &EstimatorConfig::new(kind, 8, 0.01, 5)).unwrap();
            assert!(est.gradient.iter().all(|g| g.is_finite()));
            if kind == EstimatorKind::Ipa {
                assert!(est.gradient.iter().all(|&g| g == 0.0));
            }
        }
    }
}
