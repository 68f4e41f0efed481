use num_traits::{Float, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bottleneck::integral_ratio;
use super::histogram::{sample_coefficient, wasserstein_1d, CoefficientDraw, Histogram20, BINS};
use crate::ad::{BranchSite, Dual, TraceContext};
use crate::error::{Error, Result};
use crate::estimators::Program;
use crate::scalar::{AdScalar, PlainScalar, Real};
use crate::seed::{mix_seed, rng_from};
use crate::social_force::{AgentState, ForceParams, ForceWeights, SimDiagnostics, Vec2, Wall, World};

/// Exit-choice comparisons, indexed by exit. Only traced when
/// `track_exit_choice` is set.
pub const SITE_EXIT_CHOICE: BranchSite = BranchSite::tracked(0x4558_0002);

const SPAWN_TAG: u64 = 0x7370_6177_6e;
const UNIFORM_TAG: u64 = 0x756e_6966;
const DECISION_SCOPE: u64 = 0x6465_6369_6465;

pub const EXITS: usize = 4;

/// Agents enter on the left over the warm-up window and leave through one
/// of four doors: two in the right wall, one each in the top and bottom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct ExitSelectionConfig<T> {
    pub agents: usize,
    pub arena: T,
    pub exit_width: T,
    /// Seconds between exit reconsiderations.
    pub reconsider: T,
    /// Spawning window, s.
    pub warm_up: T,
    /// Output histogram support, s.
    pub output_lo: T,
    pub output_hi: T,
    /// Extra simulated time after `warm_up + output_hi`.
    pub margin: T,
    pub congestion_radius: T,
    /// Distance normalizer; the arena diagonal when absent.
    pub distance_norm: Option<T>,
    /// Congestion-count normalizer; the agent count when absent.
    pub count_norm: Option<T>,
    pub dt: T,
    pub spawn_x: T,
    pub track_exit_choice: bool,
    /// Force weights (internal, interaction, obstacle).
    pub weights: [T; 3],
    pub forces: ForceParams<T>,
}

impl<T: Real> Default for ExitSelectionConfig<T> {
    fn default() -> Self {
        ExitSelectionConfig {
            agents: 50,
            arena: T::lit(30.0),
            exit_width: T::lit(3.0),
            reconsider: T::lit(15.0),
            warm_up: T::lit(100.0),
            output_lo: T::lit(10.0),
            output_hi: T::lit(75.0),
            margin: T::lit(10.0),
            congestion_radius: T::lit(5.0),
            distance_norm: None,
            count_norm: None,
            dt: T::lit(0.1),
            spawn_x: T::lit(1.0),
            track_exit_choice: false,
            weights: [T::one(); 3],
            forces: ForceParams::default(),
        }
    }
}

/// Door center and outward unit normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exit<T> {
    pub center: Vec2<T>,
    pub outward: Vec2<T>,
}

impl<T: Real> ExitSelectionConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.forces.validate()?;
        if !(self.dt > T::zero()) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        integral_ratio(self.reconsider, self.dt, "reconsideration period")?;
        if self.reconsider <= T::zero() {
            return Err(Error::InvalidConfig("reconsideration period must be positive".into()));
        }
        self.horizon_steps()?;
        if !(self.output_hi > self.output_lo) {
            return Err(Error::InvalidConfig("output_hi must exceed output_lo".into()));
        }
        if !(self.exit_width > T::zero() && self.exit_width * T::lit(2.0) < self.arena * T::lit(0.5)) {
            return Err(Error::InvalidConfig("exit width incompatible with the arena".into()));
        }
        if !(self.spawn_x > T::zero() && self.spawn_x < self.arena) {
            return Err(Error::InvalidConfig("spawn_x must lie inside the arena".into()));
        }
        if !(self.warm_up >= T::zero() && self.congestion_radius >= T::zero()) {
            return Err(Error::InvalidConfig("warm_up and congestion_radius must be nonnegative".into()));
        }
        for n in [self.distance_norm, self.count_norm].into_iter().flatten() {
            if !(n > T::zero()) {
                return Err(Error::InvalidConfig("normalizers must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> T {
        self.warm_up + self.output_hi + self.margin
    }

    pub fn horizon_steps(&self) -> Result<usize> {
        integral_ratio(self.horizon(), self.dt, "horizon")
    }

    fn distance_norm(&self) -> T {
        self.distance_norm.unwrap_or(self.arena * T::SQRT_2())
    }

    fn count_norm(&self) -> T {
        self.count_norm.unwrap_or(T::from_usize_lossy(self.agents.max(1)))
    }

    pub fn exits(&self) -> [Exit<T>; EXITS] {
        let (a, z, o) = (self.arena, T::zero(), T::one());
        let quarter = a * T::lit(0.25);
        let two_thirds = a * T::lit(2.0 / 3.0);
        [
            Exit { center: Vec2 { x: a, y: quarter }, outward: Vec2 { x: o, y: z } },
            Exit { center: Vec2 { x: a, y: a - quarter }, outward: Vec2 { x: o, y: z } },
            Exit { center: Vec2 { x: two_thirds, y: a }, outward: Vec2 { x: z, y: o } },
            Exit { center: Vec2 { x: two_thirds, y: z }, outward: Vec2 { x: z, y: -o } },
        ]
    }

    /// Boundary walls with gaps at the exits.
    pub fn walls(&self) -> Result<Vec<Wall<T>>> {
        let (a, z) = (self.arena, T::zero());
        let h = self.exit_width * T::lit(0.5);
        let [r0, r1, top, bottom] = self.exits();
        Ok(vec![
            Wall::new((z, z), (z, a))?,
            Wall::new((a, z), (a, r0.center.y - h))?,
            Wall::new((a, r0.center.y + h), (a, r1.center.y - h))?,
            Wall::new((a, r1.center.y + h), (a, a))?,
            Wall::new((z, a), (top.center.x - h, a))?,
            Wall::new((top.center.x + h, a), (a, a))?,
            Wall::new((z, z), (bottom.center.x - h, z))?,
            Wall::new((bottom.center.x + h, z), (a, z))?,
        ])
    }
}

impl<T: PlainScalar> ExitSelectionConfig<T> {
    pub fn output_histogram(&self) -> Result<Histogram20<T>> {
        Histogram20::over(self.output_lo, self.output_hi)
    }
}

/// One exit choice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExitDecision<T> {
    pub agent: usize,
    pub time: T,
    pub coefficient: T,
    pub chosen: usize,
    /// Exit with the smallest distance (lowest index on ties).
    pub nearest: usize,
    pub chosen_distance: T,
}

#[derive(Clone, Debug)]
pub struct ExitOutcome<T: PlainScalar> {
    pub spawn_times: Vec<T>,
    /// Spawn-relative evacuation times; `None` if still inside at the horizon.
    pub evacuation_times: Vec<Option<T>>,
    pub histogram: Histogram20<T>,
    pub decisions: Vec<ExitDecision<T>>,
    pub steps: u64,
    pub diagnostics: SimDiagnostics,
}

/// Per-agent uniform variates for the coefficient draws.
pub fn coefficient_uniforms<T: Real>(agents: usize, seed: u64) -> Vec<T> {
    let mut rng = rng_from(mix_seed(seed, &[UNIFORM_TAG]));
    (0..agents).map(|_| T::lit(rng.random::<f64>())).collect()
}

/// Draws every agent's coefficient, each in its own path scope.
pub fn draw_coefficients<S: AdScalar>(
    agents: usize,
    bins: &Histogram20<S>,
    ctx: &mut TraceContext<S::Base>,
    seed: u64,
) -> Result<Vec<CoefficientDraw<S>>> {
    coefficient_uniforms::<S::Base>(agents, seed)
        .into_iter()
        .enumerate()
        .map(|(i, u)| {
            ctx.enter_scope(i as u64);
            sample_coefficient(ctx, u, bins)
        })
        .collect()
}

fn choose_exit<T: PlainScalar>(
    cfg: &ExitSelectionConfig<T>,
    exits: &[Exit<T>; EXITS],
    world: &World<T>,
    agent: usize,
    ctx: &mut TraceContext<T>,
) -> Result<ExitDecision<T>> {
    let a = &world.agents[agent];
    let c = a.coefficient;
    let p = a.position;
    let r_sq = cfg.congestion_radius * cfg.congestion_radius;
    let dist = |e: &Exit<T>| Float::hypot(p.x - e.center.x, p.y - e.center.y);
    let crowd = |e: &Exit<T>| {
        world
            .agents
            .iter()
            .enumerate()
            .filter(|(j, b)| {
                let (dx, dy) = (b.position.x - e.center.x, b.position.y - e.center.y);
                *j != agent && b.is_active() && dx * dx + dy * dy <= r_sq
            })
            .count()
    };
    let (dn, nn) = (cfg.distance_norm(), cfg.count_norm());
    let utility: Vec<T> = exits
        .iter()
        .map(|e| c * dist(e) / dn + (T::one() - c) * T::from_usize_lossy(crowd(e)) / nn)
        .collect();
    let mut chosen = 0;
    for e in 1..EXITS {
        let condition = utility[e] - utility[chosen];
        let better = if cfg.track_exit_choice {
            ctx.traced_less_than(SITE_EXIT_CHOICE.at(e as u32), condition)?
        } else {
            condition < <T as Zero>::zero()
        };
        if better {
            chosen = e;
        }
    }
    let mut nearest = 0;
    for e in 1..EXITS {
        if dist(&exits[e]) < dist(&exits[nearest]) {
            nearest = e;
        }
    }
    Ok(ExitDecision { agent, time: world.time, coefficient: c, chosen, nearest, chosen_distance: dist(&exits[chosen]) })
}

fn exit_goal<T: PlainScalar>(e: &Exit<T>) -> Vec2<T> {
    let two = T::lit(2.0);
    Vec2 { x: e.center.x + e.outward.x * two, y: e.center.y + e.outward.y * two }
}

/// Runs the crowd with fixed per-agent coefficients.
pub fn simulate_exit_selection<T: PlainScalar>(
    cfg: &ExitSelectionConfig<T>,
    coefficients: &[T],
    ctx: &mut TraceContext<T>,
    seed: u64,
) -> Result<ExitOutcome<T>> {
    cfg.validate()?;
    if coefficients.len() != cfg.agents {
        return Err(Error::LengthMismatch { expected: cfg.agents, got: coefficients.len() });
    }
    let n = cfg.agents;
    let exits = cfg.exits();
    let mut world: World<T> = World::new(cfg.walls()?, cfg.forces.clone(), cfg.dt)?;
    let weights = ForceWeights::new(cfg.weights[0], cfg.weights[1], cfg.weights[2]);
    let total_steps = cfg.horizon_steps()?;
    let period = integral_ratio(cfg.reconsider, cfg.dt, "reconsideration period")?;
    let interval = if n == 0 { <T as Zero>::zero() } else { cfg.warm_up / T::from_usize_lossy(n) };
    let spawn_steps: Vec<usize> = (0..n)
        .map(|k| (T::from_usize_lossy(k) * interval / cfg.dt).round().to_usize().unwrap_or(0))
        .collect();
    let mut rng = rng_from(mix_seed(seed, &[SPAWN_TAG]));
    let margin = cfg.exit_width.min(T::lit(1.5));
    let (ylo, yhi) = (margin.to_f64_lossy(), (cfg.arena - margin).to_f64_lossy());
    let spawn_y: Vec<T> = (0..n).map(|_| T::lit(rng.random_range(ylo..yhi))).collect();

    let mut spawn_times = Vec::with_capacity(n);
    let mut evacuation_times = vec![None; n];
    let mut decisions = Vec::new();
    let mut next = 0;
    let mut remaining = n;
    for step in 0..total_steps {
        while next < n && spawn_steps[next] <= step {
            let mut agent = AgentState::at_rest(Vec2::new(cfg.spawn_x, spawn_y[next]), exits[0].center, &cfg.forces);
            agent.coefficient = coefficients[next];
            agent.spawn_time = world.time;
            spawn_times.push(world.time);
            let i = world.spawn(agent);
            ctx.enter_scope(mix_seed(DECISION_SCOPE, &[i as u64, 0]));
            let d = choose_exit(cfg, &exits, &world, i, ctx)?;
            world.agents[i].goal = exit_goal(&exits[d.chosen]);
            decisions.push(d);
            next += 1;
        }
        let mut changed = false;
        for i in 0..world.agents.len() {
            let since = step - spawn_steps[i];
            if !world.agents[i].is_active() || since == 0 || since % period != 0 {
                continue;
            }
            ctx.enter_scope(mix_seed(DECISION_SCOPE, &[i as u64, (since / period) as u64]));
            let d = choose_exit(cfg, &exits, &world, i, ctx)?;
            let goal = exit_goal(&exits[d.chosen]);
            if world.agents[i].goal != goal {
                world.agents[i].goal = goal;
                changed = true;
            }
            decisions.push(d);
        }
        if changed {
            world.touch();
        }
        world.step(&weights, ctx)?;
        for i in 0..world.agents.len() {
            let p = world.agents[i].position;
            if world.agents[i].is_active() && (p.x < <T as Zero>::zero() || p.y < <T as Zero>::zero() || p.x > cfg.arena || p.y > cfg.arena) {
                world.evacuate(i);
                evacuation_times[i] = Some(world.time - world.agents[i].spawn_time);
                remaining -= 1;
            }
        }
        if next == n && remaining == 0 {
            break;
        }
    }

    let mut histogram = cfg.output_histogram()?;
    for t in &evacuation_times {
        let bin = match t {
            Some(t) => histogram.bin_of(*t),
            None => BINS - 1,
        };
        histogram.weights[bin] += T::one();
    }
    Ok(ExitOutcome { spawn_times, evacuation_times, histogram, decisions, steps: world.steps, diagnostics: world.diagnostics })
}

/// Wasserstein distance between the evacuation-time histogram of one run and
/// `reference`. The value carries no tangent: parameters only act through
/// the coefficient-draw branches.
pub fn run_exit_selection<T: PlainScalar>(
    cfg: &ExitSelectionConfig<T>,
    bins: &Histogram20<Dual<T>>,
    reference: &Histogram20<T>,
    ctx: &mut TraceContext<T>,
    seed: u64,
) -> Result<Dual<T>> {
    let mut inner = || -> Result<Dual<T>> {
        let draws = draw_coefficients(cfg.agents, bins, ctx, seed)?;
        let coefficients: Vec<T> = draws.iter().map(|d| d.coefficient.value()).collect();
        let outcome = simulate_exit_selection(cfg, &coefficients, ctx, seed)?;
        Ok(Dual::constant(wasserstein_1d(&outcome.histogram, reference)?))
    };
    inner().map_err(|e| e.context(format!("exit-selection scenario (seed {seed:#x})")))
}

/// Distribution fitting over the 20 raw input-bin weights.
#[derive(Clone, Debug)]
pub struct ExitSelectionProgram<T: PlainScalar> {
    pub config: ExitSelectionConfig<T>,
    pub reference: Histogram20<T>,
}

impl<T: PlainScalar> Program<T> for ExitSelectionProgram<T> {
    fn dim(&self) -> usize {
        BINS
    }

    fn run(&self, params: &[Dual<T>], seed: u64, ctx: &mut TraceContext<T>) -> Result<Dual<T>> {
        let bins = Histogram20::from_parameters(params)?;
        run_exit_selection(&self.config, &bins, &self.reference, ctx, seed)
    }
}

/// Plain coefficients drawn from plain bin weights.
pub fn plain_coefficients<T: PlainScalar>(cfg: &ExitSelectionConfig<T>, weights: &[T], seed: u64) -> Result<Vec<T>> {
    let bins = Histogram20::<T>::from_parameters(weights)?;
    Ok(draw_coefficients(cfg.agents, &bins, &mut TraceContext::plain(), seed)?.into_iter().map(|d| d.coefficient).collect())
}
