use num_traits::{Float, One, Zero};
use serde::{Deserialize, Serialize};

use super::vec2::{lift, Vec2};
use crate::ad::{BranchSite, TraceContext};
use crate::error::{Error, Result};
use crate::scalar::{AdScalar, Real};

/// Sites registered inside the force code when `full_dgo` is on. They are
/// passthrough sites, so hybrid estimation ignores them.
pub const SITE_PAIR_CAP: BranchSite = BranchSite::passthrough(0x5346_0001);
pub const SITE_WALL_CAP: BranchSite = BranchSite::passthrough(0x5346_0002);
pub const SITE_WALL_START: BranchSite = BranchSite::passthrough(0x5346_0003);
pub const SITE_WALL_END: BranchSite = BranchSite::passthrough(0x5346_0004);

const CONTACT_EPS: f64 = 1e-9;

/// Force-model constants. Interaction and obstacle strengths are accelerations
/// (m/s^2) and are multiplied by the agent mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct ForceParams<T> {
    pub a_agent: T,
    pub b_agent: T,
    pub a_wall: T,
    pub b_wall: T,
    pub lambda_fov: T,
    pub radius: T,
    pub desired_speed: T,
    pub tau: T,
    pub mass: T,
    /// Cap on each pairwise or wall term, N.
    pub max_pair_force: T,
    /// Speeds are clamped to `speed_factor * desired_speed`.
    pub speed_factor: T,
    /// Above this many active agents, neighbors come from a uniform grid.
    pub grid_threshold: usize,
    pub grid_cell: T,
    pub grid_cutoff: T,
    /// Register the cap and segment-clamp comparisons as branch sites.
    pub full_dgo: bool,
}

impl<T: Real> Default for ForceParams<T> {
    fn default() -> Self {
        ForceParams {
            a_agent: T::lit(3.0),
            b_agent: T::lit(0.2),
            a_wall: T::lit(10.0),
            b_wall: T::lit(0.2),
            lambda_fov: T::lit(0.35),
            radius: T::lit(0.2),
            desired_speed: T::lit(1.34),
            tau: T::lit(0.5),
            mass: T::lit(80.0),
            max_pair_force: T::lit(500.0),
            speed_factor: T::lit(1.3),
            grid_threshold: 100,
            grid_cell: T::lit(2.0),
            grid_cutoff: T::lit(10.0),
            full_dgo: false,
        }
    }
}

impl<T: Real> ForceParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("b_agent", self.b_agent),
            ("b_wall", self.b_wall),
            ("desired_speed", self.desired_speed),
            ("tau", self.tau),
            ("mass", self.mass),
            ("max_pair_force", self.max_pair_force),
            ("speed_factor", self.speed_factor),
            ("grid_cell", self.grid_cell),
            ("grid_cutoff", self.grid_cutoff),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("force parameter {name} must be positive, got {v}")));
            }
        }
        if !(self.lambda_fov >= T::zero() && self.lambda_fov <= T::one()) {
            return Err(Error::InvalidConfig(format!("lambda_fov must lie in [0, 1], got {}", self.lambda_fov)));
        }
        Ok(())
    }
}

/// Multipliers of the internal, interaction and obstacle terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForceWeights<S> {
    pub internal: S,
    pub interaction: S,
    pub obstacle: S,
}

impl<S: AdScalar> ForceWeights<S> {
    pub fn new(internal: S, interaction: S, obstacle: S) -> Self {
        ForceWeights { internal, interaction, obstacle }
    }

    pub fn from_slice(w: &[S]) -> Result<Self> {
        match w {
            [a, b, c] => Ok(ForceWeights::new(*a, *b, *c)),
            _ => Err(Error::LengthMismatch { expected: 3, got: w.len() }),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.internal.is_finite() && self.interaction.is_finite() && self.obstacle.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentState<S: AdScalar> {
    pub position: Vec2<S>,
    pub velocity: Vec2<S>,
    pub desired_speed: S::Base,
    pub goal: Vec2<S::Base>,
    pub mass: S::Base,
    pub tau: S::Base,
    pub radius: S::Base,
    /// Exit-selection weight between distance (1) and congestion (0).
    pub coefficient: S::Base,
    pub spawn_time: S::Base,
    pub evacuated_at: Option<S::Base>,
}

impl<S: AdScalar> AgentState<S> {
    /// Agent at rest with the model defaults.
    pub fn at_rest(position: Vec2<S>, goal: Vec2<S::Base>, params: &ForceParams<S::Base>) -> Self {
        AgentState {
            position,
            velocity: Vec2::zero(),
            desired_speed: params.desired_speed,
            goal,
            mass: params.mass,
            tau: params.tau,
            radius: params.radius,
            coefficient: S::Base::one(),
            spawn_time: S::Base::zero(),
            evacuated_at: None,
        }
    }

    pub fn is_active(&self) -> bool {
        self.evacuated_at.is_none()
    }

    /// Unit vector towards the goal; zero when standing on it.
    pub fn desired_direction(&self) -> Vec2<S> {
        let to_goal = lift::<S>(self.goal) - self.position;
        let d = to_goal.norm();
        if d.value() > S::Base::lit(CONTACT_EPS) {
            to_goal.div(d)
        } else {
            Vec2::zero()
        }
    }
}


/// Wall segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wall<T> {
    pub start: Vec2<T>,
    pub end: Vec2<T>,
}

impl<T: Real> Wall<T> {
    pub fn new(start: (T, T), end: (T, T)) -> Result<Self> {
        if start == end {
            return Err(Error::InvalidConfig("wall endpoints must be distinct".into()));
        }
        Ok(Wall { start: Vec2 { x: start.0, y: start.1 }, end: Vec2 { x: end.0, y: end.1 } })
    }
}

/// Counters for events that alter the force law.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimDiagnostics {
    pub capped_pair_forces: u64,
    pub capped_wall_forces: u64,
    pub coincident_contacts: u64,
    pub speed_clamps: u64,
}

#[inline]
fn branch<S: AdScalar>(ctx: &mut TraceContext<S::Base>, traced: bool, site: BranchSite, c: S) -> Result<bool> {
    if traced {
        ctx.traced_less_than(site, c)
    } else {
        Ok(c.value() < S::Base::zero())
    }
}

/// Goal-seeking term `m (v0 e0 - v) / tau`, before weighting.
pub fn internal_force<S: AdScalar>(a: &AgentState<S>) -> Vec2<S> {
    let e0 = a.desired_direction();
    (e0.scale_by(a.desired_speed) - a.velocity).scale_by(a.mass / a.tau)
}

/// Repulsion magnitude `m A exp((r - d) / B)` capped at `max_pair_force`.
fn capped_magnitude<S: AdScalar>(
    raw: S,
    params: &ForceParams<S::Base>,
    site: BranchSite,
    ctx: &mut TraceContext<S::Base>,
    counter: &mut u64,
) -> Result<S> {
    let cap = params.max_pair_force;
    let capped = branch(ctx, params.full_dgo, site, S::constant(cap) - raw)?;
    if capped {
        *counter += 1;
        Ok(S::constant(cap))
    } else {
        Ok(raw)
    }
}

/// Repulsion that agent `b` exerts on agent `a`, before weighting.
pub fn interaction_force<S: AdScalar>(
    a: &AgentState<S>,
    b: &AgentState<S>,
    params: &ForceParams<S::Base>,
    ctx: &mut TraceContext<S::Base>,
    diag: &mut SimDiagnostics,
) -> Result<Vec2<S>> {
    let diff = a.position - b.position;
    let d = diff.norm();
    if d.value() < S::Base::lit(CONTACT_EPS) {
        diag.coincident_contacts += 1;
        diag.capped_pair_forces += 1;
        return Ok(Vec2::constant(params.max_pair_force, S::Base::zero()));
    }
    let n = diff.div(d);
    let heading = {
        let speed = a.velocity.norm();
        if speed.value() > S::Base::lit(CONTACT_EPS) {
            Some(a.velocity.div(speed))
        } else {
            let e0 = a.desired_direction();
            (e0.x.value() != S::Base::zero() || e0.y.value() != S::Base::zero()).then_some(e0)
        }
    };
    let lambda = params.lambda_fov;
    let anisotropy = match heading {
        Some(e) => {
            let cos_phi = -e.dot(n);
            (cos_phi + S::Base::one()) * ((S::Base::one() - lambda) * S::Base::lit(0.5)) + lambda
        }
        None => S::constant(S::Base::one()),
    };
    let reach = a.radius + b.radius;
    let raw = ((-d + reach) / params.b_agent).exp() * (a.mass * params.a_agent) * anisotropy;
    let mag = capped_magnitude(raw, params, SITE_PAIR_CAP, ctx, &mut diag.capped_pair_forces)?;
    Ok(n * mag)
}

/// Closest point of the wall to `p` and the raw projection parameter.
pub fn closest_point<S: AdScalar>(
    p: Vec2<S>,
    wall: &Wall<S::Base>,
    traced: bool,
    ctx: &mut TraceContext<S::Base>,
) -> Result<Vec2<S>> {
    let start = lift::<S>(wall.start);
    let seg = lift::<S>(wall.end) - start;
    let len_sq = seg.dot(seg).value();
    let t = (p - start).dot(seg) / len_sq;
    if branch(ctx, traced, SITE_WALL_START, t)? {
        return Ok(start);
    }
    if !branch(ctx, traced, SITE_WALL_END, t - S::Base::one())? {
        return Ok(lift(wall.end));
    }
    Ok(start + seg * t)
}

/// Repulsion from the closest point of a wall segment, before weighting.
pub fn obstacle_force<S: AdScalar>(
    a: &AgentState<S>,
    wall: &Wall<S::Base>,
    params: &ForceParams<S::Base>,
    ctx: &mut TraceContext<S::Base>,
    diag: &mut SimDiagnostics,
) -> Result<Vec2<S>> {
    let closest = closest_point(a.position, wall, params.full_dgo, ctx)?;
    let diff = a.position - closest;
    let d = diff.norm();
    if d.value() < S::Base::lit(CONTACT_EPS) {
        diag.coincident_contacts += 1;
        diag.capped_wall_forces += 1;
        // left-hand normal of the segment
        let seg = wall.end;
        let (dx, dy) = (seg.x - wall.start.x, seg.y - wall.start.y);
        let len = Float::sqrt(dx * dx + dy * dy);
        return Ok(Vec2::constant(-dy / len * params.max_pair_force, dx / len * params.max_pair_force));
    }
    let n = diff.div(d);
    let raw = ((-d + a.radius) / params.b_wall).exp() * (a.mass * params.a_wall);
    let mag = capped_magnitude(raw, params, SITE_WALL_CAP, ctx, &mut diag.capped_wall_forces)?;
    Ok(n * mag)
}
