use std::collections::HashMap;
use std::io::Write;

use num_traits::{Float, One, ToPrimitive, Zero};

use super::forces::{interaction_force, internal_force, obstacle_force, AgentState, ForceParams, ForceWeights, SimDiagnostics, Wall};
use super::vec2::Vec2;
use crate::ad::TraceContext;
use crate::error::{Error, Result};
use crate::scalar::{AdScalar, Real};

pub const DEFAULT_DT: f64 = 0.1;

/// Simulation state: agents, walls and the clock. Evacuated agents stay in
/// `agents` (for bookkeeping) but no longer move or exert forces.
#[derive(Clone, Debug)]
pub struct World<S: AdScalar> {
    pub agents: Vec<AgentState<S>>,
    pub walls: Vec<Wall<S::Base>>,
    pub time: S::Base,
    pub dt: S::Base,
    pub steps: u64,
    pub params: ForceParams<S::Base>,
    pub diagnostics: SimDiagnostics,
    accel: Vec<Vec2<S>>,
    accel_valid: bool,
}

impl<S: AdScalar> World<S> {
    pub fn new(walls: Vec<Wall<S::Base>>, params: ForceParams<S::Base>, dt: S::Base) -> Result<Self> {
        params.validate()?;
        if !(dt > S::Base::zero()) {
            return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
        }
        Ok(World {
            agents: Vec::new(),
            walls,
            time: S::Base::zero(),
            dt,
            steps: 0,
            params,
            diagnostics: SimDiagnostics::default(),
            accel: Vec::new(),
            accel_valid: false,
        })
    }

    pub fn spawn(&mut self, agent: AgentState<S>) -> usize {
        self.agents.push(agent);
        self.accel_valid = false;
        self.agents.len() - 1
    }

    /// Marks agent `i` as evacuated at the current time.
    pub fn evacuate(&mut self, i: usize) {
        if self.agents[i].evacuated_at.is_none() {
            self.agents[i].evacuated_at = Some(self.time);
            self.accel_valid = false;
        }
    }

    /// Invalidates cached accelerations, e.g. after goals were changed.
    pub fn touch(&mut self) {
        self.accel_valid = false;
    }

    pub fn active_count(&self) -> usize {
        self.agents.iter().filter(|a| a.is_active()).count()
    }

    /// Neighbor lists per active agent, ascending by index.
    fn neighbors(&self, active: &[usize]) -> Vec<Vec<usize>> {
        if active.len() <= self.params.grid_threshold {
            return active.iter().map(|&i| active.iter().copied().filter(|&j| j != i).collect()).collect();
        }
        let cell = self.params.grid_cell;
        let cutoff = self.params.grid_cutoff;
        let key = |p: Vec2<S::Base>| -> (i64, i64) {
            (Float::floor(p.x / cell).to_i64().unwrap_or(0), Float::floor(p.y / cell).to_i64().unwrap_or(0))
        };
        let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for &i in active {
            grid.entry(key(self.agents[i].position.values())).or_default().push(i);
        }
        let reach = Float::ceil(cutoff / cell).to_i64().unwrap_or(1);
        let cutoff_sq = cutoff * cutoff;
        active
            .iter()
            .map(|&i| {
                let p = self.agents[i].position.values();
                let (cx, cy) = key(p);
                let mut out = Vec::new();
                for gx in cx - reach..=cx + reach {
                    for gy in cy - reach..=cy + reach {
                        if let Some(members) = grid.get(&(gx, gy)) {
                            for &j in members {
                                if j == i {
                                    continue;
                                }
                                let q = self.agents[j].position.values();
                                let (dx, dy) = (p.x - q.x, p.y - q.y);
                                if dx * dx + dy * dy <= cutoff_sq {
                                    out.push(j);
                                }
                            }
                        }
                    }
                }
                out.sort_unstable();
                out
            })
            .collect()
    }

    /// Accelerations of every agent (zero for inactive ones).
    pub fn accelerations(&mut self, weights: &ForceWeights<S>, ctx: &mut TraceContext<S::Base>) -> Result<Vec<Vec2<S>>> {
        let active: Vec<usize> = (0..self.agents.len()).filter(|&i| self.agents[i].is_active()).collect();
        let neighbors = self.neighbors(&active);
        let mut acc = vec![Vec2::zero(); self.agents.len()];
        let mut diag = self.diagnostics;
        for (slot, &i) in active.iter().enumerate() {
            let a = &self.agents[i];
            let mut pair = Vec2::zero();
            for &j in &neighbors[slot] {
                pair += interaction_force(a, &self.agents[j], &self.params, ctx, &mut diag)?;
            }
            let mut wall = Vec2::zero();
            for w in &self.walls {
                wall += obstacle_force(a, w, &self.params, ctx, &mut diag)?;
            }
            let total = internal_force(a) * weights.internal + pair * weights.interaction + wall * weights.obstacle;
            acc[i] = total.scale_by(S::Base::one() / a.mass);
        }
        self.diagnostics = diag;
        Ok(acc)
    }

    /// One kick-drift-kick Leapfrog step with force re-evaluation after the
    /// drift, followed by the speed clamp.
    pub fn step(&mut self, weights: &ForceWeights<S>, ctx: &mut TraceContext<S::Base>) -> Result<()> {
        if !self.accel_valid || self.accel.len() != self.agents.len() {
            self.accel = self.accelerations(weights, ctx)?;
        }
        let half = self.dt * S::Base::lit(0.5);
        let dt = self.dt;
        for (a, acc) in self.agents.iter_mut().zip(&self.accel) {
            if !a.is_active() {
                continue;
            }
            a.velocity = a.velocity + acc.scale_by(half);
            a.position = a.position + a.velocity.scale_by(dt);
        }
        let next = self.accelerations(weights, ctx)?;
        for (i, (a, acc)) in self.agents.iter_mut().zip(&next).enumerate() {
            if !a.is_active() {
                continue;
            }
            a.velocity = a.velocity + acc.scale_by(half);
            let limit = self.params.speed_factor * a.desired_speed;
            let speed = a.velocity.norm();
            if speed.value() > limit {
                a.velocity = a.velocity.scale(S::constant(limit) / speed);
                self.diagnostics.speed_clamps += 1;
            }
            if !a.position.is_finite() || !a.velocity.is_finite() {
                return Err(Error::Simulation { agent: i, step: self.steps, reason: "non-finite state" });
            }
        }
        self.accel = next;
        self.accel_valid = true;
        self.time += self.dt;
        self.steps += 1;
        Ok(())
    }

    /// Appends `(step, agent, x, y, vx, vy)` rows for the active agents.
    pub fn write_trajectory<W: Write>(&self, out: &mut csv::Writer<W>) -> Result<()> {
        for (i, a) in self.agents.iter().enumerate().filter(|(_, a)| a.is_active()) {
            let p = a.position.values();
            let v = a.velocity.values();
            out.write_record([
                self.steps.to_string(),
                i.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                v.x.to_string(),
                v.y.to_string(),
            ])?;
        }
        Ok(())
    }
}

pub const TRAJECTORY_HEADER: [&str; 6] = ["step", "agent", "x", "y", "vx", "vy"];

