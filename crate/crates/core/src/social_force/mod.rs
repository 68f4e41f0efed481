//! Social Force pedestrian dynamics in 2-D with wall segments.
//!
//! Per agent `i`:
//!
//! ```text
//! m_i dv_i/dt = w1 m_i (v0 e0 - v_i) / tau_i + w2 sum_j f_ij + w3 sum_W f_iW
//! ```
//!
//! with exponential, anisotropic agent repulsion and isotropic wall
//! repulsion, integrated by kick-drift-kick Leapfrog. Everything is generic
//! over [`AdScalar`](crate::AdScalar), so the same code runs on plain floats
//! or on dual numbers carrying tangents with respect to the force weights.

mod forces;
mod vec2;
mod world;

pub use forces::{
    closest_point, interaction_force, internal_force, obstacle_force, AgentState, ForceParams, ForceWeights,
    SimDiagnostics, Wall, SITE_PAIR_CAP, SITE_WALL_CAP, SITE_WALL_END, SITE_WALL_START,
};
pub use vec2::{lift, Vec2};
pub use world::{World, DEFAULT_DT, TRAJECTORY_HEADER};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::{Dual, TraceContext, TraceMode};
    use proptest::prelude::*;

    fn params() -> ForceParams<f64> {
        ForceParams::default()
    }

    fn agent(x: f64, y: f64, goal: (f64, f64)) -> AgentState<f64> {
        AgentState::at_rest(Vec2::new(x, y), Vec2::new(goal.0, goal.1), &params())
    }

    fn norm(v: Vec2<f64>) -> f64 {
        v.x.hypot(v.y)
    }

    #[test]
    fn internal_force_at_rest() {
        let a = agent(0.0, 0.0, (10.0, 0.0));
        let f = internal_force(&a);
        assert!((f.x - 214.4).abs() < 1e-9 && f.y == 0.0, "{f:?}");
    }

    #[test]
    fn internal_force_vanishes_at_desired_velocity() {
        let mut a = agent(0.0, 0.0, (10.0, 0.0));
        a.velocity = Vec2::new(1.34, 0.0);
        assert_eq!(internal_force(&a), Vec2::new(0.0, 0.0));
    }

    #[test]
    fn internal_force_on_goal_brakes() {
        let mut a = agent(3.0, 3.0, (3.0, 3.0));
        a.velocity = Vec2::new(0.5, -0.25);
        let f = internal_force(&a);
        assert_eq!(f, Vec2::new(-80.0 / 0.5 * 0.5, 80.0 / 0.5 * 0.25));
    }

    fn pair_force(a: &AgentState<f64>, b: &AgentState<f64>, p: &ForceParams<f64>) -> Vec2<f64> {
        let mut ctx = TraceContext::plain();
        let mut diag = SimDiagnostics::default();
        interaction_force(a, b, p, &mut ctx, &mut diag).unwrap()
    }

    #[test]
    fn interaction_decays_with_distance() {
        let p = params();
        let a = agent(0.0, 0.0, (0.0, 10.0));
        let near = pair_force(&a, &agent(1.0, 0.0, (0.0, 0.0)), &p);
        let far = pair_force(&a, &agent(10.5, 0.0, (0.0, 0.0)), &p);
        // closed form: exp(-(10.5 - 1) / B)
        let ratio = norm(far) / norm(near);
        assert!((ratio - (-9.5_f64 / 0.2).exp()).abs() < 1e-12 * ratio.max(1e-300) + 1e-25);
        assert!(ratio < 1e-3);
    }

    #[test]
    fn interaction_is_weaker_from_behind() {
        let p = params();
        let mut a = agent(0.0, 0.0, (10.0, 0.0));
        a.velocity = Vec2::new(1.0, 0.0);
        let front = pair_force(&a, &agent(1.0, 0.0, (0.0, 0.0)), &p);
        let behind = pair_force(&a, &agent(-1.0, 0.0, (0.0, 0.0)), &p);
        assert!(norm(behind) < norm(front));
        assert!((norm(behind) / norm(front) - p.lambda_fov).abs() < 1e-12);
    }

    #[test]
    fn isotropic_interaction_is_antisymmetric() {
        let p = ForceParams { lambda_fov: 1.0, ..params() };
        let a = agent(0.3, -0.2, (5.0, 5.0));
        let b = agent(1.1, 0.4, (-5.0, 0.0));
        let fab = pair_force(&a, &b, &p);
        let fba = pair_force(&b, &a, &p);
        assert!((fab.x + fba.x).abs() < 1e-12 && (fab.y + fba.y).abs() < 1e-12);
    }

    #[test]
    fn coincident_agents_are_capped() {
        let p = params();
        let a = agent(1.0, 1.0, (0.0, 0.0));
        let mut ctx = TraceContext::plain();
        let mut diag = SimDiagnostics::default();
        let f = interaction_force(&a, &a.clone(), &p, &mut ctx, &mut diag).unwrap();
        assert_eq!(norm(f), p.max_pair_force);
        assert_eq!(diag.coincident_contacts, 1);
    }

    fn wall_force(a: &AgentState<f64>, w: &Wall<f64>) -> Vec2<f64> {
        let mut ctx = TraceContext::plain();
        let mut diag = SimDiagnostics::default();
        obstacle_force(a, w, &params(), &mut ctx, &mut diag).unwrap()
    }

    #[test]
    fn wall_force_decays() {
        let w = Wall::new((0.0, -5.0), (0.0, 5.0)).unwrap();
        let near = wall_force(&agent(0.5, 0.0, (9.0, 0.0)), &w);
        let far = wall_force(&agent(10.0, 0.0, (9.0, 0.0)), &w);
        assert!(norm(far) / norm(near) < 1e-3);
        assert!(near.x > 0.0 && near.y == 0.0);
    }

    #[test]
    fn wall_force_on_bisector_is_perpendicular() {
        let w = Wall::new((-2.0, 0.0), (2.0, 0.0)).unwrap();
        let f = wall_force(&agent(0.0, 0.6, (0.0, 9.0)), &w);
        assert_eq!(f.x, 0.0);
        assert!(f.y > 0.0);
    }

    #[test]
    fn wall_force_beyond_endpoint_points_from_endpoint() {
        let w = Wall::new((0.0, 0.0), (2.0, 0.0)).unwrap();
        let a = agent(2.6, 0.8, (9.0, 9.0));
        let f = wall_force(&a, &w);
        // projection oracle: t = 2.6 / 2 > 1 so the closest point is (2, 0)
        let (dx, dy) = (0.6, 0.8);
        let d = (dx * dx + dy * dy as f64).sqrt();
        assert!((f.x / norm(f) - dx / d).abs() < 1e-12);
        assert!((f.y / norm(f) - dy / d).abs() < 1e-12);
    }

    #[test]
    fn agent_on_wall_is_capped() {
        let w = Wall::new((0.0, 0.0), (4.0, 0.0)).unwrap();
        let f = wall_force(&agent(1.0, 0.0, (9.0, 9.0)), &w);
        assert_eq!(norm(f), params().max_pair_force);
    }

    fn single_agent_world(weights: (f64, f64, f64), v0: Vec2<f64>) -> (World<f64>, ForceWeights<f64>) {
        let mut world = World::new(vec![], params(), 0.1).unwrap();
        let mut a = agent(0.0, 0.0, (1000.0, 0.0));
        a.velocity = v0;
        world.spawn(a);
        (world, ForceWeights::new(weights.0, weights.1, weights.2))
    }

    #[test]
    fn speed_relaxes_exponentially() {
        let (mut world, w) = single_agent_world((1.0, 0.0, 0.0), Vec2::new(0.0, 0.0));
        let mut ctx = TraceContext::plain();
        let tau = params().tau;
        for _ in 0..25 {
            world.step(&w, &mut ctx).unwrap();
        }
        let t = world.time;
        assert!(t >= 5.0 * tau);
        let expected = 1.34 * (1.0 - (-t / tau).exp());
        let speed = norm(world.agents[0].velocity);
        assert!((speed - expected).abs() / expected < 0.02, "{speed} vs {expected}");
    }

    #[test]
    fn zero_weights_drift_uniformly() {
        let (mut world, w) = single_agent_world((0.0, 0.0, 0.0), Vec2::new(0.7, -0.3));
        let mut ctx = TraceContext::plain();
        for _ in 0..10 {
            world.step(&w, &mut ctx).unwrap();
        }
        let p = world.agents[0].position;
        assert!((p.x - 0.7).abs() < 1e-12 && (p.y + 0.3).abs() < 1e-12);
        assert_eq!(world.agents[0].velocity, Vec2::new(0.7, -0.3));
    }

    #[test]
    fn speed_never_exceeds_clamp() {
        let mut world = World::new(vec![Wall::new((2.0, -3.0), (2.0, 3.0)).unwrap()], params(), 0.1).unwrap();
        world.spawn(agent(1.7, 0.0, (10.0, 0.0)));
        world.spawn(agent(1.5, 0.1, (10.0, 0.0)));
        let w = ForceWeights::new(3.0, 5.5, 5.5);
        let mut ctx = TraceContext::plain();
        for _ in 0..50 {
            world.step(&w, &mut ctx).unwrap();
            for a in &world.agents {
                assert!(norm(a.velocity) <= 1.3 * a.desired_speed * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn full_dgo_registers_force_branches() {
        let p = ForceParams { full_dgo: true, ..params() };
        let mut world = World::<Dual<f64>>::new(vec![Wall::new((0.0, -3.0), (0.0, 3.0)).unwrap()], p, 0.1).unwrap();
        world.spawn(AgentState::at_rest(Vec2::constant(1.0, 0.0), Vec2::new(5.0, 0.0), &world.params));
        let w = ForceWeights::new(Dual::variable(1.0, 0, 3).unwrap(), Dual::variable(1.0, 1, 3).unwrap(), Dual::variable(1.0, 2, 3).unwrap());
        let mut dgo = TraceContext::new(TraceMode::Dgo, 0, 3);
        world.step(&w, &mut dgo).unwrap();
        assert!(!dgo.observations().is_empty());

        let mut world2 = World::<Dual<f64>>::new(vec![Wall::new((0.0, -3.0), (0.0, 3.0)).unwrap()], ForceParams { full_dgo: true, ..params() }, 0.1).unwrap();
        world2.spawn(AgentState::at_rest(Vec2::constant(1.0, 0.0), Vec2::new(5.0, 0.0), &world2.params));
        let mut hybrid = TraceContext::new(TraceMode::Hybrid, 0, 3);
        world2.step(&w, &mut hybrid).unwrap();
        assert!(hybrid.observations().is_empty());
        assert_eq!(world.agents[0].position.values(), world2.agents[0].position.values());
    }

    #[test]
    fn grid_and_all_pairs_agree_closely() {
        let mut rng = crate::seed::rng_from(5);
        use rand::Rng;
        let build = |threshold: usize| {
            let p = ForceParams { grid_threshold: threshold, ..params() };
            let mut world = World::<f64>::new(vec![], p, 0.1).unwrap();
            let mut r = rng.clone();
            for _ in 0..40 {
                let a = agent(r.random_range(0.0..12.0), r.random_range(0.0..12.0), (6.0, 6.0));
                world.spawn(a);
            }
            world
        };
        let mut a = build(1000);
        let mut b = build(10);
        let _ = rng.random::<u8>();
        let w = ForceWeights::new(1.0, 1.0, 1.0);
        let mut ctx = TraceContext::plain();
        for _ in 0..20 {
            a.step(&w, &mut ctx).unwrap();
            b.step(&w, &mut ctx).unwrap();
        }
        for (x, y) in a.agents.iter().zip(&b.agents) {
            let (p, q) = (x.position.values(), y.position.values());
            assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9);
        }
    }

    fn head_on(weights: [f64; 3]) -> World<f64> {
        let walls = vec![Wall::new((-6.0, -2.0), (6.0, -2.0)).unwrap(), Wall::new((-6.0, 2.0), (6.0, 2.0)).unwrap()];
        let mut world = World::new(walls, params(), 0.1).unwrap();
        world.spawn(agent(-3.0, 0.05, (6.0, 0.05)));
        world.spawn(agent(3.0, -0.05, (-6.0, -0.05)));
        let w = ForceWeights::from_slice(&weights).unwrap();
        let mut ctx = TraceContext::plain();
        for _ in 0..40 {
            world.step(&w, &mut ctx).unwrap();
        }
        world
    }

    #[test]
    fn head_on_encounter_is_point_symmetric() {
        let world = head_on([1.0, 1.0, 1.0]);
        let (a, b) = (world.agents[0].position, world.agents[1].position);
        assert!((a.x + b.x).abs() < 1e-9 && (a.y + b.y).abs() < 1e-9, "{a:?} {b:?}");
        let (u, v) = (world.agents[0].velocity, world.agents[1].velocity);
        assert!((u.x + v.x).abs() < 1e-9 && (u.y + v.y).abs() < 1e-9);
    }

    #[test]
    fn stepping_is_deterministic() {
        let a = head_on([1.2, 0.8, 1.1]);
        let b = head_on([1.2, 0.8, 1.1]);
        for (x, y) in a.agents.iter().zip(&b.agents) {
            assert_eq!(x.position, y.position);
            assert_eq!(x.velocity, y.velocity);
        }
    }

    fn dual_endpoint(theta: [f64; 3]) -> Dual<f64> {
        let walls = vec![Wall::new((-6.0, -1.0), (6.0, -1.0)).unwrap()];
        let mut world = World::<Dual<f64>>::new(walls, params(), 0.1).unwrap();
        let p = world.params.clone();
        world.spawn(AgentState::at_rest(Vec2::constant(-1.0, -0.4), Vec2::new(6.0, 0.0), &p));
        world.spawn(AgentState::at_rest(Vec2::constant(1.0, 0.0), Vec2::new(-6.0, 0.0), &p));
        let seeded = crate::ad::seed_parameters(&theta).unwrap();
        let w = ForceWeights::from_slice(&seeded).unwrap();
        let mut ctx = TraceContext::plain();
        for _ in 0..10 {
            world.step(&w, &mut ctx).unwrap();
        }
        world.agents[0].position.x + world.agents[1].position.y
    }

    #[test]
    fn tangents_match_finite_differences() {
        let theta = [1.0, 1.5, 2.0];
        let out = dual_endpoint(theta);
        let h = 1e-5;
        for k in 0..3 {
            let mut up = theta;
            let mut down = theta;
            up[k] += h;
            down[k] -= h;
            let fd = (dual_endpoint(up).value() - dual_endpoint(down).value()) / (2.0 * h);
            let ad = out.partial(k);
            assert!((ad - fd).abs() <= 1e-3 * fd.abs().max(1e-6), "param {k}: ad {ad} fd {fd}");
        }
    }

    proptest! {
        #[test]
        fn repulsion_points_away(
            ax in -5.0..5.0f64, ay in -5.0..5.0f64,
            bx in -5.0..5.0f64, by in -5.0..5.0f64,
            vx in -1.5..1.5f64, vy in -1.5..1.5f64,
        ) {
            let p = params();
            let mut a = agent(ax, ay, (0.0, 9.0));
            a.velocity = Vec2::new(vx, vy);
            let b = agent(bx, by, (0.0, -9.0));
            let f = pair_force(&a, &b, &p);
            let away = (ax - bx) * f.x + (ay - by) * f.y;
            prop_assert!(away >= 0.0);

            let w = Wall::new((bx, by), (bx + 1.0, by - 2.0)).unwrap();
            let fw = wall_force(&a, &w);
            let mut ctx = TraceContext::plain();
            let c = closest_point(a.position, &w, false, &mut ctx).unwrap();
            prop_assert!((ax - c.x) * fw.x + (ay - c.y) * fw.y >= 0.0);
        }
    }
}
