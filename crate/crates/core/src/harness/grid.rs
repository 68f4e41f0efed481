use super::config::{GaGrid, GdGrid, MutationKind, PsoGrid, SweepSection};
use super::seeds::{stream, streams};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, EstimatorKind};
use crate::optimizers::{latin_hypercube, GaConfig, GdConfig, Method, Mutation, Neighborhood, PsoConfig};

#[derive(Clone, Debug, PartialEq)]
pub enum MethodConfig {
    Gd(GdConfig<f64>),
    Pso(PsoConfig<f64>),
    Ga(GaConfig<f64>),
}

impl MethodConfig {
    pub fn method(&self) -> Method {
        match self {
            MethodConfig::Gd(_) => Method::Gd,
            MethodConfig::Pso(_) => Method::Pso,
            MethodConfig::Ga(_) => Method::Ga,
        }
    }

    /// `key=value` pairs joined by `;`.
    pub fn label(&self) -> String {
        match self {
            MethodConfig::Gd(c) => format!(
                "lr={};estimator={};samples={};sigma={};micro={}",
                c.learning_rate, c.estimator.kind, c.estimator.samples, c.estimator.sigma, c.estimator.microreplications
            ),
            MethodConfig::Pso(c) => format!(
                "particles={};c1={};c2={};w={};neighborhood={};micro={}",
                c.particles,
                c.c1,
                c.c2,
                c.w,
                match c.neighborhood {
                    Neighborhood::Ring(k) => k.to_string(),
                    Neighborhood::All => "all".into(),
                },
                c.microreplications
            ),
            MethodConfig::Ga(c) => format!(
                "population={};elitism={};mutation={};crossover={};micro={}",
                c.population,
                c.elitism,
                match c.mutation {
                    Mutation::Replace => "replace".to_string(),
                    Mutation::Additive { sd } => format!("additive({sd})"),
                },
                c.crossover_rate,
                c.microreplications
            ),
        }
    }
}

/// One hyperparameter configuration of the sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct GridEntry {
    /// `{method}-{index:03}`, stable for a given config file.
    pub id: String,
    pub config: MethodConfig,
}

fn gd_grid(g: &GdGrid, micro: usize) -> Vec<MethodConfig> {
    let mut out = Vec::new();
    for &lr in &g.learning_rates {
        for &kind in &g.estimators {
            for &samples in &g.samples {
                for &sigma in &g.sigmas {
                    if kind == EstimatorKind::Pgo && sigma == 0.0 {
                        continue;
                    }
                    let estimator = EstimatorConfig::new(kind, samples, sigma, 0).with_microreplications(micro);
                    out.push(MethodConfig::Gd(GdConfig { learning_rate: lr, estimator }));
                }
            }
        }
    }
    out
}

fn pso_grid(g: &PsoGrid, micro: usize, master: u64) -> Vec<MethodConfig> {
    let lhc = latin_hypercube(
        g.lhc_points,
        &[(g.c1_range[0], g.c1_range[1]), (g.c2_range[0], g.c2_range[1]), (g.w_range[0], g.w_range[1])],
        stream(master, streams::GRID),
    );
    let mut out = Vec::new();
    for &particles in &g.particles {
        for point in &lhc {
            for &k in &g.neighborhoods {
                let neighborhood = if k == 0 { Neighborhood::All } else { Neighborhood::Ring(k) };
                let mut c = PsoConfig::new(particles, (point[0], point[1], point[2]), neighborhood);
                c.microreplications = micro;
                out.push(MethodConfig::Pso(c));
            }
        }
    }
    out
}

fn ga_grid(g: &GaGrid, micro: usize) -> Vec<MethodConfig> {
    let mut out = Vec::new();
    for &population in &g.population {
        for &elitism in &g.elitism {
            for &m in &g.mutations {
                let mutation = match m {
                    MutationKind::Replace => Mutation::Replace,
                    MutationKind::Additive => Mutation::Additive { sd: g.additive_sd },
                };
                let mut c = GaConfig::new(population, elitism, mutation);
                c.crossover_rate = g.crossover_rate;
                c.microreplications = micro;
                out.push(MethodConfig::Ga(c));
            }
        }
    }
    out
}

/// Expands the sweep section into validated configurations. The PSO
/// Latin hypercube is drawn from the master seed, so ids are reproducible.
pub fn expand_grid(sweep: &SweepSection, master: u64) -> Result<Vec<GridEntry>> {
    let mut out = Vec::new();
    for &method in &sweep.methods {
        let configs = match method {
            Method::Gd => gd_grid(&sweep.gd, sweep.microreplications),
            Method::Pso => pso_grid(&sweep.pso, sweep.microreplications, master),
            Method::Ga => ga_grid(&sweep.ga, sweep.microreplications),
        };
        for (i, config) in configs.into_iter().enumerate() {
            match &config {
                MethodConfig::Gd(c) => c.validate()?,
                MethodConfig::Pso(c) => c.validate()?,
                MethodConfig::Ga(c) => c.validate()?,
            }
            out.push(GridEntry { id: format!("{}-{i:03}", method.name()), config });
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig("the hyperparameter grid is empty".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_sizes() {
        let grid = expand_grid(&SweepSection::default(), 1).unwrap();
        let count = |m: Method| grid.iter().filter(|e| e.config.method() == m).count();
        // DGO: 4 lr x 3 samples x 5 sigma; PGO drops sigma = 0
        assert_eq!(count(Method::Gd), 60 + 48);
        assert_eq!(count(Method::Pso), 2 * 10 * 3);
        assert_eq!(count(Method::Ga), 2 * 2 * 2);
        assert_eq!(grid[0].id, "gd-000");
    }

    #[test]
    fn grid_is_reproducible() {
        let a = expand_grid(&SweepSection::default(), 9).unwrap();
        assert_eq!(a, expand_grid(&SweepSection::default(), 9).unwrap());
        let pso: Vec<_> = a.iter().filter_map(|e| if let MethodConfig::Pso(c) = &e.config { Some(c) } else { None }).collect();
        assert!(pso.iter().all(|c| (0.5..=2.0).contains(&c.c1) && (0.5..=2.0).contains(&c.c2) && (0.4..=0.9).contains(&c.w)));
    }

    #[test]
    fn invalid_entries_are_rejected() {
        let mut s = SweepSection::default();
        s.gd.learning_rates = vec![0.0];
        assert!(expand_grid(&s, 0).is_err());
        let mut s = SweepSection { methods: vec![Method::Gd], ..Default::default() };
        s.gd.estimators = vec![EstimatorKind::Pgo];
        s.gd.sigmas = vec![0.0];
        assert!(matches!(expand_grid(&s, 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn labels_name_every_hyperparameter() {
        let grid = expand_grid(&SweepSection::default(), 1).unwrap();
        assert!(grid[0].config.label().starts_with("lr=0.01;estimator=dgo;samples=1;sigma=0"));
        assert!(grid.iter().any(|e| e.config.label().contains("neighborhood=all")));
        assert!(grid.iter().any(|e| e.config.label().contains("mutation=additive(0.1)")));
    }
}
