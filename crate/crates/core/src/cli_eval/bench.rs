use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{evaluate_pair, train_prior, EvalConfig, Manifest, ManifestPair, Method, PairInputs, PairResult, PriorModel};
use crate::dirichlet::MapOptions;
use crate::error::{Error, Result};
use crate::localization_filter::{view_table, FilterConfig};
use crate::partial_map::{Cell, OccupancyGrid, Pose};
use crate::sim_world::{
    carve_partial_map, derive_seed, generate_trajectory, load_map, random_start, Policy, Trajectory, TrainingConfig, WorldConfig,
};

const FIXTURES: [(&str, &str); 5] = [
    ("loop", include_str!("../../fixtures/maps/loop.map")),
    ("office", include_str!("../../fixtures/maps/office.map")),
    ("corridor", include_str!("../../fixtures/maps/corridor.map")),
    ("halls", include_str!("../../fixtures/maps/halls.map")),
    ("maze", include_str!("../../fixtures/maps/maze.map")),
];

/// The bundled environment maps, by name.
pub fn fixture_maps() -> Vec<(String, OccupancyGrid)> {
    FIXTURES
        .iter()
        .map(|(n, t)| (n.to_string(), load_map(t).expect("bundled map parses")))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    /// Environments that supply partial maps and test trajectories. Each
    /// gets a prior trained on every other bundled environment.
    pub evaluation: Vec<String>,
    pub partial_maps_per_env: usize,
    pub trajectories_per_env: usize,
    /// Length of the exploration run a partial map is carved from.
    pub partial_length: f64,
    pub trajectory_length: f64,
    pub training: TrainingConfig,
    pub map_options: MapOptions,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            evaluation: vec!["loop".into(), "office".into(), "corridor".into()],
            partial_maps_per_env: 5,
            trajectories_per_env: 4,
            partial_length: 50.0,
            trajectory_length: 80.0,
            training: TrainingConfig::default(),
            map_options: MapOptions::default(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchEnvironment {
    pub name: String,
    pub map: OccupancyGrid,
    /// Free area of the complete map in square meters.
    pub area: f64,
    /// Prior trained on the other environments.
    pub prior: PriorModel,
    pub partial_maps: Vec<OccupancyGrid>,
    pub trajectories: Vec<Trajectory>,
}

/// Indices of one map-trajectory pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchPair {
    pub environment: usize,
    pub partial_map: usize,
    pub trajectory: usize,
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub environments: Vec<BenchEnvironment>,
    pub world: WorldConfig,
}

impl Benchmark {
    pub fn pairs(&self) -> Vec<BenchPair> {
        let mut out = Vec::new();
        for (e, env) in self.environments.iter().enumerate() {
            for m in 0..env.partial_maps.len() {
                for t in 0..env.trajectories.len() {
                    out.push(BenchPair {
                        environment: e,
                        partial_map: m,
                        trajectory: t,
                    });
                }
            }
        }
        out
    }

    pub fn partial_map_count(&self) -> usize {
        self.environments.iter().map(|e| e.partial_maps.len()).sum()
    }

    /// Writes maps, trajectories and priors under `dir` and returns the
    /// manifest describing them, with paths relative to `dir`.
    pub fn write(&self, dir: &Path) -> Result<Manifest> {
        std::fs::create_dir_all(dir)?;
        let geometry = self.world.geometry();
        let mut manifest = Manifest::default();
        for env in &self.environments {
            let prior = format!("prior_{}.json", env.name);
            std::fs::write(dir.join(&prior), env.prior.to_json()?)?;
            for (m, map) in env.partial_maps.iter().enumerate() {
                std::fs::write(dir.join(format!("{}_partial{m}.map", env.name)), map.to_string())?;
            }
            for (t, traj) in env.trajectories.iter().enumerate() {
                std::fs::write(dir.join(format!("{}_run{t}.traj", env.name)), traj.to_text(&geometry))?;
            }
            for m in 0..env.partial_maps.len() {
                for t in 0..env.trajectories.len() {
                    manifest.pairs.push(ManifestPair {
                        partial_map: format!("{}_partial{m}.map", env.name).into(),
                        trajectory: format!("{}_run{t}.traj", env.name).into(),
                        environment: env.name.clone(),
                        prior: prior.clone().into(),
                        offset: [0.0; 3],
                        environment_area: Some(env.area),
                    });
                }
            }
        }
        std::fs::write(dir.join("manifest.toml"), manifest.to_toml()?)?;
        Ok(manifest)
    }
}

fn free_area(map: &OccupancyGrid) -> f64 {
    map.count(Cell::Free) as f64 * map.resolution() * map.resolution()
}

fn run_from_random_start(map: &OccupancyGrid, length: f64, world: &WorldConfig, seed: u64) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = random_start(map, world, &mut rng)?;
    let cfg = WorldConfig { seed, ..*world };
    generate_trajectory(map, start, &Policy::RandomExplore, length, &cfg)
}

/// Builds the benchmark from `maps`: leave-one-environment-out priors, partial
/// maps carved from exploration runs, and independent test trajectories.
pub fn build_benchmark(maps: &[(String, OccupancyGrid)], cfg: &BenchmarkConfig) -> Result<Benchmark> {
    if cfg.evaluation.is_empty() || cfg.partial_maps_per_env == 0 || cfg.trajectories_per_env == 0 {
        return Err(Error::InvalidInput("benchmark needs environments, partial maps and trajectories".into()));
    }
    let world = cfg.training.world;
    let mut environments = Vec::new();
    for (e, name) in cfg.evaluation.iter().enumerate() {
        let (_, map) = maps
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown environment {name:?}")))?;
        let others: Vec<(String, OccupancyGrid)> = maps.iter().filter(|(n, _)| n != name).cloned().collect();
        if others.is_empty() {
            return Err(Error::InvalidInput("leave-one-out training needs a second environment".into()));
        }
        let prior = train_prior(&others, &cfg.training, cfg.map_options)?;
        let e = e as u64;
        let partial_maps = (0..cfg.partial_maps_per_env)
            .into_par_iter()
            .map(|k| {
                let run = run_from_random_start(map, cfg.partial_length, &world, derive_seed(cfg.seed, e, 1000 + k as u64))?;
                Ok(carve_partial_map(map, &run, &world))
            })
            .collect::<Result<Vec<_>>>()?;
        let trajectories = (0..cfg.trajectories_per_env)
            .into_par_iter()
            .map(|k| run_from_random_start(map, cfg.trajectory_length, &world, derive_seed(cfg.seed, e, 2000 + k as u64)))
            .collect::<Result<Vec<_>>>()?;
        environments.push(BenchEnvironment {
            name: name.clone(),
            map: map.clone(),
            area: free_area(map),
            prior,
            partial_maps,
            trajectories,
        });
    }
    Ok(Benchmark { environments, world })
}

/// Evaluates every pair with every method. All methods of one pair share the
/// filter seed, so they see identical inputs and motion noise.
pub fn run_benchmark(bench: &Benchmark, eval: &EvalConfig, filter: &FilterConfig) -> Result<Vec<PairResult>> {
    eval.validate()?;
    let pairs = bench.pairs();
    let jobs: Vec<(usize, Method)> = (0..pairs.len())
        .flat_map(|p| eval.methods.iter().map(move |&m| (p, m)))
        .collect();
    let tables = bench
        .environments
        .iter()
        .map(|env| {
            let vm = env.prior.view_model()?;
            env.partial_maps
                .iter()
                .map(|m| view_table(m, &vm, &filter.weighting))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    jobs.par_iter()
        .map(|&(p, method)| {
            let pair = pairs[p];
            let env = &bench.environments[pair.environment];
            let cfg = FilterConfig {
                seed: derive_seed(filter.seed, pair.environment as u64, p as u64),
                ..*filter
            };
            let inputs = PairInputs {
                partial: &env.partial_maps[pair.partial_map],
                trajectory: &env.trajectories[pair.trajectory],
                offset: Pose::default(),
                environment_area: Some(env.area),
                views: Some(&tables[pair.environment][pair.partial_map]),
            };
            let steps = evaluate_pair(&inputs, method, &env.prior, eval, &cfg)?;
            Ok(PairResult {
                environment: env.name.clone(),
                method,
                steps,
            })
        })
        .collect()
}
