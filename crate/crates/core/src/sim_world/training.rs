use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::planner::Passability;
use super::{carve_partial_map, generate_trajectory, Policy, Trajectory, WorldConfig};
use crate::dirichlet::{CountMatrix, MapOptions, TrainingDataset};
use crate::error::{Error, Result};
use crate::partial_map::{expected_string, is_inside, quantize_pose, raycast, OccupancyGrid, Pose};
use crate::view_model::{
    alphabet_build, extract_scan_string, learn_observation_model, ExtractionParams, ObservationModel, ScanString, ViewAlphabet, ViewId,
};

/// Mixes a base seed with two indices into an independent stream seed.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A uniformly random pose on a cell that satisfies the planning clearance.
pub fn random_start<R: Rng + ?Sized>(map: &OccupancyGrid, cfg: &WorldConfig, rng: &mut R) -> Result<Pose> {
    let pass = Passability::new(map, cfg.clearance);
    let open: Vec<(usize, usize)> = (0..map.height())
        .flat_map(|j| (0..map.width()).map(move |i| (i, j)))
        .filter(|&(i, j)| pass.is_open(i as i64, j as i64))
        .collect();
    if open.is_empty() {
        return Err(Error::InvalidInput("map has no cell with enough clearance".into()));
    }
    let (i, j) = open[rng.random_range(0..open.len())];
    let (x, y) = map.cell_center(i, j);
    Ok(Pose::new(x, y, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)))
}

/// Records whose true poses are at least `spacing` apart along the path,
/// starting with the first.
pub fn subsample_by_distance(trajectory: &Trajectory, spacing: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut travelled = 0.0;
    for (k, r) in trajectory.records.iter().enumerate() {
        if k > 0 {
            travelled += trajectory.records[k - 1].pose.distance(&r.pose);
        }
        if k == 0 || travelled >= spacing {
            out.push(k);
            travelled = 0.0;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub trajectories_per_map: usize,
    pub trajectory_length: f64,
    pub view_distance: f64,
    pub max_views: usize,
    pub extraction: ExtractionParams,
    pub world: WorldConfig,
    /// Length of the exploration prefix carved into a partial map, against
    /// which another run's observations are paired with map-predicted views
    /// when learning the observation model. `None` pairs exact-pose views only.
    pub partial_map_length: Option<f64>,
    /// View-table resolution used for the map-predicted views; should match
    /// the filter's weighting settings.
    pub heading_bins: usize,
    pub max_unknown_fraction: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            trajectories_per_map: 8,
            trajectory_length: 200.0,
            view_distance: 2.0,
            max_views: 40,
            extraction: ExtractionParams::default(),
            world: WorldConfig::default(),
            partial_map_length: Some(50.0),
            heading_bins: 36,
            max_unknown_fraction: 0.1,
        }
    }
}

/// Views and transitions gathered from simulated runs through several maps.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub alphabet: ViewAlphabet,
    /// Per-map transition counts between consecutive true views.
    pub dataset: TrainingDataset,
    /// Relative frequency of each true view over all maps.
    pub marginals: Vec<f64>,
    /// Per map, `(true view, observed view)` pairs, from exact poses and from
    /// views predicted by partial maps.
    pub labeled: Vec<Vec<(ViewId, ViewId)>>,
    /// Per map, per trajectory, the true view sequence.
    pub sequences: Vec<Vec<Vec<ViewId>>>,
}

impl TrainingData {
    /// Column-normalized transition frequencies of one map: the multinomials
    /// that generated its counts. Unvisited columns are uniform.
    pub fn empirical_transitions(&self, env: usize) -> Vec<f64> {
        let counts = &self.dataset.environments()[env];
        let nu = counts.nu();
        let mut out = vec![0.0; nu * nu];
        for j in 0..nu {
            let total = counts.col_sum(j);
            for i in 0..nu {
                out[i * nu + j] = if total == 0 {
                    1.0 / nu as f64
                } else {
                    counts.get(i, j) as f64 / total as f64
                };
            }
        }
        out
    }

    /// Observation model learned from the labeled views.
    pub fn observation_model(&self, opts: MapOptions) -> Result<ObservationModel> {
        let labeled: Vec<Vec<(ViewId, ViewId)>> = self.labeled.iter().filter(|l| !l.is_empty()).cloned().collect();
        Ok(learn_observation_model(self.alphabet.len(), &labeled, opts)?.0)
    }
}

struct RunViews {
    trajectory: Trajectory,
    /// Records at which views were read.
    at: Vec<usize>,
    truth: Vec<ScanString>,
    observed: Vec<ScanString>,
}

fn run_views(map: &OccupancyGrid, cfg: &TrainingConfig, map_index: usize, run: usize) -> Result<RunViews> {
    let seed = derive_seed(cfg.world.seed, map_index as u64, run as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = random_start(map, &cfg.world, &mut rng)?;
    let world = WorldConfig { seed, ..cfg.world };
    let trajectory = generate_trajectory(map, start, &Policy::RandomExplore, cfg.trajectory_length, &world)?;
    let geometry = world.geometry();
    let bearings = geometry.bearings();
    let mut truth = Vec::new();
    let mut observed = Vec::new();
    let at = subsample_by_distance(&trajectory, cfg.view_distance);
    for &k in &at {
        let r = &trajectory.records[k];
        let clean = raycast(map, &r.pose, &bearings, geometry.max_range)?;
        truth.push(extract_scan_string(&clean, &cfg.extraction)?);
        observed.push(extract_scan_string(&r.scan, &cfg.extraction)?);
    }
    Ok(RunViews {
        trajectory,
        at,
        truth,
        observed,
    })
}

/// `(map-predicted, observed)` string pairs: the first `length` meters of
/// `explorer` are carved into a partial map, and `visitor`'s views inside it
/// are compared with what the map predicts at the quantized pose.
fn map_view_pairs(
    map: &OccupancyGrid,
    cfg: &TrainingConfig,
    length: f64,
    explorer: &RunViews,
    visitor: &RunViews,
) -> Result<Vec<(ScanString, ScanString)>> {
    let mut travelled = 0.0;
    let mut prefix = Vec::new();
    for (k, r) in explorer.trajectory.records.iter().enumerate() {
        if k > 0 {
            travelled += explorer.trajectory.records[k - 1].pose.distance(&r.pose);
        }
        if travelled > length {
            break;
        }
        prefix.push(r.clone());
    }
    let partial = carve_partial_map(
        map,
        &Trajectory {
            records: prefix,
            truncated: false,
        },
        &cfg.world,
    );
    let geometry = cfg.world.geometry();
    let mut out = Vec::new();
    for (&k, obs) in visitor.at.iter().zip(&visitor.observed) {
        let pose = visitor.trajectory.records[k].pose;
        if !is_inside(&partial, &pose) {
            continue;
        }
        let Some(q) = quantize_pose(&partial, &pose, cfg.heading_bins) else {
            continue;
        };
        if let Some(s) = expected_string(&partial, &q, &cfg.extraction, &geometry, cfg.max_unknown_fraction)? {
            out.push((s, obs.clone()));
        }
    }
    Ok(out)
}

/// Simulates `trajectories_per_map` random explorations per map, reads a view
/// every `view_distance` meters, and counts transitions between consecutive
/// true views. The alphabet is built from the true views of all maps.
pub fn make_training_data(maps: &[OccupancyGrid], cfg: &TrainingConfig) -> Result<TrainingData> {
    if maps.is_empty() {
        return Err(Error::InvalidInput("training needs at least one map".into()));
    }
    if cfg.trajectories_per_map == 0 {
        return Err(Error::InvalidInput("training needs at least one trajectory per map".into()));
    }
    cfg.extraction.validate()?;
    if cfg.heading_bins == 0 || !(0.0..=1.0).contains(&cfg.max_unknown_fraction) {
        return Err(Error::InvalidInput("bad view-table settings".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..maps.len())
        .flat_map(|m| (0..cfg.trajectories_per_map).map(move |t| (m, t)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(m, t)| run_views(&maps[m], cfg, m, t))
        .collect::<Result<Vec<_>>>()?;

    let map_pairs = match cfg.partial_map_length {
        Some(length) => jobs
            .par_iter()
            .enumerate()
            .map(|(k, &(m, t))| {
                let next = k - t + (t + 1) % cfg.trajectories_per_map;
                map_view_pairs(&maps[m], cfg, length, &runs[k], &runs[next])
            })
            .collect::<Result<Vec<_>>>()?,
        None => vec![Vec::new(); jobs.len()],
    };

    let alphabet = alphabet_build(runs.iter().flat_map(|r| r.truth.iter()), cfg.max_views)?;
    let nu = alphabet.len();
    let mut counts = vec![CountMatrix::zeros(nu); maps.len()];
    let mut labeled = vec![Vec::new(); maps.len()];
    let mut sequences = vec![Vec::new(); maps.len()];
    let mut frequency = vec![0u64; nu];
    for (&(m, _), pairs) in jobs.iter().zip(&map_pairs) {
        labeled[m].extend(pairs.iter().map(|(v, z)| (alphabet.view_of(v), alphabet.view_of(z))));
    }
    for (&(m, _), run) in jobs.iter().zip(&runs) {
        let seq: Vec<ViewId> = run.truth.iter().map(|s| alphabet.view_of(s)).collect();
        for w in seq.windows(2) {
            counts[m].increment(w[0], w[1]);
        }
        for (v, s) in seq.iter().zip(&run.observed) {
            frequency[v.index()] += 1;
            labeled[m].push((*v, alphabet.view_of(s)));
        }
        sequences[m].push(seq);
    }
    let total: u64 = frequency.iter().sum();
    let marginals = frequency.iter().map(|&f| f as f64 / total as f64).collect();
    Ok(TrainingData {
        alphabet,
        dataset: TrainingDataset::new(counts)?,
        marginals,
        labeled,
        sequences,
    })
}
