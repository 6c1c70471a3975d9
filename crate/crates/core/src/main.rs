use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use revisit::cli_eval::{
    build_benchmark, evaluate_pair, fixture_maps, outside_model, count_scale, pr_table_text, precision_recall, train_prior,
    BenchmarkConfig, EvalConfig, Manifest, Method, PairInputs, PairResult, PriorModel,
};
use revisit::dirichlet::MapOptions;
use revisit::localization_filter::{run_localization, step_log_text, view_table, FilterConfig};
use revisit::partial_map::{OccupancyGrid, Pose};
use revisit::sim_world::{
    carve_partial_map, derive_seed, generate_trajectory, load_map, random_start, Policy, Trajectory, TrainingConfig, WorldConfig,
};

#[derive(Parser)]
#[command(name = "revisit", version, about = "Partial-map localization with learned structure priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct FilterArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5000)]
    particles: usize,
    /// Travel between view updates in meters.
    #[arg(long, default_value_t = 2.0)]
    view_distance: f64,
}

impl FilterArgs {
    fn config(&self) -> FilterConfig {
        FilterConfig {
            particles: self.particles,
            seed: self.seed,
            view_update_distance: self.view_distance,
            ..FilterConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a robot run through a map.
    Simulate {
        #[arg(long)]
        map: PathBuf,
        /// `random`, `wall-follow` or `waypoints:x,y;x,y;...`
        #[arg(long, default_value = "random")]
        policy: String,
        #[arg(long, default_value_t = 80.0)]
        length: f64,
        /// Start pose `x,y,theta`; drawn at random when omitted.
        #[arg(long)]
        start: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn a structure prior and observation model from training maps.
    TrainPrior {
        #[arg(long, num_args = 1.., required = true)]
        maps: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Travel between consecutive views in meters.
        #[arg(long, default_value_t = 2.0)]
        view_distance: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Localize a trajectory against a partial map and write the step log.
    Localize {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, default_value = "hierarchical_adaptive")]
        method: Method,
        /// Free area of the full environment, for `scaled_counts`.
        #[arg(long)]
        environment_area: Option<f64>,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the pairs of a manifest and write the precision-recall table.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated methods; the default set when omitted.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        /// Comma-separated thresholds in (0, 1).
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Carve the part of a map seen along a trajectory.
    Carve {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the bundled benchmark (priors, partial maps, runs, manifest).
    Bench {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_map(path: &Path) -> Result<OccupancyGrid> {
    load_map(&read(path)?).with_context(|| format!("parsing map {}", path.display()))
}

fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let (t, _) = Trajectory::from_text(&read(path)?).with_context(|| format!("parsing trajectory {}", path.display()))?;
    Ok(t)
}

fn read_prior(path: &Path) -> Result<PriorModel> {
    PriorModel::load(path).with_context(|| format!("loading prior {}", path.display()))
}

fn numbers(text: &str, sep: char) -> Result<Vec<f64>> {
    text.split(sep)
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad number {s:?}")))
        .collect()
}

fn parse_policy(text: &str) -> Result<Policy> {
    match text.split_once(':') {
        None if text == "random" => Ok(Policy::RandomExplore),
        None if text == "wall-follow" => Ok(Policy::WallFollow),
        Some(("waypoints", list)) => {
            let points = list
                .split(';')
                .map(|p| match numbers(p, ',')?.as_slice() {
                    [x, y] => Ok((*x, *y)),
                    _ => bail!("waypoint {p:?} is not x,y"),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Policy::Waypoints(points))
        }
        _ => bail!("unknown policy {text:?}"),
    }
}

fn simulate(map: &Path, policy: &str, length: f64, start: Option<&str>, seed: u64, out: &Path) -> Result<()> {
    let map = read_map(map)?;
    let policy = parse_policy(policy)?;
    let world = WorldConfig { seed, ..WorldConfig::default() };
    let start = match start {
        Some(s) => match numbers(s, ',')?.as_slice() {
            [x, y, t] => Pose::new(*x, *y, *t),
            _ => bail!("start {s:?} is not x,y,theta"),
        },
        None => random_start(&map, &world, &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 1)))?,
    };
    let trajectory = generate_trajectory(&map, start, &policy, length, &world)?;
    write(out, &trajectory.to_text(&world.geometry()))
}

fn train(maps: &[PathBuf], seed: u64, view_distance: f64, out: &Path) -> Result<()> {
    let named = maps
        .iter()
        .map(|p| {
            let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            Ok((name, read_map(p)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let defaults = TrainingConfig::default();
    let cfg = TrainingConfig {
        view_distance,
        world: WorldConfig { seed, ..defaults.world },
        ..defaults
    };
    let prior = train_prior(&named, &cfg, MapOptions::default())?;
    write(out, &prior.to_json()?)
}

fn localize(
    map: &Path,
    prior: &Path,
    trajectory: &Path,
    method: Method,
    area: Option<f64>,
    filter: &FilterArgs,
    out: &Path,
) -> Result<()> {
    let map = read_map(map)?;
    let prior = read_prior(prior)?;
    let trajectory = read_trajectory(trajectory)?;
    let outside = outside_model(method, &prior, count_scale(&map, area))?;
    let log = run_localization(&map, outside, &prior.view_model()?, trajectory.filter_inputs(), &filter.config())?;
    write(out, &step_log_text(&log))
}

fn evaluate(manifest: &Path, methods: Option<Vec<Method>>, thresholds: Option<Vec<f64>>, filter: &FilterArgs, out: &Path) -> Result<()> {
    let manifest = Manifest::load(manifest)?;
    let mut eval = EvalConfig::default();
    if let Some(m) = methods {
        eval.methods = m;
    }
    if let Some(t) = thresholds {
        eval.thresholds = t;
    }
    eval.validate()?;
    let filter = filter.config();
    let pairs = manifest
        .pairs
        .iter()
        .map(|p| Ok((read_map(&p.partial_map)?, read_trajectory(&p.trajectory)?, read_prior(&p.prior)?)))
        .collect::<Result<Vec<_>>>()?;
    // one lazily filled view table per distinct (partial map, prior)
    let mut first: Vec<usize> = Vec::new();
    let mut table_of = Vec::new();
    for (p, entry) in manifest.pairs.iter().enumerate() {
        let same = |&q: &usize| manifest.pairs[q].partial_map == entry.partial_map && manifest.pairs[q].prior == entry.prior;
        table_of.push(first.iter().position(same).unwrap_or_else(|| {
            first.push(p);
            first.len() - 1
        }));
    }
    let tables = first
        .iter()
        .map(|&p| {
            let (map, _, prior) = &pairs[p];
            Ok(view_table(map, &prior.view_model()?, &filter.weighting)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, Method)> = (0..pairs.len())
        .flat_map(|p| eval.methods.iter().map(move |&m| (p, m)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(p, method)| {
            let (map, trajectory, prior) = &pairs[p];
            let entry = &manifest.pairs[p];
            let inputs = PairInputs {
                partial: map,
                trajectory,
                offset: entry.offset_pose(),
                environment_area: entry.environment_area,
                views: Some(&tables[table_of[p]]),
            };
            let cfg = FilterConfig {
                seed: derive_seed(filter.seed, 0, p as u64),
                ..filter
            };
            let steps = evaluate_pair(&inputs, method, prior, &eval, &cfg)
                .with_context(|| format!("evaluating {} on {}", method, entry.partial_map.display()))?;
            Ok(PairResult {
                environment: entry.environment.clone(),
                method,
                steps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write(out, &pr_table_text(&precision_recall(&results, &eval)))
}

fn carve(map: &Path, trajectory: &Path, out: &Path) -> Result<()> {
    let map = read_map(map)?;
    let trajectory = read_trajectory(trajectory)?;
    write(out, &carve_partial_map(&map, &trajectory, &WorldConfig::default()).save())
}

fn bench(seed: u64, out: &Path) -> Result<()> {
    let cfg = BenchmarkConfig {
        seed,
        ..BenchmarkConfig::default()
    };
    let bench = build_benchmark(&fixture_maps(), &cfg)?;
    bench.write(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            map,
            policy,
            length,
            start,
            seed,
            out,
        } => simulate(&map, &policy, length, start.as_deref(), seed, &out),
        Command::TrainPrior {
            maps,
            seed,
            view_distance,
            out,
        } => train(&maps, seed, view_distance, &out),
        Command::Localize {
            map,
            prior,
            trajectory,
            method,
            environment_area,
            filter,
            out,
        } => localize(&map, &prior, &trajectory, method, environment_area, &filter, &out),
        Command::Evaluate {
            manifest,
            methods,
            thresholds,
            filter,
            out,
        } => evaluate(&manifest, methods, thresholds, &filter, &out),
        Command::Carve { map, trajectory, out } => carve(&map, &trajectory, &out),
        Command::Bench { seed, out } => bench(seed, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
