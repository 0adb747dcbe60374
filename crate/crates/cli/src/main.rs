//! `bitstar` command-line tool: world generation, single plans, benchmark
//! sweeps and plots.

mod svg;

use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use bitstar::baselines::BaselineConfig;
use bitstar::bench::{
    aggregate, aggregate_rows, event_rows, gen_random_world, read_csv, run_trials, trial_rows,
    trial_seeds, write_csv, AggregateRow, NamedWorld, PlannerKind, PlannerSettings, RandomWorldSpec,
    AGGREGATE_HEADER, EVENT_HEADER, TRIAL_HEADER,
};
use bitstar::bitstar::PlannerConfig;
use bitstar::sampling::derive_seed;
use bitstar::{Budget, World};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "bitstar", version, about = "Sampling-based motion planning: plans, benchmarks and plots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random box worlds as JSON.
    Worldgen(WorldgenArgs),
    /// Run one seeded planner on one world.
    Plan(PlanArgs),
    /// Run seeded trials of several planners and aggregate them.
    Bench(BenchArgs),
    /// Redraw plots from aggregate CSV files.
    Plot(PlotArgs),
}

#[derive(Args)]
struct WorldgenArgs {
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    dim: u16,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    count: u32,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct Common {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget_ms: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// JSON run configuration; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    world: PathBuf,
    #[arg(long)]
    planner: Option<String>,
    /// Also render the plan (two-dimensional worlds only).
    #[arg(long)]
    svg: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchArgs {
    /// World JSON files.
    #[arg(long = "world", required = true, num_args = 1..)]
    worlds: Vec<PathBuf>,
    /// Comma-separated planner names.
    #[arg(long, value_delimiter = ',')]
    planners: Option<Vec<String>>,
    /// Seeds per planner and world.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    period_ms: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct PlotArgs {
    /// Aggregate CSV files written by `bench`.
    #[arg(required = true)]
    aggregates: Vec<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    seed: Option<u64>,
    budget_ms: Option<u64>,
    jobs: Option<usize>,
    trials: Option<usize>,
    period_ms: Option<u64>,
    planner: Option<String>,
    planners: Option<Vec<String>>,
    bitstar: PlannerConfig,
    baseline: BaselineConfig,
}

#[derive(Debug, Serialize)]
struct WorldEntry {
    id: String,
    path: String,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Serialize)]
struct RunManifest {
    command: &'static str,
    config_path: Option<String>,
    planners: Vec<String>,
    settings: PlannerSettings,
    worlds: Vec<WorldEntry>,
    master_seed: u64,
    seeds: Vec<u64>,
    budget_ms: u64,
    period_ms: Option<u64>,
    jobs: Option<usize>,
    output_dir: String,
    outcome: Option<serde_json::Value>,
}

impl RunManifest {
    fn write(&self, dir: &FsPath) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(dir.join("manifest.json"), text).context("writing manifest.json")
    }
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Worldgen(a) => worldgen(a),
        Command::Plan(a) => plan(a),
        Command::Bench(a) => bench(a),
        Command::Plot(a) => plot(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, Failure> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
}

fn parse_planner(name: &str) -> Result<PlannerKind, Failure> {
    name.trim().parse().map_err(|e: bitstar::Error| usage(e.to_string()))
}

fn load_world(path: &FsPath) -> Result<NamedWorld, Failure> {
    let world = World::load(path).with_context(|| format!("loading {}", path.display()))?;
    let id = path.file_stem().map_or_else(|| "world".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(NamedWorld { id, world })
}

fn create_dir(dir: &FsPath) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_rows<R: Serialize>(path: &FsPath, rows: &[R], header: &[&str]) -> anyhow::Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(rows, header, std::io::BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))
}

fn worldgen(a: WorldgenArgs) -> Result<(), Failure> {
    create_dir(&a.out)?;
    for i in 0..a.count {
        let spec = RandomWorldSpec::new(a.dim as usize, derive_seed(a.seed, i as u64));
        let world = gen_random_world(&spec).map_err(|e| usage(e.to_string()))?;
        let path = a.out.join(format!("world_{}d_{}_{i}.json", a.dim, a.seed));
        fs::write(&path, world.to_json()).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn plan(a: PlanArgs) -> Result<(), Failure> {
    let cfg = load_config(a.common.config.as_ref())?;
    let name = a.planner.or(cfg.planner).unwrap_or_else(|| "bitstar".to_string());
    let kind = parse_planner(&name)?;
    let seed = a.common.seed.or(cfg.seed).unwrap_or(0);
    let budget_ms = a.common.budget_ms.or(cfg.budget_ms).unwrap_or(1000);
    let settings = PlannerSettings { bitstar: cfg.bitstar, baseline: cfg.baseline };
    let world = load_world(&a.world)?;
    if a.svg && world.world.dimension() != 2 {
        return Err(usage("--svg needs a two-dimensional world"));
    }
    create_dir(&a.common.out)?;

    let mut manifest = RunManifest {
        command: "plan",
        config_path: a.common.config.as_ref().map(|p| p.display().to_string()),
        planners: vec![kind.name().to_string()],
        settings: settings.clone(),
        worlds: vec![WorldEntry { id: world.id.clone(), path: a.world.display().to_string() }],
        master_seed: seed,
        seeds: vec![seed],
        budget_ms,
        period_ms: None,
        jobs: None,
        output_dir: a.common.out.display().to_string(),
        outcome: None,
    };
    manifest.write(&a.common.out)?;

    let budget = Budget::millis(budget_ms);
    let mut planner = kind.build(&world.world, &settings, seed).map_err(|e| usage(e.to_string()))?;
    let result = planner.solve(&budget, &mut |_| {});

    let record = bitstar::bench::TrialRecord {
        planner: kind.name().to_string(),
        world_id: world.id.clone(),
        seed,
        success: !result.events.is_empty(),
        events: result.events.clone(),
        wall_time: result.elapsed,
        error: None,
    };
    write_rows(&a.common.out.join("events.csv"), &event_rows(&[record]), &EVENT_HEADER)?;
    let path_json = serde_json::to_string_pretty(&result.path).map_err(anyhow::Error::from)? + "\n";
    fs::write(a.common.out.join("path.json"), path_json).context("writing path.json")?;
    if a.svg {
        let picture = svg::plan_svg(&world.world, &planner.tree_segments(), result.path.as_ref());
        fs::write(a.common.out.join("plan.svg"), picture).context("writing plan.svg")?;
    }

    manifest.outcome = Some(match &result.path {
        Some(p) => serde_json::json!({ "solution": "found", "cost": p.cost, "events": result.events.len(), "stats": result.stats }),
        None => serde_json::json!({ "solution": "no solution", "stats": result.stats }),
    });
    manifest.write(&a.common.out)?;
    match &result.path {
        Some(p) => println!("{}: cost {:.6} ({} improvements)", kind, p.cost, result.events.len()),
        None => println!("{kind}: no solution"),
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let cfg = load_config(a.common.config.as_ref())?;
    let names = a.planners.or(cfg.planners).unwrap_or_default();
    let names: Vec<&String> = names.iter().filter(|n| !n.trim().is_empty()).collect();
    if names.is_empty() {
        return Err(usage(format!("no planners given; valid names: {}", PlannerKind::valid_names())));
    }
    let kinds = names.iter().map(|n| parse_planner(n)).collect::<Result<Vec<_>, _>>()?;
    let trials = a.trials.or(cfg.trials).unwrap_or(50);
    let jobs = a.jobs.or(cfg.jobs).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let period_ms = a.period_ms.or(cfg.period_ms).unwrap_or(1);
    if trials == 0 || jobs == 0 || period_ms == 0 {
        return Err(usage("--trials, --jobs and --period-ms must be positive"));
    }
    let master = a.common.seed.or(cfg.seed).unwrap_or(0);
    let budget_ms = a.common.budget_ms.or(cfg.budget_ms).unwrap_or(1000);
    let settings = PlannerSettings { bitstar: cfg.bitstar, baseline: cfg.baseline };
    let worlds = a.worlds.iter().map(|p| load_world(p)).collect::<Result<Vec<_>, _>>()?;
    for (i, w) in worlds.iter().enumerate() {
        if worlds[..i].iter().any(|o| o.id == w.id) {
            return Err(usage(format!("two worlds share the id '{}'", w.id)));
        }
    }
    let seeds = trial_seeds(master, trials);
    create_dir(&a.common.out)?;

    let mut manifest = RunManifest {
        command: "bench",
        config_path: a.common.config.as_ref().map(|p| p.display().to_string()),
        planners: kinds.iter().map(|k| k.name().to_string()).collect(),
        settings: settings.clone(),
        worlds: worlds
            .iter()
            .zip(&a.worlds)
            .map(|(w, p)| WorldEntry { id: w.id.clone(), path: p.display().to_string() })
            .collect(),
        master_seed: master,
        seeds: seeds.clone(),
        budget_ms,
        period_ms: Some(period_ms),
        jobs: Some(jobs),
        output_dir: a.common.out.display().to_string(),
        outcome: None,
    };
    manifest.write(&a.common.out)?;

    let budget = Budget::millis(budget_ms);
    eprintln!("running {} trials on {jobs} thread(s)", kinds.len() * worlds.len() * seeds.len());
    let records = run_trials(&kinds, &worlds, &seeds, &budget, &settings, jobs).map_err(|e| usage(e.to_string()))?;

    write_rows(&a.common.out.join("events.csv"), &event_rows(&records), &EVENT_HEADER)?;
    write_rows(&a.common.out.join("trials.csv"), &trial_rows(&records), &TRIAL_HEADER)?;
    let period = Duration::from_millis(period_ms);
    let horizon = Duration::from_millis(budget_ms);
    for w in &worlds {
        let mine: Vec<_> = records.iter().filter(|r| r.world_id == w.id).cloned().collect();
        let csv_path = a.common.out.join(format!("aggregate_{}.csv", w.id));
        write_rows(&csv_path, &aggregate_rows(&aggregate(&mine, period, horizon)), &AGGREGATE_HEADER)?;
        render_plots(&csv_path, &a.common.out)?;
    }

    let failed = records.iter().filter(|r| !r.success).count();
    let errors: Vec<String> = records
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("{}/{}/{}: {e}", r.planner, r.world_id, r.seed)))
        .collect();
    manifest.outcome = Some(serde_json::json!({
        "trials": records.len(),
        "unsolved": failed,
        "errors": errors,
    }));
    manifest.write(&a.common.out)?;
    eprintln!("{} of {} trials solved", records.len() - failed, records.len());
    if failed == records.len() {
        return Err(Failure::Runtime(anyhow!("every trial failed")));
    }
    Ok(())
}

/// Writes `success_<id>.svg` and `cost_<id>.svg` for one aggregate CSV.
fn render_plots(csv_path: &FsPath, out: &FsPath) -> anyhow::Result<()> {
    let file = fs::File::open(csv_path).with_context(|| format!("opening {}", csv_path.display()))?;
    let rows: Vec<AggregateRow> = read_csv(file).with_context(|| format!("reading {}", csv_path.display()))?;
    let stem = csv_path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let id = stem.strip_prefix("aggregate_").unwrap_or(&stem);
    fs::write(out.join(format!("success_{id}.svg")), svg::success_svg(&rows, &format!("{id}: success")))?;
    fs::write(out.join(format!("cost_{id}.svg")), svg::cost_svg(&rows, &format!("{id}: median cost")))?;
    Ok(())
}

fn plot(a: PlotArgs) -> Result<(), Failure> {
    create_dir(&a.out)?;
    for path in &a.aggregates {
        render_plots(path, &a.out)?;
    }
    Ok(())
}
