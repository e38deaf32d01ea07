use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hemap_cli::chains::{
    check_study, graph_world_experiment, stationary_distribution, variance_experiment, variance_fit,
    variance_fit_table, variance_rows, variance_table,
};
use hemap_cli::config::ExperimentConfig;
use hemap_cli::gridworld::{gridworld_experiment, GridworldConfig, TargetPreset};
use hemap_cli::inspection::{belief_table, inspection_study};
use hemap_cli::table::{emit_plotdata, num, Table};
use hemap_core::graph::{load_graph_with_target, ChainDocument};
use hemap_core::metrics::{metric_report, WeightSequence};
use hemap_core::simulation::{simplex_trace, variance_study};
use hemap_core::synthesis::{minimize_lambda_max, ProgramKind, SpectralProgram};
use hemap_core::{Distribution, RegionGraph, StochasticMatrix};
use hemap_inspect::{InspectionWorld, PlannerConfig, PlannerKind};

#[derive(Parser)]
#[command(name = "hemap", version, about = "Ergodic Markov chain synthesis and inspection experiments")]
struct Cli {
    /// Base seed for every random draw
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for CSV and JSON files [default: out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON settings file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a spectral program for a chain on a region graph
    #[command(after_help = "Writes chain.json ({n, matrix}, matrix[j][i] = P(i -> j)) and synthesis.csv:\n  \
        kind,n,objective,iterations,certified_gap,converged")]
    Synthesize(SynthesizeArgs),
    /// Spectral ergodicity measures of a chain
    #[command(after_help = "Writes metrics.csv:\n  weights,ned,upper_bound,sle,slem,slem_exact,dev_1..dev_K")]
    Metrics(MetricsArgs),
    /// Variance of the empirical time average of a chain
    #[command(after_help = "Writes simulate.csv:\n  k,expected_dev,mle_var,clt_var\n\
        and trace.csv (expected distribution and running time average):\n  step,p_0..p_{n-1},avg_0..avg_{n-1}")]
    Simulate(SimulateArgs),
    /// REMC against the fastest mixing chain on random targets
    #[command(after_help = "Writes graph_world_trials.csv:\n  \
        trial,step,ok,remc_deviation,fmmc_deviation,difference,error\n\
        and graph_world_summary.csv:\n  \
        step,trials,remc_median,fmmc_median,difference_q1,difference_median,difference_q3")]
    GraphExperiment(GraphExperimentArgs),
    /// Variance study of the REMC chain on a graph
    #[command(after_help = "Writes variance.csv:\n  k,expected_dev,mle_var,clt_var\n\
        and variance_fit.csv (window k = 100..steps):\n  from,to,min_ratio,max_ratio,slope")]
    Variance(VarianceArgs),
    /// Time-share visitation study on a grid world
    #[command(after_help = "Writes gridworld_trace.csv:\n  trial,time,deviation,f_0..f_{n-1},f_obstacle\n\
        gridworld_summary.csv:\n  time,deviation_q1,deviation_median,deviation_q3\n\
        and gridworld_waypoints.csv:\n  region,target,waypoint_share")]
    Gridworld(GridworldArgs),
    /// Inspection study comparing planners on seeded object layouts
    #[command(after_help = "Writes inspect_trials.csv:\n  \
        planner,seed,trial,fods,detected,missed,false_positives,detection_rate,navigation_failures,distance,visits_0..\n\
        inspect_summary.csv:\n  \
        planner,trials,mean_detection_rate,sd_detection_rate,detected,missed,false_positives,hemap_minus_planner,t_statistic,p_value\n\
        and beliefs_<planner>.csv (end of trial 0):\n  index,x,y,p_h0,entropy")]
    Inspect(InspectArgs),
    /// Scenario file utilities
    #[command(subcommand)]
    World(WorldCommand),
}

#[derive(Subcommand)]
enum WorldCommand {
    /// Load and check a scenario; prints one CSV summary row
    #[command(after_help = "Prints:\n  name,width,height,regions,edges,free_cells,reference_points,lattice_cells")]
    Validate { path: PathBuf },
}

#[derive(Args)]
struct SynthesizeArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    /// `uniform`, or a path to a JSON array of weights [default: graph target, else uniform]
    #[arg(long)]
    target: Option<String>,
    /// remc | fmmc | reversible | symmetric [default: remc]
    #[arg(long)]
    kind: Option<String>,
    /// Stopping tolerance [default: 1e-6]
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    chain: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    /// uniform | factorial | horizon:K [default: factorial]
    #[arg(long)]
    weights: Option<String>,
    /// Number of per-step deviations [default: 10]
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    chain: Option<PathBuf>,
    /// [default: stationary distribution of the chain]
    #[arg(long)]
    target: Option<String>,
    /// [default: 0]
    #[arg(long)]
    start: Option<usize>,
    /// [default: 1000]
    #[arg(long)]
    steps: Option<usize>,
    /// [default: 1000]
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct GraphExperimentArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    /// [default: 1000]
    #[arg(long)]
    trials: Option<usize>,
    /// [default: 10]
    #[arg(long)]
    steps: Option<usize>,
    /// [default: 1e-6]
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct VarianceArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    /// [default: graph target, else uniform]
    #[arg(long)]
    target: Option<String>,
    /// [default: 0]
    #[arg(long)]
    start: Option<usize>,
    /// [default: 1000]
    #[arg(long)]
    steps: Option<usize>,
    /// [default: 1000]
    #[arg(long)]
    trials: Option<usize>,
    /// [default: 1e-6]
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct GridworldArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// uniform | area | custom:w1,w2,... [default: uniform]
    #[arg(long)]
    preset: Option<String>,
    /// Simulated seconds [default: 1200]
    #[arg(long)]
    duration: Option<f64>,
    /// Length units per second [default: 0.2]
    #[arg(long)]
    speed: Option<f64>,
    /// Seconds between samples [default: 10]
    #[arg(long)]
    sample_every: Option<f64>,
    /// [default: 30]
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// hemap | random | greedy; repeat or comma-separate [default: all three]
    #[arg(long, value_delimiter = ',')]
    planner: Vec<String>,
    /// [default: 15]
    #[arg(long)]
    trials: Option<usize>,
    /// Region decisions per trial [default: 35]
    #[arg(long)]
    steps: Option<usize>,
    /// Waypoints per region visit [default: 2]
    #[arg(long)]
    waypoints: Option<usize>,
    /// Waypoint candidates [default: 1000]
    #[arg(long)]
    samples: Option<usize>,
    /// Decisions between chain re-solves [default: 5]
    #[arg(long)]
    horizon: Option<usize>,
    /// Target smoothing [default: 0.001]
    #[arg(long)]
    delta: Option<f64>,
}

struct Ctx {
    seed: u64,
    out: PathBuf,
    cfg: ExperimentConfig,
}

impl Ctx {
    fn write(&self, name: &str, table: &Table) -> Result<()> {
        emit_plotdata(table, self.out.join(name))
    }
}

fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    flag.or(file).with_context(|| format!("--{name} is required"))
}

fn load_graph(path: &Path) -> Result<(RegionGraph, Option<Distribution>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading graph {}", path.display()))?;
    load_graph_with_target(&text).with_context(|| format!("loading graph {}", path.display()))
}

fn load_chain(path: &Path) -> Result<StochasticMatrix> {
    let text = fs::read_to_string(path).with_context(|| format!("reading chain {}", path.display()))?;
    let doc: ChainDocument =
        serde_json::from_str(&text).with_context(|| format!("parsing chain {}", path.display()))?;
    Ok(doc.into_chain()?)
}

/// `uniform` or a JSON array of weights.
fn parse_target(spec: &str, n: usize) -> Result<Distribution> {
    if spec == "uniform" {
        return Ok(Distribution::uniform(n));
    }
    let text = fs::read_to_string(spec).with_context(|| format!("reading target {spec}"))?;
    let w: Vec<f64> = serde_json::from_str(&text).with_context(|| format!("parsing target {spec}"))?;
    if w.len() != n {
        bail!("target has {} entries for {n} regions", w.len());
    }
    Ok(Distribution::normalized(&w)?)
}

fn resolve_target(
    flag: Option<String>,
    file: Option<String>,
    fallback: Option<Distribution>,
    n: usize,
) -> Result<Distribution> {
    match flag.or(file) {
        Some(spec) => parse_target(&spec, n),
        None => Ok(fallback.unwrap_or_else(|| Distribution::uniform(n))),
    }
}

fn synthesize(ctx: &Ctx, a: SynthesizeArgs) -> Result<()> {
    let c = &ctx.cfg;
    let (graph, gt) = load_graph(&required(a.graph, c.graph.clone(), "graph")?)?;
    let target = resolve_target(a.target, c.target.clone(), gt, graph.n())?;
    let kind: ProgramKind =
        a.kind.or(c.kind.clone()).unwrap_or_else(|| "remc".into()).parse().map_err(anyhow::Error::msg)?;
    let tol = a.tol.or(c.tol).unwrap_or(1e-6);
    let res = minimize_lambda_max(&SpectralProgram::new(kind, graph.clone(), target).with_tolerance(tol))?;
    fs::create_dir_all(&ctx.out)?;
    let doc = serde_json::to_string_pretty(&ChainDocument::from_chain(&res.chain))?;
    fs::write(ctx.out.join("chain.json"), doc + "\n")?;
    let mut t = Table::new(["kind", "n", "objective", "iterations", "certified_gap", "converged"]);
    t.push(vec![
        kind.to_string(),
        graph.n().to_string(),
        num(res.objective),
        res.iterations.to_string(),
        res.certified_gap.map(num).unwrap_or_default(),
        res.converged.to_string(),
    ]);
    ctx.write("synthesis.csv", &t)?;
    print!("{}", t.to_csv()?);
    Ok(())
}

fn metrics(ctx: &Ctx, a: MetricsArgs) -> Result<()> {
    let c = &ctx.cfg;
    let chain = load_chain(&required(a.chain, c.chain.clone(), "chain")?)?;
    let (graph, gt) = match a.graph.or(c.graph.clone()) {
        Some(p) => {
            let (g, t) = load_graph(&p)?;
            (Some(g), t)
        }
        None => (None, None),
    };
    if let Some(g) = &graph {
        if let Some((i, j)) = chain.support_violation(g) {
            bail!("chain moves {i} -> {j}, which the graph does not allow");
        }
    }
    let target = resolve_target(a.target, c.target.clone(), gt, chain.n())?;
    let weights: WeightSequence =
        a.weights.or(c.weights.clone()).unwrap_or_else(|| "factorial".into()).parse().map_err(anyhow::Error::msg)?;
    let steps = a.steps.or(c.steps).unwrap_or(10);
    let r = metric_report(&chain, &target, weights, steps)?;
    let mut header: Vec<String> =
        ["weights", "ned", "upper_bound", "sle", "slem", "slem_exact"].map(String::from).to_vec();
    header.extend((1..=steps).map(|k| format!("dev_{k}")));
    let mut t = Table::new(header);
    let mut row =
        vec![weights.to_string(), num(r.ned), num(r.upper_bound), num(r.sle), num(r.slem), r.slem_exact.to_string()];
    row.extend(r.per_step_deviation.iter().map(|&d| num(d)));
    t.push(row);
    ctx.write("metrics.csv", &t)?;
    print!("{}", t.to_csv()?);
    Ok(())
}

fn simulate(ctx: &Ctx, a: SimulateArgs) -> Result<()> {
    let c = &ctx.cfg;
    let chain = load_chain(&required(a.chain, c.chain.clone(), "chain")?)?;
    let n = chain.n();
    let target = match a.target.or(c.target.clone()) {
        Some(spec) => parse_target(&spec, n)?,
        None => stationary_distribution(&chain)?,
    };
    let start = a.start.or(c.start).unwrap_or(0);
    let steps = a.steps.or(c.steps).unwrap_or(1000);
    let trials = a.trials.or(c.trials).unwrap_or(1000);
    check_study(n, start, steps, trials)?;
    let study = variance_study(&chain, &target, start, steps, trials, ctx.seed);
    let rows = variance_rows(&study);
    ctx.write("simulate.csv", &variance_table(&rows))?;
    let mut header = vec!["step".to_string()];
    header.extend((0..n).map(|i| format!("p_{i}")));
    header.extend((0..n).map(|i| format!("avg_{i}")));
    let mut trace = Table::new(header);
    for r in simplex_trace(&chain, &Distribution::indicator(n, start), steps) {
        let mut row = vec![r.step.to_string()];
        row.extend(r.distribution.iter().map(|&x| num(x)));
        row.extend(r.time_average.iter().map(|&x| num(x)));
        trace.push(row);
    }
    ctx.write("trace.csv", &trace)?;
    let last = rows.last().expect("at least one step");
    println!(
        "k={} expected_dev={} mle_var={} clt_var={}",
        last.k, last.expected_deviation, last.mle_variance, last.clt_variance
    );
    Ok(())
}

fn graph_experiment(ctx: &Ctx, a: GraphExperimentArgs) -> Result<()> {
    let c = &ctx.cfg;
    let (graph, _) = load_graph(&required(a.graph, c.graph.clone(), "graph")?)?;
    let trials = a.trials.or(c.trials).unwrap_or(1000);
    let steps = a.steps.or(c.steps).unwrap_or(10);
    let tol = a.tol.or(c.tol).unwrap_or(1e-6);
    let d = graph_world_experiment(&graph, trials, steps, ctx.seed, tol)?;
    ctx.write("graph_world_trials.csv", &d.to_table())?;
    let summary = d.summary_table();
    ctx.write("graph_world_summary.csv", &summary)?;
    print!("{}", summary.to_csv()?);
    Ok(())
}

fn variance(ctx: &Ctx, a: VarianceArgs) -> Result<()> {
    let c = &ctx.cfg;
    let (graph, gt) = load_graph(&required(a.graph, c.graph.clone(), "graph")?)?;
    let target = resolve_target(a.target, c.target.clone(), gt, graph.n())?;
    let start = a.start.or(c.start).unwrap_or(0);
    let steps = a.steps.or(c.steps).unwrap_or(1000);
    let trials = a.trials.or(c.trials).unwrap_or(1000);
    let tol = a.tol.or(c.tol).unwrap_or(1e-6);
    let (_, study) = variance_experiment(&graph, &target, start, steps, trials, ctx.seed, tol)?;
    let rows = variance_rows(&study);
    ctx.write("variance.csv", &variance_table(&rows))?;
    let fit = variance_fit(&rows, 100.min(steps.saturating_sub(1)).max(1), steps)?;
    let t = variance_fit_table(&fit);
    ctx.write("variance_fit.csv", &t)?;
    print!("{}", t.to_csv()?);
    Ok(())
}

fn gridworld(ctx: &Ctx, a: GridworldArgs) -> Result<()> {
    let c = &ctx.cfg;
    let world = InspectionWorld::load(required(a.scenario, c.scenario.clone(), "scenario")?)?;
    let preset: TargetPreset =
        a.preset.or(c.preset.clone()).unwrap_or_else(|| "uniform".into()).parse().map_err(anyhow::Error::msg)?;
    let d = GridworldConfig::default();
    let cfg = GridworldConfig {
        duration: a.duration.or(c.duration).unwrap_or(d.duration),
        speed: a.speed.or(c.speed).unwrap_or(d.speed),
        sample_every: a.sample_every.or(c.sample_every).unwrap_or(d.sample_every),
        trials: a.trials.or(c.trials).unwrap_or(d.trials),
        tolerance: c.tol.unwrap_or(d.tolerance),
    };
    let data = gridworld_experiment(&world, &preset, &cfg, ctx.seed)?;
    ctx.write("gridworld_trace.csv", &data.trace_table())?;
    ctx.write("gridworld_summary.csv", &data.summary_table())?;
    ctx.write("gridworld_waypoints.csv", &data.waypoint_table())?;
    let s = data.summary();
    if let (Some(first), Some(last)) = (s.first(), s.last()) {
        println!(
            "median deviation {} at t={} -> {} at t={}; obstacle share {}",
            first.median,
            first.time,
            last.median,
            last.time,
            data.max_obstacle_frequency()
        );
    }
    Ok(())
}

fn inspect(ctx: &Ctx, a: InspectArgs) -> Result<()> {
    let c = &ctx.cfg;
    let world = InspectionWorld::load(required(a.scenario, c.scenario.clone(), "scenario")?)?;
    let names = if a.planner.is_empty() { c.planners.clone().unwrap_or_default() } else { a.planner };
    let planners: Vec<PlannerKind> = if names.is_empty() {
        PlannerKind::ALL.to_vec()
    } else {
        names.iter().map(|s| s.parse().map_err(anyhow::Error::msg)).collect::<Result<_>>()?
    };
    let d = PlannerConfig::default();
    let base = PlannerConfig {
        total_steps: a.steps.or(c.steps).unwrap_or(d.total_steps),
        n_waypoints: a.waypoints.or(c.waypoints).unwrap_or(d.n_waypoints),
        n_sample: a.samples.or(c.samples).unwrap_or(d.n_sample),
        horizon: a.horizon.or(c.horizon).unwrap_or(d.horizon),
        delta: a.delta.or(c.delta).unwrap_or(d.delta),
        ..d
    };
    let trials = a.trials.or(c.trials).unwrap_or(15);
    let study = inspection_study(&world, &planners, &base, trials, ctx.seed)?;
    ctx.write("inspect_trials.csv", &study.trial_table())?;
    let summary = study.summary_table();
    ctx.write("inspect_summary.csv", &summary)?;
    for (kind, belief) in &study.first_beliefs {
        ctx.write(&format!("beliefs_{kind}.csv"), &belief_table(world.cloud(), belief))?;
    }
    print!("{}", summary.to_csv()?);
    Ok(())
}

fn world_validate(path: &Path) -> Result<()> {
    let w = InspectionWorld::load(path).with_context(|| format!("loading scenario {}", path.display()))?;
    w.validate()?;
    let g = w.grid();
    let mut t =
        Table::new(["name", "width", "height", "regions", "edges", "free_cells", "reference_points", "lattice_cells"]);
    t.push(vec![
        w.name().to_string(),
        g.width().to_string(),
        g.height().to_string(),
        w.n_regions().to_string(),
        w.graph().edges().len().to_string(),
        g.region_areas().iter().sum::<usize>().to_string(),
        w.cloud().len().to_string(),
        w.visibility().cells().len().to_string(),
    ]);
    print!("{}", t.to_csv()?);
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synthesize(_) => "synthesize",
        Command::Metrics(_) => "metrics",
        Command::Simulate(_) => "simulate",
        Command::GraphExperiment(_) => "graph-experiment",
        Command::Variance(_) => "variance",
        Command::Gridworld(_) => "gridworld",
        Command::Inspect(_) => "inspect",
        Command::World(_) => "world validate",
    }
}

fn error_line(command: &str, message: &str) -> String {
    serde_json::json!({ "status": "error", "command": command, "message": message }).to_string()
}

/// Joins an error chain, skipping causes whose text the outer message already carries.
fn chain_message(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let ctx = Ctx {
        seed: cli.seed.or(cfg.seed).unwrap_or(1),
        out: cli.out.clone().or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
        cfg,
    };
    match cli.command {
        Command::Synthesize(a) => synthesize(&ctx, a),
        Command::Metrics(a) => metrics(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::GraphExperiment(a) => graph_experiment(&ctx, a),
        Command::Variance(a) => variance(&ctx, a),
        Command::Gridworld(a) => gridworld(&ctx, a),
        Command::Inspect(a) => inspect(&ctx, a),
        Command::World(WorldCommand::Validate { path }) => world_validate(&path),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_line("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    let name = command_name(&cli.command);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(name, &chain_message(&e)));
            ExitCode::FAILURE
        }
    }
}
