use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hmpomdp::bench::{
    gen_obstacles, gen_synthetic, run_experiment, write_experiment, ExperimentPlan, Method, ObstaclesSpec,
    SyntheticSpec,
};
use hmpomdp::clock::{Clock, TickClock, WallClock};
use hmpomdp::eval::{evaluate_instance, robust_evaluate, robust_evaluate_indices, EvalMode, EvalOptions};
use hmpomdp::fsc::FscParams;
use hmpomdp::io::{
    parse_model, read_policy, write_model, write_policy, write_results_file, write_summary, Summary,
};
use hmpomdp::model::{Assignment, ModelFamily};
use hmpomdp::optimize::{
    baseline_enum_gd, baseline_union_gd, random_selection_on, rfpg, OptimizerConfig, RunOutcome,
};
use hmpomdp::sampling::{stratified_sample, stream, Stream};
use hmpomdp::{Error, Result};

#[derive(Parser)]
#[command(
    name = "hmpomdp",
    version,
    about = "Robust finite-state controllers for hidden-model POMDPs"
)]
struct Cli {
    /// Worker threads for instance evaluation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a robust controller with the subgradient loop.
    Solve(SolveArgs),
    /// Robust-evaluate a saved policy.
    Eval(EvalArgs),
    /// Run a baseline optimizer.
    Baseline(BaselineArgs),
    /// Generate benchmark models or run an experiment.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Check a model file and print its diagnostics.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Args, Clone)]
struct EvalFlags {
    /// Robust evaluator.
    #[arg(long = "eval", default_value = "ar")]
    mode: EvalMode,
    #[arg(long, default_value_t = hmpomdp::eval::DEFAULT_AR_TOL)]
    ar_tol: f64,
    #[arg(long, default_value_t = hmpomdp::eval::DEFAULT_ENUM_CAP)]
    enum_cap: u128,
}

impl EvalFlags {
    fn options(&self) -> EvalOptions {
        EvalOptions {
            mode: self.mode,
            ar_tol: self.ar_tol,
            enum_cap: self.enum_cap,
        }
    }
}

#[derive(Args, Clone)]
struct OptFlags {
    #[arg(long)]
    model: PathBuf,
    /// Budget in seconds.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(long, default_value_t = 10)]
    gd_steps: usize,
    /// Double the inner steps while evaluation dominates the run time.
    #[arg(long)]
    auto_steps: bool,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    beta: f64,
    #[arg(long, default_value_t = 5.0)]
    clip: f64,
    /// Fixed number of memory nodes; otherwise a memory model is probed.
    #[arg(long, conflicts_with = "node_budget")]
    nodes: Option<usize>,
    #[arg(long)]
    node_budget: Option<usize>,
    #[arg(long, default_value_t = 3)]
    memory_samples: usize,
    #[arg(long, default_value_t = 50)]
    probe_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop after this many outer iterations even if time remains.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Solve the discounted variant of the model.
    #[arg(long)]
    discount: Option<f64>,
    /// Clock: `wall`, or `tick:<seconds>` for a logical clock that advances
    /// by a fixed amount on every reading.
    #[arg(long, default_value = "wall")]
    clock: String,
    #[command(flatten)]
    eval: EvalFlags,
}

impl OptFlags {
    fn config(&self, family: &ModelFamily) -> OptimizerConfig {
        OptimizerConfig {
            alpha: self.alpha,
            beta: self.beta,
            clip: self.clip,
            gd_steps: self.gd_steps,
            auto_steps: self.auto_steps,
            timeout_seconds: self.timeout,
            max_iterations: self.max_iterations,
            seed: self.seed,
            eval: self.eval.options(),
            objective: family.objective(),
            nodes: self.nodes,
            node_budget: self.node_budget.unwrap_or(3),
            memory_samples: self.memory_samples,
            probe_steps: self.probe_steps,
        }
    }

    fn family(&self) -> Result<ModelFamily> {
        let family = parse_model(&self.model)?;
        match self.discount {
            Some(gamma) => family.discounted(gamma),
            None => Ok(family),
        }
    }

    fn clock(&self) -> Result<Box<dyn Clock>> {
        make_clock(&self.clock)
    }

    fn echo(&self) -> BTreeMap<String, serde_json::Value> {
        let mut m = BTreeMap::new();
        m.insert("timeout".into(), self.timeout.into());
        m.insert("gd_steps".into(), self.gd_steps.into());
        m.insert("auto_steps".into(), self.auto_steps.into());
        m.insert("alpha".into(), self.alpha.into());
        m.insert("beta".into(), self.beta.into());
        m.insert("clip".into(), self.clip.into());
        m.insert("seed".into(), self.seed.into());
        m.insert("eval".into(), self.eval.mode.to_string().into());
        m.insert("nodes".into(), self.nodes.into());
        m.insert("node_budget".into(), self.node_budget.into());
        m.insert("max_iterations".into(), self.max_iterations.into());
        m.insert("discount".into(), self.discount.into());
        m.insert("clock".into(), self.clock.clone().into());
        m
    }
}

fn make_clock(spec: &str) -> Result<Box<dyn Clock>> {
    if spec == "wall" {
        return Ok(Box::new(WallClock::new()));
    }
    match spec.strip_prefix("tick:").map(str::parse::<f64>) {
        Some(Ok(t)) if t > 0.0 => Ok(Box::new(TickClock::new(t))),
        _ => Err(Error::input(format!(
            "unknown clock `{spec}`; use `wall` or `tick:<seconds>`"
        ))),
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    opt: OptFlags,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_policy: Option<PathBuf>,
    #[arg(long)]
    out_summary: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    #[command(flatten)]
    eval: EvalFlags,
    /// Evaluate one instance only, written `hole=option;hole=option`.
    #[arg(long)]
    index: Option<String>,
    #[arg(long)]
    discount: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Union,
    Enum,
    Random,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    kind: BaselineKind,
    #[command(flatten)]
    opt: OptFlags,
    /// Number of instances to train on, drawn by stratified sampling.
    #[arg(long, default_value_t = 10)]
    subset_size: usize,
    #[arg(long)]
    subset_seed: Option<u64>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_policy: Option<PathBuf>,
    #[arg(long)]
    out_summary: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Grid world with hidden obstacle positions.
    Obstacles(ObstaclesArgs),
    /// Random family for evaluator stress tests.
    Synthetic(SyntheticArgs),
    /// Compare methods over seeds on stratified subsets.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct ObstaclesArgs {
    #[arg(long)]
    out: PathBuf,
    /// Use the bundled three-location layout; other layout flags are ignored.
    #[arg(long)]
    three_locations: bool,
    #[arg(long, default_value_t = 4)]
    size: usize,
    #[arg(long)]
    height: Option<usize>,
    /// Start cell `x,y`.
    #[arg(long, default_value = "0,0")]
    start: String,
    /// Goal cells `x,y;x,y` (default: the east column).
    #[arg(long)]
    goals: Option<String>,
    /// Candidate cells of one obstacle, `x,y;x,y`; repeat per obstacle.
    #[arg(long = "obstacle")]
    obstacles: Vec<String>,
    #[arg(long, default_value_t = 0.1)]
    slip: f64,
    #[arg(long, default_value_t = 100.0)]
    penalty: f64,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long)]
    out: PathBuf,
    /// Hole domain sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    holes: Vec<usize>,
    #[arg(long, default_value_t = 6)]
    states: usize,
    #[arg(long, default_value_t = 2)]
    observations: usize,
    #[arg(long, default_value_t = 2)]
    actions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    opt: OptFlags,
    #[arg(long, value_delimiter = ',', default_value = "rfpg,random,union,enum")]
    methods: Vec<String>,
    /// Seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7,8,9")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 10)]
    subset_size: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_cells(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|c| {
            let (x, y) = c
                .split_once(',')
                .ok_or_else(|| Error::input(format!("cell `{c}` must be written x,y")))?;
            let p = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::input(format!("bad cell `{c}`")))
            };
            Ok((p(x)?, p(y)?))
        })
        .collect()
}

fn parse_index(family: &ModelFamily, text: &str) -> Result<Assignment> {
    let mut map = BTreeMap::new();
    for part in text.split(';').filter(|s| !s.is_empty()) {
        let (h, o) = part
            .split_once('=')
            .ok_or_else(|| Error::input(format!("index entry `{part}` must be hole=option")))?;
        map.insert(h.trim().to_string(), o.trim().to_string());
    }
    family.assignment_from_names(&map)
}

fn summary(
    family: &ModelFamily,
    method: &str,
    value: Option<f64>,
    worst: Option<&Assignment>,
    iterations: usize,
    memory_nodes: usize,
    config: BTreeMap<String, serde_json::Value>,
    note: Option<String>,
) -> Summary {
    Summary {
        model: family.skeleton.name.clone(),
        method: method.into(),
        objective: family.objective().as_str().into(),
        robust_value: value,
        worst_index: worst.map(|w| family.assignment_names(w)),
        iterations,
        instance_count: family.instance_count().to_string(),
        memory_nodes,
        config,
        note,
    }
}

fn write_outputs(
    family: &ModelFamily,
    params: &FscParams,
    out: &RunOutcome,
    csv: Option<&Path>,
    policy: Option<&Path>,
) -> Result<()> {
    if let Some(path) = csv {
        write_results_file(family, &out.records, path)?;
    }
    if let Some(path) = policy {
        write_policy(family, params, path)?;
    }
    Ok(())
}

fn solve(args: &SolveArgs) -> Result<()> {
    let family = args.opt.family()?;
    let cfg = args.opt.config(&family);
    let clock = args.opt.clock()?;
    let out = rfpg(&family, &cfg, clock.as_ref())?;
    write_outputs(
        &family,
        &out.best,
        &out,
        args.out_csv.as_deref(),
        args.out_policy.as_deref(),
    )?;
    let worst = out
        .records
        .iter()
        .rev()
        .find(|r| Some(r.robust_value) == out.best_value);
    match out.best_value {
        Some(v) => println!("robust_value {v}"),
        None => println!("robust_value none"),
    }
    if let Some(r) = worst {
        println!("worst_index {}", family.format_assignment(&r.worst_index));
    }
    println!("iterations {}", out.records.len());
    if let Some(note) = &out.note {
        eprintln!("note: {note}");
    }
    if let Some(path) = &args.out_summary {
        let s = summary(
            &family,
            "rfpg",
            out.best_value,
            worst.map(|r| &r.worst_index),
            out.records.len(),
            out.memory.node_count,
            args.opt.echo(),
            out.note.clone(),
        );
        write_summary(&s, path)?;
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let mut family = parse_model(&args.model)?;
    if let Some(gamma) = args.discount {
        family = family.discounted(gamma)?;
    }
    let params = read_policy(&family, &args.policy)?;
    let fsc = params.realize();
    match &args.index {
        Some(text) => {
            let index = parse_index(&family, text)?;
            let v = evaluate_instance(&family, &index, &fsc)?;
            println!("value {v}");
            println!("index {}", family.format_assignment(&index));
        }
        None => {
            let r = robust_evaluate(&family, &fsc, &args.eval.options())?;
            println!("robust_value {}", r.robust_value);
            println!("worst_index {}", family.format_assignment(&r.worst_index));
            if args.eval.mode == EvalMode::Ar {
                println!("boxes_explored {}", r.boxes_explored);
            }
        }
    }
    Ok(())
}

fn baseline(args: &BaselineArgs) -> Result<()> {
    let family = args.opt.family()?;
    let cfg = args.opt.config(&family);
    let clock = args.opt.clock()?;
    let size = (args.subset_size as u128).min(family.instance_count()) as usize;
    if size == 0 {
        return Err(Error::input("subset size must be at least 1"));
    }
    let subset_seed = args.subset_seed.unwrap_or(args.opt.seed);
    let subset = stratified_sample(
        &family.hole_sizes(),
        size,
        &mut stream(subset_seed, Stream::Sampling),
    );
    let (params, outcome, method) = match args.kind {
        BaselineKind::Union => (
            baseline_union_gd(&family, &subset, &cfg, clock.as_ref())?.params,
            None,
            "union",
        ),
        BaselineKind::Enum => (
            baseline_enum_gd(&family, &subset, &cfg, clock.as_ref())?.params,
            None,
            "enum",
        ),
        BaselineKind::Random => {
            let out = random_selection_on(&family, &subset, &cfg, clock.as_ref())?;
            (out.best.clone(), Some(out), "random")
        }
    };
    if let Some(out) = &outcome {
        write_outputs(&family, &params, out, args.out_csv.as_deref(), None)?;
    } else if args.out_csv.is_some() {
        return Err(Error::input(
            "--out-csv is only produced by the random-selection baseline",
        ));
    }
    if let Some(path) = &args.out_policy {
        write_policy(&family, &params, path)?;
    }
    let fsc = params.realize();
    let on_subset = robust_evaluate_indices(&family, &fsc, &subset)?;
    let full = robust_evaluate(&family, &fsc, &cfg.eval)?;
    println!("subset_value {}", on_subset.robust_value);
    println!("robust_value {}", full.robust_value);
    println!("worst_index {}", family.format_assignment(&full.worst_index));
    if let Some(path) = &args.out_summary {
        let mut echo = args.opt.echo();
        echo.insert("subset_size".into(), size.into());
        echo.insert("subset_seed".into(), subset_seed.into());
        echo.insert("subset_value".into(), on_subset.robust_value.into());
        let s = summary(
            &family,
            method,
            Some(full.robust_value),
            Some(&full.worst_index),
            outcome.as_ref().map_or(0, |o| o.records.len()),
            params.nodes(),
            echo,
            None,
        );
        write_summary(&s, path)?;
    }
    Ok(())
}

fn bench(cmd: &BenchCommand) -> Result<()> {
    match cmd {
        BenchCommand::Obstacles(a) => {
            let spec = if a.three_locations {
                ObstaclesSpec::three_locations()
            } else {
                let mut spec = ObstaclesSpec::square(a.size);
                if let Some(h) = a.height {
                    spec.height = h;
                    spec.goals = (0..h).map(|y| (a.size.saturating_sub(1), y)).collect();
                }
                spec.start = *parse_cells(&a.start)?
                    .first()
                    .ok_or_else(|| Error::input("start cell missing"))?;
                if let Some(g) = &a.goals {
                    spec.goals = parse_cells(g)?;
                }
                spec.candidates = a
                    .obstacles
                    .iter()
                    .map(|o| parse_cells(o))
                    .collect::<Result<_>>()?;
                spec.slip = a.slip;
                spec.penalty = a.penalty;
                spec
            };
            let family = gen_obstacles(&spec)?;
            write_model(&family, &a.out)?;
            println!(
                "wrote {} ({} instances)",
                a.out.display(),
                family.instance_count()
            );
        }
        BenchCommand::Synthetic(a) => {
            let mut spec = SyntheticSpec::new(a.holes.clone(), a.states, a.seed);
            spec.observation_count = a.observations;
            spec.action_count = a.actions;
            let family = gen_synthetic(&spec)?;
            write_model(&family, &a.out)?;
            println!(
                "wrote {} ({} instances)",
                a.out.display(),
                family.instance_count()
            );
        }
        BenchCommand::Experiment(a) => {
            let family = a.opt.family()?;
            let mut plan = ExperimentPlan::new(family.clone(), a.opt.config(&family));
            plan.methods = a
                .methods
                .iter()
                .map(|m| m.parse::<Method>())
                .collect::<Result<_>>()?;
            plan.seeds = a.seeds.clone();
            plan.subset_size = a.subset_size;
            let clock = a.opt.clock()?;
            let outcome = run_experiment(&plan, clock.as_ref())?;
            write_experiment(&family, &outcome, &a.out_dir)?;
            for s in &outcome.summaries {
                println!(
                    "{} mean {} stderr {} normalized {}",
                    s.method,
                    s.mean_full_value,
                    s.stderr_full_value,
                    s.mean_normalized.map_or("-".into(), |x| x.to_string())
                );
            }
        }
    }
    Ok(())
}

fn validate(model: &Path) -> Result<()> {
    let family = parse_model(model)?;
    println!(
        "ok: {} states, {} holes, {} instances",
        family.state_count(),
        family.holes.len(),
        family.instance_count()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::input(format!("cannot configure {n} workers: {e}")))?;
    }
    match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Eval(a) => eval(a),
        Command::Baseline(a) => baseline(a),
        Command::Bench(c) => bench(c),
        Command::Validate { model } => validate(model),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
