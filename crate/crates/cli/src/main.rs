use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use fidtune_core::bench::{bench_fidelity, BenchParams};
use fidtune_core::controller::{tune, write_outputs, TargetTask, TuneConfig};
use fidtune_core::evaluator::{make_synthetic_suite, Evaluator, ReplayEvaluator, Simulator, SuiteParams, WorkloadSpec};
use fidtune_core::space::ConfigSpace;
use fidtune_core::store::KnowledgeStore;
use fidtune_core::task::MetaFeature;

#[derive(Parser)]
#[command(
    name = "fidtune",
    version,
    about = "Multi-fidelity configuration tuner for multi-query workloads"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tune a workload under a simulated-seconds budget.
    Tune(TuneArgs),
    /// Generate a synthetic suite: space, history store, workload specs and a replay trace.
    GenSuite(GenSuiteArgs),
    /// Compare query selection, prefix and data-volume fidelity proxies.
    BenchFidelity(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Feature {
    Transfer,
    Compression,
    Mfo,
    WarmStart,
    EarlyStop,
}

#[derive(Args)]
struct TuneArgs {
    /// Configuration space JSON.
    #[arg(long)]
    space: PathBuf,
    /// Knowledge store with historical tasks.
    #[arg(long)]
    history: Option<PathBuf>,
    /// `sim:SPEC.json` or `replay:TASK_DIR`.
    #[arg(long)]
    workload: String,
    /// Budget in simulated seconds of evaluation cost.
    #[arg(long)]
    budget: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.65)]
    alpha: f64,
    #[arg(long, default_value_t = 3)]
    eta: u32,
    #[arg(long, default_value_t = 9)]
    max_resource: u32,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    #[arg(long, default_value = "fidtune-out")]
    output: PathBuf,
    /// Wall-clock limit in seconds, for real evaluators.
    #[arg(long)]
    wall_budget: Option<f64>,
    /// Task id for the tuned workload (defaults to the workload name).
    #[arg(long)]
    task_id: Option<String>,
    /// Store the finished task in `--history` for future runs.
    #[arg(long, requires = "history")]
    persist: bool,
    /// Switch off parts of the method (repeatable).
    #[arg(long, value_enum)]
    disable: Vec<Feature>,
}

#[derive(Args, Clone)]
struct SuiteArgs {
    #[arg(long, default_value_t = 6)]
    tasks: usize,
    #[arg(long, default_value_t = 22)]
    queries: usize,
    #[arg(long, default_value_t = 14)]
    knobs: usize,
    #[arg(long, default_value_t = 3)]
    no_effect: usize,
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0.02)]
    failure_prob: f64,
    #[arg(long, default_value_t = 50)]
    observations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SuiteArgs {
    fn params(&self) -> Result<SuiteParams> {
        if !(0.0..=1.0).contains(&self.rho) {
            bail!("--rho must lie in [0, 1]");
        }
        if self.tasks < 2 || self.queries == 0 || self.knobs == 0 || self.no_effect >= self.knobs {
            bail!("need at least 2 tasks, 1 query and one knob with an effect");
        }
        Ok(SuiteParams {
            n_tasks: self.tasks,
            n_queries: self.queries,
            n_knobs: self.knobs,
            n_no_effect: self.no_effect,
            rho: self.rho,
            noise_sigma: self.noise,
            failure_prob: self.failure_prob,
            observations: self.observations,
            seed: self.seed,
        })
    }
}

#[derive(Args)]
struct GenSuiteArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 3)]
    eta: u32,
    #[arg(long, default_value_t = 9)]
    max_resource: u32,
    #[arg(long, default_value = "fidtune-bench")]
    output: PathBuf,
}

enum Workload {
    Sim(Simulator),
    Replay(ReplayEvaluator),
}

impl Workload {
    fn evaluator(&self) -> &dyn Evaluator {
        match self {
            Workload::Sim(s) => s,
            Workload::Replay(r) => r,
        }
    }
}

fn load_workload(arg: &str, space: &ConfigSpace) -> Result<(Workload, String, MetaFeature)> {
    let (kind, path) = arg
        .split_once(':')
        .with_context(|| format!("--workload must be sim:SPEC or replay:DIR, got `{arg}`"))?;
    match kind {
        "sim" => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
            let spec: WorkloadSpec = serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?;
            if &spec.space != space {
                bail!("workload {path} was generated for a different space than --space");
            }
            let meta =
                MetaFeature::new(spec.meta_feature.clone()).context("workload meta-feature has the wrong length")?;
            let name = spec.name.clone();
            Ok((Workload::Sim(Simulator::new(spec)?), name, meta))
        }
        "replay" => {
            let replay = ReplayEvaluator::from_dir(Path::new(path), space)?;
            let rec = replay.record();
            let (name, meta) = (rec.task_id.clone(), rec.meta.clone());
            Ok((Workload::Replay(replay), name, meta))
        }
        other => bail!("unknown workload kind `{other}` (expected sim or replay)"),
    }
}

fn run_tune(args: TuneArgs) -> Result<()> {
    if args.budget.is_nan() || args.budget <= 0.0 {
        bail!("--budget must be positive");
    }
    if !(args.alpha > 0.0 && args.alpha <= 1.0) {
        bail!("--alpha must lie in (0, 1]");
    }
    let space = ConfigSpace::load(&args.space).with_context(|| format!("loading {}", args.space.display()))?;
    let (workload, name, meta) = load_workload(&args.workload, &space)?;
    let task_id = args.task_id.clone().unwrap_or(name);

    let store = args
        .history
        .as_deref()
        .map(|h| KnowledgeStore::open(h, &space))
        .transpose()?;
    let history = match &store {
        Some(s) => {
            let report = s.load_all();
            log::info!(
                "loaded {} history tasks ({} skipped)",
                report.tasks.len(),
                report.warnings.len()
            );
            report.tasks
        }
        None => Vec::new(),
    };
    let off = |f: Feature| args.disable.contains(&f);
    let cfg = TuneConfig {
        alpha: args.alpha,
        eta: args.eta,
        max_resource: args.max_resource,
        budget_s: args.budget,
        wall_budget: args.wall_budget.map(Duration::from_secs_f64),
        seed: args.seed,
        parallelism: args.parallelism.max(1),
        enable_transfer: !off(Feature::Transfer),
        enable_compression: !off(Feature::Compression),
        enable_mfo: !off(Feature::Mfo),
        enable_warm_start: !off(Feature::WarmStart),
        enable_early_stop: !off(Feature::EarlyStop),
        ..TuneConfig::default()
    };
    let target = TargetTask { task_id, meta };
    let evaluator = workload.evaluator();

    let mut current = match (&store, args.persist) {
        (Some(s), true) => Some(s.begin_task(&target.task_id, target.meta.clone(), evaluator.queries().to_vec())?),
        _ => None,
    };
    let report = tune(evaluator, history, &target, &cfg, current.as_mut())?;
    write_outputs(&args.output, &report, &space)?;
    if let (Some(c), Some(s)) = (current, &store) {
        let dir = s.root().to_path_buf();
        c.finalize(s)?;
        log::info!("stored task `{}` in {}", target.task_id, dir.display());
    }

    let modes: Vec<String> = report
        .mode_changes
        .iter()
        .map(|(i, m)| format!("{}@{i}", m.as_str()))
        .collect();
    println!(
        "evaluations {}  simulated {:.1}s  iterations {}  modes {}",
        report.ledger.entries().len(),
        report.ledger.elapsed(),
        report.iterations,
        modes.join(" ")
    );
    match &report.best {
        Some((c, f)) => println!("best {:.3}s {}", f, space.config_to_json(c)),
        None => println!("no successful full-fidelity evaluation"),
    }
    if let Workload::Sim(sim) = &workload {
        if let Some((c, _)) = &report.best {
            let opt = sim.optimum().1;
            println!("noise-free latency {:.3}s, optimum {:.3}s", sim.true_latency(c), opt);
        }
    }
    println!("outputs in {}", args.output.display());
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn run_gen_suite(args: GenSuiteArgs) -> Result<()> {
    let params = args.suite.params()?;
    let suite = make_synthetic_suite(&params);
    let out = &args.output;
    fs::create_dir_all(out.join("workloads")).with_context(|| format!("creating {}", out.display()))?;
    suite.space.save(&out.join("space.json"))?;

    // The last task is held out as the tuning target; the rest form the history.
    let (target, sources) = suite.tasks.split_last().expect("at least two tasks");
    let history = KnowledgeStore::open(&out.join("history"), &suite.space)?;
    for (_, rec) in sources {
        history.insert(rec)?;
    }
    let trace = KnowledgeStore::open(&out.join("trace"), &suite.space)?;
    trace.insert(&target.1)?;

    let mut listing = Vec::new();
    for (i, (spec, rec)) in suite.tasks.iter().enumerate() {
        let path = out.join("workloads").join(format!("{}.json", spec.name));
        fs::write(&path, serde_json::to_string_pretty(spec)?).with_context(|| format!("writing {}", path.display()))?;
        let sim = suite.simulator(i);
        listing.push(json!({
            "task_id": rec.task_id,
            "workload": format!("workloads/{}.json", spec.name),
            "optimum_latency_s": sim.optimum().1,
            "optimum": suite.space.config_to_json(sim.optimum().0),
        }));
    }
    let no_effect: Vec<&str> = suite
        .no_effect
        .iter()
        .map(|&j| suite.space.knobs()[j].name.as_str())
        .collect();
    write_json(
        &out.join("suite.json"),
        &json!({
            "target": target.0.name,
            "rho": params.rho,
            "seed": params.seed,
            "no_effect_knobs": no_effect,
            "tasks": listing,
        }),
    )?;
    println!(
        "wrote {} tasks to {} (target {}, history {})",
        suite.tasks.len(),
        out.display(),
        target.0.name,
        sources.len()
    );
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let params = BenchParams {
        suite: args.suite.params()?,
        instances: args.instances,
        eta: args.eta,
        max_resource: args.max_resource,
    };
    let report = bench_fidelity(&params)?;
    fs::create_dir_all(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    let csv_path = args.output.join("fidelity_bench.csv");
    fs::write(&csv_path, report.to_csv()).with_context(|| format!("writing {}", csv_path.display()))?;
    write_json(
        &args.output.join("summary.json"),
        &json!({
            "eta": report.eta,
            "max_resource": report.max_resource,
            "deltas": report.deltas,
            "instances": report.instances,
            "levels": report.levels,
        }),
    )?;
    print!("{}", report.summary());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Tune(a) => run_tune(a),
        Command::GenSuite(a) => run_gen_suite(a),
        Command::BenchFidelity(a) => run_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
