use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use airnav::config::{resolve_seed, ExperimentConfig};
use airnav::dataset::{self, Dataset, DatasetConfig, Split, SplitRatios};
use airnav::harness::{make_agent, run_suite, AgentKind};
use airnav::memory::{select_history, MemoryKind, MemoryPolicy};
use airnav::metrics::{aggregate, evaluate_log, EpisodeResult, ReportMeta, TrajectoryLog};
use airnav::reward::RewardAblation;
use airnav::synth::Episode;
use airnav::train::{train, Stage};

#[derive(Parser)]
#[command(name = "airnav", version, about = "Synthetic UAV navigation benchmark, harness and trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset directory (manifest.json + episodes/*.json).
    Gen(GenArgs),
    /// Run an agent over a dataset split and write results.
    Eval(EvalArgs),
    /// Train the linear policy with behavior cloning and/or GRPO.
    Train(TrainArgs),
    /// Recompute a report from trajectory logs or result lines.
    Metrics(MetricsArgs),
    /// Print the history frame indices a memory policy selects.
    MemoryDebug(MemoryDebugArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of episodes across all splits.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    episodes: Option<u64>,
    /// Dataset seed (default: $AIRNAV_SEED, then the config's synth seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Ratios for train,val_seen,val_unseen,test_unseen.
    #[arg(long)]
    split_ratios: Option<SplitRatios>,
    /// Experiment config file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace an existing dataset in the output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// random, expert, oracle, policy:FILE or bridge:CMD.
    #[arg(long)]
    agent: AgentKind,
    /// Dataset directory written by `gen`.
    #[arg(long)]
    dataset: PathBuf,
    /// Split to evaluate, or "all".
    #[arg(long, default_value = "all")]
    split: String,
    /// History selection: pis, last, uniform or none.
    #[arg(long)]
    memory: Option<MemoryKind>,
    /// Number of history frames.
    #[arg(long)]
    frames: Option<usize>,
    /// Output directory for results.jsonl, report.json and trajectories.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    parallelism: Option<usize>,
    /// Run seed for stochastic agents (default: $AIRNAV_SEED, then config).
    #[arg(long)]
    seed: Option<u64>,
    /// Decision-step cap per episode.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Experiment config file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// bc, grpo or bc+grpo.
    #[arg(long)]
    stage: Stage,
    /// Experiment config file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for curve.jsonl, params.json and report.json.
    #[arg(long)]
    out: PathBuf,
    /// Training seed (default: $AIRNAV_SEED, then the config's train seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of GRPO updates.
    #[arg(long)]
    updates: Option<usize>,
    /// Comma-separated reward components to disable: subgoal, stop, format.
    #[arg(long)]
    reward_ablation: Option<RewardAblation>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Existing results.jsonl to re-aggregate.
    #[arg(long, conflicts_with_all = ["logs", "dataset"])]
    results: Option<PathBuf>,
    /// trajectories.jsonl to rescore (needs --dataset).
    #[arg(long, requires = "dataset")]
    logs: Option<PathBuf>,
    /// Dataset the logs were produced on.
    #[arg(long, requires = "logs")]
    dataset: Option<PathBuf>,
    /// Success radius in meters.
    #[arg(long, default_value_t = 20.0)]
    threshold: f64,
    /// Agent label stored in the report.
    #[arg(long, default_value = "unknown")]
    agent: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MemoryDebugArgs {
    /// pis, last, uniform or none.
    #[arg(long)]
    policy: MemoryKind,
    /// Current decision step (1-based).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    t: u64,
    /// Number of history frames.
    #[arg(long, default_value_t = 4)]
    frames: usize,
}

enum Failure {
    Usage(String),
    Run(airnav::Error),
}

impl From<airnav::Error> for Failure {
    fn from(e: airnav::Error) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.into())
    }
}

type CliResult = Result<(), Failure>;

fn existing(path: &Path, what: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    if let Some(p) = path {
        existing(p, "config file")?;
    }
    Ok(ExperimentConfig::load_or_default(path)?)
}

fn gen(args: GenArgs) -> CliResult {
    let cfg = load_config(args.config.as_deref())?;
    let seed = resolve_seed(args.seed, cfg.synth.seed)?;
    let ds_cfg = DatasetConfig {
        episodes: args.episodes.map_or(cfg.dataset.episodes, |n| n as usize),
        split_ratios: args.split_ratios.unwrap_or(cfg.dataset.split_ratios),
        ..cfg.dataset.clone()
    };
    let manifest = args.out.join("manifest.json");
    if manifest.exists() {
        if !args.force {
            return Err(Failure::Usage(format!(
                "{} already holds a dataset; pass --force to replace it",
                args.out.display()
            )));
        }
        let episodes = args.out.join("episodes");
        if episodes.is_dir() {
            fs::remove_dir_all(&episodes)?;
        }
        fs::remove_file(&manifest)?;
    }
    let ds = dataset::generate(&cfg.world, &cfg.synth, &ds_cfg, seed)?;
    ds.save(&args.out)?;
    for (split, ids) in &ds.manifest.splits {
        println!("{split}: {} episodes", ids.len());
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn select_split(ds: &Dataset, name: &str) -> Result<Vec<Episode>, Failure> {
    if name == "all" {
        return Ok(ds.episodes.clone());
    }
    let split: Split = name.parse().map_err(|e: airnav::Error| Failure::Usage(e.to_string()))?;
    let eps = ds.split(split);
    if eps.is_empty() {
        return Err(Failure::Usage(format!("split {name} has no episodes")));
    }
    Ok(eps)
}

fn eval(args: EvalArgs) -> CliResult {
    existing(&args.dataset, "dataset")?;
    if let AgentKind::Policy(path) = &args.agent {
        existing(Path::new(path), "policy checkpoint")?;
    }
    let cfg = load_config(args.config.as_deref())?;
    let mut run = cfg.run_config();
    let kind = args.memory.unwrap_or(run.memory.kind);
    run.memory = MemoryPolicy::new(kind, args.frames.unwrap_or(run.memory.frames));
    if let Some(p) = args.parallelism {
        run.parallelism = p;
    }
    if let Some(m) = args.max_steps {
        run.max_decision_steps = m;
    }
    run.seed = resolve_seed(args.seed, run.seed)?;
    run.validate()?;

    let ds = Dataset::load(&args.dataset)?;
    let episodes = select_split(&ds, &args.split)?;
    let timeout = Duration::from_secs_f64(run.response_timeout_s);
    let synth = &ds.manifest.synth_config;
    let out = run_suite(
        || {
            make_agent(
                &args.agent,
                synth.horizon,
                synth.node_threshold_m,
                run.success_threshold_m,
                timeout,
            )
        },
        &episodes,
        ds.worlds(),
        &run,
    )?;
    fs::create_dir_all(&args.out)?;
    dataset::write_jsonl(&args.out.join("results.jsonl"), &out.results)?;
    dataset::write_jsonl(&args.out.join("trajectories.jsonl"), &out.logs)?;
    dataset::write_json(&args.out.join("report.json"), &out.report)?;
    let o = &out.report.overall;
    println!(
        "{} episodes  NE {:.2}  SR {:.2}  OSR {:.2}  SPL {:.2}",
        o.count, o.ne, o.sr, o.osr, o.spl
    );
    Ok(())
}

fn train_cmd(args: TrainArgs) -> CliResult {
    let mut cfg = load_config(args.config.as_deref())?;
    cfg.train.seed = resolve_seed(args.seed, cfg.train.seed)?;
    if let Some(u) = args.updates {
        cfg.train.updates = u;
    }
    if let Some(a) = args.reward_ablation {
        cfg.reward.ablation = a;
    }
    let outcome = train(
        &cfg.world,
        &cfg.synth,
        &cfg.reward,
        &cfg.run_config(),
        &cfg.train,
        args.stage,
    )?;
    fs::create_dir_all(&args.out)?;
    dataset::write_jsonl(&args.out.join("curve.jsonl"), &outcome.curve)?;
    dataset::write_json(&args.out.join("params.json"), &outcome.params.to_flat())?;
    dataset::write_json(&args.out.join("report.json"), &outcome.heldout)?;
    let o = &outcome.heldout.overall;
    println!(
        "stage {}  held-out SR {:.2}  SPL {:.2}  NE {:.2}",
        args.stage, o.sr, o.spl, o.ne
    );
    Ok(())
}

fn metrics(args: MetricsArgs) -> CliResult {
    let results: Vec<EpisodeResult> = match (&args.results, &args.logs, &args.dataset) {
        (Some(path), None, None) => {
            existing(path, "results file")?;
            dataset::read_jsonl(path)?
        }
        (None, Some(logs), Some(dir)) => {
            existing(logs, "log file")?;
            existing(dir, "dataset")?;
            let ds = Dataset::load(dir)?;
            let logs: Vec<TrajectoryLog> = dataset::read_jsonl(logs)?;
            let mut out = Vec::with_capacity(logs.len());
            for log in &logs {
                let ep = ds
                    .episodes
                    .iter()
                    .find(|e| e.id == log.episode_id)
                    .ok_or_else(|| {
                        Failure::Usage(format!("episode {} is not in the dataset", log.episode_id))
                    })?;
                let world = ds
                    .worlds()
                    .iter()
                    .find(|w| w.id == ep.world)
                    .ok_or_else(|| Failure::Usage(format!("world {} is missing", ep.world)))?;
                out.push(evaluate_log(log, ep, &world.kinematics, args.threshold)?);
            }
            out
        }
        _ => {
            return Err(Failure::Usage(
                "pass either --results FILE or --logs FILE --dataset DIR".into(),
            ))
        }
    };
    let report = aggregate(
        &results,
        ReportMeta {
            agent: args.agent,
            memory: String::new(),
            success_threshold_m: args.threshold,
        },
    )?;
    match args.out {
        Some(path) => dataset::write_json(&path, &report)?,
        None => {
            let text = serde_json::to_string_pretty(&report).map_err(airnav::Error::from)?;
            let mut stdout = std::io::stdout().lock();
            if let Err(e) = writeln!(stdout, "{text}") {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(())
}

fn memory_debug(args: MemoryDebugArgs) -> CliResult {
    let policy = MemoryPolicy::new(args.policy, args.frames);
    let picked: Vec<String> = select_history(policy, args.t as usize)
        .iter()
        .map(ToString::to_string)
        .collect();
    println!("{}", picked.join(" "));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Eval(a) => eval(a),
        Command::Train(a) => train_cmd(a),
        Command::Metrics(a) => metrics(a),
        Command::MemoryDebug(a) => memory_debug(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `airnav --help` for usage");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
