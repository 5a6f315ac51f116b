//! Writes trajectory logs to disk, then recomputes metrics from them alone.

use airnav::dataset::{self, read_jsonl, write_jsonl, DatasetConfig};
use airnav::harness::{run_suite, Agent, RandomAgent, RunConfig};
use airnav::metrics::{aggregate, evaluate_log, ReportMeta, TrajectoryLog};
use airnav::synth::SynthConfig;
use airnav::world::WorldConfig;

fn main() -> airnav::Result<()> {
    let ds_cfg = DatasetConfig { episodes: 40, ..DatasetConfig::default() };
    let ds = dataset::generate(&WorldConfig::default(), &SynthConfig::default(), &ds_cfg, 11)?;
    let cfg = RunConfig { seed: 3, ..RunConfig::default() };
    let out = run_suite(|| Ok(Box::new(RandomAgent::new()) as Box<dyn Agent>), &ds.episodes, ds.worlds(), &cfg)?;

    let path = std::env::temp_dir().join("airnav_example_trajectories.jsonl");
    write_jsonl(&path, &out.logs)?;
    let logs: Vec<TrajectoryLog> = read_jsonl(&path)?;
    println!("read {} logs from {}", logs.len(), path.display());

    let mut results = Vec::new();
    for log in &logs {
        let ep = ds.episodes.iter().find(|e| e.id == log.episode_id).expect("episode in dataset");
        let world = ds.worlds().iter().find(|w| w.id == ep.world).expect("world in dataset");
        results.push(evaluate_log(log, ep, &world.kinematics, cfg.success_threshold_m)?);
    }
    let meta = ReportMeta { agent: "random".into(), ..out.report.meta.clone() };
    let report = aggregate(&results, meta)?;
    assert_eq!(report.overall, out.report.overall);
    println!("{}", serde_json::to_string_pretty(&report.overall).expect("report serializes"));
    for (d, s) in &report.by_difficulty {
        println!("{d:<7} n={:<3} SR {:>5.1}  OSR {:>5.1}  early {}", s.count, s.sr, s.osr, s.early_stop);
    }
    std::fs::remove_file(path)?;
    Ok(())
}
