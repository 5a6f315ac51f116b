//! Runs the built-in agents over one dataset and prints their metrics.

use airnav::dataset::{self, DatasetConfig};
use airnav::harness::{run_suite, Agent, ExpertReplayAgent, GreedyOracleAgent, RandomAgent, RunConfig};
use airnav::synth::SynthConfig;
use airnav::world::WorldConfig;

fn main() -> airnav::Result<()> {
    let ds_cfg = DatasetConfig { episodes: 100, ..DatasetConfig::default() };
    let ds = dataset::generate(&WorldConfig::default(), &SynthConfig::default(), &ds_cfg, 7)?;
    let cfg = RunConfig { seed: 7, ..RunConfig::default() };

    let agents: [(&str, fn() -> Box<dyn Agent>); 3] = [
        ("expert", || Box::new(ExpertReplayAgent::new())),
        ("oracle", || Box::new(GreedyOracleAgent::default())),
        ("random", || Box::new(RandomAgent::new())),
    ];
    println!("{:<8} {:>6} {:>6} {:>6} {:>7} {:>6} {:>6}", "agent", "SR", "OSR", "SPL", "NE", "early", "missed");
    for (name, make) in agents {
        let out = run_suite(|| Ok(make()), &ds.episodes, ds.worlds(), &cfg)?;
        let o = &out.report.overall;
        println!(
            "{name:<8} {:>6.1} {:>6.1} {:>6.1} {:>7.1} {:>6} {:>6}",
            o.sr, o.osr, o.spl, o.ne, o.early_stop, o.missed_stop
        );
    }

    // Per-split view for the oracle.
    let out = run_suite(|| Ok(Box::new(GreedyOracleAgent::default()) as Box<dyn Agent>), &ds.episodes, ds.worlds(), &cfg)?;
    for (split, s) in &out.report.by_split {
        println!("oracle {split:<12} n={:<3} SR {:.1}", s.count, s.sr);
    }
    Ok(())
}
