//! Drives an out-of-process agent over the line-delimited JSON bridge.
//!
//! The example re-runs itself with `--agent` as the child. The child reads
//! observe messages on stdin and answers with a simple heading rule: turn
//! toward the nearest visible landmark, otherwise fly forward, and stop
//! after a fixed number of steps.

use std::io::{self, BufRead, Write};
use std::time::Duration;

use airnav::harness::bridge::{decode, encode, BridgeMessage};
use airnav::harness::{run_suite, Agent, BridgeAgent, RunConfig};
use airnav::synth::{synthesize_episode, SynthConfig};
use airnav::world::{Action, ActionSequence, WorldConfig, WorldMap};

fn child() -> airnav::Result<()> {
    let stdout = io::stdout();
    for line in io::stdin().lock().lines() {
        let line = line?;
        let BridgeMessage::Observe(msg) = decode(&line)? else { continue };
        let obs = msg.observation();
        let nearest = obs.current_frame.visible.iter().min_by(|a, b| a.distance_m.total_cmp(&b.distance_m));
        let actions = match nearest {
            _ if obs.step > 6 => vec![Action::Stop],
            Some(l) if l.bearing_deg > 15.0 => vec![Action::TurnRight, Action::MoveForward],
            Some(l) if l.bearing_deg < -15.0 => vec![Action::TurnLeft, Action::MoveForward],
            _ => vec![Action::MoveForward; 4],
        };
        let reply = BridgeMessage::Act { output: ActionSequence::new(actions)?.to_output_text() };
        let mut out = stdout.lock();
        writeln!(out, "{}", encode(&reply)?)?;
        out.flush()?;
    }
    Ok(())
}

fn main() -> airnav::Result<()> {
    if std::env::args().any(|a| a == "--agent") {
        return child();
    }
    let world = WorldMap::generate("bridge", &WorldConfig::default(), 1)?;
    let episodes: Vec<_> = (0..4)
        .map(|i| synthesize_episode(&world, &SynthConfig::default(), &format!("b{i}"), i))
        .collect::<airnav::Result<_>>()?;
    let command = format!("{} --agent", std::env::current_exe()?.display());

    let cfg = RunConfig { parallelism: 2, ..RunConfig::default() };
    let out = run_suite(
        || Ok(Box::new(BridgeAgent::spawn(&command, Duration::from_secs(10))?) as Box<dyn Agent>),
        &episodes,
        &world,
        &cfg,
    )?;
    for (log, r) in out.logs.iter().zip(&out.results) {
        println!("{}: {} steps, {:?}, NE {:.1} m, first reply {}", log.episode_id, log.outputs.len(), log.termination, r.ne, log.outputs[0]);
    }
    println!("SR {:.1}", out.report.overall.sr);
    Ok(())
}
