//! Scores the expert's chunks, and a few deliberately wrong answers, with
//! the composite reward.

use airnav::reward::{score_step, RewardConfig, SubgoalProgress};
use airnav::synth::{synthesize_episode, SynthConfig};
use airnav::world::{Action, WorldConfig, WorldMap};

/// F/L/R/S shorthand, or the raw text when it does not parse.
fn short(text: &str) -> String {
    match airnav::reward::format_reward(text, 0.1).1 {
        Some(seq) => seq
            .actions()
            .iter()
            .map(|a| match a {
                Action::MoveForward => 'F',
                Action::TurnLeft => 'L',
                Action::TurnRight => 'R',
                Action::Stop => 'S',
            })
            .collect(),
        None => format!("{text:?}"),
    }
}

fn main() -> airnav::Result<()> {
    let world = WorldMap::generate("demo", &WorldConfig::default(), 3)?;
    let ep = synthesize_episode(&world, &SynthConfig::default(), "demo_0", 5)?;
    let cfg = RewardConfig::default();
    let kin = world.kinematics;
    println!("{}\nmaximum r_all = {:.1}\n", ep.instruction, cfg.max_total());

    println!("{:>4} {:<20} {:>5} {:>5} {:>5} {:>5} {:>5}", "step", "output", "dis", "yaw", "stop", "fmt", "all");
    let mut state = ep.start();
    let mut progress = SubgoalProgress::new();
    for (i, chunk) in ep.expert_chunks.iter().enumerate() {
        let text = chunk.to_output_text();
        let s = score_step(&ep, &kin, state, progress, &text, chunk, &cfg)?;
        let b = s.breakdown;
        println!("{i:>4} {:<20} {:>5.2} {:>5.2} {:>5.2} {:>5.2} {:>5.2}", short(&text), b.r_dis, b.r_yaw, b.r_stop, b.r_format, b.r_all);
        state = s.outcome.expect("expert chunks parse").final_state;
        progress = s.progress;
    }

    // Alternatives at the first decision step.
    let gt = &ep.expert_chunks[0];
    for text in [r#"["TURN_LEFT","TURN_LEFT","TURN_LEFT","TURN_LEFT","TURN_LEFT","TURN_LEFT"]"#, r#"["STOP"]"#, "fly to the tower"] {
        let b = score_step(&ep, &kin, ep.start(), SubgoalProgress::new(), text, gt, &cfg)?.breakdown;
        println!("alt  {:<20} {:>5.2} {:>5.2} {:>5.2} {:>5.2} {:>5.2}", short(text), b.r_dis, b.r_yaw, b.r_stop, b.r_format, b.r_all);
    }
    Ok(())
}
