//! Behavior cloning followed by GRPO, compared with each stage alone.
//!
//! cargo run --release --example two_stage_training -- [GRPO_LR] [UPDATES]

use airnav::harness::RunConfig;
use airnav::reward::RewardConfig;
use airnav::synth::SynthConfig;
use airnav::train::{train_on, training_suite, Stage, TrainConfig};
use airnav::world::WorldConfig;

fn main() -> airnav::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = TrainConfig { seed: 1, eval_every: 50, ..TrainConfig::default() };
    if let Some(lr) = args.next() {
        cfg.learning_rate = lr.parse().expect("learning rate");
    }
    if let Some(n) = args.next() {
        cfg.updates = n.parse().expect("update count");
    }
    let suite = training_suite(&WorldConfig::default(), &SynthConfig::default(), &cfg)?;
    println!("{} train / {} held-out episodes, GRPO lr {}, {} updates", suite.train.len(), suite.heldout.len(), cfg.learning_rate, cfg.updates);

    for stage in [Stage::BcOnly, Stage::GrpoOnly, Stage::BcThenGrpo] {
        let out = train_on(&suite, &RewardConfig::default(), &RunConfig::default(), &cfg, stage)?;
        let o = &out.heldout.overall;
        println!("\n{stage}: held-out SR {:.1}, SPL {:.1}", o.sr, o.spl);
        if let (Some(first), Some(last)) = (out.bc_losses.first(), out.bc_losses.last()) {
            println!("  bc loss {first:.3} -> {last:.3}");
        }
        for p in out.curve.iter().filter(|p| p.eval_sr.is_some()) {
            let reward = p.mean_reward.map_or("-".to_string(), |r| format!("{r:.3}"));
            println!("  update {:>5}  mean group reward {reward:>6}  SR {:.1}", p.update, p.eval_sr.unwrap());
        }
    }
    Ok(())
}
