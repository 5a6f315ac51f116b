//! Synthesizes a small dataset and summarizes what came out.
//!
//! cargo run --example synthesize_dataset -- [OUT_DIR]

use std::collections::BTreeMap;
use std::path::PathBuf;

use airnav::dataset::{self, DatasetConfig};
use airnav::synth::SynthConfig;
use airnav::world::WorldConfig;

fn main() -> airnav::Result<()> {
    let ds_cfg = DatasetConfig { episodes: 120, ..DatasetConfig::default() };
    let ds = dataset::generate(&WorldConfig::default(), &SynthConfig::default(), &ds_cfg, 42)?;

    let mut by_difficulty: BTreeMap<String, usize> = BTreeMap::new();
    let mut by_landmarks: BTreeMap<usize, usize> = BTreeMap::new();
    for ep in &ds.episodes {
        *by_difficulty.entry(format!("{:?}", ep.difficulty)).or_default() += 1;
        *by_landmarks.entry(ep.chain.landmark_count()).or_default() += 1;
    }
    println!("{} episodes in {} worlds", ds.episodes.len(), ds.worlds().len());
    for (split, ids) in &ds.manifest.splits {
        println!("  {split:<12} {}", ids.len());
    }
    println!("difficulty: {by_difficulty:?}");
    println!("landmarks per route: {by_landmarks:?}");

    let ep = &ds.episodes[0];
    println!("\n{} ({:?}, {:.0} m, {} chunks)", ep.id, ep.difficulty, ep.path_length_m, ep.expert_chunks.len());
    println!("  {}", ep.instruction);
    println!("  first chunk: {}", ep.expert_chunks[0].to_output_text());

    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        ds.save(&dir)?;
        println!("\nwrote {}", dir.display());
    }
    Ok(())
}
