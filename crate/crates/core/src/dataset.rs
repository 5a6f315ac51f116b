//! Seeded dataset generation with seen/unseen splits, and the on-disk
//! layout: `manifest.json` plus one `episodes/<id>.json` per episode.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed;
use crate::synth::{synthesize_episode, Episode, SynthConfig};
use crate::world::{WorldConfig, WorldMap};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    ValSeen,
    ValUnseen,
    TestUnseen,
}

impl Split {
    pub const ALL: [Split; 4] = [
        Split::Train,
        Split::ValSeen,
        Split::ValUnseen,
        Split::TestUnseen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::ValSeen => "val_seen",
            Split::ValUnseen => "val_unseen",
            Split::TestUnseen => "test_unseen",
        }
    }

    /// Seen splits draw from the shared training worlds.
    pub fn is_seen(self) -> bool {
        matches!(self, Split::Train | Split::ValSeen)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| {
                invalid(format!(
                    "unknown split {s:?} (expected train, val_seen, val_unseen or test_unseen)"
                ))
            })
    }
}

/// Fractions of episodes per split, in `Split::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios(pub [f64; 4]);

impl Default for SplitRatios {
    fn default() -> Self {
        Self([0.7, 0.1, 0.1, 0.1])
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(invalid("split ratios must be non-negative"));
        }
        if !(self.0.iter().sum::<f64>() > 0.0) {
            return Err(invalid("split ratios must not all be zero"));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `total` episodes.
    pub fn counts(&self, total: usize) -> [usize; 4] {
        let sum: f64 = self.0.iter().sum();
        let exact: Vec<f64> = self.0.iter().map(|r| r / sum * total as f64).collect();
        let mut counts = [0usize; 4];
        for (c, e) in counts.iter_mut().zip(&exact) {
            *c = e.floor() as usize;
        }
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut missing = total - counts.iter().sum::<usize>();
        for i in order {
            if missing == 0 {
                break;
            }
            counts[i] += 1;
            missing -= 1;
        }
        counts
    }
}

impl FromStr for SplitRatios {
    type Err = Error;

    /// Four comma-separated numbers: train,val_seen,val_unseen,test_unseen.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("bad split ratio {p:?}")))
            })
            .collect::<Result<_>>()?;
        let arr: [f64; 4] = parts
            .try_into()
            .map_err(|_| invalid("expected four split ratios"))?;
        let r = SplitRatios(arr);
        r.validate()?;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub episodes: usize,
    pub split_ratios: SplitRatios,
    /// Worlds shared by train and val_seen.
    pub seen_worlds: usize,
    /// Fresh worlds for each unseen split.
    pub unseen_worlds: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            split_ratios: SplitRatios::default(),
            seen_worlds: 2,
            unseen_worlds: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub world_config: WorldConfig,
    pub synth_config: SynthConfig,
    pub worlds: Vec<WorldMap>,
    /// Episode ids per split name.
    pub splits: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub episodes: Vec<Episode>,
}

fn world_seed(seed: u64, split_group: &str, index: usize) -> u64 {
    seed::derive_seed(seed, &[seed::tag("world"), seed::tag(split_group), index as u64])
}

/// Synthesizes a full dataset. Output depends only on the arguments.
pub fn generate(
    world_cfg: &WorldConfig,
    synth_cfg: &SynthConfig,
    ds_cfg: &DatasetConfig,
    seed: u64,
) -> Result<Dataset> {
    if ds_cfg.episodes == 0 {
        return Err(invalid("episode count must be positive"));
    }
    if ds_cfg.seen_worlds == 0 || ds_cfg.unseen_worlds == 0 {
        return Err(invalid("world counts must be positive"));
    }
    ds_cfg.split_ratios.validate()?;
    synth_cfg.validate()?;

    let mut worlds = Vec::new();
    let mut split_worlds: BTreeMap<Split, Vec<usize>> = BTreeMap::new();
    for i in 0..ds_cfg.seen_worlds {
        worlds.push(WorldMap::generate(
            format!("seen_{i}"),
            world_cfg,
            world_seed(seed, "seen", i),
        )?);
    }
    let seen: Vec<usize> = (0..ds_cfg.seen_worlds).collect();
    split_worlds.insert(Split::Train, seen.clone());
    split_worlds.insert(Split::ValSeen, seen);
    for split in [Split::ValUnseen, Split::TestUnseen] {
        let mut ids = Vec::new();
        for i in 0..ds_cfg.unseen_worlds {
            ids.push(worlds.len());
            worlds.push(WorldMap::generate(
                format!("{}_{i}", split.name()),
                world_cfg,
                world_seed(seed, split.name(), i),
            )?);
        }
        split_worlds.insert(split, ids);
    }

    let counts = ds_cfg.split_ratios.counts(ds_cfg.episodes);
    let jobs: Vec<(Split, usize)> = Split::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&split, n)| (0..n).map(move |i| (split, i)))
        .collect();

    let episodes = jobs
        .par_iter()
        .map(|&(split, i)| {
            let pool = &split_worlds[&split];
            let world = &worlds[pool[i % pool.len()]];
            let id = format!("{}_{i:05}", split.name());
            let episode_seed = seed::derive_seed(seed, &[seed::tag(split.name()), i as u64]);
            let mut ep = synthesize_episode(world, synth_cfg, &id, episode_seed)?;
            ep.split = split.name().to_owned();
            Ok(ep)
        })
        .collect::<Result<Vec<Episode>>>()?;

    let mut splits: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for ep in &episodes {
        splits.entry(ep.split.clone()).or_default().push(ep.id.clone());
    }
    Ok(Dataset {
        manifest: Manifest {
            format_version: FORMAT_VERSION,
            seed,
            world_config: world_cfg.clone(),
            synth_config: synth_cfg.clone(),
            worlds,
            splits,
        },
        episodes,
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// One compact JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item)?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| invalid(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

impl Dataset {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let episode_dir = dir.join("episodes");
        fs::create_dir_all(&episode_dir)?;
        write_json(&dir.join("manifest.json"), &self.manifest)?;
        for ep in &self.episodes {
            write_json(&episode_dir.join(format!("{}.json", ep.id)), ep)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path).map_err(
            |e| invalid(format!("cannot read {}: {e}", manifest_path.display())),
        )?)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(invalid(format!(
                "unsupported dataset format version {}",
                manifest.format_version
            )));
        }
        let mut episodes = Vec::new();
        for (split, ids) in &manifest.splits {
            for id in ids {
                let path = dir.join("episodes").join(format!("{id}.json"));
                let mut ep: Episode = serde_json::from_str(&fs::read_to_string(&path)?)?;
                if ep.split.is_empty() {
                    ep.split = split.clone();
                }
                episodes.push(ep);
            }
        }
        episodes.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self { manifest, episodes })
    }

    pub fn split(&self, split: Split) -> Vec<Episode> {
        self.episodes
            .iter()
            .filter(|e| e.split == split.name())
            .cloned()
            .collect()
    }

    pub fn worlds(&self) -> &[WorldMap] {
        &self.manifest.worlds
    }
}
