//! Historical frame selection.
//!
//! Progressive interval sampling keeps the last few frames densely and
//! thins out older ones: offsets follow `s_0 = 1, s_i = s_{i-1} + i`, so
//! with four frames the history reaches back 1, 2, 4 and 7 steps. Last-K,
//! Uniform-K and No-History are the baselines it is compared against.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::world::{Action, SensorFrame, UavState};

/// Frames kept by default.
pub const DEFAULT_HISTORY_FRAMES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryKind {
    #[serde(rename = "pis")]
    ProgressiveInterval,
    #[serde(rename = "last")]
    LastK,
    #[serde(rename = "uniform")]
    UniformK,
    #[serde(rename = "none")]
    NoHistory,
}

impl MemoryKind {
    pub const ALL: [MemoryKind; 4] = [
        MemoryKind::ProgressiveInterval,
        MemoryKind::LastK,
        MemoryKind::UniformK,
        MemoryKind::NoHistory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MemoryKind::ProgressiveInterval => "pis",
            MemoryKind::LastK => "last",
            MemoryKind::UniformK => "uniform",
            MemoryKind::NoHistory => "none",
        }
    }
}

impl fmt::Display for MemoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MemoryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pis" => Ok(MemoryKind::ProgressiveInterval),
            "last" => Ok(MemoryKind::LastK),
            "uniform" => Ok(MemoryKind::UniformK),
            "none" => Ok(MemoryKind::NoHistory),
            other => Err(invalid(format!(
                "unknown memory policy {other:?} (expected pis, last, uniform or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryPolicy {
    pub kind: MemoryKind,
    pub frames: usize,
}

impl MemoryPolicy {
    /// NoHistory always carries zero frames.
    pub fn new(kind: MemoryKind, frames: usize) -> Self {
        let frames = if kind == MemoryKind::NoHistory { 0 } else { frames };
        Self { kind, frames }
    }
}

impl Default for MemoryPolicy {
    fn default() -> Self {
        Self::new(MemoryKind::ProgressiveInterval, DEFAULT_HISTORY_FRAMES)
    }
}

/// First `n` progressive offsets: 1, 2, 4, 7, 11, ...
pub fn pis_offsets(n: usize) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(n);
    let mut s = 1;
    for i in 0..n {
        s += i;
        offsets.push(s);
    }
    offsets
}

/// Step indices of the history frames for step `t`, most recent first.
/// Never includes `t` itself or anything below 1.
pub fn select_history(policy: MemoryPolicy, t: usize) -> Vec<usize> {
    let n = policy.frames;
    if t <= 1 || n == 0 {
        return Vec::new();
    }
    match policy.kind {
        MemoryKind::NoHistory => Vec::new(),
        MemoryKind::ProgressiveInterval => pis_offsets(n)
            .into_iter()
            .take_while(|&s| s < t)
            .map(|s| t - s)
            .collect(),
        MemoryKind::LastK => (t.saturating_sub(n).max(1)..t).rev().collect(),
        MemoryKind::UniformK => {
            let last = t - 1;
            if n >= last {
                return (1..=last).rev().collect();
            }
            if n == 1 {
                return vec![last];
            }
            let span = (last - 1) as f64;
            let mut picked: Vec<usize> = (0..n)
                .map(|i| (1.0 + i as f64 * span / (n - 1) as f64).round() as usize)
                .collect();
            picked.dedup();
            picked.reverse();
            picked
        }
    }
}

/// Append-only per-episode frame log, indexed from step 1.
#[derive(Debug, Clone, Default)]
pub struct FrameStore {
    frames: Vec<SensorFrame>,
}

impl FrameStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, frame: SensorFrame) -> Result<()> {
        let expected = self.frames.len() + 1;
        if frame.step != expected {
            return Err(Error::Consistency(format!(
                "frame for step {} appended where step {expected} was expected",
                frame.step
            )));
        }
        self.frames.push(frame);
        Ok(())
    }

    pub fn get(&self, step: usize) -> Option<&SensorFrame> {
        step.checked_sub(1).and_then(|i| self.frames.get(i))
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Everything an agent sees at one decision step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub instruction: String,
    pub state: UavState,
    /// Every primitive action executed so far, in order.
    pub action_history: Vec<Action>,
    pub current_frame: SensorFrame,
    /// Selected older frames, oldest first.
    pub history_frames: Vec<SensorFrame>,
    pub step: usize,
}

pub fn assemble_observation(
    store: &FrameStore,
    policy: MemoryPolicy,
    t: usize,
    instruction: &str,
    state: UavState,
    action_history: &[Action],
) -> Result<Observation> {
    let frame = |step: usize| {
        store
            .get(step)
            .cloned()
            .ok_or_else(|| Error::Consistency(format!("frame {step} missing from store")))
    };
    let current_frame = frame(t)?;
    let history_frames = select_history(policy, t)
        .into_iter()
        .rev()
        .map(frame)
        .collect::<Result<Vec<_>>>()?;
    Ok(Observation {
        instruction: instruction.to_owned(),
        state,
        action_history: action_history.to_vec(),
        current_frame,
        history_frames,
        step: t,
    })
}
