//! Multi-objective reward for one decision step.
//!
//! ```text
//! r_dis    = max((d_t - d_{t+1}) / (d_t + eps), 0)
//! r_yaw    = max(1 - |delta_yaw| / tau_yaw, 0)
//! r_stop   = alpha if both sequences end in STOP, beta if neither does, else 0
//! r_format = gamma if the output parses, else 0
//! r_all    = lambda1 * r_dis + lambda2 * r_yaw + r_stop + r_format
//! ```
//!
//! Distances and heading error are measured against the active subgoal: the
//! expert's recorded state at the first chain node the UAV has not reached.

use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::synth::Episode;
use crate::world::{
    heading_delta, Action, ActionSequence, Heading, Kinematics, Position, SequenceOutcome, UavState,
};

/// Reward components that can be switched off for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardAblation {
    /// Drops both distance and heading terms.
    pub without_subgoal: bool,
    pub without_stop: bool,
    pub without_format: bool,
}

impl FromStr for RewardAblation {
    type Err = Error;

    /// Parses a comma-separated subset of `subgoal,stop,format`.
    fn from_str(s: &str) -> Result<Self> {
        let mut out = RewardAblation::default();
        let parts: BTreeSet<&str> = s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
        for p in parts {
            match p {
                "subgoal" => out.without_subgoal = true,
                "stop" => out.without_stop = true,
                "format" => out.without_format = true,
                other => {
                    return Err(invalid(format!(
                        "unknown reward component {other:?} (expected subgoal, stop, format)"
                    )))
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub epsilon: f64,
    pub tau_yaw: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Radius within which a chain node counts as reached.
    pub node_threshold_m: f64,
    pub ablation: RewardAblation,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            tau_yaw: 60.0,
            alpha: 1.0,
            beta: 0.1,
            gamma: 0.1,
            lambda1: 1.0,
            lambda2: 1.0,
            node_threshold_m: 10.0,
            ablation: RewardAblation::default(),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_yaw > 0.0) {
            return Err(invalid("tau_yaw must be positive"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon must be positive"));
        }
        if !(self.node_threshold_m > 0.0) {
            return Err(invalid("node threshold must be positive"));
        }
        let weights = [
            self.alpha,
            self.beta,
            self.gamma,
            self.lambda1,
            self.lambda2,
        ];
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(invalid("reward weights must be finite"));
        }
        Ok(())
    }

    /// Upper end of `r_all`: lambda1 + lambda2 + max(alpha, beta) + gamma.
    pub fn max_total(&self) -> f64 {
        self.lambda1 + self.lambda2 + self.alpha.max(self.beta) + self.gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_dis: f64,
    pub r_yaw: f64,
    pub r_stop: f64,
    pub r_format: f64,
    pub r_all: f64,
}

impl RewardBreakdown {
    pub fn new(r_dis: f64, r_yaw: f64, r_stop: f64, r_format: f64, cfg: &RewardConfig) -> Self {
        let mut b = Self {
            r_dis,
            r_yaw,
            r_stop,
            r_format,
            r_all: 0.0,
        };
        b.r_all = total_reward(&b, cfg);
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgoalRef {
    pub position: Position,
    pub heading: Heading,
}

impl From<UavState> for SubgoalRef {
    fn from(s: UavState) -> Self {
        Self {
            position: s.position,
            heading: s.heading,
        }
    }
}

pub fn distance_reward(d_t: f64, d_t1: f64, epsilon: f64) -> Result<f64> {
    if !(d_t >= 0.0 && d_t1 >= 0.0) {
        return Err(invalid(format!(
            "distances must be non-negative, got {d_t} and {d_t1}"
        )));
    }
    Ok(((d_t - d_t1) / (d_t + epsilon)).max(0.0))
}

pub fn yaw_reward(achieved: Heading, subgoal: Heading, tau_yaw: f64) -> f64 {
    let delta = heading_delta(subgoal, achieved);
    (1.0 - delta.abs() / tau_yaw).max(0.0)
}

pub fn stop_reward(pred: &ActionSequence, gt: &ActionSequence, alpha: f64, beta: f64) -> f64 {
    match (pred.ends_with_stop(), gt.ends_with_stop()) {
        (true, true) => alpha,
        (false, false) => beta,
        _ => 0.0,
    }
}

/// Parses raw agent output: a JSON list of 1..=8 action tokens with STOP,
/// if present, last.
pub fn parse_action_output(raw: &str) -> Result<ActionSequence> {
    let tokens: Vec<String> = serde_json::from_str(raw.trim())
        .map_err(|e| Error::Format(format!("output is not a JSON list of strings: {e}")))?;
    let actions = tokens
        .iter()
        .map(|t| t.parse::<Action>())
        .collect::<Result<Vec<_>>>()?;
    ActionSequence::new(actions)
}

pub fn format_reward(raw: &str, gamma: f64) -> (f64, Option<ActionSequence>) {
    match parse_action_output(raw) {
        Ok(seq) => (gamma, Some(seq)),
        Err(_) => (0.0, None),
    }
}

pub fn total_reward(b: &RewardBreakdown, cfg: &RewardConfig) -> f64 {
    cfg.lambda1 * b.r_dis + cfg.lambda2 * b.r_yaw + b.r_stop + b.r_format
}

/// Monotone pointer into an episode's chain nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgoalProgress {
    /// Number of chain nodes reached, target included.
    reached: usize,
}

impl SubgoalProgress {
    pub fn new() -> Self {
        Self { reached: 0 }
    }

    pub fn reached(&self) -> usize {
        self.reached
    }

    /// Fraction of chain nodes reached, in [0, 1].
    pub fn fraction(&self, episode: &Episode) -> f64 {
        let total = episode.node_states.len();
        if total == 0 {
            0.0
        } else {
            self.reached as f64 / total as f64
        }
    }

    pub fn target_reached(&self, episode: &Episode) -> bool {
        self.reached >= episode.node_states.len()
    }

    /// Marks nodes reached, in chain order. An intermediate node is reached
    /// strictly within `threshold` of its landmark, the same test that ends
    /// an expert segment; the final node once the UAV is at least as close
    /// to the target as the expert was when it stopped.
    pub fn observe(&mut self, episode: &Episode, position: Position, threshold: f64) {
        let last = episode.node_states.len().saturating_sub(1);
        let target = episode.target();
        while let Some(node) = episode.node_states.get(self.reached) {
            let hit = if self.reached == last {
                position.distance_to(&target) <= node.position.distance_to(&target) + 1e-9
            } else {
                let landmark = &episode.chain.intermediate[self.reached];
                position.distance_to(&landmark.position) < threshold
            };
            if hit {
                self.reached += 1;
            } else {
                break;
            }
        }
    }

    pub fn observe_all<'a>(
        &mut self,
        episode: &Episode,
        states: impl IntoIterator<Item = &'a UavState>,
        threshold: f64,
    ) {
        for s in states {
            self.observe(episode, s.position, threshold);
        }
    }
}

impl Default for SubgoalProgress {
    fn default() -> Self {
        Self::new()
    }
}

/// Expert state at the first unreached node; the target once every
/// intermediate node has been reached.
pub fn active_subgoal(episode: &Episode, progress: &SubgoalProgress) -> Result<SubgoalRef> {
    let n = episode.node_states.len();
    if n == 0 {
        return Err(Error::Consistency(format!(
            "episode {} has no recorded node states",
            episode.id
        )));
    }
    Ok(episode.node_states[progress.reached.min(n - 1)].into())
}

/// Landmark of the first unreached node; the target once every
/// intermediate node has been reached.
pub fn active_node_position(episode: &Episode, progress: &SubgoalProgress) -> Position {
    episode
        .chain
        .intermediate
        .get(progress.reached)
        .map_or(episode.target(), |l| l.position)
}

/// A scored decision step together with what it did to the UAV.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredStep {
    pub breakdown: RewardBreakdown,
    pub parsed: Option<ActionSequence>,
    /// `None` when the output did not parse.
    pub outcome: Option<SequenceOutcome>,
    /// Progress after the executed actions.
    pub progress: SubgoalProgress,
}

/// Scores raw output `pred_raw` emitted from `state_before` against the
/// expert chunk `gt_chunk`, and executes it.
pub fn score_step(
    episode: &Episode,
    kin: &Kinematics,
    state_before: UavState,
    progress: SubgoalProgress,
    pred_raw: &str,
    gt_chunk: &ActionSequence,
    cfg: &RewardConfig,
) -> Result<ScoredStep> {
    let (r_format, parsed) = format_reward(pred_raw, cfg.gamma);
    let Some(seq) = parsed else {
        return Ok(ScoredStep {
            breakdown: RewardBreakdown::default(),
            parsed: None,
            outcome: None,
            progress,
        });
    };
    let subgoal = active_subgoal(episode, &progress)?;
    let outcome = kin.apply_sequence(state_before, &seq);
    let d_t = state_before.position.distance_to(&subgoal.position);
    let d_t1 = outcome.final_state.position.distance_to(&subgoal.position);

    let ab = cfg.ablation;
    let (r_dis, r_yaw) = if ab.without_subgoal {
        (0.0, 0.0)
    } else {
        (
            distance_reward(d_t, d_t1, cfg.epsilon)?,
            yaw_reward(outcome.final_state.heading, subgoal.heading, cfg.tau_yaw),
        )
    };
    let r_stop = if ab.without_stop {
        0.0
    } else {
        stop_reward(&seq, gt_chunk, cfg.alpha, cfg.beta)
    };
    let r_format = if ab.without_format { 0.0 } else { r_format };

    let mut next = progress;
    next.observe_all(episode, &outcome.visited, cfg.node_threshold_m);
    Ok(ScoredStep {
        breakdown: RewardBreakdown::new(r_dis, r_yaw, r_stop, r_format, cfg),
        parsed: Some(seq),
        outcome: Some(outcome),
        progress: next,
    })
}

/// Reward breakdown for one decision step.
pub fn step_reward(
    episode: &Episode,
    kin: &Kinematics,
    state_before: UavState,
    progress: SubgoalProgress,
    pred_raw: &str,
    gt_chunk: &ActionSequence,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown> {
    score_step(episode, kin, state_before, progress, pred_raw, gt_chunk, cfg).map(|s| s.breakdown)
}
