use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Agent, AgentFailure};
use crate::error::{invalid, Error, Result};
use crate::memory::Observation;
use crate::policy::{rollout_chunk, PolicyParams, RolloutSettings, RolloutState, Sampling};
use crate::reward::{active_node_position, SubgoalProgress};
use crate::synth::{lookahead_step, Episode};
use crate::world::{Action, ActionSequence, Kinematics, WorldMap, MAX_CHUNK_LEN};

/// Uniform random tokens, ending the chunk early when STOP is drawn.
#[derive(Debug)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new() -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn sample_chunk(&mut self) -> ActionSequence {
        let mut actions = Vec::with_capacity(MAX_CHUNK_LEN);
        while actions.len() < MAX_CHUNK_LEN {
            let a = Action::ALL[self.rng.random_range(0..Action::ALL.len())];
            actions.push(a);
            if a == Action::Stop {
                break;
            }
        }
        ActionSequence::new(actions).expect("constructed within invariants")
    }
}

impl Default for RandomAgent {
    fn default() -> Self {
        Self::new()
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> String {
        "random".into()
    }

    fn begin_episode(&mut self, _episode: &Episode, _world: &WorldMap, seed: u64) -> Result<()> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(())
    }

    fn decide(&mut self, _obs: &Observation) -> std::result::Result<String, AgentFailure> {
        Ok(self.sample_chunk().to_output_text())
    }
}

/// Replays the episode's expert chunks by decision-step index.
#[derive(Debug, Default)]
pub struct ExpertReplayAgent {
    chunks: Vec<ActionSequence>,
}

impl ExpertReplayAgent {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Agent for ExpertReplayAgent {
    fn name(&self) -> String {
        "expert".into()
    }

    fn begin_episode(&mut self, episode: &Episode, _world: &WorldMap, _seed: u64) -> Result<()> {
        if episode.expert_chunks.is_empty() {
            return Err(invalid(format!("episode {} has no expert chunks", episode.id)));
        }
        self.chunks = episode.expert_chunks.clone();
        Ok(())
    }

    fn decide(&mut self, obs: &Observation) -> std::result::Result<String, AgentFailure> {
        let chunk = obs
            .step
            .checked_sub(1)
            .and_then(|i| self.chunks.get(i))
            .cloned()
            .unwrap_or_else(ActionSequence::stop);
        Ok(chunk.to_output_text())
    }
}

/// Privileged receding-horizon controller: steers toward the active
/// node's landmark with the look-ahead search and stops inside the
/// success radius.
#[derive(Debug)]
pub struct GreedyOracleAgent {
    episode: Option<Episode>,
    kinematics: Kinematics,
    progress: SubgoalProgress,
    horizon: usize,
    node_threshold_m: f64,
    success_threshold_m: f64,
}

impl GreedyOracleAgent {
    pub fn new(horizon: usize, node_threshold_m: f64, success_threshold_m: f64) -> Self {
        Self {
            episode: None,
            kinematics: Kinematics::default(),
            progress: SubgoalProgress::new(),
            horizon,
            node_threshold_m,
            success_threshold_m,
        }
    }
}

impl Default for GreedyOracleAgent {
    fn default() -> Self {
        Self::new(3, 10.0, 20.0)
    }
}

impl Agent for GreedyOracleAgent {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn begin_episode(&mut self, episode: &Episode, world: &WorldMap, _seed: u64) -> Result<()> {
        if episode.node_states.is_empty() {
            return Err(invalid(format!("episode {} has no node states", episode.id)));
        }
        self.kinematics = world.kinematics;
        self.progress = SubgoalProgress::new();
        self.progress
            .observe(episode, episode.start().position, self.node_threshold_m);
        self.episode = Some(episode.clone());
        Ok(())
    }

    fn decide(&mut self, obs: &Observation) -> std::result::Result<String, AgentFailure> {
        let episode = self
            .episode
            .as_ref()
            .ok_or_else(|| AgentFailure::Transport("decide called before begin_episode".into()))?;
        let target = episode.target();
        let mut state = obs.state;
        let mut actions = Vec::with_capacity(MAX_CHUNK_LEN);
        while actions.len() < MAX_CHUNK_LEN {
            if state.position.distance_to(&target) < self.success_threshold_m {
                actions.push(Action::Stop);
                break;
            }
            let goal = active_node_position(episode, &self.progress);
            let a = lookahead_step(&self.kinematics, state, goal, self.horizon);
            state = self.kinematics.apply(state, a);
            self.progress
                .observe(episode, state.position, self.node_threshold_m);
            actions.push(a);
        }
        let seq = ActionSequence::new(actions).expect("constructed within invariants");
        Ok(seq.to_output_text())
    }
}

/// Runs a trained linear policy.
#[derive(Debug)]
pub struct PolicyAgent {
    params: PolicyParams,
    sampling: Sampling,
    settings: RolloutSettings,
    episode: Option<Episode>,
    progress: SubgoalProgress,
    rng: ChaCha8Rng,
}

impl PolicyAgent {
    pub fn new(params: PolicyParams, sampling: Sampling, settings: RolloutSettings) -> Self {
        Self {
            params,
            sampling,
            settings,
            episode: None,
            progress: SubgoalProgress::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn greedy(params: PolicyParams) -> Self {
        Self::new(params, Sampling::Greedy, RolloutSettings::default())
    }
}

impl Agent for PolicyAgent {
    fn name(&self) -> String {
        "policy".into()
    }

    fn begin_episode(&mut self, episode: &Episode, world: &WorldMap, seed: u64) -> Result<()> {
        self.settings.kinematics = world.kinematics;
        self.progress = SubgoalProgress::new();
        self.progress
            .observe(episode, episode.start().position, self.settings.node_threshold_m);
        self.episode = Some(episode.clone());
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(())
    }

    fn decide(&mut self, obs: &Observation) -> std::result::Result<String, AgentFailure> {
        let episode = self
            .episode
            .as_ref()
            .ok_or_else(|| AgentFailure::Transport("decide called before begin_episode".into()))?;
        let start = RolloutState {
            state: obs.state,
            progress: self.progress,
            last_action: obs.action_history.last().copied(),
        };
        let rollout = rollout_chunk(
            &self.params,
            episode,
            start,
            &self.settings,
            &mut self.rng,
            self.sampling,
        )
        .map_err(|e| AgentFailure::Transport(e.to_string()))?;
        self.progress = rollout.end.progress;
        Ok(rollout.sequence.to_output_text())
    }
}

/// Built-in agent selector, as spelled on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentKind {
    Random,
    ExpertReplay,
    GreedyOracle,
    /// Greedy policy loaded from a checkpoint file.
    Policy(String),
    /// External agent process speaking the line-delimited bridge protocol.
    Bridge(String),
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(AgentKind::Random),
            "expert" | "expert_replay" => Ok(AgentKind::ExpertReplay),
            "oracle" | "greedy_oracle" => Ok(AgentKind::GreedyOracle),
            _ => {
                if let Some(cmd) = s.strip_prefix("bridge:") {
                    if cmd.trim().is_empty() {
                        return Err(invalid("bridge agent needs a command"));
                    }
                    Ok(AgentKind::Bridge(cmd.to_owned()))
                } else if let Some(path) = s.strip_prefix("policy:") {
                    Ok(AgentKind::Policy(path.to_owned()))
                } else {
                    Err(invalid(format!(
                        "unknown agent {s:?} (expected random, expert, oracle, policy:FILE or bridge:CMD)"
                    )))
                }
            }
        }
    }
}

/// Constructs any agent kind, spawning a process for bridge agents.
pub fn make_agent(
    kind: &AgentKind,
    horizon: usize,
    node_threshold_m: f64,
    success_threshold_m: f64,
    response_timeout: std::time::Duration,
) -> Result<Box<dyn Agent>> {
    match kind {
        AgentKind::Bridge(cmd) => Ok(Box::new(super::BridgeAgent::spawn(cmd, response_timeout)?)),
        other => builtin_agent(other, horizon, node_threshold_m, success_threshold_m),
    }
}

/// Constructs a non-bridge built-in agent.
pub fn builtin_agent(
    kind: &AgentKind,
    horizon: usize,
    node_threshold_m: f64,
    success_threshold_m: f64,
) -> Result<Box<dyn Agent>> {
    Ok(match kind {
        AgentKind::Random => Box::new(RandomAgent::new()),
        AgentKind::ExpertReplay => Box::new(ExpertReplayAgent::new()),
        AgentKind::GreedyOracle => Box::new(GreedyOracleAgent::new(
            horizon,
            node_threshold_m,
            success_threshold_m,
        )),
        AgentKind::Policy(path) => {
            let flat: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            let params = PolicyParams::from_flat(crate::policy::FEATURE_DIM, &flat)?;
            let settings = RolloutSettings {
                node_threshold_m,
                ..Default::default()
            };
            Box::new(PolicyAgent::new(params, Sampling::Greedy, settings))
        }
        AgentKind::Bridge(_) => {
            return Err(invalid("bridge agents are built with BridgeAgent::spawn"));
        }
    })
}
