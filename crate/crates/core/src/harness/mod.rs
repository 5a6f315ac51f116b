//! Perception, decision and execution loop for evaluating agents.
//!
//! Each decision step renders a sensor frame, assembles the observation
//! through the configured memory policy, asks the agent for raw text,
//! validates it against the action grammar and executes the parsed chunk.
//! An episode ends on STOP, on the decision-step cap, or when the agent keeps
//! producing unusable output.

mod agents;
pub mod bridge;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::memory::{assemble_observation, FrameStore, MemoryPolicy, Observation};
use crate::metrics::{
    aggregate, evaluate_log, EpisodeResult, EvalReport, ReportMeta, TerminationCause,
    TrajectoryLog,
};
use crate::reward::parse_action_output;
use crate::seed;
use crate::synth::Episode;
use crate::world::{render_frame, Action, WorldMap};

pub use agents::{
    builtin_agent, make_agent, AgentKind, ExpertReplayAgent, GreedyOracleAgent, PolicyAgent, RandomAgent,
};
pub use bridge::BridgeAgent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub success_threshold_m: f64,
    pub max_decision_steps: usize,
    pub memory: MemoryPolicy,
    pub sensor_radius_m: f64,
    /// Extra queries allowed after an unparseable output before aborting.
    pub format_retries: usize,
    /// Worker count; 0 uses every available core.
    pub parallelism: usize,
    pub response_timeout_s: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            success_threshold_m: 20.0,
            max_decision_steps: 50,
            memory: MemoryPolicy::default(),
            sensor_radius_m: 100.0,
            format_retries: 1,
            parallelism: 0,
            response_timeout_s: 30.0,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.success_threshold_m > 0.0 && self.sensor_radius_m > 0.0) {
            return Err(invalid("thresholds must be positive"));
        }
        if self.max_decision_steps == 0 {
            return Err(invalid("max_decision_steps must be at least 1"));
        }
        if !(self.response_timeout_s > 0.0) {
            return Err(invalid("response timeout must be positive"));
        }
        Ok(())
    }

    pub fn workers(&self) -> usize {
        if self.parallelism > 0 {
            self.parallelism
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

/// Ways an agent can fail to produce an answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentFailure {
    /// No answer in time; the episode is aborted.
    Timeout,
    /// Reply arrived but the envelope was malformed; retried like bad output.
    Envelope(String),
    /// The channel to the agent is gone.
    Transport(String),
}

impl std::fmt::Display for AgentFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AgentFailure::Timeout => f.write_str("response timeout"),
            AgentFailure::Envelope(m) => write!(f, "malformed envelope: {m}"),
            AgentFailure::Transport(m) => write!(f, "transport failure: {m}"),
        }
    }
}

/// Anything that maps observations to raw action-list text.
pub trait Agent: Send {
    fn name(&self) -> String;

    /// Called once before the first decision of every episode.
    fn begin_episode(&mut self, episode: &Episode, world: &WorldMap, seed: u64) -> Result<()>;

    fn decide(&mut self, obs: &Observation) -> std::result::Result<String, AgentFailure>;
}

/// Runs one episode and scores it.
pub fn run_episode(
    agent: &mut dyn Agent,
    episode: &Episode,
    world: &WorldMap,
    cfg: &RunConfig,
) -> Result<(TrajectoryLog, EpisodeResult)> {
    cfg.validate()?;
    let started = Instant::now();
    let kin = world.kinematics;
    let mut state = episode.start();
    let mut states = vec![state];
    let mut actions: Vec<Action> = Vec::new();
    let mut outputs = Vec::new();
    let mut store = FrameStore::new();
    let mut failure = None;
    let mut termination = TerminationCause::MaxSteps;

    let agent_seed = seed::derive_seed(cfg.seed, &[seed::tag(&episode.id)]);
    if let Err(e) = agent.begin_episode(episode, world, agent_seed) {
        failure = Some(e.to_string());
        termination = TerminationCause::FormatAbort;
    }

    'steps: for t in 1..=cfg.max_decision_steps {
        if failure.is_some() {
            break;
        }
        store.push(render_frame(world, &state, t, cfg.sensor_radius_m)?)?;
        let obs = assemble_observation(
            &store,
            cfg.memory,
            t,
            &episode.instruction,
            state,
            &actions,
        )?;

        let mut bad_outputs = 0;
        let seq = loop {
            match agent.decide(&obs) {
                Ok(raw) => {
                    let parsed = parse_action_output(&raw);
                    outputs.push(raw);
                    match parsed {
                        Ok(seq) => break seq,
                        Err(_) => bad_outputs += 1,
                    }
                }
                Err(AgentFailure::Envelope(msg)) => {
                    outputs.push(String::new());
                    bad_outputs += 1;
                    failure = Some(format!("malformed envelope: {msg}"));
                }
                Err(other) => {
                    failure = Some(other.to_string());
                    termination = TerminationCause::FormatAbort;
                    break 'steps;
                }
            }
            if bad_outputs > cfg.format_retries {
                termination = TerminationCause::FormatAbort;
                break 'steps;
            }
        };
        // A recovered envelope error is not an episode failure.
        failure = None;

        for &a in seq.actions() {
            state = kin.apply(state, a);
            states.push(state);
            actions.push(a);
        }
        if seq.ends_with_stop() {
            termination = TerminationCause::Stop;
            break;
        }
    }

    let log = TrajectoryLog {
        episode_id: episode.id.clone(),
        states,
        actions,
        outputs,
        termination,
        failure,
        wall_time_ms: started.elapsed().as_millis() as u64,
    };
    let result = evaluate_log(&log, episode, &kin, cfg.success_threshold_m)?;
    Ok((log, result))
}

/// Everything produced by a suite run.
#[derive(Debug, Clone)]
pub struct SuiteOutput {
    pub logs: Vec<TrajectoryLog>,
    pub results: Vec<EpisodeResult>,
    pub report: EvalReport,
}

/// Resolves the world an episode was synthesized in.
pub trait WorldLookup: Sync {
    fn world(&self, id: &str) -> Option<&WorldMap>;
}

impl WorldLookup for [WorldMap] {
    fn world(&self, id: &str) -> Option<&WorldMap> {
        self.iter().find(|w| w.id == id)
    }
}

impl WorldLookup for Vec<WorldMap> {
    fn world(&self, id: &str) -> Option<&WorldMap> {
        self.as_slice().world(id)
    }
}

impl WorldLookup for WorldMap {
    fn world(&self, id: &str) -> Option<&WorldMap> {
        (self.id == id).then_some(self)
    }
}

/// Runs every episode on a bounded pool of workers, each owning one agent
/// built by `make_agent`. Output order follows `episodes`.
pub fn run_suite<F, W>(
    make_agent: F,
    episodes: &[Episode],
    worlds: &W,
    cfg: &RunConfig,
) -> Result<SuiteOutput>
where
    F: Fn() -> Result<Box<dyn Agent>> + Sync,
    W: WorldLookup + ?Sized,
{
    cfg.validate()?;
    if episodes.is_empty() {
        return Err(invalid("suite has no episodes"));
    }
    for ep in episodes {
        if worlds.world(&ep.world).is_none() {
            return Err(invalid(format!(
                "episode {} references unknown world {}",
                ep.id, ep.world
            )));
        }
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<(TrajectoryLog, EpisodeResult)>>>> =
        Mutex::new((0..episodes.len()).map(|_| None).collect());
    let agent_name: Mutex<Option<String>> = Mutex::new(None);
    let workers = cfg.workers().min(episodes.len()).max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut agent = match make_agent() {
                    Ok(a) => a,
                    Err(e) => {
                        // Claim one slot so the failure surfaces.
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i < episodes.len() {
                            slots.lock().unwrap()[i] = Some(Err(e));
                        }
                        return;
                    }
                };
                agent_name.lock().unwrap().get_or_insert_with(|| agent.name());
                loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= episodes.len() {
                        break;
                    }
                    let ep = &episodes[i];
                    let world = worlds.world(&ep.world).expect("checked above");
                    let out = run_episode(agent.as_mut(), ep, world, cfg);
                    slots.lock().unwrap()[i] = Some(out);
                }
            });
        }
    });

    let mut logs = Vec::with_capacity(episodes.len());
    let mut results = Vec::with_capacity(episodes.len());
    for (i, slot) in slots.into_inner().unwrap().into_iter().enumerate() {
        let (log, result) = slot.ok_or_else(|| {
            Error::Consistency(format!("episode {} was never run", episodes[i].id))
        })??;
        logs.push(log);
        results.push(result);
    }
    let meta = ReportMeta {
        agent: agent_name.into_inner().unwrap().unwrap_or_default(),
        memory: format!("{}:{}", cfg.memory.kind, cfg.memory.frames),
        success_threshold_m: cfg.success_threshold_m,
    };
    let report = aggregate(&results, meta)?;
    Ok(SuiteOutput {
        logs,
        results,
        report,
    })
}
